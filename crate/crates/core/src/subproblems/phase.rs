//! Surface-phase block: successive linearization inside a trust region.
//!
//! The sum rate is differentiable but non-concave in the phases ϑ, so each
//! inner step maximizes the first-order model `∇R·(ϑ − ϑ₀)` subject to
//! linearized QoS rows and a trust ball, accepts only if the *true* rate
//! does not decrease, and adapts the radius from the realized/predicted
//! gain ratio. The radius persists across outer rounds (it lives in
//! [`TrustRadii`]), so later rounds resume at whatever scale worked.
//! Phases are wrapped back into [0, 2π) after every accepted step; the rate
//! is 2π-periodic so wrapping is free.

use std::f64::consts::{PI, TAU};

use crate::channel::ChannelSet;
use crate::kernels::trlp::{LinearRow, TrlpStatus, TrustRegionLp, solve_tr_lp};
use crate::metrics::{self, OptState, StateError};
use crate::scenario::ScenarioConfig;
use crate::subproblems::gradients::phase_gradients;
use crate::subproblems::{TrustRadii, combiner_tuned_rate, true_rate, update_trust};
use crate::RVec;

/// Outcome of one linearized block (shared with the position blocks).
#[derive(Debug, Clone, Copy, Default)]
pub struct ScaReport {
    pub improved: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// True when some step could only proceed after dropping the
    /// linearized QoS rows (they conflicted inside the trust ball).
    pub qos_rows_dropped: bool,
}

/// Linear rows bounding the first-order drift of the downlink leak
/// amplitude ι along a step: |Re(∂ι·(x−x₀))| ≤ c and likewise for the
/// imaginary part, with c = max(|ι₀|, √(σ²/p)).
///
/// Rationale: the phase block drives p·|ι|² far below the noise floor
/// (deepening the leak null is worth tens of bits of downlink rate), after
/// which |ι|² grows *quadratically* along any step — a cost the linear
/// rate model cannot see, which would get otherwise-good steps vetoed by
/// the true-rate acceptance check. These rows confine steps to directions
/// that keep the leak at a harmless level to first order: `c` allows
/// either a relative-|ι₀| drift (null not yet formed; the gradient already
/// accounts for leak changes there) or an absolute drift at the
/// noise-equivalent level √(σ²/p) (deep null; keeps the cost below ~1 bit).
/// All four rows hold at the center with slack c, so they can never cause
/// infeasibility. Empty when p = 0 (leak costless) or ∂ι ≡ 0 (variables
/// the leak does not involve).
pub(crate) fn leak_guard_rows(
    cfg: &ScenarioConfig,
    ul_power_w: f64,
    leak: crate::C64,
    d_leak: &crate::CVec,
    center: &RVec,
) -> Vec<LinearRow> {
    if ul_power_w <= 0.0 {
        return Vec::new();
    }
    let d_re = RVec::from_iterator(d_leak.len(), d_leak.iter().map(|c| c.re));
    let d_im = RVec::from_iterator(d_leak.len(), d_leak.iter().map(|c| c.im));
    if d_re.amax() == 0.0 && d_im.amax() == 0.0 {
        return Vec::new();
    }
    let cap = leak.norm().max((cfg.noise_power_w() / ul_power_w).sqrt());
    let mut rows = Vec::with_capacity(4);
    for d in [d_re, d_im] {
        let at_center = d.dot(center);
        rows.push(LinearRow {
            coeffs: d.clone(),
            bound: at_center - cap,
        });
        rows.push(LinearRow {
            coeffs: -d,
            bound: -at_center - cap,
        });
    }
    rows
}

/// Projects candidate phases back onto the deep leak null, if one is
/// warranted and nearby.
///
/// The downlink leak ι(ϑ) = I + Σₙ h̃ₙgₙ e^{jϑₙ} depends on the phases
/// through a trigonometric polynomial, so any step that is blind to its
/// curvature (a linearized one) re-opens an established null
/// quadratically. Rather than shrinking steps until that drift is
/// harmless — which pins the trust radius at a crawl — this routine takes
/// the stepped phases and solves ι(ϑ) = 0 with a damped least-norm Newton
/// iteration (two real equations, n unknowns), returning the minimally
/// rotated phases that restore the null. Candidates are then judged at the
/// repaired point, so the radius is limited by genuine rate curvature, not
/// by the null's knife edge.
///
/// Returns `None` when no repair is needed or none applies: uplink power
/// is zero (leak costless), the leak is already at a harmless level, the
/// Jacobian is degenerate, the iteration does not reach the target, or the
/// total rotation exceeds ~0.7 rad (a macro re-null is the linearized
/// block's decision to make, since it alone weighs the other rate terms).
pub(crate) fn repair_leak_null(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    ul_power_w: f64,
    phases_rad: &RVec,
) -> Option<RVec> {
    if ul_power_w <= 0.0 {
        return None;
    }
    let n = phases_rad.len();
    let coeff: Vec<crate::C64> = (0..n).map(|k| ch.ris_dl[k] * ch.ul_ris[k]).collect();
    let leak_at = |ph: &RVec| -> crate::C64 {
        let mut acc = ch.inter_user;
        for k in 0..n {
            acc += coeff[k] * crate::C64::from_polar(1.0, ph[k]);
        }
        acc
    };
    // "Deep" means the residual leak power sits well under the noise floor.
    let target = 0.3 * (cfg.noise_power_w() / ul_power_w).sqrt();
    let mut ph = phases_rad.clone();
    let mut leak = leak_at(&ph);
    if leak.norm() <= target {
        return None;
    }
    let mut moved = 0.0_f64;
    for _ in 0..8 {
        // Least-norm solve of J·δ = −[Re ι; Im ι], J ∈ ℝ^{2×n} with
        // column k equal to (−Im, Re) of jϑ-derivative coeffₖ·e^{jϑₖ}.
        let (mut j11, mut j12, mut j22) = (0.0_f64, 0.0, 0.0);
        let cols: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let d = crate::C64::i() * coeff[k] * crate::C64::from_polar(1.0, ph[k]);
                (d.re, d.im)
            })
            .collect();
        for &(a, b) in &cols {
            j11 += a * a;
            j12 += a * b;
            j22 += b * b;
        }
        let det = j11 * j22 - j12 * j12;
        if det <= 1e-24 * (j11 + j22) * (j11 + j22) {
            return None;
        }
        // y = (JJᵀ)⁻¹·(−[Re ι; Im ι]), δ = Jᵀy.
        let y1 = (-leak.re * j22 + leak.im * j12) / det;
        let y2 = (leak.re * j12 - leak.im * j11) / det;
        let mut step = 0.0;
        for (k, &(a, b)) in cols.iter().enumerate() {
            let d = a * y1 + b * y2;
            ph[k] = (ph[k] + d).rem_euclid(TAU);
            step += d * d;
        }
        moved += step.sqrt();
        if moved > 0.7 {
            return None;
        }
        leak = leak_at(&ph);
        if leak.norm() <= target {
            return Some(ph);
        }
    }
    None
}

/// Builds the two linearized QoS rows `∇γ·x ≥ γmin − γ(x₀) + ∇γ·x₀` (each
/// only when its floor is active).
pub(crate) fn qos_rows(
    cfg: &ScenarioConfig,
    gamma_dl: f64,
    gamma_ul: f64,
    d_gamma_dl: &RVec,
    d_gamma_ul: &RVec,
    center: &RVec,
) -> Vec<LinearRow> {
    let mut rows = Vec::new();
    if cfg.gamma_min_dl() > 0.0 {
        rows.push(LinearRow {
            coeffs: d_gamma_dl.clone(),
            bound: cfg.gamma_min_dl() - gamma_dl + d_gamma_dl.dot(center),
        });
    }
    if cfg.gamma_min_ul() > 0.0 {
        rows.push(LinearRow {
            coeffs: d_gamma_ul.clone(),
            bound: cfg.gamma_min_ul() - gamma_ul + d_gamma_ul.dot(center),
        });
    }
    rows
}

/// Runs the inner linearized loop on the phases.
///
/// With `retune_combiner` set, candidate steps are judged on the rate
/// after the closed-form combiner update (see
/// [`combiner_tuned_rate`](crate::subproblems::combiner_tuned_rate) for
/// why), and the re-tuned combiner is committed along with each accepted
/// step. Pass `false` only when the combiner is deliberately frozen.
pub fn update_phases(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &mut OptState,
    trust: &mut TrustRadii,
    retune_combiner: bool,
) -> Result<ScaReport, StateError> {
    let n = cfg.ris_elements;
    let mut report = ScaReport::default();
    let mut rate = true_rate(cfg, ch, st)?;
    if retune_combiner {
        // Enter on the tuned objective so candidate comparisons are
        // tuned-vs-tuned and the envelope gradients apply.
        let (tuned, v) = combiner_tuned_rate(cfg, ch, st)?;
        if tuned >= rate {
            st.combiner = v;
            rate = tuned;
        }
    }
    let start_rate = rate;

    for _inner in 0..cfg.solver.sca_inner_iterations {
        let grads = phase_gradients(cfg, ch, st)?;
        let center = st.phases_rad.clone();
        let mut rows = leak_guard_rows(cfg, st.ul_power_w, grads.leak, &grads.d_leak, &center);
        let n_guard = rows.len();
        rows.extend(qos_rows(
            cfg,
            grads.gamma_dl,
            grads.gamma_ul,
            &grads.d_gamma_dl,
            &grads.d_gamma_ul,
            &center,
        ));
        let mut problem = TrustRegionLp {
            gradient: grads.d_rate.clone(),
            rows,
            lower: RVec::from_element(n, f64::NEG_INFINITY),
            upper: RVec::from_element(n, f64::INFINITY),
            center: center.clone(),
            radius: trust.phase_rad,
        };
        let mut sol = solve_tr_lp(&problem, cfg.solver.trlp_tol);
        if sol.status == TrlpStatus::InfeasibleRows {
            // Only the QoS rows can conflict (the guard rows hold at the
            // center by construction); fall back to pure rate ascent and
            // let the acceptance check judge the result.
            report.qos_rows_dropped = true;
            problem.rows.truncate(n_guard);
            sol = solve_tr_lp(&problem, cfg.solver.trlp_tol);
        }
        if sol.status != TrlpStatus::Optimal || sol.gain <= 1e-14 * (1.0 + rate.abs()) {
            break; // no usable first-order progress at this radius
        }

        // Score one stepped phase vector: wrap, re-project onto the leak
        // null when one is within reach, re-tune the combiner, and report
        // the achieved rate with the assembled candidate.
        let score = |stepped: &RVec| -> Result<(f64, OptState), StateError> {
            let mut candidate = st.clone();
            candidate.phases_rad = stepped.map(|t| t.rem_euclid(TAU));
            if let Some(repaired) =
                repair_leak_null(cfg, ch, candidate.ul_power_w, &candidate.phases_rad)
            {
                candidate.phases_rad = repaired;
            }
            let new_rate = if retune_combiner {
                let (tuned, v) = combiner_tuned_rate(cfg, ch, &candidate)?;
                candidate.combiner = v;
                tuned
            } else {
                true_rate(cfg, ch, &candidate)?
            };
            Ok((new_rate, candidate))
        };

        let (step_rate, step_state) = score(&sol.x)?;
        let ratio = (step_rate - rate) / sol.gain;
        let (mut best_rate, mut best_state) = (step_rate, step_state);
        let mut extended = false;
        if best_rate > rate {
            // Extend along the model direction while the true tuned rate
            // keeps climbing (see the position block for the rationale);
            // a QoS-feasible point only moves to candidates keeping both
            // floors.
            let qos_at_center = grads.gamma_dl >= cfg.gamma_min_dl() * (1.0 - 1e-9)
                && grads.gamma_ul >= cfg.gamma_min_ul() * (1.0 - 1e-9);
            let step = &sol.x - &center;
            let mut t = 2.0;
            for _ in 0..6 {
                let probe = &center + &step * t;
                let (probe_rate, probe_state) = score(&probe)?;
                if probe_rate <= best_rate {
                    break;
                }
                if qos_at_center {
                    let dl_ok = metrics::sinr_dl(cfg, ch, &probe_state)
                        >= cfg.gamma_min_dl() * (1.0 - 1e-9);
                    let ul_ok = metrics::sinr_ul(cfg, ch, &probe_state)?
                        >= cfg.gamma_min_ul() * (1.0 - 1e-9);
                    if !dl_ok || !ul_ok {
                        break;
                    }
                }
                best_rate = probe_rate;
                best_state = probe_state;
                extended = true;
                t *= 2.0;
            }
        }

        let actual = best_rate - rate;
        if actual >= 0.0 {
            st.phases_rad = best_state.phases_rad;
            st.combiner = best_state.combiner;
            rate = best_rate;
            report.accepted_steps += 1;
        } else {
            report.rejected_steps += 1;
        }
        // A successful extension certifies the direction beyond the
        // current radius; let the radius grow.
        let ratio = if extended { 1.0 } else { ratio };
        update_trust(&mut trust.phase_rad, ratio, cfg.solver.trust_min, PI);
        if actual >= 0.0 && actual <= cfg.solver.ao_tol_bps_hz * 1e-3 {
            break; // converged at this operating point
        }
    }
    report.improved = rate > start_rate;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{self, test_support::random_point};
    use crate::scenario::ScenarioConfig;

    #[test]
    fn never_decreases_the_rate() {
        let cfg = ScenarioConfig::desk();
        let mut improved = 0;
        for seed in 0..15 {
            let (_real, ch, mut st) = random_point(&cfg, seed);
            let before = metrics::sum_rate(&cfg, &ch, &st).unwrap();
            let mut trust = TrustRadii::initial(&cfg);
            let report = update_phases(&cfg, &ch, &mut st, &mut trust, true).unwrap();
            let after = metrics::sum_rate(&cfg, &ch, &st).unwrap();
            assert!(after >= before - 1e-12, "seed {seed}: {before} -> {after}");
            if report.improved {
                improved += 1;
            }
        }
        assert!(improved >= 10, "only {improved}/15 runs improved");
    }

    #[test]
    fn phases_stay_wrapped() {
        let cfg = ScenarioConfig::desk();
        let (_real, ch, mut st) = random_point(&cfg, 4);
        let mut trust = TrustRadii::initial(&cfg);
        for _ in 0..3 {
            update_phases(&cfg, &ch, &mut st, &mut trust, true).unwrap();
        }
        for &t in st.phases_rad.iter() {
            assert!((0.0..TAU).contains(&t), "unwrapped phase {t}");
        }
    }

    #[test]
    fn single_element_reaches_the_scanned_optimum() {
        // One surface element, no floors: R(ϑ) is a 1-D function we can
        // scan densely; repeated inner loops must land within a hair of
        // its global maximum.
        let mut cfg = ScenarioConfig::desk();
        cfg.ris_elements = 1;
        cfg.rate_min_dl_bps_hz = 0.0;
        cfg.rate_min_ul_bps_hz = 0.0;
        for seed in 0..5 {
            let (_real, ch, mut st) = random_point(&cfg, seed);
            let mut trust = TrustRadii::initial(&cfg);
            // Frozen combiner so the dense scan below is a fair reference.
            for _ in 0..20 {
                update_phases(&cfg, &ch, &mut st, &mut trust, false).unwrap();
            }
            let reached = metrics::sum_rate(&cfg, &ch, &st).unwrap();
            let mut best = f64::NEG_INFINITY;
            for i in 0..4000 {
                let mut s2 = st.clone();
                s2.phases_rad[0] = TAU * i as f64 / 4000.0;
                best = best.max(metrics::sum_rate(&cfg, &ch, &s2).unwrap());
            }
            assert!(
                reached >= best - 1e-6 * (1.0 + best.abs()),
                "seed {seed}: reached {reached}, scan found {best}"
            );
        }
    }

    #[test]
    fn trust_radius_stays_in_bounds() {
        let cfg = ScenarioConfig::desk();
        let (_real, ch, mut st) = random_point(&cfg, 9);
        let mut trust = TrustRadii::initial(&cfg);
        for _ in 0..5 {
            update_phases(&cfg, &ch, &mut st, &mut trust, true).unwrap();
            assert!(trust.phase_rad >= cfg.solver.trust_min);
            assert!(trust.phase_rad <= PI);
            assert!(trust.phase_rad.is_finite());
        }
    }
}
