//! Element-position blocks: one linearized trust-region loop per array.
//!
//! Moving elements re-synthesizes the channels, so each candidate step is
//! scored by rebuilding the affected [`ChannelSet`] and comparing sum
//! rates — by default after re-tuning the combiner, which removes the
//! loopback-null cliff that otherwise vetoes every step (see
//! [`combiner_tuned_rate`]). The linear model carries four kinds of rows:
//! the QoS linearizations, leak-drift guards (see
//! [`leak_guard_rows`]; only the surface array moves the leak), the region
//! box, and pairwise-separation rows `ê·(t_i − t_j) ≥ d0` with ê the
//! current unit offset — by Cauchy-Schwarz the linear form underestimates
//! the true distance, so any linear-feasible candidate honours the true
//! spacing too. Candidates are still re-checked with
//! [`PositionSet::validate`] before acceptance; a failure counts as a
//! rejected step and shrinks the radius.

use crate::channel::derivative::ArrayId;
use crate::channel::{ChannelSet, ScenarioRealization};
use crate::kernels::trlp::{LinearRow, TrlpStatus, TrustRegionLp, solve_tr_lp};
use crate::metrics::{self, OptState, StateError};
use crate::scenario::ScenarioConfig;
use crate::subproblems::gradients::position_gradients;
use crate::subproblems::phase::{ScaReport, leak_guard_rows, qos_rows, repair_leak_null};
use crate::subproblems::{TrustRadii, combiner_tuned_rate, true_rate, update_trust};
use crate::RVec;

fn flatten(set: &[[f64; 2]]) -> RVec {
    RVec::from_iterator(2 * set.len(), set.iter().flat_map(|&[x, y]| [x, y]))
}

fn unflatten(v: &RVec) -> Vec<[f64; 2]> {
    (0..v.len() / 2).map(|i| [v[2 * i], v[2 * i + 1]]).collect()
}

/// Linearized pairwise-separation rows at the current layout.
fn separation_rows(current: &[[f64; 2]], d0: f64) -> Vec<LinearRow> {
    let k = current.len();
    let mut rows = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let dx = current[i][0] - current[j][0];
            let dy = current[i][1] - current[j][1];
            let norm = (dx * dx + dy * dy).sqrt();
            let (ex, ey) = if norm > 0.0 { (dx / norm, dy / norm) } else { (1.0, 0.0) };
            let mut coeffs = RVec::zeros(2 * k);
            coeffs[2 * i] = ex;
            coeffs[2 * i + 1] = ey;
            coeffs[2 * j] = -ex;
            coeffs[2 * j + 1] = -ey;
            rows.push(LinearRow { coeffs, bound: d0 });
        }
    }
    rows
}

/// Runs the inner linearized loop on the positions of one array,
/// rebuilding `ch` in place whenever a step is accepted.
///
/// With `repair_phases` set (only meaningful for the surface array, and
/// only when the caller is optimizing phases at all), each candidate
/// layout gets its phases re-projected onto the leak null before scoring
/// (see [`repair_leak_null`]); the repaired phases are committed together
/// with the accepted layout. Without it the surface array can only creep:
/// every layout change re-opens the null quadratically, so acceptable
/// steps shrink to the crawl scale.
pub fn update_positions(
    cfg: &ScenarioConfig,
    real: &ScenarioRealization,
    ch: &mut ChannelSet,
    st: &mut OptState,
    array: ArrayId,
    trust: &mut TrustRadii,
    retune_combiner: bool,
    repair_phases: bool,
) -> Result<ScaReport, StateError> {
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
    let half = cfg.region_side_m / 2.0;
    let radius_cap = cfg.region_side_m / 2.0;

    for _inner in 0..cfg.solver.sca_inner_iterations {
        let grads = position_gradients(cfg, real, ch, st, array)?;
        let current: &[[f64; 2]] = match array {
            ArrayId::Tx => &st.positions.tx,
            ArrayId::Rx => &st.positions.rx,
            ArrayId::Ris => &st.positions.ris,
        };
        let center = flatten(current);
        let dim = center.len();
        let mut rows = separation_rows(current, cfg.min_separation_m);
        rows.extend(leak_guard_rows(
            cfg,
            st.ul_power_w,
            grads.leak,
            &grads.d_leak,
            &center,
        ));
        // Everything so far holds at the center; only the QoS rows below
        // can render the step problem infeasible.
        let n_center_feasible = rows.len();
        rows.extend(qos_rows(
            cfg,
            grads.gamma_dl,
            grads.gamma_ul,
            &grads.d_gamma_dl,
            &grads.d_gamma_ul,
            &center,
        ));
        let radius = match array {
            ArrayId::Tx => trust.tx_m,
            ArrayId::Rx => trust.rx_m,
            ArrayId::Ris => trust.ris_m,
        };
        let mut problem = TrustRegionLp {
            gradient: grads.d_rate.clone(),
            rows,
            lower: RVec::from_element(dim, -half),
            upper: RVec::from_element(dim, half),
            center: center.clone(),
            radius,
        };
        let mut sol = solve_tr_lp(&problem, cfg.solver.trlp_tol);
        if sol.status == TrlpStatus::InfeasibleRows {
            // The floors cannot hold inside this ball; retry without them
            // and let the acceptance check judge the result.
            report.qos_rows_dropped = true;
            problem.rows.truncate(n_center_feasible);
            sol = solve_tr_lp(&problem, cfg.solver.trlp_tol);
        }
        let trust_slot = match array {
            ArrayId::Tx => &mut trust.tx_m,
            ArrayId::Rx => &mut trust.rx_m,
            ArrayId::Ris => &mut trust.ris_m,
        };
        if sol.status != TrlpStatus::Optimal || sol.gain <= 1e-14 * (1.0 + rate.abs()) {
            break;
        }

        // Score one stepped layout: spacing-validate, resynthesize the
        // channels, optionally re-project the phases onto the leak null,
        // re-tune the combiner, and report the achieved rate together
        // with the fully assembled candidate.
        let score = |stepped: &RVec| -> Result<Option<(f64, OptState, ChannelSet)>, StateError> {
            let moved = unflatten(stepped);
            let mut candidate_pos = st.positions.clone();
            match array {
                ArrayId::Tx => candidate_pos.tx = moved,
                ArrayId::Rx => candidate_pos.rx = moved,
                ArrayId::Ris => candidate_pos.ris = moved,
            }
            if candidate_pos.validate(cfg).is_err() {
                return Ok(None);
            }
            let candidate_ch = ChannelSet::build(cfg, real, &candidate_pos);
            let mut candidate = st.clone();
            candidate.positions = candidate_pos;
            if repair_phases && array == ArrayId::Ris {
                if let Some(repaired) = repair_leak_null(
                    cfg,
                    &candidate_ch,
                    candidate.ul_power_w,
                    &candidate.phases_rad,
                ) {
                    candidate.phases_rad = repaired;
                }
            }
            let new_rate = if retune_combiner {
                let (tuned, v) = combiner_tuned_rate(cfg, &candidate_ch, &candidate)?;
                candidate.combiner = v;
                tuned
            } else {
                true_rate(cfg, &candidate_ch, &candidate)?
            };
            Ok(Some((new_rate, candidate, candidate_ch)))
        };

        let Some((step_rate, step_state, step_ch)) = score(&sol.x)? else {
            report.rejected_steps += 1;
            update_trust(trust_slot, 0.0, cfg.solver.trust_min, radius_cap);
            continue;
        };
        let ratio = (step_rate - rate) / sol.gain;
        let (mut best_rate, mut best_state, mut best_ch) = (step_rate, step_state, step_ch);
        let mut extended = false;
        if best_rate > rate {
            // The model direction often stays profitable far past the
            // radius (slow channel-geometry valleys), so extend the step
            // geometrically while the true tuned rate keeps climbing.
            // Extensions leave the linearized rows behind: spacing is
            // re-validated exactly, the leak and the combiner are re-tuned,
            // and a QoS-feasible point only ever moves to candidates that
            // keep both floors.
            let qos_at_center = grads.gamma_dl >= cfg.gamma_min_dl() * (1.0 - 1e-9)
                && grads.gamma_ul >= cfg.gamma_min_ul() * (1.0 - 1e-9);
            let step = &sol.x - &center;
            let mut t = 2.0;
            for _ in 0..6 {
                let probe = &center + &step * t;
                let Some((probe_rate, probe_state, probe_ch)) = score(&probe)? else {
                    break;
                };
                if probe_rate <= best_rate {
                    break;
                }
                if qos_at_center {
                    let dl_ok = metrics::sinr_dl(cfg, &probe_ch, &probe_state)
                        >= cfg.gamma_min_dl() * (1.0 - 1e-9);
                    let ul_ok = metrics::sinr_ul(cfg, &probe_ch, &probe_state)?
                        >= cfg.gamma_min_ul() * (1.0 - 1e-9);
                    if !dl_ok || !ul_ok {
                        break;
                    }
                }
                best_rate = probe_rate;
                best_state = probe_state;
                best_ch = probe_ch;
                extended = true;
                t *= 2.0;
            }
        }

        let actual = best_rate - rate;
        if actual >= 0.0 {
            st.positions = best_state.positions;
            st.phases_rad = best_state.phases_rad;
            st.combiner = best_state.combiner;
            *ch = best_ch;
            rate = best_rate;
            report.accepted_steps += 1;
        } else {
            report.rejected_steps += 1;
        }
        // A successful extension certifies the direction beyond the
        // current radius, so let the radius grow regardless of how tight
        // the first-order prediction was at the unit step.
        let ratio = if extended { 1.0 } else { ratio };
        update_trust(trust_slot, ratio, cfg.solver.trust_min, radius_cap);
        if actual >= 0.0 && actual <= cfg.solver.ao_tol_bps_hz * 1e-3 {
            break;
        }
    }
    report.improved = rate > start_rate;
    Ok(report)
}
