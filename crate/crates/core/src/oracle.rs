//! Slow-but-transparent reference implementations used to audit the
//! optimizer: finite-difference gradients, exhaustive scans, a
//! random-search and a power-iteration combiner reference, and
//! reproducible random operating points. Everything here is deliberately
//! naive — the production blocks must match or beat these — and nothing
//! here shares code with the block solvers beyond the metric definitions
//! themselves.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::derivative::ArrayId;
use crate::channel::{ChannelSet, PositionSet, ScenarioRealization};
use crate::metrics::{self, OptState, StateError};
use crate::scenario::ScenarioConfig;
use crate::{C64, CMat, CVec, RVec};

/// Random complex vector with independent uniform(−½,½) parts.
pub fn random_cvec(rng: &mut ChaCha8Rng, len: usize) -> CVec {
    CVec::from_iterator(
        len,
        (0..len).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)),
    )
}

/// A random operating point: positions jittered off the grid (spacing
/// may dip slightly below the floor — fine for metric evaluation),
/// random phases, scaled beamformer, random combiner, feasible power.
pub fn random_state(cfg: &ScenarioConfig, seed: u64) -> OptState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = PositionSet::grid_layout(cfg);
    for set in [&mut positions.tx, &mut positions.rx, &mut positions.ris] {
        for p in set.iter_mut() {
            p[0] += (rng.gen::<f64>() - 0.5) * 0.008;
            p[1] += (rng.gen::<f64>() - 0.5) * 0.008;
        }
    }
    let mut beamformer = random_cvec(&mut rng, cfg.tx_antennas);
    let scale = (cfg.power_bs_max_w() * rng.gen::<f64>()).sqrt() / beamformer.norm();
    beamformer *= C64::new(scale, 0.0);
    let combiner = random_cvec(&mut rng, cfg.rx_antennas);
    let phases_rad = RVec::from_iterator(
        cfg.ris_elements,
        (0..cfg.ris_elements).map(|_| rng.gen::<f64>() * TAU),
    );
    OptState {
        beamformer,
        combiner,
        ul_power_w: cfg.power_ul_max_w() * rng.gen::<f64>(),
        phases_rad,
        positions,
    }
}

/// Random state plus its channels, the common audit fixture.
pub fn random_point(
    cfg: &ScenarioConfig,
    seed: u64,
) -> (ScenarioRealization, ChannelSet, OptState) {
    let real = ScenarioRealization::sample(cfg, seed);
    let st = random_state(cfg, seed.wrapping_mul(31).wrapping_add(7));
    let ch = ChannelSet::build(cfg, &real, &st.positions);
    (real, ch, st)
}

/// Central finite differences of the sum rate over the surface phases.
pub fn fd_phase_gradient(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &OptState,
    step_rad: f64,
) -> Result<RVec, StateError> {
    let mut grad = RVec::zeros(st.phases_rad.len());
    let mut probe = st.clone();
    for k in 0..st.phases_rad.len() {
        probe.phases_rad[k] = st.phases_rad[k] + step_rad;
        let plus = metrics::sum_rate(cfg, ch, &probe)?;
        probe.phases_rad[k] = st.phases_rad[k] - step_rad;
        let minus = metrics::sum_rate(cfg, ch, &probe)?;
        probe.phases_rad[k] = st.phases_rad[k];
        grad[k] = (plus - minus) / (2.0 * step_rad);
    }
    Ok(grad)
}

/// Central finite differences of the sum rate over one array's element
/// coordinates (x then y per element), resynthesizing the channels at
/// every probe.
pub fn fd_position_gradient(
    cfg: &ScenarioConfig,
    real: &ScenarioRealization,
    st: &OptState,
    array: ArrayId,
    step_m: f64,
) -> Result<RVec, StateError> {
    let count = match array {
        ArrayId::Tx => st.positions.tx.len(),
        ArrayId::Rx => st.positions.rx.len(),
        ArrayId::Ris => st.positions.ris.len(),
    };
    let mut grad = RVec::zeros(2 * count);
    let mut probe = st.clone();
    for k in 0..count {
        for axis in 0..2 {
            let rate_at = |probe: &mut OptState, delta: f64| -> Result<f64, StateError> {
                let set = match array {
                    ArrayId::Tx => &mut probe.positions.tx,
                    ArrayId::Rx => &mut probe.positions.rx,
                    ArrayId::Ris => &mut probe.positions.ris,
                };
                let kept = set[k][axis];
                set[k][axis] = kept + delta;
                let ch = ChannelSet::build(cfg, real, &probe.positions);
                let rate = metrics::sum_rate(cfg, &ch, probe);
                match array {
                    ArrayId::Tx => probe.positions.tx[k][axis] = kept,
                    ArrayId::Rx => probe.positions.rx[k][axis] = kept,
                    ArrayId::Ris => probe.positions.ris[k][axis] = kept,
                }
                rate
            };
            let plus = rate_at(&mut probe, step_m)?;
            let minus = rate_at(&mut probe, -step_m)?;
            grad[2 * k + axis] = (plus - minus) / (2.0 * step_m);
        }
    }
    Ok(grad)
}

/// Exhaustive reference for the uplink-power choice: maximizes the true
/// sum rate over the QoS-feasible power interval by scanning `points`
/// uniform samples of that interval, endpoints included.
///
/// The interval ends are located first, by bisection on the two monotone
/// pointwise predicates (the uplink SINR rises linearly with p, the
/// downlink SINR falls with p), driven purely by metric evaluations.
/// Scanning the feasible interval rather than all of [0, P_u] matters:
/// the uplink floor often sits at p ~ 1e−7 W, far below the resolution of
/// any uniform grid of the full budget, and an endpoint optimum there
/// must be representable exactly for the comparison to mean anything.
/// Ties break toward larger power. Returns `None` when no power level in
/// [0, P_u] meets both QoS floors.
pub fn best_power_on_grid(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &OptState,
    points: usize,
) -> Result<Option<f64>, StateError> {
    assert!(points >= 2);
    let p_max = cfg.power_ul_max_w();
    let mut probe = st.clone();
    let ul_ok = |probe: &mut OptState, p: f64| -> Result<bool, StateError> {
        probe.ul_power_w = p;
        Ok(metrics::sinr_ul(cfg, ch, probe)? >= cfg.gamma_min_ul())
    };
    let lo = if ul_ok(&mut probe, 0.0)? {
        0.0
    } else if !ul_ok(&mut probe, p_max)? {
        return Ok(None);
    } else {
        // Smallest feasible p: predicate is false at a, true at b.
        let (mut a, mut b) = (0.0, p_max);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if ul_ok(&mut probe, mid)? {
                b = mid;
            } else {
                a = mid;
            }
        }
        b
    };
    let dl_ok = |probe: &mut OptState, p: f64| -> bool {
        probe.ul_power_w = p;
        metrics::sinr_dl(cfg, ch, probe) >= cfg.gamma_min_dl()
    };
    let hi = if dl_ok(&mut probe, p_max) {
        p_max
    } else if !dl_ok(&mut probe, 0.0) {
        return Ok(None);
    } else {
        // Largest feasible p: predicate is true at a, false at b.
        let (mut a, mut b) = (0.0, p_max);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if dl_ok(&mut probe, mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        a
    };
    if lo > hi {
        return Ok(None);
    }
    let mut best: Option<(f64, f64)> = None;
    for i in 0..points {
        let p = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        probe.ul_power_w = p;
        let rate = metrics::sum_rate(cfg, ch, &probe)?;
        if best.is_none_or(|(r, _)| rate >= r) {
            best = Some((rate, p));
        }
    }
    Ok(best.map(|(_, p)| p))
}

/// Best uplink SINR found by random search over unit-norm combiners.
pub fn best_combiner_sinr_by_search(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &OptState,
    trials: usize,
    seed: u64,
) -> Result<f64, StateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = st.clone();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..trials {
        let v = random_cvec(&mut rng, cfg.rx_antennas);
        if v.norm() == 0.0 {
            continue;
        }
        probe.combiner = v.normalize();
        best = best.max(metrics::sinr_ul(cfg, ch, &probe)?);
    }
    Ok(best)
}

/// Combiner reference by plain power iteration on B⁻¹(aaᴴ), where a is the
/// effective uplink column and B = σ²I + η·bbᴴ the interference-plus-noise
/// matrix — the uplink SINR is the generalized Rayleigh quotient of (aaᴴ, B),
/// so the dominant eigenvector of B⁻¹aaᴴ is the optimal combiner. Uses a
/// dense LU inverse and a fixed deterministic start; no Cholesky, no
/// whitening, so it shares nothing with the production closed form.
pub fn power_iteration_combiner(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &OptState,
    iterations: usize,
) -> Result<CVec, StateError> {
    let phases = st.phase_factors();
    let a = metrics::effective_ul_col(ch, &phases);
    let b = metrics::effective_loopback(ch, &phases) * &st.beamformer;
    let m = cfg.rx_antennas;
    let mut bmat = CMat::identity(m, m) * C64::new(cfg.noise_power_w(), 0.0);
    for i in 0..m {
        for j in 0..m {
            bmat[(i, j)] += C64::new(cfg.si_residual, 0.0) * b[i] * b[j].conj();
        }
    }
    let inv = bmat.try_inverse().ok_or(StateError::ZeroCombiner)?;
    let target = &inv * (&a * a.adjoint());
    // Deterministic start with nonzero overlap against any direction.
    let mut v = CVec::from_iterator(m, (0..m).map(|i| C64::new(1.0, 0.3 + i as f64)));
    v = v.normalize();
    for _ in 0..iterations {
        let next = &target * &v;
        let norm = next.norm();
        if norm == 0.0 {
            break;
        }
        v = next / C64::new(norm, 0.0);
    }
    Ok(v)
}

/// Worst-coordinate relative disagreement between two gradients: the
/// largest per-coordinate difference scaled by the largest coordinate
/// magnitude across both, floored to dodge division by a genuinely zero
/// gradient.
pub fn relative_gradient_error(analytic: &RVec, fd: &RVec) -> f64 {
    let scale = analytic.amax().max(fd.amax()).max(1e-9);
    (analytic - fd).amax() / scale
}

/// Angle between the complex lines spanned by two vectors, in radians;
/// invariant to the per-vector complex scale.
pub fn subspace_angle_rad(a: &CVec, b: &CVec) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    (a.dotc(b).norm() / denom).clamp(-1.0, 1.0).acos()
}

/// A deliberately benign configuration — one transmit and one receive
/// antenna, one surface element, one path per link, no uplink power, no
/// loopback residual, no rate floors — where the sum rate reduces to the
/// downlink rate and depends only on the element's position and phase.
/// Small enough for exhaustive scans.
pub fn single_element_scenario() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::desk();
    cfg.tx_antennas = 1;
    cfg.rx_antennas = 1;
    cfg.ris_elements = 1;
    cfg.paths_per_link = 1;
    cfg.si_residual = 0.0;
    cfg.power_ul_max_dbm = f64::NEG_INFINITY;
    cfg.rate_min_dl_bps_hz = 0.0;
    cfg.rate_min_ul_bps_hz = 0.0;
    cfg
}

/// Outcome of [`scan_single_element`].
#[derive(Debug, Clone, Copy)]
pub struct SingleElementScan {
    pub best_rate: f64,
    pub best_position: [f64; 2],
    pub best_phase_rad: f64,
}

/// Exhaustive scan over a single surface element's position × phase for a
/// scenario with exactly one element: `grid_points` per axis over the
/// placement region and `phase_points` over [0, 2π). Every other variable
/// is held at the supplied operating point. Returns the best point found.
pub fn scan_single_element(
    cfg: &ScenarioConfig,
    real: &ScenarioRealization,
    st: &OptState,
    grid_points: usize,
    phase_points: usize,
) -> Result<SingleElementScan, StateError> {
    assert_eq!(cfg.ris_elements, 1, "scan is defined for one element");
    let half = cfg.region_side_m / 2.0;
    let axis =
        |i: usize| -> f64 { -half + cfg.region_side_m * i as f64 / (grid_points - 1) as f64 };
    let mut probe = st.clone();
    let mut best = SingleElementScan {
        best_rate: f64::NEG_INFINITY,
        best_position: [0.0, 0.0],
        best_phase_rad: 0.0,
    };
    for ix in 0..grid_points {
        for iy in 0..grid_points {
            let pos = [axis(ix), axis(iy)];
            probe.positions.ris[0] = pos;
            let ch = ChannelSet::build(cfg, real, &probe.positions);
            for it in 0..phase_points {
                let theta = TAU * it as f64 / phase_points as f64;
                probe.phases_rad[0] = theta;
                let rate = metrics::sum_rate(cfg, &ch, &probe)?;
                if rate > best.best_rate {
                    best = SingleElementScan {
                        best_rate: rate,
                        best_position: pos,
                        best_phase_rad: theta,
                    };
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subproblems::gradients::phase_gradients;

    #[test]
    fn fd_phase_gradient_matches_analytic_on_a_sample() {
        let cfg = ScenarioConfig::desk();
        let (_real, ch, st) = random_point(&cfg, 11);
        let fd = fd_phase_gradient(&cfg, &ch, &st, 1e-6).unwrap();
        let analytic = phase_gradients(&cfg, &ch, &st).unwrap().d_rate;
        let err = (&fd - &analytic).norm() / analytic.norm().max(1e-30);
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn power_grid_agrees_with_the_closed_form_block() {
        let cfg = ScenarioConfig::desk();
        for seed in [3, 17, 29, 101, 202] {
            let (_real, ch, st) = random_point(&cfg, seed);
            let grid = best_power_on_grid(&cfg, &ch, &st, 20_001)
                .unwrap()
                .expect("desk floors are reachable");
            let mut chosen = st.clone();
            crate::subproblems::power::update_power(&cfg, &ch, &mut chosen).unwrap();
            assert!(
                (grid - chosen.ul_power_w).abs() <= 1e-4 * cfg.power_ul_max_w(),
                "seed {seed}: grid {grid:.6e} vs block {:.6e}",
                chosen.ul_power_w
            );
        }
    }

    #[test]
    fn power_grid_reports_unreachable_floors() {
        let mut cfg = ScenarioConfig::desk();
        cfg.rate_min_dl_bps_hz = 80.0;
        cfg.rate_min_ul_bps_hz = 80.0;
        let (_real, ch, st) = random_point(&cfg, 3);
        assert_eq!(best_power_on_grid(&cfg, &ch, &st, 101).unwrap(), None);
    }

    #[test]
    fn subspace_angle_ignores_complex_scale() {
        let a = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 2.0)]);
        let b = &a * C64::from_polar(3.0, 1.2);
        // acos near 1 turns the last ulp into ~1e-8 of angle.
        assert!(subspace_angle_rad(&a, &b) < 1e-7);
        let c = CVec::from_vec(vec![C64::new(0.0, -2.0), C64::new(-1.0, 0.0)]);
        assert!((subspace_angle_rad(&a, &c) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn single_element_scenario_reduces_to_the_downlink_rate() {
        let cfg = single_element_scenario();
        cfg.validate().unwrap();
        assert_eq!(cfg.power_ul_max_w(), 0.0);
        let (_real, ch, st) = random_point(&cfg, 5);
        assert_eq!(st.ul_power_w, 0.0);
        assert_eq!(metrics::sinr_ul(&cfg, &ch, &st).unwrap(), 0.0);
        let rate = metrics::sum_rate(&cfg, &ch, &st).unwrap();
        assert_eq!(rate, (1.0 + metrics::sinr_dl(&cfg, &ch, &st)).log2());
    }

    #[test]
    fn single_element_scan_beats_its_own_start() {
        let cfg = single_element_scenario();
        let (real, ch, st) = random_point(&cfg, 8);
        let start = metrics::sum_rate(&cfg, &ch, &st).unwrap();
        let scan = scan_single_element(&cfg, &real, &st, 11, 32).unwrap();
        assert!(scan.best_rate >= start, "{} < {start}", scan.best_rate);
        // The reported best point reproduces the reported best rate.
        let mut probe = st.clone();
        probe.positions.ris[0] = scan.best_position;
        probe.phases_rad[0] = scan.best_phase_rad;
        let ch = ChannelSet::build(&cfg, &real, &probe.positions);
        let replay = metrics::sum_rate(&cfg, &ch, &probe).unwrap();
        assert_eq!(replay, scan.best_rate);
    }

    #[test]
    fn power_iteration_recovers_the_rayleigh_maximizer() {
        let cfg = ScenarioConfig::desk();
        for seed in [1, 4, 9] {
            let (_real, ch, st) = random_point(&cfg, seed);
            let v = power_iteration_combiner(&cfg, &ch, &st, 400).unwrap();
            let mut tuned = st.clone();
            tuned.combiner = v;
            let reference = metrics::sinr_ul(&cfg, &ch, &tuned).unwrap();
            let searched = best_combiner_sinr_by_search(&cfg, &ch, &st, 2000, seed).unwrap();
            assert!(
                reference >= searched * (1.0 - 1e-9),
                "seed {seed}: power iteration {reference} below search {searched}"
            );
        }
    }
}
