//! Receive-combiner block: closed-form global optimum.
//!
//! Only the uplink SINR depends on the combiner v, through the generalized
//! Rayleigh quotient p·|vᴴa|² / (vᴴ(σ²I + η·bbᴴ)v) with a the effective
//! uplink column and b the loopback response of the current beamformer.
//! Because the numerator is rank-one, the maximizer is the whitened matched
//! filter (σ²I + η·bbᴴ)⁻¹·a — no iteration, no surrogate, and the block can
//! never decrease the sum rate.

use crate::channel::ChannelSet;
use crate::kernels::eig::whitened_mmse_direction;
use crate::metrics::{OptState, StateError, effective_loopback, effective_ul_col};
use crate::scenario::ScenarioConfig;
use crate::{C64, CMat, CVec};

/// The combiner that maximizes the uplink SINR for these channels, phases
/// and beamformer (the current combiner plays no role). `None` in the
/// degenerate zero-uplink-column case, where every combiner is equally
/// useless. The optimum does not depend on the uplink power: it scales the
/// quotient's numerator only.
pub(crate) fn best_combiner(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    phases: &CVec,
    beamformer: &CVec,
) -> Option<CVec> {
    let a = effective_ul_col(ch, phases);
    let b = effective_loopback(ch, phases) * beamformer;
    let s: CMat = (&b * b.adjoint()) * C64::new(cfg.si_residual, 0.0);
    whitened_mmse_direction(&a, &s, cfg.noise_power_w()).ok()
}

/// Replaces the combiner with the closed-form optimum. Returns whether the
/// combiner changed; a zero effective uplink column leaves it untouched.
pub fn update_combiner(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &mut OptState,
) -> Result<bool, StateError> {
    if st.combiner.norm_squared() == 0.0 {
        return Err(StateError::ZeroCombiner);
    }
    match best_combiner(cfg, ch, &st.phase_factors(), &st.beamformer) {
        Some(v) => {
            let changed = v != st.combiner;
            st.combiner = v;
            Ok(changed)
        }
        // Degenerate geometry (a = 0): any combiner gives zero uplink
        // signal, so keep the current one.
        None => Ok(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{self, test_support::random_point};
    use crate::scenario::ScenarioConfig;
    use crate::CVec;
    use nalgebra::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn never_decreases_uplink_sinr() {
        let cfg = ScenarioConfig::desk();
        for seed in 0..30 {
            let (_real, ch, mut st) = random_point(&cfg, seed);
            let before = metrics::sinr_ul(&cfg, &ch, &st).unwrap();
            update_combiner(&cfg, &ch, &mut st).unwrap();
            let after = metrics::sinr_ul(&cfg, &ch, &st).unwrap();
            assert!(after >= before * (1.0 - 1e-12), "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn achieves_the_rank_one_closed_form() {
        // max over v of p|vᴴa|²/(vᴴMv) equals p·aᴴM⁻¹a.
        let cfg = ScenarioConfig::desk();
        for seed in 0..20 {
            let (_real, ch, mut st) = random_point(&cfg, seed);
            update_combiner(&cfg, &ch, &mut st).unwrap();
            let achieved = metrics::sinr_ul(&cfg, &ch, &st).unwrap();
            let phases = st.phase_factors();
            let a = effective_ul_col(&ch, &phases);
            let b = effective_loopback(&ch, &phases) * &st.beamformer;
            let mut m: CMat = (&b * b.adjoint()) * Complex::new(cfg.si_residual, 0.0);
            for i in 0..m.nrows() {
                m[(i, i)] += Complex::new(cfg.noise_power_w(), 0.0);
            }
            let sol = m.lu().solve(&a).unwrap();
            let bound = st.ul_power_w * a.dotc(&sol).re;
            assert!(
                (achieved - bound).abs() <= 1e-9 * (1.0 + bound),
                "seed {seed}: {achieved} vs {bound}"
            );
        }
    }

    #[test]
    fn beats_random_competitors() {
        let cfg = ScenarioConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..5 {
            let (_real, ch, mut st) = random_point(&cfg, seed);
            update_combiner(&cfg, &ch, &mut st).unwrap();
            let best = metrics::sinr_ul(&cfg, &ch, &st).unwrap();
            for _ in 0..500 {
                let mut st2 = st.clone();
                st2.combiner = CVec::from_fn(cfg.rx_antennas, |_, _| {
                    Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                let other = metrics::sinr_ul(&cfg, &ch, &st2).unwrap();
                assert!(other <= best * (1.0 + 1e-9), "seed {seed}");
            }
        }
    }
}
