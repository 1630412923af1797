//! Analytic first derivatives of both SINRs and the sum rate with respect
//! to the surface phases and the element positions of each array.
//!
//! Both SINRs share the shape γ = |s|²/(|u|²+c) with amplitudes s, u that
//! are holomorphic in the complex channel entries and differentiable in any
//! real parameter q:
//!
//! ```text
//! ∂γ/∂q = 2Re(s̄·∂s)/(|u|²+c) − γ·2Re(ū·∂u)/(|u|²+c)
//! ```
//!
//! For phases, ∂/∂ϑ_n acts through the unit factor e^{jϑ_n} of element n
//! only; for positions it acts through the field-response vectors, supplied
//! by [`d_channel_set`] as a sparse channel-shaped derivative. The rate
//! gradient follows by the chain rule through log2.

use crate::channel::derivative::{ArrayId, Coordinate, d_channel_set};
use crate::channel::{ChannelSet, ScenarioRealization};
use crate::metrics::{
    OptState, StateError, dl_leak, effective_dl_row, effective_loopback, effective_ul_col,
};
use crate::scenario::ScenarioConfig;
use crate::subproblems::LN2;
use crate::{C64, CRow, CVec, RVec};

/// SINR values and their gradients in one variable block, plus the sum-rate
/// gradient assembled from them.
#[derive(Debug, Clone)]
pub struct RateGradients {
    pub gamma_dl: f64,
    pub gamma_ul: f64,
    pub d_gamma_dl: RVec,
    pub d_gamma_ul: RVec,
    pub d_rate: RVec,
    /// Downlink leak amplitude ι = I + h̃Φg at the linearization point.
    pub leak: C64,
    /// Complex derivative ∂ι/∂q per coordinate (zero for variables the
    /// leak does not involve). Used to bound first-order leak drift.
    pub d_leak: CVec,
}

/// Baseline amplitudes shared by both gradient routines.
struct Baseline {
    s_dl: C64,
    u_dl: C64,
    s_ul: C64,
    u_ul: C64,
    den_dl: f64,
    den_ul: f64,
}

fn baseline(cfg: &ScenarioConfig, ch: &ChannelSet, st: &OptState) -> Result<Baseline, StateError> {
    if st.combiner.norm_squared() == 0.0 {
        return Err(StateError::ZeroCombiner);
    }
    let ph = st.phase_factors();
    let sigma2 = cfg.noise_power_w();
    let sqrt_p = st.ul_power_w.sqrt();
    let sqrt_eta = cfg.si_residual.sqrt();
    let s_dl = (effective_dl_row(ch, &ph) * &st.beamformer)[(0, 0)];
    let u_dl = dl_leak(ch, &ph) * sqrt_p;
    let s_ul = st.combiner.dotc(&effective_ul_col(ch, &ph)) * sqrt_p;
    let u_ul = st
        .combiner
        .dotc(&(effective_loopback(ch, &ph) * &st.beamformer))
        * sqrt_eta;
    let den_dl = u_dl.norm_sqr() + sigma2;
    let den_ul = u_ul.norm_sqr() + sigma2 * st.combiner.norm_squared();
    Ok(Baseline { s_dl, u_dl, s_ul, u_ul, den_dl, den_ul })
}

/// Assembles γ values and gradients from per-coordinate amplitude
/// derivatives.
fn assemble(
    base: &Baseline,
    ds_dl: &CVec,
    du_dl: &CVec,
    ds_ul: &CVec,
    du_ul: &CVec,
    leak: C64,
    d_leak: CVec,
) -> RateGradients {
    let dim = ds_dl.len();
    let gamma_dl = base.s_dl.norm_sqr() / base.den_dl;
    let gamma_ul = base.s_ul.norm_sqr() / base.den_ul;
    let mut d_gamma_dl = RVec::zeros(dim);
    let mut d_gamma_ul = RVec::zeros(dim);
    let mut d_rate = RVec::zeros(dim);
    for k in 0..dim {
        let g_dl = 2.0 * (base.s_dl.conj() * ds_dl[k]).re / base.den_dl
            - gamma_dl * 2.0 * (base.u_dl.conj() * du_dl[k]).re / base.den_dl;
        let g_ul = 2.0 * (base.s_ul.conj() * ds_ul[k]).re / base.den_ul
            - gamma_ul * 2.0 * (base.u_ul.conj() * du_ul[k]).re / base.den_ul;
        d_gamma_dl[k] = g_dl;
        d_gamma_ul[k] = g_ul;
        d_rate[k] = (g_dl / (1.0 + gamma_dl) + g_ul / (1.0 + gamma_ul)) / LN2;
    }
    RateGradients {
        gamma_dl,
        gamma_ul,
        d_gamma_dl,
        d_gamma_ul,
        d_rate,
        leak,
        d_leak,
    }
}

/// Gradients with respect to the N surface phases ϑ.
pub fn phase_gradients(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &OptState,
) -> Result<RateGradients, StateError> {
    let base = baseline(cfg, ch, st)?;
    let n = cfg.ris_elements;
    let ph = st.phase_factors();
    let sqrt_p = st.ul_power_w.sqrt();
    let sqrt_eta = cfg.si_residual.sqrt();
    let h_omega = &ch.bs_ris * &st.beamformer; // (H·ω), length N
    let vg = ch.ris_bs.adjoint() * &st.combiner; // conj of (vᴴG), length N
    let j = C64::new(0.0, 1.0);
    let mut ds_dl = CVec::zeros(n);
    let mut du_dl = CVec::zeros(n);
    let mut ds_ul = CVec::zeros(n);
    let mut du_ul = CVec::zeros(n);
    let mut d_leak = CVec::zeros(n);
    for k in 0..n {
        let jt = j * ph[k];
        let vgk = vg[k].conj();
        ds_dl[k] = jt * ch.ris_dl[k] * h_omega[k];
        d_leak[k] = jt * ch.ris_dl[k] * ch.ul_ris[k];
        du_dl[k] = d_leak[k] * sqrt_p;
        ds_ul[k] = jt * vgk * ch.ul_ris[k] * sqrt_p;
        du_ul[k] = jt * vgk * h_omega[k] * sqrt_eta;
    }
    let leak = dl_leak(ch, &ph);
    Ok(assemble(&base, &ds_dl, &du_dl, &ds_ul, &du_ul, leak, d_leak))
}

fn row_phase(row: &CRow, ph: &CVec) -> CRow {
    CRow::from_iterator(row.len(), row.iter().zip(ph.iter()).map(|(&r, &p)| r * p))
}

fn col_phase(ph: &CVec, col: &CVec) -> CVec {
    CVec::from_iterator(col.len(), col.iter().zip(ph.iter()).map(|(&c, &p)| c * p))
}

/// Gradients with respect to the planar coordinates of one array, in the
/// canonical [`Coordinate::array_coords`] order (element-major, x before y).
pub fn position_gradients(
    cfg: &ScenarioConfig,
    real: &ScenarioRealization,
    ch: &ChannelSet,
    st: &OptState,
    array: ArrayId,
) -> Result<RateGradients, StateError> {
    let base = baseline(cfg, ch, st)?;
    let count = match array {
        ArrayId::Tx => cfg.tx_antennas,
        ArrayId::Rx => cfg.rx_antennas,
        ArrayId::Ris => cfg.ris_elements,
    };
    let coords = Coordinate::array_coords(array, count);
    let ph = st.phase_factors();
    let sqrt_p = st.ul_power_w.sqrt();
    let sqrt_eta = cfg.si_residual.sqrt();
    let h_omega = &ch.bs_ris * &st.beamformer;
    let hphi = row_phase(&ch.ris_dl, &ph); // h̃·Φ
    let g_phi = col_phase(&ph, &ch.ul_ris); // Φ·g
    let dim = coords.len();
    let mut ds_dl = CVec::zeros(dim);
    let mut du_dl = CVec::zeros(dim);
    let mut ds_ul = CVec::zeros(dim);
    let mut du_ul = CVec::zeros(dim);
    let mut d_leak = CVec::zeros(dim);
    for (k, &coord) in coords.iter().enumerate() {
        let dch = d_channel_set(cfg, real, &st.positions, coord);
        // s_DL = (h_d + h̃ΦH)·ω
        let d_row = &dch.bs_dl + row_phase(&dch.ris_dl, &ph) * &ch.bs_ris + &hphi * &dch.bs_ris;
        ds_dl[k] = (d_row * &st.beamformer)[(0, 0)];
        // u_DL = √p·ι with ι = I + h̃Φg
        d_leak[k] =
            (row_phase(&dch.ris_dl, &ph) * &ch.ul_ris + (&hphi * &dch.ul_ris))[(0, 0)];
        du_dl[k] = d_leak[k] * sqrt_p;
        // s_UL = √p·vᴴ(h_u + GΦg)
        let d_col = &dch.ul_bs + &dch.ris_bs * &g_phi + &ch.ris_bs * col_phase(&ph, &dch.ul_ris);
        ds_ul[k] = st.combiner.dotc(&d_col) * sqrt_p;
        // u_UL = √η·vᴴ(F + GΦH)·ω
        let d_loop = &dch.self_interference * &st.beamformer
            + &dch.ris_bs * col_phase(&ph, &h_omega)
            + &ch.ris_bs * col_phase(&ph, &(&dch.bs_ris * &st.beamformer));
        du_ul[k] = st.combiner.dotc(&d_loop) * sqrt_eta;
    }
    let leak = dl_leak(ch, &ph);
    Ok(assemble(&base, &ds_dl, &du_dl, &ds_ul, &du_ul, leak, d_leak))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PositionSet;
    use crate::metrics::{self, test_support::random_point};
    use crate::scenario::ScenarioConfig;

    fn rel_err(got: f64, want: f64, scale: f64) -> f64 {
        (got - want).abs() / (scale + want.abs())
    }

    #[test]
    fn phase_gradients_match_finite_differences() {
        let cfg = ScenarioConfig::desk();
        for seed in 0..5 {
            let (_real, ch, mut st) = random_point(&cfg, seed);
            let grads = phase_gradients(&cfg, &ch, &st).unwrap();
            let scale = 1e-6 * (1.0 + grads.d_rate.amax());
            let h = 1e-6;
            for n in (0..cfg.ris_elements).step_by(3) {
                let orig = st.phases_rad[n];
                st.phases_rad[n] = orig + h;
                let up = metrics::sum_rate(&cfg, &ch, &st).unwrap();
                let g_dl_up = metrics::sinr_dl(&cfg, &ch, &st);
                st.phases_rad[n] = orig - h;
                let dn = metrics::sum_rate(&cfg, &ch, &st).unwrap();
                let g_dl_dn = metrics::sinr_dl(&cfg, &ch, &st);
                st.phases_rad[n] = orig;
                let fd_rate = (up - dn) / (2.0 * h);
                let fd_dl = (g_dl_up - g_dl_dn) / (2.0 * h);
                assert!(
                    rel_err(grads.d_rate[n], fd_rate, scale) < 1e-5,
                    "seed {seed} phase {n}: {} vs fd {}",
                    grads.d_rate[n],
                    fd_rate
                );
                assert!(
                    rel_err(grads.d_gamma_dl[n], fd_dl, 1e-6 * (1.0 + grads.d_gamma_dl.amax()))
                        < 1e-4
                );
            }
        }
    }

    #[test]
    fn position_gradients_match_finite_differences() {
        let cfg = ScenarioConfig::desk();
        for (seed, array) in [(0u64, ArrayId::Tx), (1, ArrayId::Rx), (2, ArrayId::Ris)] {
            let (real, ch, st) = random_point(&cfg, seed);
            let grads = position_gradients(&cfg, &real, &ch, &st, array).unwrap();
            let h = 1e-8;
            let count = grads.d_rate.len() / 2;
            for e in (0..count).step_by(2) {
                for (axis_idx, k) in [(0usize, 2 * e), (1usize, 2 * e + 1)] {
                    let shift = |pos: &PositionSet, delta: f64| -> PositionSet {
                        let mut p = pos.clone();
                        let set = match array {
                            ArrayId::Tx => &mut p.tx,
                            ArrayId::Rx => &mut p.rx,
                            ArrayId::Ris => &mut p.ris,
                        };
                        set[e][axis_idx] += delta;
                        p
                    };
                    let eval = |delta: f64| -> f64 {
                        let pos = shift(&st.positions, delta);
                        let ch2 = ChannelSet::build(&cfg, &real, &pos);
                        let mut st2 = st.clone();
                        st2.positions = pos;
                        metrics::sum_rate(&cfg, &ch2, &st2).unwrap()
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let scale = 1e-6 * (1.0 + grads.d_rate.amax());
                    assert!(
                        rel_err(grads.d_rate[k], fd, scale) < 1e-4,
                        "{array:?} seed {seed} coord {k}: {} vs fd {}",
                        grads.d_rate[k],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn downlink_sinr_ignores_receive_array() {
        let cfg = ScenarioConfig::desk();
        let (real, ch, st) = random_point(&cfg, 7);
        let grads = position_gradients(&cfg, &real, &ch, &st, ArrayId::Rx).unwrap();
        // Structural: the downlink involves no receive-side channel.
        assert_eq!(grads.d_gamma_dl.amax(), 0.0);
        // While the uplink certainly moves.
        assert!(grads.d_gamma_ul.amax() > 0.0);
    }
}
