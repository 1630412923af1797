//! Link-quality metrics of an operating point: the two SINRs, the sum rate,
//! a half-duplex reference rate and the constraint feasibility flags.
//!
//! With surface phase matrix Φ = diag(e^{jϑ}) the effective channels are
//!
//! ```text
//! downlink row      h_DL = h_d + h̃·Φ·H                  (1 × M_t)
//! uplink column     a_UL = h_u + G·Φ·g                   (M_r)
//! loopback matrix   F_eff = F + G·Φ·H                    (M_r × M_t)
//! downlink leak     ι    = I + h̃·Φ·g                    (scalar)
//! ```
//!
//! and the SINRs read
//!
//! ```text
//! γ_DL = |h_DL·ω|² / (p·|ι|² + σ²)
//! γ_UL = p·|v^H·a_UL|² / (η·|v^H·F_eff·ω|² + σ²·‖v‖²)
//! ```
//!
//! Rates are log2(1+γ) per Hz. The half-duplex reference removes both
//! cross-interference terms and halves each rate (orthogonal time sharing).

use thiserror::Error;

use crate::channel::{ChannelSet, PositionSet};
use crate::scenario::ScenarioConfig;
use crate::{C64, CMat, CRow, CVec, RVec};

/// One operating point of the optimizer: every block variable.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    /// Transmit beamformer ω (M_t), power ‖ω‖² ≤ P_BS.
    pub beamformer: CVec,
    /// Receive combiner v (M_r), any nonzero scale.
    pub combiner: CVec,
    /// Uplink transmit power p in watts.
    pub ul_power_w: f64,
    /// Surface phases ϑ (N), radians.
    pub phases_rad: RVec,
    /// Element positions of the three arrays.
    pub positions: PositionSet,
}

/// Invalid-state conditions the metrics refuse to evaluate.
#[derive(Debug, Error)]
pub enum StateError {
    #[error("combiner is identically zero; uplink SINR undefined")]
    ZeroCombiner,
}

impl OptState {
    /// Unit-modulus phase factors e^{jϑ} as a vector.
    pub fn phase_factors(&self) -> CVec {
        CVec::from_iterator(
            self.phases_rad.len(),
            self.phases_rad.iter().map(|&t| C64::from_polar(1.0, t)),
        )
    }
}

/// h̃·Φ as a row: entrywise product of the surface row with e^{jϑ}.
fn row_times_phase(row: &CRow, phases: &CVec) -> CRow {
    CRow::from_iterator(
        row.len(),
        row.iter().zip(phases.iter()).map(|(&r, &p)| r * p),
    )
}

/// Effective downlink row h_d + h̃·Φ·H.
pub fn effective_dl_row(ch: &ChannelSet, phases: &CVec) -> CRow {
    &ch.bs_dl + row_times_phase(&ch.ris_dl, phases) * &ch.bs_ris
}

/// Effective uplink column h_u + G·Φ·g.
pub fn effective_ul_col(ch: &ChannelSet, phases: &CVec) -> CVec {
    let scaled = CVec::from_iterator(
        phases.len(),
        ch.ul_ris
            .iter()
            .zip(phases.iter())
            .map(|(&g, &p)| g * p),
    );
    &ch.ul_bs + &ch.ris_bs * scaled
}

/// Effective loopback matrix F + G·Φ·H.
pub fn effective_loopback(ch: &ChannelSet, phases: &CVec) -> CMat {
    let mut scaled_h = ch.bs_ris.clone();
    for (r, &p) in phases.iter().enumerate() {
        for c in 0..scaled_h.ncols() {
            scaled_h[(r, c)] *= p;
        }
    }
    &ch.self_interference + &ch.ris_bs * scaled_h
}

/// Scalar downlink leak I + h̃·Φ·g.
pub fn dl_leak(ch: &ChannelSet, phases: &CVec) -> C64 {
    let mut acc = ch.inter_user;
    for n in 0..phases.len() {
        acc += ch.ris_dl[n] * phases[n] * ch.ul_ris[n];
    }
    acc
}

/// Downlink SINR at the operating point.
pub fn sinr_dl(cfg: &ScenarioConfig, ch: &ChannelSet, st: &OptState) -> f64 {
    let phases = st.phase_factors();
    let signal = (effective_dl_row(ch, &phases) * &st.beamformer)[(0, 0)].norm_sqr();
    let leak = dl_leak(ch, &phases).norm_sqr();
    signal / (st.ul_power_w * leak + cfg.noise_power_w())
}

/// Uplink SINR; errors if the combiner is zero.
pub fn sinr_ul(cfg: &ScenarioConfig, ch: &ChannelSet, st: &OptState) -> Result<f64, StateError> {
    let v_norm_sq = st.combiner.norm_squared();
    if v_norm_sq == 0.0 {
        return Err(StateError::ZeroCombiner);
    }
    let phases = st.phase_factors();
    let signal = st.combiner.dotc(&effective_ul_col(ch, &phases)).norm_sqr();
    let si_amp = st
        .combiner
        .dotc(&(effective_loopback(ch, &phases) * &st.beamformer))
        .norm_sqr();
    let den = cfg.si_residual * si_amp + cfg.noise_power_w() * v_norm_sq;
    Ok(st.ul_power_w * signal / den)
}

/// Sum rate log2(1+γ_DL) + log2(1+γ_UL) in bps/Hz.
pub fn sum_rate(cfg: &ScenarioConfig, ch: &ChannelSet, st: &OptState) -> Result<f64, StateError> {
    let g_dl = sinr_dl(cfg, ch, st);
    let g_ul = sinr_ul(cfg, ch, st)?;
    Ok((1.0 + g_dl).log2() + (1.0 + g_ul).log2())
}

/// Half-duplex reference, split into its downlink and uplink halves: no
/// uplink→downlink leak, no loopback, each direction gets half the time.
pub fn half_duplex_rates(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &OptState,
) -> Result<(f64, f64), StateError> {
    let v_norm_sq = st.combiner.norm_squared();
    if v_norm_sq == 0.0 {
        return Err(StateError::ZeroCombiner);
    }
    let phases = st.phase_factors();
    let sigma2 = cfg.noise_power_w();
    let dl_signal = (effective_dl_row(ch, &phases) * &st.beamformer)[(0, 0)].norm_sqr();
    let g_dl = dl_signal / sigma2;
    let ul_signal = st.combiner.dotc(&effective_ul_col(ch, &phases)).norm_sqr();
    let g_ul = st.ul_power_w * ul_signal / (sigma2 * v_norm_sq);
    Ok((0.5 * (1.0 + g_dl).log2(), 0.5 * (1.0 + g_ul).log2()))
}

/// Total half-duplex reference rate.
pub fn half_duplex_rate(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &OptState,
) -> Result<f64, StateError> {
    let (dl, ul) = half_duplex_rates(cfg, ch, st)?;
    Ok(dl + ul)
}

/// Per-constraint verdicts at an operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feasibility {
    /// ‖ω‖² ≤ P_BS.
    pub bs_power_ok: bool,
    /// 0 ≤ p ≤ P_u.
    pub ul_power_ok: bool,
    /// γ_DL ≥ 2^{R_min,DL} − 1.
    pub qos_dl_ok: bool,
    /// γ_UL ≥ 2^{R_min,UL} − 1.
    pub qos_ul_ok: bool,
    /// Transmit positions inside the region at valid spacing.
    pub tx_positions_ok: bool,
    /// Receive positions inside the region at valid spacing.
    pub rx_positions_ok: bool,
    /// Surface positions inside the region at valid spacing.
    pub ris_positions_ok: bool,
}

impl Feasibility {
    /// True when every constraint holds.
    pub fn all(&self) -> bool {
        self.bs_power_ok
            && self.ul_power_ok
            && self.qos_dl_ok
            && self.qos_ul_ok
            && self.tx_positions_ok
            && self.rx_positions_ok
            && self.ris_positions_ok
    }
}

/// Relative slack applied to the power and QoS comparisons so that a
/// boundary-tight optimizer output (e.g. ‖ω‖² = P_BS from the SDP) is not
/// flagged by the last ulp.
const FEAS_SLACK: f64 = 1e-9;

/// Evaluates every constraint directly.
pub fn feasibility(cfg: &ScenarioConfig, ch: &ChannelSet, st: &OptState) -> Feasibility {
    let p_bs = cfg.power_bs_max_w();
    let p_ul = cfg.power_ul_max_w();
    let g_dl = sinr_dl(cfg, ch, st);
    let g_ul = sinr_ul(cfg, ch, st).unwrap_or(0.0);
    Feasibility {
        bs_power_ok: st.beamformer.norm_squared() <= p_bs * (1.0 + FEAS_SLACK),
        ul_power_ok: st.ul_power_w >= -0.0 && st.ul_power_w <= p_ul * (1.0 + FEAS_SLACK),
        qos_dl_ok: g_dl >= cfg.gamma_min_dl() * (1.0 - FEAS_SLACK),
        qos_ul_ok: g_ul >= cfg.gamma_min_ul() * (1.0 - FEAS_SLACK),
        tx_positions_ok: PositionSet::array_ok(&st.positions.tx, cfg),
        rx_positions_ok: PositionSet::array_ok(&st.positions.rx, cfg),
        ris_positions_ok: PositionSet::array_ok(&st.positions.ris, cfg),
    }
}

/// Everything a caller usually wants to know about an operating point.
#[derive(Debug, Clone, Copy)]
pub struct RateReport {
    pub sinr_dl: f64,
    pub sinr_ul: f64,
    pub rate_dl_bps_hz: f64,
    pub rate_ul_bps_hz: f64,
    pub sum_rate_bps_hz: f64,
    pub half_duplex_bps_hz: f64,
    pub feasibility: Feasibility,
}

impl RateReport {
    /// Column order used by [`RateReport::csv_record`].
    pub const CSV_HEADER: [&'static str; 7] = [
        "sinr_dl",
        "sinr_ul",
        "rate_dl_bps_hz",
        "rate_ul_bps_hz",
        "sum_rate_bps_hz",
        "half_duplex_bps_hz",
        "feasible",
    ];

    /// One CSV record in [`RateReport::CSV_HEADER`] order; floats use the
    /// shortest representation that parses back to the same bits.
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            format!("{}", self.sinr_dl),
            format!("{}", self.sinr_ul),
            format!("{}", self.rate_dl_bps_hz),
            format!("{}", self.rate_ul_bps_hz),
            format!("{}", self.sum_rate_bps_hz),
            format!("{}", self.half_duplex_bps_hz),
            format!("{}", self.feasibility.all()),
        ]
    }
}

/// Full evaluation of one operating point.
pub fn evaluate(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &OptState,
) -> Result<RateReport, StateError> {
    let g_dl = sinr_dl(cfg, ch, st);
    let g_ul = sinr_ul(cfg, ch, st)?;
    let r_dl = (1.0 + g_dl).log2();
    let r_ul = (1.0 + g_ul).log2();
    Ok(RateReport {
        sinr_dl: g_dl,
        sinr_ul: g_ul,
        rate_dl_bps_hz: r_dl,
        rate_ul_bps_hz: r_ul,
        sum_rate_bps_hz: r_dl + r_ul,
        half_duplex_bps_hz: half_duplex_rate(cfg, ch, st)?,
        feasibility: feasibility(cfg, ch, st),
    })
}

#[cfg(test)]
pub(crate) mod test_support {
    //! Random-but-reproducible operating points shared by tests across the
    //! crate. The implementations live in the audit module so integration
    //! tests can reach them too.

    pub use crate::oracle::random_point;
}
