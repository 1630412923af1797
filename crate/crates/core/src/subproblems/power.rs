//! Uplink-power block: exact optimum over the feasible interval.
//!
//! With everything else fixed the two SINRs are γ_DL(p) = S/(c₂p + c₃)
//! (falling) and γ_UL(p) = c₄·p (rising), so the QoS constraints carve the
//! interval [γmin_UL/c₄, (S/γmin_DL − c₃)/c₂] ∩ [0, P_max]. The sum-rate
//! derivative has the sign of a quadratic that is increasing on p ≥ 0,
//! which makes the rate first fall then rise: the maximum sits at one of
//! the two interval endpoints, so the update just compares them. An empty
//! interval is flagged and answered with the least-violating power.

use crate::channel::ChannelSet;
use crate::metrics::{
    OptState, StateError, dl_leak, effective_dl_row, effective_loopback, effective_ul_col,
};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, Copy)]
pub struct PowerReport {
    pub changed: bool,
    /// False when no power level can satisfy both QoS floors.
    pub feasible: bool,
}

/// Rate curve coefficients at fixed non-power variables:
/// γ_DL = s/(c2·p + c3), γ_UL = c4·p.
struct PowerCurve {
    s: f64,
    c2: f64,
    c3: f64,
    c4: f64,
}

impl PowerCurve {
    fn rate(&self, p: f64) -> f64 {
        (1.0 + self.s / (self.c2 * p + self.c3)).log2() + (1.0 + self.c4 * p).log2()
    }
}

fn curve(cfg: &ScenarioConfig, ch: &ChannelSet, st: &OptState) -> Result<PowerCurve, StateError> {
    let v_norm_sq = st.combiner.norm_squared();
    if v_norm_sq == 0.0 {
        return Err(StateError::ZeroCombiner);
    }
    let phases = st.phase_factors();
    let sigma2 = cfg.noise_power_w();
    let s = (effective_dl_row(ch, &phases) * &st.beamformer)[(0, 0)].norm_sqr();
    let c2 = dl_leak(ch, &phases).norm_sqr();
    let ul_gain = st.combiner.dotc(&effective_ul_col(ch, &phases)).norm_sqr();
    let loop_pow = st
        .combiner
        .dotc(&(effective_loopback(ch, &phases) * &st.beamformer))
        .norm_sqr();
    let c4 = ul_gain / (cfg.si_residual * loop_pow + sigma2 * v_norm_sq);
    Ok(PowerCurve { s, c2, c3: sigma2, c4 })
}

/// Sets the uplink power to the best feasible value.
pub fn update_power(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &mut OptState,
) -> Result<PowerReport, StateError> {
    let cv = curve(cfg, ch, st)?;
    let p_max = cfg.power_ul_max_w();
    let g_dl_min = cfg.gamma_min_dl();
    let g_ul_min = cfg.gamma_min_ul();

    // Lower endpoint from the uplink floor.
    let lo = if g_ul_min <= 0.0 {
        0.0
    } else if cv.c4 > 0.0 {
        g_ul_min / cv.c4
    } else {
        f64::INFINITY
    };
    // Upper endpoint from the downlink floor.
    let hi = if g_dl_min <= 0.0 {
        p_max
    } else {
        let headroom = cv.s / g_dl_min - cv.c3;
        if headroom < 0.0 {
            f64::NEG_INFINITY
        } else if cv.c2 > 0.0 {
            (headroom / cv.c2).min(p_max)
        } else {
            p_max
        }
    };
    let lo_cl = lo.max(0.0);
    let hi_cl = hi.min(p_max);

    let old = st.ul_power_w;
    if lo_cl <= hi_cl && lo_cl <= p_max {
        // Endpoint comparison is exact here (rate is valley-shaped in p).
        let r_lo = cv.rate(lo_cl);
        let r_hi = cv.rate(hi_cl);
        st.ul_power_w = if r_hi >= r_lo { hi_cl } else { lo_cl };
        Ok(PowerReport { changed: st.ul_power_w != old, feasible: true })
    } else {
        // No feasible power: pick the least-violating deterministic choice.
        let fallback = if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if hi.is_finite() {
            hi.max(0.0)
        } else if lo.is_finite() {
            lo
        } else {
            old
        };
        st.ul_power_w = fallback.clamp(0.0, p_max);
        Ok(PowerReport { changed: st.ul_power_w != old, feasible: false })
    }
}
