//! Transmit-beamformer block: lifted semidefinite step with rank-one
//! recovery and auxiliary-multiplier refresh.
//!
//! At fixed multipliers the quadratic-transform surrogate is, in ω,
//! `2Re(ā·ω) − ωᴴQω` with `ā = √(1+ζ_DL)·β̄_DL·h_DL` and
//! `Q = η|β_UL|²·(Fᴴv)(Fᴴv)ᴴ`. Lifting `x = [ω; 1]`, `X = xxᴴ` makes the
//! surrogate and both QoS floors linear in `X`, giving a small SDP over
//! `X ⪰ 0` with a unit corner and the transmit power cap. The rank-one
//! constraint is recovered by a sequential rank-one constraint relaxation:
//! repeatedly re-solve with the row `uᴴXu ≥ m·tr(X)` (u the current
//! principal eigenvector), pushing `m` toward 1 and backing off by thirds
//! when a push is infeasible.
//!
//! The recovered direction is then polished by a 1-D scaling search over
//! its exact feasible interval, and the whole step is wrapped in a few
//! refresh rounds of the multipliers, keeping the best true-rate iterate.

use crate::channel::ChannelSet;
use crate::kernels::eig::dominant_eigpair;
use crate::kernels::sdp::{self, HermitianSdp, SdpConstraint, SdpStatus, Sense};
use crate::metrics::{
    OptState, StateError, dl_leak, effective_dl_row, effective_loopback, effective_ul_col,
};
use crate::scenario::ScenarioConfig;
use crate::subproblems::{FpMultipliers, SinrTerms, true_rate};
use crate::{C64, CMat, CVec};

/// The QoS floors admit no beamformer at this operating point (the relaxed
/// problem is already infeasible).
#[derive(Debug, Clone, Copy)]
pub struct QosInfeasible;

/// One multiplier-fixed beamformer step.
#[derive(Debug, Clone)]
pub struct LiftedStep {
    /// Feasible beamformer after rank-one recovery and scale polish.
    pub omega: CVec,
    /// Rank-recovery iterations actually used.
    pub srocr_iterations: usize,
    /// λmax/tr of the final lifted matrix (1 = exactly rank one).
    pub rank_ratio: f64,
    /// Surrogate objective of the relaxation — an upper bound on any
    /// rank-one surrogate value.
    pub sdr_bound: f64,
    /// Surrogate objective of the recovered (pre-polish) beamformer.
    pub surrogate_value: f64,
}

/// Outcome summary of [`update_beamformer`].
#[derive(Debug, Clone, Copy)]
pub struct BeamformingReport {
    pub improved: bool,
    /// False when the QoS floors were certified unreachable and the
    /// beamformer was left unchanged.
    pub qos_feasible: bool,
    pub fp_rounds: usize,
    pub srocr_iterations: usize,
    pub rank_ratio: f64,
}

/// Channel-side quantities of the lifted problem, reused by the polish.
struct LiftedData {
    h_dl: crate::CRow,
    fv: CVec,
    b_dl_base: f64,
    ul_sig: f64,
    sigma2_vnorm: f64,
    eta: f64,
}

fn lifted_data(cfg: &ScenarioConfig, ch: &ChannelSet, st: &OptState) -> LiftedData {
    let phases = st.phase_factors();
    let h_dl = effective_dl_row(ch, &phases);
    let fv = effective_loopback(ch, &phases).adjoint() * &st.combiner;
    let b_dl_base =
        st.ul_power_w * dl_leak(ch, &phases).norm_sqr() + cfg.noise_power_w();
    let va = st.combiner.dotc(&effective_ul_col(ch, &phases));
    LiftedData {
        h_dl,
        fv,
        b_dl_base,
        ul_sig: st.ul_power_w * va.norm_sqr(),
        sigma2_vnorm: cfg.noise_power_w() * st.combiner.norm_squared(),
        eta: cfg.si_residual,
    }
}

/// Builds the lifted SDP: objective + corner + power (+ active QoS rows).
fn lifted_problem(cfg: &ScenarioConfig, data: &LiftedData, aux: &FpMultipliers) -> HermitianSdp {
    let m = data.h_dl.len();
    let dim = m + 1;

    let abar: crate::CRow =
        &data.h_dl * (aux.beta_dl.conj() * C64::new((1.0 + aux.zeta_dl).sqrt(), 0.0));
    let q: CMat = (&data.fv * data.fv.adjoint())
        * C64::new(data.eta * aux.beta_ul.norm_sqr(), 0.0);
    let mut objective = CMat::zeros(dim, dim);
    objective.view_mut((0, 0), (m, m)).copy_from(&(-q));
    for i in 0..m {
        objective[(i, m)] = abar[i].conj();
        objective[(m, i)] = abar[i];
    }

    let mut corner = CMat::zeros(dim, dim);
    corner[(m, m)] = C64::new(1.0, 0.0);
    let mut power = CMat::zeros(dim, dim);
    for i in 0..m {
        power[(i, i)] = C64::new(1.0, 0.0);
    }
    let mut constraints = vec![
        SdpConstraint { matrix: corner, bound: 1.0, sense: Sense::Equal },
        SdpConstraint { matrix: power, bound: cfg.power_bs_max_w(), sense: Sense::LessEq },
    ];
    if cfg.gamma_min_dl() > 0.0 {
        let mut e = CMat::zeros(dim, dim);
        e.view_mut((0, 0), (m, m))
            .copy_from(&(data.h_dl.adjoint() * &data.h_dl));
        constraints.push(SdpConstraint {
            matrix: e,
            bound: cfg.gamma_min_dl() * data.b_dl_base,
            sense: Sense::GreaterEq,
        });
    }
    if cfg.gamma_min_ul() > 0.0 {
        let mut e = CMat::zeros(dim, dim);
        e.view_mut((0, 0), (m, m)).copy_from(
            &((&data.fv * data.fv.adjoint())
                * C64::new(-cfg.gamma_min_ul() * data.eta, 0.0)),
        );
        constraints.push(SdpConstraint {
            matrix: e,
            bound: cfg.gamma_min_ul() * data.sigma2_vnorm - data.ul_sig,
            sense: Sense::GreaterEq,
        });
    }
    HermitianSdp { objective, constraints }
}

/// Surrogate objective 2Re(ā·ω) − ωᴴQω of a concrete beamformer (equals
/// the lifted objective at X = [ω;1][ω;1]ᴴ).
fn surrogate_of(problem: &HermitianSdp, omega: &CVec) -> f64 {
    let m = omega.len();
    let mut x = CVec::zeros(m + 1);
    for i in 0..m {
        x[i] = omega[i];
    }
    x[m] = C64::new(1.0, 0.0);
    (x.adjoint() * &problem.objective * &x)[(0, 0)].re
}

fn rank_ratio(w: &CMat) -> (f64, CVec, f64) {
    let (lam, u) = dominant_eigpair(w);
    let tr = w.trace().re;
    (if tr > 0.0 { lam / tr } else { 1.0 }, u, lam)
}

/// 1-D polish: rescale the recovered direction over its exact feasible
/// scaling interval, maximizing the true rate curve.
fn polish_scale(cfg: &ScenarioConfig, data: &LiftedData, omega: &CVec) -> CVec {
    let norm_sq = omega.norm_squared();
    if norm_sq == 0.0 {
        return omega.clone();
    }
    let s_d2 = (&data.h_dl * omega)[(0, 0)].norm_sqr();
    let si2 = data.eta * data.fv.dotc(omega).norm_sqr();
    let p_bs = cfg.power_bs_max_w();

    // Feasible interval in x = t².
    let mut x_lo: f64 = 0.0;
    let mut x_hi = p_bs / norm_sq;
    let g_dl_min = cfg.gamma_min_dl();
    if g_dl_min > 0.0 {
        if s_d2 > 0.0 {
            x_lo = x_lo.max(g_dl_min * data.b_dl_base / s_d2);
        } else {
            x_lo = f64::INFINITY;
        }
    }
    let g_ul_min = cfg.gamma_min_ul();
    if g_ul_min > 0.0 {
        let rhs = data.ul_sig - g_ul_min * data.sigma2_vnorm;
        if rhs < 0.0 {
            x_lo = f64::INFINITY; // uplink floor unreachable at any scale
        } else if si2 > 0.0 {
            x_hi = x_hi.min(rhs / (g_ul_min * si2));
        }
    }
    if x_lo > x_hi {
        // No feasible scale: return power-clamped as-is.
        let t = (p_bs / norm_sq).sqrt().min(1.0);
        return omega * C64::new(t, 0.0);
    }

    let rate_at = |x: f64| -> f64 {
        (1.0 + x * s_d2 / data.b_dl_base).log2()
            + (1.0 + data.ul_sig / (x * si2 + data.sigma2_vnorm)).log2()
    };
    let mut best_x = x_lo;
    let mut best_r = rate_at(x_lo);
    let steps = 64;
    for i in 0..=steps {
        let x = x_lo + (x_hi - x_lo) * i as f64 / steps as f64;
        let r = rate_at(x);
        if r > best_r {
            best_r = r;
            best_x = x;
        }
    }
    if (x_lo..=x_hi).contains(&1.0) && rate_at(1.0) >= best_r {
        best_x = 1.0;
    }
    omega * C64::new(best_x.sqrt(), 0.0)
}

/// One beamformer step at fixed multipliers: relax, recover rank one,
/// polish. Errors when the relaxation is infeasible (QoS floors
/// unreachable).
pub fn beamformer_step(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &OptState,
    aux: &FpMultipliers,
) -> Result<LiftedStep, QosInfeasible> {
    let data = lifted_data(cfg, ch, st);
    let base = lifted_problem(cfg, &data, aux);
    let relaxed = sdp::solve(&base, cfg.solver.sdp_tol);
    if relaxed.status != SdpStatus::Optimal {
        return Err(QosInfeasible);
    }
    let sdr_bound = relaxed.objective;
    let mut w = relaxed.matrix;
    let (mut ratio, mut u, _) = rank_ratio(&w);
    let mut delta = 0.5 * (1.0 - ratio);
    let mut iterations = 0;
    while ratio < 1.0 - cfg.solver.srocr_tol
        && iterations < cfg.solver.srocr_max_iterations
        && delta > 1e-14
    {
        iterations += 1;
        let m_target = (ratio + delta).min(1.0);
        let dim = w.nrows();
        let mut rank_matrix = &u * u.adjoint();
        for i in 0..dim {
            rank_matrix[(i, i)] -= C64::new(m_target, 0.0);
        }
        let mut tightened = base.clone();
        tightened.constraints.push(SdpConstraint {
            matrix: rank_matrix,
            bound: 0.0,
            sense: Sense::GreaterEq,
        });
        let sol = sdp::solve(&tightened, cfg.solver.sdp_tol);
        if sol.status == SdpStatus::Optimal {
            w = sol.matrix;
            let (r, uu, _) = rank_ratio(&w);
            ratio = r;
            u = uu;
        } else {
            delta /= 3.0;
        }
    }

    // Recover ω from the principal component, normalizing the corner to 1.
    let m = cfg.tx_antennas;
    let (_, u_fin, lam) = rank_ratio(&w);
    let corner = u_fin[m];
    let mut omega = CVec::from_fn(m, |i, _| u_fin[i]);
    if corner.norm() > 1e-12 {
        omega /= corner;
    } else {
        omega *= C64::new(lam.max(0.0).sqrt(), 0.0);
    }
    // Exact power feasibility before polishing.
    let pn = omega.norm_squared();
    if pn > cfg.power_bs_max_w() {
        omega *= C64::new((cfg.power_bs_max_w() / pn).sqrt(), 0.0);
    }
    let surrogate_value = surrogate_of(&base, &omega);
    let polished = polish_scale(cfg, &data, &omega);
    Ok(LiftedStep {
        omega: polished,
        srocr_iterations: iterations,
        rank_ratio: ratio,
        sdr_bound,
        surrogate_value,
    })
}

/// Full beamformer block: a few multiplier-refresh rounds around
/// [`beamformer_step`], keeping the best true-rate iterate.
pub fn update_beamformer(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    st: &mut OptState,
) -> Result<BeamformingReport, StateError> {
    let start_rate = true_rate(cfg, ch, st)?;
    let mut best_rate = start_rate;
    let mut best_omega = st.beamformer.clone();
    let mut report = BeamformingReport {
        improved: false,
        qos_feasible: true,
        fp_rounds: 0,
        srocr_iterations: 0,
        rank_ratio: 1.0,
    };
    for _round in 0..cfg.solver.fp_refresh_rounds {
        report.fp_rounds += 1;
        let terms = SinrTerms::compute(cfg, ch, st)?;
        let aux = FpMultipliers::optimal(&terms);
        match beamformer_step(cfg, ch, st, &aux) {
            Ok(step) => {
                report.srocr_iterations += step.srocr_iterations;
                report.rank_ratio = step.rank_ratio;
                st.beamformer = step.omega;
                let rate = true_rate(cfg, ch, st)?;
                let gained = rate - best_rate;
                if rate > best_rate {
                    best_rate = rate;
                    best_omega = st.beamformer.clone();
                }
                if gained <= 1e-9 * (1.0 + best_rate.abs()) {
                    break; // refresh has converged (or stopped helping)
                }
            }
            Err(QosInfeasible) => {
                report.qos_feasible = false;
                break;
            }
        }
    }
    st.beamformer = best_omega;
    report.improved = best_rate > start_rate;
    Ok(report)
}
