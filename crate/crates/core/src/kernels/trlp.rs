//! Trust-region LP: maximize a linear objective over linear inequality rows,
//! a coordinate box and one Euclidean ball around a center point.
//!
//! This is the step computation of every linearized subproblem: the objective
//! is the local gradient, the rows are linearized constraints, the box is the
//! feasible region / phase range, and the ball is the trust region. The
//! solver is a primal-dual interior-point method that keeps the ball as a
//! single quadratic slack row, so each Newton step costs one d×d Cholesky
//! (d = number of variables):
//!
//! ```text
//! [AᵀS⁻¹ZA + ρI + (ρ/t)·yyᵀ]·dy = rhs
//! ```
//!
//! with s/z the row slacks/multipliers and t/ρ the ball slack/multiplier.
//! Row infeasibility inside the ball is certified by the separating
//! condition −z̄ᵀb > Δ‖Aᵀz̄‖₂ for normalized multipliers z̄ (a maximin
//! argument over the ball), which the schedule checks every iteration.
//!
//! A returned `Optimal` point satisfies the box and ball exactly (a final
//! clamp repairs the residual-level slack the infeasible-start method
//! leaves) and the rows to the solve tolerance; callers that need exact row
//! feasibility re-validate the candidate and treat a failure as a rejected
//! step. The solver never returns a point with a lower objective than the
//! center.

use crate::{RMat, RVec};

/// One linear constraint `coeffs·x ≥ bound` in the caller's coordinates.
#[derive(Debug, Clone)]
pub struct LinearRow {
    pub coeffs: RVec,
    pub bound: f64,
}

/// Problem data in the caller's coordinates: maximize `gradient·x` subject
/// to the rows, `lower ≤ x ≤ upper` (entries may be ±∞) and
/// `‖x − center‖₂ ≤ radius`.
#[derive(Debug, Clone)]
pub struct TrustRegionLp {
    pub gradient: RVec,
    pub rows: Vec<LinearRow>,
    pub lower: RVec,
    pub upper: RVec,
    pub center: RVec,
    pub radius: f64,
}

/// Outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrlpStatus {
    /// Solved to tolerance; `x` is strictly feasible.
    Optimal,
    /// The rows (plus box) admit no point inside the ball; `x` is the
    /// center.
    InfeasibleRows,
    /// Iteration cap hit without a certified answer; `x` is the center.
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct TrlpSolution {
    pub status: TrlpStatus,
    pub x: RVec,
    /// Objective improvement `gradient·(x − center)`; never negative.
    pub gain: f64,
    pub iterations: usize,
}

const MAX_ITER: usize = 100;

/// Solves the trust-region LP. `tol` is the relative residual /
/// complementarity target (1e-8 is a good default).
pub fn solve_tr_lp(p: &TrustRegionLp, tol: f64) -> TrlpSolution {
    let d = p.gradient.len();
    let center_out = |status, iterations| TrlpSolution {
        status,
        x: p.center.clone(),
        gain: 0.0,
        iterations,
    };
    if p.radius <= 0.0 {
        return center_out(TrlpStatus::Optimal, 0);
    }
    let c_scale = p.gradient.amax();
    if c_scale == 0.0 || !c_scale.is_finite() {
        return center_out(TrlpStatus::Optimal, 0);
    }
    let c = &p.gradient / c_scale;

    // Assemble ≤-rows over the shifted variable y = x − center:
    //   caller rows  a·x ≥ b   →  −a·y ≤ −(b − a·center)
    //   upper bounds x_i ≤ u   →   e_i·y ≤ u_i − center_i
    //   lower bounds x_i ≥ l   →  −e_i·y ≤ center_i − l_i
    let mut a_rows: Vec<RVec> = Vec::new();
    let mut b_vals: Vec<f64> = Vec::new();
    for row in &p.rows {
        let shifted = row.bound - row.coeffs.dot(&p.center);
        let norm = row.coeffs.amax();
        if norm <= 1e-300 {
            if shifted > 0.0 {
                // 0 ≥ positive: unfixable by this block.
                return center_out(TrlpStatus::InfeasibleRows, 0);
            }
            continue; // vacuous
        }
        a_rows.push(-&row.coeffs / norm);
        b_vals.push(-shifted / norm);
    }
    for i in 0..d {
        if p.upper[i].is_finite() {
            let mut e = RVec::zeros(d);
            e[i] = 1.0;
            a_rows.push(e);
            b_vals.push(p.upper[i] - p.center[i]);
        }
        if p.lower[i].is_finite() {
            let mut e = RVec::zeros(d);
            e[i] = -1.0;
            a_rows.push(e);
            b_vals.push(p.center[i] - p.lower[i]);
        }
    }
    let m = a_rows.len();
    let radius = p.radius;

    if m == 0 {
        // Ball-only: the maximizer is the center pushed along the gradient.
        let y = &c * (radius / c.norm());
        let x = &p.center + &y;
        let gain = p.gradient.dot(&y);
        return TrlpSolution {
            status: TrlpStatus::Optimal,
            x,
            gain: gain.max(0.0),
            iterations: 0,
        };
    }

    let a_mat = RMat::from_fn(m, d, |r, cidx| a_rows[r][cidx]);
    let b = RVec::from_iterator(m, b_vals.iter().cloned());
    let b_scale = 1.0 + b.amax();

    // Interior start: center (y = 0), padded slacks, unit multipliers.
    let mut y = RVec::zeros(d);
    let slack_floor = 0.01 * b_scale;
    let mut s = RVec::from_iterator(m, b.iter().map(|&bi| bi.max(slack_floor)));
    let mut z = RVec::from_element(m, 1.0);
    let mut t = 0.5 * radius * radius;
    let mut rho = (1.0 + s.dot(&z) / m as f64) / t;

    let mut iterations = 0;
    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        let ay = &a_mat * &y;
        let rp = &b - &ay - &s;
        let rb = 0.5 * radius * radius - 0.5 * y.norm_squared() - t;
        let rd = &c - a_mat.transpose() * &z - &y * rho;
        let mu = (s.dot(&z) + t * rho) / (m as f64 + 1.0);
        let obj = c.dot(&y);

        // Convergence test.
        if rp.amax() <= tol * b_scale
            && rb.abs() <= tol * (1.0 + radius * radius)
            && rd.amax() <= tol * (1.0 + c.amax())
            && mu <= tol * (1.0 + obj.abs())
        {
            return finish(p, &c, c_scale, y, TrlpStatus::Optimal, iterations);
        }

        // Farkas-style certificate: a nonnegative row combination whose
        // minimum over the ball exceeds its bound proves the rows cannot
        // all hold inside the ball, for any multiplier choice.
        let z_sum: f64 = z.iter().sum();
        if z_sum > 1e-12 {
            let zbar = &z / z_sum;
            let atz = a_mat.transpose() * &zbar;
            let lhs = -b.dot(&zbar);
            let rhs = radius * atz.norm();
            if lhs > rhs + 1e-9 * (1.0 + rhs) {
                return TrlpSolution {
                    status: TrlpStatus::InfeasibleRows,
                    x: p.center.clone(),
                    gain: 0.0,
                    iterations,
                };
            }
        }

        // Predictor (affine scaling) direction.
        let (_dy_a, ds_a, dz_a, dt_a, drho_a) = match newton_step(
            &a_mat, &y, &s, &z, t, rho, &rp, rb, &rd,
            &RVec::from_iterator(m, s.iter().zip(z.iter()).map(|(&si, &zi)| -si * zi)),
            -t * rho,
        ) {
            Some(step) => step,
            None => break,
        };
        // The ball couples y into the dual residual (ρ·y term), so primal
        // and dual must move with one common step length.
        let (ap_a, ad_a) = step_lengths(&s, &ds_a, &z, &dz_a, t, dt_a, rho, drho_a, 1.0);
        let alpha_a = ap_a.min(ad_a);
        let mu_aff = ((&s + &ds_a * alpha_a).dot(&(&z + &dz_a * alpha_a))
            + (t + alpha_a * dt_a) * (rho + alpha_a * drho_a))
            / (m as f64 + 1.0);
        let sigma = (mu_aff / mu).powi(3).clamp(1e-10, 0.999);

        // Corrector with Mehrotra second-order terms.
        let rcs = RVec::from_iterator(
            m,
            (0..m).map(|i| sigma * mu - s[i] * z[i] - ds_a[i] * dz_a[i]),
        );
        let rct = sigma * mu - t * rho - dt_a * drho_a;
        let (dy, ds, dz, dt, drho) =
            match newton_step(&a_mat, &y, &s, &z, t, rho, &rp, rb, &rd, &rcs, rct) {
                Some(step) => step,
                None => break,
            };
        let tau = if iter < 3 { 0.9 } else { 0.99 };
        let (ap, ad) = step_lengths(&s, &ds, &z, &dz, t, dt, rho, drho, tau);
        let alpha = ap.min(ad);
        if alpha <= 1e-15 {
            break;
        }

        y += &dy * alpha;
        s += &ds * alpha;
        t += alpha * dt;
        z += &dz * alpha;
        rho += alpha * drho;
        t = t.max(1e-300);
        rho = rho.max(1e-300);
    }

    // No certified answer: fall back to no-step (the caller treats this as
    // "shrink the trust region and retry").
    center_out(TrlpStatus::MaxIterations, iterations)
}

/// Solves the condensed Newton system for one target right-hand side.
#[allow(clippy::too_many_arguments)]
fn newton_step(
    a_mat: &RMat,
    y: &RVec,
    s: &RVec,
    z: &RVec,
    t: f64,
    rho: f64,
    rp: &RVec,
    rb: f64,
    rd: &RVec,
    rcs: &RVec,
    rct: f64,
) -> Option<(RVec, RVec, RVec, f64, f64)> {
    let (m, d) = a_mat.shape();
    // M = AᵀS⁻¹ZA + ρI + (ρ/t)yyᵀ
    let mut big = RMat::zeros(d, d);
    for i in 0..m {
        let w = z[i] / s[i];
        let row = a_mat.row(i);
        for p in 0..d {
            let wp = w * row[p];
            for q in p..d {
                big[(p, q)] += wp * row[q];
            }
        }
    }
    let rt = rho / t;
    for p in 0..d {
        big[(p, p)] += rho;
        for q in p..d {
            big[(p, q)] += rt * y[p] * y[q];
            big[(q, p)] = big[(p, q)];
        }
    }
    // rhs = rd − AᵀS⁻¹(rcs − Z·rp) − y·(rct − ρ·rb)/t
    let mut rhs = rd.clone();
    let inner = RVec::from_iterator(m, (0..m).map(|i| (rcs[i] - z[i] * rp[i]) / s[i]));
    rhs -= a_mat.transpose() * inner;
    rhs -= y * ((rct - rho * rb) / t);

    let dy = match big.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            // Tiny regularization rescue for nearly-singular systems.
            let bump = 1e-12 * (1.0 + big.trace().abs());
            for p in 0..d {
                big[(p, p)] += bump;
            }
            big.cholesky()?.solve(&rhs)
        }
    };
    let ds = rp - a_mat * &dy;
    let dz = RVec::from_iterator(m, (0..m).map(|i| (rcs[i] - z[i] * ds[i]) / s[i]));
    let dt = rb - y.dot(&dy);
    let drho = (rct - rho * dt) / t;
    Some((dy, ds, dz, dt, drho))
}

/// Fraction-to-boundary step lengths for the primal (s, t) and dual (z, ρ)
/// blocks.
#[allow(clippy::too_many_arguments)]
fn step_lengths(
    s: &RVec,
    ds: &RVec,
    z: &RVec,
    dz: &RVec,
    t: f64,
    dt: f64,
    rho: f64,
    drho: f64,
    tau: f64,
) -> (f64, f64) {
    let mut ap = 1.0f64;
    let mut ad = 1.0f64;
    for i in 0..s.len() {
        if ds[i] < 0.0 {
            ap = ap.min(-s[i] / ds[i]);
        }
        if dz[i] < 0.0 {
            ad = ad.min(-z[i] / dz[i]);
        }
    }
    if dt < 0.0 {
        ap = ap.min(-t / dt);
    }
    if drho < 0.0 {
        ad = ad.min(-rho / drho);
    }
    ((tau * ap).min(1.0), (tau * ad).min(1.0))
}

fn finish(
    p: &TrustRegionLp,
    c: &RVec,
    c_scale: f64,
    mut y: RVec,
    status: TrlpStatus,
    iterations: usize,
) -> TrlpSolution {
    // The infeasible-start method only drives residuals to tolerance, so
    // enforce the geometry exactly: clamp into the (shifted) box, then
    // scale into the ball. The shifted box contains the origin and scaling
    // moves toward the center, so neither repair can break the other.
    for i in 0..y.len() {
        let lo = (p.lower[i] - p.center[i]).min(0.0);
        let hi = (p.upper[i] - p.center[i]).max(0.0);
        y[i] = y[i].clamp(lo, hi);
    }
    let norm = y.norm();
    if norm > p.radius {
        y *= p.radius / norm;
    }
    let gain_scaled = c.dot(&y);
    if gain_scaled <= 0.0 {
        // Never worse than staying put.
        return TrlpSolution {
            status,
            x: p.center.clone(),
            gain: 0.0,
            iterations,
        };
    }
    TrlpSolution {
        status,
        x: &p.center + &y,
        gain: gain_scaled * c_scale,
        iterations,
    }
}
