//! Small dense Hermitian semidefinite programming solver.
//!
//! Solves `maximize Re tr(C·W)` over Hermitian PSD matrices `W` subject to
//! linear trace constraints `Re tr(A_i·W) {=, ≤, ≥} b_i`. This is the exact
//! shape of the lifted beamforming step, whose matrix dimension stays below
//! ~10, so a dense method is the right tool.
//!
//! The complex problem is mapped to a real symmetric one through the
//! standard embedding `[[Re M, −Im M], [Im M, Re M]]` (which doubles trace
//! inner products), inequality senses become diagonal slack slots appended
//! to the embedded block, and the resulting equality-form SDP is solved
//! with a predictor-corrector interior-point method using the HKM search
//! direction and a dense Schur complement. Primal infeasibility and
//! unboundedness are certified through normalized dual / primal rays rather
//! than guessed from stagnation.

use nalgebra::Complex;

use crate::{C64, CMat, RMat, RVec};

/// Constraint sense for one trace row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Equal,
    LessEq,
    GreaterEq,
}

/// One constraint `Re tr(matrix·W) sense bound`. The matrix is treated as
/// Hermitian (its Hermitian part is used).
#[derive(Debug, Clone)]
pub struct SdpConstraint {
    pub matrix: CMat,
    pub bound: f64,
    pub sense: Sense,
}

/// `maximize Re tr(objective·W)` subject to the constraints and `W ⪰ 0`.
#[derive(Debug, Clone)]
pub struct HermitianSdp {
    pub objective: CMat,
    pub constraints: Vec<SdpConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// The constraint set admits no PSD matrix (dual ray certificate).
    Infeasible,
    /// The objective can be driven to +∞ (primal ray certificate).
    Unbounded,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Recovered Hermitian PSD matrix (zero unless `Optimal`/`MaxIterations`).
    pub matrix: CMat,
    /// `Re tr(objective·matrix)` of the returned matrix.
    pub objective: f64,
    pub iterations: usize,
}

const MAX_ITER: usize = 100;

/// Real symmetric embedding of a Hermitian matrix; doubles inner products:
/// `⟨embed(A), embed(W)⟩ = 2·Re tr(A·W)`.
fn embed(a: &CMat) -> RMat {
    let n = a.nrows();
    let mut out = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            out[(i, j)] = v.re;
            out[(i + n, j + n)] = v.re;
            out[(i, j + n)] = -v.im;
            out[(i + n, j)] = v.im;
        }
    }
    out
}

fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * Complex::new(0.5, 0.0)
}

/// Recovers the Hermitian matrix from the dense block of the big real
/// iterate: averaging the two real copies projects onto embedding-symmetric
/// form without changing any constraint or objective value.
fn recover(x: &RMat, n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
        let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
        C64::new(re, im)
    })
}

fn inner(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest step α keeping `mat + α·dir` positive semidefinite (∞ if every
/// step works), via the eigenvalues of the Cholesky-whitened direction.
fn max_step(mat: &RMat, dir: &RMat) -> f64 {
    let chol = match mat.clone().cholesky() {
        Some(c) => c,
        None => {
            let bump = 1e-12 * (1.0 + mat.trace().abs());
            let mut m = mat.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += bump;
            }
            match m.cholesky() {
                Some(c) => c,
                None => return 0.0,
            }
        }
    };
    let li = match chol.l().try_inverse() {
        Some(li) => li,
        None => return 0.0,
    };
    let g = &li * dir * li.transpose();
    let gs = (&g + g.transpose()) * 0.5;
    let lam_min = gs
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if lam_min >= -1e-14 {
        f64::INFINITY
    } else {
        -1.0 / lam_min
    }
}

/// Solves the SDP to relative tolerance `tol` (primal/dual residuals and
/// duality gap). 1e-7 is a good default.
pub fn solve(problem: &HermitianSdp, tol: f64) -> SdpSolution {
    let n = problem.objective.nrows();
    let c_orig = hermitian_part(&problem.objective);
    let m = problem.constraints.len();

    if m == 0 {
        // Unconstrained: unbounded iff the objective has a positive
        // direction, else W = 0 is optimal.
        let ce = embed(&c_orig);
        let lam_max = ce
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let status = if lam_max > 1e-12 * (1.0 + ce.norm()) {
            SdpStatus::Unbounded
        } else {
            SdpStatus::Optimal
        };
        return SdpSolution {
            status,
            matrix: CMat::zeros(n, n),
            objective: 0.0,
            iterations: 0,
        };
    }

    // Build the big real equality-form data: dense 2n block plus one slack
    // diagonal slot per inequality. Internally we *minimize* ⟨C_int, X⟩.
    let q = problem
        .constraints
        .iter()
        .filter(|c| c.sense != Sense::Equal)
        .count();
    let big = 2 * n + q;
    let mut a_mats: Vec<RMat> = Vec::with_capacity(m);
    let mut b = RVec::zeros(m);
    let mut slot = 2 * n;
    for (k, con) in problem.constraints.iter().enumerate() {
        let e = embed(&hermitian_part(&con.matrix));
        let mut a = RMat::zeros(big, big);
        a.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&e);
        match con.sense {
            Sense::Equal => {}
            Sense::LessEq => {
                a[(slot, slot)] = 1.0;
                slot += 1;
            }
            Sense::GreaterEq => {
                a[(slot, slot)] = -1.0;
                slot += 1;
            }
        }
        let norm = a.norm().max(1e-12);
        a /= norm;
        b[k] = 2.0 * con.bound / norm;
        a_mats.push(a);
    }
    let ce = embed(&c_orig);
    let c_scale = ce.norm().max(1e-12);
    let mut c_int = RMat::zeros(big, big);
    c_int
        .view_mut((0, 0), (2 * n, 2 * n))
        .copy_from(&(-&ce / c_scale));

    let nb = big as f64;
    let b_scale = 1.0 + b.amax();
    let c_norm = 1.0 + c_int.norm();

    // Scaled-identity interior start.
    let xi = (10.0_f64).max(nb.sqrt()).max(nb.sqrt() * b.amax());
    let eta = (10.0_f64).max(nb.sqrt());
    let mut x = RMat::identity(big, big) * xi;
    let mut z = RMat::identity(big, big) * eta;
    let mut y = RVec::zeros(m);
    let tr_x0 = x.trace();

    let adjoint = |yv: &RVec| -> RMat {
        let mut s = RMat::zeros(big, big);
        for i in 0..m {
            s += &a_mats[i] * yv[i];
        }
        s
    };

    let mut iterations = 0;
    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        let rp = RVec::from_fn(m, |i, _| b[i] - inner(&a_mats[i], &x));
        let rd = &c_int - &z - adjoint(&y);
        let mu = inner(&x, &z) / nb;
        let pobj = inner(&c_int, &x);
        let dobj = b.dot(&y);

        let rel_p = rp.amax() / b_scale;
        let rel_d = rd.norm() / c_norm;
        let rel_g = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if rel_p <= tol && rel_d <= tol && rel_g <= tol {
            let w = recover(&x, n);
            let objective = (&c_orig * &w).trace().re;
            return SdpSolution {
                status: SdpStatus::Optimal,
                matrix: w,
                objective,
                iterations,
            };
        }

        // Dual ray ⇒ primal infeasible: A*(ŷ) ⪯ ε with b·ŷ > ε.
        let y_norm = y.norm();
        if y_norm > 1e3 {
            let yhat = &y / y_norm;
            let sray = -adjoint(&yhat);
            let lam_min = sray
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if b.dot(&yhat) > 1e-7 * b_scale && lam_min >= -1e-7 {
                return SdpSolution {
                    status: SdpStatus::Infeasible,
                    matrix: CMat::zeros(n, n),
                    objective: 0.0,
                    iterations,
                };
            }
        }
        // Primal ray ⇒ unbounded: A(X̂) ≈ 0 with ⟨C_int, X̂⟩ < 0.
        let tr_x = x.trace();
        if tr_x > 1e6 * tr_x0 {
            let xhat = &x / tr_x;
            let feas_ray = (0..m).all(|i| inner(&a_mats[i], &xhat).abs() <= 1e-6);
            if feas_ray && inner(&c_int, &xhat) <= -1e-8 {
                return SdpSolution {
                    status: SdpStatus::Unbounded,
                    matrix: CMat::zeros(n, n),
                    objective: 0.0,
                    iterations,
                };
            }
        }

        let z_chol = match z.clone().cholesky() {
            Some(c) => c,
            None => break,
        };
        let z_inv = z_chol.inverse();

        // Schur complement M_ij = ⟨A_i, Z⁻¹A_jX⟩, symmetrized for Cholesky.
        let t_mats: Vec<RMat> = a_mats.iter().map(|a| &z_inv * a * &x).collect();
        let mut schur = RMat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                schur[(i, j)] = inner(&a_mats[i], &t_mats[j]);
            }
        }
        let schur = (&schur + schur.transpose()) * 0.5;
        let schur_chol = {
            let mut s = schur.clone();
            match s.clone().cholesky() {
                Some(c) => Some(c),
                None => {
                    let bump = 1e-12 * (1.0 + s.trace().abs());
                    for i in 0..m {
                        s[(i, i)] += bump;
                    }
                    s.cholesky()
                }
            }
        };
        let schur_chol = match schur_chol {
            Some(c) => c,
            None => break,
        };

        // One HKM Newton solve for a given complementarity target K.
        let zrdx = &z_inv * &rd * &x;
        let direction = |k_mat: &RMat| -> (RMat, RVec, RMat) {
            let zk = &z_inv * k_mat;
            let rhs = RVec::from_fn(m, |i, _| b[i] - inner(&a_mats[i], &zk) + inner(&a_mats[i], &zrdx));
            let dy = schur_chol.solve(&rhs);
            let dz = &rd - adjoint(&dy);
            let dx_raw = &zk - &x - &z_inv * &dz * &x;
            let dx = (&dx_raw + dx_raw.transpose()) * 0.5;
            (dx, dy, dz)
        };

        // Predictor (affine) pass.
        let (dx_a, _dy_a, dz_a) = direction(&RMat::zeros(big, big));
        let ap_a = max_step(&x, &dx_a).min(1.0);
        let ad_a = max_step(&z, &dz_a).min(1.0);
        let mu_aff = inner(&(&x + &dx_a * ap_a), &(&z + &dz_a * ad_a)) / nb;
        let sigma = (mu_aff / mu).powi(3).clamp(1e-8, 1.0);

        // Corrector pass with second-order term.
        let k_mat = RMat::identity(big, big) * (sigma * mu) - &dz_a * &dx_a;
        let (dx, dy, dz) = direction(&k_mat);
        let tau = if iter < 3 { 0.9 } else { 0.98 };
        let ap = (tau * max_step(&x, &dx)).min(1.0);
        let ad = (tau * max_step(&z, &dz)).min(1.0);
        if ap <= 1e-14 && ad <= 1e-14 {
            break;
        }
        x += &dx * ap;
        y += &dy * ad;
        z += &dz * ad;
    }

    let w = recover(&x, n);
    let objective = (&c_orig * &w).trace().re;
    SdpSolution {
        status: SdpStatus::MaxIterations,
        matrix: w,
        objective,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let a = CMat::from_fn(n, n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        (&a + a.adjoint()) * c(0.5, 0.0)
    }

    fn min_eig(w: &CMat) -> f64 {
        embed(w)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn trace_re(a: &CMat, w: &CMat) -> f64 {
        (a * w).trace().re
    }

    #[test]
    fn trace_bound_maximizer_saturates() {
        let n = 3;
        let p = HermitianSdp {
            objective: CMat::identity(n, n),
            constraints: vec![SdpConstraint {
                matrix: CMat::identity(n, n),
                bound: 1.0,
                sense: Sense::LessEq,
            }],
        };
        let sol = solve(&p, 1e-8);
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-6, "objective {}", sol.objective);
        assert!(min_eig(&sol.matrix) > -1e-8);
    }

    #[test]
    fn indefinite_objective_concentrates_on_positive_mode() {
        // max tr(diag(1,−1)·W) with tr(W) ≤ 1 puts all mass on the first
        // diagonal slot.
        let mut obj = CMat::zeros(2, 2);
        obj[(0, 0)] = c(1.0, 0.0);
        obj[(1, 1)] = c(-1.0, 0.0);
        let p = HermitianSdp {
            objective: obj,
            constraints: vec![SdpConstraint {
                matrix: CMat::identity(2, 2),
                bound: 1.0,
                sense: Sense::LessEq,
            }],
        };
        let sol = solve(&p, 1e-8);
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-6);
        assert!((sol.matrix[(0, 0)].re - 1.0).abs() < 1e-5);
        assert!(sol.matrix[(1, 1)].re.abs() < 1e-5);
    }

    #[test]
    fn unit_trace_maximum_matches_largest_eigenvalue() {
        // max Re tr(CW) st tr(W) = 1 equals λmax(C), including complex C.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n = 2 + trial % 4;
            let obj = random_hermitian(&mut rng, n);
            let lam_max = embed(&obj)
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let p = HermitianSdp {
                objective: obj.clone(),
                constraints: vec![SdpConstraint {
                    matrix: CMat::identity(n, n),
                    bound: 1.0,
                    sense: Sense::Equal,
                }],
            };
            let sol = solve(&p, 1e-9);
            assert_eq!(sol.status, SdpStatus::Optimal, "trial {trial}");
            assert!(
                (sol.objective - lam_max).abs() < 1e-6 * (1.0 + lam_max.abs()),
                "trial {trial}: {} vs λmax {}",
                sol.objective,
                lam_max
            );
            assert!((trace_re(&CMat::identity(n, n), &sol.matrix) - 1.0).abs() < 1e-6);
            assert!(min_eig(&sol.matrix) > -1e-7);
        }
    }

    #[test]
    fn diagonal_caps_add_up() {
        let mut e0 = CMat::zeros(2, 2);
        e0[(0, 0)] = c(1.0, 0.0);
        let mut e1 = CMat::zeros(2, 2);
        e1[(1, 1)] = c(1.0, 0.0);
        let p = HermitianSdp {
            objective: CMat::identity(2, 2),
            constraints: vec![
                SdpConstraint { matrix: e0, bound: 0.3, sense: Sense::LessEq },
                SdpConstraint { matrix: e1, bound: 0.5, sense: Sense::LessEq },
            ],
        };
        let sol = solve(&p, 1e-9);
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective - 0.8).abs() < 1e-6);
    }

    #[test]
    fn mixed_senses_pin_the_split() {
        // tr(W) = 1, W00 ≥ 0.7, maximize W11 → 0.3.
        let mut e0 = CMat::zeros(2, 2);
        e0[(0, 0)] = c(1.0, 0.0);
        let mut e1 = CMat::zeros(2, 2);
        e1[(1, 1)] = c(1.0, 0.0);
        let p = HermitianSdp {
            objective: e1.clone(),
            constraints: vec![
                SdpConstraint {
                    matrix: CMat::identity(2, 2),
                    bound: 1.0,
                    sense: Sense::Equal,
                },
                SdpConstraint { matrix: e0, bound: 0.7, sense: Sense::GreaterEq },
            ],
        };
        let sol = solve(&p, 1e-9);
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective - 0.3).abs() < 1e-6, "objective {}", sol.objective);
    }

    #[test]
    fn contradictory_trace_rows_are_infeasible() {
        let p = HermitianSdp {
            objective: CMat::identity(2, 2),
            constraints: vec![
                SdpConstraint {
                    matrix: CMat::identity(2, 2),
                    bound: 1.0,
                    sense: Sense::LessEq,
                },
                SdpConstraint {
                    matrix: CMat::identity(2, 2),
                    bound: 2.0,
                    sense: Sense::GreaterEq,
                },
            ],
        };
        let sol = solve(&p, 1e-8);
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn psd_cone_blocks_negative_bound() {
        // tr(W) ≤ −1 has no PSD solution.
        let p = HermitianSdp {
            objective: CMat::identity(2, 2),
            constraints: vec![SdpConstraint {
                matrix: CMat::identity(2, 2),
                bound: -1.0,
                sense: Sense::LessEq,
            }],
        };
        let sol = solve(&p, 1e-8);
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn uncapped_direction_is_unbounded() {
        // Only W00 is capped; W11 can grow without limit under tr objective.
        let mut e0 = CMat::zeros(2, 2);
        e0[(0, 0)] = c(1.0, 0.0);
        let p = HermitianSdp {
            objective: CMat::identity(2, 2),
            constraints: vec![SdpConstraint { matrix: e0, bound: 1.0, sense: Sense::LessEq }],
        };
        let sol = solve(&p, 1e-8);
        assert_eq!(sol.status, SdpStatus::Unbounded);
    }

    #[test]
    fn no_constraints_classifies_by_objective_sign() {
        let p = HermitianSdp {
            objective: CMat::identity(2, 2),
            constraints: vec![],
        };
        assert_eq!(solve(&p, 1e-8).status, SdpStatus::Unbounded);
        let p = HermitianSdp {
            objective: -CMat::identity(2, 2),
            constraints: vec![],
        };
        let sol = solve(&p, 1e-8);
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn random_problems_beat_scaled_competitors() {
        // PSD rows with slack at W = I/2 guarantee a bounded feasible
        // problem; every scaled random PSD matrix must score no better.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10 {
            let n = 3;
            let obj = random_hermitian(&mut rng, n);
            let mut constraints = vec![SdpConstraint {
                matrix: CMat::identity(n, n),
                bound: 2.0,
                sense: Sense::LessEq,
            }];
            for _ in 0..2 {
                let g = CMat::from_fn(n, n, |_, _| {
                    c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                let psd = &g * g.adjoint();
                let bound = 0.5 * psd.trace().re + 0.2;
                constraints.push(SdpConstraint { matrix: psd, bound, sense: Sense::LessEq });
            }
            let p = HermitianSdp { objective: obj.clone(), constraints };
            let sol = solve(&p, 1e-9);
            assert_eq!(sol.status, SdpStatus::Optimal, "trial {trial}");
            assert!(min_eig(&sol.matrix) > -1e-7);
            for con in &p.constraints {
                assert!(trace_re(&con.matrix, &sol.matrix) <= con.bound + 1e-6);
            }
            for _ in 0..30 {
                let g = CMat::from_fn(n, n, |_, _| {
                    c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                let w_r = &g * g.adjoint();
                let mut t = f64::INFINITY;
                for con in &p.constraints {
                    let v = trace_re(&con.matrix, &w_r);
                    if v > 1e-12 {
                        t = t.min(con.bound / v);
                    }
                }
                let t = t.max(0.0);
                let score = trace_re(&obj, &(&w_r * c(t, 0.0)));
                assert!(
                    score <= sol.objective + 1e-6 * (1.0 + score.abs()),
                    "trial {trial}: competitor {} beats {}",
                    score,
                    sol.objective
                );
            }
        }
    }
}
