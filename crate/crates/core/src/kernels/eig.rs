//! Dense Hermitian eigen helpers used by the beamforming steps.
//!
//! Complex Hermitian matrices are handled through the real symmetric
//! embedding `[[Re M, −Im M], [Im M, Re M]]`: its spectrum is the complex
//! spectrum duplicated, and a real eigenvector `[a; b]` maps back to the
//! complex eigenvector `a + i·b`. That turns both helpers into calls to
//! nalgebra's symmetric eigensolver / Cholesky, which is deterministic and
//! robust at the small sizes involved (≲ 20).

use nalgebra::{Cholesky, Dyn};

use super::KernelError;
use crate::{C64, CMat, CVec, RMat};

/// Eigenvalue of largest value (not magnitude) of a Hermitian matrix with a
/// unit-norm eigenvector. Deterministic across runs.
pub fn dominant_eigpair(m: &CMat) -> (f64, CVec) {
    let n = m.nrows();
    assert!(n > 0, "empty matrix");
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut emb = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = h[(i, j)];
            emb[(i, j)] = v.re;
            emb[(i + n, j + n)] = v.re;
            emb[(i, j + n)] = -v.im;
            emb[(i + n, j)] = v.im;
        }
    }
    let eig = emb.symmetric_eigen();
    let mut best = 0;
    for k in 1..2 * n {
        if eig.eigenvalues[k] > eig.eigenvalues[best] {
            best = k;
        }
    }
    let u = eig.eigenvectors.column(best);
    let mut v = CVec::from_fn(n, |i, _| C64::new(u[i], u[i + n]));
    // Fix the free global phase so results are reproducible: make the
    // largest-magnitude entry real and positive.
    let mut lead = 0;
    for i in 1..n {
        if v[i].norm_sqr() > v[lead].norm_sqr() {
            lead = i;
        }
    }
    let mag = v[lead].norm();
    if mag > 0.0 {
        let phase = v[lead] / C64::new(mag, 0.0);
        v.scale_mut(1.0); // no-op, keeps v mutable-borrow friendly
        v *= phase.conj();
    }
    let norm = v.norm();
    if norm > 0.0 {
        v /= C64::new(norm, 0.0);
    }
    (eig.eigenvalues[best], v)
}

/// Direction maximizing `|v^H a|² / (σ²‖v‖² + |v^H b... )` — precisely, the
/// unit vector maximizing the generalized Rayleigh quotient
/// `|v^H a|² / (v^H (σ²I + S) v)` for a PSD matrix `S`, which is the
/// whitened matched filter `(σ²I + S)⁻¹ a`, normalized.
pub fn whitened_mmse_direction(a: &CVec, s: &CMat, sigma2: f64) -> Result<CVec, KernelError> {
    let n = a.len();
    if a.norm() == 0.0 {
        return Err(KernelError::ZeroVector);
    }
    let mut m = (s + s.adjoint()) * C64::new(0.5, 0.0);
    for i in 0..n {
        m[(i, i)] += C64::new(sigma2, 0.0);
    }
    let chol: Cholesky<C64, Dyn> = m.cholesky().ok_or(KernelError::FactorizationFailed)?;
    let mut v = chol.solve(a);
    let norm = v.norm();
    if norm == 0.0 {
        return Err(KernelError::ZeroVector);
    }
    v /= C64::new(norm, 0.0);
    Ok(v)
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

    #[test]
    fn matches_dense_eigensolver_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..200 {
            let n = 2 + trial % 9;
            let mut m = random_hermitian(&mut rng, n);
            if trial % 2 == 0 {
                // Make half the cases PSD (Gram form), half indefinite.
                m = &m * m.adjoint();
            }
            let (lam, v) = dominant_eigpair(&m);
            // Eigenpair residual and unit norm.
            let residual = (&m * &v - &v * c(lam, 0.0)).norm();
            assert!(
                residual < 1e-9 * (1.0 + lam.abs()),
                "trial {trial}: residual {residual}"
            );
            assert!((v.norm() - 1.0).abs() < 1e-12);
            // Dominance: no random unit vector achieves a larger quotient.
            for _ in 0..20 {
                let u = CVec::from_fn(n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
                let q = (u.adjoint() * &m * &u)[(0, 0)].re / u.norm_squared();
                assert!(q <= lam + 1e-9 * (1.0 + lam.abs()), "trial {trial}");
            }
        }
    }

    #[test]
    fn diagonal_dominant_slot_is_selected() {
        let n = 5;
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c(i as f64, 0.0);
        }
        let (lam, v) = dominant_eigpair(&m);
        assert!((lam - 4.0).abs() < 1e-12);
        assert!((v[n - 1].norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rank_one_matrix_recovers_its_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 6;
        let g = CVec::from_fn(n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let m = &g * g.adjoint();
        let (lam, v) = dominant_eigpair(&m);
        assert!((lam - g.norm_squared()).abs() < 1e-10 * g.norm_squared());
        // v equals g up to the fixed phase convention.
        let overlap = (g.adjoint() * &v)[(0, 0)].norm() / g.norm();
        assert!((overlap - 1.0).abs() < 1e-10);
    }

    #[test]
    fn phase_convention_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = random_hermitian(&mut rng, 4);
        let (l1, v1) = dominant_eigpair(&m);
        let (l2, v2) = dominant_eigpair(&m.clone());
        assert_eq!(l1, l2);
        assert_eq!(v1, v2);
    }

    #[test]
    fn whitened_direction_beats_random_competitors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..50 {
            let n = 2 + trial % 5;
            let a = CVec::from_fn(n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            let g = CMat::from_fn(n, n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            let s = &g * g.adjoint();
            let sigma2 = 0.1 + rng.gen::<f64>();
            let v = whitened_mmse_direction(&a, &s, sigma2).unwrap();
            assert!((v.norm() - 1.0).abs() < 1e-12);
            let quotient = |u: &CVec| -> f64 {
                let num = (u.adjoint() * &a)[(0, 0)].norm_sqr();
                let den = sigma2 * u.norm_squared() + (u.adjoint() * &s * u)[(0, 0)].re;
                num / den
            };
            let best = quotient(&v);
            for _ in 0..200 {
                let u = CVec::from_fn(n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
                assert!(quotient(&u) <= best * (1.0 + 1e-9), "trial {trial}");
            }
        }
    }

    #[test]
    fn zero_target_vector_is_rejected() {
        let a = CVec::zeros(3);
        let s = CMat::zeros(3, 3);
        assert!(matches!(
            whitened_mmse_direction(&a, &s, 1.0),
            Err(KernelError::ZeroVector)
        ));
    }
}
