//! Small dense linear-algebra helpers: cyclic Jacobi eigendecomposition for
//! Hermitian (or real symmetric) matrices and a few complex-vector utilities.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

/// Eigenpairs of a Hermitian matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T: nalgebra::Scalar> {
    pub values: DVector<f64>,
    /// Columns are the unit-norm eigenvectors, in the same order as `values`.
    pub vectors: DMatrix<T>,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition.
///
/// The input is symmetrized as `(M + Mᴴ)/2` first. Works for both `f64` and
/// `Complex64`; for complex entries each rotation is preceded by a phase
/// change that makes the pivot real. Ties in the eigenvalues keep the
/// original index order, so the identity yields the canonical basis.
pub fn jacobi_eigen<T>(m: &DMatrix<T>) -> HermitianEigen<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "jacobi_eigen needs a square matrix");
    let mut a = DMatrix::from_fn(n, n, |i, j| {
        (m[(i, j)] + m[(j, i)].conjugate()).scale(0.5)
    });
    let mut v = DMatrix::<T>::identity(n, n);

    let frob: f64 = a.iter().map(|x| x.modulus_squared()).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += a[(p, q)].modulus_squared();
                }
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.modulus();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = apq.unscale(mag);
                let alpha = a[(p, p)].real();
                let gamma = a[(q, q)].real();
                let theta = 0.5 * (2.0 * mag).atan2(gamma - alpha);
                let (s, c) = theta.sin_cos();
                // U = diag(1, conj(phase)) * [[c, s], [-s, c]] on the (p, q) plane.
                let cp = phase.conjugate();
                let u_pp = T::from_real(c);
                let u_pq = T::from_real(s);
                let u_qp = cp.scale(-s);
                let u_qq = cp.scale(c);

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * u_pp + akq * u_qp;
                    a[(k, q)] = akp * u_pq + akq * u_qq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = u_pp.conjugate() * apk + u_qp.conjugate() * aqk;
                    a[(q, k)] = u_pq.conjugate() * apk + u_qq.conjugate() * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                a[(p, p)] = T::from_real(a[(p, p)].real());
                a[(q, q)] = T::from_real(a[(q, q)].real());

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * u_pp + vkq * u_qp;
                    v[(k, q)] = vkp * u_pq + vkq * u_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep index order
    order.sort_by(|&i, &j| {
        a[(j, j)]
            .real()
            .partial_cmp(&a[(i, i)].real())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)].real()));
    let mut vectors = DMatrix::<T>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    HermitianEigen { values, vectors }
}

/// Rotates `v` so that its largest-magnitude entry (first one on ties) is
/// real and positive.
pub fn fix_phase(v: &mut DVector<Complex64>) {
    let max = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let idx = v
        .iter()
        .position(|x| x.norm() >= max * (1.0 - 1e-12))
        .unwrap_or(0);
    let phase = v[idx] / v[idx].norm();
    let rot = phase.conj();
    for x in v.iter_mut() {
        *x *= rot;
    }
    v[idx] = Complex64::new(v[idx].re, 0.0);
}

/// Largest deviation from Hermitian symmetry, `max |m_ij - conj(m_ji)|`.
pub fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..m.ncols().min(n) {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr(v: &DVector<Complex64>) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// `Hᴴ H` for a complex matrix.
pub fn gram(h: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    h.adjoint() * h
}

/// Real symmetric embedding `[[Re M, -Im M], [Im M, Re M]]` of a complex matrix.
pub fn real_embedding(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, ii) = (i / n, i % n);
        let (bj, jj) = (j / n, j % n);
        let z = m[(ii, jj)];
        match (bi, bj) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    })
}

/// Inverse of [`real_embedding`], projecting an arbitrary real symmetric
/// `2n × 2n` matrix onto the complex-structured subspace first.
pub fn complex_from_embedding(x: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = x.nrows() / 2;
    DMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
        let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
        Complex64::new(re, im)
    })
}
