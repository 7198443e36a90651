//! Perfect-CSI power allocation in closed form, principal eigenvectors, and
//! the source beamformers of the special network shapes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dinkelbach::solve_for_g;
use crate::error::{Error, Result};
use crate::linalg::{fix_phase, hermitian_defect, jacobi_eigen, norm_sqr};
use crate::model::{ChannelRealization, NetworkConfig};
use crate::snr::{snr_at_vertex, SnrContext};

/// Optimal perfect-CSI power allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct JingSolution {
    pub c: Vec<f64>,
    /// Relays sorted by decreasing saturation priority.
    pub permutation: Vec<usize>,
    /// Number of relays at full power (1-based count).
    pub j0: usize,
    pub lambda_j0: f64,
}

/// Maximise `(Σ c_i f_i u_i)² / (σ_R² Σ c_i² f_i² + σ_D²)` over the box
/// `0 ≤ c_i ≤ sqrt(P_i / (σ_R² + u_i²))`.
///
/// With `x_i = c_i / cap_i` the objective becomes
/// `(Σ b_i x_i)² / (1 + Σ a_i² x_i²)`, whose stationary points satisfy
/// `x_i = λ b_i / a_i²`. Relays are sorted by `φ_i = b_i / a_i²`; the top `j`
/// saturate and `λ_j = (1 + Σ_top a²) / Σ_top b`.
pub fn jing_power_allocation(
    u_norms: &[f64],
    f_norms: &[f64],
    p_relay: &[f64],
    sigma2_r: f64,
    sigma2_d: f64,
) -> JingSolution {
    let r = u_norms.len();
    let sigma_d = sigma2_d.sqrt();
    let sigma_r = sigma2_r.sqrt();
    let caps: Vec<f64> = (0..r).map(|i| (p_relay[i] / (sigma2_r + u_norms[i] * u_norms[i])).sqrt()).collect();
    let b: Vec<f64> = (0..r).map(|i| caps[i] * f_norms[i] * u_norms[i] / sigma_d).collect();
    let a: Vec<f64> = (0..r).map(|i| sigma_r * caps[i] * f_norms[i] / sigma_d).collect();
    let phi: Vec<f64> = (0..r).map(|i| if a[i] > 0.0 { b[i] / (a[i] * a[i]) } else { 0.0 }).collect();

    let mut perm: Vec<usize> = (0..r).collect();
    perm.sort_by(|&i, &j| phi[j].partial_cmp(&phi[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut sum_a2 = 0.0;
    let mut sum_b = 0.0;
    let mut j0 = r;
    let mut lambda = f64::INFINITY;
    for j in 1..=r {
        let k = perm[j - 1];
        sum_a2 += a[k] * a[k];
        sum_b += b[k];
        lambda = if sum_b > 0.0 { (1.0 + sum_a2) / sum_b } else { f64::INFINITY };
        if j == r {
            break;
        }
        let next = phi[perm[j]];
        if next == 0.0 || lambda * next < 1.0 {
            j0 = j;
            break;
        }
    }

    let mut c = caps.clone();
    for (rank, &k) in perm.iter().enumerate() {
        if rank >= j0 {
            let x = if lambda.is_finite() { (lambda * phi[k]).min(1.0) } else { 0.0 };
            c[k] = caps[k] * x;
        }
    }
    JingSolution { c, permutation: perm, j0, lambda_j0: lambda }
}

/// Nominal SNR with second-hop magnitudes `f_norms`.
pub fn perfect_snr(c: &[f64], u_norms: &[f64], f_norms: &[f64], sigma2_r: f64, sigma2_d: f64) -> f64 {
    let ctx = SnrContext { u_norms: u_norms.to_vec(), sigma2_r, sigma2_d, p_relay: vec![0.0; u_norms.len()] };
    snr_at_vertex(c, f_norms, &ctx)
}

/// Unit principal eigenvector and its eigenvalue; the largest-magnitude
/// entry of the vector is made real and positive.
pub fn principal_eigvec(m: &DMatrix<Complex64>) -> Result<(DVector<Complex64>, f64)> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension(format!("principal_eigvec needs a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let scale = m.iter().map(|x| x.norm()).fold(1.0, f64::max);
    let defect = hermitian_defect(m);
    if defect > 1e-10 * scale {
        return Err(Error::NotHermitian(defect));
    }
    let e = jacobi_eigen(m);
    let mut v = e.vectors.column(0).into_owned();
    fix_phase(&mut v);
    Ok((v, e.values[0]))
}

/// Network shapes whose optimal source beamformer has a simple structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialCase {
    /// Single source antenna.
    Nt1,
    /// Single relay.
    R1,
    /// Two single-antenna relays.
    ScalarRelays,
}

/// Source beamformer for the special network shapes.
///
/// For [`SpecialCase::ScalarRelays`] the beamformer is searched along
/// `g(θ) = √P_s (sin θ d₁ + cos θ d₂)` with `d₁`, `d₂` the normalised
/// projections of `h₁` onto `h₂` and onto its orthogonal complement, scored
/// by the robust worst-case SNR with power allocation tolerance `delta1`.
pub fn special_case_g(
    ch: &ChannelRealization,
    config: &NetworkConfig,
    which: SpecialCase,
    delta1: f64,
) -> Result<DVector<Complex64>> {
    let n_t = ch.n_t();
    let amp = config.p_s.sqrt();
    match which {
        SpecialCase::Nt1 => {
            if n_t != 1 {
                return Err(Error::CaseMismatch(format!("N_T = {n_t}, expected 1")));
            }
            Ok(DVector::from_element(1, Complex64::new(amp, 0.0)))
        }
        SpecialCase::R1 => {
            if ch.n_relays() != 1 {
                return Err(Error::CaseMismatch(format!("R = {}, expected 1", ch.n_relays())));
            }
            let (v, _) = principal_eigvec(&ch.grams()[0])?;
            Ok(v.scale(amp))
        }
        SpecialCase::ScalarRelays => {
            if ch.n_relays() != 2 || ch.h.iter().any(|h| h.nrows() != 1) {
                return Err(Error::CaseMismatch("expected two single-antenna relays".into()));
            }
            let h1 = ch.h[0].adjoint().column(0).into_owned();
            let h2 = ch.h[1].adjoint().column(0).into_owned();
            let (d1, d2) = projection_basis(&h1, &h2);
            let build = |theta: f64| -> DVector<Complex64> {
                let v = d1.scale(theta.sin()) + d2.scale(theta.cos());
                let n = norm_sqr(&v).sqrt();
                if n == 0.0 {
                    d1.scale(amp)
                } else {
                    v.scale(amp / n)
                }
            };
            let score = |theta: f64| -> Result<f64> { Ok(solve_for_g(ch, config, &build(theta), delta1)?.gamma) };
            let theta = golden_search(score, 0.0, std::f64::consts::FRAC_PI_2, 16, 1e-4)?;
            Ok(build(theta))
        }
    }
}

fn projection_basis(h1: &DVector<Complex64>, h2: &DVector<Complex64>) -> (DVector<Complex64>, DVector<Complex64>) {
    let n = h1.len();
    let zero = DVector::<Complex64>::zeros(n);
    let h2n = norm_sqr(h2);
    let along = if h2n > 0.0 { h2.scale(1.0) * (h2.dotc(h1) / h2n) } else { zero.clone() };
    let perp = h1 - &along;
    let normalize = |v: &DVector<Complex64>| {
        let s = norm_sqr(v).sqrt();
        if s > 1e-14 * (1.0 + norm_sqr(h1).sqrt()) {
            v.unscale(s)
        } else {
            zero.clone()
        }
    };
    let mut d1 = normalize(&along);
    if norm_sqr(&d1) == 0.0 && h2n > 0.0 {
        d1 = h2.unscale(h2n.sqrt());
    }
    (d1, normalize(&perp))
}

/// Maximise a scalar function on `[lo, hi]`: coarse scan with `n_scan`
/// intervals, then golden-section refinement around the best sample.
/// Returns the best point seen, endpoints included.
pub(crate) fn golden_search<F>(mut f: F, lo: f64, hi: f64, n_scan: usize, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let step = (hi - lo) / n_scan as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    let mut best_k = 0;
    for k in 0..=n_scan {
        let t = lo + step * k as f64;
        let v = f(t)?;
        if v > best.1 {
            best = (t, v);
            best_k = k;
        }
    }
    let mut a = lo + step * best_k.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_k + 1) as f64).min(hi);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2)?;
        }
    }
    for (t, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (t, v);
        }
    }
    Ok(best.0)
}
