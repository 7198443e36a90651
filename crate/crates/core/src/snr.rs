//! Received-SNR evaluation: per-vertex and worst-case values of the
//! power-allocation objective, the full vector-channel SNR, and assembly of
//! the rank-one relay matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::norm_sqr;
use crate::model::{relay_inputs, ChannelRealization, NetworkConfig, VertexSet};

/// Quantities that stay fixed while the power allocation varies.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrContext {
    pub u_norms: Vec<f64>,
    pub sigma2_r: f64,
    pub sigma2_d: f64,
    pub p_relay: Vec<f64>,
}

impl SnrContext {
    pub fn new(u_norms: Vec<f64>, config: &NetworkConfig) -> Self {
        SnrContext {
            u_norms,
            sigma2_r: config.sigma2_r,
            sigma2_d: config.sigma2_d,
            p_relay: config.p_relay.clone(),
        }
    }

    /// Same noise/power parameters with different relay input norms.
    pub fn with_u_norms(&self, u_norms: Vec<f64>) -> Self {
        SnrContext { u_norms, ..self.clone() }
    }

    /// Per-relay amplitude caps `sqrt(P_i / (σ_R² + ‖u_i‖²))`.
    pub fn caps(&self) -> Vec<f64> {
        self.u_norms
            .iter()
            .zip(&self.p_relay)
            .map(|(u, p)| (p / (self.sigma2_r + u * u)).sqrt())
            .collect()
    }
}

/// `(Σ f_i c_i ‖u_i‖)² / (σ_R² Σ f_i² c_i² + σ_D²)`.
pub fn snr_at_vertex(c: &[f64], f_eta: &[f64], ctx: &SnrContext) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((ci, fi), ui) in c.iter().zip(f_eta).zip(&ctx.u_norms) {
        num += fi * ci * ui;
        den += fi * fi * ci * ci;
    }
    num * num / (ctx.sigma2_r * den + ctx.sigma2_d)
}

/// Minimum of [`snr_at_vertex`] over the vertex set, with the first
/// minimizing index in canonical order.
pub fn worst_case_snr(c: &[f64], vertices: &VertexSet, ctx: &SnrContext) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (k, v) in vertices.vertices.iter().enumerate() {
        let s = snr_at_vertex(c, v, ctx);
        if s < best.0 {
            best = (s, k);
        }
    }
    best
}

/// Assemble `B_i = c_i conj(f̂_i) û_iᴴ` for every relay.
///
/// Relays whose input `u_i` is zero get a zero matrix and are reported as
/// inactive.
pub fn assemble_relay_matrices(
    c: &[f64],
    ch: &ChannelRealization,
    g: &DVector<Complex64>,
) -> Result<(Vec<DMatrix<Complex64>>, Vec<bool>)> {
    let u = relay_inputs(ch, g)?;
    let mut mats = Vec::with_capacity(u.len());
    let mut inactive = Vec::with_capacity(u.len());
    for (i, ui) in u.iter().enumerate() {
        let m = ui.len();
        let un = norm_sqr(ui).sqrt();
        let fn_ = norm_sqr(&ch.f_tilde[i]).sqrt();
        if un == 0.0 || fn_ == 0.0 {
            mats.push(DMatrix::zeros(m, m));
            inactive.push(true);
            continue;
        }
        let fhat_conj = ch.f_tilde[i].map(|x| x.conj()).unscale(fn_);
        let uhat = ui.unscale(un);
        mats.push((fhat_conj * uhat.adjoint()).scale(c[i]));
        inactive.push(false);
    }
    Ok((mats, inactive))
}

/// Relay transmit power `‖B u‖² + σ_R² tr(Bᴴ B)`.
pub fn relay_power(b: &DMatrix<Complex64>, u: &DVector<Complex64>, sigma2_r: f64) -> f64 {
    norm_sqr(&(b * u)) + sigma2_r * b.iter().map(|x| x.norm_sqr()).sum::<f64>()
}

/// Received SNR of the full vector model for given relay matrices and
/// true second-hop channels `f`.
pub fn vector_snr(
    ch: &ChannelRealization,
    g: &DVector<Complex64>,
    relay_matrices: &[DMatrix<Complex64>],
    f: &[DVector<Complex64>],
    sigma2_r: f64,
    sigma2_d: f64,
) -> Result<f64> {
    let u = relay_inputs(ch, g)?;
    let mut signal = Complex64::new(0.0, 0.0);
    let mut noise = 0.0;
    for i in 0..u.len() {
        let ft_b = f[i].transpose() * &relay_matrices[i];
        signal += (&ft_b * &u[i])[(0, 0)];
        noise += ft_b.iter().map(|x| x.norm_sqr()).sum::<f64>();
    }
    Ok(signal.norm_sqr() / (sigma2_d + sigma2_r * noise))
}

fn random_ball_point(m: usize, radius: f64, rng: &mut ChaCha8Rng) -> DVector<Complex64> {
    let dir = DVector::from_iterator(
        m,
        (0..m).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))),
    );
    let n = norm_sqr(&dir).sqrt();
    // uniform in a 2m-dimensional real ball
    let r = radius * rng.random::<f64>().powf(1.0 / (2 * m) as f64);
    dir.unscale(n).scale(r)
}

/// Minimum full-model SNR over sampled second-hop errors.
///
/// Draws `n_samples` errors uniformly inside the balls `‖Δf_i‖ ≤ ε_i` and,
/// when `include_aligned` is set, additionally evaluates the `2^R` aligned
/// boundary points `Δf_i = ±ε_i f̂_i`.
pub fn sampled_worst_snr_with(
    c: &[f64],
    ch: &ChannelRealization,
    g: &DVector<Complex64>,
    config: &NetworkConfig,
    n_samples: usize,
    seed: u64,
    include_aligned: bool,
) -> Result<f64> {
    let (mats, _) = assemble_relay_matrices(c, ch, g)?;
    let r = ch.n_relays();
    let eval = |f: &[DVector<Complex64>]| vector_snr(ch, g, &mats, f, config.sigma2_r, config.sigma2_d);
    let mut worst = f64::INFINITY;

    if include_aligned {
        let norms = ch.f_norms();
        for k in 0..1usize << r {
            let f: Vec<_> = (0..r)
                .map(|i| {
                    let sign = if k >> i & 1 == 1 { 1.0 } else { -1.0 };
                    let fhat = ch.f_tilde[i].unscale(norms[i]);
                    &ch.f_tilde[i] + fhat.scale(sign * ch.eps[i])
                })
                .collect();
            worst = worst.min(eval(&f)?);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let f: Vec<_> = (0..r)
            .map(|i| &ch.f_tilde[i] + random_ball_point(ch.f_tilde[i].len(), ch.eps[i], &mut rng))
            .collect();
        worst = worst.min(eval(&f)?);
    }
    Ok(worst)
}

/// [`sampled_worst_snr_with`] including the aligned boundary points.
pub fn sampled_worst_snr(
    c: &[f64],
    ch: &ChannelRealization,
    g: &DVector<Complex64>,
    config: &NetworkConfig,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    sampled_worst_snr_with(c, ch, g, config, n_samples.max(1), seed, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{effective_gains, generate_channels, vertex_set, vertex_set_from};

    fn unit_ctx(u: Vec<f64>) -> SnrContext {
        let r = u.len();
        SnrContext { u_norms: u, sigma2_r: 1.0, sigma2_d: 1.0, p_relay: vec![1.0; r] }
    }

    #[test]
    fn zero_allocation_gives_zero() {
        assert_eq!(snr_at_vertex(&[0.0, 0.0], &[1.0, 2.0], &unit_ctx(vec![1.0, 1.0])), 0.0);
    }

    #[test]
    fn single_relay_hand_value() {
        let s = snr_at_vertex(&[1.0], &[1.5], &unit_ctx(vec![1.0]));
        assert!((s - 2.25 / 3.25).abs() < 1e-15);
    }

    #[test]
    fn scale_invariance_without_destination_noise() {
        let mut ctx = unit_ctx(vec![0.7, 1.3]);
        ctx.sigma2_d = 0.0;
        let a = snr_at_vertex(&[0.4, 0.9], &[1.1, 0.6], &ctx);
        let b = snr_at_vertex(&[0.4, 0.9], &[3.3, 1.8], &ctx);
        assert!((a - b).abs() < 1e-14 * a);
    }

    #[test]
    fn worst_case_single_relay() {
        let v = vertex_set_from(&[1.0], &[0.5]).unwrap();
        let (s, k) = worst_case_snr(&[1.0], &v, &unit_ctx(vec![1.0]));
        assert!((s - 0.2).abs() < 1e-15);
        assert_eq!(k, 0);
        assert_eq!(v.vertices[k], vec![0.5]);
    }

    #[test]
    fn worst_case_perfect_csi_is_nominal() {
        let v = vertex_set_from(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        let ctx = unit_ctx(vec![0.5, 1.5]);
        let (s, k) = worst_case_snr(&[0.3, 0.8], &v, &ctx);
        assert_eq!(k, 0);
        assert_eq!(s, snr_at_vertex(&[0.3, 0.8], &[1.0, 2.0], &ctx));
    }

    #[test]
    fn worst_case_matches_exhaustive_min() {
        let config = NetworkConfig::from_db(2, vec![2, 2], 10.0, 20.0, 0.3).unwrap();
        for seed in 0..20 {
            let ch = generate_channels(&config, seed);
            let v = vertex_set(&ch).unwrap();
            let ctx = unit_ctx(vec![1.3, 0.4]);
            let c = [0.2 + 0.01 * seed as f64, 0.9];
            let (s, _) = worst_case_snr(&c, &v, &ctx);
            let norms = ch.f_norms();
            let mut brute = f64::INFINITY;
            for s0 in [-1.0, 1.0] {
                for s1 in [-1.0, 1.0] {
                    let f = [norms[0] + s0 * ch.eps[0], norms[1] + s1 * ch.eps[1]];
                    let num = (f[0] * c[0] * 1.3 + f[1] * c[1] * 0.4).powi(2);
                    let den = f[0] * f[0] * c[0] * c[0] + f[1] * f[1] * c[1] * c[1] + 1.0;
                    brute = brute.min(num / den);
                }
            }
            assert!((s - brute).abs() <= 1e-12 * brute);
        }
    }

    #[test]
    fn increasing_in_each_allocation_near_zero() {
        let ctx = unit_ctx(vec![0.8, 1.7, 0.3]);
        let f = [1.2, 0.5, 2.0];
        let h = 1e-6;
        for i in 0..3 {
            let mut c = [1e-3; 3];
            let base = snr_at_vertex(&c, &f, &ctx);
            c[i] += h;
            assert!(snr_at_vertex(&c, &f, &ctx) > base);
        }
    }

    #[test]
    fn assembled_matrices_frobenius_and_power() {
        let config = NetworkConfig::from_db(3, vec![2, 3], 10.0, 20.0, 0.2).unwrap();
        let ch = generate_channels(&config, 17);
        let g = DVector::from_vec(vec![
            Complex64::new(1.0, 0.5),
            Complex64::new(-0.3, 1.1),
            Complex64::new(0.2, 0.0),
        ]);
        let c = [0.7, 1.9];
        let (mats, inactive) = assemble_relay_matrices(&c, &ch, &g).unwrap();
        assert_eq!(inactive, vec![false, false]);
        let gains = effective_gains(&ch, &g).unwrap();
        let u = relay_inputs(&ch, &g).unwrap();
        for i in 0..2 {
            let fro: f64 = mats[i].iter().map(|x| x.norm_sqr()).sum();
            assert!((fro - c[i] * c[i]).abs() < 1e-12);
            let p = relay_power(&mats[i], &u[i], config.sigma2_r);
            let expect = c[i] * c[i] * (gains.w[i] + config.sigma2_r);
            assert!((p - expect).abs() <= 1e-10 * expect);
        }
    }

    #[test]
    fn zero_allocation_gives_zero_matrix() {
        let config = NetworkConfig::from_db(2, vec![2], 10.0, 20.0, 0.0).unwrap();
        let ch = generate_channels(&config, 1);
        let g = DVector::from_element(2, Complex64::new(1.0, 0.0));
        let (m, _) = assemble_relay_matrices(&[0.0], &ch, &g).unwrap();
        assert!(m[0].iter().all(|x| *x == Complex64::new(0.0, 0.0)));
        assert_eq!(relay_power(&m[0], &(&ch.h[0] * &g), 1.0), 0.0);
    }

    #[test]
    fn scalar_relay_matrix_has_modulus_c() {
        let ch = ChannelRealization::from_parts(
            vec![DMatrix::from_element(1, 1, Complex64::new(0.3, -0.4))],
            vec![DVector::from_element(1, Complex64::new(-1.2, 0.5))],
            vec![0.0],
        )
        .unwrap();
        let g = DVector::from_element(1, Complex64::new(2.0, 0.0));
        let (m, _) = assemble_relay_matrices(&[0.8], &ch, &g).unwrap();
        assert!((m[0][(0, 0)].norm() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_source_beam_flags_inactive_relay() {
        let ch = ChannelRealization::from_parts(
            vec![
                DMatrix::from_row_slice(1, 2, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]),
                DMatrix::from_row_slice(1, 2, &[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]),
            ],
            vec![DVector::from_element(1, Complex64::new(1.0, 0.0)); 2],
            vec![0.0, 0.0],
        )
        .unwrap();
        let g = DVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
        let (m, inactive) = assemble_relay_matrices(&[1.0, 1.0], &ch, &g).unwrap();
        assert_eq!(inactive, vec![true, false]);
        assert_eq!(m[0][(0, 0)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn cap_saturates_budget() {
        let ctx = SnrContext { u_norms: vec![2.0], sigma2_r: 1.0, sigma2_d: 1.0, p_relay: vec![7.0] };
        let cap = ctx.caps()[0];
        assert!((cap * cap * (4.0 + 1.0) - 7.0).abs() < 1e-14);
    }

    #[test]
    fn sampling_with_perfect_csi_equals_nominal() {
        let config = NetworkConfig::from_db(2, vec![2, 2], 10.0, 20.0, 0.0).unwrap();
        let ch = generate_channels(&config, 4);
        let g = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.5)]);
        let c = [0.3, 0.6];
        let gains = effective_gains(&ch, &g).unwrap();
        let ctx = SnrContext::new(gains.u_norms, &config);
        let nominal = snr_at_vertex(&c, &ch.f_norms(), &ctx);
        for n in [1, 10] {
            let s = sampled_worst_snr(&c, &ch, &g, &config, n, 3).unwrap();
            assert!((s - nominal).abs() <= 1e-12 * nominal);
        }
    }
}
