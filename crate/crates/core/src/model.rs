//! Network configuration, random channel draws and the discrete worst-case
//! vertex set of the second-hop uncertainty model.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm_sqr;

/// Largest relay count accepted by [`vertex_set`].
pub const MAX_VERTEX_RELAYS: usize = 16;

/// Convert a power in dB to linear units.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convert a linear power ratio to dB.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Static network parameters. All powers are linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_t: usize,
    pub relay_antennas: Vec<usize>,
    pub p_s: f64,
    pub p_relay: Vec<f64>,
    pub sigma2_r: f64,
    pub sigma2_d: f64,
    pub rho: f64,
}

impl NetworkConfig {
    /// Build a config from dB powers with a common relay budget and unit noise.
    pub fn from_db(
        n_t: usize,
        relay_antennas: Vec<usize>,
        p_s_db: f64,
        p_relay_db: f64,
        rho: f64,
    ) -> Result<Self> {
        let r = relay_antennas.len();
        let cfg = NetworkConfig {
            n_t,
            relay_antennas,
            p_s: db_to_linear(p_s_db),
            p_relay: vec![db_to_linear(p_relay_db); r],
            sigma2_r: 1.0,
            sigma2_d: 1.0,
            rho,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_relays(&self) -> usize {
        self.relay_antennas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.relay_antennas.len();
        if r == 0 {
            return Err(Error::InvalidConfig("at least one relay is required".into()));
        }
        if self.p_relay.len() != r {
            return Err(Error::InvalidConfig(format!(
                "{} relay antenna counts but {} relay power budgets",
                r,
                self.p_relay.len()
            )));
        }
        if self.n_t == 0 || self.relay_antennas.iter().any(|&m| m == 0) {
            return Err(Error::InvalidConfig("antenna counts must be positive".into()));
        }
        if !(self.p_s >= 0.0) || self.p_relay.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidConfig("powers must be nonnegative".into()));
        }
        if !(self.sigma2_r > 0.0) || !(self.sigma2_d > 0.0) {
            return Err(Error::InvalidConfig("noise variances must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho = {} not in [0, 1)", self.rho)));
        }
        Ok(())
    }

    /// Same network with perfect second-hop CSI.
    pub fn perfect(&self) -> Self {
        NetworkConfig { rho: 0.0, ..self.clone() }
    }
}

/// One Monte Carlo draw of the two hops.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// First hop, `h[i]` is `M_i × N_T`.
    pub h: Vec<DMatrix<Complex64>>,
    /// Estimated second hop, `f_tilde[i]` has length `M_i`.
    pub f_tilde: Vec<DVector<Complex64>>,
    /// Error radii.
    pub eps: Vec<f64>,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn n_relays(&self) -> usize {
        self.h.len()
    }

    pub fn n_t(&self) -> usize {
        self.h.first().map_or(0, |h| h.ncols())
    }

    pub fn f_norms(&self) -> Vec<f64> {
        self.f_tilde.iter().map(|f| norm_sqr(f).sqrt()).collect()
    }

    /// `H_iᴴ H_i` for every relay.
    pub fn grams(&self) -> Vec<DMatrix<Complex64>> {
        self.h.iter().map(crate::linalg::gram).collect()
    }

    /// Copy with all error radii set to zero.
    pub fn with_perfect_csi(&self) -> Self {
        ChannelRealization {
            eps: vec![0.0; self.eps.len()],
            ..self.clone()
        }
    }

    /// Build a realization from explicit matrices, checking shapes and the
    /// small-error assumption.
    pub fn from_parts(
        h: Vec<DMatrix<Complex64>>,
        f_tilde: Vec<DVector<Complex64>>,
        eps: Vec<f64>,
    ) -> Result<Self> {
        let ch = ChannelRealization { h, f_tilde, eps, seed: 0 };
        ch.check()?;
        Ok(ch)
    }

    pub fn check(&self) -> Result<()> {
        let r = self.h.len();
        if r == 0 || self.f_tilde.len() != r || self.eps.len() != r {
            return Err(Error::Dimension("relay count differs across h, f_tilde, eps".into()));
        }
        let n_t = self.h[0].ncols();
        for i in 0..r {
            if self.h[i].ncols() != n_t {
                return Err(Error::Dimension(format!("h[{i}] has {} columns, expected {n_t}", self.h[i].ncols())));
            }
            if self.h[i].nrows() != self.f_tilde[i].len() {
                return Err(Error::Dimension(format!(
                    "h[{i}] has {} rows but f_tilde[{i}] has length {}",
                    self.h[i].nrows(),
                    self.f_tilde[i].len()
                )));
            }
            let fnorm = norm_sqr(&self.f_tilde[i]).sqrt();
            if !(self.eps[i] >= 0.0) || self.eps[i] > fnorm {
                return Err(Error::InvalidConfig(format!(
                    "eps[{i}] = {} outside [0, ||f_tilde||] = [0, {fnorm}]",
                    self.eps[i]
                )));
            }
        }
        Ok(())
    }
}

fn cn(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw i.i.d. CN(0, 1) channels with `eps_i = sqrt(rho) * ||f_tilde_i||`.
///
/// Uses ChaCha8 seeded from `seed`; the draw order is `H_1, f_1, H_2, f_2, …`
/// (row-major within each matrix). A second-hop vector of exactly zero norm
/// is redrawn.
pub fn generate_channels(config: &NetworkConfig, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_rho = config.rho.max(0.0).sqrt();
    let mut h = Vec::with_capacity(config.n_relays());
    let mut f_tilde = Vec::with_capacity(config.n_relays());
    let mut eps = Vec::with_capacity(config.n_relays());
    for &m in &config.relay_antennas {
        let hi = DMatrix::from_row_iterator(m, config.n_t, (0..m * config.n_t).map(|_| cn(&mut rng)));
        let fi = loop {
            let f = DVector::from_iterator(m, (0..m).map(|_| cn(&mut rng)));
            if norm_sqr(&f) > 0.0 {
                break f;
            }
        };
        eps.push(sqrt_rho * norm_sqr(&fi).sqrt());
        h.push(hi);
        f_tilde.push(fi);
    }
    ChannelRealization { h, f_tilde, eps, seed }
}

/// The `2^R` candidate worst-case second-hop magnitude vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    /// Index `k` has `‖f̃_i‖ + ε_i` in coordinate `i` when bit `i` of `k` is
    /// set, `‖f̃_i‖ − ε_i` otherwise.
    pub vertices: Vec<Vec<f64>>,
}

impl VertexSet {
    /// Vertex set with zero error radii, i.e. every slot equals `norms`.
    pub fn perfect(norms: &[f64]) -> Result<Self> {
        vertex_set_from(norms, &vec![0.0; norms.len()])
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn n_relays(&self) -> usize {
        self.vertices.first().map_or(0, |v| v.len())
    }

    /// Distinct vertices in canonical order.
    pub fn unique(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for v in &self.vertices {
            if !out.iter().any(|u| *u == v.as_slice()) {
                out.push(v);
            }
        }
        out
    }
}

/// Enumerate the vertex set of a realization.
pub fn vertex_set(ch: &ChannelRealization) -> Result<VertexSet> {
    vertex_set_from(&ch.f_norms(), &ch.eps)
}

/// Enumerate vertices from second-hop norms and error radii.
pub fn vertex_set_from(norms: &[f64], eps: &[f64]) -> Result<VertexSet> {
    let r = norms.len();
    if eps.len() != r {
        return Err(Error::Dimension("norms and eps lengths differ".into()));
    }
    if r > MAX_VERTEX_RELAYS {
        return Err(Error::TooManyRelays(r));
    }
    for i in 0..r {
        if !(eps[i] >= 0.0) || eps[i] > norms[i] {
            return Err(Error::InvalidConfig(format!(
                "eps[{i}] = {} outside [0, {}]",
                eps[i], norms[i]
            )));
        }
    }
    let vertices = (0..1usize << r)
        .map(|k| {
            (0..r)
                .map(|i| if k >> i & 1 == 1 { norms[i] + eps[i] } else { norms[i] - eps[i] })
                .collect()
        })
        .collect();
    Ok(VertexSet { vertices })
}

/// Per-relay norms of `u_i = H_i g`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveGains {
    pub u_norms: Vec<f64>,
    pub w: Vec<f64>,
}

impl EffectiveGains {
    pub fn from_w(w: &[f64]) -> Self {
        EffectiveGains {
            u_norms: w.iter().map(|x| x.max(0.0).sqrt()).collect(),
            w: w.to_vec(),
        }
    }
}

/// `u_i = H_i g` for every relay.
pub fn relay_inputs(ch: &ChannelRealization, g: &DVector<Complex64>) -> Result<Vec<DVector<Complex64>>> {
    ch.h.iter()
        .enumerate()
        .map(|(i, h)| {
            if h.ncols() != g.len() {
                Err(Error::Dimension(format!(
                    "source vector has length {} but h[{i}] has {} columns",
                    g.len(),
                    h.ncols()
                )))
            } else {
                Ok(h * g)
            }
        })
        .collect()
}

pub fn effective_gains(ch: &ChannelRealization, g: &DVector<Complex64>) -> Result<EffectiveGains> {
    let u = relay_inputs(ch, g)?;
    let w: Vec<f64> = u.iter().map(norm_sqr).collect();
    Ok(EffectiveGains {
        u_norms: w.iter().map(|x| x.sqrt()).collect(),
        w,
    })
}

/// A complete joint source/relay design.
#[derive(Debug, Clone)]
pub struct BeamformingSolution {
    pub g: DVector<Complex64>,
    pub c: Vec<f64>,
    pub relay_matrices: Vec<DMatrix<Complex64>>,
    pub worst_snr: f64,
    pub worst_vertex: usize,
    /// Relays whose input `u_i` vanished; their matrix is zero.
    pub inactive: Vec<bool>,
}

impl BeamformingSolution {
    /// Assemble the relay matrices for `(g, c)` and evaluate the worst case.
    pub fn assemble(
        ch: &ChannelRealization,
        config: &NetworkConfig,
        g: DVector<Complex64>,
        c: Vec<f64>,
    ) -> Result<Self> {
        let gains = effective_gains(ch, &g)?;
        let vertices = vertex_set(ch)?;
        let ctx = crate::snr::SnrContext::new(gains.u_norms.clone(), config);
        let (worst_snr, worst_vertex) = crate::snr::worst_case_snr(&c, &vertices, &ctx);
        let (relay_matrices, inactive) = crate::snr::assemble_relay_matrices(&c, ch, &g)?;
        Ok(BeamformingSolution { g, c, relay_matrices, worst_snr, worst_vertex, inactive })
    }

    /// Check the source and per-relay power constraints within `tol`.
    pub fn satisfies_power(&self, ch: &ChannelRealization, config: &NetworkConfig, tol: f64) -> Result<bool> {
        if norm_sqr(&self.g) > config.p_s + tol {
            return Ok(false);
        }
        let u = relay_inputs(ch, &self.g)?;
        for (i, b) in self.relay_matrices.iter().enumerate() {
            if crate::snr::relay_power(b, &u[i], config.sigma2_r) > config.p_relay[i] + tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rho: f64) -> NetworkConfig {
        NetworkConfig::from_db(2, vec![2, 2], 10.0, 20.0, rho).unwrap()
    }

    #[test]
    fn zero_rho_gives_zero_radii() {
        let ch = generate_channels(&cfg(0.0), 42);
        assert!(ch.eps.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_channels(&cfg(0.3), 9), generate_channels(&cfg(0.3), 9));
        assert_ne!(generate_channels(&cfg(0.3), 9), generate_channels(&cfg(0.3), 10));
    }

    #[test]
    fn radii_follow_rho() {
        let ch = generate_channels(&cfg(0.25), 7);
        for (f, e) in ch.f_tilde.iter().zip(&ch.eps) {
            let n = norm_sqr(f).sqrt();
            assert!((e - 0.5 * n).abs() < 1e-14 * n.max(1.0));
        }
        ch.check().unwrap();
    }

    #[test]
    fn channel_entries_have_unit_power() {
        let config = NetworkConfig::from_db(3, vec![2, 3], 10.0, 20.0, 0.0).unwrap();
        let (mut sum, mut count) = (0.0, 0usize);
        for seed in 0..1000u64 {
            let ch = generate_channels(&config, seed);
            for h in &ch.h {
                sum += h.iter().map(|x| x.norm_sqr()).sum::<f64>();
                count += h.len();
            }
            for f in &ch.f_tilde {
                sum += norm_sqr(f);
                count += f.len();
            }
        }
        assert!(count >= 10_000);
        let mean = sum / count as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean |entry|^2 = {mean}");
    }

    #[test]
    fn vertex_enumeration_order() {
        let v = vertex_set_from(&[1.0, 2.0], &[0.1, 0.2]).unwrap();
        let expect = [[0.9, 1.8], [1.1, 1.8], [0.9, 2.2], [1.1, 2.2]];
        assert_eq!(v.len(), 4);
        for (got, want) in v.vertices.iter().zip(expect) {
            for (a, b) in got.iter().zip(want) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn perfect_csi_vertices_collapse() {
        let v = vertex_set_from(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v.unique().len(), 1);
        assert_eq!(v.unique()[0], &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn three_relays_eight_vertices() {
        let v = vertex_set_from(&[1.0, 2.0, 3.0], &[0.5, 0.25, 1.0]).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v.unique().len(), 8);
        for z in &v.vertices {
            assert!(z[0] == 0.5 || z[0] == 1.5);
            assert!(z[1] == 1.75 || z[1] == 2.25);
            assert!(z[2] == 2.0 || z[2] == 4.0);
        }
    }

    #[test]
    fn vertex_guards() {
        assert!(matches!(vertex_set_from(&[1.0; 17], &[0.0; 17]), Err(Error::TooManyRelays(17))));
        assert!(vertex_set_from(&[1.0], &[1.5]).is_err());
    }

    #[test]
    fn vertices_positive_for_rho_below_one() {
        let config = NetworkConfig::from_db(2, vec![1, 2, 3], 10.0, 20.0, 0.9).unwrap();
        for seed in 0..50 {
            let v = vertex_set(&generate_channels(&config, seed)).unwrap();
            assert!(v.vertices.iter().flatten().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn effective_gains_identity_channel() {
        let ps: f64 = 10.0;
        let ch = ChannelRealization::from_parts(
            vec![DMatrix::identity(2, 2)],
            vec![DVector::from_element(2, Complex64::new(1.0, 0.0))],
            vec![0.0],
        )
        .unwrap();
        let g = DVector::from_vec(vec![Complex64::new(ps.sqrt(), 0.0), Complex64::new(0.0, 0.0)]);
        let e = effective_gains(&ch, &g).unwrap();
        assert!((e.u_norms[0] - ps.sqrt()).abs() < 1e-15);
        let z = effective_gains(&ch, &DVector::zeros(2)).unwrap();
        assert_eq!(z.u_norms, vec![0.0]);
        assert!(effective_gains(&ch, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn effective_gains_match_direct_product() {
        let ch = generate_channels(&cfg(0.1), 3);
        let g = DVector::from_vec(vec![Complex64::new(0.3, -1.0), Complex64::new(1.2, 0.4)]);
        let e = effective_gains(&ch, &g).unwrap();
        for i in 0..2 {
            let mut acc = 0.0;
            for r in 0..2 {
                let mut s = Complex64::new(0.0, 0.0);
                for c in 0..2 {
                    s += ch.h[i][(r, c)] * g[c];
                }
                acc += s.norm_sqr();
            }
            assert!((e.w[i] - acc).abs() < 1e-12);
            assert!((e.u_norms[i] * e.u_norms[i] - e.w[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::from_db(2, vec![], 10.0, 20.0, 0.0).is_err());
        assert!(NetworkConfig::from_db(2, vec![2], 10.0, 20.0, 1.0).is_err());
        let mut c = cfg(0.0);
        c.p_relay.push(1.0);
        assert!(c.validate().is_err());
    }
}
