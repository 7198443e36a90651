use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::cone::{smat, svec, ConeSpec, ConicProblem};
use super::{counted_solve, record_rank_check};
use crate::error::{Error, Result};
use crate::linalg::{complex_from_embedding, fix_phase, hermitian_defect, jacobi_eigen, real_embedding};

/// How the gain profile constrains the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProfileMode {
    /// `tr(K_i G) = ω_i Q` for every relay.
    #[default]
    Equality,
    /// `tr(K_i G) ≥ ω_i Q`: the largest `Q` such that `Q ω` is dominated
    /// by an achievable gain vector.
    Dominating,
}

/// Rate-profile problem: maximise `Q` over Hermitian PSD `G` with
/// `tr G = P_s` and gains `tr(K_i G)` along the profile `ω`.
#[derive(Debug, Clone)]
pub struct RateProfileSdp {
    pub gram_list: Vec<DMatrix<Complex64>>,
    pub omega: Vec<f64>,
    pub p_s: f64,
    pub mode: ProfileMode,
}

impl RateProfileSdp {
    pub fn new(gram_list: Vec<DMatrix<Complex64>>, omega: Vec<f64>, p_s: f64) -> Result<Self> {
        let sdp = RateProfileSdp { gram_list, omega, p_s, mode: ProfileMode::Equality };
        sdp.validate()?;
        Ok(sdp)
    }

    pub fn with_mode(mut self, mode: ProfileMode) -> Self {
        self.mode = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.gram_list.is_empty() || self.gram_list.len() != self.omega.len() {
            return Err(Error::Dimension("one profile weight per gain matrix expected".into()));
        }
        let n = self.gram_list[0].nrows();
        for k in &self.gram_list {
            if k.nrows() != n || k.ncols() != n {
                return Err(Error::Dimension("gain matrices must share one square shape".into()));
            }
            let scale = k.iter().map(|x| x.norm()).fold(1.0, f64::max);
            let d = hermitian_defect(k);
            if d > 1e-10 * scale {
                return Err(Error::NotHermitian(d));
            }
        }
        let sum: f64 = self.omega.iter().sum();
        if self.omega.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("profile must be nonnegative and sum to 1 (sum {sum})")));
        }
        if !(self.p_s > 0.0) {
            return Err(Error::InvalidConfig("source power must be positive".into()));
        }
        Ok(())
    }

    /// Conic form over `(svec(X), Q̂)` with `X` the real embedding of
    /// `G / P_s`. Returns the problem and the gain scale.
    pub fn to_conic(&self) -> (ConicProblem, f64) {
        let r = self.gram_list.len();
        let n2 = 2 * self.gram_list[0].nrows();
        let d = n2 * (n2 + 1) / 2;
        let ks = self.gram_list.iter().map(|k| k.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let rows: Vec<DVector<f64>> =
            self.gram_list.iter().map(|k| svec(&real_embedding(&k.unscale(ks))) * 0.5).collect();
        let trace_row = svec(&DMatrix::identity(n2, n2)) * 0.5;

        let n = d + 1;
        let mut c = DVector::zeros(n);
        c[d] = -1.0;
        let (nonneg, n_eq) = match self.mode {
            ProfileMode::Equality => (0, r + 1),
            ProfileMode::Dominating => (r, 1),
        };
        let mut a = DMatrix::zeros(n_eq, n);
        let mut b = DVector::zeros(n_eq);
        let mut g = DMatrix::zeros(nonneg + d, n);
        let h = DVector::zeros(nonneg + d);
        match self.mode {
            ProfileMode::Equality => {
                for i in 0..r {
                    a.view_mut((i, 0), (1, d)).copy_from(&rows[i].transpose());
                    a[(i, d)] = -self.omega[i];
                }
            }
            ProfileMode::Dominating => {
                for i in 0..r {
                    g.view_mut((i, 0), (1, d)).copy_from(&(-&rows[i]).transpose());
                    g[(i, d)] = self.omega[i];
                }
            }
        }
        a.view_mut((n_eq - 1, 0), (1, d)).copy_from(&trace_row.transpose());
        b[n_eq - 1] = 1.0;
        for k in 0..d {
            g[(nonneg + k, k)] = -1.0;
        }
        let p = ConicProblem { c, g, h, a, b, cones: ConeSpec { nonneg, soc: vec![], psd: vec![n2] } };
        (p, ks)
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub g_matrix: DMatrix<Complex64>,
    pub q: f64,
    /// Nonnegative multipliers of the gain constraints, normalised to sum 1.
    pub multipliers: Vec<f64>,
    pub trace_residual: f64,
    pub min_eigenvalue: f64,
    pub iterations: usize,
}

/// Solve the rate-profile SDP. Infeasible profiles (possible only in
/// [`ProfileMode::Equality`]) surface as [`Error::Infeasible`].
pub fn solve_rate_profile_sdp(sdp: &RateProfileSdp) -> Result<SdpSolution> {
    sdp.validate()?;
    let r = sdp.gram_list.len();
    let n2 = 2 * sdp.gram_list[0].nrows();
    let d = n2 * (n2 + 1) / 2;
    let (p, ks) = sdp.to_conic();
    let sol = counted_solve(&p)?;
    let x = smat(&sol.x.as_slice()[..d], n2);
    let g_matrix = complex_from_embedding(&x).scale(sdp.p_s);
    let q = sol.x[d] * sdp.p_s * ks;
    let raw: Vec<f64> = match sdp.mode {
        ProfileMode::Equality => sol.y.iter().take(r).map(|v| v.abs()).collect(),
        ProfileMode::Dominating => sol.z.iter().take(r).map(|v| v.max(0.0)).collect(),
    };
    let total: f64 = raw.iter().sum();
    let multipliers = if total > 0.0 { raw.iter().map(|v| v / total).collect() } else { vec![1.0 / r as f64; r] };
    let trace: f64 = g_matrix.diagonal().iter().map(|z| z.re).sum();
    let eig = jacobi_eigen(&g_matrix);
    Ok(SdpSolution {
        q,
        multipliers,
        trace_residual: (trace - sdp.p_s).abs(),
        min_eigenvalue: eig.values[eig.values.len() - 1],
        g_matrix,
        iterations: sol.iterations,
    })
}

/// Principal rank-one factor of a covariance.
#[derive(Debug, Clone)]
pub struct RankOne {
    /// `√P_s` times the principal eigenvector (phase-normalised).
    pub g: DVector<Complex64>,
    /// `λ₂ / λ₁`; zero for rank-one input.
    pub ratio: f64,
    /// Set when `ratio > 1e-4`.
    pub degenerate: bool,
}

pub fn rank_one_extract(g_matrix: &DMatrix<Complex64>, p_s: f64) -> Result<RankOne> {
    if g_matrix.nrows() != g_matrix.ncols() || g_matrix.nrows() == 0 {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    record_rank_check();
    let e = jacobi_eigen(g_matrix);
    let l1 = e.values[0];
    let l2 = if e.values.len() > 1 { e.values[1].max(0.0) } else { 0.0 };
    let ratio = if l1 > 0.0 { l2 / l1 } else { 1.0 };
    let mut v = e.vectors.column(0).into_owned();
    fix_phase(&mut v);
    let degenerate = ratio > 1e-4;
    if degenerate {
        log::debug!("covariance is not rank one: eigenvalue ratio {ratio:.3e}");
    }
    Ok(RankOne { g: v.scale(p_s.sqrt()), ratio, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::principal_eigvec;
    use crate::linalg::norm_sqr;
    use crate::model::{generate_channels, NetworkConfig};

    #[test]
    fn single_relay_is_rayleigh_quotient() {
        let config = NetworkConfig::from_db(3, vec![2], 10.0, 20.0, 0.0).unwrap();
        let ch = generate_channels(&config, 3);
        let k = ch.grams();
        let sdp = RateProfileSdp::new(k.clone(), vec![1.0], config.p_s).unwrap();
        let sol = solve_rate_profile_sdp(&sdp).unwrap();
        let (v, l) = principal_eigvec(&k[0]).unwrap();
        assert!((sol.q - config.p_s * l).abs() < 1e-6 * sol.q);
        assert!(sol.trace_residual < 1e-7);
        assert!(sol.min_eigenvalue > -1e-9);
        let expect = (&v * v.adjoint()).scale(config.p_s);
        assert!((&sol.g_matrix - expect).norm() < 1e-5 * config.p_s);
    }

    #[test]
    fn identical_identity_gains() {
        let id = DMatrix::<Complex64>::identity(2, 2);
        let sdp = RateProfileSdp::new(vec![id.clone(), id.clone(), id], vec![1.0 / 3.0; 3], 4.0).unwrap();
        let sol = solve_rate_profile_sdp(&sdp).unwrap();
        assert!((sol.q - 12.0).abs() < 1e-6);
    }

    #[test]
    fn dominating_profile_matches_one_dimensional_search() {
        let config = NetworkConfig::from_db(2, vec![2, 2], 10.0, 20.0, 0.0).unwrap();
        for seed in 0..5 {
            let ch = generate_channels(&config, seed);
            let k = ch.grams();
            let omega = vec![0.5, 0.5];
            let sdp = RateProfileSdp::new(k.clone(), omega.clone(), config.p_s).unwrap().with_mode(ProfileMode::Dominating);
            let sol = solve_rate_profile_sdp(&sdp).unwrap();
            let mut best = 0.0f64;
            let n = 20000;
            for t in 0..=n {
                let mu = t as f64 / n as f64;
                let m = k[0].scale(mu) + k[1].scale(1.0 - mu);
                let (v, _) = principal_eigvec(&m).unwrap();
                let g = v.scale(config.p_s.sqrt());
                let w: Vec<f64> = ch.h.iter().map(|h| norm_sqr(&(h * &g))).collect();
                best = best.max((w[0] / omega[0]).min(w[1] / omega[1]));
            }
            assert!((sol.q - best).abs() <= 1e-4 * best, "seed {seed}: sdp {} vs search {best}", sol.q);
        }
    }

    #[test]
    fn equality_profile_on_identical_channels() {
        let config = NetworkConfig::from_db(2, vec![2], 10.0, 20.0, 0.0).unwrap();
        let ch = generate_channels(&config, 8);
        let k = ch.grams()[0].clone();
        let ok = RateProfileSdp::new(vec![k.clone(), k.clone()], vec![0.5, 0.5], config.p_s).unwrap();
        assert!(solve_rate_profile_sdp(&ok).is_ok());
        let bad = RateProfileSdp::new(vec![k.clone(), k], vec![0.8, 0.2], config.p_s).unwrap();
        match solve_rate_profile_sdp(&bad) {
            Err(Error::Infeasible { .. }) => {}
            Ok(sol) => assert!(sol.q < 1e-6, "expected infeasible or zero scale, got q = {}", sol.q),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn rank_one_conventions() {
        let p_s = 10.0;
        let mut e1 = DMatrix::<Complex64>::zeros(2, 2);
        e1[(0, 0)] = Complex64::new(p_s, 0.0);
        let r = rank_one_extract(&e1, p_s).unwrap();
        assert!(!r.degenerate && (r.g[0].re - p_s.sqrt()).abs() < 1e-12);

        let half = DMatrix::<Complex64>::identity(2, 2).scale(p_s / 2.0);
        let r = rank_one_extract(&half, p_s).unwrap();
        assert!(r.degenerate);
        assert!((r.g[0].re - p_s.sqrt()).abs() < 1e-12 && r.g[1].norm() < 1e-12);
    }

    #[test]
    fn rank_one_reconstruction() {
        let v = DVector::from_vec(vec![Complex64::new(0.3, -1.0), Complex64::new(1.2, 0.4), Complex64::new(-0.2, 0.1)]);
        let v = v.unscale(norm_sqr(&v).sqrt());
        let p_s = 7.0;
        let gm = (&v * v.adjoint()).scale(p_s);
        let r = rank_one_extract(&gm, p_s).unwrap();
        let rec = &r.g * r.g.adjoint();
        assert!((rec - &gm).norm() / gm.norm() <= 1e-8);
    }

    #[test]
    fn rejects_bad_profiles() {
        let id = DMatrix::<Complex64>::identity(2, 2);
        assert!(RateProfileSdp::new(vec![id.clone(), id.clone()], vec![0.5, 0.6], 1.0).is_err());
        assert!(RateProfileSdp::new(vec![id], vec![1.0, 0.0], 1.0).is_err());
    }
}
