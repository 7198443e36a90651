use nalgebra::{DMatrix, DVector};

use super::cone::{ConeSpec, ConicProblem};
use super::counted_solve;
use crate::error::{Error, Result};
use crate::model::VertexSet;
use crate::snr::SnrContext;

/// Parametric power-allocation subproblem for a fixed SNR level `gamma`:
///
/// ```text
/// maximize τ  over 0 ≤ c ≤ caps
/// subject to  Σ f_i c_i u_i − √γ ‖(σ_R f ∘ c, σ_D)‖ ≥ τ  for every vertex f
/// ```
///
/// The optimal `τ` is nonnegative exactly when worst-case SNR `γ` is
/// achievable, and zero at the optimal `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocpSubproblem {
    pub u_norms: Vec<f64>,
    pub vertices: VertexSet,
    pub caps: Vec<f64>,
    pub gamma: f64,
    pub sigma2_r: f64,
    pub sigma2_d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocpSolution {
    pub c: Vec<f64>,
    pub tau: f64,
    /// Complementarity `sᵀz` at the returned point, in the scaled problem.
    pub gap: f64,
    pub iterations: usize,
}

impl SocpSubproblem {
    pub fn new(ctx: &SnrContext, vertices: &VertexSet, gamma: f64) -> Self {
        SocpSubproblem {
            u_norms: ctx.u_norms.clone(),
            vertices: vertices.clone(),
            caps: ctx.caps(),
            gamma,
            sigma2_r: ctx.sigma2_r,
            sigma2_d: ctx.sigma2_d,
        }
    }

    fn validate(&self) -> Result<()> {
        let r = self.u_norms.len();
        if self.caps.len() != r || self.vertices.vertices.iter().any(|v| v.len() != r) || self.vertices.is_empty() {
            return Err(Error::Dimension("SOCP subproblem sizes disagree".into()));
        }
        if !(self.gamma >= 0.0) || self.caps.iter().any(|&c| !(c >= 0.0)) {
            return Err(Error::InvalidConfig(format!("gamma {} and caps must be nonnegative", self.gamma)));
        }
        Ok(())
    }

    /// `Σ f_i c_i u_i − √γ ‖(σ_R f ∘ c, σ_D)‖` at one vertex.
    pub fn margin(&self, c: &[f64], f: &[f64]) -> f64 {
        let mut lin = 0.0;
        let mut quad = self.sigma2_d;
        for i in 0..c.len() {
            lin += f[i] * c[i] * self.u_norms[i];
            quad += self.sigma2_r * f[i] * f[i] * c[i] * c[i];
        }
        lin - self.gamma.sqrt() * quad.sqrt()
    }

    /// Smallest margin over the vertex set.
    pub fn min_margin(&self, c: &[f64]) -> f64 {
        self.vertices.vertices.iter().map(|f| self.margin(c, f)).fold(f64::INFINITY, f64::min)
    }

    /// Conic form in the variables `(c_i / cap_i, τ / S)`, returning the
    /// problem and the scale `S`.
    pub fn to_conic(&self) -> (ConicProblem, f64) {
        let r = self.u_norms.len();
        let verts = self.vertices.unique();
        let kappa = self.gamma.sqrt();
        let sr = self.sigma2_r.sqrt();
        let sd = self.sigma2_d.sqrt();
        let alpha: Vec<Vec<f64>> =
            verts.iter().map(|f| (0..r).map(|i| f[i] * self.u_norms[i] * self.caps[i]).collect()).collect();
        let scale = alpha.iter().map(|a| a.iter().sum::<f64>()).fold(1.0, f64::max);

        let n = r + 1;
        let q = r + 2;
        let m = 2 * r + verts.len() * q;
        let mut g = DMatrix::zeros(m, n);
        let mut h = DVector::zeros(m);
        for i in 0..r {
            g[(i, i)] = -1.0;
            g[(r + i, i)] = 1.0;
            h[r + i] = 1.0;
        }
        for (k, f) in verts.iter().enumerate() {
            let off = 2 * r + k * q;
            for i in 0..r {
                g[(off, i)] = -alpha[k][i] / scale;
                g[(off + 1 + i, i)] = -kappa * sr * f[i] * self.caps[i] / scale;
            }
            g[(off, r)] = 1.0;
            h[off + q - 1] = kappa * sd / scale;
        }
        let mut c = DVector::zeros(n);
        c[r] = -1.0;
        let p = ConicProblem {
            c,
            g,
            h,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            cones: ConeSpec { nonneg: 2 * r, soc: vec![q; verts.len()], psd: vec![] },
        };
        (p, scale)
    }
}

/// Solve the subproblem with the interior-point kernel.
pub fn solve_socp(sub: &SocpSubproblem) -> Result<SocpSolution> {
    sub.validate()?;
    let r = sub.u_norms.len();
    let (p, scale) = sub.to_conic();
    let sol = counted_solve(&p)?;
    let c: Vec<f64> = (0..r).map(|i| sol.x[i].clamp(0.0, 1.0) * sub.caps[i]).collect();
    Ok(SocpSolution { c, tau: sol.x[r] * scale, gap: sol.gap, iterations: sol.iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::{jing_power_allocation, perfect_snr};
    use crate::model::vertex_set_from;

    fn sub(u: &[f64], f: &[f64], eps: &[f64], p: &[f64], gamma: f64) -> SocpSubproblem {
        let ctx = SnrContext { u_norms: u.to_vec(), sigma2_r: 1.0, sigma2_d: 1.0, p_relay: p.to_vec() };
        SocpSubproblem::new(&ctx, &vertex_set_from(f, eps).unwrap(), gamma)
    }

    #[test]
    fn zero_gamma_saturates_every_relay() {
        let s = sub(&[1.0, 0.5, 2.0], &[1.0, 2.0, 0.3], &[0.1, 0.2, 0.1], &[10.0, 20.0, 5.0], 0.0);
        let sol = solve_socp(&s).unwrap();
        for (c, cap) in sol.c.iter().zip(&s.caps) {
            assert!((c - cap).abs() < 1e-7 * cap, "{c} vs {cap}");
        }
    }

    #[test]
    fn fixed_point_at_closed_form_optimum() {
        let (u, f, p) = ([1.3], [0.8], [100.0]);
        let j = jing_power_allocation(&u, &f, &p, 1.0, 1.0);
        let gamma = perfect_snr(&j.c, &u, &f, 1.0, 1.0);
        let sol = solve_socp(&sub(&u, &f, &[0.0], &p, gamma)).unwrap();
        assert!(sol.tau.abs() < 1e-8, "tau = {}", sol.tau);
    }

    #[test]
    fn grid_oracle_two_relays() {
        let s = sub(&[1.2, 0.7], &[0.9, 1.6], &[0.3, 0.5], &[30.0, 80.0], 20.0);
        let sol = solve_socp(&s).unwrap();
        let n = 200;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let c = [s.caps[0] * i as f64 / n as f64, s.caps[1] * j as f64 / n as f64];
                best = best.max(s.min_margin(&c));
            }
        }
        assert!((sol.tau - best).abs() < 1e-3 * (1.0 + best.abs()), "{} vs grid {best}", sol.tau);
        assert!(sol.tau >= best - 1e-9);
        // returned point attains τ
        assert!((s.min_margin(&sol.c) - sol.tau).abs() < 1e-6);
    }

    #[test]
    fn infeasible_level_gives_negative_tau() {
        let s = sub(&[1.0], &[1.0], &[0.0], &[1.0], 1e6);
        assert!(solve_socp(&s).unwrap().tau < 0.0);
    }
}
