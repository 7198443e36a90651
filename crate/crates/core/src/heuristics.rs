//! Low-complexity source beamformers: finite-difference gradient ascent on
//! the worst-case SNR, the simplified robust design, and the non-robust
//! baseline designed as if the estimated channels were exact.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::closedform::{jing_power_allocation, perfect_snr, principal_eigvec};
use crate::dinkelbach::{allocate_for_g, dinkelbach_solve};
use crate::error::{Error, Result};
use crate::linalg::norm_sqr;
use crate::model::{effective_gains, vertex_set, ChannelRealization, NetworkConfig};
use crate::pa::{pa_solve_with, PaOptions};
use crate::snr::{worst_case_snr, SnrContext};

pub const MAX_GRADIENT_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientOptions {
    /// Finite-difference step; `None` means `1e-4·√P_s`.
    pub fd_delta: Option<f64>,
    pub max_steps: usize,
    /// Steps improving the SNR by less than this fraction end the search.
    pub min_rel_improvement: f64,
    pub armijo: f64,
    /// Dinkelbach tolerance of the SNR evaluations.
    pub delta1: f64,
}

impl Default for GradientOptions {
    fn default() -> Self {
        GradientOptions { fd_delta: None, max_steps: MAX_GRADIENT_STEPS, min_rel_improvement: 1e-4, armijo: 1e-4, delta1: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOutcome {
    pub g: DVector<Complex64>,
    pub snr: f64,
    /// Accepted ascent steps.
    pub steps: usize,
    /// SNR evaluations, each one power allocation.
    pub evaluations: usize,
}

/// Result of designing with the estimated channels as if they were exact.
#[derive(Debug, Clone, PartialEq)]
pub struct NonrobustOutcome {
    pub g: DVector<Complex64>,
    pub c: Vec<f64>,
    /// SNR at the estimated channels.
    pub snr_nominal: f64,
    /// SNR under the worst admissible error.
    pub snr_worst: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedOutcome {
    pub g: DVector<Complex64>,
    pub c: Vec<f64>,
    pub snr: f64,
}

/// Projected gradient ascent on the worst-case SNR with default options
/// and the given finite-difference step. Returns `(g, snr)`.
pub fn robust_gradient(
    ch: &ChannelRealization,
    config: &NetworkConfig,
    g0: &DVector<Complex64>,
    fd_delta: f64,
) -> Result<(DVector<Complex64>, f64)> {
    let opts = GradientOptions { fd_delta: Some(fd_delta), ..GradientOptions::default() };
    let out = robust_gradient_with(ch, config, g0, &opts)?;
    Ok((out.g, out.snr))
}

/// Projected gradient ascent on the sphere `‖g‖² = P_s`.
///
/// The gradient over `[Re g; Im g]` is estimated by central differences,
/// its radial part removed, and the step chosen by Armijo backtracking.
/// The search stops at the first step that fails the line search or
/// improves the SNR by less than `min_rel_improvement`, keeping the
/// current point, so accepted steps never decrease the SNR.
pub fn robust_gradient_with(
    ch: &ChannelRealization,
    config: &NetworkConfig,
    g0: &DVector<Complex64>,
    opts: &GradientOptions,
) -> Result<GradientOutcome> {
    ch.check()?;
    let n = ch.n_t();
    if g0.len() != n {
        return Err(Error::Dimension(format!("source beamformer has {} entries, expected {n}", g0.len())));
    }
    if norm_sqr(g0) > config.p_s * (1.0 + 1e-9) {
        return Err(Error::InvalidConfig("initial beamformer exceeds the source power".into()));
    }
    let amp = config.p_s.sqrt();
    let h = opts.fd_delta.unwrap_or(1e-4 * amp);
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("fd_delta must be positive, got {h}")));
    }
    let eval = |g: &DVector<Complex64>| allocate_for_g(ch, config, g, opts.delta1).map(|p| p.gamma);
    let unit = |k: usize| {
        let mut e = DVector::<Complex64>::zeros(n);
        e[k % n] = if k < n { Complex64::new(h, 0.0) } else { Complex64::new(0.0, h) };
        e
    };

    let mut g = g0.clone();
    let mut snr = eval(&g)?;
    let mut evaluations = 1;
    let mut steps = 0;
    if norm_sqr(&g) == 0.0 {
        return Ok(GradientOutcome { g, snr, steps, evaluations });
    }
    while steps < opts.max_steps {
        let diffs: Vec<f64> = (0..2 * n)
            .into_par_iter()
            .map(|k| {
                let e = unit(k);
                Ok((eval(&(&g + &e))? - eval(&(&g - &e))?) / (2.0 * h))
            })
            .collect::<Result<_>>()?;
        evaluations += 4 * n;
        let grad = DVector::from_fn(n, |i, _| Complex64::new(diffs[i], diffs[n + i]));
        // tangent part on the sphere through g
        let radial = g.dotc(&grad).re / norm_sqr(&g);
        let dir = &grad - g.scale(radial);
        let dir_sq = norm_sqr(&dir);
        if !(dir_sq > 0.0) || !dir_sq.is_finite() {
            break;
        }
        let mut alpha = 0.5 * amp / dir_sq.sqrt();
        let mut accepted = None;
        for _ in 0..40 {
            let raw = &g + dir.scale(alpha);
            let cand = raw.scale(amp / norm_sqr(&raw).sqrt());
            let value = eval(&cand)?;
            evaluations += 1;
            if value >= snr + opts.armijo * alpha * dir_sq {
                accepted = Some((cand, value));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((cand, value)) if value - snr >= opts.min_rel_improvement * snr.abs() => {
                g = cand;
                snr = value;
                steps += 1;
            }
            _ => break,
        }
    }
    Ok(GradientOutcome { g, snr, steps, evaluations })
}

/// Non-robust baseline with the default tolerances.
pub fn nonrobust_baseline(ch: &ChannelRealization, config: &NetworkConfig) -> Result<NonrobustOutcome> {
    nonrobust_baseline_with(ch, config, &PaOptions::default())
}

/// Optimal perfect-CSI design for the estimated channels, evaluated under
/// the worst admissible error.
pub fn nonrobust_baseline_with(ch: &ChannelRealization, config: &NetworkConfig, opts: &PaOptions) -> Result<NonrobustOutcome> {
    let g = pa_solve_with(&ch.with_perfect_csi(), config, opts)?.g;
    nonrobust_from_g(ch, config, &g)
}

/// Non-robust power allocation and its evaluation for a given beamformer.
pub fn nonrobust_from_g(ch: &ChannelRealization, config: &NetworkConfig, g: &DVector<Complex64>) -> Result<NonrobustOutcome> {
    let gains = effective_gains(ch, g)?;
    let f = ch.f_norms();
    let u = gains.u_norms;
    let j = jing_power_allocation(&u, &f, &config.p_relay, config.sigma2_r, config.sigma2_d);
    let snr_nominal = perfect_snr(&j.c, &u, &f, config.sigma2_r, config.sigma2_d);
    let ctx = SnrContext::new(u, config);
    let snr_worst = worst_case_snr(&j.c, &vertex_set(ch)?, &ctx).0;
    Ok(NonrobustOutcome { g: g.clone(), c: j.c, snr_nominal, snr_worst })
}

/// Simplified robust design with the default tolerances.
pub fn simplified_robust(ch: &ChannelRealization, config: &NetworkConfig) -> Result<SimplifiedOutcome> {
    let opts = PaOptions::default();
    let base = nonrobust_baseline_with(ch, config, &opts)?;
    simplified_from_g(ch, config, &base.g, opts.delta1)
}

/// Robust power allocation for the non-robust beamformer `g`.
pub fn simplified_from_g(
    ch: &ChannelRealization,
    config: &NetworkConfig,
    g: &DVector<Complex64>,
    delta1: f64,
) -> Result<SimplifiedOutcome> {
    let gains = effective_gains(ch, g)?;
    let ctx = SnrContext::new(gains.u_norms, config);
    let power = dinkelbach_solve(&vertex_set(ch)?, &ctx, delta1)?;
    Ok(SimplifiedOutcome { g: g.clone(), c: power.c, snr: power.gamma })
}

/// Gradient ascent on the perfect-CSI SNR of the estimated channels, started
/// from the principal eigenvector of `Σ H_iᴴH_i`. Returns the nominal SNR.
pub fn perfect_gradient(ch: &ChannelRealization, config: &NetworkConfig, opts: &GradientOptions) -> Result<GradientOutcome> {
    let perfect = ch.with_perfect_csi();
    let grams = perfect.grams();
    let mut sum = grams[0].clone();
    for k in &grams[1..] {
        sum += k;
    }
    let (v, _) = principal_eigvec(&sum)?;
    robust_gradient_with(&perfect, config, &v.scale(config.p_s.sqrt()), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_channels;
    use crate::pa::pa_solve;

    fn config(n_t: usize, rho: f64) -> NetworkConfig {
        NetworkConfig::from_db(n_t, vec![2, 2], 10.0, 20.0, rho).unwrap()
    }

    #[test]
    fn single_antenna_source_returns_start() {
        let cfg = config(1, 0.3);
        let ch = generate_channels(&cfg, 3);
        let g0 = DVector::from_element(1, Complex64::new(0.0, cfg.p_s.sqrt()));
        let out = robust_gradient_with(&ch, &cfg, &g0, &GradientOptions::default()).unwrap();
        assert_eq!(out.g, g0);
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn gradient_is_stationary_at_the_optimum() {
        let cfg = config(2, 0.3);
        for seed in 0..2 {
            let ch = generate_channels(&cfg, seed);
            let pa = pa_solve_with(&ch, &cfg, &PaOptions { delta1: 1e-6, delta2: 1e-3, ..PaOptions::default() }).unwrap();
            let out = robust_gradient_with(&ch, &cfg, &pa.g, &GradientOptions::default()).unwrap();
            let start = allocate_for_g(&ch, &cfg, &pa.g, 1e-6).unwrap().gamma;
            assert!(out.snr >= start);
            assert!(out.snr - start <= 1e-3 + 1e-6 * start, "{} vs {start}", out.snr);
        }
    }

    #[test]
    fn gradient_is_monotone_and_bounded_by_pa() {
        let cfg = config(2, 0.3);
        for seed in 10..14 {
            let ch = generate_channels(&cfg, seed);
            let base = nonrobust_baseline(&ch, &cfg).unwrap();
            let start = allocate_for_g(&ch, &cfg, &base.g, 1e-6).unwrap().gamma;
            let out = robust_gradient_with(&ch, &cfg, &base.g, &GradientOptions::default()).unwrap();
            assert!(out.snr >= start);
            let pa = pa_solve(&ch, &cfg, 0.1).unwrap();
            assert!(out.snr <= pa.snr + 0.1 + 1e-6, "{} vs {}", out.snr, pa.snr);
        }
    }

    #[test]
    fn rejects_overpowered_start() {
        let cfg = config(2, 0.3);
        let ch = generate_channels(&cfg, 0);
        let g0 = DVector::from_element(2, Complex64::new(cfg.p_s, 0.0));
        assert!(robust_gradient(&ch, &cfg, &g0, 1e-3).is_err());
    }

    #[test]
    fn perfect_csi_baseline_is_exact() {
        let cfg = config(2, 0.0);
        let ch = generate_channels(&cfg, 5);
        let base = nonrobust_baseline(&ch, &cfg).unwrap();
        assert!((base.snr_worst - base.snr_nominal).abs() <= 1e-12 * base.snr_nominal);
        let simple = simplified_robust(&ch, &cfg).unwrap();
        assert_eq!(simple.g, base.g);
        assert!((simple.snr - base.snr_nominal).abs() <= 1e-4 * base.snr_nominal);
    }

    #[test]
    fn dominance_chain() {
        let cfg = config(2, 0.5);
        for seed in 0..6 {
            let ch = generate_channels(&cfg, seed);
            let base = nonrobust_baseline(&ch, &cfg).unwrap();
            assert!(base.snr_worst <= base.snr_nominal);
            let simple = simplified_from_g(&ch, &cfg, &base.g, 0.01).unwrap();
            assert!(simple.snr >= base.snr_worst - 1e-9, "{} vs {}", simple.snr, base.snr_worst);
            let pa = pa_solve(&ch, &cfg, 0.1).unwrap();
            assert!(simple.snr <= pa.snr + 0.1);
        }
    }

    #[test]
    fn single_relay_simplified_matches_closed_forms() {
        let cfg = NetworkConfig::from_db(2, vec![2], 10.0, 20.0, 0.3).unwrap();
        let ch = generate_channels(&cfg, 2);
        let simple = simplified_robust(&ch, &cfg).unwrap();
        let (v, _) = principal_eigvec(&ch.grams()[0]).unwrap();
        let g = v.scale(cfg.p_s.sqrt());
        let u = effective_gains(&ch, &g).unwrap().u_norms;
        let gain_ratio = norm_sqr(&(&ch.h[0] * &simple.g)) / norm_sqr(&(&ch.h[0] * &g));
        assert!((gain_ratio - 1.0).abs() < 1e-9);
        let ctx = SnrContext::new(u, &cfg);
        let cap = ctx.caps()[0];
        assert!((simple.c[0] - cap).abs() <= 1e-6 * cap);
        let expect = worst_case_snr(&[cap], &vertex_set(&ch).unwrap(), &ctx).0;
        assert!((simple.snr - expect).abs() <= 1e-9 * expect);
    }

    #[test]
    fn perfect_gradient_near_perfect_optimum() {
        let cfg = config(2, 0.3);
        let ch = generate_channels(&cfg, 8);
        let out = perfect_gradient(&ch, &cfg, &GradientOptions::default()).unwrap();
        let opt = pa_solve(&ch.with_perfect_csi(), &cfg, 0.1).unwrap();
        assert!(out.snr <= opt.snr + 0.1);
        assert!(out.snr >= 0.9 * opt.snr);
    }
}
