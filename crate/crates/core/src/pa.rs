//! Global search for the source beamformer by polyblock outer
//! approximation over the set of achievable relay input gains
//! `w_i = ‖H_i g‖²`, with rate-profile SDPs locating boundary points.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::closedform::{jing_power_allocation, perfect_snr, principal_eigvec};
use crate::convex::{rank_one_extract, record_fallback, solve_rate_profile_sdp, ProfileMode, RateProfileSdp};
use crate::dinkelbach::{allocate_for_g, dinkelbach_solve, PowerAllocResult};
use crate::error::{Error, Result};
use crate::linalg::norm_sqr;
use crate::model::{vertex_set, ChannelRealization, NetworkConfig, VertexSet};
use crate::snr::SnrContext;

pub const MAX_PA_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaOptions {
    pub delta1: f64,
    pub delta2: f64,
    pub max_iter: usize,
    /// Simplex resolution of the perfect-CSI grid used as initial beamformer.
    pub init_step: f64,
}

impl Default for PaOptions {
    fn default() -> Self {
        PaOptions { delta1: 0.01, delta2: 0.1, max_iter: MAX_PA_ITERATIONS, init_step: 0.1 }
    }
}

/// Best feasible beamformer found so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub w: Vec<f64>,
    pub g: DVector<Complex64>,
    pub snr: f64,
}

/// Snapshot of the search after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyblockState {
    pub vertices_z: Vec<Vec<f64>>,
    pub incumbent: Incumbent,
    pub f_min: f64,
    pub f_max: f64,
    pub iteration: usize,
}

/// Point on the boundary of the gain region along a profile ray.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    /// Gains `‖H_i g‖²` of the returned beamformer.
    pub w: Vec<f64>,
    pub g: DVector<Complex64>,
    /// Optimal ray scale; `ray_point = ω q`.
    pub q: f64,
    pub ray_point: Vec<f64>,
    /// `|tr G − P_s|` of the covariance solution.
    pub trace_residual: f64,
    /// `λ₂ / λ₁` of the covariance solution.
    pub eigen_ratio: f64,
    /// Whether the beamformer came from the simplex refinement.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct PaOutcome {
    pub g: DVector<Complex64>,
    pub snr: f64,
    pub power: PowerAllocResult,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<PolyblockState>,
    /// Largest `|tr G − P_s|` over all intersection points.
    pub max_trace_residual: f64,
    pub fallbacks: usize,
}

/// Worst-case SNR with relay input gains `w` (the `u_norms` of `ctx` are
/// replaced by `√w`).
pub fn snr_of_w(w: &[f64], vertices: &VertexSet, ctx: &SnrContext, delta1: f64) -> Result<f64> {
    if w.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidConfig("gains must be nonnegative".into()));
    }
    let local = ctx.with_u_norms(w.iter().map(|x| x.sqrt()).collect());
    Ok(dinkelbach_solve(vertices, &local, delta1)?.gamma)
}

fn gains_of(ch: &ChannelRealization, g: &DVector<Complex64>) -> Vec<f64> {
    ch.h.iter().map(|h| norm_sqr(&(h * g))).collect()
}

fn beam_for_weights(grams: &[DMatrix<Complex64>], mu: &[f64], p_s: f64) -> Result<DVector<Complex64>> {
    let n = grams[0].nrows();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for (k, &w) in grams.iter().zip(mu) {
        m += k.scale(w);
    }
    let (v, _) = principal_eigvec(&m)?;
    Ok(v.scale(p_s.sqrt()))
}

/// Pareto point of the gain region on the ray through `z_tilde`.
///
/// Solves the dominating rate-profile SDP for `ω = z̃ / ‖z̃‖₁`. When the
/// covariance is not numerically rank one, a local search over
/// `g = √P_s υ(Σ μ_i K_i)` started from the SDP multipliers supplies the
/// beamformer instead.
pub fn intersection_point(z_tilde: &[f64], ch: &ChannelRealization, p_s: f64) -> Result<ParetoPoint> {
    let total: f64 = z_tilde.iter().sum();
    if z_tilde.iter().any(|&x| !(x >= 0.0)) || !(total > 0.0) {
        return Err(Error::InvalidConfig("ray direction must be nonnegative and nonzero".into()));
    }
    let omega: Vec<f64> = z_tilde.iter().map(|x| x / total).collect();
    let grams = ch.grams();
    let sdp = RateProfileSdp::new(grams.clone(), omega.clone(), p_s)?.with_mode(ProfileMode::Dominating);
    let sol = match solve_rate_profile_sdp(&sdp) {
        Err(Error::Infeasible { .. }) => {
            return Err(Error::Numerical("rate-profile SDP reported an infeasible profile".into()))
        }
        other => other?,
    };
    let ray_scale = |w: &[f64]| {
        omega.iter().zip(w).filter(|(o, _)| **o > 0.0).map(|(o, w)| w / o).fold(f64::INFINITY, f64::min)
    };
    let r1 = rank_one_extract(&sol.g_matrix, p_s)?;
    let mut g = r1.g.clone();
    let mut fallback = false;
    if r1.degenerate {
        record_fallback();
        let refined = simplex_refine(&grams, &sol.multipliers, p_s, |g| ray_scale(&gains_of(ch, g)))?;
        log::info!(
            "degenerate covariance (ratio {:.2e}); simplex refinement reaches {:.6e} of {:.6e}",
            r1.ratio,
            ray_scale(&gains_of(ch, &refined)),
            sol.q
        );
        if ray_scale(&gains_of(ch, &refined)) > ray_scale(&gains_of(ch, &g)) {
            g = refined;
            fallback = true;
        }
    }
    let w = gains_of(ch, &g);
    Ok(ParetoPoint {
        w,
        g,
        q: sol.q,
        ray_point: omega.iter().map(|o| o * sol.q).collect(),
        trace_residual: sol.trace_residual,
        eigen_ratio: r1.ratio,
        fallback,
    })
}

/// Coordinate pattern search on the weight simplex maximising `score` of
/// `√P_s υ(Σ μ_i K_i)`.
fn simplex_refine<F>(grams: &[DMatrix<Complex64>], start: &[f64], p_s: f64, score: F) -> Result<DVector<Complex64>>
where
    F: Fn(&DVector<Complex64>) -> f64,
{
    let r = grams.len();
    let mut mu = start.to_vec();
    let mut g = beam_for_weights(grams, &mu, p_s)?;
    let mut best = score(&g);
    let mut step: f64 = 0.25;
    while step > 1e-7 {
        let mut moved = false;
        for i in 0..r {
            for j in 0..r {
                if i == j || mu[j] <= 0.0 {
                    continue;
                }
                let d = step.min(mu[j]);
                let mut cand = mu.clone();
                cand[i] += d;
                cand[j] -= d;
                let gc = beam_for_weights(grams, &cand, p_s)?;
                let sc = score(&gc);
                if sc > best {
                    best = sc;
                    mu = cand;
                    g = gc;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok(g)
}

/// Replace `z_tilde` by the vertices `z̃ − (z̃_i − p_i) e_i` and drop
/// dominated vertices. Coordinates where `p_i` already reaches `z̃_i` add
/// no vertex.
pub fn update_vertices(vertices_z: &[Vec<f64>], z_tilde: &[f64], point: &[f64]) -> Result<Vec<Vec<f64>>> {
    for (z, p) in z_tilde.iter().zip(point) {
        if *p > *z * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::PolyblockInvariant(format!("boundary point {p} exceeds vertex coordinate {z}")));
        }
    }
    let mut out: Vec<Vec<f64>> = vertices_z.iter().filter(|v| v.as_slice() != z_tilde).cloned().collect();
    for i in 0..z_tilde.len() {
        let p = point[i].min(z_tilde[i]);
        if z_tilde[i] - p <= 1e-12 * z_tilde[i].max(1e-300) {
            continue;
        }
        let mut v = z_tilde.to_vec();
        v[i] = p;
        out.push(v);
    }
    Ok(prune_dominated(out))
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

fn prune_dominated(vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut keep: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for (k, v) in vs.iter().enumerate() {
        let dominated = vs.iter().enumerate().any(|(j, u)| {
            j != k && dominates(u, v) && (u != v || j < k)
        });
        if !dominated {
            keep.push(v.clone());
        }
    }
    keep
}

/// All points of the simplex grid with resolution `step`, in lexicographic
/// order.
pub fn simplex_grid(r: usize, step: f64) -> Vec<Vec<f64>> {
    let n = (1.0 / step).round() as usize;
    let mut out = Vec::new();
    let mut cur = vec![0usize; r];
    fn rec(i: usize, left: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        let r = cur.len();
        if i == r - 1 {
            cur[i] = left;
            out.push(cur.iter().map(|&k| k as f64 / n as f64).collect());
            return;
        }
        for k in (0..=left).rev() {
            cur[i] = k;
            rec(i + 1, left - k, n, cur, out);
        }
    }
    rec(0, n, n, &mut cur, &mut out);
    out
}

fn worst_case_of_g(ch: &ChannelRealization, config: &NetworkConfig, g: &DVector<Complex64>, delta1: f64) -> Result<f64> {
    Ok(allocate_for_g(ch, config, g, delta1)?.gamma)
}

/// Exhaustive search over `g = √P_s υ(Σ μ_i H_iᴴH_i)` on the simplex grid.
/// Perfect-CSI realizations are scored with the closed-form allocation.
pub fn grid_oracle(
    ch: &ChannelRealization,
    config: &NetworkConfig,
    step: f64,
    delta1: f64,
) -> Result<(DVector<Complex64>, f64)> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig(format!("grid step must be in (0, 1], got {step}")));
    }
    let grams = ch.grams();
    let grid = simplex_grid(ch.n_relays(), step);
    let scored: Vec<Result<(DVector<Complex64>, f64)>> = grid
        .par_iter()
        .map(|mu| {
            let g = beam_for_weights(&grams, mu, config.p_s)?;
            let s = worst_case_of_g(ch, config, &g, delta1)?;
            Ok((g, s))
        })
        .collect();
    let mut best: Option<(DVector<Complex64>, f64)> = None;
    for item in scored {
        let (g, s) = item?;
        if best.as_ref().map_or(true, |b| s > b.1) {
            best = Some((g, s));
        }
    }
    Ok(best.expect("simplex grid is never empty"))
}

/// [`pa_solve_with`] using the default tolerances and the given `delta2`.
pub fn pa_solve(ch: &ChannelRealization, config: &NetworkConfig, delta2: f64) -> Result<PaOutcome> {
    pa_solve_with(ch, config, &PaOptions { delta2, ..PaOptions::default() })
}

/// Polyblock outer approximation for the robust source beamformer.
///
/// The upper bound `f_max` is the largest SNR over the polyblock vertices,
/// the lower bound `f_min` the best SNR among feasible beamformers found.
/// Both are kept monotone. Stops when `f_max − f_min ≤ δ₂`, when the
/// selected vertex is itself achievable, or after `max_iter` iterations
/// (reported as not converged).
pub fn pa_solve_with(ch: &ChannelRealization, config: &NetworkConfig, opts: &PaOptions) -> Result<PaOutcome> {
    pa_solve_seeded(ch, config, opts, &[])
}

/// [`pa_solve_with`] with extra beamformers offered as initial incumbents.
/// The best of these and the perfect-CSI grid start seeds the lower bound.
pub fn pa_solve_seeded(
    ch: &ChannelRealization,
    config: &NetworkConfig,
    opts: &PaOptions,
    seeds: &[DVector<Complex64>],
) -> Result<PaOutcome> {
    ch.check()?;
    if !(opts.delta2 > 0.0) {
        return Err(Error::InvalidConfig(format!("delta2 must be positive, got {}", opts.delta2)));
    }
    let r = ch.n_relays();
    if r > 8 {
        return Err(Error::TooManyRelays(r));
    }
    let vertices = vertex_set(ch)?;
    let base = SnrContext::new(vec![0.0; r], config);
    let perfect = ch.eps.iter().all(|&e| e == 0.0);
    let f_norms = ch.f_norms();
    let eval = |w: &[f64]| -> Result<f64> {
        if perfect {
            let u: Vec<f64> = w.iter().map(|x| x.max(0.0).sqrt()).collect();
            let j = jing_power_allocation(&u, &f_norms, &config.p_relay, config.sigma2_r, config.sigma2_d);
            return Ok(perfect_snr(&j.c, &u, &f_norms, config.sigma2_r, config.sigma2_d));
        }
        snr_of_w(w, &vertices, &base, opts.delta1)
    };
    let amp = config.p_s.sqrt();

    let finish = |g: DVector<Complex64>, iterations, converged, trace, max_tr, fallbacks| -> Result<PaOutcome> {
        let power = allocate_for_g(ch, config, &g, opts.delta1)?;
        Ok(PaOutcome { snr: power.gamma, g, power, iterations, converged, trace, max_trace_residual: max_tr, fallbacks })
    };

    if ch.n_t() == 1 {
        let g = DVector::from_element(1, Complex64::new(amp, 0.0));
        return finish(g, 0, true, vec![], 0.0, 0);
    }

    let grams = ch.grams();
    let b0: Vec<f64> = grams.iter().map(|k| config.p_s * principal_eigvec(k).map(|(_, l)| l).unwrap_or(0.0)).collect();

    let (g0, _) = grid_oracle(&ch.with_perfect_csi(), config, opts.init_step, opts.delta1)?;
    let w0 = gains_of(ch, &g0);
    let mut incumbent = Incumbent { snr: eval(&w0)?, w: w0, g: g0 };
    for g in seeds {
        if g.len() != ch.n_t() || norm_sqr(g) > config.p_s * (1.0 + 1e-9) {
            return Err(Error::Dimension("seed beamformer must have N_T entries and norm² ≤ P_s".into()));
        }
        let w = gains_of(ch, g);
        let snr = eval(&w)?;
        if snr > incumbent.snr {
            incumbent = Incumbent { w, g: g.clone(), snr };
        }
    }

    let mut z_set: Vec<(Vec<f64>, f64)> = vec![(b0.clone(), eval(&b0)?)];
    let mut f_min = incumbent.snr;
    let mut f_max = f64::INFINITY;
    let mut trace = Vec::new();
    let mut max_tr: f64 = 0.0;
    let mut fallbacks = 0;

    for iteration in 1..=opts.max_iter {
        let (best_idx, best_snr) = z_set
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, (_, s))| if *s > acc.1 { (k, *s) } else { acc });
        f_max = f_max.min(best_snr);
        let z_tilde = z_set[best_idx].0.clone();

        let snapshot = |f_min, f_max, incumbent: &Incumbent, z_set: &[(Vec<f64>, f64)]| PolyblockState {
            vertices_z: z_set.iter().map(|(z, _)| z.clone()).collect(),
            incumbent: incumbent.clone(),
            f_min,
            f_max,
            iteration,
        };

        if f_max - f_min <= opts.delta2 {
            trace.push(snapshot(f_min, f_max, &incumbent, &z_set));
            return finish(incumbent.g, iteration, true, trace, max_tr, fallbacks);
        }

        let pt = intersection_point(&z_tilde, ch, config.p_s)?;
        max_tr = max_tr.max(pt.trace_residual);
        if pt.fallback {
            fallbacks += 1;
        }
        let snr_pt = eval(&pt.w)?;
        if snr_pt > incumbent.snr {
            incumbent = Incumbent { w: pt.w.clone(), g: pt.g.clone(), snr: snr_pt };
        }
        f_min = f_min.max(incumbent.snr);

        let reached = pt.ray_point.iter().zip(&z_tilde).all(|(p, z)| *p >= *z * (1.0 - 1e-9));
        if reached {
            // the best vertex is achievable, so its SNR is the optimum
            trace.push(snapshot(f_min, f_max, &incumbent, &z_set));
            let converged = f_max - f_min <= opts.delta2;
            return finish(incumbent.g, iteration, converged, trace, max_tr, fallbacks);
        }

        let point: Vec<f64> = pt.ray_point.iter().zip(&z_tilde).map(|(p, z)| p.min(*z)).collect();
        let old: Vec<Vec<f64>> = z_set.iter().map(|(z, _)| z.clone()).collect();
        let new_z = update_vertices(&old, &z_tilde, &point)?;
        let fresh: Vec<&Vec<f64>> = new_z.iter().filter(|z| !old.contains(z)).collect();
        let fresh_snr: Vec<f64> = fresh.par_iter().map(|z| eval(z)).collect::<Result<_>>()?;
        let mut next: Vec<(Vec<f64>, f64)> = Vec::with_capacity(new_z.len());
        for z in &new_z {
            if let Some((_, s)) = z_set.iter().find(|(v, _)| v == z) {
                next.push((z.clone(), *s));
            } else {
                let k = fresh.iter().position(|f| *f == z).expect("fresh vertex");
                next.push((z.clone(), fresh_snr[k]));
            }
        }
        if next.is_empty() {
            trace.push(snapshot(f_min, f_max, &incumbent, &z_set));
            return finish(incumbent.g, iteration, f_max - f_min <= opts.delta2, trace, max_tr, fallbacks);
        }
        z_set = next;
        trace.push(snapshot(f_min, f_max, &incumbent, &z_set));
    }
    log::warn!("polyblock search hit the iteration cap with gap {:.3e}", f_max - f_min);
    finish(incumbent.g, opts.max_iter, false, trace, max_tr, fallbacks)
}

/// Per-iteration convergence trace as CSV: `iteration,f_min,f_max,n_vertices`.
pub fn write_trace_csv(trace: &[PolyblockState], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "iteration,f_min,f_max,n_vertices")?;
    for s in trace {
        writeln!(f, "{},{:.12e},{:.12e},{}", s.iteration, s.f_min, s.f_max, s.vertices_z.len())?;
    }
    Ok(())
}
