//! Robust power allocation: Dinkelbach iteration over the parametric SOCP,
//! and the bisection method it is compared against.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::closedform::{jing_power_allocation, perfect_snr};
use crate::convex::{solve_socp, SocpSubproblem};
use crate::error::{Error, Result};
use crate::model::{effective_gains, vertex_set, ChannelRealization, NetworkConfig, VertexSet};
use crate::snr::{worst_case_snr, SnrContext};

pub const MAX_DINKELBACH_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocResult {
    pub c: Vec<f64>,
    /// Worst-case SNR at `c`.
    pub gamma: f64,
    /// Number of SOCP solves.
    pub iterations: usize,
    /// `(γ, τ)` per solve: the level used and the optimal margin found.
    pub history: Vec<(f64, f64)>,
}

/// Maximise the worst-case SNR over the power box.
///
/// Starts from full power and alternates between solving the margin SOCP
/// at the current level and re-evaluating the worst-case SNR at its
/// solution. Stops once the optimal margin is at most `delta1`, or when the
/// level stops increasing.
pub fn dinkelbach_solve(vertices: &VertexSet, ctx: &SnrContext, delta1: f64) -> Result<PowerAllocResult> {
    if !(delta1 > 0.0) {
        return Err(Error::InvalidConfig(format!("delta1 must be positive, got {delta1}")));
    }
    let caps = ctx.caps();
    if ctx.u_norms.iter().all(|&u| u == 0.0) {
        return Ok(PowerAllocResult { c: caps, gamma: 0.0, iterations: 0, history: vec![] });
    }
    let mut c = caps;
    let mut gamma = worst_case_snr(&c, vertices, ctx).0;
    let mut history = Vec::new();
    for k in 1..=MAX_DINKELBACH_ITERATIONS {
        let sub = SocpSubproblem::new(ctx, vertices, gamma);
        let sol = solve_socp(&sub)?;
        history.push((gamma, sol.tau));
        let next = worst_case_snr(&sol.c, vertices, ctx).0;
        let improved = next > gamma;
        if improved {
            c = sol.c;
        }
        let stalled = next <= gamma * (1.0 + 1e-12) + 1e-300;
        if improved {
            gamma = next;
        }
        if sol.tau <= delta1 || stalled {
            return Ok(PowerAllocResult { c, gamma, iterations: k, history });
        }
    }
    let last_residual = history.last().map(|h| h.1).unwrap_or(f64::NAN);
    Err(Error::DinkelbachCap { iterations: MAX_DINKELBACH_ITERATIONS, last_residual, history })
}

/// Bisection on the SNR level: a level is achievable when the margin SOCP
/// has a nonnegative optimum. Stops when the bracket is at most `delta1`
/// wide.
pub fn bisection_solve(
    vertices: &VertexSet,
    ctx: &SnrContext,
    delta1: f64,
    gamma_lo: f64,
    gamma_hi: f64,
) -> Result<PowerAllocResult> {
    if !(delta1 > 0.0) {
        return Err(Error::InvalidConfig(format!("delta1 must be positive, got {delta1}")));
    }
    if !(gamma_lo >= 0.0 && gamma_hi >= gamma_lo) {
        return Err(Error::InvalidBracket(format!("[{gamma_lo}, {gamma_hi}]")));
    }
    let caps = ctx.caps();
    let mut best_c = caps.clone();
    let mut lo = gamma_lo;
    let mut hi = gamma_hi;
    let mut history = Vec::new();
    let mut any_infeasible = false;
    while hi - lo > delta1 {
        let mid = 0.5 * (lo + hi);
        let sol = solve_socp(&SocpSubproblem::new(ctx, vertices, mid))?;
        history.push((mid, sol.tau));
        if sol.tau >= 0.0 {
            lo = mid;
            best_c = sol.c;
        } else {
            hi = mid;
            any_infeasible = true;
        }
    }
    if !history.is_empty() && !any_infeasible {
        let check = solve_socp(&SocpSubproblem::new(ctx, vertices, gamma_hi))?;
        if check.tau > 0.0 {
            return Err(Error::InvalidBracket(format!(
                "level {gamma_hi} is strictly achievable (margin {:.3e})",
                check.tau
            )));
        }
    }
    let gamma = worst_case_snr(&best_c, vertices, ctx).0;
    Ok(PowerAllocResult { c: best_c, gamma, iterations: history.len(), history })
}

/// Robust power allocation for a given source beamformer.
pub fn solve_for_g(
    ch: &ChannelRealization,
    config: &NetworkConfig,
    g: &DVector<Complex64>,
    delta1: f64,
) -> Result<PowerAllocResult> {
    let gains = effective_gains(ch, g)?;
    let ctx = SnrContext::new(gains.u_norms, config);
    dinkelbach_solve(&vertex_set(ch)?, &ctx, delta1)
}

/// Power allocation for a given source beamformer: the closed form when the
/// second hop is known exactly, the Dinkelbach iteration otherwise.
pub fn allocate_for_g(
    ch: &ChannelRealization,
    config: &NetworkConfig,
    g: &DVector<Complex64>,
    delta1: f64,
) -> Result<PowerAllocResult> {
    if ch.eps.iter().any(|&e| e != 0.0) {
        return solve_for_g(ch, config, g, delta1);
    }
    let gains = effective_gains(ch, g)?;
    let f = ch.f_norms();
    let j = jing_power_allocation(&gains.u_norms, &f, &config.p_relay, config.sigma2_r, config.sigma2_d);
    let gamma = perfect_snr(&j.c, &gains.u_norms, &f, config.sigma2_r, config.sigma2_d);
    Ok(PowerAllocResult { c: j.c, gamma, iterations: 0, history: vec![] })
}
