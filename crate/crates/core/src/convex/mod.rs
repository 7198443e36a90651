//! Small dense conic solvers and the two problem instances used by the
//! beamforming algorithms: the power-allocation SOCP and the rate-profile
//! SDP, plus rank-one extraction.

mod cone;
mod sdp;
mod socp;

use std::sync::atomic::{AtomicU64, Ordering};

pub use cone::{smat, solve_conic, svec, svec_index, ConeSpec, ConicProblem, ConicSolution, IpmSettings};
pub use sdp::{rank_one_extract, solve_rate_profile_sdp, ProfileMode, RankOne, RateProfileSdp, SdpSolution};
pub use socp::{solve_socp, SocpSolution, SocpSubproblem};

static SOLVES: AtomicU64 = AtomicU64::new(0);
static FAILURES: AtomicU64 = AtomicU64::new(0);
static FALLBACKS: AtomicU64 = AtomicU64::new(0);
static RANK_CHECKS: AtomicU64 = AtomicU64::new(0);

/// Process-wide solver counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    /// Conic solves that returned a certified optimum.
    pub solves: u64,
    /// Conic solves that ended in non-convergence or a numerical failure.
    pub failures: u64,
    /// Rank-one extractions performed on the search path.
    pub rank_checks: u64,
    /// Degenerate-rank fallbacks taken.
    pub fallbacks: u64,
}

impl SolverStats {
    pub fn since(&self, earlier: &SolverStats) -> SolverStats {
        SolverStats {
            solves: self.solves - earlier.solves,
            failures: self.failures - earlier.failures,
            rank_checks: self.rank_checks - earlier.rank_checks,
            fallbacks: self.fallbacks - earlier.fallbacks,
        }
    }
}

pub fn solver_stats() -> SolverStats {
    SolverStats {
        solves: SOLVES.load(Ordering::Relaxed),
        failures: FAILURES.load(Ordering::Relaxed),
        rank_checks: RANK_CHECKS.load(Ordering::Relaxed),
        fallbacks: FALLBACKS.load(Ordering::Relaxed),
    }
}

pub(crate) fn record_fallback() {
    FALLBACKS.fetch_add(1, Ordering::Relaxed);
}

pub(crate) fn record_rank_check() {
    RANK_CHECKS.fetch_add(1, Ordering::Relaxed);
}

/// Runs the conic solver and updates the counters. Infeasibility and
/// unboundedness certificates count as successful solves.
pub(crate) fn counted_solve(p: &ConicProblem) -> crate::Result<ConicSolution> {
    let out = solve_conic(p, &IpmSettings::default());
    match &out {
        Ok(_) | Err(crate::Error::Infeasible { .. }) | Err(crate::Error::Unbounded { .. }) => {
            SOLVES.fetch_add(1, Ordering::Relaxed);
        }
        Err(e) => {
            FAILURES.fetch_add(1, Ordering::Relaxed);
            log::warn!("conic solve failed: {e}");
            if log::log_enabled!(log::Level::Trace) {
                log::trace!("problem dump:\n{}", p.dump());
            }
        }
    }
    out
}
