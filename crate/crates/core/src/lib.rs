//! Robust joint source and relay beamforming for two-hop amplify-and-forward
//! networks with multi-antenna relays and norm-bounded second-hop CSI errors.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: configuration, channel draws, the worst-case vertex set.
//! * [`snr`]: SNR evaluation and rank-one relay matrix assembly.
//! * [`closedform`]: perfect-CSI power allocation, eigenvectors, special cases.
//! * [`convex`]: a small dense conic interior-point solver with the SOCP and
//!   SDP instances used by the algorithms.
//! * [`dinkelbach`]: robust power allocation and the bisection comparator.
//! * [`pa`]: global source beamformer search by polyblock outer approximation.
//! * [`heuristics`]: gradient, simplified and non-robust source beamformers.
//! * [`experiment`]: Monte Carlo driver, presets and CSV output.
//! * [`checks`]: self-contained verification and oracle suites.

pub mod checks;
pub mod closedform;
pub mod convex;
pub mod dinkelbach;
pub mod error;
pub mod experiment;
pub mod heuristics;
pub mod linalg;
pub mod model;
pub mod pa;
pub mod snr;

pub use checks::{oracle_suite, verify_suite, CheckReport};
pub use closedform::{jing_power_allocation, perfect_snr, principal_eigvec, special_case_g, JingSolution, SpecialCase};
pub use convex::{
    rank_one_extract, solve_rate_profile_sdp, solve_socp, ProfileMode, RankOne, RateProfileSdp, SocpSubproblem,
};
pub use dinkelbach::{allocate_for_g, bisection_solve, dinkelbach_solve, solve_for_g, PowerAllocResult};
pub use error::{Error, Result};
pub use experiment::{
    csv_bytes, emit_csv, emit_trace_csv, run_experiment, write_outputs, ExperimentSpec, Method, Network, ResultRow, ResultTable, SweepPoint,
    PRESETS,
};
pub use model::{
    effective_gains, generate_channels, vertex_set, BeamformingSolution, ChannelRealization, EffectiveGains,
    NetworkConfig, VertexSet,
};
pub use snr::{assemble_relay_matrices, relay_power, sampled_worst_snr, snr_at_vertex, worst_case_snr, SnrContext};
pub use heuristics::{
    nonrobust_baseline, perfect_gradient, robust_gradient, robust_gradient_with, simplified_robust, GradientOptions,
    GradientOutcome, NonrobustOutcome, SimplifiedOutcome,
};
pub use pa::{grid_oracle, pa_solve, pa_solve_seeded, pa_solve_with, snr_of_w, PaOptions, PaOutcome, ParetoPoint, PolyblockState};
