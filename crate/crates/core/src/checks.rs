//! Self-contained verification suites. Invariant checks are cheap and run on
//! random instances; oracle checks compare the solvers against closed forms
//! and exhaustive searches.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::closedform::{jing_power_allocation, perfect_snr};
use crate::convex::rank_one_extract;
use crate::dinkelbach::{allocate_for_g, bisection_solve, dinkelbach_solve};
use crate::error::Result;
use crate::experiment::{csv_bytes, run_experiment, ExperimentSpec, Method};
use crate::heuristics::nonrobust_from_g;
use crate::linalg::norm_sqr;
use crate::model::{effective_gains, generate_channels, vertex_set, NetworkConfig, VertexSet};
use crate::pa::{grid_oracle, pa_solve, pa_solve_with, snr_of_w, PaOptions};
use crate::snr::{sampled_worst_snr_with, vector_snr, worst_case_snr, SnrContext};

/// Outcome of one check: a headline value compared against a limit.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckReport { name, passed, detail }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn random_beam(n: usize, p_s: f64, rng: &mut ChaCha8Rng) -> DVector<Complex64> {
    let g = DVector::from_iterator(n, (0..n).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))));
    let norm = norm_sqr(&g).sqrt();
    g.scale(p_s.sqrt() / norm)
}

fn random_config(rng: &mut ChaCha8Rng, max_relays: usize, rho: f64) -> Result<NetworkConfig> {
    let r = rng.random_range(1..=max_relays);
    let n_t = rng.random_range(1..=3);
    let antennas: Vec<usize> = (0..r).map(|_| rng.random_range(1..=3)).collect();
    NetworkConfig::from_db(n_t, antennas, 10.0, rng.random_range(0.0..40.0), rho)
}

/// Dinkelbach on a perfect-CSI vertex set against the closed-form
/// allocation: largest relative SNR difference, limit `1e-4`.
pub fn check_closed_form(n_instances: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..n_instances {
        let config = random_config(&mut rng, 4, 0.0)?;
        let ch = generate_channels(&config, seed.wrapping_add(k as u64));
        let g = random_beam(config.n_t, config.p_s, &mut rng);
        let u = effective_gains(&ch, &g)?.u_norms;
        let f = ch.f_norms();
        let ctx = SnrContext::new(u.clone(), &config);
        let d = dinkelbach_solve(&VertexSet::perfect(&f)?, &ctx, 0.01)?;
        let j = jing_power_allocation(&u, &f, &config.p_relay, config.sigma2_r, config.sigma2_d);
        let exact = perfect_snr(&j.c, &u, &f, config.sigma2_r, config.sigma2_d);
        worst = worst.max((d.gamma - exact).abs() / exact);
    }
    Ok(CheckReport::new(
        "closed-form equivalence",
        worst <= 1e-4,
        format!("max relative error {worst:.3e} over {n_instances} instances (limit 1e-4)"),
    ))
}

/// Sampled errors inside the uncertainty balls never beat the vertex
/// minimum, and the aligned worst vertex attains it.
pub fn check_vertex_reduction(n_instances: usize, n_samples: usize, seed: u64) -> Result<CheckReport> {
    let config = NetworkConfig::from_db(2, vec![2, 2], 10.0, 20.0, 0.3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_beat: f64 = f64::NEG_INFINITY;
    let mut max_attain: f64 = 0.0;
    for k in 0..n_instances {
        let ch = generate_channels(&config, seed.wrapping_add(k as u64));
        let g = random_beam(config.n_t, config.p_s, &mut rng);
        let ctx = SnrContext::new(effective_gains(&ch, &g)?.u_norms, &config);
        let c: Vec<f64> = ctx.caps().iter().map(|cap| cap * rng.random_range(0.05..1.0)).collect();
        let vertices = vertex_set(&ch)?;
        let (vmin, idx) = worst_case_snr(&c, &vertices, &ctx);
        let sampled = sampled_worst_snr_with(&c, &ch, &g, &config, n_samples, rng.random(), false)?;
        max_beat = max_beat.max((vmin - sampled) / vmin);
        // aligned error at the worst vertex
        let norms = ch.f_norms();
        let f: Vec<DVector<Complex64>> = (0..ch.n_relays())
            .map(|i| ch.f_tilde[i].scale(vertices.vertices[idx][i] / norms[i]))
            .collect();
        let (mats, _) = crate::snr::assemble_relay_matrices(&c, &ch, &g)?;
        let aligned = vector_snr(&ch, &g, &mats, &f, config.sigma2_r, config.sigma2_d)?;
        max_attain = max_attain.max((aligned - vmin).abs() / vmin);
    }
    Ok(CheckReport::new(
        "vertex reduction",
        max_beat <= 1e-12 && max_attain <= 1e-9,
        format!(
            "largest (vertex min - sampled min) / vertex min {max_beat:.3e} (limit 1e-12); aligned vertex error {max_attain:.3e} (limit 1e-9); {n_instances} instances x {n_samples} samples"
        ),
    ))
}

/// Polyblock result against the exhaustive simplex search at step 0.01,
/// alternating perfect and imperfect CSI.
pub fn check_pa_vs_grid(n_instances: usize, seed: u64) -> Result<CheckReport> {
    let mut worst: f64 = 0.0;
    for k in 0..n_instances {
        let rho = if k % 2 == 0 { 0.0 } else { 0.3 };
        let config = NetworkConfig::from_db(2, vec![2, 2], 10.0, 20.0, rho)?;
        let ch = generate_channels(&config, seed.wrapping_add(k as u64));
        let pa = pa_solve(&ch, &config, 0.1)?;
        let (_, grid) = grid_oracle(&ch, &config, 0.01, 0.01)?;
        worst = worst.max((pa.snr - grid).abs());
    }
    Ok(CheckReport::new(
        "polyblock vs grid",
        worst <= 0.1,
        format!("max |PA - grid| {worst:.4} over {n_instances} instances (limit 0.1)"),
    ))
}

/// Mean Dinkelbach iterations over mean bisection iterations per relay
/// count, limit `0.7`.
pub fn check_dinkelbach_vs_bisection(n_trials: usize, relay_counts: &[usize], seed: u64) -> Result<CheckReport> {
    let spec = ExperimentSpec {
        name: "allocation".into(),
        source_power_db: 10.0,
        relay_power_db: vec![20.0],
        rho: vec![0.3],
        n_t: vec![2],
        relay_antennas: vec![2],
        n_relays: relay_counts.to_vec(),
        networks: vec![],
        methods: vec![Method::Dinkelbach, Method::Bisection],
        n_trials,
        base_seed: seed,
        delta1: 0.01,
        delta2: 0.1,
        report_iterations: true,
        trace: false,
        pa_max_iterations: crate::pa::MAX_PA_ITERATIONS,
    };
    let table = run_experiment(&spec)?;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (p, point) in table.points.iter().enumerate() {
        let it = |m| table.row(p, m).and_then(|r| r.mean_iterations).unwrap_or(f64::NAN);
        let (d, b) = (it(Method::Dinkelbach), it(Method::Bisection));
        worst = worst.max(d / b);
        parts.push(format!("R={}: {d:.2} vs {b:.2}", point.network.n_relays));
    }
    Ok(CheckReport::new(
        "Dinkelbach vs bisection iterations",
        worst <= 0.7,
        format!("{} (worst ratio {worst:.3}, limit 0.7)", parts.join(", ")),
    ))
}

/// Polyblock bounds are monotone, ordered, and sandwich the grid optimum;
/// every intersection has `tr G = P_s`.
pub fn check_pa_bounds(n_instances: usize, seed: u64) -> Result<CheckReport> {
    let mut violations = Vec::new();
    let mut max_tr: f64 = 0.0;
    for k in 0..n_instances {
        let rho = [0.0, 0.3, 0.5][k % 3];
        let config = NetworkConfig::from_db(2, vec![2, 2], 10.0, 20.0, rho)?;
        let ch = generate_channels(&config, seed.wrapping_add(k as u64));
        let out = pa_solve_with(&ch, &config, &PaOptions { delta2: 0.01, ..PaOptions::default() })?;
        max_tr = max_tr.max(out.max_trace_residual / config.p_s);
        for w in out.trace.windows(2) {
            if w[1].f_min < w[0].f_min || w[1].f_max > w[0].f_max {
                violations.push(format!("instance {k}: bounds not monotone at iteration {}", w[1].iteration));
            }
        }
        let (_, grid) = grid_oracle(&ch, &config, 0.05, 0.01)?;
        if let Some(last) = out.trace.last() {
            let tol = 1e-6 * last.f_max.max(1.0);
            if last.f_min > last.f_max + tol || grid > last.f_max + 0.01 + tol {
                violations.push(format!(
                    "instance {k}: f_min {:.6} f_max {:.6} grid {grid:.6}",
                    last.f_min, last.f_max
                ));
            }
        }
    }
    let passed = violations.is_empty() && max_tr <= 1e-6;
    let mut detail = format!("{n_instances} instances; max |tr G - P_s| / P_s {max_tr:.3e} (limit 1e-6)");
    if let Some(v) = violations.first() {
        detail.push_str(&format!("; {} violations, first: {v}", violations.len()));
    }
    Ok(CheckReport::new("polyblock bounds and trace identity", passed, detail))
}

/// Every allocation from the closed form, Dinkelbach and bisection puts at
/// least one relay at its cap.
pub fn check_full_power(n_instances: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = f64::INFINITY;
    for k in 0..n_instances {
        let rho = [0.0, 0.2, 0.5][k % 3];
        let config = random_config(&mut rng, 4, rho)?;
        let ch = generate_channels(&config, seed.wrapping_add(k as u64));
        let g = random_beam(config.n_t, config.p_s, &mut rng);
        let u = effective_gains(&ch, &g)?.u_norms;
        let ctx = SnrContext::new(u, &config);
        let caps = ctx.caps();
        let vertices = vertex_set(&ch)?;
        let base = nonrobust_from_g(&ch, &config, &g)?;
        let mut allocs = vec![allocate_for_g(&ch, &config, &g, 0.01)?.c, base.c];
        if base.snr_nominal > base.snr_worst + 0.02 {
            allocs.push(bisection_solve(&vertices, &ctx, 0.01, base.snr_worst, base.snr_nominal)?.c);
        }
        for c in allocs {
            let ratio = c.iter().zip(&caps).map(|(a, b)| a / b).fold(0.0, f64::max);
            worst = worst.min(ratio);
        }
    }
    Ok(CheckReport::new(
        "full-power property",
        worst >= 1.0 - 1e-6,
        format!("smallest max_i c_i / cap_i {worst:.9} over {n_instances} instances (limit 1 - 1e-6)"),
    ))
}

/// `SNR(w) ≤ SNR(w')` whenever `w ≤ w'` componentwise.
pub fn check_snr_monotone(n_pairs: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..n_pairs {
        let config = random_config(&mut rng, 3, [0.0, 0.3][k % 2])?;
        let ch = generate_channels(&config, seed.wrapping_add(k as u64));
        let vertices = vertex_set(&ch)?;
        let ctx = SnrContext::new(vec![0.0; ch.n_relays()], &config);
        let lo: Vec<f64> = (0..ch.n_relays()).map(|_| rng.random_range(0.0..5.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|w| w + rng.random_range(0.0..2.0)).collect();
        let a = snr_of_w(&lo, &vertices, &ctx, 1e-9)?;
        let b = snr_of_w(&hi, &vertices, &ctx, 1e-9)?;
        worst = worst.max((a - b) / b.max(1e-300));
    }
    Ok(CheckReport::new(
        "SNR(w) monotonicity",
        worst <= 1e-7,
        format!("largest relative decrease {worst:.3e} over {n_pairs} ordered pairs (limit 1e-7)"),
    ))
}

/// Rank-one covariances are recovered exactly.
pub fn check_rank_one(n_instances: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_instances {
        let n = rng.random_range(1..=6);
        let p_s = 10f64.powf(rng.random_range(-1.0..2.0));
        let g = random_beam(n, p_s, &mut rng);
        let cov: DMatrix<Complex64> = &g * g.adjoint();
        let r = rank_one_extract(&cov, p_s)?;
        let back = &r.g * r.g.adjoint();
        worst = worst.max((&cov - back).norm() / cov.norm());
    }
    Ok(CheckReport::new(
        "rank-one extraction",
        worst <= 1e-8,
        format!("max relative residual {worst:.3e} over {n_instances} instances (limit 1e-8)"),
    ))
}

/// Two runs of the same small experiment give byte-identical CSV.
pub fn check_determinism(seed: u64) -> Result<CheckReport> {
    let spec = ExperimentSpec {
        name: "determinism".into(),
        source_power_db: 10.0,
        relay_power_db: vec![10.0, 30.0],
        rho: vec![0.3],
        n_t: vec![2],
        relay_antennas: vec![2],
        n_relays: vec![2],
        networks: vec![],
        methods: vec![Method::RobustOptimal, Method::SimplifiedRobust, Method::Nonrobust],
        n_trials: 3,
        base_seed: seed,
        delta1: 0.01,
        delta2: 0.1,
        report_iterations: true,
        trace: false,
        pa_max_iterations: crate::pa::MAX_PA_ITERATIONS,
    };
    let a = csv_bytes(&run_experiment(&spec)?)?;
    let b = csv_bytes(&run_experiment(&spec)?)?;
    Ok(CheckReport::new(
        "determinism",
        a == b,
        format!("{} CSV bytes, runs {}", a.len(), if a == b { "identical" } else { "differ" }),
    ))
}

/// The invariant suite at sizes that run in seconds.
pub fn verify_suite(seed: u64) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_vertex_reduction(10, 2000, seed)?,
        check_full_power(60, seed)?,
        check_snr_monotone(200, seed)?,
        check_rank_one(100, seed)?,
        check_pa_bounds(6, seed)?,
        check_determinism(seed)?,
    ])
}

/// The oracle cross-checks.
pub fn oracle_suite(seed: u64) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_closed_form(100, seed)?,
        check_vertex_reduction(50, 10_000, seed)?,
        check_pa_vs_grid(30, seed)?,
        check_dinkelbach_vs_bisection(100, &[2, 4], seed)?,
    ])
}
