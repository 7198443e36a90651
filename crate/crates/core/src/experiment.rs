//! Monte Carlo driver: experiment specs, presets, per-trial method runs,
//! deterministic aggregation and CSV / JSON output.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closedform::principal_eigvec;
use crate::dinkelbach::{bisection_solve, dinkelbach_solve};
use crate::error::{Error, Result};
use crate::heuristics::{
    nonrobust_from_g, perfect_gradient, robust_gradient_with, simplified_from_g, GradientOptions,
};
use crate::model::{effective_gains, generate_channels, linear_to_db, vertex_set, ChannelRealization, NetworkConfig};
use crate::pa::{pa_solve_seeded, pa_solve_with, PaOptions, PaOutcome, MAX_PA_ITERATIONS};
use crate::snr::SnrContext;

/// Source beamforming and power allocation designs that can be compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Global optimum for the estimated channels taken as exact; nominal SNR.
    PerfectOptimal,
    /// Gradient ascent for the estimated channels taken as exact; nominal SNR.
    PerfectGradient,
    /// Polyblock search on the worst-case SNR.
    RobustOptimal,
    /// Gradient ascent on the worst-case SNR from the non-robust beamformer.
    RobustGradient,
    /// Non-robust beamformer with robust power allocation.
    SimplifiedRobust,
    /// Non-robust beamformer and allocation, evaluated in the worst case.
    Nonrobust,
    /// Robust power allocation by Dinkelbach at a fixed beamformer.
    Dinkelbach,
    /// Robust power allocation by bisection at the same beamformer.
    Bisection,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::PerfectOptimal,
        Method::PerfectGradient,
        Method::RobustOptimal,
        Method::RobustGradient,
        Method::SimplifiedRobust,
        Method::Nonrobust,
        Method::Dinkelbach,
        Method::Bisection,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::PerfectOptimal => "perfect_optimal",
            Method::PerfectGradient => "perfect_gradient",
            Method::RobustOptimal => "robust_optimal",
            Method::RobustGradient => "robust_gradient",
            Method::SimplifiedRobust => "simplified_robust",
            Method::Nonrobust => "nonrobust",
            Method::Dinkelbach => "dinkelbach",
            Method::Bisection => "bisection",
        }
    }

    fn needs_perfect_design(self) -> bool {
        !matches!(self, Method::PerfectGradient | Method::Dinkelbach | Method::Bisection)
    }

    fn traceable(self) -> bool {
        matches!(self, Method::PerfectOptimal | Method::RobustOptimal)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::Spec(format!("unknown method `{s}`")))
    }
}

/// One network shape: every relay has the same antenna count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub n_t: usize,
    pub relay_antennas: usize,
    pub n_relays: usize,
}

fn default_source_power_db() -> f64 {
    10.0
}

fn default_delta1() -> f64 {
    0.01
}

fn default_delta2() -> f64 {
    0.1
}

fn default_pa_max_iterations() -> usize {
    MAX_PA_ITERATIONS
}

/// A Monte Carlo study. Networks are either listed explicitly or formed as
/// the product of `n_t`, `relay_antennas` and `n_relays`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default = "default_source_power_db")]
    pub source_power_db: f64,
    pub relay_power_db: Vec<f64>,
    pub rho: Vec<f64>,
    #[serde(default)]
    pub n_t: Vec<usize>,
    #[serde(default)]
    pub relay_antennas: Vec<usize>,
    #[serde(default)]
    pub n_relays: Vec<usize>,
    #[serde(default)]
    pub networks: Vec<Network>,
    pub methods: Vec<Method>,
    pub n_trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_delta1")]
    pub delta1: f64,
    #[serde(default = "default_delta2")]
    pub delta2: f64,
    /// Add a `mean_iterations` column.
    #[serde(default)]
    pub report_iterations: bool,
    /// Record polyblock bound traces for the optimal methods.
    #[serde(default)]
    pub trace: bool,
    /// Iteration cap of the polyblock search; runs that hit it keep their
    /// incumbent and are counted as capped.
    #[serde(default = "default_pa_max_iterations")]
    pub pa_max_iterations: usize,
}

pub const PRESETS: [&str; 6] = ["fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig3" => include_str!("../presets/fig3.toml"),
        "fig4" => include_str!("../presets/fig4.toml"),
        "fig5" => include_str!("../presets/fig5.toml"),
        "fig6" => include_str!("../presets/fig6.toml"),
        "fig7" => include_str!("../presets/fig7.toml"),
        "fig8" => include_str!("../presets/fig8.toml"),
        _ => return None,
    })
}

impl ExperimentSpec {
    pub fn preset(name: &str) -> Result<Self> {
        let src = preset_source(name).ok_or_else(|| Error::Spec(format!("unknown preset `{name}`")))?;
        Self::from_toml_str(src)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a `.toml` or `.json` file; other extensions are tried as TOML
    /// and then JSON.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text),
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text).or_else(|_| Self::from_json_str(&text)),
        }
    }

    /// A preset name or a path to a spec file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if preset_source(name_or_path).is_some() {
            return Self::preset(name_or_path);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(Error::Spec(format!(
                "`{name_or_path}` is neither a preset ({}) nor an existing file",
                PRESETS.join(", ")
            )));
        }
        Self::from_path(path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Spec(msg));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("name `{}` must be a non-empty file stem", self.name));
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.relay_power_db.is_empty() || self.rho.is_empty() || self.methods.is_empty() {
            return bad("relay_power_db, rho and methods must be non-empty".into());
        }
        if self.relay_power_db.iter().chain([&self.source_power_db]).any(|p| !p.is_finite()) {
            return bad("powers must be finite".into());
        }
        if let Some(r) = self.rho.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
            return bad(format!("rho {r} outside [0, 1)"));
        }
        if !(self.delta1 > 0.0 && self.delta2 > 0.0) {
            return bad("delta1 and delta2 must be positive".into());
        }
        if self.pa_max_iterations == 0 {
            return bad("pa_max_iterations must be at least 1".into());
        }
        let distinct: BTreeSet<Method> = self.methods.iter().copied().collect();
        if distinct.len() != self.methods.len() {
            return bad("methods must not repeat".into());
        }
        let lists = [&self.n_t, &self.relay_antennas, &self.n_relays];
        if self.networks.is_empty() {
            if lists.iter().any(|l| l.is_empty()) {
                return bad("give n_t, relay_antennas and n_relays, or a networks list".into());
            }
        } else if lists.iter().any(|l| !l.is_empty()) {
            return bad("networks cannot be combined with n_t / relay_antennas / n_relays".into());
        }
        for net in self.networks() {
            if net.n_t == 0 || net.relay_antennas == 0 || net.n_relays == 0 {
                return bad(format!("network {net:?} has a zero dimension"));
            }
            let optimal = self.methods.iter().any(|m| m.needs_perfect_design());
            if net.n_relays > 16 || (optimal && net.n_relays > 8) {
                return Err(Error::TooManyRelays(net.n_relays));
            }
        }
        if self.trace && !self.methods.iter().any(|m| m.traceable()) {
            return bad("trace needs perfect_optimal or robust_optimal".into());
        }
        Ok(())
    }

    pub fn networks(&self) -> Vec<Network> {
        if !self.networks.is_empty() {
            return self.networks.clone();
        }
        let mut out = Vec::new();
        for &n_t in &self.n_t {
            for &relay_antennas in &self.relay_antennas {
                for &n_relays in &self.n_relays {
                    out.push(Network { n_t, relay_antennas, n_relays });
                }
            }
        }
        out
    }

    /// Sweep points ordered by network, then `ρ`, then relay power.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for network in self.networks() {
            for &rho in &self.rho {
                for &relay_power_db in &self.relay_power_db {
                    out.push(SweepPoint { network, rho, relay_power_db });
                }
            }
        }
        out
    }

    pub fn pa_options(&self) -> PaOptions {
        PaOptions { delta1: self.delta1, delta2: self.delta2, max_iter: self.pa_max_iterations, ..PaOptions::default() }
    }

    /// Seed of the channel draw of trial `t`, shared by every method and
    /// sweep point.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub network: Network,
    pub rho: f64,
    pub relay_power_db: f64,
}

impl SweepPoint {
    pub fn config(&self, source_power_db: f64) -> Result<NetworkConfig> {
        let net = self.network;
        NetworkConfig::from_db(net.n_t, vec![net.relay_antennas; net.n_relays], source_power_db, self.relay_power_db, self.rho)
    }
}

/// One method's outcome on one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Linear SNR: nominal for the perfect-CSI designs, worst case otherwise.
    pub snr: f64,
    pub iterations: Option<usize>,
    /// `(f_min, f_max)` per polyblock iteration.
    pub bounds: Vec<(f64, f64)>,
    /// False when an iterative search stopped at its cap.
    pub converged: bool,
    /// Final `(f_max − f_min) / f_min` of a polyblock search.
    pub rel_gap: Option<f64>,
}

impl Sample {
    fn plain(snr: f64, iterations: Option<usize>) -> Self {
        Sample { snr, iterations, bounds: vec![], converged: true, rel_gap: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub point: usize,
    pub trial: usize,
    pub method: Method,
    /// `None` when the trial failed.
    pub sample: Option<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub point: SweepPoint,
    pub method: Method,
    pub mean_snr_linear: f64,
    pub mean_snr_db: f64,
    /// Sample standard deviation of the per-trial SNR in dB.
    pub std_db: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Successful trials whose search stopped at its iteration cap.
    pub n_capped: usize,
    pub mean_iterations: Option<f64>,
    /// Largest final relative bound gap of the polyblock searches.
    pub max_rel_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub point: SweepPoint,
    pub method: Method,
    pub iteration: usize,
    /// Mean of `(f_min − f_opt) / f_opt`.
    pub mean_lower_rel_err: f64,
    /// Mean of `(f_max − f_opt) / f_opt`.
    pub mean_upper_rel_err: f64,
}

/// Which optional CSV columns are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Columns {
    pub n_t: bool,
    pub relay_antennas: bool,
    pub n_relays: bool,
    pub iterations: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub columns: Columns,
    pub points: Vec<SweepPoint>,
    pub rows: Vec<ResultRow>,
    pub trace: Vec<TraceRow>,
    pub trials: Vec<TrialRecord>,
}

impl ResultTable {
    pub fn empty(name: &str) -> Self {
        ResultTable {
            name: name.to_string(),
            columns: Columns { n_t: false, relay_antennas: false, n_relays: false, iterations: false },
            points: vec![],
            rows: vec![],
            trace: vec![],
            trials: vec![],
        }
    }

    pub fn row(&self, point: usize, method: Method) -> Option<&ResultRow> {
        let p = self.points.get(point)?;
        self.rows.iter().find(|r| r.method == method && r.point == *p)
    }

    /// Per-trial samples of one method at one sweep point, by trial index.
    pub fn samples(&self, point: usize, method: Method) -> Vec<Option<&Sample>> {
        self.trials.iter().filter(|t| t.point == point && t.method == method).map(|t| t.sample.as_ref()).collect()
    }
}

fn uniform_beamformer(ch: &ChannelRealization, p_s: f64) -> Result<DVector<Complex64>> {
    let grams = ch.grams();
    let mut sum = grams[0].clone();
    for k in &grams[1..] {
        sum += k;
    }
    Ok(principal_eigvec(&sum)?.0.scale(p_s.sqrt()))
}

fn pa_sample(out: &PaOutcome, trace: bool) -> Sample {
    let bounds = if trace { out.trace.iter().map(|s| (s.f_min, s.f_max)).collect() } else { vec![] };
    let rel_gap = out.trace.last().map(|s| (s.f_max - s.f_min) / s.f_min.max(f64::MIN_POSITIVE));
    Sample { snr: out.snr, iterations: Some(out.iterations), bounds, converged: out.converged, rel_gap }
}

/// Runs every method of `spec` on one channel draw.
pub fn run_trial(spec: &ExperimentSpec, point: &SweepPoint, trial: usize) -> Result<Vec<(Method, Result<Sample>)>> {
    let config = point.config(spec.source_power_db)?;
    let ch = generate_channels(&config, spec.trial_seed(trial));
    let opts = spec.pa_options();
    let grad_opts = GradientOptions { delta1: spec.delta1.min(1e-6), ..GradientOptions::default() };
    let perfect_csi = ch.eps.iter().all(|&e| e == 0.0);

    let perfect: Option<Result<PaOutcome>> = spec
        .methods
        .iter()
        .any(|m| m.needs_perfect_design())
        .then(|| pa_solve_with(&ch.with_perfect_csi(), &config, &opts));
    let perfect_ref = || -> Result<&PaOutcome> {
        match perfect.as_ref().expect("perfect design requested") {
            Ok(p) => Ok(p),
            Err(e) => Err(Error::Numerical(format!("perfect-CSI design failed: {e}"))),
        }
    };

    let mut out = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        let sample = match method {
            Method::PerfectOptimal => perfect_ref().map(|p| pa_sample(p, spec.trace)),
            Method::PerfectGradient => perfect_gradient(&ch, &config, &grad_opts)
                .map(|g| Sample::plain(g.snr, Some(g.steps))),
            Method::RobustOptimal => perfect_ref().and_then(|p| {
                if perfect_csi {
                    Ok(pa_sample(p, spec.trace))
                } else {
                    pa_solve_seeded(&ch, &config, &opts, std::slice::from_ref(&p.g)).map(|r| pa_sample(&r, spec.trace))
                }
            }),
            Method::RobustGradient => perfect_ref().and_then(|p| {
                robust_gradient_with(&ch, &config, &p.g, &grad_opts)
                    .map(|g| Sample::plain(g.snr, Some(g.steps)))
            }),
            Method::SimplifiedRobust => perfect_ref().and_then(|p| {
                simplified_from_g(&ch, &config, &p.g, spec.delta1).map(|s| Sample::plain(s.snr, None))
            }),
            Method::Nonrobust => perfect_ref().and_then(|p| {
                nonrobust_from_g(&ch, &config, &p.g).map(|n| Sample::plain(n.snr_worst, None))
            }),
            Method::Dinkelbach | Method::Bisection => allocation_sample(method, &ch, &config, spec.delta1),
        };
        out.push((method, sample));
    }
    Ok(out)
}

/// Power allocation at the beamformer `√P_s υ(Σ H_iᴴH_i)`. Bisection
/// brackets the level between the worst case of the non-robust allocation
/// and the nominal optimum.
fn allocation_sample(method: Method, ch: &ChannelRealization, config: &NetworkConfig, delta1: f64) -> Result<Sample> {
    let g = uniform_beamformer(ch, config.p_s)?;
    let ctx = SnrContext::new(effective_gains(ch, &g)?.u_norms, config);
    let vertices = vertex_set(ch)?;
    let res = if method == Method::Dinkelbach {
        dinkelbach_solve(&vertices, &ctx, delta1)?
    } else {
        let base = nonrobust_from_g(ch, config, &g)?;
        bisection_solve(&vertices, &ctx, delta1, base.snr_worst, base.snr_nominal)?
    };
    Ok(Sample::plain(res.gamma, Some(res.iterations)))
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Runs the experiment. Trials run in parallel and are reduced in trial
/// order, so the result does not depend on the thread count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let points = spec.sweep_points();
    let nets = spec.networks();
    let varies = |f: fn(&Network) -> usize| nets.iter().map(f).collect::<BTreeSet<_>>().len() > 1;
    let columns = Columns {
        n_t: varies(|n| n.n_t),
        relay_antennas: varies(|n| n.relay_antennas),
        n_relays: varies(|n| n.n_relays),
        iterations: spec.report_iterations,
    };
    let mut table = ResultTable { columns, points: points.clone(), ..ResultTable::empty(&spec.name) };

    for (pi, point) in points.iter().enumerate() {
        log::info!(
            "{}: point {}/{} (N_T={}, M={}, R={}, rho={}, relay {} dB)",
            spec.name,
            pi + 1,
            points.len(),
            point.network.n_t,
            point.network.relay_antennas,
            point.network.n_relays,
            point.rho,
            point.relay_power_db
        );
        let per_trial: Vec<Result<Vec<(Method, Result<Sample>)>>> =
            (0..spec.n_trials).into_par_iter().map(|t| run_trial(spec, point, t)).collect();
        let mut records: Vec<TrialRecord> = Vec::with_capacity(spec.n_trials * spec.methods.len());
        for (t, res) in per_trial.into_iter().enumerate() {
            let results = res?;
            for (method, sample) in results {
                let sample = match sample {
                    Ok(s) => Some(s),
                    Err(e) => {
                        log::warn!("{}: trial {t} of {method} at point {pi} failed: {e}", spec.name);
                        None
                    }
                };
                records.push(TrialRecord { point: pi, trial: t, method, sample });
            }
        }
        for &method in &spec.methods {
            let ok: Vec<&Sample> = records.iter().filter(|r| r.method == method).filter_map(|r| r.sample.as_ref()).collect();
            let failed = spec.n_trials - ok.len();
            if failed * 20 > spec.n_trials {
                return Err(Error::TooManyFailures { failed, total: spec.n_trials });
            }
            table.rows.push(aggregate(point, method, &ok, failed));
            if spec.trace && method.traceable() {
                table.trace.extend(aggregate_trace(point, method, &ok));
            }
        }
        table.trials.extend(records);
    }
    Ok(table)
}

fn aggregate(point: &SweepPoint, method: Method, ok: &[&Sample], failed: usize) -> ResultRow {
    let mean_lin = mean(ok.iter().map(|s| s.snr)).unwrap_or(f64::NAN);
    let dbs: Vec<f64> = ok.iter().map(|s| linear_to_db(s.snr)).collect();
    let std_db = match mean(dbs.iter().copied()) {
        Some(m) if dbs.len() > 1 => (dbs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (dbs.len() - 1) as f64).sqrt(),
        _ => 0.0,
    };
    ResultRow {
        point: *point,
        method,
        mean_snr_linear: mean_lin,
        mean_snr_db: linear_to_db(mean_lin),
        std_db,
        n_ok: ok.len(),
        n_failed: failed,
        n_capped: ok.iter().filter(|s| !s.converged).count(),
        mean_iterations: mean(ok.iter().filter_map(|s| s.iterations.map(|k| k as f64))),
        max_rel_gap: ok.iter().filter_map(|s| s.rel_gap).reduce(f64::max),
    }
}

/// Relative bound errors against each trial's final lower bound, padded
/// with the final values after a trial has stopped.
fn aggregate_trace(point: &SweepPoint, method: Method, ok: &[&Sample]) -> Vec<TraceRow> {
    let runs: Vec<&Vec<(f64, f64)>> = ok.iter().map(|s| &s.bounds).filter(|b| !b.is_empty()).collect();
    let len = runs.iter().map(|b| b.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let errs: Vec<(f64, f64)> = runs
                .iter()
                .map(|b| {
                    let opt = b.last().expect("non-empty").0;
                    let (lo, hi) = b[k.min(b.len() - 1)];
                    ((lo - opt) / opt, (hi - opt) / opt)
                })
                .collect();
            TraceRow {
                point: *point,
                method,
                iteration: k + 1,
                mean_lower_rel_err: mean(errs.iter().map(|e| e.0)).unwrap_or(f64::NAN),
                mean_upper_rel_err: mean(errs.iter().map(|e| e.1)).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}

fn point_fields(columns: &Columns, p: &SweepPoint) -> Vec<String> {
    let mut out = vec![format!("{}", p.relay_power_db), format!("{}", p.rho)];
    if columns.n_t {
        out.push(p.network.n_t.to_string());
    }
    if columns.relay_antennas {
        out.push(p.network.relay_antennas.to_string());
    }
    if columns.n_relays {
        out.push(p.network.n_relays.to_string());
    }
    out
}

fn point_header(columns: &Columns) -> Vec<&'static str> {
    let mut out = vec!["relay_power_db", "rho"];
    if columns.n_t {
        out.push("n_t");
    }
    if columns.relay_antennas {
        out.push("relay_antennas");
    }
    if columns.n_relays {
        out.push("n_relays");
    }
    out
}

/// The result CSV: one row per (sweep point, method) after a header row.
pub fn csv_bytes(table: &ResultTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = point_header(&table.columns);
    header.extend(["method", "mean_snr_db", "std_db", "n_ok"]);
    if table.columns.iterations {
        header.push("mean_iterations");
    }
    w.write_record(&header)?;
    for row in &table.rows {
        let mut rec = point_fields(&table.columns, &row.point);
        rec.extend([row.method.id().to_string(), fmt_f(row.mean_snr_db), fmt_f(row.std_db), row.n_ok.to_string()]);
        if table.columns.iterations {
            rec.push(row.mean_iterations.map(fmt_f).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes [`csv_bytes`] to `path`.
pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    std::fs::write(path, csv_bytes(table)?)?;
    Ok(())
}

/// Writes the polyblock bound traces, one row per (sweep point, method,
/// iteration).
pub fn emit_trace_csv(table: &ResultTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = point_header(&table.columns);
    header.extend(["method", "iteration", "mean_lower_rel_err", "mean_upper_rel_err"]);
    w.write_record(&header)?;
    for row in &table.trace {
        let mut rec = point_fields(&table.columns, &row.point);
        rec.extend([
            row.method.id().to_string(),
            row.iteration.to_string(),
            format!("{:.9e}", row.mean_lower_rel_err),
            format!("{:.9e}", row.mean_upper_rel_err),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<name>.csv`, `<name>_trace.csv` when traces were recorded, and
/// `meta.json` into `dir`. Returns the written paths.
pub fn write_outputs(spec: &ExperimentSpec, table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = vec![dir.join(format!("{}.csv", table.name))];
    emit_csv(table, &files[0])?;
    if !table.trace.is_empty() {
        let p = dir.join(format!("{}_trace.csv", table.name));
        emit_trace_csv(table, &p)?;
        files.push(p);
    }
    let failures: Vec<serde_json::Value> = table
        .rows
        .iter()
        .filter(|r| r.n_failed > 0 || r.n_capped > 0)
        .map(|r| {
            serde_json::json!({
                "relay_power_db": r.point.relay_power_db,
                "rho": r.point.rho,
                "network": r.point.network,
                "method": r.method.id(),
                "failed": r.n_failed,
                "capped": r.n_capped,
                "max_rel_gap": r.max_rel_gap,
            })
        })
        .collect();
    let names: Vec<String> =
        files.iter().filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect();
    let meta = serde_json::json!({
        "name": spec.name,
        "version": env!("CARGO_PKG_VERSION"),
        "base_seed": spec.base_seed,
        "n_trials": spec.n_trials,
        "seeding": "trial t draws its channels with seed base_seed + t for every method and sweep point",
        "delta1": spec.delta1,
        "delta2": spec.delta2,
        "pa_max_iterations": spec.pa_max_iterations,
        "source_power_db": spec.source_power_db,
        "noise_variance": 1.0,
        "averaging": "mean_snr_db = 10 log10(mean of linear SNR); std_db = sample std of per-trial SNR in dB",
        "snr_reported": "nominal for perfect_optimal and perfect_gradient, worst case for all other methods",
        "files": names,
        "failures": failures,
        "spec": spec,
    });
    let meta_path = dir.join("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    files.push(meta_path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: &[Method]) -> ExperimentSpec {
        ExperimentSpec {
            name: "t".into(),
            source_power_db: 10.0,
            relay_power_db: vec![20.0],
            rho: vec![0.3],
            n_t: vec![2],
            relay_antennas: vec![2],
            n_relays: vec![2],
            networks: vec![],
            methods: methods.to_vec(),
            n_trials: 2,
            base_seed: 7,
            delta1: 0.01,
            delta2: 0.1,
            report_iterations: false,
            trace: false,
            pa_max_iterations: MAX_PA_ITERATIONS,
        }
    }

    #[test]
    fn presets_parse() {
        for name in PRESETS {
            let spec = ExperimentSpec::preset(name).unwrap();
            assert_eq!(spec.name, name);
            assert_eq!(spec.n_trials, 100);
            assert_eq!(spec.source_power_db, 10.0);
        }
        assert_eq!(ExperimentSpec::preset("fig8").unwrap().networks().len(), 6);
        assert_eq!(ExperimentSpec::preset("fig7").unwrap().sweep_points().len(), 27);
    }

    #[test]
    fn json_and_toml_agree() {
        let spec = small(&[Method::Nonrobust]);
        let json = serde_json::to_string(&spec).unwrap();
        let toml_text = toml::to_string(&spec).unwrap();
        assert_eq!(ExperimentSpec::from_json_str(&json).unwrap(), spec);
        assert_eq!(ExperimentSpec::from_toml_str(&toml_text).unwrap(), spec);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small(&[Method::Nonrobust]);
        s.n_trials = 0;
        assert!(s.validate().is_err());
        let mut s = small(&[Method::Nonrobust, Method::Nonrobust]);
        assert!(s.validate().is_err());
        s.methods = vec![Method::Nonrobust];
        s.rho = vec![1.0];
        assert!(s.validate().is_err());
        let mut s = small(&[Method::Nonrobust]);
        s.networks = vec![Network { n_t: 1, relay_antennas: 1, n_relays: 1 }];
        assert!(s.validate().is_err());
        assert!(ExperimentSpec::from_toml_str("name = \"x\"\nbogus = 1").is_err());
        assert!("perfect".parse::<Method>().is_err());
        assert_eq!("robust_gradient".parse::<Method>().unwrap(), Method::RobustGradient);
    }

    #[test]
    fn empty_table_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        emit_csv(&ResultTable::empty("e"), &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "relay_power_db,rho,method,mean_snr_db,std_db,n_ok\n");
    }

    #[test]
    fn perfect_csi_robust_equals_perfect() {
        let mut s = small(&[Method::PerfectOptimal, Method::RobustOptimal, Method::Nonrobust, Method::SimplifiedRobust]);
        s.rho = vec![0.0];
        let t = run_experiment(&s).unwrap();
        let a = t.row(0, Method::PerfectOptimal).unwrap().mean_snr_db;
        let b = t.row(0, Method::RobustOptimal).unwrap().mean_snr_db;
        let c = t.row(0, Method::Nonrobust).unwrap().mean_snr_db;
        assert!((a - b).abs() <= 1e-6);
        assert!((a - c).abs() <= 1e-6);
    }

    #[test]
    fn allocation_methods_report_iterations() {
        let mut s = small(&[Method::Dinkelbach, Method::Bisection]);
        s.report_iterations = true;
        let t = run_experiment(&s).unwrap();
        let d = t.row(0, Method::Dinkelbach).unwrap();
        let b = t.row(0, Method::Bisection).unwrap();
        assert!(d.mean_iterations.unwrap() < b.mean_iterations.unwrap());
        assert!((d.mean_snr_linear - b.mean_snr_linear).abs() <= 0.01 + 1e-9);
    }

    #[test]
    fn trace_rows_end_at_zero_lower_error() {
        let mut s = small(&[Method::RobustOptimal]);
        s.trace = true;
        let t = run_experiment(&s).unwrap();
        let last = t.trace.last().unwrap();
        assert!(last.mean_lower_rel_err.abs() < 1e-12);
        assert!(last.mean_upper_rel_err >= -1e-12);
        for w in t.trace.windows(2) {
            assert!(w[1].mean_lower_rel_err >= w[0].mean_lower_rel_err - 1e-12);
            assert!(w[1].mean_upper_rel_err <= w[0].mean_upper_rel_err + 1e-12);
        }
    }

    #[test]
    fn outputs_are_deterministic() {
        let s = small(&[Method::SimplifiedRobust, Method::Nonrobust]);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_outputs(&s, &run_experiment(&s).unwrap(), d1.path()).unwrap();
        write_outputs(&s, &run_experiment(&s).unwrap(), d2.path()).unwrap();
        for f in ["t.csv", "meta.json"] {
            assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap());
        }
    }
}
