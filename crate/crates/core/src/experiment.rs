//! Replication studies over a ladder of scales, aggregated into tail,
//! collapse, good-event and cost statistics.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{load_network, NetworkFileError, NetworkSpec};
use crate::planner::{PlanError, StaticPlan};
use crate::policy::{scale_parameters, Case, PolicyError, PolicyParams};
use crate::scaling::{collapse_statistic, compute_sigma2, diffusion_scale, rbm_cost_tail, rbm_tail, scaling_grid};
use crate::sim::{
    accumulate_cost, monitor_good_events, run_baseline_trajectory, run_dr_trajectory, Discipline, PolicyKind,
    Trajectory,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Network(#[from] NetworkFileError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
}

impl ExperimentError {
    /// Process exit code: 2 for assumption failures, 3 for IO failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Plan(_) => 2,
            ExperimentError::Io { .. } | ExperimentError::Format { .. } => 3,
            ExperimentError::Network(NetworkFileError::Io { .. }) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.display().to_string(), source }
}

fn default_policies() -> Vec<PolicyKind> {
    vec![PolicyKind::Dr, PolicyKind::Priority]
}

fn default_r() -> Vec<u32> {
    vec![8, 16, 32]
}

fn default_eps2() -> f64 {
    0.1
}

fn default_horizon() -> f64 {
    1.0
}

fn default_times() -> Vec<f64> {
    vec![0.5, 1.0]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Network file, relative to the config file's directory.
    pub network: PathBuf,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_r")]
    pub r_values: Vec<u32>,
    #[serde(default = "default_eps2")]
    pub eps2: f64,
    /// Horizon in diffusion time; each replication runs `r^2 horizon`.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Cost levels `x`; when absent, `{0.5, 1, 1.5} (h_c/y_c) sigma sqrt(t)` per time.
    #[serde(default)]
    pub tail_levels: Option<Vec<f64>>,
    #[serde(default = "default_times")]
    pub eval_times: Vec<f64>,
    #[serde(default = "default_true")]
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    /// Reads a config file and resolves its paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.network.is_relative() {
            cfg.network = base.join(&cfg.network);
        }
        if let Some(out) = cfg.output_dir.as_mut().filter(|o| o.is_relative()) {
            *out = base.join(&*out);
        }
        Ok(cfg)
    }

    fn validate(&self, plan: &StaticPlan) -> Result<(), ExperimentError> {
        if self.replications < 1 {
            return Err(ExperimentError::Config("replications must be at least 1".into()));
        }
        if self.policies.is_empty() || self.r_values.is_empty() {
            return Err(ExperimentError::Config("policies and r_values must be nonempty".into()));
        }
        if self.r_values.contains(&0) {
            return Err(ExperimentError::Config("r values must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(ExperimentError::Config("horizon must be positive".into()));
        }
        if self.eval_times.iter().any(|&t| !(t > 0.0 && t <= self.horizon)) {
            return Err(ExperimentError::Config("evaluation times must lie in (0, horizon]".into()));
        }
        scale_parameters(1.0, self.eps2, plan)?;
        Ok(())
    }
}

/// Statistics of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replication: u64,
    /// `h . Ẑ(t)` per evaluation time.
    pub cost_hat: Vec<f64>,
    /// `Ŵ(t)` per evaluation time.
    pub w_hat: Vec<f64>,
    pub collapse: f64,
    pub collapse_bound: f64,
    /// Fraction of completed periods with every good event; DR only.
    pub good_fraction: Option<f64>,
    pub case2_fraction: Option<f64>,
    pub periods: usize,
    pub average_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: PolicyKind,
    pub r: u32,
    pub statistic: String,
    pub t: Option<f64>,
    pub x: Option<f64>,
    pub value: f64,
    pub stderr: Option<f64>,
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub policy: PolicyKind,
    pub r: u32,
    pub l: f64,
    pub rows: Vec<ResultRow>,
    pub replications: Vec<ReplicationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub config: ExperimentConfig,
    pub sigma2: f64,
    pub cells: Vec<Cell>,
}

impl ResultTable {
    pub fn rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.cells.iter().flat_map(|c| c.rows.iter())
    }

    pub fn cell(&self, policy: PolicyKind, r: u32) -> Option<&Cell> {
        self.cells.iter().find(|c| c.policy == policy && c.r == r)
    }
}

/// Replication id shared across policies at the same `(r, i)`.
pub fn replication_id(r: u32, i: usize) -> u64 {
    ((r as u64) << 32) | i as u64
}

/// `(t, x)` pairs for the cost tail and `(t, w)` pairs for the workload tail.
fn levels(cfg: &ExperimentConfig, sigma: f64, plan: &StaticPlan, h: &[f64]) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let c = plan.cheapest_buffer();
    let ratio = h[c] / plan.y[c];
    let mut cost = Vec::new();
    let mut work = Vec::new();
    for &t in &cfg.eval_times {
        let unit = sigma * t.sqrt();
        for k in [0.5, 1.0, 1.5] {
            work.push((t, k * unit));
        }
        match &cfg.tail_levels {
            Some(xs) => cost.extend(xs.iter().map(|&x| (t, x))),
            None => cost.extend([0.5, 1.0, 1.5].map(|k| (t, k * ratio * unit))),
        }
    }
    (cost, work)
}

fn simulate(
    policy: PolicyKind,
    net: &NetworkSpec,
    plan: &StaticPlan,
    params: &PolicyParams,
    horizon: f64,
    seed: u64,
    replication: u64,
) -> Trajectory {
    match policy {
        PolicyKind::Dr => run_dr_trajectory(net, plan, params, horizon, seed, replication),
        PolicyKind::Priority => run_baseline_trajectory(net, plan, horizon, seed, replication, Discipline::Priority),
        PolicyKind::LongestQueue => {
            run_baseline_trajectory(net, plan, horizon, seed, replication, Discipline::LongestQueue)
        }
    }
}

/// One replication of one cell.
pub fn run_replication(
    cfg: &ExperimentConfig,
    net: &NetworkSpec,
    plan: &StaticPlan,
    policy: PolicyKind,
    r: u32,
    i: usize,
) -> Result<ReplicationSummary, ExperimentError> {
    let rf = r as f64;
    let params = scale_parameters(rf, cfg.eps2, plan)?;
    let rep = replication_id(r, i);
    let traj = simulate(policy, net, plan, &params, rf * rf * cfg.horizon, cfg.seed, rep);
    let grid = scaling_grid(&traj, rf, cfg.horizon, &cfg.eval_times);
    let scaled = diffusion_scale(&traj, net, plan, rf, &grid)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let at = |t: f64| grid.iter().position(|&g| g == t).expect("evaluation times are on the grid");
    let cost_hat = cfg
        .eval_times
        .iter()
        .map(|&t| scaled.z_hat[at(t)].iter().zip(&net.holding_cost).map(|(z, h)| z * h).sum())
        .collect();
    let w_hat = cfg.eval_times.iter().map(|&t| scaled.w_hat[at(t)]).collect();
    let collapse = collapse_statistic(&scaled, plan, params.l);
    let (good_fraction, case2_fraction) = if policy == PolicyKind::Dr {
        let diags = monitor_good_events(&traj, &params, plan).expect("simulator records residuals");
        let good = (!diags.is_empty()).then(|| diags.iter().filter(|d| d.n).count() as f64 / diags.len() as f64);
        let case2 = traj.periods.iter().filter(|p| p.plan.case_tag == Case::Two).count() as f64
            / traj.periods.len().max(1) as f64;
        (good, Some(case2))
    } else {
        (None, None)
    };
    Ok(ReplicationSummary {
        replication: rep,
        cost_hat,
        w_hat,
        collapse: collapse.statistic,
        collapse_bound: collapse.bound,
        good_fraction,
        case2_fraction,
        periods: traj.periods.len(),
        average_cost: accumulate_cost(&traj, &net.holding_cost, 0.0).average,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

/// Binomial estimate and standard error of `P(value > level)`.
fn tail(values: impl Iterator<Item = f64>, level: f64) -> (f64, f64) {
    let (mut hits, mut n) = (0usize, 0usize);
    for v in values {
        n += 1;
        hits += (v > level) as usize;
    }
    let p = hits as f64 / n.max(1) as f64;
    (p, (p * (1.0 - p) / n.max(1) as f64).sqrt())
}

fn aggregate(
    cfg: &ExperimentConfig,
    policy: PolicyKind,
    r: u32,
    l: f64,
    reps: Vec<ReplicationSummary>,
    sigma: f64,
    plan: &StaticPlan,
    h: &[f64],
) -> Cell {
    let (cost_levels, work_levels) = levels(cfg, sigma, plan, h);
    let row = |statistic: &str, t: Option<f64>, x: Option<f64>, value: f64, stderr: Option<f64>, reference: Option<f64>| ResultRow {
        policy,
        r,
        statistic: statistic.into(),
        t,
        x,
        value,
        stderr,
        reference,
    };
    let time_index = |t: f64| cfg.eval_times.iter().position(|&e| e == t).expect("level time is an evaluation time");
    let reference = |f: Result<f64, _>| f.ok();
    let mut rows = Vec::new();
    for &(t, x) in &cost_levels {
        let k = time_index(t);
        let (p, se) = tail(reps.iter().map(|s| s.cost_hat[k]), x);
        rows.push(row("cost_tail", Some(t), Some(x), p, Some(se), reference(rbm_cost_tail(x, t, sigma, plan, h))));
    }
    for &(t, w) in &work_levels {
        let k = time_index(t);
        let (p, se) = tail(reps.iter().map(|s| s.w_hat[k]), w);
        rows.push(row("workload_tail", Some(t), Some(w), p, Some(se), reference(rbm_tail(w, t, sigma))));
    }
    let mut collapse: Vec<f64> = reps.iter().map(|s| s.collapse).collect();
    let bound = reps.first().map_or(0.0, |s| s.collapse_bound);
    let below = collapse.iter().filter(|&&c| c <= bound).count() as f64 / reps.len().max(1) as f64;
    rows.push(row("collapse_median", None, None, median(&mut collapse), None, Some(bound)));
    rows.push(row("collapse_below_bound", None, None, below, None, None));
    let goods: Vec<f64> = reps.iter().filter_map(|s| s.good_fraction).collect();
    if !goods.is_empty() {
        rows.push(row("good_event_fraction", None, None, mean(&goods), None, None));
        let mut g = goods.clone();
        rows.push(row("good_event_median", None, None, median(&mut g), None, None));
    }
    let case2: Vec<f64> = reps.iter().filter_map(|s| s.case2_fraction).collect();
    if !case2.is_empty() {
        rows.push(row("case2_fraction", None, None, mean(&case2), None, None));
    }
    let costs: Vec<f64> = reps.iter().map(|s| s.average_cost).collect();
    rows.push(row("average_cost", None, None, mean(&costs), None, None));
    Cell { policy, r, l, rows, replications: reps }
}

/// Runs every `(policy, r)` cell in declared order against an already
/// loaded network.
pub fn run_experiment_with(cfg: &ExperimentConfig, net: &NetworkSpec) -> Result<ResultTable, ExperimentError> {
    let plan = StaticPlan::build(net)?;
    cfg.validate(&plan)?;
    let stats = compute_sigma2(net, &plan);
    let sigma = stats.sigma2.sqrt();
    let mut cells = Vec::new();
    for &policy in &cfg.policies {
        for &r in &cfg.r_values {
            let l = scale_parameters(r as f64, cfg.eps2, &plan)?.l;
            let run = |i: usize| run_replication(cfg, net, &plan, policy, r, i);
            let reps: Vec<ReplicationSummary> = if cfg.parallel {
                (0..cfg.replications).into_par_iter().map(run).collect::<Result<_, _>>()?
            } else {
                (0..cfg.replications).map(run).collect::<Result<_, _>>()?
            };
            cells.push(aggregate(cfg, policy, r, l, reps, sigma, &plan, &net.holding_cost));
        }
    }
    Ok(ResultTable { config: cfg.clone(), sigma2: stats.sigma2, cells })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let net = load_network(&cfg.network)?;
    run_experiment_with(cfg, &net)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub const RESULTS_HEADER: [&str; 8] = ["policy", "r", "statistic", "t", "x", "value", "stderr", "reference"];

pub fn write_results_csv<W: std::io::Write>(table: &ResultTable, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in table.rows() {
        w.write_record([
            r.policy.as_str().to_string(),
            r.r.to_string(),
            r.statistic.clone(),
            opt(r.t),
            opt(r.x),
            r.value.to_string(),
            opt(r.stderr),
            opt(r.reference),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    crate_version: &'static str,
    sigma2: f64,
    cells: usize,
}

/// Writes `results.csv`, `results.json` and `manifest.json` into `dir`.
pub fn emit_results(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("results.csv");
    let file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_results_csv(table, std::io::BufWriter::new(file)).map_err(|e| ExperimentError::Format {
        path: csv_path.display().to_string(),
        detail: e.to_string(),
    })?;
    let json_path = dir.join("results.json");
    let json = serde_json::to_string_pretty(table).expect("result table serializes");
    std::fs::write(&json_path, json).map_err(io_err(&json_path))?;
    let manifest_path = dir.join("manifest.json");
    let manifest = Manifest {
        config: &table.config,
        seed: table.config.seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        sigma2: table.sigma2,
        cells: table.cells.len(),
    };
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
        .map_err(io_err(&manifest_path))?;
    Ok(vec![csv_path, json_path, manifest_path])
}

pub fn read_results_json(path: &Path) -> Result<ResultTable, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Format { path: path.display().to_string(), detail: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::test_nets::{net_a, net_b, with_all_laws};
    use crate::network::DistributionSpec;

    fn config(reps: usize, r: Vec<u32>) -> ExperimentConfig {
        ExperimentConfig {
            network: PathBuf::from("unused.json"),
            policies: vec![PolicyKind::Dr],
            r_values: r,
            eps2: 0.1,
            horizon: 1.0,
            replications: reps,
            seed: 5,
            output_dir: None,
            tail_levels: None,
            eval_times: vec![0.5, 1.0],
            parallel: true,
        }
    }

    #[test]
    fn single_deterministic_replication() {
        let net = with_all_laws(net_a(), DistributionSpec::deterministic());
        let mut cfg = config(1, vec![1]);
        // sigma is zero for a deterministic network; fixed levels keep the rows finite
        cfg.tail_levels = Some(vec![1.0]);
        let table = run_experiment_with(&cfg, &net).unwrap();
        assert_eq!(table.cells.len(), 1);
        assert_eq!(table.cells[0].replications.len(), 1);
        for row in &table.cells[0].rows {
            if let Some(se) = row.stderr {
                assert_eq!(se, 0.0);
            }
            assert!((0.0..=1.0).contains(&row.value) || !row.statistic.ends_with("tail"));
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let net = net_b();
        let mut cfg = config(6, vec![4, 8]);
        cfg.policies = vec![PolicyKind::Dr, PolicyKind::Priority];
        let par = run_experiment_with(&cfg, &net).unwrap();
        cfg.parallel = false;
        let ser = run_experiment_with(&cfg, &net).unwrap();
        assert_eq!(par.cells, ser.cells);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_results_csv(&par, &mut a).unwrap();
        write_results_csv(&ser, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn emitted_json_round_trips() {
        let net = net_b();
        let cfg = config(3, vec![4]);
        let table = run_experiment_with(&cfg, &net).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_results(&table, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert_eq!(read_results_json(&files[1]).unwrap(), table);
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert!(csv.starts_with("policy,r,statistic,t,x,value,stderr,reference\n"));
    }

    #[test]
    fn empty_table_is_header_only() {
        let table = ResultTable { config: config(1, vec![1]), sigma2: 1.0, cells: vec![] };
        let mut out = Vec::new();
        write_results_csv(&table, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "policy,r,statistic,t,x,value,stderr,reference\n");
    }

    #[test]
    fn assumption_failure_is_exit_two() {
        let mut net = net_b();
        net.arrival_rate = vec![1.0, 0.5];
        let err = run_experiment_with(&config(1, vec![4]), &net).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_eps2_is_rejected() {
        let mut cfg = config(1, vec![4]);
        cfg.eps2 = 0.3;
        assert!(matches!(run_experiment_with(&cfg, &net_b()), Err(ExperimentError::Policy(_))));
    }
}
