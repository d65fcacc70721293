//! Event-driven simulation of a network under the discrete review policy or
//! a work-conserving baseline.

mod engine;
mod monitor;
mod output;

pub use engine::{run_baseline_trajectory, run_dr_trajectory, Discipline};
pub use monitor::{monitor_good_events, MonitorError, PeriodDiagnostics};
pub use output::{
    read_events_csv, write_events_csv, write_periods_csv, EventRow, TrajectoryFileError,
};

use serde::{Deserialize, Serialize};

use crate::network::NetworkSpec;
use crate::policy::ReviewPlan;

/// Completions closer than this to the current time are taken as simultaneous.
pub const COMPLETION_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Start,
    Arrival,
    Completion,
    Boundary,
    Review,
    Horizon,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::Arrival => "arrival",
            EventKind::Completion => "completion",
            EventKind::Boundary => "boundary",
            EventKind::Review => "review",
            EventKind::Horizon => "horizon",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "start" => EventKind::Start,
            "arrival" => EventKind::Arrival,
            "completion" => EventKind::Completion,
            "boundary" => EventKind::Boundary,
            "review" => EventKind::Review,
            "horizon" => EventKind::Horizon,
            _ => return None,
        })
    }
}

/// State right after one event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub kind: EventKind,
    /// Buffer for arrivals, activity for completions, server for boundaries.
    pub index: Option<usize>,
    pub z: Vec<i64>,
    /// Exogenous arrivals per buffer, `E(t)`.
    pub arrivals: Vec<u64>,
    /// Routed arrivals per destination buffer, `sum_j Phi_j(S_j(T_j(t)))`.
    pub routed: Vec<u64>,
    /// Completions per activity, `S(T(t))`.
    pub completions: Vec<u64>,
    /// Cumulative busy time per activity, `T(t)`.
    pub busy: Vec<f64>,
    /// Cumulative idle time per server, `I(t)`.
    pub idle: Vec<f64>,
    pub w: f64,
    pub i_w: f64,
    /// `int_0^t h.Z(s) ds`
    pub cost: f64,
}

/// Residual interarrival and service times at a review point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    /// Zero for buffers without exogenous arrivals.
    pub interarrival: Vec<f64>,
    /// Zero for activities with no job in progress.
    pub service: Vec<f64>,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.interarrival.iter().chain(&self.service).copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub k: usize,
    pub tau: f64,
    pub plan: ReviewPlan,
    pub residuals: Option<Residuals>,
    /// Index of the review sample in [`Trajectory::samples`].
    pub sample: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Dr,
    Priority,
    LongestQueue,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Dr => "dr",
            PolicyKind::Priority => "priority",
            PolicyKind::LongestQueue => "longest-queue",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dr" => Ok(PolicyKind::Dr),
            "priority" => Ok(PolicyKind::Priority),
            "longest-queue" => Ok(PolicyKind::LongestQueue),
            other => Err(format!("unknown policy `{other}` (expected dr, priority or longest-queue)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub policy: PolicyKind,
    pub seed: u64,
    pub replication: u64,
    pub horizon: f64,
    pub z0: Vec<i64>,
    pub samples: Vec<Sample>,
    /// Review periods in order; empty for baselines.
    pub periods: Vec<PeriodRecord>,
}

impl Trajectory {
    /// Index of the last sample at or before `t`.
    pub fn sample_index_at(&self, t: f64) -> usize {
        self.samples.partition_point(|s| s.t <= t).saturating_sub(1)
    }

    pub fn sample_at(&self, t: f64) -> &Sample {
        &self.samples[self.sample_index_at(t)]
    }

    /// Fraction of review periods planned under Case 2.
    pub fn case2_fraction(&self) -> f64 {
        if self.periods.is_empty() {
            return 0.0;
        }
        let n = self.periods.iter().filter(|p| p.plan.case_tag == crate::policy::Case::Two).count();
        n as f64 / self.periods.len() as f64
    }

    /// Largest `|Z - Z0 - E - routed + C S|` entry over all samples.
    pub fn ledger_residual(&self, net: &NetworkSpec) -> i64 {
        self.samples.iter().map(|s| ledger_residual(s, &self.z0, net)).max().unwrap_or(0)
    }
}

/// `|Z(t) - (Z(0) + E(t) + sum_j Phi_j(S_j) - C S(T(t)))|_inf` at one sample.
pub fn ledger_residual(s: &Sample, z0: &[i64], net: &NetworkSpec) -> i64 {
    let mut expect: Vec<i64> = (0..z0.len())
        .map(|i| z0[i] + s.arrivals[i] as i64 + s.routed[i] as i64)
        .collect();
    for (j, &c) in s.completions.iter().enumerate() {
        expect[net.activity_buffer[j]] -= c as i64;
    }
    s.z.iter().zip(&expect).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
}

/// `W = y'Z`
pub fn compute_workload(z: &[i64], y: &[f64]) -> f64 {
    z.iter().zip(y).map(|(&zi, yi)| zi as f64 * yi).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostSummary {
    pub discounted: f64,
    pub average: f64,
}

/// Discounted and time-average holding cost over `[0, horizon]`, integrating
/// the piecewise-constant queue path exactly.
pub fn accumulate_cost(traj: &Trajectory, h: &[f64], gamma: f64) -> CostSummary {
    let mut discounted = 0.0;
    let mut total = 0.0;
    for (k, s) in traj.samples.iter().enumerate() {
        let start = s.t.min(traj.horizon);
        let end = traj.samples.get(k + 1).map_or(traj.horizon, |n| n.t).min(traj.horizon);
        if end <= start {
            continue;
        }
        let rate: f64 = s.z.iter().zip(h).map(|(&z, h)| z as f64 * h).sum();
        total += rate * (end - start);
        discounted += rate
            * if gamma > 0.0 {
                ((-gamma * start).exp() - (-gamma * end).exp()) / gamma
            } else {
                end - start
            };
    }
    let average = if traj.horizon > 0.0 { total / traj.horizon } else { 0.0 };
    CostSummary { discounted, average }
}
