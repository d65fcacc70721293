//! First-order network data, stochastic primitives, and structural checks.

mod dist;
mod file;
mod streams;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

pub use dist::{check_moments, DistributionError, DistributionFile, DistributionSpec, Family, DEFAULT_EPS1};
pub use file::{load_network, parse_network, ActivityFile, BufferFile, NetworkFile, NetworkFileError, RouteFile};
pub use streams::{replication_key, PrimitiveStreams, StreamError, StreamId, Substream};

/// Row-sum slack allowed when checking that routing rows are substochastic.
const ROUTING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("structural invariant `{invariant}` violated: {detail}")]
pub struct StructuralError {
    pub invariant: &'static str,
    pub detail: String,
}

/// A multiclass network: `m` buffers, `p` servers, `n` activities.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub buffer_names: Vec<String>,
    pub server_names: Vec<String>,
    /// s(j)
    pub activity_server: Vec<usize>,
    /// b(j)
    pub activity_buffer: Vec<usize>,
    /// n x m, `routing[j][l]` = P(job finishing activity j joins buffer l).
    pub routing: Vec<Vec<f64>>,
    pub arrival_rate: Vec<f64>,
    pub mean_service: Vec<f64>,
    pub holding_cost: Vec<f64>,
    pub discount_rate: f64,
    /// Present for every buffer with positive arrival rate.
    pub interarrival_dist: Vec<Option<DistributionSpec>>,
    pub service_dist: Vec<DistributionSpec>,
}

impl NetworkSpec {
    pub fn num_buffers(&self) -> usize {
        self.arrival_rate.len()
    }

    pub fn num_servers(&self) -> usize {
        self.server_names.len()
    }

    pub fn num_activities(&self) -> usize {
        self.activity_server.len()
    }

    pub fn service_rate(&self, j: usize) -> f64 {
        1.0 / self.mean_service[j]
    }

    /// Buffers with exogenous arrivals.
    pub fn arriving_buffers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_buffers()).filter(|&k| self.arrival_rate[k] != 0.0)
    }

    /// Probability that a job finishing activity `j` leaves the network.
    pub fn exit_probability(&self, j: usize) -> f64 {
        (1.0 - self.routing[j].iter().sum::<f64>()).max(0.0)
    }

    /// Capacity consumption matrix `A` (p x n).
    pub fn capacity_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_servers(), self.num_activities(), |s, j| {
            if self.activity_server[j] == s {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Constituency matrix `C` (m x n).
    pub fn constituency_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_buffers(), self.num_activities(), |k, j| {
            if self.activity_buffer[j] == k {
                1.0
            } else {
                0.0
            }
        })
    }

    /// `P` as an n x m matrix.
    pub fn routing_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_activities(), self.num_buffers(), |j, l| self.routing[j][l])
    }

    /// `M = diag(m_j)`.
    pub fn mean_service_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.mean_service))
    }

    /// Input-output matrix `R = (C - P') M^{-1}`.
    pub fn input_output_matrix(&self) -> DMatrix<f64> {
        let c = self.constituency_matrix();
        DMatrix::from_fn(self.num_buffers(), self.num_activities(), |k, j| {
            (c[(k, j)] - self.routing[j][k]) / self.mean_service[j]
        })
    }

    /// Smallest declared moment exponent over all primitives in use.
    pub fn min_eps1(&self) -> f64 {
        self.interarrival_dist
            .iter()
            .zip(&self.arrival_rate)
            .filter(|(_, &rate)| rate > 0.0)
            .filter_map(|(d, _)| d.as_ref().map(|d| d.eps1))
            .chain(self.service_dist.iter().map(|d| d.eps1))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks every structural invariant and returns the derived matrices.
    pub fn validate(&self) -> Result<ValidationReport, StructuralError> {
        let checks = self.structural_checks();
        if let Some(failed) = checks.iter().find(|c| !c.passed) {
            return Err(StructuralError {
                invariant: failed.invariant,
                detail: failed.detail.clone(),
            });
        }
        Ok(ValidationReport {
            checks,
            capacity: self.capacity_matrix(),
            constituency: self.constituency_matrix(),
            input_output: self.input_output_matrix(),
            mean_service: self.mean_service_matrix(),
        })
    }

    fn structural_checks(&self) -> Vec<Check> {
        let m = self.num_buffers();
        let p = self.num_servers();
        let n = self.num_activities();
        let mut checks = Vec::new();

        let dims_ok = self.buffer_names.len() == m
            && self.holding_cost.len() == m
            && self.interarrival_dist.len() == m
            && self.activity_buffer.len() == n
            && self.routing.len() == n
            && self.routing.iter().all(|row| row.len() == m)
            && self.mean_service.len() == n
            && self.service_dist.len() == n
            && m > 0
            && p > 0
            && n > 0;
        checks.push(Check::new(
            "dimensions",
            dims_ok,
            format!("m={m}, p={p}, n={n}; per-buffer and per-activity vectors must match"),
        ));
        if !dims_ok {
            return checks;
        }

        let bad_index = (0..n).find(|&j| self.activity_server[j] >= p || self.activity_buffer[j] >= m);
        checks.push(Check::new(
            "activity_indices",
            bad_index.is_none(),
            match bad_index {
                Some(j) => format!("activity {j} references a missing server or buffer"),
                None => "all activities reference existing servers and buffers".into(),
            },
        ));
        if bad_index.is_some() {
            return checks;
        }

        let idle_server = (0..p).find(|&s| !self.activity_server.contains(&s));
        checks.push(Check::new(
            "capacity_matrix",
            idle_server.is_none(),
            match idle_server {
                Some(s) => format!("server `{}` has no activity", self.server_names[s]),
                None => "each column has one server, each server has an activity".into(),
            },
        ));

        let unserved = (0..m).find(|&k| !self.activity_buffer.contains(&k));
        checks.push(Check::new(
            "constituency_matrix",
            unserved.is_none(),
            match unserved {
                Some(k) => format!("buffer `{}` is not served by any activity", self.buffer_names[k]),
                None => "each column has one buffer, each buffer has an activity".into(),
            },
        ));

        let bad_row = self.routing.iter().enumerate().find(|(_, row)| {
            row.iter().any(|&q| !(q >= 0.0) || !q.is_finite())
                || row.iter().sum::<f64>() > 1.0 + ROUTING_TOL
        });
        checks.push(Check::new(
            "routing",
            bad_row.is_none(),
            match bad_row {
                Some((j, row)) => format!(
                    "activity {j} routing row {row:?} must be nonnegative with sum <= 1 (sum {})",
                    row.iter().sum::<f64>()
                ),
                None => "routing rows are substochastic".into(),
            },
        ));

        let rates_ok = self.arrival_rate.iter().all(|&l| l >= 0.0 && l.is_finite());
        let some_arrival = self.arrival_rate.iter().any(|&l| l > 0.0);
        checks.push(Check::new(
            "arrival_rate",
            rates_ok && some_arrival,
            "arrival rates must be nonnegative and not all zero".into(),
        ));

        let service_ok = self.mean_service.iter().all(|&v| v > 0.0 && v.is_finite());
        checks.push(Check::new(
            "mean_service",
            service_ok,
            "mean service times must be positive".into(),
        ));

        let cost_ok = self.holding_cost.iter().all(|&h| h > 0.0 && h.is_finite())
            && self.discount_rate >= 0.0
            && self.discount_rate.is_finite();
        checks.push(Check::new(
            "holding_cost",
            cost_ok,
            "holding costs must be positive and the discount rate nonnegative".into(),
        ));

        let missing_law = (0..m).find(|&k| self.arrival_rate[k] > 0.0 && self.interarrival_dist[k].is_none());
        let bad_dist = self
            .interarrival_dist
            .iter()
            .flatten()
            .chain(self.service_dist.iter())
            .find(|d| d.validate().is_err() || !check_moments(d));
        checks.push(Check::new(
            "distributions",
            missing_law.is_none() && bad_dist.is_none(),
            match (missing_law, bad_dist) {
                (Some(k), _) => format!("buffer `{}` has arrivals but no interarrival law", self.buffer_names[k]),
                (_, Some(d)) => format!(
                    "{} law {:?} fails its parameter or 2+2*eps1 moment check",
                    d.family_name(),
                    d.family
                ),
                _ => "all laws have unit mean and finite 2+2*eps1 moments".into(),
            },
        ));
        checks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub invariant: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(invariant: &'static str, passed: bool, detail: String) -> Self {
        Self { invariant, passed, detail }
    }
}

/// Outcome of [`NetworkSpec::validate`] with the derived matrices.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// A
    pub capacity: DMatrix<f64>,
    /// C
    pub constituency: DMatrix<f64>,
    /// R
    pub input_output: DMatrix<f64>,
    /// M
    pub mean_service: DMatrix<f64>,
}

pub fn validate_network(spec: &NetworkSpec) -> Result<ValidationReport, StructuralError> {
    spec.validate()
}

/// Builder-style constructors for the reference networks used across the
/// test suites and examples.
pub mod test_nets {
    use super::*;

    /// One buffer, one server, one activity; unit rates.
    pub fn net_a() -> NetworkSpec {
        NetworkSpec {
            buffer_names: vec!["b1".into()],
            server_names: vec!["s1".into()],
            activity_server: vec![0],
            activity_buffer: vec![0],
            routing: vec![vec![0.0]],
            arrival_rate: vec![1.0],
            mean_service: vec![1.0],
            holding_cost: vec![1.0],
            discount_rate: 0.0,
            interarrival_dist: vec![Some(DistributionSpec::exponential())],
            service_dist: vec![DistributionSpec::exponential()],
        }
    }

    /// Two servers, two buffers; server 2 can serve either buffer.
    /// a1 = (s1, b1), a2 = (s2, b1), a3 = (s2, b2); lambda = (1.3, 0.7).
    pub fn net_b() -> NetworkSpec {
        NetworkSpec {
            buffer_names: vec!["b1".into(), "b2".into()],
            server_names: vec!["s1".into(), "s2".into()],
            activity_server: vec![0, 1, 1],
            activity_buffer: vec![0, 0, 1],
            routing: vec![vec![0.0, 0.0]; 3],
            arrival_rate: vec![1.3, 0.7],
            mean_service: vec![1.0, 1.0, 1.0],
            holding_cost: vec![1.0, 2.0],
            discount_rate: 0.0,
            interarrival_dist: vec![Some(DistributionSpec::exponential()); 2],
            service_dist: vec![DistributionSpec::exponential(); 3],
        }
    }

    /// Replaces every law in the network by `dist`.
    pub fn with_all_laws(mut net: NetworkSpec, dist: DistributionSpec) -> NetworkSpec {
        for (k, law) in net.interarrival_dist.iter_mut().enumerate() {
            if net.arrival_rate[k] > 0.0 {
                *law = Some(dist);
            }
        }
        for law in net.service_dist.iter_mut() {
            *law = dist;
        }
        net
    }
}
