//! Static planning problem, assumption checks, dual workload vectors, the
//! policy matrix and the policy constants derived from it.

pub mod simplex;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::network::NetworkSpec;
use simplex::{rational, to_f64, LpStatus, Rational};

/// `x*_j` above this counts as a basic activity.
pub const BASIC_THRESHOLD: f64 = 1e-9;
/// Tolerance for `rho* = 1` and `Ax* = e`.
pub const HEAVY_TRAFFIC_TOL: f64 = 1e-9;
/// Largest acceptable `|Pi Pi^{-1} - I|` entry.
pub const INVERSE_RESIDUAL_TOL: f64 = 1e-9;
/// Denominators of the C0 ratio table below this are treated as zero.
const ZERO_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("static planning problem is infeasible: no x >= 0 with Rx = lambda")]
    Infeasible,
    #[error("static planning problem is unbounded")]
    Unbounded,
    #[error("static planning problem has alternate optima (zero reduced cost on columns {columns:?})")]
    NonUnique { columns: Vec<usize> },
    #[error("network fails the planning assumptions: {0}")]
    Assumptions(Box<AssumptionReport>),
    #[error("dual workload system is degenerate: {0}")]
    DegenerateDual(String),
    #[error("policy matrix is singular (identity residual {residual:e})")]
    Singular { residual: f64 },
}

/// Optimum of `min rho s.t. Rx = lambda, Ax <= rho e, x >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub x_star: Vec<f64>,
    pub rho_star: f64,
    /// Activities with `x*_j > BASIC_THRESHOLD`, ascending.
    pub basic_set: Vec<usize>,
}

impl LpSolution {
    pub fn nonbasic_set(&self) -> Vec<usize> {
        (0..self.x_star.len()).filter(|j| !self.basic_set.contains(j)).collect()
    }
}

pub fn solve_static_plan(net: &NetworkSpec) -> Result<LpSolution, PlanError> {
    let m = net.num_buffers();
    let p = net.num_servers();
    let n = net.num_activities();
    // columns: x_1..x_n, rho, slack_1..slack_p
    let cols = n + 1 + p;
    let zero = || Rational::from_integer(0.into());
    let one = || Rational::from_integer(1.into());
    let mut a = Vec::with_capacity(m + p);
    let mut b = Vec::with_capacity(m + p);
    for k in 0..m {
        let mut row = vec![zero(); cols];
        for (j, entry) in row.iter_mut().take(n).enumerate() {
            let c = if net.activity_buffer[j] == k { one() } else { zero() };
            *entry = (c - rational(net.routing[j][k])) / rational(net.mean_service[j]);
        }
        a.push(row);
        b.push(rational(net.arrival_rate[k]));
    }
    for s in 0..p {
        let mut row = vec![zero(); cols];
        for j in 0..n {
            if net.activity_server[j] == s {
                row[j] = one();
            }
        }
        row[n] = -one();
        row[n + 1 + s] = one();
        a.push(row);
        b.push(zero());
    }
    let mut cost = vec![zero(); cols];
    cost[n] = one();

    let opt = simplex::solve(&a, &b, &cost).map_err(|status| match status {
        LpStatus::Infeasible => PlanError::Infeasible,
        LpStatus::Unbounded => PlanError::Unbounded,
    })?;
    let ties = opt.zero_reduced_cost_columns();
    if !ties.is_empty() {
        return Err(PlanError::NonUnique { columns: ties });
    }
    let x_star: Vec<f64> = opt.x[..n].iter().map(to_f64).collect();
    let basic_set = (0..n).filter(|&j| x_star[j] > BASIC_THRESHOLD).collect();
    Ok(LpSolution { x_star, rho_star: to_f64(&opt.x[n]), basic_set })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub heavy_traffic: bool,
    pub crp: bool,
    pub bab: bool,
    pub rho_star: f64,
    /// `max_s |(Ax*)_s - 1|`
    pub load_deviation: f64,
    pub num_basic: usize,
    pub num_buffers: usize,
    pub num_servers: usize,
    /// Buffers not drained by any basic activity.
    pub buffers_without_basic: Vec<usize>,
    pub diagnostics: Vec<String>,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.heavy_traffic && self.crp && self.bab
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "heavy_traffic={} crp={} bab={}",
            self.heavy_traffic, self.crp, self.bab
        )?;
        for d in &self.diagnostics {
            write!(f, "; {d}")?;
        }
        Ok(())
    }
}

pub fn verify_assumptions(lp: &LpSolution, net: &NetworkSpec) -> AssumptionReport {
    let m = net.num_buffers();
    let p = net.num_servers();
    let a = net.capacity_matrix();
    let r = net.input_output_matrix();
    let load = &a * DVector::from_column_slice(&lp.x_star);
    let load_deviation = load.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let heavy_traffic =
        (lp.rho_star - 1.0).abs() <= HEAVY_TRAFFIC_TOL && load_deviation <= HEAVY_TRAFFIC_TOL;
    let b = lp.basic_set.len();
    let crp = p + m == b + 1;
    let buffers_without_basic: Vec<usize> = (0..m)
        .filter(|&i| !lp.basic_set.iter().any(|&j| r[(i, j)] > 0.0))
        .collect();
    let bab = buffers_without_basic.is_empty();

    let mut diagnostics = Vec::new();
    if !heavy_traffic {
        diagnostics.push(format!(
            "heavy traffic needs rho* = 1 and Ax* = e; got rho* = {} and max |Ax* - e| = {load_deviation:e}",
            lp.rho_star
        ));
    }
    if !crp {
        diagnostics.push(format!(
            "complete resource pooling needs p + m - b = 1; got {p} + {m} - {b} = {}",
            (p + m) as i64 - b as i64
        ));
    }
    if !bab {
        diagnostics.push(format!("buffers {buffers_without_basic:?} have no basic activity"));
    }
    AssumptionReport {
        heavy_traffic,
        crp,
        bab,
        rho_star: lp.rho_star,
        load_deviation,
        num_basic: b,
        num_buffers: m,
        num_servers: p,
        buffers_without_basic,
        diagnostics,
    }
}

/// Partitions `R = [H J]` and `A = [B N]` by the basic set.
fn partition(mat: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(mat.nrows(), cols.len(), |i, k| mat[(i, cols[k])])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Duals {
    /// Workload contribution per buffer.
    pub y: Vec<f64>,
    /// Relative server capacity, sums to one.
    pub pi: Vec<f64>,
    /// `pi'N - y'J`, one entry per nonbasic activity.
    pub eta: Vec<f64>,
}

/// Solves `y'H = pi'B`, `pi'e = 1` and checks positivity.
pub fn compute_duals(lp: &LpSolution, net: &NetworkSpec) -> Result<Duals, PlanError> {
    let m = net.num_buffers();
    let p = net.num_servers();
    let basic = &lp.basic_set;
    let nonbasic = lp.nonbasic_set();
    let r = net.input_output_matrix();
    let a = net.capacity_matrix();
    let h = partition(&r, basic);
    let bm = partition(&a, basic);
    if basic.len() + 1 != m + p {
        return Err(PlanError::DegenerateDual(format!(
            "{} basic activities give {} equations for {} unknowns",
            basic.len(),
            basic.len() + 1,
            m + p
        )));
    }
    // unknowns [y; pi]; rows: H_j'y - B_j'pi = 0 for basic j, e'pi = 1
    let size = m + p;
    let mut sys = DMatrix::zeros(size, size);
    for k in 0..basic.len() {
        for i in 0..m {
            sys[(k, i)] = h[(i, k)];
        }
        for s in 0..p {
            sys[(k, m + s)] = -bm[(s, k)];
        }
    }
    for s in 0..p {
        sys[(size - 1, m + s)] = 1.0;
    }
    let mut rhs = DVector::zeros(size);
    rhs[size - 1] = 1.0;
    let sol = sys
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| PlanError::DegenerateDual("y'H = pi'B, pi'e = 1 is singular".into()))?;
    let residual = (&sys * &sol - &rhs).amax();
    if !residual.is_finite() || residual > 1e-9 {
        return Err(PlanError::DegenerateDual(format!("solve residual {residual:e}")));
    }
    let y: Vec<f64> = sol.rows(0, m).iter().copied().collect();
    let pi: Vec<f64> = sol.rows(m, p).iter().copied().collect();
    if let Some(i) = y.iter().position(|&v| !(v > 0.0)) {
        return Err(PlanError::DegenerateDual(format!("y_{i} = {} is not strictly positive", y[i])));
    }
    if let Some(s) = pi.iter().position(|&v| !(v > 0.0)) {
        return Err(PlanError::DegenerateDual(format!("pi_{s} = {} is not strictly positive", pi[s])));
    }
    let eta: Vec<f64> = nonbasic
        .iter()
        .map(|&j| {
            let served = (0..p).map(|s| pi[s] * a[(s, j)]).sum::<f64>();
            let consumed = (0..m).map(|i| y[i] * r[(i, j)]).sum::<f64>();
            served - consumed
        })
        .collect();
    if let Some(k) = eta.iter().position(|&v| v < -1e-9) {
        return Err(PlanError::DegenerateDual(format!(
            "pi'N >= y'J fails for nonbasic activity {} (eta = {})",
            nonbasic[k], eta[k]
        )));
    }
    Ok(Duals { y, pi, eta: eta.into_iter().map(|v| v.max(0.0)).collect() })
}

/// Buffer relabeling that sorts `h_i / y_i` ascending, ties by index.
/// Entry `k` is the original index of the `k`-th buffer.
pub fn order_buffers(holding_cost: &[f64], y: &[f64]) -> Vec<usize> {
    let ratio: Vec<f64> = holding_cost.iter().zip(y).map(|(h, y)| h / y).collect();
    let mut order: Vec<usize> = (0..ratio.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (ratio[a], ratio[b]);
        if (ra - rb).abs() <= 1e-12 * ra.abs().max(rb.abs()) {
            a.cmp(&b)
        } else {
            ra.total_cmp(&rb)
        }
    });
    order
}

/// `Pi = [[H, e_c], [B, 0]]` where `c` is the cheapest buffer, and its inverse.
///
/// Rows follow the original buffer labels, so `e_c` stands in for `e_1` of
/// the relabeled system; the two matrices differ by a row permutation.
pub fn build_policy_matrix(
    h: &DMatrix<f64>,
    b: &DMatrix<f64>,
    cheapest: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>), PlanError> {
    let m = h.nrows();
    let p = b.nrows();
    let nb = h.ncols();
    if m + p != nb + 1 {
        return Err(PlanError::Singular { residual: f64::INFINITY });
    }
    let mut pi = DMatrix::zeros(m + p, nb + 1);
    pi.view_mut((0, 0), (m, nb)).copy_from(h);
    pi.view_mut((m, 0), (p, nb)).copy_from(b);
    pi[(cheapest, nb)] = 1.0;
    let inv = pi
        .clone()
        .try_inverse()
        .ok_or(PlanError::Singular { residual: f64::INFINITY })?;
    let residual = (&pi * &inv - DMatrix::<f64>::identity(m + p, m + p)).amax();
    if !(residual <= INVERSE_RESIDUAL_TOL) {
        return Err(PlanError::Singular { residual });
    }
    Ok((pi, inv))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyConstants {
    pub c0: f64,
    pub c1: f64,
    /// Uniform safety-stock multiplier (every buffer gets this value).
    pub theta_star: Vec<f64>,
    pub delta: f64,
    /// Strict upper bound on `delta`.
    pub delta_bound: f64,
}

pub fn compute_constants(
    x_star: &[f64],
    basic_set: &[usize],
    pi_inv: &DMatrix<f64>,
    y: &[f64],
    cheapest: usize,
    net: &NetworkSpec,
) -> PolicyConstants {
    let m = net.num_buffers();
    let n = net.num_activities();
    // column i of Pi^{-1} is Pi^{-1}[e_i; 0]
    let mut c0 = f64::INFINITY;
    for i in 0..m {
        for (k, &j) in basic_set.iter().enumerate() {
            let denom = pi_inv[(k, i)].abs();
            if denom > ZERO_DENOMINATOR {
                c0 = c0.min(x_star[j] / denom);
            }
        }
    }
    if !c0.is_finite() {
        // only possible with a single buffer; any positive cap gives valid safety stocks
        c0 = 1.0;
    }
    let y_max_ratio = y.iter().map(|&v| v / y[cheapest]).fold(f64::MIN, f64::max);
    let c1 = c0 * y_max_ratio;
    let mu_max = (0..n).map(|j| net.service_rate(j)).fold(1.0, f64::max);
    let theta = n as f64 * ((2.0 + c1 + c0) * mu_max + 1.0);
    let y_sum: f64 = y.iter().sum();
    let lambda_max = net.arrival_rate.iter().copied().fold(f64::MIN, f64::max);
    let delta_bound = c0 / (2.0 * m as f64 * (1.0 + y_sum * lambda_max));
    PolicyConstants {
        c0,
        c1,
        theta_star: vec![theta; m],
        delta: 0.5 * delta_bound,
        delta_bound,
    }
}

/// Everything the discrete review policy needs from the first-order data.
#[derive(Debug, Clone)]
pub struct StaticPlan {
    pub x_star: Vec<f64>,
    pub rho_star: f64,
    pub basic_set: Vec<usize>,
    pub nonbasic_set: Vec<usize>,
    pub h: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub y: Vec<f64>,
    pub pi: Vec<f64>,
    pub eta: Vec<f64>,
    /// Policy matrix, rows in original buffer order then servers.
    pub policy: DMatrix<f64>,
    pub policy_inv: DMatrix<f64>,
    pub c0: f64,
    pub c1: f64,
    pub theta_star: Vec<f64>,
    pub delta: f64,
    pub delta_bound: f64,
    /// Original buffer indices sorted by `h_i / y_i`.
    pub buffer_permutation: Vec<usize>,
    /// Smallest declared moment exponent of the network's primitives.
    pub min_eps1: f64,
    pub arrival_rate: Vec<f64>,
    pub service_rate: Vec<f64>,
    pub activity_server: Vec<usize>,
    pub activity_buffer: Vec<usize>,
    pub num_servers: usize,
    pub input_output: DMatrix<f64>,
    pub capacity: DMatrix<f64>,
    pub assumptions: AssumptionReport,
}

impl StaticPlan {
    /// Runs the whole planning pipeline; fails unless every assumption holds.
    pub fn build(net: &NetworkSpec) -> Result<Self, PlanError> {
        let lp = solve_static_plan(net)?;
        let report = verify_assumptions(&lp, net);
        if !report.all_hold() {
            return Err(PlanError::Assumptions(Box::new(report)));
        }
        let duals = compute_duals(&lp, net)?;
        let permutation = order_buffers(&net.holding_cost, &duals.y);
        let cheapest = permutation[0];
        let r = net.input_output_matrix();
        let a = net.capacity_matrix();
        let nonbasic = lp.nonbasic_set();
        let h = partition(&r, &lp.basic_set);
        let b = partition(&a, &lp.basic_set);
        let (policy, policy_inv) = build_policy_matrix(&h, &b, cheapest)?;
        let consts = compute_constants(&lp.x_star, &lp.basic_set, &policy_inv, &duals.y, cheapest, net);
        Ok(StaticPlan {
            x_star: lp.x_star,
            rho_star: lp.rho_star,
            j: partition(&r, &nonbasic),
            n: partition(&a, &nonbasic),
            basic_set: lp.basic_set,
            nonbasic_set: nonbasic,
            h,
            b,
            y: duals.y,
            pi: duals.pi,
            eta: duals.eta,
            policy,
            policy_inv,
            c0: consts.c0,
            c1: consts.c1,
            theta_star: consts.theta_star,
            delta: consts.delta,
            delta_bound: consts.delta_bound,
            buffer_permutation: permutation,
            min_eps1: net.min_eps1(),
            arrival_rate: net.arrival_rate.clone(),
            service_rate: (0..net.num_activities()).map(|j| net.service_rate(j)).collect(),
            activity_server: net.activity_server.clone(),
            activity_buffer: net.activity_buffer.clone(),
            num_servers: net.num_servers(),
            input_output: r,
            capacity: a,
            assumptions: report,
        })
    }

    pub fn num_buffers(&self) -> usize {
        self.y.len()
    }

    pub fn num_activities(&self) -> usize {
        self.x_star.len()
    }

    pub fn num_basic(&self) -> usize {
        self.basic_set.len()
    }

    /// Original index of the buffer with the smallest `h_i / y_i`.
    pub fn cheapest_buffer(&self) -> usize {
        self.buffer_permutation[0]
    }

    /// `y'v`
    pub fn workload(&self, v: &[f64]) -> f64 {
        self.y.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Components of `x*` on the basic activities.
    pub fn x_basic(&self) -> Vec<f64> {
        self.basic_set.iter().map(|&j| self.x_star[j]).collect()
    }

    /// Constant multiplying `l(r)` in the collapse bound on buffers other
    /// than the cheapest: `2 theta* + n(2|mu|+1) + 2|lambda|(1 + y'theta*)`.
    pub fn collapse_constant(&self) -> f64 {
        let theta = max_norm(&self.theta_star);
        let n = self.num_activities() as f64;
        let mu = max_norm(&self.service_rate);
        let lambda = max_norm(&self.arrival_rate);
        2.0 * theta + n * (2.0 * mu + 1.0) + 2.0 * lambda * (1.0 + self.workload(&self.theta_star))
    }

    /// Constant multiplying `l(r)` in the workload threshold below which
    /// idling is allowed: `y'theta* + mn|y|(2|mu|+1) + 2|y| m y'theta* |lambda|`.
    pub fn idling_constant(&self) -> f64 {
        let m = self.num_buffers() as f64;
        let n = self.num_activities() as f64;
        let y = max_norm(&self.y);
        let mu = max_norm(&self.service_rate);
        let lambda = max_norm(&self.arrival_rate);
        let y_theta = self.workload(&self.theta_star);
        y_theta + m * n * y * (2.0 * mu + 1.0) + 2.0 * y * m * y_theta * lambda
    }

    pub fn report(&self) -> PlanReport {
        PlanReport {
            x_star: self.x_star.clone(),
            rho_star: self.rho_star,
            basic_set: self.basic_set.clone(),
            y: self.y.clone(),
            pi: self.pi.clone(),
            eta: self.eta.clone(),
            policy_matrix: rows_of(&self.policy),
            policy_matrix_inverse: rows_of(&self.policy_inv),
            c0: self.c0,
            c1: self.c1,
            theta_star: self.theta_star.clone(),
            delta: self.delta,
            delta_bound: self.delta_bound,
            buffer_permutation: self.buffer_permutation.clone(),
        }
    }
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn rows_of(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..mat.nrows()).map(|i| mat.row(i).iter().copied().collect()).collect()
}

/// JSON view of a [`StaticPlan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub x_star: Vec<f64>,
    pub rho_star: f64,
    pub basic_set: Vec<usize>,
    pub y: Vec<f64>,
    pub pi: Vec<f64>,
    pub eta: Vec<f64>,
    pub policy_matrix: Vec<Vec<f64>>,
    pub policy_matrix_inverse: Vec<Vec<f64>>,
    pub c0: f64,
    pub c1: f64,
    pub theta_star: Vec<f64>,
    pub delta: f64,
    pub delta_bound: f64,
    pub buffer_permutation: Vec<usize>,
}
