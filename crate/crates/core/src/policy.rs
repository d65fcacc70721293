//! Discrete review policy: per-review idle time, period length, activity
//! durations, job caps and target state.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::planner::StaticPlan;

/// Tolerance for clamping round-off in the planned rates.
const ROUNDOFF: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("eps2 = {eps2} must lie in (0, {bound}) (one third of the moment exponent {eps1})")]
    Eps2Range { eps2: f64, eps1: f64, bound: f64 },
    #[error("scale index r = {0} must be positive")]
    ScaleRange(f64),
    #[error("period length l = {0} must be positive")]
    LengthRange(f64),
    #[error("state is outside the review ball B_(delta l)(theta)")]
    OutOfBall,
    #[error("state has {got} entries, the network has {expected} buffers")]
    Dimension { expected: usize, got: usize },
    #[error("state entry {0} is negative or not finite")]
    NegativeState(usize),
}

/// Period length, safety stocks and ball radius for one scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyParams {
    pub l: f64,
    pub theta: Vec<f64>,
    pub delta: f64,
    /// Caps are `floor(q_b(j) / job_cap_divisor)`; equals `n`.
    pub job_cap_divisor: usize,
}

impl PolicyParams {
    /// Parameters for an explicit period length.
    pub fn with_length(l: f64, plan: &StaticPlan) -> Result<Self, PolicyError> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(PolicyError::LengthRange(l));
        }
        Ok(PolicyParams {
            l,
            theta: plan.theta_star.iter().map(|t| t * l).collect(),
            delta: plan.delta,
            job_cap_divisor: plan.num_activities(),
        })
    }

    /// Ball radius `delta l`.
    pub fn radius(&self) -> f64 {
        self.delta * self.l
    }
}

/// `l = r^(1 - eps2)`, `theta = theta* l`.
pub fn scale_parameters(r: f64, eps2: f64, plan: &StaticPlan) -> Result<PolicyParams, PolicyError> {
    let eps1 = plan.min_eps1;
    let bound = eps1 / 3.0;
    if !(eps2 > 0.0 && eps2 < bound) {
        return Err(PolicyError::Eps2Range { eps2, eps1, bound });
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(PolicyError::ScaleRange(r));
    }
    PolicyParams::with_length(r.powf(1.0 - eps2), plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(into = "u8")]
pub enum Case {
    /// State inside the review ball.
    One,
    /// State outside; the period is stretched.
    Two,
}

impl From<Case> for u8 {
    fn from(c: Case) -> u8 {
        match c {
            Case::One => 1,
            Case::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReviewPlan {
    pub case_tag: Case,
    pub idle_time: f64,
    /// Period length including the idle prefix.
    pub exec_time: f64,
    /// Busy time per activity over the working window.
    pub activity_time: Vec<f64>,
    /// `C_s`; one in Case 1.
    pub stretch: f64,
    pub target: Vec<f64>,
    pub job_cap: Vec<u64>,
    /// Planned fraction of the nominal length per activity (`x`).
    pub rates: Vec<f64>,
    /// State after the idle prefix, `q + lambda idle`.
    pub q_tilde: Vec<f64>,
}

impl ReviewPlan {
    pub fn working_time(&self) -> f64 {
        self.exec_time - self.idle_time
    }
}

fn check_state(q: &[f64], plan: &StaticPlan) -> Result<(), PolicyError> {
    if q.len() != plan.num_buffers() {
        return Err(PolicyError::Dimension { expected: plan.num_buffers(), got: q.len() });
    }
    if let Some(i) = q.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(PolicyError::NegativeState(i));
    }
    Ok(())
}

/// Membership in the asymmetric ball: one-sided on the cheapest buffer,
/// two-sided elsewhere.
pub fn in_ball(q: &[f64], center: &[f64], radius: f64, cheapest: usize) -> bool {
    q.iter().zip(center).enumerate().all(|(i, (&qi, &zi))| {
        if i == cheapest {
            qi > zi - radius
        } else {
            (qi - zi).abs() < radius
        }
    })
}

pub fn classify_state(q: &[f64], params: &PolicyParams, plan: &StaticPlan) -> Case {
    if in_ball(q, &params.theta, params.radius(), plan.cheapest_buffer()) {
        Case::One
    } else {
        Case::Two
    }
}

/// `Pi^{-1} [v; e len]`, split into the basic block and the last entry.
fn solve_policy(v: &[f64], len: f64, plan: &StaticPlan) -> (Vec<f64>, f64) {
    let m = plan.num_buffers();
    let rhs = DVector::from_iterator(
        m + plan.num_servers,
        v.iter().copied().chain(std::iter::repeat_n(len, plan.num_servers)),
    );
    let sol = &plan.policy_inv * rhs;
    let b = plan.num_basic();
    (sol.rows(0, b).iter().copied().collect(), sol[b])
}

/// `[x_B l; z_c - theta_c] = Pi^{-1} [q + lambda l - theta; e l]`.
/// Returns `(x_B, z_c)`.
pub fn solve_plan_equation(q: &[f64], params: &PolicyParams, plan: &StaticPlan) -> (Vec<f64>, f64) {
    let l = params.l;
    let v: Vec<f64> = (0..q.len())
        .map(|i| q[i] + plan.arrival_rate[i] * l - params.theta[i])
        .collect();
    let (xl, dz) = solve_policy(&v, l, plan);
    let c = plan.cheapest_buffer();
    (xl.iter().map(|x| x / l).collect(), params.theta[c] + dz)
}

fn idle_time(q: &[f64], params: &PolicyParams, plan: &StaticPlan) -> f64 {
    let deficit: f64 = (0..q.len()).map(|i| plan.y[i] * (params.theta[i] - q[i])).sum();
    deficit.max(0.0)
}

fn job_caps(q: &[f64], params: &PolicyParams, plan: &StaticPlan) -> Vec<u64> {
    let d = params.job_cap_divisor.max(1) as f64;
    plan.activity_buffer
        .iter()
        .map(|&i| (q[i] / d + ROUNDOFF).floor().max(0.0) as u64)
        .collect()
}

fn clamp_roundoff(x: f64) -> f64 {
    if x < 0.0 && x > -ROUNDOFF {
        0.0
    } else {
        x
    }
}

fn full_rates(x_basic: &[f64], plan: &StaticPlan) -> Vec<f64> {
    let mut x = vec![0.0; plan.num_activities()];
    for (k, &j) in plan.basic_set.iter().enumerate() {
        x[j] = clamp_roundoff(x_basic[k]);
    }
    x
}

pub fn plan_case1(q: &[f64], params: &PolicyParams, plan: &StaticPlan) -> Result<ReviewPlan, PolicyError> {
    check_state(q, plan)?;
    if classify_state(q, params, plan) != Case::One {
        return Err(PolicyError::OutOfBall);
    }
    let l = params.l;
    let idle = idle_time(q, params, plan);
    let q_tilde: Vec<f64> = (0..q.len()).map(|i| q[i] + plan.arrival_rate[i] * idle).collect();
    let (x_basic, _) = solve_plan_equation(&q_tilde, params, plan);
    let rates = full_rates(&x_basic, plan);
    let c = plan.cheapest_buffer();
    let surplus: f64 = (0..q.len()).map(|i| plan.y[i] * (q[i] - params.theta[i])).sum();
    let mut target = params.theta.clone();
    target[c] += surplus.max(0.0) / plan.y[c];
    Ok(ReviewPlan {
        case_tag: Case::One,
        idle_time: idle,
        exec_time: l + idle,
        activity_time: rates.iter().map(|x| x * l).collect(),
        stretch: 1.0,
        target,
        job_cap: job_caps(q, params, plan),
        rates,
        q_tilde,
    })
}

/// Stretched plan. Accepts any state; the algebra needs only `y'q~ >= y'theta`,
/// which the idle prefix guarantees.
pub fn plan_case2(q: &[f64], params: &PolicyParams, plan: &StaticPlan) -> Result<ReviewPlan, PolicyError> {
    check_state(q, plan)?;
    let l = params.l;
    let idle = idle_time(q, params, plan);
    let q_tilde: Vec<f64> = (0..q.len()).map(|i| q[i] + plan.arrival_rate[i] * idle).collect();

    let gap: Vec<f64> = (0..q.len()).map(|i| params.theta[i] - q_tilde[i]).collect();
    let (dx, _) = solve_policy(&gap, 0.0, plan);
    let x_basic_star = plan.x_basic();
    let stretch = dx
        .iter()
        .zip(&x_basic_star)
        .map(|(d, xs)| (d / l).abs() / xs)
        .fold(1.0, f64::max);

    let (x_shift, _) = solve_plan_equation(&q_tilde, params, plan);
    let x_basic: Vec<f64> = x_basic_star
        .iter()
        .zip(&x_shift)
        .map(|(xs, xh)| xs * (1.0 - 1.0 / stretch) + xh / stretch)
        .collect();
    let rates = full_rates(&x_basic, plan);

    let c = plan.cheapest_buffer();
    let excess: f64 = (0..q.len()).map(|i| plan.y[i] * (q_tilde[i] - params.theta[i])).sum();
    let mut target = params.theta.clone();
    target[c] += excess / plan.y[c];

    Ok(ReviewPlan {
        case_tag: Case::Two,
        idle_time: idle,
        exec_time: idle + stretch * l,
        activity_time: rates.iter().map(|x| stretch * x * l).collect(),
        stretch,
        target,
        job_cap: job_caps(&q_tilde, params, plan),
        rates,
        q_tilde,
    })
}

pub fn make_plan(q: &[f64], params: &PolicyParams, plan: &StaticPlan) -> Result<ReviewPlan, PolicyError> {
    check_state(q, plan)?;
    match classify_state(q, params, plan) {
        Case::One => plan_case1(q, params, plan),
        Case::Two => plan_case2(q, params, plan),
    }
}

/// Target recomputed as `q + lambda T - R x l_work`, the net effect of
/// running the planned rates over the working window.
pub fn implied_target(q: &[f64], review: &ReviewPlan, plan: &StaticPlan) -> Vec<f64> {
    let x = DVector::from_column_slice(&review.activity_time);
    let drain = &plan.input_output * x;
    (0..q.len())
        .map(|i| q[i] + plan.arrival_rate[i] * review.exec_time - drain[i])
        .collect()
}
