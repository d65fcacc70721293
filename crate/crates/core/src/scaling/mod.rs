//! Diffusion and fluid scaling of trajectories, the regulator map, the
//! Brownian variance and the limit statistics built on them.

mod regulator;
mod sigma;

pub use regulator::{regulator_map, sandwich_check, sandwiched, PreconditionError, StepPath};
pub use sigma::{compute_sigma2, rbm_cost_tail, rbm_tail, std_normal_cdf, DiffusionStats, DomainError};

use serde::Serialize;
use thiserror::Error;

use crate::network::NetworkSpec;
use crate::planner::StaticPlan;
use crate::sim::{EventRow, Sample, Trajectory};

/// Uniform points on `[0, T]` used for distributional statistics.
pub const GRID_POINTS: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("trajectory horizon {horizon} is shorter than r^2 T = {needed}")]
pub struct HorizonError {
    pub horizon: f64,
    pub needed: f64,
}

/// Diffusion-scaled processes on a grid of scaled times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledPath {
    pub r: f64,
    pub t: Vec<f64>,
    /// `Z(r^2 t) / r`, one vector per grid point.
    pub z_hat: Vec<Vec<f64>>,
    pub w_hat: Vec<f64>,
    /// `I(r^2 t) / r` per server.
    pub i_hat: Vec<Vec<f64>>,
    pub i_w_hat: Vec<f64>,
    /// `eta' T_N(r^2 t) / r`
    pub i_n_hat: Vec<f64>,
    /// `X(r^2 t) / r`, the primitive part of `Z`.
    pub x_hat: Vec<Vec<f64>>,
    pub x_w_hat: Vec<f64>,
    /// `(E(r^2 t) - lambda r^2 t) / r`
    pub e_hat: Vec<Vec<f64>>,
    /// `T(r^2 t) / r^2`
    pub t_bar: Vec<Vec<f64>>,
    /// `S(T(r^2 t)) / r^2`
    pub s_bar: Vec<Vec<f64>>,
    /// `sup Z_k(s) / r` over every event with `s <= r^2 max(t)`.
    pub sup_z_hat: Vec<f64>,
}

/// `GRID_POINTS` uniform times on `[0, horizon]` merged with the scaled
/// review times and any extra evaluation times.
pub fn scaling_grid(traj: &Trajectory, r: f64, horizon: f64, extra: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| horizon * k as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    grid.extend(traj.periods.iter().map(|p| p.tau / (r * r)).filter(|&t| t <= horizon));
    grid.extend(extra.iter().copied().filter(|&t| (0.0..=horizon).contains(&t)));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Continuous quantities interpolated between the samples around `tau`.
fn interpolate(samples: &[Sample], k: usize, tau: f64, pick: impl Fn(&Sample) -> &[f64]) -> Vec<f64> {
    let a = &samples[k];
    let Some(b) = samples.get(k + 1).filter(|b| b.t > a.t) else {
        return pick(a).to_vec();
    };
    let frac = ((tau - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
    pick(a).iter().zip(pick(b)).map(|(x, y)| x + frac * (y - x)).collect()
}

/// `X = Z(0) + (E - lambda t) + (routed - P'S) - (C - P')(S - mu T)`.
fn primitive_part(net: &NetworkSpec, z0: &[i64], tau: f64, s: &Sample, busy: &[f64]) -> Vec<f64> {
    let m = net.num_buffers();
    let mut x: Vec<f64> = (0..m)
        .map(|i| z0[i] as f64 + s.arrivals[i] as f64 - net.arrival_rate[i] * tau + s.routed[i] as f64)
        .collect();
    for j in 0..net.num_activities() {
        let done = s.completions[j] as f64;
        let centered = done - busy[j] / net.mean_service[j];
        for (i, xi) in x.iter_mut().enumerate() {
            let p = net.routing[j][i];
            *xi -= p * done;
            let c = if net.activity_buffer[j] == i { 1.0 } else { 0.0 };
            *xi -= (c - p) * centered;
        }
    }
    x
}

/// `eta' T_N`
fn nonbasic_push(plan: &StaticPlan, busy: &[f64]) -> f64 {
    plan.nonbasic_set.iter().zip(&plan.eta).map(|(&j, e)| e * busy[j]).sum()
}

/// `W` rebuilt from primitives as `y'X + pi'I + eta'T_N` at one sample.
pub fn workload_decomposition(s: &Sample, z0: &[i64], net: &NetworkSpec, plan: &StaticPlan) -> f64 {
    let x = primitive_part(net, z0, s.t, s, &s.busy);
    plan.workload(&x) + plan.pi.iter().zip(&s.idle).map(|(p, i)| p * i).sum::<f64>() + nonbasic_push(plan, &s.busy)
}

pub fn diffusion_scale(
    traj: &Trajectory,
    net: &NetworkSpec,
    plan: &StaticPlan,
    r: f64,
    grid: &[f64],
) -> Result<ScaledPath, HorizonError> {
    let t_max = grid.iter().copied().fold(0.0, f64::max);
    let needed = r * r * t_max;
    if traj.horizon < needed * (1.0 - 1e-12) {
        return Err(HorizonError { horizon: traj.horizon, needed });
    }
    let m = net.num_buffers();
    let r2 = r * r;
    let mut out = ScaledPath {
        r,
        t: grid.to_vec(),
        z_hat: Vec::with_capacity(grid.len()),
        w_hat: Vec::with_capacity(grid.len()),
        i_hat: Vec::with_capacity(grid.len()),
        i_w_hat: Vec::with_capacity(grid.len()),
        i_n_hat: Vec::with_capacity(grid.len()),
        x_hat: Vec::with_capacity(grid.len()),
        x_w_hat: Vec::with_capacity(grid.len()),
        e_hat: Vec::with_capacity(grid.len()),
        t_bar: Vec::with_capacity(grid.len()),
        s_bar: Vec::with_capacity(grid.len()),
        sup_z_hat: vec![0.0; m],
    };
    for &t in grid {
        let tau = r2 * t;
        let k = traj.sample_index_at(tau);
        let s = &traj.samples[k];
        let busy = interpolate(&traj.samples, k, tau, |s| &s.busy);
        let idle = interpolate(&traj.samples, k, tau, |s| &s.idle);
        let x = primitive_part(net, &traj.z0, tau, s, &busy);
        out.z_hat.push(s.z.iter().map(|&z| z as f64 / r).collect());
        out.w_hat.push(plan.workload(&s.z.iter().map(|&z| z as f64).collect::<Vec<_>>()) / r);
        out.i_w_hat.push(plan.pi.iter().zip(&idle).map(|(p, i)| p * i).sum::<f64>() / r);
        out.i_n_hat.push(nonbasic_push(plan, &busy) / r);
        out.i_hat.push(idle.iter().map(|i| i / r).collect());
        out.x_w_hat.push(plan.workload(&x) / r);
        out.x_hat.push(x.iter().map(|v| v / r).collect());
        out.e_hat.push((0..m).map(|i| (s.arrivals[i] as f64 - net.arrival_rate[i] * tau) / r).collect());
        out.t_bar.push(busy.iter().map(|b| b / r2).collect());
        out.s_bar.push(s.completions.iter().map(|&c| c as f64 / r2).collect());
    }
    for s in traj.samples.iter().take_while(|s| s.t <= needed) {
        for (sup, &z) in out.sup_z_hat.iter_mut().zip(&s.z) {
            *sup = sup.max(z as f64 / r);
        }
    }
    Ok(out)
}

/// Ẑ and Ŵ from an events file on a grid of scaled times.
pub fn scale_events(rows: &[EventRow], r: f64, grid: &[f64]) -> Vec<(f64, Vec<f64>, f64)> {
    grid.iter()
        .map(|&t| {
            let tau = r * r * t;
            let k = rows.partition_point(|row| row.t <= tau).saturating_sub(1);
            let row = &rows[k];
            (t, row.z.iter().map(|&z| z as f64 / r).collect(), row.w / r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseStatistic {
    /// `sup_t Ẑ_k` per buffer.
    pub per_buffer: Vec<f64>,
    /// Largest sup over buffers other than the cheapest.
    pub statistic: f64,
    /// `[2 theta* + n(2|mu|+1) + 2|lambda|(1 + y'theta*)] l / r`
    pub bound: f64,
}

pub fn collapse_statistic(scaled: &ScaledPath, plan: &StaticPlan, l: f64) -> CollapseStatistic {
    let c = plan.cheapest_buffer();
    let statistic = scaled
        .sup_z_hat
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != c)
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    CollapseStatistic {
        per_buffer: scaled.sup_z_hat.clone(),
        statistic,
        bound: plan.collapse_constant() * l / scaled.r,
    }
}

/// Scaled `(W, X_W, I_W + I_N)` at event resolution over `[0, T]`, with
/// `X_W` rebuilt from primitives.
///
/// Each event time carries two points: the left limit (pre-event counts,
/// current clocks) followed by the post-event state, so pushing is always
/// attributed to the workload level it happened at.
pub fn workload_sandwich_paths(
    traj: &Trajectory,
    net: &NetworkSpec,
    plan: &StaticPlan,
    r: f64,
    horizon: f64,
) -> (StepPath, StepPath, StepPath) {
    let limit = r * r * horizon;
    let push = |s: &Sample| {
        (plan.pi.iter().zip(&s.idle).map(|(p, i)| p * i).sum::<f64>() + nonbasic_push(plan, &s.busy)) / r
    };
    let x_w = |counts: &Sample, clocks: &Sample| {
        plan.workload(&primitive_part(net, &traj.z0, clocks.t, counts, &clocks.busy)) / r
    };
    let (mut t, mut w, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut prev: Option<&Sample> = None;
    for s in traj.samples.iter().take_while(|s| s.t <= limit) {
        let ys = push(s);
        if let Some(p) = prev {
            t.push(s.t / (r * r));
            w.push(p.w / r);
            x.push(x_w(p, s));
            y.push(ys);
        }
        t.push(s.t / (r * r));
        w.push(s.w / r);
        x.push(x_w(s, s));
        y.push(ys);
        prev = Some(s);
    }
    (StepPath::new(t.clone(), w), StepPath::new(t.clone(), x), StepPath::new(t, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::test_nets::{net_a, net_b, with_all_laws};
    use crate::network::DistributionSpec;
    use crate::policy::PolicyParams;
    use crate::sim::{run_baseline_trajectory, run_dr_trajectory, Discipline};

    #[test]
    fn unit_scale_is_identity() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        let params = PolicyParams::with_length(10.0, &plan).unwrap();
        let traj = run_dr_trajectory(&net, &plan, &params, 50.0, 4, 0);
        let grid: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let sp = diffusion_scale(&traj, &net, &plan, 1.0, &grid).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let z: Vec<f64> = traj.sample_at(t).z.iter().map(|&z| z as f64).collect();
            assert_eq!(sp.z_hat[k], z);
            assert!((sp.w_hat[k] - plan.workload(&sp.z_hat[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn short_horizon_is_rejected() {
        let net = net_a();
        let plan = StaticPlan::build(&net).unwrap();
        let traj = run_baseline_trajectory(&net, &plan, 10.0, 1, 0, Discipline::Priority);
        let err = diffusion_scale(&traj, &net, &plan, 4.0, &[0.0, 1.0]).unwrap_err();
        assert_eq!(err.needed, 16.0);
    }

    #[test]
    fn deterministic_arrivals_do_not_fluctuate() {
        let net = with_all_laws(net_a(), DistributionSpec::deterministic());
        let plan = StaticPlan::build(&net).unwrap();
        let traj = run_baseline_trajectory(&net, &plan, 64.0, 1, 0, Discipline::Priority);
        let grid: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0).collect();
        let sp = diffusion_scale(&traj, &net, &plan, 8.0, &grid).unwrap();
        for e in &sp.e_hat {
            assert!(e[0].abs() <= 1.0 / 8.0 + 1e-12);
        }
    }

    #[test]
    fn two_path_workload() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        let params = PolicyParams::with_length(20.0, &plan).unwrap();
        let traj = run_dr_trajectory(&net, &plan, &params, 1000.0, 8, 0);
        for s in &traj.samples {
            let w = workload_decomposition(s, &traj.z0, &net, &plan);
            assert!((w - s.w).abs() <= 1e-6 * s.w.abs().max(1.0), "t={} {w} vs {}", s.t, s.w);
        }
        let traj = run_baseline_trajectory(&net, &plan, 1000.0, 8, 0, Discipline::LongestQueue);
        for s in &traj.samples {
            let w = workload_decomposition(s, &traj.z0, &net, &plan);
            assert!((w - s.w).abs() <= 1e-6 * s.w.abs().max(1.0));
        }
    }

    #[test]
    fn grid_contains_reviews() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        let params = PolicyParams::with_length(16.0, &plan).unwrap();
        let traj = run_dr_trajectory(&net, &plan, &params, 64.0, 1, 0);
        let grid = scaling_grid(&traj, 8.0, 1.0, &[0.5]);
        assert!(grid.len() >= GRID_POINTS);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!(traj.periods.iter().all(|p| p.tau > 64.0 || grid.contains(&(p.tau / 64.0))));
        assert_eq!(grid[0], 0.0);
        assert_eq!(*grid.last().unwrap(), 1.0);
    }

    #[test]
    fn collapse_bound_net_b() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        let r = 32.0;
        let l = 32f64.powf(0.9);
        let sp = ScaledPath {
            r,
            t: vec![0.0],
            z_hat: vec![],
            w_hat: vec![],
            i_hat: vec![],
            i_w_hat: vec![],
            i_n_hat: vec![],
            x_hat: vec![],
            x_w_hat: vec![],
            e_hat: vec![],
            t_bar: vec![],
            s_bar: vec![],
            sup_z_hat: vec![5.0, 0.0],
        };
        let c = collapse_statistic(&sp, &plan, l);
        assert_eq!(c.statistic, 0.0);
        assert!((c.bound - 61.28 * l / r).abs() < 1e-9);
        assert!((c.bound - 43.3).abs() < 0.1);
    }

    #[test]
    fn dr_paths_meet_sandwich_preconditions_i_ii() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        let params = PolicyParams::with_length(16.0, &plan).unwrap();
        let traj = run_dr_trajectory(&net, &plan, &params, 64.0, 3, 0);
        let (w, x, y) = workload_sandwich_paths(&traj, &net, &plan, 8.0, 1.0);
        // a delta large enough that (iii) cannot fail isolates (i) and (ii)
        let big = w.value.iter().copied().fold(0.0, f64::max) + 1.0;
        assert_eq!(sandwich_check(&w, &x, &y, big), Ok(true));
    }
}
