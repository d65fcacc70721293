//! Shared generators and brute-force oracles for the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crpnet::network::{DistributionSpec, NetworkSpec};
use crpnet::planner::StaticPlan;
use crpnet::policy::{
    classify_state, implied_target, plan_case1, plan_case2, solve_plan_equation, Case, PolicyParams, ReviewPlan,
};
use crpnet::scaling::StepPath;
use crpnet::sim::{ledger_residual, Trajectory};

/// Random network with a spanning-tree activity graph and loads set so
/// the tree runs every server at capacity. Routing and a few slow extra
/// activities are optional. Retries until the plan builds.
pub fn random_crp_network(seed: u64, max_servers: usize, max_buffers: usize, extras: bool, routing: bool) -> (NetworkSpec, StaticPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(found) = try_network(&mut rng, max_servers, max_buffers, extras, routing) {
            return found;
        }
    }
}

fn try_network(
    rng: &mut ChaCha8Rng,
    max_servers: usize,
    max_buffers: usize,
    extras: bool,
    routing: bool,
) -> Option<(NetworkSpec, StaticPlan)> {
    let p = rng.random_range(1..=max_servers);
    let m = rng.random_range(1..=max_buffers);
    // nodes: servers 0..p, buffers p..p+m
    let mut order: Vec<usize> = (0..p + m).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let is_server = |v: usize| v < p;
    // put one node of the other kind second so every later node can attach
    let second = order.iter().position(|&v| is_server(v) != is_server(order[0]))?;
    order.swap(1, second);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut placed = vec![order[0]];
    for &v in &order[1..] {
        let opposite: Vec<usize> = placed.iter().copied().filter(|&u| is_server(u) != is_server(v)).collect();
        let u = opposite[rng.random_range(0..opposite.len())];
        let (s, b) = if is_server(v) { (v, u - p) } else { (u, v - p) };
        edges.push((s, b));
        placed.push(v);
    }
    edges.sort();
    let mut x: Vec<f64> = edges.iter().map(|_| rng.random_range(0.2..1.0)).collect();
    for s in 0..p {
        let total: f64 = edges.iter().zip(&x).filter(|((es, _), _)| *es == s).map(|(_, x)| x).sum();
        for (k, e) in edges.iter().enumerate() {
            if e.0 == s {
                x[k] /= total;
            }
        }
    }
    let mut activity_server: Vec<usize> = edges.iter().map(|e| e.0).collect();
    let mut activity_buffer: Vec<usize> = edges.iter().map(|e| e.1).collect();
    let mut mean_service: Vec<f64> = edges.iter().map(|_| rng.random_range(0.5..2.0)).collect();
    let mut rows: Vec<Vec<f64>> = vec![vec![0.0; m]; edges.len()];
    if routing && m > 1 {
        for (k, row) in rows.iter_mut().enumerate() {
            if rng.random_bool(0.5) {
                let mut to = rng.random_range(0..m);
                if to == activity_buffer[k] {
                    to = (to + 1) % m;
                }
                row[to] = rng.random_range(0.05..0.3);
            }
        }
    }
    let mut lambda = vec![0.0; m];
    for (k, &xk) in x.iter().enumerate() {
        let rate = xk / mean_service[k];
        lambda[activity_buffer[k]] += rate;
        for i in 0..m {
            lambda[i] -= rows[k][i] * rate;
        }
    }
    if lambda.iter().any(|&l| l < 0.05) {
        return None;
    }
    if extras {
        for _ in 0..rng.random_range(0..=2) {
            let s = rng.random_range(0..p);
            let b = rng.random_range(0..m);
            if activity_server.iter().zip(&activity_buffer).any(|(&es, &eb)| es == s && eb == b) {
                continue;
            }
            activity_server.push(s);
            activity_buffer.push(b);
            mean_service.push(rng.random_range(4.0..8.0));
            rows.push(vec![0.0; m]);
        }
    }
    let n = activity_server.len();
    let spec = NetworkSpec {
        buffer_names: (0..m).map(|i| format!("b{i}")).collect(),
        server_names: (0..p).map(|s| format!("s{s}")).collect(),
        activity_server,
        activity_buffer,
        routing: rows,
        arrival_rate: lambda,
        mean_service,
        holding_cost: (0..m).map(|_| rng.random_range(0.5..3.0)).collect(),
        discount_rate: 0.0,
        interarrival_dist: vec![Some(DistributionSpec::exponential()); m],
        service_dist: vec![DistributionSpec::exponential(); n],
    };
    let plan = StaticPlan::build(&spec).ok()?;
    Some((spec, plan))
}

/// Optimal value and every optimal vertex (its `x` part) of
/// `min rho : Rx = lambda, Ax + s = rho e, x, s, rho >= 0`, by enumerating bases.
pub struct VertexOptimum {
    pub rho: f64,
    pub optimal_x: Vec<Vec<f64>>,
}

pub fn vertex_enumeration(net: &NetworkSpec) -> Option<VertexOptimum> {
    let m = net.num_buffers();
    let p = net.num_servers();
    let n = net.num_activities();
    let r = net.input_output_matrix();
    let a = net.capacity_matrix();
    let rows = m + p;
    let cols = n + 1 + p;
    let mut full = DMatrix::zeros(rows, cols);
    for i in 0..m {
        for j in 0..n {
            full[(i, j)] = r[(i, j)];
        }
    }
    for s in 0..p {
        for j in 0..n {
            full[(m + s, j)] = a[(s, j)];
        }
        full[(m + s, n)] = -1.0;
        full[(m + s, n + 1 + s)] = 1.0;
    }
    let rhs = DVector::from_iterator(rows, net.arrival_rate.iter().copied().chain(std::iter::repeat_n(0.0, p)));
    let mut best: Option<VertexOptimum> = None;
    for basis in combinations(cols, rows) {
        let sub = DMatrix::from_fn(rows, rows, |i, k| full[(i, basis[k])]);
        let lu = sub.lu();
        let Some(sol) = lu.solve(&rhs) else { continue };
        if (&DMatrix::from_fn(rows, rows, |i, k| full[(i, basis[k])]) * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        if sol.iter().any(|&v| v < -1e-10) {
            continue;
        }
        let mut v = vec![0.0; cols];
        for (k, &c) in basis.iter().enumerate() {
            v[c] = sol[k];
        }
        let rho = v[n];
        let x = v[..n].to_vec();
        match &mut best {
            None => best = Some(VertexOptimum { rho, optimal_x: vec![x] }),
            Some(b) if rho < b.rho - 1e-9 => *b = VertexOptimum { rho, optimal_x: vec![x] },
            Some(b) if (rho - b.rho).abs() <= 1e-9 => b.optimal_x.push(x),
            _ => {}
        }
    }
    best
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

pub const STATES: usize = 10_000;

/// Uniform state in the asymmetric ball of radius `a`; the cheapest buffer
/// ranges up to `a + spread` above its safety stock.
pub fn in_ball_state(rng: &mut ChaCha8Rng, theta: &[f64], a: f64, spread: f64, cheapest: usize) -> Vec<f64> {
    theta
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            // open ball: stay strictly inside
            let lo = t - a * (1.0 - 1e-9);
            let hi = if i == cheapest { t + a + spread } else { t + a * (1.0 - 1e-9) };
            rng.random_range(lo..hi).max(0.0)
        })
        .collect()
}

pub fn basic(review: &ReviewPlan, plan: &StaticPlan) -> Vec<f64> {
    plan.basic_set.iter().map(|&j| review.rates[j]).collect()
}

pub fn server_loads(review: &ReviewPlan, plan: &StaticPlan) -> Vec<f64> {
    let mut load = vec![0.0; plan.num_servers];
    for (j, &s) in plan.activity_server.iter().enumerate() {
        load[s] += review.rates[j];
    }
    load
}

pub fn scale_tol(v: &[f64]) -> f64 {
    1e-9 * v.iter().fold(1.0f64, |a, x| a.max(x.abs()))
}

/// Lemma 3 and the Case-1 target identity on `count` states.
pub fn check_case1(plan: &StaticPlan, l: f64, seed: u64, count: usize) {
    let params = PolicyParams::with_length(l, plan).unwrap();
    let c = plan.cheapest_buffer();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xb_star = plan.x_basic();
    for _ in 0..count {
        let q = in_ball_state(&mut rng, &params.theta, params.radius(), 3.0 * params.radius(), c);
        assert_eq!(classify_state(&q, &params, plan), Case::One, "{q:?}");
        let review = plan_case1(&q, &params, plan).unwrap();
        for (x, xs) in basic(&review, plan).iter().zip(&xb_star) {
            assert!(*x >= 0.5 * xs - 1e-9, "x_B {x} below half of {xs} at {q:?}");
        }
        let tol = scale_tol(&review.target);
        let implied = implied_target(&q, &review, plan);
        for (a, b) in review.target.iter().zip(&implied) {
            assert!((a - b).abs() <= tol, "target {:?} vs {:?}", review.target, implied);
        }
        for (i, (z, t)) in review.target.iter().zip(&params.theta).enumerate() {
            if i != c {
                assert_eq!(z, t);
            }
        }
        let yq: f64 = plan.y.iter().zip(&review.q_tilde).map(|(a, b)| a * b).sum();
        let yz: f64 = plan.y.iter().zip(&review.target).map(|(a, b)| a * b).sum();
        if review.idle_time == 0.0 && q[c] >= params.theta[c] {
            assert!((yq - yz).abs() <= tol, "workload {yq} vs {yz}");
        }
        // the stretched algebra collapses to Case 1 inside the ball
        let stretched = plan_case2(&q, &params, plan).unwrap();
        assert_eq!(stretched.stretch, 1.0);
        for (a, b) in stretched.rates.iter().zip(&review.rates) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

/// Lemma 4 on `count` states drawn from a box around the safety stocks.
pub fn check_case2(plan: &StaticPlan, l: f64, seed: u64, count: usize) {
    let params = PolicyParams::with_length(l, plan).unwrap();
    let c = plan.cheapest_buffer();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = 3.0 * params.theta.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut seen = 0;
    while seen < count {
        let q: Vec<f64> = (0..plan.num_buffers()).map(|_| rng.random_range(0.0..hi).round()).collect();
        if classify_state(&q, &params, plan) == Case::One {
            continue;
        }
        seen += 1;
        let review = plan_case2(&q, &params, plan).unwrap();
        assert!(review.stretch >= 1.0);
        let yq: f64 = plan.y.iter().zip(&review.q_tilde).map(|(a, b)| a * b).sum();
        let yt: f64 = plan.y.iter().zip(&params.theta).map(|(a, b)| a * b).sum();
        assert!(yq >= yt - scale_tol(&[yt]));
        assert!(review.rates.iter().all(|&x| x >= 0.0), "{:?}", review.rates);
        assert!(server_loads(&review, plan).iter().all(|&u| u <= 1.0 + 1e-9));
        let implied = implied_target(&q, &review, plan);
        let tol = scale_tol(&implied);
        for i in 0..q.len() {
            if i != c {
                assert!((implied[i] - params.theta[i]).abs() <= tol, "z_{i} = {} vs {}", implied[i], params.theta[i]);
            }
            assert!((implied[i] - review.target[i]).abs() <= tol);
        }
    }
}

/// Lemma 6: plan-equation solution on the wider ball of radius `C0 l / 2m`.
pub fn check_wide_ball(plan: &StaticPlan, l: f64, seed: u64, count: usize) {
    let params = PolicyParams::with_length(l, plan).unwrap();
    let c = plan.cheapest_buffer();
    let m = plan.num_buffers() as f64;
    let a = plan.c0 * l / (2.0 * m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xb_star = plan.x_basic();
    for _ in 0..count {
        let mut q = in_ball_state(&mut rng, &params.theta, a, 0.0, c);
        // restrict to the workload-surplus side where no idling is planned
        let deficit: f64 = (0..q.len()).map(|i| plan.y[i] * (params.theta[i] - q[i])).sum();
        if deficit > 0.0 {
            q[c] += deficit / plan.y[c];
        }
        let (xb, zc) = solve_plan_equation(&q, &params, plan);
        for (x, xs) in xb.iter().zip(&xb_star) {
            assert!(*x >= 0.5 * xs - 1e-9, "x_B {x} vs {xs}");
        }
        assert!(zc >= 0.5 * params.theta[c] - 1e-9 && zc > 0.0);
    }
}


pub fn brute_force_psi(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            let inf = x[..=t].iter().fold(f64::INFINITY, |a, &b| a.min(b));
            (-inf).max(0.0)
        })
        .collect()
}

pub fn random_walk(rng: &mut ChaCha8Rng, len: usize) -> StepPath {
    let mut v = 0.0;
    let mut t = 0.0;
    let (mut time, mut value) = (Vec::with_capacity(len), Vec::with_capacity(len));
    for k in 0..len {
        if k > 0 {
            v += rng.random_range(-1.0..1.0);
            t += rng.random_range(0.01..1.0);
        } else {
            v = rng.random_range(-2.0..2.0);
        }
        time.push(t);
        value.push(v);
    }
    StepPath::new(time, value)
}

/// `(w, x, y)` built to satisfy the sandwich preconditions: `y` pushes
/// only at points where the resulting `w` is within `delta`.
pub fn synthetic_triple(rng: &mut ChaCha8Rng, len: usize, delta: f64) -> (StepPath, StepPath, StepPath) {
    let walk = random_walk(rng, len);
    // start nonnegative so y(0) = 0 is admissible
    let shift = walk.value[0].abs() - walk.value[0];
    let x = StepPath::new(walk.time.clone(), walk.value.iter().map(|v| v + shift).collect());
    let (mut y, mut w) = (vec![0.0; len], vec![x.value[0]; len]);
    let mut push = 0.0f64;
    for k in 1..len {
        let free = x.value[k] + push;
        let target = if free < 0.0 {
            rng.random_range(0.0..=delta)
        } else if free <= delta && rng.random_bool(0.3) {
            rng.random_range(free..=delta)
        } else {
            free
        };
        push += target - free;
        y[k] = push;
        w[k] = x.value[k] + push;
    }
    (StepPath::new(x.time.clone(), w), x.clone(), StepPath::new(x.time.clone(), y))
}

pub fn check_trajectory(traj: &Trajectory, net: &NetworkSpec, plan: &StaticPlan) {
    let c = plan.cheapest_buffer();
    let ratio = net.holding_cost[c] / plan.y[c];
    for (k, s) in traj.samples.iter().enumerate() {
        assert_eq!(ledger_residual(s, &traj.z0, net), 0, "ledger at sample {k}");
        assert!(s.z.iter().all(|&z| z >= 0), "negative queue at sample {k}");
        let cost_rate: f64 = s.z.iter().zip(&net.holding_cost).map(|(&z, h)| z as f64 * h).sum();
        assert!(cost_rate >= ratio * s.w - 1e-9 * cost_rate.max(1.0));
        let w: f64 = s.z.iter().zip(&plan.y).map(|(&z, y)| z as f64 * y).sum();
        assert!((w - s.w).abs() <= 1e-9 * w.max(1.0));
    }
    for pair in traj.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let dt = b.t - a.t;
        assert!(dt >= 0.0);
        let mut server_busy = vec![0.0; net.num_servers()];
        for j in 0..net.num_activities() {
            let d = b.busy[j] - a.busy[j];
            assert!(d >= -1e-9, "busy time decreased");
            server_busy[net.activity_server[j]] += d;
            if d > 1e-9 {
                assert!(a.z[net.activity_buffer[j]] >= 1, "activity {j} served an empty buffer at t = {}", a.t);
            }
        }
        for s in 0..net.num_servers() {
            assert!(server_busy[s] <= dt + 1e-9, "server {s} over capacity");
            assert!(b.idle[s] >= a.idle[s] - 1e-9);
            assert!(server_busy[s] + (b.idle[s] - a.idle[s]) <= dt + 1e-9);
        }
        assert!(b.i_w >= a.i_w - 1e-9, "I_W decreased");
    }
}

