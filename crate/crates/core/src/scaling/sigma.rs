//! Brownian workload variance and reflected Brownian motion tails.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use libm::erfc;
use thiserror::Error;

use crate::network::NetworkSpec;
use crate::planner::{rows_of, StaticPlan};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionStats {
    pub sigma2: f64,
    pub gamma: Vec<Vec<f64>>,
    /// Arrival contribution, diagonal.
    pub gamma0: Vec<Vec<f64>>,
    /// Per-activity service and routing contribution.
    pub gamma_activity: Vec<Vec<Vec<f64>>>,
    /// Per-activity routing covariance.
    pub omega: Vec<Vec<Vec<f64>>>,
}

/// `Gamma = Gamma0 + sum_j x*_j Gamma^j` and `sigma2 = y' Gamma y`.
pub fn compute_sigma2(net: &NetworkSpec, plan: &StaticPlan) -> DiffusionStats {
    let m = net.num_buffers();
    let n = net.num_activities();
    let mut gamma0 = DMatrix::zeros(m, m);
    for k in 0..m {
        if let (true, Some(d)) = (net.arrival_rate[k] > 0.0, &net.interarrival_dist[k]) {
            // lambda_k Var(u_k) with u_k = ubar_k / lambda_k
            gamma0[(k, k)] = d.variance() / net.arrival_rate[k];
        }
    }
    let mut gamma = gamma0.clone();
    let mut omegas = Vec::with_capacity(n);
    let mut gammas = Vec::with_capacity(n);
    for j in 0..n {
        let p = &net.routing[j];
        let omega = DMatrix::from_fn(m, m, |k, l| p[k] * (if k == l { 1.0 } else { 0.0 } - p[l]));
        let mj = net.mean_service[j];
        let col = DVector::from_fn(m, |i, _| {
            (if net.activity_buffer[j] == i { 1.0 } else { 0.0 } - p[i]) / mj
        });
        let service_var = mj * mj * net.service_dist[j].variance();
        let gj = (&omega + &col * col.transpose() * service_var) / mj;
        gamma += &gj * plan.x_star[j];
        omegas.push(rows_of(&omega));
        gammas.push(rows_of(&gj));
    }
    let y = DVector::from_column_slice(&plan.y);
    let sigma2 = (y.transpose() * &gamma * &y)[(0, 0)].max(0.0);
    DiffusionStats {
        sigma2,
        gamma: rows_of(&gamma),
        gamma0: rows_of(&gamma0),
        gamma_activity: gammas,
        omega: omegas,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("time must be positive, got {0}")]
    Time(f64),
    #[error("sigma must be positive, got {0}")]
    Sigma(f64),
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(W*(t) > w) = 2 N(-w / (sigma sqrt t))` for driftless RBM started at 0.
pub fn rbm_tail(w: f64, t: f64, sigma: f64) -> Result<f64, DomainError> {
    if !(t > 0.0) {
        return Err(DomainError::Time(t));
    }
    if !(sigma > 0.0) {
        return Err(DomainError::Sigma(sigma));
    }
    if w <= 0.0 {
        return Ok(1.0);
    }
    Ok(erfc(w / (sigma * (2.0 * t).sqrt())))
}

/// Tail of the cost-scaled limit, `P((h_c / y_c) W*(t) > x)`.
pub fn rbm_cost_tail(x: f64, t: f64, sigma: f64, plan: &StaticPlan, holding_cost: &[f64]) -> Result<f64, DomainError> {
    let c = plan.cheapest_buffer();
    rbm_tail(x * plan.y[c] / holding_cost[c], t, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::test_nets::{net_a, net_b, with_all_laws};
    use crate::network::DistributionSpec;

    #[test]
    fn single_station() {
        let net = net_a();
        let s = compute_sigma2(&net, &StaticPlan::build(&net).unwrap());
        assert!((s.sigma2 - 2.0).abs() < 1e-15);
        assert_eq!(s.gamma, vec![vec![2.0]]);
    }

    #[test]
    fn net_b_closed_form() {
        let net = net_b();
        let s = compute_sigma2(&net, &StaticPlan::build(&net).unwrap());
        assert!((s.gamma[0][0] - (1.0 / 1.3 + 1.3)).abs() < 1e-12);
        assert!((s.gamma[1][1] - (1.0 / 0.7 + 0.7)).abs() < 1e-12);
        assert_eq!(s.gamma[0][1], 0.0);
        assert!((s.sigma2 - 1.0495).abs() < 1e-3);
        assert!(s.omega.iter().all(|o| o.iter().flatten().all(|&v| v == 0.0)));
    }

    #[test]
    fn deterministic_network_has_no_variance() {
        let net = with_all_laws(net_b(), DistributionSpec::deterministic());
        let s = compute_sigma2(&net, &StaticPlan::build(&net).unwrap());
        assert_eq!(s.sigma2, 0.0);
    }

    #[test]
    fn routing_covariance() {
        let plan = StaticPlan::build(&net_b()).unwrap();
        let mut net = net_b();
        net.routing[0] = vec![0.0, 0.5];
        let s = compute_sigma2(&net, &plan);
        assert_eq!(s.omega[0], vec![vec![0.0, 0.0], vec![0.0, 0.25]]);
    }

    #[test]
    fn tails() {
        assert_eq!(rbm_tail(0.0, 1.0, 1.0), Ok(1.0));
        let p = rbm_tail(2.0, 4.0, 1.0).unwrap();
        assert!((p - 0.3173105078629141).abs() < 1e-12);
        assert!((rbm_tail(1.0, 1.0, 1.0).unwrap() - 2.0 * std_normal_cdf(-1.0)).abs() < 1e-15);
        assert_eq!(rbm_tail(1.0, 0.0, 1.0), Err(DomainError::Time(0.0)));
        assert_eq!(rbm_tail(1.0, 1.0, 0.0), Err(DomainError::Sigma(0.0)));
    }

    #[test]
    fn normal_cdf_table() {
        for (x, v) in [(0.0, 0.5), (1.0, 0.8413447460685429), (-2.0, 0.02275013194817921), (3.0, 0.9986501019683699)] {
            assert!((std_normal_cdf(x) - v).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn cost_units() {
        let net = net_b();
        let plan = StaticPlan::build(&net).unwrap();
        let a = rbm_cost_tail(2.0, 1.0, 1.0, &plan, &net.holding_cost).unwrap();
        assert_eq!(a, rbm_tail(1.0, 1.0, 1.0).unwrap());
    }
}
