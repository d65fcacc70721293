mod common;

use common::{brute_force_psi, random_crp_network, random_walk, synthetic_triple};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crpnet::network::NetworkSpec;
use crpnet::planner::StaticPlan;
use crpnet::scaling::{compute_sigma2, regulator_map, sandwich_check, StepPath};

#[test]
fn regulator_equals_running_infimum_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let len = rng.random_range(1..200);
        let x = random_walk(&mut rng, len);
        let (psi, phi) = regulator_map(&x);
        assert_eq!(psi.value, brute_force_psi(&x.value));
        assert_eq!(psi.time, x.time);
        for k in 0..len {
            assert_eq!(phi.value[k], x.value[k] + psi.value[k]);
        }
    }
}

#[test]
fn sandwich_holds_on_constructed_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for delta in [0.0, 0.1, 1.0] {
        for _ in 0..300 {
            let len = rng.random_range(2..150);
            let (w, x, y) = synthetic_triple(&mut rng, len, delta);
            assert_eq!(sandwich_check(&w, &x, &y, delta), Ok(true), "delta {delta}");
        }
    }
}

proptest! {
    #[test]
    fn complementarity(steps in prop::collection::vec(-3.0f64..3.0, 1..100)) {
        let mut acc = 0.0;
        let values: Vec<f64> = steps.iter().map(|s| { acc += s; acc }).collect();
        let x = StepPath::new((0..values.len()).map(|k| k as f64).collect(), values);
        let (psi, phi) = regulator_map(&x);
        prop_assert!(phi.value.iter().all(|&v| v >= 0.0));
        for k in 0..psi.len() {
            let prev = if k == 0 { 0.0 } else { psi.value[k - 1] };
            if psi.value[k] > prev {
                prop_assert!(phi.value[k].abs() <= 1e-12, "psi rose at {k} with phi {}", phi.value[k]);
            }
        }
    }

    #[test]
    fn regulator_commutes_with_scaling(steps in prop::collection::vec(-3.0f64..3.0, 1..100), c in 0.01f64..100.0) {
        let mut acc = 0.0;
        let values: Vec<f64> = steps.iter().map(|s| { acc += s; acc }).collect();
        let x = StepPath::new((0..values.len()).map(|k| k as f64).collect(), values);
        let (psi, phi) = regulator_map(&x);
        let (psi_c, phi_c) = regulator_map(&x.scale(c));
        for k in 0..x.len() {
            prop_assert!((psi_c.value[k] - c * psi.value[k]).abs() <= 1e-12 * (1.0 + psi_c.value[k].abs()));
            prop_assert!((phi_c.value[k] - c * phi.value[k]).abs() <= 1e-12 * (1.0 + phi_c.value[k].abs()));
        }
    }

    #[test]
    fn sigma2_is_invariant_under_buffer_relabeling(seed in any::<u64>(), rot in 0usize..4) {
        let (net, plan) = random_crp_network(seed, 3, 4, true, true);
        let m = net.num_buffers();
        let perm: Vec<usize> = (0..m).map(|i| (i + rot) % m).collect();
        let relabeled = permute_buffers(&net, &perm);
        let plan2 = StaticPlan::build(&relabeled).unwrap();
        let a = compute_sigma2(&net, &plan).sigma2;
        let b = compute_sigma2(&relabeled, &plan2).sigma2;
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
    }
}

/// Buffer `i` of `net` becomes buffer `perm[i]`.
fn permute_buffers(net: &NetworkSpec, perm: &[usize]) -> NetworkSpec {
    let m = net.num_buffers();
    let mut out = net.clone();
    for i in 0..m {
        out.buffer_names[perm[i]] = net.buffer_names[i].clone();
        out.arrival_rate[perm[i]] = net.arrival_rate[i];
        out.holding_cost[perm[i]] = net.holding_cost[i];
        out.interarrival_dist[perm[i]] = net.interarrival_dist[i];
    }
    for j in 0..net.num_activities() {
        out.activity_buffer[j] = perm[net.activity_buffer[j]];
        for i in 0..m {
            out.routing[j][perm[i]] = net.routing[j][i];
        }
    }
    out
}
