//! Property tests for the structural invariants: distance-matrix contracts,
//! normalization round-trips, shortest-path triangle inequality, cost
//! decomposition vs the quadruple loop, and coupling feasibility.

use gwgen_core::gw::{gw_cost, sinkhorn_log, solve_entropic_gw, Coupling, GwConfig};
use gwgen_core::metric_spaces::{
    floyd_warshall, normalize_distances, pairwise_euclidean, ProbabilityVector, WeightedGraph,
};
use ndarray::Array2;
use proptest::prelude::*;

fn point_cloud_strategy(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(
            proptest::collection::vec(-5.0f64..5.0, 2..=3),
            n..=n,
        )
    })
}

fn to_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows[0].len();
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pairwise_euclidean_contract(rows in point_cloud_strategy(12)) {
        prop_assume!(rows.iter().all(|r| r.len() == rows[0].len()));
        let d = pairwise_euclidean(&to_matrix(&rows)).unwrap();
        let n = d.n();
        for i in 0..n {
            prop_assert_eq!(d.values()[[i, i]], 0.0);
            for j in 0..n {
                prop_assert!(d.values()[[i, j]] >= 0.0);
                prop_assert!((d.values()[[i, j]] - d.values()[[j, i]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_roundtrip(rows in point_cloud_strategy(10)) {
        prop_assume!(rows.iter().all(|r| r.len() == rows[0].len()));
        let d = pairwise_euclidean(&to_matrix(&rows)).unwrap();
        let n = normalize_distances(&d);
        let restored = n.values() * n.scale();
        for (a, b) in restored.iter().zip(d.values().iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn floyd_warshall_triangle_inequality(
        n in 3usize..=50,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Random connected graph: spanning chain plus extras.
        let mut edges = Vec::new();
        for i in 1..n {
            let j = rng.random_range(0..i);
            edges.push((j, i, rng.random::<f64>() + 0.05));
        }
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                if !edges.iter().any(|&(x, y, _)| (x, y) == (a, b)) {
                    edges.push((a, b, rng.random::<f64>() + 0.05));
                }
            }
        }
        let g = WeightedGraph::new(n, edges).unwrap();
        let d = floyd_warshall(&g).unwrap();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    prop_assert!(
                        d.values()[[i, j]] <= d.values()[[i, k]] + d.values()[[k, j]] + 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn gw_cost_decomposition_matches_quadruple_loop(
        seed in 0u64..500,
        n in 2usize..=6,
        m in 2usize..=6,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts_a = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>() * 3.0);
        let pts_b = Array2::from_shape_fn((m, 2), |_| rng.random::<f64>() * 3.0);
        let d = pairwise_euclidean(&pts_a).unwrap();
        let dbar = pairwise_euclidean(&pts_b).unwrap();
        let mut plan = Array2::from_shape_fn((n, m), |_| rng.random::<f64>() + 1e-3);
        let total: f64 = plan.sum();
        plan.map_inplace(|x| *x /= total);
        let t = Coupling::from_plan(plan.clone()).unwrap();

        let fast = gw_cost(&d, &dbar, &t).unwrap();
        let mut slow = 0.0;
        for i in 0..n { for j in 0..m { for k in 0..n { for l in 0..m {
            let diff = d.values()[[i, k]] - dbar.values()[[j, l]];
            slow += 0.5 * diff * diff * plan[[i, j]] * plan[[k, l]];
        }}}}
        prop_assert!((fast - slow).abs() < 1e-10, "fast {} slow {}", fast, slow);
        prop_assert!(fast >= 0.0);
    }

    #[test]
    fn sinkhorn_couplings_feasible(seed in 0u64..300) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..7);
        let m = rng.random_range(2..7);
        let cost = Array2::from_shape_fn((n, m), |_| rng.random::<f64>());
        let p = ProbabilityVector::uniform(n);
        let q = ProbabilityVector::uniform(m);
        // Some random instances have slow-mixing modes; give Sinkhorn headroom.
        let out = sinkhorn_log(&cost, &p, &q, 0.05, 30000, 1e-7).unwrap();
        prop_assert!(out.converged);
        prop_assert!(out.coupling.marginal_violation() < 1e-6);
        prop_assert!(out.coupling.plan().iter().all(|x| *x >= 0.0 && x.is_finite()));
    }

    #[test]
    fn normalized_self_comparison_cancels(seed in 0u64..100) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..9);
        let pts = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>() * 4.0);
        let d = pairwise_euclidean(&pts).unwrap();
        let p = ProbabilityVector::uniform(n);
        let cfg = GwConfig { outer_iters: 10, ..GwConfig::default() };
        let (loss, _) = gwgen_core::gw::normalized_gw(&d, &d, &p, &p, &cfg).unwrap();
        prop_assert!(loss.abs() < 1e-8, "normalized self loss {}", loss);
    }

    #[test]
    fn solver_couplings_feasible(seed in 0u64..60) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..9);
        let m = rng.random_range(3..9);
        let pts_a = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>() * 3.0);
        let pts_b = Array2::from_shape_fn((m, 3), |_| rng.random::<f64>() * 3.0);
        let d = pairwise_euclidean(&pts_a).unwrap();
        let dbar = pairwise_euclidean(&pts_b).unwrap();
        let p = ProbabilityVector::uniform(n);
        let q = ProbabilityVector::uniform(m);
        let cfg = GwConfig { outer_iters: 20, sinkhorn_iters: 5000, ..GwConfig::default() };
        let res = solve_entropic_gw(&d, &dbar, &p, &q, &cfg).unwrap();
        prop_assert!(res.coupling.marginal_violation() < 1e-6);
        prop_assert!(res.loss >= 0.0 && res.loss.is_finite());
    }
}
