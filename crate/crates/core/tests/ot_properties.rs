use ndarray::Array2;
use proptest::prelude::*;
use sinkmatch_core::synthetic::{random_cost, random_fragment_set, random_weights, rng};
use sinkmatch_core::{
    build_cost_matrix, exact_emd_oracle, plan_entropy, sinkhorn_bregman, sinkhorn_matrix_scaling, transport_cost,
    CostMatrix, LogDomain, MarginalWeights, SolverConfig,
};

fn cost_strategy(max_k: usize, max_l: usize) -> impl Strategy<Value = CostMatrix> {
    (1..=max_k, 1..=max_l).prop_flat_map(|(k, l)| {
        prop::collection::vec(0.0..2.0f64, k * l)
            .prop_map(move |v| CostMatrix::new(Array2::from_shape_vec((k, l), v).unwrap()).unwrap())
    })
}

fn weights_strategy(n: usize) -> impl Strategy<Value = MarginalWeights> {
    prop::collection::vec(0.05..1.0f64, n).prop_map(|v| MarginalWeights::from_unnormalized(v.into()).unwrap())
}

fn problem_strategy(
    max_k: usize,
    max_l: usize,
) -> impl Strategy<Value = (CostMatrix, MarginalWeights, MarginalWeights)> {
    cost_strategy(max_k, max_l).prop_flat_map(|c| {
        let (k, l) = c.shape();
        (Just(c), weights_strategy(k), weights_strategy(l))
    })
}

fn converging(lambda: f64) -> SolverConfig {
    SolverConfig::default()
        .with_lambda(lambda)
        .with_max_iterations(100_000)
        .with_tolerance(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_plans_are_feasible((cost, a, b) in problem_strategy(6, 6)) {
        let plan = sinkhorn_bregman(&cost, &a, &b, &converging(0.1)).unwrap();
        prop_assert!(plan.converged);
        let (row, col) = plan.marginal_error(&a, &b);
        prop_assert!(row < 1e-6 && col < 1e-6, "row {row} col {col}");
        prop_assert!(plan.values.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn constant_shift_leaves_plan_unchanged((cost, a, b) in problem_strategy(5, 5), shift in -1.0..1.0f64) {
        let cfg = converging(0.2);
        let shifted = CostMatrix::new(cost.view().mapv(|c| c + shift)).unwrap();
        let p = sinkhorn_bregman(&cost, &a, &b, &cfg).unwrap();
        let q = sinkhorn_bregman(&shifted, &a, &b, &cfg).unwrap();
        for (x, y) in p.values.iter().zip(q.values.iter()) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn transposed_problem_gives_transposed_plan((cost, a, b) in problem_strategy(5, 5)) {
        let cfg = converging(0.1);
        let p = sinkhorn_bregman(&cost, &a, &b, &cfg).unwrap();
        let q = sinkhorn_bregman(&cost.transposed(), &b, &a, &cfg).unwrap();
        prop_assert!(p.converged && q.converged);
        for (x, y) in p.values.iter().zip(q.values.t().iter()) {
            prop_assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn both_solver_forms_agree((cost, a, b) in problem_strategy(6, 6), lambda in 0.005..1.0f64, iters in 1usize..50) {
        let cfg = SolverConfig::default().with_lambda(lambda).with_max_iterations(iters);
        let p = sinkhorn_bregman(&cost, &a, &b, &cfg).unwrap();
        let q = sinkhorn_matrix_scaling(&cost, &a, &b, &cfg).unwrap();
        prop_assert_eq!(p.converged, q.converged);
        prop_assert_eq!(p.iterations_used, q.iterations_used);
        for (x, y) in p.values.iter().zip(q.values.iter()) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn regularized_cost_never_beats_the_exact_optimum((cost, a, b) in problem_strategy(3, 3)) {
        let cfg = converging(0.01).with_log_domain(LogDomain::On);
        let plan = sinkhorn_bregman(&cost, &a, &b, &cfg).unwrap();
        let (_, exact) = exact_emd_oracle(&cost, &a, &b).unwrap();
        prop_assert!(transport_cost(&plan, &cost).unwrap() >= exact - 1e-9);
    }

    #[test]
    fn log_and_linear_domains_agree((cost, a, b) in problem_strategy(5, 5), lambda in 0.05..1.0f64) {
        let cfg = converging(lambda);
        let lin = sinkhorn_bregman(&cost, &a, &b, &cfg.with_log_domain(LogDomain::Off)).unwrap();
        let log = sinkhorn_bregman(&cost, &a, &b, &cfg.with_log_domain(LogDomain::On)).unwrap();
        for (x, y) in lin.values.iter().zip(log.values.iter()) {
            prop_assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}

/// 200 instances: general margins with K, L <= 3 and uniform margins with K = L <= 5.
fn oracle_instances() -> Vec<(CostMatrix, MarginalWeights, MarginalWeights)> {
    let mut rng = rng(11);
    (0..200)
        .map(|n| {
            let (k, l, uniform) = if n % 2 == 0 {
                (1 + n % 3, 1 + (n / 3) % 3, false)
            } else {
                let s = 2 + (n / 2) % 4;
                (s, s, true)
            };
            let cost = random_cost(&mut rng, k, l, 3);
            if uniform {
                (
                    cost,
                    MarginalWeights::uniform(k).unwrap(),
                    MarginalWeights::uniform(l).unwrap(),
                )
            } else {
                let a = random_weights(&mut rng, k);
                (cost, a, random_weights(&mut rng, l))
            }
        })
        .collect()
}

#[test]
fn converged_small_lambda_sinkhorn_matches_the_exact_oracle() {
    // tight enough that marginal slack cannot undercut the optimum by 1e-9
    let cfg = SolverConfig::default()
        .with_lambda(1e-3)
        .with_max_iterations(50_000)
        .with_tolerance(1e-11)
        .with_log_domain(LogDomain::On);
    for (n, (cost, a, b)) in oracle_instances().iter().enumerate() {
        let plan = sinkhorn_bregman(cost, a, b, &cfg).unwrap();
        assert!(plan.converged, "instance {n} did not converge");
        let (_, exact) = exact_emd_oracle(cost, a, b).unwrap();
        let approx = transport_cost(&plan, cost).unwrap();
        assert!((approx - exact).abs() <= 1e-3, "instance {n}: {approx} vs {exact}");
        assert!(approx >= exact - 1e-9, "instance {n}: {approx} below {exact}");
    }
}

#[test]
fn small_lambda_sinkhorn_within_a_thousand_sweeps_is_near_the_optimum() {
    let cfg = SolverConfig::default()
        .with_lambda(1e-3)
        .with_max_iterations(1000)
        .with_tolerance(1e-11)
        .with_log_domain(LogDomain::On);
    for (n, (cost, a, b)) in oracle_instances().iter().enumerate() {
        let plan = sinkhorn_bregman(cost, a, b, &cfg).unwrap();
        let (_, exact) = exact_emd_oracle(cost, a, b).unwrap();
        let approx = transport_cost(&plan, cost).unwrap();
        assert!((approx - exact).abs() <= 1e-3, "instance {n}: {approx} vs {exact}");
        if plan.converged {
            assert!(approx >= exact - 1e-9, "instance {n}: {approx} below {exact}");
        }
    }
}

#[test]
fn entropy_grows_and_support_shrinks_with_lambda() {
    let mut rng = rng(5);
    let lambdas = [1.0, 0.1, 0.02, 0.005];
    for _ in 0..20 {
        let cost = random_cost(&mut rng, 8, 10, 6);
        let a = MarginalWeights::uniform(8).unwrap();
        let b = MarginalWeights::uniform(10).unwrap();
        let plans: Vec<_> = lambdas
            .iter()
            .map(|&l| {
                sinkhorn_bregman(
                    &cost,
                    &a,
                    &b,
                    &SolverConfig::default().with_lambda(l).with_max_iterations(20_000),
                )
                .unwrap()
            })
            .collect();
        let threshold = 1.0 / (10.0 * 80.0);
        for pair in plans.windows(2) {
            assert!(pair[0].converged && pair[1].converged);
            // lambdas are decreasing along the sweep
            assert!(plan_entropy(&pair[0]) >= plan_entropy(&pair[1]) - 1e-12);
            assert!(pair[0].support_size(threshold) >= pair[1].support_size(threshold));
        }
    }
}

#[test]
fn exact_similarity_dominates_the_uniform_product_plan() {
    let mut rng = rng(21);
    for n in 0..100 {
        let (k, l) = if n % 2 == 0 {
            (1 + n % 3, 1 + (n / 2) % 3)
        } else {
            (2 + n % 5, 2 + n % 5)
        };
        let a = random_fragment_set(&mut rng, k, 4, 0);
        let b = random_fragment_set(&mut rng, l, 4, 1);
        let cost = build_cost_matrix(&a, &b).unwrap();
        let (plan, _) = exact_emd_oracle(
            &cost,
            &MarginalWeights::uniform(k).unwrap(),
            &MarginalWeights::uniform(l).unwrap(),
        )
        .unwrap();
        let sims = a.unit().dot(&b.unit().t());
        let exact: f64 = (&plan.values * &sims).sum();
        let uniform = sims.sum() / (k * l) as f64;
        assert!(exact >= uniform - 1e-12, "{exact} < {uniform}");
    }
}
