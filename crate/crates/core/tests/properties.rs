mod common;

use pels::dataset::shard;
use pels::engine::{Engine, ReduceTopology};
use pels::linesearch::{pels_line_search, PelsParams};
use pels::losses::{coefficients, value_grad, LeastSquares, Logistic};
use pels::numerics::{dot, DenseVector};
use pels::optimizer::{train, Algorithm, LineSearchKind, OptimizerConfig, Termination};
use proptest::prelude::*;

fn config_seed() -> impl Strategy<Value = u64> {
    any::<u64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coefficients_match_finite_differences(seed in config_seed(), n_p in 1usize..6) {
        let pb = common::LineProblem::random_nondegenerate(&mut common::rng(seed), 30, 8);
        let loss = Logistic::new(pb.lambda).unwrap();
        let mut engine = Engine::new(ReduceTopology::AllToOne);
        let c = coefficients(&loss, &pb.w_vec(), &pb.p_vec(), pb.alpha_j, 5, &pb.sharded(n_p), &mut engine)
            .unwrap()
            .coeffs;
        let fd = pb.fd_coeffs(5);
        let floor = 1e-9 * c[0].abs();
        for l in 0..=5 {
            let err = (c[l] - fd[l]).abs();
            if fd[l].abs() < floor {
                prop_assert!(err <= 1e-3 * floor, "l={} {} vs {} (near zero)", l, c[l], fd[l]);
            } else {
                let tol = if l <= 3 { 1e-5 } else { 1e-3 };
                prop_assert!(err <= tol * fd[l].abs(), "l={} {} vs {}", l, c[l], fd[l]);
            }
        }
    }

    #[test]
    fn leading_coefficients_are_value_and_slope(seed in config_seed()) {
        let pb = common::LineProblem::random(&mut common::rng(seed), 40, 10);
        let loss = Logistic::new(pb.lambda).unwrap();
        let data = pb.sharded(3);
        let mut engine = Engine::new(ReduceTopology::Tree { levels: 1 });
        let c = coefficients(&loss, &pb.w_vec(), &pb.p_vec(), pb.alpha_j, 3, &data, &mut engine)
            .unwrap()
            .coeffs;
        let r = pels::numerics::axpy(pb.alpha_j, &pb.p_vec(), &pb.w_vec()).unwrap();
        let (f, g) = value_grad(&loss, &r, &data, &mut engine).unwrap();
        prop_assert!(common::rel_err(c[0], f) <= 1e-12);
        let slope = dot(&g, &pb.p_vec()).unwrap();
        prop_assert!((c[1] - slope).abs() <= 1e-12 * (1.0 + slope.abs()));
        prop_assert!(common::rel_err(f, pb.phi(pb.alpha_j)) <= 1e-12);
    }

    #[test]
    fn gradient_matches_directional_finite_difference(seed in config_seed()) {
        let pb = common::LineProblem::random(&mut common::rng(seed), 40, 10);
        let loss = Logistic::new(pb.lambda).unwrap();
        let data = pb.sharded(2);
        let mut engine = Engine::new(ReduceTopology::AllToOne);
        let r = pels::numerics::axpy(pb.alpha_j, &pb.p_vec(), &pb.w_vec()).unwrap();
        let (_, g) = value_grad(&loss, &r, &data, &mut engine).unwrap();
        let slope = dot(&g, &pb.p_vec()).unwrap();
        let h = 1e-4;
        let fd = (pb.phi(pb.alpha_j + h) - pb.phi(pb.alpha_j - h)) / (2.0 * h);
        prop_assert!((slope - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{} vs {}", slope, fd);
    }

    #[test]
    fn least_squares_line_search_is_exact(seed in config_seed(), n in 3usize..60, m in 1usize..8) {
        let mut rng = common::rng(seed);
        let data = shard(common::least_squares_instances(&mut rng, n, m), 3).unwrap();
        let loss = LeastSquares::new(1e-3).unwrap();
        let w = DenseVector::zeros(m);
        let mut engine = Engine::new(ReduceTopology::AllToOne);
        let (_, g) = value_grad(&loss, &w, &data, &mut engine).unwrap();
        let p = g.scaled(-1.0);
        prop_assume!(pels::numerics::norm2(&p) > 1e-8);
        let out = pels_line_search(
            &mut |a: f64, d: usize| coefficients(&loss, &w, &p, a, d, &data, &mut engine).unwrap().coeffs,
            1.0,
            &PelsParams::default(),
        )
        .unwrap();
        prop_assert_eq!(out.n_expansions, 1);
        let w1 = pels::numerics::axpy(out.alpha, &p, &w).unwrap();
        let (_, g1) = value_grad(&loss, &w1, &data, &mut Engine::new(ReduceTopology::AllToOne)).unwrap();
        prop_assert!(dot(&g1, &p).unwrap().abs() <= 1e-10 * (1.0 + dot(&p, &p).unwrap()));
    }

    #[test]
    fn polynomial_search_refines_toward_line_minimum(seed in config_seed()) {
        let pb = common::LineProblem::random_nondegenerate(&mut common::rng(seed), 30, 6);
        let loss = Logistic::new(pb.lambda.max(1e-3)).unwrap();
        let data = pb.sharded(2);
        let mut engine = Engine::new(ReduceTopology::AllToOne);
        let w = pb.w_vec();
        let mut p = pb.p_vec();
        let (_, g) = value_grad(&loss, &w, &data, &mut engine).unwrap();
        if dot(&g, &p).unwrap() > 0.0 {
            p = p.scaled(-1.0);
        }
        let params = PelsParams { theta: 1e-12, max_expansions: 10, ..PelsParams::default() };
        let out = pels_line_search(
            &mut |a: f64, d: usize| coefficients(&loss, &w, &p, a, d, &data, &mut engine).unwrap().coeffs,
            0.5,
            &params,
        )
        .unwrap();
        prop_assume!(!out.halved);
        let slope_at = |a: f64| {
            let r = pels::numerics::axpy(a, &p, &w).unwrap();
            let (_, g) = value_grad(&loss, &r, &data, &mut Engine::new(ReduceTopology::AllToOne)).unwrap();
            dot(&g, &p).unwrap()
        };
        let first = slope_at(out.expansion_points.get(1).copied().unwrap_or(out.alpha)).abs();
        let last = slope_at(out.alpha).abs();
        prop_assert!(last <= first + 1e-12, "|phi'| grew from {} to {}", first, last);
    }
}

#[test]
fn wolfe_runs_never_increase_the_loss() {
    for seed in 0..4 {
        let instances = pels::cli::generate_synthetic(300, 8, seed).unwrap();
        let data = shard(pels::dataset::augment(instances, 8).unwrap(), 5).unwrap();
        let loss = Logistic::new(1e-3).unwrap();
        for algorithm in [Algorithm::Gd, Algorithm::Ncg, Algorithm::Lbfgs] {
            let mut config = OptimizerConfig::new(algorithm, LineSearchKind::Wolfe);
            config.max_iters = 40;
            config.record_time = false;
            let (out, _) =
                train(&config, &loss, &data, ReduceTopology::Tree { levels: 2 }).unwrap();
            for pair in out.trace.windows(2) {
                assert!(
                    pair[1].loss <= pair[0].loss,
                    "{} seed {seed}: loss rose at k={}",
                    algorithm.name(),
                    pair[1].k
                );
            }
        }
    }
}

#[test]
fn polynomial_runs_decrease_the_loss() {
    for seed in 0..4 {
        let instances = pels::cli::generate_synthetic(300, 8, seed).unwrap();
        let data = shard(pels::dataset::augment(instances, 8).unwrap(), 5).unwrap();
        let loss = Logistic::new(1e-3).unwrap();
        for algorithm in [Algorithm::Gd, Algorithm::Ncg, Algorithm::Lbfgs] {
            let mut config = OptimizerConfig::new(algorithm, LineSearchKind::Pels);
            config.max_iters = 40;
            config.record_time = false;
            let (out, _) =
                train(&config, &loss, &data, ReduceTopology::Tree { levels: 2 }).unwrap();
            let first = out.trace[0].loss;
            let last = out.final_record().loss;
            assert!(
                last < first,
                "{} seed {seed}: {first} -> {last}",
                algorithm.name()
            );
            for pair in out.trace.windows(2) {
                assert!(
                    pair[1].loss <= pair[0].loss + 1e-12,
                    "{} seed {seed}: loss rose at k={}",
                    algorithm.name(),
                    pair[1].k
                );
            }
        }
    }
}

#[test]
fn ncg_with_exact_steps_terminates_on_quadratics() {
    for (seed, m) in [(1u64, 2usize), (2, 3), (3, 5), (4, 6)] {
        let mut rng = common::rng(seed);
        let data = shard(common::least_squares_instances(&mut rng, 40, m), 4).unwrap();
        let loss = LeastSquares::new(1e-2).unwrap();
        let mut config = OptimizerConfig::new(Algorithm::Ncg, LineSearchKind::Pels);
        config.grad_tol = 1e-8;
        config.max_iters = 3 * m;
        config.record_time = false;
        let (out, _) = train(&config, &loss, &data, ReduceTopology::AllToOne).unwrap();
        assert_eq!(out.termination, Termination::Converged, "m={m}");
        assert!(
            out.iterations() <= m + 1,
            "m={m}: {} iterations",
            out.iterations()
        );
    }
}

#[test]
fn results_do_not_depend_on_shard_count_or_topology() {
    let instances = pels::cli::generate_synthetic(257, 6, 9).unwrap();
    let loss = Logistic::new(1e-3).unwrap();
    let mut config = OptimizerConfig::new(Algorithm::Lbfgs, LineSearchKind::Pels);
    config.record_time = false;
    config.grad_tol = 1e-9;
    let mut finals = Vec::new();
    for (n_p, topo) in [
        (1, ReduceTopology::AllToOne),
        (4, ReduceTopology::Tree { levels: 1 }),
        (16, ReduceTopology::Tree { levels: 4 }),
        (7, ReduceTopology::AllToOne),
    ] {
        let data = shard(instances.clone(), n_p).unwrap();
        let (out, _) = train(&config, &loss, &data, topo).unwrap();
        finals.push(out.final_record().loss);
    }
    for f in &finals {
        assert!((f - finals[0]).abs() <= 1e-10, "{finals:?}");
    }
}
