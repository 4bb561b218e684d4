mod oracle;

use std::time::Duration;

use adscope_core::detector::{
    build_minimax_lp, linear_opt_over_class, rule_as_lp_point, solve_minimax, worst_case_report, Optimize,
    PerformanceMatrix,
};
use adscope_core::pmf::Pmf;
use adscope_core::profiles::UncertaintyClass;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BUDGET: Duration = Duration::from_secs(5);

fn instance(n: usize, width: f64, seed: u64) -> (UncertaintyClass<f64>, Pmf<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = oracle::random_class(n, width, &mut rng);
    let q = Pmf::normalized(oracle::random_pmf(n, &mut rng)).unwrap();
    (UncertaintyClass::new(lo, hi).unwrap(), q)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_matches_vertex_enumeration(n in 1usize..=4, width in 0.0f64..1.0, seed in any::<u64>()) {
        let (u, _) = instance(n, width, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
        let c: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let (got, p) = linear_opt_over_class(&c, &u, Optimize::Min).unwrap();
        let want = oracle::min_linear_by_vertices(&c, &u.p_min, &u.p_max);
        prop_assert!((got - want).abs() <= 1e-12, "greedy {got} vs vertices {want}");
        prop_assert!(u.contains(p.as_slice(), 1e-12));

        let neg: Vec<f64> = c.iter().map(|v| -v).collect();
        let (max, _) = linear_opt_over_class(&c, &u, Optimize::Max).unwrap();
        prop_assert!((max + oracle::min_linear_by_vertices(&neg, &u.p_min, &u.p_max)).abs() <= 1e-12);
    }

    #[test]
    fn solution_is_consistent_and_feasible(n in 1usize..=40, width in 0.0f64..0.6, seed in any::<u64>()) {
        let (u, q) = instance(n, width, seed);
        let rule = solve_minimax(&u, &q, BUDGET).unwrap();
        let lp = build_minimax_lp(&u, &q).unwrap();
        prop_assert!(lp.program.max_residual(&rule_as_lp_point(&rule)) <= 1e-8);

        let g = oracle::min_linear_greedy(&rule.d_tilde, &u.p_min, &u.p_max);
        let h = 1.0 - q.dot(&rule.d_tilde);
        prop_assert!((rule.zeta - g.min(h)).abs() <= 1e-6, "zeta {} vs {}", rule.zeta, g.min(h));
        prop_assert!(rule.worst_case_error() <= 0.5 + 1e-6);
        prop_assert!(rule.d_tilde.iter().all(|&d| (-1e-12..=1.0 + 1e-12).contains(&d)));

        let report = worst_case_report(&rule, &u, &q).unwrap();
        prop_assert!((report.minimax_error - rule.worst_case_error()).abs() <= 1e-6);
        prop_assert!(PerformanceMatrix::worst_case(&rule, &u, &q).unwrap().columns_sum_to_one());
    }

    #[test]
    fn enlarging_the_class_never_helps(n in 1usize..=12, width in 0.0f64..0.4, grow in 0.0f64..0.5, seed in any::<u64>()) {
        let (u, q) = instance(n, width, seed);
        let wider = UncertaintyClass::new(
            u.p_min.iter().map(|v| v * (1.0 - grow)).collect(),
            u.p_max.iter().map(|v| (v + grow * (1.0 - v)).min(1.0)).collect(),
        ).unwrap();
        let tight = solve_minimax(&u, &q, BUDGET).unwrap().worst_case_error();
        let loose = solve_minimax(&wider, &q, BUDGET).unwrap().worst_case_error();
        prop_assert!(loose >= tight - 1e-7, "{loose} < {tight}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn matches_grid_search(n in 1usize..=3, width in 0.0f64..0.8, seed in any::<u64>()) {
        let (u, q) = instance(n, width, seed);
        let got = solve_minimax(&u, &q, BUDGET).unwrap().worst_case_error();
        let want = oracle::minimax_error_by_grid(&u.p_min, &u.p_max, q.as_slice(), 2e-3);
        prop_assert!((got - want).abs() <= 2e-3, "lp {got} vs grid {want}");
    }
}

#[test]
fn grid_oracle_on_known_instances() {
    // Singleton {q}: nothing separates the hypotheses.
    let half = oracle::minimax_error_by_grid(&[0.3, 0.7], &[0.3, 0.7], &[0.3, 0.7], 1e-3);
    assert!((half - 0.5).abs() < 1e-9);
    // Disjoint supports: a perfect rule exists.
    let zero = oracle::minimax_error_by_grid(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], 1e-3);
    assert!(zero.abs() < 1e-9);
}
