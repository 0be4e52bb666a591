mod common;

use pmcert::certify::check_violation;
use pmcert::gisin::simulate_gg;
use pmcert::heuristics::{seesaw_l2, strategy_correlation};
use pmcert::matrix::{make_doubled, sum_s};
use pmcert::norms::{
    cut_norm_abs_bruteforce, cut_norm_bruteforce, lk_branch_bound, lk_bruteforce, local_bound_branch_bound, local_bound_bruteforce,
    GroupAssignment,
};
use pmcert::qgeom::{correlation_matrix, q_lowerbound_restarts, q_value, BlochConfig, Vec3};
use pmcert::WitnessMatrix;
use proptest::prelude::*;

use common::single_thread;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = WitnessMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(n, m)| {
        prop::collection::vec(-9i64..=9, n * m).prop_map(move |d| WitnessMatrix::new(n, m, d).unwrap())
    })
}

fn same_shape_pair() -> impl Strategy<Value = (WitnessMatrix, WitnessMatrix)> {
    (1..=6usize, 1..=6usize).prop_flat_map(|(n, m)| {
        let side = move || prop::collection::vec(-9i64..=9, n * m).prop_map(move |d| WitnessMatrix::new(n, m, d).unwrap());
        (side(), side())
    })
}

fn l2(m: &WitnessMatrix) -> i64 {
    lk_branch_bound(m, 2, &single_thread()).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_of_bounds(m in matrix(7, 7)) {
        let l = local_bound_bruteforce(&m).unwrap();
        let l2 = l2(&m);
        let l3 = lk_branch_bound(&m, 3, &single_thread()).unwrap().value;
        prop_assert!(l <= l2 && l2 <= l3 && l3 <= 3 * l, "{l} {l2} {l3}");
    }

    #[test]
    fn branch_bound_witness_attains_value(m in matrix(8, 6), k in 2usize..=4) {
        let r = lk_branch_bound(&m, k, &single_thread()).unwrap();
        let w = r.witness.unwrap();
        prop_assert!(w.is_canonical());
        prop_assert_eq!(w.evaluate(&m).unwrap(), r.value);
        prop_assert_eq!(r.value, lk_bruteforce(&m, k).unwrap());
    }

    #[test]
    fn homogeneity(m in matrix(6, 6), t in -3i64..=3) {
        prop_assert_eq!(l2(&m.scaled(t).unwrap()), t.abs() * l2(&m));
        prop_assert_eq!(local_bound_bruteforce(&m.scaled(t).unwrap()).unwrap(), t.abs() * local_bound_bruteforce(&m).unwrap());
    }

    #[test]
    fn triangle((a, b) in same_shape_pair()) {
        prop_assert!(l2(&a.checked_add(&b).unwrap()) <= l2(&a) + l2(&b));
    }

    #[test]
    fn stacking_is_subadditive(a in matrix(5, 5), extra in 1usize..=5, seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = common::random_matrix(&mut rng, extra, a.cols(), 9);
        prop_assert!(l2(&a.vstack(&b).unwrap()) <= l2(&a) + l2(&b));
    }

    #[test]
    fn doubling(m in matrix(6, 6)) {
        let d = make_doubled(&m);
        prop_assert_eq!(sum_s(&d), 0);
        prop_assert_eq!(l2(&d), 2 * local_bound_bruteforce(&m).unwrap());
    }

    #[test]
    fn cut_norm_sandwich(m in matrix(7, 7)) {
        let c = cut_norm_abs_bruteforce(&m).unwrap();
        let l = local_bound_bruteforce(&m).unwrap();
        let l2 = l2(&m);
        prop_assert!(c <= l && l <= 4 * c, "C={c} L={l}");
        prop_assert!(c <= l2 && l2 <= 8 * c, "C={c} L2={l2}");
        // the one-sided version only keeps the lower half
        prop_assert!(cut_norm_bruteforce(&m).unwrap() <= c);
    }

    #[test]
    fn local_bound_solvers_agree(m in matrix(9, 9)) {
        let w = local_bound_branch_bound(&m, &single_thread()).unwrap();
        prop_assert_eq!(w.value, local_bound_bruteforce(&m).unwrap());
        let signed: i64 = (0..m.rows())
            .flat_map(|x| (0..m.cols()).map(move |y| (x, y)))
            .map(|(x, y)| m.get(x, y) * i64::from(w.a[x]) * i64::from(w.b[y]))
            .sum();
        prop_assert_eq!(signed, w.value);
    }

    #[test]
    fn seesaw_is_a_lower_bound(m in matrix(8, 8), seed in any::<u64>()) {
        let r = seesaw_l2(&m, 5, seed).unwrap();
        prop_assert_eq!(r.strategy.evaluate(&m).unwrap(), r.value);
        prop_assert!(r.value <= l2(&m));
        // the strategy's correlations are a vertex of the one-bit polytope
        let v = check_violation(&m, &strategy_correlation(&r.strategy), l2(&m)).unwrap();
        prop_assert!(!v.violated);
    }

    #[test]
    fn qubit_value_dominates_classical(m in matrix(5, 5), seed in any::<u64>()) {
        let q = q_lowerbound_restarts(&m, Vec::new(), 3, seed, 2000, 1e-12).unwrap();
        // sign vectors along one axis are qubit strategies
        let w = local_bound_branch_bound(&m, &single_thread()).unwrap();
        let axis = BlochConfig::from_signs(&w.a, &w.b).unwrap();
        prop_assert!((q_value(&m, &axis).unwrap() - w.value as f64).abs() < 1e-9);
        prop_assert!((q_value(&m, &q.config).unwrap() - q.value).abs() < 1e-9);
        // never above the trivial bound
        prop_assert!(q.value <= m.manhattan() as f64 + 1e-9);
    }

    #[test]
    fn relabeling_keeps_the_partition(groups in prop::collection::vec(0usize..3, 1..10)) {
        let g = GroupAssignment::new(3, groups.clone()).unwrap();
        prop_assert!(g.is_canonical());
        let out = g.groups();
        for i in 0..groups.len() {
            for j in 0..groups.len() {
                prop_assert_eq!(groups[i] == groups[j], out[i] == out[j]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gisin_statistics_are_bounded(seed in any::<u64>(), ax in -1.0f64..1.0, bx in -1.0f64..1.0) {
        let unit = |x: f64| Vec3::new(x, (1.0 - x * x).sqrt(), 0.0);
        let (a, b) = (unit(ax), unit(bx));
        let r = simulate_gg(&a, &b, 50_000, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.detect_rate));
        prop_assert!((-1.0..=1.0).contains(&r.e_detected));
        prop_assert!((-1.0..=1.0).contains(&r.e_coarse));
        let ab = a.dot(&b);
        prop_assert!((r.e_coarse - (ab + 1.0) / 2.0).abs() < 6.0 * r.se_coarse.max(1e-3));
        let e = correlation_matrix(&BlochConfig::new(vec![a], vec![b]).unwrap());
        prop_assert!((e.get(0, 0) - ab).abs() < 1e-12);
    }
}
