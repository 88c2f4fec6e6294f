use kuranishi::atlas::ibox;
use kuranishi::config::Tolerances;
use kuranishi::fixtures;
use kuranishi::generator::{brute_force_degree, generate, load_problem, GlobalProblem};
use kuranishi::perturb::{build_adapted, BuildOptions};
use kuranishi::realization::build_cloud;
use kuranishi::refine::{find_tame_shrinking, reduce, ReductionParams};
use kuranishi::report::{Verdict, Witness};
use kuranishi::sampling::sample_domain_opt;
use kuranishi::vfc::{concordance_weight, reverse_orientation, vfc_count};
use kuranishi::atlas::AtlasSpec;
use proptest::prelude::*;

fn count(a: &AtlasSpec, seed: u64) -> i64 {
    let tol = Tolerances::default();
    let t = find_tame_shrinking(a, 4, false, 12, 1, &tol).unwrap();
    let cloud = build_cloud(&t, 12, 1, tol.tau_id).unwrap();
    let ctx = reduce(&t, &cloud, &ReductionParams::default()).unwrap();
    let p = build_adapted(&t, &ctx, seed, &tol, &BuildOptions::default()).unwrap();
    vfc_count(&t, &ctx, &p, &tol).unwrap().count
}

fn cubic_with_roots(r: [i32; 3]) -> String {
    let f = |a: i32| format!("(x1 - {a}/8)");
    format!("{}*{}*{}", f(r[0]), f(r[1]), f(r[2]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sampling_is_seeded_and_interior(lo in -5i64..0, w in 1i64..6, seed in any::<u64>(), density in 2usize..12) {
        let d = ibox(&[(lo, lo + w), (lo, lo + 1)]);
        let a = sample_domain_opt(&d, density, seed);
        prop_assert_eq!(&a, &sample_domain_opt(&d, density, seed));
        prop_assert!(!a.is_empty());
        prop_assert!(a.iter().all(|x| d.contains(x)));
    }

    #[test]
    fn collar_weight_is_monotone(s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let (a, b) = if s <= t { (s, t) } else { (t, s) };
        prop_assert!(concordance_weight(a) <= concordance_weight(b));
        prop_assert!((0.0..=1.0).contains(&concordance_weight(s)));
    }

    #[test]
    fn verdict_json_round_trip(m in prop_oneof![Just(f64::INFINITY), Just(f64::NEG_INFINITY), -1e3f64..1e3]) {
        let v = Verdict::fail("probe", m, 1e-9, Witness::new(vec![vec![1, 2]], vec![vec![0.5]], m, "x"));
        let back: Verdict = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        prop_assert_eq!(back, v);
    }

    /// Linear maps: the oracle returns the sign of the determinant.
    #[test]
    fn oracle_degree_of_linear_maps(a in -3i64..4, b in -3i64..4, c in -3i64..4, d in -3i64..4) {
        let det = a * d - b * c;
        prop_assume!(det != 0);
        let p = GlobalProblem::parse(
            2,
            &[&format!("{a}*x1 + {b}*x2"), &format!("{c}*x1 + {d}*x2")],
            &[("-1", "1"), ("-1", "1")],
        ).unwrap();
        prop_assert_eq!(brute_force_degree(&p).unwrap(), det.signum());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Three simple roots at least 1/4 apart: count, oracle and reversal agree.
    #[test]
    fn cubic_counts_match_the_oracle(r0 in -13i32..-4, r1 in -2i32..3, r2 in 5i32..14, seed in 0u64..50) {
        let s = cubic_with_roots([r0, r1, r2]);
        let a = fixtures::single(&[&s], &[("-2", "2")]);
        let p = GlobalProblem::parse(1, &[&s], &[("-2", "2")]).unwrap();
        let c = count(&a, seed);
        prop_assert_eq!(c, brute_force_degree(&p).unwrap());
        prop_assert_eq!(count(&reverse_orientation(&a, None), seed), -c);
    }

    #[test]
    fn count_survives_basic_relabeling(seed in 0u64..100, perm in Just(vec![3u32, 1, 2]).prop_shuffle()) {
        let (problem, plan) = load_problem("quartic").unwrap();
        let g = generate(&problem, &plan, &Tolerances::default()).unwrap();
        let r = g.relabel_basic(&perm).unwrap();
        prop_assert_eq!(count(&r, seed), count(&g, seed));
    }

    #[test]
    fn ex_change_count_is_seed_independent(seed in any::<u64>()) {
        prop_assert_eq!(count(&fixtures::ex_change(), seed), 0);
    }
}
