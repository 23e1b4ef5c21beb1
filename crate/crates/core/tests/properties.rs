use proptest::prelude::*;
use rmp_core::io::{instance_from_json, instance_to_json};
use rmp_core::numerics::{project_simplex, solve_lp, solve_qp, LpProblem, Matrix, QpProblem, Sense};
use rmp_core::{
    brute_force_map, build_ising, expected_payoff, max_product_map, mix_with_uniform, nature_best_response,
    nominal_instance, random_tree, EngineerStrategy, Instance, IsingSpec, Marginals, NatureStrategy,
};

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn spec() -> impl Strategy<Value = IsingSpec> {
    (2usize..9, 0.0f64..2.0, 0.0f64..1.0, any::<u64>()).prop_map(|(n, d, h, s)| IsingSpec::new(n, d, h, s))
}

/// Random distribution over every factor's parameter domain.
fn nature(g: &Instance, w: &[f64]) -> NatureStrategy<f64> {
    let mut k = 0;
    NatureStrategy {
        factors: g
            .factors()
            .iter()
            .map(|f| {
                let q = normalize(&w[k..k + f.num_thetas()]);
                k += f.num_thetas();
                q
            })
            .collect(),
    }
}

/// Product of random node marginals; always locally consistent.
fn product_strategy(g: &Instance, w: &[f64]) -> EngineerStrategy<f64> {
    let q = g.q();
    let nodes: Vec<Vec<f64>> = (0..g.num_variables()).map(|i| normalize(&w[i * q..(i + 1) * q])).collect();
    let mut digits = Vec::new();
    let factors = g
        .factors()
        .iter()
        .enumerate()
        .map(|(a, f)| {
            digits.resize(f.degree(), 0);
            (0..g.factor_size(a))
                .map(|s| {
                    rmp_core::graph::decode_assignment(s, q, &mut digits);
                    f.neighbors.iter().zip(&digits).map(|(&i, &x)| nodes[i][x]).product()
                })
                .collect()
        })
        .collect();
    EngineerStrategy::from_marginals(Marginals { factors, nodes })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_lands_on_simplex_and_is_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let p = project_simplex(&v).unwrap();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let pp = project_simplex(&p).unwrap();
        prop_assert!(l2(&p, &pp) < 1e-12);
    }

    #[test]
    fn projection_is_nonexpansive(pair in (1usize..10).prop_flat_map(|d| (
        prop::collection::vec(-3.0f64..3.0, d),
        prop::collection::vec(-3.0f64..3.0, d),
    ))) {
        let (a, b) = pair;
        let pa = project_simplex(&a).unwrap();
        let pb = project_simplex(&b).unwrap();
        prop_assert!(l2(&pa, &pb) <= l2(&a, &b) + 1e-12);
    }

    #[test]
    fn projection_beats_random_simplex_points(
        v in prop::collection::vec(-2.0f64..2.0, 3),
        w in prop::collection::vec(0.01f64..1.0, 3),
    ) {
        let p = project_simplex(&v).unwrap();
        let other = normalize(&w);
        prop_assert!(l2(&p, &v) <= l2(&other, &v) + 1e-12);
    }

    #[test]
    fn instance_json_roundtrip(s in spec()) {
        let g: Instance = build_ising(&s).unwrap();
        let text = instance_to_json(&g);
        let back: Instance = instance_from_json(&text).unwrap();
        prop_assert_eq!(back.spec(), g.spec());
        prop_assert!(g.is_tree());
    }

    #[test]
    fn random_trees_are_spanning_trees(n in 2usize..40, seed in any::<u64>()) {
        let edges = random_tree(n, seed).unwrap();
        prop_assert_eq!(edges.len(), n - 1);
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x { let r = find(p, p[x]); p[x] = r; }
            p[x]
        }
        for &(a, b) in &edges {
            prop_assert!(a < b && b < n);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            prop_assert_ne!(ra, rb);
            parent[ra] = rb;
        }
    }

    #[test]
    fn max_product_matches_brute_force(s in spec()) {
        let g: Instance = nominal_instance(&build_ising(&s).unwrap()).unwrap();
        let mp = max_product_map(&g).unwrap();
        let bf = brute_force_map(&g).unwrap();
        prop_assert!((mp.value - bf.value).abs() <= 1e-12 * (1.0 + bf.value.abs()));
    }

    #[test]
    fn best_response_is_optimal(s in spec(), w in prop::collection::vec(0.01f64..1.0, 64), v in prop::collection::vec(0.01f64..1.0, 64)) {
        let g: Instance = build_ising(&s).unwrap();
        let p = product_strategy(&g, &w);
        let br = nature_best_response(&g, &p).unwrap();
        let q = nature(&g, &v);
        let best = expected_payoff(&g, &p, &br).unwrap();
        prop_assert!(best <= expected_payoff(&g, &p, &q).unwrap() + 1e-9);
    }

    #[test]
    fn mixture_payoff_is_affine(s in spec(), w in prop::collection::vec(0.01f64..1.0, 64), alpha in 0.0f64..1.0) {
        let g: Instance = build_ising(&s).unwrap();
        let p = product_strategy(&g, &w);
        let q = nature_best_response(&g, &p).unwrap();
        let at = |a: f64| expected_payoff(&g, &p, &mix_with_uniform(&q, a).unwrap()).unwrap();
        let (v0, v1) = (at(0.0), at(1.0));
        prop_assert!((at(alpha) - ((1.0 - alpha) * v0 + alpha * v1)).abs() < 1e-12 * (1.0 + v0.abs() + v1.abs()));
    }

    #[test]
    fn qp_solutions_satisfy_kkt(
        a in prop::collection::vec(-1.0f64..1.0, 9),
        c in prop::collection::vec(-2.0f64..2.0, 3),
        cut in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        // Q = A^T A is PSD and often nearly singular; box plus one cut through a feasible region.
        let am = Matrix::from_vec(3, 3, a);
        let mut q = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                q[(i, j)] = (0..3).map(|k| am[(k, i)] * am[(k, j)]).sum();
            }
        }
        let mut rows = Vec::new();
        let mut h = Vec::new();
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            rows.push(e.clone());
            h.push(-1.0);
            rows.push(e.iter().map(|v| -v).collect());
            h.push(-1.0);
        }
        rows.push(cut);
        h.push(-0.5);
        let p = QpProblem { q, c, g: Matrix::from_rows(&rows), h };
        let sol = solve_qp(&p).unwrap();
        prop_assert!(sol.is_optimal());
        let k = p.kkt(&sol.z, &sol.multipliers);
        prop_assert!(k.stationarity <= 1e-8 && k.complementarity <= 1e-8);
        prop_assert!(k.primal_infeasibility <= 1e-8 && k.dual_infeasibility <= 1e-8);
    }

    #[test]
    fn lp_strong_duality(
        a in prop::collection::vec(-1.0f64..1.0, 12),
        x0 in prop::collection::vec(0.0f64..1.0, 4),
        c in prop::collection::vec(0.1f64..2.0, 4),
        slack in prop::collection::vec(0.0f64..0.5, 2),
    ) {
        let mut lp = LpProblem::new(Sense::Minimize, c);
        let row = |r: usize| a[4 * r..4 * r + 4].to_vec();
        let at = |r: &[f64]| r.iter().zip(&x0).map(|(u, v)| u * v).sum::<f64>();
        lp.add_eq(&row(0), at(&row(0)));
        for (k, s) in slack.iter().enumerate() {
            lp.add_ge(&row(k + 1), at(&row(k + 1)) - s);
        }
        let sol = solve_lp(&lp).unwrap();
        prop_assert!(sol.is_optimal());
        let gap = (sol.objective - sol.dual_objective(&lp)).abs();
        prop_assert!(gap <= 1e-8 * (1.0 + sol.objective.abs()), "gap {}", gap);
    }
}
