use algebroid::chartman::{partition_of_unity, Grid};
use algebroid::fixtures;
use algebroid::liealg::{LieAlgebra, Verdict};
use algebroid::linalg::{self, principal_log};
use algebroid::Tolerances;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn algebra_strategy() -> impl Strategy<Value = LieAlgebra> {
    prop::sample::select(fixtures::ALGEBRAS.to_vec()).prop_map(|n| fixtures::algebra(n).unwrap())
}

fn vector(n: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, n).prop_map(DVector::from_vec)
}

fn algebra_and_vectors(scale: f64) -> impl Strategy<Value = (LieAlgebra, DVector<f64>, DVector<f64>)> {
    algebra_strategy().prop_flat_map(move |g| {
        let n = g.dim();
        (Just(g), vector(n, scale), vector(n, scale))
    })
}

fn algebra_and_derivation(radius: f64) -> impl Strategy<Value = (LieAlgebra, DMatrix<f64>)> {
    algebra_strategy().prop_flat_map(move |g| {
        let basis = g.derivations_basis();
        let k = basis.len();
        (Just(g), prop::collection::vec(-1.0..1.0f64, k)).prop_map(move |(g, coeffs)| {
            let n = g.dim();
            let d = basis.iter().zip(&coeffs).fold(DMatrix::zeros(n, n), |acc, (b, c)| acc + b * *c);
            let norm = d.norm();
            let d = if norm > radius { d * (radius / norm) } else { d };
            (g, d)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ad_is_a_homomorphism((g, x, y) in algebra_and_vectors(2.0)) {
        let lhs = g.ad(&g.br(&x, &y)).unwrap();
        let (ax, ay) = (g.ad(&x).unwrap(), g.ad(&y).unwrap());
        prop_assert!((lhs - linalg::commutator(&ax, &ay)).norm() <= 1e-9);
    }

    #[test]
    fn bracket_is_antisymmetric_and_bilinear((g, x, y) in algebra_and_vectors(3.0), s in -2.0..2.0f64) {
        prop_assert!((g.br(&x, &y) + g.br(&y, &x)).norm() <= 1e-12);
        let lhs = g.br(&(&x * s + &y), &y);
        let rhs = g.br(&x, &y) * s;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + x.norm() * y.norm()));
    }

    #[test]
    fn exp_of_derivation_is_automorphism((g, d) in algebra_and_derivation(3.0)) {
        let a = g.exp_derivation(&d, 1e-9).unwrap();
        prop_assert!(g.is_automorphism(&a, 1e-9));
    }

    #[test]
    fn log_inverts_exp_below_pi((g, d) in algebra_and_derivation(2.5)) {
        let a = g.exp_derivation(&d, 1e-9).unwrap();
        let l = principal_log(&a, 1e-10).unwrap();
        prop_assert!((l - d).norm() <= 1e-8);
    }

    #[test]
    fn derivation_residual_sees_perturbations((g, d) in algebra_and_derivation(1.0), eps in 1e-3..1e-1f64) {
        prop_assert!(g.derivation_residual(&d) <= 1e-9);
        if g.dim() > 1 && !g.is_abelian() {
            let n = g.dim();
            let bumped = &d + DMatrix::identity(n, n) * eps;
            // A multiple of the identity is a derivation only of abelian algebras.
            prop_assert!(g.derivation_residual(&bumped) > 1e-9);
        }
    }
}

#[test]
fn inner_span_dimension_matches_center() {
    for name in fixtures::ALGEBRAS {
        let g = fixtures::algebra(name).unwrap();
        let n = g.dim();
        let stacked = DMatrix::from_fn(n * n, n, |r, c| g.ad_basis()[c][(r % n, r / n)]);
        assert_eq!(linalg::rank(&stacked, 1e-9), n - g.center_basis().len(), "{name}");
    }
}

#[test]
fn exponentials_of_ad_are_inner() {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for name in fixtures::ALGEBRAS {
        let g = fixtures::algebra(name).unwrap();
        let mut undecided = 0;
        for _ in 0..200 {
            let mut x = DVector::from_fn(g.dim(), |_, _| rng.gen_range(-1.0..1.0));
            if x.norm() > 1.0 {
                x /= x.norm();
            }
            let a = linalg::expm(&g.ad(&x).unwrap());
            match g.is_inner(&a, &tol).unwrap().verdict {
                Verdict::Inner => {}
                Verdict::Outer => panic!("{name}: exp(ad {x}) judged outer"),
                Verdict::Undecided => undecided += 1,
            }
        }
        assert_eq!(undecided, 0, "{name}");
    }
}

#[test]
fn partitions_sum_to_one_on_every_fixture() {
    for name in fixtures::MANIFOLDS {
        let m = fixtures::manifold(name).unwrap();
        let h = partition_of_unity(&m).unwrap();
        for (k, chart) in m.charts.iter().enumerate() {
            for i in 0..chart.grid.len() {
                let p = chart.grid.point(i);
                // Sum over every chart containing the point, including this one.
                let mut total = h.values[k][i];
                for (_, o) in m.overlaps_from(k) {
                    if o.region_grid.contains(&p, 1e-12) {
                        total += h.evaluate(&m, o.beta, &o.map.apply(&p));
                    }
                }
                assert!((total - 1.0).abs() <= 1e-12, "{name} chart {k} node {i}: {total}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivative_is_exact_on_quadratics(c in prop::collection::vec(-3.0..3.0f64, 6), n in 9usize..20) {
        let g = Grid::new(vec![-1.0, 0.0], vec![1.0, 2.5], vec![n, n + 3]);
        let f = |p: &DVector<f64>| c[0] + c[1] * p[0] + c[2] * p[1] + c[3] * p[0] * p[0] + c[4] * p[0] * p[1] + c[5] * p[1] * p[1];
        let vals: Vec<f64> = (0..g.len()).map(|i| f(&g.point(i))).collect();
        for i in 0..g.len() {
            let p = g.point(i);
            let dx = c[1] + 2.0 * c[3] * p[0] + c[4] * p[1];
            let dy = c[2] + c[4] * p[0] + 2.0 * c[5] * p[1];
            prop_assert!((g.derivative(&vals, i, 0) - dx).abs() <= 1e-10);
            prop_assert!((g.derivative(&vals, i, 1) - dy).abs() <= 1e-10);
        }
    }

    #[test]
    fn derivative_converges_at_second_order(k in 0.5..2.0f64, phase in 0.0..3.0f64) {
        let err = |n: usize| {
            let g = Grid::new(vec![0.0], vec![1.0], vec![n]);
            let vals: Vec<f64> = (0..n).map(|i| (k * g.coord(0, i) + phase).sin()).collect();
            (0..n).map(|i| (g.derivative(&vals, i, 0) - k * (k * g.coord(0, i) + phase).cos()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(33) / err(65);
        prop_assert!((3.5..=4.5).contains(&ratio), "ratio {}", ratio);
    }
}

#[test]
fn overlap_maps_close_around_cycles() {
    for name in ["circle2", "cyl2", "circle4"] {
        let m = fixtures::manifold(name).unwrap();
        for (k, o) in m.overlaps.iter().enumerate() {
            let back = &m.overlaps[m.reverse_of(k).unwrap()];
            for &node in o.alpha_nodes.iter() {
                let p = m.grid(o.alpha).point(node);
                assert!((back.map.apply(&o.map.apply(&p)) - p).norm() <= 1e-12, "{name} overlap {k}");
            }
        }
    }
}
