use algebroid::chartman::{partition_of_unity, ray_path, segment_path};
use algebroid::connection::{
    accordance, coupling_equivalent, curvature, curvature_covariance_residual, random_covariant_form, shift_by_inner,
    ConnectionForm,
};
use algebroid::correspondence::{
    f_map, g_map, parallel_transport, verify_inverse_bundle, verify_inverse_connection,
};
use algebroid::fixtures;
use algebroid::lab::{check_delta_continuity, pullback_lab, trivializations_equivalent, validate_lab, Trivialization};
use algebroid::Tolerances;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn couplings() -> impl Iterator<Item = &'static str> {
    fixtures::CONNECTIONS.into_iter().filter(|n| *n != "abelian_nonflat")
}

fn delta_bundles() -> impl Iterator<Item = &'static str> {
    fixtures::BUNDLES.into_iter().filter(|n| *n != "circle2_abelian2_varying")
}

/// Right-multiplies every frame by a smooth inner family, or by a constant
/// diagonal automorphism for abelian fibers.
fn reframe(t: &Trivialization) -> Trivialization {
    let g = &t.algebra;
    let frames = t
        .frames
        .iter()
        .enumerate()
        .map(|(k, chart)| {
            chart
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    if g.is_abelian() {
                        return f * DMatrix::from_fn(g.dim(), g.dim(), |r, c| if r == c { 2.0 + r as f64 } else { 0.0 });
                    }
                    let p = t.manifold.grid(k).point(i);
                    let s: f64 = p.iter().sum();
                    let x = DVector::from_fn(g.dim(), |j, _| 0.2 * (s + j as f64 + k as f64).sin());
                    f * algebroid::linalg::expm(&g.ad(&x).unwrap())
                })
                .collect()
        })
        .collect();
    t.with_frames(frames).unwrap()
}

#[test]
fn fixture_bundles_validate_tightly() {
    let strict = Tolerances { alg: 1e-8, ..tol() };
    for name in fixtures::BUNDLES {
        let r = validate_lab(&fixtures::bundle(name).unwrap(), &strict);
        assert!(r.passed, "{name}: {:?}", r.residuals);
    }
}

#[test]
fn delta_verdict_is_invariant_under_equivalence() {
    for name in fixtures::BUNDLES {
        let t = fixtures::bundle(name).unwrap();
        let t2 = reframe(&t);
        assert!(trivializations_equivalent(&t, &t2, &tol()).unwrap().passed, "{name}");
        let (a, b) = (check_delta_continuity(&t, &tol()).unwrap(), check_delta_continuity(&t2, &tol()).unwrap());
        assert_eq!(a.passed, b.passed, "{name}");
    }
}

#[test]
fn pullback_preserves_validity() {
    let f = fixtures::doubling_spec();
    for name in ["circle2_so3_twisted", "circle2_heis3", "circle2_abelian2_varying"] {
        let t = fixtures::bundle(name).unwrap();
        let p = pullback_lab(&t, &f).unwrap();
        assert!(validate_lab(&p, &tol()).passed, "{name}");
        assert_eq!(
            check_delta_continuity(&p, &tol()).unwrap().passed,
            check_delta_continuity(&t, &tol()).unwrap().passed,
            "{name}"
        );
    }
}

#[test]
fn curvature_is_gauge_covariant_on_fixtures() {
    for name in fixtures::CONNECTIONS {
        let c = fixtures::connection(name).unwrap();
        let r = curvature_covariance_residual(&c, &curvature(&c));
        assert!(r <= tol().gauge, "{name}: {r:e}");
    }
}

#[test]
fn coupling_equivalence_is_an_equivalence_relation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let loose = Tolerances { acc: 2.0 * tol().acc, ..tol() };
    for name in couplings() {
        let a = fixtures::connection(name).unwrap();
        let h = partition_of_unity(&a.bundle.manifold).unwrap();
        let b = shift_by_inner(&a, &random_covariant_form(&a.bundle, &h, &mut rng, 0.3), &tol()).unwrap();
        let c = shift_by_inner(&b, &random_covariant_form(&a.bundle, &h, &mut rng, 0.3), &tol()).unwrap();
        assert!(coupling_equivalent(&a, &a, &tol()).unwrap().passed, "{name} reflexive");
        assert!(coupling_equivalent(&a, &b, &tol()).unwrap().passed, "{name}");
        assert!(coupling_equivalent(&b, &a, &tol()).unwrap().passed, "{name} symmetric");
        assert!(coupling_equivalent(&b, &c, &tol()).unwrap().passed, "{name}");
        assert!(coupling_equivalent(&a, &c, &loose).unwrap().passed, "{name} transitive");
        assert!(accordance(&c, &tol()).passed, "{name}");
    }
}

#[test]
fn abelian_accordance_is_flatness() {
    let t = fixtures::bundle("disk2d_abelian2").unwrap();
    let m = t.manifold.clone();
    // ω = d(xy)·diag(1, 0) is closed; ω = x dy·diag(1, 0) is not.
    let closed: Vec<Vec<Vec<DMatrix<f64>>>> = vec![(0..2)
        .map(|i| {
            (0..m.grid(0).len())
                .map(|x| {
                    let p = m.grid(0).point(x);
                    DMatrix::from_diagonal(&DVector::from_vec(vec![if i == 0 { p[1] } else { p[0] }, 0.0]))
                })
                .collect()
        })
        .collect()];
    let flat = ConnectionForm::new(t, closed).unwrap();
    let a = accordance(&flat, &tol());
    assert!(a.passed && a.max_curvature <= tol().acc, "{a:?}");
    let b = accordance(&fixtures::connection("abelian_nonflat").unwrap(), &tol());
    assert!(!b.passed && b.max_curvature > tol().acc);
}

#[test]
fn transport_has_the_flow_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in fixtures::CONNECTIONS {
        let c = fixtures::connection(name).unwrap();
        let m = &c.bundle.manifold;
        for _ in 0..50 {
            let k = rng.gen_range(0..m.charts.len());
            let node = rng.gen_range(0..m.grid(k).len());
            let full = parallel_transport(&c, &ray_path(m, k, node, 64).unwrap()).unwrap().matrix;
            let start = m.charts[k].center_point();
            let end = m.grid(k).point(node);
            let mid = (&start + &end) * 0.5;
            let a = parallel_transport(&c, &segment_path(m, k, &start, &mid, 32).unwrap()).unwrap().matrix;
            let b = parallel_transport(&c, &segment_path(m, k, &mid, &end, 32).unwrap()).unwrap().matrix;
            assert!((b * a - full).norm() <= tol().trans, "{name} chart {k} node {node}");
        }
    }
}

#[test]
fn g_map_gives_couplings_on_delta_bundles() {
    for name in delta_bundles() {
        let t = fixtures::bundle(name).unwrap();
        let c = g_map(&t, &partition_of_unity(&t.manifold).unwrap(), &tol()).unwrap();
        let a = accordance(&c, &tol());
        assert!(a.passed, "{name}: {:e}", a.max_residual);
    }
    let varying = fixtures::bundle("circle2_abelian2_varying").unwrap();
    assert!(g_map(&varying, &partition_of_unity(&varying.manifold).unwrap(), &tol()).is_err());
}

#[test]
fn f_map_output_validates_at_transport_accuracy() {
    for name in couplings() {
        let f = f_map(&fixtures::connection(name).unwrap(), &tol()).unwrap();
        assert!(f.theorem_holds, "{name}");
        let r = validate_lab(&f.trivialization, &Tolerances { alg: tol().trans, ..tol() });
        assert!(r.passed, "{name}: {:?}", r.residuals);
    }
}

#[test]
fn round_trips_on_every_fixture() {
    for name in couplings() {
        let c = fixtures::connection(name).unwrap();
        let h = partition_of_unity(&c.bundle.manifold).unwrap();
        let r = verify_inverse_connection(&c, &h, &tol()).unwrap();
        assert!(r.passed || r.inconclusive, "{name}: {r:?}");
        assert_eq!(r.inconclusive, r.undecided > 0, "{name}");
    }
    for name in delta_bundles() {
        let t = fixtures::bundle(name).unwrap();
        let h = partition_of_unity(&t.manifold).unwrap();
        let r = verify_inverse_bundle(&t, &h, &tol()).unwrap();
        assert!(r.passed || r.inconclusive, "{name}: {r:?}");
    }
}

#[test]
fn non_couplings_are_refused_not_failed_silently() {
    let c = fixtures::connection("abelian_nonflat").unwrap();
    let h = partition_of_unity(&c.bundle.manifold).unwrap();
    let r = verify_inverse_connection(&c, &h, &tol()).unwrap();
    assert!(!r.passed && !r.inconclusive);
    assert!(r.reason.unwrap().contains("not a coupling"));
}
