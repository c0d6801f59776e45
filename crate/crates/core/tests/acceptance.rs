//! Acceptance criteria 1 to 9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use algebroid::bracket::{axiom_report, default_margin, SectionSampler};
use algebroid::chartman::{
    lie_bracket_fields, partition_of_unity, partition_of_unity_with, segment_path, BumpProfile, Grid,
};
use algebroid::connection::{accordance, curvature, pullback_connection, random_covariant_form, shift_by_inner};
use algebroid::correspondence::{
    chain_transport, f_map, parallel_transport, verify_g_well_defined, verify_inverse_bundle,
    verify_inverse_connection,
};
use algebroid::fixtures;
use algebroid::lab::{check_delta_continuity, pullback_lab, validate_lab, Trivialization};
use algebroid::liealg::{validate_algebra, LieAlgebra};
use algebroid::Tolerances;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn couplings() -> impl Iterator<Item = &'static str> {
    fixtures::CONNECTIONS.into_iter().filter(|n| *n != "abelian_nonflat")
}

/// Dimension of `Der(g)` by Gaussian elimination on the `n² × n³` Leibniz system.
fn derivation_dim_oracle(g: &LieAlgebra) -> usize {
    let n = g.dim();
    let var = |row: usize, col: usize| row * n + col;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut eq = vec![0.0; n * n];
                for m in 0..n {
                    eq[var(k, m)] += g.c(i, j, m);
                    eq[var(m, i)] -= g.c(m, j, k);
                    eq[var(m, j)] -= g.c(i, m, k);
                }
                rows.push(eq);
            }
        }
    }
    let cols = n * n;
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows.len()).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs())) else {
            break;
        };
        if rows[p][col].abs() < 1e-10 {
            continue;
        }
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for r in rows.iter_mut().skip(rank + 1) {
            let f = r[col] / pivot[col];
            if f != 0.0 {
                for (x, y) in r.iter_mut().zip(&pivot) {
                    *x -= f * y;
                }
            }
        }
        rank += 1;
    }
    cols - rank
}

fn criterion_1(tol: &Tolerances) -> Outcome {
    // abelian2, so3, aff1, heis3: values produced by the oracle above.
    let frozen = [4, 3, 2, 6];
    for (name, expected) in fixtures::ALGEBRAS.into_iter().zip(frozen) {
        let g = fixtures::algebra(name).unwrap();
        let v = validate_algebra(&g, 1e-12);
        ensure(v.passed, format!("{name} fails validation: {:?}", v.residuals))?;
        let oracle = derivation_dim_oracle(&g);
        ensure(oracle == expected, format!("{name}: oracle gives {oracle}, frozen {expected}"))?;
        let got = g.derivations_basis().len();
        ensure(got == oracle, format!("{name}: derivations_basis has {got}, oracle {oracle}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let g = fixtures::algebra(fixtures::ALGEBRAS[trial % 4]).unwrap();
        let basis = g.derivations_basis();
        let n = g.dim();
        let d = basis.iter().fold(DMatrix::zeros(n, n), |acc, b| acc + b * rng.gen_range(-1.0..1.0));
        let a = g.exp_derivation(&d, tol.alg).map_err(|e| e.to_string())?;
        worst = worst.max(g.automorphism_residual(&a));
        ensure(g.is_automorphism(&a, 1e-9), format!("trial {trial} on {}: not an automorphism", g.name()))?;
    }
    Ok(format!("derivation dims 4/3/2/6 match oracle; 1000 exp residual max {worst:.1e}"))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn criterion_2(tol: &Tolerances) -> Outcome {
    let limit = Duration::from_secs(5);
    let varying = fixtures::bundle("circle2_abelian2_varying").unwrap();
    let (r, dt) = timed(|| check_delta_continuity(&varying, tol));
    let r = r.map_err(|e| e.to_string())?;
    ensure(!r.passed && r.outer_count() > 0, "varying abelian transition passed")?;
    ensure(dt <= limit, format!("abelian check took {dt:?}"))?;

    let m = fixtures::circle2(37);
    let frames = m.sample(|k, p| {
        if k == 1 {
            fixtures::so3_exp(&[0.1 * p[0], 0.0, -((3.0 * p[0]).sin() + 0.2)])
        } else {
            DMatrix::identity(3, 3)
        }
    });
    let family = Trivialization::new(LieAlgebra::so3(), m, frames).map_err(|e| e.to_string())?;
    for (name, t) in [("inner family", family), ("cyl2_so3", fixtures::bundle("cyl2_so3").unwrap())] {
        let (r, dt) = timed(|| check_delta_continuity(&t, tol));
        let r = r.map_err(|e| e.to_string())?;
        ensure(r.passed && r.outer_count() == 0, format!("{name}: {} outer verdicts", r.outer_count()))?;
        ensure(dt <= limit, format!("{name} check took {dt:?}"))?;
    }
    Ok(format!("abelian varying fails with {} outer; so3 families pass", r.outer_count()))
}

fn criterion_3(tol: &Tolerances) -> Outcome {
    // R₀₁ = ∂₀ diag(x, 0) = diag(1, 0) everywhere.
    let a = accordance(&fixtures::connection("abelian_nonflat").unwrap(), tol);
    ensure(!a.passed, "abelian non-flat passed accordance")?;
    ensure((a.max_residual - a.max_curvature).abs() <= 1e-12, "residual differs from max ‖R‖")?;
    ensure((a.max_residual - 1.0).abs() <= 1e-12, format!("residual {} instead of 1", a.max_residual))?;
    let s = accordance(&fixtures::connection("disk2d_so3_nonflat").unwrap(), tol);
    ensure(s.passed && s.max_residual <= 1e-8, format!("so3 residual {:.3e}", s.max_residual))?;
    Ok(format!("abelian residual {} = max ‖R‖; so3 residual {:.1e}", a.max_residual, s.max_residual))
}

fn criterion_4(tol: &Tolerances) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for name in couplings() {
        let c = fixtures::connection(name).unwrap();
        let h = partition_of_unity(&c.bundle.manifold).map_err(|e| e.to_string())?;
        for trial in 0..20 {
            let l = random_covariant_form(&c.bundle, &h, &mut rng, 0.3);
            let shifted = shift_by_inner(&c, &l, tol).map_err(|e| format!("{name}: {e}"))?;
            let r = accordance(&shifted, tol).max_residual;
            worst = worst.max(r);
            ensure(r <= tol.acc, format!("{name} trial {trial}: residual {r:.3e}"))?;
        }
    }
    Ok(format!("20 shifts on each of 6 couplings, residual max {worst:.1e}"))
}

fn criterion_5(tol: &Tolerances) -> Outcome {
    let mut worst = 0.0f64;
    for name in couplings() {
        let f = f_map(&fixtures::connection(name).unwrap(), tol).map_err(|e| format!("{name}: {e}"))?;
        worst = worst.max(f.transition_aut_residual);
        ensure(f.transition_aut_residual <= 1e-6, format!("{name}: residual {:.3e}", f.transition_aut_residual))?;
        ensure(
            f.delta.outer_count() == 0 && f.delta.undecided_count() == 0,
            format!("{name}: {} outer, {} undecided", f.delta.outer_count(), f.delta.undecided_count()),
        )?;
    }
    Ok(format!("6 couplings, transition residual max {worst:.1e}, no outer or undecided"))
}

fn reframed(t: &Trivialization) -> Trivialization {
    let frames = t
        .frames
        .iter()
        .enumerate()
        .map(|(k, chart)| {
            chart
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let p = t.manifold.grid(k).point(i);
                    let s = p.iter().sum::<f64>();
                    f * fixtures::so3_exp(&[0.3 * s.sin(), 0.1 * k as f64, -0.2 * s])
                })
                .collect()
        })
        .collect();
    t.with_frames(frames).unwrap()
}

fn criterion_6(tol: &Tolerances) -> Outcome {
    for name in ["circle2_so3_twisted", "cyl2_so3"] {
        let t = fixtures::bundle(name).unwrap();
        let h1 = partition_of_unity(&t.manifold).map_err(|e| e.to_string())?;
        let h2 = partition_of_unity_with(&t.manifold, BumpProfile { power: 2.0, margin: 3 }).map_err(|e| e.to_string())?;
        let same = verify_g_well_defined(&t, &t, &h1, &h2, tol).map_err(|e| e.to_string())?;
        ensure(same.passed, format!("{name}: partitions disagree by {:.3e}", same.residual))?;
        let other = reframed(&t);
        let re = verify_g_well_defined(&t, &other, &h1, &h2, tol).map_err(|e| e.to_string())?;
        ensure(re.passed, format!("{name}: re-framed bundle disagrees by {:.3e}", re.residual))?;
    }
    let mut worst = 0.0f64;
    for (conn, bundle) in [
        ("interval1_so3_conn", "interval1_so3"),
        ("circle2_so3_twisted_conn", "circle2_so3_twisted"),
        ("disk2d_so3_nonflat", "disk2d_so3"),
    ] {
        let c = fixtures::connection(conn).unwrap();
        let h = partition_of_unity(&c.bundle.manifold).map_err(|e| e.to_string())?;
        let r = verify_inverse_connection(&c, &h, tol).map_err(|e| e.to_string())?;
        let res = r.residuals.get("coupling").copied().unwrap_or(f64::INFINITY);
        worst = worst.max(res);
        ensure(r.passed && res <= 1e-4 && r.undecided == 0, format!("{conn}: {r:?}"))?;
        let t = fixtures::bundle(bundle).unwrap();
        let b = verify_inverse_bundle(&t, &h, tol).map_err(|e| e.to_string())?;
        ensure(b.passed && b.undecided == 0, format!("{bundle}: {b:?}"))?;
    }
    Ok(format!("g well defined on 2 bundles; 3 round trips each way, coupling residual max {worst:.1e}"))
}

fn criterion_7(tol: &Tolerances) -> Outcome {
    let sampler = SectionSampler::default();
    let mut leibniz = 0.0f64;
    for name in couplings() {
        let c = fixtures::connection(name).unwrap();
        let curv = curvature(&c);
        let r = axiom_report(&c, &curv, 3, 7, &sampler, default_margin(&c.bundle.manifold)).map_err(|e| e.to_string())?;
        ensure(r.skew == 0.0, format!("{name}: skew residual {:e}", r.skew))?;
        ensure(r.leibniz <= tol.fd, format!("{name}: Leibniz residual {:.3e}", r.leibniz))?;
        leibniz = leibniz.max(r.leibniz);
    }
    let coarse = fixtures::connection_refined("disk2d_so3_nonflat", 0).unwrap();
    let fine = fixtures::connection_refined("disk2d_so3_nonflat", 1).unwrap();
    let margin = default_margin(&coarse.bundle.manifold);
    let jac = |c| -> Result<f64, String> {
        Ok(axiom_report(c, &curvature(c), 3, 11, &sampler, margin).map_err(|e| e.to_string())?.jacobi)
    };
    let (j0, j1) = (jac(&coarse)?, jac(&fine)?);
    let order = (j0 / j1).log2();
    ensure((1.5..=2.5).contains(&order), format!("Jacobi order {order:.2} ({j0:.2e} → {j1:.2e})"))?;
    Ok(format!("skew exact, Leibniz max {leibniz:.1e}, Jacobi order {order:.2}"))
}

/// `exp(−[v]×)` by Rodrigues' formula.
fn rotation_oracle(v: &[f64; 3]) -> DMatrix<f64> {
    let th = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let k = DMatrix::from_row_slice(3, 3, &[0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0]);
    DMatrix::identity(3, 3) - &k * (th.sin() / th) + &k * &k * ((1.0 - th.cos()) / (th * th))
}

fn criterion_8() -> Outcome {
    let v = [0.8, -1.1, 0.6];
    let a = fixtures::so3_ad(&v);
    ensure(
        (&a * DVector::from_vec(vec![0.0, 0.0, 1.0]) - DVector::from_vec(vec![v[1], -v[0], 0.0])).norm() < 1e-15,
        "so3 ad is not the cross product",
    )?;
    let t = fixtures::bundle("interval1_so3").unwrap();
    let m = t.manifold.clone();
    let c = algebroid::connection::ConnectionForm::new(t, vec![vec![vec![a; m.grid(0).len()]]]).unwrap();
    let exact = rotation_oracle(&v);
    let err = |steps| {
        let p = segment_path(&m, 0, &DVector::from_vec(vec![0.0]), &DVector::from_vec(vec![1.0]), steps).unwrap();
        (parallel_transport(&c, &p).unwrap().matrix - &exact).norm()
    };
    let (e8, e16, e32) = (err(8), err(16), err(32));
    for (ratio, what) in [(e8 / e16, "8→16"), (e16 / e32, "16→32")] {
        ensure((12.0..=20.0).contains(&ratio), format!("RK4 ratio {ratio:.2} at {what}"))?;
    }

    let f = |p: &DVector<f64>| (2.0 * p[0]).sin() * (1.5 * p[1]).cos();
    let df = |p: &DVector<f64>| 2.0 * (2.0 * p[0]).cos() * (1.5 * p[1]).cos();
    let fd_err = |n: usize| {
        let g = Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![n, n]);
        let vals: Vec<f64> = (0..g.len()).map(|i| f(&g.point(i))).collect();
        (0..g.len()).map(|i| (g.derivative(&vals, i, 0) - df(&g.point(i))).abs()).fold(0.0, f64::max)
    };
    let fd_order = (fd_err(17) / fd_err(33)).log2();
    ensure((1.5..=2.5).contains(&fd_order), format!("FD order {fd_order:.2}"))?;

    // [X, Y] for X = (sin y, 0), Y = (0, cos x) is (−cos x cos y, −sin x sin y).
    let br_err = |n: usize| {
        let m = fixtures::disk2d(n);
        let x = m.sample(|_, p| DVector::from_vec(vec![p[1].sin(), 0.0]));
        let y = m.sample(|_, p| DVector::from_vec(vec![0.0, p[0].cos()]));
        let b = lie_bracket_fields(&m, &x, &y).unwrap();
        (0..m.grid(0).len())
            .map(|i| {
                let p = m.grid(0).point(i);
                (&b[0][i] - DVector::from_vec(vec![-p[0].cos() * p[1].cos(), -p[0].sin() * p[1].sin()])).norm()
            })
            .fold(0.0, f64::max)
    };
    let br_order = (br_err(17) / br_err(33)).log2();
    ensure((1.5..=2.5).contains(&br_order), format!("bracket FD order {br_order:.2}"))?;
    Ok(format!(
        "RK4 ratios {:.2}, {:.2}; FD orders {fd_order:.2} (derivative), {br_order:.2} (bracket)",
        e8 / e16,
        e16 / e32
    ))
}

fn criterion_9(tol: &Tolerances) -> Outcome {
    let f = fixtures::doubling_spec();
    let t = fixtures::bundle("circle2_so3_twisted").unwrap();
    let p = pullback_lab(&t, &f).map_err(|e| e.to_string())?;
    let v = validate_lab(&p, tol);
    ensure(v.passed, format!("pullback fails validation: {:?}", v.worst))?;
    let mut worst = 0.0f64;
    for name in ["circle2_so3_twisted_conn", "circle2_so3_bump_conn"] {
        let c = fixtures::connection(name).unwrap();
        let pc = pullback_connection(&c, &f).map_err(|e| e.to_string())?;
        let h = chain_transport(&c, &fixtures::circle2_loop(64)).map_err(|e| e.to_string())?;
        let h2 = chain_transport(&pc, &fixtures::circle4_loop(32)).map_err(|e| e.to_string())?;
        let d = (&h2 - &h * &h).norm();
        worst = worst.max(d);
        ensure(d <= 1e-5, format!("{name}: loop transport differs from H² by {d:.3e}"))?;
    }
    Ok(format!("pullback validates; loop transport vs H² max {worst:.1e}"))
}

fn main() {
    let tol = Tolerances::default();
    let criteria: [(&str, Box<dyn Fn() -> Outcome>); 9] = [
        ("algebra kernel", Box::new(|| criterion_1(&tol))),
        ("delta semantics", Box::new(|| criterion_2(&tol))),
        ("coupling condition", Box::new(|| criterion_3(&tol))),
        ("closure under inner shifts", Box::new(|| criterion_4(&tol))),
        ("f map theorem", Box::new(|| criterion_5(&tol))),
        ("g map theorems", Box::new(|| criterion_6(&tol))),
        ("algebroid axioms", Box::new(|| criterion_7(&tol))),
        ("numerics", Box::new(criterion_8)),
        ("pullback", Box::new(|| criterion_9(&tol))),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {} ({name}): {msg} [{secs:.2}s]", i + 1),
            Err(msg) => {
                println!("FAIL criterion {} ({name}): {msg} [{secs:.2}s]", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
