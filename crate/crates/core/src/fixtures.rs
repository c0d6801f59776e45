//! Named fixtures: algebras, manifolds, bundles and connections.

use nalgebra::{DMatrix, DVector};

use crate::chartman::{
    build_manifold, partition_of_unity, AffineMap, ChartSpec, ChartedManifold, ManifoldSpec, OverlapSpec,
};
use crate::connection::ConnectionForm;
use crate::correspondence::{g_map_unchecked, Leg};
use crate::lab::{SmoothMapSpec, Trivialization};
use crate::liealg::LieAlgebra;
use crate::linalg;

pub const ALGEBRAS: [&str; 4] = ["abelian2", "so3", "aff1", "heis3"];
pub const MANIFOLDS: [&str; 5] = ["interval1", "circle2", "disk2d", "cyl2", "circle4"];

pub fn algebra(name: &str) -> Option<LieAlgebra> {
    match name {
        "abelian2" => Some(LieAlgebra::abelian(2)),
        "so3" => Some(LieAlgebra::so3()),
        "aff1" => Some(LieAlgebra::aff1()),
        "heis3" => Some(LieAlgebra::heis3()),
        _ => None,
    }
}

pub fn manifold(name: &str) -> Option<ChartedManifold> {
    match name {
        "interval1" => Some(interval1(33)),
        "circle2" => Some(circle2(37)),
        "disk2d" => Some(disk2d(33)),
        "cyl2" => Some(cyl2(37, 17)),
        "circle4" => Some(circle4(37)),
        _ => None,
    }
}

fn built(spec: ManifoldSpec) -> ChartedManifold {
    build_manifold(&spec).expect("fixture manifold is valid")
}

/// `[0, 1]` with one chart.
pub fn interval1(n: usize) -> ChartedManifold {
    built(ManifoldSpec {
        dim: 1,
        charts: vec![ChartSpec::uniform(&[[0.0, 1.0]], &[n])],
        overlaps: vec![],
    })
}

/// `[−1, 1]²` with one chart.
pub fn disk2d(n: usize) -> ChartedManifold {
    built(ManifoldSpec {
        dim: 2,
        charts: vec![ChartSpec::uniform(&[[-1.0, 1.0], [-1.0, 1.0]], &[n, n])],
        overlaps: vec![],
    })
}

fn circle_overlaps(extra: &[[f64; 2]]) -> Vec<OverlapSpec> {
    let d = 1 + extra.len();
    let region = |r: [f64; 2]| {
        let mut v = vec![r];
        v.extend_from_slice(extra);
        v
    };
    let shift = |s: f64| {
        let mut off = vec![0.0; d];
        off[0] = s;
        AffineMap::translation(&off)
    };
    vec![
        OverlapSpec::new(0, 1, &region([0.5, 0.75]), &shift(-0.5)),
        OverlapSpec::new(0, 1, &region([0.0, 0.25]), &shift(0.5)),
        OverlapSpec::new(1, 0, &region([0.0, 0.25]), &shift(0.5)),
        OverlapSpec::new(1, 0, &region([0.5, 0.75]), &shift(-0.5)),
    ]
}

/// Unit-circumference circle from two arcs of length 3/4; chart 0 has
/// angle `s`, chart 1 has angle `t + 1/2`. `n − 1` must be a multiple of 12.
pub fn circle2(n: usize) -> ChartedManifold {
    built(ManifoldSpec {
        dim: 1,
        charts: vec![ChartSpec::uniform(&[[0.0, 0.75]], &[n]); 2],
        overlaps: circle_overlaps(&[]),
    })
}

/// `circle2 × [0, 1]`.
pub fn cyl2(n: usize, ny: usize) -> ChartedManifold {
    built(ManifoldSpec {
        dim: 2,
        charts: vec![ChartSpec::uniform(&[[0.0, 0.75], [0.0, 1.0]], &[n, ny]); 2],
        overlaps: circle_overlaps(&[[0.0, 1.0]]),
    })
}

/// Unit circle from four arcs `[k/4, k/4 + 3/8]`; used as the source of the
/// doubling map onto `circle2`.
pub fn circle4(n: usize) -> ChartedManifold {
    let charts = (0..4)
        .map(|k| {
            let lo = k as f64 / 4.0;
            ChartSpec::uniform(&[[lo, lo + 0.375]], &[n])
        })
        .collect();
    let mut overlaps = Vec::new();
    for k in 0..4 {
        let next = (k + 1) % 4;
        let lo = k as f64 / 4.0 + 0.25;
        let wrap = if next == 0 { -1.0 } else { 0.0 };
        overlaps.push(OverlapSpec::new(k, next, &[[lo, lo + 0.125]], &AffineMap::translation(&[wrap])));
        overlaps.push(OverlapSpec::new(
            next,
            k,
            &[[lo + wrap, lo + 0.125 + wrap]],
            &AffineMap::translation(&[-wrap]),
        ));
    }
    built(ManifoldSpec { dim: 1, charts, overlaps })
}

/// Chart map of the doubling `θ ↦ 2θ` from `circle4` chart `k` into `circle2`.
pub fn doubling_map(k: usize) -> (usize, AffineMap) {
    let offsets = [0.0, -0.5, -1.0, -1.5];
    (
        k % 2,
        AffineMap {
            matrix: DMatrix::from_element(1, 1, 2.0),
            offset: DVector::from_element(1, offsets[k]),
        },
    )
}

pub const BUNDLES: [&str; 7] = [
    "interval1_so3",
    "circle2_so3_twisted",
    "circle2_abelian2_varying",
    "circle2_heis3",
    "disk2d_so3",
    "disk2d_abelian2",
    "cyl2_so3",
];

/// The doubling map `circle4 → circle2`.
pub fn doubling_spec() -> SmoothMapSpec {
    SmoothMapSpec {
        source: circle4(37),
        charts: (0..4).map(doubling_map).collect(),
    }
}

/// C^∞ step: 0 for `t ≤ a`, 1 for `t ≥ b`.
pub fn smooth_step(t: f64, a: f64, b: f64) -> f64 {
    let f = |u: f64| if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() };
    let u = (t - a) / (b - a);
    let (p, q) = (f(u), f(1.0 - u));
    p / (p + q)
}

/// `exp(ad v)` in `so(3)`.
pub fn so3_exp(v: &[f64; 3]) -> DMatrix<f64> {
    linalg::expm(&so3_ad(v))
}

pub fn so3_ad(v: &[f64; 3]) -> DMatrix<f64> {
    LieAlgebra::so3().ad(&DVector::from_column_slice(v)).expect("dimension 3")
}

pub const TWIST: [f64; 3] = [0.4, -0.7, 1.1];

/// Value of the non-identity transition of `circle2_so3_twisted`.
pub fn twist_automorphism() -> DMatrix<f64> {
    so3_exp(&TWIST)
}

fn scaled(v: &[f64; 3], s: f64) -> [f64; 3] {
    [v[0] * s, v[1] * s, v[2] * s]
}

pub fn bundle(name: &str) -> Option<Trivialization> {
    bundle_refined(name, 0)
}

/// `n` nodes per axis after `r` grid halvings of `n0`.
fn res(n0: usize, r: u32) -> usize {
    (n0 - 1) * (1 << r) + 1
}

/// A bundle fixture with its grid spacing halved `r` times.
pub fn bundle_refined(name: &str, r: u32) -> Option<Trivialization> {
    let built = |g: LieAlgebra, m: ChartedManifold, f: &dyn Fn(usize, &DVector<f64>) -> DMatrix<f64>| {
        let frames = m.sample(f);
        Trivialization::new(g, m, frames).expect("fixture bundle is valid")
    };
    let t = match name {
        "interval1_so3" => Trivialization::identity(LieAlgebra::so3(), interval1(res(33, r))),
        "disk2d_abelian2" => Trivialization::identity(LieAlgebra::abelian(2), disk2d(res(33, r))),
        // Chart 1 unwinds the twist between the two overlaps, so the
        // transition is the identity on one and `exp(ad TWIST)` on the other.
        "circle2_so3_twisted" => built(LieAlgebra::so3(), circle2(res(37, r)), &|k, p| {
            if k == 0 {
                DMatrix::identity(3, 3)
            } else {
                so3_exp(&scaled(&TWIST, -smooth_step(p[0], 0.25, 0.5)))
            }
        }),
        "circle2_abelian2_varying" => built(LieAlgebra::abelian(2), circle2(res(37, r)), &|k, p| {
            let s = if k == 0 { 0.0 } else { smooth_step(p[0], 0.5, 0.75) };
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / (1.0 + s), 1.0]))
        }),
        "circle2_heis3" => {
            let g = LieAlgebra::heis3();
            built(g.clone(), circle2(res(37, r)), &|k, p| {
                if k == 0 {
                    DMatrix::identity(3, 3)
                } else {
                    let s = smooth_step(p[0], 0.25, 0.5);
                    let q = DVector::from_vec(vec![0.3 * s, -0.5 * s + 0.1 * (6.0 * p[0]).sin(), 0.2]);
                    linalg::expm(&-g.ad(&q).expect("dimension 3"))
                }
            })
        }
        "disk2d_so3" => built(LieAlgebra::so3(), disk2d(res(33, r)), &|_, p| {
            so3_exp(&[0.3 * p[0], 0.2 * p[1], 0.1 * p[0] * p[1]])
        }),
        "cyl2_so3" => built(LieAlgebra::so3(), cyl2(res(37, r), res(17, r)), &|k, p| {
            if k == 0 {
                DMatrix::identity(3, 3)
            } else {
                let s = smooth_step(p[0], 0.25, 0.5);
                let mut q = scaled(&TWIST, -s);
                q[0] -= 0.2 * p[1];
                so3_exp(&q)
            }
        }),
        _ => return None,
    };
    Some(t)
}

pub const CONNECTIONS: [&str; 7] = [
    "interval1_so3_conn",
    "circle2_so3_twisted_conn",
    "circle2_so3_bump_conn",
    "circle2_heis3_conn",
    "cyl2_so3_conn",
    "disk2d_so3_nonflat",
    "abelian_nonflat",
];

/// Bundle each connection fixture lives on.
pub fn connection_bundle(name: &str) -> Option<&'static str> {
    Some(match name {
        "interval1_so3_conn" => "interval1_so3",
        "circle2_so3_twisted_conn" | "circle2_so3_bump_conn" => "circle2_so3_twisted",
        "circle2_heis3_conn" => "circle2_heis3",
        "cyl2_so3_conn" => "cyl2_so3",
        "disk2d_so3_nonflat" => "disk2d_so3",
        "abelian_nonflat" => "disk2d_abelian2",
        _ => return None,
    })
}

fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

pub const BUMP_AXIS: [f64; 3] = [0.9, 2.1, -1.3];

pub fn connection(name: &str) -> Option<ConnectionForm> {
    connection_refined(name, 0)
}

/// A connection fixture with its grid spacing halved `r` times.
pub fn connection_refined(name: &str, r: u32) -> Option<ConnectionForm> {
    let t = bundle_refined(connection_bundle(name)?, r)?;
    let from = |t: Trivialization, f: &dyn Fn(usize, usize, &DVector<f64>) -> DMatrix<f64>| {
        let m = t.manifold.clone();
        let omega = (0..m.charts.len())
            .map(|k| (0..m.dim).map(|i| (0..m.grid(k).len()).map(|x| f(k, i, &m.grid(k).point(x))).collect()).collect())
            .collect();
        ConnectionForm::new(t, omega).expect("fixture connection is valid")
    };
    let c = match name {
        "interval1_so3_conn" => from(t, &|_, _, p| so3_ad(&[0.3 * p[0].cos(), 0.5 * p[0], 0.2])),
        "circle2_so3_twisted_conn" => ConnectionForm::zero(t),
        // Curvature-free but with holonomy: supported strictly inside chart 0.
        "circle2_so3_bump_conn" => from(t, &|k, _, p| {
            if k == 0 {
                so3_ad(&scaled(&BUMP_AXIS, bump((p[0] - 0.375) / 0.1)))
            } else {
                DMatrix::zeros(3, 3)
            }
        }),
        "disk2d_so3_nonflat" => from(t, &|_, i, p| {
            let (x, y) = (p[0], p[1]);
            if i == 0 {
                so3_ad(&[0.3 * y, 0.2, 0.1 * x * y])
            } else {
                so3_ad(&[0.1, 0.4 * x, 0.2 * x.sin()])
            }
        }),
        "abelian_nonflat" => from(t, &|_, i, p| {
            if i == 0 {
                DMatrix::zeros(2, 2)
            } else {
                DMatrix::from_diagonal(&DVector::from_vec(vec![p[0], 0.0]))
            }
        }),
        "circle2_heis3_conn" | "cyl2_so3_conn" => {
            let h = partition_of_unity(&t.manifold).expect("fixture cover");
            g_map_unchecked(&t, &h).expect("fixture connection is valid")
        }
        _ => return None,
    };
    Some(c)
}

/// Closed loop once around `circle2` based at `s = 1/8` in chart 0, increasing.
pub fn circle2_loop(steps: usize) -> Vec<Leg> {
    vec![
        Leg::new(0, &[0.125], &[0.625], steps),
        Leg::new(1, &[0.125], &[0.625], steps),
        Leg::new(0, &[0.125], &[0.125], 1),
    ]
}

/// Loop around `circle2` starting at `s = 5/8` in chart 0, decreasing; its
/// holonomy for the flat twisted fixture is the twist itself.
pub fn circle2_loop_reversed() -> Vec<Leg> {
    vec![Leg::new(0, &[0.625], &[0.125], 64), Leg::new(1, &[0.625], &[0.125], 64)]
}

/// Closed loop once around `circle4` based at `θ = 1/16` in chart 0; its
/// image under the doubling map winds twice around [`circle2_loop`].
pub fn circle4_loop(steps: usize) -> Vec<Leg> {
    let mut legs: Vec<Leg> = (0..4)
        .map(|k| {
            let lo = k as f64 / 4.0 + 0.0625;
            Leg::new(k, &[lo], &[lo + 0.25], steps)
        })
        .collect();
    legs.push(Leg::new(0, &[0.0625], &[0.0625], 1));
    legs
}
