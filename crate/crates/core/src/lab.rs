//! Lie algebra bundles as frame fields with `Aut(g)`-valued transitions.
//!
//! `L` is modeled as a trivial vector bundle with global fiber coordinates.
//! A chart frame `φ_α(x)` maps `g`-coordinates to fiber coordinates, so a
//! section has local representatives `u_α = φ_α⁻¹ u`, and on an overlap
//! `u_β = φ_αβ u_α` with `φ_αβ(x) = φ_β(y)⁻¹ φ_α(x)`, `y` the image of `x`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chartman::{AffineMap, ChartedManifold, FrameField};
use crate::error::{input, Error, Result};
use crate::liealg::{AutMatrix, LieAlgebra, Verdict};
use crate::{Tolerances, ValidationReport};

#[derive(Debug, Clone, PartialEq)]
pub struct Trivialization {
    pub algebra: LieAlgebra,
    pub manifold: ChartedManifold,
    pub frames: FrameField,
    /// `transitions[k][p]`: transition of overlap `k` at region node `p`.
    pub transitions: Vec<Vec<AutMatrix>>,
}

fn invert(m: &DMatrix<f64>, what: impl FnOnce() -> String) -> Result<DMatrix<f64>> {
    let scale = m.norm().max(1.0);
    match m.clone().try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) && m.clone().determinant().abs() > 1e-12 * scale.powi(m.nrows() as i32) => Ok(inv),
        _ => input(format!("singular frame at {}", what())),
    }
}

impl Trivialization {
    /// Builds a trivialization from frames and derives its transitions.
    pub fn new(algebra: LieAlgebra, manifold: ChartedManifold, frames: FrameField) -> Result<Self> {
        manifold.check_shape(&frames, "frames")?;
        let n = algebra.dim();
        for (k, chart) in frames.iter().enumerate() {
            for (i, f) in chart.iter().enumerate() {
                if f.shape() != (n, n) {
                    return input(format!("frame at chart {k} node {i} is {:?}, expected {n}×{n}", f.shape()));
                }
            }
        }
        let mut transitions = Vec::with_capacity(manifold.overlaps.len());
        for (k, o) in manifold.overlaps.iter().enumerate() {
            let bg = manifold.grid(o.beta);
            let mut ts = Vec::with_capacity(o.alpha_nodes.len());
            for (p, &x) in o.alpha_nodes.iter().enumerate() {
                let fb = match o.beta_nodes[p] {
                    Some(j) => frames[o.beta][j].clone(),
                    None => bg
                        .interpolate(&frames[o.beta], &o.images[p])
                        .ok_or_else(|| Error::Input(format!("overlap {k}: image outside chart {}", o.beta)))?,
                };
                let fb_inv = invert(&fb, || format!("chart {} near overlap {k} node {p}", o.beta))?;
                ts.push(fb_inv * &frames[o.alpha][x]);
            }
            transitions.push(ts);
        }
        Ok(Self {
            algebra,
            manifold,
            frames,
            transitions,
        })
    }

    /// Identity frames everywhere.
    pub fn identity(algebra: LieAlgebra, manifold: ChartedManifold) -> Self {
        let n = algebra.dim();
        let frames = manifold.sample(|_, _| DMatrix::identity(n, n));
        Self::new(algebra, manifold, frames).expect("identity frames are valid")
    }

    pub fn dim(&self) -> usize {
        self.algebra.dim()
    }

    /// Same algebra and manifold, new frames.
    pub fn with_frames(&self, frames: FrameField) -> Result<Self> {
        Self::new(self.algebra.clone(), self.manifold.clone(), frames)
    }

    /// Inverse frames, node by node.
    pub fn inverse_frames(&self) -> Result<FrameField> {
        self.frames
            .iter()
            .enumerate()
            .map(|(k, c)| {
                c.iter()
                    .enumerate()
                    .map(|(i, f)| invert(f, || format!("chart {k} node {i}")))
                    .collect()
            })
            .collect()
    }
}

fn rel(res: f64, a: &DMatrix<f64>) -> f64 {
    res / a.norm().max(1.0).powi(2)
}

/// Pointwise automorphism and cocycle checks on every overlap.
pub fn validate_lab(t: &Trivialization, tol: &Tolerances) -> ValidationReport {
    let mut report = ValidationReport::new();
    let m = &t.manifold;
    let g = &t.algebra;
    for (k, o) in m.overlaps.iter().enumerate() {
        for (p, a) in t.transitions[k].iter().enumerate() {
            let res = rel(g.automorphism_residual(a), a);
            report.check("automorphism", res, tol.alg, || {
                format!("overlap {k} chart {} node {}", o.alpha, o.alpha_nodes[p])
            });
            let det = a.clone().determinant().abs();
            report.check("singularity", if det > tol.alg { 0.0 } else { 1.0 }, 0.5, || {
                format!("overlap {k} chart {} node {}", o.alpha, o.alpha_nodes[p])
            });
        }
    }
    for (k1, o1) in m.overlaps.iter().enumerate() {
        for (k2, o2) in m.overlaps.iter().enumerate() {
            if o2.alpha != o1.beta || o2.beta == o1.alpha {
                continue;
            }
            for (p, y) in o1.images.iter().enumerate() {
                let Some(p_bg) = o2.region_grid.interpolate(&t.transitions[k2], y) else {
                    continue;
                };
                let x = o1.alpha_nodes[p];
                let Some((k3, p3)) = m
                    .overlaps
                    .iter()
                    .enumerate()
                    .filter(|(_, o3)| o3.alpha == o1.alpha && o3.beta == o2.beta)
                    .find_map(|(k3, o3)| o3.position[x].map(|p3| (k3, p3)))
                else {
                    continue;
                };
                let lhs = p_bg * &t.transitions[k1][p];
                let rhs = &t.transitions[k3][p3];
                let res = (&lhs - rhs).norm() / rhs.norm().max(1.0);
                report.check("cocycle", res, 10.0 * tol.alg, || {
                    format!("overlaps {k1}, {k2}, {k3} chart {} node {x}", o1.alpha)
                });
            }
        }
    }
    report
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VerdictCounts {
    pub inner: usize,
    pub outer: usize,
    pub undecided: usize,
}

impl VerdictCounts {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Inner => self.inner += 1,
            Verdict::Outer => self.outer += 1,
            Verdict::Undecided => self.undecided += 1,
        }
    }
}

/// Continuity verdicts on one connected region (an overlap or a chart).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionDelta {
    pub id: usize,
    pub max_inner_residual: f64,
    pub counts: VerdictCounts,
    /// Worst pointwise automorphism residual; only filled by equivalence checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub automorphism_residual: Option<f64>,
}

/// Result of an `Aut^δ` continuity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    pub passed: bool,
    /// Some verdict was undecided (the check is inconclusive, not refuted).
    pub undecided: bool,
    pub regions: Vec<RegionDelta>,
}

impl DeltaReport {
    fn from_regions(regions: Vec<RegionDelta>, aut_ok: bool) -> Self {
        let undecided = regions.iter().any(|r| r.counts.undecided > 0);
        let outer = regions.iter().any(|r| r.counts.outer > 0);
        Self {
            passed: aut_ok && !undecided && !outer,
            undecided,
            regions,
        }
    }

    pub fn outer_count(&self) -> usize {
        self.regions.iter().map(|r| r.counts.outer).sum()
    }

    pub fn undecided_count(&self) -> usize {
        self.regions.iter().map(|r| r.counts.undecided).sum()
    }

    pub fn max_inner_residual(&self) -> f64 {
        self.regions.iter().map(|r| r.max_inner_residual).fold(0.0, f64::max)
    }
}

/// Tests that the outer class of each transition is constant on each overlap
/// component: every `φ_αβ(x) φ_αβ(x₀)⁻¹` must be inner.
pub fn check_delta_continuity(t: &Trivialization, tol: &Tolerances) -> Result<DeltaReport> {
    let g = &t.algebra;
    let mut regions = Vec::with_capacity(t.transitions.len());
    for (k, ts) in t.transitions.iter().enumerate() {
        let base_inv = invert(&ts[0], || format!("overlap {k} base node"))?;
        let mut entry = RegionDelta {
            id: k,
            max_inner_residual: 0.0,
            counts: VerdictCounts::default(),
            automorphism_residual: None,
        };
        for (p, a) in ts.iter().enumerate() {
            let v = g
                .is_inner(&(a * &base_inv), tol)
                .map_err(|e| Error::Precondition(format!("overlap {k} node {p}: {e}")))?;
            entry.max_inner_residual = entry.max_inner_residual.max(v.residual);
            entry.counts.add(v.verdict);
        }
        regions.push(entry);
    }
    Ok(DeltaReport::from_regions(regions, true))
}

/// Parent of a node in the row-major spanning tree of the grid: the previous
/// node along the last axis that is not at its start.
fn tree_parent(shape: &[usize], idx: usize) -> Option<usize> {
    let mut stride = 1;
    for &n in shape.iter().rev() {
        if (idx / stride) % n > 0 {
            return Some(idx - stride);
        }
        stride *= n;
    }
    None
}

/// Equivalence of two trivializations over one cover: `φ'_α⁻¹ φ_α` must be
/// an `Aut^δ`-continuous automorphism field on every chart.
pub fn trivializations_equivalent(a: &Trivialization, b: &Trivialization, tol: &Tolerances) -> Result<DeltaReport> {
    if a.algebra != b.algebra {
        return input("trivializations have different algebras");
    }
    if a.manifold != b.manifold {
        return input("trivializations are over different covers");
    }
    let g = &a.algebra;
    let b_inv = b.inverse_frames()?;
    let mut regions = Vec::with_capacity(a.frames.len());
    let mut aut_ok = true;
    for (k, chart) in a.manifold.charts.iter().enumerate() {
        let ratios: Vec<DMatrix<f64>> = (0..chart.grid.len()).map(|i| &b_inv[k][i] * &a.frames[k][i]).collect();
        let mut entry = RegionDelta {
            id: k,
            max_inner_residual: 0.0,
            counts: VerdictCounts::default(),
            automorphism_residual: Some(0.0),
        };
        let mut worst_aut = 0.0f64;
        for r in &ratios {
            worst_aut = worst_aut.max(rel(g.automorphism_residual(r), r));
        }
        entry.automorphism_residual = Some(worst_aut);
        if !(worst_aut <= tol.trans) {
            aut_ok = false;
            regions.push(entry);
            continue;
        }
        for i in 0..ratios.len() {
            let Some(parent) = tree_parent(chart.grid.shape(), i) else {
                continue;
            };
            let parent_inv = invert(&ratios[parent], || format!("chart {k} node {parent}"))?;
            let v = g
                .is_inner(&(&ratios[i] * parent_inv), tol)
                .map_err(|e| Error::Precondition(format!("chart {k} node {i}: {e}")))?;
            entry.max_inner_residual = entry.max_inner_residual.max(v.residual);
            entry.counts.add(v.verdict);
        }
        regions.push(entry);
    }
    Ok(DeltaReport::from_regions(regions, aut_ok))
}

/// A smooth map given chartwise: source chart `α` goes into target chart
/// `charts[α].0` by the affine map `charts[α].1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothMapSpec {
    pub source: ChartedManifold,
    pub charts: Vec<(usize, AffineMap)>,
}

impl SmoothMapSpec {
    pub fn identity(m: &ChartedManifold) -> Self {
        Self {
            source: m.clone(),
            charts: (0..m.charts.len()).map(|k| (k, AffineMap::identity(m.dim))).collect(),
        }
    }

    /// Checks that images stay in their target charts and that the chart
    /// maps agree on source overlaps.
    pub fn check(&self, target: &ChartedManifold) -> Result<()> {
        let src = &self.source;
        if self.charts.len() != src.charts.len() {
            return input(format!("map has {} chart maps, source has {} charts", self.charts.len(), src.charts.len()));
        }
        for (k, (tc, f)) in self.charts.iter().enumerate() {
            if *tc >= target.charts.len() {
                return input(format!("chart map {k}: no target chart {tc}"));
            }
            if f.matrix.shape() != (target.dim, src.dim) || f.offset.len() != target.dim {
                return input(format!("chart map {k}: expected a {}×{} affine map", target.dim, src.dim));
            }
            let g = src.grid(k);
            for i in 0..g.len() {
                if !target.grid(*tc).contains(&f.apply(&g.point(i)), 1e-9) {
                    return input(format!("chart map {k}: node {i} lands outside target chart {tc}"));
                }
            }
        }
        for (k, o) in src.overlaps.iter().enumerate() {
            let (ta, fa) = &self.charts[o.alpha];
            let (tb, fb) = &self.charts[o.beta];
            for (p, &x) in o.alpha_nodes.iter().enumerate() {
                let ia = fa.apply(&src.grid(o.alpha).point(x));
                let ib = fb.apply(&o.images[p]);
                let ok = if ta == tb {
                    (&ia - &ib).norm() <= 1e-9
                } else {
                    target.overlaps.iter().any(|to| {
                        to.alpha == *ta && to.beta == *tb && to.region_grid.contains(&ia, 1e-9) && (to.map.apply(&ia) - &ib).norm() <= 1e-9
                    })
                };
                if !ok {
                    return input(format!("map is not chart-compatible on source overlap {k}"));
                }
            }
        }
        Ok(())
    }
}

/// Pulls frames back along `f` by evaluating target frames at image points.
pub fn pullback_lab(t: &Trivialization, f: &SmoothMapSpec) -> Result<Trivialization> {
    f.check(&t.manifold)?;
    let frames = f.source.sample(|k, p| {
        let (tc, map) = &f.charts[k];
        t.manifold
            .grid(*tc)
            .interpolate(&t.frames[*tc], &map.apply(p))
            .expect("checked image")
    });
    Trivialization::new(t.algebra.clone(), f.source.clone(), frames)
}
