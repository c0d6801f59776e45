//! Discretized manifolds: atlases of gridded coordinate boxes glued by affine
//! overlap maps, with finite differences, partitions of unity and ray paths.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

pub const DEFAULT_RESOLUTION: usize = 33;
pub const MIN_RESOLUTION: usize = 9;
const GEOM_TOL: f64 = 1e-9;

/// Values that can live on grid nodes and be differenced or interpolated.
pub trait FieldValue: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl FieldValue for f64 {}
impl FieldValue for DVector<f64> {}
impl FieldValue for DMatrix<f64> {}

pub type ScalarField = Vec<Vec<f64>>;
pub type FiberField = Vec<Vec<DVector<f64>>>;
pub type FrameField = Vec<Vec<DMatrix<f64>>>;
pub type TangentField = Vec<Vec<DVector<f64>>>;

/// A uniform tensor-product grid on a coordinate box. Linear node indices are
/// row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    shape: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> Self {
        debug_assert!(lo.len() == hi.len() && lo.len() == shape.len());
        Self { lo, hi, shape }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.shape[axis] - 1) as f64
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            out[axis] = idx % self.shape[axis];
            idx /= self.shape[axis];
        }
        out
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.shape[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.spacing(axis)
        }
    }

    pub fn point(&self, idx: usize) -> DVector<f64> {
        let m = self.multi(idx);
        DVector::from_fn(self.dim(), |a, _| self.coord(a, m[a]))
    }

    pub fn contains(&self, p: &DVector<f64>, tol: f64) -> bool {
        (0..self.dim()).all(|a| p[a] >= self.lo[a] - tol && p[a] <= self.hi[a] + tol)
    }

    /// Distance (in nodes) from the nearest face of the box.
    pub fn boundary_distance(&self, idx: usize) -> usize {
        let m = self.multi(idx);
        (0..self.dim())
            .map(|a| m[a].min(self.shape[a] - 1 - m[a]))
            .min()
            .unwrap_or(0)
    }

    /// The node at `p`, if `p` coincides with one.
    pub fn locate_node(&self, p: &DVector<f64>) -> Option<usize> {
        let mut multi = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let h = self.spacing(a);
            let s = (p[a] - self.lo[a]) / h;
            let r = s.round();
            if (s - r).abs() > GEOM_TOL || r < 0.0 || r as usize >= self.shape[a] {
                return None;
            }
            multi.push(r as usize);
        }
        Some(self.index(&multi))
    }

    /// Multilinear interpolation; `None` outside the box.
    pub fn interpolate<T: FieldValue>(&self, values: &[T], p: &DVector<f64>) -> Option<T> {
        if !self.contains(p, GEOM_TOL) {
            return None;
        }
        if let Some(idx) = self.locate_node(p) {
            return Some(values[idx].clone());
        }
        let d = self.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let s = ((p[a] - self.lo[a]) / self.spacing(a)).clamp(0.0, (self.shape[a] - 1) as f64);
            let i = (s.floor() as usize).min(self.shape[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut acc: Option<T> = None;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut m = base.clone();
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    m[a] += 1;
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let term = values[self.index(&m)].clone() * w;
            acc = Some(match acc {
                None => term,
                Some(s) => s + term,
            });
        }
        acc.or_else(|| Some(values[self.index(&base)].clone() * 0.0))
    }

    /// Second-order finite difference along `axis`: central in the interior,
    /// one-sided three-point at the faces.
    pub fn derivative<T: FieldValue>(&self, values: &[T], idx: usize, axis: usize) -> T {
        let n = self.shape[axis];
        let stride: usize = self.shape[axis + 1..].iter().product();
        let i = self.multi(idx)[axis];
        let h = self.spacing(axis);
        let at = |k: isize| values[(idx as isize + k * stride as isize) as usize].clone();
        if i == 0 {
            (at(1) * 4.0 - at(0) * 3.0 - at(2)) * (0.5 / h)
        } else if i == n - 1 {
            (at(0) * 3.0 - at(-1) * 4.0 + at(-2)) * (0.5 / h)
        } else {
            (at(1) - at(-1)) * (0.5 / h)
        }
    }

    /// Grid with the same box and twice the resolution (spacing halved).
    pub fn refined(&self) -> Self {
        Self::new(
            self.lo.clone(),
            self.hi.clone(),
            self.shape.iter().map(|n| 2 * n - 1).collect(),
        )
    }
}

/// Affine map `x ↦ M x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    pub fn translation(offset: &[f64]) -> Self {
        Self {
            matrix: DMatrix::identity(offset.len(), offset.len()),
            offset: DVector::from_column_slice(offset),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }

    pub fn inverse(&self) -> Option<Self> {
        let inv = self.matrix.clone().try_inverse()?;
        let offset = -(&inv * &self.offset);
        Some(Self { matrix: inv, offset })
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> Self {
        Self {
            matrix: &self.matrix * &inner.matrix,
            offset: &self.matrix * &inner.offset + &self.offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub grid: Grid,
    pub center: Vec<usize>,
}

impl Chart {
    pub fn center_index(&self) -> usize {
        self.grid.index(&self.center)
    }

    pub fn center_point(&self) -> DVector<f64> {
        self.grid.point(self.center_index())
    }
}

/// One connected component of `U_α ∩ U_β`, sampled on α's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlap {
    pub alpha: usize,
    pub beta: usize,
    pub region: Vec<(f64, f64)>,
    pub map: AffineMap,
    /// α-grid nodes inside the region, as a grid of their own.
    pub region_grid: Grid,
    /// α node index of each region node, in region order.
    pub alpha_nodes: Vec<usize>,
    /// Region position of each α node, if inside the region.
    pub position: Vec<Option<usize>>,
    /// Image of each region node in β coordinates.
    pub images: Vec<DVector<f64>>,
    /// β node index of each image, when the image is a grid node.
    pub beta_nodes: Vec<Option<usize>>,
}

impl Overlap {
    pub fn contains_node(&self, alpha_node: usize) -> Option<usize> {
        self.position[alpha_node]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartedManifold {
    pub dim: usize,
    pub charts: Vec<Chart>,
    pub overlaps: Vec<Overlap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub resolution: Vec<usize>,
    pub center: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSpec {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSpec {
    pub alpha: usize,
    pub beta: usize,
    pub region: Vec<[f64; 2]>,
    pub map: AffineSpec,
}

/// Serializable description of a manifold (the manifold file format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub dim: usize,
    pub charts: Vec<ChartSpec>,
    pub overlaps: Vec<OverlapSpec>,
}

impl ChartSpec {
    /// Box with `resolution` nodes per axis and the midpoint as center.
    pub fn uniform(bounds: &[[f64; 2]], resolution: &[usize]) -> Self {
        Self {
            bounds: bounds.to_vec(),
            resolution: resolution.to_vec(),
            center: resolution.iter().map(|n| (n - 1) / 2).collect(),
        }
    }
}

impl OverlapSpec {
    pub fn new(alpha: usize, beta: usize, region: &[[f64; 2]], map: &AffineMap) -> Self {
        Self {
            alpha,
            beta,
            region: region.to_vec(),
            map: AffineSpec {
                matrix: map.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
                offset: map.offset.iter().copied().collect(),
            },
        }
    }
}

fn affine_from_spec(spec: &AffineSpec, dim: usize, which: usize) -> Result<AffineMap> {
    if spec.matrix.len() != dim || spec.matrix.iter().any(|r| r.len() != dim) || spec.offset.len() != dim {
        return input(format!("overlap {which}: affine map is not {dim}-dimensional"));
    }
    Ok(AffineMap {
        matrix: DMatrix::from_fn(dim, dim, |i, j| spec.matrix[i][j]),
        offset: DVector::from_column_slice(&spec.offset),
    })
}

fn box_corners(bounds: &[(f64, f64)]) -> Vec<DVector<f64>> {
    let d = bounds.len();
    (0..(1usize << d))
        .map(|c| DVector::from_fn(d, |a, _| if c >> a & 1 == 1 { bounds[a].1 } else { bounds[a].0 }))
        .collect()
}

/// Validates a manifold description and samples its overlaps.
pub fn build_manifold(spec: &ManifoldSpec) -> Result<ChartedManifold> {
    let dim = spec.dim;
    if !(1..=2).contains(&dim) {
        return input(format!("manifold dimension {dim} not supported (1 or 2)"));
    }
    if spec.charts.is_empty() {
        return input("manifold has no charts");
    }
    let mut charts = Vec::with_capacity(spec.charts.len());
    for (k, c) in spec.charts.iter().enumerate() {
        if c.bounds.len() != dim || c.resolution.len() != dim || c.center.len() != dim {
            return input(format!("chart {k}: expected {dim} axes"));
        }
        for a in 0..dim {
            let [lo, hi] = c.bounds[a];
            if !(lo < hi) {
                return input(format!("chart {k}: empty box on axis {a}"));
            }
            if c.resolution[a] < MIN_RESOLUTION {
                return input(format!("chart {k}: resolution {} below {MIN_RESOLUTION}", c.resolution[a]));
            }
            if c.center[a] >= c.resolution[a] {
                return input(format!("chart {k}: center outside grid"));
            }
        }
        charts.push(Chart {
            grid: Grid::new(
                c.bounds.iter().map(|b| b[0]).collect(),
                c.bounds.iter().map(|b| b[1]).collect(),
                c.resolution.clone(),
            ),
            center: c.center.clone(),
        });
    }

    let mut overlaps = Vec::with_capacity(spec.overlaps.len());
    for (k, o) in spec.overlaps.iter().enumerate() {
        if o.alpha >= charts.len() || o.beta >= charts.len() || o.alpha == o.beta {
            return input(format!("overlap {k}: bad chart ids ({}, {})", o.alpha, o.beta));
        }
        if o.region.len() != dim {
            return input(format!("overlap {k}: region must have {dim} axes"));
        }
        let map = affine_from_spec(&o.map, dim, k)?;
        let ag = &charts[o.alpha].grid;
        let bg = &charts[o.beta].grid;
        let region: Vec<(f64, f64)> = o.region.iter().map(|r| (r[0], r[1])).collect();
        let mut ranges = Vec::with_capacity(dim);
        for (a, &(lo, hi)) in region.iter().enumerate() {
            if lo > hi || lo < ag.lo[a] - GEOM_TOL || hi > ag.hi[a] + GEOM_TOL {
                return input(format!("overlap {k}: region outside chart {} on axis {a}", o.alpha));
            }
            let h = ag.spacing(a);
            let first = ((lo - ag.lo[a]) / h - GEOM_TOL).ceil().max(0.0) as usize;
            let last = (((hi - ag.lo[a]) / h + GEOM_TOL).floor() as usize).min(ag.shape[a] - 1);
            if last < first + 2 {
                return input(format!("overlap {k}: region holds fewer than 3 nodes on axis {a}"));
            }
            ranges.push((first, last));
        }
        for corner in box_corners(&region) {
            if !bg.contains(&map.apply(&corner), GEOM_TOL) {
                return input(format!("overlap {k}: map carries the region outside chart {}", o.beta));
            }
        }
        let region_grid = Grid::new(
            ranges.iter().enumerate().map(|(a, r)| ag.coord(a, r.0)).collect(),
            ranges.iter().enumerate().map(|(a, r)| ag.coord(a, r.1)).collect(),
            ranges.iter().map(|r| r.1 - r.0 + 1).collect(),
        );
        let mut position = vec![None; ag.len()];
        let mut alpha_nodes = Vec::with_capacity(region_grid.len());
        let mut images = Vec::with_capacity(region_grid.len());
        let mut beta_nodes = Vec::with_capacity(region_grid.len());
        for p in 0..region_grid.len() {
            let rm = region_grid.multi(p);
            let am: Vec<usize> = rm.iter().zip(&ranges).map(|(i, r)| i + r.0).collect();
            let an = ag.index(&am);
            position[an] = Some(p);
            alpha_nodes.push(an);
            let y = map.apply(&ag.point(an));
            beta_nodes.push(bg.locate_node(&y));
            images.push(y);
        }
        overlaps.push(Overlap {
            alpha: o.alpha,
            beta: o.beta,
            region,
            map,
            region_grid,
            alpha_nodes,
            position,
            images,
            beta_nodes,
        });
    }

    let m = ChartedManifold { dim, charts, overlaps };
    m.check_symmetry()?;
    m.check_triples()?;
    Ok(m)
}

impl ChartedManifold {
    pub fn to_spec(&self) -> ManifoldSpec {
        ManifoldSpec {
            dim: self.dim,
            charts: self
                .charts
                .iter()
                .map(|c| ChartSpec {
                    bounds: (0..self.dim).map(|a| [c.grid.lo[a], c.grid.hi[a]]).collect(),
                    resolution: c.grid.shape.clone(),
                    center: c.center.clone(),
                })
                .collect(),
            overlaps: self
                .overlaps
                .iter()
                .map(|o| {
                    let region: Vec<[f64; 2]> = o.region.iter().map(|r| [r.0, r.1]).collect();
                    OverlapSpec::new(o.alpha, o.beta, &region, &o.map)
                })
                .collect(),
        }
    }

    /// Index of the reverse record `(β, α)` of overlap `k`.
    pub fn reverse_of(&self, k: usize) -> Option<usize> {
        let o = &self.overlaps[k];
        let inv = o.map.inverse()?;
        self.overlaps.iter().position(|r| {
            r.alpha == o.beta
                && r.beta == o.alpha
                && (&r.map.matrix - &inv.matrix).norm() <= GEOM_TOL
                && (&r.map.offset - &inv.offset).norm() <= GEOM_TOL
                && r.region_grid.contains(&o.images[0], GEOM_TOL)
        })
    }

    fn check_symmetry(&self) -> Result<()> {
        for (k, o) in self.overlaps.iter().enumerate() {
            let Some(r) = self.reverse_of(k) else {
                return input(format!("overlap {k}: no symmetric partner ({} → {})", o.beta, o.alpha));
            };
            // Every image node must be covered by the partner's region.
            let rev = &self.overlaps[r];
            if o.images.iter().any(|y| !rev.region_grid.contains(y, GEOM_TOL)) {
                return input(format!("overlap {k}: partner {r} does not cover the image region"));
            }
        }
        Ok(())
    }

    fn check_triples(&self) -> Result<()> {
        for (k1, o1) in self.overlaps.iter().enumerate() {
            for o2 in self.overlaps.iter().filter(|o| o.alpha == o1.beta && o.beta != o1.alpha) {
                for (p, y) in o1.images.iter().enumerate() {
                    if !o2.region_grid.contains(y, GEOM_TOL) {
                        continue;
                    }
                    let x = &o1.alpha_nodes[p];
                    let z = o2.map.apply(y);
                    let ok = self.overlaps.iter().any(|o3| {
                        o3.alpha == o1.alpha
                            && o3.beta == o2.beta
                            && o3.position[*x].is_some()
                            && (o3.map.apply(&self.charts[o1.alpha].grid.point(*x)) - &z).norm() <= GEOM_TOL
                    });
                    if !ok {
                        return input(format!("overlap {k1}: inconsistent triple overlap through chart {}", o2.beta));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self, chart: usize) -> &Grid {
        &self.charts[chart].grid
    }

    /// Overlap records leaving `chart`.
    pub fn overlaps_from(&self, chart: usize) -> impl Iterator<Item = (usize, &Overlap)> {
        self.overlaps.iter().enumerate().filter(move |(_, o)| o.alpha == chart)
    }

    /// Same atlas with every chart's grid spacing halved.
    pub fn refined(&self) -> Result<Self> {
        let mut spec = self.to_spec();
        for c in &mut spec.charts {
            c.resolution = c.resolution.iter().map(|n| 2 * n - 1).collect();
            c.center = c.center.iter().map(|i| 2 * i).collect();
        }
        build_manifold(&spec)
    }

    /// Checks that a per-chart field has one value per node.
    pub fn check_shape<T>(&self, field: &[Vec<T>], what: &str) -> Result<()> {
        if field.len() != self.charts.len() {
            return input(format!("{what}: {} charts, manifold has {}", field.len(), self.charts.len()));
        }
        for (k, (f, c)) in field.iter().zip(&self.charts).enumerate() {
            if f.len() != c.grid.len() {
                return input(format!("{what}: chart {k} has {} values, grid has {}", f.len(), c.grid.len()));
            }
        }
        Ok(())
    }

    /// Samples a function of `(chart, point)` on every node.
    pub fn sample<T>(&self, mut f: impl FnMut(usize, &DVector<f64>) -> T) -> Vec<Vec<T>> {
        self.charts
            .iter()
            .enumerate()
            .map(|(k, c)| (0..c.grid.len()).map(|i| f(k, &c.grid.point(i))).collect())
            .collect()
    }
}

/// Finite-difference partial derivative of a per-chart field at a node.
pub fn directional_derivative<T: FieldValue>(
    m: &ChartedManifold,
    field: &[Vec<T>],
    chart: usize,
    node: usize,
    axis: usize,
) -> T {
    m.grid(chart).derivative(&field[chart], node, axis)
}

/// Lie bracket of vector fields, nodewise from finite differences.
pub fn lie_bracket_fields(m: &ChartedManifold, x: &TangentField, y: &TangentField) -> Result<TangentField> {
    m.check_shape(x, "vector field X")?;
    m.check_shape(y, "vector field Y")?;
    Ok(m
        .charts
        .iter()
        .enumerate()
        .map(|(k, c)| {
            (0..c.grid.len())
                .map(|i| {
                    let mut out = DVector::zeros(m.dim);
                    for j in 0..m.dim {
                        out += c.grid.derivative(&y[k], i, j) * x[k][i][j] - c.grid.derivative(&x[k], i, j) * y[k][i][j];
                    }
                    out
                })
                .collect()
        })
        .collect())
}

/// Shape of the per-chart bumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpProfile {
    /// Raw weights are raised to this power before normalization.
    pub power: f64,
    /// Nodes between an open face and the end of the bump support, so that
    /// one-sided stencils at the face only see the neighbouring charts.
    pub margin: usize,
}

impl Default for BumpProfile {
    fn default() -> Self {
        Self { power: 1.0, margin: 2 }
    }
}

/// A partition of unity subordinate to the atlas.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOfUnity {
    pub profile: BumpProfile,
    /// `open[chart][axis] = (low face open, high face open)`; open faces are
    /// interior to the manifold and the bump vanishes there.
    open: Vec<Vec<(bool, bool)>>,
    pub values: ScalarField,
}

fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

impl PartitionOfUnity {
    fn raw_weight(&self, m: &ChartedManifold, chart: usize, p: &DVector<f64>) -> f64 {
        let g = m.grid(chart);
        let mut w = 1.0;
        for a in 0..m.dim {
            let (open_lo, open_hi) = self.open[chart][a];
            let inset = self.profile.margin as f64 * g.spacing(a);
            let lo = if open_lo { g.lo[a] + inset } else { g.lo[a] };
            let hi = if open_hi { g.hi[a] - inset } else { g.hi[a] };
            let u = (p[a] - lo) / (hi - lo);
            w *= match (open_lo, open_hi) {
                (true, true) => bump(2.0 * u - 1.0),
                (true, false) => bump(u.min(1.0) - 1.0),
                (false, true) => bump(u.max(0.0)),
                (false, false) => 1.0,
            };
        }
        w.powf(self.profile.power)
    }

    /// `h_chart` at an arbitrary point of the chart.
    pub fn evaluate(&self, m: &ChartedManifold, chart: usize, p: &DVector<f64>) -> f64 {
        let own = self.raw_weight(m, chart, p);
        if own == 0.0 {
            return 0.0;
        }
        own / self.weight_sum(m, chart, p)
    }

    fn weight_sum(&self, m: &ChartedManifold, chart: usize, p: &DVector<f64>) -> f64 {
        let mut seen = vec![false; m.charts.len()];
        seen[chart] = true;
        let mut total = self.raw_weight(m, chart, p);
        for (_, o) in m.overlaps_from(chart) {
            if !seen[o.beta] && o.region_grid.contains(p, GEOM_TOL) {
                seen[o.beta] = true;
                total += self.raw_weight(m, o.beta, &o.map.apply(p));
            }
        }
        total
    }
}

/// Smooth partition of unity with the default bump profile.
pub fn partition_of_unity(m: &ChartedManifold) -> Result<PartitionOfUnity> {
    partition_of_unity_with(m, BumpProfile::default())
}

/// Partition of unity from per-axis `exp(−1/(1−r²))` bumps normalized by the
/// pointwise sum over all charts containing the point.
pub fn partition_of_unity_with(m: &ChartedManifold, profile: BumpProfile) -> Result<PartitionOfUnity> {
    let mut open = Vec::with_capacity(m.charts.len());
    for (k, c) in m.charts.iter().enumerate() {
        let g = &c.grid;
        let mut faces = Vec::with_capacity(m.dim);
        for a in 0..m.dim {
            let face_open = |value: f64| {
                m.overlaps_from(k).any(|(_, o)| {
                    if value < o.region[a].0 - GEOM_TOL || value > o.region[a].1 + GEOM_TOL {
                        return false;
                    }
                    let p = DVector::from_fn(m.dim, |b, _| {
                        if b == a {
                            value
                        } else {
                            0.5 * (o.region[b].0 + o.region[b].1)
                        }
                    });
                    let y = o.map.apply(&p);
                    let bg = m.grid(o.beta);
                    (0..m.dim).all(|b| y[b] > bg.lo[b] + GEOM_TOL && y[b] < bg.hi[b] - GEOM_TOL)
                })
            };
            faces.push((face_open(g.lo[a]), face_open(g.hi[a])));
        }
        open.push(faces);
    }
    let mut pou = PartitionOfUnity {
        profile,
        open,
        values: Vec::new(),
    };
    let mut values = Vec::with_capacity(m.charts.len());
    for (k, c) in m.charts.iter().enumerate() {
        let mut v = Vec::with_capacity(c.grid.len());
        for i in 0..c.grid.len() {
            let p = c.grid.point(i);
            let total = pou.weight_sum(m, k, &p);
            if !(total > 0.0) {
                return Err(Error::Coverage(format!("chart {k} node {i} is outside every bump support")));
            }
            v.push(pou.raw_weight(m, k, &p) / total);
        }
        values.push(v);
    }
    pou.values = values;
    Ok(pou)
}

/// Smooth random vector-valued function: a few low-frequency cosine modes.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomField {
    modes: Vec<(DVector<f64>, DVector<f64>, DVector<f64>)>,
    constant: DVector<f64>,
}

impl RandomField {
    /// `wave` bounds each wave-vector component, `amplitude` each coefficient.
    pub fn new<R: rand::Rng>(rng: &mut R, dim: usize, comps: usize, modes: usize, wave: f64, amplitude: f64) -> Self {
        let mut uniform = |n: usize, s: f64| DVector::from_fn(n, |_, _| rng.gen_range(-s..=s));
        let constant = uniform(comps, amplitude);
        let modes = (0..modes)
            .map(|_| (uniform(dim, wave), uniform(comps, amplitude), uniform(comps, std::f64::consts::PI)))
            .collect();
        Self { modes, constant }
    }

    pub fn eval(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut out = self.constant.clone();
        for (k, a, phase) in &self.modes {
            let t = k.dot(p);
            for c in 0..out.len() {
                out[c] += a[c] * (t + phase[c]).cos();
            }
        }
        out
    }
}

/// A sampled path inside one chart, parameter `t ∈ [0, 1]` with uniform step.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub chart: usize,
    pub points: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
}

impl Path {
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn step(&self) -> f64 {
        1.0 / self.steps() as f64
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.points[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.points[self.points.len() - 1]
    }
}

/// Straight segment `from → to` in chart coordinates.
pub fn segment_path(
    m: &ChartedManifold,
    chart: usize,
    from: &DVector<f64>,
    to: &DVector<f64>,
    steps: usize,
) -> Result<Path> {
    let g = m.grid(chart);
    if steps == 0 {
        return input("path needs at least one step");
    }
    if !g.contains(from, GEOM_TOL) || !g.contains(to, GEOM_TOL) {
        return input(format!("path leaves chart {chart}"));
    }
    let v = to - from;
    let points = (0..=steps)
        .map(|s| {
            if s == steps {
                to.clone()
            } else {
                from + &v * (s as f64 / steps as f64)
            }
        })
        .collect();
    Ok(Path {
        chart,
        points,
        velocities: vec![v; steps + 1],
    })
}

/// Ray from the chart center to `node`.
pub fn ray_path(m: &ChartedManifold, chart: usize, node: usize, steps: usize) -> Result<Path> {
    let c = &m.charts[chart];
    if node >= c.grid.len() {
        return input(format!("node {node} not in chart {chart}"));
    }
    segment_path(m, chart, &c.center_point(), &c.grid.point(node), steps)
}
