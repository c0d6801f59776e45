//! Lie connections as chartwise derivation-valued one-forms, `∇ = ∂ + ω`.
//!
//! `omega[α][i][x]` is `ω_α(∂_i)` at node `x`, acting on `g`-coordinates of
//! chart `α`. On an overlap with transition `P` and affine Jacobian `M`:
//!
//! `Σ_j M_ji ω_β,j(y) = P ω_α,i(x) P⁻¹ + P ∂_i(P⁻¹)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chartman::{FiberField, Grid, PartitionOfUnity, RandomField, TangentField};
use crate::error::{input, Error, Result};
use crate::lab::{pullback_lab, SmoothMapSpec, Trivialization};
use crate::liealg::{DerivationMatrix, FiberVector};
use crate::linalg::{commutator, principal_log};
use crate::{Tolerances, ValidationReport};

/// `[chart][axis][node]`.
pub type FormField<T> = Vec<Vec<Vec<T>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionForm {
    pub bundle: Trivialization,
    pub omega: FormField<DerivationMatrix>,
}

impl ConnectionForm {
    pub fn new(bundle: Trivialization, omega: FormField<DerivationMatrix>) -> Result<Self> {
        check_form_shape(&bundle, &omega, "omega")?;
        let n = bundle.dim();
        for (k, c) in omega.iter().enumerate() {
            for (i, a) in c.iter().enumerate() {
                if let Some(x) = a.iter().position(|w| w.shape() != (n, n)) {
                    return input(format!("omega: chart {k} axis {i} node {x} is not {n}×{n}"));
                }
            }
        }
        Ok(Self { bundle, omega })
    }

    pub fn zero(bundle: Trivialization) -> Self {
        let n = bundle.dim();
        let omega = form_from_fn(&bundle, |_, _, _| DMatrix::zeros(n, n));
        Self { bundle, omega }
    }

    pub fn dim(&self) -> usize {
        self.bundle.manifold.dim
    }

    /// `ω_α(v)` at a node for a tangent vector `v`.
    pub fn contract(&self, chart: usize, node: usize, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.bundle.dim();
        let mut out = DMatrix::zeros(n, n);
        for (i, w) in self.omega[chart].iter().enumerate() {
            out += &w[node] * v[i];
        }
        out
    }
}

pub(crate) fn form_from_fn<T>(t: &Trivialization, mut f: impl FnMut(usize, usize, usize) -> T) -> FormField<T> {
    let m = &t.manifold;
    (0..m.charts.len())
        .map(|k| (0..m.dim).map(|i| (0..m.grid(k).len()).map(|x| f(k, i, x)).collect()).collect())
        .collect()
}

pub(crate) fn check_form_shape<T>(t: &Trivialization, form: &FormField<T>, what: &str) -> Result<()> {
    let m = &t.manifold;
    if form.len() != m.charts.len() {
        return input(format!("{what}: {} charts, manifold has {}", form.len(), m.charts.len()));
    }
    for (k, c) in form.iter().enumerate() {
        if c.len() != m.dim {
            return input(format!("{what}: chart {k} has {} axes, expected {}", c.len(), m.dim));
        }
        if let Some(i) = c.iter().position(|a| a.len() != m.grid(k).len()) {
            return input(format!("{what}: chart {k} axis {i} has {} nodes, grid has {}", c[i].len(), m.grid(k).len()));
        }
    }
    Ok(())
}

fn group_log(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    principal_log(a, 1e-10).unwrap_or_else(|_| a - DMatrix::identity(n, n))
}

/// `(∂_axis Q) Q⁻¹` from logarithms of ratios `Q(x ± h) Q(x)⁻¹`.
///
/// For group-valued `Q` the result lies in the Lie algebra of the group
/// exactly, not only up to discretization error.
pub fn right_log_derivative(grid: &Grid, q: &[DMatrix<f64>], idx: usize, axis: usize) -> DMatrix<f64> {
    let n = grid.shape()[axis];
    let stride: usize = grid.shape()[axis + 1..].iter().product();
    let i = grid.multi(idx)[axis];
    let h = grid.spacing(axis);
    let q_inv = q[idx].clone().try_inverse().expect("invertible field");
    let rel = |k: isize| group_log(&(&q[(idx as isize + k * stride as isize) as usize] * &q_inv));
    if i == 0 {
        (rel(1) * 4.0 - rel(2)) * (0.5 / h)
    } else if i == n - 1 {
        (rel(-1) * 4.0 - rel(-2)) * (-0.5 / h)
    } else {
        (rel(1) - rel(-1)) * (0.5 / h)
    }
}

/// `Q⁻¹ ∂_axis Q`.
pub fn left_log_derivative(grid: &Grid, q: &[DMatrix<f64>], idx: usize, axis: usize) -> DMatrix<f64> {
    let q_inv = q[idx].clone().try_inverse().expect("invertible field");
    &q_inv * right_log_derivative(grid, q, idx, axis) * &q[idx]
}

/// `∇_X u` on local representatives `u_α`.
pub fn apply_connection(c: &ConnectionForm, u: &FiberField, x: &TangentField) -> Result<FiberField> {
    let m = &c.bundle.manifold;
    m.check_shape(u, "section")?;
    m.check_shape(x, "vector field")?;
    Ok(m
        .charts
        .iter()
        .enumerate()
        .map(|(k, ch)| {
            (0..ch.grid.len())
                .map(|node| {
                    let mut out = DVector::zeros(c.bundle.dim());
                    for i in 0..m.dim {
                        let xi = x[k][node][i];
                        if xi != 0.0 {
                            out += (ch.grid.derivative(&u[k], node, i) + &c.omega[k][i][node] * &u[k][node]) * xi;
                        }
                    }
                    out
                })
                .collect()
        })
        .collect())
}

/// `ω_β,·` pulled to the α side of overlap `k` at region node `p`:
/// `Σ_j M_ji ω_β,j(y)`.
fn beta_side(c: &ConnectionForm, k: usize, p: usize, axis: usize) -> Result<DMatrix<f64>> {
    let m = &c.bundle.manifold;
    let o = &m.overlaps[k];
    let n = c.bundle.dim();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..m.dim {
        let mji = o.map.matrix[(j, axis)];
        if mji == 0.0 {
            continue;
        }
        let w = match o.beta_nodes[p] {
            Some(y) => c.omega[o.beta][j][y].clone(),
            None => m
                .grid(o.beta)
                .interpolate(&c.omega[o.beta][j], &o.images[p])
                .ok_or_else(|| Error::Input(format!("overlap {k}: image outside chart")))?,
        };
        out += w * mji;
    }
    Ok(out)
}

/// Worst gauge-law residual over all overlap nodes, with its location.
pub fn gauge_residual(c: &ConnectionForm) -> Result<(f64, String)> {
    let m = &c.bundle.manifold;
    let mut worst = (0.0, String::new());
    for (k, o) in m.overlaps.iter().enumerate() {
        let ts = &c.bundle.transitions[k];
        for (p, &x) in o.alpha_nodes.iter().enumerate() {
            let pm = &ts[p];
            let p_inv = pm.clone().try_inverse().ok_or_else(|| Error::Input("singular transition".into()))?;
            for i in 0..m.dim {
                let expected = pm * &c.omega[o.alpha][i][x] * &p_inv - right_log_derivative(&o.region_grid, ts, p, i);
                let r = (beta_side(c, k, p, i)? - expected).norm();
                if r > worst.0 || r.is_nan() {
                    worst = (r, format!("overlap {k} chart {} node {x} axis {i}", o.alpha));
                }
            }
        }
    }
    Ok(worst)
}

/// Pointwise-derivation and gauge-law checks.
pub fn validate_connection(c: &ConnectionForm, tol: &Tolerances) -> ValidationReport {
    let mut report = ValidationReport::new();
    let g = &c.bundle.algebra;
    for (k, chart) in c.omega.iter().enumerate() {
        for (i, axis) in chart.iter().enumerate() {
            for (x, w) in axis.iter().enumerate() {
                let r = g.derivation_residual(w) / w.norm().max(1.0);
                report.check("derivation", r, tol.alg, || format!("chart {k} node {x} axis {i}"));
            }
        }
    }
    match gauge_residual(c) {
        Ok((r, at)) => report.check("gauge", r, tol.gauge, || at),
        Err(e) => report.check("gauge", f64::INFINITY, tol.gauge, || e.to_string()),
    }
    report
}

/// Curvature per chart and axis pair, with the accordance decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureData {
    /// Axis pairs `(i, j)`, `i < j`.
    pub pairs: Vec<(usize, usize)>,
    /// `r[α][pair][node] = R_ij`.
    pub r: FormField<DMatrix<f64>>,
    /// Minimum-norm `Ω_ij` with `R_ij ≈ ad(Ω_ij)`.
    pub omega: FormField<FiberVector>,
    /// `‖R_ij − ad(Ω_ij)‖` per node.
    pub residual: FormField<f64>,
}

impl CurvatureData {
    /// `R_ij` for any ordered pair; `R_ii = 0`, `R_ji = −R_ij`.
    pub fn get(&self, chart: usize, i: usize, j: usize, node: usize) -> Option<DMatrix<f64>> {
        if i == j {
            return None;
        }
        let (a, b, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        let p = self.pairs.iter().position(|&q| q == (a, b))?;
        Some(&self.r[chart][p][node] * sign)
    }

    pub fn max_norm(&self) -> f64 {
        self.r.iter().flatten().flatten().map(|m| m.norm()).fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().flatten().flatten().copied().fold(0.0, f64::max)
    }

    /// Worst residual and where it occurs.
    pub fn worst(&self) -> Option<String> {
        let mut best: Option<(f64, String)> = None;
        for (k, c) in self.residual.iter().enumerate() {
            for (p, v) in c.iter().enumerate() {
                for (x, &r) in v.iter().enumerate() {
                    if best.as_ref().is_none_or(|b| r > b.0) {
                        let (i, j) = self.pairs[p];
                        best = Some((r, format!("chart {k} node {x} axes ({i}, {j})")));
                    }
                }
            }
        }
        best.map(|b| b.1)
    }
}

fn axis_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect()
}

/// `R_ij = ∂_i ω_j − ∂_j ω_i + [ω_i, ω_j]` by finite differences.
pub fn curvature(c: &ConnectionForm) -> CurvatureData {
    let m = &c.bundle.manifold;
    let g = &c.bundle.algebra;
    let pairs = axis_pairs(m.dim);
    let mut r = Vec::with_capacity(m.charts.len());
    let mut omega = Vec::with_capacity(m.charts.len());
    let mut residual = Vec::with_capacity(m.charts.len());
    for (k, ch) in m.charts.iter().enumerate() {
        let w = &c.omega[k];
        let (mut rk, mut ok, mut sk) = (Vec::new(), Vec::new(), Vec::new());
        for &(i, j) in &pairs {
            let (mut rv, mut ov, mut sv) = (Vec::new(), Vec::new(), Vec::new());
            for x in 0..ch.grid.len() {
                let rij = ch.grid.derivative(&w[j], x, i) - ch.grid.derivative(&w[i], x, j) + commutator(&w[i][x], &w[j][x]);
                let (om, res) = g.project_inner(&rij);
                rv.push(rij);
                ov.push(om);
                sv.push(res);
            }
            rk.push(rv);
            ok.push(ov);
            sk.push(sv);
        }
        r.push(rk);
        omega.push(ok);
        residual.push(sk);
    }
    CurvatureData { pairs, r, omega, residual }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccordanceReport {
    pub passed: bool,
    pub max_residual: f64,
    pub max_curvature: f64,
    pub max_omega_norm: f64,
    pub worst: Option<String>,
    #[serde(skip)]
    pub curvature: CurvatureData,
}

/// Whether the curvature is pointwise inner, `R = ad ∘ Ω`.
pub fn accordance(c: &ConnectionForm, tol: &Tolerances) -> AccordanceReport {
    let curv = curvature(c);
    let max_residual = curv.max_residual();
    AccordanceReport {
        passed: max_residual <= tol.acc,
        max_residual,
        max_curvature: curv.max_norm(),
        max_omega_norm: curv.omega.iter().flatten().flatten().map(|v| v.norm()).fold(0.0, f64::max),
        worst: if max_residual > tol.acc { curv.worst() } else { None },
        curvature: curv,
    }
}

/// `max ‖ad((d^∇Ω)_ijk)‖` over nodes and axis triples; zero when the manifold
/// has no three independent directions.
pub fn bianchi_residual(c: &ConnectionForm, curv: &CurvatureData) -> f64 {
    let m = &c.bundle.manifold;
    let g = &c.bundle.algebra;
    let mut worst = 0.0f64;
    for (k, ch) in m.charts.iter().enumerate() {
        let omega_ij = |i: usize, j: usize| -> Vec<FiberVector> {
            let p = curv.pairs.iter().position(|&q| q == (i, j)).expect("pair");
            curv.omega[k][p].clone()
        };
        for i in 0..m.dim {
            for j in i + 1..m.dim {
                for l in j + 1..m.dim {
                    let cyc = [(i, j, l), (j, l, i), (l, i, j)];
                    for x in 0..ch.grid.len() {
                        let mut s = DVector::zeros(g.dim());
                        for &(a, b, d) in &cyc {
                            let (lo, hi, sign) = if b < d { (b, d, 1.0) } else { (d, b, -1.0) };
                            let om = omega_ij(lo, hi);
                            s += (ch.grid.derivative(&om, x, a) + &c.omega[k][a][x] * &om[x]) * sign;
                        }
                        worst = worst.max(g.ad(&s).map(|a| a.norm()).unwrap_or(f64::INFINITY));
                    }
                }
            }
        }
    }
    worst
}

/// Residual of `Σ_j M_ji l_β,j(y) = P l_α,i(x)` over all overlaps.
pub fn form_covariance_residual(t: &Trivialization, l: &FormField<FiberVector>) -> f64 {
    let m = &t.manifold;
    let mut worst = 0.0f64;
    for (k, o) in m.overlaps.iter().enumerate() {
        for (p, &x) in o.alpha_nodes.iter().enumerate() {
            for i in 0..m.dim {
                let mut lhs = DVector::zeros(t.dim());
                for j in 0..m.dim {
                    let v = match o.beta_nodes[p] {
                        Some(y) => l[o.beta][j][y].clone(),
                        None => match m.grid(o.beta).interpolate(&l[o.beta][j], &o.images[p]) {
                            Some(v) => v,
                            None => return f64::INFINITY,
                        },
                    };
                    lhs += v * o.map.matrix[(j, i)];
                }
                worst = worst.max((lhs - &t.transitions[k][p] * &l[o.alpha][i][x]).norm());
            }
        }
    }
    worst
}

/// `ω' = ω + ad(l)` for an `L`-valued one-form `l`.
pub fn shift_by_inner(c: &ConnectionForm, l: &FormField<FiberVector>, tol: &Tolerances) -> Result<ConnectionForm> {
    check_form_shape(&c.bundle, l, "l")?;
    let cov = form_covariance_residual(&c.bundle, l);
    if !(cov <= tol.gauge) {
        return input(format!("l does not transform as a one-form (residual {cov:.3e})"));
    }
    let g = &c.bundle.algebra;
    let mut omega = c.omega.clone();
    for (k, chart) in omega.iter_mut().enumerate() {
        for (i, axis) in chart.iter_mut().enumerate() {
            for (x, w) in axis.iter_mut().enumerate() {
                *w += g.ad(&l[k][i][x])?;
            }
        }
    }
    ConnectionForm::new(c.bundle.clone(), omega)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub passed: bool,
    pub max_residual: f64,
    /// Minimum-norm `l` with `ω' − ω ≈ ad(l)`.
    pub l: FormField<FiberVector>,
}

/// Whether `C'` is `C` shifted by some `ad(l)`.
pub fn coupling_equivalent(a: &ConnectionForm, b: &ConnectionForm, tol: &Tolerances) -> Result<CouplingReport> {
    if a.bundle != b.bundle {
        return input("connections live on different bundles");
    }
    let g = &a.bundle.algebra;
    let mut worst = 0.0f64;
    let l = form_from_fn(&a.bundle, |k, i, x| {
        let (v, r) = g.project_inner(&(&b.omega[k][i][x] - &a.omega[k][i][x]));
        worst = worst.max(r);
        v
    });
    Ok(CouplingReport {
        passed: worst <= tol.acc,
        max_residual: worst,
        l,
    })
}

/// The same connection in the frames of another trivialization over the
/// same cover: `ω_new = G ω G⁻¹ − (∂G) G⁻¹`, `G = φ_new⁻¹ φ_old`.
pub fn reexpress(c: &ConnectionForm, target: &Trivialization) -> Result<ConnectionForm> {
    if c.bundle.manifold != target.manifold || c.bundle.algebra != target.algebra {
        return input("re-expression needs the same algebra and cover");
    }
    let inv = target.inverse_frames()?;
    let gs: Vec<Vec<DMatrix<f64>>> = c
        .bundle
        .frames
        .iter()
        .enumerate()
        .map(|(k, fs)| fs.iter().enumerate().map(|(x, f)| &inv[k][x] * f).collect())
        .collect();
    let m = &target.manifold;
    let omega = form_from_fn(target, |k, i, x| {
        let g = &gs[k][x];
        let g_inv = g.clone().try_inverse().expect("invertible");
        g * &c.omega[k][i][x] * g_inv - right_log_derivative(m.grid(k), &gs[k], x, i)
    });
    ConnectionForm::new(target.clone(), omega)
}

/// `ω'_α,i(x) = Σ_j J_ji ω_{A(α),j}(f(x))` over the pulled-back bundle.
pub fn pullback_connection(c: &ConnectionForm, f: &SmoothMapSpec) -> Result<ConnectionForm> {
    let bundle = pullback_lab(&c.bundle, f)?;
    let n = bundle.dim();
    let tm = &c.bundle.manifold;
    let omega = form_from_fn(&bundle, |k, i, x| {
        let (tc, map) = &f.charts[k];
        let y = map.apply(&f.source.grid(k).point(x));
        let mut out = DMatrix::zeros(n, n);
        for j in 0..tm.dim {
            let jji = map.matrix[(j, i)];
            if jji != 0.0 {
                out += tm.grid(*tc).interpolate(&c.omega[*tc][j], &y).expect("checked image") * jji;
            }
        }
        out
    });
    ConnectionForm::new(bundle, omega)
}

/// Max over overlap nodes of `‖Σ M_ki M_lj R_β,kl(y) − P R_α,ij(x) P⁻¹‖`.
pub fn curvature_covariance_residual(c: &ConnectionForm, curv: &CurvatureData) -> f64 {
    let m = &c.bundle.manifold;
    let mut worst = 0.0f64;
    for (k, o) in m.overlaps.iter().enumerate() {
        for (p, &x) in o.alpha_nodes.iter().enumerate() {
            let pm = &c.bundle.transitions[k][p];
            let p_inv = pm.clone().try_inverse().expect("invertible transition");
            for (pi, &(i, j)) in curv.pairs.iter().enumerate() {
                let rhs = pm * &curv.r[o.alpha][pi][x] * &p_inv;
                let mut lhs = DMatrix::zeros(pm.nrows(), pm.ncols());
                for (qi, &(a, b)) in curv.pairs.iter().enumerate() {
                    let coef = o.map.matrix[(a, i)] * o.map.matrix[(b, j)] - o.map.matrix[(b, i)] * o.map.matrix[(a, j)];
                    if coef == 0.0 {
                        continue;
                    }
                    let r = match o.beta_nodes[p] {
                        Some(y) => curv.r[o.beta][qi][y].clone(),
                        None => m.grid(o.beta).interpolate(&curv.r[o.beta][qi], &o.images[p]).expect("image in chart"),
                    };
                    lhs += r * coef;
                }
                worst = worst.max((lhs - rhs).norm());
            }
        }
    }
    worst
}

/// A random covariant `L`-valued one-form: chartwise random forms glued with
/// a partition of unity.
pub fn random_covariant_form<R: rand::Rng>(t: &Trivialization, h: &PartitionOfUnity, rng: &mut R, amplitude: f64) -> FormField<FiberVector> {
    let m = &t.manifold;
    let n = t.dim();
    let local: Vec<RandomField> = (0..m.charts.len())
        .map(|_| RandomField::new(rng, m.dim, n * m.dim, 2, 6.0, amplitude))
        .collect();
    let comp = |f: &RandomField, p: &DVector<f64>, i: usize| -> DVector<f64> { f.eval(p).rows(i * n, n).into_owned() };
    let inv: Vec<Vec<DMatrix<f64>>> = t
        .transitions
        .iter()
        .map(|ts| ts.iter().map(|a| a.clone().try_inverse().expect("invertible transition")).collect())
        .collect();
    form_from_fn(t, |k, i, x| {
        let p = m.grid(k).point(x);
        let mut v = comp(&local[k], &p, i) * h.values[k][x];
        let mut seen = vec![false; m.charts.len()];
        seen[k] = true;
        for (r, o) in m.overlaps_from(k) {
            let Some(pos) = o.contains_node(x) else { continue };
            if seen[o.beta] {
                continue;
            }
            seen[o.beta] = true;
            let y = &o.images[pos];
            let hb = h.evaluate(m, o.beta, y);
            if hb == 0.0 {
                continue;
            }
            let mut w = DVector::zeros(n);
            for j in 0..m.dim {
                w += comp(&local[o.beta], y, j) * o.map.matrix[(j, i)];
            }
            v += &inv[r][pos] * w * hb;
        }
        v
    })
}
