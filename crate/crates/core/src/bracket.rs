//! The transitive Lie algebroid `L ⊕ TM` built from a coupling `(∇, Ω)`:
//!
//! `{(u₁,X₁),(u₂,X₂)} = ([u₁,u₂] + ∇_{X₁}u₂ − ∇_{X₂}u₁ + Ω(X₁,X₂), [X₁,X₂])`.
//!
//! Sections are handled chartwise on local representatives.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chartman::{lie_bracket_fields, ChartedManifold, FiberField, RandomField, ScalarField, TangentField};
use crate::connection::{apply_connection, CurvatureData, ConnectionForm};
use crate::error::{input, Result};
use crate::liealg::LieAlgebra;

/// A section `σ = (u, X)`; the anchor is `a(σ) = X`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebroidSection {
    pub u: FiberField,
    pub x: TangentField,
}

impl AlgebroidSection {
    pub fn scaled(&self, f: &ScalarField) -> Self {
        let mul = |field: &Vec<Vec<DVector<f64>>>| -> Vec<Vec<DVector<f64>>> {
            field
                .iter()
                .zip(f)
                .map(|(c, fc)| c.iter().zip(fc).map(|(v, s)| v * *s).collect())
                .collect()
        };
        Self {
            u: mul(&self.u),
            x: mul(&self.x),
        }
    }

    fn combine(&self, other: &Self, a: f64, b: f64) -> Self {
        let lin = |p: &Vec<Vec<DVector<f64>>>, q: &Vec<Vec<DVector<f64>>>| -> Vec<Vec<DVector<f64>>> {
            p.iter()
                .zip(q)
                .map(|(pc, qc)| pc.iter().zip(qc).map(|(v, w)| v * a + w * b).collect())
                .collect()
        };
        Self {
            u: lin(&self.u, &other.u),
            x: lin(&self.x, &other.x),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, 1.0, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, 1.0, -1.0)
    }

    /// Largest nodal norm of `(u, X)` over nodes accepted by `keep`.
    fn max_norm(&self, m: &ChartedManifold, keep: &dyn Fn(usize, usize) -> bool) -> f64 {
        let mut worst = 0.0f64;
        for (k, (uc, xc)) in self.u.iter().zip(&self.x).enumerate() {
            for i in 0..m.grid(k).len() {
                if keep(k, i) {
                    worst = worst.max((uc[i].norm_squared() + xc[i].norm_squared()).sqrt());
                }
            }
        }
        worst
    }
}

fn check_section(m: &ChartedManifold, n: usize, s: &AlgebroidSection) -> Result<()> {
    m.check_shape(&s.u, "section u")?;
    m.check_shape(&s.x, "section X")?;
    let bad_u = s.u.iter().flatten().any(|v| v.len() != n);
    let bad_x = s.x.iter().flatten().any(|v| v.len() != m.dim);
    if bad_u || bad_x {
        return input("section has components of the wrong length");
    }
    Ok(())
}

/// `Ω(X₁, X₂) = Σ_{i<j} (X₁^i X₂^j − X₁^j X₂^i) Ω_ij`.
fn omega_contract(curv: &CurvatureData, k: usize, node: usize, x1: &DVector<f64>, x2: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (p, &(i, j)) in curv.pairs.iter().enumerate() {
        let c = x1[i] * x2[j] - x1[j] * x2[i];
        if c != 0.0 {
            out += &curv.omega[k][p][node] * c;
        }
    }
    out
}

fn one_sided(c: &ConnectionForm, curv: &CurvatureData, s1: &AlgebroidSection, s2: &AlgebroidSection) -> Result<AlgebroidSection> {
    let m = &c.bundle.manifold;
    let g = &c.bundle.algebra;
    let n = g.dim();
    let d1 = apply_connection(c, &s2.u, &s1.x)?;
    let x = lie_bracket_fields(m, &s1.x, &s2.x)?
        .into_iter()
        .map(|c| c.into_iter().map(|v| v * 0.5).collect())
        .collect();
    let u = (0..m.charts.len())
        .map(|k| {
            (0..m.grid(k).len())
                .map(|i| {
                    (g.br(&s1.u[k][i], &s2.u[k][i]) + omega_contract(curv, k, i, &s1.x[k][i], &s2.x[k][i], n)) * 0.5 + &d1[k][i]
                })
                .collect()
        })
        .collect();
    Ok(AlgebroidSection { u, x })
}

/// The algebroid bracket. Swapping the arguments negates the result exactly.
pub fn algebroid_bracket(
    c: &ConnectionForm,
    curv: &CurvatureData,
    s1: &AlgebroidSection,
    s2: &AlgebroidSection,
) -> Result<AlgebroidSection> {
    let m = &c.bundle.manifold;
    check_section(m, c.bundle.dim(), s1)?;
    check_section(m, c.bundle.dim(), s2)?;
    let a = one_sided(c, curv, s1, s2)?;
    let b = one_sided(c, curv, s2, s1)?;
    Ok(a.combine(&b, 1.0, -1.0))
}

/// `([u,v] + X(v) − Y(u), [X,Y])` on a single chart with identity frames.
pub fn trivial_bracket(
    g: &LieAlgebra,
    m: &ChartedManifold,
    s1: &AlgebroidSection,
    s2: &AlgebroidSection,
) -> Result<AlgebroidSection> {
    if m.charts.len() != 1 {
        return input("the trivial bracket needs a single chart");
    }
    check_section(m, g.dim(), s1)?;
    check_section(m, g.dim(), s2)?;
    let grid = m.grid(0);
    let deriv = |u: &[DVector<f64>], x: &[DVector<f64>], i: usize| {
        let mut out = DVector::zeros(g.dim());
        for a in 0..m.dim {
            if x[i][a] != 0.0 {
                out += grid.derivative(u, i, a) * x[i][a];
            }
        }
        out
    };
    let u = (0..grid.len())
        .map(|i| g.br(&s1.u[0][i], &s2.u[0][i]) + deriv(&s2.u[0], &s1.x[0], i) - deriv(&s1.u[0], &s2.x[0], i))
        .collect();
    let x = lie_bracket_fields(m, &s1.x, &s2.x)?;
    Ok(AlgebroidSection { u: vec![u], x })
}

/// Band-limited random sections and functions.
#[derive(Debug, Clone)]
pub struct SectionSampler {
    pub wave: f64,
    pub amplitude: f64,
    pub modes: usize,
}

impl Default for SectionSampler {
    fn default() -> Self {
        Self {
            wave: 1.5,
            amplitude: 0.15,
            modes: 2,
        }
    }
}

impl SectionSampler {
    pub fn section<R: Rng>(&self, m: &ChartedManifold, n: usize, rng: &mut R) -> AlgebroidSection {
        let fields: Vec<RandomField> = (0..m.charts.len())
            .map(|_| RandomField::new(rng, m.dim, n + m.dim, self.modes, self.wave, self.amplitude))
            .collect();
        let vals = m.sample(|k, p| fields[k].eval(p));
        AlgebroidSection {
            u: vals.iter().map(|c| c.iter().map(|v| v.rows(0, n).into_owned()).collect()).collect(),
            x: vals.iter().map(|c| c.iter().map(|v| v.rows(n, m.dim).into_owned()).collect()).collect(),
        }
    }

    pub fn function<R: Rng>(&self, m: &ChartedManifold, rng: &mut R) -> ScalarField {
        let fields: Vec<RandomField> = (0..m.charts.len())
            .map(|_| RandomField::new(rng, m.dim, 1, self.modes, self.wave, self.amplitude))
            .collect();
        m.sample(|k, p| 1.0 + fields[k].eval(p)[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub trials: usize,
    pub seed: u64,
    pub skew: f64,
    pub leibniz: f64,
    pub jacobi: f64,
}

/// Max residuals of skew symmetry, the Leibniz rule and the Jacobi identity
/// over random sections. Jacobi is measured on nodes at least
/// `jacobi_margin` away from every chart face.
pub fn axiom_report(
    c: &ConnectionForm,
    curv: &CurvatureData,
    trials: usize,
    seed: u64,
    sampler: &SectionSampler,
    jacobi_margin: f64,
) -> Result<AxiomReport> {
    let m = &c.bundle.manifold;
    let n = c.bundle.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior = |k: usize, i: usize| {
        let g = m.grid(k);
        let p = g.point(i);
        (0..m.dim).all(|a| p[a] - g.lo()[a] >= jacobi_margin - 1e-12 && g.hi()[a] - p[a] >= jacobi_margin - 1e-12)
    };
    let all = |_: usize, _: usize| true;
    let mut rep = AxiomReport {
        trials,
        seed,
        skew: 0.0,
        leibniz: 0.0,
        jacobi: 0.0,
    };
    for _ in 0..trials {
        let s1 = sampler.section(m, n, &mut rng);
        let s2 = sampler.section(m, n, &mut rng);
        let s3 = sampler.section(m, n, &mut rng);
        let f = sampler.function(m, &mut rng);

        let b12 = algebroid_bracket(c, curv, &s1, &s2)?;
        let b21 = algebroid_bracket(c, curv, &s2, &s1)?;
        rep.skew = rep.skew.max(b12.add(&b21).max_norm(m, &all));

        let lhs = algebroid_bracket(c, curv, &s1, &s2.scaled(&f))?;
        let xf: ScalarField = (0..m.charts.len())
            .map(|k| {
                (0..m.grid(k).len())
                    .map(|i| (0..m.dim).map(|a| s1.x[k][i][a] * m.grid(k).derivative(&f[k], i, a)).sum())
                    .collect()
            })
            .collect();
        let rhs = s2.scaled(&xf).add(&b12.scaled(&f));
        rep.leibniz = rep.leibniz.max(lhs.sub(&rhs).max_norm(m, &all));

        let b23 = algebroid_bracket(c, curv, &s2, &s3)?;
        let b31 = algebroid_bracket(c, curv, &s3, &s1)?;
        let j = algebroid_bracket(c, curv, &s1, &b23)?
            .add(&algebroid_bracket(c, curv, &s3, &b12)?)
            .add(&algebroid_bracket(c, curv, &s2, &b31)?);
        rep.jacobi = rep.jacobi.max(j.max_norm(m, &interior));
    }
    Ok(rep)
}

/// Default Jacobi margin: two grid steps of the coarsest axis.
pub fn default_margin(m: &ChartedManifold) -> f64 {
    let mut h = 0.0f64;
    for k in 0..m.charts.len() {
        for a in 0..m.dim {
            h = h.max(m.grid(k).spacing(a));
        }
    }
    2.0 * h
}
