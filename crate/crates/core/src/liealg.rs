//! Finite-dimensional Lie algebras given by structure constants.
//!
//! Convention: `[e_i, e_j] = Σ_k c[i][j][k] e_k`, indices 0-based. Fiber
//! vectors are coordinate columns in the basis `e_0..e_{n-1}`; derivations and
//! automorphisms are `n × n` matrices acting on those columns.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{input, Error, Result};
use crate::linalg::{self, LeastSquares};
use crate::{Tolerances, ValidationReport};

pub type FiberVector = DVector<f64>;
pub type DerivationMatrix = DMatrix<f64>;
pub type AutMatrix = DMatrix<f64>;

pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone)]
pub struct LieAlgebra {
    name: String,
    dim: usize,
    c: Vec<f64>,
    ad_basis: Vec<DMatrix<f64>>,
    inner: LeastSquares,
}

impl PartialEq for LieAlgebra {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.dim == other.dim && self.c == other.c
    }
}

impl LieAlgebra {
    /// Builds an algebra from a flat `dim³` tensor, row-major in `(i, j, k)`.
    ///
    /// Only the shape is checked here; use [`validate_algebra`] for the axioms.
    pub fn new(name: impl Into<String>, dim: usize, c: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return input(format!("algebra dimension {dim} outside 1..={MAX_DIM}"));
        }
        if c.len() != dim * dim * dim {
            return input(format!("structure tensor has {} entries, expected {}", c.len(), dim * dim * dim));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return input("structure tensor contains a non-finite value");
        }
        let mut g = Self {
            name: name.into(),
            dim,
            c,
            ad_basis: Vec::new(),
            inner: LeastSquares::new(DMatrix::zeros(0, 0), 0.0),
        };
        g.ad_basis = (0..dim).map(|i| g.ad_unchecked(&g.basis(i))).collect();
        let cols: Vec<DVector<f64>> = g.ad_basis.iter().map(linalg::vec_of).collect();
        g.inner = LeastSquares::new(DMatrix::from_columns(&cols), 1e-9);
        Ok(g)
    }

    /// Builds an algebra from a nested `c[i][j][k]` array.
    pub fn from_nested(name: impl Into<String>, dim: usize, c: &[Vec<Vec<f64>>]) -> Result<Self> {
        if c.len() != dim || c.iter().any(|r| r.len() != dim || r.iter().any(|s| s.len() != dim)) {
            return input(format!("structure tensor is not {dim}×{dim}×{dim}"));
        }
        let flat = c.iter().flatten().flatten().copied().collect();
        Self::new(name, dim, flat)
    }

    /// Builds an algebra from the nonzero brackets `[e_i, e_j] = Σ coeff e_k`
    /// for `i < j`; the opposite order is filled in by antisymmetry.
    pub fn from_brackets(name: &str, dim: usize, brackets: &[(usize, usize, usize, f64)]) -> Result<Self> {
        let mut c = vec![0.0; dim * dim * dim];
        for &(i, j, k, v) in brackets {
            if i >= dim || j >= dim || k >= dim {
                return input(format!("bracket index out of range in {name}"));
            }
            c[(i * dim + j) * dim + k] += v;
            c[(j * dim + i) * dim + k] -= v;
        }
        Self::new(name, dim, c)
    }

    pub fn abelian(dim: usize) -> Self {
        Self::from_brackets(&format!("abelian{dim}"), dim, &[]).expect("valid abelian algebra")
    }

    /// `[e1,e2]=e3, [e2,e3]=e1, [e3,e1]=e2`.
    pub fn so3() -> Self {
        Self::from_brackets("so3", 3, &[(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0)]).expect("valid so3")
    }

    /// Heisenberg algebra, `[e1,e2]=e3`.
    pub fn heis3() -> Self {
        Self::from_brackets("heis3", 3, &[(0, 1, 2, 1.0)]).expect("valid heis3")
    }

    /// Affine algebra of the line, `[e1,e2]=e2`.
    pub fn aff1() -> Self {
        Self::from_brackets("aff1", 2, &[(0, 1, 1, 1.0)]).expect("valid aff1")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[(i * self.dim + j) * self.dim + k]
    }

    /// Structure constants as a nested `c[i][j][k]` array.
    pub fn nested(&self) -> Vec<Vec<Vec<f64>>> {
        let n = self.dim;
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| self.c(i, j, k)).collect()).collect())
            .collect()
    }

    pub fn basis(&self, i: usize) -> FiberVector {
        let mut e = DVector::zeros(self.dim);
        e[i] = 1.0;
        e
    }

    pub fn is_abelian(&self) -> bool {
        self.c.iter().all(|&v| v == 0.0)
    }

    fn raw_bracket(&self, x: &FiberVector, y: &FiberVector) -> FiberVector {
        let n = self.dim;
        let mut out = DVector::zeros(n);
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let w = x[i] * y[j];
                if w == 0.0 {
                    continue;
                }
                for k in 0..n {
                    out[k] += w * self.c(i, j, k);
                }
            }
        }
        out
    }

    /// Lie bracket without dimension checks. Antisymmetric bit for bit:
    /// `br(x, y) == -br(y, x)` exactly in floating point.
    pub fn br(&self, x: &FiberVector, y: &FiberVector) -> FiberVector {
        (self.raw_bracket(x, y) - self.raw_bracket(y, x)) * 0.5
    }

    pub fn bracket(&self, x: &FiberVector, y: &FiberVector) -> Result<FiberVector> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.br(x, y))
    }

    fn check_len(&self, x: &FiberVector) -> Result<()> {
        if x.len() != self.dim {
            return input(format!("fiber vector of length {} in a dimension-{} algebra", x.len(), self.dim));
        }
        Ok(())
    }

    fn ad_unchecked(&self, x: &FiberVector) -> DerivationMatrix {
        let n = self.dim;
        DMatrix::from_fn(n, n, |k, j| (0..n).map(|i| x[i] * self.c(i, j, k)).sum())
    }

    /// The adjoint map `y ↦ [x, y]` as a matrix.
    pub fn ad(&self, x: &FiberVector) -> Result<DerivationMatrix> {
        self.check_len(x)?;
        Ok(self.ad_unchecked(x))
    }

    /// `ad(e_i)` for each basis vector.
    pub fn ad_basis(&self) -> &[DMatrix<f64>] {
        &self.ad_basis
    }

    /// `max_{i,j} ‖D[e_i,e_j] − [De_i,e_j] − [e_i,De_j]‖`.
    pub fn derivation_residual(&self, d: &DMatrix<f64>) -> f64 {
        let n = self.dim;
        if d.shape() != (n, n) {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            let di = d.column(i).into_owned();
            let ei = self.basis(i);
            for j in i + 1..n {
                let dj = d.column(j).into_owned();
                let ej = self.basis(j);
                let lhs = d * self.br(&ei, &ej);
                let rhs = self.br(&di, &ej) + self.br(&ei, &dj);
                worst = worst.max((lhs - rhs).norm());
            }
        }
        worst
    }

    /// `max_{i,j} ‖A[e_i,e_j] − [Ae_i, Ae_j]‖`.
    pub fn automorphism_residual(&self, a: &DMatrix<f64>) -> f64 {
        let n = self.dim;
        if a.shape() != (n, n) {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            let ai = a.column(i).into_owned();
            for j in i + 1..n {
                let aj = a.column(j).into_owned();
                let lhs = a * self.br(&self.basis(i), &self.basis(j));
                worst = worst.max((lhs - self.br(&ai, &aj)).norm());
            }
        }
        worst
    }

    /// Whether `a` is an automorphism within `tol` (bracket residual and determinant).
    pub fn is_automorphism(&self, a: &DMatrix<f64>, tol: f64) -> bool {
        a.shape() == (self.dim, self.dim)
            && self.automorphism_residual(a) <= tol
            && a.clone().determinant().abs() > tol
    }

    /// Orthonormal basis of the center `Z(g)`.
    pub fn center_basis(&self) -> Vec<FiberVector> {
        let ns = linalg::null_space(self.inner.matrix(), 1e-9);
        ns.column_iter().map(|c| c.into_owned()).collect()
    }

    /// Frobenius-orthonormal basis of `Der(g)`.
    pub fn derivations_basis(&self) -> Vec<DerivationMatrix> {
        let n = self.dim;
        // Unknown D as vec (column-major), constraint rows indexed by (i, j, k).
        let mut a = DMatrix::zeros(n * n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let row = (i * n + j) * n + k;
                    // (D[e_i,e_j])_k = Σ_m c[i][j][m] D[k][m]
                    for m in 0..n {
                        a[(row, m * n + k)] += self.c(i, j, m);
                    }
                    // ([De_i, e_j])_k = Σ_m D[m][i] c[m][j][k]
                    for m in 0..n {
                        a[(row, i * n + m)] -= self.c(m, j, k);
                    }
                    // ([e_i, De_j])_k = Σ_m D[m][j] c[i][m][k]
                    for m in 0..n {
                        a[(row, j * n + m)] -= self.c(i, m, k);
                    }
                }
            }
        }
        let ns = linalg::null_space(&a, 1e-9);
        ns.column_iter().map(|c| linalg::unvec(&c.into_owned(), n)).collect()
    }

    /// Least-squares projection of `m` onto `span{ad(e_i)}`: the minimum-norm
    /// `x` with `ad(x) ≈ m` and the Frobenius residual.
    pub fn project_inner(&self, m: &DMatrix<f64>) -> (FiberVector, f64) {
        self.inner.solve(&linalg::vec_of(m))
    }

    /// `exp(D)` for a derivation `D`.
    pub fn exp_derivation(&self, d: &DerivationMatrix, tol: f64) -> Result<AutMatrix> {
        let r = self.derivation_residual(d);
        if !(r <= tol * d.norm().max(1.0)) {
            return input(format!("not a derivation (Leibniz residual {r:.3e})"));
        }
        Ok(linalg::expm(d))
    }

    /// Decides membership of `a` in `Inn(g)`.
    ///
    /// First the principal logarithm is projected onto `ad(g)`. When the
    /// logarithm does not exist (or is not a derivation) a bounded factor
    /// search over products of up to four exponentials runs instead; if it
    /// fails the verdict is [`Verdict::Undecided`].
    pub fn is_inner(&self, a: &AutMatrix, tol: &Tolerances) -> Result<InnerVerdict> {
        let aut_res = self.automorphism_residual(a);
        if !(aut_res <= tol.trans.max(tol.alg) * a.norm().max(1.0)) || a.clone().determinant().abs() <= tol.alg {
            return input(format!("not an automorphism (residual {aut_res:.3e})"));
        }
        let n = self.dim;
        let id = DMatrix::<f64>::identity(n, n);
        if self.is_abelian() {
            // Inn(g) = {id}.
            let r = (a - &id).norm();
            let verdict = if r <= tol.inner { Verdict::Inner } else { Verdict::Outer };
            return Ok(InnerVerdict {
                verdict,
                witness: vec![DVector::zeros(n)],
                residual: r,
            });
        }
        match linalg::principal_log(a, 100.0 * tol.alg) {
            Ok(d) => {
                let (x, r) = self.project_inner(&d);
                if r <= tol.inner {
                    return Ok(InnerVerdict {
                        verdict: Verdict::Inner,
                        witness: vec![x],
                        residual: r,
                    });
                }
                let der_tol = tol.alg.max(10.0 * aut_res) * d.norm().max(1.0);
                if self.derivation_residual(&d) <= der_tol {
                    return Ok(InnerVerdict {
                        verdict: Verdict::Outer,
                        witness: Vec::new(),
                        residual: r,
                    });
                }
            }
            Err(_) => {}
        }
        Ok(self.factor_search(a, tol))
    }

    /// `is_inner(A·B⁻¹)`: equality of outer classes.
    pub fn outer_equal(&self, a: &AutMatrix, b: &AutMatrix, tol: &Tolerances) -> Result<InnerVerdict> {
        let b_inv = b
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Input("singular automorphism".into()))?;
        self.is_inner(&(a * b_inv), tol)
    }

    fn product_of_exps(&self, factors: &[FiberVector]) -> DMatrix<f64> {
        let n = self.dim;
        factors
            .iter()
            .fold(DMatrix::identity(n, n), |acc, x| acc * linalg::expm(&self.ad_unchecked(x)))
    }

    fn factor_search(&self, a: &AutMatrix, tol: &Tolerances) -> InnerVerdict {
        const RESTARTS: usize = 16;
        const MAX_FACTORS: usize = 4;
        let n = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(0x1a_1b_2c);
        let mut best: Option<(Vec<FiberVector>, f64)> = None;
        for restart in 0..RESTARTS {
            // Peel off 1..=3 random exponentials, take the log of the rest.
            let peel = 1 + restart % (MAX_FACTORS - 1);
            let mut factors: Vec<FiberVector> = (0..peel)
                .map(|_| {
                    let v: FiberVector = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                    let norm = v.norm().max(1e-12);
                    v * (rng.gen_range(0.2..std::f64::consts::PI) / norm)
                })
                .collect();
            let rest = factors
                .iter()
                .rev()
                .fold(a.clone(), |acc, x| linalg::expm(&(-self.ad_unchecked(x))) * acc);
            let last = match linalg::principal_log(&rest, 100.0 * tol.alg) {
                Ok(d) => self.project_inner(&d).0,
                Err(_) => DVector::zeros(n),
            };
            factors.push(last);
            let r = self.polish(a, &mut factors, tol.inner * 0.1);
            if best.as_ref().is_none_or(|(_, b)| r < *b) {
                best = Some((factors, r));
            }
            if r <= tol.inner {
                break;
            }
        }
        let (witness, residual) = best.expect("at least one restart");
        if residual <= tol.inner {
            InnerVerdict {
                verdict: Verdict::Inner,
                witness,
                residual,
            }
        } else {
            InnerVerdict {
                verdict: Verdict::Undecided,
                witness: Vec::new(),
                residual,
            }
        }
    }

    /// Gradient-free coordinate descent on `‖A − Π exp(ad x_j)‖`.
    fn polish(&self, a: &AutMatrix, factors: &mut [FiberVector], target: f64) -> f64 {
        let objective = |f: &[FiberVector]| (a - self.product_of_exps(f)).norm();
        let mut current = objective(factors);
        let mut step = 0.25;
        let mut sweeps = 0;
        while current > target && step > 1e-13 && sweeps < 400 {
            sweeps += 1;
            let mut improved = false;
            for f in 0..factors.len() {
                for k in 0..self.dim {
                    for sign in [1.0, -1.0] {
                        factors[f][k] += sign * step;
                        let trial = objective(factors);
                        if trial < current {
                            current = trial;
                            improved = true;
                            break;
                        }
                        factors[f][k] -= sign * step;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        current
    }
}

/// Result of an inner-automorphism decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Verdict {
    Inner,
    Outer,
    Undecided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerVerdict {
    pub verdict: Verdict,
    /// Factors `x_1..x_k` with `A ≈ exp(ad x_1)···exp(ad x_k)`; empty unless inner.
    pub witness: Vec<FiberVector>,
    pub residual: f64,
}

impl InnerVerdict {
    pub fn is_inner(&self) -> bool {
        self.verdict == Verdict::Inner
    }
}

/// Checks antisymmetry and the Jacobi identity of the structure constants.
pub fn validate_algebra(g: &LieAlgebra, tol: f64) -> ValidationReport {
    let n = g.dim();
    let mut report = ValidationReport::new();
    let mut worst_anti = (0.0f64, (0, 0, 0));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let r = (g.c(i, j, k) + g.c(j, i, k)).abs();
                if r > worst_anti.0 {
                    worst_anti = (r, (i, j, k));
                }
            }
        }
    }
    report.check("antisymmetry", worst_anti.0, tol, || format!("{:?}", worst_anti.1));
    let mut worst_jac = (0.0f64, (0, 0, 0, 0));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let s: f64 = (0..n)
                        .map(|m| {
                            g.c(i, j, m) * g.c(m, k, l) + g.c(k, i, m) * g.c(m, j, l) + g.c(j, k, m) * g.c(m, i, l)
                        })
                        .sum();
                    if s.abs() > worst_jac.0 {
                        worst_jac = (s.abs(), (i, j, k, l));
                    }
                }
            }
        }
    }
    report.check("jacobi", worst_jac.0, tol, || format!("{:?}", worst_jac.1));
    report
}
