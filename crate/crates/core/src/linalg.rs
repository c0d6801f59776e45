//! Small dense linear algebra: SVD null spaces, minimum-norm least squares,
//! matrix exponential and principal logarithm.

use nalgebra::{DMatrix, DVector};

/// Orthonormal basis (as columns) of the null space of `a`.
///
/// Singular values `σ ≤ tol · max(1, σ_max)` count as zero.
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Pad to a tall matrix so that V is complete.
    let padded = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let thresh = tol * smax.max(1.0);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= thresh)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Numerical rank with the same thresholding rule as [`null_space`].
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    a.ncols() - null_space(a, tol).ncols()
}

/// Precomputed minimum-norm least-squares solver for a fixed matrix.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl LeastSquares {
    pub fn new(a: DMatrix<f64>, tol: f64) -> Self {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Self {
                pinv: DMatrix::zeros(n, m),
                a,
            };
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let thresh = tol * smax.max(1.0);
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let mut pinv = DMatrix::zeros(n, m);
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > thresh {
                pinv += v_t.row(k).transpose() * u.column(k).transpose() / s;
            }
        }
        Self { a, pinv }
    }

    /// Minimum-norm `x` minimizing `‖A x − b‖` and the residual norm.
    pub fn solve(&self, b: &DVector<f64>) -> (DVector<f64>, f64) {
        let x = &self.pinv * b;
        let r = (&self.a * &x - b).norm();
        (x, r)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

/// Column-major flattening of a matrix.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

pub fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

/// Matrix exponential (scaling and squaring with a Padé core).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.exp()
}

/// Why a real principal logarithm could not be produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoLog {
    /// A real eigenvalue lies on the closed negative axis.
    Spectrum,
    /// The inverse scaling-and-squaring iteration did not reproduce the input.
    NotConverged,
}

fn sqrtm_denman_beavers(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse()?;
        let zi = z.clone().try_inverse()?;
        let y_next = (&y + &zi) * 0.5;
        let z_next = (&z + &yi) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm().max(1.0) {
            return Some(y);
        }
    }
    None
}

/// Real principal logarithm by inverse scaling and squaring.
///
/// `accept` bounds `‖exp(log A) − A‖` relative to `max(1, ‖A‖)`.
pub fn principal_log(a: &DMatrix<f64>, accept: f64) -> Result<DMatrix<f64>, NoLog> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let scale = a.norm().max(1.0);
    let schur = a.clone().try_schur(f64::EPSILON, 10_000).ok_or(NoLog::NotConverged)?;
    for ev in schur.complex_eigenvalues().iter() {
        if ev.im.abs() <= 1e-10 * scale && ev.re <= 1e-12 * scale {
            return Err(NoLog::Spectrum);
        }
    }
    let mut x = a.clone();
    let mut k = 0u32;
    while (&x - &id).norm() > 0.25 {
        if k >= 50 {
            return Err(NoLog::NotConverged);
        }
        x = sqrtm_denman_beavers(&x).ok_or(NoLog::NotConverged)?;
        k += 1;
    }
    // log(X) = 2 atanh(Z), Z = (X − I)(X + I)⁻¹, ‖Z‖ well below 1.
    let e = &x - &id;
    let z = &e * (&x + &id).try_inverse().ok_or(NoLog::NotConverged)?;
    let z2 = &z * &z;
    let mut term = z.clone();
    let mut sum = z.clone();
    for j in 1..200 {
        term = &term * &z2;
        let add = &term / (2 * j + 1) as f64;
        let small = add.norm() < 1e-18;
        sum += add;
        if small {
            break;
        }
    }
    let log = sum * 2.0 * 2f64.powi(k as i32);
    if (expm(&log) - a).norm() > accept * scale {
        return Err(NoLog::NotConverged);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn null_space_of_rank_one() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let ns = null_space(&a, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((&a * &ns).norm() < 1e-12);
    }

    #[test]
    fn least_squares_is_minimum_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let ls = LeastSquares::new(a, 1e-12);
        let (x, r) = ls.solve(&DVector::from_vec(vec![2.0, 1.0]));
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_of_rotation_round_trips() {
        let (s, c) = 2.5f64.sin_cos();
        let r = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let l = principal_log(&r, 1e-7).unwrap();
        assert_abs_diff_eq!(l[(1, 0)], 2.5, epsilon = 1e-10);
        assert!((expm(&l) - r).norm() < 1e-12);
    }

    #[test]
    fn log_rejects_negative_eigenvalues() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -1.0]));
        assert_eq!(principal_log(&a, 1e-7), Err(NoLog::Spectrum));
        let singular = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
        assert_eq!(principal_log(&singular, 1e-7), Err(NoLog::Spectrum));
    }
}
