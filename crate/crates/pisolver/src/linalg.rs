//! Small dense linear-algebra kernels.
//!
//! Everything here operates on modest problem sizes (basis dimensions up to a
//! few hundred), so the implementations favour clarity and reproducibility
//! over blocking tricks: all reductions run in a fixed order, which keeps
//! repeated runs bit-identical.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// `A·x` with a fixed accumulation order (rows outer, columns inner,
/// ascending). Loss gradients are computed through this kernel in more than
/// one code path; sharing it keeps those paths bit-identical.
pub fn mat_vec(a: &Array2<f64>, x: &Array1<f64>) -> Array1<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    debug_assert_eq!(n, x.len());
    let mut out = Array1::<f64>::zeros(m);
    for i in 0..m {
        let mut acc = 0.0;
        for j in 0..n {
            acc += a[[i, j]] * x[j];
        }
        out[i] = acc;
    }
    out
}

/// `Aᵀ·x` with a fixed accumulation order (columns outer, rows inner,
/// ascending); see [`mat_vec`].
pub fn mat_t_vec(a: &Array2<f64>, x: &Array1<f64>) -> Array1<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    debug_assert_eq!(m, x.len());
    let mut out = Array1::<f64>::zeros(n);
    for j in 0..n {
        let mut acc = 0.0;
        for i in 0..m {
            acc += a[[i, j]] * x[i];
        }
        out[j] = acc;
    }
    out
}

/// Dense matrix product `A·B` with a fixed accumulation order (row, column,
/// inner index ascending).
pub fn mat_mul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (m, k) = (a.nrows(), a.ncols());
    let n = b.ncols();
    debug_assert_eq!(k, b.nrows());
    let mut out = Array2::<f64>::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[[i, p]] * b[[p, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Sequential dot product (ascending index), shared for the same reason as
/// [`mat_vec`].
pub fn dot(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Cholesky factorization `A = L Lᵀ` of a symmetric positive definite matrix.
/// Returns the lower-triangular factor.
pub fn cholesky_factor(a: &Array2<f64>, context: &str) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch {
            context: format!("cholesky_factor({context})"),
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::NotPositiveDefinite {
                        context: context.to_string(),
                    });
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve `L Lᵀ x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

/// Solve a symmetric positive definite system `A x = b`.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>, context: &str) -> Result<Array1<f64>> {
    let l = cholesky_factor(a, context)?;
    Ok(cholesky_solve(&l, b))
}

/// Solve a ridge-regularized least-squares problem `min ‖V c − y‖²`,
/// forming the normal equations `(VᵀV + εI) c = Vᵀ y`. The ridge is scaled
/// to the trace of `VᵀV` so rank-deficient value matrices stay solvable.
pub fn least_squares(v: &Array2<f64>, y: &Array1<f64>, ridge: f64) -> Result<Array1<f64>> {
    if v.nrows() != y.len() {
        return Err(Error::ShapeMismatch {
            context: "least_squares".to_string(),
            expected: format!("{} rows", v.nrows()),
            got: format!("{} rows", y.len()),
        });
    }
    let vt = v.t();
    let mut gram = vt.dot(v);
    let n = gram.nrows();
    let trace: f64 = (0..n).map(|i| gram[[i, i]]).sum();
    let eps = ridge * trace.max(1.0) / n as f64;
    for i in 0..n {
        gram[[i, i]] += eps;
    }
    let rhs = vt.dot(y);
    solve_spd(&gram, &rhs, "least_squares normal equations")
}

/// Solve a tridiagonal system by the Thomas algorithm. `lower` and `upper`
/// have length `n − 1` and hold the sub- and super-diagonals.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n - 1 || upper.len() != n - 1 || rhs.len() != n {
        return Err(Error::ShapeMismatch {
            context: "solve_tridiagonal".to_string(),
            expected: format!("diag {n}, off-diagonals {}", n - 1),
            got: format!(
                "lower {}, upper {}, rhs {}",
                lower.len(),
                upper.len(),
                rhs.len()
            ),
        });
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::Singular {
            context: "solve_tridiagonal".to_string(),
        });
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::Singular {
                context: "solve_tridiagonal".to_string(),
            });
        }
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Solve a cyclic tridiagonal system (constant corner couplings `corner_lo`
/// at `[0, n−1]` and `corner_hi` at `[n−1, 0]`) via the Sherman–Morrison
/// correction on top of the Thomas algorithm.
pub fn solve_cyclic_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    corner_hi: f64,
    corner_lo: f64,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    if n < 3 {
        return Err(Error::InvalidConfig {
            reason: format!("cyclic tridiagonal system needs n >= 3, got {n}"),
        });
    }
    // A = T + u vᵀ with u = (γ, 0, …, c_hi)ᵀ, v = (1, 0, …, c_lo/γ)ᵀ.
    let gamma = -diag[0];
    let mut d_mod = diag.to_vec();
    d_mod[0] -= gamma;
    d_mod[n - 1] -= corner_lo * corner_hi / gamma;
    let y = solve_tridiagonal(lower, &d_mod, upper, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = corner_hi;
    let z = solve_tridiagonal(lower, &d_mod, upper, &u)?;
    let vy = y[0] + corner_lo / gamma * y[n - 1];
    let vz = z[0] + corner_lo / gamma * z[n - 1];
    let denom = 1.0 + vz;
    if denom == 0.0 {
        return Err(Error::Singular {
            context: "solve_cyclic_tridiagonal".to_string(),
        });
    }
    let factor = vy / denom;
    Ok((0..n).map(|i| y[i] - factor * z[i]).collect())
}

/// Accumulate the rank-one update `A += scale · x yᵀ`.
pub fn add_outer(a: &mut Array2<f64>, scale: f64, x: &Array1<f64>, y: &Array1<f64>) {
    for i in 0..x.len() {
        let xi = scale * x[i];
        for j in 0..y.len() {
            a[[i, j]] += xi * y[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_recovers_known_solution() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let x_true = array![1.0, -2.0, 0.5];
        let b = a.dot(&x_true);
        let x = solve_spd(&a, &b, "test").unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(x[i], x_true[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        let b = array![1.0, 1.0];
        assert!(matches!(
            solve_spd(&a, &b, "test"),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn thomas_matches_dense_solve() {
        let n = 8;
        let lower = vec![-1.0; n - 1];
        let diag = vec![2.5; n];
        let upper = vec![-1.0; n - 1];
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        // Residual check against the assembled matrix.
        for i in 0..n {
            let mut r = diag[i] * x[i] - rhs[i];
            if i > 0 {
                r += lower[i - 1] * x[i - 1];
            }
            if i < n - 1 {
                r += upper[i] * x[i + 1];
            }
            assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cyclic_thomas_matches_dense_residual() {
        let n = 9;
        let lower = vec![-0.8; n - 1];
        let diag = vec![2.2; n];
        let upper = vec![-0.8; n - 1];
        let (c_hi, c_lo) = (-0.8, -0.8);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.71).cos()).collect();
        let x = solve_cyclic_tridiagonal(&lower, &diag, &upper, c_hi, c_lo, &rhs).unwrap();
        for i in 0..n {
            let mut r = diag[i] * x[i] - rhs[i];
            if i > 0 {
                r += lower[i - 1] * x[i - 1];
            }
            if i < n - 1 {
                r += upper[i] * x[i + 1];
            }
            if i == 0 {
                r += c_lo * x[n - 1];
            }
            if i == n - 1 {
                r += c_hi * x[0];
            }
            assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn least_squares_recovers_exact_coefficients() {
        // Overdetermined Vandermonde fit where the target is representable.
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let mut v = Array2::<f64>::zeros((20, 3));
        for (i, &x) in xs.iter().enumerate() {
            v[[i, 0]] = 1.0;
            v[[i, 1]] = x;
            v[[i, 2]] = x * x;
        }
        let c_true = array![0.3, -1.2, 2.0];
        let y = v.dot(&c_true);
        let c = least_squares(&v, &y, 1e-12).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(c[i], c_true[i], epsilon = 1e-8);
        }
    }
}
