//! Conditioning diagnostics for quadratic physics losses.
//!
//! For linear ansätze the physics loss is an exact quadratic
//! `L(Θ) = Θᵀ A Θ − 2 bᵀ Θ + const` with gradient `∇L = 2(AΘ − b)`, so the
//! geometry of training is fully described by the spectrum of `A`. This module
//! provides the tools to measure that geometry and to act on it:
//!
//! * a dense symmetric eigensolver ([`jacobi_eigh`]) and condition-number
//!   helpers ([`spectrum_and_kappa`], [`preconditioned_kappa`]),
//! * an analytically assembled spectral test system for the sine-forced
//!   Poisson family on a Fourier basis ([`fourier_poisson_system`]), whose
//!   condition number grows like the fourth power of the frequency cutoff,
//! * step-count measurement for (optionally preconditioned) gradient descent
//!   ([`descent_steps_to_tol`]) and a log–log slope fit ([`log_log_slope`])
//!   to check how step counts scale with conditioning,
//! * training of a linear preconditioner by minimizing the contraction norm of
//!   the unrolled descent map ([`train_linear_preconditioner`]), and
//! * two-dimensional loss-landscape slices ([`loss_slice`],
//!   [`quadratic_slice`]) with axis helpers for Hessian-eigenvector and
//!   trajectory-based direction choices.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::{eval_basis, BasisSpec};
use crate::error::{Error, Result};
use crate::linalg::{add_outer, dot, mat_mul, mat_vec, solve_spd};
use crate::optim::Adam;

/// Relative cutoff below which eigenvalues are treated as exact null modes
/// when forming condition numbers.
pub const EIGEN_DROP_TOL: f64 = 1e-10;

/// Hard ceiling on descent iterations in [`descent_steps_to_tol`].
pub const MAX_DESCENT_STEPS: usize = 20_000_000;

fn require_square_symmetric(a: &Array2<f64>, context: &str) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch {
            context: context.to_string(),
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", n, a.ncols()),
        });
    }
    let mut max_abs = 0.0f64;
    for v in a.iter() {
        max_abs = max_abs.max(v.abs());
    }
    let tol = 1e-10 * (1.0 + max_abs);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[[i, j]] - a[[j, i]]).abs() > tol {
                return Err(Error::InvalidConfig {
                    reason: format!("{context}: matrix is not symmetric"),
                });
            }
        }
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted ascending and
/// eigenvectors as the corresponding columns, so `A·V = V·diag(λ)` and
/// `VᵀV = I`. Intended for the modest matrix sizes that arise here (basis
/// dimensions up to a few hundred); rejects non-symmetric input.
pub fn jacobi_eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    require_square_symmetric(a, "eigendecomposition")?;
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n == 0 {
        return Ok((Array1::zeros(0), v));
    }

    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if frob == 0.0 {
        return Ok((Array1::zeros(n), v));
    }
    let off2 = |m: &Array2<f64>| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += m[[i, j]] * m[[i, j]];
                }
            }
        }
        acc
    };
    let target = (1e-14 * frob).powi(2);
    for _sweep in 0..50 {
        if off2(&m) <= target {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                // Rotation angle that annihilates the (p, q) entry.
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let (aip, aiq) = (m[[i, p]], m[[i, q]]);
                    m[[i, p]] = c * aip - s * aiq;
                    m[[i, q]] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let (apj, aqj) = (m[[p, j]], m[[q, j]]);
                    m[[p, j]] = c * apj - s * aqj;
                    m[[q, j]] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let (vip, viq) = (v[[i, p]], v[[i, q]]);
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    if off2(&m) > (1e-10 * frob).powi(2) {
        return Err(Error::NumericDivergence {
            context: "eigensolver did not converge".to_string(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].total_cmp(&m[[j, j]]));
    let mut lam = Array1::<f64>::zeros(n);
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        lam[dst] = m[[src, src]];
        for i in 0..n {
            vecs[[i, dst]] = v[[i, src]];
        }
    }
    Ok((lam, vecs))
}

/// Condition number from a precomputed spectrum: the ratio of the largest
/// eigenvalue to the smallest eigenvalue above `EIGEN_DROP_TOL · λ_max`
/// (smaller magnitudes count as null modes and are excluded).
///
/// Errors with [`Error::UndefinedMetric`] when no eigenvalue is positive or a
/// significantly negative eigenvalue makes the matrix indefinite.
pub fn kappa_from_spectrum(lam: &Array1<f64>) -> Result<f64> {
    let lam_max = lam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lam_max > 0.0) {
        return Err(Error::UndefinedMetric {
            reason: "condition number needs at least one positive eigenvalue".to_string(),
        });
    }
    let cutoff = EIGEN_DROP_TOL * lam_max;
    let mut lam_min = f64::INFINITY;
    for &l in lam.iter() {
        if l < -cutoff {
            return Err(Error::UndefinedMetric {
                reason: format!("condition number undefined for indefinite matrix (found eigenvalue {l:.3e})"),
            });
        }
        if l > cutoff && l < lam_min {
            lam_min = l;
        }
    }
    Ok(lam_max / lam_min)
}

/// Eigenvalues (ascending) and condition number of a symmetric matrix; see
/// [`kappa_from_spectrum`] for the null-mode convention.
pub fn spectrum_and_kappa(a: &Array2<f64>) -> Result<(Array1<f64>, f64)> {
    let (lam, _) = jacobi_eigh(a)?;
    let kappa = kappa_from_spectrum(&lam)?;
    Ok((lam, kappa))
}

/// A quadratic objective `L(Θ) = Θᵀ A Θ − 2 bᵀ Θ + const` with known
/// minimizer, used for conditioning experiments.
#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    /// Symmetric positive definite Hessian half (`∇²L = 2A`).
    pub a: Array2<f64>,
    /// Linear term; the minimizer solves `A·Θ = b`.
    pub b: Array1<f64>,
    /// The planted minimizer used to build `b`.
    pub theta_star: Array1<f64>,
}

/// Assemble the exact normal operator of the sine-forced Poisson family on an
/// orthonormal Fourier basis over one period.
///
/// With basis functions `{1/√(2π), cos(kξ)/√π, sin(kξ)/√π}` on `[−π, π]`, the
/// interior residual Gram matrix of `−u''` is diagonal with entries
/// `0, 1⁴, 1⁴, 2⁴, 2⁴, …, k_max⁴, k_max⁴` (the constant mode is annihilated),
/// and a boundary penalty `λ·φ(π)φ(π)ᵀ` on the right endpoint value pins the
/// constant mode. The smallest eigenvalue is set by the boundary penalty and
/// stays near `λ/(2π)` regardless of `k_max`, while the largest grows like
/// `k_max⁴` — so the condition number grows at least like `k_max⁴`.
///
/// The target coefficients `theta_star` are standard normal draws from a
/// `ChaCha8` stream seeded with `seed`, and `b = A·theta_star`.
pub fn fourier_poisson_system(k_max: usize, lambda_bc: f64, seed: u64) -> Result<QuadraticSystem> {
    if k_max == 0 {
        return Err(Error::InvalidConfig {
            reason: "spectral system needs k_max >= 1".to_string(),
        });
    }
    if !(lambda_bc > 0.0) || !lambda_bc.is_finite() {
        return Err(Error::InvalidConfig {
            reason: format!("boundary weight must be positive and finite, got {lambda_bc}"),
        });
    }
    let n = 2 * k_max + 1;
    let pi = std::f64::consts::PI;
    let spec = BasisSpec::fourier(k_max, (-pi, pi))?;
    let phi = eval_basis(&spec, &[pi])?.values.row(0).to_owned();

    let mut a = Array2::<f64>::zeros((n, n));
    for k in 1..=k_max {
        let k4 = (k as f64).powi(4);
        a[[2 * k - 1, 2 * k - 1]] = k4;
        a[[2 * k, 2 * k]] = k4;
    }
    add_outer(&mut a, lambda_bc, &phi, &phi);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_star = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let b = mat_vec(&a, &theta_star);
    Ok(QuadraticSystem { a, b, theta_star })
}

/// Count gradient-descent steps until the iterate reaches the minimizer to a
/// relative tolerance.
///
/// Starting from `Θ_0 = 0`, iterates `Θ ← Θ − h·P·∇L(Θ)` with
/// `∇L = 2(AΘ − b)` and the stability-scaled step `h = step_scale / (2·μ_max)`
/// where `μ_max` is the largest eigenvalue of the (preconditioned) operator
/// `P·A` (`P = I` when `precond` is `None`). Returns the first step count `t`
/// with `‖Θ_t − Θ*‖ ≤ eps·‖Θ_0 − Θ*‖`.
///
/// The slowest error mode contracts by `1 − step_scale/κ` per step, so the
/// returned count grows linearly with the condition number κ of `P·A`.
/// `step_scale` must lie in `(0, 2)` for convergence. Gives up with
/// [`Error::NumericDivergence`] after [`MAX_DESCENT_STEPS`] steps.
pub fn descent_steps_to_tol(
    a: &Array2<f64>,
    b: &Array1<f64>,
    precond: Option<&Array2<f64>>,
    step_scale: f64,
    eps: f64,
) -> Result<usize> {
    require_square_symmetric(a, "descent step count")?;
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::ShapeMismatch {
            context: "descent step count right-hand side".to_string(),
            expected: format!("{n}"),
            got: format!("{}", b.len()),
        });
    }
    if !(step_scale > 0.0 && step_scale < 2.0) {
        return Err(Error::InvalidConfig {
            reason: format!("step scale must lie in (0, 2), got {step_scale}"),
        });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("descent tolerance must lie in (0, 1), got {eps}"),
        });
    }
    let mu_max = match precond {
        None => {
            let (lam, _) = jacobi_eigh(a)?;
            lam[n - 1]
        }
        Some(p) => {
            let (lam, _) = preconditioned_spectrum(a, p)?;
            lam[n - 1]
        }
    };
    if !(mu_max > 0.0) {
        return Err(Error::NotPositiveDefinite {
            context: "descent step count".to_string(),
        });
    }
    let theta_star = solve_spd(a, b, "descent step count target")?;
    let e0 = dot(&theta_star, &theta_star).sqrt();
    if e0 == 0.0 {
        return Ok(0);
    }
    let h = step_scale / (2.0 * mu_max);
    let mut theta = Array1::<f64>::zeros(n);
    for t in 1..=MAX_DESCENT_STEPS {
        let az = mat_vec(a, &theta);
        let mut g = Array1::<f64>::zeros(n);
        for i in 0..n {
            g[i] = 2.0 * (az[i] - b[i]);
        }
        let d = match precond {
            Some(p) => mat_vec(p, &g),
            None => g,
        };
        for i in 0..n {
            theta[i] -= h * d[i];
        }
        let mut err2 = 0.0;
        for i in 0..n {
            let e = theta[i] - theta_star[i];
            err2 += e * e;
        }
        if err2.sqrt() <= eps * e0 {
            return Ok(t);
        }
        if !err2.is_finite() {
            return Err(Error::NumericDivergence {
                context: "descent iterate became non-finite".to_string(),
            });
        }
    }
    Err(Error::NumericDivergence {
        context: format!("descent did not reach tolerance within {MAX_DESCENT_STEPS} steps"),
    })
}

/// Least-squares slope of `ln y` against `ln x`. All inputs must be positive;
/// used to verify power-law relationships such as step count versus condition
/// number.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidConfig {
            reason: format!(
                "slope fit needs two or more paired samples, got {} and {}",
                xs.len(),
                ys.len()
            ),
        });
    }
    for (&x, &y) in xs.iter().zip(ys) {
        if !(x > 0.0) || !(y > 0.0) {
            return Err(Error::UndefinedMetric {
                reason: format!("log-log slope needs positive samples, got ({x}, {y})"),
            });
        }
    }
    let us: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let vs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let um = us.iter().sum::<f64>() / us.len() as f64;
    let vm = vs.iter().sum::<f64>() / vs.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (u, v) in us.iter().zip(&vs) {
        num += (u - um) * (v - vm);
        den += (u - um) * (u - um);
    }
    if den <= 0.0 {
        return Err(Error::UndefinedMetric {
            reason: "log-log slope undefined for constant abscissae".to_string(),
        });
    }
    Ok(num / den)
}

/// Configuration for [`train_linear_preconditioner`].
#[derive(Debug, Clone)]
pub struct PrecondTrainConfig {
    /// Number of unrolled descent steps whose contraction norm is minimized.
    pub unroll_steps: usize,
    /// Step size of the preconditioned descent update being unrolled. The
    /// ideal preconditioner is `P = (2·eta·A)⁻¹`.
    pub eta: f64,
    /// Optimizer iterations.
    pub iters: usize,
    /// Optimizer learning rate.
    pub lr: f64,
}

impl Default for PrecondTrainConfig {
    fn default() -> Self {
        Self {
            unroll_steps: 2,
            eta: 0.5,
            iters: 100_000,
            lr: 1e-2,
        }
    }
}

/// Training summary from [`train_linear_preconditioner`].
#[derive(Debug, Clone)]
pub struct PrecondReport {
    /// The trained symmetric preconditioner.
    pub p: Array2<f64>,
    /// Contraction objective at the (diagonal) initialization.
    pub initial_objective: f64,
    /// Contraction objective of the trained preconditioner.
    pub final_objective: f64,
}

/// The unrolled descent map on the error is `e ↦ M^L·e` with
/// `M = I − 2·eta·P·A`; this returns `M`.
fn contraction_matrix(a: &Array2<f64>, p: &Array2<f64>, eta: f64) -> Array2<f64> {
    let n = a.nrows();
    let mut m = mat_mul(p, a);
    for v in m.iter_mut() {
        *v *= -2.0 * eta;
    }
    for i in 0..n {
        m[[i, i]] += 1.0;
    }
    m
}

/// Squared Frobenius norm of the `L`-step unrolled error map,
/// `J(P) = ‖M^L‖_F²` with `M = I − 2·eta·P·A`. Equals the expected squared
/// error after `L` preconditioned descent steps over isotropic random starts,
/// and vanishes exactly at `P = (2·eta·A)⁻¹`.
pub fn unrolled_contraction_objective(
    a: &Array2<f64>,
    p: &Array2<f64>,
    eta: f64,
    steps: usize,
) -> f64 {
    let m = contraction_matrix(a, p, eta);
    let mut ml = Array2::<f64>::eye(a.nrows());
    for _ in 0..steps {
        ml = mat_mul(&ml, &m);
    }
    ml.iter().map(|x| x * x).sum()
}

/// Gradient of [`unrolled_contraction_objective`] with respect to every entry
/// of `P` (unconstrained; callers training a symmetric `P` should project the
/// result onto symmetric matrices).
///
/// Derivation: with `u_j = M^j`, `dJ/dM = 2·Σ_{j=0}^{L−1} (Mᵀ)^{L−1−j}·M^L·(Mᵀ)^j`
/// and the chain rule through `M = I − 2·eta·P·A` gives
/// `dJ/dP = −2·eta·(dJ/dM)·A`.
pub fn unrolled_contraction_gradient(
    a: &Array2<f64>,
    p: &Array2<f64>,
    eta: f64,
    steps: usize,
) -> Array2<f64> {
    let n = a.nrows();
    let m = contraction_matrix(a, p, eta);
    let mut pows: Vec<Array2<f64>> = Vec::with_capacity(steps + 1);
    pows.push(Array2::<f64>::eye(n));
    for j in 0..steps {
        let next = mat_mul(&pows[j], &m);
        pows.push(next);
    }
    let tpows: Vec<Array2<f64>> = pows.iter().map(|q| q.t().to_owned()).collect();
    let ml = &pows[steps];
    let mut djdm = Array2::<f64>::zeros((n, n));
    for j in 0..steps {
        let left = mat_mul(&tpows[steps - 1 - j], ml);
        let term = mat_mul(&left, &tpows[j]);
        for (d, t) in djdm.iter_mut().zip(term.iter()) {
            *d += 2.0 * t;
        }
    }
    let mut djdp = mat_mul(&djdm, a);
    for v in djdp.iter_mut() {
        *v *= -2.0 * eta;
    }
    djdp
}

/// Train a symmetric linear preconditioner for the quadratic objective with
/// Hessian half `A` by minimizing the unrolled contraction norm
/// [`unrolled_contraction_objective`] with Adam.
///
/// Starts from the diagonal (Jacobi) preconditioner `P₀ = diag(2·eta·a_ii)⁻¹`
/// and projects onto symmetric matrices after every step. At the global
/// optimum `P = (2·eta·A)⁻¹` the preconditioned operator `P·A` is a multiple
/// of the identity, so its condition number is 1.
///
/// The learning rate follows a cosine schedule from `cfg.lr` down to zero,
/// and the returned preconditioner is the iterate with the lowest objective
/// seen during training, not necessarily the last one. Both guards matter
/// near the optimum: the objective has a locally quartic (curvature-free)
/// valley there, where constant-rate Adam settles into a limit cycle instead
/// of converging.
pub fn train_linear_preconditioner(
    a: &Array2<f64>,
    cfg: &PrecondTrainConfig,
) -> Result<PrecondReport> {
    require_square_symmetric(a, "preconditioner training")?;
    if cfg.unroll_steps == 0 {
        return Err(Error::InvalidConfig {
            reason: "preconditioner training needs at least one unrolled step".to_string(),
        });
    }
    if !(cfg.eta > 0.0) || !(cfg.lr > 0.0) || cfg.iters == 0 {
        return Err(Error::InvalidConfig {
            reason: "preconditioner training needs positive eta, lr, and iteration count"
                .to_string(),
        });
    }
    let n = a.nrows();
    let mut p = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        if !(a[[i, i]] > 0.0) {
            return Err(Error::NotPositiveDefinite {
                context: "preconditioner initialization (non-positive diagonal)".to_string(),
            });
        }
        p[[i, i]] = 1.0 / (2.0 * cfg.eta * a[[i, i]]);
    }
    let initial_objective = unrolled_contraction_objective(a, &p, cfg.eta, cfg.unroll_steps);

    let mut adam = Adam::new(cfg.lr, n * n);
    let mut flat = Array1::<f64>::zeros(n * n);
    let mut best_p = p.clone();
    let mut best_objective = initial_objective;
    for iter in 0..cfg.iters {
        adam.lr = cfg.lr
            * 0.5
            * (1.0 + (std::f64::consts::PI * iter as f64 / cfg.iters as f64).cos());
        let g = unrolled_contraction_gradient(a, &p, cfg.eta, cfg.unroll_steps);
        // Symmetric projection of the gradient, flattened row-major.
        let mut gflat = Array1::<f64>::zeros(n * n);
        for i in 0..n {
            for j in 0..n {
                gflat[i * n + j] = 0.5 * (g[[i, j]] + g[[j, i]]);
                flat[i * n + j] = p[[i, j]];
            }
        }
        adam.step(&mut flat, &gflat);
        for i in 0..n {
            for j in 0..n {
                p[[i, j]] = flat[i * n + j];
            }
        }
        // Keep P exactly symmetric against rounding drift.
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (p[[i, j]] + p[[j, i]]);
                p[[i, j]] = avg;
                p[[j, i]] = avg;
            }
        }
        let objective = unrolled_contraction_objective(a, &p, cfg.eta, cfg.unroll_steps);
        if objective < best_objective {
            best_objective = objective;
            best_p.assign(&p);
        }
    }
    if !best_objective.is_finite() {
        return Err(Error::NumericDivergence {
            context: "preconditioner training produced a non-finite objective".to_string(),
        });
    }
    Ok(PrecondReport {
        p: best_p,
        initial_objective,
        final_objective: best_objective,
    })
}

/// Spectrum (ascending) of the preconditioned operator `P·A`, computed through
/// the symmetric similarity `A^{1/2}·P·A^{1/2}`, which shares its eigenvalues.
fn preconditioned_spectrum(a: &Array2<f64>, p: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    require_square_symmetric(a, "preconditioned spectrum")?;
    require_square_symmetric(p, "preconditioned spectrum")?;
    let n = a.nrows();
    if p.nrows() != n {
        return Err(Error::ShapeMismatch {
            context: "preconditioned spectrum".to_string(),
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", p.nrows(), p.ncols()),
        });
    }
    let (lam, v) = jacobi_eigh(a)?;
    let lam_max = lam.iter().copied().fold(0.0f64, f64::max);
    let mut vd = v.clone();
    for j in 0..n {
        if lam[j] < -1e-10 * (1.0 + lam_max) {
            return Err(Error::NotPositiveDefinite {
                context: "matrix square root for preconditioned spectrum".to_string(),
            });
        }
        let s = lam[j].max(0.0).sqrt();
        for i in 0..n {
            vd[[i, j]] *= s;
        }
    }
    let sqrt_a = mat_mul(&vd, &v.t().to_owned());
    let mut b = mat_mul(&mat_mul(&sqrt_a, p), &sqrt_a);
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (b[[i, j]] + b[[j, i]]);
            b[[i, j]] = avg;
            b[[j, i]] = avg;
        }
    }
    jacobi_eigh(&b)
}

/// Condition number of the preconditioned operator `P·A` (both symmetric,
/// `A` positive semidefinite), with the same null-mode convention as
/// [`kappa_from_spectrum`].
pub fn preconditioned_kappa(a: &Array2<f64>, p: &Array2<f64>) -> Result<f64> {
    let (lam, _) = preconditioned_spectrum(a, p)?;
    kappa_from_spectrum(&lam)
}

/// Extreme eigenpairs of a symmetric matrix, for use as landscape slice axes.
#[derive(Debug, Clone)]
pub struct ExtremeDirections {
    /// Unit eigenvector of the smallest eigenvalue.
    pub d_min: Array1<f64>,
    /// Unit eigenvector of the largest eigenvalue.
    pub d_max: Array1<f64>,
    /// Smallest eigenvalue.
    pub lambda_min: f64,
    /// Largest eigenvalue.
    pub lambda_max: f64,
}

/// Extreme eigenvectors and eigenvalues of a symmetric matrix.
pub fn hessian_extreme_directions(a: &Array2<f64>) -> Result<ExtremeDirections> {
    let (lam, v) = jacobi_eigh(a)?;
    let n = lam.len();
    if n == 0 {
        return Err(Error::DegenerateGeometry {
            reason: "cannot pick directions from an empty matrix".to_string(),
        });
    }
    Ok(ExtremeDirections {
        d_min: v.column(0).to_owned(),
        d_max: v.column(n - 1).to_owned(),
        lambda_min: lam[0],
        lambda_max: lam[n - 1],
    })
}

/// Orthonormal slice axes from a descent trajectory: the first axis points
/// from the first iterate to the last, the second is the component of an
/// intermediate displacement orthogonal to it (falling back to coordinate
/// directions when the trajectory is a straight line).
pub fn trajectory_directions(thetas: &[Array1<f64>]) -> Result<(Array1<f64>, Array1<f64>)> {
    if thetas.len() < 2 {
        return Err(Error::DegenerateGeometry {
            reason: "trajectory slice axes need at least two iterates".to_string(),
        });
    }
    let dim = thetas[0].len();
    if dim < 2 {
        return Err(Error::DegenerateGeometry {
            reason: "trajectory slice axes need at least two parameters".to_string(),
        });
    }
    let first = &thetas[0];
    let last = &thetas[thetas.len() - 1];
    let mut d1 = Array1::<f64>::zeros(dim);
    for i in 0..dim {
        d1[i] = last[i] - first[i];
    }
    let n1 = dot(&d1, &d1).sqrt();
    let scale = 1.0 + dot(first, first).sqrt();
    if n1 <= 1e-12 * scale {
        return Err(Error::DegenerateGeometry {
            reason: "trajectory endpoints coincide".to_string(),
        });
    }
    for v in d1.iter_mut() {
        *v /= n1;
    }

    let mid = &thetas[thetas.len() / 2];
    let mut candidates: Vec<Array1<f64>> = Vec::with_capacity(1 + dim);
    let mut mid_disp = Array1::<f64>::zeros(dim);
    for i in 0..dim {
        mid_disp[i] = mid[i] - first[i];
    }
    candidates.push(mid_disp);
    for i in 0..dim {
        let mut e = Array1::<f64>::zeros(dim);
        e[i] = 1.0;
        candidates.push(e);
    }
    for cand in candidates {
        let proj = dot(&cand, &d1);
        let mut u = cand;
        for i in 0..dim {
            u[i] -= proj * d1[i];
        }
        let nu = dot(&u, &u).sqrt();
        if nu > 1e-8 {
            for v in u.iter_mut() {
                *v /= nu;
            }
            return Ok((d1, u));
        }
    }
    Err(Error::DegenerateGeometry {
        reason: "no direction independent of the trajectory axis".to_string(),
    })
}

/// A two-dimensional loss slice: `loss[[i, j]]` is the objective at
/// `anchor + alphas[i]·d1 + betas[j]·d2`.
#[derive(Debug, Clone)]
pub struct LandscapeSlice {
    /// Grid offsets along the first axis.
    pub alphas: Vec<f64>,
    /// Grid offsets along the second axis.
    pub betas: Vec<f64>,
    /// Objective values, indexed `[alpha index, beta index]`.
    pub loss: Array2<f64>,
}

impl LandscapeSlice {
    /// Grid indices of the smallest loss value (first occurrence in row-major
    /// scan order).
    pub fn min_cell(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_val = f64::INFINITY;
        for i in 0..self.alphas.len() {
            for j in 0..self.betas.len() {
                if self.loss[[i, j]] < best_val {
                    best_val = self.loss[[i, j]];
                    best = (i, j);
                }
            }
        }
        best
    }

    /// Second-difference curvatures `(along d1, along d2)` at the central grid
    /// point. For a quadratic objective sliced along unit eigenvectors these
    /// equal twice the corresponding eigenvalues. Requires an odd grid with at
    /// least three points per axis.
    pub fn center_curvatures(&self) -> Result<(f64, f64)> {
        let (na, nb) = (self.alphas.len(), self.betas.len());
        if na < 3 || nb < 3 || na % 2 == 0 || nb % 2 == 0 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "central curvature needs an odd grid of at least 3 points per axis, got {na}x{nb}"
                ),
            });
        }
        let (ca, cb) = (na / 2, nb / 2);
        let ha = self.alphas[ca + 1] - self.alphas[ca];
        let hb = self.betas[cb + 1] - self.betas[cb];
        let curv_a =
            (self.loss[[ca + 1, cb]] - 2.0 * self.loss[[ca, cb]] + self.loss[[ca - 1, cb]])
                / (ha * ha);
        let curv_b =
            (self.loss[[ca, cb + 1]] - 2.0 * self.loss[[ca, cb]] + self.loss[[ca, cb - 1]])
                / (hb * hb);
        Ok((curv_a, curv_b))
    }
}

/// Evaluate an arbitrary objective on a centered square grid spanning
/// `[−half_width, half_width]` along two directions from an anchor.
pub fn loss_slice<F: FnMut(&Array1<f64>) -> f64>(
    mut f: F,
    anchor: &Array1<f64>,
    d1: &Array1<f64>,
    d2: &Array1<f64>,
    half_width: f64,
    resolution: usize,
) -> Result<LandscapeSlice> {
    let dim = anchor.len();
    if d1.len() != dim || d2.len() != dim {
        return Err(Error::ShapeMismatch {
            context: "landscape slice directions".to_string(),
            expected: format!("{dim}"),
            got: format!("{} and {}", d1.len(), d2.len()),
        });
    }
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::InvalidConfig {
            reason: format!("slice half-width must be positive and finite, got {half_width}"),
        });
    }
    if resolution < 2 {
        return Err(Error::InvalidConfig {
            reason: format!("slice resolution must be at least 2, got {resolution}"),
        });
    }
    let offsets: Vec<f64> = (0..resolution)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (resolution - 1) as f64)
        .collect();
    let mut loss = Array2::<f64>::zeros((resolution, resolution));
    let mut point = Array1::<f64>::zeros(dim);
    for (i, &alpha) in offsets.iter().enumerate() {
        for (j, &beta) in offsets.iter().enumerate() {
            for k in 0..dim {
                point[k] = anchor[k] + alpha * d1[k] + beta * d2[k];
            }
            loss[[i, j]] = f(&point);
        }
    }
    Ok(LandscapeSlice {
        alphas: offsets.clone(),
        betas: offsets,
        loss,
    })
}

/// Slice the quadratic objective `(Θ − Θ*)ᵀ A (Θ − Θ*)` — the physics loss of
/// a linear ansatz shifted by its floor — around an anchor.
pub fn quadratic_slice(
    a: &Array2<f64>,
    theta_star: &Array1<f64>,
    anchor: &Array1<f64>,
    d1: &Array1<f64>,
    d2: &Array1<f64>,
    half_width: f64,
    resolution: usize,
) -> Result<LandscapeSlice> {
    require_square_symmetric(a, "quadratic slice")?;
    let n = a.nrows();
    if theta_star.len() != n || anchor.len() != n {
        return Err(Error::ShapeMismatch {
            context: "quadratic slice anchor".to_string(),
            expected: format!("{n}"),
            got: format!("{} and {}", theta_star.len(), anchor.len()),
        });
    }
    let mut e = Array1::<f64>::zeros(n);
    loss_slice(
        |theta| {
            for i in 0..n {
                e[i] = theta[i] - theta_star[i];
            }
            let ae = mat_vec(a, &e);
            dot(&e, &ae)
        },
        anchor,
        d1,
        d2,
        half_width,
        resolution,
    )
}

/// Coordinates of points in the slice plane: `(⟨p − anchor, d1⟩, ⟨p − anchor,
/// d2⟩)` for each point. Axes are assumed orthonormal (as produced by
/// [`trajectory_directions`] and [`hessian_extreme_directions`]).
pub fn project_onto_axes(
    anchor: &Array1<f64>,
    d1: &Array1<f64>,
    d2: &Array1<f64>,
    points: &[Array1<f64>],
) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|p| {
            let mut disp = Array1::<f64>::zeros(anchor.len());
            for i in 0..anchor.len() {
                disp[i] = p[i] - anchor[i];
            }
            (dot(&disp, d1), dot(&disp, d2))
        })
        .collect()
}
