//! Tour of the two function bases behind every solution ansatz.
//!
//! Builds the cubic B-spline basis (32 terms, interior-shifted knots) and a
//! Fourier basis on [0, 1], then verifies the properties the rest of the
//! library leans on: B-splines sum to one everywhere (so constant functions
//! are represented exactly), and the tabulated first and second derivatives
//! match finite differences of the values.
//!
//! Run with: cargo run --example basis_functions

use pisolver::basis::{eval_basis, BasisSpec, KnotConfig};

fn main() -> pisolver::Result<()> {
    let xs: Vec<f64> = (0..501).map(|i| i as f64 / 500.0).collect();

    // --- Cubic B-splines -------------------------------------------------
    let spline = BasisSpec::bspline(3, 32, KnotConfig::Shifted, (0.0, 1.0))?;
    let eval = eval_basis(&spline, &xs)?;
    println!(
        "cubic B-spline basis: {} terms evaluated at {} points",
        eval.values.ncols(),
        eval.values.nrows()
    );

    let mut worst_pou: f64 = 0.0;
    for row in eval.values.rows() {
        worst_pou = worst_pou.max((row.sum() - 1.0).abs());
    }
    println!("  partition of unity: max |sum - 1| = {worst_pou:.2e}");

    // Derivatives against centered finite differences of the basis values.
    let h = 1e-5;
    let xs_p: Vec<f64> = xs.iter().map(|x| (x + h).min(1.0)).collect();
    let xs_m: Vec<f64> = xs.iter().map(|x| (x - h).max(0.0)).collect();
    let ev_p = eval_basis(&spline, &xs_p)?;
    let ev_m = eval_basis(&spline, &xs_m)?;
    let mut worst_d1: f64 = 0.0;
    for i in 0..xs.len() {
        // Skip points near the boundary where the one-sided clamp breaks the
        // centered-difference formula.
        if xs[i] < 2.0 * h || xs[i] > 1.0 - 2.0 * h {
            continue;
        }
        for j in 0..eval.values.ncols() {
            let fd = (ev_p.values[[i, j]] - ev_m.values[[i, j]]) / (2.0 * h);
            worst_d1 = worst_d1.max((eval.d1[[i, j]] - fd).abs());
        }
    }
    println!("  first derivative vs finite differences: max abs err = {worst_d1:.2e}");

    let mut worst_d2: f64 = 0.0;
    for i in 0..xs.len() {
        if xs[i] < 2.0 * h || xs[i] > 1.0 - 2.0 * h {
            continue;
        }
        for j in 0..eval.values.ncols() {
            let fd = (ev_p.d1[[i, j]] - ev_m.d1[[i, j]]) / (2.0 * h);
            worst_d2 = worst_d2.max((eval.d2[[i, j]] - fd).abs());
        }
    }
    println!("  second derivative vs finite differences: max abs err = {worst_d2:.2e}");

    // A cubic spline basis reproduces cubics exactly; check on x^3 by solving
    // the least-squares fit and measuring the residual.
    let coeffs = fit(&eval.values, &xs.iter().map(|x| x * x * x).collect::<Vec<_>>());
    let mut worst_fit: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let mut v = 0.0;
        for j in 0..coeffs.len() {
            v += coeffs[j] * eval.values[[i, j]];
        }
        worst_fit = worst_fit.max((v - x * x * x).abs());
    }
    println!("  reproduces x^3 with max abs err = {worst_fit:.2e}");

    // --- Fourier modes ---------------------------------------------------
    let fourier = BasisSpec::fourier(4, (0.0, 1.0))?;
    let ef = eval_basis(&fourier, &xs)?;
    println!(
        "\nFourier basis with cutoff 4: {} terms (constant + sin/cos pairs)",
        ef.values.ncols()
    );
    // Second derivative of mode k is -(2 pi k)^2 times the mode itself;
    // display the measured ratio for each pair.
    for k in 1..=4usize {
        let col = 2 * k - 1; // sin(2 pi k x) column
        let i = 125; // x = 0.25
        let ratio = -ef.d2[[i, col]] / ef.values[[i, col]];
        let expect = (2.0 * std::f64::consts::PI * k as f64).powi(2);
        println!(
            "  mode k={k}: -psi''/psi = {ratio:.3} (expected (2 pi k)^2 = {expect:.3})"
        );
    }
    Ok(())
}

/// Least-squares fit of `target` in the column space of `design` via the
/// normal equations.
fn fit(design: &ndarray::Array2<f64>, target: &[f64]) -> Vec<f64> {
    let n = design.ncols();
    let mut ata = ndarray::Array2::<f64>::zeros((n, n));
    let mut atb = ndarray::Array1::<f64>::zeros(n);
    for i in 0..design.nrows() {
        for a in 0..n {
            atb[a] += design[[i, a]] * target[i];
            for b in 0..n {
                ata[[a, b]] += design[[i, a]] * design[[i, b]];
            }
        }
    }
    pisolver::linalg::solve_spd(&ata, &atb, "basis fit")
        .expect("normal equations are positive definite")
        .to_vec()
}
