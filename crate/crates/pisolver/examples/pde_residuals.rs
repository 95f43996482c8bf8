//! The three PDE families and their physics losses.
//!
//! Samples one instance from each family, shows what its parameters mean,
//! and evaluates the physics loss (squared residual plus boundary penalty)
//! at three candidate solutions: all-zero coefficients, the reference
//! solution, and for the linear families the exact minimizer of the
//! discretized loss.
//!
//! Run with: cargo run --example pde_residuals

use ndarray::Array1;
use pisolver::basis::{BasisSpec, KnotConfig};
use pisolver::dataset::{default_shape, sample_instance, solve_reference};
use pisolver::linalg::solve_spd;
use pisolver::pde::{Discretization, Family, PdeLossConfig, PdeParams};
use pisolver::solver::relative_mse;

fn main() -> pisolver::Result<()> {
    let loss_cfg = PdeLossConfig::default();
    for family in [Family::Helmholtz1d, Family::Poisson1d, Family::Nlrd1dt] {
        let inst = sample_instance(family, 4, 0, default_shape(family));
        println!("=== {family} ===");
        match &inst.params {
            PdeParams::Helmholtz { omega } => {
                println!("  u'' + omega^2 u = f with omega = {omega:.4}")
            }
            PdeParams::Poisson { coeffs } => println!(
                "  u'' = f, forcing built from {} random Fourier amplitudes",
                coeffs.len()
            ),
            PdeParams::Nlrd { nu, rho } => println!(
                "  u_t = nu u_xx + rho u(1-u) with nu = {nu:.5}, rho = {rho:.4}"
            ),
        }
        println!(
            "  grid: {} collocation points, {} boundary rows",
            inst.grid.len(),
            if inst.grid.ts.is_some() { "initial-profile" } else { "point-value-and-slope" }
        );

        let (spec_x, spec_t) = specs(family);
        let disc = Discretization::new(&inst, &spec_x, spec_t.as_ref(), &loss_cfg)?;
        let n = disc.values_full().ncols();

        let zero = Array1::<f64>::zeros(n);
        println!("  physics loss at theta = 0:          {:.6e}", disc.loss(&zero)?);

        // Coefficients fitted to the reference solution by least squares.
        let reference = Array1::from_vec(solve_reference(&inst)?);
        let theta_ref = fit(disc.values_full(), &reference);
        let fitted = disc.predict(&theta_ref);
        println!(
            "  physics loss at fitted reference:   {:.6e} (fit rel mse {:.2e})",
            disc.loss(&theta_ref)?,
            relative_mse(&fitted, &reference)?
        );

        // For the linear families the loss is quadratic, so its minimizer is
        // one linear solve away.
        if family != Family::Nlrd1dt {
            let (a, b) = disc.assemble_linear_system()?;
            let theta_star = solve_spd(&a, &b, "exact minimizer")?;
            let best = disc.predict(&theta_star);
            let rel = relative_mse(&best, &reference)?;
            println!(
                "  physics loss at exact minimizer:    {:.6e} (rel mse to reference {:.2e})",
                disc.loss(&theta_star)?,
                rel
            );
            if rel > 0.5 {
                println!(
                    "  note: at this frequency the ansatz cannot drive the residual to zero\n\
                     \x20 (the loss floor stays O(1)) and the physics-loss minimum stops tracking\n\
                     \x20 the true solution. This is the regime where supervising the solver with\n\
                     \x20 a data loss, instead of the physics loss alone, earns its keep."
                );
            }
        }

        // The gradient at the minimizer-side solutions should be tiny
        // compared to the gradient at zero.
        let (_, g0) = disc.loss_and_grad(&zero)?;
        let (_, gr) = disc.loss_and_grad(&theta_ref)?;
        println!(
            "  gradient norm at zero vs fitted:    {:.3e} vs {:.3e}\n",
            norm(&g0),
            norm(&gr)
        );
    }
    Ok(())
}

fn specs(family: Family) -> (BasisSpec, Option<BasisSpec>) {
    if family == Family::Nlrd1dt {
        (
            BasisSpec::bspline(3, 12, KnotConfig::Shifted, (0.0, 1.0)).expect("space basis"),
            Some(BasisSpec::bspline(2, 5, KnotConfig::Equispaced, (0.0, 1.0)).expect("time basis")),
        )
    } else {
        (
            BasisSpec::bspline(3, 32, KnotConfig::Shifted, (0.0, 1.0)).expect("space basis"),
            None,
        )
    }
}

fn norm(v: &Array1<f64>) -> f64 {
    v.mapv(|x| x * x).sum().sqrt()
}

fn fit(design: &ndarray::Array2<f64>, target: &Array1<f64>) -> Array1<f64> {
    let n = design.ncols();
    let mut ata = ndarray::Array2::<f64>::zeros((n, n));
    let mut atb = Array1::<f64>::zeros(n);
    for i in 0..design.nrows() {
        for a in 0..n {
            atb[a] += design[[i, a]] * target[i];
            for b in 0..n {
                ata[[a, b]] += design[[i, a]] * design[[i, b]];
            }
        }
    }
    // Tiny ridge term keeps the normal equations comfortably positive
    // definite for ill-conditioned design matrices.
    for a in 0..n {
        ata[[a, a]] += 1e-10;
    }
    solve_spd(&ata, &atb, "reference fit").expect("normal equations solvable")
}
