//! Slice the physics-loss landscape and measure its anisotropy.
//!
//! Takes one linear PDE instance, solves it exactly, and evaluates the loss
//! on a 2-D grid spanned by the Hessian eigenvectors of least and greatest
//! curvature, centered at the solution. The printed ASCII map makes the
//! pathology visible: the landscape is a canyon, almost flat along one axis
//! and steep along the other, and the measured axis ratio of its level sets
//! matches the square root of the Hessian condition number.
//!
//! Run with: cargo run --example loss_landscape

use pisolver::basis::{BasisSpec, KnotConfig};
use pisolver::dataset::{default_shape, sample_instance};
use pisolver::linalg::solve_spd;
use pisolver::pde::{Discretization, Family, PdeLossConfig};
use pisolver::theory::{hessian_extreme_directions, loss_slice, spectrum_and_kappa};

fn main() -> pisolver::Result<()> {
    let inst = sample_instance(Family::Poisson1d, 21, 0, default_shape(Family::Poisson1d));
    let spec_x = BasisSpec::bspline(3, 32, KnotConfig::Shifted, (0.0, 1.0))?;
    let disc = Discretization::new(&inst, &spec_x, None, &PdeLossConfig::default())?;

    // Anchor the slice at the exact minimizer of the quadratic loss.
    let (a, b) = disc.assemble_linear_system()?;
    let anchor = solve_spd(&a, &b, "anchor")?;
    let hessian = disc.hessian(&anchor)?;
    let (_, kappa) = spectrum_and_kappa(&hessian)?;
    println!("Hessian condition number at the minimizer: {kappa:.3e}");

    let dirs = hessian_extreme_directions(&hessian)?;
    let resolution = 41;
    let slice = loss_slice(
        |theta| disc.loss(theta).unwrap_or(f64::NAN),
        &anchor,
        &dirs.d_min,
        &dirs.d_max,
        1.0,
        resolution,
    )?;

    let (mi, mj) = slice.min_cell();
    println!(
        "grid minimum at cell ({mi}, {mj}); anchor sits at ({}, {})",
        resolution / 2,
        resolution / 2
    );
    let (c_min, c_max) = slice.center_curvatures()?;
    println!(
        "curvature along flat vs steep axis: {c_min:.3e} vs {c_max:.3e}"
    );
    println!(
        "level-set axis ratio sqrt(c_max/c_min) = {:.1} vs sqrt(kappa) = {:.1}",
        (c_max / c_min).sqrt(),
        kappa.sqrt()
    );

    // ASCII contour map of log10(loss - min): '.' is near the bottom of the
    // canyon, '9' is the rim. Columns follow the flat direction, so the dark
    // band runs left to right.
    println!("\nlog-loss map (rows: steep axis, columns: flat axis):");
    let min_val = slice.loss.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_val = slice.loss.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = (min_val + 1e-300).log10();
    let hi = (max_val + 1e-300).log10();
    for j in (0..resolution).rev() {
        let mut row = String::new();
        for i in 0..resolution {
            let v = slice.loss[[i, j]];
            let t = ((v + 1e-300).log10() - lo) / (hi - lo);
            let c = if !t.is_finite() {
                '?'
            } else if t < 0.1 {
                '.'
            } else {
                char::from_digit((t.min(0.999) * 10.0) as u32, 10).expect("digit")
            };
            row.push(c);
        }
        println!("  {row}");
    }
    Ok(())
}
