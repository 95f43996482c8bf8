//! Function bases for linear PDE ansätze.
//!
//! An ansatz `u_Θ(x) = Σ_i θ_i ψ_i(x)` needs the basis values and derivatives
//! at a set of collocation points. This module provides:
//!
//! * **B-spline bases** of arbitrary degree with two uniform knot layouts:
//!   - [`KnotConfig::Shifted`]: `N + d + 1` simple equispaced knots running
//!     from `d/N` to `1 + d/N` (spacing `1/(N+d)`). All knots are simple, so
//!     the basis is maximally smooth everywhere. The `N` splines partition
//!     unity only on the inner window `[t_d, t_N]`; evaluation affinely maps
//!     the problem domain onto that window so the partition of unity holds at
//!     every collocation point.
//!   - [`KnotConfig::Equispaced`]: a clamped layout with `N + 1 − d` simple
//!     nodes spanning `[0, 1]` plus `d` extra copies of each boundary node.
//!     The boundary nodes lose smoothness, but the basis interpolates the
//!     interval ends.
//! * **Fourier bases** `{1/√(2π), cos(k·)/√π, sin(k·)/√π}` for frequencies
//!   `k = 1..K`, orthonormal over a period. The problem domain is affinely
//!   mapped onto `[−π, π]`.
//! * **Tensor-product bases** for one space and one time dimension, consisting
//!   of both pure 1d blocks and all pairwise products
//!   (`N1 + N2 + N1·N2` terms).
//!
//! All derivative columns are exact (chain rule through the affine domain
//! maps), not finite differences.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knot layout for B-spline bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotConfig {
    /// Simple equispaced knots shifted along the axis; smooth everywhere.
    Shifted,
    /// Clamped uniform knots: boundary nodes repeated to full multiplicity.
    Equispaced,
}

/// The kind of basis, with its kind-specific parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    BSpline { degree: usize, knots: KnotConfig },
    /// Trigonometric basis with frequencies `1..=k_max` plus a constant term.
    Fourier { k_max: usize },
}

/// A one-dimensional basis specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Number of basis functions.
    pub n_terms: usize,
    /// Closed interval of valid evaluation points, in problem coordinates.
    pub domain: (f64, f64),
}

impl BasisSpec {
    /// B-spline basis of `degree` with `n_terms` functions over `domain`.
    pub fn bspline(
        degree: usize,
        n_terms: usize,
        knots: KnotConfig,
        domain: (f64, f64),
    ) -> Result<Self> {
        let spec = BasisSpec {
            kind: BasisKind::BSpline { degree, knots },
            n_terms,
            domain,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Fourier basis with frequencies `1..=k_max` (so `2·k_max + 1` terms).
    pub fn fourier(k_max: usize, domain: (f64, f64)) -> Result<Self> {
        let spec = BasisSpec {
            kind: BasisKind::Fourier { k_max },
            n_terms: 2 * k_max + 1,
            domain,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidBasis {
                reason: format!("domain [{lo}, {hi}] is not a proper interval"),
            });
        }
        match self.kind {
            BasisKind::BSpline { degree, .. } => {
                if self.n_terms < degree + 1 {
                    return Err(Error::InvalidBasis {
                        reason: format!(
                            "degree-{degree} splines need at least {} terms, got {}",
                            degree + 1,
                            self.n_terms
                        ),
                    });
                }
            }
            BasisKind::Fourier { k_max } => {
                if self.n_terms != 2 * k_max + 1 {
                    return Err(Error::InvalidBasis {
                        reason: format!(
                            "Fourier basis with k_max {k_max} has {} terms, got {}",
                            2 * k_max + 1,
                            self.n_terms
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Basis values and derivatives at a set of points, one row per point and one
/// column per basis function.
///
/// `d1`/`d2` are first and second derivatives along the (first) spatial axis.
/// For tensor-product space–time bases, `dt` additionally holds the first
/// derivative along the time axis.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub values: Array2<f64>,
    pub d1: Array2<f64>,
    pub d2: Array2<f64>,
    pub dt: Option<Array2<f64>>,
}

impl BasisEval {
    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_terms(&self) -> usize {
        self.values.ncols()
    }
}

/// Build the knot vector for a B-spline basis on the reference scale.
///
/// Both layouts produce `n_terms + degree + 1` nondecreasing knots. The
/// returned vector is on the layout's own scale; [`eval_basis`] maps the
/// problem domain onto the span `[knots[degree], knots[n_terms]]` where the
/// basis partitions unity.
pub fn build_bspline_knots(
    degree: usize,
    n_terms: usize,
    config: KnotConfig,
) -> Result<Vec<f64>> {
    if n_terms < degree + 1 {
        return Err(Error::InvalidBasis {
            reason: format!(
                "degree-{degree} splines need at least {} terms, got {n_terms}",
                degree + 1
            ),
        });
    }
    let d = degree as f64;
    let n = n_terms as f64;
    let count = n_terms + degree + 1;
    match config {
        KnotConfig::Shifted => {
            // Equispaced simple knots from d/N to 1 + d/N.
            let start = d / n;
            let spacing = 1.0 / (n + d);
            Ok((0..count).map(|j| start + j as f64 * spacing).collect())
        }
        KnotConfig::Equispaced => {
            // Clamped: simple nodes spanning [0, 1], boundary nodes repeated
            // `degree` extra times.
            let simple = n_terms + 1 - degree;
            let mut knots = Vec::with_capacity(count);
            knots.extend(std::iter::repeat(0.0).take(degree));
            for j in 0..simple {
                knots.push(j as f64 / (simple - 1) as f64);
            }
            knots.extend(std::iter::repeat(1.0).take(degree));
            Ok(knots)
        }
    }
}

/// All B-spline values and first/second derivatives at reference coordinate
/// `t`, computed by the Cox–de Boor recursion with the `0/0 := 0` convention.
/// The rightmost point of the unity window is included in the last cell.
fn bspline_row(knots: &[f64], degree: usize, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let nk = knots.len();
    let n_basis = nk - degree - 1;
    let window_end = knots[n_basis];

    // levels[k][i] = value of the degree-k spline B_{i,k}(t).
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(degree + 1);
    let level0: Vec<f64> = (0..nk - 1)
        .map(|i| {
            let (lo, hi) = (knots[i], knots[i + 1]);
            // Half-open cells, except that the right end of the unity window
            // belongs to the cell closing there (and to no cell beyond it).
            let inside = if t == window_end {
                hi == window_end && lo < hi
            } else {
                t >= lo && t < hi
            };
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    levels.push(level0);
    for k in 1..=degree {
        let prev = &levels[k - 1];
        let count = nk - k - 1;
        let mut cur = vec![0.0; count];
        for i in 0..count {
            let mut v = 0.0;
            let den_l = knots[i + k] - knots[i];
            if den_l > 0.0 {
                v += (t - knots[i]) / den_l * prev[i];
            }
            let den_r = knots[i + k + 1] - knots[i + 1];
            if den_r > 0.0 {
                v += (knots[i + k + 1] - t) / den_r * prev[i + 1];
            }
            cur[i] = v;
        }
        levels.push(cur);
    }

    let values = levels[degree].clone();

    // First derivative of a degree-k spline in terms of degree-(k−1) values.
    let deriv = |lower: &[f64], k: usize, i: usize| -> f64 {
        let mut v = 0.0;
        let den_l = knots[i + k] - knots[i];
        if den_l > 0.0 {
            v += lower[i] / den_l;
        }
        let den_r = knots[i + k + 1] - knots[i + 1];
        if den_r > 0.0 {
            v -= lower[i + 1] / den_r;
        }
        k as f64 * v
    };

    let mut d1 = vec![0.0; n_basis];
    let mut d2 = vec![0.0; n_basis];
    if degree >= 1 {
        let lower = &levels[degree - 1];
        for i in 0..n_basis {
            d1[i] = deriv(lower, degree, i);
        }
    }
    if degree >= 2 {
        // Second derivative: apply the derivative formula to the first
        // derivatives of the degree-(d−1) splines.
        let lower2 = &levels[degree - 2];
        let d1_lower: Vec<f64> = (0..nk - degree)
            .map(|i| deriv(lower2, degree - 1, i))
            .collect();
        for i in 0..n_basis {
            let mut v = 0.0;
            let den_l = knots[i + degree] - knots[i];
            if den_l > 0.0 {
                v += d1_lower[i] / den_l;
            }
            let den_r = knots[i + degree + 1] - knots[i + 1];
            if den_r > 0.0 {
                v -= d1_lower[i + 1] / den_r;
            }
            d2[i] = degree as f64 * v;
        }
    }
    (values, d1, d2)
}

fn check_in_domain(spec: &BasisSpec, points: &[f64]) -> Result<()> {
    let (lo, hi) = spec.domain;
    for (index, &value) in points.iter().enumerate() {
        if !(value >= lo && value <= hi) {
            return Err(Error::OutOfDomain {
                index,
                value,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

/// Evaluate a 1d basis at `points` (problem coordinates).
///
/// Derivatives are with respect to the problem coordinate, i.e. the chain
/// rule through the internal affine domain map is already applied. Points
/// outside the domain are an error; nothing is clamped.
pub fn eval_basis(spec: &BasisSpec, points: &[f64]) -> Result<BasisEval> {
    spec.validate()?;
    check_in_domain(spec, points)?;
    let (lo, hi) = spec.domain;
    let m = points.len();
    let n = spec.n_terms;
    let mut values = Array2::<f64>::zeros((m, n));
    let mut d1 = Array2::<f64>::zeros((m, n));
    let mut d2 = Array2::<f64>::zeros((m, n));

    match spec.kind {
        BasisKind::BSpline { degree, knots } => {
            let kv = build_bspline_knots(degree, n, knots)?;
            let t_lo = kv[degree];
            let t_hi = kv[n];
            // Problem domain → unity window of the knot vector.
            let scale = (t_hi - t_lo) / (hi - lo);
            for (r, &x) in points.iter().enumerate() {
                let t = t_lo + (x - lo) * scale;
                let (v, g, h) = bspline_row(&kv, degree, t);
                for c in 0..n {
                    values[[r, c]] = v[c];
                    d1[[r, c]] = g[c] * scale;
                    d2[[r, c]] = h[c] * scale * scale;
                }
            }
        }
        BasisKind::Fourier { k_max } => {
            // Problem domain → one period [−π, π].
            let scale = 2.0 * std::f64::consts::PI / (hi - lo);
            let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
            let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
            for (r, &x) in points.iter().enumerate() {
                let xi = -std::f64::consts::PI + (x - lo) * scale;
                values[[r, 0]] = inv_sqrt_2pi;
                for k in 1..=k_max {
                    let kf = k as f64;
                    let (s, c) = (kf * xi).sin_cos();
                    let (ic, is) = (2 * k - 1, 2 * k);
                    values[[r, ic]] = c * inv_sqrt_pi;
                    values[[r, is]] = s * inv_sqrt_pi;
                    d1[[r, ic]] = -kf * s * inv_sqrt_pi * scale;
                    d1[[r, is]] = kf * c * inv_sqrt_pi * scale;
                    d2[[r, ic]] = -kf * kf * c * inv_sqrt_pi * scale * scale;
                    d2[[r, is]] = -kf * kf * s * inv_sqrt_pi * scale * scale;
                }
            }
        }
    }
    Ok(BasisEval {
        values,
        d1,
        d2,
        dt: None,
    })
}

/// Number of terms in the tensor-product basis built from 1d bases of sizes
/// `n_x` and `n_t`: both pure blocks plus all products.
pub fn tensor_len(n_x: usize, n_t: usize) -> usize {
    n_x + n_t + n_x * n_t
}

/// Evaluate a space–time tensor-product basis at `points = [(x, t), …]`.
///
/// Column layout (flat index):
/// * `0 .. n_x`: pure space functions `ψ_i(x)`,
/// * `n_x .. n_x + n_t`: pure time functions `χ_j(t)`,
/// * `n_x + n_t + i·n_t + j`: products `ψ_i(x)·χ_j(t)` (row-major over
///   `(i, j)`).
///
/// `d1`/`d2` differentiate along `x`, `dt` along `t`.
pub fn tensor_basis(
    spec_x: &BasisSpec,
    spec_t: &BasisSpec,
    points: &[(f64, f64)],
) -> Result<BasisEval> {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ts: Vec<f64> = points.iter().map(|p| p.1).collect();
    let ex = eval_basis(spec_x, &xs)?;
    let et = eval_basis(spec_t, &ts)?;
    let (n_x, n_t) = (spec_x.n_terms, spec_t.n_terms);
    let m = points.len();
    let n = tensor_len(n_x, n_t);
    let mut values = Array2::<f64>::zeros((m, n));
    let mut d1 = Array2::<f64>::zeros((m, n));
    let mut d2 = Array2::<f64>::zeros((m, n));
    let mut dt = Array2::<f64>::zeros((m, n));
    for r in 0..m {
        for i in 0..n_x {
            values[[r, i]] = ex.values[[r, i]];
            d1[[r, i]] = ex.d1[[r, i]];
            d2[[r, i]] = ex.d2[[r, i]];
        }
        for j in 0..n_t {
            let c = n_x + j;
            values[[r, c]] = et.values[[r, j]];
            dt[[r, c]] = et.d1[[r, j]];
        }
        for i in 0..n_x {
            for j in 0..n_t {
                let c = n_x + n_t + i * n_t + j;
                values[[r, c]] = ex.values[[r, i]] * et.values[[r, j]];
                d1[[r, c]] = ex.d1[[r, i]] * et.values[[r, j]];
                d2[[r, c]] = ex.d2[[r, i]] * et.values[[r, j]];
                dt[[r, c]] = ex.values[[r, i]] * et.d1[[r, j]];
            }
        }
    }
    Ok(BasisEval {
        values,
        d1,
        d2,
        dt: Some(dt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Independent Cox–de Boor oracle: the textbook recursion, written as a
    /// plain recursive function with no shared code with `bspline_row`.
    fn oracle_bspline(knots: &[f64], i: usize, degree: usize, t: f64) -> f64 {
        let n_basis = knots.len() - degree - 1;
        let window_end = knots[n_basis];
        if degree == 0 {
            let (lo, hi) = (knots[i], knots[i + 1]);
            let inside = if t == window_end {
                hi == window_end && lo < hi
            } else {
                t >= lo && t < hi
            };
            return if inside { 1.0 } else { 0.0 };
        }
        // Note: recursion reaches indices past the basis count; the knot
        // vector is long enough for every term that arises.
        let mut v = 0.0;
        let den_l = knots[i + degree] - knots[i];
        if den_l > 0.0 {
            v += (t - knots[i]) / den_l * oracle_bspline(knots, i, degree - 1, t);
        }
        let den_r = knots[i + degree + 1] - knots[i + 1];
        if den_r > 0.0 {
            v += (knots[i + degree + 1] - t) / den_r * oracle_bspline(knots, i + 1, degree - 1, t);
        }
        v
    }

    #[test]
    fn shifted_knots_match_layout_rule() {
        let kv = build_bspline_knots(3, 10, KnotConfig::Shifted).unwrap();
        assert_eq!(kv.len(), 14);
        assert_abs_diff_eq!(kv[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(kv[13], 1.3, epsilon = 1e-12);
        for w in kv.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 1.0 / 13.0, epsilon = 1e-12);
        }

        let kv = build_bspline_knots(3, 32, KnotConfig::Shifted).unwrap();
        assert_eq!(kv.len(), 36);
        assert_abs_diff_eq!(kv[0], 3.0 / 32.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kv[35], 1.0 + 3.0 / 32.0, epsilon = 1e-12);
        for w in kv.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 1.0 / 35.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn equispaced_knots_are_clamped() {
        let kv = build_bspline_knots(3, 12, KnotConfig::Equispaced).unwrap();
        assert_eq!(kv.len(), 16);
        // Boundary nodes carry full multiplicity degree + 1.
        assert!(kv[..4].iter().all(|&t| t == 0.0));
        assert!(kv[12..].iter().all(|&t| t == 1.0));
        assert!(kv.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn degree_zero_equispaced_is_cell_partition() {
        let kv = build_bspline_knots(0, 4, KnotConfig::Equispaced).unwrap();
        assert_eq!(kv, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let spec = BasisSpec::bspline(0, 4, KnotConfig::Equispaced, (0.0, 1.0)).unwrap();
        let pts = [0.1, 0.3, 0.6, 0.9, 1.0];
        let ev = eval_basis(&spec, &pts).unwrap();
        // Each point sits in exactly one cell; the right boundary belongs to
        // the last one.
        for (r, &x) in pts.iter().enumerate() {
            let expected = ((x * 4.0).floor() as usize).min(3);
            for c in 0..4 {
                let want = if c == expected { 1.0 } else { 0.0 };
                assert_eq!(ev.values[[r, c]], want, "x = {x}, column {c}");
            }
        }
    }

    #[test]
    fn values_match_recursion_oracle() {
        for &config in &[KnotConfig::Shifted, KnotConfig::Equispaced] {
            for &(degree, n) in &[(3usize, 10usize), (2, 7), (3, 12)] {
                let kv = build_bspline_knots(degree, n, config).unwrap();
                let spec = BasisSpec::bspline(degree, n, config, (0.0, 1.0)).unwrap();
                // Cell midpoints of the unity window, mapped back to [0, 1].
                let t_lo = kv[degree];
                let t_hi = kv[n];
                let pts: Vec<f64> = (0..40).map(|j| (j as f64 + 0.5) / 40.0).collect();
                let ev = eval_basis(&spec, &pts).unwrap();
                for (r, &x) in pts.iter().enumerate() {
                    let t = t_lo + x * (t_hi - t_lo);
                    for i in 0..n {
                        let want = oracle_bspline(&kv, i, degree, t);
                        assert_abs_diff_eq!(ev.values[[r, i]], want, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn endpoint_evaluation_is_included() {
        // x = 1 maps to the right end of the unity window; the basis must
        // still sum to one there (no dropped half-open cell).
        for &config in &[KnotConfig::Shifted, KnotConfig::Equispaced] {
            let spec = BasisSpec::bspline(3, 9, config, (0.0, 1.0)).unwrap();
            let ev = eval_basis(&spec, &[0.0, 1.0]).unwrap();
            for r in 0..2 {
                let sum: f64 = (0..9).map(|c| ev.values[[r, c]]).sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            }
        }
        // The clamped layout interpolates the ends with its edge functions.
        let spec = BasisSpec::bspline(3, 9, KnotConfig::Equispaced, (0.0, 1.0)).unwrap();
        let ev = eval_basis(&spec, &[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(ev.values[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev.values[[1, 8]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for &config in &[KnotConfig::Shifted, KnotConfig::Equispaced] {
            let spec = BasisSpec::bspline(3, 16, config, (0.0, 1.0)).unwrap();
            let pts: Vec<f64> = (1..64).map(|j| j as f64 / 64.0).collect();
            let ev = eval_basis(&spec, &pts).unwrap();
            let plus: Vec<f64> = pts.iter().map(|x| x + h).collect();
            let minus: Vec<f64> = pts.iter().map(|x| x - h).collect();
            let ep = eval_basis(&spec, &plus).unwrap();
            let em = eval_basis(&spec, &minus).unwrap();
            for c in 0..16 {
                let (mut num1, mut den1, mut num2, mut den2) = (0.0, 0.0, 0.0, 0.0);
                for r in 0..pts.len() {
                    let fd1 = (ep.values[[r, c]] - em.values[[r, c]]) / (2.0 * h);
                    num1 += (fd1 - ev.d1[[r, c]]).powi(2);
                    den1 += ev.d1[[r, c]].powi(2);
                    let fd2 = (ep.d1[[r, c]] - em.d1[[r, c]]) / (2.0 * h);
                    num2 += (fd2 - ev.d2[[r, c]]).powi(2);
                    den2 += ev.d2[[r, c]].powi(2);
                }
                assert!(num1.sqrt() / den1.sqrt() < 1e-6, "d1 column {c}");
                assert!(num2.sqrt() / den2.sqrt() < 1e-6, "d2 column {c}");
            }
        }
    }

    #[test]
    fn local_support_is_bounded() {
        let degree = 3;
        let n = 16;
        let kv = build_bspline_knots(degree, n, KnotConfig::Shifted).unwrap();
        let spec = BasisSpec::bspline(degree, n, KnotConfig::Shifted, (0.0, 1.0)).unwrap();
        let pts: Vec<f64> = (0..=512).map(|j| j as f64 / 512.0).collect();
        let ev = eval_basis(&spec, &pts).unwrap();
        let t_lo = kv[degree];
        let t_hi = kv[n];
        for i in 0..n {
            for (r, &x) in pts.iter().enumerate() {
                let t = t_lo + x * (t_hi - t_lo);
                if t < kv[i] - 1e-12 || t > kv[i + degree + 1] + 1e-12 {
                    assert_eq!(ev.values[[r, i]], 0.0, "basis {i} leaks outside its support");
                }
            }
        }
    }

    #[test]
    fn fourier_basis_is_orthonormal_under_trapezoid_rule() {
        let k_max = 5;
        let spec = BasisSpec::fourier(k_max, (-std::f64::consts::PI, std::f64::consts::PI)).unwrap();
        let m = 4096;
        let pts: Vec<f64> = (0..=m)
            .map(|j| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / m as f64)
            .collect();
        let ev = eval_basis(&spec, &pts).unwrap();
        let h = 2.0 * std::f64::consts::PI / m as f64;
        let n = spec.n_terms;
        for a in 0..n {
            for b in 0..n {
                let mut acc = 0.0;
                for r in 0..=m {
                    let w = if r == 0 || r == m { 0.5 } else { 1.0 };
                    acc += w * ev.values[[r, a]] * ev.values[[r, b]];
                }
                acc *= h;
                let want = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(acc, want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn fourier_derivatives_are_exact() {
        let spec = BasisSpec::fourier(4, (-std::f64::consts::PI, std::f64::consts::PI)).unwrap();
        let pts = [-2.0, -0.5, 0.1, 1.7];
        let ev = eval_basis(&spec, &pts).unwrap();
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        for (r, &x) in pts.iter().enumerate() {
            for k in 1..=4usize {
                let kf = k as f64;
                assert_abs_diff_eq!(
                    ev.d1[[r, 2 * k]],
                    kf * (kf * x).cos() * inv_sqrt_pi,
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    ev.d2[[r, 2 * k - 1]],
                    -kf * kf * (kf * x).cos() * inv_sqrt_pi,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn out_of_domain_points_are_rejected() {
        let spec = BasisSpec::bspline(3, 8, KnotConfig::Shifted, (0.0, 1.0)).unwrap();
        let err = eval_basis(&spec, &[0.5, 1.5]).unwrap_err();
        match err {
            Error::OutOfDomain { index, value, .. } => {
                assert_eq!(index, 1);
                assert_eq!(value, 1.5);
            }
            other => panic!("expected OutOfDomain, got {other:?}"),
        }
    }

    #[test]
    fn undersized_spec_is_rejected() {
        assert!(matches!(
            BasisSpec::bspline(3, 3, KnotConfig::Shifted, (0.0, 1.0)),
            Err(Error::InvalidBasis { .. })
        ));
        assert!(matches!(
            build_bspline_knots(2, 2, KnotConfig::Equispaced),
            Err(Error::InvalidBasis { .. })
        ));
    }

    #[test]
    fn tensor_basis_layout_and_derivatives() {
        let sx = BasisSpec::bspline(2, 4, KnotConfig::Equispaced, (0.0, 1.0)).unwrap();
        let st = BasisSpec::bspline(1, 3, KnotConfig::Equispaced, (0.0, 1.0)).unwrap();
        let pts: Vec<(f64, f64)> = vec![(0.2, 0.3), (0.7, 0.9), (0.5, 0.05)];
        let ev = tensor_basis(&sx, &st, &pts).unwrap();
        assert_eq!(ev.n_terms(), tensor_len(4, 3));
        assert_eq!(ev.n_terms(), 19);

        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ts: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let ex = eval_basis(&sx, &xs).unwrap();
        let et = eval_basis(&st, &ts).unwrap();
        let dt = ev.dt.as_ref().unwrap();
        for r in 0..pts.len() {
            for i in 0..4 {
                for j in 0..3 {
                    let c = 4 + 3 + i * 3 + j;
                    assert_abs_diff_eq!(
                        ev.values[[r, c]],
                        ex.values[[r, i]] * et.values[[r, j]],
                        epsilon = 1e-14
                    );
                    assert_abs_diff_eq!(
                        ev.d1[[r, c]],
                        ex.d1[[r, i]] * et.values[[r, j]],
                        epsilon = 1e-14
                    );
                    assert_abs_diff_eq!(
                        dt[[r, c]],
                        ex.values[[r, i]] * et.d1[[r, j]],
                        epsilon = 1e-14
                    );
                }
            }
            // Pure time columns carry no x-derivatives.
            for j in 0..3 {
                assert_eq!(ev.d1[[r, 4 + j]], 0.0);
                assert_eq!(ev.d2[[r, 4 + j]], 0.0);
            }
        }
    }

    #[test]
    fn tensor_of_constant_bases_is_all_ones() {
        let sx = BasisSpec::bspline(0, 1, KnotConfig::Equispaced, (0.0, 1.0)).unwrap();
        let st = BasisSpec::bspline(0, 1, KnotConfig::Equispaced, (0.0, 1.0)).unwrap();
        let ev = tensor_basis(&sx, &st, &[(0.25, 0.75), (0.9, 0.1)]).unwrap();
        assert_eq!(ev.n_terms(), 3);
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(ev.values[[r, c]], 1.0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Partition of unity holds at every in-domain point, for every
        /// degree/size/layout combination.
        #[test]
        fn bspline_partition_of_unity(
            degree in 0usize..=3,
            extra in 1usize..=24,
            shifted in proptest::bool::ANY,
            xs in proptest::collection::vec(0.0f64..=1.0, 1..40),
        ) {
            let n = degree + extra;
            let config = if shifted { KnotConfig::Shifted } else { KnotConfig::Equispaced };
            let spec = BasisSpec::bspline(degree, n, config, (0.0, 1.0)).unwrap();
            let ev = eval_basis(&spec, &xs).unwrap();
            for r in 0..xs.len() {
                let sum: f64 = (0..n).map(|c| ev.values[[r, c]]).sum();
                prop_assert!((sum - 1.0).abs() < 1e-12, "sum = {} at x = {}", sum, xs[r]);
            }
        }
    }
}
