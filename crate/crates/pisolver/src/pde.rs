//! Parametric PDE families and their physics-informed discretizations.
//!
//! Three families are supported, each posed on the unit domain with
//! endpoint-exclusive uniform grids:
//!
//! * **`Helmholtz1d`** — `u'' + ω²u = 0` on `[0, 1]` with value and slope
//!   prescribed at `x = 0`.
//! * **`Poisson1d`** — `−u'' = f` on `[0, 1]`, again with value and slope at
//!   `x = 0`, where `f` is a coefficient-weighted sine profile (see
//!   [`PdeInstance::forcing_values`]).
//! * **`Nlrd1dt`** — the nonlinear reaction–diffusion equation
//!   `u_t − ν u_xx − ρ u(1 − u) = 0` on `[0, 1]²` with a fixed Gaussian bump
//!   as the initial profile.
//!
//! A [`Discretization`] fixes a linear ansatz `u_Θ = Σ_i θ_i ψ_i` over a
//! [`basis`](crate::basis) and exposes the physics-informed loss
//!
//! ```text
//! L(Θ) = Σ_interior r(Θ)² + λ · Σ_boundary b(Θ)²
//! ```
//!
//! (plain sums, no averaging) together with its exact gradient and Hessian.
//! For the linear families the loss is an exact quadratic
//! `L(Θ) = Θᵀ A Θ − 2 bᵀ Θ + const` whose system `(A, b)` is available from
//! [`Discretization::assemble_linear_system`]; the gradient identity
//! `∇L = 2(AΘ − b)` ties the two code paths together and is covered by tests.
//!
//! All reductions in the loss/gradient path run through the fixed-order
//! kernels in [`linalg`](crate::linalg), so independently written evaluators
//! that follow the same documented operation order reproduce these numbers
//! bit-for-bit.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::basis::{eval_basis, tensor_basis, BasisSpec};
use crate::error::{Error, Result};
use crate::linalg;

/// Exponent controlling how strongly higher forcing modes are damped in the
/// Poisson family: mode `i` is weighted by `i^(2·FORCING_DECAY)`.
pub const FORCING_DECAY: f64 = -0.5;

/// Number of coefficients in a Poisson forcing draw.
pub const POISSON_MODES: usize = 16;

/// The parametric families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Helmholtz1d,
    Poisson1d,
    Nlrd1dt,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Family::Helmholtz1d => "helmholtz1d",
            Family::Poisson1d => "poisson1d",
            Family::Nlrd1dt => "nlrd1dt",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "helmholtz1d" => Ok(Family::Helmholtz1d),
            "poisson1d" => Ok(Family::Poisson1d),
            "nlrd1dt" => Ok(Family::Nlrd1dt),
            other => Err(Error::UnsupportedFamily {
                context: format!("unknown family name {other:?}"),
            }),
        }
    }
}

/// Family-specific equation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PdeParams {
    Helmholtz { omega: f64 },
    Poisson { coeffs: Vec<f64> },
    Nlrd { nu: f64, rho: f64 },
}

/// Boundary/initial data anchoring an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundaryData {
    /// Value and slope prescribed at the left end of the domain.
    PointValueSlope { value: f64, slope: f64 },
    /// Solution values prescribed on the whole spatial grid at `t = 0`.
    InitialProfile { values: Vec<f64> },
}

/// Collocation grid. Spatial nodes are `x_j = j / m` for `j = 0..m`
/// (endpoint-exclusive); space–time grids add `t_j = j / m_t` the same way
/// and enumerate points time-major (`t` outer, `x` inner).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub xs: Vec<f64>,
    pub ts: Option<Vec<f64>>,
}

impl Grid {
    /// Uniform 1d grid of `m` endpoint-exclusive nodes on `[0, 1)`.
    pub fn line(m: usize) -> Grid {
        Grid {
            xs: (0..m).map(|j| j as f64 / m as f64).collect(),
            ts: None,
        }
    }

    /// Uniform space–time grid, endpoint-exclusive along both axes.
    pub fn space_time(m_x: usize, m_t: usize) -> Grid {
        Grid {
            xs: (0..m_x).map(|j| j as f64 / m_x as f64).collect(),
            ts: Some((0..m_t).map(|j| j as f64 / m_t as f64).collect()),
        }
    }

    /// Total number of collocation points.
    pub fn len(&self) -> usize {
        match &self.ts {
            None => self.xs.len(),
            Some(ts) => self.xs.len() * ts.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Space–time points in the flat time-major order used everywhere:
    /// point `it·m_x + ix` is `(xs[ix], ts[it])`.
    pub fn points_2d(&self) -> Option<Vec<(f64, f64)>> {
        let ts = self.ts.as_ref()?;
        let mut pts = Vec::with_capacity(self.xs.len() * ts.len());
        for &t in ts {
            for &x in &self.xs {
                pts.push((x, t));
            }
        }
        Some(pts)
    }
}

/// The fixed initial profile of the reaction–diffusion family: a Gaussian
/// bump centred in the domain.
pub fn nlrd_initial_profile(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| (-32.0 * (x - 0.5).powi(2)).exp()).collect()
}

/// One concrete problem: a family member with its parameters, boundary data,
/// and collocation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeInstance {
    pub family: Family,
    pub params: PdeParams,
    pub bc: BoundaryData,
    pub grid: Grid,
}

impl PdeInstance {
    /// The inhomogeneity that distinguishes instances beyond scalar
    /// parameters: the Poisson forcing `f`, or the reaction–diffusion initial
    /// profile. `None` for the homogeneous Helmholtz family.
    ///
    /// The Poisson forcing is a damped coefficient sum in which every mode
    /// shares the `sin(πx)` profile,
    /// `f(x) = (π/K) · Σ_{i=1..K} a_i · i^(2·FORCING_DECAY) · sin(πx)`,
    /// so instances differ only through the collapsed amplitude
    /// `c = (π/K) Σ a_i · i^(2·FORCING_DECAY)`. That makes the family
    /// effectively rank-one in space while keeping a 16-dimensional
    /// coefficient vector per instance.
    pub fn forcing_values(&self, xs: &[f64]) -> Option<Vec<f64>> {
        match (&self.family, &self.params) {
            (Family::Poisson1d, PdeParams::Poisson { coeffs }) => {
                Some(xs.iter().map(|&x| poisson_forcing(coeffs, x)).collect())
            }
            (Family::Nlrd1dt, _) => Some(nlrd_initial_profile(xs)),
            _ => None,
        }
    }

    /// Scalar equation parameters, in a fixed per-family order.
    pub fn gamma(&self) -> Vec<f64> {
        match &self.params {
            PdeParams::Helmholtz { omega } => vec![*omega],
            PdeParams::Poisson { .. } => Vec::new(),
            PdeParams::Nlrd { nu, rho } => vec![*nu, *rho],
        }
    }

    /// Point boundary data `(value, slope)` for the 1d families.
    pub fn point_bc(&self) -> Option<(f64, f64)> {
        match &self.bc {
            BoundaryData::PointValueSlope { value, slope } => Some((*value, *slope)),
            BoundaryData::InitialProfile { .. } => None,
        }
    }

    /// Closed-form solution at `pts`, where the family has one.
    ///
    /// * Helmholtz: `u = α·cos(ωx + β)` with `β = atan(−v0/(ω·u0))`,
    ///   `α = u0/cos(β)`. At `u0 = 0` the phase formula divides by zero, so
    ///   that case takes the explicit branch `u = (v0/ω)·sin(ωx)` (the limit
    ///   of the generic form).
    /// * Poisson: `u = c·sin(πx)/π² + (v0 − c/π)·x + u0` with the collapsed
    ///   forcing amplitude `c`.
    /// * The reaction–diffusion family has no closed form (`None`).
    pub fn analytic_solution(&self, pts: &[f64]) -> Option<Vec<f64>> {
        match (&self.family, &self.params, &self.bc) {
            (
                Family::Helmholtz1d,
                PdeParams::Helmholtz { omega },
                BoundaryData::PointValueSlope { value, slope },
            ) => {
                let (u0, v0, w) = (*value, *slope, *omega);
                if u0 == 0.0 {
                    Some(pts.iter().map(|&x| v0 / w * (w * x).sin()).collect())
                } else {
                    let beta = (-v0 / (w * u0)).atan();
                    let alpha = u0 / beta.cos();
                    Some(pts.iter().map(|&x| alpha * (w * x + beta).cos()).collect())
                }
            }
            (
                Family::Poisson1d,
                PdeParams::Poisson { coeffs },
                BoundaryData::PointValueSlope { value, slope },
            ) => {
                let (u0, v0) = (*value, *slope);
                let c = poisson_forcing_amplitude(coeffs);
                let pi = std::f64::consts::PI;
                Some(
                    pts.iter()
                        .map(|&x| c * (pi * x).sin() / (pi * pi) + (v0 - c / pi) * x + u0)
                        .collect(),
                )
            }
            _ => None,
        }
    }
}

/// The collapsed Poisson forcing amplitude `c` with `f(x) = c·sin(πx)`.
pub fn poisson_forcing_amplitude(coeffs: &[f64]) -> f64 {
    let k = coeffs.len() as f64;
    let mut acc = 0.0;
    for (idx, &a) in coeffs.iter().enumerate() {
        let i = (idx + 1) as f64;
        acc += a * i.powf(2.0 * FORCING_DECAY);
    }
    std::f64::consts::PI / k * acc
}

/// Poisson forcing evaluated term by term (see
/// [`PdeInstance::forcing_values`] for the formula).
pub fn poisson_forcing(coeffs: &[f64], x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let k = coeffs.len() as f64;
    let mut acc = 0.0;
    for (idx, &a) in coeffs.iter().enumerate() {
        let i = (idx + 1) as f64;
        acc += a * i.powf(2.0 * FORCING_DECAY) * (pi * x).sin();
    }
    pi / k * acc
}

/// Weights in the physics-informed loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeLossConfig {
    /// Weight on the boundary penalty term.
    pub lambda_bc: f64,
}

impl Default for PdeLossConfig {
    fn default() -> Self {
        PdeLossConfig { lambda_bc: 1.0 }
    }
}

impl PdeLossConfig {
    /// The loss configuration used for an instance unless overridden: unit
    /// boundary weight for every family.
    pub fn for_instance(_inst: &PdeInstance) -> Self {
        PdeLossConfig::default()
    }
}

/// A PDE instance discretized over a basis: precomputed interior/boundary
/// operator rows plus everything needed to evaluate the physics-informed
/// loss, its gradient, and its Hessian.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub family: Family,
    /// Number of ansatz coefficients.
    pub n: usize,
    /// Linear interior operator: rows of `R` so that the interior residual is
    /// `r = R·Θ − s` (plus the nonlinear reaction term for `Nlrd1dt`).
    r_matrix: Array2<f64>,
    r_rhs: Array1<f64>,
    /// Basis values at interior points (needed by the nonlinear reaction
    /// term; kept for all families for prediction symmetry).
    v_interior: Array2<f64>,
    /// Boundary operator rows: boundary residual `b = B·Θ − c`.
    b_matrix: Array2<f64>,
    b_rhs: Array1<f64>,
    lambda_bc: f64,
    /// Reaction strength ρ (zero for the linear families).
    rho: f64,
    /// Basis values at every grid point, for prediction.
    values_full: Array2<f64>,
}

/// Intermediate quantities of one loss evaluation, in the documented
/// operation order.
struct ForwardPass {
    r: Array1<f64>,
    b: Array1<f64>,
    /// `u_Θ` at interior points (nonlinear family only).
    u: Option<Array1<f64>>,
    loss: f64,
}

impl Discretization {
    /// Discretize `inst` over a spatial basis (plus a temporal basis for the
    /// space–time family).
    ///
    /// Interior points are every grid point except the boundary anchor: for
    /// the 1d families the anchor is the first node (where value and slope
    /// are prescribed), for the space–time family the whole `t = 0` row.
    pub fn new(
        inst: &PdeInstance,
        spec_x: &BasisSpec,
        spec_t: Option<&BasisSpec>,
        cfg: &PdeLossConfig,
    ) -> Result<Self> {
        if !(cfg.lambda_bc.is_finite() && cfg.lambda_bc >= 0.0) {
            return Err(Error::InvalidConfig {
                reason: format!("boundary weight {} must be finite and ≥ 0", cfg.lambda_bc),
            });
        }
        match inst.family {
            Family::Helmholtz1d | Family::Poisson1d => {
                Self::new_1d(inst, spec_x, cfg)
            }
            Family::Nlrd1dt => {
                let spec_t = spec_t.ok_or_else(|| Error::InvalidConfig {
                    reason: "space–time family needs a temporal basis".to_string(),
                })?;
                Self::new_2d(inst, spec_x, spec_t, cfg)
            }
        }
    }

    fn new_1d(inst: &PdeInstance, spec_x: &BasisSpec, cfg: &PdeLossConfig) -> Result<Self> {
        if inst.grid.ts.is_some() {
            return Err(Error::InvalidConfig {
                reason: "1d family given a space–time grid".to_string(),
            });
        }
        let xs = &inst.grid.xs;
        let m = xs.len();
        if m < 2 {
            return Err(Error::DegenerateGeometry {
                reason: format!("1d grid needs at least 2 points, got {m}"),
            });
        }
        let (u0, v0) = inst.point_bc().ok_or_else(|| Error::InvalidConfig {
            reason: "1d family needs point value/slope boundary data".to_string(),
        })?;
        let ev = eval_basis(spec_x, xs)?;
        let n = ev.n_terms();
        let mi = m - 1;
        let mut r_matrix = Array2::<f64>::zeros((mi, n));
        let mut r_rhs = Array1::<f64>::zeros(mi);
        let mut v_interior = Array2::<f64>::zeros((mi, n));
        match &inst.params {
            PdeParams::Helmholtz { omega } => {
                let w2 = omega * omega;
                for i in 1..m {
                    for c in 0..n {
                        r_matrix[[i - 1, c]] = ev.d2[[i, c]] + w2 * ev.values[[i, c]];
                        v_interior[[i - 1, c]] = ev.values[[i, c]];
                    }
                }
            }
            PdeParams::Poisson { coeffs } => {
                for i in 1..m {
                    for c in 0..n {
                        r_matrix[[i - 1, c]] = -ev.d2[[i, c]];
                        v_interior[[i - 1, c]] = ev.values[[i, c]];
                    }
                    r_rhs[i - 1] = poisson_forcing(coeffs, xs[i]);
                }
            }
            PdeParams::Nlrd { .. } => {
                return Err(Error::InvalidConfig {
                    reason: "reaction–diffusion parameters on a 1d family".to_string(),
                })
            }
        }
        let mut b_matrix = Array2::<f64>::zeros((2, n));
        for c in 0..n {
            b_matrix[[0, c]] = ev.values[[0, c]];
            b_matrix[[1, c]] = ev.d1[[0, c]];
        }
        let b_rhs = Array1::from(vec![u0, v0]);
        Ok(Discretization {
            family: inst.family,
            n,
            r_matrix,
            r_rhs,
            v_interior,
            b_matrix,
            b_rhs,
            lambda_bc: cfg.lambda_bc,
            rho: 0.0,
            values_full: ev.values,
        })
    }

    fn new_2d(
        inst: &PdeInstance,
        spec_x: &BasisSpec,
        spec_t: &BasisSpec,
        cfg: &PdeLossConfig,
    ) -> Result<Self> {
        let (nu, rho) = match &inst.params {
            PdeParams::Nlrd { nu, rho } => (*nu, *rho),
            _ => {
                return Err(Error::InvalidConfig {
                    reason: "space–time family needs reaction–diffusion parameters".to_string(),
                })
            }
        };
        let profile = match &inst.bc {
            BoundaryData::InitialProfile { values } => values,
            _ => {
                return Err(Error::InvalidConfig {
                    reason: "space–time family needs an initial profile".to_string(),
                })
            }
        };
        let pts = inst.grid.points_2d().ok_or_else(|| Error::InvalidConfig {
            reason: "space–time family needs a time axis on its grid".to_string(),
        })?;
        let m_x = inst.grid.xs.len();
        let m_t = inst.grid.ts.as_ref().map(|t| t.len()).unwrap_or(0);
        if m_t < 2 || m_x < 1 {
            return Err(Error::DegenerateGeometry {
                reason: format!("space–time grid {m_x}×{m_t} needs ≥ 2 time levels"),
            });
        }
        if profile.len() != m_x {
            return Err(Error::ShapeMismatch {
                context: "initial profile vs spatial grid".to_string(),
                expected: format!("{m_x}"),
                got: format!("{}", profile.len()),
            });
        }
        let ev = tensor_basis(spec_x, spec_t, &pts)?;
        let dt = ev.dt.as_ref().expect("tensor basis always carries dt");
        let n = ev.n_terms();
        let mi = m_x * (m_t - 1);
        let mut r_matrix = Array2::<f64>::zeros((mi, n));
        let r_rhs = Array1::<f64>::zeros(mi);
        let mut v_interior = Array2::<f64>::zeros((mi, n));
        // Interior: every point with t > 0, i.e. flat rows m_x... onwards.
        for p in m_x..pts.len() {
            let row = p - m_x;
            for c in 0..n {
                r_matrix[[row, c]] = dt[[p, c]] - nu * ev.d2[[p, c]];
                v_interior[[row, c]] = ev.values[[p, c]];
            }
        }
        // Boundary: the t = 0 row carries the initial profile.
        let mut b_matrix = Array2::<f64>::zeros((m_x, n));
        for p in 0..m_x {
            for c in 0..n {
                b_matrix[[p, c]] = ev.values[[p, c]];
            }
        }
        let b_rhs = Array1::from(profile.clone());
        Ok(Discretization {
            family: inst.family,
            n,
            r_matrix,
            r_rhs,
            v_interior,
            b_matrix,
            b_rhs,
            lambda_bc: cfg.lambda_bc,
            rho,
            values_full: ev.values,
        })
    }

    pub fn n_interior(&self) -> usize {
        self.r_matrix.nrows()
    }

    pub fn n_boundary(&self) -> usize {
        self.b_matrix.nrows()
    }

    pub fn lambda_bc(&self) -> f64 {
        self.lambda_bc
    }

    /// Basis values at every grid point (row per point, column per term).
    pub fn values_full(&self) -> &Array2<f64> {
        &self.values_full
    }

    /// `u_Θ` on the full grid.
    pub fn predict(&self, theta: &Array1<f64>) -> Array1<f64> {
        linalg::mat_vec(&self.values_full, theta)
    }

    fn check_theta(&self, theta: &Array1<f64>, context: &str) -> Result<()> {
        if theta.len() != self.n {
            return Err(Error::ShapeMismatch {
                context: context.to_string(),
                expected: format!("{}", self.n),
                got: format!("{}", theta.len()),
            });
        }
        Ok(())
    }

    /// One loss evaluation in the documented operation order. Any evaluator
    /// that reproduces exactly this sequence of kernel calls (and the same
    /// scalar constants) reproduces the loss bit-for-bit.
    fn forward(&self, theta: &Array1<f64>) -> ForwardPass {
        let r_lin = linalg::mat_vec(&self.r_matrix, theta);
        let (r, u) = if self.family == Family::Nlrd1dt {
            let u = linalg::mat_vec(&self.v_interior, theta);
            // q = u ∘ (1 − u), elementwise, then r = (R·Θ − s) − ρ·q.
            let mut r = Array1::<f64>::zeros(r_lin.len());
            for i in 0..r_lin.len() {
                let q = u[i] * (1.0 - u[i]);
                r[i] = (r_lin[i] - self.r_rhs[i]) - self.rho * q;
            }
            (r, Some(u))
        } else {
            let mut r = Array1::<f64>::zeros(r_lin.len());
            for i in 0..r_lin.len() {
                r[i] = r_lin[i] - self.r_rhs[i];
            }
            (r, None)
        };
        let b_lin = linalg::mat_vec(&self.b_matrix, theta);
        let mut b = Array1::<f64>::zeros(b_lin.len());
        for i in 0..b_lin.len() {
            b[i] = b_lin[i] - self.b_rhs[i];
        }
        let loss = linalg::dot(&r, &r) + linalg::dot(&b, &b) * self.lambda_bc;
        ForwardPass { r, b, u, loss }
    }

    /// The physics-informed loss at `theta`.
    pub fn loss(&self, theta: &Array1<f64>) -> Result<f64> {
        self.check_theta(theta, "loss")?;
        Ok(self.forward(theta).loss)
    }

    /// Loss and exact gradient at `theta`.
    ///
    /// Gradient operation order (mirrored by the recorded-graph evaluator in
    /// the solver, which must stay bit-identical):
    ///
    /// 1. `g ← 2·Rᵀr`
    /// 2. nonlinear family only: `g ← g + (−2ρ)·Vᵀ(r ∘ (1 − 2u))`
    /// 3. `g ← g + (2λ)·Bᵀb`
    pub fn loss_and_grad(&self, theta: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
        self.check_theta(theta, "loss_and_grad")?;
        let fp = self.forward(theta);
        let gr = linalg::mat_t_vec(&self.r_matrix, &fp.r);
        let mut g = Array1::<f64>::zeros(self.n);
        for c in 0..self.n {
            g[c] = gr[c] * 2.0;
        }
        if let Some(u) = &fp.u {
            let mut w = Array1::<f64>::zeros(u.len());
            for i in 0..u.len() {
                w[i] = fp.r[i] * (1.0 - u[i] * 2.0);
            }
            let gv = linalg::mat_t_vec(&self.v_interior, &w);
            let kappa = -2.0 * self.rho;
            for c in 0..self.n {
                g[c] += gv[c] * kappa;
            }
        }
        let gb = linalg::mat_t_vec(&self.b_matrix, &fp.b);
        let scale_b = 2.0 * self.lambda_bc;
        for c in 0..self.n {
            g[c] += gb[c] * scale_b;
        }
        Ok((fp.loss, g))
    }

    /// For linear families, the quadratic form of the loss:
    /// `L(Θ) = Θᵀ A Θ − 2 bᵀ Θ + const` with `A = RᵀR + λBᵀB` and
    /// `b = Rᵀs + λBᵀc`, so that `∇L = 2(AΘ − b)`. `A` is symmetric positive
    /// semidefinite by construction.
    pub fn assemble_linear_system(&self) -> Result<(Array2<f64>, Array1<f64>)> {
        if self.family == Family::Nlrd1dt {
            return Err(Error::UnsupportedFamily {
                context: "assemble_linear_system on the nonlinear family".to_string(),
            });
        }
        let n = self.n;
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..self.r_matrix.nrows() {
            for p in 0..n {
                let rp = self.r_matrix[[i, p]];
                if rp == 0.0 {
                    continue;
                }
                for q in 0..n {
                    a[[p, q]] += rp * self.r_matrix[[i, q]];
                }
            }
        }
        for i in 0..self.b_matrix.nrows() {
            for p in 0..n {
                let bp = self.lambda_bc * self.b_matrix[[i, p]];
                if bp == 0.0 {
                    continue;
                }
                for q in 0..n {
                    a[[p, q]] += bp * self.b_matrix[[i, q]];
                }
            }
        }
        let mut rhs = linalg::mat_t_vec(&self.r_matrix, &self.r_rhs);
        let gb = linalg::mat_t_vec(&self.b_matrix, &self.b_rhs);
        for c in 0..n {
            rhs[c] += self.lambda_bc * gb[c];
        }
        Ok((a, rhs))
    }

    /// Exact Hessian of the loss at `theta`. Constant (`2A`) for the linear
    /// families; for the nonlinear family it adds the Gauss–Newton term of
    /// the linearized residual plus the curvature of the reaction term:
    ///
    /// `H = 2 JᵀJ + Σ_i 4ρ·r_i·ψ_iψ_iᵀ + 2λ BᵀB`,
    /// `J = R − ρ·diag(1 − 2u)·V`.
    pub fn hessian(&self, theta: &Array1<f64>) -> Result<Array2<f64>> {
        self.check_theta(theta, "hessian")?;
        let n = self.n;
        if self.family != Family::Nlrd1dt {
            let (a, _) = self.assemble_linear_system()?;
            return Ok(a.mapv(|v| 2.0 * v));
        }
        let fp = self.forward(theta);
        let u = fp.u.as_ref().expect("nonlinear forward carries u");
        let mut h = Array2::<f64>::zeros((n, n));
        let mi = self.r_matrix.nrows();
        let mut j_row = vec![0.0; n];
        for i in 0..mi {
            let factor = self.rho * (1.0 - 2.0 * u[i]);
            for c in 0..n {
                j_row[c] = self.r_matrix[[i, c]] - factor * self.v_interior[[i, c]];
            }
            for p in 0..n {
                let jp = 2.0 * j_row[p];
                for q in 0..n {
                    h[[p, q]] += jp * j_row[q];
                }
            }
            let curv = 4.0 * self.rho * fp.r[i];
            for p in 0..n {
                let vp = curv * self.v_interior[[i, p]];
                if vp == 0.0 {
                    continue;
                }
                for q in 0..n {
                    h[[p, q]] += vp * self.v_interior[[i, q]];
                }
            }
        }
        for i in 0..self.b_matrix.nrows() {
            for p in 0..n {
                let bp = 2.0 * self.lambda_bc * self.b_matrix[[i, p]];
                if bp == 0.0 {
                    continue;
                }
                for q in 0..n {
                    h[[p, q]] += bp * self.b_matrix[[i, q]];
                }
            }
        }
        Ok(h)
    }

    /// Interior linear operator rows (`R`), exposed read-only.
    pub fn interior_matrix(&self) -> &Array2<f64> {
        &self.r_matrix
    }

    /// Interior right-hand side (`s`).
    pub fn interior_rhs(&self) -> &Array1<f64> {
        &self.r_rhs
    }

    /// Basis values at interior points (`V`).
    pub fn interior_values(&self) -> &Array2<f64> {
        &self.v_interior
    }

    /// Boundary operator rows (`B`).
    pub fn boundary_matrix(&self) -> &Array2<f64> {
        &self.b_matrix
    }

    /// Boundary right-hand side (`c`).
    pub fn boundary_rhs(&self) -> &Array1<f64> {
        &self.b_rhs
    }

    /// Reaction strength ρ (zero for the linear families).
    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Physics-informed loss and gradient for `theta`; free-function form of
/// [`Discretization::loss_and_grad`].
pub fn residual_loss(disc: &Discretization, theta: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
    disc.loss_and_grad(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::KnotConfig;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spline_spec(n: usize) -> BasisSpec {
        BasisSpec::bspline(3, n, KnotConfig::Shifted, (0.0, 1.0)).unwrap()
    }

    fn helmholtz_instance(omega: f64, u0: f64, v0: f64, m: usize) -> PdeInstance {
        PdeInstance {
            family: Family::Helmholtz1d,
            params: PdeParams::Helmholtz { omega },
            bc: BoundaryData::PointValueSlope { value: u0, slope: v0 },
            grid: Grid::line(m),
        }
    }

    fn poisson_instance(coeffs: Vec<f64>, u0: f64, v0: f64, m: usize) -> PdeInstance {
        PdeInstance {
            family: Family::Poisson1d,
            params: PdeParams::Poisson { coeffs },
            bc: BoundaryData::PointValueSlope { value: u0, slope: v0 },
            grid: Grid::line(m),
        }
    }

    fn nlrd_instance(nu: f64, rho: f64, m_x: usize, m_t: usize) -> PdeInstance {
        let grid = Grid::space_time(m_x, m_t);
        let bc = BoundaryData::InitialProfile {
            values: nlrd_initial_profile(&grid.xs),
        };
        PdeInstance {
            family: Family::Nlrd1dt,
            params: PdeParams::Nlrd { nu, rho },
            bc,
            grid,
        }
    }

    fn nlrd_disc(nu: f64, rho: f64) -> Discretization {
        let inst = nlrd_instance(nu, rho, 12, 8);
        let sx = BasisSpec::bspline(3, 6, KnotConfig::Shifted, (0.0, 1.0)).unwrap();
        let st = BasisSpec::bspline(2, 4, KnotConfig::Shifted, (0.0, 1.0)).unwrap();
        Discretization::new(&inst, &sx, Some(&st), &PdeLossConfig::default()).unwrap()
    }

    #[test]
    fn loss_at_zero_matches_hand_computation() {
        let coeffs: Vec<f64> = (1..=16).map(|i| (i as f64) * 0.37 - 3.0).collect();
        let inst = poisson_instance(coeffs.clone(), 0.8, -0.4, 32);
        let disc = Discretization::new(&inst, &spline_spec(12), None, &PdeLossConfig::default())
            .unwrap();
        let loss = disc.loss(&Array1::zeros(12)).unwrap();
        // At Θ = 0 the interior residual is −f(x_i) and the boundary residual
        // is −(u0, v0).
        let mut want = 0.0;
        for i in 1..32 {
            want += poisson_forcing(&coeffs, i as f64 / 32.0).powi(2);
        }
        want += 0.8f64.powi(2) + 0.4f64.powi(2);
        assert_abs_diff_eq!(loss, want, epsilon = 1e-10 * want.abs());
    }

    #[test]
    fn gradient_matches_finite_differences_all_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = PdeLossConfig::default();
        let discs: Vec<Discretization> = vec![
            Discretization::new(&helmholtz_instance(14.0, 0.6, -1.1, 48), &spline_spec(14), None, &cfg)
                .unwrap(),
            Discretization::new(
                &poisson_instance((1..=16).map(|i| ((i * 7 % 11) as f64) - 5.0).collect(), -0.3, 0.9, 48),
                &spline_spec(14),
                None,
                &cfg,
            )
            .unwrap(),
            nlrd_disc(2.5, -3.0),
        ];
        for disc in &discs {
            let theta = Array1::from(
                (0..disc.n).map(|_| rng.gen_range(-0.5..0.5)).collect::<Vec<f64>>(),
            );
            let (_, g) = disc.loss_and_grad(&theta).unwrap();
            let h = 1e-5;
            let mut err2 = 0.0;
            let mut norm2 = 0.0;
            for i in 0..disc.n {
                let mut tp = theta.clone();
                tp[i] += h;
                let mut tm = theta.clone();
                tm[i] -= h;
                let fd = (disc.loss(&tp).unwrap() - disc.loss(&tm).unwrap()) / (2.0 * h);
                err2 += (fd - g[i]).powi(2);
                norm2 += g[i].powi(2);
            }
            assert!(
                err2.sqrt() / norm2.sqrt() < 1e-6,
                "family {:?}: FD gradient mismatch {:.3e}",
                disc.family,
                err2.sqrt() / norm2.sqrt()
            );
        }
    }

    #[test]
    fn linear_system_reproduces_gradient_and_is_symmetric() {
        let inst = helmholtz_instance(9.0, 1.0, 0.2, 40);
        let disc =
            Discretization::new(&inst, &spline_spec(12), None, &PdeLossConfig::default()).unwrap();
        let (a, b) = disc.assemble_linear_system().unwrap();
        for p in 0..12 {
            for q in 0..12 {
                assert_abs_diff_eq!(a[[p, q]], a[[q, p]], epsilon = 1e-9);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let theta = Array1::from(
                (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>(),
            );
            let (_, g) = disc.loss_and_grad(&theta).unwrap();
            let ax = linalg::mat_vec(&a, &theta);
            let scale: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            for c in 0..12 {
                let via_system = 2.0 * (ax[c] - b[c]);
                assert!(
                    (via_system - g[c]).abs() <= 1e-10 * scale,
                    "component {c}: {via_system} vs {}",
                    g[c]
                );
            }
        }
    }

    #[test]
    fn quadratic_minimum_has_zero_gradient() {
        let inst = poisson_instance(vec![30.0; 16], 0.1, 0.5, 32);
        let disc =
            Discretization::new(&inst, &spline_spec(10), None, &PdeLossConfig::default()).unwrap();
        let (a, b) = disc.assemble_linear_system().unwrap();
        let theta_star = linalg::solve_spd(&a, &b, "pde minimizer").unwrap();
        let (_, g) = disc.loss_and_grad(&theta_star).unwrap();
        let gnorm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(gnorm < 1e-6, "gradient norm at minimizer: {gnorm:.3e}");
    }

    #[test]
    fn hessian_matches_finite_difference_of_gradient() {
        let disc = nlrd_disc(1.5, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let theta = Array1::from(
            (0..disc.n).map(|_| rng.gen_range(-0.4..0.4)).collect::<Vec<f64>>(),
        );
        let h_mat = disc.hessian(&theta).unwrap();
        let step = 1e-5;
        let mut err = 0.0f64;
        let mut norm = 0.0f64;
        for i in 0..disc.n {
            let mut tp = theta.clone();
            tp[i] += step;
            let mut tm = theta.clone();
            tm[i] -= step;
            let (_, gp) = disc.loss_and_grad(&tp).unwrap();
            let (_, gm) = disc.loss_and_grad(&tm).unwrap();
            for j in 0..disc.n {
                let fd = (gp[j] - gm[j]) / (2.0 * step);
                err += (fd - h_mat[[i, j]]).powi(2);
                norm += h_mat[[i, j]].powi(2);
            }
        }
        assert!(err.sqrt() / norm.sqrt() < 1e-6, "rel {:.3e}", err.sqrt() / norm.sqrt());
    }

    #[test]
    fn linear_hessian_is_twice_system_matrix() {
        let inst = helmholtz_instance(5.0, -0.7, 0.3, 24);
        let disc =
            Discretization::new(&inst, &spline_spec(9), None, &PdeLossConfig::default()).unwrap();
        let (a, _) = disc.assemble_linear_system().unwrap();
        let h = disc.hessian(&Array1::zeros(9)).unwrap();
        for p in 0..9 {
            for q in 0..9 {
                assert_abs_diff_eq!(h[[p, q]], 2.0 * a[[p, q]], epsilon = 1e-12);
            }
        }
    }

    /// Fourth-order Runge–Kutta oracle for the Helmholtz closed form.
    #[test]
    fn helmholtz_closed_form_matches_rk4_integration() {
        for &(omega, u0, v0) in &[(7.3, 0.9, -0.4), (23.0, -1.2, 2.0), (40.0, 0.0, 1.5)] {
            let inst = helmholtz_instance(omega, u0, v0, 64);
            let xs: Vec<f64> = (0..=200).map(|j| j as f64 / 200.0).collect();
            let exact = inst.analytic_solution(&xs).unwrap();
            // Integrate u'' = −ω²u as a first-order system with RK4.
            let f = |state: [f64; 2]| [state[1], -omega * omega * state[0]];
            let mut state = [u0, v0];
            let h = 1.0 / 200.0 / 50.0; // substeps keep RK4 error ≪ tolerance
            let mut numeric = vec![u0];
            for _ in 0..200 {
                for _ in 0..50 {
                    let k1 = f(state);
                    let k2 = f([state[0] + 0.5 * h * k1[0], state[1] + 0.5 * h * k1[1]]);
                    let k3 = f([state[0] + 0.5 * h * k2[0], state[1] + 0.5 * h * k2[1]]);
                    let k4 = f([state[0] + h * k3[0], state[1] + h * k3[1]]);
                    state[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
                    state[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
                }
                numeric.push(state[0]);
            }
            for (a, b) in exact.iter().zip(numeric.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn poisson_closed_form_satisfies_equation_and_bcs() {
        let coeffs: Vec<f64> = (1..=16).map(|i| 100.0 - 12.0 * i as f64).collect();
        let inst = poisson_instance(coeffs.clone(), 0.25, -1.5, 64);
        let h = 1e-4;
        let xs = [0.1, 0.35, 0.62, 0.9];
        for &x in &xs {
            let pts = [x - h, x, x + h];
            let u = inst.analytic_solution(&pts).unwrap();
            let lap = (u[0] - 2.0 * u[1] + u[2]) / (h * h);
            let f = poisson_forcing(&coeffs, x);
            assert_abs_diff_eq!(-lap, f, epsilon = 1e-4 * f.abs().max(1.0));
        }
        let u = inst.analytic_solution(&[0.0, h]).unwrap();
        assert_abs_diff_eq!(u[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!((u[1] - u[0]) / h, -1.5, epsilon = 1e-3);
    }

    #[test]
    fn helmholtz_degenerate_branch_is_continuous() {
        // The u0 = 0 branch must agree with the limit of the generic formula.
        let omega = 11.0;
        let v0 = 1.7;
        let xs: Vec<f64> = (0..50).map(|j| j as f64 / 50.0).collect();
        let exact_zero = helmholtz_instance(omega, 0.0, v0, 8)
            .analytic_solution(&xs)
            .unwrap();
        let near_zero = helmholtz_instance(omega, 1e-9, v0, 8)
            .analytic_solution(&xs)
            .unwrap();
        for (a, b) in exact_zero.iter().zip(near_zero.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn forcing_collapses_to_single_amplitude() {
        let coeffs: Vec<f64> = (1..=16).map(|i| (i as f64).sin() * 40.0).collect();
        let c = poisson_forcing_amplitude(&coeffs);
        for &x in &[0.0, 0.21, 0.5, 0.77, 1.0] {
            let f = poisson_forcing(&coeffs, x);
            assert_abs_diff_eq!(f, c * (std::f64::consts::PI * x).sin(), epsilon = 1e-10);
        }
    }

    #[test]
    fn family_names_round_trip() {
        for family in [Family::Helmholtz1d, Family::Poisson1d, Family::Nlrd1dt] {
            let s = family.to_string();
            assert_eq!(s.parse::<Family>().unwrap(), family);
        }
        assert!("heat2d".parse::<Family>().is_err());
    }

    #[test]
    fn grid_layout_is_endpoint_exclusive_time_major() {
        let g = Grid::line(64);
        assert_eq!(g.xs.len(), 64);
        assert_eq!(g.xs[0], 0.0);
        assert_abs_diff_eq!(g.xs[63], 63.0 / 64.0, epsilon = 1e-15);

        let g = Grid::space_time(4, 3);
        let pts = g.points_2d().unwrap();
        assert_eq!(pts.len(), 12);
        // Flat index it·m_x + ix.
        assert_eq!(pts[0], (0.0, 0.0));
        assert_eq!(pts[5], (0.25, 1.0 / 3.0));
        assert_eq!(pts[11], (0.75, 2.0 / 3.0));
    }

    #[test]
    fn mismatched_family_inputs_are_rejected() {
        let cfg = PdeLossConfig::default();
        // Space–time family without a temporal basis.
        let inst = nlrd_instance(1.0, 1.0, 8, 4);
        assert!(Discretization::new(&inst, &spline_spec(6), None, &cfg).is_err());
        // 1d family carrying a time axis.
        let mut bad = helmholtz_instance(3.0, 1.0, 0.0, 16);
        bad.grid.ts = Some(vec![0.0, 0.5]);
        assert!(Discretization::new(&bad, &spline_spec(6), None, &cfg).is_err());
        // Wrong theta length.
        let inst = helmholtz_instance(3.0, 1.0, 0.0, 16);
        let disc = Discretization::new(&inst, &spline_spec(6), None, &cfg).unwrap();
        assert!(disc.loss(&Array1::zeros(5)).is_err());
    }
}
