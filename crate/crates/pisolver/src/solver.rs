//! The learned iterative solver: unrolled inference and end-to-end training.
//!
//! An instance is solved by repeating a conditioned descent step on the
//! physics loss: starting from coefficients `Θ₀`, each step computes the
//! physics-loss gradient, feeds it (with broadcast problem descriptors)
//! through the conditioner network, and updates the coefficients. Training
//! differentiates a data loss on the final iterate through every unrolled
//! step, so the network learns to reshape the gradient specifically so that
//! a few steps land close to the solution.
//!
//! The whole unroll is recorded on a [`tape::Tape`](crate::nnet::tape). The
//! inner-gradient nodes replicate, kernel call for kernel call and constant
//! for constant, the analytic
//! [`Discretization::loss_and_grad`](crate::pde::Discretization::loss_and_grad);
//! with the network disabled the recorded update is plain gradient descent,
//! bit for bit. Inference reads only the equation data — reference solutions
//! enter training and evaluation metrics, never the solve itself.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::nnet::tape::{NodeId, Tape};
use crate::nnet::{ConditionerNet, InputSpec, ParamNodes, IN_CHANNELS};
use crate::optim::{lbfgs_minimize, lbfgs_minimize_traced, Adam, LbfgsConfig, Sgd};
use crate::pde::{Discretization, Family, PdeInstance, PdeLossConfig};

/// Ridge weight used when projecting forcing terms onto the trial basis for
/// the network's input channels.
const PROJECTION_RIDGE: f64 = 1e-10;

/// How the initial coefficients are chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta0Init {
    /// Start from the zero function.
    #[default]
    Zeros,
}

impl Theta0Init {
    pub fn build(&self, n: usize) -> Array1<f64> {
        match self {
            Theta0Init::Zeros => Array1::zeros(n),
        }
    }
}

/// How the network output enters the iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Descent step on the transformed gradient:
    /// `Θ_{l+1} = Θ_l − η·F(∇L, …)`.
    #[default]
    GdUpdate,
    /// The network output replaces the iterate: `Θ_{l+1} = F(∇L, …)`.
    Direct,
}

/// What transforms the gradient inside each step.
#[derive(Debug, Clone)]
pub enum Conditioner {
    /// No transformation: the unrolled iteration is plain gradient descent.
    Identity,
    /// A learned network.
    Network(ConditionerNet),
}

impl Conditioner {
    fn net(&self) -> Option<&ConditionerNet> {
        match self {
            Conditioner::Identity => None,
            Conditioner::Network(net) => Some(net),
        }
    }
}

/// Unrolled-iteration shape: step count and inner step size.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Unrolled steps `L`.
    pub steps: usize,
    /// Inner step size `η`.
    pub eta: f64,
    pub update_rule: UpdateRule,
    pub theta0: Theta0Init,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            steps: 2,
            eta: 1.0,
            update_rule: UpdateRule::GdUpdate,
            theta0: Theta0Init::Zeros,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig {
                reason: "solver needs at least one unrolled step".into(),
            });
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidConfig {
                reason: format!("inner step size {} must be finite and positive", self.eta),
            });
        }
        Ok(())
    }
}

/// Training-loop hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial outer learning rate.
    pub lr: f64,
    /// Per-epoch multiplicative decay of the learning rate.
    pub lr_decay: f64,
    /// Transition point of the smooth-L1 data loss.
    pub huber_delta: f64,
    /// Evaluate train/test metrics every this many epochs.
    pub eval_every: usize,
    /// Seed for the per-epoch shuffle of the training set.
    pub shuffle_seed: u64,
    /// Stop as soon as an evaluation reaches this test relative error.
    pub stop_at_test_rel_mse: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 750,
            batch_size: 16,
            lr: 1e-3,
            lr_decay: 0.995,
            huber_delta: 1.0,
            eval_every: 50,
            shuffle_seed: 0,
            stop_at_test_rel_mse: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig {
                reason: "epochs, batch_size, and eval_every must be positive".into(),
            });
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig {
                reason: format!("learning rate {} must be finite and positive", self.lr),
            });
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig {
                reason: format!("lr decay {} must lie in (0, 1]", self.lr_decay),
            });
        }
        if !(self.huber_delta.is_finite() && self.huber_delta > 0.0) {
            return Err(Error::InvalidConfig {
                reason: format!("huber delta {} must be finite and positive", self.huber_delta),
            });
        }
        Ok(())
    }
}

/// Everything the unrolled solver needs about one instance, precomputed:
/// discretization operators as shared matrices, the constant network input
/// channels, and the reference solution (used only by training and metrics).
#[derive(Debug, Clone)]
pub struct InstanceOps {
    family: Family,
    n: usize,
    n_interior: usize,
    r_matrix: Arc<Array2<f64>>,
    r_rhs: Array1<f64>,
    v_interior: Option<Arc<Array2<f64>>>,
    b_matrix: Arc<Array2<f64>>,
    b_rhs: Array1<f64>,
    values_full: Arc<Array2<f64>>,
    lambda_bc: f64,
    rho: f64,
    /// Whether the gradient channel is fed to the network (ablations feed
    /// zeros instead).
    grad_channel_on: bool,
    /// RMS of the physics-loss gradient at the zero iterate. The network's
    /// gradient channel is fed in units of this scale: raw gradients span
    /// many orders of magnitude across instances (stiff operators produce
    /// entries around 1e5), which a fixed-scale network input layer handles
    /// poorly.
    grad_scale: f64,
    /// Channels 1–3: broadcast equation parameters / boundary scalars /
    /// projected forcing, already masked per the network's input spec.
    const_channels: [Array1<f64>; IN_CHANNELS - 1],
    target: Arc<Array1<f64>>,
}

impl InstanceOps {
    /// Discretize `inst` and precompute the solver inputs.
    ///
    /// `target` is the reference solution on the instance's grid. The
    /// channels are assembled per family — the equation parameters and
    /// boundary scalars broadcast over the coefficient axis, forcing terms
    /// projected onto the trial basis by ridge least squares — and then
    /// masked according to `input_spec`. The gradient channel is always fed
    /// to the network normalized by the instance's initial-gradient RMS
    /// (see `grad_scale`); the descent update applies the conditioned
    /// direction at the raw gradient's own scale.
    pub fn new(
        inst: &PdeInstance,
        spec_x: &BasisSpec,
        spec_t: Option<&BasisSpec>,
        loss_cfg: &PdeLossConfig,
        input_spec: &InputSpec,
        target: &[f64],
    ) -> Result<Self> {
        let disc = Discretization::new(inst, spec_x, spec_t, loss_cfg)?;
        let n = disc.interior_matrix().ncols();
        if target.len() != disc.values_full().nrows() {
            return Err(Error::ShapeMismatch {
                context: "reference solution vs grid".to_string(),
                expected: format!("{}", disc.values_full().nrows()),
                got: format!("{}", target.len()),
            });
        }

        let broadcast = |v: f64| Array1::from_elem(n, v);
        let zeros = || Array1::zeros(n);
        let gamma = inst.gamma();
        let const_channels = match inst.family {
            Family::Helmholtz1d => {
                let (u0, v0) = inst.point_bc().expect("oscillator has point data");
                [
                    if input_spec.gamma {
                        broadcast(gamma[0])
                    } else {
                        zeros()
                    },
                    if input_spec.bc { broadcast(u0) } else { zeros() },
                    if input_spec.bc { broadcast(v0) } else { zeros() },
                ]
            }
            Family::Poisson1d => {
                let (u0, v0) = inst.point_bc().expect("source problem has point data");
                let forcing = if input_spec.forcing {
                    let f = inst
                        .forcing_values(&inst.grid.xs)
                        .expect("source problem has a forcing term");
                    linalg::least_squares(disc.values_full(), &Array1::from(f), PROJECTION_RIDGE)?
                } else {
                    zeros()
                };
                [
                    if input_spec.bc { broadcast(u0) } else { zeros() },
                    if input_spec.bc { broadcast(v0) } else { zeros() },
                    forcing,
                ]
            }
            Family::Nlrd1dt => {
                let profile = if input_spec.forcing {
                    linalg::least_squares(disc.boundary_matrix(), disc.boundary_rhs(), PROJECTION_RIDGE)?
                } else {
                    zeros()
                };
                [
                    if input_spec.gamma {
                        broadcast(gamma[0])
                    } else {
                        zeros()
                    },
                    if input_spec.gamma {
                        broadcast(gamma[1])
                    } else {
                        zeros()
                    },
                    profile,
                ]
            }
        };

        let v_interior = if inst.family == Family::Nlrd1dt {
            Some(Arc::new(disc.interior_values().clone()))
        } else {
            None
        };
        let (_, g0) = disc.loss_and_grad(&Array1::zeros(n))?;
        let grad_scale = (g0.dot(&g0) / n as f64).sqrt().max(1e-12);
        Ok(InstanceOps {
            family: inst.family,
            n,
            n_interior: disc.n_interior(),
            r_matrix: Arc::new(disc.interior_matrix().clone()),
            r_rhs: disc.interior_rhs().clone(),
            v_interior,
            b_matrix: Arc::new(disc.boundary_matrix().clone()),
            b_rhs: disc.boundary_rhs().clone(),
            values_full: Arc::new(disc.values_full().clone()),
            lambda_bc: disc.lambda_bc(),
            rho: disc.rho(),
            grad_channel_on: input_spec.grad,
            grad_scale,
            const_channels,
            target: Arc::new(Array1::from(target.to_vec())),
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Number of trial-basis coefficients.
    pub fn n_terms(&self) -> usize {
        self.n
    }

    /// Reference solution on the grid.
    pub fn target(&self) -> &Array1<f64> {
        &self.target
    }

    /// `u_Θ` on the full grid.
    pub fn predict(&self, theta: &Array1<f64>) -> Array1<f64> {
        linalg::mat_vec(&self.values_full, theta)
    }
}

/// Graph handles produced by one unroll.
struct Unrolled {
    /// Physics loss at `Θ₀ … Θ_L`.
    loss_ids: Vec<NodeId>,
    /// The iterates `Θ₀ … Θ_L`.
    theta_ids: Vec<NodeId>,
    param_nodes: Option<ParamNodes>,
}

/// Record the full unrolled iteration for one instance on `tape`.
///
/// The residual, loss, and gradient nodes replay the exact kernel sequence
/// of the analytic evaluator, so with `net = None` the final iterate matches
/// plain gradient descent bit for bit.
fn build_unrolled(
    tape: &mut Tape,
    net: Option<&ConditionerNet>,
    cfg: &SolverConfig,
    ops: &InstanceOps,
) -> Unrolled {
    let nonlinear = ops.family == Family::Nlrd1dt;
    let s_id = tape.input_vec(ops.r_rhs.clone());
    let c_id = tape.input_vec(ops.b_rhs.clone());
    let ones_id = nonlinear.then(|| tape.input_vec(Array1::ones(ops.n_interior)));

    let param_nodes = net.map(|n| n.param_nodes(tape));
    let channel_ids = net.map(|_| {
        let zero_grad = (!ops.grad_channel_on).then(|| tape.input_vec(Array1::zeros(ops.n)));
        let consts: Vec<NodeId> = ops
            .const_channels
            .iter()
            .map(|ch| tape.input_vec(ch.clone()))
            .collect();
        (zero_grad, consts)
    });

    let mut theta = tape.input_vec(cfg.theta0.build(ops.n));
    let mut theta_ids = vec![theta];
    let mut loss_ids = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        // Residuals and loss at the current iterate, in the analytic
        // evaluator's operation order.
        let r_lin = tape.mat_vec(Arc::clone(&ops.r_matrix), theta);
        let (r, u) = if nonlinear {
            let v = ops.v_interior.as_ref().expect("nonlinear family has V");
            let ones = ones_id.expect("nonlinear family has a ones vector");
            let u = tape.mat_vec(Arc::clone(v), theta);
            let one_minus_u = tape.sub(ones, u);
            let q = tape.mul(u, one_minus_u);
            let lin = tape.sub(r_lin, s_id);
            let rq = tape.scale(q, ops.rho);
            (tape.sub(lin, rq), Some(u))
        } else {
            (tape.sub(r_lin, s_id), None)
        };
        let b_lin = tape.mat_vec(Arc::clone(&ops.b_matrix), theta);
        let b = tape.sub(b_lin, c_id);
        let l_r = tape.dot(r, r);
        let l_b = tape.dot(b, b);
        let l_bs = tape.scale(l_b, ops.lambda_bc);
        loss_ids.push(tape.add(l_r, l_bs));

        if step == cfg.steps {
            break;
        }

        // Gradient of the physics loss, skipped when nothing consumes it.
        let need_grad = net.is_none() || ops.grad_channel_on;
        let grad = need_grad.then(|| {
            let gr = tape.mat_t_vec(Arc::clone(&ops.r_matrix), r);
            let mut g = tape.scale(gr, 2.0);
            if let Some(u) = u {
                let v = ops.v_interior.as_ref().expect("nonlinear family has V");
                let ones = ones_id.expect("nonlinear family has a ones vector");
                let two_u = tape.scale(u, 2.0);
                let one_minus_2u = tape.sub(ones, two_u);
                let w = tape.mul(r, one_minus_2u);
                let gv = tape.mat_t_vec(Arc::clone(v), w);
                let t2 = tape.scale(gv, -2.0 * ops.rho);
                g = tape.add(g, t2);
            }
            let gb = tape.mat_t_vec(Arc::clone(&ops.b_matrix), b);
            let t3 = tape.scale(gb, 2.0 * ops.lambda_bc);
            tape.add(g, t3)
        });

        theta = match net {
            None => {
                let g = grad.expect("identity conditioner always uses the gradient");
                let delta = tape.scale(g, cfg.eta);
                tape.sub(theta, delta)
            }
            Some(net) => {
                let (zero_grad, consts) = channel_ids.as_ref().expect("channels built with net");
                let ch0 = match zero_grad {
                    Some(z) => *z,
                    None => {
                        // Feed the gradient in units of its initial RMS so
                        // every instance presents the network with O(1)
                        // inputs; the descent update itself still uses the
                        // raw gradient scale.
                        let g = grad.expect("gradient channel enabled");
                        tape.scale(g, 1.0 / ops.grad_scale)
                    }
                };
                let mut channels = vec![ch0];
                channels.extend_from_slice(consts);
                let f = net.apply(
                    tape,
                    param_nodes.as_ref().expect("params mounted with net"),
                    &channels,
                );
                match cfg.update_rule {
                    UpdateRule::GdUpdate => {
                        let delta = tape.scale(f, cfg.eta);
                        tape.sub(theta, delta)
                    }
                    UpdateRule::Direct => f,
                }
            }
        };
        theta_ids.push(theta);
    }
    Unrolled {
        loss_ids,
        theta_ids,
        param_nodes,
    }
}

/// One solved instance: the physics-loss trace and every iterate.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    /// Physics loss at `Θ₀ … Θ_L`.
    pub pde_losses: Vec<f64>,
    /// The iterates themselves.
    pub thetas: Vec<Array1<f64>>,
    /// `u_{Θ_L}` on the instance grid.
    pub predicted: Array1<f64>,
}

/// Run the iteration on one instance. Forward only — the reference solution
/// is never read.
pub fn solve_instance(
    conditioner: &Conditioner,
    cfg: &SolverConfig,
    ops: &InstanceOps,
) -> SolveTrace {
    let mut tape = Tape::new();
    let unrolled = build_unrolled(&mut tape, conditioner.net(), cfg, ops);
    let pde_losses = unrolled
        .loss_ids
        .iter()
        .map(|id| tape.value(*id).as_scalar())
        .collect();
    let thetas: Vec<Array1<f64>> = unrolled
        .theta_ids
        .iter()
        .map(|id| tape.value(*id).as_vec().clone())
        .collect();
    let predicted = ops.predict(thetas.last().expect("at least the initial iterate"));
    SolveTrace {
        pde_losses,
        thetas,
        predicted,
    }
}

/// Data loss of the final iterate and its gradient with respect to the
/// network parameters, differentiated through all unrolled steps.
pub fn data_loss_and_grad(
    net: &ConditionerNet,
    cfg: &SolverConfig,
    ops: &InstanceOps,
    huber_delta: f64,
) -> (f64, Array1<f64>) {
    let mut tape = Tape::new();
    let unrolled = build_unrolled(&mut tape, Some(net), cfg, ops);
    let final_theta = *unrolled.theta_ids.last().expect("final iterate exists");
    let pred = tape.mat_vec(Arc::clone(&ops.values_full), final_theta);
    let loss = tape.smooth_l1(pred, Arc::clone(&ops.target), huber_delta);
    let value = tape.value(loss).as_scalar();
    let adjoints = tape.backward(loss);
    let nodes = unrolled.param_nodes.as_ref().expect("params mounted");
    let grad = net.gather_grad(&adjoints, nodes);
    (value, grad)
}

/// Error of a prediction relative to the target's own energy:
/// `Σ(p − t)² / Σt²`.
pub fn relative_mse(pred: &Array1<f64>, target: &Array1<f64>) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch {
            context: "relative error".to_string(),
            expected: format!("{}", target.len()),
            got: format!("{}", pred.len()),
        });
    }
    let mut diff = Array1::zeros(pred.len());
    for i in 0..pred.len() {
        diff[i] = pred[i] - target[i];
    }
    let denom = linalg::dot(target, target);
    if !(denom > 0.0) {
        return Err(Error::UndefinedMetric {
            reason: "target has zero energy, relative error is undefined".to_string(),
        });
    }
    Ok(linalg::dot(&diff, &diff) / denom)
}

/// Mean relative error of the solver across `ops`.
pub fn evaluate_model(
    conditioner: &Conditioner,
    cfg: &SolverConfig,
    ops: &[InstanceOps],
) -> Result<f64> {
    if ops.is_empty() {
        return Err(Error::UndefinedMetric {
            reason: "no instances to evaluate".to_string(),
        });
    }
    let metrics: Vec<f64> = ops
        .par_iter()
        .map(|o| {
            let trace = solve_instance(conditioner, cfg, o);
            relative_mse(&trace.predicted, o.target())
        })
        .collect::<Result<_>>()?;
    Ok(metrics.iter().sum::<f64>() / metrics.len() as f64)
}

/// One evaluation row of a training run.
#[derive(Debug, Clone, Copy)]
pub struct HistoryRow {
    /// Epochs completed when the row was taken.
    pub epoch: usize,
    pub train_rel_mse: f64,
    pub test_rel_mse: f64,
    /// Learning rate in effect during the epoch.
    pub lr: f64,
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<HistoryRow>,
    /// Mean train/test relative error after the final epoch.
    pub final_train_rel_mse: f64,
    pub final_test_rel_mse: f64,
}

/// Train the conditioner network in place.
///
/// Each epoch shuffles the training set, averages the unrolled data-loss
/// gradient over each mini-batch (in fixed index order, so results don't
/// depend on thread scheduling), and takes one adaptive step per batch with
/// a decayed learning rate. A batch where most instances produce non-finite
/// losses aborts the run.
pub fn train(
    net: &mut ConditionerNet,
    cfg: &SolverConfig,
    train_cfg: &TrainConfig,
    train_ops: &[InstanceOps],
    test_ops: &[InstanceOps],
) -> Result<TrainReport> {
    cfg.validate()?;
    train_cfg.validate()?;
    if train_ops.is_empty() || test_ops.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "training needs non-empty train and test sets".into(),
        });
    }

    let mut opt = Adam::new(train_cfg.lr, net.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..train_ops.len()).collect();
    let mut history = Vec::new();

    for epoch in 0..train_cfg.epochs {
        opt.lr = train_cfg.lr * train_cfg.lr_decay.powi(epoch as i32);
        order.shuffle(&mut rng);
        for batch in order.chunks(train_cfg.batch_size) {
            let results: Vec<(f64, Array1<f64>)> = batch
                .par_iter()
                .map(|&i| data_loss_and_grad(net, cfg, &train_ops[i], train_cfg.huber_delta))
                .collect();
            let finite: Vec<&(f64, Array1<f64>)> =
                results.iter().filter(|(l, _)| l.is_finite()).collect();
            if finite.len() * 2 < batch.len() {
                return Err(Error::NumericDivergence {
                    context: format!(
                        "epoch {}: {} of {} batch losses non-finite",
                        epoch + 1,
                        batch.len() - finite.len(),
                        batch.len()
                    ),
                });
            }
            let mut grad = Array1::zeros(net.n_params());
            for (_, g) in &finite {
                for i in 0..grad.len() {
                    grad[i] += g[i];
                }
            }
            let scale = 1.0 / finite.len() as f64;
            for i in 0..grad.len() {
                grad[i] *= scale;
            }
            opt.step(net.params_mut(), &grad);
        }
        if (epoch + 1) % train_cfg.eval_every == 0 || epoch + 1 == train_cfg.epochs {
            let train_m = evaluate_net(net, cfg, train_ops)?;
            let test_m = evaluate_net(net, cfg, test_ops)?;
            history.push(HistoryRow {
                epoch: epoch + 1,
                train_rel_mse: train_m,
                test_rel_mse: test_m,
                lr: opt.lr,
            });
            if train_cfg
                .stop_at_test_rel_mse
                .is_some_and(|target| test_m <= target)
            {
                break;
            }
        }
    }
    let last = history.last().expect("final epoch always evaluates");
    Ok(TrainReport {
        final_train_rel_mse: last.train_rel_mse,
        final_test_rel_mse: last.test_rel_mse,
        history,
    })
}

fn evaluate_net(net: &ConditionerNet, cfg: &SolverConfig, ops: &[InstanceOps]) -> Result<f64> {
    let metrics: Vec<f64> = ops
        .par_iter()
        .map(|o| {
            let mut tape = Tape::new();
            let unrolled = build_unrolled(&mut tape, Some(net), cfg, o);
            let final_theta = unrolled.theta_ids.last().expect("final iterate exists");
            let pred = o.predict(tape.value(*final_theta).as_vec());
            relative_mse(&pred, o.target())
        })
        .collect::<Result<_>>()?;
    Ok(metrics.iter().sum::<f64>() / metrics.len() as f64)
}

/// Classical optimizer run directly on one instance's physics loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Sgd,
    Adam,
    Lbfgs,
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaselineKind::Sgd => write!(f, "sgd"),
            BaselineKind::Adam => write!(f, "adam"),
            BaselineKind::Lbfgs => write!(f, "lbfgs"),
        }
    }
}

/// Result of a classical baseline run.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub theta: Array1<f64>,
    pub final_loss: f64,
    /// Steps (or outer iterations, for the quasi-Newton baseline) taken.
    pub steps: usize,
}

/// Minimize an instance's physics loss from the zero iterate with a
/// classical optimizer — the budget-matched comparison point for the
/// learned solver.
pub fn minimize_pde_loss(
    disc: &Discretization,
    kind: BaselineKind,
    steps: usize,
    lr: f64,
) -> Result<BaselineRun> {
    let n = disc.interior_matrix().ncols();
    let mut theta = Array1::zeros(n);
    match kind {
        BaselineKind::Sgd => {
            let opt = Sgd::new(lr);
            for _ in 0..steps {
                let (_, g) = disc.loss_and_grad(&theta)?;
                opt.step(&mut theta, &g);
            }
            Ok(BaselineRun {
                final_loss: disc.loss(&theta)?,
                theta,
                steps,
            })
        }
        BaselineKind::Adam => {
            let mut opt = Adam::new(lr, n);
            for _ in 0..steps {
                let (_, g) = disc.loss_and_grad(&theta)?;
                opt.step(&mut theta, &g);
            }
            Ok(BaselineRun {
                final_loss: disc.loss(&theta)?,
                theta,
                steps,
            })
        }
        BaselineKind::Lbfgs => {
            let cfg = LbfgsConfig {
                max_iters: steps,
                grad_tol: 0.0,
                ..LbfgsConfig::default()
            };
            let report = lbfgs_minimize(
                |x| {
                    disc.loss_and_grad(x)
                        .expect("iterate keeps the coefficient dimension")
                },
                theta,
                &cfg,
            );
            Ok(BaselineRun {
                theta: report.x,
                final_loss: report.value,
                steps: report.iterations,
            })
        }
    }
}

/// Per-step record of a classical optimization run: the physics loss at every
/// iterate (starting with the zero iterate) and, when a reference solution is
/// supplied, the relative mean-squared error of the prediction.
#[derive(Debug, Clone)]
pub struct BaselineTrace {
    /// Physics loss at iterates `0..=steps` (quasi-Newton runs may stop
    /// early, shortening the trace).
    pub losses: Vec<f64>,
    /// Relative MSE per iterate; empty when no reference was given.
    pub rel_mse: Vec<f64>,
    /// Final coefficients.
    pub theta: Array1<f64>,
}

/// Like [`minimize_pde_loss`], but recording the loss (and, given a
/// reference, the relative MSE) at every iterate.
pub fn baseline_trace(
    disc: &Discretization,
    kind: BaselineKind,
    steps: usize,
    lr: f64,
    reference: Option<&Array1<f64>>,
) -> Result<BaselineTrace> {
    let n = disc.interior_matrix().ncols();
    let mut losses = Vec::with_capacity(steps + 1);
    let mut rel = Vec::new();
    let mut record = |theta: &Array1<f64>, loss: f64| -> Result<()> {
        losses.push(loss);
        if let Some(target) = reference {
            rel.push(relative_mse(&disc.predict(theta), target)?);
        }
        Ok(())
    };
    let mut theta = Array1::<f64>::zeros(n);
    match kind {
        BaselineKind::Sgd | BaselineKind::Adam => {
            record(&theta, disc.loss(&theta)?)?;
            let mut adam = (kind == BaselineKind::Adam).then(|| Adam::new(lr, n));
            let sgd = Sgd::new(lr);
            for _ in 0..steps {
                let (_, g) = disc.loss_and_grad(&theta)?;
                match &mut adam {
                    Some(opt) => opt.step(&mut theta, &g),
                    None => sgd.step(&mut theta, &g),
                }
                record(&theta, disc.loss(&theta)?)?;
            }
        }
        BaselineKind::Lbfgs => {
            record(&theta, disc.loss(&theta)?)?;
            let cfg = LbfgsConfig {
                max_iters: steps,
                grad_tol: 0.0,
                ..LbfgsConfig::default()
            };
            let mut trace_err = None;
            let report = lbfgs_minimize_traced(
                |x| {
                    disc.loss_and_grad(x)
                        .expect("iterate keeps the coefficient dimension")
                },
                theta,
                &cfg,
                |x, fx| {
                    if trace_err.is_none() {
                        if let Err(e) = record(x, fx) {
                            trace_err = Some(e);
                        }
                    }
                },
            );
            if let Some(e) = trace_err {
                return Err(e);
            }
            theta = report.x;
            return Ok(BaselineTrace {
                losses,
                rel_mse: rel,
                theta,
            });
        }
    }
    Ok(BaselineTrace {
        losses,
        rel_mse: rel,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::KnotConfig;
    use crate::dataset::{default_shape, sample_instance};
    use crate::nnet::NetArch;
    use approx::assert_abs_diff_eq;

    fn line_spec(n: usize) -> BasisSpec {
        BasisSpec::bspline(3, n, KnotConfig::Shifted, (0.0, 1.0)).unwrap()
    }

    fn make_ops(family: Family, stream: u64, input_spec: &InputSpec) -> (PdeInstance, InstanceOps) {
        let shape = default_shape(family);
        let inst = sample_instance(family, 9, stream, shape);
        let xs = inst.grid.xs.clone();
        let target: Vec<f64> = match inst.analytic_solution(&xs) {
            Some(u) => u,
            // The reaction–diffusion family has no closed form; a smooth
            // stand-in target is fine for solver-mechanics tests.
            None => (0..inst.grid.len())
                .map(|i| (i as f64 * 0.01).sin() * 0.3 + 0.4)
                .collect(),
        };
        let (spec_x, spec_t) = match family {
            Family::Nlrd1dt => (
                line_spec(12),
                Some(BasisSpec::bspline(2, 5, KnotConfig::Equispaced, (0.0, 1.0)).unwrap()),
            ),
            _ => (line_spec(16), None),
        };
        let ops = InstanceOps::new(
            &inst,
            &spec_x,
            spec_t.as_ref(),
            &PdeLossConfig::default(),
            input_spec,
            &target,
        )
        .unwrap();
        (inst, ops)
    }

    fn rebuild_disc(inst: &PdeInstance) -> Discretization {
        let (spec_x, spec_t) = match inst.family {
            Family::Nlrd1dt => (
                line_spec(12),
                Some(BasisSpec::bspline(2, 5, KnotConfig::Equispaced, (0.0, 1.0)).unwrap()),
            ),
            _ => (line_spec(16), None),
        };
        Discretization::new(inst, &spec_x, spec_t.as_ref(), &PdeLossConfig::default()).unwrap()
    }

    #[test]
    fn identity_conditioner_is_plain_gradient_descent_bit_for_bit() {
        for family in [Family::Helmholtz1d, Family::Poisson1d, Family::Nlrd1dt] {
            let (inst, ops) = make_ops(family, 4, &InputSpec::default());
            let disc = rebuild_disc(&inst);
            let cfg = SolverConfig {
                steps: 3,
                eta: 1e-4,
                ..SolverConfig::default()
            };
            let trace = solve_instance(&Conditioner::Identity, &cfg, &ops);

            // Reference: the analytic evaluator driving the plain optimizer.
            let opt = Sgd::new(cfg.eta);
            let mut theta = Array1::zeros(ops.n_terms());
            let mut losses = vec![disc.loss(&theta).unwrap()];
            for _ in 0..cfg.steps {
                let (_, g) = disc.loss_and_grad(&theta).unwrap();
                opt.step(&mut theta, &g);
                losses.push(disc.loss(&theta).unwrap());
            }

            assert_eq!(trace.pde_losses.len(), cfg.steps + 1);
            for (a, b) in trace.pde_losses.iter().zip(&losses) {
                assert_eq!(a.to_bits(), b.to_bits(), "{family}: loss trace diverged");
            }
            let final_theta = trace.thetas.last().unwrap();
            for (a, b) in final_theta.iter().zip(theta.iter()) {
                assert_eq!(a.to_bits(), b.to_bits(), "{family}: iterate diverged");
            }
        }
    }

    #[test]
    fn trace_starts_at_the_initial_iterate_loss() {
        let (inst, ops) = make_ops(Family::Poisson1d, 0, &InputSpec::default());
        let disc = rebuild_disc(&inst);
        let cfg = SolverConfig::default();
        let trace = solve_instance(&Conditioner::Identity, &cfg, &ops);
        let loss0 = disc.loss(&Array1::zeros(ops.n_terms())).unwrap();
        assert_eq!(trace.pde_losses[0].to_bits(), loss0.to_bits());
    }

    #[test]
    fn solve_ignores_the_reference_solution() {
        let input_spec = InputSpec::default();
        let (inst, ops_a) = make_ops(Family::Helmholtz1d, 2, &input_spec);
        // Same instance, different target.
        let xs = inst.grid.xs.clone();
        let mut wrong = inst.analytic_solution(&xs).unwrap();
        for v in &mut wrong {
            *v += 17.0;
        }
        let spec_x = line_spec(16);
        let ops_b = InstanceOps::new(
            &inst,
            &spec_x,
            None,
            &PdeLossConfig::default(),
            &input_spec,
            &wrong,
        )
        .unwrap();
        let cfg = SolverConfig {
            steps: 2,
            eta: 1e-4,
            ..SolverConfig::default()
        };
        let ta = solve_instance(&Conditioner::Identity, &cfg, &ops_a);
        let tb = solve_instance(&Conditioner::Identity, &cfg, &ops_b);
        for (a, b) in ta.predicted.iter().zip(tb.predicted.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn relative_error_identities() {
        let t = Array1::from(vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(relative_mse(&t, &t).unwrap(), 0.0);
        let double = t.mapv(|v| v * 2.0);
        assert_eq!(relative_mse(&double, &t).unwrap(), 1.0);
        let zero = Array1::zeros(4);
        assert_eq!(relative_mse(&zero, &t).unwrap(), 1.0);
        assert!(matches!(
            relative_mse(&t, &zero),
            Err(Error::UndefinedMetric { .. })
        ));
        assert!(matches!(
            relative_mse(&Array1::zeros(3), &t),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn tiny_net(seed: u64, input_spec: InputSpec) -> ConditionerNet {
        let arch = NetArch {
            width: 4,
            modes: 4,
            depth: 1,
            fc_width: 4,
        };
        ConditionerNet::init(arch, input_spec, seed).unwrap()
    }

    #[test]
    fn unrolled_parameter_gradient_matches_finite_differences() {
        // The end-to-end gradient — data loss through every unrolled step,
        // through the network, through the inner physics gradients — checked
        // against central differences on a sample of coordinates.
        let input_spec = InputSpec::default();
        let (_, ops) = make_ops(Family::Poisson1d, 1, &input_spec);
        for steps in [1usize, 2, 3] {
            let mut net = tiny_net(33, input_spec);
            // Wake the zero-initialized head so gradients flow everywhere.
            for v in net.params_mut().iter_mut() {
                if *v == 0.0 {
                    *v = 0.03;
                }
            }
            let cfg = SolverConfig {
                steps,
                eta: 0.05,
                ..SolverConfig::default()
            };
            let (_, grad) = data_loss_and_grad(&net, &cfg, &ops, 1.0);

            let h = 1e-6;
            let n_check = 20;
            let stride = net.n_params() / n_check;
            let mut err2 = 0.0;
            let mut norm2 = 0.0;
            for k in 0..n_check {
                let i = k * stride;
                let base = net.params()[i];
                net.params_mut()[i] = base + h;
                let (fp, _) = data_loss_and_grad(&net, &cfg, &ops, 1.0);
                net.params_mut()[i] = base - h;
                let (fm, _) = data_loss_and_grad(&net, &cfg, &ops, 1.0);
                net.params_mut()[i] = base;
                let fd = (fp - fm) / (2.0 * h);
                err2 += (fd - grad[i]).powi(2);
                norm2 += grad[i].powi(2);
            }
            assert!(norm2 > 0.0, "L = {steps}: sampled gradient all zero");
            let rel = (err2 / norm2).sqrt();
            assert!(rel < 1e-4, "L = {steps}: FD mismatch rel {rel:.3e}");
        }
    }

    #[test]
    fn training_overfits_a_single_instance() {
        let input_spec = InputSpec::default();
        let (_, ops) = make_ops(Family::Poisson1d, 5, &input_spec);
        let mut net = tiny_net(7, input_spec);
        let cfg = SolverConfig {
            steps: 2,
            eta: 1.0,
            ..SolverConfig::default()
        };
        let train_cfg = TrainConfig {
            epochs: 400,
            batch_size: 1,
            lr: 3e-2,
            lr_decay: 0.997,
            eval_every: 100,
            ..TrainConfig::default()
        };
        let ops_vec = vec![ops];
        let report = train(&mut net, &cfg, &train_cfg, &ops_vec, &ops_vec).unwrap();
        assert!(
            report.final_train_rel_mse < 1e-1,
            "failed to overfit: rel mse {:.3e}",
            report.final_train_rel_mse
        );
        // Learning-rate schedule is recorded faithfully.
        for row in &report.history {
            let expected = train_cfg.lr * train_cfg.lr_decay.powi(row.epoch as i32 - 1);
            assert_abs_diff_eq!(row.lr, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn broken_network_aborts_training() {
        let input_spec = InputSpec::default();
        let (_, ops) = make_ops(Family::Poisson1d, 3, &input_spec);
        let mut net = tiny_net(1, input_spec);
        for v in net.params_mut().iter_mut() {
            *v = f64::NAN;
        }
        let ops_vec = vec![ops];
        let err = train(
            &mut net,
            &SolverConfig::default(),
            &TrainConfig {
                epochs: 2,
                batch_size: 1,
                ..TrainConfig::default()
            },
            &ops_vec,
            &ops_vec,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NumericDivergence { .. }));
    }

    #[test]
    fn ablated_gradient_channel_skips_the_inner_gradient() {
        // With the gradient channel off, the output still has the right
        // shape and the run completes; with it on, the two runs differ once
        // the network is non-trivial.
        let spec_on = InputSpec::default();
        let spec_off = InputSpec {
            grad: false,
            ..InputSpec::default()
        };
        let (_, ops_on) = make_ops(Family::Helmholtz1d, 6, &spec_on);
        let (_, ops_off) = make_ops(Family::Helmholtz1d, 6, &spec_off);
        let mut net = tiny_net(2, spec_on);
        for v in net.params_mut().iter_mut() {
            if *v == 0.0 {
                *v = 0.05;
            }
        }
        let cfg = SolverConfig {
            steps: 2,
            eta: 0.1,
            ..SolverConfig::default()
        };
        let on = solve_instance(&Conditioner::Network(net.clone()), &cfg, &ops_on);
        let off = solve_instance(&Conditioner::Network(net), &cfg, &ops_off);
        assert_eq!(on.predicted.len(), off.predicted.len());
        let differ = on
            .predicted
            .iter()
            .zip(off.predicted.iter())
            .any(|(a, b)| a != b);
        assert!(differ, "gradient channel had no effect");
    }

    #[test]
    fn classical_baselines_reduce_the_physics_loss() {
        let (inst, _) = make_ops(Family::Poisson1d, 8, &InputSpec::default());
        let disc = rebuild_disc(&inst);
        let loss0 = disc.loss(&Array1::zeros(disc.interior_matrix().ncols())).unwrap();

        // The loss floor is the normal-equations minimizer — the basis
        // cannot represent the solution exactly, so the floor is not zero.
        let (a, b) = disc.assemble_linear_system().unwrap();
        let theta_star = linalg::solve_spd(&a, &b, "baseline oracle").unwrap();
        let loss_star = disc.loss(&theta_star).unwrap();

        let lbfgs = minimize_pde_loss(&disc, BaselineKind::Lbfgs, 200, 0.0).unwrap();
        assert!(
            lbfgs.final_loss <= loss_star * (1.0 + 1e-6) + 1e-12,
            "quasi-Newton stalled: {:.6e} vs floor {:.6e}",
            lbfgs.final_loss,
            loss_star
        );
        let adam = minimize_pde_loss(&disc, BaselineKind::Adam, 500, 1e-2).unwrap();
        assert!(adam.final_loss < loss0, "adaptive baseline stalled");
        // Plain descent needs a step below the curvature limit — the
        // normal matrix's top eigenvalue is enormous for this family.
        let sgd = minimize_pde_loss(&disc, BaselineKind::Sgd, 200, 1e-8).unwrap();
        assert!(sgd.final_loss < loss0, "descent baseline stalled");
    }

    #[test]
    fn baseline_traces_record_every_iterate() {
        let (inst, ops) = make_ops(Family::Poisson1d, 8, &InputSpec::default());
        let disc = rebuild_disc(&inst);
        let target = ops.target().clone();

        // Plain descent below the curvature limit: the quadratic loss is
        // monotone nonincreasing along the iterates.
        let sgd = baseline_trace(&disc, BaselineKind::Sgd, 50, 1e-8, Some(&target)).unwrap();
        assert_eq!(sgd.losses.len(), 51);
        assert_eq!(sgd.rel_mse.len(), 51);
        for w in sgd.losses.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "descent loss increased");
        }
        // Trace endpoints agree with the untraced run.
        let run = minimize_pde_loss(&disc, BaselineKind::Sgd, 50, 1e-8).unwrap();
        assert_eq!(sgd.losses.last().copied().unwrap(), run.final_loss);
        for (a, b) in sgd.theta.iter().zip(run.theta.iter()) {
            assert_eq!(a, b);
        }

        // No reference: the error column stays empty.
        let adam = baseline_trace(&disc, BaselineKind::Adam, 10, 1e-2, None).unwrap();
        assert_eq!(adam.losses.len(), 11);
        assert!(adam.rel_mse.is_empty());

        // Quasi-Newton may stop early but never exceeds the budget, and its
        // final recorded loss is the report's final loss.
        let lb = baseline_trace(&disc, BaselineKind::Lbfgs, 30, 0.0, Some(&target)).unwrap();
        assert!(lb.losses.len() <= 31 && lb.losses.len() >= 2);
        assert_eq!(lb.losses.len(), lb.rel_mse.len());
        let lb_run = minimize_pde_loss(&disc, BaselineKind::Lbfgs, 30, 0.0).unwrap();
        assert_eq!(lb.losses.last().copied().unwrap(), lb_run.final_loss);
    }
}
