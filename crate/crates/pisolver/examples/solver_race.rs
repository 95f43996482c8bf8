//! Race a learned two-step solver against classical optimizers.
//!
//! Trains a small conditioner (reduced budget, a couple of minutes), then
//! solves held-out instances two ways: the learned solver gets exactly two
//! conditioned gradient steps, while SGD, Adam, and L-BFGS each get a budget
//! of plain iterations on the same physics loss and the same ansatz. The
//! point of the exercise: the physics loss is so badly conditioned that
//! generic iteration budgets in the thousands still lose to two learned
//! steps.
//!
//! Run with: cargo run --example solver_race

use std::time::Instant;

use ndarray::Array1;
use pisolver::basis::{BasisSpec, KnotConfig};
use pisolver::dataset::generate;
use pisolver::nnet::{ConditionerNet, InputSpec, NetArch};
use pisolver::pde::{Discretization, Family, PdeLossConfig};
use pisolver::solver::{
    baseline_trace, relative_mse, solve_instance, train, BaselineKind, Conditioner, InstanceOps,
    SolverConfig, TrainConfig,
};

fn main() -> pisolver::Result<()> {
    let family = Family::Helmholtz1d;
    let ds = generate(family, 0, 40, 10)?;
    let spec_x = BasisSpec::bspline(3, 32, KnotConfig::Shifted, (0.0, 1.0))?;
    let loss_cfg = PdeLossConfig::default();
    let input_spec = InputSpec::default();

    let build = |pairs: Vec<(pisolver::pde::PdeInstance, Array1<f64>)>| {
        pairs
            .into_iter()
            .map(|(inst, target)| {
                InstanceOps::new(
                    &inst,
                    &spec_x,
                    None,
                    &loss_cfg,
                    &input_spec,
                    target.as_slice().expect("contiguous"),
                )
            })
            .collect::<pisolver::Result<Vec<_>>>()
    };
    let train_ops = build(ds.train_pairs())?;
    let test_ops = build(ds.test_pairs())?;

    let solver_cfg = SolverConfig {
        steps: 2,
        ..SolverConfig::default()
    };
    let mut net = ConditionerNet::init(NetArch::default(), input_spec, 0)?;
    let train_cfg = TrainConfig {
        epochs: 150,
        ..TrainConfig::default()
    };
    println!("training the conditioner ({} epochs on 40 instances)...", train_cfg.epochs);
    let report = train(&mut net, &solver_cfg, &train_cfg, &train_ops, &test_ops)?;
    println!("done; held-out relative MSE {:.4}\n", report.final_test_rel_mse);

    let conditioner = Conditioner::Network(net);
    let budget = 1000;
    println!("per-instance race on 3 held-out instances (baselines get {budget} iterations):");
    println!(
        "{:<10} {:>7} {:>16} {:>12} {:>10}",
        "method", "steps", "physics loss", "rel MSE", "time"
    );
    let test_pairs = ds.test_pairs();
    for idx in 0..3 {
        let (inst, target) = &test_pairs[idx];
        let ops = &test_ops[idx];
        let disc = Discretization::new(inst, &spec_x, None, &loss_cfg)?;
        println!("--- instance {idx} ---");

        let t = Instant::now();
        let trace = solve_instance(&conditioner, &solver_cfg, ops);
        let learned_time = t.elapsed();
        let pred = ops.predict(trace.thetas.last().expect("final iterate"));
        println!(
            "{:<10} {:>7} {:>16.6e} {:>12.4e} {:>9.1?}",
            "learned",
            solver_cfg.steps,
            trace.pde_losses.last().expect("loss recorded"),
            relative_mse(&pred, target)?,
            learned_time
        );

        for (kind, name) in [
            (BaselineKind::Sgd, "sgd"),
            (BaselineKind::Adam, "adam"),
            (BaselineKind::Lbfgs, "l-bfgs"),
        ] {
            let lr = match kind {
                BaselineKind::Sgd => 1e-8,
                _ => 1e-1,
            };
            let t = Instant::now();
            let run = baseline_trace(&disc, kind, budget, lr, Some(target))?;
            let elapsed = t.elapsed();
            println!(
                "{:<10} {:>7} {:>16.6e} {:>12.4e} {:>9.1?}",
                name,
                budget,
                run.losses.last().expect("loss recorded"),
                run.rel_mse.last().expect("rel mse recorded"),
                elapsed
            );
        }
    }
    Ok(())
}
