//! Train a small conditioner network end to end (a couple of minutes).
//!
//! The solver runs a fixed number of gradient steps on the physics loss, but
//! each raw gradient is passed through a learned spectral network before it
//! is applied. Training backpropagates a data loss on held-out reference
//! solutions through the whole unrolled iteration, so the network learns to
//! reshape badly scaled gradients into productive update directions.
//!
//! This demo trains on a reduced problem (40 train / 10 test instances,
//! reduced epoch budget) to stay fast; the `train` subcommand of the CLI runs
//! the full-size protocol.
//!
//! Run with: cargo run --example train_conditioner

use pisolver::basis::{BasisSpec, KnotConfig};
use pisolver::dataset::generate;
use pisolver::nnet::{ConditionerNet, InputSpec, NetArch};
use pisolver::pde::{Family, PdeLossConfig};
use pisolver::solver::{
    evaluate_model, solve_instance, train, Conditioner, InstanceOps, SolverConfig, TrainConfig,
};

fn main() -> pisolver::Result<()> {
    let family = Family::Helmholtz1d;
    let ds = generate(family, 0, 40, 10)?;
    let spec_x = BasisSpec::bspline(3, 32, KnotConfig::Shifted, (0.0, 1.0))?;
    let loss_cfg = PdeLossConfig::default();
    let input_spec = InputSpec::default();

    let build = |pairs: Vec<(pisolver::pde::PdeInstance, ndarray::Array1<f64>)>| {
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
    println!(
        "{} train / {} test instances of {family}, {} ansatz terms",
        train_ops.len(),
        test_ops.len(),
        train_ops[0].n_terms()
    );

    let solver_cfg = SolverConfig {
        steps: 2,
        ..SolverConfig::default()
    };

    // Untrained network: the final layer starts at zero, so the conditioned
    // update is a no-op and the solver output equals the zero initialization.
    let mut net = ConditionerNet::init(NetArch::default(), input_spec, 0)?;
    let before = evaluate_model(
        &Conditioner::Network(net.clone()),
        &solver_cfg,
        &test_ops,
    )?;
    println!("held-out relative MSE before training: {before:.4}");

    let train_cfg = TrainConfig {
        epochs: 150,
        ..TrainConfig::default()
    };
    println!(
        "training: {} epochs, batch {}, Adam lr {:.0e} with decay {}",
        train_cfg.epochs, train_cfg.batch_size, train_cfg.lr, train_cfg.lr_decay
    );
    let report = train(&mut net, &solver_cfg, &train_cfg, &train_ops, &test_ops)?;
    for row in report
        .history
        .iter()
        .filter(|r| r.epoch % 50 == 0 || r.epoch + 1 == train_cfg.epochs)
    {
        println!(
            "  epoch {:>3}: train rel MSE {:.4}, test rel MSE {:.4}, lr {:.2e}",
            row.epoch, row.train_rel_mse, row.test_rel_mse, row.lr
        );
    }
    println!(
        "held-out relative MSE after training:  {:.4} ({}x better than untrained)",
        report.final_test_rel_mse,
        (before / report.final_test_rel_mse) as u64
    );

    // Peek inside one solve: the physics loss after each conditioned step.
    let conditioner = Conditioner::Network(net);
    let trace = solve_instance(&conditioner, &solver_cfg, &test_ops[0]);
    println!("\nper-step physics loss on one held-out instance:");
    for (l, loss) in trace.pde_losses.iter().enumerate() {
        println!("  after step {l}: {loss:.6e}");
    }
    Ok(())
}
