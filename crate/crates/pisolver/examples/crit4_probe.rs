//! Throwaway calibration probe for desk-scale training runs.

use std::time::Instant;

use pisolver::basis::{BasisSpec, KnotConfig};
use pisolver::dataset::generate;
use pisolver::nnet::{ConditionerNet, InputSpec, NetArch};
use pisolver::pde::{Discretization, Family, PdeLossConfig};
use pisolver::solver::{
    minimize_pde_loss, relative_mse, train, BaselineKind, InstanceOps, SolverConfig, TrainConfig,
};

fn env_f64(key: &str, default: f64) -> f64 {
    std::env::var(key)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn env_usize(key: &str, default: usize) -> usize {
    std::env::var(key)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn main() {
    let family: Family = std::env::var("FAMILY")
        .unwrap_or_else(|_| "poisson1d".into())
        .parse()
        .unwrap();
    let n_terms = env_usize("NTERMS", 32);
    let epochs = env_usize("EPOCHS", 750);
    let lr = env_f64("LR", 3e-3);
    let decay = env_f64("DECAY", 0.997);
    let delta = env_f64("DELTA", 1.0);
    let eta = env_f64("ETA", 1.0);
    let steps = env_usize("STEPS", 2);
    let seed = env_usize("SEED", 0) as u64;
    eprintln!(
        "probe family={family} n={n_terms} epochs={epochs} lr={lr} decay={decay} delta={delta} eta={eta} steps={steps}"
    );

    let t0 = Instant::now();
    let ds = generate(family, seed, 200, 50).unwrap();
    let spec_x = BasisSpec::bspline(3, n_terms, KnotConfig::Shifted, (0.0, 1.0)).unwrap();
    let loss_cfg = PdeLossConfig::default();
    let input_spec = InputSpec::default();
    let train_ops: Vec<InstanceOps> = ds
        .train_pairs()
        .iter()
        .map(|(inst, target)| {
            InstanceOps::new(
                inst,
                &spec_x,
                None,
                &loss_cfg,
                &input_spec,
                target.as_slice().unwrap(),
            )
            .unwrap()
        })
        .collect();
    let test_ops: Vec<InstanceOps> = ds
        .test_pairs()
        .iter()
        .map(|(inst, target)| {
            InstanceOps::new(
                inst,
                &spec_x,
                None,
                &loss_cfg,
                &input_spec,
                target.as_slice().unwrap(),
            )
            .unwrap()
        })
        .collect();
    eprintln!("setup {:.1?}", t0.elapsed());

    if std::env::var("SKIP_BASELINES").is_err() {
        let tb = Instant::now();
        for (kind, lrs) in [
            (BaselineKind::Adam, vec![1e-1, 1e-2]),
            (BaselineKind::Sgd, vec![1e-7]),
        ] {
            for &blr in &lrs {
                let mut acc = 0.0;
                let mut cnt = 0usize;
                for (inst, target) in ds.test_pairs() {
                    let disc = Discretization::new(&inst, &spec_x, None, &loss_cfg).unwrap();
                    let run = minimize_pde_loss(&disc, kind, 1000, blr).unwrap();
                    let pred = disc.predict(&run.theta);
                    acc += relative_mse(&pred, &target).unwrap();
                    cnt += 1;
                }
                eprintln!("baseline {kind} lr {blr:e}: mean rel mse {:.4e}", acc / cnt as f64);
            }
        }
        eprintln!("baselines {:.1?}", tb.elapsed());
    }

    let mut net = ConditionerNet::init(NetArch::default(), input_spec, seed).unwrap();
    let solver_cfg = SolverConfig {
        steps,
        eta,
        ..SolverConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs,
        batch_size: env_usize("BATCH", 16),
        lr,
        lr_decay: decay,
        huber_delta: delta,
        eval_every: 25,
        shuffle_seed: 0,
        stop_at_test_rel_mse: None,
    };
    let tt = Instant::now();
    let report = train(&mut net, &solver_cfg, &train_cfg, &train_ops, &test_ops).unwrap();
    eprintln!("train {:.1?}", tt.elapsed());
    for row in &report.history {
        eprintln!(
            "epoch {:4}  train {:.4e}  test {:.4e}  lr {:.3e}",
            row.epoch, row.train_rel_mse, row.test_rel_mse, row.lr
        );
    }
    eprintln!(
        "final train {:.4e} test {:.4e}",
        report.final_train_rel_mse, report.final_test_rel_mse
    );
}
