//! Batch command-line interface.
//!
//! One binary, six non-interactive subcommands: `generate` samples datasets,
//! `train` fits the conditioner network, `infer` runs the learned solver on a
//! single instance, `bench-baselines` races it against classical optimizers,
//! `bench-conditioning` sweeps condition numbers and descent step counts, and
//! `landscape` evaluates two-dimensional loss slices. Every command reads one
//! TOML experiment config (flags override individual entries), writes its
//! artifacts plus the resolved config and a SHA-256 manifest under the
//! configured output directory, refuses to overwrite existing outputs unless
//! `--force` is passed, and is deterministic given `(config, seed)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::dataset::{self, sample_instance, Dataset};
use crate::error::{Error, Result};
use crate::nnet::ConditionerNet;
use crate::pde::{Discretization, Family, PdeInstance};
use crate::solver::{
    baseline_trace, relative_mse, solve_instance, train, BaselineKind, Conditioner, InstanceOps,
    SolveTrace,
};
use crate::theory::{
    descent_steps_to_tol, fourier_poisson_system, hessian_extreme_directions, log_log_slope,
    loss_slice, project_onto_axes, quadratic_slice, spectrum_and_kappa, trajectory_directions,
    LandscapeSlice,
};

/// Top-level argument parser.
#[derive(Debug, Parser)]
#[command(
    name = "pisolver",
    about = "Learned iterative solver for parametric PDEs, with conditioning diagnostics",
    version
)]
pub struct Cli {
    /// TOML experiment config; flags override individual entries.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overwrite outputs that already exist.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a parametric PDE dataset and write it as newline-delimited JSON.
    Generate(GenerateArgs),
    /// Train the conditioner network on a dataset.
    Train(TrainArgs),
    /// Run the learned iterative solver on one instance.
    Infer(InferArgs),
    /// Race the learned solver against classical optimizers on held-out instances.
    BenchBaselines(BenchArgs),
    /// Sweep condition numbers and descent step counts over frequency cutoffs.
    BenchConditioning(ConditioningArgs),
    /// Evaluate a two-dimensional loss-landscape slice.
    Landscape(LandscapeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// PDE family (helmholtz1d, poisson1d, nlrd1dt).
    #[arg(long)]
    pub family: Option<Family>,
    /// Total instances; split 80/20 into train/test.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset output path (default: [paths] dataset, else <output_dir>/dataset.ndjson).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset to train on.
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Unrolled solver steps L.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Checkpoint output path (default: [paths] checkpoint, else <output_dir>/model.ckpt).
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Output directory for history, resolved config, and manifest.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Trained checkpoint.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Instance JSON: `{"instance": {...}, "reference": [..]}` or a bare instance object.
    #[arg(long, value_name = "FILE")]
    pub instance: PathBuf,
    /// Unrolled solver steps L.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Held-out instances to evaluate.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Iteration budget for the classical optimizers.
    #[arg(long)]
    pub opt_steps: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConditioningArgs {
    /// Comma-separated frequency cutoffs, e.g. 4,8,16.
    #[arg(long = "k-values", alias = "K", value_delimiter = ',')]
    pub k_values: Vec<usize>,
    /// Boundary penalty weight of the spectral system.
    #[arg(long)]
    pub lambda_bc: Option<f64>,
    /// Comma-separated relative tolerances for step counts.
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    /// Objective to slice: pde | quadratic.
    #[arg(long)]
    pub loss: Option<String>,
    /// Slice axes: hessian | trajectory.
    #[arg(long, alias = "basis")]
    pub axes: Option<String>,
    /// Checkpoint for the solver trajectory (optional; identity solver otherwise).
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Run a parsed command line to completion. The binary maps the error of this
/// call to its exit code.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    match cli.command {
        Command::Generate(args) => cmd_generate(&mut cfg, &args, cli.force),
        Command::Train(args) => cmd_train(&mut cfg, &args, cli.force, cli.config.is_some()),
        Command::Infer(args) => cmd_infer(&mut cfg, &args, cli.force),
        Command::BenchBaselines(args) => {
            cmd_bench_baselines(&mut cfg, &args, cli.force, cli.config.is_some())
        }
        Command::BenchConditioning(args) => cmd_bench_conditioning(&mut cfg, &args, cli.force),
        Command::Landscape(args) => cmd_landscape(&mut cfg, &args, cli.force),
    }
}

// ---------------------------------------------------------------------------
// Output plumbing: write-once artifacts, SHA-256 manifest, resolved config.

/// Collects the artifacts of one command run: refuses to overwrite without
/// `--force`, hashes everything written, and finishes by dropping the
/// resolved config and a manifest beside the artifacts.
struct OutputSink {
    dir: PathBuf,
    force: bool,
    hashes: BTreeMap<String, String>,
}

impl OutputSink {
    fn new(dir: &Path, force: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputSink {
            dir: dir.to_path_buf(),
            force,
            hashes: BTreeMap::new(),
        })
    }

    fn check_fresh(&self, path: &Path) -> Result<()> {
        if path.exists() && !self.force {
            return Err(Error::OutputExists {
                path: path.to_path_buf(),
            });
        }
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        let mut h = Sha256::new();
        h.update(bytes);
        self.hashes.insert(name.to_string(), hex(&h.finalize()));
    }

    /// Write an artifact into the output directory.
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        self.check_fresh(&path)?;
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.record(name, bytes);
        Ok(path)
    }

    /// Note a file written elsewhere (e.g. a dataset at an explicit path) in
    /// the manifest under its file name.
    fn note_external(&mut self, path: &Path, bytes: &[u8]) {
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.record(&name, bytes);
    }

    /// Write the resolved config echo and the manifest; consumes the sink.
    fn finish(mut self, cfg: &ExperimentConfig) -> Result<()> {
        let resolved = cfg.to_toml()?;
        self.write("config.resolved.toml", resolved.as_bytes())?;
        let manifest = serde_json::to_string_pretty(&Manifest {
            files: self.hashes.clone(),
        })
        .expect("manifest serializes");
        let path = self.dir.join("manifest.json");
        // The manifest is regenerated on every run (it indexes the run's
        // outputs), so it is exempt from the write-once check.
        std::fs::write(&path, manifest.as_bytes()).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    files: BTreeMap<String, String>,
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Fixed float formatting for CSV cells: deterministic and round-trippable.
fn cell(v: f64) -> String {
    format!("{v:.12e}")
}

// ---------------------------------------------------------------------------
// generate

fn cmd_generate(cfg: &mut ExperimentConfig, args: &GenerateArgs, force: bool) -> Result<()> {
    if let Some(f) = args.family {
        cfg.family = f;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.n {
        cfg.generate.n = n;
    }
    let n = cfg.generate.n;
    let n_test = n / 5;
    let n_train = n - n_test;
    let path = args.out.clone().unwrap_or_else(|| cfg.dataset_path());

    let mut sink = OutputSink::new(&cfg.output_dir, force)?;
    sink.check_fresh(&path)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let ds = dataset::generate(cfg.family, cfg.seed, n_train, n_test)?;
    dataset::write_ndjson(&ds, &path)?;
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    sink.note_external(&path, &bytes);
    sink.finish(cfg)?;
    println!(
        "wrote {} instances (train {}, test {}) for family {} with seed {} to {}",
        n,
        n_train,
        n_test,
        cfg.family,
        cfg.seed,
        path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// shared dataset/ops loading

fn load_dataset(
    cfg: &mut ExperimentConfig,
    override_path: Option<&PathBuf>,
    config_explicit: bool,
) -> Result<Dataset> {
    let path = override_path.cloned().unwrap_or_else(|| cfg.dataset_path());
    let ds = dataset::read_ndjson(&path)?;
    if ds.header.family != cfg.family {
        if config_explicit {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "dataset {} holds family {} but the config says {}",
                    path.display(),
                    ds.header.family,
                    cfg.family
                ),
            });
        }
        // No config file pinned a family, so follow the dataset: rebuild the
        // family-dependent defaults (basis shapes) while keeping the seed,
        // paths, and any flag overrides already applied.
        let mut fresh = ExperimentConfig::default_for_family(ds.header.family);
        fresh.seed = cfg.seed;
        fresh.output_dir = cfg.output_dir.clone();
        fresh.paths = cfg.paths.clone();
        fresh.train = cfg.train.clone();
        fresh.solver = cfg.solver.clone();
        fresh.bench = cfg.bench.clone();
        *cfg = fresh;
    }
    Ok(ds)
}

fn build_ops(
    cfg: &ExperimentConfig,
    pairs: &[(PdeInstance, Array1<f64>)],
) -> Result<Vec<InstanceOps>> {
    let spec_x = cfg.basis_spec()?;
    let spec_t = cfg.time_spec()?;
    let input_spec = cfg.net.input_spec();
    pairs
        .iter()
        .map(|(inst, target)| {
            InstanceOps::new(
                inst,
                &spec_x,
                spec_t.as_ref(),
                &cfg.loss,
                &input_spec,
                target.as_slice().expect("contiguous reference"),
            )
        })
        .collect()
}

fn build_disc(cfg: &ExperimentConfig, inst: &PdeInstance) -> Result<Discretization> {
    let spec_x = cfg.basis_spec()?;
    let spec_t = cfg.time_spec()?;
    Discretization::new(inst, &spec_x, spec_t.as_ref(), &cfg.loss)
}

// ---------------------------------------------------------------------------
// train

fn cmd_train(
    cfg: &mut ExperimentConfig,
    args: &TrainArgs,
    force: bool,
    config_explicit: bool,
) -> Result<()> {
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.train.lr = lr;
    }
    if let Some(l) = args.steps {
        cfg.solver.steps = l;
    }
    if let Some(d) = &args.dataset {
        cfg.paths.dataset = Some(d.clone());
    }
    if let Some(c) = &args.checkpoint {
        cfg.paths.checkpoint = Some(c.clone());
    }
    let ds_path = cfg.dataset_path();
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;

    let ds = load_dataset(cfg, Some(&ds_path), config_explicit)?;
    let train_ops = build_ops(cfg, &ds.train_pairs())?;
    let test_ops = build_ops(cfg, &ds.test_pairs())?;
    if train_ops.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "training needs a dataset with at least one training record".to_string(),
        });
    }

    let mut net = ConditionerNet::init(cfg.net.arch(), cfg.net.input_spec(), cfg.seed)?;
    let report = train(&mut net, &cfg.solver, &cfg.train, &train_ops, &test_ops)?;

    let ckpt_path = cfg.checkpoint_path();
    let mut sink = OutputSink::new(&cfg.output_dir, force)?;
    sink.check_fresh(&ckpt_path)?;
    if let Some(parent) = ckpt_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    net.save(&ckpt_path)?;
    let ckpt_bytes = std::fs::read(&ckpt_path).map_err(|e| Error::io(&ckpt_path, e))?;
    sink.note_external(&ckpt_path, &ckpt_bytes);

    let mut history = String::from("epoch,train_rel_mse,test_rel_mse,lr\n");
    for row in &report.history {
        let _ = writeln!(
            history,
            "{},{},{},{}",
            row.epoch,
            cell(row.train_rel_mse),
            cell(row.test_rel_mse),
            cell(row.lr)
        );
    }
    sink.write("history.csv", history.as_bytes())?;
    sink.finish(cfg)?;
    println!(
        "trained {} epochs: final train rel mse {:.4e}, test rel mse {:.4e}; checkpoint {}",
        cfg.train.epochs,
        report.final_train_rel_mse,
        report.final_test_rel_mse,
        ckpt_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// infer

/// On-disk form of a single instance for `infer`: the instance plus an
/// optional reference solution on its grid.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub instance: PdeInstance,
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
}

fn read_instance(path: &Path) -> Result<InstanceFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    // Accept either the wrapped form or a bare instance object.
    serde_json::from_str::<InstanceFile>(&text).or_else(|outer| {
        serde_json::from_str::<PdeInstance>(&text)
            .map(|instance| InstanceFile {
                instance,
                reference: None,
            })
            .map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: None,
                reason: outer.to_string(),
            })
    })
}

fn trace_csv(trace: &SolveTrace, ops: &InstanceOps, reference: Option<&Array1<f64>>) -> String {
    let mut out = String::from("step,pde_loss,rel_mse\n");
    for (step, loss) in trace.pde_losses.iter().enumerate() {
        let rel = reference.map(|target| {
            let pred = ops.predict(&trace.thetas[step]);
            relative_mse(&pred, target)
        });
        let rel_cell = match rel {
            Some(Ok(v)) => cell(v),
            _ => String::new(),
        };
        let _ = writeln!(out, "{},{},{}", step, cell(*loss), rel_cell);
    }
    out
}

fn cmd_infer(cfg: &mut ExperimentConfig, args: &InferArgs, force: bool) -> Result<()> {
    if let Some(l) = args.steps {
        cfg.solver.steps = l;
    }
    if let Some(c) = &args.checkpoint {
        cfg.paths.checkpoint = Some(c.clone());
    }
    // Inputs resolve against the configured locations; `--out` only moves the
    // results.
    let ckpt_path = cfg.checkpoint_path();
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    let file = read_instance(&args.instance)?;
    if file.instance.family != cfg.family {
        // Follow the instance's family: rebuild the family-dependent defaults
        // (basis shapes) while keeping paths, solver, and flag overrides.
        let mut fresh = ExperimentConfig::default_for_family(file.instance.family);
        fresh.seed = cfg.seed;
        fresh.output_dir = cfg.output_dir.clone();
        fresh.paths = cfg.paths.clone();
        fresh.solver = cfg.solver.clone();
        *cfg = fresh;
    }
    cfg.validate()?;

    let net = ConditionerNet::load(&ckpt_path)?;
    let reference: Option<Array1<f64>> = file.reference.map(Array1::from);
    let n_points = file.instance.grid.len();
    let target = match &reference {
        Some(r) => r.clone(),
        None => Array1::zeros(n_points),
    };
    let spec_x = cfg.basis_spec()?;
    let spec_t = cfg.time_spec()?;
    let ops = InstanceOps::new(
        &file.instance,
        &spec_x,
        spec_t.as_ref(),
        &cfg.loss,
        &net.input_spec().clone(),
        target.as_slice().expect("contiguous reference"),
    )?;
    let conditioner = Conditioner::Network(net);
    let trace = solve_instance(&conditioner, &cfg.solver, &ops);

    let mut solution = String::new();
    let space_time = file.instance.grid.points_2d();
    if space_time.is_some() {
        solution.push_str("x,t,u_pred");
    } else {
        solution.push_str("x,u_pred");
    }
    if reference.is_some() {
        solution.push_str(",u_ref");
    }
    solution.push('\n');
    for i in 0..file.instance.grid.len() {
        match &space_time {
            Some(pts) => {
                let (x, t) = pts[i];
                let _ = write!(solution, "{},{},{}", cell(x), cell(t), cell(trace.predicted[i]));
            }
            None => {
                let x = file.instance.grid.xs[i];
                let _ = write!(solution, "{},{}", cell(x), cell(trace.predicted[i]));
            }
        }
        if let Some(r) = &reference {
            let _ = write!(solution, ",{}", cell(r[i]));
        }
        solution.push('\n');
    }

    let mut sink = OutputSink::new(&cfg.output_dir, force)?;
    sink.write("solution.csv", solution.as_bytes())?;
    sink.write(
        "trace.csv",
        trace_csv(&trace, &ops, reference.as_ref()).as_bytes(),
    )?;
    sink.finish(cfg)?;
    let last = trace.pde_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "solved {} instance in {} steps: physics loss {:.4e}",
        cfg.family, cfg.solver.steps, last
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bench-baselines

fn cmd_bench_baselines(
    cfg: &mut ExperimentConfig,
    args: &BenchArgs,
    force: bool,
    config_explicit: bool,
) -> Result<()> {
    if let Some(c) = &args.checkpoint {
        cfg.paths.checkpoint = Some(c.clone());
    }
    if let Some(d) = &args.dataset {
        cfg.paths.dataset = Some(d.clone());
    }
    if let Some(i) = args.instances {
        cfg.bench.instances = i;
    }
    if let Some(s) = args.opt_steps {
        cfg.bench.opt_steps = s;
    }
    let ckpt_path = cfg.checkpoint_path();
    let ds_path = cfg.dataset_path();
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;

    let net = ConditionerNet::load(&ckpt_path)?;
    let ds = load_dataset(cfg, Some(&ds_path), config_explicit)?;
    let pairs = ds.test_pairs();
    if pairs.len() < cfg.bench.instances {
        return Err(Error::InvalidConfig {
            reason: format!(
                "bench needs {} held-out instances but the dataset has {}",
                cfg.bench.instances,
                pairs.len()
            ),
        });
    }
    let pairs = &pairs[..cfg.bench.instances];
    let ops = build_ops(cfg, pairs)?;
    let conditioner = Conditioner::Network(net);

    let mut rows = String::from("instance,method,step,pde_loss,rel_mse\n");
    let mut finals: BTreeMap<&'static str, Vec<(f64, f64)>> = BTreeMap::new();
    for (idx, ((_, target), op)) in pairs.iter().zip(&ops).enumerate() {
        let disc = build_disc(cfg, &pairs[idx].0)?;
        for (name, kind, lr) in [
            ("sgd", BaselineKind::Sgd, cfg.bench.sgd_lr),
            ("adam", BaselineKind::Adam, cfg.bench.adam_lr),
            ("lbfgs", BaselineKind::Lbfgs, 0.0),
        ] {
            let tr = baseline_trace(&disc, kind, cfg.bench.opt_steps, lr, Some(target))?;
            for (step, (loss, rel)) in tr.losses.iter().zip(&tr.rel_mse).enumerate() {
                let _ = writeln!(
                    rows,
                    "{},{},{},{},{}",
                    idx,
                    name,
                    step,
                    cell(*loss),
                    cell(*rel)
                );
            }
            finals.entry(name).or_default().push((
                tr.losses.last().copied().unwrap_or(f64::NAN),
                tr.rel_mse.last().copied().unwrap_or(f64::NAN),
            ));
        }
        let trace = solve_instance(&conditioner, &cfg.solver, op);
        for (step, loss) in trace.pde_losses.iter().enumerate() {
            let rel = relative_mse(&op.predict(&trace.thetas[step]), target)?;
            let _ = writeln!(
                rows,
                "{},learned,{},{},{}",
                idx,
                step,
                cell(*loss),
                cell(rel)
            );
        }
        finals.entry("learned").or_default().push((
            trace.pde_losses.last().copied().unwrap_or(f64::NAN),
            relative_mse(&op.predict(trace.thetas.last().unwrap()), target)?,
        ));
    }

    let mut summary = String::from("method,mean_final_pde_loss,mean_final_rel_mse,budget\n");
    for (name, vals) in &finals {
        let m = vals.len() as f64;
        let loss = vals.iter().map(|v| v.0).sum::<f64>() / m;
        let rel = vals.iter().map(|v| v.1).sum::<f64>() / m;
        let budget = if *name == "learned" {
            cfg.solver.steps
        } else {
            cfg.bench.opt_steps
        };
        let _ = writeln!(summary, "{},{},{},{}", name, cell(loss), cell(rel), budget);
    }

    let mut sink = OutputSink::new(&cfg.output_dir, force)?;
    sink.write("baselines.csv", rows.as_bytes())?;
    sink.write("baseline_summary.csv", summary.as_bytes())?;
    sink.finish(cfg)?;
    println!(
        "benchmarked {} instances: classical budget {} steps, learned budget {} steps",
        cfg.bench.instances, cfg.bench.opt_steps, cfg.solver.steps
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bench-conditioning

fn cmd_bench_conditioning(
    cfg: &mut ExperimentConfig,
    args: &ConditioningArgs,
    force: bool,
) -> Result<()> {
    if !args.k_values.is_empty() {
        cfg.conditioning.k_values = args.k_values.clone();
    }
    if let Some(l) = args.lambda_bc {
        cfg.conditioning.lambda_bc = l;
    }
    if !args.eps.is_empty() {
        cfg.conditioning.eps = args.eps.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;

    let mut rows = String::from("k_max,kappa,eps,steps\n");
    let mut kappas = Vec::new();
    let mut first_eps_steps = Vec::new();
    for &k in &cfg.conditioning.k_values {
        let sys = fourier_poisson_system(k, cfg.conditioning.lambda_bc, cfg.seed)?;
        let (_, kappa) = spectrum_and_kappa(&sys.a)?;
        kappas.push(kappa);
        for (ei, &eps) in cfg.conditioning.eps.iter().enumerate() {
            let steps =
                descent_steps_to_tol(&sys.a, &sys.b, None, cfg.conditioning.step_scale, eps)?;
            if ei == 0 {
                first_eps_steps.push(steps as f64);
            }
            let _ = writeln!(rows, "{},{},{},{}", k, cell(kappa), cell(eps), steps);
        }
    }

    let mut sink = OutputSink::new(&cfg.output_dir, force)?;
    sink.write("conditioning.csv", rows.as_bytes())?;
    sink.finish(cfg)?;
    for (k, kappa) in cfg.conditioning.k_values.iter().zip(&kappas) {
        println!("k_max {k}: kappa {kappa:.4e}");
    }
    if kappas.len() >= 2 {
        let slope = log_log_slope(&kappas, &first_eps_steps)?;
        println!(
            "step count vs condition number: log-log slope {slope:.3} (1.0 = linear)"
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// landscape

fn slice_csv(slice: &LandscapeSlice, path: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("kind,i,j,alpha,beta,value\n");
    for (i, &alpha) in slice.alphas.iter().enumerate() {
        for (j, &beta) in slice.betas.iter().enumerate() {
            let _ = writeln!(
                out,
                "grid,{},{},{},{},{}",
                i,
                j,
                cell(alpha),
                cell(beta),
                cell(slice.loss[[i, j]])
            );
        }
    }
    for (step, &(alpha, beta, value)) in path.iter().enumerate() {
        let _ = writeln!(
            out,
            "path,{},,{},{},{}",
            step,
            cell(alpha),
            cell(beta),
            cell(value)
        );
    }
    out
}

fn cmd_landscape(cfg: &mut ExperimentConfig, args: &LandscapeArgs, force: bool) -> Result<()> {
    if let Some(l) = &args.loss {
        cfg.landscape.loss = l.clone();
    }
    if let Some(a) = &args.axes {
        cfg.landscape.axes = a.clone();
    }
    if let Some(r) = args.resolution {
        cfg.landscape.resolution = r;
    }
    if let Some(w) = args.half_width {
        cfg.landscape.half_width = w;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(c) = &args.checkpoint {
        cfg.paths.checkpoint = Some(c.clone());
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;

    let (slice, path_rows) = match cfg.landscape.loss.as_str() {
        "quadratic" => {
            // Exact spectral system: anchor at the true minimizer, axes from
            // the Hessian or from a plain descent trajectory.
            let sys = fourier_poisson_system(cfg.landscape.k_max, cfg.loss.lambda_bc, cfg.seed)?;
            let anchor = sys.theta_star.clone();
            let (d1, d2) = match cfg.landscape.axes.as_str() {
                "hessian" => {
                    let dirs = hessian_extreme_directions(&sys.a)?;
                    (dirs.d_min, dirs.d_max)
                }
                _ => {
                    let thetas = descent_path(&sys.a, &sys.b, 50);
                    trajectory_directions(&thetas)?
                }
            };
            let slice = quadratic_slice(
                &sys.a,
                &sys.theta_star,
                &anchor,
                &d1,
                &d2,
                cfg.landscape.half_width,
                cfg.landscape.resolution,
            )?;
            (slice, Vec::new())
        }
        _ => {
            // Physics loss of a sampled instance, anchored at the solved
            // coefficients: the learned solver's endpoint when a checkpoint is
            // configured, the direct linear solve otherwise.
            let shape = dataset::default_shape(cfg.family);
            let inst =
                sample_instance(cfg.family, cfg.seed, cfg.landscape.instance_stream, shape);
            let disc = build_disc(cfg, &inst)?;
            let (thetas, losses): (Vec<Array1<f64>>, Vec<f64>) = match &cfg.paths.checkpoint {
                Some(p) => {
                    let net = ConditionerNet::load(p)?;
                    let target = Array1::<f64>::zeros(inst.grid.len());
                    let spec_x = cfg.basis_spec()?;
                    let spec_t = cfg.time_spec()?;
                    let input_spec = net.input_spec().clone();
                    let ops = InstanceOps::new(
                        &inst,
                        &spec_x,
                        spec_t.as_ref(),
                        &cfg.loss,
                        &input_spec,
                        target.as_slice().expect("contiguous zeros"),
                    )?;
                    let trace =
                        solve_instance(&Conditioner::Network(net), &cfg.solver, &ops);
                    (trace.thetas, trace.pde_losses)
                }
                None => {
                    let (a, b) = disc.assemble_linear_system().map_err(|_| {
                        Error::InvalidConfig {
                            reason: "landscape on the nonlinear family needs a checkpoint"
                                .to_string(),
                        }
                    })?;
                    let mut thetas = descent_path(&a, &b, 50);
                    let minimizer =
                        crate::linalg::solve_spd(&a, &b, "landscape anchor solve")?;
                    thetas.push(minimizer);
                    let losses = thetas
                        .iter()
                        .map(|t| disc.loss(t).unwrap_or(f64::NAN))
                        .collect();
                    (thetas, losses)
                }
            };
            let anchor = thetas.last().expect("at least the start").clone();
            let (d1, d2) = match cfg.landscape.axes.as_str() {
                "hessian" => {
                    let h = disc.hessian(&anchor)?;
                    let dirs = hessian_extreme_directions(&h)?;
                    (dirs.d_min, dirs.d_max)
                }
                _ => trajectory_directions(&thetas)?,
            };
            let slice = loss_slice(
                |theta| disc.loss(theta).unwrap_or(f64::NAN),
                &anchor,
                &d1,
                &d2,
                cfg.landscape.half_width,
                cfg.landscape.resolution,
            )?;
            let coords = project_onto_axes(&anchor, &d1, &d2, &thetas);
            let path_rows: Vec<(f64, f64, f64)> = coords
                .iter()
                .zip(&losses)
                .map(|(&(a, b), &l)| (a, b, l))
                .collect();
            (slice, path_rows)
        }
    };

    let (mi, mj) = slice.min_cell();
    let mut sink = OutputSink::new(&cfg.output_dir, force)?;
    sink.write("landscape.csv", slice_csv(&slice, &path_rows).as_bytes())?;
    sink.finish(cfg)?;
    println!(
        "landscape {}x{} grid: minimum at cell ({}, {}), center ({}, {})",
        cfg.landscape.resolution,
        cfg.landscape.resolution,
        mi,
        mj,
        cfg.landscape.resolution / 2,
        cfg.landscape.resolution / 2
    );
    Ok(())
}

/// Plain gradient-descent iterates on the quadratic objective, for
/// trajectory-axis slices.
fn descent_path(
    a: &ndarray::Array2<f64>,
    b: &Array1<f64>,
    steps: usize,
) -> Vec<Array1<f64>> {
    let n = a.nrows();
    let lam_max = spectrum_and_kappa(a)
        .map(|(lam, _)| lam[lam.len() - 1])
        .unwrap_or(1.0);
    let h = 0.5 / (2.0 * lam_max);
    let mut theta = Array1::<f64>::zeros(n);
    let mut out = vec![theta.clone()];
    for _ in 0..steps {
        let az = crate::linalg::mat_vec(a, &theta);
        for i in 0..n {
            theta[i] -= h * 2.0 * (az[i] - b[i]);
        }
        out.push(theta.clone());
    }
    out
}
