//! Experiment configuration.
//!
//! One TOML file describes a full experiment: the PDE family, ansatz basis,
//! solver shape, training hyperparameters, network architecture, file
//! locations, and the knobs of the individual subcommands. Unknown keys are
//! rejected so typos fail loudly, command-line flags override single entries,
//! and every command echoes the fully resolved configuration next to its
//! outputs so a run can be reproduced from its artifacts alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, KnotConfig};
use crate::error::{Error, Result};
use crate::nnet::{InputSpec, NetArch};
use crate::pde::{Family, PdeLossConfig};
use crate::solver::{SolverConfig, TrainConfig};

/// Flat description of a one-dimensional basis, as written in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    /// `"bspline"` or `"fourier"`.
    pub kind: String,
    /// Polynomial degree (B-spline only).
    pub degree: usize,
    /// Number of basis functions (B-spline only; Fourier uses `k_max`).
    pub n_terms: usize,
    /// Knot layout (B-spline only): `"shifted"` or `"equispaced"`.
    pub knots: String,
    /// Frequency cutoff (Fourier only); yields `2·k_max + 1` terms.
    pub k_max: usize,
    /// Closed evaluation interval.
    pub domain: [f64; 2],
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            kind: "bspline".to_string(),
            degree: 3,
            n_terms: 32,
            knots: "shifted".to_string(),
            k_max: 8,
            domain: [0.0, 1.0],
        }
    }
}

impl BasisConfig {
    /// Build the validated basis specification this configuration describes.
    pub fn to_spec(&self) -> Result<BasisSpec> {
        let domain = (self.domain[0], self.domain[1]);
        match self.kind.as_str() {
            "bspline" => {
                let knots = match self.knots.as_str() {
                    "shifted" => KnotConfig::Shifted,
                    "equispaced" => KnotConfig::Equispaced,
                    other => {
                        return Err(Error::InvalidConfig {
                            reason: format!(
                                "unknown knot configuration '{other}' (expected 'shifted' or 'equispaced')"
                            ),
                        })
                    }
                };
                BasisSpec::bspline(self.degree, self.n_terms, knots, domain)
            }
            "fourier" => BasisSpec::fourier(self.k_max, domain),
            other => Err(Error::InvalidConfig {
                reason: format!("unknown basis kind '{other}' (expected 'bspline' or 'fourier')"),
            }),
        }
    }
}

/// Network architecture and input-channel switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub width: usize,
    pub modes: usize,
    pub depth: usize,
    pub fc_width: usize,
    /// Feed the loss gradient channel.
    pub grad: bool,
    /// Feed the equation-parameter channel.
    pub gamma: bool,
    /// Feed the boundary/initial-value channels.
    pub bc: bool,
    /// Feed the forcing/profile projection channel.
    pub forcing: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        let arch = NetArch::default();
        let inp = InputSpec::default();
        NetConfig {
            width: arch.width,
            modes: arch.modes,
            depth: arch.depth,
            fc_width: arch.fc_width,
            grad: inp.grad,
            gamma: inp.gamma,
            bc: inp.bc,
            forcing: inp.forcing,
        }
    }
}

impl NetConfig {
    pub fn arch(&self) -> NetArch {
        NetArch {
            width: self.width,
            modes: self.modes,
            depth: self.depth,
            fc_width: self.fc_width,
        }
    }

    pub fn input_spec(&self) -> InputSpec {
        InputSpec {
            grad: self.grad,
            gamma: self.gamma,
            bc: self.bc,
            forcing: self.forcing,
        }
    }
}

/// File locations used by the subcommands.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Dataset file (written by `generate`, read by `train` and the benches).
    pub dataset: Option<PathBuf>,
    /// Network checkpoint (written by `train`, read by `infer` and benches).
    pub checkpoint: Option<PathBuf>,
}

/// Knobs of the `generate` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Total instance count; split 80/20 into train/test.
    pub n: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig { n: 250 }
    }
}

/// Knobs of the `bench-baselines` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Held-out instances to evaluate.
    pub instances: usize,
    /// Iteration budget for the classical optimizers.
    pub opt_steps: usize,
    /// Learning rate for the SGD baseline.
    pub sgd_lr: f64,
    /// Learning rate for the Adam baseline.
    pub adam_lr: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            instances: 20,
            opt_steps: 10_000,
            sgd_lr: 1e-8,
            adam_lr: 1e-1,
        }
    }
}

/// Knobs of the `bench-conditioning` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningConfig {
    /// Frequency cutoffs to sweep.
    pub k_values: Vec<usize>,
    /// Boundary penalty weight of the spectral system.
    pub lambda_bc: f64,
    /// Relative error tolerances for the step counts.
    pub eps: Vec<f64>,
    /// Descent step as a fraction of the stability limit.
    pub step_scale: f64,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        ConditioningConfig {
            k_values: vec![4, 8, 16],
            lambda_bc: 1.0,
            eps: vec![1e-3],
            step_scale: 0.5,
        }
    }
}

/// Knobs of the `landscape` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    /// Objective to slice: `"pde"` (a sampled instance's physics loss) or
    /// `"quadratic"` (the spectral test system).
    pub loss: String,
    /// Slice axes: `"hessian"` (extreme curvature directions) or
    /// `"trajectory"` (spanned by the descent path).
    pub axes: String,
    /// Grid extent along each axis.
    pub half_width: f64,
    /// Grid points per axis (odd values center the anchor on a cell).
    pub resolution: usize,
    /// Frequency cutoff of the spectral system (quadratic loss only).
    pub k_max: usize,
    /// RNG stream of the sampled instance (pde loss only).
    pub instance_stream: u64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            loss: "pde".to_string(),
            axes: "hessian".to_string(),
            half_width: 1.0,
            resolution: 41,
            k_max: 4,
            instance_stream: 0,
        }
    }
}

/// The complete experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed: dataset sampling, network initialization.
    pub seed: u64,
    pub family: Family,
    /// Directory receiving artifacts, the resolved config, and the manifest.
    pub output_dir: PathBuf,
    /// Spatial basis.
    pub basis: BasisConfig,
    /// Temporal basis (required for space–time families).
    pub basis_time: Option<BasisConfig>,
    /// Physics-loss weights.
    pub loss: PdeLossConfig,
    pub solver: SolverConfig,
    pub train: TrainConfig,
    pub net: NetConfig,
    pub paths: PathsConfig,
    pub generate: GenerateConfig,
    pub bench: BenchConfig,
    pub conditioning: ConditioningConfig,
    pub landscape: LandscapeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            family: Family::Poisson1d,
            output_dir: PathBuf::from("runs/out"),
            basis: BasisConfig::default(),
            basis_time: None,
            loss: PdeLossConfig::default(),
            solver: SolverConfig::default(),
            train: TrainConfig::default(),
            net: NetConfig::default(),
            paths: PathsConfig::default(),
            generate: GenerateConfig::default(),
            bench: BenchConfig::default(),
            conditioning: ConditioningConfig::default(),
            landscape: LandscapeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults tuned per family (basis sizes, and a temporal basis for the
    /// space–time family).
    pub fn default_for_family(family: Family) -> Self {
        let mut cfg = ExperimentConfig {
            family,
            ..ExperimentConfig::default()
        };
        if family == Family::Nlrd1dt {
            cfg.basis.n_terms = 12;
            cfg.basis_time = Some(BasisConfig {
                degree: 2,
                n_terms: 5,
                knots: "equispaced".to_string(),
                ..BasisConfig::default()
            });
        }
        cfg
    }

    /// Parse a TOML config file, rejecting unknown keys. Unreadable files are
    /// I/O errors; bad content is a config error naming the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig { reason } => Error::InvalidConfig {
                reason: format!("{}: {}", path.display(), reason),
            },
            other => other,
        })
    }

    /// Parse TOML text, rejecting unknown keys.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig {
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize the fully resolved configuration (the reproducibility echo).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig {
            reason: format!("cannot serialize resolved config: {e}"),
        })
    }

    /// Cross-field checks beyond what serde enforces.
    pub fn validate(&self) -> Result<()> {
        self.basis.to_spec()?;
        if let Some(bt) = &self.basis_time {
            bt.to_spec()?;
        }
        if self.family == Family::Nlrd1dt && self.basis_time.is_none() {
            return Err(Error::InvalidConfig {
                reason: "space-time family needs a [basis_time] section".to_string(),
            });
        }
        if !(self.loss.lambda_bc > 0.0) || !self.loss.lambda_bc.is_finite() {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "boundary weight must be positive and finite, got {}",
                    self.loss.lambda_bc
                ),
            });
        }
        self.solver.validate()?;
        self.train.validate()?;
        self.net.arch().validate()?;
        if self.conditioning.k_values.is_empty() {
            return Err(Error::InvalidConfig {
                reason: "conditioning sweep needs at least one frequency cutoff".to_string(),
            });
        }
        if self.conditioning.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::InvalidConfig {
                reason: "conditioning tolerances must lie in (0, 1)".to_string(),
            });
        }
        if !(self.conditioning.step_scale > 0.0 && self.conditioning.step_scale < 2.0) {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "conditioning step scale must lie in (0, 2), got {}",
                    self.conditioning.step_scale
                ),
            });
        }
        match self.landscape.loss.as_str() {
            "pde" | "quadratic" => {}
            other => {
                return Err(Error::InvalidConfig {
                    reason: format!(
                        "unknown landscape loss '{other}' (expected 'pde' or 'quadratic')"
                    ),
                })
            }
        }
        match self.landscape.axes.as_str() {
            "hessian" | "trajectory" => {}
            other => {
                return Err(Error::InvalidConfig {
                    reason: format!(
                        "unknown landscape axes '{other}' (expected 'hessian' or 'trajectory')"
                    ),
                })
            }
        }
        if self.landscape.resolution < 2 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "landscape resolution must be at least 2, got {}",
                    self.landscape.resolution
                ),
            });
        }
        if !(self.landscape.half_width > 0.0) {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "landscape half-width must be positive, got {}",
                    self.landscape.half_width
                ),
            });
        }
        if self.landscape.k_max == 0 {
            return Err(Error::InvalidConfig {
                reason: "landscape spectral cutoff must be at least 1".to_string(),
            });
        }
        Ok(())
    }

    /// Spatial basis specification.
    pub fn basis_spec(&self) -> Result<BasisSpec> {
        self.basis.to_spec()
    }

    /// Temporal basis specification, when configured.
    pub fn time_spec(&self) -> Result<Option<BasisSpec>> {
        self.basis_time.as_ref().map(|b| b.to_spec()).transpose()
    }

    /// Resolved dataset path: explicit `[paths] dataset` or
    /// `<output_dir>/dataset.ndjson`.
    pub fn dataset_path(&self) -> PathBuf {
        self.paths
            .dataset
            .clone()
            .unwrap_or_else(|| self.output_dir.join("dataset.ndjson"))
    }

    /// Resolved checkpoint path: explicit `[paths] checkpoint` or
    /// `<output_dir>/model.ckpt`.
    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.output_dir.join("model.ckpt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.family, cfg.family);
        assert_eq!(back.train.epochs, cfg.train.epochs);
        assert_eq!(back.net.width, cfg.net.width);
        assert_eq!(back.conditioning.k_values, cfg.conditioning.k_values);
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        assert!(ExperimentConfig::from_toml("nonsense = 1").is_err());
        assert!(ExperimentConfig::from_toml("[train]\nnonsense = 1").is_err());
        assert!(ExperimentConfig::from_toml("[basis]\nnonsense = 1").is_err());
    }

    #[test]
    fn partial_files_inherit_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 9\n[train]\nepochs = 5\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.family, Family::Poisson1d);
    }

    #[test]
    fn family_defaults_include_a_time_basis_for_space_time() {
        let cfg = ExperimentConfig::default_for_family(Family::Nlrd1dt);
        assert!(cfg.basis_time.is_some());
        cfg.validate().unwrap();
        let spec_t = cfg.time_spec().unwrap().unwrap();
        assert_eq!(spec_t.n_terms, 5);
        // Space–time family without a time basis fails validation.
        let text = "family = \"nlrd1dt\"\n";
        assert!(ExperimentConfig::from_toml(text).is_err());
    }

    #[test]
    fn basis_config_builds_both_kinds() {
        let b = BasisConfig::default();
        let spec = b.to_spec().unwrap();
        assert_eq!(spec.n_terms, 32);
        let f = BasisConfig {
            kind: "fourier".to_string(),
            k_max: 4,
            domain: [-std::f64::consts::PI, std::f64::consts::PI],
            ..BasisConfig::default()
        };
        assert_eq!(f.to_spec().unwrap().n_terms, 9);
        let bad = BasisConfig {
            kind: "wavelet".to_string(),
            ..BasisConfig::default()
        };
        assert!(bad.to_spec().is_err());
    }

    #[test]
    fn invalid_sections_are_rejected() {
        assert!(ExperimentConfig::from_toml("[conditioning]\nk_values = []").is_err());
        assert!(ExperimentConfig::from_toml("[conditioning]\neps = [1.5]").is_err());
        assert!(ExperimentConfig::from_toml("[landscape]\nloss = \"banana\"").is_err());
        assert!(ExperimentConfig::from_toml("[landscape]\nresolution = 1").is_err());
        assert!(ExperimentConfig::from_toml("[solver]\nsteps = 0").is_err());
    }

    #[test]
    fn resolved_paths_fall_back_to_output_dir() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.dataset_path(), PathBuf::from("runs/out/dataset.ndjson"));
        assert_eq!(cfg.checkpoint_path(), PathBuf::from("runs/out/model.ckpt"));
        let cfg2 = ExperimentConfig::from_toml("[paths]\ndataset = \"x.ndjson\"").unwrap();
        assert_eq!(cfg2.dataset_path(), PathBuf::from("x.ndjson"));
    }
}
