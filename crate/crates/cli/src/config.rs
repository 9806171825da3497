use std::fs;
use std::path::{Path, PathBuf};

use pcp::assembly::{
    assemble_burgers_1d, assemble_helmholtz_2d, assemble_poisson_1d, assemble_wave_1d, BvpSystem,
    NonlinearSystem, PoissonForcing,
};
use pcp::conditioning::{BiasNorm, InverseNormMethod};
use pcp::neural::{init_mlp, Activation, EmbeddingSpec, MlpModel};
use pcp::training::{NewtonConfig, TimeSteppingConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Problem family and its physical and mesh parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Poisson1d {
        p: f64,
        count: usize,
        #[serde(default = "sine")]
        forcing: PoissonForcing,
    },
    Helmholtz2d {
        a: u32,
        count: usize,
    },
    Wave1d {
        c: f64,
        nx: usize,
        nt: usize,
    },
    Heat1d {
        kappa: f64,
        nx: usize,
    },
    Burgers1d {
        nu: f64,
        nx: usize,
        nt: usize,
    },
}

fn sine() -> PoissonForcing {
    PoissonForcing::Sine
}

/// An assembled problem.
pub enum Assembled {
    Linear(BvpSystem),
    Nonlinear(NonlinearSystem),
    /// Heat steps are assembled per step by the time-stepping loop.
    Stepping {
        kappa: f64,
        nx: usize,
    },
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Poisson1d { .. } => "poisson1d",
            Self::Helmholtz2d { .. } => "helmholtz2d",
            Self::Wave1d { .. } => "wave1d",
            Self::Heat1d { .. } => "heat1d",
            Self::Burgers1d { .. } => "burgers1d",
        }
    }

    /// The parameter a sweep varies: P, A, C, κ or ν.
    pub fn parameter(&self) -> f64 {
        match *self {
            Self::Poisson1d { p, .. } => p,
            Self::Helmholtz2d { a, .. } => f64::from(a),
            Self::Wave1d { c, .. } => c,
            Self::Heat1d { kappa, .. } => kappa,
            Self::Burgers1d { nu, .. } => nu,
        }
    }

    pub fn with_parameter(&self, v: f64) -> Result<Self, CliError> {
        let mut out = *self;
        match &mut out {
            Self::Poisson1d { p, .. } => *p = v,
            Self::Helmholtz2d { a, .. } => {
                if !(v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX)) {
                    return Err(CliError::Config(format!(
                        "sweep.values: Helmholtz A must be a positive integer, got {v}"
                    )));
                }
                *a = v as u32;
            }
            Self::Wave1d { c, .. } => *c = v,
            Self::Heat1d { kappa, .. } => *kappa = v,
            Self::Burgers1d { nu, .. } => *nu = v,
        }
        Ok(out)
    }

    /// Range checks that the schema states for each problem field.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "problem.{name}: must be positive, got {v}"
                )))
            }
        };
        let count = |name: &str, v: usize| {
            if v >= 3 {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "problem.{name}: need at least 3 nodes, got {v}"
                )))
            }
        };
        match *self {
            Self::Poisson1d { p, count: c, .. } => positive("p", p).and(count("count", c)),
            Self::Helmholtz2d { a, count: c } => {
                if a == 0 {
                    return Err(CliError::Config("problem.a: must be at least 1".into()));
                }
                count("count", c)
            }
            Self::Wave1d { c, nx, nt } => {
                positive("c", c).and(count("nx", nx)).and(count("nt", nt))
            }
            Self::Heat1d { kappa, nx } => positive("kappa", kappa).and(count("nx", nx)),
            Self::Burgers1d { nu, nx, nt } => {
                positive("nu", nu).and(count("nx", nx)).and(count("nt", nt))
            }
        }
    }

    /// Spatial (or space-time) dimension of the network input.
    pub fn input_dim(&self) -> usize {
        match self {
            Self::Poisson1d { .. } | Self::Heat1d { .. } => 1,
            _ => 2,
        }
    }

    pub fn assemble(&self) -> Result<Assembled, CliError> {
        Ok(match *self {
            Self::Poisson1d { p, count, forcing } => {
                Assembled::Linear(assemble_poisson_1d(p, count, forcing)?)
            }
            Self::Helmholtz2d { a, count } => Assembled::Linear(assemble_helmholtz_2d(a, count)?),
            Self::Wave1d { c, nx, nt } => Assembled::Linear(assemble_wave_1d(c, nx, nt)?),
            Self::Heat1d { kappa, nx } => Assembled::Stepping { kappa, nx },
            Self::Burgers1d { nu, nx, nt } => {
                Assembled::Nonlinear(assemble_burgers_1d(nu, nx, nt)?)
            }
        })
    }

    /// The assembled system, for commands that need a single linear one.
    pub fn assemble_linear(&self) -> Result<BvpSystem, CliError> {
        match self.assemble()? {
            Assembled::Linear(s) => Ok(s),
            _ => Err(CliError::Config(format!(
                "problem.kind: {} is not a single linear system",
                self.name()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// `null` disables the Fourier embedding.
    #[serde(default = "default_embedding")]
    pub embedding: Option<EmbeddingSpec>,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64, 64]
}

fn default_embedding() -> Option<EmbeddingSpec> {
    Some(EmbeddingSpec::default())
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            activation: Activation::default(),
            embedding: default_embedding(),
        }
    }
}

impl NetworkSpec {
    pub fn build(&self, input_dim: usize, seed: u64) -> Result<MlpModel, CliError> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(1);
        Ok(init_mlp(&sizes, self.activation, self.embedding, seed)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Values substituted for the problem parameter.
    pub values: Vec<f64>,
    #[serde(default = "default_method")]
    pub method: InverseNormMethod,
    #[serde(default)]
    pub bias_norm: BiasNorm,
}

fn default_method() -> InverseNormMethod {
    InverseNormMethod::DenseSvd
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    pub drop_tols: Vec<f64>,
    /// Adds a row trained on the unpreconditioned loss.
    #[serde(default = "yes")]
    pub include_none: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSpec {
    /// Largest accepted relative error.
    pub tolerance: f64,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        Self { tolerance: 1e-6 }
    }
}

/// One experiment, as read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub time_stepping: TimeSteppingConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub ablation: Option<AblationSpec>,
    #[serde(default)]
    pub gradcheck: GradcheckSpec,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_trials() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Value checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<(), CliError> {
        let field =
            |name: &str, e: pcp::training::TrainError| CliError::Config(format!("{name}: {e}"));
        self.problem.validate()?;
        self.train.validate().map_err(|e| field("train", e))?;
        self.newton.validate().map_err(|e| field("newton", e))?;
        self.time_stepping
            .validate()
            .map_err(|e| field("time_stepping", e))?;
        if self.trials == 0 {
            return Err(CliError::Config("trials: must be at least 1".into()));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(CliError::Config(
                "network.hidden: need at least one layer, all widths ≥ 1".into(),
            ));
        }
        if let Some(e) = &self.network.embedding {
            if e.n_freq == 0 {
                return Err(CliError::Config(
                    "network.embedding.n_freq: must be at least 1".into(),
                ));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config("sweep.values: must be finite".into()));
            }
        }
        if let Some(a) = &self.ablation {
            if a.drop_tols.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(CliError::Config(
                    "ablation.drop_tols: must be finite and non-negative".into(),
                ));
            }
        }
        if !(self.gradcheck.tolerance > 0.0) {
            return Err(CliError::Config(
                "gradcheck.tolerance: must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}
