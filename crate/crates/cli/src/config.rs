//! Experiment configuration: one JSON file, unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use dpir_core::estimators::{DenoiserKind, EstimatorStack, FuserKind, RestorerKind};
use dpir_core::oracle::LinearGaussianWorld;
use dpir_core::sampler::{SamplerConfig, SamplerMode};
use dpir_core::{NoiseSchedule, VarianceParam};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable that overrides `sampler.seed`.
pub const SEED_ENV: &str = "DPIR_SEED";

/// A configuration problem, with the dotted path of the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config key `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
    #[serde(default)]
    pub variance_param: VarianceParam,
}

fn default_steps() -> usize {
    1000
}
fn default_beta_start() -> f64 {
    1e-4
}
fn default_beta_end() -> f64 {
    2e-2
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            beta_start: default_beta_start(),
            beta_end: default_beta_end(),
            variance_param: VarianceParam::default(),
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule, ConfigError> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end, self.variance_param)
            .map_err(|e| ConfigError::new("schedule", e))
    }
}

/// Where the linear-Gaussian world comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldConfig {
    /// Random world; `sigma_y` overrides the drawn observation noise.
    Random {
        n: usize,
        m: usize,
        seed: u64,
        #[serde(default = "default_cap")]
        spectral_cap: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_y: Option<f64>,
    },
    /// `A = I`, `Sigma0 = I`, `mu0 = 0`.
    Identity { n: usize, sigma_y: f64 },
    /// World JSON file; relative paths resolve against the config file.
    File(PathBuf),
}

fn default_cap() -> f64 {
    1.0
}

impl WorldConfig {
    pub fn build(&self, base: &Path) -> Result<LinearGaussianWorld, ConfigError> {
        let err = |e: dpir_core::DpirError| ConfigError::new("world", e);
        match self {
            Self::Random {
                n,
                m,
                seed,
                spectral_cap,
                sigma_y,
            } => {
                let w = LinearGaussianWorld::random(*n, *m, *seed, *spectral_cap).map_err(err)?;
                match sigma_y {
                    Some(s) => w.with_sigma_y(*s).map_err(|e| ConfigError::new("world.random.sigma_y", e)),
                    None => Ok(w),
                }
            }
            Self::Identity { n, sigma_y } => LinearGaussianWorld::identity(*n, *sigma_y).map_err(err),
            Self::File(path) => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| ConfigError::new("world.file", format!("{}: {e}", full.display())))?;
                LinearGaussianWorld::from_json(&text).map_err(|e| ConfigError::new("world.file", e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub denoiser: String,
    pub restorer: String,
    pub fuser: String,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            denoiser: "gaussian".into(),
            restorer: "mmse".into(),
            fuser: "exact".into(),
        }
    }
}

impl EstimatorConfig {
    pub fn build(
        &self,
        world: &LinearGaussianWorld,
        schedule: &NoiseSchedule,
        tau: usize,
    ) -> Result<EstimatorStack, ConfigError> {
        let d: DenoiserKind = self
            .denoiser
            .parse()
            .map_err(|e| ConfigError::new("estimators.denoiser", e))?;
        let r: RestorerKind = self
            .restorer
            .parse()
            .map_err(|e| ConfigError::new("estimators.restorer", e))?;
        let f: FuserKind = self.fuser.parse().map_err(|e| ConfigError::new("estimators.fuser", e))?;
        EstimatorStack::from_kinds(world, schedule, d, r, &f, tau)
            .map_err(|e| ConfigError::new("estimators", e))
    }
}

/// Tolerances used by `verify` when a config is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub lemma2_rel: f64,
    pub lemma1_abs: f64,
    pub ddim_rel: f64,
    pub mc_std_errs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            lemma2_rel: 1e-10,
            lemma1_abs: 1e-8,
            ddim_rel: 1e-10,
            mc_std_errs: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub world: WorldConfig,
    #[serde(default)]
    pub estimators: EstimatorConfig,
    pub sampler: SamplerConfig,
    /// Relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    /// Number of `(x0, y)` problems drawn for `sweep-tau` / `compare-starts`.
    #[serde(default = "default_problems")]
    pub problems: usize,
    /// `tau` values for `sweep-tau`.
    #[serde(default)]
    pub tau_list: Vec<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_problems() -> usize {
    1
}

/// Fully resolved configuration plus where it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    /// `output_dir`, resolved against the config file's directory.
    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.output_dir)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { String::new() } else { key };
            ConfigError::new(key, e.inner())
        })
    }

    /// Read `path`, then apply the seed override if `seed_override` is set.
    pub fn load(path: &Path, seed_override: Option<&str>) -> Result<LoadedConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        if let Some(raw) = seed_override {
            config.sampler.seed = raw
                .trim()
                .parse()
                .map_err(|_| ConfigError::new(SEED_ENV, format!("`{raw}` is not an unsigned integer")))?;
        }
        config.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sampler.num_samples == 0 {
            return Err(ConfigError::new("sampler.num_samples", "must be at least 1"));
        }
        if self.sampler.tau > self.schedule.steps {
            return Err(ConfigError::new(
                "sampler.tau",
                format!("{} exceeds schedule.steps = {}", self.sampler.tau, self.schedule.steps),
            ));
        }
        if let SamplerMode::AcceleratedDdim { stride, .. } = self.sampler.mode {
            if stride == 0 || stride > self.sampler.tau {
                return Err(ConfigError::new(
                    "sampler.mode.stride",
                    format!("{stride} must lie in [1, tau = {}]", self.sampler.tau),
                ));
            }
        }
        if self.problems == 0 {
            return Err(ConfigError::new("problems", "must be at least 1"));
        }
        if let Some(bad) = self.tau_list.iter().find(|&&t| t > self.schedule.steps) {
            return Err(ConfigError::new(
                "tau_list",
                format!("{bad} exceeds schedule.steps = {}", self.schedule.steps),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
