//! Experiment configuration.
//!
//! Files are TOML with three sections, usually written as dotted keys:
//!
//! ```toml
//! run.algorithm = "a2c"
//! run.case = 2
//! run.episodes = 1000
//! env.capacity = 30
//! algo.gamma = 0.2
//! ```
//!
//! `env.*` overrides fields of the case's [`ChainConfig`] and `algo.*` fields
//! of the chosen algorithm's hyperparameters. Command-line values win over the
//! file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::a2c::A2cHyper;
use crate::env::{ChainConfig, CostCase};
use crate::error::HarnessError;
use crate::maa2c::MaA2cHyper;
use crate::q_learning::QHyper;
use crate::stats::CiMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Q,
    A2c,
    Maa2c,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Q, Algorithm::A2c, Algorithm::Maa2c];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Q => "q",
            Algorithm::A2c => "a2c",
            Algorithm::Maa2c => "maa2c",
        }
    }

    pub fn default_episodes(self) -> usize {
        match self {
            Algorithm::Q => 3000,
            Algorithm::A2c | Algorithm::Maa2c => 1000,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "q" => Ok(Algorithm::Q),
            "a2c" => Ok(Algorithm::A2c),
            "maa2c" => Ok(Algorithm::Maa2c),
            other => Err(HarnessError::Argument(format!(
                "unknown algorithm {other:?}, expected q, a2c or maa2c"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hyper {
    Q(QHyper),
    A2c(A2cHyper),
    Maa2c(MaA2cHyper),
}

impl Hyper {
    pub fn default_for(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Q => Hyper::Q(QHyper::default()),
            Algorithm::A2c => Hyper::A2c(A2cHyper::default()),
            Algorithm::Maa2c => Hyper::Maa2c(MaA2cHyper::default()),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyper::Q(_) => Algorithm::Q,
            Hyper::A2c(_) => Algorithm::A2c,
            Hyper::Maa2c(_) => Algorithm::Maa2c,
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            Hyper::Q(h) => h.validate(),
            Hyper::A2c(h) => h.validate(),
            Hyper::Maa2c(h) => h.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub case: CostCase,
    pub episodes: usize,
    pub steps: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    /// Mean-action rollouts after training, per seed.
    pub eval_episodes: usize,
    pub ci_method: CiMethod,
    pub chain: ChainConfig,
    pub hyper: Hyper,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, case: CostCase) -> Self {
        ExperimentConfig {
            algorithm,
            case,
            episodes: algorithm.default_episodes(),
            steps: 1000,
            seeds: 10,
            base_seed: 0,
            out_dir: PathBuf::from("runs"),
            eval_episodes: 10,
            ci_method: CiMethod::Normal,
            chain: ChainConfig::for_case(case),
            hyper: Hyper::default_for(algorithm),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.hyper.algorithm() != self.algorithm {
            return Err(HarnessError::Config("hyperparameters belong to another algorithm".into()));
        }
        for (name, v) in [
            ("episodes", self.episodes),
            ("steps", self.steps),
            ("seeds", self.seeds),
            ("eval_episodes", self.eval_episodes),
        ] {
            if v == 0 {
                return Err(HarnessError::Config(format!("run.{name} must be >= 1")));
            }
        }
        self.chain.validate()?;
        self.hyper.validate().map_err(HarnessError::Config)
    }

    /// Seed of run `k`.
    pub fn seed(&self, k: usize) -> u64 {
        self.base_seed + k as u64
    }
}

/// Run-level values; unset fields fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverrides {
    pub algorithm: Option<String>,
    pub case: Option<u32>,
    pub episodes: Option<usize>,
    pub steps: Option<usize>,
    pub seeds: Option<usize>,
    pub base_seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub eval_episodes: Option<usize>,
    pub ci_method: Option<CiMethod>,
}

impl RunOverrides {
    /// Fields of `self`, falling back to `other`.
    pub fn or(self, other: RunOverrides) -> RunOverrides {
        RunOverrides {
            algorithm: self.algorithm.or(other.algorithm),
            case: self.case.or(other.case),
            episodes: self.episodes.or(other.episodes),
            steps: self.steps.or(other.steps),
            seeds: self.seeds.or(other.seeds),
            base_seed: self.base_seed.or(other.base_seed),
            out: self.out.or(other.out),
            eval_episodes: self.eval_episodes.or(other.eval_episodes),
            ci_method: self.ci_method.or(other.ci_method),
        }
    }
}

/// Parsed configuration file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub run: RunOverrides,
    #[serde(default)]
    pub env: toml::Table,
    #[serde(default)]
    pub algo: toml::Table,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        ConfigFile::parse(&text)
    }

    /// Resolves the file against command-line values `cli`.
    pub fn resolve(&self, cli: RunOverrides) -> Result<ExperimentConfig, HarnessError> {
        let run = cli.or(self.run.clone());
        let algorithm: Algorithm = run
            .algorithm
            .as_deref()
            .ok_or_else(|| HarnessError::Config("run.algorithm is required".into()))?
            .parse()?;
        let case = CostCase::from_number(
            run.case
                .ok_or_else(|| HarnessError::Config("run.case is required".into()))?,
        )?;
        let mut cfg = ExperimentConfig::new(algorithm, case);
        cfg.chain = overlay(&cfg.chain, &self.env, "env")?;
        cfg.hyper = match cfg.hyper {
            Hyper::Q(h) => Hyper::Q(overlay(&h, &self.algo, "algo")?),
            Hyper::A2c(h) => Hyper::A2c(overlay(&h, &self.algo, "algo")?),
            Hyper::Maa2c(h) => Hyper::Maa2c(overlay(&h, &self.algo, "algo")?),
        };
        if let Some(v) = run.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = run.steps {
            cfg.steps = v;
        }
        if let Some(v) = run.seeds {
            cfg.seeds = v;
        }
        if let Some(v) = run.base_seed {
            cfg.base_seed = v;
        }
        if let Some(v) = run.out {
            cfg.out_dir = v;
        }
        if let Some(v) = run.eval_episodes {
            cfg.eval_episodes = v;
        }
        if let Some(v) = run.ci_method {
            cfg.ci_method = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `base` with the keys of `patch` replaced; unknown keys are errors.
fn overlay<T>(base: &T, patch: &toml::Table, section: &str) -> Result<T, HarnessError>
where
    T: Serialize + DeserializeOwned,
{
    let err = |e: String| HarnessError::Config(format!("{section}: {e}"));
    let mut table = toml::Table::try_from(base).map_err(|e| err(e.to_string()))?;
    for (key, value) in patch {
        let slot = table
            .get_mut(key)
            .ok_or_else(|| err(format!("unknown key {key:?}")))?;
        // Integers are accepted where floats are expected.
        *slot = match (&*slot, value) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
            _ => value.clone(),
        };
    }
    table.try_into().map_err(|e: toml::de::Error| err(e.to_string()))
}
