//! Experiment driver: run configuration, training loop, evaluation, metrics
//! files and plots.

mod eval;
mod metrics;
mod plot;
mod train;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::{EnvError, NnError, PlannerError, ReplayError, Td3Error};
use crate::goal_mdp::{AgentVariant, EnvId};
use crate::replay::{RelabelConfig, DEFAULT_CAPACITY};
use crate::td3::Td3Config;

pub use eval::{evaluate, EpisodeRecord, EvalReport, MetricRow};
pub use metrics::{ci95, mean_ci95, moving_average, read_metrics, resample, write_metrics, MetricsFile, Resampled};
pub use plot::{emit_plots, trajectory_svg, CurveGroup, PlotSummary, SMOOTHING_WINDOW};
pub use train::{evaluate_run, run_ablation, run_training, AblationMode, EvalEvent, RunSummary, Trainer};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("planner/geometry error: {0}")]
    Planner(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 2 config, 3 numeric, 4 planner/geometry, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numeric(_) => 3,
            HarnessError::Planner(_) => 4,
            HarnessError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config(_) => HarnessError::Config(e.to_string()),
            EnvError::Geometry(_) | EnvError::Planner(_) => HarnessError::Planner(e.to_string()),
        }
    }
}

impl From<PlannerError> for HarnessError {
    fn from(e: PlannerError) -> Self {
        HarnessError::Planner(e.to_string())
    }
}

impl From<Td3Error> for HarnessError {
    fn from(e: Td3Error) -> Self {
        match e {
            Td3Error::InvalidConfig(_) => HarnessError::Config(e.to_string()),
            _ => HarnessError::Numeric(e.to_string()),
        }
    }
}

impl From<NnError> for HarnessError {
    fn from(e: NnError) -> Self {
        HarnessError::Numeric(e.to_string())
    }
}

impl From<ReplayError> for HarnessError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::RepairExhausted(_) => HarnessError::Planner(e.to_string()),
            _ => HarnessError::Numeric(e.to_string()),
        }
    }
}

/// Independent random streams of one run, all derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Env = 2,
    Explore = 3,
    Relabel = 4,
    Eval = 5,
    TargetNoise = 6,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Everything that defines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvId,
    pub variant: AgentVariant,
    pub seed: u64,
    pub total_env_steps: usize,
    pub warmup_random_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Episode step limit; the environment file's value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_episode_steps: Option<usize>,
    /// Custom environment file; the bundled one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_config: Option<PathBuf>,
    /// Also write `checkpoint_<step>.json` every this many steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    pub output_dir: PathBuf,
    pub relabel: RelabelConfig,
    pub td3: Td3Config,
}

impl RunConfig {
    /// Per-environment defaults.
    pub fn defaults(env: EnvId, variant: AgentVariant) -> Self {
        let total_env_steps = match env {
            EnvId::Dubins => 400_000,
            EnvId::Cartpole => 150_000,
            EnvId::PointMaze => 400_000,
        };
        Self {
            env,
            variant,
            seed: 0,
            total_env_steps,
            warmup_random_steps: 5_000,
            eval_every: 2_000,
            eval_episodes: 10,
            batch_size: 256,
            buffer_capacity: DEFAULT_CAPACITY,
            max_episode_steps: None,
            env_config: None,
            checkpoint_every: None,
            output_dir: PathBuf::from(format!("runs/{env}-{variant}-0")),
            relabel: RelabelConfig::default(),
            td3: Td3Config {
                gamma: env.default_gamma(),
                actor_lr: env.default_actor_lr(),
                critic_lr: 1e-3,
                ..Td3Config::default()
            },
        }
    }

    /// Resolves layered TOML: `env` and `variant` pick the defaults, then
    /// `file` and `overrides` (later wins) replace individual fields.
    pub fn resolve(file: &toml::Table, overrides: &toml::Table) -> Result<Self, HarnessError> {
        let mut merged = file.clone();
        merge_tables(&mut merged, overrides);
        let env: EnvId = match merged.get("env") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| HarnessError::Config(format!("env: {e}")))?,
            None => return Err(HarnessError::Config("missing `env`".into())),
        };
        let variant: AgentVariant = match merged.get("variant") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| HarnessError::Config(format!("variant: {e}")))?,
            None => return Err(HarnessError::Config("missing `variant`".into())),
        };
        let mut base = toml::Table::try_from(Self::defaults(env, variant)).expect("defaults serialize");
        if !merged.contains_key("output_dir") {
            let seed = merged.get("seed").and_then(|v| v.as_integer()).unwrap_or(0);
            base.insert(
                "output_dir".into(),
                toml::Value::String(format!("runs/{env}-{variant}-{seed}")),
            );
        }
        merge_tables(&mut base, &merged);
        let cfg: RunConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, overrides: &toml::Table) -> Result<Self, HarnessError> {
        let file: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Self::resolve(&file, overrides)
    }

    pub fn load(path: &Path, overrides: &toml::Table) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run configs serialize")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("eval_every and eval_episodes must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be positive");
        }
        if self.max_episode_steps == Some(0) {
            return bad("max_episode_steps must be positive");
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be positive");
        }
        if !(0.0..=1.0).contains(&self.relabel.prob) {
            return bad("relabel.prob must lie in [0, 1]");
        }
        if (self.relabel.no_bg || self.relabel.no_fg) && !self.variant.observes_two_goals() {
            return bad("relabel ablations need a two-goal variant (gseq or two-goal)");
        }
        self.td3.validate()?;
        Ok(())
    }

    /// SHA-256 of the configuration, ignoring where the outputs go.
    pub fn hash(&self, env_content_hash: &str) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let mut h = Sha256::new();
        h.update(serde_json::to_string(&c).expect("run configs serialize").as_bytes());
        h.update(env_content_hash.as_bytes());
        hex::encode(h.finalize())
    }
}

fn merge_tables(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub env: EnvId,
    pub variant: AgentVariant,
    pub seed: u64,
    pub config_hash: String,
    pub env_content_hash: String,
    /// `None`, `no-bg-relabel` or `no-fg-relabel`.
    pub ablation: Option<String>,
    pub total_env_steps: usize,
    pub eval_goals: Vec<Vec<f64>>,
}

impl Manifest {
    pub fn label(&self) -> String {
        match &self.ablation {
            Some(a) => format!("{} ({a})", self.variant),
            None => self.variant.to_string(),
        }
    }
}
