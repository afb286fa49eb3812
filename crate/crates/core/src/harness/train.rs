//! The main training loop.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{episode_over, evaluate, initial_goals, replan, EvalReport, MetricRow};
use super::metrics::{append_csv, metrics_header, metrics_record, write_text};
use super::plot::trajectory_svg;
use super::{substream, HarnessError, Manifest, RunConfig, Stream};
use crate::env::{EnvConfig, Environment};
use crate::goal_mdp::{build_observation, reward, state_reaches, step_goal, terminal};
use crate::planner::Planner;
use crate::replay::{RelabelStats, ReplayBuffer, Trajectory, Transition};
use crate::td3::{Td3Agent, UpdateDiagnostics};

/// One training run: environment, planner, agent, buffer and random streams.
pub struct Trainer {
    pub config: RunConfig,
    env_cfg: Arc<EnvConfig>,
    env: Environment,
    planner: Planner,
    agent: Td3Agent,
    buffer: ReplayBuffer,
    env_rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    relabel_rng: ChaCha8Rng,
    target_rng: ChaCha8Rng,
    env_step: usize,
    episodes: usize,
    max_steps: usize,
    stats: RelabelStats,
    last_update: Option<UpdateDiagnostics>,
    /// Network actions taken so far (the rest were uniform warm-up actions).
    policy_actions: usize,
}

/// What a caller sees at each evaluation point.
pub struct EvalEvent<'a> {
    pub report: &'a EvalReport,
    pub agent: &'a Td3Agent,
    pub last_update: Option<UpdateDiagnostics>,
    pub relabel: RelabelStats,
    pub episodes: usize,
    pub elapsed_secs: f64,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let env_cfg = match &config.env_config {
            Some(p) => EnvConfig::load(p)?,
            None => EnvConfig::bundled(config.env),
        };
        if env_cfg.id != config.env {
            return Err(HarnessError::Config(format!(
                "environment file describes {}, run asks for {}",
                env_cfg.id, config.env
            )));
        }
        let env_cfg = Arc::new(env_cfg);
        let planner = Planner::new(env_cfg.graph.clone(), env_cfg.goal_spec)?;
        let env_id = config.env;
        let obs_dim = config.variant.obs_dim(env_id.state_obs_dim(), env_id.goal_dim());
        let agent = Td3Agent::new(obs_dim, env_id.action_dim(), config.td3.clone(), &mut substream(config.seed, Stream::Init))?;
        let max_steps = config.max_episode_steps.unwrap_or(env_cfg.max_steps);
        Ok(Self {
            env: Environment::new(env_cfg.clone()),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            env_rng: substream(config.seed, Stream::Env),
            explore_rng: substream(config.seed, Stream::Explore),
            relabel_rng: substream(config.seed, Stream::Relabel),
            target_rng: substream(config.seed, Stream::TargetNoise),
            env_step: 0,
            episodes: 0,
            max_steps,
            stats: RelabelStats::default(),
            last_update: None,
            policy_actions: 0,
            config,
            env_cfg,
            planner,
            agent,
        })
    }

    pub fn agent(&self) -> &Td3Agent {
        &self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn planner(&self) -> &Planner {
        &self.planner
    }

    pub fn env_config(&self) -> &Arc<EnvConfig> {
        &self.env_cfg
    }

    pub fn env_step(&self) -> usize {
        self.env_step
    }

    pub fn policy_actions(&self) -> usize {
        self.policy_actions
    }

    pub fn relabel_stats(&self) -> RelabelStats {
        self.stats
    }

    pub fn evaluate_now(&self, record_traces: bool) -> Result<EvalReport, HarnessError> {
        evaluate(
            &self.agent,
            &self.env_cfg,
            &self.planner,
            self.config.variant,
            self.config.eval_episodes,
            self.max_steps,
            self.env_step,
            record_traces,
            &mut substream(self.config.seed, Stream::Eval),
        )
    }

    /// Runs until `total_env_steps`, calling `on_eval` at every evaluation point.
    pub fn train(&mut self, on_eval: &mut dyn FnMut(&EvalEvent) -> Result<(), HarnessError>) -> Result<Vec<MetricRow>, HarnessError> {
        let start = Instant::now();
        let mut rows = Vec::new();
        while self.env_step < self.config.total_env_steps {
            self.run_episode(&mut |trainer: &Trainer| {
                let final_point = trainer.env_step + trainer.config.eval_every > trainer.config.total_env_steps;
                let report = trainer.evaluate_now(final_point)?;
                on_eval(&EvalEvent {
                    report: &report,
                    agent: &trainer.agent,
                    last_update: trainer.last_update,
                    relabel: trainer.stats,
                    episodes: trainer.episodes,
                    elapsed_secs: start.elapsed().as_secs_f64(),
                })?;
                rows.push(report.row);
                Ok(())
            })?;
        }
        Ok(rows)
    }

    fn run_episode(&mut self, on_eval: &mut dyn FnMut(&Trainer) -> Result<(), HarnessError>) -> Result<(), HarnessError> {
        let variant = self.config.variant;
        let spec = self.env_cfg.goal_spec;
        let (mut s, env_goal) = self.env.reset(&mut self.env_rng, None)?;
        let mut goals = initial_goals(variant, &self.planner, &s, &env_goal)?;
        let mut transitions = Vec::with_capacity(self.max_steps);
        for _ in 0..self.max_steps {
            if self.env_step >= self.config.total_env_steps {
                break;
            }
            let action: Vec<f64> = if self.env_step < self.config.warmup_random_steps {
                (0..self.env_cfg.action_dim())
                    .map(|_| self.explore_rng.random_range(-1.0..=1.0))
                    .collect()
            } else {
                self.policy_actions += 1;
                let obs = build_observation(variant, &s, &goals);
                self.agent.select_action(&obs, true, &mut self.explore_rng)?
            };
            let s_next = self.env.step(&action);
            if !s_next.is_finite() {
                return Err(HarnessError::Numeric(format!("non-finite state at step {}", self.env_step)));
            }
            let r = reward(&spec, &s_next, &goals.bg);
            let term = terminal(&spec, &s_next, &goals, variant);
            let bg_next = step_goal(variant, &spec, &s_next, &goals, &self.planner)?;
            transitions.push(Transition {
                s,
                a: action,
                r,
                bg: goals.bg,
                fg: goals.fg,
                s_next,
                bg_next,
                term,
            });
            self.env_step += 1;

            if self.env_step > self.config.warmup_random_steps && !self.buffer.is_empty() {
                let batch = self.buffer.sample_relabeled_batch(
                    variant,
                    &spec,
                    &self.planner,
                    self.config.batch_size,
                    &self.config.relabel,
                    &mut self.relabel_rng,
                )?;
                self.stats.add(&batch.stats);
                self.last_update = Some(self.agent.update(&batch, &mut self.target_rng)?);
            }
            if self.env_step.is_multiple_of(self.config.eval_every) {
                on_eval(self)?;
            }

            if episode_over(&self.env_cfg, &s_next, &env_goal) {
                break;
            }
            if state_reaches(&spec, &s_next, &goals.bg) {
                goals = replan(variant, &self.planner, &s_next, &env_goal, &goals)?;
            }
            s = s_next;
        }
        if !transitions.is_empty() {
            self.buffer.store(Trajectory::new(transitions).with_episode_goal(env_goal))?;
        }
        self.episodes += 1;
        Ok(())
    }

    pub fn manifest(&self, ablation: Option<AblationMode>) -> Manifest {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            env: self.config.env,
            variant: self.config.variant,
            seed: self.config.seed,
            config_hash: self.config.hash(&self.env_cfg.content_hash),
            env_content_hash: self.env_cfg.content_hash.clone(),
            ablation: ablation.map(|a| a.as_str().to_string()),
            total_env_steps: self.config.total_env_steps,
            eval_goals: self.env_cfg.eval_goals.iter().map(|g| g.as_slice().to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    NoBgRelabel,
    NoFgRelabel,
}

impl AblationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::NoBgRelabel => "no-bg-relabel",
            AblationMode::NoFgRelabel => "no-fg-relabel",
        }
    }
}

impl std::str::FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "no-bg-relabel" | "no-bg" => Ok(AblationMode::NoBgRelabel),
            "no-fg-relabel" | "no-fg" => Ok(AblationMode::NoFgRelabel),
            other => Err(format!("unknown ablation '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub rows: Vec<MetricRow>,
    pub manifest: Manifest,
}

impl RunSummary {
    pub fn final_success(&self) -> Option<f64> {
        self.rows.last().map(|r| r.mean_success)
    }
}

/// Trains and writes `config.toml`, `manifest.json`, `metrics.csv`,
/// `diagnostics.csv`, `timing.csv`, `checkpoint.json`, `trajectories.json`
/// and, in the mazes, `trajectories.svg` into the output directory.
pub fn run_training(config: &RunConfig) -> Result<RunSummary, HarnessError> {
    run_with(config, None)
}

/// [`run_training`] with one goal's relabeling switched off.
pub fn run_ablation(config: &RunConfig, mode: AblationMode) -> Result<RunSummary, HarnessError> {
    if !config.variant.observes_two_goals() {
        return Err(HarnessError::Config(format!(
            "ablations apply to gseq and two-goal, not {}",
            config.variant
        )));
    }
    let mut c = config.clone();
    match mode {
        AblationMode::NoBgRelabel => c.relabel.no_bg = true,
        AblationMode::NoFgRelabel => c.relabel.no_fg = true,
    }
    run_with(&c, Some(mode))
}

fn run_with(config: &RunConfig, ablation: Option<AblationMode>) -> Result<RunSummary, HarnessError> {
    let mut trainer = Trainer::new(config.clone())?;
    let out = config.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
    let manifest = trainer.manifest(ablation);
    write_text(&out.join("config.toml"), &config.to_toml_string())?;
    write_text(
        &out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifests serialize"),
    )?;
    let goal_count = trainer.env_config().eval_goals.len();
    let metrics_path = out.join("metrics.csv");
    let diag_path = out.join("diagnostics.csv");
    let timing_path = out.join("timing.csv");
    for p in [&metrics_path, &diag_path, &timing_path] {
        if p.exists() {
            std::fs::remove_file(p).map_err(|e| HarnessError::io(p, e))?;
        }
    }
    // Empty-but-headed metrics file even for runs shorter than one eval period.
    append_header_only(&metrics_path, &metrics_header(goal_count))?;
    let diag_header: Vec<String> = [
        "env_step",
        "episodes",
        "critic1_loss",
        "critic2_loss",
        "critic_grad_norm",
        "actor_loss",
        "relabel_rate",
        "bg_changed",
        "fg_changed",
        "repair_failures",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let timing_header = vec!["env_step".to_string(), "elapsed_secs".to_string()];
    let checkpoint_every = config.checkpoint_every;
    let mut final_report: Option<EvalReport> = None;
    let mut last_ckpt = 0;
    let rows = {
        let mut on_eval = |ev: &EvalEvent| -> Result<(), HarnessError> {
            let row = &ev.report.row;
            append_csv(&metrics_path, &metrics_header(goal_count), &metrics_record(row))?;
            let u = ev.last_update;
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            append_csv(
                &diag_path,
                &diag_header,
                &[
                    row.env_step.to_string(),
                    ev.episodes.to_string(),
                    opt(u.map(|u| u.critic1_loss)),
                    opt(u.map(|u| u.critic2_loss)),
                    opt(u.map(|u| u.critic_grad_norm)),
                    opt(u.and_then(|u| u.actor_loss)),
                    ev.relabel.relabel_rate().to_string(),
                    ev.relabel.bg_changed.to_string(),
                    ev.relabel.fg_changed.to_string(),
                    ev.relabel.repair_failures.to_string(),
                ],
            )?;
            append_csv(
                &timing_path,
                &timing_header,
                &[row.env_step.to_string(), format!("{:.3}", ev.elapsed_secs)],
            )?;
            if let Some(every) = checkpoint_every {
                if row.env_step / every > last_ckpt {
                    last_ckpt = row.env_step / every;
                    write_text(&out.join(format!("checkpoint_{}.json", row.env_step)), &ev.agent.to_checkpoint_string())?;
                }
            }
            if !ev.report.episodes.is_empty() && !ev.report.episodes[0].values.is_empty() {
                final_report = Some(ev.report.clone());
            }
            Ok(())
        };
        trainer.train(&mut on_eval)?
    };
    write_text(&out.join("checkpoint.json"), &trainer.agent().to_checkpoint_string())?;
    let report = match final_report {
        Some(r) => r,
        None => trainer.evaluate_now(true)?,
    };
    write_text(
        &out.join("trajectories.json"),
        &serde_json::to_string(&report.episodes).expect("episodes serialize"),
    )?;
    if let Some(svg) = trajectory_svg(trainer.env_config(), &report.episodes) {
        write_text(&out.join("trajectories.svg"), &svg)?;
    }
    Ok(RunSummary {
        output_dir: out,
        rows,
        manifest,
    })
}

/// Re-evaluates a finished run from its `config.toml` and a checkpoint
/// (`checkpoint.json` by default), recording traces.
pub fn evaluate_run(run_dir: &Path, checkpoint: Option<&Path>, episodes: Option<usize>) -> Result<EvalReport, HarnessError> {
    let config = RunConfig::load(&run_dir.join("config.toml"), &toml::Table::new())?;
    let ckpt_path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join("checkpoint.json"));
    let text = std::fs::read_to_string(&ckpt_path).map_err(|e| HarnessError::Config(format!("{}: {e}", ckpt_path.display())))?;
    let agent = Td3Agent::from_checkpoint_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", ckpt_path.display())))?;
    let mut trainer = Trainer::new(config)?;
    if agent.obs_dim != trainer.agent.obs_dim || agent.action_dim != trainer.agent.action_dim {
        return Err(HarnessError::Config(format!(
            "checkpoint has obs/action dims {}/{}, run expects {}/{}",
            agent.obs_dim, agent.action_dim, trainer.agent.obs_dim, trainer.agent.action_dim
        )));
    }
    trainer.agent = agent;
    if let Some(n) = episodes {
        if n == 0 {
            return Err(HarnessError::Config("episodes must be positive".into()));
        }
        trainer.config.eval_episodes = n;
    }
    trainer.evaluate_now(true)
}

fn append_header_only(path: &Path, header: &[String]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    w.write_record(header)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}
