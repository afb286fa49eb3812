//! `goalseq`: train, evaluate, ablate and plot goal-sequence agents.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use goalseq::harness::{
    emit_plots, evaluate_run, run_ablation, run_training, AblationMode, HarnessError, RunConfig, RunSummary,
};

#[derive(Parser)]
#[command(name = "goalseq", version, about = "Goal-conditioned TD3 with planner goal sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its run directory.
    Train(RunArgs),
    /// Re-evaluate a finished run from its checkpoint.
    Evaluate(EvalArgs),
    /// Train with behavioural- or final-goal relabeling switched off.
    Ablate {
        /// no-bg-relabel or no-fg-relabel
        #[arg(long)]
        mode: AblationMode,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Aggregate run directories into curves and SVG plots.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration TOML; command-line flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// dubins, cartpole or pointmaze
    #[arg(long)]
    env: Option<String>,
    /// final-only, seq-myopic, gseq or two-goal
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    total_env_steps: Option<i64>,
    #[arg(long)]
    warmup_random_steps: Option<i64>,
    #[arg(long)]
    eval_every: Option<i64>,
    #[arg(long)]
    eval_episodes: Option<i64>,
    #[arg(long)]
    batch_size: Option<i64>,
    #[arg(long)]
    buffer_capacity: Option<i64>,
    #[arg(long)]
    max_episode_steps: Option<i64>,
    #[arg(long)]
    checkpoint_every: Option<i64>,
    /// Custom environment TOML (graph path relative to it).
    #[arg(long)]
    env_config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    actor_lr: Option<f64>,
    #[arg(long)]
    critic_lr: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<i64>>,
    #[arg(long)]
    relabel_prob: Option<f64>,
    /// Sample relabel indices strictly inside the trajectory.
    #[arg(long)]
    strict_relabel: bool,
    /// Any other field as `dotted.key=toml_value`, e.g. `td3.policy_delay=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory written by `train` or `ablate`.
    #[arg(long)]
    run_dir: PathBuf,
    /// Checkpoint to load instead of `checkpoint.json`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Where to write the report (default `<run_dir>/eval.json`).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Run directories; directories without `manifest.json` are searched one level down.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value = "plots")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Train(args) => {
            let cfg = args.resolve(None)?;
            report(&run_training(&cfg)?);
        }
        Command::Ablate { mode, run } => {
            let cfg = run.resolve(Some(mode))?;
            report(&run_ablation(&cfg, mode)?);
        }
        Command::Evaluate(args) => {
            let rep = evaluate_run(&args.run_dir, args.checkpoint.as_deref(), args.episodes)?;
            let out = args.output.unwrap_or_else(|| args.run_dir.join("eval.json"));
            let text = serde_json_string(&rep)?;
            std::fs::write(&out, text).map_err(|e| HarnessError::Config(format!("{}: {e}", out.display())))?;
            let r = &rep.row;
            println!(
                "success {:.3} ± {:.3} over {} episodes; time to goal {}",
                r.mean_success,
                r.success_ci95,
                rep.episodes.len(),
                r.mean_time_to_goal.map_or("n/a".to_string(), |t| format!("{t:.1}"))
            );
            println!("wrote {}", out.display());
        }
        Command::Plot(args) => {
            let dirs = collect_runs(&args.runs)?;
            let summary = emit_plots(&dirs, &args.out)?;
            for g in &summary.groups {
                match g.final_success() {
                    Some((m, h)) => println!("{} {}: final success {m:.3} ± {h:.3} (n={})", g.env, g.label, g.seeds),
                    None => println!("{} {}: no evaluations", g.env, g.label),
                }
            }
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn serde_json_string<T: serde::Serialize>(v: &T) -> Result<String, HarnessError> {
    serde_json::to_string_pretty(v).map_err(|e| HarnessError::Numeric(e.to_string()))
}

fn report(s: &RunSummary) {
    match s.rows.last() {
        Some(r) => println!(
            "{} seed {}: final success {:.3} ± {:.3} at step {}",
            s.manifest.label(),
            s.manifest.seed,
            r.mean_success,
            r.success_ci95,
            r.env_step
        ),
        None => println!("{} seed {}: no evaluation point reached", s.manifest.label(), s.manifest.seed),
    }
    println!("wrote {}", s.output_dir.display());
}

fn collect_runs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    for p in paths {
        if p.join("manifest.json").is_file() {
            out.push(p.clone());
            continue;
        }
        let entries = std::fs::read_dir(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|d| d.join("manifest.json").is_file())
            .collect();
        found.sort();
        if found.is_empty() {
            return Err(HarnessError::Config(format!("{}: no run directories found", p.display())));
        }
        out.extend(found);
    }
    Ok(out)
}

impl RunArgs {
    fn resolve(&self, ablation: Option<AblationMode>) -> Result<RunConfig, HarnessError> {
        let file: toml::Table = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let mut o = toml::Table::new();
        let mut put = |key: &str, v: toml::Value| set_dotted(&mut o, key, v);
        use toml::Value as V;
        if let Some(v) = &self.env {
            put("env", V::String(v.to_lowercase()));
        }
        if let Some(v) = &self.variant {
            put("variant", V::String(v.to_lowercase()));
        }
        if let Some(v) = self.seed {
            let seed = i64::try_from(v).map_err(|_| HarnessError::Config("seed too large".into()))?;
            put("seed", V::Integer(seed));
        }
        if let Some(v) = &self.output_dir {
            put("output_dir", V::String(v.display().to_string()));
        }
        if let Some(v) = &self.env_config {
            put("env_config", V::String(v.display().to_string()));
        }
        for (key, v) in [
            ("total_env_steps", self.total_env_steps),
            ("warmup_random_steps", self.warmup_random_steps),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("max_episode_steps", self.max_episode_steps),
            ("checkpoint_every", self.checkpoint_every),
        ] {
            if let Some(v) = v {
                put(key, V::Integer(v));
            }
        }
        for (key, v) in [
            ("td3.gamma", self.gamma),
            ("td3.actor_lr", self.actor_lr),
            ("td3.critic_lr", self.critic_lr),
            ("td3.tau", self.tau),
            ("relabel.prob", self.relabel_prob),
        ] {
            if let Some(v) = v {
                put(key, V::Float(v));
            }
        }
        if let Some(h) = &self.hidden {
            put("td3.hidden", V::Array(h.iter().map(|x| V::Integer(*x)).collect()));
        }
        if self.strict_relabel {
            put("relabel.strict", V::Boolean(true));
        }
        for s in &self.sets {
            let (k, raw) = s
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
            let parsed: toml::Table = toml::from_str(&format!("v = {raw}"))
                .unwrap_or_else(|_| toml::Table::from_iter([("v".to_string(), V::String(raw.to_string()))]));
            put(k.trim(), parsed["v"].clone());
        }
        let explicit_dir = o.contains_key("output_dir") || file.contains_key("output_dir");
        let mut cfg = RunConfig::resolve(&file, &o)?;
        if let (Some(mode), false) = (ablation, explicit_dir) {
            cfg.output_dir = Path::new("runs").join(format!("{}-{}-{}-{}", cfg.env, cfg.variant, mode.as_str(), cfg.seed));
        }
        Ok(cfg)
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) {
    match key.split_once('.') {
        None => {
            table.insert(key.to_string(), value);
        }
        Some((head, rest)) => {
            let inner = table
                .entry(head.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            if !inner.is_table() {
                *inner = toml::Value::Table(toml::Table::new());
            }
            set_dotted(inner.as_table_mut().expect("just made a table"), rest, value);
        }
    }
}
