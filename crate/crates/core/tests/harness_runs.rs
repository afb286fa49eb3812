mod common;

use goalseq::goal_mdp::{state_reaches, AgentVariant, EnvId};
use goalseq::harness::{
    emit_plots, evaluate_run, read_metrics, run_ablation, run_training, AblationMode, HarnessError, RunConfig, Trainer,
};

use common::tiny_config;

#[test]
fn warmup_and_evaluation_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny_config(EnvId::Dubins, AgentVariant::Gseq, 3, dir.path());
    c.total_env_steps = 1_000;
    c.eval_every = 300;
    let mut t = Trainer::new(c).unwrap();
    let mut seen = Vec::new();
    let rows = t
        .train(&mut |ev| {
            seen.push(ev.report.row.env_step);
            Ok(())
        })
        .unwrap();
    assert_eq!(seen, vec![300, 600, 900]);
    assert_eq!(rows.len(), 1_000 / 300);
    assert_eq!(t.env_step(), 1_000);
    assert_eq!(t.policy_actions(), 1_000 - 400);
    assert_eq!(t.buffer().len(), 1_000);
    for (_, traj) in t.buffer().trajectories() {
        assert!(traj.len() <= 100);
        traj.validate().unwrap();
    }
}

#[test]
fn evaluation_leaves_agent_and_buffer_alone() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny_config(EnvId::PointMaze, AgentVariant::TwoGoal, 0, dir.path())).unwrap();
    t.train(&mut |_| Ok(())).unwrap();
    let before = (t.agent().to_checkpoint_string(), t.buffer().len(), t.relabel_stats());
    let a = t.evaluate_now(true).unwrap();
    let b = t.evaluate_now(false).unwrap();
    assert_eq!(a.row, b.row);
    assert_eq!(before, (t.agent().to_checkpoint_string(), t.buffer().len(), t.relabel_stats()));
}

#[test]
fn two_goal_replans_after_each_reach() {
    // Random warm-up only: reach events come from the exploration itself.
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny_config(EnvId::PointMaze, AgentVariant::TwoGoal, 8, dir.path());
    c.total_env_steps = 6_000;
    c.warmup_random_steps = 6_000;
    c.eval_every = 6_000;
    c.eval_episodes = 1;
    c.max_episode_steps = None;
    let mut t = Trainer::new(c).unwrap();
    t.train(&mut |_| Ok(())).unwrap();
    let spec = t.env_config().goal_spec;
    let mut checked = 0;
    for (_, traj) in t.buffer().trajectories() {
        let goal = traj.episode_goal.expect("trainer records the episode goal");
        for w in traj.transitions.windows(2) {
            if !state_reaches(&spec, &w[0].s_next, &w[0].bg) {
                assert_eq!((w[1].bg, w[1].fg), (w[0].bg, w[0].fg));
                continue;
            }
            let path = t.planner().path(&w[0].s_next.achieved_goal(), &goal).unwrap();
            let expect = (path[0], path.get(1).copied().unwrap_or(path[0]));
            assert_eq!((w[1].bg, w[1].fg), expect);
            checked += 1;
        }
    }
    assert!(checked > 20, "only {checked} reach events");
}

#[test]
fn ablations_freeze_their_goal() {
    for (mode, variant) in [
        (AblationMode::NoBgRelabel, AgentVariant::TwoGoal),
        (AblationMode::NoFgRelabel, AgentVariant::Gseq),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny_config(EnvId::Cartpole, variant, 1, dir.path());
        match mode {
            AblationMode::NoBgRelabel => c.relabel.no_bg = true,
            AblationMode::NoFgRelabel => c.relabel.no_fg = true,
        }
        let mut t = Trainer::new(c).unwrap();
        t.train(&mut |_| Ok(())).unwrap();
        let s = t.relabel_stats();
        assert!(s.samples > 0 && s.relabeled > 0);
        match mode {
            AblationMode::NoBgRelabel => {
                assert_eq!(s.bg_changed, 0);
                assert!(s.fg_changed > 0);
            }
            AblationMode::NoFgRelabel => {
                assert_eq!(s.fg_changed, 0);
                assert!(s.bg_changed > 0);
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let c = tiny_config(EnvId::Cartpole, AgentVariant::FinalOnly, 1, dir.path());
    let err = run_ablation(&c, AblationMode::NoBgRelabel).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn run_directory_contents_and_reevaluation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut c = tiny_config(EnvId::PointMaze, AgentVariant::Gseq, 4, &out);
    c.checkpoint_every = Some(400);
    let summary = run_training(&c).unwrap();
    for f in [
        "config.toml",
        "manifest.json",
        "metrics.csv",
        "diagnostics.csv",
        "timing.csv",
        "checkpoint.json",
        "checkpoint_400.json",
        "checkpoint_800.json",
        "trajectories.json",
        "trajectories.svg",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let m = read_metrics(&out.join("metrics.csv")).unwrap();
    assert_eq!(m.rows, summary.rows);
    assert_eq!(m.goal_count, summary.manifest.eval_goals.len());
    // the saved config reproduces the run's hash
    let back = RunConfig::load(&out.join("config.toml"), &toml::Table::new()).unwrap();
    assert_eq!(back, c);
    // re-evaluating the final checkpoint reproduces the last metrics row
    let mut rep = evaluate_run(&out, None, None).unwrap();
    rep.row.env_step = c.total_env_steps;
    assert_eq!(rep.row, *summary.rows.last().unwrap());
    let traces: Vec<goalseq::harness::EpisodeRecord> =
        serde_json::from_str(&std::fs::read_to_string(out.join("trajectories.json")).unwrap()).unwrap();
    assert_eq!(traces, rep.episodes);
    assert!(!rep.episodes[0].values.is_empty());
    let early = evaluate_run(&out, Some(&out.join("checkpoint_400.json")), Some(3)).unwrap();
    assert_eq!(early.episodes.len(), 3);
}

#[test]
fn cartpole_runs_have_no_maze_drawing() {
    let dir = tempfile::tempdir().unwrap();
    run_training(&tiny_config(EnvId::Cartpole, AgentVariant::TwoGoal, 0, dir.path())).unwrap();
    assert!(dir.path().join("trajectories.json").is_file());
    assert!(!dir.path().join("trajectories.svg").exists());
}

#[test]
fn plots_aggregate_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for seed in 0..2 {
        let d = dir.path().join(format!("s{seed}"));
        run_training(&tiny_config(EnvId::Dubins, AgentVariant::FinalOnly, seed, &d)).unwrap();
        runs.push(d);
    }
    let d = dir.path().join("abl");
    run_ablation(&tiny_config(EnvId::Dubins, AgentVariant::TwoGoal, 0, &d), AblationMode::NoBgRelabel).unwrap();
    runs.push(d);
    let out = dir.path().join("plots");
    let summary = emit_plots(&runs, &out).unwrap();
    assert_eq!(summary.groups.len(), 2);
    let fo = summary.groups.iter().find(|g| g.label == "final-only").unwrap();
    assert_eq!(fo.seeds, 2);
    assert_eq!(fo.steps, vec![400, 800, 1200]);
    assert!(fo.exact.iter().all(|e| *e));
    assert!(summary.groups.iter().any(|g| g.label == "two-goal (no-bg-relabel)"));
    for f in ["curves_dubins.csv", "success_dubins.svg", "time_dubins.svg"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let svg = std::fs::read_to_string(out.join("success_dubins.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("final-only"));
}

#[test]
fn config_errors_are_config_errors() {
    let t = toml::Table::new();
    let cases = [
        "variant = \"gseq\"",
        "env = \"dubins\"\nvariant = \"gseq\"\nbogus = 1",
        "env = \"dubins\"\nvariant = \"nope\"",
        "env = \"dubins\"\nvariant = \"gseq\"\n[td3]\ngamma = 1.5",
        "env = \"dubins\"\nvariant = \"seq-myopic\"\n[relabel]\nno_bg = true",
        "env = \"dubins\"\nvariant = \"gseq\"\neval_every = 0",
    ];
    for text in cases {
        let err = RunConfig::from_toml_str(text, &t).unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)), "{text}: {err}");
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn exploding_learning_rate_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny_config(EnvId::Cartpole, AgentVariant::Gseq, 0, dir.path());
    c.td3.critic_lr = 1e200;
    c.td3.actor_lr = 1e200;
    let err = run_training(&c).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}
