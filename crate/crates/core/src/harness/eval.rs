//! Deterministic evaluation from the fixed start.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::ci95;
use super::HarnessError;
use crate::env::{EnvConfig, EnvState, Environment};
use crate::goal_mdp::{build_observation, goal_reached, AgentVariant, Goal, GoalState};
use crate::planner::Planner;
use crate::td3::Td3Agent;

/// One evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub env_step: usize,
    pub mean_success: f64,
    pub success_ci95: f64,
    /// Over successful episodes only.
    pub mean_time_to_goal: Option<f64>,
    pub time_ci95: Option<f64>,
    /// Success rate per evaluation goal, in config order.
    pub per_goal_success: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub goal: Vec<f64>,
    pub success: bool,
    pub time_to_goal: Option<usize>,
    /// Achieved goal at every visited state, start included.
    pub positions: Vec<Vec<f64>>,
    /// `min(Q1, Q2)(s_t, π(s_t))` at every decision.
    pub values: Vec<f64>,
    /// Behavioural goal at every decision.
    pub behavioural_goals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub row: MetricRow,
    pub episodes: Vec<EpisodeRecord>,
}

/// Goals at the start of an episode (Alg. 1).
pub(crate) fn initial_goals(
    variant: AgentVariant,
    planner: &Planner,
    s: &EnvState,
    env_goal: &Goal,
) -> Result<GoalState, HarnessError> {
    if variant == AgentVariant::FinalOnly {
        return Ok(GoalState::single(*env_goal));
    }
    let path = planner.path(&s.achieved_goal(), env_goal)?;
    Ok(goals_from_path(variant, &path, env_goal))
}

/// Re-plan from `s_next` after the behavioural goal was reached.
pub(crate) fn replan(
    variant: AgentVariant,
    planner: &Planner,
    s_next: &EnvState,
    env_goal: &Goal,
    goals: &GoalState,
) -> Result<GoalState, HarnessError> {
    if variant == AgentVariant::FinalOnly {
        return Ok(*goals);
    }
    let path = planner.path(&s_next.achieved_goal(), env_goal)?;
    Ok(goals_from_path(variant, &path, env_goal))
}

fn goals_from_path(variant: AgentVariant, path: &[Goal], env_goal: &Goal) -> GoalState {
    let bg = path[0];
    match variant {
        AgentVariant::TwoGoal => GoalState::pair(bg, path.get(1).copied().unwrap_or(bg)),
        AgentVariant::Gseq | AgentVariant::SeqMyopic => GoalState::pair(bg, *env_goal),
        AgentVariant::FinalOnly => GoalState::single(*env_goal),
    }
}

/// Whether an episode is over after reaching `s_next`: the maze episode goal
/// is reached, or the pole has fallen.
pub(crate) fn episode_over(cfg: &EnvConfig, s_next: &EnvState, env_goal: &Goal) -> bool {
    match s_next {
        EnvState::Cartpole(s) => s.theta.abs() > cfg.goal_spec.theta_limit,
        _ => goal_reached(&cfg.goal_spec, &s_next.achieved_goal(), env_goal),
    }
}

/// Runs `episodes` greedy episodes, cycling through the evaluation goals.
/// Neither the agent nor any buffer is touched.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<R: Rng + ?Sized>(
    agent: &Td3Agent,
    env_cfg: &Arc<EnvConfig>,
    planner: &Planner,
    variant: AgentVariant,
    episodes: usize,
    max_steps: usize,
    env_step: usize,
    record_traces: bool,
    rng: &mut R,
) -> Result<EvalReport, HarnessError> {
    let spec = env_cfg.goal_spec;
    let goals_list = &env_cfg.eval_goals;
    let mut env = Environment::new(env_cfg.clone());
    let mut records = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let env_goal = goals_list[ep % goals_list.len()];
        let (mut s, _) = env.reset(rng, Some(env_goal))?;
        let mut goals = initial_goals(variant, planner, &s, &env_goal)?;
        let mut rec = EpisodeRecord {
            goal: env_goal.as_slice().to_vec(),
            success: false,
            time_to_goal: None,
            positions: vec![s.achieved_goal().as_slice().to_vec()],
            values: Vec::new(),
            behavioural_goals: Vec::new(),
        };
        let mut first_in_band = None;
        for t in 0..max_steps {
            let obs = build_observation(variant, &s, &goals);
            if record_traces {
                rec.values.push(agent.value(&obs)?);
                rec.behavioural_goals.push(goals.bg.as_slice().to_vec());
            }
            let a = agent.select_action(&obs, false, rng)?;
            let s_next = env.step(&a);
            if !s_next.is_finite() {
                return Err(HarnessError::Numeric("non-finite state during evaluation".into()));
            }
            if record_traces {
                rec.positions.push(s_next.achieved_goal().as_slice().to_vec());
            }
            let at_goal = goal_reached(&spec, &s_next.achieved_goal(), &env_goal);
            if at_goal && first_in_band.is_none() {
                first_in_band = Some(t + 1);
            }
            if episode_over(env_cfg, &s_next, &env_goal) {
                // a fallen pole is a failure
                if !matches!(s_next, EnvState::Cartpole(_)) {
                    rec.success = true;
                    rec.time_to_goal = Some(t + 1);
                }
                break;
            }
            if goal_reached(&spec, &s_next.achieved_goal(), &goals.bg) {
                goals = replan(variant, planner, &s_next, &env_goal, &goals)?;
            }
            s = s_next;
            if let EnvState::Cartpole(_) = s {
                if t + 1 == max_steps && at_goal {
                    rec.success = true;
                    rec.time_to_goal = first_in_band;
                }
            }
        }
        records.push(rec);
    }
    Ok(EvalReport {
        row: summarize(env_step, goals_list.len(), &records),
        episodes: records,
    })
}

pub(crate) fn summarize(env_step: usize, n_goals: usize, records: &[EpisodeRecord]) -> MetricRow {
    let succ: Vec<f64> = records.iter().map(|r| if r.success { 1.0 } else { 0.0 }).collect();
    let (mean_success, success_ci95) = ci95(&succ);
    let times: Vec<f64> = records.iter().filter_map(|r| r.time_to_goal.map(|t| t as f64)).collect();
    let (mean_time_to_goal, time_ci95) = if times.is_empty() {
        (None, None)
    } else {
        let (m, h) = ci95(&times);
        (Some(m), Some(h))
    };
    let per_goal_success = (0..n_goals)
        .map(|g| {
            let mine: Vec<f64> = succ.iter().skip(g).step_by(n_goals).copied().collect();
            if mine.is_empty() {
                0.0
            } else {
                mine.iter().sum::<f64>() / mine.len() as f64
            }
        })
        .collect();
    MetricRow {
        env_step,
        mean_success,
        success_ci95,
        mean_time_to_goal,
        time_ci95,
        per_goal_success,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goal_mdp::EnvId;
    use crate::harness::{substream, Stream};
    use crate::nn::MlpParams;
    use crate::td3::Td3Config;

    fn rec(success: bool, t: Option<usize>) -> EpisodeRecord {
        EpisodeRecord {
            goal: vec![0.0],
            success,
            time_to_goal: t,
            positions: vec![],
            values: vec![],
            behavioural_goals: vec![],
        }
    }

    #[test]
    fn success_vector_mean() {
        let r: Vec<_> = [true, true, true, true, false]
            .iter()
            .map(|s| rec(*s, s.then_some(10)))
            .collect();
        let row = summarize(0, 5, &r);
        assert!((row.mean_success - 0.8).abs() < 1e-12);
        assert_eq!(row.per_goal_success, vec![1.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(row.mean_time_to_goal, Some(10.0));
        let none = summarize(0, 1, &[rec(false, None)]);
        assert_eq!(none.mean_time_to_goal, None);
        assert_eq!(none.time_ci95, None);
    }

    fn zero_agent(env: EnvId, variant: AgentVariant) -> Td3Agent {
        let obs_dim = variant.obs_dim(env.state_obs_dim(), env.goal_dim());
        let cfg = Td3Config {
            hidden: vec![8],
            ..Td3Config::default()
        };
        let mut a = Td3Agent::new(obs_dim, env.action_dim(), cfg, &mut substream(0, Stream::Init)).unwrap();
        a.actor = MlpParams::zeros(&a.actor.layer_sizes).unwrap();
        a
    }

    #[test]
    fn untrained_agents_fail_everywhere() {
        for env in [EnvId::Dubins, EnvId::Cartpole] {
            let cfg = Arc::new(EnvConfig::bundled(env));
            let planner = Planner::new(cfg.graph.clone(), cfg.goal_spec).unwrap();
            for variant in AgentVariant::ALL {
                let agent = zero_agent(env, variant);
                let n = cfg.eval_goals.len();
                let report = evaluate(&agent, &cfg, &planner, variant, n, cfg.max_steps, 0, true, &mut substream(0, Stream::Eval))
                    .unwrap();
                assert_eq!(report.row.mean_success, 0.0, "{env} {variant}");
                assert!(report.row.per_goal_success.iter().all(|s| *s == 0.0));
                assert!(!report.episodes[0].values.is_empty());
            }
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let cfg = Arc::new(EnvConfig::bundled(EnvId::PointMaze));
        let planner = Planner::new(cfg.graph.clone(), cfg.goal_spec).unwrap();
        let obs_dim = AgentVariant::Gseq.obs_dim(4, 2);
        let agent = Td3Agent::new(obs_dim, 2, Td3Config { hidden: vec![8], ..Td3Config::default() }, &mut substream(3, Stream::Init)).unwrap();
        let run = |seed| evaluate(&agent, &cfg, &planner, AgentVariant::Gseq, 2, 50, 0, true, &mut substream(seed, Stream::Eval)).unwrap();
        assert_eq!(run(1), run(2));
    }
}
