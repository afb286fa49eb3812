//! Goal conditionings for the four agents: observation layout, goal switching,
//! rewards and terminal predicates.
//!
//! Every agent carries a [`GoalState`] `(bg, fg)`. Single-goal agents keep
//! `bg == fg`: the final-goal agent conditions on the episode goal, the myopic
//! agent on the current planner waypoint. The two-goal conditionings observe
//! both and switch goals with
//!
//! - `Gseq`:    `bg' = next(s', fg)` if `s'` reaches `bg`, else `bg`
//! - `TwoGoal`: `bg' = fg`           if `s'` reaches `bg`, else `bg`
//!
//! The reward is always `1[s' reaches bg]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::EnvState;
use crate::error::PlannerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Dubins,
    Cartpole,
    #[serde(alias = "serp3")]
    PointMaze,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Dubins, EnvId::Cartpole, EnvId::PointMaze];

    pub fn goal_dim(self) -> usize {
        match self {
            EnvId::Cartpole => 1,
            EnvId::Dubins | EnvId::PointMaze => 2,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvId::PointMaze => 2,
            EnvId::Dubins | EnvId::Cartpole => 1,
        }
    }

    /// Length of [`EnvState::observation`].
    pub fn state_obs_dim(self) -> usize {
        match self {
            EnvId::Cartpole => 3,
            EnvId::Dubins | EnvId::PointMaze => 4,
        }
    }

    /// Discount factor used for this environment.
    pub fn default_gamma(self) -> f64 {
        match self {
            EnvId::Dubins => 0.95,
            EnvId::Cartpole | EnvId::PointMaze => 0.99,
        }
    }

    pub fn default_actor_lr(self) -> f64 {
        match self {
            EnvId::Dubins => 1e-3,
            EnvId::Cartpole | EnvId::PointMaze => 1e-4,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvId::Dubins => "dubins",
            EnvId::Cartpole => "cartpole",
            EnvId::PointMaze => "pointmaze",
        })
    }
}

impl FromStr for EnvId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dubins" | "dubins-hallway" => Ok(EnvId::Dubins),
            "cartpole" | "gc-cartpole" => Ok(EnvId::Cartpole),
            "pointmaze" | "serp3" | "pointmaze-serp3" => Ok(EnvId::PointMaze),
            other => Err(format!("unknown environment '{other}'")),
        }
    }
}

/// A point in goal space: `(x, y)` in the mazes, a cart position for cartpole.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    coords: [f64; 2],
    dim: usize,
}

impl Goal {
    /// Panics unless `coords` has one or two entries.
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            (1..=2).contains(&coords.len()),
            "goals are 1D or 2D, got {} coordinates",
            coords.len()
        );
        let mut c = [0.0; 2];
        c[..coords.len()].copy_from_slice(coords);
        Self {
            coords: c,
            dim: coords.len(),
        }
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self::new(&[x, y])
    }

    pub fn scalar(x: f64) -> Self {
        Self::new(&[x])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn distance(&self, other: &Goal) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        match self.dim {
            1 => (self.coords[0] - other.coords[0]).abs(),
            _ => (self.coords[0] - other.coords[0]).hypot(self.coords[1] - other.coords[1]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Goal{:?}", self.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentVariant {
    /// Conditioned on the episode goal only.
    FinalOnly,
    /// Conditioned on the current planner waypoint only.
    SeqMyopic,
    /// Conditioned on the current waypoint and the episode goal.
    Gseq,
    /// Conditioned on the next two waypoints.
    TwoGoal,
}

impl AgentVariant {
    pub const ALL: [AgentVariant; 4] = [
        AgentVariant::FinalOnly,
        AgentVariant::SeqMyopic,
        AgentVariant::Gseq,
        AgentVariant::TwoGoal,
    ];

    pub fn observes_two_goals(self) -> bool {
        matches!(self, AgentVariant::Gseq | AgentVariant::TwoGoal)
    }

    pub fn uses_planner(self) -> bool {
        !matches!(self, AgentVariant::FinalOnly)
    }

    pub fn obs_dim(self, state_dim: usize, goal_dim: usize) -> usize {
        if self.observes_two_goals() {
            state_dim + 2 * goal_dim
        } else {
            state_dim + goal_dim
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentVariant::FinalOnly => "final-only",
            AgentVariant::SeqMyopic => "seq-myopic",
            AgentVariant::Gseq => "gseq",
            AgentVariant::TwoGoal => "two-goal",
        }
    }
}

impl fmt::Display for AgentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "final-only" | "finalonly" | "td3-her" => Ok(AgentVariant::FinalOnly),
            "seq-myopic" | "seqmyopic" | "td3-her-seq" | "myopic" => Ok(AgentVariant::SeqMyopic),
            "gseq" | "m-gseq" => Ok(AgentVariant::Gseq),
            "two-goal" | "twogoal" | "2g" | "m-2g" => Ok(AgentVariant::TwoGoal),
            other => Err(format!("unknown agent variant '{other}'")),
        }
    }
}

/// The goals an agent is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalState {
    pub bg: Goal,
    pub fg: Goal,
}

impl GoalState {
    pub fn pair(bg: Goal, fg: Goal) -> Self {
        Self { bg, fg }
    }

    /// Single-goal agents carry one goal in both slots.
    pub fn single(goal: Goal) -> Self {
        Self { bg: goal, fg: goal }
    }
}

/// Per-environment goal-reaching and termination parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub env: EnvId,
    pub threshold: f64,
    /// Cartpole pole-angle limit in radians; unused by the mazes.
    pub theta_limit: f64,
}

impl GoalSpec {
    pub fn default_for(env: EnvId) -> Self {
        match env {
            EnvId::Dubins => Self {
                env,
                threshold: 0.1,
                theta_limit: f64::INFINITY,
            },
            EnvId::Cartpole => Self {
                env,
                threshold: 0.05,
                theta_limit: 0.12,
            },
            EnvId::PointMaze => Self {
                env,
                threshold: 0.45,
                theta_limit: f64::INFINITY,
            },
        }
    }
}

/// Maze goal balls are closed (`≤ threshold`); the cartpole band is open
/// (`|x − x_goal| < threshold`).
pub fn goal_reached(spec: &GoalSpec, achieved: &Goal, target: &Goal) -> bool {
    let d = achieved.distance(target);
    match spec.env {
        EnvId::Cartpole => d < spec.threshold,
        EnvId::Dubins | EnvId::PointMaze => d <= spec.threshold,
    }
}

pub fn state_reaches(spec: &GoalSpec, state: &EnvState, target: &Goal) -> bool {
    goal_reached(spec, &state.achieved_goal(), target)
}

/// Anything that can answer the planner's `next(s, fg)` query.
pub trait NextGoal {
    /// `from` is the goal-space projection of the current state.
    fn next_goal(&self, from: &Goal, fg: &Goal) -> Result<Goal, PlannerError>;
}

pub fn step_goal_gseq<P: NextGoal + ?Sized>(
    spec: &GoalSpec,
    s_next: &EnvState,
    bg: &Goal,
    fg: &Goal,
    planner: &P,
) -> Result<Goal, PlannerError> {
    if state_reaches(spec, s_next, bg) {
        planner.next_goal(&s_next.achieved_goal(), fg)
    } else {
        Ok(*bg)
    }
}

pub fn step_goal_2g(spec: &GoalSpec, s_next: &EnvState, bg: &Goal, fg: &Goal) -> Goal {
    if state_reaches(spec, s_next, bg) {
        *fg
    } else {
        *bg
    }
}

/// Goal dynamics of any variant; single-goal agents keep their goal.
pub fn step_goal<P: NextGoal + ?Sized>(
    variant: AgentVariant,
    spec: &GoalSpec,
    s_next: &EnvState,
    goals: &GoalState,
    planner: &P,
) -> Result<Goal, PlannerError> {
    match variant {
        AgentVariant::Gseq => step_goal_gseq(spec, s_next, &goals.bg, &goals.fg, planner),
        AgentVariant::TwoGoal => Ok(step_goal_2g(spec, s_next, &goals.bg, &goals.fg)),
        AgentVariant::FinalOnly | AgentVariant::SeqMyopic => Ok(goals.bg),
    }
}

pub fn reward(spec: &GoalSpec, s_next: &EnvState, bg: &Goal) -> f64 {
    if state_reaches(spec, s_next, bg) {
        1.0
    } else {
        0.0
    }
}

/// Cartpole ends only when the pole leaves `[−θ_limit, θ_limit]`. The mazes end
/// when the episode-ending goal is reached: `fg` for the final-goal and
/// two-goal conditionings, the conditioned waypoint for the myopic agent.
pub fn terminal(spec: &GoalSpec, s_next: &EnvState, goals: &GoalState, variant: AgentVariant) -> bool {
    match s_next {
        EnvState::Cartpole(s) => s.theta.abs() > spec.theta_limit,
        EnvState::Dubins(_) | EnvState::PointMaze(_) => {
            let goal = match variant {
                AgentVariant::SeqMyopic => &goals.bg,
                AgentVariant::FinalOnly | AgentVariant::Gseq | AgentVariant::TwoGoal => &goals.fg,
            };
            state_reaches(spec, s_next, goal)
        }
    }
}

/// Goal as the network sees it: absolute in the mazes, the residual
/// `x_goal − x` for cartpole.
pub fn goal_features(state: &EnvState, goal: &Goal) -> Vec<f64> {
    match state {
        EnvState::Cartpole(s) => vec![goal.as_slice()[0] - s.x],
        EnvState::Dubins(_) | EnvState::PointMaze(_) => goal.as_slice().to_vec(),
    }
}

/// `[s | bg | fg]` for the two-goal conditionings, `[s | bg]` otherwise.
pub fn build_observation(variant: AgentVariant, state: &EnvState, goals: &GoalState) -> Vec<f64> {
    let mut obs = state.observation();
    obs.extend(goal_features(state, &goals.bg));
    if variant.observes_two_goals() {
        obs.extend(goal_features(state, &goals.fg));
    }
    obs
}
