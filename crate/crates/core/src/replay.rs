//! Trajectory replay with hindsight relabeling of one or two goals.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::EnvState;
use crate::error::ReplayError;
use crate::goal_mdp::{build_observation, reward, step_goal, terminal, AgentVariant, Goal, GoalSpec, GoalState, NextGoal};

pub const DEFAULT_CAPACITY: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: EnvState,
    pub a: Vec<f64>,
    pub r: f64,
    pub bg: Goal,
    pub fg: Goal,
    pub s_next: EnvState,
    pub bg_next: Goal,
    pub term: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// The environment goal the episode was collected for, when known.
    #[serde(default)]
    pub episode_goal: Option<Goal>,
}

impl Trajectory {
    pub fn new(transitions: Vec<Transition>) -> Self {
        Self {
            transitions,
            episode_goal: None,
        }
    }

    pub fn with_episode_goal(mut self, goal: Goal) -> Self {
        self.episode_goal = Some(goal);
        self
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Index of the last transition.
    pub fn t_max(&self) -> usize {
        self.transitions.len() - 1
    }

    /// Goal achieved in the state reached by step `k`.
    pub fn achieved_goal(&self, k: usize) -> Goal {
        self.transitions[k].s_next.achieved_goal()
    }

    pub fn validate(&self) -> Result<(), ReplayError> {
        let bad = |m: String| Err(ReplayError::InconsistentTrajectory(m));
        let Some(first) = self.transitions.first() else {
            return bad("empty trajectory".into());
        };
        let env = first.s.env_id();
        let gdim = env.goal_dim();
        let adim = first.a.len();
        for (k, tr) in self.transitions.iter().enumerate() {
            if tr.s.env_id() != env || tr.s_next.env_id() != env {
                return bad(format!("step {k}: mixed environments"));
            }
            if !(tr.s.is_finite() && tr.s_next.is_finite()) {
                return bad(format!("step {k}: non-finite state"));
            }
            if tr.a.len() != adim || tr.a.iter().any(|v| !v.is_finite()) {
                return bad(format!("step {k}: bad action"));
            }
            if tr.r != 0.0 && tr.r != 1.0 {
                return bad(format!("step {k}: reward {} not in {{0, 1}}", tr.r));
            }
            for g in [&tr.bg, &tr.fg, &tr.bg_next] {
                if g.dim() != gdim || !g.is_finite() {
                    return bad(format!("step {k}: bad goal {g:?}"));
                }
            }
            if let Some(next) = self.transitions.get(k + 1) {
                if next.s != tr.s_next {
                    return bad(format!("step {k}: s_next does not match the following state"));
                }
            }
        }
        Ok(())
    }
}

/// Relabeling switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelabelConfig {
    pub prob: f64,
    /// Keep the stored behavioural goal (pair conditionings only).
    pub no_bg: bool,
    /// Keep the stored final goal (pair conditionings only).
    pub no_fg: bool,
    /// Draw `t < k1 < k2 < t_max` instead of `t ≤ k1 ≤ k2 ≤ t_max`.
    pub strict: bool,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        Self {
            prob: 0.8,
            no_bg: false,
            no_fg: false,
            strict: false,
        }
    }
}

/// What happened to one emitted sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub trajectory_id: u64,
    pub t: usize,
    pub t_max: usize,
    pub relabeled: bool,
    /// Index the behavioural goal was drawn from (single goal: the only index).
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub s_next: EnvState,
    pub bg: Goal,
    pub fg: Goal,
    pub bg_next: Goal,
    pub r: f64,
    pub term: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelabelStats {
    pub samples: u64,
    pub relabeled: u64,
    /// Samples whose emitted bg differs from the stored one because of relabeling.
    pub bg_changed: u64,
    pub fg_changed: u64,
    pub repair_failures: u64,
}

impl RelabelStats {
    pub fn add(&mut self, o: &RelabelStats) {
        self.samples += o.samples;
        self.relabeled += o.relabeled;
        self.bg_changed += o.bg_changed;
        self.fg_changed += o.fg_changed;
        self.repair_failures += o.repair_failures;
    }

    pub fn relabel_rate(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.relabeled as f64 / self.samples as f64
        }
    }
}

/// Row-major training batch.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub size: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub terms: Vec<f64>,
    pub records: Vec<SampleRecord>,
    pub stats: RelabelStats,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    trajectories: VecDeque<(u64, Trajectory)>,
    size: usize,
    next_id: u64,
    /// Cumulative transition counts, rebuilt lazily after a store.
    offsets: Vec<usize>,
    dirty: bool,
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            trajectories: VecDeque::new(),
            size: 0,
            next_id: 0,
            offsets: Vec::new(),
            dirty: false,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stored transitions.
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn num_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = (u64, &Trajectory)> {
        self.trajectories.iter().map(|(id, t)| (*id, t))
    }

    /// Appends a trajectory, evicting whole trajectories oldest-first to fit.
    pub fn store(&mut self, trajectory: Trajectory) -> Result<u64, ReplayError> {
        trajectory.validate()?;
        if trajectory.len() > self.capacity {
            return Err(ReplayError::InconsistentTrajectory(format!(
                "trajectory of {} transitions exceeds capacity {}",
                trajectory.len(),
                self.capacity
            )));
        }
        while self.size + trajectory.len() > self.capacity {
            let (_, old) = self.trajectories.pop_front().expect("size > 0 implies a trajectory");
            self.size -= old.len();
        }
        let id = self.next_id;
        self.next_id += 1;
        self.size += trajectory.len();
        self.trajectories.push_back((id, trajectory));
        self.dirty = true;
        Ok(id)
    }

    fn refresh_offsets(&mut self) {
        if !self.dirty {
            return;
        }
        self.offsets.clear();
        let mut acc = 0;
        for (_, t) in &self.trajectories {
            acc += t.len();
            self.offsets.push(acc);
        }
        self.dirty = false;
    }

    /// Uniform transition: (trajectory slot, step).
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let i = rng.random_range(0..self.size);
        let slot = self.offsets.partition_point(|&end| end <= i);
        let start = if slot == 0 { 0 } else { self.offsets[slot - 1] };
        (slot, i - start)
    }

    /// Draws `batch_size` transitions uniformly and relabels them; see
    /// [`relabel_transition`].
    pub fn sample_relabeled_batch<P: NextGoal + ?Sized, R: Rng + ?Sized>(
        &mut self,
        variant: AgentVariant,
        spec: &GoalSpec,
        planner: &P,
        batch_size: usize,
        cfg: &RelabelConfig,
        rng: &mut R,
    ) -> Result<Batch, ReplayError> {
        if self.is_empty() {
            return Err(ReplayError::Empty);
        }
        self.refresh_offsets();
        let mut batch = Batch {
            size: 0,
            ..Batch::default()
        };
        let max_failures = 10 * batch_size.max(1);
        let mut failures = 0usize;
        while batch.size < batch_size {
            let (slot, t) = self.draw(rng);
            let (id, traj) = &self.trajectories[slot];
            let Some(rec) = relabel_transition(traj, *id, t, variant, spec, planner, cfg, rng, &mut batch.stats) else {
                failures += 1;
                if failures >= max_failures {
                    return Err(ReplayError::RepairExhausted(failures));
                }
                continue;
            };
            let tr = &traj.transitions[t];
            let obs = build_observation(variant, &tr.s, &GoalState::pair(rec.bg, rec.fg));
            let next_obs = build_observation(variant, &rec.s_next, &GoalState::pair(rec.bg_next, rec.fg));
            if batch.size == 0 {
                batch.obs_dim = obs.len();
                batch.action_dim = tr.a.len();
            }
            batch.obs.extend(obs);
            batch.next_obs.extend(next_obs);
            batch.actions.extend_from_slice(&tr.a);
            batch.rewards.push(rec.r);
            batch.terms.push(if rec.term { 1.0 } else { 0.0 });
            batch.records.push(rec);
            batch.size += 1;
        }
        Ok(batch)
    }
}

/// Relabels transition `t` of `traj`.
///
/// With probability `cfg.prob`: pair conditionings draw `k2 ∈ [t, t_max]`,
/// `fg ← ag_k2`, then `k1 ∈ [t, k2]`, `bg ← ag_k1`; single-goal conditionings
/// draw one `k ∈ [t, t_max]` and set both slots to `ag_k`. In every branch
/// `bg_next`, the reward and the terminal flag are then recomputed from
/// `(s_next, bg, fg)`. Returns `None` when the planner cannot repair `bg_next`.
#[allow(clippy::too_many_arguments)]
pub fn relabel_transition<P: NextGoal + ?Sized, R: Rng + ?Sized>(
    traj: &Trajectory,
    trajectory_id: u64,
    t: usize,
    variant: AgentVariant,
    spec: &GoalSpec,
    planner: &P,
    cfg: &RelabelConfig,
    rng: &mut R,
    stats: &mut RelabelStats,
) -> Option<SampleRecord> {
    let tr = &traj.transitions[t];
    let t_max = traj.t_max();
    let mut bg = tr.bg;
    let mut fg = tr.fg;
    let mut k1 = None;
    let mut k2 = None;
    let mut relabeled = false;
    if rng.random::<f64>() < cfg.prob {
        if variant.observes_two_goals() {
            let (lo2, hi2) = if cfg.strict { (t + 2, t_max.saturating_sub(1)) } else { (t, t_max) };
            if lo2 <= hi2 {
                let k_2 = rng.random_range(lo2..=hi2);
                let (lo1, hi1) = if cfg.strict { (t + 1, k_2 - 1) } else { (t, k_2) };
                let k_1 = rng.random_range(lo1..=hi1);
                if !cfg.no_fg {
                    fg = traj.achieved_goal(k_2);
                }
                if !cfg.no_bg {
                    bg = traj.achieved_goal(k_1);
                }
                k1 = Some(k_1);
                k2 = Some(k_2);
                relabeled = true;
            }
        } else {
            let (lo, hi) = if cfg.strict { (t + 1, t_max.saturating_sub(1)) } else { (t, t_max) };
            if lo <= hi {
                let k = rng.random_range(lo..=hi);
                let g = traj.achieved_goal(k);
                bg = g;
                fg = g;
                k1 = Some(k);
                relabeled = true;
            }
        }
    }
    let goals = GoalState::pair(bg, fg);
    let bg_next = match step_goal(variant, spec, &tr.s_next, &goals, planner) {
        Ok(g) => g,
        Err(_) => {
            stats.repair_failures += 1;
            return None;
        }
    };
    let r = reward(spec, &tr.s_next, &bg);
    let term = terminal(spec, &tr.s_next, &goals, variant);
    stats.samples += 1;
    if relabeled {
        stats.relabeled += 1;
    }
    if bg != tr.bg {
        stats.bg_changed += 1;
    }
    if fg != tr.fg {
        stats.fg_changed += 1;
    }
    Some(SampleRecord {
        trajectory_id,
        t,
        t_max,
        relabeled,
        k1,
        k2,
        s_next: tr.s_next,
        bg,
        fg,
        bg_next,
        r,
        term,
    })
}
