//! The three benchmark environments and their bundled configuration files.

pub mod cartpole;
pub mod dubins;
pub mod geometry;
pub mod pointmaze;

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::EnvError;
use crate::goal_mdp::{EnvId, Goal, GoalSpec};
use crate::planner::GoalGraph;

pub use cartpole::{cartpole_step, CartpoleParams, CartpoleState};
pub use dubins::{dubins_step, DubinsParams, DubinsState};
pub use geometry::MazeGeometry;
pub use pointmaze::{pointmaze_step, PointMazeParams, PointMazeState};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnvState {
    Dubins(DubinsState),
    Cartpole(CartpoleState),
    PointMaze(PointMazeState),
}

impl EnvState {
    pub fn env_id(&self) -> EnvId {
        match self {
            EnvState::Dubins(_) => EnvId::Dubins,
            EnvState::Cartpole(_) => EnvId::Cartpole,
            EnvState::PointMaze(_) => EnvId::PointMaze,
        }
    }

    /// The agent-visible part of the state.
    pub fn observation(&self) -> Vec<f64> {
        match self {
            EnvState::Dubins(s) => s.observation().to_vec(),
            EnvState::Cartpole(s) => s.observation().to_vec(),
            EnvState::PointMaze(s) => s.observation().to_vec(),
        }
    }

    /// Goal-space projection: `(x, y)` in the mazes, absolute cart position
    /// for cartpole (observations only ever see it relative to a goal).
    pub fn achieved_goal(&self) -> Goal {
        match self {
            EnvState::Dubins(s) => Goal::xy(s.x, s.y),
            EnvState::Cartpole(s) => Goal::scalar(s.x),
            EnvState::PointMaze(s) => Goal::xy(s.x, s.y),
        }
    }

    pub fn is_finite(&self) -> bool {
        let mut all = self.observation();
        all.extend_from_slice(self.achieved_goal().as_slice());
        all.iter().all(|v| v.is_finite())
    }
}

pub fn achieved_goal(state: &EnvState) -> Goal {
    state.achieved_goal()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalConfig {
    pub threshold: f64,
    /// Training goal range (cartpole only).
    #[serde(default)]
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeConfig {
    pub cell_size: f64,
    pub rows: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub start: Vec<f64>,
    pub goals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Physics {
    Dubins(DubinsParams),
    Cartpole(CartpoleParams),
    PointMaze(PointMazeParams),
}

/// On-disk environment description (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfigFile {
    pub version: u32,
    pub env: EnvId,
    /// Graph file, relative to the config file.
    pub graph: String,
    pub goal: GoalConfig,
    #[serde(default)]
    pub maze: Option<MazeConfig>,
    pub physics: toml::Table,
    pub episode: EpisodeConfig,
    pub eval: EvalConfig,
}

/// A fully loaded and validated environment description.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub id: EnvId,
    pub goal_spec: GoalSpec,
    pub goal_range: Option<[f64; 2]>,
    pub geometry: Option<MazeGeometry>,
    pub physics: Physics,
    pub max_steps: usize,
    pub eval_start: EnvState,
    pub eval_goals: Vec<Goal>,
    pub graph: GoalGraph,
    /// SHA-256 over the config and graph file contents.
    pub content_hash: String,
}

impl EnvConfig {
    pub fn bundled(id: EnvId) -> Self {
        let (cfg, graph) = match id {
            EnvId::Dubins => (
                include_str!("../../assets/dubins_hallway.toml"),
                include_str!("../../assets/dubins_hallway.graph.toml"),
            ),
            EnvId::Cartpole => (
                include_str!("../../assets/gc_cartpole.toml"),
                include_str!("../../assets/gc_cartpole.graph.toml"),
            ),
            EnvId::PointMaze => (
                include_str!("../../assets/pointmaze_serp3.toml"),
                include_str!("../../assets/pointmaze_serp3.graph.toml"),
            ),
        };
        Self::from_texts(cfg, graph).expect("bundled environment files are valid")
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::Config(format!("{}: {e}", path.display())))?;
        let file: EnvConfigFile =
            toml::from_str(&text).map_err(|e| EnvError::Config(format!("{}: {e}", path.display())))?;
        let graph_path: PathBuf = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&file.graph);
        let graph_text = std::fs::read_to_string(&graph_path)
            .map_err(|e| EnvError::Config(format!("{}: {e}", graph_path.display())))?;
        Self::from_texts(&text, &graph_text)
    }

    pub fn from_texts(config_text: &str, graph_text: &str) -> Result<Self, EnvError> {
        let file: EnvConfigFile =
            toml::from_str(config_text).map_err(|e| EnvError::Config(e.to_string()))?;
        if file.version != CONFIG_VERSION {
            return Err(EnvError::Config(format!(
                "unsupported config version {}",
                file.version
            )));
        }
        let id = file.env;
        let physics_value = toml::Value::Table(file.physics.clone());
        let physics_err = |e: toml::de::Error| EnvError::Config(format!("physics: {e}"));
        let physics = match id {
            EnvId::Dubins => Physics::Dubins(physics_value.try_into().map_err(physics_err)?),
            EnvId::Cartpole => Physics::Cartpole(physics_value.try_into().map_err(physics_err)?),
            EnvId::PointMaze => Physics::PointMaze(physics_value.try_into().map_err(physics_err)?),
        };
        let geometry = match (&file.maze, id) {
            (Some(m), EnvId::Dubins | EnvId::PointMaze) => Some(MazeGeometry::from_rows(&m.rows, m.cell_size)?),
            (None, EnvId::Cartpole) => None,
            (Some(_), EnvId::Cartpole) => {
                return Err(EnvError::Config("cartpole takes no maze".into()))
            }
            (None, _) => return Err(EnvError::Config(format!("{id} needs a [maze] table"))),
        };
        let theta_limit = match physics {
            Physics::Cartpole(p) => p.theta_limit,
            _ => f64::INFINITY,
        };
        let goal_spec = GoalSpec {
            env: id,
            threshold: file.goal.threshold,
            theta_limit,
        };
        if !(goal_spec.threshold > 0.0) {
            return Err(EnvError::Config("goal threshold must be positive".into()));
        }
        let goal_dim = id.goal_dim();
        let eval_goals = file
            .eval
            .goals
            .iter()
            .map(|g| {
                if g.len() != goal_dim {
                    return Err(EnvError::Config(format!("eval goal {g:?} has wrong dimension")));
                }
                Ok(Goal::new(g))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if eval_goals.is_empty() {
            return Err(EnvError::Config("at least one eval goal is required".into()));
        }
        let eval_start = state_from_vec(id, &file.eval.start)?;
        if let Some(g) = &geometry {
            let pos = eval_start.achieved_goal();
            if !g.is_free(pos.as_slice()[0], pos.as_slice()[1]) {
                return Err(EnvError::Geometry("eval start is inside a wall".into()));
            }
            for goal in &eval_goals {
                if !g.is_free(goal.as_slice()[0], goal.as_slice()[1]) {
                    return Err(EnvError::Geometry(format!("eval goal {goal:?} is inside a wall")));
                }
            }
        }
        if id == EnvId::Cartpole && file.goal.range.is_none() {
            return Err(EnvError::Config("cartpole needs goal.range".into()));
        }
        let graph = GoalGraph::from_toml(graph_text, goal_dim)?;
        graph.validate_against(geometry.as_ref())?;
        let mut hasher = Sha256::new();
        hasher.update(config_text.as_bytes());
        hasher.update(graph_text.as_bytes());
        Ok(Self {
            id,
            goal_spec,
            goal_range: file.goal.range,
            geometry,
            physics,
            max_steps: file.episode.max_steps,
            eval_start,
            eval_goals,
            graph,
            content_hash: hex::encode(hasher.finalize()),
        })
    }

    pub fn action_dim(&self) -> usize {
        self.id.action_dim()
    }

    pub fn state_obs_dim(&self) -> usize {
        self.id.state_obs_dim()
    }
}

fn state_from_vec(id: EnvId, v: &[f64]) -> Result<EnvState, EnvError> {
    let need = match id {
        EnvId::Dubins => 3,
        EnvId::Cartpole | EnvId::PointMaze => 4,
    };
    if v.len() != need {
        return Err(EnvError::Config(format!(
            "{id} eval start needs {need} values, got {}",
            v.len()
        )));
    }
    Ok(match id {
        EnvId::Dubins => EnvState::Dubins(DubinsState::new(v[0], v[1], v[2])),
        EnvId::Cartpole => EnvState::Cartpole(CartpoleState {
            x: v[0],
            x_dot: v[1],
            theta: v[2],
            theta_dot: v[3],
        }),
        EnvId::PointMaze => EnvState::PointMaze(PointMazeState {
            x: v[0],
            y: v[1],
            x_dot: v[2],
            y_dot: v[3],
        }),
    })
}

/// One running environment instance.
#[derive(Debug, Clone)]
pub struct Environment {
    config: std::sync::Arc<EnvConfig>,
    state: EnvState,
}

impl Environment {
    pub fn new(config: std::sync::Arc<EnvConfig>) -> Self {
        let state = config.eval_start;
        Self { config, state }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn set_state(&mut self, state: EnvState) {
        self.state = state;
    }

    /// Training resets sample start and goal; passing an evaluation goal uses
    /// the fixed evaluation start instead.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R, eval_goal: Option<Goal>) -> Result<(EnvState, Goal), EnvError> {
        let cfg = &*self.config;
        let (state, goal) = match eval_goal {
            Some(goal) => (cfg.eval_start, goal),
            None => match (&cfg.physics, &cfg.geometry) {
                (Physics::Dubins(_), Some(g)) => {
                    let (x, y) = g.sample_free(rng)?;
                    let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    let (gx, gy) = g.sample_free(rng)?;
                    (EnvState::Dubins(DubinsState::new(x, y, theta)), Goal::xy(gx, gy))
                }
                (Physics::PointMaze(_), Some(g)) => {
                    let (x, y) = g.sample_free(rng)?;
                    let (gx, gy) = g.sample_free(rng)?;
                    (
                        EnvState::PointMaze(PointMazeState {
                            x,
                            y,
                            x_dot: 0.0,
                            y_dot: 0.0,
                        }),
                        Goal::xy(gx, gy),
                    )
                }
                (Physics::Cartpole(p), _) => {
                    let n = p.reset_noise;
                    let mut noise = || if n > 0.0 { rng.random_range(-n..=n) } else { 0.0 };
                    let s = CartpoleState {
                        x: 0.0,
                        x_dot: noise(),
                        theta: noise(),
                        theta_dot: noise(),
                    };
                    let [lo, hi] = cfg.goal_range.expect("validated at load");
                    (EnvState::Cartpole(s), Goal::scalar(rng.random_range(lo..=hi)))
                }
                _ => return Err(EnvError::Geometry("maze environment without geometry".into())),
            },
        };
        self.state = state;
        Ok((state, goal))
    }

    /// Applies one action (each component clamped to [-1, 1]).
    pub fn step(&mut self, action: &[f64]) -> EnvState {
        let cfg = &*self.config;
        let a0 = action.first().copied().unwrap_or(0.0);
        self.state = match (&self.state, &cfg.physics) {
            (EnvState::Dubins(s), Physics::Dubins(p)) => {
                EnvState::Dubins(dubins_step(s, a0, p, cfg.geometry.as_ref().expect("maze env")))
            }
            (EnvState::Cartpole(s), Physics::Cartpole(p)) => EnvState::Cartpole(cartpole_step(s, a0, p)),
            (EnvState::PointMaze(s), Physics::PointMaze(p)) => {
                let a1 = action.get(1).copied().unwrap_or(0.0);
                EnvState::PointMaze(pointmaze_step(s, [a0, a1], p, cfg.geometry.as_ref().expect("maze env")))
            }
            _ => unreachable!("state and physics always match the configured environment"),
        };
        self.state
    }
}
