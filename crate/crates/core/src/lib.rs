//! Goal-conditioned TD3 with hindsight relabeling over planner-provided goal
//! sequences.

pub mod env;
pub mod error;
pub mod goal_mdp;
pub mod nn;
pub mod planner;
pub mod replay;
pub mod td3;
pub mod harness;
