//! Per-MAP placement agents: observations, actions, reward, clustering
//! targets, the actor-critic network and its PPO trainer.

pub mod action;
pub mod checkpoint;
pub mod env;
pub mod observation;
pub mod policy;
pub mod ppo;
pub mod reward;
pub mod targets;

pub use action::{apply_action, Action};
pub use env::{EnvConfig, EpisodeSpec, PlacementEnv, StepInfo};
pub use observation::{build_observation, Observation, ObservationShape};
pub use policy::{ActMode, Architecture, PolicyParameters};
pub use ppo::{train_ppo, CurveRow, Learner, PpoConfig, RegimeHook, TrainConfig, TrainerState};
pub use reward::{reward, RewardParams};
pub use targets::{kmeans, match_targets, target_locations};
