//! Independent centrally-assisted Q-learning on the mountain/valley
//! predator-prey grid.
//!
//! Decentralized recurrent Q-learners and an intrinsically rewarded central
//! joint critic take turns controlling episodes that land in one shared
//! replay buffer. Only the decentralized agents are used at test time.

// `!(x > y)` is used on purpose where NaN must fall on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod config;
pub mod env;
pub mod error;
pub mod experiment;
pub mod intrinsic;
pub mod learning;
pub mod nn;

pub use config::{Algorithm, BiasMode, Config, EnvConfig, ExplorationConfig, IntrinsicConfig, LearningConfig, RunConfig};
pub use env::{Action, GridState, GridWorld, JointAction, Observation, StateFeatures};
pub use error::{Error, Result};
pub use experiment::{EvalResult, MetricsRow};
pub use learning::{Controller, EpisodeRecord, Trainer};
