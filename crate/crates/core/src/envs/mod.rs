//! The six-state MDP and the 2-D block world with its tasks and experts.

pub mod block_world;
pub mod config;
pub mod expert;
pub mod six_state;
pub mod tasks;

pub use block_world::{success, BlockState, BlockWorld, StepOutcome, ACTION_DIM, OBS_DIM};
pub use config::{EnvConfig, Variant};
pub use expert::scripted_expert;
pub use tasks::{TaskId, TaskSet};

/// Consecutive steps a success predicate must hold to count in evaluation.
pub const SUCCESS_HOLD_STEPS: usize = 5;
