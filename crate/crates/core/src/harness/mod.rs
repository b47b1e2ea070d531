//! Configuration, expert collection, training, evaluation, ablations and
//! the files they produce.

pub mod ablate;
pub mod collect;
pub mod config;
pub mod evaluate;
pub mod metrics;
pub mod plot;
pub mod six_state;
pub mod train;

pub use ablate::{ablate, AblationMatrix};
pub use collect::{collect_expert, collect_task, expert_path, CollectConfig};
pub use config::{Algorithm, RunConfig};
pub use evaluate::{
    evaluate, uniform_controller, Controller, EvalResult, PolicyController, ScriptedController,
    UniformController,
};
pub use metrics::{read_metrics, write_metrics, MetricsRecord};
pub use train::{
    load_experts, load_policy, train, train_observed, train_with_experts, TrainReport,
};
