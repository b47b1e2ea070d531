pub mod adversary;
pub mod buffers;
pub mod cloning;
pub mod envs;
pub mod error;
pub mod harness;
pub mod intentions;
pub mod ndgrad;
pub mod scheduling;
pub mod tabular;

pub use error::{Error, Result};
