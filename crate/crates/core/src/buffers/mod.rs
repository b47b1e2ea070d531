//! Interaction replay, per-task expert buffers and batch sampling.

mod expert;
mod replay;
mod sampling;

pub use expert::ExpertBuffer;
pub use replay::ReplayBuffer;
pub use sampling::{sample_discriminator_batch, sample_policy_batch, ExpertMix};

use crate::ndgrad::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    pub terminal: bool,
}

/// Row-stacked transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub s: Matrix,
    pub a: Matrix,
    pub s_next: Matrix,
    pub terminal: Vec<bool>,
    /// Rows drawn from an expert buffer.
    pub from_expert: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }

    pub fn from_rows(rows: &[(&Transition, bool)], obs_dim: usize, act_dim: usize) -> Self {
        let n = rows.len();
        let mut s = Vec::with_capacity(n * obs_dim);
        let mut a = Vec::with_capacity(n * act_dim);
        let mut s_next = Vec::with_capacity(n * obs_dim);
        for (t, _) in rows {
            s.extend_from_slice(&t.s);
            a.extend_from_slice(&t.a);
            s_next.extend_from_slice(&t.s_next);
        }
        Self {
            s: Matrix::from_vec(n, obs_dim, s),
            a: Matrix::from_vec(n, act_dim, a),
            s_next: Matrix::from_vec(n, obs_dim, s_next),
            terminal: rows.iter().map(|(t, _)| t.terminal).collect(),
            from_expert: rows.iter().map(|&(_, e)| e).collect(),
        }
    }
}
