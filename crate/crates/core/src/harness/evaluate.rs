//! Success-rate evaluation with a hold requirement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::{
    scripted_expert, success, BlockState, BlockWorld, EnvConfig, TaskId, ACTION_DIM,
};
use crate::error::Result;
use crate::intentions::IntentionPolicy;
use crate::ndgrad::Matrix;

/// Anything that picks an action for a task from the current state.
pub trait Controller {
    fn act(&mut self, task: TaskId, state: &BlockState, obs: &[f64]) -> Result<Vec<f64>>;
}

/// Mean action of a trained head, with the head looked up by task.
pub struct PolicyController<'a> {
    pub policy: &'a IntentionPolicy,
    pub tasks: &'a crate::envs::TaskSet,
}

impl Controller for PolicyController<'_> {
    fn act(&mut self, task: TaskId, _state: &BlockState, obs: &[f64]) -> Result<Vec<f64>> {
        let head = self.tasks.index_of(task).ok_or_else(|| {
            crate::error::Error::Config(format!("policy has no head for `{task}`"))
        })?;
        Ok(self
            .policy
            .mean_actions(head, &Matrix::row(obs))?
            .into_vec())
    }
}

pub struct ScriptedController<'a> {
    pub env: &'a EnvConfig,
}

impl Controller for ScriptedController<'_> {
    fn act(&mut self, task: TaskId, state: &BlockState, _obs: &[f64]) -> Result<Vec<f64>> {
        Ok(scripted_expert(self.env, task, state).to_vec())
    }
}

pub struct UniformController {
    pub rng: ChaCha8Rng,
}

impl Controller for UniformController {
    fn act(&mut self, _task: TaskId, _state: &BlockState, _obs: &[f64]) -> Result<Vec<f64>> {
        Ok((0..ACTION_DIM)
            .map(|_| self.rng.gen_range(-1.0..=1.0))
            .collect())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalResult {
    pub success_rate: f64,
    /// Mean count of steps on which the task predicate held.
    pub mean_return: f64,
}

/// Reset seed of evaluation episode `i`. The same starts are used at every
/// evaluation point of a run.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (i as u64).wrapping_add(0x5851_F42D_4C95_7F2D)
}

/// Runs `episodes` full-horizon episodes. An episode succeeds when the
/// predicate holds for `hold` consecutive steps.
pub fn evaluate(
    env_cfg: &EnvConfig,
    controller: &mut dyn Controller,
    task: TaskId,
    episodes: usize,
    hold: usize,
    seed: u64,
) -> Result<EvalResult> {
    let mut env = BlockWorld::new(env_cfg.clone())?;
    let mut successes = 0usize;
    let mut total_return = 0.0;
    for i in 0..episodes {
        let mut obs = env.reset_seeded(episode_seed(seed, i));
        let mut run = 0usize;
        let mut done = false;
        for _ in 0..env_cfg.horizon {
            let a = controller.act(task, env.state(), &obs)?;
            obs = env.step(&a)?.obs;
            if success(env_cfg, task, env.state()) {
                run += 1;
                total_return += 1.0;
                if run >= hold {
                    done = true;
                }
            } else {
                run = 0;
            }
        }
        successes += done as usize;
    }
    let n = episodes.max(1) as f64;
    Ok(EvalResult {
        success_rate: successes as f64 / n,
        mean_return: total_return / n,
    })
}

/// Uniform-random reference controller seeded for reproducibility.
pub fn uniform_controller(seed: u64) -> UniformController {
    UniformController {
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}
