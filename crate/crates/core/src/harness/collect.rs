//! Scripted expert demonstrations written as per-task expert files.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::buffers::{ExpertBuffer, Transition};
use crate::envs::{
    scripted_expert, success, BlockWorld, EnvConfig, TaskId, TaskSet, ACTION_DIM, OBS_DIM,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CollectConfig {
    pub env: EnvConfig,
    pub tasks: TaskSet,
    pub pairs_per_task: usize,
    pub final_pairs: usize,
    pub seed: u64,
    /// Steps another task drives before Open-Gripper or Close-Gripper takes
    /// over.
    pub prefix_steps: usize,
    pub max_failure_rate: f64,
}

impl CollectConfig {
    pub fn new(env: EnvConfig, tasks: TaskSet) -> Self {
        Self {
            env,
            tasks,
            pairs_per_task: 1_000,
            final_pairs: 200,
            seed: 0,
            prefix_steps: 10,
            max_failure_rate: 0.05,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskCollectStats {
    pub episodes: usize,
    pub failures: usize,
    pub pairs: usize,
    pub final_pairs: usize,
}

/// Per-task file, or the enlarged main-task file for single-task runs.
pub fn expert_path(dir: &Path, task: TaskId, single: bool) -> PathBuf {
    if single {
        dir.join(format!("{}.single.expert", task.name()))
    } else {
        dir.join(format!("{}.expert", task.name()))
    }
}

fn task_seed(seed: u64, task: TaskId, single: bool) -> u64 {
    let idx = TaskId::ALL.iter().position(|&t| t == task).unwrap_or(0) as u64;
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(idx + 1 + 16 * single as u64))
}

/// Which task drives step `t` of an episode for `task`.
fn prefix_task(cfg: &CollectConfig, task: TaskId, rng: &mut impl Rng) -> Option<TaskId> {
    match task {
        TaskId::OpenGripper => {
            let others: Vec<TaskId> = cfg
                .tasks
                .tasks()
                .into_iter()
                .filter(|&t| t != task)
                .collect();
            if others.is_empty() {
                None
            } else {
                Some(others[rng.gen_range(0..others.len())])
            }
        }
        TaskId::CloseGripper => Some(TaskId::Lift),
        _ => None,
    }
}

/// Runs one episode; `Some(trajectory)` when the task succeeded.
fn episode(
    cfg: &CollectConfig,
    env: &mut BlockWorld,
    task: TaskId,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Vec<Transition>>> {
    let mut obs = env.reset(rng);
    let prefix = prefix_task(cfg, task, rng);
    let mut traj = Vec::new();
    for t in 0..cfg.env.horizon {
        let driver = match prefix {
            Some(p) if t < cfg.prefix_steps => p,
            _ => task,
        };
        let a = scripted_expert(&cfg.env, driver, env.state()).to_vec();
        let out = env.step(&a)?;
        traj.push(Transition {
            s: obs,
            a,
            s_next: out.obs.clone(),
            terminal: false,
        });
        obs = out.obs;
        if driver == task && success(&cfg.env, task, env.state()) {
            return Ok(Some(traj));
        }
    }
    Ok(None)
}

/// Collects `pairs` regular pairs in whole successful episodes (the last one
/// cut to fit) and `finals` final pairs from distinct successful episodes.
pub fn collect_task(
    cfg: &CollectConfig,
    task: TaskId,
    pairs: usize,
    finals: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(ExpertBuffer, TaskCollectStats)> {
    let mut env = BlockWorld::new(cfg.env.clone())?;
    let mut buf = ExpertBuffer::new(task, OBS_DIM, ACTION_DIM);
    let mut stats = TaskCollectStats::default();
    let mut terminals = Vec::new();
    let mut trajectories = Vec::new();
    let mut have = 0;
    while have < pairs || terminals.len() < finals {
        stats.episodes += 1;
        match episode(cfg, &mut env, task, rng)? {
            Some(mut traj) => {
                if terminals.len() < finals {
                    terminals.push(traj.last().map(|t| t.s_next.clone()).unwrap_or_default());
                }
                if have < pairs {
                    traj.truncate(pairs - have);
                    have += traj.len();
                    trajectories.push(traj);
                }
            }
            None => stats.failures += 1,
        }
        let rate = stats.failures as f64 / stats.episodes as f64;
        if stats.episodes >= 20 && rate > cfg.max_failure_rate {
            return Err(Error::Collection(format!(
                "scripted expert for `{task}` failed {} of {} episodes",
                stats.failures, stats.episodes
            )));
        }
    }
    for traj in trajectories {
        buf.push_trajectory(traj)?;
    }
    buf.augment_final_pairs(finals, &terminals)?;
    stats.pairs = buf.regular_len();
    stats.final_pairs = buf.final_pair_indices().len();
    let rate = if stats.episodes == 0 {
        0.0
    } else {
        stats.failures as f64 / stats.episodes as f64
    };
    if rate > cfg.max_failure_rate {
        return Err(Error::Collection(format!(
            "scripted expert for `{task}` failed {} of {} episodes",
            stats.failures, stats.episodes
        )));
    }
    Ok((buf, stats))
}

/// Writes one file per task plus an enlarged main-task file holding as many
/// pairs as all task files together.
pub fn collect_expert(cfg: &CollectConfig, out: &Path) -> Result<Vec<(PathBuf, TaskCollectStats)>> {
    cfg.env.validate()?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for task in cfg.tasks.tasks() {
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed(cfg.seed, task, false));
        let (buf, stats) = collect_task(cfg, task, cfg.pairs_per_task, cfg.final_pairs, &mut rng)?;
        let path = expert_path(out, task, false);
        buf.save(&path)?;
        written.push((path, stats));
    }
    let main = cfg.tasks.main();
    let k = cfg.tasks.len();
    let mut rng = ChaCha8Rng::seed_from_u64(task_seed(cfg.seed, main, true));
    let (buf, stats) = collect_task(
        cfg,
        main,
        cfg.pairs_per_task * k,
        cfg.final_pairs * k,
        &mut rng,
    )?;
    let path = expert_path(out, main, true);
    buf.save(&path)?;
    written.push((path, stats));
    Ok(written)
}
