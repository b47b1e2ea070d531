//! The interaction and update loop shared by every adversarial run, and the
//! behavioural-cloning runs evaluated on the same cadence.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::collect::expert_path;
use super::config::{Algorithm, RunConfig};
use super::evaluate::{evaluate, PolicyController};
use super::metrics::{write_metrics, MetricsRecord};
use crate::adversary::{DiscriminatorBank, GradientPenalty};
use crate::buffers::{
    sample_discriminator_batch, sample_policy_batch, ExpertBuffer, ExpertMix, ReplayBuffer,
    Transition,
};
use crate::cloning::{train_bc, BcProtocol};
use crate::envs::{BlockWorld, EnvConfig, TaskSet, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::intentions::{pi_update, q_update, IntentionPolicy, QBank, TemperatureSet};
use crate::ndgrad::{AdamConfig, Checkpoint, Matrix, MlpSpec, ParamStore};
use crate::scheduling::{HcLibrary, Scheduler, SchedulerKind};

pub struct TrainReport {
    pub metrics: Vec<MetricsRecord>,
    pub policy: IntentionPolicy,
    pub tasks: TaskSet,
    pub env_steps: usize,
    pub updates: usize,
    pub elapsed: Duration,
    /// Wall time spent in gradient updates.
    pub update_time: Duration,
}

impl TrainReport {
    /// Last recorded success rate of the main task.
    pub fn final_main_success(&self) -> Option<f64> {
        let main = self.tasks.main().name();
        self.metrics
            .iter()
            .rev()
            .find(|r| r.task == main)
            .map(|r| r.success_rate)
    }
}

/// Applies the dataset options of `cfg` to a loaded expert file.
pub fn prepare_expert(
    buf: &ExpertBuffer,
    pairs: usize,
    finals: usize,
    cfg: &RunConfig,
) -> Result<ExpertBuffer> {
    let stride = cfg.expert_subsample;
    if cfg.replace_final_pairs {
        let base = buf.truncated((pairs + finals) * stride, 0)?;
        return base.subsample(stride);
    }
    buf.truncated(pairs * stride, finals)?.subsample(stride)
}

/// Expert data for every head of the run, in task-set order.
pub fn load_experts(cfg: &RunConfig) -> Result<Vec<ExpertBuffer>> {
    let tasks = cfg.task_set();
    let single = !cfg.algorithm.multitask();
    let k = if single { cfg.full_task_set().len() } else { 1 };
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for task in tasks.tasks() {
        let path = expert_path(&cfg.expert_dir, task, single);
        if !path.exists() {
            missing.push(format!("{} ({})", task.name(), path.display()));
            continue;
        }
        let buf = ExpertBuffer::load(&path)?;
        if buf.task != task || buf.obs_dim != OBS_DIM || buf.act_dim != ACTION_DIM {
            return Err(Error::Config(format!(
                "{} does not hold `{task}` data for this environment",
                path.display()
            )));
        }
        out.push(prepare_expert(
            &buf,
            cfg.expert_pairs * k,
            cfg.final_pairs * k,
            cfg,
        )?);
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing expert data for: {}",
            missing.join(", ")
        )));
    }
    Ok(out)
}

pub fn policy_checkpoint(
    policy: &IntentionPolicy,
    tasks: &TaskSet,
    cfg: &RunConfig,
    step: usize,
) -> Checkpoint {
    let mut header = vec![
        ("kind".to_string(), "policy".to_string()),
        ("algorithm".to_string(), cfg.algorithm.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("step".to_string(), step.to_string()),
        ("tasks".to_string(), tasks.describe()),
        ("spec".to_string(), policy.spec.to_string()),
        ("act_dim".to_string(), policy.act_dim().to_string()),
    ];
    for (k, v) in cfg.env.values() {
        header.push((format!("env.{k}"), v));
    }
    Checkpoint::new(header, policy.params.values.clone())
}

/// Policy, its task order and the environment it was trained in.
pub fn load_policy(path: &Path) -> Result<(IntentionPolicy, TaskSet, EnvConfig)> {
    let ck = Checkpoint::load(path)?;
    if ck.require("kind")? != "policy" {
        return Err(Error::Format(format!(
            "{} is not a policy checkpoint",
            path.display()
        )));
    }
    let spec: MlpSpec = ck.require("spec")?.parse()?;
    let tasks = TaskSet::parse_list(ck.require("tasks")?)?;
    let act_dim: usize = ck
        .require("act_dim")?
        .parse()
        .map_err(|_| Error::Format("bad act_dim in checkpoint".into()))?;
    let mut env = EnvConfig::default();
    for (k, v) in &ck.header {
        if let Some(key) = k.strip_prefix("env.") {
            env.set(key, v)?;
        }
    }
    env.validate()?;
    let policy = IntentionPolicy::from_parts(
        spec,
        ParamStore::new(ck.values.clone()),
        tasks.len(),
        act_dim,
    )?;
    Ok((policy, tasks, env))
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn take(&mut self) -> f64 {
        let v = if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        };
        *self = Mean::default();
        v
    }
}

struct Snapshot {
    d_loss: f64,
    q_loss: f64,
    pi_loss: f64,
    bc_loss: f64,
    alphas: Vec<f64>,
    expert_proportion: f64,
    hc_share: f64,
    sched_temperature: f64,
}

fn eval_seed(seed: u64) -> u64 {
    seed ^ 0xE7A1_5EED
}

fn evaluation_rows(
    cfg: &RunConfig,
    policy: &IntentionPolicy,
    tasks: &TaskSet,
    step: usize,
    snap: &Snapshot,
) -> Result<Vec<MetricsRecord>> {
    let mut rows = Vec::new();
    for (i, task) in tasks.tasks().into_iter().enumerate() {
        let mut ctl = PolicyController { policy, tasks };
        let r = evaluate(
            &cfg.env,
            &mut ctl,
            task,
            cfg.eval_episodes,
            cfg.hold_steps,
            eval_seed(cfg.seed),
        )?;
        rows.push(MetricsRecord {
            step,
            algorithm: cfg.algorithm.to_string(),
            seed: cfg.seed,
            task: task.name().to_string(),
            success_rate: r.success_rate,
            mean_return: r.mean_return,
            d_loss: snap.d_loss,
            q_loss: snap.q_loss,
            pi_loss: snap.pi_loss,
            bc_loss: snap.bc_loss,
            alpha: snap.alphas.get(i).copied().unwrap_or(f64::NAN),
            expert_proportion: snap.expert_proportion,
            hc_share: snap.hc_share,
            sched_temperature: snap.sched_temperature,
        });
    }
    Ok(rows)
}

/// Loads experts, trains, and writes `metrics.csv`, `policy.ckpt` and the
/// resolved `config.cfg` under `out` when given.
pub fn train(cfg: &RunConfig, out: Option<&Path>) -> Result<TrainReport> {
    train_observed(cfg, out, &mut |_| {})
}

/// [`train`] with a callback on every metrics row as it is produced.
pub fn train_observed(
    cfg: &RunConfig,
    out: Option<&Path>,
    observer: &mut dyn FnMut(&MetricsRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    let experts = load_experts(cfg)?;
    let report = train_with_experts(cfg, experts, observer)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_metrics(&dir.join("metrics.csv"), &report.metrics)?;
        policy_checkpoint(
            &report.policy,
            &report.tasks,
            cfg,
            report.env_steps.max(report.updates),
        )
        .save(&dir.join("policy.ckpt"))?;
        std::fs::write(dir.join("config.cfg"), cfg.to_text())?;
    }
    Ok(report)
}

/// Trains on already loaded expert buffers, one per head. `observer` sees
/// every metrics row as it is produced.
pub fn train_with_experts(
    cfg: &RunConfig,
    experts: Vec<ExpertBuffer>,
    observer: &mut dyn FnMut(&MetricsRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    let tasks = cfg.task_set();
    if experts.len() != tasks.len() {
        return Err(Error::Config(format!(
            "{} expert buffers for {} tasks",
            experts.len(),
            tasks.len()
        )));
    }
    match cfg.algorithm {
        Algorithm::Lfgp | Algorithm::Dac => train_adversarial(cfg, tasks, experts, observer),
        Algorithm::Bc | Algorithm::BcMultitask => train_cloning(cfg, tasks, experts, observer),
    }
}

fn train_adversarial(
    cfg: &RunConfig,
    tasks: TaskSet,
    experts: Vec<ExpertBuffer>,
    observer: &mut dyn FnMut(&MetricsRecord),
) -> Result<TrainReport> {
    let start = Instant::now();
    let t = tasks.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = IntentionPolicy::new(OBS_DIM, ACTION_DIM, &cfg.policy_hidden, t, &mut rng)?;
    let mut qbank = QBank::new(OBS_DIM, ACTION_DIM, &cfg.q_hidden, t, &mut rng)?;
    let mut temps = TemperatureSet::new(t, cfg.initial_alpha, cfg.target_entropy);
    let mut disc = DiscriminatorBank::new(OBS_DIM, ACTION_DIM, &cfg.d_hidden, t, &mut rng)?;
    let sched_cfg = cfg.scheduler_config();
    let hc = match (&cfg.hc_file, sched_cfg.kind) {
        (_, SchedulerKind::None) => HcLibrary::default(),
        (Some(p), _) => HcLibrary::load(p, &tasks, sched_cfg.periods)?,
        (None, _) => HcLibrary::standard(&tasks),
    };
    let mut scheduler = Scheduler::new(sched_cfg, t, hc)?;
    let sac = cfg.sac_config();
    let d_adam = AdamConfig::new(cfg.d_lr, cfg.d_weight_decay);
    let gp = GradientPenalty {
        lambda: cfg.gp_lambda,
        target: cfg.gp_target,
    };
    let mut mix = cfg.expert_mix();
    let bias = cfg.discriminator_bias();
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut env = BlockWorld::new(cfg.env.clone())?;
    let horizon = cfg.env.horizon;

    let mut metrics = Vec::new();
    let (mut d_loss, mut q_loss, mut pi_loss) = (Mean::default(), Mean::default(), Mean::default());
    let mut update_time = Duration::ZERO;
    let mut updates = 0usize;
    let mut obs = Vec::new();
    let mut task = 0usize;
    let mut prev = None;
    let mut episode: Vec<Transition> = Vec::with_capacity(horizon);

    for step in 0..cfg.total_steps {
        let t_in = step % horizon;
        if t_in == 0 {
            obs = env.reset(&mut rng);
            scheduler.start_episode(&mut rng);
            prev = None;
            episode.clear();
        }
        if t_in.is_multiple_of(cfg.period_len) {
            task = scheduler.select(t_in / cfg.period_len, prev, &mut rng)?;
            prev = Some(task);
        }
        let action = if step < cfg.exploration {
            (0..ACTION_DIM).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        } else {
            policy.sample_action(task, &obs, true, &mut rng)?.0
        };
        let out = env.step(&action)?;
        let tr = Transition {
            s: std::mem::take(&mut obs),
            a: action,
            s_next: out.obs.clone(),
            terminal: false,
        };
        obs = out.obs;
        replay.push(tr.clone());
        episode.push(tr);

        if replay.len() >= cfg.warmup.max(1) {
            let u0 = Instant::now();
            let pb = sample_policy_batch(
                &replay,
                &[],
                cfg.d_batch_size,
                &mut ExpertMix::off(),
                &mut rng,
            )?;
            let eb = experts
                .iter()
                .map(|e| sample_discriminator_batch(e, cfg.d_batch_size, bias, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            d_loss.push(
                disc.update(&pb, &eb, gp, &d_adam, cfg.max_grad_norm, &mut rng)?
                    .loss,
            );

            let batch = sample_policy_batch(&replay, &experts, cfg.batch_size, &mut mix, &mut rng)?;
            if updates.is_multiple_of(cfg.q_update_freq) {
                let rewards = disc.rewards(&batch.s, &batch.a, cfg.reward_form)?;
                q_loss.push(
                    q_update(
                        &mut qbank, &policy, &temps, &rewards, &batch, &sac, &mut rng,
                    )?
                    .loss,
                );
            }
            if updates.is_multiple_of(cfg.pi_update_freq) {
                let stats = pi_update(&mut policy, &qbank, &temps, &batch.s, &sac, &mut rng)?;
                temps.alpha_update(&stats.mean_log_probs, &sac.alpha_adam())?;
                pi_loss.push(stats.loss);
            }
            if updates.is_multiple_of(cfg.target_update_freq) {
                qbank.polyak_update(cfg.polyak);
            }
            updates += 1;
            update_time += u0.elapsed();
        }

        if t_in + 1 == horizon && scheduler.cfg.kind == SchedulerKind::Learned {
            let s = Matrix::from_vec(
                episode.len(),
                OBS_DIM,
                episode.iter().flat_map(|e| e.s.iter().copied()).collect(),
            );
            let a = Matrix::from_vec(
                episode.len(),
                ACTION_DIM,
                episode.iter().flat_map(|e| e.a.iter().copied()).collect(),
            );
            let r = disc.rewards(&s, &a, cfg.reward_form)?;
            let main: Vec<f64> = (0..episode.len()).map(|i| r.get(i, 0)).collect();
            scheduler.end_episode(&main);
        }

        if (step + 1) % cfg.eval_every == 0 || step + 1 == cfg.total_steps {
            let snap = Snapshot {
                d_loss: d_loss.take(),
                q_loss: q_loss.take(),
                pi_loss: pi_loss.take(),
                bc_loss: f64::NAN,
                alphas: temps.alphas(),
                expert_proportion: mix.proportion,
                hc_share: if scheduler.episodes == 0 {
                    0.0
                } else {
                    scheduler.hc_episodes as f64 / scheduler.episodes as f64
                },
                sched_temperature: if scheduler.cfg.kind == SchedulerKind::Learned {
                    scheduler.table.temperature
                } else {
                    f64::NAN
                },
            };
            for row in evaluation_rows(cfg, &policy, &tasks, step + 1, &snap)? {
                observer(&row);
                metrics.push(row);
            }
        }
    }
    Ok(TrainReport {
        metrics,
        policy,
        tasks,
        env_steps: cfg.total_steps,
        updates,
        elapsed: start.elapsed(),
        update_time,
    })
}

fn train_cloning(
    cfg: &RunConfig,
    tasks: TaskSet,
    experts: Vec<ExpertBuffer>,
    observer: &mut dyn FnMut(&MetricsRecord),
) -> Result<TrainReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = IntentionPolicy::new(
        OBS_DIM,
        ACTION_DIM,
        &cfg.policy_hidden,
        tasks.len(),
        &mut rng,
    )?;
    let refs: Vec<&ExpertBuffer> = experts.iter().collect();
    let mut metrics = Vec::new();
    let mut updates = 0usize;
    let mut emit = |policy: &IntentionPolicy,
                    step: usize,
                    bc_loss: f64,
                    metrics: &mut Vec<MetricsRecord>|
     -> Result<()> {
        let snap = Snapshot {
            d_loss: f64::NAN,
            q_loss: f64::NAN,
            pi_loss: f64::NAN,
            bc_loss,
            alphas: Vec::new(),
            expert_proportion: f64::NAN,
            hc_share: f64::NAN,
            sched_temperature: f64::NAN,
        };
        for row in evaluation_rows(cfg, policy, &tasks, step, &snap)? {
            observer(&row);
            metrics.push(row);
        }
        Ok(())
    };
    match cfg.bc_protocol {
        BcProtocol::FixedUpdates => {
            while updates < cfg.total_steps {
                let chunk = cfg.eval_every.min(cfg.total_steps - updates);
                let r = train_bc(&mut policy, &refs, &cfg.bc_config(chunk), &mut rng)?;
                updates += r.updates;
                let mean = r.train_losses.iter().sum::<f64>() / r.train_losses.len().max(1) as f64;
                emit(&policy, updates, mean, &mut metrics)?;
            }
        }
        BcProtocol::EarlyStopping => {
            let r = train_bc(&mut policy, &refs, &cfg.bc_config(0), &mut rng)?;
            updates = r.updates;
            let best = r
                .best_epoch
                .and_then(|b| r.validation.get(b))
                .copied()
                .unwrap_or(f64::NAN);
            emit(&policy, updates, best, &mut metrics)?;
        }
    }
    let elapsed = start.elapsed();
    Ok(TrainReport {
        metrics,
        policy,
        tasks,
        env_steps: 0,
        updates,
        elapsed,
        update_time: elapsed,
    })
}
