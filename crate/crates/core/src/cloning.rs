//! Behavioural cloning on the mean head of an [`IntentionPolicy`].

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::buffers::ExpertBuffer;
use crate::error::{Error, Result};
use crate::intentions::IntentionPolicy;
use crate::ndgrad::{
    adam_step, backward, clip_grad_norm, AdamConfig, Graph, Matrix, ParamStore, Var,
};

/// Targets are pulled this far inside `(-1, 1)`.
pub const TARGET_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcProtocol {
    FixedUpdates,
    EarlyStopping,
}

impl FromStr for BcProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_updates" => Ok(BcProtocol::FixedUpdates),
            "early_stopping" => Ok(BcProtocol::EarlyStopping),
            _ => Err(Error::Config(format!("unknown BC protocol `{s}`"))),
        }
    }
}

impl BcProtocol {
    pub fn name(self) -> &'static str {
        match self {
            BcProtocol::FixedUpdates => "fixed_updates",
            BcProtocol::EarlyStopping => "early_stopping",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BcConfig {
    pub multitask: bool,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub protocol: BcProtocol,
    /// Training share of the pairs under early stopping.
    pub split: f64,
    /// Epochs without improvement before stopping.
    pub tolerance: usize,
    /// Update count under the fixed protocol.
    pub updates: usize,
    /// Hard cap on epochs under early stopping.
    pub max_epochs: usize,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            multitask: true,
            batch_size: 256,
            lr: 1e-5,
            weight_decay: 1e-2,
            max_grad_norm: 10.0,
            protocol: BcProtocol::FixedUpdates,
            split: 0.7,
            tolerance: 100,
            updates: 150_000,
            max_epochs: 10_000,
        }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!(
                "BC split {} must lie in (0, 1)",
                self.split
            )));
        }
        if self.tolerance == 0 {
            return Err(Error::Config("BC tolerance must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("BC batch size must be positive".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig::new(self.lr, self.weight_decay)
    }
}

/// One regression batch for head `task`.
#[derive(Clone, Debug)]
pub struct BcBatch {
    pub task: usize,
    pub s: Matrix,
    pub a: Matrix,
}

fn clip_target(a: f64) -> f64 {
    a.clamp(-1.0 + TARGET_MARGIN, 1.0 - TARGET_MARGIN)
}

fn record_loss(
    g: &mut Graph,
    policy: &IntentionPolicy,
    binding: &crate::ndgrad::Binding,
    batches: &[BcBatch],
) -> Result<Var> {
    let a = policy.act_dim();
    let mut total: Option<Var> = None;
    for b in batches {
        if b.task >= policy.tasks() {
            return Err(Error::Config(format!(
                "BC batch for head {} of {}",
                b.task,
                policy.tasks()
            )));
        }
        if b.s.rows() == 0 {
            continue;
        }
        let s = g.constant(b.s.clone());
        let out = policy.spec.forward_graph(g, binding, s);
        let mean = g.slice_cols(out, b.task * 2 * a, a);
        let pred = g.tanh(mean);
        let y = g.constant(b.a.map(clip_target));
        let d = g.sub(pred, y);
        let d2 = g.square(d);
        let sum = g.sum(d2);
        let l = g.scale(sum, 1.0 / b.s.rows() as f64);
        total = Some(match total {
            Some(t) => g.add(t, l),
            None => l,
        });
    }
    Ok(match total {
        Some(t) => t,
        None => g.scalar(0.0),
    })
}

/// `sum_T mean_(s,a) |tanh(mu_T(s)) - a|^2` without touching gradients.
pub fn bc_loss(policy: &IntentionPolicy, batches: &[BcBatch]) -> Result<f64> {
    let mut g = Graph::new();
    let b = policy.spec.bind_frozen(&mut g, &policy.params)?;
    let loss = record_loss(&mut g, policy, &b, batches)?;
    Ok(g.value(loss).item())
}

/// One clipped Adam step on the BC loss; returns the pre-step loss.
pub fn bc_update(
    policy: &mut IntentionPolicy,
    batches: &[BcBatch],
    adam: &AdamConfig,
    max_norm: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let b = policy.spec.bind(&mut g, &policy.params)?;
    let loss = record_loss(&mut g, policy, &b, batches)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite BC loss".into()));
    }
    policy.params.zero_grad();
    backward(&mut g, loss, &b, &mut policy.params)?;
    clip_grad_norm(&mut policy.params, max_norm);
    adam_step(&mut policy.params, adam)?;
    Ok(value)
}

/// Stop once the best (first minimum) is `tolerance` or more epochs old.
pub fn early_stop_check(history: &[f64], tolerance: usize) -> (bool, usize) {
    let mut best = 0;
    for (i, &v) in history.iter().enumerate() {
        if v < history[best] {
            best = i;
        }
    }
    let since = history.len().saturating_sub(1) - best;
    (!history.is_empty() && since >= tolerance, best)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BcReport {
    pub updates: usize,
    pub train_losses: Vec<f64>,
    /// Validation loss per epoch (early stopping only).
    pub validation: Vec<f64>,
    pub best_epoch: Option<usize>,
}

struct TaskData<'a> {
    head: usize,
    buffer: &'a ExpertBuffer,
}

fn gather(buffer: &ExpertBuffer, idx: &[usize], head: usize) -> BcBatch {
    let pairs = buffer.pairs();
    let mut s = Vec::with_capacity(idx.len() * buffer.obs_dim);
    let mut a = Vec::with_capacity(idx.len() * buffer.act_dim);
    for &i in idx {
        s.extend_from_slice(&pairs[i].s);
        a.extend_from_slice(&pairs[i].a);
    }
    BcBatch {
        task: head,
        s: Matrix::from_vec(idx.len(), buffer.obs_dim, s),
        a: Matrix::from_vec(idx.len(), buffer.act_dim, a),
    }
}

/// Trains on the regular (non-final) pairs. Multitask fits head `i` to
/// `experts[i]`; single-task fits head 0 to `experts[0]` only.
pub fn train_bc(
    policy: &mut IntentionPolicy,
    experts: &[&ExpertBuffer],
    cfg: &BcConfig,
    rng: &mut impl Rng,
) -> Result<BcReport> {
    cfg.validate()?;
    let data: Vec<TaskData> = if cfg.multitask {
        if experts.len() != policy.tasks() {
            return Err(Error::Config(format!(
                "multitask BC needs {} expert buffers, got {}",
                policy.tasks(),
                experts.len()
            )));
        }
        experts
            .iter()
            .enumerate()
            .map(|(head, &buffer)| TaskData { head, buffer })
            .collect()
    } else {
        let buffer = experts
            .first()
            .ok_or_else(|| Error::Config("BC needs an expert buffer".into()))?;
        vec![TaskData { head: 0, buffer }]
    };
    for d in &data {
        if d.buffer.regular_len() == 0 {
            return Err(Error::Config(format!(
                "no expert pairs for {}",
                d.buffer.task.name()
            )));
        }
    }
    match cfg.protocol {
        BcProtocol::FixedUpdates => fixed_updates(policy, &data, cfg, rng),
        BcProtocol::EarlyStopping => early_stopping(policy, &data, cfg, rng),
    }
}

fn fixed_updates(
    policy: &mut IntentionPolicy,
    data: &[TaskData],
    cfg: &BcConfig,
    rng: &mut impl Rng,
) -> Result<BcReport> {
    let adam = cfg.adam();
    let mut report = BcReport::default();
    for _ in 0..cfg.updates {
        let batches: Vec<BcBatch> = data
            .iter()
            .map(|d| {
                let n = d.buffer.regular_len();
                let idx: Vec<usize> = (0..cfg.batch_size).map(|_| rng.gen_range(0..n)).collect();
                gather(d.buffer, &idx, d.head)
            })
            .collect();
        report
            .train_losses
            .push(bc_update(policy, &batches, &adam, cfg.max_grad_norm)?);
        report.updates += 1;
    }
    Ok(report)
}

fn early_stopping(
    policy: &mut IntentionPolicy,
    data: &[TaskData],
    cfg: &BcConfig,
    rng: &mut impl Rng,
) -> Result<BcReport> {
    let adam = cfg.adam();
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for d in data {
        let mut idx: Vec<usize> = (0..d.buffer.regular_len()).collect();
        idx.shuffle(rng);
        let cut = ((idx.len() as f64) * cfg.split).floor() as usize;
        if cut == 0 || cut == idx.len() {
            return Err(Error::Config(format!(
                "{} pairs cannot be split {} / {}",
                idx.len(),
                cfg.split,
                1.0 - cfg.split
            )));
        }
        validation.push(gather(d.buffer, &idx[cut..], d.head));
        idx.truncate(cut);
        train.push(idx);
    }
    let longest = train.iter().map(Vec::len).max().unwrap_or(0);
    let steps = longest.div_ceil(cfg.batch_size);
    let mut report = BcReport::default();
    let mut best: Option<ParamStore> = None;
    for _ in 0..cfg.max_epochs {
        for idx in train.iter_mut() {
            idx.shuffle(rng);
        }
        for step in 0..steps {
            let batches: Vec<BcBatch> = data
                .iter()
                .zip(&train)
                .map(|(d, idx)| {
                    let rows: Vec<usize> = (0..cfg.batch_size.min(idx.len()))
                        .map(|j| idx[(step * cfg.batch_size + j) % idx.len()])
                        .collect();
                    gather(d.buffer, &rows, d.head)
                })
                .collect();
            report
                .train_losses
                .push(bc_update(policy, &batches, &adam, cfg.max_grad_norm)?);
            report.updates += 1;
        }
        report.validation.push(bc_loss(policy, &validation)?);
        let (stop, best_epoch) = early_stop_check(&report.validation, cfg.tolerance);
        if best_epoch + 1 == report.validation.len() {
            best = Some(policy.params.clone());
        }
        report.best_epoch = Some(best_epoch);
        if stop {
            break;
        }
    }
    if let Some(p) = best {
        policy.params = p;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::Transition;
    use crate::envs::TaskId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn early_stop_examples() {
        let mut h = vec![5.0, 4.0, 3.0, 1.0];
        h.extend(std::iter::repeat_n(1.0, 99));
        assert_eq!(early_stop_check(&h, 100), (false, 3));
        h.push(1.0);
        assert_eq!(h.len(), 104);
        assert_eq!(early_stop_check(&h, 100), (true, 3));
        let dec: Vec<f64> = (0..500).map(|i| 1.0 / (1.0 + i as f64)).collect();
        assert_eq!(early_stop_check(&dec, 1), (false, 499));
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = IntentionPolicy::new(2, 1, &[4], 2, &mut rng).unwrap();
        let s = Matrix::from_vec(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]);
        let a = p.mean_actions(1, &s).unwrap();
        let loss = bc_loss(&p, &[BcBatch { task: 1, s, a }]).unwrap();
        assert!(loss.abs() < 1e-18);
    }

    #[test]
    fn fixed_protocol_counts_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut buf = ExpertBuffer::new(TaskId::Reach, 2, 1);
        buf.push_trajectory(
            (0..20)
                .map(|i| Transition {
                    s: vec![i as f64 / 20.0, 0.0],
                    a: vec![0.5],
                    s_next: vec![0.0, 0.0],
                    terminal: false,
                })
                .collect(),
        )
        .unwrap();
        let mut p = IntentionPolicy::new(2, 1, &[4], 1, &mut rng).unwrap();
        let cfg = BcConfig {
            updates: 37,
            batch_size: 8,
            ..Default::default()
        };
        let r = train_bc(&mut p, &[&buf], &cfg, &mut rng).unwrap();
        assert_eq!(r.updates, 37);
        assert_eq!(r.train_losses.len(), 37);
    }

    #[test]
    fn config_bounds() {
        let bad = BcConfig {
            split: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = BcConfig {
            tolerance: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
