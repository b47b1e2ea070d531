//! Multitask soft actor-critic: Gaussian-tanh heads on a shared policy trunk,
//! clipped double Q heads on a shared critic trunk, per-task temperatures.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::buffers::Batch;
use crate::error::{Error, Result};
use crate::ndgrad::{
    adam_step, backward, clip_grad_norm, softplus, Activation, AdamConfig, Graph, Matrix, MlpSpec,
    ParamStore, Var,
};

/// Added to softplus output so the variance is strictly positive.
pub const VARIANCE_EPS: f64 = 1e-7;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `log(1 - tanh(u)^2)` without cancellation.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of `tanh(u)` when `u ~ N(mean, var)` per component.
pub fn squashed_log_prob(mean: &[f64], var: &[f64], u: &[f64]) -> f64 {
    mean.iter()
        .zip(var)
        .zip(u)
        .map(|((&m, &v), &x)| {
            -0.5 * (x - m).powi(2) / v - 0.5 * v.ln() - HALF_LN_2PI - log_one_minus_tanh_sq(x)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub policy_lr: f64,
    pub q_lr: f64,
    pub alpha_lr: f64,
    pub policy_weight_decay: f64,
    pub q_weight_decay: f64,
    pub max_grad_norm: f64,
    pub initial_alpha: f64,
    pub target_entropy: f64,
}

impl SacConfig {
    pub fn policy_adam(&self) -> AdamConfig {
        AdamConfig::new(self.policy_lr, self.policy_weight_decay)
    }

    pub fn q_adam(&self) -> AdamConfig {
        AdamConfig::new(self.q_lr, self.q_weight_decay)
    }

    pub fn alpha_adam(&self) -> AdamConfig {
        AdamConfig::new(self.alpha_lr, 0.0)
    }
}

/// Shared ReLU trunk with a mean and a pre-variance block per task.
#[derive(Clone, Debug)]
pub struct IntentionPolicy {
    pub spec: MlpSpec,
    pub params: ParamStore,
    tasks: usize,
    act_dim: usize,
}

/// Mean and variance of one task head for a batch.
#[derive(Clone, Debug)]
pub struct HeadOutput {
    pub mean: Matrix,
    pub var: Matrix,
}

impl IntentionPolicy {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        tasks: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let spec = MlpSpec::new(
            obs_dim,
            hidden.iter().map(|&w| (w, Activation::Relu)).collect(),
            tasks * 2 * act_dim,
        )?;
        let params = spec.init(rng);
        Ok(Self {
            spec,
            params,
            tasks,
            act_dim,
        })
    }

    pub fn from_parts(
        spec: MlpSpec,
        params: ParamStore,
        tasks: usize,
        act_dim: usize,
    ) -> Result<Self> {
        if spec.output_dim != tasks * 2 * act_dim || params.len() != spec.param_count() {
            return Err(Error::Config("policy parts do not fit together".into()));
        }
        Ok(Self {
            spec,
            params,
            tasks,
            act_dim,
        })
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn check_task(&self, task: usize) -> Result<()> {
        if task >= self.tasks {
            return Err(Error::Config(format!(
                "task index {task} out of range for {} heads",
                self.tasks
            )));
        }
        Ok(())
    }

    /// Mean and variance for every row of `s`.
    pub fn head(&self, task: usize, s: &Matrix) -> Result<HeadOutput> {
        self.check_task(task)?;
        let out = self.spec.forward_batch(&self.params, s)?;
        let a = self.act_dim;
        let base = task * 2 * a;
        let mut mean = Matrix::zeros(s.rows(), a);
        let mut var = Matrix::zeros(s.rows(), a);
        for r in 0..s.rows() {
            let row = out.row_slice(r);
            for k in 0..a {
                mean.set(r, k, row[base + k]);
                var.set(r, k, softplus(row[base + a + k]) + VARIANCE_EPS);
            }
        }
        Ok(HeadOutput { mean, var })
    }

    /// Stochastic: `tanh` of a reparameterised Gaussian sample with its
    /// log-density. Deterministic: `tanh(mean)` and no log-density.
    pub fn sample_action(
        &self,
        task: usize,
        s: &[f64],
        stochastic: bool,
        rng: &mut impl Rng,
    ) -> Result<(Vec<f64>, Option<f64>)> {
        let h = self.head(task, &Matrix::row(s))?;
        let mean = h.mean.data();
        if !stochastic {
            return Ok((mean.iter().map(|m| m.tanh()).collect(), None));
        }
        let var = h.var.data();
        let u: Vec<f64> = mean
            .iter()
            .zip(var)
            .map(|(&m, &v)| {
                let e: f64 = StandardNormal.sample(rng);
                m + v.sqrt() * e
            })
            .collect();
        let lp = squashed_log_prob(mean, var, &u);
        Ok((u.iter().map(|x| x.tanh()).collect(), Some(lp)))
    }

    /// Deterministic batch actions `tanh(mean)` for one head.
    pub fn mean_actions(&self, task: usize, s: &Matrix) -> Result<Matrix> {
        Ok(self.head(task, s)?.mean.map(f64::tanh))
    }
}

/// Per-task actions and log-densities recorded on a graph.
pub struct GraphSample {
    /// `(tasks * n) x act_dim`, task-major.
    pub actions: Var,
    /// `(tasks * n) x 1`.
    pub log_probs: Var,
    /// `(tasks * n) x act_dim` pre-squash means.
    pub means: Var,
}

/// Records reparameterised samples from every head for the rows of `s`.
fn sample_all_heads(
    g: &mut Graph,
    policy: &IntentionPolicy,
    binding: &crate::ndgrad::Binding,
    s: Var,
    rng: &mut impl Rng,
) -> GraphSample {
    let out = policy.spec.forward_graph(g, binding, s);
    let n = g.shape(s).0;
    let a = policy.act_dim;
    let mut acts = None;
    let mut lps = None;
    let mut means = None;
    let cat = |g: &mut Graph, acc: Option<Var>, v: Var| match acc {
        Some(p) => g.concat_rows(p, v),
        None => v,
    };
    for t in 0..policy.tasks {
        let mean = g.slice_cols(out, t * 2 * a, a);
        let pre = g.slice_cols(out, t * 2 * a + a, a);
        let var = g.softplus(pre);
        let var = g.add_scalar(var, VARIANCE_EPS);
        let std = g.sqrt(var);
        let eps_vals: Vec<f64> = (0..n * a).map(|_| StandardNormal.sample(rng)).collect();
        let eps = g.constant(Matrix::from_vec(n, a, eps_vals.clone()));
        let noise = g.mul(std, eps);
        let u = g.add(mean, noise);
        let act = g.tanh(u);
        // log N(u; mean, var) with (u - mean) / std = eps held fixed
        let half_eps2 = g.constant(Matrix::from_vec(
            n,
            a,
            eps_vals
                .iter()
                .map(|e| -0.5 * e * e - HALF_LN_2PI)
                .collect(),
        ));
        let log_std = g.log(std);
        let log_n = g.sub(half_eps2, log_std);
        // log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))
        let m2u = g.scale(u, -2.0);
        let sp = g.softplus(m2u);
        let corr = g.add(u, sp);
        let corr = g.scale(corr, -2.0);
        let corr = g.add_scalar(corr, 2.0 * std::f64::consts::LN_2);
        let lp = g.sub(log_n, corr);
        let lp = g.sum_cols(lp);
        acts = Some(cat(g, acts, act));
        lps = Some(cat(g, lps, lp));
        means = Some(cat(g, means, mean));
    }
    GraphSample {
        actions: acts.expect("at least one task"),
        log_probs: lps.expect("at least one task"),
        means: means.expect("at least one task"),
    }
}

/// Two critics with one output per task, and their Polyak-averaged targets.
#[derive(Clone, Debug)]
pub struct QBank {
    pub spec: MlpSpec,
    pub q1: ParamStore,
    pub q2: ParamStore,
    pub q1_target: ParamStore,
    pub q2_target: ParamStore,
    obs_dim: usize,
    act_dim: usize,
}

impl QBank {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        tasks: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let spec = MlpSpec::new(
            obs_dim + act_dim,
            hidden.iter().map(|&w| (w, Activation::Relu)).collect(),
            tasks,
        )?;
        let q1 = spec.init(rng);
        let q2 = spec.init(rng);
        Ok(Self {
            spec,
            q1_target: ParamStore::new(q1.values.clone()),
            q2_target: ParamStore::new(q2.values.clone()),
            q1,
            q2,
            obs_dim,
            act_dim,
        })
    }

    pub fn tasks(&self) -> usize {
        self.spec.output_dim
    }

    pub fn inputs(&self, s: &Matrix, a: &Matrix) -> Matrix {
        let mut out = Vec::with_capacity(s.rows() * (self.obs_dim + self.act_dim));
        for r in 0..s.rows() {
            out.extend_from_slice(s.row_slice(r));
            out.extend_from_slice(a.row_slice(r));
        }
        Matrix::from_vec(s.rows(), self.obs_dim + self.act_dim, out)
    }

    /// `target <- (1 - tau) target + tau online` for both critics.
    pub fn polyak_update(&mut self, tau: f64) {
        for (t, o) in [
            (&mut self.q1_target, &self.q1),
            (&mut self.q2_target, &self.q2),
        ] {
            for (tv, ov) in t.values.iter_mut().zip(&o.values) {
                *tv = (1.0 - tau) * *tv + tau * ov;
            }
        }
    }
}

/// One log-temperature per task with its own optimiser state.
#[derive(Clone, Debug)]
pub struct TemperatureSet {
    pub log_alpha: ParamStore,
    pub target_entropy: f64,
}

impl TemperatureSet {
    pub fn new(tasks: usize, initial_alpha: f64, target_entropy: f64) -> Self {
        Self {
            log_alpha: ParamStore::new(vec![initial_alpha.ln(); tasks]),
            target_entropy,
        }
    }

    pub fn alpha(&self, task: usize) -> f64 {
        self.log_alpha.values[task].exp()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.log_alpha.values.iter().map(|v| v.exp()).collect()
    }

    /// Gradient step on `-alpha_T (log pi_T + target_entropy)` with respect to
    /// `log alpha_T`. `mean_log_probs[T]` is the batch mean of `log pi_T`.
    pub fn alpha_update(&mut self, mean_log_probs: &[f64], adam: &AdamConfig) -> Result<()> {
        if mean_log_probs.len() != self.log_alpha.len() {
            return Err(Error::Config("one mean log-prob per task required".into()));
        }
        for (t, lp) in mean_log_probs.iter().enumerate() {
            self.log_alpha.grads[t] = -self.alpha(t) * (lp + self.target_entropy);
        }
        adam_step(&mut self.log_alpha, adam)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QStats {
    pub loss: f64,
    pub mean_target: f64,
    pub mean_q: f64,
}

/// Per-row selection of column `t` in a task-major stack of `tasks` blocks.
fn block_selector(tasks: usize, n: usize) -> Matrix {
    let mut m = Matrix::zeros(tasks * n, tasks);
    for t in 0..tasks {
        for i in 0..n {
            m.set(t * n + i, t, 1.0);
        }
    }
    m
}

/// `r + gamma (min(q1, q2) - alpha log_prob)`.
pub fn clipped_target(reward: f64, gamma: f64, q1: f64, q2: f64, alpha: f64, log_prob: f64) -> f64 {
    reward + gamma * (q1.min(q2) - alpha * log_prob)
}

/// Clipped double-Q soft Bellman targets, `n x tasks`.
pub fn soft_targets(
    qbank: &QBank,
    policy: &IntentionPolicy,
    temps: &TemperatureSet,
    rewards: &Matrix,
    s_next: &Matrix,
    gamma: f64,
    rng: &mut impl Rng,
) -> Result<Matrix> {
    let tasks = qbank.tasks();
    let n = s_next.rows();
    if rewards.shape() != (n, tasks) {
        return Err(Error::Config(format!(
            "rewards shape {:?}, expected ({n}, {tasks})",
            rewards.shape()
        )));
    }
    let out = policy.spec.forward_batch(&policy.params, s_next)?;
    let a = policy.act_dim();
    let mut acts = Matrix::zeros(tasks * n, a);
    let mut lps = vec![0.0; tasks * n];
    let mut mean = vec![0.0; a];
    let mut var = vec![0.0; a];
    let mut u = vec![0.0; a];
    for t in 0..tasks {
        for i in 0..n {
            let row = out.row_slice(i);
            for k in 0..a {
                mean[k] = row[t * 2 * a + k];
                var[k] = softplus(row[t * 2 * a + a + k]) + VARIANCE_EPS;
                let e: f64 = StandardNormal.sample(rng);
                u[k] = mean[k] + var[k].sqrt() * e;
                acts.set(t * n + i, k, u[k].tanh());
            }
            lps[t * n + i] = squashed_log_prob(&mean, &var, &u);
        }
    }
    let mut s_rep = Vec::with_capacity(tasks * n * s_next.cols());
    for _ in 0..tasks {
        s_rep.extend_from_slice(s_next.data());
    }
    let x = qbank.inputs(&Matrix::from_vec(tasks * n, s_next.cols(), s_rep), &acts);
    let q1 = qbank.spec.forward_batch(&qbank.q1_target, &x)?;
    let q2 = qbank.spec.forward_batch(&qbank.q2_target, &x)?;
    let mut y = Matrix::zeros(n, tasks);
    for t in 0..tasks {
        let alpha = temps.alpha(t);
        for i in 0..n {
            let r = t * n + i;
            y.set(
                i,
                t,
                clipped_target(
                    rewards.get(i, t),
                    gamma,
                    q1.get(r, t),
                    q2.get(r, t),
                    alpha,
                    lps[r],
                ),
            );
        }
    }
    if !y.all_finite() {
        return Err(Error::Numerical("non-finite soft Bellman target".into()));
    }
    Ok(y)
}

/// Regresses both critics onto the clipped double-Q soft targets, summed
/// over tasks. Bootstraps on every row: episode ends are time limits.
pub fn q_update(
    qbank: &mut QBank,
    policy: &IntentionPolicy,
    temps: &TemperatureSet,
    rewards: &Matrix,
    batch: &Batch,
    cfg: &SacConfig,
    rng: &mut impl Rng,
) -> Result<QStats> {
    let y = soft_targets(qbank, policy, temps, rewards, &batch.s_next, cfg.gamma, rng)?;
    let n = batch.len() as f64;
    let x = qbank.inputs(&batch.s, &batch.a);
    let mut loss_total = 0.0;
    let mut mean_q = 0.0;
    let spec = qbank.spec.clone();
    for params in [&mut qbank.q1, &mut qbank.q2] {
        let mut g = Graph::new();
        let b = spec.bind(&mut g, params)?;
        let xv = g.constant(x.clone());
        let q = spec.forward_graph(&mut g, &b, xv);
        mean_q += g.value(q).data().iter().sum::<f64>() / (2.0 * g.value(q).len() as f64);
        let yv = g.constant(y.clone());
        let d = g.sub(q, yv);
        let d2 = g.square(d);
        let s = g.sum(d2);
        let loss = g.scale(s, 1.0 / n);
        loss_total += g.value(loss).item();
        params.zero_grad();
        backward(&mut g, loss, &b, params)?;
        clip_grad_norm(params, cfg.max_grad_norm);
        adam_step(params, &cfg.q_adam())?;
    }
    Ok(QStats {
        loss: loss_total,
        mean_target: y.data().iter().sum::<f64>() / y.len() as f64,
        mean_q,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyStats {
    pub loss: f64,
    /// Batch mean of `log pi_T` for each task.
    pub mean_log_probs: Vec<f64>,
}

/// Ascends `sum_T E[min Q_T(s, a ~ pi_T) - alpha_T log pi_T]` by
/// reparameterised gradients. Critics are held fixed.
pub fn pi_update(
    policy: &mut IntentionPolicy,
    qbank: &QBank,
    temps: &TemperatureSet,
    s: &Matrix,
    cfg: &SacConfig,
    rng: &mut impl Rng,
) -> Result<PolicyStats> {
    let stats = pi_gradients(policy, qbank, temps, s, rng)?;
    clip_grad_norm(&mut policy.params, cfg.max_grad_norm);
    adam_step(&mut policy.params, &cfg.policy_adam())?;
    Ok(stats)
}

/// Fills `policy.params.grads` with the policy-loss gradient.
pub fn pi_gradients(
    policy: &mut IntentionPolicy,
    qbank: &QBank,
    temps: &TemperatureSet,
    s: &Matrix,
    rng: &mut impl Rng,
) -> Result<PolicyStats> {
    let tasks = policy.tasks();
    if qbank.tasks() != tasks {
        return Err(Error::Config("policy and critic task counts differ".into()));
    }
    let n = s.rows();
    let mut g = Graph::new();
    let pb = policy.spec.bind(&mut g, &policy.params)?;
    let sv = g.constant(s.clone());
    let sample = sample_all_heads(&mut g, policy, &pb, sv, rng);
    let mut s_rep = Vec::with_capacity(tasks * n * s.cols());
    for _ in 0..tasks {
        s_rep.extend_from_slice(s.data());
    }
    let s_rep = g.constant(Matrix::from_vec(tasks * n, s.cols(), s_rep));
    let x = g.concat_cols(s_rep, sample.actions);
    let b1 = qbank.spec.bind_frozen(&mut g, &qbank.q1)?;
    let b2 = qbank.spec.bind_frozen(&mut g, &qbank.q2)?;
    let q1 = qbank.spec.forward_graph(&mut g, &b1, x);
    let q2 = qbank.spec.forward_graph(&mut g, &b2, x);
    let qmin = g.min(q1, q2);
    let sel = g.constant(block_selector(tasks, n));
    let qsel = g.mul(qmin, sel);
    let qsel = g.sum_cols(qsel);
    let alphas = temps.alphas();
    let alpha_col: Vec<f64> = (0..tasks * n).map(|r| alphas[r / n]).collect();
    let alpha_v = g.constant(Matrix::from_vec(tasks * n, 1, alpha_col));
    let ent = g.mul(alpha_v, sample.log_probs);
    let obj = g.sub(ent, qsel);
    let total = g.sum(obj);
    let loss = g.scale(total, 1.0 / n as f64);
    let lp = g.value(sample.log_probs).data().to_vec();
    let mean_log_probs = (0..tasks)
        .map(|t| lp[t * n..(t + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let loss_value = g.value(loss).item();
    if !loss_value.is_finite() {
        return Err(Error::Numerical("non-finite policy loss".into()));
    }
    policy.params.zero_grad();
    backward(&mut g, loss, &pb, &mut policy.params)?;
    Ok(PolicyStats {
        loss: loss_value,
        mean_log_probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stable_tanh_correction_matches_direct_form() {
        for u in [-3.0, -0.5, 0.0, 0.2, 2.5] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            assert!((log_one_minus_tanh_sq(u) - direct).abs() < 1e-10);
        }
        assert!(log_one_minus_tanh_sq(40.0).is_finite());
    }

    #[test]
    fn deterministic_zero_mean_gives_zero_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = IntentionPolicy::new(4, 3, &[8], 2, &mut rng).unwrap();
        p.params.values.iter_mut().for_each(|v| *v = 0.0);
        let (a, lp) = p
            .sample_action(1, &[0.1, 0.2, 0.3, 0.4], false, &mut rng)
            .unwrap();
        assert_eq!(a, vec![0.0; 3]);
        assert!(lp.is_none());
    }

    #[test]
    fn polyak_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = QBank::new(1, 1, &[], 1, &mut rng).unwrap();
        q.q1.values = vec![1.0; 3];
        q.q1_target.values = vec![0.0; 3];
        q.polyak_update(1e-4);
        assert_eq!(q.q1_target.values, vec![1e-4; 3]);
        let before = q.q2_target.clone();
        q.polyak_update(0.0);
        assert_eq!(q.q2_target.values, before.values);
        q.polyak_update(1.0);
        assert_eq!(q.q1_target.values, q.q1.values);
    }

    #[test]
    fn alpha_moves_against_excess_entropy() {
        let mut t = TemperatureSet::new(2, 1e-2, -3.0);
        assert!((t.alpha(0) - 1e-2).abs() < 1e-15);
        // task 0: entropy 0 is above the target -3; task 1 sits exactly on it
        t.alpha_update(&[0.0, 3.0], &AdamConfig::new(1e-2, 0.0))
            .unwrap();
        assert!(t.alpha(0) < 1e-2);
        assert!((t.alpha(1) - 1e-2).abs() < 1e-15);
    }
}
