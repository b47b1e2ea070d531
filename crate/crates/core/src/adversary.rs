//! Per-task discriminators sharing one trunk, their joint loss and the
//! reward they induce.

use std::str::FromStr;

use rand::Rng;

use crate::buffers::Batch;
use crate::error::{Error, Result};
use crate::ndgrad::{
    adam_step, backward, clip_grad_norm, Activation, AdamConfig, Binding, Graph, Matrix, MlpSpec,
    ParamStore, Var,
};

/// Rewards are clamped to this magnitude.
pub const REWARD_CLAMP: f64 = 20.0;

/// Map from discriminator logit `z` (with `D = sigmoid(z)`) to reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardForm {
    /// `log D - log(1 - D)`, equal to `z`.
    Airl,
    /// `-log(1 - D)`.
    Gail,
    /// `log D`.
    LogD,
}

impl RewardForm {
    pub fn name(self) -> &'static str {
        match self {
            RewardForm::Airl => "airl",
            RewardForm::Gail => "gail",
            RewardForm::LogD => "log-d",
        }
    }

    /// Unclamped reward for logit `z`.
    pub fn raw(self, z: f64) -> f64 {
        match self {
            RewardForm::Airl => z,
            RewardForm::Gail => crate::ndgrad::softplus(z),
            RewardForm::LogD => -crate::ndgrad::softplus(-z),
        }
    }

    pub fn reward(self, z: f64) -> f64 {
        self.raw(z).clamp(-REWARD_CLAMP, REWARD_CLAMP)
    }
}

impl FromStr for RewardForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "airl" => Ok(RewardForm::Airl),
            "gail" => Ok(RewardForm::Gail),
            "log-d" => Ok(RewardForm::LogD),
            _ => Err(Error::Config(format!("unknown reward form `{s}`"))),
        }
    }
}

/// AIRL reward for a single logit: `log D - log(1 - D)` clamped to ±20.
pub fn airl_reward(logit: f64) -> f64 {
    RewardForm::Airl.reward(logit)
}

/// Quantity whose input gradient the penalty drives towards unit norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyTarget {
    /// `D = sigmoid(z)`.
    Probability,
    /// The logit `z`.
    Logit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientPenalty {
    pub lambda: f64,
    pub target: PenaltyTarget,
}

impl Default for GradientPenalty {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            target: PenaltyTarget::Probability,
        }
    }
}

/// One logit per task from a shared tanh trunk over `(s, a)`.
#[derive(Clone, Debug)]
pub struct DiscriminatorBank {
    pub spec: MlpSpec,
    pub params: ParamStore,
    obs_dim: usize,
    act_dim: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiscriminatorStats {
    pub loss: f64,
    pub bce: f64,
    pub penalty: f64,
    /// Mean `D` on policy rows, averaged over tasks.
    pub policy_d: f64,
    /// Mean `D_T` on task `T`'s expert rows, averaged over tasks.
    pub expert_d: f64,
}

impl DiscriminatorBank {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        tasks: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let spec = MlpSpec::new(
            obs_dim + act_dim,
            hidden.iter().map(|&w| (w, Activation::Tanh)).collect(),
            tasks,
        )?;
        let params = spec.init(rng);
        Ok(Self {
            spec,
            params,
            obs_dim,
            act_dim,
        })
    }

    pub fn from_parts(
        spec: MlpSpec,
        params: ParamStore,
        obs_dim: usize,
        act_dim: usize,
    ) -> Result<Self> {
        if spec.input_dim != obs_dim + act_dim || params.len() != spec.param_count() {
            return Err(Error::Config(
                "discriminator parts do not fit together".into(),
            ));
        }
        Ok(Self {
            spec,
            params,
            obs_dim,
            act_dim,
        })
    }

    pub fn tasks(&self) -> usize {
        self.spec.output_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    fn inputs(&self, s: &Matrix, a: &Matrix) -> Result<Matrix> {
        if s.cols() != self.obs_dim || a.cols() != self.act_dim || s.rows() != a.rows() {
            return Err(Error::Config(format!(
                "discriminator expects ({}, {}) columns, got ({}, {})",
                self.obs_dim,
                self.act_dim,
                s.cols(),
                a.cols()
            )));
        }
        let mut out = Vec::with_capacity(s.rows() * (self.obs_dim + self.act_dim));
        for r in 0..s.rows() {
            out.extend_from_slice(s.row_slice(r));
            out.extend_from_slice(a.row_slice(r));
        }
        Ok(Matrix::from_vec(s.rows(), self.obs_dim + self.act_dim, out))
    }

    /// Logits, one row per example and one column per task.
    pub fn logits(&self, s: &Matrix, a: &Matrix) -> Result<Matrix> {
        let x = self.inputs(s, a)?;
        self.spec.forward_batch(&self.params, &x)
    }

    /// Clamped rewards, one column per task.
    pub fn rewards(&self, s: &Matrix, a: &Matrix, form: RewardForm) -> Result<Matrix> {
        Ok(self.logits(s, a)?.map(|z| form.reward(z)))
    }

    /// Reward of one `(s, a)` pair for task index `task`.
    pub fn reward(&self, task: usize, s: &[f64], a: &[f64], form: RewardForm) -> Result<f64> {
        if task >= self.tasks() {
            return Err(Error::Config(format!("task index {task} out of range")));
        }
        let z = self.logits(&Matrix::row(s), &Matrix::row(a))?;
        Ok(form.reward(z.get(0, task)))
    }

    /// Records the joint loss on `g`.
    ///
    /// `sum_T [ -mean_B log(1 - D_T) - mean_{E_T} log D_T ] + lambda * P`, where
    /// `P` averages `(|grad_x D_T(x_hat)| - 1)^2` over tasks and rows, with
    /// `x_hat` interpolated between the `i`-th policy row and the `i`-th row of
    /// the task's expert batch by one uniform coefficient per pair.
    pub fn loss(
        &self,
        g: &mut Graph,
        binding: &Binding,
        policy: &Batch,
        experts: &[Batch],
        gp: GradientPenalty,
        rng: &mut impl Rng,
    ) -> Result<(Var, DiscriminatorStats)> {
        let t = self.tasks();
        if experts.len() != t {
            return Err(Error::Config(format!(
                "{} expert batches for {t} discriminator heads",
                experts.len()
            )));
        }
        if policy.is_empty() || experts.iter().any(|e| e.is_empty()) {
            return Err(Error::Config("empty discriminator batch".into()));
        }
        let n = policy.len();
        let xp = self.inputs(&policy.s, &policy.a)?;
        let xe_parts: Vec<Matrix> = experts
            .iter()
            .map(|e| self.inputs(&e.s, &e.a))
            .collect::<Result<_>>()?;

        // policy term: every head sees every policy row
        let xp_v = g.constant(xp.clone());
        let zp = self.spec.forward_graph(g, binding, xp_v);
        let sp = g.softplus(zp);
        let policy_term = g.sum(sp);
        let policy_term = g.scale(policy_term, 1.0 / n as f64);

        // expert term: head T only sees expert batch T
        let d = xp.cols();
        let mut xe = Vec::new();
        let mut mask = Vec::new();
        let mut weights = Vec::new();
        for (k, m) in xe_parts.iter().enumerate() {
            xe.extend_from_slice(m.data());
            for _ in 0..m.rows() {
                mask.extend((0..t).map(|c| (c == k) as u8 as f64));
                weights.push(1.0 / m.rows() as f64);
            }
        }
        let rows_e = weights.len();
        let xe_v = g.constant(Matrix::from_vec(rows_e, d, xe));
        let ze = self.spec.forward_graph(g, binding, xe_v);
        let neg = g.neg(ze);
        let se = g.softplus(neg);
        let w: Vec<f64> = mask
            .iter()
            .enumerate()
            .map(|(i, &m)| m * weights[i / t])
            .collect();
        let w_v = g.constant(Matrix::from_vec(rows_e, t, w));
        let se = g.mul(se, w_v);
        let expert_term = g.sum(se);
        let bce = g.add(policy_term, expert_term);

        let zp_val = g.value(zp).clone();
        let ze_val = g.value(ze).clone();
        for z in [&zp_val, &ze_val] {
            if !z.all_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite discriminator logits (max |param| = {:.3e})",
                    self.params
                        .values
                        .iter()
                        .fold(0.0f64, |m, v| m.max(v.abs()))
                )));
            }
        }

        let (total, penalty_value) = if gp.lambda > 0.0 {
            let mut xi = Vec::with_capacity(t * n * d);
            let mut sel = Vec::with_capacity(t * n * t);
            for (k, m) in xe_parts.iter().enumerate() {
                for i in 0..n {
                    let u: f64 = rng.gen();
                    let pe = m.row_slice(i % m.rows());
                    let pp = xp.row_slice(i);
                    xi.extend(pe.iter().zip(pp).map(|(e, p)| u * e + (1.0 - u) * p));
                    sel.extend((0..t).map(|c| (c == k) as u8 as f64));
                }
            }
            let xi_v = g.variable(Matrix::from_vec(t * n, d, xi));
            let zi = self.spec.forward_graph(g, binding, xi_v);
            let out = match gp.target {
                PenaltyTarget::Probability => g.sigmoid(zi),
                PenaltyTarget::Logit => zi,
            };
            let sel_v = g.constant(Matrix::from_vec(t * n, t, sel));
            let picked = g.mul(out, sel_v);
            let s = g.sum(picked);
            let grad_x = g.grad(s, &[xi_v])?[0]
                .ok_or_else(|| Error::Numerical("penalty input gradient missing".into()))?;
            let sq = g.square(grad_x);
            let norms2 = g.sum_cols(sq);
            let norms2 = g.add_scalar(norms2, 1e-12);
            let norms = g.sqrt(norms2);
            let dev = g.add_scalar(norms, -1.0);
            let dev2 = g.square(dev);
            let penalty = g.mean(dev2);
            let scaled = g.scale(penalty, gp.lambda);
            (g.add(bce, scaled), g.value(penalty).item())
        } else {
            (bce, 0.0)
        };

        let sig = |z: f64| crate::ndgrad::sigmoid(z);
        let policy_d = zp_val.data().iter().map(|&z| sig(z)).sum::<f64>() / (n * t) as f64;
        let expert_d = (0..rows_e)
            .map(|r| {
                mask[r * t..(r + 1) * t]
                    .iter()
                    .zip(ze_val.row_slice(r))
                    .map(|(m, &z)| m * sig(z))
                    .sum::<f64>()
                    * weights[r]
            })
            .sum::<f64>()
            / t as f64;
        let stats = DiscriminatorStats {
            loss: g.value(total).item(),
            bce: g.value(bce).item(),
            penalty: penalty_value,
            policy_d,
            expert_d,
        };
        if !stats.loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite discriminator loss: {stats:?}"
            )));
        }
        Ok((total, stats))
    }

    /// Fills `params.grads` with the loss gradient (previous grads cleared).
    pub fn compute_gradients(
        &mut self,
        policy: &Batch,
        experts: &[Batch],
        gp: GradientPenalty,
        rng: &mut impl Rng,
    ) -> Result<DiscriminatorStats> {
        let mut g = Graph::new();
        let binding = self.spec.bind(&mut g, &self.params)?;
        let (loss, stats) = self.loss(&mut g, &binding, policy, experts, gp, rng)?;
        self.params.zero_grad();
        backward(&mut g, loss, &binding, &mut self.params)?;
        Ok(stats)
    }

    /// One clipped Adam step on the joint loss.
    pub fn update(
        &mut self,
        policy: &Batch,
        experts: &[Batch],
        gp: GradientPenalty,
        adam: &AdamConfig,
        max_grad_norm: f64,
        rng: &mut impl Rng,
    ) -> Result<DiscriminatorStats> {
        let stats = self.compute_gradients(policy, experts, gp, rng)?;
        clip_grad_norm(&mut self.params, max_grad_norm);
        adam_step(&mut self.params, adam)?;
        Ok(stats)
    }
}
