use rand::Rng;

use super::{Batch, ExpertBuffer, ReplayBuffer, Transition};
use crate::error::{Error, Result};

/// Probability of drawing a policy-batch row from expert data, decayed once
/// per sampled batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpertMix {
    pub proportion: f64,
    pub decay: f64,
}

impl ExpertMix {
    pub fn new(proportion: f64, decay: f64) -> Self {
        Self { proportion, decay }
    }

    pub fn off() -> Self {
        Self::new(0.0, 1.0)
    }
}

/// Rows come from the experts with probability `mix.proportion` (uniform over
/// tasks, then over that task's pairs) and from replay otherwise. The
/// proportion decays after the draw.
pub fn sample_policy_batch(
    replay: &ReplayBuffer,
    experts: &[ExpertBuffer],
    batch_size: usize,
    mix: &mut ExpertMix,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if replay.is_empty() {
        return Err(Error::Warmup("replay buffer is empty".into()));
    }
    let usable: Vec<&ExpertBuffer> = experts.iter().filter(|e| !e.is_empty()).collect();
    let first = replay.slot(0);
    let mut rows: Vec<(&Transition, bool)> = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        if !usable.is_empty() && mix.proportion > 0.0 && rng.gen::<f64>() < mix.proportion {
            let e = usable[rng.gen_range(0..usable.len())];
            rows.push((&e.pairs()[rng.gen_range(0..e.len())], true));
        } else {
            rows.push((replay.slot(rng.gen_range(0..replay.len())), false));
        }
    }
    mix.proportion *= mix.decay;
    Ok(Batch::from_rows(&rows, first.s.len(), first.a.len()))
}

/// Expert rows for one task. With `final_pair_bias > 0` each row is a final
/// pair with that probability and a regular pair otherwise; with zero bias
/// rows are uniform over all pairs.
pub fn sample_discriminator_batch(
    expert: &ExpertBuffer,
    batch_size: usize,
    final_pair_bias: f64,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if !(0.0..=1.0).contains(&final_pair_bias) {
        return Err(Error::Config(format!(
            "final-pair bias {final_pair_bias} outside [0, 1]"
        )));
    }
    if expert.is_empty() {
        return Err(Error::Config(format!(
            "expert buffer for `{}` is empty",
            expert.task
        )));
    }
    let finals = expert.final_pair_indices();
    let regular = expert.regular_len();
    if final_pair_bias > 0.0 && finals.is_empty() {
        return Err(Error::Config(format!(
            "final-pair bias requested but `{}` has no final pairs",
            expert.task
        )));
    }
    if final_pair_bias < 1.0 && final_pair_bias > 0.0 && regular == 0 {
        return Err(Error::Config(format!(
            "`{}` has only final pairs",
            expert.task
        )));
    }
    let pairs = expert.pairs();
    let mut rows = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let i = if final_pair_bias == 0.0 {
            rng.gen_range(0..pairs.len())
        } else if rng.gen::<f64>() < final_pair_bias {
            finals[rng.gen_range(0..finals.len())]
        } else {
            rng.gen_range(0..regular)
        };
        rows.push((&pairs[i], true));
    }
    Ok(Batch::from_rows(&rows, expert.obs_dim, expert.act_dim))
}
