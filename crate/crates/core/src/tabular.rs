//! Tabular Q-learning on the six-state MDP with perfect-discriminator rewards.
//!
//! Reproduces the deceptive local maximum reached by plain adversarial
//! imitation and the escape obtained by adding a go-right auxiliary task whose
//! transitions land in the buffer shared with the main task.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::six_state::{SixAction, SixState, SixStateMdp, HORIZON};
use crate::error::{Error, Result};

/// Q-learning step size.
pub const LEARNING_RATE: f64 = 0.1;
/// Sweeps stop once no entry moved by more than this.
pub const CONVERGENCE_TOL: f64 = 1e-9;
pub const MAX_SWEEPS: usize = 1_000_000;
/// Exploration rate for the epsilon-greedy runs.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// The three scripted episodes that lead plain AIL into the local maximum.
pub const SCRIPTED_EPISODES: [[SixAction; HORIZON]; 3] = {
    use SixAction::*;
    [
        [A15, A55, A55, A55, A55],
        [A12, A26, A61, A15, A55],
        [A12, A23, A36, A61, A15],
    ]
};

/// How the update bootstraps from the successor state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bootstrap {
    /// Bootstrap from the action actually stored after this one in the
    /// buffer. This is the convention that reproduces the reported values.
    NextAction,
    /// Textbook `max_a Q(s', a)` over the legal actions of `s'`.
    Max,
}

/// One stored step. `next_action` is `None` on the last step of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabTransition {
    pub action: SixAction,
    pub next_action: Option<SixAction>,
    pub terminal: bool,
}

impl TabTransition {
    pub fn state(&self) -> SixState {
        self.action.from()
    }

    pub fn next_state(&self) -> SixState {
        self.action.to()
    }
}

/// Q values for the ten legal pairs, zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: [f64; 10],
    pub lr: f64,
}

impl Default for QTable {
    fn default() -> Self {
        Self::new()
    }
}

impl QTable {
    pub fn new() -> Self {
        Self {
            values: [0.0; 10],
            lr: LEARNING_RATE,
        }
    }

    pub fn get(&self, action: SixAction) -> f64 {
        self.values[action.index()]
    }

    pub fn set(&mut self, action: SixAction, value: f64) {
        self.values[action.index()] = value;
    }

    pub fn values(&self) -> &[f64; 10] {
        &self.values
    }

    fn max_at(&self, state: SixState) -> f64 {
        state
            .actions()
            .iter()
            .map(|&a| self.get(a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties go to the lowest action index.
    pub fn greedy(&self, state: SixState) -> SixAction {
        let mut best = state.actions()[0];
        for &a in &state.actions()[1..] {
            if self.get(a) > self.get(best) {
                best = a;
            }
        }
        best
    }

    /// The greedy rollout from `s1` over the full horizon.
    pub fn greedy_path(&self) -> Vec<SixAction> {
        let mut state = SixState::S1;
        (0..HORIZON)
            .map(|_| {
                let a = self.greedy(state);
                state = a.to();
                a
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `+1` for pairs in the expert set, `-1` otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerfectDiscriminatorReward {
    expert: BTreeSet<SixAction>,
}

impl PerfectDiscriminatorReward {
    pub fn new(expert: impl IntoIterator<Item = SixAction>) -> Self {
        Self {
            expert: expert.into_iter().collect(),
        }
    }

    /// Pairs of the optimal demonstration.
    pub fn main_task() -> Self {
        use SixAction::*;
        Self::new([A12, A23, A34, A45, A55])
    }

    pub fn go_right() -> Self {
        use SixAction::*;
        Self::new([A12, A23, A34])
    }

    pub fn reward(&self, action: SixAction) -> f64 {
        if self.expert.contains(&action) {
            1.0
        } else {
            -1.0
        }
    }
}

/// Any per-pair reward used by [`converge`] and [`brute_force_optimal`].
pub trait PairReward {
    fn pair_reward(&self, action: SixAction) -> f64;
}

impl PairReward for PerfectDiscriminatorReward {
    fn pair_reward(&self, action: SixAction) -> f64 {
        self.reward(action)
    }
}

impl<F: Fn(SixAction) -> f64> PairReward for F {
    fn pair_reward(&self, action: SixAction) -> f64 {
        self(action)
    }
}

/// The true task reward.
pub fn true_reward(action: SixAction) -> f64 {
    action.true_reward()
}

/// Episode behaviour.
#[derive(Debug, Clone, Copy)]
pub enum Behaviour<'a> {
    Script(&'a [SixAction]),
    EpsilonGreedy(f64),
}

/// Runs one episode and appends its transitions to `buffer`.
pub fn run_episode(
    qtable: &QTable,
    behaviour: Behaviour<'_>,
    buffer: &mut Vec<TabTransition>,
    rng: &mut impl Rng,
) -> Result<Vec<SixAction>> {
    let mut mdp = SixStateMdp::new();
    let mut actions = Vec::with_capacity(HORIZON);
    for t in 0..HORIZON {
        let state = mdp.state();
        let action = match behaviour {
            Behaviour::Script(seq) => *seq.get(t).ok_or_else(|| {
                Error::Domain(format!("script has {} actions, need {HORIZON}", seq.len()))
            })?,
            Behaviour::EpsilonGreedy(eps) => {
                if rng.gen::<f64>() < eps {
                    let legal = state.actions();
                    legal[rng.gen_range(0..legal.len())]
                } else {
                    qtable.greedy(state)
                }
            }
        };
        mdp.step(action)?;
        actions.push(action);
    }
    let start = buffer.len();
    for (i, &action) in actions.iter().enumerate() {
        buffer.push(TabTransition {
            action,
            next_action: actions.get(i + 1).copied(),
            terminal: i + 1 == HORIZON,
        });
    }
    debug_assert_eq!(buffer.len() - start, HORIZON);
    Ok(actions)
}

/// One in-order pass of the Q-learning update over `buffer`.
pub fn sweep(
    qtable: &mut QTable,
    buffer: &[TabTransition],
    reward: &impl PairReward,
    bootstrap: Bootstrap,
) {
    for tr in buffer {
        let next_value = if tr.terminal {
            0.0
        } else {
            match (bootstrap, tr.next_action) {
                (Bootstrap::NextAction, Some(next)) => qtable.get(next),
                _ => qtable.max_at(tr.next_state()),
            }
        };
        let target = reward.pair_reward(tr.action) + next_value;
        let q = qtable.get(tr.action);
        qtable.set(tr.action, q + qtable.lr * (target - q));
    }
}

/// Full-buffer sweeps until the table moves by less than [`CONVERGENCE_TOL`]
/// between consecutive sweeps. Returns the number of sweeps.
pub fn converge(
    qtable: &mut QTable,
    buffer: &[TabTransition],
    reward: &impl PairReward,
    bootstrap: Bootstrap,
) -> Result<usize> {
    if buffer.is_empty() {
        return Err(Error::Usage("converge needs a non-empty buffer".into()));
    }
    for n in 1..=MAX_SWEEPS {
        let before = qtable.clone();
        sweep(qtable, buffer, reward, bootstrap);
        let delta = qtable.max_abs_diff(&before);
        if !delta.is_finite() {
            return Err(Error::Numerical("Q values diverged".into()));
        }
        if delta < CONVERGENCE_TOL {
            return Ok(n);
        }
    }
    Err(Error::Numerical(format!(
        "Q-learning did not converge within {MAX_SWEEPS} sweeps"
    )))
}

/// Exhaustive search over every legal action sequence of full horizon.
/// Ties keep the lexicographically first sequence in action-index order.
pub fn brute_force_optimal(reward: &impl PairReward) -> (f64, Vec<SixAction>) {
    fn recurse(
        state: SixState,
        depth: usize,
        prefix: &mut Vec<SixAction>,
        acc: f64,
        reward: &impl PairReward,
        best: &mut (f64, Vec<SixAction>),
    ) {
        if depth == HORIZON {
            if acc > best.0 {
                *best = (acc, prefix.clone());
            }
            return;
        }
        for &a in state.actions() {
            prefix.push(a);
            recurse(
                a.to(),
                depth + 1,
                prefix,
                acc + reward.pair_reward(a),
                reward,
                best,
            );
            prefix.pop();
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    recurse(SixState::S1, 0, &mut Vec::new(), 0.0, reward, &mut best);
    best
}

/// Every legal full-horizon sequence with its return under `reward`.
pub fn enumerate_sequences(reward: &impl PairReward) -> Vec<(Vec<SixAction>, f64)> {
    let mut out = Vec::new();
    let mut stack = vec![(SixState::S1, Vec::new(), 0.0)];
    while let Some((state, prefix, acc)) = stack.pop() {
        if prefix.len() == HORIZON {
            out.push((prefix, acc));
            continue;
        }
        for &a in state.actions().iter().rev() {
            let mut next = prefix.clone();
            next.push(a);
            stack.push((a.to(), next, acc + reward.pair_reward(a)));
        }
    }
    out
}

/// Per-episode replay of the three scripted episodes, recording `Q(s1, a15)`
/// and `Q(s1, a12)` after each convergence.
pub fn replay_scripted(bootstrap: Bootstrap) -> Result<(QTable, Vec<(f64, f64)>)> {
    let reward = PerfectDiscriminatorReward::main_task();
    let mut q = QTable::new();
    let mut buffer = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut trace = Vec::new();
    for episode in &SCRIPTED_EPISODES {
        run_episode(&q, Behaviour::Script(episode), &mut buffer, &mut rng)?;
        converge(&mut q, &buffer, &reward, bootstrap)?;
        trace.push((q.get(SixAction::A15), q.get(SixAction::A12)));
    }
    Ok((q, trace))
}

/// Settings for the tabular multitask run.
#[derive(Debug, Clone)]
pub struct TabularRunConfig {
    pub episodes: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Probability that the main intention drives an episode. The remainder
    /// is split evenly over auxiliary tasks.
    pub main_rate: f64,
    pub bootstrap: Bootstrap,
    /// Open with the three scripted episodes before epsilon-greedy play.
    pub scripted_opening: bool,
}

impl Default for TabularRunConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            main_rate: 0.5,
            bootstrap: Bootstrap::NextAction,
            scripted_opening: true,
        }
    }
}

/// Result of [`run_lfgp_tabular`].
#[derive(Debug, Clone)]
pub struct TabularRunResult {
    /// Main task first, then auxiliary tasks in input order.
    pub qtables: Vec<QTable>,
    pub greedy_main_path: Vec<SixAction>,
    pub greedy_main_true_return: f64,
    /// Which intention drove each episode (0 = main).
    pub schedule: Vec<usize>,
}

/// Multitask tabular learning over a shared buffer. With no auxiliary sets
/// this is plain adversarial imitation with a perfect discriminator.
pub fn run_lfgp_tabular(
    main: &PerfectDiscriminatorReward,
    aux: &[PerfectDiscriminatorReward],
    config: &TabularRunConfig,
) -> Result<TabularRunResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rewards: Vec<&PerfectDiscriminatorReward> =
        std::iter::once(main).chain(aux.iter()).collect();
    let mut qtables = vec![QTable::new(); rewards.len()];
    let mut buffer = Vec::with_capacity(config.episodes * HORIZON);
    let mut schedule = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let intention = if aux.is_empty() || rng.gen::<f64>() < config.main_rate {
            0
        } else {
            1 + rng.gen_range(0..aux.len())
        };
        schedule.push(intention);
        let behaviour = match SCRIPTED_EPISODES.get(episode) {
            Some(script) if config.scripted_opening => Behaviour::Script(script),
            _ => Behaviour::EpsilonGreedy(config.epsilon),
        };
        run_episode(&qtables[intention], behaviour, &mut buffer, &mut rng)?;
        for (q, reward) in qtables.iter_mut().zip(rewards.iter()) {
            converge(q, &buffer, *reward, config.bootstrap)?;
        }
    }
    let greedy_main_path = qtables[0].greedy_path();
    let greedy_main_true_return = crate::envs::six_state::true_return(&greedy_main_path)?;
    Ok(TabularRunResult {
        qtables,
        greedy_main_path,
        greedy_main_true_return,
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use SixAction::*;

    #[test]
    fn first_scripted_episode_reaches_two_point_seven() {
        let (_, trace) = replay_scripted(Bootstrap::NextAction).unwrap();
        assert!((trace[0].0 - 2.7).abs() < 1e-6);
        assert_eq!(trace[0].1, 0.0);
    }

    #[test]
    fn zero_reward_keeps_table_zero() {
        let mut buffer = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q0 = QTable::new();
        for ep in &SCRIPTED_EPISODES {
            run_episode(&q0, Behaviour::Script(ep), &mut buffer, &mut rng).unwrap();
        }
        let mut q = QTable::new();
        let sweeps = converge(&mut q, &buffer, &|_: SixAction| 0.0, Bootstrap::Max).unwrap();
        assert_eq!(sweeps, 1);
        assert_eq!(q, QTable::new());
    }

    #[test]
    fn empty_buffer_is_rejected() {
        let mut q = QTable::new();
        let r = PerfectDiscriminatorReward::main_task();
        assert!(converge(&mut q, &[], &r, Bootstrap::Max).is_err());
    }

    #[test]
    fn greedy_ties_take_lowest_index() {
        let q = QTable::new();
        assert_eq!(q.greedy(SixState::S1), A12);
        assert_eq!(q.greedy_path(), vec![A12, A23, A34, A45, A55]);
    }

    #[test]
    fn brute_force_true_reward() {
        let (ret, path) = brute_force_optimal(&true_reward);
        assert_eq!(ret, 1.0);
        assert_eq!(path, vec![A12, A23, A34, A45, A55]);
        let all = enumerate_sequences(&true_reward);
        assert!(all.len() <= 32);
        let deceptive = all.iter().find(|(p, _)| p[0] == A15).unwrap();
        assert_eq!(deceptive.1, -1.0);
    }

    #[test]
    fn brute_force_zero_reward() {
        let zero = |_: SixAction| 0.0;
        assert!(enumerate_sequences(&zero).iter().all(|(_, r)| *r == 0.0));
        assert_eq!(brute_force_optimal(&zero).0, 0.0);
    }

    #[test]
    fn illegal_script_is_domain_error() {
        let mut buffer = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = [A12, A34, A45, A55, A55];
        let err = run_episode(
            &QTable::new(),
            Behaviour::Script(&bad),
            &mut buffer,
            &mut rng,
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn duplicate_aux_task_learns_identical_table() {
        let main = PerfectDiscriminatorReward::main_task();
        let cfg = TabularRunConfig {
            episodes: 30,
            seed: 3,
            ..Default::default()
        };
        let run = run_lfgp_tabular(&main, std::slice::from_ref(&main), &cfg).unwrap();
        assert_eq!(run.qtables[0], run.qtables[1]);
    }
}
