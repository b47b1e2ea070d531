//! The six-state deceptive-reward MDP.
//!
//! States `s1..s6` are an abstract stacking task: `s2`, `s3`, `s4` are the
//! first block reached, grasped and lifted, `s6` is the block dropped, `s5` is
//! hovering over the second block and `s1` is the reset state. Every action
//! `a^{nm}` moves deterministically from `s^n` to `s^m`, so an action also
//! identifies the state it is legal in.

use std::fmt;

use crate::error::{Error, Result};

/// Fixed episode length.
pub const HORIZON: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SixState {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
}

impl SixState {
    pub const ALL: [SixState; 6] = [
        SixState::S1,
        SixState::S2,
        SixState::S3,
        SixState::S4,
        SixState::S5,
        SixState::S6,
    ];

    /// 1-based state number.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn from_number(n: usize) -> Result<Self> {
        Self::ALL
            .get(n.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Domain(format!("no state s{n}")))
    }

    /// Legal actions, ordered by action index.
    pub fn actions(self) -> &'static [SixAction] {
        use SixAction::*;
        match self {
            SixState::S1 => &[A12, A15],
            SixState::S2 => &[A23, A26],
            SixState::S3 => &[A34, A36],
            SixState::S4 => &[A45, A46],
            SixState::S5 => &[A55],
            SixState::S6 => &[A61],
        }
    }
}

impl fmt::Display for SixState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.number())
    }
}

/// The ten state-conditional actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SixAction {
    A12,
    A15,
    A23,
    A26,
    A34,
    A36,
    A45,
    A46,
    A55,
    A61,
}

impl SixAction {
    pub const ALL: [SixAction; 10] = [
        SixAction::A12,
        SixAction::A15,
        SixAction::A23,
        SixAction::A26,
        SixAction::A34,
        SixAction::A36,
        SixAction::A45,
        SixAction::A46,
        SixAction::A55,
        SixAction::A61,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from(self) -> SixState {
        use SixAction::*;
        match self {
            A12 | A15 => SixState::S1,
            A23 | A26 => SixState::S2,
            A34 | A36 => SixState::S3,
            A45 | A46 => SixState::S4,
            A55 => SixState::S5,
            A61 => SixState::S6,
        }
    }

    pub fn to(self) -> SixState {
        use SixAction::*;
        match self {
            A61 => SixState::S1,
            A12 => SixState::S2,
            A23 => SixState::S3,
            A34 => SixState::S4,
            A15 | A45 | A55 => SixState::S5,
            A26 | A36 | A46 => SixState::S6,
        }
    }

    /// Parses `a15`, `A15` or `15`.
    pub fn parse(text: &str) -> Result<Self> {
        let digits = text.trim().trim_start_matches(['a', 'A']);
        Self::ALL
            .iter()
            .copied()
            .find(|a| format!("{}{}", a.from().number(), a.to().number()) == digits)
            .ok_or_else(|| Error::Domain(format!("unknown action `{text}`")))
    }

    /// True reward of the underlying task.
    pub fn true_reward(self) -> f64 {
        match self {
            SixAction::A55 => 1.0,
            SixAction::A15 => -5.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for SixAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}{}", self.from().number(), self.to().number())
    }
}

/// One episode of the six-state MDP.
#[derive(Debug, Clone)]
pub struct SixStateMdp {
    state: SixState,
    timestep: usize,
}

impl Default for SixStateMdp {
    fn default() -> Self {
        Self::new()
    }
}

impl SixStateMdp {
    pub fn new() -> Self {
        Self {
            state: SixState::S1,
            timestep: 0,
        }
    }

    pub fn reset(&mut self) -> SixState {
        *self = Self::new();
        self.state
    }

    pub fn state(&self) -> SixState {
        self.state
    }

    /// Number of steps already taken in this episode.
    pub fn timestep(&self) -> usize {
        self.timestep
    }

    /// Returns `(next_state, true_reward, done)`.
    pub fn step(&mut self, action: SixAction) -> Result<(SixState, f64, bool)> {
        if self.timestep >= HORIZON {
            return Err(Error::Domain("episode already finished".into()));
        }
        if action.from() != self.state {
            return Err(Error::Domain(format!(
                "action {action} is illegal in state {}",
                self.state
            )));
        }
        self.state = action.to();
        self.timestep += 1;
        Ok((self.state, action.true_reward(), self.timestep == HORIZON))
    }
}

/// Sum of true rewards along an action sequence started from `s1`.
pub fn true_return(actions: &[SixAction]) -> Result<f64> {
    let mut mdp = SixStateMdp::new();
    let mut total = 0.0;
    for &a in actions {
        total += mdp.step(a)?.1;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SixAction::*;

    #[test]
    fn deceptive_first_step_costs_five() {
        let mut mdp = SixStateMdp::new();
        assert_eq!(mdp.step(A15).unwrap(), (SixState::S5, -5.0, false));
    }

    #[test]
    fn hover_pays_one() {
        let mut mdp = SixStateMdp::new();
        mdp.step(A15).unwrap();
        assert_eq!(mdp.step(A55).unwrap(), (SixState::S5, 1.0, false));
    }

    #[test]
    fn illegal_action_is_domain_error() {
        let mut mdp = SixStateMdp::new();
        assert!(matches!(mdp.step(A23), Err(Error::Domain(_))));
    }

    #[test]
    fn horizon_is_five() {
        let mut mdp = SixStateMdp::new();
        let mut done = false;
        for a in [A12, A23, A34, A45, A55] {
            done = mdp.step(a).unwrap().2;
        }
        assert!(done);
        assert!(mdp.step(A55).is_err());
    }

    #[test]
    fn optimal_and_deceptive_returns() {
        assert_eq!(true_return(&[A12, A23, A34, A45, A55]).unwrap(), 1.0);
        assert_eq!(true_return(&[A15, A55, A55, A55, A55]).unwrap(), -1.0);
    }

    #[test]
    fn parse_round_trips() {
        for a in SixAction::ALL {
            assert_eq!(SixAction::parse(&a.to_string()).unwrap(), a);
        }
        assert!(SixAction::parse("a13").is_err());
    }
}
