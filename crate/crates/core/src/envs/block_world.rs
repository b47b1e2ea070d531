//! Side view of a tray with two blocks and a point gripper.
//!
//! `x` is horizontal, `y` vertical. Block `A` is the one manipulated, block
//! `B` is the stacking base. There is no gravity: an unheld block stays
//! exactly where it is and a held block follows the gripper.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{EnvConfig, Variant};
use super::tasks::TaskId;
use crate::error::{Error, Result};

pub const ACTION_DIM: usize = 3;
pub const OBS_DIM: usize = 15;

pub const BLOCK_A: usize = 0;
pub const BLOCK_B: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockState {
    pub agent: [f64; 2],
    /// 0 is fully closed, 1 fully open.
    pub gripper: f64,
    pub blocks: [[f64; 2]; 2],
    pub block_vel: [[f64; 2]; 2],
    pub held: Option<usize>,
    pub step: usize,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl BlockState {
    pub fn block_a(&self) -> [f64; 2] {
        self.blocks[BLOCK_A]
    }

    pub fn block_b(&self) -> [f64; 2] {
        self.blocks[BLOCK_B]
    }

    pub fn gripper_closed(&self, cfg: &EnvConfig) -> bool {
        self.gripper < cfg.closed_threshold
    }

    pub fn gripper_open(&self, cfg: &EnvConfig) -> bool {
        self.gripper >= cfg.open_threshold
    }

    pub fn in_bounds(&self, cfg: &EnvConfig) -> bool {
        let half = cfg.block_size / 2.0;
        let inside = |p: [f64; 2], lo_y: f64| {
            (0.0..=cfg.tray_width).contains(&p[0]) && (lo_y..=cfg.tray_height).contains(&p[1])
        };
        inside(self.agent, half)
            && self.blocks.iter().all(|&b| inside(b, half))
            && (0.0..=1.0).contains(&self.gripper)
    }

    /// Observation in tray-normalised units.
    pub fn observation(&self, cfg: &EnvConfig) -> Vec<f64> {
        let w = cfg.tray_width;
        let vmax = cfg.max_step / cfg.dt;
        let a = self.block_a();
        let b = self.block_b();
        vec![
            self.agent[0] / w,
            self.agent[1] / w,
            self.gripper,
            (self.held == Some(BLOCK_A)) as u8 as f64,
            (self.held == Some(BLOCK_B)) as u8 as f64,
            a[0] / w,
            a[1] / w,
            b[0] / w,
            b[1] / w,
            (a[0] - self.agent[0]) / w,
            (a[1] - self.agent[1]) / w,
            (a[0] - b[0]) / w,
            (a[1] - b[1]) / w,
            self.block_vel[BLOCK_A][0] / vmax,
            self.block_vel[BLOCK_A][1] / vmax,
        ]
    }

    /// Whether block `top` rests on block `base` within the stacking tolerances.
    pub fn stacked(&self, cfg: &EnvConfig, top: usize, base: usize) -> bool {
        let t = self.blocks[top];
        let b = self.blocks[base];
        (t[0] - b[0]).abs() < cfg.stack_x_tolerance
            && (t[1] - b[1] - cfg.block_size).abs() < cfg.stack_y_tolerance
    }

    pub fn bring_zone(cfg: &EnvConfig) -> [f64; 2] {
        [cfg.bring_zone_x, cfg.block_size / 2.0]
    }
}

/// Success predicate. Depends on the state only.
pub fn success(cfg: &EnvConfig, task: TaskId, s: &BlockState) -> bool {
    let a = s.block_a();
    match task {
        TaskId::Reach => dist(s.agent, a) < cfg.reach_threshold,
        TaskId::Lift => s.held == Some(BLOCK_A) && a[1] - cfg.block_size / 2.0 > cfg.lift_height,
        TaskId::Move => {
            let v = s.block_vel[BLOCK_A];
            s.held == Some(BLOCK_A) && v[0].hypot(v[1]) > cfg.move_speed
        }
        TaskId::Stack | TaskId::UnstackStack => {
            s.held.is_none()
                && s.stacked(cfg, BLOCK_A, BLOCK_B)
                && s.gripper_open(cfg)
                && dist(s.agent, a) > cfg.grasp_radius
        }
        TaskId::Bring => dist(a, BlockState::bring_zone(cfg)) < cfg.bring_tolerance,
        TaskId::Insert => {
            s.held.is_none() && dist(a, BlockState::bring_zone(cfg)) < cfg.insert_tolerance
        }
        TaskId::OpenGripper => s.gripper_open(cfg),
        TaskId::CloseGripper => s.gripper_closed(cfg),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    /// Main-task success indicator.
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone, Debug)]
pub struct BlockWorld {
    cfg: EnvConfig,
    state: BlockState,
}

impl BlockWorld {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let half = cfg.block_size / 2.0;
        let state = BlockState {
            agent: [cfg.tray_width / 2.0, cfg.tray_height],
            gripper: 1.0,
            blocks: [
                [cfg.tray_width / 3.0, half],
                [2.0 * cfg.tray_width / 3.0, half],
            ],
            block_vel: [[0.0; 2]; 2],
            held: None,
            step: 0,
        };
        Ok(Self { cfg, state })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &BlockState {
        &self.state
    }

    /// Replaces the state, e.g. to start from a hand-built configuration.
    pub fn set_state(&mut self, state: BlockState) -> Result<()> {
        if !state.in_bounds(&self.cfg) {
            return Err(Error::Domain("state outside tray bounds".into()));
        }
        self.state = state;
        Ok(())
    }

    pub fn main_task(&self) -> TaskId {
        TaskId::main_for(self.cfg.variant)
    }

    pub fn observation(&self) -> Vec<f64> {
        self.state.observation(&self.cfg)
    }

    pub fn reset_seeded(&mut self, seed: u64) -> Vec<f64> {
        self.reset(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform agent, gripper and floor positions; block B placed on A for
    /// the unstack-stack variant.
    pub fn reset(&mut self, rng: &mut impl Rng) -> Vec<f64> {
        let c = &self.cfg;
        let half = c.block_size / 2.0;
        // Blocks stay clear of the tray edge and the bring zone.
        let lo = c.block_size;
        let hi = (c.bring_zone_x - c.min_block_gap).max(lo + c.min_block_gap + 1e-3);
        let ax = rng.gen_range(lo..hi);
        let bx = loop {
            let x = rng.gen_range(lo..hi);
            if (x - ax).abs() >= c.min_block_gap {
                break x;
            }
        };
        let mut blocks = [[ax, half], [bx, half]];
        if c.variant == Variant::UnstackStack {
            blocks[BLOCK_B] = [ax, half + c.block_size];
        }
        self.state = BlockState {
            agent: [
                rng.gen_range(0.0..c.tray_width),
                rng.gen_range(half..c.tray_height),
            ],
            gripper: rng.gen_range(0.0..1.0),
            blocks,
            block_vel: [[0.0; 2]; 2],
            held: None,
            step: 0,
        };
        self.observation()
    }

    /// Advances one control period. Actions are clipped to `[-1, 1]`; the
    /// third component opens the gripper when positive and closes it when
    /// negative.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if action.len() != ACTION_DIM {
            return Err(Error::Domain(format!(
                "action has {} components, expected {ACTION_DIM}",
                action.len()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain("non-finite action".into()));
        }
        if self.state.step >= self.cfg.horizon {
            return Err(Error::Domain("episode already finished".into()));
        }
        let c = &self.cfg;
        let s = &mut self.state;
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let half = c.block_size / 2.0;
        let prev_blocks = s.blocks;

        s.agent[0] = (s.agent[0] + c.max_step * a[0]).clamp(0.0, c.tray_width);
        s.agent[1] = (s.agent[1] + c.max_step * a[1]).clamp(half, c.tray_height);

        let was_closed = s.gripper < c.closed_threshold;
        s.gripper = (s.gripper + c.grip_rate * a[2]).clamp(0.0, 1.0);
        let closed = s.gripper < c.closed_threshold;
        if !closed {
            s.held = None;
        } else if !was_closed && s.held.is_none() {
            s.held = (0..2)
                .map(|i| (i, dist(s.agent, s.blocks[i])))
                .filter(|&(_, d)| d <= c.grasp_radius)
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(i, _)| i);
        }
        if let Some(i) = s.held {
            s.blocks[i] = s.agent;
        }
        for i in 0..2 {
            for k in 0..2 {
                s.block_vel[i][k] = (s.blocks[i][k] - prev_blocks[i][k]) / c.dt;
            }
        }
        s.step += 1;
        let reward = success(c, TaskId::main_for(c.variant), s) as u8 as f64;
        Ok(StepOutcome {
            obs: self.observation(),
            reward,
            done: self.state.step >= self.cfg.horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> BlockWorld {
        BlockWorld::new(EnvConfig::default()).unwrap()
    }

    #[test]
    fn zero_action_changes_only_the_counter() {
        let mut w = world();
        w.reset_seeded(4);
        let before = w.state().clone();
        w.step(&[0.0, 0.0, 0.0]).unwrap();
        let mut after = w.state().clone();
        assert_eq!(after.step, 1);
        after.step = 0;
        assert_eq!(after, before);
    }

    #[test]
    fn same_seed_same_reset() {
        let mut w1 = world();
        let mut w2 = world();
        assert_eq!(w1.reset_seeded(77), w2.reset_seeded(77));
        assert_eq!(w1.state(), w2.state());
    }

    #[test]
    fn closing_next_to_a_block_grasps_it() {
        let cfg = EnvConfig::default();
        let mut w = world();
        let mut s = w.state().clone();
        s.agent = [s.blocks[0][0] + 0.01, s.blocks[0][1]];
        s.gripper = 0.3;
        w.set_state(s).unwrap();
        w.step(&[0.0, 0.0, -1.0]).unwrap();
        assert_eq!(w.state().held, Some(BLOCK_A));
        assert_eq!(w.state().block_a(), w.state().agent);
        w.step(&[0.0, 1.0, -1.0]).unwrap();
        assert_eq!(w.state().block_a(), w.state().agent);
        assert!((w.state().block_vel[0][1] - cfg.max_step / cfg.dt).abs() < 1e-12);
        w.step(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(w.state().held, None);
        let released = w.state().block_a();
        w.step(&[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(w.state().block_a(), released);
    }

    #[test]
    fn already_closed_gripper_does_not_grasp() {
        let mut w = world();
        let mut s = w.state().clone();
        s.agent = s.blocks[0];
        s.gripper = 0.0;
        w.set_state(s).unwrap();
        w.step(&[0.0, 0.0, -1.0]).unwrap();
        assert_eq!(w.state().held, None);
    }

    #[test]
    fn done_at_horizon_and_then_error() {
        let mut w = world();
        w.reset_seeded(0);
        for t in 1..=60 {
            let out = w.step(&[0.3, -0.2, 0.1]).unwrap();
            assert_eq!(out.done, t == 60);
        }
        assert!(matches!(w.step(&[0.0; 3]), Err(Error::Domain(_))));
    }

    #[test]
    fn actions_are_clipped() {
        let mut w = world();
        w.reset_seeded(2);
        let x0 = w.state().agent[0];
        w.step(&[-50.0, 0.0, 0.0]).unwrap();
        let expect = (x0 - 0.025).max(0.0);
        assert!((w.state().agent[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn reach_at_block_and_lift_on_floor() {
        let cfg = EnvConfig::default();
        let mut s = world().state().clone();
        s.agent = s.block_a();
        assert!(success(&cfg, TaskId::Reach, &s));
        assert!(!success(&cfg, TaskId::Lift, &s));
    }

    #[test]
    fn stack_predicate_from_geometry() {
        let cfg = EnvConfig::default();
        let mut s = world().state().clone();
        let b = s.block_b();
        s.blocks[BLOCK_A] = [b[0], b[1] + cfg.block_size];
        s.gripper = 1.0;
        s.agent = [b[0], b[1] + cfg.block_size + 2.0 * cfg.grasp_radius];
        s.held = None;
        assert!(success(&cfg, TaskId::Stack, &s));
        let mut near = s.clone();
        near.agent = near.block_a();
        assert!(!success(&cfg, TaskId::Stack, &near));
        let mut shut = s.clone();
        shut.gripper = 0.0;
        assert!(!success(&cfg, TaskId::Stack, &shut));
        let mut off = s;
        off.blocks[BLOCK_A][0] += 1.5 * cfg.stack_x_tolerance;
        assert!(!success(&cfg, TaskId::Stack, &off));
    }

    #[test]
    fn unstack_variant_resets_b_on_a() {
        let cfg = EnvConfig {
            variant: Variant::UnstackStack,
            ..EnvConfig::default()
        };
        let mut w = BlockWorld::new(cfg.clone()).unwrap();
        w.reset_seeded(9);
        assert!(w.state().stacked(&cfg, BLOCK_B, BLOCK_A));
    }

    #[test]
    fn observation_has_fixed_width() {
        let mut w = world();
        assert_eq!(w.reset_seeded(1).len(), OBS_DIM);
    }
}
