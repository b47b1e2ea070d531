//! Closed-loop scripted demonstrators. Each is a pure function of the state.

use super::block_world::{BlockState, BLOCK_A, BLOCK_B};
use super::config::EnvConfig;
use super::tasks::TaskId;

/// Distance under which a target position counts as reached.
const AT: f64 = 0.002;
/// Distance under which the gripper closes on a block.
const GRASP_AT: f64 = 0.004;

fn toward(cfg: &EnvConfig, from: [f64; 2], to: [f64; 2]) -> [f64; 2] {
    [
        ((to[0] - from[0]) / cfg.max_step).clamp(-1.0, 1.0),
        ((to[1] - from[1]) / cfg.max_step).clamp(-1.0, 1.0),
    ]
}

fn open_cmd(cfg: &EnvConfig, s: &BlockState) -> f64 {
    ((1.0 - s.gripper) / cfg.grip_rate).clamp(0.0, 1.0)
}

fn close_cmd(cfg: &EnvConfig, s: &BlockState) -> f64 {
    (-s.gripper / cfg.grip_rate).clamp(-1.0, 0.0)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn act(m: [f64; 2], grip: f64) -> [f64; 3] {
    [m[0], m[1], grip]
}

/// Approach block `i` with the gripper opening, then close on it.
fn grasp(cfg: &EnvConfig, s: &BlockState, i: usize) -> [f64; 3] {
    let p = s.blocks[i];
    if dist(s.agent, p) > GRASP_AT {
        act(toward(cfg, s.agent, p), open_cmd(cfg, s))
    } else if s.gripper < cfg.closed_threshold {
        act([0.0; 2], 1.0)
    } else {
        act(toward(cfg, s.agent, p), -1.0)
    }
}

/// Hold the grip closed while moving the held block to `to`.
fn carry(cfg: &EnvConfig, s: &BlockState, to: [f64; 2]) -> [f64; 3] {
    act(toward(cfg, s.agent, to), close_cmd(cfg, s))
}

fn carry_height(cfg: &EnvConfig) -> f64 {
    cfg.block_size / 2.0 + cfg.lift_height + cfg.block_size / 2.0
}

fn retreat(cfg: &EnvConfig, s: &BlockState) -> [f64; 3] {
    let a = s.block_a();
    let up = [a[0], (a[1] + 1.5 * cfg.grasp_radius).min(cfg.tray_height)];
    act(toward(cfg, s.agent, up), open_cmd(cfg, s))
}

fn stack(cfg: &EnvConfig, s: &BlockState) -> [f64; 3] {
    let a = s.block_a();
    let b = s.block_b();
    match s.held {
        Some(BLOCK_A) => {
            let place = [b[0], b[1] + cfg.block_size];
            let cy = carry_height(cfg).max(place[1] + cfg.block_size);
            if (a[0] - place[0]).abs() > AT {
                if a[1] < cy - AT {
                    carry(cfg, s, [a[0], cy])
                } else {
                    carry(cfg, s, [place[0], cy])
                }
            } else if (a[1] - place[1]).abs() > AT {
                carry(cfg, s, place)
            } else {
                act([0.0; 2], 1.0)
            }
        }
        Some(_) => act([0.0; 2], 1.0),
        None if s.stacked(cfg, BLOCK_A, BLOCK_B) => retreat(cfg, s),
        None => grasp(cfg, s, BLOCK_A),
    }
}

fn unstack_stack(cfg: &EnvConfig, s: &BlockState) -> [f64; 3] {
    let a = s.block_a();
    match s.held {
        Some(BLOCK_B) => {
            let shift = if a[0] < cfg.tray_width / 2.0 {
                0.1
            } else {
                -0.1
            };
            let spot = [a[0] + shift, cfg.block_size / 2.0];
            let b = s.block_b();
            if dist(b, spot) > AT {
                // Clear block A before travelling sideways.
                let cy = a[1] + 1.5 * cfg.block_size;
                if (b[0] - a[0]).abs() < cfg.block_size && b[1] < cy - AT {
                    carry(cfg, s, [b[0], cy])
                } else {
                    carry(cfg, s, spot)
                }
            } else {
                act([0.0; 2], 1.0)
            }
        }
        None if s.stacked(cfg, BLOCK_B, BLOCK_A) => grasp(cfg, s, BLOCK_B),
        _ => stack(cfg, s),
    }
}

/// Scripted action for `task` in state `s`, each component in `[-1, 1]`.
pub fn scripted_expert(cfg: &EnvConfig, task: TaskId, s: &BlockState) -> [f64; 3] {
    let a = s.block_a();
    let zone = BlockState::bring_zone(cfg);
    match task {
        TaskId::Reach => act(toward(cfg, s.agent, a), open_cmd(cfg, s)),
        TaskId::OpenGripper => [0.0, 0.0, open_cmd(cfg, s)],
        TaskId::CloseGripper => [0.0, 0.0, close_cmd(cfg, s)],
        TaskId::Lift => match s.held {
            Some(BLOCK_A) => carry(cfg, s, [a[0], carry_height(cfg)]),
            Some(_) => act([0.0; 2], 1.0),
            None => grasp(cfg, s, BLOCK_A),
        },
        TaskId::Move => match s.held {
            Some(BLOCK_A) => {
                let dir = if a[0] < cfg.tray_width / 2.0 {
                    1.0
                } else {
                    -1.0
                };
                let m = toward(cfg, s.agent, [a[0], 2.0 * cfg.block_size]);
                act([0.4 * dir, m[1]], close_cmd(cfg, s))
            }
            Some(_) => act([0.0; 2], 1.0),
            None => grasp(cfg, s, BLOCK_A),
        },
        TaskId::Stack => stack(cfg, s),
        TaskId::UnstackStack => unstack_stack(cfg, s),
        TaskId::Bring => match s.held {
            Some(BLOCK_A) => carry(cfg, s, zone),
            Some(_) => act([0.0; 2], 1.0),
            None if dist(a, zone) < cfg.bring_tolerance => act([0.0; 2], 0.0),
            None => grasp(cfg, s, BLOCK_A),
        },
        TaskId::Insert => match s.held {
            Some(BLOCK_A) if dist(a, zone) > AT / 2.0 => carry(cfg, s, zone),
            Some(BLOCK_A) => act([0.0; 2], 1.0),
            Some(_) => act([0.0; 2], 1.0),
            None if dist(a, zone) < cfg.insert_tolerance => retreat(cfg, s),
            None => grasp(cfg, s, BLOCK_A),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::block_world::BlockWorld;

    #[test]
    fn expert_at_goal_is_still() {
        let cfg = EnvConfig::default();
        let mut s = BlockWorld::new(cfg.clone()).unwrap().state().clone();
        s.agent = s.block_a();
        s.gripper = 1.0;
        let a = scripted_expert(&cfg, TaskId::Reach, &s);
        assert!(a.iter().all(|v| v.abs() < 1e-12));
        let a = scripted_expert(&cfg, TaskId::OpenGripper, &s);
        assert!(a.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn actions_are_bounded() {
        let cfg = EnvConfig::default();
        let mut w = BlockWorld::new(cfg.clone()).unwrap();
        for seed in 0..20 {
            w.reset_seeded(seed);
            for task in TaskId::ALL {
                let a = scripted_expert(&cfg, task, w.state());
                assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }
}
