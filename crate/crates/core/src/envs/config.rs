//! Block-world constants, read from `key = value` text.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Stack,
    UnstackStack,
    Bring,
    Insert,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Stack => "stack",
            Variant::UnstackStack => "unstack-stack",
            Variant::Bring => "bring",
            Variant::Insert => "insert",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stack" => Ok(Variant::Stack),
            "unstack-stack" => Ok(Variant::UnstackStack),
            "bring" => Ok(Variant::Bring),
            "insert" => Ok(Variant::Insert),
            _ => Err(Error::Config(format!("unknown environment variant `{s}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Geometry, dynamics and success thresholds. Lengths in metres.
///
/// Block positions are block centres; blocks on the floor have centre height
/// `block_size / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub variant: Variant,
    pub tray_width: f64,
    pub tray_height: f64,
    pub block_size: f64,
    pub min_block_gap: f64,
    /// Agent displacement per unit action per step.
    pub max_step: f64,
    /// Gripper opening change per unit action per step.
    pub grip_rate: f64,
    pub dt: f64,
    pub horizon: usize,
    pub grasp_radius: f64,
    pub closed_threshold: f64,
    pub open_threshold: f64,
    pub reach_threshold: f64,
    /// Height of the block's underside above the floor for Lift.
    pub lift_height: f64,
    pub move_speed: f64,
    pub stack_x_tolerance: f64,
    pub stack_y_tolerance: f64,
    pub bring_zone_x: f64,
    pub bring_tolerance: f64,
    pub insert_tolerance: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Stack,
            tray_width: 0.3,
            tray_height: 0.15,
            block_size: 0.04,
            min_block_gap: 0.06,
            max_step: 0.025,
            grip_rate: 0.5,
            dt: 0.05,
            horizon: 60,
            grasp_radius: 0.02,
            closed_threshold: 0.1,
            open_threshold: 0.9,
            reach_threshold: 0.015,
            lift_height: 0.06,
            move_speed: 0.05,
            stack_x_tolerance: 0.02,
            stack_y_tolerance: 0.01,
            bring_zone_x: 0.27,
            bring_tolerance: 0.02,
            insert_tolerance: 0.005,
        }
    }
}

/// `(key, description)` for every recognised key, in file order.
pub const KEYS: &[(&str, &str)] = &[
    (
        "variant",
        "reset layout and main task: stack | unstack-stack | bring | insert",
    ),
    ("tray_width", "horizontal extent of the tray"),
    ("tray_height", "highest reachable agent position"),
    ("block_size", "block edge length"),
    (
        "min_block_gap",
        "minimum horizontal centre distance between blocks at reset",
    ),
    ("max_step", "agent displacement per unit action"),
    ("grip_rate", "gripper opening change per unit action"),
    ("dt", "control period in seconds"),
    ("horizon", "steps per episode"),
    (
        "grasp_radius",
        "agent-to-block distance within which closing grasps",
    ),
    (
        "closed_threshold",
        "opening below which the gripper counts as closed",
    ),
    (
        "open_threshold",
        "opening above which the gripper counts as open",
    ),
    ("reach_threshold", "Reach success distance"),
    ("lift_height", "Lift success height of the block underside"),
    ("move_speed", "Move success block speed"),
    ("stack_x_tolerance", "Stack horizontal alignment tolerance"),
    ("stack_y_tolerance", "Stack vertical contact tolerance"),
    (
        "bring_zone_x",
        "centre of the Bring/Insert target zone on the floor",
    ),
    ("bring_tolerance", "Bring success distance to the zone"),
    ("insert_tolerance", "Insert success distance to the zone"),
];

impl EnvConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{value}`")))
        };
        match key {
            "variant" => self.variant = value.parse()?,
            "horizon" => {
                self.horizon = value.parse().map_err(|_| {
                    Error::Config(format!("`horizon` expects an integer, got `{value}`"))
                })?
            }
            "tray_width" => self.tray_width = num()?,
            "tray_height" => self.tray_height = num()?,
            "block_size" => self.block_size = num()?,
            "min_block_gap" => self.min_block_gap = num()?,
            "max_step" => self.max_step = num()?,
            "grip_rate" => self.grip_rate = num()?,
            "dt" => self.dt = num()?,
            "grasp_radius" => self.grasp_radius = num()?,
            "closed_threshold" => self.closed_threshold = num()?,
            "open_threshold" => self.open_threshold = num()?,
            "reach_threshold" => self.reach_threshold = num()?,
            "lift_height" => self.lift_height = num()?,
            "move_speed" => self.move_speed = num()?,
            "stack_x_tolerance" => self.stack_x_tolerance = num()?,
            "stack_y_tolerance" => self.stack_y_tolerance = num()?,
            "bring_zone_x" => self.bring_zone_x = num()?,
            "bring_tolerance" => self.bring_tolerance = num()?,
            "insert_tolerance" => self.insert_tolerance = num()?,
            _ => return Err(Error::Config(format!("unknown environment key `{key}`"))),
        }
        Ok(())
    }

    pub fn values(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("variant", self.variant.to_string());
        m.insert("tray_width", self.tray_width.to_string());
        m.insert("tray_height", self.tray_height.to_string());
        m.insert("block_size", self.block_size.to_string());
        m.insert("min_block_gap", self.min_block_gap.to_string());
        m.insert("max_step", self.max_step.to_string());
        m.insert("grip_rate", self.grip_rate.to_string());
        m.insert("dt", self.dt.to_string());
        m.insert("horizon", self.horizon.to_string());
        m.insert("grasp_radius", self.grasp_radius.to_string());
        m.insert("closed_threshold", self.closed_threshold.to_string());
        m.insert("open_threshold", self.open_threshold.to_string());
        m.insert("reach_threshold", self.reach_threshold.to_string());
        m.insert("lift_height", self.lift_height.to_string());
        m.insert("move_speed", self.move_speed.to_string());
        m.insert("stack_x_tolerance", self.stack_x_tolerance.to_string());
        m.insert("stack_y_tolerance", self.stack_y_tolerance.to_string());
        m.insert("bring_zone_x", self.bring_zone_x.to_string());
        m.insert("bring_tolerance", self.bring_tolerance.to_string());
        m.insert("insert_tolerance", self.insert_tolerance.to_string());
        m
    }

    /// Parses `key = value` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let values = self.values();
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", values[k]))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tray_width", self.tray_width),
            ("tray_height", self.tray_height),
            ("block_size", self.block_size),
            ("max_step", self.max_step),
            ("grip_rate", self.grip_rate),
            ("dt", self.dt),
            ("grasp_radius", self.grasp_radius),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::Config("`horizon` must be positive".into()));
        }
        if self.tray_height < 2.0 * self.block_size + self.block_size / 2.0 {
            return Err(Error::Config("tray too low to stack two blocks".into()));
        }
        if self.tray_width < 2.0 * self.block_size + self.min_block_gap {
            return Err(Error::Config("tray too narrow for two blocks".into()));
        }
        if !(0.0 < self.closed_threshold
            && self.closed_threshold < self.open_threshold
            && self.open_threshold < 1.0)
        {
            return Err(Error::Config(
                "gripper thresholds must satisfy 0 < closed < open < 1".into(),
            ));
        }
        Ok(())
    }
}
