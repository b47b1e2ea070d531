//! High-level choice of which intention acts for each period of an episode.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::envs::{TaskId, TaskSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedulerKind {
    Wrs,
    WrsHc,
    Learned,
    None,
}

impl SchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Wrs => "wrs",
            SchedulerKind::WrsHc => "wrs_hc",
            SchedulerKind::Learned => "learned",
            SchedulerKind::None => "none",
        }
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wrs" => Ok(SchedulerKind::Wrs),
            "wrs_hc" | "wrs+hc" => Ok(SchedulerKind::WrsHc),
            "learned" => Ok(SchedulerKind::Learned),
            "none" => Ok(SchedulerKind::None),
            _ => Err(Error::Config(format!("unknown scheduler `{s}`"))),
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Handcrafted period-by-period task choices, as task names. `main` stands
/// for whichever main task is being learned.
pub const HC_TRAJECTORIES: [[&str; 6]; 5] = [
    ["reach", "lift", "main", "open-gripper", "reach", "lift"],
    ["reach", "lift", "move", "main", "open-gripper", "reach"],
    [
        "lift",
        "main",
        "open-gripper",
        "lift",
        "main",
        "open-gripper",
    ],
    [
        "main",
        "open-gripper",
        "main",
        "open-gripper",
        "main",
        "open-gripper",
    ],
    [
        "move",
        "main",
        "open-gripper",
        "move",
        "main",
        "open-gripper",
    ],
];

/// Extra handcrafted trajectories when bring is an auxiliary task.
pub const HC_BRING_TRAJECTORIES: [[&str; 6]; 2] = [
    [
        "bring",
        "main",
        "open-gripper",
        "bring",
        "main",
        "open-gripper",
    ],
    ["reach", "lift", "bring", "main", "open-gripper", "reach"],
];

/// Trajectories of task indices into a [`TaskSet`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HcLibrary {
    pub trajectories: Vec<Vec<usize>>,
}

impl HcLibrary {
    /// Parses one trajectory per line of comma-separated task names. Blank
    /// lines and `#` comments are skipped.
    pub fn parse(text: &str, tasks: &TaskSet, periods: usize) -> Result<Self> {
        let mut trajectories = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let traj = line
                .split(',')
                .map(|name| resolve(name.trim(), tasks))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Config(format!("HC line {}: {e}", n + 1)))?;
            if traj.len() != periods {
                return Err(Error::Config(format!(
                    "HC line {} has {} entries, expected {periods}",
                    n + 1,
                    traj.len()
                )));
            }
            trajectories.push(traj);
        }
        Ok(Self { trajectories })
    }

    pub fn load(path: &Path, tasks: &TaskSet, periods: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read HC library {}: {e}", path.display()))
        })?;
        Self::parse(&text, tasks, periods)
    }

    /// The built-in lists, keeping only those whose tasks are all present.
    pub fn standard(tasks: &TaskSet) -> Self {
        let trajectories = HC_TRAJECTORIES
            .iter()
            .chain(HC_BRING_TRAJECTORIES.iter())
            .filter_map(|names| {
                names
                    .iter()
                    .map(|n| resolve(n, tasks))
                    .collect::<Result<Vec<_>>>()
                    .ok()
            })
            .collect();
        Self { trajectories }
    }

    pub fn to_text(&self, tasks: &TaskSet) -> String {
        self.trajectories
            .iter()
            .map(|t| {
                let names: Vec<&str> = t
                    .iter()
                    .map(|&i| {
                        if i == 0 {
                            "main"
                        } else {
                            tasks.get(i).map_or("?", TaskId::name)
                        }
                    })
                    .collect();
                names.join(",") + "\n"
            })
            .collect()
    }
}

fn resolve(name: &str, tasks: &TaskSet) -> Result<usize> {
    if name.eq_ignore_ascii_case("main") {
        return Ok(0);
    }
    let id: TaskId = name.parse()?;
    tasks
        .index_of(id)
        .ok_or_else(|| Error::Config(format!("task `{name}` is not in the task set")))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    pub main_rate: f64,
    pub hc_rate: f64,
    pub periods: usize,
    pub period_len: usize,
    pub initial_temperature: f64,
    pub temperature_decay: f64,
    pub min_temperature: f64,
    pub ema: f64,
    pub gamma: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            kind: SchedulerKind::WrsHc,
            main_rate: 0.5,
            hc_rate: 0.5,
            periods: 6,
            period_len: 10,
            initial_temperature: 360.0,
            temperature_decay: 0.9995,
            min_temperature: 0.1,
            ema: 0.6,
            gamma: 0.99,
        }
    }
}

/// Q-table of the learned scheduler, keyed by period and previous task.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedTable {
    tasks: usize,
    /// `[h][prev][choice]`, with `prev == tasks` meaning no previous choice.
    q: Vec<f64>,
    pub temperature: f64,
}

impl LearnedTable {
    pub fn new(periods: usize, tasks: usize, temperature: f64) -> Self {
        Self {
            tasks,
            q: vec![0.0; periods * (tasks + 1) * tasks],
            temperature,
        }
    }

    fn offset(&self, h: usize, prev: Option<usize>) -> usize {
        (h * (self.tasks + 1) + prev.unwrap_or(self.tasks)) * self.tasks
    }

    pub fn row(&self, h: usize, prev: Option<usize>) -> &[f64] {
        let o = self.offset(h, prev);
        &self.q[o..o + self.tasks]
    }

    pub fn get(&self, h: usize, prev: Option<usize>, choice: usize) -> f64 {
        self.row(h, prev)[choice]
    }

    pub fn set(&mut self, h: usize, prev: Option<usize>, choice: usize, v: f64) {
        let o = self.offset(h, prev);
        self.q[o + choice] = v;
    }

    /// Softmax of the row at the current temperature.
    pub fn probabilities(&self, h: usize, prev: Option<usize>) -> Vec<f64> {
        boltzmann(self.row(h, prev), self.temperature)
    }
}

/// `softmax(q / temperature)`, computed with the row maximum subtracted.
pub fn boltzmann(q: &[f64], temperature: f64) -> Vec<f64> {
    let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|v| ((v - m) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `(1 - phi) q + phi g`.
pub fn ema_update(q: f64, g: f64, phi: f64) -> f64 {
    (1.0 - phi) * q + phi * g
}

/// `max(floor, temperature * decay)`.
pub fn temperature_decay(temperature: f64, decay: f64, floor: f64) -> f64 {
    (temperature * decay).max(floor)
}

fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Clone, Debug)]
pub struct Scheduler {
    pub cfg: SchedulerConfig,
    tasks: usize,
    hc: HcLibrary,
    pub table: LearnedTable,
    /// HC trajectory followed in the current episode.
    active_hc: Option<usize>,
    /// `(h, prev, chosen)` for the current episode.
    choices: Vec<(usize, Option<usize>, usize)>,
    pub hc_episodes: u64,
    pub episodes: u64,
}

impl Scheduler {
    pub fn new(cfg: SchedulerConfig, tasks: usize, hc: HcLibrary) -> Result<Self> {
        if tasks == 0 {
            return Err(Error::Config("scheduler needs at least one task".into()));
        }
        if cfg.kind == SchedulerKind::WrsHc && hc.trajectories.is_empty() {
            return Err(Error::Config(
                "wrs_hc scheduler with an empty HC library".into(),
            ));
        }
        if cfg.periods == 0 || cfg.period_len == 0 {
            return Err(Error::Config("scheduler periods must be positive".into()));
        }
        if hc
            .trajectories
            .iter()
            .any(|t| t.len() != cfg.periods || t.iter().any(|&i| i >= tasks))
        {
            return Err(Error::Config(
                "HC trajectory does not fit the task set or period count".into(),
            ));
        }
        if !(0.0..=1.0).contains(&cfg.main_rate) || !(0.0..=1.0).contains(&cfg.hc_rate) {
            return Err(Error::Config("scheduler rates must lie in [0, 1]".into()));
        }
        Ok(Self {
            table: LearnedTable::new(cfg.periods, tasks, cfg.initial_temperature),
            cfg,
            tasks,
            hc,
            active_hc: None,
            choices: Vec::new(),
            hc_episodes: 0,
            episodes: 0,
        })
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn following_hc(&self) -> bool {
        self.active_hc.is_some()
    }

    /// WRS masses: `main_rate` for the main task, the rest split evenly over
    /// the auxiliaries.
    pub fn wrs_probabilities(&self) -> Vec<f64> {
        if self.tasks == 1 {
            return vec![1.0];
        }
        let k = (self.tasks - 1) as f64;
        (0..self.tasks)
            .map(|i| {
                if i == 0 {
                    self.cfg.main_rate
                } else {
                    (1.0 - self.cfg.main_rate) / k
                }
            })
            .collect()
    }

    /// Decides, once per episode, whether an HC trajectory is followed.
    pub fn start_episode(&mut self, rng: &mut impl Rng) {
        self.choices.clear();
        self.active_hc = None;
        self.episodes += 1;
        if self.cfg.kind == SchedulerKind::WrsHc && rng.gen::<f64>() < self.cfg.hc_rate {
            self.active_hc = Some(rng.gen_range(0..self.hc.trajectories.len()));
            self.hc_episodes += 1;
        }
    }

    /// Task index for period `h`.
    pub fn select(&mut self, h: usize, prev: Option<usize>, rng: &mut impl Rng) -> Result<usize> {
        if h >= self.cfg.periods {
            return Err(Error::Usage(format!(
                "period {h} beyond {} periods",
                self.cfg.periods
            )));
        }
        let choice = match self.cfg.kind {
            SchedulerKind::None => 0,
            SchedulerKind::Wrs => draw(&self.wrs_probabilities(), rng),
            SchedulerKind::WrsHc => match self.active_hc {
                Some(k) => self.hc.trajectories[k][h],
                None => draw(&self.wrs_probabilities(), rng),
            },
            SchedulerKind::Learned => draw(&self.table.probabilities(h, prev), rng),
        };
        self.choices.push((h, prev, choice));
        Ok(choice)
    }

    /// Learned variant only: EMA update of every visited cell with the
    /// discounted main-task return from its period onwards, then one
    /// temperature decay. `main_rewards` holds one entry per step.
    pub fn end_episode(&mut self, main_rewards: &[f64]) {
        if self.cfg.kind != SchedulerKind::Learned {
            return;
        }
        let returns = tail_returns(main_rewards, self.cfg.gamma);
        for &(h, prev, choice) in &self.choices {
            let start = h * self.cfg.period_len;
            let g = returns.get(start).copied().unwrap_or(0.0);
            let q = self.table.get(h, prev, choice);
            self.table
                .set(h, prev, choice, ema_update(q, g, self.cfg.ema));
        }
        self.table.temperature = temperature_decay(
            self.table.temperature,
            self.cfg.temperature_decay,
            self.cfg.min_temperature,
        );
    }
}

/// `G_t = sum_{k >= t} gamma^(k - t) r_k` for every `t`.
pub fn tail_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}
