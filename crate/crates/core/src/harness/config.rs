//! Flat `key = value` run configuration with includes and per-key origin.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adversary::{PenaltyTarget, RewardForm};
use crate::buffers::ExpertMix;
use crate::cloning::{BcConfig, BcProtocol};
use crate::envs::{EnvConfig, TaskId, TaskSet, Variant, ACTION_DIM};
use crate::error::{Error, Result};
use crate::scheduling::{SchedulerConfig, SchedulerKind};

const MAX_INCLUDE_DEPTH: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Lfgp,
    Dac,
    Bc,
    BcMultitask,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lfgp => "lfgp",
            Algorithm::Dac => "dac",
            Algorithm::Bc => "bc",
            Algorithm::BcMultitask => "bc_multitask",
        }
    }

    pub fn multitask(self) -> bool {
        matches!(self, Algorithm::Lfgp | Algorithm::BcMultitask)
    }

    pub fn adversarial(self) -> bool {
        matches!(self, Algorithm::Lfgp | Algorithm::Dac)
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lfgp" => Ok(Algorithm::Lfgp),
            "dac" => Ok(Algorithm::Dac),
            "bc" => Ok(Algorithm::Bc),
            "bc_multitask" => Ok(Algorithm::BcMultitask),
            _ => Err(Error::Config(format!("unknown algorithm `{s}`"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every recognised run key with where its default comes from. Environment
/// keys are accepted with an `env.` prefix.
pub const KEYS: &[(&str, &str)] = &[
    ("algorithm", "run choice"),
    ("variant", "run choice"),
    ("tasks", "standard auxiliary set for the variant"),
    ("seed", "run choice"),
    (
        "total_steps",
        "desk scale: 150k interactions (reference 2M)",
    ),
    ("eval_every", "desk scale: 5k interactions (reference 100k)"),
    ("eval_episodes", "reference: evaluations per task 50"),
    ("hold_steps", "desk scale: success must persist 5 steps"),
    ("expert_dir", "run choice"),
    ("expert_pairs", "reference: 1k pairs per task"),
    (
        "final_pairs",
        "reference: 200 extra (s_T, 0) pairs per task",
    ),
    ("expert_subsample", "reference: no subsampling"),
    (
        "expert_sampling",
        "reference: expert sampling in pi/Q updates and final-pair bias on",
    ),
    ("replace_final_pairs", "ablation switch, off"),
    ("replay_capacity", "desk scale: 200k (reference 2M)"),
    ("warmup", "desk scale: 2.5k (reference 25k)"),
    ("exploration", "desk scale: 5k (reference 50k)"),
    ("batch_size", "desk scale: 64 (reference 256)"),
    ("gamma", "reference: 0.99"),
    ("polyak", "reference: 1e-4"),
    ("q_lr", "reference: 3e-4"),
    (
        "policy_lr",
        "desk scale: 3e-4 (reference 1e-5 over 2M updates)",
    ),
    ("alpha_lr", "reference: 3e-4"),
    ("initial_alpha", "reference: 1e-2"),
    (
        "target_entropy",
        "rule -dim(a): -3 for the 3-D action space",
    ),
    ("max_grad_norm", "reference: 10"),
    ("policy_weight_decay", "reference: 1e-2"),
    ("q_weight_decay", "reference: 1e-2"),
    ("expert_proportion", "reference: 0.1"),
    ("expert_decay", "reference: 0.99999"),
    ("q_update_freq", "reference: 1"),
    ("target_update_freq", "reference: 1"),
    ("pi_update_freq", "reference: 1"),
    ("policy_hidden", "desk scale: 64,64 (reference 256,256)"),
    ("q_hidden", "desk scale: 64,64 (reference 256,256)"),
    ("d_lr", "reference: 3e-4"),
    ("d_batch_size", "desk scale: 64 (reference 256)"),
    ("d_hidden", "desk scale: 64,64 (reference 256,256)"),
    ("d_weight_decay", "reference: 1e-2"),
    ("gp_lambda", "reference: 10"),
    ("gp_target", "decision: penalise grad of D = sigmoid(logit)"),
    ("final_pair_bias", "reference: 0.95"),
    ("reward_form", "reference: AIRL reward"),
    ("scheduler", "reference: WRS + HC"),
    ("main_rate", "reference: main task rate 0.5"),
    (
        "hc_rate",
        "reference: handcrafted trajectories half of the episodes",
    ),
    ("period_len", "desk scale: 10 steps (reference 45)"),
    ("hc_file", "built-in handcrafted library"),
    ("sched_temperature", "reference: initial temperature 360"),
    ("sched_temperature_decay", "reference: 0.9995"),
    ("sched_min_temperature", "reference: 0.1"),
    ("sched_ema", "reference: phi 0.6"),
    (
        "bc_protocol",
        "reference: fixed update count equal to total_steps",
    ),
    ("bc_batch_size", "desk scale: 64 (reference 256)"),
    ("bc_lr", "desk scale: 3e-4 (reference 1e-5 over 2M updates)"),
    ("bc_weight_decay", "reference: 1e-2"),
    ("bc_split", "reference: 70/30 train/validation"),
    ("bc_tolerance", "reference: overfit tolerance 100 epochs"),
    ("bc_max_epochs", "decision: cap on early-stopping epochs"),
    ("env_config", "built-in environment constants"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub variant: Variant,
    /// Explicit task list, main first. `None` means the standard set.
    pub tasks: Option<TaskSet>,
    pub seed: u64,
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub hold_steps: usize,
    pub expert_dir: PathBuf,
    pub expert_pairs: usize,
    pub final_pairs: usize,
    pub expert_subsample: usize,
    pub expert_sampling: bool,
    pub replace_final_pairs: bool,
    pub replay_capacity: usize,
    pub warmup: usize,
    pub exploration: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub polyak: f64,
    pub q_lr: f64,
    pub policy_lr: f64,
    pub alpha_lr: f64,
    pub initial_alpha: f64,
    pub target_entropy: f64,
    pub max_grad_norm: f64,
    pub policy_weight_decay: f64,
    pub q_weight_decay: f64,
    pub expert_proportion: f64,
    pub expert_decay: f64,
    pub q_update_freq: usize,
    pub target_update_freq: usize,
    pub pi_update_freq: usize,
    pub policy_hidden: Vec<usize>,
    pub q_hidden: Vec<usize>,
    pub d_lr: f64,
    pub d_batch_size: usize,
    pub d_hidden: Vec<usize>,
    pub d_weight_decay: f64,
    pub gp_lambda: f64,
    pub gp_target: PenaltyTarget,
    pub final_pair_bias: f64,
    pub reward_form: RewardForm,
    pub scheduler: SchedulerKind,
    pub main_rate: f64,
    pub hc_rate: f64,
    pub period_len: usize,
    pub hc_file: Option<PathBuf>,
    pub sched_temperature: f64,
    pub sched_temperature_decay: f64,
    pub sched_min_temperature: f64,
    pub sched_ema: f64,
    pub bc_protocol: BcProtocol,
    pub bc_batch_size: usize,
    pub bc_lr: f64,
    pub bc_weight_decay: f64,
    pub bc_split: f64,
    pub bc_tolerance: usize,
    pub bc_max_epochs: usize,
    pub env_config: Option<PathBuf>,
    pub env: EnvConfig,
    /// Where each non-default key was set.
    pub origins: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Lfgp,
            variant: Variant::Stack,
            tasks: None,
            seed: 0,
            total_steps: 150_000,
            eval_every: 5_000,
            eval_episodes: 50,
            hold_steps: crate::envs::SUCCESS_HOLD_STEPS,
            expert_dir: PathBuf::from("experts"),
            expert_pairs: 1_000,
            final_pairs: 200,
            expert_subsample: 1,
            expert_sampling: true,
            replace_final_pairs: false,
            replay_capacity: 200_000,
            warmup: 2_500,
            exploration: 5_000,
            batch_size: 64,
            gamma: 0.99,
            polyak: 1e-4,
            q_lr: 3e-4,
            policy_lr: 3e-4,
            alpha_lr: 3e-4,
            initial_alpha: 1e-2,
            target_entropy: -(ACTION_DIM as f64),
            max_grad_norm: 10.0,
            policy_weight_decay: 1e-2,
            q_weight_decay: 1e-2,
            expert_proportion: 0.1,
            expert_decay: 0.99999,
            q_update_freq: 1,
            target_update_freq: 1,
            pi_update_freq: 1,
            policy_hidden: vec![64, 64],
            q_hidden: vec![64, 64],
            d_lr: 3e-4,
            d_batch_size: 64,
            d_hidden: vec![64, 64],
            d_weight_decay: 1e-2,
            gp_lambda: 10.0,
            gp_target: PenaltyTarget::Probability,
            final_pair_bias: 0.95,
            reward_form: RewardForm::Airl,
            scheduler: SchedulerKind::WrsHc,
            main_rate: 0.5,
            hc_rate: 0.5,
            period_len: 10,
            hc_file: None,
            sched_temperature: 360.0,
            sched_temperature_decay: 0.9995,
            sched_min_temperature: 0.1,
            sched_ema: 0.6,
            bc_protocol: BcProtocol::FixedUpdates,
            bc_batch_size: 64,
            bc_lr: 3e-4,
            bc_weight_decay: 1e-2,
            bc_split: 0.7,
            bc_tolerance: 100,
            bc_max_epochs: 10_000,
            env_config: None,
            env: EnvConfig::default(),
            origins: BTreeMap::new(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}` cannot take `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}` expects on/off, got `{value}`"
        ))),
    }
}

fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|w| parse_num::<usize>(key, w.trim()))
        .collect::<Result<Vec<_>>>()
        .and_then(|v| {
            if v.is_empty() || v.contains(&0) {
                Err(Error::Config(format!(
                    "`{key}` needs positive layer widths"
                )))
            } else {
                Ok(v)
            }
        })
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn on_off(b: bool) -> String {
    if b { "on" } else { "off" }.to_string()
}

fn path_or_empty(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

fn optional_path(value: &str) -> Option<PathBuf> {
    if value.is_empty() || value == "none" {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

impl RunConfig {
    /// Applies one key, recording `origin` for it.
    pub fn set_from(&mut self, key: &str, value: &str, origin: &str) -> Result<()> {
        self.set(key, value)?;
        self.origins.insert(key.to_string(), origin.to_string());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if let Some(env_key) = key.strip_prefix("env.") {
            if env_key == "variant" {
                return Err(Error::Config("set `variant`, not `env.variant`".into()));
            }
            return self.env.set(env_key, value);
        }
        match key {
            "algorithm" => self.algorithm = value.parse()?,
            "variant" => {
                self.variant = value.parse()?;
                self.env.variant = self.variant;
            }
            "tasks" => {
                self.tasks = if value.is_empty() || value == "standard" {
                    None
                } else {
                    Some(TaskSet::parse_list(value)?)
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "total_steps" => self.total_steps = parse_num(key, value)?,
            "eval_every" => self.eval_every = parse_num(key, value)?,
            "eval_episodes" => self.eval_episodes = parse_num(key, value)?,
            "hold_steps" => self.hold_steps = parse_num(key, value)?,
            "expert_dir" => self.expert_dir = PathBuf::from(value),
            "expert_pairs" => self.expert_pairs = parse_num(key, value)?,
            "final_pairs" => self.final_pairs = parse_num(key, value)?,
            "expert_subsample" => self.expert_subsample = parse_num(key, value)?,
            "expert_sampling" => self.expert_sampling = parse_bool(key, value)?,
            "replace_final_pairs" => self.replace_final_pairs = parse_bool(key, value)?,
            "replay_capacity" => self.replay_capacity = parse_num(key, value)?,
            "warmup" => self.warmup = parse_num(key, value)?,
            "exploration" => self.exploration = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "polyak" => self.polyak = parse_num(key, value)?,
            "q_lr" => self.q_lr = parse_num(key, value)?,
            "policy_lr" => self.policy_lr = parse_num(key, value)?,
            "alpha_lr" => self.alpha_lr = parse_num(key, value)?,
            "initial_alpha" => self.initial_alpha = parse_num(key, value)?,
            "target_entropy" => self.target_entropy = parse_num(key, value)?,
            "max_grad_norm" => self.max_grad_norm = parse_num(key, value)?,
            "policy_weight_decay" => self.policy_weight_decay = parse_num(key, value)?,
            "q_weight_decay" => self.q_weight_decay = parse_num(key, value)?,
            "expert_proportion" => self.expert_proportion = parse_num(key, value)?,
            "expert_decay" => self.expert_decay = parse_num(key, value)?,
            "q_update_freq" => self.q_update_freq = parse_num(key, value)?,
            "target_update_freq" => self.target_update_freq = parse_num(key, value)?,
            "pi_update_freq" => self.pi_update_freq = parse_num(key, value)?,
            "policy_hidden" => self.policy_hidden = parse_widths(key, value)?,
            "q_hidden" => self.q_hidden = parse_widths(key, value)?,
            "d_lr" => self.d_lr = parse_num(key, value)?,
            "d_batch_size" => self.d_batch_size = parse_num(key, value)?,
            "d_hidden" => self.d_hidden = parse_widths(key, value)?,
            "d_weight_decay" => self.d_weight_decay = parse_num(key, value)?,
            "gp_lambda" => self.gp_lambda = parse_num(key, value)?,
            "gp_target" => {
                self.gp_target = match value {
                    "probability" => PenaltyTarget::Probability,
                    "logit" => PenaltyTarget::Logit,
                    _ => return Err(Error::Config(format!("`gp_target` cannot take `{value}`"))),
                }
            }
            "final_pair_bias" => self.final_pair_bias = parse_num(key, value)?,
            "reward_form" => self.reward_form = value.parse()?,
            "scheduler" => self.scheduler = value.parse()?,
            "main_rate" => self.main_rate = parse_num(key, value)?,
            "hc_rate" => self.hc_rate = parse_num(key, value)?,
            "period_len" => self.period_len = parse_num(key, value)?,
            "hc_file" => self.hc_file = optional_path(value),
            "sched_temperature" => self.sched_temperature = parse_num(key, value)?,
            "sched_temperature_decay" => self.sched_temperature_decay = parse_num(key, value)?,
            "sched_min_temperature" => self.sched_min_temperature = parse_num(key, value)?,
            "sched_ema" => self.sched_ema = parse_num(key, value)?,
            "bc_protocol" => self.bc_protocol = value.parse()?,
            "bc_batch_size" => self.bc_batch_size = parse_num(key, value)?,
            "bc_lr" => self.bc_lr = parse_num(key, value)?,
            "bc_weight_decay" => self.bc_weight_decay = parse_num(key, value)?,
            "bc_split" => self.bc_split = parse_num(key, value)?,
            "bc_tolerance" => self.bc_tolerance = parse_num(key, value)?,
            "bc_max_epochs" => self.bc_max_epochs = parse_num(key, value)?,
            "env_config" => {
                self.env_config = optional_path(value);
                if let Some(p) = &self.env_config {
                    let mut env = EnvConfig::load(p)?;
                    env.variant = self.variant;
                    self.env = env;
                }
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn values(&self) -> BTreeMap<String, String> {
        let mut m: BTreeMap<String, String> = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("algorithm", self.algorithm.to_string());
        put("variant", self.variant.to_string());
        put("tasks", self.task_set().describe());
        put("seed", self.seed.to_string());
        put("total_steps", self.total_steps.to_string());
        put("eval_every", self.eval_every.to_string());
        put("eval_episodes", self.eval_episodes.to_string());
        put("hold_steps", self.hold_steps.to_string());
        put("expert_dir", self.expert_dir.display().to_string());
        put("expert_pairs", self.expert_pairs.to_string());
        put("final_pairs", self.final_pairs.to_string());
        put("expert_subsample", self.expert_subsample.to_string());
        put("expert_sampling", on_off(self.expert_sampling));
        put("replace_final_pairs", on_off(self.replace_final_pairs));
        put("replay_capacity", self.replay_capacity.to_string());
        put("warmup", self.warmup.to_string());
        put("exploration", self.exploration.to_string());
        put("batch_size", self.batch_size.to_string());
        put("gamma", self.gamma.to_string());
        put("polyak", self.polyak.to_string());
        put("q_lr", self.q_lr.to_string());
        put("policy_lr", self.policy_lr.to_string());
        put("alpha_lr", self.alpha_lr.to_string());
        put("initial_alpha", self.initial_alpha.to_string());
        put("target_entropy", self.target_entropy.to_string());
        put("max_grad_norm", self.max_grad_norm.to_string());
        put("policy_weight_decay", self.policy_weight_decay.to_string());
        put("q_weight_decay", self.q_weight_decay.to_string());
        put("expert_proportion", self.expert_proportion.to_string());
        put("expert_decay", self.expert_decay.to_string());
        put("q_update_freq", self.q_update_freq.to_string());
        put("target_update_freq", self.target_update_freq.to_string());
        put("pi_update_freq", self.pi_update_freq.to_string());
        put("policy_hidden", join(&self.policy_hidden));
        put("q_hidden", join(&self.q_hidden));
        put("d_lr", self.d_lr.to_string());
        put("d_batch_size", self.d_batch_size.to_string());
        put("d_hidden", join(&self.d_hidden));
        put("d_weight_decay", self.d_weight_decay.to_string());
        put("gp_lambda", self.gp_lambda.to_string());
        put(
            "gp_target",
            match self.gp_target {
                PenaltyTarget::Probability => "probability",
                PenaltyTarget::Logit => "logit",
            }
            .to_string(),
        );
        put("final_pair_bias", self.final_pair_bias.to_string());
        put("reward_form", self.reward_form.name().to_string());
        put("scheduler", self.scheduler.to_string());
        put("main_rate", self.main_rate.to_string());
        put("hc_rate", self.hc_rate.to_string());
        put("period_len", self.period_len.to_string());
        put("hc_file", path_or_empty(&self.hc_file));
        put("sched_temperature", self.sched_temperature.to_string());
        put(
            "sched_temperature_decay",
            self.sched_temperature_decay.to_string(),
        );
        put(
            "sched_min_temperature",
            self.sched_min_temperature.to_string(),
        );
        put("sched_ema", self.sched_ema.to_string());
        put("bc_protocol", self.bc_protocol.name().to_string());
        put("bc_batch_size", self.bc_batch_size.to_string());
        put("bc_lr", self.bc_lr.to_string());
        put("bc_weight_decay", self.bc_weight_decay.to_string());
        put("bc_split", self.bc_split.to_string());
        put("bc_tolerance", self.bc_tolerance.to_string());
        put("bc_max_epochs", self.bc_max_epochs.to_string());
        put("env_config", path_or_empty(&self.env_config));
        for (k, v) in self.env.values() {
            if k != "variant" {
                m.insert(format!("env.{k}"), v);
            }
        }
        m
    }

    /// Reads `key = value` lines; `include = <path>` pulls in another file
    /// relative to the including one.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_file_at(path, 0)
    }

    fn apply_file_at(&mut self, path: &Path, depth: usize) -> Result<()> {
        if depth > MAX_INCLUDE_DEPTH {
            return Err(Error::Config(format!(
                "includes nested too deeply at {}",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    n + 1
                ))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "include" {
                let target = path.parent().unwrap_or(Path::new(".")).join(v);
                self.apply_file_at(&target, depth + 1)?;
                continue;
            }
            let origin = format!("{}:{}", path.display(), n + 1);
            self.set_from(k, v, &origin)
                .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// One line per key: value, default provenance, and where it was set.
    pub fn explain(&self) -> String {
        let values = self.values();
        let mut out = String::new();
        for (k, why) in KEYS {
            let origin = self
                .origins
                .get(*k)
                .map(String::as_str)
                .unwrap_or("default");
            out.push_str(&format!(
                "{k} = {}    # {why}; set by {origin}\n",
                values[*k]
            ));
        }
        for (k, why) in crate::envs::config::KEYS {
            if *k == "variant" {
                continue;
            }
            let key = format!("env.{k}");
            let origin = self
                .origins
                .get(&key)
                .map(String::as_str)
                .unwrap_or("default");
            out.push_str(&format!(
                "{key} = {}    # environment: {why}; set by {origin}\n",
                values[&key]
            ));
        }
        out
    }

    /// Every key as a loadable config file.
    pub fn to_text(&self) -> String {
        let values = self.values();
        let mut out = String::new();
        for (k, _) in KEYS {
            if *k == "env_config" {
                continue;
            }
            out.push_str(&format!("{k} = {}\n", values[*k]));
        }
        for (k, v) in &values {
            if k.starts_with("env.") {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    /// Tasks the run learns: the main task alone for single-task algorithms.
    pub fn task_set(&self) -> TaskSet {
        let full = self
            .tasks
            .clone()
            .unwrap_or_else(|| TaskSet::standard(self.variant));
        if self.algorithm.multitask() {
            full
        } else {
            TaskSet::single(full.main())
        }
    }

    /// The multitask set, whatever the algorithm.
    pub fn full_task_set(&self) -> TaskSet {
        self.tasks
            .clone()
            .unwrap_or_else(|| TaskSet::standard(self.variant))
    }

    pub fn periods(&self) -> usize {
        self.env.horizon / self.period_len.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        let full = self.full_task_set();
        if full.main() != TaskId::main_for(self.variant) {
            return Err(Error::Config(format!(
                "main task `{}` does not match variant `{}`",
                full.main(),
                self.variant
            )));
        }
        let positive = [
            ("total_steps", self.total_steps),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
            ("hold_steps", self.hold_steps),
            ("expert_subsample", self.expert_subsample),
            ("replay_capacity", self.replay_capacity),
            ("batch_size", self.batch_size),
            ("d_batch_size", self.d_batch_size),
            ("bc_batch_size", self.bc_batch_size),
            ("period_len", self.period_len),
            ("q_update_freq", self.q_update_freq),
            ("target_update_freq", self.target_update_freq),
            ("pi_update_freq", self.pi_update_freq),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if !self.env.horizon.is_multiple_of(self.period_len) {
            return Err(Error::Config(format!(
                "horizon {} is not a multiple of period_len {}",
                self.env.horizon, self.period_len
            )));
        }
        let unit = [
            ("gamma", self.gamma),
            ("polyak", self.polyak),
            ("expert_proportion", self.expert_proportion),
            ("expert_decay", self.expert_decay),
            ("final_pair_bias", self.final_pair_bias),
            ("main_rate", self.main_rate),
            ("hc_rate", self.hc_rate),
            ("sched_ema", self.sched_ema),
            ("sched_temperature_decay", self.sched_temperature_decay),
        ];
        for (k, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("`{k}` must lie in [0, 1], got {v}")));
            }
        }
        if !(self.initial_alpha > 0.0) {
            return Err(Error::Config("`initial_alpha` must be positive".into()));
        }
        if self.sched_min_temperature <= 0.0 || self.sched_temperature < self.sched_min_temperature
        {
            return Err(Error::Config(
                "scheduler temperatures must satisfy 0 < floor <= initial".into(),
            ));
        }
        self.bc_config(0).validate()
    }

    pub fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            kind: if self.algorithm.multitask() {
                self.scheduler
            } else {
                SchedulerKind::None
            },
            main_rate: self.main_rate,
            hc_rate: self.hc_rate,
            periods: self.periods(),
            period_len: self.period_len,
            initial_temperature: self.sched_temperature,
            temperature_decay: self.sched_temperature_decay,
            min_temperature: self.sched_min_temperature,
            ema: self.sched_ema,
            gamma: self.gamma,
        }
    }

    pub fn bc_config(&self, updates: usize) -> BcConfig {
        BcConfig {
            multitask: self.algorithm == Algorithm::BcMultitask,
            batch_size: self.bc_batch_size,
            lr: self.bc_lr,
            weight_decay: self.bc_weight_decay,
            max_grad_norm: self.max_grad_norm,
            protocol: self.bc_protocol,
            split: self.bc_split,
            tolerance: self.bc_tolerance,
            updates,
            max_epochs: self.bc_max_epochs,
        }
    }

    /// Expert share of policy and Q batches; off when expert sampling is off.
    pub fn expert_mix(&self) -> ExpertMix {
        if self.expert_sampling {
            ExpertMix::new(self.expert_proportion, self.expert_decay)
        } else {
            ExpertMix::off()
        }
    }

    /// Final-pair share of discriminator expert batches.
    pub fn discriminator_bias(&self) -> f64 {
        if self.expert_sampling {
            self.final_pair_bias
        } else {
            0.0
        }
    }

    pub fn sac_config(&self) -> crate::intentions::SacConfig {
        crate::intentions::SacConfig {
            gamma: self.gamma,
            tau: self.polyak,
            policy_lr: self.policy_lr,
            q_lr: self.q_lr,
            alpha_lr: self.alpha_lr,
            policy_weight_decay: self.policy_weight_decay,
            q_weight_decay: self.q_weight_decay,
            max_grad_norm: self.max_grad_norm,
            initial_alpha: self.initial_alpha,
            target_entropy: self.target_entropy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_has_a_value_and_round_trips() {
        let cfg = RunConfig::default();
        let values = cfg.values();
        for (k, _) in KEYS {
            assert!(values.contains_key(*k), "{k}");
        }
        let mut again = RunConfig::default();
        for line in cfg.to_text().lines() {
            let (k, v) = line.split_once('=').unwrap();
            again.set(k.trim(), v.trim()).unwrap();
        }
        assert_eq!(again.values(), values);
    }

    #[test]
    fn single_task_algorithms_drop_auxiliaries() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.task_set().len(), 6);
        cfg.set("algorithm", "dac").unwrap();
        assert_eq!(cfg.task_set().len(), 1);
        assert_eq!(cfg.scheduler_config().kind, SchedulerKind::None);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("nope", "1"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("batch_size", "x"), Err(Error::Config(_))));
        cfg.set("period_len", "7").unwrap();
        assert!(cfg.validate().is_err());
    }
}
