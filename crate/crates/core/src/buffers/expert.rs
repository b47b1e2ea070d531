//! Per-task expert pairs and the expert data file.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "LFGPEXPT"
//! version      u32      1
//! header_len   u32      byte length of the header
//! header       UTF-8    key=value lines: task, obs_dim, act_dim, pairs,
//!                       final_pairs, episode_starts (comma-separated)
//! records      (pairs + final_pairs) x (2 * obs_dim + act_dim + 1) f32
//! ```
//!
//! Each record is `s, a, s_next, terminal` with `terminal` stored as 0 or 1.
//! Regular pairs come first, augmented final pairs after them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Transition;
use crate::envs::TaskId;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LFGPEXPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertBuffer {
    pub task: TaskId,
    pub obs_dim: usize,
    pub act_dim: usize,
    pairs: Vec<Transition>,
    final_pair_indices: Vec<usize>,
    /// Index of the first pair of every demonstration trajectory.
    episode_starts: Vec<usize>,
}

impl ExpertBuffer {
    pub fn new(task: TaskId, obs_dim: usize, act_dim: usize) -> Self {
        Self {
            task,
            obs_dim,
            act_dim,
            pairs: Vec::new(),
            final_pair_indices: Vec::new(),
            episode_starts: Vec::new(),
        }
    }

    pub fn pairs(&self) -> &[Transition] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn final_pair_indices(&self) -> &[usize] {
        &self.final_pair_indices
    }

    pub fn regular_len(&self) -> usize {
        self.pairs.len() - self.final_pair_indices.len()
    }

    pub fn episode_starts(&self) -> &[usize] {
        &self.episode_starts
    }

    fn check_dims(&self, t: &Transition) -> Result<()> {
        if t.s.len() != self.obs_dim || t.s_next.len() != self.obs_dim || t.a.len() != self.act_dim
        {
            return Err(Error::Config(format!(
                "transition dims ({}, {}, {}) do not match buffer ({}, {})",
                t.s.len(),
                t.a.len(),
                t.s_next.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        Ok(())
    }

    /// Appends one demonstration trajectory. Must precede any final pairs.
    pub fn push_trajectory(&mut self, traj: Vec<Transition>) -> Result<()> {
        if !self.final_pair_indices.is_empty() {
            return Err(Error::Usage(
                "trajectories must be added before final pairs".into(),
            ));
        }
        if traj.is_empty() {
            return Ok(());
        }
        for t in &traj {
            self.check_dims(t)?;
        }
        self.episode_starts.push(self.pairs.len());
        self.pairs.extend(traj);
        Ok(())
    }

    /// Appends `n` pairs `(s_T, 0)` cycling through the given terminal states.
    pub fn augment_final_pairs(&mut self, n: usize, terminal_states: &[Vec<f64>]) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        if terminal_states.is_empty() {
            return Err(Error::Config(
                "no terminal states to build final pairs from".into(),
            ));
        }
        for i in 0..n {
            let s = terminal_states[i % terminal_states.len()].clone();
            let t = Transition {
                a: vec![0.0; self.act_dim],
                s_next: s.clone(),
                s,
                terminal: true,
            };
            self.check_dims(&t)?;
            self.final_pair_indices.push(self.pairs.len());
            self.pairs.push(t);
        }
        Ok(())
    }

    /// Drops every final pair and appends `replacement` as one more
    /// trajectory, keeping the total count when sizes match.
    pub fn replace_final_pairs(&mut self, replacement: Vec<Transition>) -> Result<()> {
        let keep = self.regular_len();
        self.pairs.truncate(keep);
        self.final_pair_indices.clear();
        self.push_trajectory(replacement)
    }

    /// Keeps pairs `0, stride, 2 * stride, ...` of each trajectory. Final pairs
    /// are retained.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("subsample stride must be at least 1".into()));
        }
        let mut out = Self::new(self.task, self.obs_dim, self.act_dim);
        let regular = self.regular_len();
        for (k, &start) in self.episode_starts.iter().enumerate() {
            let end = self.episode_starts.get(k + 1).copied().unwrap_or(regular);
            let traj = self.pairs[start..end]
                .iter()
                .step_by(stride)
                .cloned()
                .collect();
            out.push_trajectory(traj)?;
        }
        for &i in &self.final_pair_indices {
            out.final_pair_indices.push(out.pairs.len());
            out.pairs.push(self.pairs[i].clone());
        }
        Ok(out)
    }

    /// Keeps the first `pairs` regular pairs and the first `finals` final
    /// pairs.
    pub fn truncated(&self, pairs: usize, finals: usize) -> Result<Self> {
        if pairs > self.regular_len() || finals > self.final_pair_indices.len() {
            return Err(Error::Config(format!(
                "expert data for `{}` has {} pairs and {} final pairs, {pairs} and {finals} requested",
                self.task,
                self.regular_len(),
                self.final_pair_indices.len()
            )));
        }
        let mut out = Self::new(self.task, self.obs_dim, self.act_dim);
        for (k, &start) in self.episode_starts.iter().enumerate() {
            if start >= pairs {
                break;
            }
            let end = self
                .episode_starts
                .get(k + 1)
                .copied()
                .unwrap_or(pairs)
                .min(pairs);
            out.push_trajectory(self.pairs[start..end].to_vec())?;
        }
        for &i in &self.final_pair_indices[..finals] {
            out.final_pair_indices.push(out.pairs.len());
            out.pairs.push(self.pairs[i].clone());
        }
        Ok(out)
    }

    fn header_text(&self) -> String {
        let starts: Vec<String> = self.episode_starts.iter().map(|s| s.to_string()).collect();
        format!(
            "task={}\nobs_dim={}\nact_dim={}\npairs={}\nfinal_pairs={}\nepisode_starts={}\n",
            self.task,
            self.obs_dim,
            self.act_dim,
            self.regular_len(),
            self.final_pair_indices.len(),
            starts.join(",")
        )
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = self.header_text();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        for t in &self.pairs {
            for v in t.s.iter().chain(&t.a).chain(&t.s_next) {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
            w.write_all(&(t.terminal as u8 as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("expert file: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("wrong magic"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        if u32::from_le_bytes(word) != VERSION {
            return Err(bad("unsupported version"));
        }
        r.read_exact(&mut word)?;
        let mut text = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut text)?;
        let text = String::from_utf8(text).map_err(|_| bad("header is not UTF-8"))?;
        let field = |key: &str| -> Result<&str> {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
                .ok_or_else(|| bad(&format!("missing `{key}`")))
        };
        let num = |key: &str| -> Result<usize> {
            field(key)?
                .parse()
                .map_err(|_| bad(&format!("bad `{key}`")))
        };
        let task: TaskId = field("task")?.parse()?;
        let (obs_dim, act_dim) = (num("obs_dim")?, num("act_dim")?);
        let (pairs, finals) = (num("pairs")?, num("final_pairs")?);
        let starts_text = field("episode_starts")?;
        let episode_starts: Vec<usize> = if starts_text.is_empty() {
            Vec::new()
        } else {
            starts_text
                .split(',')
                .map(|s| s.parse().map_err(|_| bad("bad episode_starts")))
                .collect::<Result<_>>()?
        };
        if episode_starts.windows(2).any(|w| w[0] >= w[1])
            || episode_starts.iter().any(|&s| s >= pairs)
        {
            return Err(bad("episode_starts out of order or range"));
        }
        let width = 2 * obs_dim + act_dim + 1;
        let mut raw = vec![0u8; (pairs + finals) * width * 4];
        r.read_exact(&mut raw)
            .map_err(|_| bad(&format!("truncated, expected {} records", pairs + finals)))?;
        let vals: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let mut buf = Self::new(task, obs_dim, act_dim);
        buf.episode_starts = episode_starts;
        for (i, rec) in vals.chunks_exact(width).enumerate() {
            buf.pairs.push(Transition {
                s: rec[..obs_dim].to_vec(),
                a: rec[obs_dim..obs_dim + act_dim].to_vec(),
                s_next: rec[obs_dim + act_dim..2 * obs_dim + act_dim].to_vec(),
                terminal: rec[width - 1] != 0.0,
            });
            if i >= pairs {
                buf.final_pair_indices.push(i);
            }
        }
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| {
            Error::Config(format!("cannot open expert file {}: {e}", path.display()))
        })?;
        Self::read_from(&mut BufReader::new(f))
    }
}
