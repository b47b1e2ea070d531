//! Cross-product ablations over run keys.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::RunConfig;
use super::metrics::MetricsRecord;
use super::train::train;
use crate::error::{Error, Result};

/// Axes in file order. `seed` is an ordinary axis and is shared by all cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationMatrix {
    pub axes: Vec<(String, Vec<String>)>,
}

impl AblationMatrix {
    /// `key = v1, v2, ...` per line; `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("ablation line {}: expected key = values", n + 1))
            })?;
            let values: Vec<String> = v
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if values.is_empty() {
                return Err(Error::Config(format!(
                    "ablation axis `{}` has no values",
                    k.trim()
                )));
            }
            if axes.iter().any(|(a, _)| a == k.trim()) {
                return Err(Error::Config(format!(
                    "ablation axis `{}` repeated",
                    k.trim()
                )));
            }
            axes.push((k.trim().to_string(), values));
        }
        Ok(Self { axes })
    }

    /// Every combination, first axis slowest. An empty matrix has one empty
    /// cell.
    pub fn cells(&self) -> Vec<Vec<(String, String)>> {
        let mut cells = vec![Vec::new()];
        for (k, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((k.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

/// Directory name of a cell, e.g. `scheduler-wrs_seed-1`.
pub fn cell_name(cell: &[(String, String)]) -> String {
    if cell.is_empty() {
        return "base".into();
    }
    cell.iter()
        .map(|(k, v)| {
            let v: String = v
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '.' {
                        c
                    } else {
                        '-'
                    }
                })
                .collect();
            format!("{k}-{v}")
        })
        .collect::<Vec<_>>()
        .join("_")
}

pub struct CellResult {
    pub name: String,
    pub dir: PathBuf,
    pub metrics: Vec<MetricsRecord>,
}

/// Runs every cell with `jobs` worker threads and writes each cell's
/// outputs to its own directory under `out`.
pub fn ablate(
    base: &RunConfig,
    matrix: &AblationMatrix,
    out: &Path,
    jobs: usize,
) -> Result<Vec<CellResult>> {
    let cells: Vec<(String, RunConfig)> = matrix
        .cells()
        .into_iter()
        .map(|cell| {
            let mut cfg = base.clone();
            for (k, v) in &cell {
                cfg.set_from(k, v, "ablation")?;
            }
            cfg.validate()?;
            Ok((cell_name(&cell), cfg))
        })
        .collect::<Result<_>>()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CellResult>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, cells.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((name, cfg)) = cells.get(i) else {
                    break;
                };
                let dir = out.join(name);
                let r = train(cfg, Some(&dir)).map(|rep| CellResult {
                    name: name.clone(),
                    dir: dir.clone(),
                    metrics: rep.metrics,
                });
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}
