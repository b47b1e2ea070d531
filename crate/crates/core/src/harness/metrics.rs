//! Metrics records and their CSV form.

use std::path::Path;

use crate::error::{Error, Result};

/// Column order of the metrics file.
pub const HEADER: [&str; 14] = [
    "step",
    "algorithm",
    "seed",
    "task",
    "success_rate",
    "mean_return",
    "d_loss",
    "q_loss",
    "pi_loss",
    "bc_loss",
    "alpha",
    "expert_proportion",
    "hc_share",
    "sched_temperature",
];

/// One evaluation point for one task. Loss columns are means since the
/// previous evaluation point and NaN when the algorithm has no such loss.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: usize,
    pub algorithm: String,
    pub seed: u64,
    pub task: String,
    pub success_rate: f64,
    pub mean_return: f64,
    pub d_loss: f64,
    pub q_loss: f64,
    pub pi_loss: f64,
    pub bc_loss: f64,
    pub alpha: f64,
    pub expert_proportion: f64,
    pub hc_share: f64,
    pub sched_temperature: f64,
}

impl MetricsRecord {
    fn fields(&self) -> Vec<String> {
        vec![
            self.step.to_string(),
            self.algorithm.clone(),
            self.seed.to_string(),
            self.task.clone(),
            self.success_rate.to_string(),
            self.mean_return.to_string(),
            self.d_loss.to_string(),
            self.q_loss.to_string(),
            self.pi_loss.to_string(),
            self.bc_loss.to_string(),
            self.alpha.to_string(),
            self.expert_proportion.to_string(),
            self.hc_share.to_string(),
            self.sched_temperature.to_string(),
        ]
    }

    fn from_fields(r: &csv::StringRecord) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("metrics row: {m}"));
        if r.len() != HEADER.len() {
            return Err(bad(format!(
                "{} columns, expected {}",
                r.len(),
                HEADER.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            r[i].parse::<f64>()
                .map_err(|_| bad(format!("`{}` in column {}", &r[i], HEADER[i])))
        };
        Ok(Self {
            step: r[0].parse().map_err(|_| bad(format!("step `{}`", &r[0])))?,
            algorithm: r[1].to_string(),
            seed: r[2].parse().map_err(|_| bad(format!("seed `{}`", &r[2])))?,
            task: r[3].to_string(),
            success_rate: f(4)?,
            mean_return: f(5)?,
            d_loss: f(6)?,
            q_loss: f(7)?,
            pi_loss: f(8)?,
            bc_loss: f(9)?,
            alpha: f(10)?,
            expert_proportion: f(11)?,
            hc_share: f(12)?,
            sched_temperature: f(13)?,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("metrics csv: {e}"))
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record(r.fields()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Format(format!(
            "{}: unexpected metrics header",
            path.display()
        )));
    }
    r.records()
        .map(|rec| MetricsRecord::from_fields(&rec.map_err(csv_err)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_nan_columns() {
        let rec = MetricsRecord {
            step: 5000,
            algorithm: "bc".into(),
            seed: 3,
            task: "stack".into(),
            success_rate: 0.42,
            mean_return: 7.5,
            d_loss: f64::NAN,
            q_loss: f64::NAN,
            pi_loss: f64::NAN,
            bc_loss: 0.01,
            alpha: f64::NAN,
            expert_proportion: 0.0,
            hc_share: 0.0,
            sched_temperature: f64::NAN,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics(&p, std::slice::from_ref(&rec)).unwrap();
        let back = read_metrics(&p).unwrap();
        assert_eq!(back[0].success_rate, 0.42);
        assert!(back[0].d_loss.is_nan());
        assert_eq!(back[0].fields(), rec.fields());
    }
}
