//! SVG line charts of success rate against steps, mean and spread over seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::metrics::MetricsRecord;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLOURS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Mean and population standard deviation at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub step: usize,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

/// Success-rate curve for `task` per label (algorithm unless overridden),
/// aggregated over seeds.
pub fn aggregate(records: &[(String, MetricsRecord)], task: &str) -> BTreeMap<String, Vec<Point>> {
    let mut by: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for (label, r) in records.iter().filter(|(_, r)| r.task == task) {
        by.entry(label.clone())
            .or_default()
            .entry(r.step)
            .or_default()
            .push(r.success_rate);
    }
    by.into_iter()
        .map(|(label, steps)| {
            let pts = steps
                .into_iter()
                .map(|(step, v)| {
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    Point {
                        step,
                        mean,
                        std: var.sqrt(),
                        seeds: v.len(),
                    }
                })
                .collect();
            (label, pts)
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders curves with a shaded mean +- std band.
pub fn render_svg(title: &str, curves: &BTreeMap<String, Vec<Point>>) -> Result<String> {
    let max_step = curves
        .values()
        .flat_map(|c| c.iter().map(|p| p.step))
        .max()
        .ok_or_else(|| Error::Usage("nothing to plot".into()))?
        .max(1) as f64;
    let x = |s: usize| MARGIN + (s as f64 / max_step) * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - v.clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{yy:.2}" x2="{}" y2="{yy:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{v:.1}</text>"##,
            MARGIN,
            WIDTH - MARGIN,
            MARGIN - 6.0,
            y(v) + 4.0,
            yy = y(v)
        );
        let s = (max_step * v).round() as usize;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{s}</text>"#,
            x(s),
            HEIGHT - MARGIN + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">environment steps</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">success rate</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, (label, pts)) in curves.iter().enumerate() {
        let c = COLOURS[i % COLOURS.len()];
        let upper: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.step), y(p.mean + p.std)))
            .collect();
        let lower: Vec<String> = pts
            .iter()
            .rev()
            .map(|p| format!("{:.2},{:.2}", x(p.step), y(p.mean - p.std)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{} {}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.step), y(p.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            WIDTH - MARGIN - 100.0,
            WIDTH - MARGIN - 94.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: usize, seed: u64, v: f64) -> MetricsRecord {
        MetricsRecord {
            step,
            algorithm: "lfgp".into(),
            seed,
            task: "stack".into(),
            success_rate: v,
            mean_return: 0.0,
            d_loss: 0.0,
            q_loss: 0.0,
            pi_loss: 0.0,
            bc_loss: f64::NAN,
            alpha: 0.0,
            expert_proportion: 0.0,
            hc_share: 0.0,
            sched_temperature: 0.0,
        }
    }

    #[test]
    fn aggregate_mean_and_std() {
        let rs = vec![
            ("lfgp".to_string(), rec(10, 0, 0.2)),
            ("lfgp".to_string(), rec(10, 1, 0.6)),
        ];
        let c = aggregate(&rs, "stack");
        let p = c["lfgp"][0];
        assert!((p.mean - 0.4).abs() < 1e-12);
        assert!((p.std - 0.2).abs() < 1e-12);
        let svg = render_svg("t", &c).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
        assert!(render_svg("t", &BTreeMap::new()).is_err());
    }
}
