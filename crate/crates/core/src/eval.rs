//! Greedy checkpoint evaluation, the trailing-window performance metric and
//! curve export.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::TaskWrapper;
use crate::learn::{Policy, PolicyMemory, RewardModel};
use crate::srm::SrmError;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSchedule {
    /// Training steps between checkpoints.
    pub interval: u64,
    /// Greedy runs per checkpoint.
    pub runs: usize,
    /// Step cap per greedy run.
    pub cap: usize,
    pub window: usize,
}

impl EvalSchedule {
    pub fn tabular() -> EvalSchedule {
        EvalSchedule {
            interval: 5_000,
            runs: 20,
            cap: 500,
            window: 10,
        }
    }

    pub fn deep() -> EvalSchedule {
        EvalSchedule {
            interval: 10_000,
            ..EvalSchedule::tabular()
        }
    }
}

/// Mean return of `schedule.runs` greedy episodes, each on a freshly built
/// copy of `task`. The model tracks its state along the observed states.
pub fn evaluate_policy(
    policy: &dyn Policy,
    model: &dyn RewardModel,
    task: &TaskWrapper,
    schedule: &EvalSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<f64, SrmError> {
    let mut total = 0.0;
    for _ in 0..schedule.runs {
        let mut env = task.fresh(rng.gen());
        let mut s = env.reset();
        let mut u = model.initial();
        let mut memory = PolicyMemory::default();
        for _ in 0..schedule.cap {
            let a = policy.act(&mut memory, u, &s);
            let step = env.step(a);
            total += step.reward;
            u = model.transition(u, &step.state, step.reward)?.1;
            s = step.state;
            if step.terminal {
                break;
            }
        }
    }
    Ok(total / schedule.runs as f64)
}

/// Trailing mean over `window` points (fewer at the head), divided by
/// `max_return`.
pub fn mean10(series: &[f64], max_return: f64, window: usize) -> Vec<f64> {
    assert!(max_return > 0.0 && window > 0);
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &series[lo..=i];
            w.iter().sum::<f64>() / w.len() as f64 / max_return
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformancePoint {
    pub step: u64,
    pub performance: f64,
    pub mean10: f64,
}

/// Checkpoint series with its running metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub points: Vec<PerformancePoint>,
    pub window: usize,
    pub max_return: f64,
}

impl Default for Curve {
    fn default() -> Self {
        Curve::new(10, 1.0)
    }
}

impl Curve {
    pub fn new(window: usize, max_return: f64) -> Curve {
        Curve {
            points: Vec::new(),
            window,
            max_return,
        }
    }

    pub fn push(&mut self, step: u64, performance: f64) {
        let mut series: Vec<f64> = self.points.iter().map(|p| p.performance).collect();
        series.push(performance);
        let lo = series.len().saturating_sub(self.window);
        let m = mean10(&series[lo..], self.max_return, self.window);
        self.points.push(PerformancePoint {
            step,
            performance,
            mean10: *m.last().expect("non-empty"),
        });
    }

    pub fn last_mean10(&self) -> Option<f64> {
        self.points.last().map(|p| p.mean10)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "performance", "mean10"])
            .expect("in-memory write");
        for p in &self.points {
            w.write_record([
                p.step.to_string(),
                p.performance.to_string(),
                p.mean10.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    pub fn from_csv(text: &str, window: usize, max_return: f64) -> Result<Curve, csv::Error> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut c = Curve::new(window, max_return);
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| {
                rec.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .unwrap_or(f64::NAN)
            };
            c.points.push(PerformancePoint {
                step: parse(0) as u64,
                performance: parse(1),
                mean10: parse(2),
            });
        }
        Ok(c)
    }

    pub fn export_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Pointwise mean of curves with identical checkpoint steps.
pub fn mean_curve(curves: &[Curve]) -> Option<Curve> {
    let first = curves.first()?;
    let mut out = Curve::new(first.window, first.max_return);
    for (i, p) in first.points.iter().enumerate() {
        let at: Vec<&PerformancePoint> = curves.iter().filter_map(|c| c.points.get(i)).collect();
        if at.len() != curves.len() || at.iter().any(|q| q.step != p.step) {
            return None;
        }
        let n = at.len() as f64;
        out.points.push(PerformancePoint {
            step: p.step,
            performance: at.iter().map(|q| q.performance).sum::<f64>() / n,
            mean10: at.iter().map(|q| q.mean10).sum::<f64>() / n,
        });
    }
    Some(out)
}

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Line plot of the mean10 series of each named curve.
pub fn curves_svg(curves: &[(String, Curve)]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let max_step = curves
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|p| p.step))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let x = |s: u64| m + (w - 2.0 * m) * s as f64 / max_step;
    let y = |v: f64| h - m - (h - 2.0 * m) * v.clamp(0.0, 1.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<path d="M{m} {m} L{m} {} L{} {}" fill="none" stroke="black"/>"#,
        h - m,
        w - m,
        h - m
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{tick}</text>"#,
            m - 6.0,
            y(tick) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">step (max {max_step})</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">mean10</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.step), y(p.mean10)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = m + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{}</text>"#,
            w - m - 120.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
