use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// One evaluation of the greedy student.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub step: u64,
    pub score: f64,
    pub teacher_queries: u64,
    pub reuse_firings: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub points: Vec<EvalPoint>,
    pub teacher_queries: u64,
    pub reuse_firings: u64,
    /// Normalized AUC; `None` with fewer than two points.
    pub auc: Option<f64>,
}

impl RunMetrics {
    pub fn push(&mut self, p: EvalPoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if p.step <= last.step {
                return Err(Error::Shape(format!(
                    "evaluation at step {} after step {}",
                    p.step, last.step
                )));
            }
        }
        self.points.push(p);
        Ok(())
    }

    pub fn final_score(&self) -> Option<f64> {
        self.points.last().map(|p| p.score)
    }
}

/// Trapezoidal area under `score/teacher_score` over the step axis,
/// divided by the step span. Scores are clipped to `[0, teacher_score]`.
pub fn compute_auc(points: &[EvalPoint], teacher_score: f64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::EmptyDataset("AUC needs at least two evaluation points"));
    }
    if !(teacher_score > 0.0) {
        return Err(Error::Degenerate("teacher score must be positive"));
    }
    let norm = |s: f64| s.clamp(0.0, teacher_score) / teacher_score;
    let mut area = 0.0;
    for w in points.windows(2) {
        if w[1].step <= w[0].step {
            return Err(Error::Shape("evaluation steps must strictly increase".into()));
        }
        area += 0.5 * (norm(w[0].score) + norm(w[1].score)) * (w[1].step - w[0].step) as f64;
    }
    let span = (points.last().unwrap().step - points[0].step) as f64;
    Ok(area / span)
}

pub const METRICS_HEADER: &str = "step,eval_score,teacher_queries,reuse_firings";

pub fn metrics_to_csv(m: &RunMetrics) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for p in &m.points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.step, p.score, p.teacher_queries, p.reuse_firings
        );
    }
    let _ = writeln!(out, "auc,{}", m.auc.unwrap_or(f64::NAN));
    out
}

/// Parses [`metrics_to_csv`] output; run totals are taken from the last row.
pub fn parse_metrics_csv(text: &str) -> Result<RunMetrics> {
    let bad = |msg: String| Error::Shape(format!("metrics CSV: {msg}"));
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(bad("missing header".into()));
    }
    let mut m = RunMetrics::default();
    for line in lines.filter(|l| !l.is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if let ["auc", v] = fields[..] {
            let auc: f64 = v.parse().map_err(|_| bad(format!("bad auc {v:?}")))?;
            m.auc = (!auc.is_nan()).then_some(auc);
            continue;
        }
        let [step, score, q, r] = fields[..] else {
            return Err(bad(format!("expected 4 fields in {line:?}")));
        };
        let p = EvalPoint {
            step: step.parse().map_err(|_| bad(format!("bad step {step:?}")))?,
            score: score.parse().map_err(|_| bad(format!("bad score {score:?}")))?,
            teacher_queries: q.parse().map_err(|_| bad(format!("bad count {q:?}")))?,
            reuse_firings: r.parse().map_err(|_| bad(format!("bad count {r:?}")))?,
        };
        m.teacher_queries = p.teacher_queries;
        m.reuse_firings = p.reuse_firings;
        m.push(p)?;
    }
    Ok(m)
}

pub fn write_metrics(m: &RunMetrics, path: &Path) -> Result<()> {
    std::fs::write(path, metrics_to_csv(m)).map_err(|e| Error::io(path, e))
}
