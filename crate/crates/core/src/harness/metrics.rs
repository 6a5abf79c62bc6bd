//! Run logs and the statistics computed from them.

use serde::{Deserialize, Serialize};

use crate::ensemble::ResetEvent;
use crate::error::{Error, Result};

/// Floor on the pre-reset level in the collapse ratio.
pub const COLLAPSE_EPS: f64 = 1e-8;

/// Evaluation points averaged for the pre-reset level and the final return.
pub const TRAILING_EVALS: usize = 3;

/// Interquartile mean: drops `floor(n/4)` values from each end of the sorted
/// scores and averages the rest.
///
/// ```
/// assert_eq!(rde::harness::iqm(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap(), 4.5);
/// ```
pub fn iqm(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("iqm of an empty list"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("iqm scores"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let trim = sorted.len() / 4;
    let kept = &sorted[trim..sorted.len() - trim];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Mean after sorting, so the result does not depend on input order.
pub fn sorted_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    pub scores: Vec<f64>,
    /// The baseline mean was zero and `scores` are the raw values.
    pub raw_fallback: bool,
}

/// Divides each score by the baseline's mean.
pub fn normalize_scores(scores: &[f64], baseline: &[f64]) -> Result<Normalized> {
    if baseline.is_empty() {
        return Err(Error::invalid("empty baseline"));
    }
    let mean = sorted_mean(baseline);
    if mean == 0.0 {
        return Ok(Normalized {
            scores: scores.to_vec(),
            raw_fallback: true,
        });
    }
    Ok(Normalized {
        scores: scores.iter().map(|s| s / mean).collect(),
        raw_fallback: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    /// `(reset step, drop ratio)` for every reset with evaluations on both sides.
    pub drops: Vec<(u64, f64)>,
    /// Resets lacking a pre- or post-reset evaluation.
    pub skipped: Vec<u64>,
    pub max: f64,
    pub mean: f64,
}

/// Relative fall of the evaluated return after each reset.
///
/// The pre-reset level is the mean of the last three evaluations at or before
/// the reset step (an evaluation at the reset step itself runs before the
/// reset). The post-reset level is the minimum over the next `window`
/// evaluations.
pub fn collapse_metric(
    eval_curve: &[(u64, f64)],
    reset_steps: &[u64],
    window: usize,
) -> Result<CollapseReport> {
    if eval_curve.is_empty() {
        return Err(Error::invalid("collapse metric needs a non-empty eval curve"));
    }
    if window == 0 {
        return Err(Error::invalid("collapse window must be at least 1"));
    }
    let mut drops = Vec::new();
    let mut skipped = Vec::new();
    for &t_r in reset_steps {
        let split = eval_curve.partition_point(|&(s, _)| s <= t_r);
        let pre = &eval_curve[split.saturating_sub(TRAILING_EVALS)..split];
        let post = &eval_curve[split..(split + window).min(eval_curve.len())];
        if pre.is_empty() || post.is_empty() {
            skipped.push(t_r);
            continue;
        }
        let pre_level = pre.iter().map(|p| p.1).sum::<f64>() / pre.len() as f64;
        let post_min = post.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let drop = ((pre_level - post_min) / pre_level.max(COLLAPSE_EPS)).max(0.0);
        drops.push((t_r, drop));
    }
    let max = drops.iter().map(|d| d.1).fold(0.0, f64::max);
    let mean = if drops.is_empty() {
        0.0
    } else {
        drops.iter().map(|d| d.1).sum::<f64>() / drops.len() as f64
    };
    Ok(CollapseReport {
        drops,
        skipped,
        max,
        mean,
    })
}

/// One line of the per-run CSV: an evaluation point, a reset, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_step: u64,
    pub eval_return_mean: Option<f64>,
    pub eval_return_std: Option<f64>,
    pub eval_cost_mean: Option<f64>,
    /// Mean training loss over the updates since the previous row.
    pub train_loss: Option<f64>,
    /// Agent reset at this step, `-1` if none.
    pub reset_agent_index: i64,
    /// Mean training selection distribution since the previous row.
    pub p_select: Vec<f64>,
    pub cumulative_train_cost: f64,
}

/// One training-time composition, kept when `trace_selection` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub step: u64,
    pub p: Vec<f64>,
    pub chosen: usize,
    pub oldest: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Mean of the last three evaluation returns.
    pub final_return: f64,
    pub cumulative_train_cost: f64,
    pub train_episodes: u64,
    pub updates_per_agent: u64,
    pub collapse: CollapseReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub n_agents: usize,
    pub rows: Vec<MetricsRow>,
    pub reset_events: Vec<ResetEvent>,
    pub selection_trace: Vec<SelectionRecord>,
    pub summary: RunSummary,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_string(header: Vec<String>, records: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = || -> std::result::Result<Vec<u8>, Box<dyn std::error::Error>> {
        w.write_record(&header)?;
        for r in records {
            w.write_record(&r)?;
        }
        Ok(w.into_inner()?)
    };
    let bytes = write().expect("writing csv to memory cannot fail");
    String::from_utf8(bytes).expect("csv of utf-8 fields is utf-8")
}

impl MetricsLog {
    /// `(env_step, eval_return_mean)` at every evaluation point.
    pub fn eval_curve(&self) -> Vec<(u64, f64)> {
        eval_curve(&self.rows)
    }

    pub fn csv_header(n_agents: usize) -> Vec<String> {
        let mut h: Vec<String> = [
            "env_step",
            "eval_return_mean",
            "eval_return_std",
            "eval_cost_mean",
            "train_loss",
            "reset_agent_index",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend((0..n_agents).map(|i| format!("p_select_{i}")));
        h.push("cumulative_train_cost".to_string());
        h
    }

    pub fn to_csv(&self) -> String {
        let records = self.rows.iter().map(|r| {
            let mut f = vec![
                r.env_step.to_string(),
                opt(r.eval_return_mean),
                opt(r.eval_return_std),
                opt(r.eval_cost_mean),
                opt(r.train_loss),
                r.reset_agent_index.to_string(),
            ];
            f.extend(r.p_select.iter().map(|p| p.to_string()));
            f.push(r.cumulative_train_cost.to_string());
            f
        });
        csv_string(Self::csv_header(self.n_agents), records)
    }

    pub fn selection_trace_csv(&self) -> String {
        let mut header: Vec<String> = vec!["env_step".into(), "chosen".into(), "oldest".into()];
        header.extend((0..self.n_agents).map(|i| format!("p_{i}")));
        let records = self.selection_trace.iter().map(|s| {
            let mut f = vec![s.step.to_string(), s.chosen.to_string(), s.oldest.to_string()];
            f.extend(s.p.iter().map(|p| p.to_string()));
            f
        });
        csv_string(header, records)
    }
}

pub fn eval_curve(rows: &[MetricsRow]) -> Vec<(u64, f64)> {
    rows.iter()
        .filter_map(|r| r.eval_return_mean.map(|v| (r.env_step, v)))
        .collect()
}

/// Mean of the last three evaluation returns.
pub fn final_return(rows: &[MetricsRow]) -> Option<f64> {
    let curve = eval_curve(rows);
    if curve.is_empty() {
        return None;
    }
    let tail = &curve[curve.len().saturating_sub(TRAILING_EVALS)..];
    Some(tail.iter().map(|p| p.1).sum::<f64>() / tail.len() as f64)
}

/// Reads a per-run CSV written by [`MetricsLog::to_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let bad = |e: csv::Error| Error::invalid(format!("malformed metrics csv: {e}"));
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(bad)?.clone();
    let n_agents = header.iter().filter(|h| h.starts_with("p_select_")).count();
    if header.iter().collect::<Vec<_>>() != MetricsLog::csv_header(n_agents) {
        return Err(Error::invalid("unrecognized metrics csv header"));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("bad number `{s}` in metrics csv")))
    };
    let int_err = |s: &str| Error::invalid(format!("bad integer `{s}` in metrics csv"));
    let mut rows = Vec::new();
    for record in reader.records() {
        let f = record.map_err(bad)?;
        rows.push(MetricsRow {
            env_step: f[0].parse().map_err(|_| int_err(&f[0]))?,
            eval_return_mean: num(&f[1])?,
            eval_return_std: num(&f[2])?,
            eval_cost_mean: num(&f[3])?,
            train_loss: num(&f[4])?,
            reset_agent_index: f[5].parse().map_err(|_| int_err(&f[5]))?,
            p_select: (6..6 + n_agents)
                .map(|i| num(&f[i]).map(|v| v.unwrap_or(f64::NAN)))
                .collect::<Result<_>>()?,
            cumulative_train_cost: num(&f[6 + n_agents])?.unwrap_or(0.0),
        });
    }
    Ok(rows)
}
