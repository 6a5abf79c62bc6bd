//! Cartesian sweeps over config axes, aggregated per cell over seeds.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigDoc, ConfigValue, ExperimentConfig};
use super::metrics::{iqm, sorted_mean, MetricsLog};
use super::run_experiment;
use crate::error::{Error, Result};

/// A config template plus the axes to sweep; `seed` is always an axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPlan {
    template: ConfigDoc,
    axes: Vec<(String, Vec<String>)>,
    seeds: Vec<u64>,
}

/// One cell of the product with the config of each of its seeds.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub assignments: Vec<(String, String)>,
    pub runs: Vec<(u64, ExperimentConfig)>,
}

impl SweepCell {
    pub fn label(&self) -> String {
        if self.assignments.is_empty() {
            return "default".to_string();
        }
        self.assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl SweepPlan {
    pub fn from_doc(doc: ConfigDoc) -> Result<Self> {
        let mut axes = doc.axes();
        let seeds: Vec<String> = match axes.iter().position(|(k, _)| k == "seed") {
            Some(i) => axes.remove(i).1,
            None => match doc.get("seed") {
                Some(ConfigValue::Scalar(s)) => vec![s.clone()],
                _ => vec!["0".to_string()],
            },
        };
        let seeds = seeds
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::config("seed", format!("cannot parse `{s}` as a seed")))
            })
            .collect::<Result<Vec<u64>>>()?;
        let plan = SweepPlan {
            template: doc,
            axes,
            seeds,
        };
        plan.cells()?;
        Ok(plan)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_doc(ConfigDoc::parse(text)?)
    }

    /// Replaces the seed axis.
    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::config("seed", "a sweep needs at least one seed"));
        }
        self.seeds = seeds;
        self.cells()?;
        Ok(self)
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn axes(&self) -> &[(String, Vec<String>)] {
        &self.axes
    }

    /// Every cell in row-major axis order, each config resolved and validated.
    pub fn cells(&self) -> Result<Vec<SweepCell>> {
        let mut base = ExperimentConfig::default();
        for (key, value) in self.template.entries() {
            if matches!(value, ConfigValue::Scalar(_)) || !self.axes.iter().any(|(k, _)| k == key) && key != "seed" {
                base.set(key, value)?;
            }
        }
        let mut assignments: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (key, values) in &self.axes {
            assignments = assignments
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut a = prefix.clone();
                        a.push((key.clone(), v.clone()));
                        a
                    })
                })
                .collect();
        }
        assignments
            .into_iter()
            .map(|assign| {
                let mut cfg = base.clone();
                for (k, v) in &assign {
                    cfg.set(k, &ConfigValue::Scalar(v.clone()))?;
                }
                let runs = self
                    .seeds
                    .iter()
                    .map(|&seed| {
                        let mut c = cfg.clone();
                        c.seed = seed;
                        c.resolve().map(|c| (seed, c))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SweepCell {
                    assignments: assign,
                    runs,
                })
            })
            .collect()
    }
}

/// Aggregate of one cell over its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub assignments: Vec<(String, String)>,
    /// Resolved config of the cell's first seed.
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    /// `(seed, final return)` of successful runs, by seed.
    pub final_returns: Vec<(u64, f64)>,
    /// `(seed, error)` of failed runs.
    pub failures: Vec<(u64, String)>,
    pub final_iqm: Option<f64>,
    pub mean_cumulative_cost: Option<f64>,
    /// Mean over runs of the per-run largest collapse drop.
    pub collapse_max: Option<f64>,
    /// Mean over runs of the per-run mean collapse drop.
    pub collapse_mean: Option<f64>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<CellReport>,
}

/// One finished run of a sweep.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub cell: usize,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub outcome: Result<MetricsLog>,
    pub seconds: f64,
}

/// Everything a sweep produced.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub report: SweepReport,
    pub runs: Vec<RunRecord>,
}

fn aggregate(cell: &SweepCell, runs: &[&RunRecord]) -> CellReport {
    let mut ok: Vec<(u64, &MetricsLog)> = Vec::new();
    let mut failures = Vec::new();
    for r in runs {
        match &r.outcome {
            Ok(log) => ok.push((r.seed, log)),
            Err(e) => failures.push((r.seed, e.to_string())),
        }
    }
    ok.sort_by_key(|(s, _)| *s);
    failures.sort();
    let stat = |f: &dyn Fn(&MetricsLog) -> f64| -> Option<f64> {
        let v: Vec<f64> = ok.iter().map(|(_, l)| f(l)).collect();
        (!v.is_empty()).then(|| sorted_mean(&v))
    };
    let finals: Vec<(u64, f64)> = ok.iter().map(|(s, l)| (*s, l.summary.final_return)).collect();
    let scores: Vec<f64> = finals.iter().map(|f| f.1).collect();
    let mut seeds: Vec<u64> = cell.runs.iter().map(|r| r.0).collect();
    seeds.sort_unstable();
    CellReport {
        label: cell.label(),
        assignments: cell.assignments.clone(),
        config: cell.runs[0].1.clone(),
        seeds,
        final_iqm: iqm(&scores).ok(),
        final_returns: finals,
        failures,
        mean_cumulative_cost: stat(&|l| l.summary.cumulative_train_cost),
        collapse_max: stat(&|l| l.summary.collapse.max),
        collapse_mean: stat(&|l| l.summary.collapse.mean),
        wall_clock_seconds: runs.iter().map(|r| r.seconds).sum(),
    }
}

/// Runs every (cell, seed) pair on `workers` threads.
///
/// A failing run is recorded in its cell and does not stop the others.
pub fn sweep(
    plan: &SweepPlan,
    workers: usize,
    progress: impl Fn(&RunRecord) + Sync,
) -> Result<SweepOutput> {
    let cells = plan.cells()?;
    let jobs: Vec<(usize, u64, ExperimentConfig)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.runs.iter().map(move |(s, cfg)| (i, *s, cfg.clone())))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<RunRecord> = pool.install(|| {
        jobs.into_par_iter()
            .map(|(cell, seed, config)| {
                let start = Instant::now();
                let outcome = run_experiment(&config);
                let record = RunRecord {
                    cell,
                    seed,
                    config,
                    outcome,
                    seconds: start.elapsed().as_secs_f64(),
                };
                progress(&record);
                record
            })
            .collect()
    });
    let report = SweepReport {
        cells: cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.cell == i).collect();
                aggregate(c, &mine)
            })
            .collect(),
    };
    Ok(SweepOutput { report, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_runs_are_marked_not_fatal() {
        let plan = SweepPlan::parse("hidden = [4]\ntotal_env_steps = 20\neval_every = 10\neval_episodes = 1\nseed = [0, 1]\n")
            .unwrap();
        let cell = plan.cells().unwrap().remove(0);
        let ok = RunRecord {
            cell: 0,
            seed: 0,
            config: cell.runs[0].1.clone(),
            outcome: run_experiment(&cell.runs[0].1),
            seconds: 1.0,
        };
        let failed = RunRecord {
            cell: 0,
            seed: 1,
            config: cell.runs[1].1.clone(),
            outcome: Err(Error::Divergence {
                step: 7,
                what: "loss".into(),
            }),
            seconds: 0.5,
        };
        let report = aggregate(&cell, &[&failed, &ok]);
        assert_eq!(report.seeds, vec![0, 1]);
        assert_eq!(report.final_returns.len(), 1);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].0, 1);
        assert!(report.final_iqm.is_some());
        assert_eq!(report.wall_clock_seconds, 1.5);
    }
}
