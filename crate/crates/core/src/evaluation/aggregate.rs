use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvaluationReport;
use crate::{Error, Result};

/// Mean and sample standard deviation of per-run values, kept alongside the values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Stat {
    /// Standard deviation uses `n - 1`; a single value has std 0.
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        if n == 0 {
            return Stat { mean: 0.0, std: 0.0, values };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub f_measure: f64,
    pub precision_m: f64,
    pub recall_m: f64,
    pub unique_gt_discovered_pct: f64,
    pub classes_discovered: usize,
    pub iterations: usize,
}

impl RunSummary {
    pub fn new(run_id: impl Into<String>, report: &EvaluationReport) -> Self {
        RunSummary {
            run_id: run_id.into(),
            f_measure: report.f_measure,
            precision_m: report.precision_m,
            recall_m: report.recall_m,
            unique_gt_discovered_pct: report.unique_gt_discovered_pct,
            classes_discovered: report.classes_discovered(),
            iterations: report.iteration_curve.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// One entry per run, sorted by run id.
    pub runs: Vec<RunSummary>,
    pub f_measure: Stat,
    pub precision_m: Stat,
    pub recall_m: Stat,
    pub unique_gt_discovered_pct: Stat,
    pub classes_discovered: Stat,
    /// Cumulative F-measure per iteration. Runs that stopped early carry
    /// their last value forward.
    pub iteration_curve: Vec<Stat>,
    /// Recall per class; a class missing from a run counts as 0.
    pub per_class_recall: BTreeMap<String, Stat>,
}

/// Reduce per-run reports into mean and std, independent of input order.
pub fn aggregate_reports(runs: &[(String, EvaluationReport)]) -> Result<AggregateReport> {
    if runs.is_empty() {
        return Err(Error::invalid("aggregation needs at least one run"));
    }
    let mut sorted: Vec<&(String, EvaluationReport)> = runs.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("duplicate run id in aggregation"));
    }
    let stat = |f: &dyn Fn(&EvaluationReport) -> f64| Stat::from_values(sorted.iter().map(|(_, r)| f(r)).collect());

    let len = sorted.iter().map(|(_, r)| r.iteration_curve.len()).max().unwrap_or(0);
    let iteration_curve = (0..len)
        .map(|i| {
            Stat::from_values(
                sorted
                    .iter()
                    .map(|(_, r)| {
                        let c = &r.iteration_curve;
                        c.get(i).or(c.last()).copied().unwrap_or(0.0)
                    })
                    .collect(),
            )
        })
        .collect();

    let classes: BTreeSet<&String> = sorted.iter().flat_map(|(_, r)| r.per_class.keys()).collect();
    let per_class_recall = classes
        .into_iter()
        .map(|c| {
            let values = sorted
                .iter()
                .map(|(_, r)| r.per_class.get(c).map_or(0.0, |s| s.recall))
                .collect();
            (c.clone(), Stat::from_values(values))
        })
        .collect();

    Ok(AggregateReport {
        runs: sorted.iter().map(|(id, r)| RunSummary::new(id.clone(), r)).collect(),
        f_measure: stat(&|r| r.f_measure),
        precision_m: stat(&|r| r.precision_m),
        recall_m: stat(&|r| r.recall_m),
        unique_gt_discovered_pct: stat(&|r| r.unique_gt_discovered_pct),
        classes_discovered: stat(&|r| r.classes_discovered() as f64),
        iteration_curve,
        per_class_recall,
    })
}
