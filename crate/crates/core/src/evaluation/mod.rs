//! Quality measures for discovery runs and candidate files.
//!
//! Scores are macro-averaged over object classes; `no_object` never forms a
//! class of its own.

mod aggregate;
mod detection;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, NO_OBJECT};

pub use aggregate::{aggregate_reports, AggregateReport, RunSummary, Stat};
pub use detection::{detection_metrics, DetectionReport, DEFAULT_TOP_W};
pub use report::{discovery_report, label_report, write_report_csv, TruthTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    /// Ground-truth instances of the class.
    pub support: usize,
    /// Candidates that received the class label.
    pub predicted: usize,
    pub true_positives: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub precision_m: f64,
    pub recall_m: f64,
    pub f_measure: f64,
    pub per_class: BTreeMap<String, ClassScore>,
    /// Cumulative F-measure after each iteration.
    pub iteration_curve: Vec<f64>,
    /// Object instances labeled so far, after each iteration.
    pub discovered_curve: Vec<usize>,
    /// Share of reachable ground-truth objects found so far, after each iteration.
    pub unique_gt_curve: Vec<f64>,
    pub unique_gt_discovered: usize,
    /// Ground-truth objects hit by at least one candidate of the pool.
    pub unique_gt_reachable: usize,
    pub unique_gt_discovered_pct: f64,
    pub first_discovery: BTreeMap<String, usize>,
    pub clusters_per_class: BTreeMap<String, usize>,
}

impl EvaluationReport {
    /// Object classes that received at least one correct label.
    pub fn classes_discovered(&self) -> usize {
        self.per_class.values().filter(|c| c.true_positives > 0).count()
    }
}

/// Harmonic mean of macro precision and macro recall; 0 when both vanish.
pub fn f_from(precision_m: f64, recall_m: f64) -> f64 {
    if precision_m + recall_m > 0.0 {
        2.0 * precision_m * recall_m / (precision_m + recall_m)
    } else {
        0.0
    }
}

/// Macro precision, recall and F-measure of `discovered` against `truth`
/// (both keyed by candidate id).
///
/// The class set is every object class of `truth` plus every object label
/// handed out. A class nobody received has precision 0, as does any ratio
/// with an empty denominator.
pub fn macro_f_measure(
    discovered: &BTreeMap<String, String>,
    truth: &BTreeMap<String, String>,
) -> Result<EvaluationReport> {
    if truth.is_empty() {
        return Err(Error::invalid("evaluation needs a non-empty truth map"));
    }
    let mut classes: BTreeSet<&str> = truth.values().map(String::as_str).collect();
    classes.extend(discovered.values().map(String::as_str));
    classes.remove(NO_OBJECT);

    let mut counts: BTreeMap<&str, (usize, usize, usize)> = classes.iter().map(|&c| (c, (0, 0, 0))).collect();
    for cls in truth.values() {
        if let Some(e) = counts.get_mut(cls.as_str()) {
            e.0 += 1;
        }
    }
    for (id, label) in discovered {
        let t = truth
            .get(id)
            .ok_or_else(|| Error::invalid(format!("discovered candidate {id} has no truth entry")))?;
        if let Some(e) = counts.get_mut(label.as_str()) {
            e.1 += 1;
            if t == label {
                e.2 += 1;
            }
        }
    }

    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: BTreeMap<String, ClassScore> = counts
        .into_iter()
        .map(|(c, (support, predicted, tp))| {
            (
                c.to_string(),
                ClassScore {
                    precision: ratio(tp, predicted),
                    recall: ratio(tp, support),
                    support,
                    predicted,
                    true_positives: tp,
                },
            )
        })
        .collect();
    let n = per_class.len();
    let (precision_m, recall_m) = if n == 0 {
        (0.0, 0.0)
    } else {
        (
            per_class.values().map(|c| c.precision).sum::<f64>() / n as f64,
            per_class.values().map(|c| c.recall).sum::<f64>() / n as f64,
        )
    };
    Ok(EvaluationReport {
        precision_m,
        recall_m,
        f_measure: f_from(precision_m, recall_m),
        per_class,
        ..Default::default()
    })
}
