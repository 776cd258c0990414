use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{macro_f_measure, EvaluationReport};
use crate::dataset::{overlap_score, Dataset, MatchConfig};
use crate::engine::IterationRecord;
use crate::{Error, Result, NO_OBJECT};

/// Ground truth for the candidates a session may label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    /// Candidate id to its annotated class.
    pub classes: BTreeMap<String, String>,
    /// Candidate id to the ground-truth objects it hits.
    pub hits: BTreeMap<String, Vec<usize>>,
    /// Class of every ground-truth object.
    pub gt_classes: Vec<String>,
}

impl TruthTable {
    /// Build the table for `universe` from an annotated dataset.
    pub fn from_dataset<S: AsRef<str>>(dataset: &Dataset, universe: &[S], cfg: &MatchConfig) -> Result<Self> {
        cfg.validate()?;
        let gts = dataset.ground_truth();
        let mut by_image: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, g) in gts.iter().enumerate() {
            by_image.entry(g.image_id.as_str()).or_default().push(i);
        }
        let mut table = TruthTable {
            gt_classes: gts.iter().map(|g| g.class_name.clone()).collect(),
            ..Default::default()
        };
        for id in universe {
            let id = id.as_ref();
            let c = dataset
                .get(id)
                .ok_or_else(|| Error::invalid(format!("unknown candidate {id}")))?;
            let cls = c
                .gt_class
                .clone()
                .ok_or_else(|| Error::invalid(format!("candidate {id} is not annotated")))?;
            table.classes.insert(id.to_string(), cls);
            let hits: Vec<usize> = by_image
                .get(c.image_id.as_str())
                .into_iter()
                .flatten()
                .copied()
                .filter(|&g| overlap_score(&c.bbox, &gts[g].bbox) > cfg.os_threshold)
                .collect();
            if !hits.is_empty() {
                table.hits.insert(id.to_string(), hits);
            }
        }
        Ok(table)
    }

    fn reachable(&self) -> usize {
        self.hits.values().flatten().collect::<BTreeSet<_>>().len()
    }
}

/// Replay a history log into cumulative quality curves and final scores.
pub fn discovery_report(history: &[IterationRecord], truth: &TruthTable) -> Result<EvaluationReport> {
    let mut discovered: BTreeMap<String, String> = BTreeMap::new();
    let mut found_gt: BTreeSet<usize> = BTreeSet::new();
    let mut iteration_curve = Vec::with_capacity(history.len());
    let mut discovered_curve = Vec::with_capacity(history.len());
    let mut unique_gt_curve = Vec::with_capacity(history.len());
    let mut first_discovery = BTreeMap::new();
    let mut clusters_per_class: BTreeMap<String, usize> = BTreeMap::new();
    let reachable = truth.reachable();
    let share = |found: usize| if reachable == 0 { 0.0 } else { found as f64 / reachable as f64 };

    for (pos, rec) in history.iter().enumerate() {
        if rec.iteration != pos + 1 {
            return Err(Error::invalid(format!(
                "history record {} carries iteration {}",
                pos + 1,
                rec.iteration
            )));
        }
        if let Some(label) = rec.answer.label() {
            if label != NO_OBJECT {
                first_discovery.entry(label.to_string()).or_insert(rec.iteration);
                *clusters_per_class.entry(label.to_string()).or_default() += 1;
            }
            for id in rec.labeled_ids.iter().chain(&rec.expansion.expanded_ids) {
                if !truth.classes.contains_key(id) {
                    return Err(Error::invalid(format!(
                        "iteration {} labels candidate {id} outside the truth table",
                        rec.iteration
                    )));
                }
                discovered.insert(id.clone(), label.to_string());
                for &g in truth.hits.get(id).into_iter().flatten() {
                    if truth.gt_classes[g] == label {
                        found_gt.insert(g);
                    }
                }
            }
        }
        iteration_curve.push(macro_f_measure(&discovered, &truth.classes)?.f_measure);
        discovered_curve.push(discovered.values().filter(|l| l.as_str() != NO_OBJECT).count());
        unique_gt_curve.push(share(found_gt.len()));
    }

    let mut report = macro_f_measure(&discovered, &truth.classes)?;
    report.iteration_curve = iteration_curve;
    report.discovered_curve = discovered_curve;
    report.unique_gt_curve = unique_gt_curve;
    report.unique_gt_discovered = found_gt.len();
    report.unique_gt_reachable = reachable;
    report.unique_gt_discovered_pct = share(found_gt.len());
    report.first_discovery = first_discovery;
    report.clusters_per_class = clusters_per_class;
    Ok(report)
}

/// The label-only part of a report, for sessions without ground truth:
/// discovered counts, first discoveries and clusters per class.
pub fn label_report(history: &[IterationRecord]) -> Result<EvaluationReport> {
    let mut labeled: BTreeMap<&str, bool> = BTreeMap::new();
    let mut report = EvaluationReport::default();
    for (pos, rec) in history.iter().enumerate() {
        if rec.iteration != pos + 1 {
            return Err(Error::invalid(format!(
                "history record {} carries iteration {}",
                pos + 1,
                rec.iteration
            )));
        }
        if let Some(label) = rec.answer.label() {
            let object = label != NO_OBJECT;
            if object {
                report.first_discovery.entry(label.to_string()).or_insert(rec.iteration);
                *report.clusters_per_class.entry(label.to_string()).or_default() += 1;
            }
            for id in rec.labeled_ids.iter().chain(&rec.expansion.expanded_ids) {
                labeled.insert(id, object);
            }
        }
        report.discovered_curve.push(labeled.values().filter(|&&o| o).count());
    }
    Ok(report)
}

/// Flatten a report into `per_class.csv` and `iterations.csv` under `dir`.
pub fn write_report_csv(report: &EvaluationReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let csv_err = |path: &Path, e: csv::Error| Error::io(path, std::io::Error::other(e));

    let path = dir.join("per_class.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["class", "precision", "recall", "support", "predicted", "clusters", "first_discovery"])
        .map_err(|e| csv_err(&path, e))?;
    for (c, s) in &report.per_class {
        w.write_record([
            c.clone(),
            s.precision.to_string(),
            s.recall.to_string(),
            s.support.to_string(),
            s.predicted.to_string(),
            report.clusters_per_class.get(c).copied().unwrap_or(0).to_string(),
            report.first_discovery.get(c).map(|i| i.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("iterations.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["iteration", "f_measure", "discovered", "unique_gt_pct"])
        .map_err(|e| csv_err(&path, e))?;
    for i in 0..report.iteration_curve.len() {
        w.write_record([
            (i + 1).to_string(),
            report.iteration_curve[i].to_string(),
            report.discovered_curve[i].to_string(),
            report.unique_gt_curve[i].to_string(),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ClusterProposal, ExpansionRecord, OracleAnswer, SelectionReport};

    fn record(iteration: usize, answer: &str, labeled: &[&str]) -> IterationRecord {
        IterationRecord {
            iteration,
            proposal_id: format!("p{iteration:04}"),
            selection: SelectionReport {
                mu: 0.0,
                sigma: 0.0,
                threshold: 0.0,
                t: iteration,
                omega1: 0.5,
                omega2: 0.0,
                selected_ids: labeled.iter().map(|s| s.to_string()).collect(),
                m: labeled.len(),
            },
            refill_ids: vec![],
            proposal: ClusterProposal {
                cluster_index: 0,
                cluster_members: labeled.iter().map(|s| s.to_string()).collect(),
                refill_members: vec![],
                silhouette_mean: 0.5,
                k: 2,
                k_clamped: false,
                all_clusters: vec![],
                labels: vec![],
            },
            answer: OracleAnswer::parse(answer).unwrap(),
            labeled_ids: if answer == "skip" { vec![] } else { labeled.iter().map(|s| s.to_string()).collect() },
            expansion: ExpansionRecord::default(),
            pool_size: 0,
            n_discovered: 0,
            warnings: vec![],
        }
    }

    fn truth() -> TruthTable {
        let mut t = TruthTable {
            gt_classes: vec!["car".into(), "car".into(), "car".into(), "dog".into()],
            ..Default::default()
        };
        for (id, cls, hit) in [("c1", "car", 0), ("c2", "car", 1), ("c3", "car", 2), ("d1", "dog", 3)] {
            t.classes.insert(id.into(), cls.into());
            t.hits.insert(id.into(), vec![hit]);
        }
        t.classes.insert("n1".into(), NO_OBJECT.into());
        t
    }

    #[test]
    fn single_pure_cluster() {
        let r = discovery_report(&[record(1, "car", &["c1", "c2", "c3"])], &truth()).unwrap();
        assert_eq!(r.iteration_curve.len(), 1);
        assert_eq!(r.clusters_per_class, BTreeMap::from([("car".to_string(), 1)]));
        assert_eq!(r.unique_gt_discovered, 3);
        assert_eq!(r.unique_gt_discovered_pct, 0.75);
    }

    #[test]
    fn first_discovery_and_cluster_counts() {
        let hist: Vec<IterationRecord> = (1..=8)
            .map(|i| match i {
                3 => record(i, "car", &["c1"]),
                7 => record(i, "car", &["c2"]),
                5 => record(i, NO_OBJECT, &["n1"]),
                _ => record(i, "skip", &[]),
            })
            .collect();
        let r = discovery_report(&hist, &truth()).unwrap();
        assert_eq!(r.first_discovery["car"], 3);
        assert_eq!(r.clusters_per_class["car"], 2);
        assert!(!r.clusters_per_class.contains_key(NO_OBJECT));
        assert_eq!(r.iteration_curve.len(), 8);
        assert!(r.iteration_curve.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(r.discovered_curve, vec![0, 0, 1, 1, 1, 1, 2, 2]);
    }

    #[test]
    fn wrong_label_misses_the_ground_truth_object() {
        let r = discovery_report(&[record(1, "dog", &["c1"])], &truth()).unwrap();
        assert_eq!(r.unique_gt_discovered, 0);
    }

    #[test]
    fn malformed_history() {
        assert!(discovery_report(&[record(2, "car", &["c1"])], &truth()).is_err());
        assert!(discovery_report(&[record(1, "car", &["zz"])], &truth()).is_err());
        let empty = discovery_report(&[], &truth()).unwrap();
        assert!(empty.iteration_curve.is_empty());
        assert_eq!(empty.f_measure, 0.0);
    }

    #[test]
    fn label_only_report_matches_scored_one() {
        let hist = vec![record(1, "car", &["c1", "c2"]), record(2, NO_OBJECT, &["n1"]), record(3, "skip", &[])];
        let scored = discovery_report(&hist, &truth()).unwrap();
        let plain = label_report(&hist).unwrap();
        assert_eq!(plain.discovered_curve, scored.discovered_curve);
        assert_eq!(plain.first_discovery, scored.first_discovery);
        assert_eq!(plain.clusters_per_class, scored.clusters_per_class);
        assert!(plain.iteration_curve.is_empty());
    }

    #[test]
    fn csv_tables() {
        let r = discovery_report(&[record(1, "car", &["c1", "c2"])], &truth()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_report_csv(&r, dir.path()).unwrap();
        let per_class = std::fs::read_to_string(dir.path().join("per_class.csv")).unwrap();
        assert!(per_class.starts_with("class,precision,recall"));
        assert_eq!(per_class.lines().count(), 3);
        let iters = std::fs::read_to_string(dir.path().join("iterations.csv")).unwrap();
        assert_eq!(iters.lines().count(), 2);
    }
}
