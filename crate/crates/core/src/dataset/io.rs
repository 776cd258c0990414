//! JSON Lines readers and writers for candidate and ground-truth files.
//!
//! Candidate line: `{"id"?, "image_id", "box": [x,y,w,h], "objectness",
//! "features": [...], "scene_features"?: [...], "crop_uri"?}`.
//! Ground-truth line: `{"image_id", "box": [x,y,w,h], "class"}`.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BoundingBox, Candidate, GroundTruthObject};
use crate::{Error, Result};

#[derive(Debug, Deserialize)]
struct CandidateLine {
    id: Option<String>,
    image_id: String,
    #[serde(rename = "box")]
    bbox: BoundingBox,
    objectness: f64,
    features: Vec<f64>,
    scene_features: Option<Vec<f64>>,
    crop_uri: Option<String>,
}

#[derive(Serialize)]
struct CandidateLineOut<'a> {
    id: &'a str,
    image_id: &'a str,
    #[serde(rename = "box")]
    bbox: &'a BoundingBox,
    objectness: f64,
    features: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    scene_features: Option<&'a Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    crop_uri: Option<&'a String>,
}

/// One problem found on one line (1-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationSummary {
    pub path: PathBuf,
    pub records: usize,
    pub feature_dim: Option<usize>,
    pub scene_dim: Option<usize>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationSummary {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_candidates(text: &str) -> (Vec<Candidate>, ValidationStats, Vec<Diagnostic>) {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    let mut stats = ValidationStats::default();
    let mut ids = HashSet::new();
    for (line, raw) in lines(text) {
        let mut err = |message: String| diags.push(Diagnostic { line, message });
        let rec: CandidateLine = match serde_json::from_str(raw) {
            Ok(r) => r,
            Err(e) => {
                err(e.to_string());
                stats.records += 1;
                continue;
            }
        };
        let mut ok = true;
        if !(0.0..=1.0).contains(&rec.objectness) {
            err(format!("objectness {} outside [0, 1]", rec.objectness));
            ok = false;
        }
        if rec.features.is_empty() {
            err("features are empty".into());
            ok = false;
        } else if rec.features.iter().any(|v| !v.is_finite()) {
            err("features contain non-finite values".into());
            ok = false;
        }
        match stats.feature_dim {
            None => stats.feature_dim = Some(rec.features.len()),
            Some(d) if d != rec.features.len() => {
                err(format!(
                    "feature dimension {} differs from {d} on the first record",
                    rec.features.len()
                ));
                ok = false;
            }
            _ => {}
        }
        if let Some(scene) = &rec.scene_features {
            if scene.iter().any(|v| !v.is_finite()) {
                err("scene_features contain non-finite values".into());
                ok = false;
            }
            match stats.scene_dim {
                None => stats.scene_dim = Some(scene.len()),
                Some(d) if d != scene.len() => {
                    err(format!(
                        "scene feature dimension {} differs from {d} on an earlier record",
                        scene.len()
                    ));
                    ok = false;
                }
                _ => {}
            }
        }
        // ids default to ingestion order
        let id = rec.id.unwrap_or_else(|| stats.records.to_string());
        if !ids.insert(id.clone()) {
            err(format!("duplicate candidate id {id}"));
            ok = false;
        }
        stats.records += 1;
        if ok {
            out.push(Candidate {
                id,
                image_id: rec.image_id,
                bbox: rec.bbox,
                objectness: rec.objectness,
                features: rec.features,
                scene_features: rec.scene_features,
                gt_class: None,
                crop_uri: rec.crop_uri,
            });
        }
    }
    (out, stats, diags)
}

#[derive(Default)]
struct ValidationStats {
    records: usize,
    feature_dim: Option<usize>,
    scene_dim: Option<usize>,
}

fn parse_ground_truth(text: &str) -> (Vec<GroundTruthObject>, usize, Vec<Diagnostic>) {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    let mut records = 0;
    for (line, raw) in lines(text) {
        records += 1;
        let parsed = serde_json::from_str::<GroundTruthObject>(raw)
            .map_err(Error::from)
            .and_then(|g| g.validate().map(|_| g));
        match parsed {
            Ok(g) => out.push(g),
            Err(e) => diags.push(Diagnostic {
                line,
                message: e.to_string(),
            }),
        }
    }
    (out, records, diags)
}

fn first_error(path: &Path, diags: &[Diagnostic]) -> Option<Error> {
    diags.first().map(|d| Error::Parse {
        path: path.to_path_buf(),
        line: d.line,
        message: d.message.clone(),
    })
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<Candidate>> {
    let path = path.as_ref();
    let (cands, _, diags) = parse_candidates(&read_text(path)?);
    match first_error(path, &diags) {
        Some(e) => Err(e),
        None => Ok(cands),
    }
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthObject>> {
    let path = path.as_ref();
    let (gts, _, diags) = parse_ground_truth(&read_text(path)?);
    match first_error(path, &diags) {
        Some(e) => Err(e),
        None => Ok(gts),
    }
}

pub fn validate_candidates_file(path: impl AsRef<Path>) -> Result<ValidationSummary> {
    let path = path.as_ref();
    let (_, stats, diagnostics) = parse_candidates(&read_text(path)?);
    Ok(ValidationSummary {
        path: path.to_path_buf(),
        records: stats.records,
        feature_dim: stats.feature_dim,
        scene_dim: stats.scene_dim,
        diagnostics,
    })
}

pub fn validate_ground_truth_file(path: impl AsRef<Path>) -> Result<ValidationSummary> {
    let path = path.as_ref();
    let (_, records, diagnostics) = parse_ground_truth(&read_text(path)?);
    Ok(ValidationSummary {
        path: path.to_path_buf(),
        records,
        feature_dim: None,
        scene_dim: None,
        diagnostics,
    })
}

fn write_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write candidates in the candidate file format; annotations are not written.
pub fn write_candidates(path: impl AsRef<Path>, cands: &[Candidate]) -> Result<()> {
    write_lines(
        path.as_ref(),
        cands.iter().map(|c| CandidateLineOut {
            id: &c.id,
            image_id: &c.image_id,
            bbox: &c.bbox,
            objectness: c.objectness,
            features: &c.features,
            scene_features: c.scene_features.as_ref(),
            crop_uri: c.crop_uri.as_ref(),
        }),
    )
}

pub fn write_ground_truth(path: impl AsRef<Path>, gts: &[GroundTruthObject]) -> Result<()> {
    write_lines(path.as_ref(), gts.iter())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_default_to_ingestion_order() {
        let text = r#"{"image_id": "a", "box": [0,0,1,1], "objectness": 0.5, "features": [1, 2]}
{"image_id": "a", "box": [0,0,2,2], "objectness": 0.7, "features": [3, 4], "crop_uri": "a/1.png"}
"#;
        let (cands, stats, diags) = parse_candidates(text);
        assert!(diags.is_empty());
        assert_eq!(stats.feature_dim, Some(2));
        assert_eq!(cands[0].id, "0");
        assert_eq!(cands[1].id, "1");
        assert_eq!(cands[1].crop_uri.as_deref(), Some("a/1.png"));
    }

    #[test]
    fn mixed_dimensions_reported_with_line_numbers() {
        let text = r#"{"image_id": "a", "box": [0,0,1,1], "objectness": 0.5, "features": [1, 2]}

{"image_id": "a", "box": [0,0,1,1], "objectness": 0.5, "features": [1, 2, 3]}
{"image_id": "a", "box": [0,0,-1,1], "objectness": 0.5, "features": [1, 2]}
{"image_id": "a", "box": [0,0,1,1], "objectness": 1.5, "features": [1, 2]}
"#;
        let (_, _, diags) = parse_candidates(text);
        let lines: Vec<_> = diags.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![3, 4, 5]);
        assert!(diags[0].message.contains("dimension"));
    }

    #[test]
    fn reserved_ground_truth_class_is_diagnosed() {
        let text = r#"{"image_id": "a", "box": [0,0,1,1], "class": "car"}
{"image_id": "a", "box": [0,0,1,1], "class": "no_object"}
"#;
        let (gts, records, diags) = parse_ground_truth(text);
        assert_eq!(records, 2);
        assert_eq!(gts.len(), 1);
        assert_eq!(diags[0].line, 2);
        assert!(diags[0].message.contains("reserved"));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let c = Candidate {
            id: "x".into(),
            image_id: "img".into(),
            bbox: BoundingBox::new(1.0, 2.0, 3.0, 4.0).unwrap(),
            objectness: 0.25,
            features: vec![0.1, -0.2],
            scene_features: Some(vec![1.0]),
            gt_class: Some("car".into()),
            crop_uri: None,
        };
        write_candidates(&path, std::slice::from_ref(&c)).unwrap();
        let back = read_candidates(&path).unwrap();
        assert_eq!(back[0], Candidate { gt_class: None, ..c });
    }
}
