use std::collections::{BTreeSet, HashMap};

use super::{BoundingBox, Candidate, GroundTruthObject, MatchConfig};
use crate::{Error, Result, NO_OBJECT};

/// Intersection over union of two boxes, using continuous areas.
pub fn overlap_score(a: &BoundingBox, b: &BoundingBox) -> f64 {
    // areas come from edge differences so that identical boxes give exactly 1
    let edge_area = |r: &BoundingBox| ((r.x + r.w) - r.x) * ((r.y + r.h) - r.y);
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = edge_area(a) + edge_area(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Label every candidate with the class of its best-overlapping ground-truth
/// box in the same image, or `no_object` when no box exceeds the threshold.
///
/// Equal overlaps resolve to the lexicographically smallest class name.
pub fn annotate_candidates(
    cands: &[Candidate],
    gts: &[GroundTruthObject],
    cfg: &MatchConfig,
) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    let mut by_image: HashMap<&str, Vec<&GroundTruthObject>> = HashMap::new();
    for gt in gts {
        gt.validate()?;
        by_image.entry(gt.image_id.as_str()).or_default().push(gt);
    }
    let known_images: BTreeSet<&str> = by_image.keys().copied().collect();

    cands
        .iter()
        .map(|c| {
            if cfg.strict && !known_images.contains(c.image_id.as_str()) {
                return Err(Error::invalid(format!(
                    "candidate {} references image {} with no ground truth",
                    c.id, c.image_id
                )));
            }
            let mut best: Option<(f64, &str)> = None;
            for gt in by_image.get(c.image_id.as_str()).into_iter().flatten() {
                let os = overlap_score(&c.bbox, &gt.bbox);
                if os <= cfg.os_threshold {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((b, name)) => os > b || (os == b && gt.class_name.as_str() < name),
                };
                if better {
                    best = Some((os, gt.class_name.as_str()));
                }
            }
            let mut out = c.clone();
            out.gt_class = Some(best.map_or(NO_OBJECT, |(_, name)| name).to_string());
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn cand(b: BoundingBox) -> Candidate {
        Candidate {
            id: "c".into(),
            image_id: "img".into(),
            bbox: b,
            objectness: 0.5,
            features: vec![0.0],
            scene_features: None,
            gt_class: None,
            crop_uri: None,
        }
    }

    fn gt(b: BoundingBox, class: &str) -> GroundTruthObject {
        GroundTruthObject {
            image_id: "img".into(),
            bbox: b,
            class_name: class.into(),
        }
    }

    #[test]
    fn identical_boxes_overlap_fully() {
        let a = bx(3.0, 4.0, 17.5, 9.25);
        assert_eq!(overlap_score(&a, &a), 1.0);
    }

    #[test]
    fn disjoint_boxes_do_not_overlap() {
        assert_eq!(overlap_score(&bx(0.0, 0.0, 10.0, 10.0), &bx(100.0, 100.0, 5.0, 5.0)), 0.0);
    }

    #[test]
    fn half_shifted_box() {
        // intersection 5x10 = 50, union 100 + 100 - 50 = 150
        let os = overlap_score(&bx(0.0, 0.0, 10.0, 10.0), &bx(5.0, 0.0, 10.0, 10.0));
        assert!((os - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_match_above_threshold() {
        // 10x10 box vs GT shifted by 2.5 px: inter 75, union 125, OS = 0.6
        let c = cand(bx(0.0, 0.0, 10.0, 10.0));
        let g = gt(bx(2.5, 0.0, 10.0, 10.0), "car");
        let out = annotate_candidates(&[c], &[g], &MatchConfig::default()).unwrap();
        assert_eq!(out[0].gt_class.as_deref(), Some("car"));
    }

    #[test]
    fn below_threshold_is_no_object() {
        // inter 10 * 6.6 = 66, union 134, OS ~ 0.4925
        let c = cand(bx(0.0, 0.0, 10.0, 10.0));
        let g = gt(bx(0.0, 3.4, 10.0, 10.0), "car");
        let os = overlap_score(&c.bbox, &g.bbox);
        assert!(os < 0.5 && os > 0.48, "{os}");
        let out = annotate_candidates(&[c], &[g], &MatchConfig::default()).unwrap();
        assert_eq!(out[0].gt_class.as_deref(), Some(NO_OBJECT));
    }

    #[test]
    fn exactly_half_is_not_a_hit() {
        // inter 100, union 200
        let c = cand(bx(0.0, 0.0, 10.0, 10.0));
        let g = gt(bx(0.0, 0.0, 10.0, 20.0), "car");
        assert_eq!(overlap_score(&c.bbox, &g.bbox), 0.5);
        let out = annotate_candidates(&[c], &[g], &MatchConfig::default()).unwrap();
        assert_eq!(out[0].gt_class.as_deref(), Some(NO_OBJECT));
    }

    #[test]
    fn best_overlap_wins() {
        let c = cand(bx(0.0, 0.0, 10.0, 10.0));
        let gts = [gt(bx(2.5, 0.0, 10.0, 10.0), "car"), gt(bx(0.0, 1.0, 10.0, 10.0), "person")];
        // exhaustive pairwise oracle
        let oracle = gts
            .iter()
            .map(|g| (overlap_score(&c.bbox, &g.bbox), g.class_name.clone()))
            .filter(|(os, _)| *os > 0.5)
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .unwrap()
            .1;
        assert_eq!(oracle, "person");
        let out = annotate_candidates(&[c], &gts, &MatchConfig::default()).unwrap();
        assert_eq!(out[0].gt_class.as_deref(), Some("person"));
    }

    #[test]
    fn equal_overlap_breaks_toward_smaller_name() {
        let c = cand(bx(0.0, 0.0, 10.0, 10.0));
        let gts = [gt(bx(0.0, 0.0, 10.0, 10.0), "zebra"), gt(bx(0.0, 0.0, 10.0, 10.0), "apple")];
        let out = annotate_candidates(&[c], &gts, &MatchConfig::default()).unwrap();
        assert_eq!(out[0].gt_class.as_deref(), Some("apple"));
    }

    #[test]
    fn other_images_are_ignored_and_strict_mode_rejects_unknown_images() {
        let c = cand(bx(0.0, 0.0, 10.0, 10.0));
        let mut g = gt(bx(0.0, 0.0, 10.0, 10.0), "car");
        g.image_id = "elsewhere".into();
        let out = annotate_candidates(std::slice::from_ref(&c), std::slice::from_ref(&g), &MatchConfig::default()).unwrap();
        assert_eq!(out[0].gt_class.as_deref(), Some(NO_OBJECT));
        let strict = MatchConfig {
            strict: true,
            ..MatchConfig::default()
        };
        assert!(annotate_candidates(&[c], &[g], &strict).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..50.0f64, 0.0..50.0f64, 0.5..40.0f64, 0.5..40.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = overlap_score(&a, &b);
            prop_assert_eq!(ab, overlap_score(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(overlap_score(&a, &a), 1.0);
        }

        #[test]
        fn annotation_is_idempotent(boxes in proptest::collection::vec(arb_box(), 1..6),
                                    gboxes in proptest::collection::vec(arb_box(), 0..4)) {
            let cands: Vec<_> = boxes.into_iter().enumerate().map(|(i, b)| {
                let mut c = cand(b);
                c.id = format!("c{i}");
                c
            }).collect();
            let gts: Vec<_> = gboxes.into_iter().enumerate()
                .map(|(i, b)| gt(b, ["car", "dog", "cup"][i % 3])).collect();
            let cfg = MatchConfig::default();
            let once = annotate_candidates(&cands, &gts, &cfg).unwrap();
            let twice = annotate_candidates(&once, &gts, &cfg).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
