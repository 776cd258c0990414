//! Planted-class synthetic datasets.
//!
//! Every object candidate gets its own ground-truth box in a grid slot of its
//! image, jittered by at most 8 px so its overlap with that box is above 0.7.
//! Noise candidates sit in slots without ground truth, so annotation recovers
//! the intended labels exactly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BoundingBox, Candidate, GroundTruthObject};
use crate::{Error, Result};

const SLOT: f64 = 120.0;
const SLOT_MARGIN: f64 = 10.0;
const GT_SIZE: f64 = 100.0;
const SLOTS_PER_ROW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub samples_per_class: usize,
    /// Per-class sample counts; overrides `samples_per_class`.
    pub class_sizes: Option<Vec<usize>>,
    pub dim: usize,
    /// Standard deviation of the class centers around the origin.
    pub center_spread: f64,
    pub class_sigma: f64,
    /// Per-class spreads; overrides `class_sigma`.
    pub class_sigmas: Option<Vec<f64>>,
    /// Fraction of all candidates that are noise, in [0, 1).
    pub no_object_fraction: f64,
    /// Standard deviation of the background distribution noise features come from.
    pub noise_sigma: f64,
    pub object_objectness: BetaParams,
    /// Per-class objectness; overrides `object_objectness`.
    pub class_objectness: Option<Vec<BetaParams>>,
    pub noise_objectness: BetaParams,
    pub candidates_per_image: usize,
    /// Scene descriptor length per image; 0 disables scene features.
    pub scene_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 8,
            samples_per_class: 40,
            class_sizes: None,
            dim: 16,
            center_spread: 4.0,
            class_sigma: 1.0,
            class_sigmas: None,
            no_object_fraction: 0.7,
            noise_sigma: 4.0,
            object_objectness: BetaParams {
                alpha: 6.0,
                beta: 2.0,
            },
            class_objectness: None,
            noise_objectness: BetaParams {
                alpha: 2.0,
                beta: 5.0,
            },
            candidates_per_image: 20,
            scene_dim: 0,
        }
    }
}

impl SynthConfig {
    pub fn class_name(i: usize) -> String {
        format!("class_{i:02}")
    }

    fn sizes(&self) -> Vec<usize> {
        self.class_sizes
            .clone()
            .unwrap_or_else(|| vec![self.samples_per_class; self.n_classes])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("synthetic dim must be positive"));
        }
        if self.n_classes == 0 {
            return Err(Error::invalid("synthetic n_classes must be positive"));
        }
        let sizes = self.sizes();
        if sizes.len() != self.n_classes {
            return Err(Error::invalid("class_sizes length differs from n_classes"));
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("every class needs at least one sample"));
        }
        if let Some(s) = &self.class_sigmas {
            if s.len() != self.n_classes || s.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid("class_sigmas must be positive, one per class"));
            }
        }
        if let Some(o) = &self.class_objectness {
            if o.len() != self.n_classes {
                return Err(Error::invalid("class_objectness needs one entry per class"));
            }
        }
        if !(0.0..1.0).contains(&self.no_object_fraction) {
            return Err(Error::invalid("no_object_fraction must lie in [0, 1)"));
        }
        if !(self.class_sigma > 0.0 && self.noise_sigma > 0.0 && self.center_spread >= 0.0) {
            return Err(Error::invalid("spreads must be positive"));
        }
        if self.candidates_per_image == 0 {
            return Err(Error::invalid("candidates_per_image must be positive"));
        }
        Ok(())
    }

    /// Noise count giving the configured fraction of the total.
    pub fn noise_count(&self) -> usize {
        let objects: usize = self.sizes().iter().sum();
        let f = self.no_object_fraction;
        (objects as f64 * f / (1.0 - f)).round() as usize
    }
}

fn beta(p: BetaParams) -> Result<Beta<f64>> {
    Beta::new(p.alpha, p.beta).map_err(|e| Error::invalid(format!("objectness distribution: {e}")))
}

fn gaussian(rng: &mut ChaCha8Rng, center: Option<&[f64]>, sigma: f64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let z: f64 = rng.sample(StandardNormal);
            center.map_or(0.0, |c| c[d]) + sigma * z
        })
        .collect()
}

/// Generate candidates and ground truth from planted Gaussian classes.
///
/// Output is a pure function of `cfg` and `seed`.
pub fn synth_generate(
    cfg: &SynthConfig,
    seed: u64,
) -> Result<(Vec<Candidate>, Vec<GroundTruthObject>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = cfg.sizes();

    let centers: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| gaussian(&mut rng, None, cfg.center_spread, cfg.dim))
        .collect();
    let noise_dist = beta(cfg.noise_objectness)?;

    // (class, features, objectness)
    let mut items: Vec<(Option<usize>, Vec<f64>, f64)> = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        let sigma = cfg.class_sigmas.as_ref().map_or(cfg.class_sigma, |s| s[k]);
        let dist = beta(
            cfg.class_objectness
                .as_ref()
                .map_or(cfg.object_objectness, |o| o[k]),
        )?;
        for _ in 0..n {
            let f = gaussian(&mut rng, Some(&centers[k]), sigma, cfg.dim);
            items.push((Some(k), f, dist.sample(&mut rng)));
        }
    }
    for _ in 0..cfg.noise_count() {
        let f = gaussian(&mut rng, None, cfg.noise_sigma, cfg.dim);
        items.push((None, f, noise_dist.sample(&mut rng)));
    }
    items.shuffle(&mut rng);

    let n_images = items.len().div_ceil(cfg.candidates_per_image);
    let scenes: Vec<Vec<f64>> = (0..n_images)
        .map(|_| gaussian(&mut rng, None, 1.0, cfg.scene_dim))
        .collect();

    let mut cands = Vec::with_capacity(items.len());
    let mut gts = Vec::new();
    for (i, (class, features, objectness)) in items.into_iter().enumerate() {
        let image = i / cfg.candidates_per_image;
        let slot = i % cfg.candidates_per_image;
        let image_id = format!("img{image:05}");
        let x0 = (slot % SLOTS_PER_ROW) as f64 * SLOT + SLOT_MARGIN;
        let y0 = (slot / SLOTS_PER_ROW) as f64 * SLOT + SLOT_MARGIN;
        let bbox = match class {
            Some(k) => {
                let gt = BoundingBox::new(x0, y0, GT_SIZE, GT_SIZE)?;
                gts.push(GroundTruthObject {
                    image_id: image_id.clone(),
                    bbox: gt,
                    class_name: SynthConfig::class_name(k),
                });
                let dx = rng.random_range(-8.0..=8.0);
                let dy = rng.random_range(-8.0..=8.0);
                BoundingBox::new(x0 + dx, y0 + dy, GT_SIZE, GT_SIZE)?
            }
            None => {
                // stays inside the slot, never touching a ground-truth box
                let w = rng.random_range(40.0..=90.0);
                let h = rng.random_range(40.0..=90.0);
                BoundingBox::new(x0, y0, w, h)?
            }
        };
        cands.push(Candidate {
            id: format!("c{i:05}"),
            image_id,
            bbox,
            objectness,
            features,
            scene_features: (cfg.scene_dim > 0).then(|| scenes[image].clone()),
            gt_class: None,
            crop_uri: None,
        });
    }
    Ok((cands, gts))
}
