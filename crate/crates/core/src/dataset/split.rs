use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Candidate, DatasetSplit};
use crate::{Error, Result, NO_OBJECT};

/// Split annotated candidates into a labeled refill bag and an unlabeled pool.
///
/// A random `class_holdout_frac` of the object classes (rounded down, at least
/// one) goes entirely to the pool. Of each remaining class, `refill_frac` of its
/// candidates (rounded to nearest) seed the bag. `no_object` candidates always
/// stay in the pool. Both id lists keep the input order.
pub fn make_split(
    cands: &[Candidate],
    class_holdout_frac: f64,
    refill_frac: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    for (name, f) in [("class_holdout_frac", class_holdout_frac), ("refill_frac", refill_frac)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::invalid(format!("{name} must lie in [0, 1], got {f}")));
        }
    }

    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in cands.iter().enumerate() {
        let cls = c
            .gt_class
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("candidate {} is not annotated", c.id)))?;
        if cls != NO_OBJECT {
            by_class.entry(cls).or_default().push(i);
        }
    }
    let mut classes: Vec<&str> = by_class.keys().copied().collect();
    if class_holdout_frac > 0.0 && classes.len() < 2 {
        return Err(Error::invalid(format!(
            "class holdout needs at least 2 object classes, found {}",
            classes.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_holdout = if class_holdout_frac > 0.0 {
        ((class_holdout_frac * classes.len() as f64).floor() as usize).max(1)
    } else {
        0
    };
    classes.shuffle(&mut rng);
    let heldout: BTreeSet<String> = classes[..n_holdout].iter().map(|s| s.to_string()).collect();

    let mut in_bag = vec![false; cands.len()];
    for (cls, members) in &by_class {
        if heldout.contains(*cls) {
            continue;
        }
        let take = (refill_frac * members.len() as f64).round() as usize;
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..take.min(shuffled.len())] {
            in_bag[i] = true;
        }
    }

    let (bag, pool): (Vec<_>, Vec<_>) = cands.iter().zip(&in_bag).partition(|(_, &b)| b);
    Ok(DatasetSplit {
        refill_bag_ids: bag.into_iter().map(|(c, _)| c.id.clone()).collect(),
        unlabeled_pool_ids: pool.into_iter().map(|(c, _)| c.id.clone()).collect(),
        heldout_classes: heldout,
        class_holdout_frac,
        refill_frac,
        seed,
    })
}
