use std::collections::BTreeMap;

use rand::Rng;

/// Draw `round(n_easy * pct)` bag samples without replacement, dealing
/// round-robin over the bag's classes in name order and picking uniformly
/// within a class. Exhausted classes drop out of the rotation.
pub fn draw_refill<R: Rng + ?Sized>(
    bag: &BTreeMap<String, Vec<String>>,
    n_easy: usize,
    pct: f64,
    rng: &mut R,
) -> Vec<String> {
    let want = (n_easy as f64 * pct.max(0.0)).round() as usize;
    let mut remaining: Vec<Vec<&String>> = bag
        .values()
        .filter(|v| !v.is_empty())
        .map(|v| v.iter().collect())
        .collect();
    let mut out = Vec::with_capacity(want);
    while out.len() < want && !remaining.is_empty() {
        let mut next = Vec::with_capacity(remaining.len());
        for mut members in remaining {
            if out.len() == want {
                break;
            }
            let pick = rng.random_range(0..members.len());
            out.push(members.swap_remove(pick).clone());
            if !members.is_empty() {
                next.push(members);
            }
        }
        remaining = next;
    }
    out
}
