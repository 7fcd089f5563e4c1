//! Class balancing: undersample the majority class to the minority count.

use rand::seq::SliceRandom;
use vantage_core::rng::derive_rng;

use crate::error::{HarnessError, Result};

/// Indices of the records kept after balancing, in ascending order. The
/// majority class is undersampled by a seeded shuffle; an already balanced
/// input comes back unchanged. Single-class inputs are an error.
pub fn balance_indices(labels: &[bool], seed: u64) -> Result<Vec<usize>> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(HarnessError::Generation(format!(
            "cannot balance a single-class dataset ({} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let keep = pos.len().min(neg.len());
    let mut rng = derive_rng(seed, &[vantage_core::rng::tags::BALANCE]);
    let trim = |mut side: Vec<usize>, rng: &mut rand_chacha::ChaCha8Rng| {
        if side.len() > keep {
            side.shuffle(rng);
            side.truncate(keep);
        }
        side
    };
    // Positives first, then negatives: a fixed consumption order keeps the
    // draw reproducible.
    let mut kept = trim(pos, &mut rng);
    kept.extend(trim(neg, &mut rng));
    kept.sort_unstable();
    Ok(kept)
}
