use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Train-side count for a class of `n` samples: `round_half_up(fraction·n)`
/// clamped to `[1, n − 1]`.
pub fn split_counts(n: usize, fraction: f64) -> usize {
    let raw = (fraction * n as f64 + 0.5 + 1e-9).floor() as usize;
    raw.clamp(1, n.saturating_sub(1).max(1))
}

/// Per-class seeded split of sample indices. Both outputs are ascending.
pub fn stratified_split_indices(
    labels: &[usize],
    class_names: &[String],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {fraction} is outside (0, 1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, name) in class_names.iter().enumerate() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < 2 {
            return Err(Error::Split(format!(
                "class '{name}' has {} sample(s), needs at least 2",
                members.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64);
        members.shuffle(&mut rng);
        let k = split_counts(members.len(), fraction);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Seeded stratified train/test split.
pub fn stratified_split(ds: &LabeledDataset, fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = stratified_split_indices(&ds.labels(), &ds.class_names, fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}
