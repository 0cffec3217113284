use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::DatasetError;
use crate::record::{Label, MemeRecord, Split};

/// Seed used for every sampling step unless overridden.
pub const DEFAULT_SEED: u64 = 42;

/// Downsamples both classes to the minority-class count.
///
/// Each class is sampled uniformly without replacement from a ChaCha8 stream
/// seeded with `seed`; the survivors keep their relative input order.
pub fn downsample_balance(records: &[MemeRecord], seed: u64) -> Result<Vec<MemeRecord>, DatasetError> {
    let positives: Vec<usize> = positions(records, Label::Hateful);
    let negatives: Vec<usize> = positions(records, Label::NotHateful);
    if positives.is_empty() || negatives.is_empty() {
        return Err(DatasetError::SingleClass);
    }
    let target = positives.len().min(negatives.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; records.len()];
    for class in [&positives, &negatives] {
        for i in index::sample(&mut rng, class.len(), target) {
            keep[class[i]] = true;
        }
    }
    Ok(records
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect())
}

fn positions(records: &[MemeRecord], label: Label) -> Vec<usize> {
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label == label)
        .map(|(i, _)| i)
        .collect()
}

/// Moves a seeded `val_fraction` of the train records into the val split.
/// Returns the number of records moved.
pub fn split_train_val(records: &mut [MemeRecord], val_fraction: f64, seed: u64) -> usize {
    let train: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    let n_val = ((train.len() as f64) * val_fraction.clamp(0.0, 1.0)).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, train.len(), n_val) {
        records[train[i]].split = Split::Val;
    }
    n_val
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Origin;

    pub(crate) fn corpus(pos: usize, neg: usize) -> Vec<MemeRecord> {
        (0..pos + neg)
            .map(|i| MemeRecord {
                id: format!("m{i}"),
                image_ref: format!("{i}.png"),
                caption: "c".into(),
                label: Label::from_bool(i < pos),
                split: Split::Train,
                origin: Origin::Original,
                source_id: None,
            })
            .collect()
    }

    fn count(records: &[MemeRecord], label: Label) -> usize {
        records.iter().filter(|r| r.label == label).count()
    }

    #[test]
    fn hundred_vs_forty() {
        let out = downsample_balance(&corpus(100, 40), DEFAULT_SEED).unwrap();
        assert_eq!(count(&out, Label::Hateful), 40);
        assert_eq!(count(&out, Label::NotHateful), 40);
    }

    #[test]
    fn balanced_input_unchanged() {
        let input = corpus(40, 40);
        assert_eq!(downsample_balance(&input, 7).unwrap(), input);
    }

    #[test]
    fn deterministic_per_seed() {
        let input = corpus(100, 40);
        let a = downsample_balance(&input, 42).unwrap();
        let b = downsample_balance(&input, 42).unwrap();
        let c = downsample_balance(&input, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(downsample_balance(&corpus(5, 0), 1), Err(DatasetError::SingleClass)));
        assert!(matches!(downsample_balance(&[], 1), Err(DatasetError::SingleClass)));
    }

    #[test]
    fn val_split_fraction() {
        let mut records = corpus(50, 50);
        records[0].split = Split::Test;
        let moved = split_train_val(&mut records, 0.1, DEFAULT_SEED);
        assert_eq!(moved, 10);
        assert_eq!(records.iter().filter(|r| r.split == Split::Val).count(), 10);
        assert_eq!(records[0].split, Split::Test);
    }
}
