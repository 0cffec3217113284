use std::collections::HashSet;

use memeguard_core::{Manifest, Origin};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Task, TaskKind, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("asked for {requested} {kind} tasks but only {available} records are eligible")]
    InsufficientRecords {
        kind: TaskKind,
        requested: usize,
        available: usize,
    },
}

/// Candidate tasks of `kind`, in manifest order. Agreement tasks come from
/// consistent scaled labels; pair tasks from augmented records whose source
/// is present.
pub fn eligible_tasks(manifest: &Manifest, kind: TaskKind) -> Vec<Task> {
    match kind {
        TaskKind::Agreement => {
            let mut seen = HashSet::new();
            manifest
                .scaled_labels
                .iter()
                .filter(|s| s.consistent && seen.insert(s.meme_id.as_str()))
                .map(|s| Task {
                    task_id: format!("agr-{}", s.meme_id),
                    spec: TaskSpec::Agreement {
                        meme_id: s.meme_id.clone(),
                        score_shown: s.score,
                    },
                })
                .collect()
        }
        TaskKind::PairQuality => {
            let index = manifest.index();
            manifest
                .records
                .iter()
                .filter(|r| r.origin == Origin::Augmented)
                .filter_map(|r| {
                    let source = r.source_id.as_deref()?;
                    index.contains_key(source).then(|| Task {
                        task_id: format!("pair-{}", r.id),
                        spec: TaskSpec::PairQuality {
                            original_id: source.to_string(),
                            augmented_id: r.id.clone(),
                        },
                    })
                })
                .collect()
        }
    }
}

/// Seeded uniform sample of `n` distinct tasks, returned in manifest order.
pub fn sample_tasks(manifest: &Manifest, kind: TaskKind, n: usize, seed: u64) -> Result<Vec<Task>, SampleError> {
    let pool = eligible_tasks(manifest, kind);
    if n > pool.len() {
        return Err(SampleError::InsufficientRecords {
            kind,
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}
