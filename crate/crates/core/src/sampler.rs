//! Deterministic dataset-mixing minibatch construction and epoch accounting.
//!
//! Minibatches mix datasets in equal parts: a batch of size `B` over `L`
//! datasets draws `B/L` indices from each. Draws are without replacement
//! within a per-dataset shuffled epoch; a dataset reshuffles when exhausted.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier and size of one training dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHandle {
    pub id: String,
    /// Number of samples; at least 1.
    pub size: usize,
}

/// Dataset manifest entry as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub id: String,
    pub size: usize,
    #[serde(rename = "path-pattern", default, skip_serializing_if = "Option::is_none")]
    pub path_pattern: Option<String>,
}

/// Default images-per-epoch used when comparing datasets of different sizes.
pub const DEFAULT_EPOCH_IMAGES: usize = 72_000;

/// Batch construction plan over a list of datasets.
#[derive(Debug, Clone)]
pub struct MixPlan {
    pub batch_size: usize,
    pub datasets: Vec<DatasetHandle>,
    /// One epoch is defined as processing this many images (default 72,000).
    pub epoch_images: usize,
}

impl MixPlan {
    pub fn new(batch_size: usize, datasets: Vec<DatasetHandle>) -> Result<Self> {
        Self::with_epoch_images(batch_size, datasets, DEFAULT_EPOCH_IMAGES)
    }

    pub fn with_epoch_images(
        batch_size: usize,
        datasets: Vec<DatasetHandle>,
        epoch_images: usize,
    ) -> Result<Self> {
        if datasets.is_empty() {
            return Err(Error::Config("mix plan needs at least one dataset".into()));
        }
        if batch_size == 0 || batch_size % datasets.len() != 0 {
            return Err(Error::Config(format!(
                "dataset count {} must divide batch size {}",
                datasets.len(),
                batch_size
            )));
        }
        for d in &datasets {
            if d.size == 0 {
                return Err(Error::Config(format!("dataset {} has size 0", d.id)));
            }
        }
        if epoch_images == 0 {
            return Err(Error::Config("epoch_images must be positive".into()));
        }
        Ok(Self {
            batch_size,
            datasets,
            epoch_images,
        })
    }

    /// Samples drawn from each dataset per batch.
    pub fn per_dataset(&self) -> usize {
        self.batch_size / self.datasets.len()
    }
}

/// Stateful equal-parts sampler. Cloning yields an identical future stream;
/// two samplers built with the same plan and seed emit identical batches.
#[derive(Debug, Clone)]
pub struct MixSampler {
    plan: MixPlan,
    rng: ChaCha8Rng,
    /// Per dataset: shuffled index queue and cursor.
    cursors: Vec<(Vec<usize>, usize)>,
}

impl MixSampler {
    pub fn new(plan: MixPlan, seed: u64) -> Self {
        let cursors = plan
            .datasets
            .iter()
            .map(|d| ((0..d.size).collect::<Vec<_>>(), d.size))
            .collect();
        // cursor == len forces a shuffle on first use
        Self {
            plan,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cursors,
        }
    }

    pub fn plan(&self) -> &MixPlan {
        &self.plan
    }

    /// Next minibatch: exactly `B/L` `(dataset_id, sample_index)` entries per
    /// dataset, in dataset order.
    pub fn next_batch(&mut self) -> Vec<(String, usize)> {
        let per = self.plan.per_dataset();
        let mut batch = Vec::with_capacity(self.plan.batch_size);
        for (ds, cursor) in self.plan.datasets.iter().zip(self.cursors.iter_mut()) {
            for _ in 0..per {
                if cursor.1 >= cursor.0.len() {
                    cursor.0.shuffle(&mut self.rng);
                    cursor.1 = 0;
                }
                batch.push((ds.id.clone(), cursor.0[cursor.1]));
                cursor.1 += 1;
            }
        }
        batch
    }
}

/// Epoch index and fractional progress after `images_seen` processed images.
pub fn epoch_progress(images_seen: usize, plan: &MixPlan) -> (usize, f64) {
    let epoch = images_seen / plan.epoch_images;
    let fraction = (images_seen % plan.epoch_images) as f64 / plan.epoch_images as f64;
    (epoch, fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn plan(l: usize, b: usize, size: usize) -> MixPlan {
        let datasets = (0..l)
            .map(|i| DatasetHandle {
                id: format!("ds{i}"),
                size,
            })
            .collect();
        MixPlan::new(b, datasets).unwrap()
    }

    #[test]
    fn three_datasets_batch_24_gives_8_each() {
        let mut s = MixSampler::new(plan(3, 24, 50), 0);
        let batch = s.next_batch();
        assert_eq!(batch.len(), 24);
        for i in 0..3 {
            let id = format!("ds{i}");
            assert_eq!(batch.iter().filter(|(d, _)| *d == id).count(), 8);
        }
    }

    #[test]
    fn divisibility_is_enforced() {
        let datasets = vec![
            DatasetHandle { id: "a".into(), size: 5 },
            DatasetHandle { id: "b".into(), size: 5 },
            DatasetHandle { id: "c".into(), size: 5 },
        ];
        assert!(matches!(
            MixPlan::new(16, datasets),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn same_seed_same_batches() {
        let mut a = MixSampler::new(plan(2, 8, 13), 99);
        let mut b = MixSampler::new(plan(2, 8, 13), 99);
        for _ in 0..10 {
            assert_eq!(a.next_batch(), b.next_batch());
        }
        let mut c = MixSampler::new(plan(2, 8, 13), 100);
        let mismatched = (0..10).any(|_| a.next_batch() != c.next_batch());
        assert!(mismatched);
    }

    #[test]
    fn no_repeats_within_a_dataset_epoch() {
        let size = 12;
        let mut s = MixSampler::new(plan(1, 4, size), 5);
        // 3 batches = exactly one epoch of the dataset
        let mut seen = HashSet::new();
        for _ in 0..3 {
            for (_, idx) in s.next_batch() {
                assert!(seen.insert(idx), "index {idx} repeated within epoch");
            }
        }
        assert_eq!(seen.len(), size);
    }

    #[test]
    fn window_counts_are_exact() {
        let mut s = MixSampler::new(plan(4, 8, 7), 1);
        let mut counts = std::collections::HashMap::new();
        let n = 25;
        for _ in 0..n {
            for (id, _) in s.next_batch() {
                *counts.entry(id).or_insert(0usize) += 1;
            }
        }
        for i in 0..4 {
            assert_eq!(counts[&format!("ds{i}")], n * 2);
        }
    }

    #[test]
    fn epoch_progress_examples() {
        let p = plan(1, 8, 10);
        assert_eq!(epoch_progress(0, &p), (0, 0.0));
        assert_eq!(epoch_progress(72_000, &p), (1, 0.0));
        assert_eq!(epoch_progress(108_000, &p), (1, 0.5));
    }
}
