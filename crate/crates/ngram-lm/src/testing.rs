//! Deterministic random model generation for randomized test suites.
//!
//! Models are built the honest way: explicit probabilities are drawn so that
//! every history keeps strictly positive backoff mass, and all backoff
//! weights are then recomputed from the masses, so every generated model
//! passes validation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::model::{BackoffModel, ModelBuilder, NgramEntry};
use crate::vocab::{Vocabulary, WordId};

#[derive(Debug, Clone)]
pub struct RandomModelConfig {
    pub min_vocab: usize,
    pub max_vocab: usize,
    pub max_order: usize,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        RandomModelConfig {
            min_vocab: 2,
            max_vocab: 30,
            max_order: 3,
        }
    }
}

/// A random valid backoff model drawn from the given RNG.
pub fn random_model(rng: &mut impl Rng, config: &RandomModelConfig) -> BackoffModel {
    let vocab_size = rng.gen_range(config.min_vocab..=config.max_vocab);
    let order = rng.gen_range(2..=config.max_order.max(2));
    let mut vocab = Vocabulary::new();
    let ids: Vec<WordId> = (0..vocab_size)
        .map(|i| vocab.intern(&format!("w{i}")))
        .collect();
    let mut builder = ModelBuilder::new(order, vocab);

    // Unigrams: positive weights, normalized exactly.
    let weights: Vec<f64> = ids.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for (&id, &w) in ids.iter().zip(&weights) {
        builder.insert(&[id], NgramEntry::new((w / total).ln()));
    }

    // Histories of order n are drawn from the entries of order n - 1 so the
    // model stays closed. Every history keeps at least one word out of its
    // explicit continuation set and coverage strictly below one, so backoff
    // masses stay positive.
    let mut histories: Vec<Vec<WordId>> = ids.iter().map(|&id| vec![id]).collect();
    for n in 2..=order {
        let mut next_histories = Vec::new();
        for history in &histories {
            if n > 2 && !rng.gen_bool(0.6) {
                continue;
            }
            if n == 2 && !rng.gen_bool(0.8) {
                continue;
            }
            let max_continuations = (vocab_size - 1).min(6).max(1);
            let continuation_count = rng.gen_range(1..=max_continuations);
            let mut words = ids.clone();
            words.shuffle(rng);
            words.truncate(continuation_count);
            words.sort_unstable();
            let coverage = rng.gen_range(0.2..0.9);
            let raw: Vec<f64> = words.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let raw_total: f64 = raw.iter().sum();
            for (&word, &r) in words.iter().zip(&raw) {
                let mut key = history.clone();
                key.push(word);
                let p = coverage * r / raw_total;
                builder.insert(&key, NgramEntry::new(p.ln()));
                next_histories.push(key);
            }
        }
        histories = next_histories;
    }

    // Guarantee at least one prunable bigram.
    if !builder.contains(&[ids[0], ids[0]]) && builder.keys(2).is_empty() {
        builder.insert(&[ids[0], ids[0]], NgramEntry::new(0.5f64.ln()));
    }

    let model = builder.build().expect("generated masses are positive");
    debug_assert!(model.validate().is_clean(), "{}", model.validate().summary());
    model
}

/// A deterministic stream of random models.
pub fn random_models(
    seed: u64,
    count: usize,
    config: RandomModelConfig,
) -> impl Iterator<Item = BackoffModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(move |_| random_model(&mut rng, &config))
}

/// All explicit non-placeholder n-grams of order >= 2, the prune candidates.
pub fn prunable_keys(model: &BackoffModel) -> Vec<Vec<WordId>> {
    let mut keys = Vec::new();
    for order in 2..=model.order() {
        for (key, entry) in model.entries(order) {
            if !entry.placeholder {
                keys.push(key.to_vec());
            }
        }
    }
    keys
}
