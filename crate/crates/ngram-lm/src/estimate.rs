//! Model estimation: discounted relative frequencies per history, backoff
//! weights from the leftover mass, and closure placeholders.

use crate::counts::CountTable;
use crate::discount::{good_turing_discounts, DiscountTable};
use crate::error::{Error, Result};
use crate::model::{BackoffModel, KahanSum, ModelBuilder, NgramEntry, EPSILON_BACKOFF_MASS};

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    /// Good-Turing cutoff: counts above it are never discounted.
    pub cutoff: u64,
    /// Disable discounting entirely (maximum likelihood estimates).
    pub discounting: bool,
    /// Per-order minimum counts; orders beyond the vector keep the default
    /// of 1. The unigram minimum must stay 1.
    pub min_counts: Vec<u64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            cutoff: 7,
            discounting: true,
            min_counts: Vec::new(),
        }
    }
}

impl EstimateOptions {
    fn min_count(&self, order: usize) -> u64 {
        self.min_counts.get(order - 1).copied().unwrap_or(1).max(1)
    }
}

/// An estimated model plus any per-order warnings (discount fallbacks).
#[derive(Debug)]
pub struct EstimatedModel {
    pub model: BackoffModel,
    pub warnings: Vec<String>,
}

/// Builds a validated backoff model from a count table.
///
/// Explicit probabilities are d_c * c / c(history); the begin-token history
/// count is the sentence count. Unigram leftover mass goes to `<unk>` when it
/// is part of the vocabulary, otherwise the unigram distribution is rescaled
/// to sum to one. Histories required by longer retained n-grams but absent
/// themselves are inserted as placeholders.
pub fn estimate_model(counts: &CountTable, options: &EstimateOptions) -> Result<EstimatedModel> {
    if options.min_counts.first().copied().unwrap_or(1) > 1 {
        return Err(Error::InvalidInput(
            "unigram min-count must be 1: every corpus word needs a unigram".to_string(),
        ));
    }
    let order = counts.order();
    let mut warnings = Vec::new();
    let discounts: Vec<DiscountTable> = (1..=order)
        .map(|n| -> Result<DiscountTable> {
            if !options.discounting {
                return Ok(DiscountTable::all_ones(options.cutoff, None));
            }
            let table = good_turing_discounts(counts.count_of_counts(n), options.cutoff)?;
            if let Some(warning) = table.warning() {
                warnings.push(format!("order {n}: {warning}"));
            }
            Ok(table)
        })
        .collect::<Result<_>>()?;

    let vocab = counts.vocab().clone();
    let mut builder = ModelBuilder::new(order, vocab);

    // Unigrams: discounted relative frequencies over predicted events.
    let total = counts.predicted_total();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut masses: Vec<(u32, f64)> = counts
        .ngrams(1)
        .map(|(key, c)| (key[0], discounts[0].discounted(c) / total as f64))
        .collect();
    let unk = builder.vocab().unk();
    if let Some(unk) = unk {
        if !masses.iter().any(|&(w, _)| w == unk) {
            masses.push((unk, 0.0));
            masses.sort_unstable_by_key(|&(w, _)| w);
        }
    }
    let mut sum = KahanSum::default();
    for &(_, m) in &masses {
        sum.add(m);
    }
    let leftover = 1.0 - sum.value();
    if leftover > 1e-12 {
        match unk {
            Some(unk) => {
                for (w, m) in masses.iter_mut() {
                    if *w == unk {
                        *m += leftover;
                    }
                }
            }
            None => {
                // Closed vocabulary with no unseen-event sink: rescale.
                let scale = 1.0 / sum.value();
                for (_, m) in masses.iter_mut() {
                    *m *= scale;
                }
            }
        }
    }
    for (w, m) in masses.iter_mut() {
        if Some(*w) == unk && *m <= 0.0 {
            *m = EPSILON_BACKOFF_MASS;
        }
    }
    for &(w, m) in &masses {
        builder.insert(&[w], NgramEntry::new(m.ln()));
    }

    // Higher orders.
    for n in 2..=order {
        let min_count = options.min_count(n);
        for (key, c) in counts.ngrams(n) {
            if c < min_count {
                continue;
            }
            let history = &key[..n - 1];
            let denom = counts.history_count(history).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "no count for history \"{}\"",
                    counts.vocab().render(history)
                ))
            })?;
            let p = discounts[n - 1].discounted(c) / denom as f64;
            builder.insert(key, NgramEntry::new(p.ln()));
        }
    }

    // Closure: contexts of retained n-grams must be entries; insert
    // placeholders where estimation dropped or never saw them (the begin
    // token unigram being the standing example).
    for n in (2..=order).rev() {
        let mut missing: Vec<Vec<u32>> = Vec::new();
        let mut last: Option<Vec<u32>> = None;
        for key in builder.keys(n) {
            let context = &key[..n - 1];
            if last.as_deref() == Some(context) {
                continue;
            }
            if !builder.contains(context) {
                missing.push(context.to_vec());
            }
            last = Some(context.to_vec());
        }
        for context in missing {
            builder.insert(&context, NgramEntry::placeholder());
        }
    }

    builder.begin_frequency(counts.sentence_count() as f64 / total as f64);
    let model = builder.build()?;
    let report = model.validate();
    if !report.is_clean() {
        return Err(Error::InvalidModel(report.summary()));
    }
    Ok(EstimatedModel { model, warnings })
}
