//! Backoff model representation, probability lookup, and validation.
//!
//! Probabilities and backoff weights are stored as natural logs. A missing
//! backoff weight means alpha = 1. Placeholder entries (the sentence-begin
//! unigram, or context entries inserted purely to keep the model closed)
//! carry a conventional tiny probability and are flagged so that writers and
//! pruning can treat them specially.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::ops::Bound;

use crate::error::{Error, Result};
use crate::vocab::{NgramKey, Vocabulary, WordId};

/// log10 value emitted for placeholder probabilities.
pub const PLACEHOLDER_LOG10: f64 = -99.0;
/// Any unigram begin-token log10 probability at or below this is a placeholder.
pub const PLACEHOLDER_THRESHOLD_LOG10: f64 = -90.0;
/// Natural-log equivalent of the placeholder probability.
pub const PLACEHOLDER_LN: f64 = PLACEHOLDER_LOG10 * std::f64::consts::LN_10;
/// Mass floor applied when a history's explicit continuations exhaust all
/// probability, keeping log backoff weights finite.
pub const EPSILON_BACKOFF_MASS: f64 = 1e-10;
/// A backoff denominator at or below this is treated as degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// One n-gram record: conditional log probability and, when the n-gram is the
/// context of possible longer n-grams, a log backoff weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramEntry {
    pub log_prob: f64,
    pub log_bow: Option<f64>,
    pub placeholder: bool,
}

impl NgramEntry {
    pub fn new(log_prob: f64) -> Self {
        NgramEntry {
            log_prob,
            log_bow: None,
            placeholder: false,
        }
    }

    pub fn with_bow(log_prob: f64, log_bow: Option<f64>) -> Self {
        NgramEntry {
            log_prob,
            log_bow,
            placeholder: false,
        }
    }

    pub fn placeholder() -> Self {
        NgramEntry {
            log_prob: PLACEHOLDER_LN,
            log_bow: None,
            placeholder: true,
        }
    }
}

/// The two linear-space masses behind a backoff weight: what is left after
/// the explicit continuations of a history, and the same under the truncated
/// history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackoffMass {
    pub numerator: f64,
    pub denominator: f64,
}

/// Compensated (Neumaier) summation; the linear-space mass sums feed directly
/// into pruning scores, so we keep them as sharp as f64 allows.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Computes a log backoff weight from the two masses.
///
/// Used for the original weights at build time and, after adding back the
/// masses of a pruned n-gram, for the revised weights during pruning.
pub fn recompute_backoff_weight(numerator: f64, denominator: f64) -> Result<f64> {
    if denominator <= DEGENERATE_DENOMINATOR {
        return Err(Error::BackoffDegenerate {
            history: String::new(),
            denominator,
        });
    }
    if numerator <= 0.0 {
        return Err(Error::NegativeBackoffMass(numerator));
    }
    Ok(numerator.ln() - denominator.ln())
}

/// An immutable backoff n-gram model: per-order tables keyed by word-id
/// sequences (oldest word first, predicted word last).
#[derive(Debug, Clone)]
pub struct BackoffModel {
    order: usize,
    vocab: Vocabulary,
    /// tables[i] holds the n-grams of order i + 1.
    pub(crate) tables: Vec<std::collections::BTreeMap<NgramKey, NgramEntry>>,
    /// Corpus relative frequency of the sentence-begin token, used in place
    /// of its placeholder unigram when chaining history marginals.
    begin_frequency: Option<f64>,
}

impl BackoffModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn begin_frequency(&self) -> Option<f64> {
        self.begin_frequency
    }

    pub(crate) fn set_begin_frequency(&mut self, freq: f64) {
        self.begin_frequency = Some(freq);
    }

    /// Number of stored n-grams of the given order (1-based).
    pub fn ngram_count(&self, order: usize) -> usize {
        self.tables.get(order - 1).map_or(0, |t| t.len())
    }

    pub fn total_ngrams(&self) -> usize {
        self.tables.iter().map(|t| t.len()).sum()
    }

    pub fn entry(&self, key: &[WordId]) -> Option<&NgramEntry> {
        if key.is_empty() || key.len() > self.order {
            return None;
        }
        self.tables[key.len() - 1].get(key)
    }

    /// Iterates the stored n-grams of one order in word-id order.
    pub fn entries(&self, order: usize) -> impl Iterator<Item = (&[WordId], &NgramEntry)> {
        self.tables[order - 1].iter().map(|(k, e)| (k.as_ref(), e))
    }

    /// Iterates the explicit continuations of a history: all stored n-grams
    /// of order |history| + 1 whose context equals `history`. The history
    /// must be shorter than the model order.
    pub fn continuations<'a>(
        &'a self,
        history: &[WordId],
    ) -> impl Iterator<Item = (&'a [WordId], &'a NgramEntry)> + 'a {
        assert!(
            history.len() < self.order,
            "history of {} words has no continuations in a model of order {}",
            history.len(),
            self.order
        );
        let table = &self.tables[history.len()];
        let mut lo = history.to_vec();
        lo.push(0);
        let mut hi = history.to_vec();
        hi.push(WordId::MAX);
        table
            .range::<[WordId], _>((
                Bound::Included(lo.as_slice()),
                Bound::Included(hi.as_slice()),
            ))
            .map(|(k, e)| (k.as_ref(), e))
    }

    /// Log conditional probability of `word` after `history`, via the
    /// recursive backoff rule: explicit entries are returned as stored,
    /// otherwise the history's backoff weight (1 when absent) scales the
    /// estimate under the history truncated by its oldest word.
    pub fn conditional_prob(&self, history: &[WordId], word: WordId) -> Result<f64> {
        if !self.vocab.contains_id(word) {
            return Err(Error::WordIdOutOfRange(word));
        }
        if history.len() >= self.order {
            return Err(Error::InvalidInput(format!(
                "history of {} words in a model of order {}",
                history.len(),
                self.order
            )));
        }
        let mut key: Vec<WordId> = Vec::with_capacity(history.len() + 1);
        key.extend_from_slice(history);
        key.push(word);
        let mut start = 0;
        let mut acc = 0.0;
        loop {
            let tail = &key[start..];
            if let Some(entry) = self.tables[tail.len() - 1].get(tail) {
                return Ok(acc + entry.log_prob);
            }
            if tail.len() == 1 {
                // No unigram for this word at all.
                if let Some(unk) = self.vocab.unk() {
                    if unk != word {
                        if let Some(entry) = self.tables[0].get(&[unk][..]) {
                            return Ok(acc + entry.log_prob);
                        }
                    }
                }
                return Err(Error::ZeroProbability {
                    word: self.vocab.word(word).unwrap_or("?").to_string(),
                });
            }
            let context = &key[start..key.len() - 1];
            if let Some(entry) = self.tables[context.len() - 1].get(context) {
                if let Some(bow) = entry.log_bow {
                    acc += bow;
                }
            }
            start += 1;
        }
    }

    /// The backoff masses of a history: numerator = 1 minus the explicit
    /// continuation probabilities under the history itself, denominator =
    /// 1 minus the same words' probabilities under the truncated history.
    /// One pass over the explicit continuation list; never over the vocabulary.
    pub fn backoff_mass(&self, history: &[WordId]) -> Result<BackoffMass> {
        let (numerator, denominator) = self.raw_backoff_masses(history)?;
        if denominator <= DEGENERATE_DENOMINATOR {
            return Err(Error::BackoffDegenerate {
                history: self.vocab.render(history),
                denominator,
            });
        }
        Ok(BackoffMass {
            numerator,
            denominator,
        })
    }

    /// The raw mass sums behind `backoff_mass`, without the degeneracy check.
    /// A denominator of zero is meaningful: the explicit continuations cover
    /// the entire lower-order distribution, so no probability flows through
    /// backoff at all.
    pub(crate) fn raw_backoff_masses(&self, history: &[WordId]) -> Result<(f64, f64)> {
        if history.len() >= self.order {
            return Err(Error::InvalidInput(format!(
                "history of {} words in a model of order {}",
                history.len(),
                self.order
            )));
        }
        if !history.is_empty() && self.entry(history).is_none() {
            return Err(Error::HistoryNotFound(self.vocab.render(history)));
        }
        let mut num = KahanSum::default();
        let mut den = KahanSum::default();
        for (key, entry) in self.continuations(history) {
            let word = *key.last().expect("continuation key is non-empty");
            num.add(entry.log_prob.exp());
            if !history.is_empty() {
                den.add(self.conditional_prob(&history[1..], word)?.exp());
            }
        }
        Ok((1.0 - num.value(), 1.0 - den.value()))
    }

    /// Log marginal probability of a history, as the chain of conditional
    /// probabilities of its words. A leading sentence-begin token whose
    /// unigram is a placeholder is scored with the corpus begin frequency
    /// carried in the model instead.
    pub fn history_marginal(&self, history: &[WordId]) -> Result<f64> {
        let mut total = 0.0;
        for k in 0..history.len() {
            let word = history[k];
            if k == 0 && self.is_placeholder_begin(word) {
                if let Some(freq) = self.begin_frequency {
                    total += freq.ln();
                    continue;
                }
            }
            total += self.conditional_prob(&history[..k], word)?;
        }
        Ok(total)
    }

    fn is_placeholder_begin(&self, word: WordId) -> bool {
        if self.vocab.begin() != Some(word) {
            return false;
        }
        match self.tables[0].get(&[word][..]) {
            Some(entry) => entry.placeholder,
            None => true,
        }
    }

    /// Checks the closure and normalization invariants, at the default
    /// tolerance of 1e-9 on probability sums.
    pub fn validate(&self) -> ValidationReport {
        self.validate_with_tolerance(1e-9)
    }

    /// Validation with an explicit normalization tolerance. Reading ARPA text
    /// uses a looser bound because probabilities are rounded to the printed
    /// precision.
    pub fn validate_with_tolerance(&self, tolerance: f64) -> ValidationReport {
        let mut report = ValidationReport::default();

        // Entry-level checks.
        for order in 1..=self.order {
            for (key, entry) in self.entries(order) {
                if !entry.log_prob.is_finite() && entry.log_prob != f64::NEG_INFINITY {
                    report
                        .entry_violations
                        .push(format!("{}: non-finite log prob", self.vocab.render(key)));
                }
                if !entry.placeholder && entry.log_prob > 1e-12 {
                    report.entry_violations.push(format!(
                        "{}: positive log prob {}",
                        self.vocab.render(key),
                        entry.log_prob
                    ));
                }
                if let Some(bow) = entry.log_bow {
                    if !bow.is_finite() {
                        report.entry_violations.push(format!(
                            "{}: non-finite backoff weight",
                            self.vocab.render(key)
                        ));
                    }
                    if order == self.order {
                        report.entry_violations.push(format!(
                            "{}: backoff weight on top-order entry",
                            self.vocab.render(key)
                        ));
                    }
                }
            }
        }

        // Closure: the context of every stored n-gram must itself be stored.
        for order in 2..=self.order {
            for (key, _) in self.entries(order) {
                let context = &key[..order - 1];
                if self.entry(context).is_none() {
                    report.closure_violations.push(format!(
                        "{}: context \"{}\" is not an entry",
                        self.vocab.render(key),
                        self.vocab.render(context)
                    ));
                }
            }
        }

        // Normalization. Full sums are built per context, shortest contexts
        // first, so each context needs only one pass over its explicit
        // continuations rather than the whole vocabulary.
        let mut sums: HashMap<NgramKey, f64> = HashMap::new();
        let mut empty_sum = KahanSum::default();
        for entry in self.tables[0].values() {
            empty_sum.add(entry.log_prob.exp());
        }
        let empty_context_sum = empty_sum.value();
        let defect = empty_context_sum - 1.0;
        if defect.abs() > tolerance {
            report
                .normalization_violations
                .push(("<empty>".to_string(), defect));
        }

        for context_len in 1..self.order {
            // Contexts of this length: entries of this order plus any prefix
            // of a longer stored n-gram (the latter only matter when closure
            // is already broken, but we still report their sums).
            let mut contexts: BTreeSet<NgramKey> = BTreeSet::new();
            for (key, _) in self.entries(context_len) {
                contexts.insert(key.to_vec().into_boxed_slice());
            }
            for (key, _) in self.entries(context_len + 1) {
                contexts.insert(key[..context_len].to_vec().into_boxed_slice());
            }
            for context in contexts {
                let sum = self.context_sum(&context, empty_context_sum, &sums, &mut report);
                let defect = sum - 1.0;
                if defect.abs() > tolerance {
                    report
                        .normalization_violations
                        .push((self.vocab.render(&context), defect));
                }
                sums.insert(context, sum);
            }
        }
        report
    }

    /// Sum of conditional probabilities over the whole vocabulary for one
    /// context, computed from its explicit continuations and the already
    /// known sum of its truncated context.
    fn context_sum(
        &self,
        context: &[WordId],
        empty_context_sum: f64,
        sums: &HashMap<NgramKey, f64>,
        report: &mut ValidationReport,
    ) -> f64 {
        let mut own = KahanSum::default();
        let mut lower = KahanSum::default();
        let truncated = &context[1..];
        for (key, entry) in self.continuations(context) {
            let word = *key.last().expect("continuation key is non-empty");
            own.add(entry.log_prob.exp());
            match self.conditional_prob(truncated, word) {
                Ok(lp) => lower.add(lp.exp()),
                Err(err) => report.entry_violations.push(format!(
                    "{}: unreachable continuation: {}",
                    self.vocab.render(key),
                    err
                )),
            }
        }
        let alpha = self
            .entry(context)
            .and_then(|e| e.log_bow)
            .unwrap_or(0.0)
            .exp();
        // Sum over the full vocabulary under the truncated context, resolved
        // by dropping leading words until a known context is found.
        let mut rest = truncated;
        let lower_total = loop {
            if rest.is_empty() {
                break empty_context_sum;
            }
            if let Some(&s) = sums.get(rest) {
                break s;
            }
            rest = &rest[1..];
        };
        own.value() + alpha * (lower_total - lower.value())
    }
}

/// Violations found by `BackoffModel::validate`. An empty report means the
/// model honors closure and per-history normalization.
#[derive(Debug, Default, Clone)]
pub struct ValidationReport {
    pub closure_violations: Vec<String>,
    /// (history, probability-sum defect) pairs.
    pub normalization_violations: Vec<(String, f64)>,
    pub entry_violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.closure_violations.is_empty()
            && self.normalization_violations.is_empty()
            && self.entry_violations.is_empty()
    }

    pub fn summary(&self) -> String {
        if self.is_clean() {
            return "ok".to_string();
        }
        let mut parts = Vec::new();
        for v in &self.closure_violations {
            parts.push(format!("closure: {v}"));
        }
        for (h, d) in &self.normalization_violations {
            parts.push(format!("normalization: history \"{h}\" sum defect {d:+e}"));
        }
        for v in &self.entry_violations {
            parts.push(format!("entry: {v}"));
        }
        parts.join("; ")
    }
}

/// Assembles a `BackoffModel`. Entries are inserted with explicit log
/// probabilities; backoff weights are either supplied (`build_raw`, for
/// parsed files) or recomputed from the masses (`build`).
pub struct ModelBuilder {
    order: usize,
    vocab: Vocabulary,
    tables: Vec<std::collections::BTreeMap<NgramKey, NgramEntry>>,
    begin_frequency: Option<f64>,
}

impl ModelBuilder {
    pub fn new(order: usize, vocab: Vocabulary) -> Self {
        assert!(order >= 1, "model order must be at least 1");
        ModelBuilder {
            order,
            vocab,
            tables: vec![Default::default(); order],
            begin_frequency: None,
        }
    }

    pub fn begin_frequency(&mut self, freq: f64) -> &mut Self {
        self.begin_frequency = Some(freq);
        self
    }

    /// Inserts an entry; returns false if the key was already present (the
    /// previous entry is replaced).
    pub fn insert(&mut self, key: &[WordId], entry: NgramEntry) -> bool {
        assert!(
            !key.is_empty() && key.len() <= self.order,
            "n-gram length {} out of range for order {}",
            key.len(),
            self.order
        );
        self.tables[key.len() - 1]
            .insert(key.to_vec().into_boxed_slice(), entry)
            .is_none()
    }

    pub fn contains(&self, key: &[WordId]) -> bool {
        !key.is_empty()
            && key.len() <= self.order
            && self.tables[key.len() - 1].contains_key(key)
    }

    /// Snapshot of the keys of one order, in word-id order.
    pub fn keys(&self, order: usize) -> Vec<Vec<WordId>> {
        self.tables[order - 1].keys().map(|k| k.to_vec()).collect()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Finishes with the backoff weights exactly as inserted.
    pub fn build_raw(self) -> BackoffModel {
        BackoffModel {
            order: self.order,
            vocab: self.vocab,
            tables: self.tables,
            begin_frequency: self.begin_frequency,
        }
    }

    /// Finishes and recomputes every backoff weight from the stored
    /// probabilities, lowest order first.
    pub fn build(self) -> Result<BackoffModel> {
        let mut model = self.build_raw();
        recompute_all_backoff_weights(&mut model)?;
        Ok(model)
    }
}

/// The backoff weight a history should carry given the current tables, or
/// `None` when it has no explicit continuations or no probability flows
/// through backoff (alpha = 1 either way). A vanishing numerator with real
/// backoff room is floored to keep the log finite; a positive numerator with
/// a vanishing denominator means discount mass has nowhere to go, which is a
/// genuinely degenerate configuration.
pub(crate) fn computed_bow(model: &BackoffModel, history: &[WordId]) -> Result<Option<f64>> {
    if model.continuations(history).next().is_none() {
        return Ok(None);
    }
    let (numerator, denominator) = model.raw_backoff_masses(history)?;
    if denominator <= DEGENERATE_DENOMINATOR {
        if numerator <= EPSILON_BACKOFF_MASS {
            return Ok(None);
        }
        return Err(Error::BackoffDegenerate {
            history: model.vocab.render(history),
            denominator,
        });
    }
    let numerator = numerator.max(EPSILON_BACKOFF_MASS);
    Ok(Some(numerator.ln() - denominator.ln()))
}

/// Recomputes all backoff weights bottom-up (contexts of length 1 first).
pub(crate) fn recompute_all_backoff_weights(model: &mut BackoffModel) -> Result<()> {
    for level in 0..model.order.saturating_sub(1) {
        let keys: Vec<NgramKey> = model.tables[level].keys().cloned().collect();
        let mut updates = Vec::with_capacity(keys.len());
        for key in keys {
            let bow = computed_bow(model, &key)?;
            updates.push((key, bow));
        }
        for (key, bow) in updates {
            model.tables[level]
                .get_mut(&key)
                .expect("key collected from this table")
                .log_bow = bow;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_word_model() -> BackoffModel {
        // vocab {a, b}; p(a) = p(b) = 0.5; alpha(a) = 0.8; p(b|a) = 0.6
        let mut vocab = Vocabulary::new();
        let a = vocab.intern("a");
        let b = vocab.intern("b");
        let mut builder = ModelBuilder::new(2, vocab);
        builder.insert(
            &[a],
            NgramEntry::with_bow(0.5f64.ln(), Some(0.8f64.ln())),
        );
        builder.insert(&[b], NgramEntry::new(0.5f64.ln()));
        builder.insert(&[a, b], NgramEntry::new(0.6f64.ln()));
        builder.build_raw()
    }

    #[test]
    fn explicit_entry_is_returned_bit_equal() {
        let mut vocab = Vocabulary::new();
        let a = vocab.intern("a");
        let b = vocab.intern("b");
        let mut builder = ModelBuilder::new(2, vocab);
        builder.insert(&[a], NgramEntry::new(0.5f64.ln()));
        builder.insert(&[b], NgramEntry::new(0.5f64.ln()));
        builder.insert(&[a, b], NgramEntry::new(-0.6931));
        let model = builder.build_raw();
        assert_eq!(model.conditional_prob(&[a], b).unwrap(), -0.6931);
    }

    #[test]
    fn absent_history_backs_off_with_unit_alpha() {
        let mut vocab = Vocabulary::new();
        let a = vocab.intern("a");
        let b = vocab.intern("b");
        let mut builder = ModelBuilder::new(2, vocab);
        builder.insert(&[b], NgramEntry::new(0.5f64.ln()));
        let model = builder.build_raw();
        // "a" is in the vocabulary but has no unigram entry; as a history it
        // simply contributes alpha = 1.
        assert_eq!(model.conditional_prob(&[a], b).unwrap(), 0.5f64.ln());
    }

    #[test]
    fn backoff_rule_multiplies_alpha_and_lower_order() {
        let model = two_word_model();
        let a = model.vocab().id("a").unwrap();
        let got = model.conditional_prob(&[a], a).unwrap();
        assert!((got - 0.4f64.ln()).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn missing_unigram_is_zero_probability_not_underflow() {
        let mut vocab = Vocabulary::new();
        let a = vocab.intern("a");
        let b = vocab.intern("b");
        let mut builder = ModelBuilder::new(2, vocab);
        builder.insert(&[a], NgramEntry::new(0.0));
        let model = builder.build_raw();
        match model.conditional_prob(&[a], b) {
            Err(Error::ZeroProbability { word }) => assert_eq!(word, "b"),
            other => panic!("expected zero-probability error, got {other:?}"),
        }
        match model.conditional_prob(&[], 99) {
            Err(Error::WordIdOutOfRange(99)) => {}
            other => panic!("expected out-of-range error, got {other:?}"),
        }
    }

    #[test]
    fn backoff_mass_hand_values() {
        // p(b|a) = 0.5 explicit; unigram p(b) = 0.4 -> (0.5, 0.6)
        let mut vocab = Vocabulary::new();
        let a = vocab.intern("a");
        let b = vocab.intern("b");
        let c = vocab.intern("c");
        let mut builder = ModelBuilder::new(2, vocab);
        builder.insert(&[a], NgramEntry::new(0.3f64.ln()));
        builder.insert(&[b], NgramEntry::new(0.4f64.ln()));
        builder.insert(&[c], NgramEntry::new(0.3f64.ln()));
        builder.insert(&[a, b], NgramEntry::new(0.5f64.ln()));
        let model = builder.build_raw();
        let mass = model.backoff_mass(&[a]).unwrap();
        assert!((mass.numerator - 0.5).abs() < 1e-12);
        assert!((mass.denominator - 0.6).abs() < 1e-12);
        // History with no explicit continuations -> (1, 1).
        let mass = model.backoff_mass(&[b]).unwrap();
        assert_eq!(mass.numerator, 1.0);
        assert_eq!(mass.denominator, 1.0);
    }

    #[test]
    fn backoff_mass_full_coverage_leaves_no_mass() {
        let mut vocab = Vocabulary::new();
        let a = vocab.intern("a");
        let b = vocab.intern("b");
        let mut builder = ModelBuilder::new(2, vocab);
        builder.insert(&[a], NgramEntry::new(0.5f64.ln()));
        builder.insert(&[b], NgramEntry::new(0.5f64.ln()));
        builder.insert(&[a, a], NgramEntry::new(0.5f64.ln()));
        builder.insert(&[a, b], NgramEntry::new(0.5f64.ln()));
        let model = builder.build_raw();
        let (numerator, denominator) = model.raw_backoff_masses(&[a]).unwrap();
        assert!(numerator.abs() < 1e-12);
        // Covering the whole vocabulary also exhausts the lower-order
        // distribution, so the public operation reports the degenerate
        // denominator.
        assert!(denominator.abs() < 1e-12);
        assert!(matches!(
            model.backoff_mass(&[a]),
            Err(Error::BackoffDegenerate { .. })
        ));
    }

    #[test]
    fn backoff_mass_requires_known_history() {
        let mut vocab = Vocabulary::new();
        let a = vocab.intern("a");
        let b = vocab.intern("b");
        let c = vocab.intern("c");
        let mut builder = ModelBuilder::new(2, vocab);
        builder.insert(&[a], NgramEntry::new(0.5f64.ln()));
        builder.insert(&[b], NgramEntry::new(0.5f64.ln()));
        let model = builder.build_raw();
        // "c" is a vocabulary word but not an entry, so it cannot be a history.
        assert!(matches!(
            model.backoff_mass(&[c]),
            Err(Error::HistoryNotFound(_))
        ));
    }

    #[test]
    fn recompute_backoff_weight_hand_values() {
        let w = recompute_backoff_weight(0.5, 0.6).unwrap();
        assert!((w - (-0.1823215567939546)).abs() < 1e-15);
        assert_eq!(recompute_backoff_weight(0.37, 0.37).unwrap(), 0.0);
        // Pruning the only continuation in the (0.5, 0.6) example restores
        // alpha = 1: (0.5 + 0.5) / (0.6 + 0.4).
        assert_eq!(recompute_backoff_weight(0.5 + 0.5, 0.6 + 0.4).unwrap(), 0.0);
        assert!(matches!(
            recompute_backoff_weight(-0.1, 0.5),
            Err(Error::NegativeBackoffMass(_))
        ));
        assert!(matches!(
            recompute_backoff_weight(0.5, 0.0),
            Err(Error::BackoffDegenerate { .. })
        ));
    }

    #[test]
    fn history_marginal_is_a_chain_of_conditionals() {
        let model = two_word_model();
        let a = model.vocab().id("a").unwrap();
        let b = model.vocab().id("b").unwrap();
        assert_eq!(model.history_marginal(&[]).unwrap(), 0.0);
        assert_eq!(model.history_marginal(&[a]).unwrap(), 0.5f64.ln());
        let chain = model.history_marginal(&[a]).unwrap()
            + model.conditional_prob(&[a], b).unwrap();
        assert_eq!(model.history_marginal(&[a, b]).unwrap(), chain);
    }

    #[test]
    fn single_word_history_marginal_is_its_unigram() {
        let mut vocab = Vocabulary::new();
        let a = vocab.intern("a");
        vocab.intern("b");
        let mut builder = ModelBuilder::new(2, vocab);
        builder.insert(&[a], NgramEntry::new(0.25f64.ln()));
        let model = builder.build_raw();
        assert_eq!(model.history_marginal(&[a]).unwrap(), 0.25f64.ln());
    }

    #[test]
    fn validate_accepts_the_two_word_model() {
        let report = two_word_model().validate();
        assert!(report.is_clean(), "{}", report.summary());
    }

    #[test]
    fn validate_reports_doubled_probability_with_its_defect() {
        let mut model = two_word_model();
        let a = model.vocab().id("a").unwrap();
        let b = model.vocab().id("b").unwrap();
        let doubled = (2.0 * 0.6f64).ln();
        model.tables[1].get_mut(&[a, b][..]).unwrap().log_prob = doubled;
        let report = model.validate();
        assert_eq!(report.normalization_violations.len(), 1);
        let (history, defect) = &report.normalization_violations[0];
        assert_eq!(history, "a");
        assert!((defect - 0.6).abs() < 1e-9, "defect {defect}");
    }

    #[test]
    fn validate_reports_broken_closure() {
        let mut vocab = Vocabulary::new();
        let a = vocab.intern("a");
        let b = vocab.intern("b");
        let mut builder = ModelBuilder::new(2, vocab);
        builder.insert(&[a], NgramEntry::new(0.5f64.ln()));
        // (b, a) has no context entry "b".
        builder.insert(&[b, a], NgramEntry::new(0.5f64.ln()));
        let model = builder.build_raw();
        let report = model.validate();
        assert_eq!(report.closure_violations.len(), 1);
    }

    #[test]
    fn builder_recomputes_weights_to_match_masses() {
        let mut vocab = Vocabulary::new();
        let a = vocab.intern("a");
        let b = vocab.intern("b");
        let c = vocab.intern("c");
        let mut builder = ModelBuilder::new(2, vocab);
        builder.insert(&[a], NgramEntry::new(0.3f64.ln()));
        builder.insert(&[b], NgramEntry::new(0.4f64.ln()));
        builder.insert(&[c], NgramEntry::new(0.3f64.ln()));
        builder.insert(&[a, b], NgramEntry::new(0.5f64.ln()));
        let model = builder.build().unwrap();
        let bow = model.entry(&[a]).unwrap().log_bow.unwrap();
        assert!((bow - (0.5f64 / 0.6).ln()).abs() < 1e-12);
        assert!(model.entry(&[b]).unwrap().log_bow.is_none());
        assert!(model.validate().is_clean());
    }
}
