//! N-gram pruning.
//!
//! Every prunable n-gram is scored by the relative entropy between the model
//! and the model with that single n-gram removed (backoff weight adjusted).
//! The score factors into per-history masses plus O(1) work per n-gram, so a
//! full scoring pass is linear in the model size. A brute-force scorer that
//! rebuilds the pruned model and sums over the whole vocabulary serves as the
//! independent oracle for the factored computation.
//!
//! The weighted log-difference criterion ("SR") ranks n-grams by
//! N(w,h) * [log p(w|h) - log p'(w|h)], ignoring the backoff-weight side
//! effects; it is kept as a comparison baseline, with the training frequency
//! replaceable by the model's own joint probability.

use std::collections::HashSet;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::counts::CountTable;
use crate::discount::{good_turing_discounts, DiscountTable};
use crate::error::{Error, Result};
use crate::model::{
    computed_bow, BackoffModel, KahanSum, NgramEntry, DEGENERATE_DENOMINATOR,
};
use crate::vocab::{NgramKey, Vocabulary, WordId};

/// Pruning criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Criterion {
    /// Exact per-n-gram relative entropy ("RE").
    #[serde(rename = "re")]
    RelativeEntropy,
    /// Weighted log-probability difference ("SR").
    #[serde(rename = "sr")]
    WeightedDifference,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::RelativeEntropy => "re",
            Criterion::WeightedDifference => "sr",
        }
    }
}

/// What a threshold is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThresholdOn {
    /// Relative perplexity increase, exp(D) - 1.
    #[serde(rename = "relative_perplexity_increase")]
    RelPplIncrease,
    /// The relative entropy D itself, in nats.
    #[serde(rename = "delta_entropy")]
    DeltaEntropy,
}

/// A scored n-gram.
#[derive(Debug, Clone)]
pub struct PruneCandidate {
    pub key: Vec<WordId>,
    /// Relative entropy in nats contributed by pruning this n-gram alone.
    pub delta_entropy: f64,
    /// exp(delta_entropy) - 1.
    pub rel_ppl_increase: f64,
    /// Weighted log-probability difference under the model-internal weight
    /// p(h, w), unless explicit weights were supplied at scoring time.
    pub sr_score: f64,
    /// The n-gram is the context of a stored longer n-gram.
    pub protected: bool,
    /// False when removing the n-gram would degenerate its history's
    /// backoff weight; such candidates are never removed.
    pub prunable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderCounts {
    pub order: usize,
    pub original: usize,
    pub retained: usize,
    pub removed: usize,
    /// Candidates kept only because a stored longer n-gram needs them.
    pub protected_retained: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    Threshold { theta: f64, on: ThresholdOn },
    TopK { k: usize },
}

/// Summary of a pruning run.
#[derive(Debug, Clone, Serialize)]
pub struct PruneReport {
    pub criterion: Criterion,
    pub mode: PruneMode,
    pub per_order: Vec<OrderCounts>,
    /// Sum of delta_entropy over all removed n-grams.
    pub removed_delta_entropy: f64,
    #[serde(skip)]
    pub duration: Duration,
}

impl PruneReport {
    pub fn total_removed(&self) -> usize {
        self.per_order.iter().map(|o| o.removed).sum()
    }

    pub fn total_retained(&self) -> usize {
        self.per_order.iter().map(|o| o.retained).sum()
    }
}

/// Relative perplexity increase implied by a relative entropy.
pub fn perplexity_increase_from_entropy(delta_entropy: f64) -> f64 {
    delta_entropy.exp_m1()
}

/// Training-count weights for the SR criterion: discounted frequencies from
/// a count table. Lookups translate through word strings so the count table
/// does not have to share the model's word ids.
pub struct SrWeights<'a> {
    counts: &'a CountTable,
    discounts: Vec<DiscountTable>,
}

impl<'a> SrWeights<'a> {
    /// Discounted frequencies with the given Good-Turing cutoff.
    pub fn good_turing(counts: &'a CountTable, cutoff: u64) -> Result<Self> {
        let discounts = (1..=counts.order())
            .map(|n| good_turing_discounts(counts.count_of_counts(n), cutoff))
            .collect::<Result<_>>()?;
        Ok(SrWeights { counts, discounts })
    }

    /// Raw, undiscounted frequencies.
    pub fn raw(counts: &'a CountTable) -> Self {
        let discounts = (1..=counts.order())
            .map(|_| DiscountTable::all_ones(1, None))
            .collect();
        SrWeights { counts, discounts }
    }

    fn weight(&self, model_vocab: &Vocabulary, key: &[WordId]) -> Option<f64> {
        let translated: Option<Vec<WordId>> = key
            .iter()
            .map(|&id| {
                model_vocab
                    .word(id)
                    .and_then(|w| self.counts.vocab().id(w))
            })
            .collect();
        let translated = translated?;
        let c = self.counts.count(&translated);
        if c == 0 {
            return None;
        }
        Some(self.discounts[key.len() - 1].discounted(c))
    }
}

/// Per-history quantities shared by all candidates of one history.
struct HistoryStats {
    /// Marginal probability of the history, linear space.
    p_history: f64,
    /// Log of the history's stored backoff weight (0 when absent).
    ln_alpha: f64,
    /// Backoff mass numerator: 1 - sum of explicit continuation probabilities.
    numerator: f64,
    /// Backoff mass denominator: the same under the truncated history.
    denominator: f64,
}

fn history_stats(model: &BackoffModel, history: &[WordId]) -> Result<HistoryStats> {
    let p_history = model.history_marginal(history)?.exp();
    let ln_alpha = model
        .entry(history)
        .and_then(|e| e.log_bow)
        .unwrap_or(0.0);
    let (numerator, denominator) = model.raw_backoff_masses(history)?;
    Ok(HistoryStats {
        p_history,
        ln_alpha,
        numerator,
        denominator,
    })
}

fn unprunable_candidate(key: &[WordId], protected: bool) -> PruneCandidate {
    PruneCandidate {
        key: key.to_vec(),
        delta_entropy: f64::INFINITY,
        rel_ppl_increase: f64::INFINITY,
        sr_score: f64::INFINITY,
        protected,
        prunable: false,
    }
}

/// Scores one explicit n-gram given its history's shared stats.
fn score_one(
    model: &BackoffModel,
    stats: &HistoryStats,
    key: &[WordId],
    entry: &NgramEntry,
    sr_weights: Option<&SrWeights>,
    protected: bool,
) -> Result<PruneCandidate> {
    let truncated = &key[1..key.len() - 1];
    let word = *key.last().expect("candidate keys are non-empty");

    let ln_p = entry.log_prob;
    let p = ln_p.exp();
    let ln_p_lower = model.conditional_prob(truncated, word)?;
    let p_lower = ln_p_lower.exp();

    // Revised backoff weight: add the pruned n-gram's masses back into the
    // numerator and denominator.
    let numerator_pruned = stats.numerator + p;
    let denominator_pruned = stats.denominator + p_lower;
    if denominator_pruned <= DEGENERATE_DENOMINATOR || numerator_pruned <= 0.0 {
        return Ok(unprunable_candidate(key, protected));
    }
    let ln_alpha_pruned = numerator_pruned.ln() - denominator_pruned.ln();

    // Total probability mass given to backoff under this history; zero when
    // the explicit continuations exhaust the distribution.
    let backoff_mass = stats.numerator.max(0.0);
    let bo_term = if backoff_mass > 0.0 {
        (ln_alpha_pruned - stats.ln_alpha) * backoff_mass
    } else {
        0.0
    };
    let delta_entropy =
        -stats.p_history * (p * (ln_p_lower + ln_alpha_pruned - ln_p) + bo_term);

    let ln_p_pruned = ln_alpha_pruned + ln_p_lower;
    let sr_weight = match sr_weights {
        Some(weights) => weights.weight(model.vocab(), key).ok_or_else(|| {
            Error::MissingCount(model.vocab().render(key))
        })?,
        None => stats.p_history * p,
    };
    let sr_score = sr_weight * (ln_p - ln_p_pruned);

    Ok(PruneCandidate {
        key: key.to_vec(),
        delta_entropy,
        rel_ppl_increase: perplexity_increase_from_entropy(delta_entropy),
        sr_score,
        protected,
        prunable: true,
    })
}

/// Scores every explicit n-gram of the selected orders against the original
/// model. Per-history work (marginal, backoff masses) is done once per
/// distinct history; candidates are returned grouped by order, keys ascending.
pub fn score_candidates(
    model: &BackoffModel,
    orders: &[usize],
    sr_weights: Option<&SrWeights>,
) -> Result<Vec<PruneCandidate>> {
    let orders = normalize_orders(model, orders)?;
    let mut candidates = Vec::new();
    for &n in &orders {
        let mut current: Option<(Vec<WordId>, HistoryStats)> = None;
        // Collect first: scoring borrows the model immutably throughout.
        let entries: Vec<(&[WordId], &NgramEntry)> = model.entries(n).collect();
        for (key, entry) in entries {
            if entry.placeholder {
                continue;
            }
            let history = &key[..n - 1];
            let stale = match &current {
                Some((h, _)) => h.as_slice() != history,
                None => true,
            };
            if stale {
                current = Some((history.to_vec(), history_stats(model, history)?));
            }
            let stats = &current.as_ref().expect("set above").1;
            let protected =
                n < model.order() && model.continuations(key).next().is_some();
            candidates.push(score_one(model, stats, key, entry, sr_weights, protected)?);
        }
    }
    Ok(candidates)
}

/// Relative-entropy score for a single explicit n-gram.
pub fn re_score(model: &BackoffModel, key: &[WordId]) -> Result<PruneCandidate> {
    let entry = require_candidate(model, key)?;
    let history = &key[..key.len() - 1];
    let stats = history_stats(model, history)?;
    let protected = key.len() < model.order() && model.continuations(key).next().is_some();
    score_one(model, &stats, key, &entry, None, protected)
}

/// SR score for a single explicit n-gram: the weighted difference of its log
/// probability before and after pruning. The weight is the discounted
/// training frequency when `weights` is supplied, otherwise the model's own
/// joint probability p(h, w).
pub fn sr_score(
    model: &BackoffModel,
    key: &[WordId],
    weights: Option<&SrWeights>,
) -> Result<f64> {
    let entry = require_candidate(model, key)?;
    let history = &key[..key.len() - 1];
    let stats = history_stats(model, history)?;
    let protected = key.len() < model.order() && model.continuations(key).next().is_some();
    let candidate = score_one(model, &stats, key, &entry, weights, protected)?;
    if !candidate.prunable {
        return Err(Error::BackoffDegenerate {
            history: model.vocab().render(history),
            denominator: stats.denominator,
        });
    }
    Ok(candidate.sr_score)
}

fn require_candidate(model: &BackoffModel, key: &[WordId]) -> Result<NgramEntry> {
    if key.len() < 2 {
        return Err(Error::InvalidInput(
            "only n-grams of order >= 2 can be pruned".to_string(),
        ));
    }
    let entry = model
        .entry(key)
        .ok_or_else(|| Error::HistoryNotFound(model.vocab().render(key)))?;
    if entry.placeholder {
        return Err(Error::InvalidInput(format!(
            "\"{}\" is a placeholder entry",
            model.vocab().render(key)
        )));
    }
    Ok(*entry)
}

/// Brute-force relative entropy: rebuilds the model with the n-gram removed
/// and its history's backoff weight recomputed from scratch, then sums
/// p(h) * p(w|h) * [log p(w|h) - log p'(w|h)] over the entire vocabulary.
/// Only feasible on models whose vocabulary is enumerable; this is the
/// independent oracle for `re_score`.
pub fn re_score_bruteforce(model: &BackoffModel, key: &[WordId]) -> Result<f64> {
    require_candidate(model, key)?;
    let history = &key[..key.len() - 1];
    let pruned = remove_ngram(model, key)?;
    let p_history = model.history_marginal(history)?.exp();
    let mut sum = KahanSum::default();
    for word in model.vocab().ids() {
        let ln_p = match model.conditional_prob(history, word) {
            Ok(lp) => lp,
            Err(Error::ZeroProbability { .. }) => continue,
            Err(err) => return Err(err),
        };
        let ln_p_pruned = pruned.conditional_prob(history, word)?;
        sum.add(ln_p.exp() * (ln_p - ln_p_pruned));
    }
    Ok(p_history * sum.value())
}

/// Removes a single n-gram and recomputes the affected backoff weights,
/// returning the new model.
pub fn remove_ngram(model: &BackoffModel, key: &[WordId]) -> Result<BackoffModel> {
    require_candidate(model, key)?;
    let mut removed: Vec<HashSet<NgramKey>> = vec![HashSet::new(); model.order()];
    removed[key.len() - 1].insert(key.to_vec().into_boxed_slice());
    rebuild_without(model, &removed)
}

fn normalize_orders(model: &BackoffModel, orders: &[usize]) -> Result<Vec<usize>> {
    let mut orders: Vec<usize> = orders.to_vec();
    orders.sort_unstable();
    orders.dedup();
    if orders.is_empty() {
        return Err(Error::InvalidInput("no orders selected".to_string()));
    }
    for &n in &orders {
        if n < 2 || n > model.order() {
            return Err(Error::InvalidInput(format!(
                "order {n} out of range 2..={} for pruning",
                model.order()
            )));
        }
    }
    Ok(orders)
}

/// Removes all unprotected n-grams of the selected orders whose score falls
/// below the threshold. Scores are computed once against the original model;
/// the removal is a single simultaneous pass, after which the backoff
/// weights of every affected history are recomputed.
pub fn prune_by_threshold(
    model: &BackoffModel,
    theta: f64,
    orders: &[usize],
) -> Result<(BackoffModel, PruneReport)> {
    prune_by_threshold_with(model, theta, ThresholdOn::RelPplIncrease, orders)
}

pub fn prune_by_threshold_with(
    model: &BackoffModel,
    theta: f64,
    on: ThresholdOn,
    orders: &[usize],
) -> Result<(BackoffModel, PruneReport)> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "threshold must be non-negative, got {theta}"
        )));
    }
    let start = Instant::now();
    let orders = normalize_orders(model, orders)?;
    let candidates = score_candidates(model, &orders, None)?;
    // Scores are mathematically non-negative; sub-rounding negatives must
    // not be removed at theta = 0, so the decision clamps at zero.
    let selection = select(model, &candidates, &orders, |c| {
        let score = match on {
            ThresholdOn::RelPplIncrease => c.rel_ppl_increase,
            ThresholdOn::DeltaEntropy => c.delta_entropy,
        };
        score.max(0.0) < theta
    });
    let pruned = rebuild_without(model, &selection.removed)?;
    let report = build_report(
        model,
        Criterion::RelativeEntropy,
        PruneMode::Threshold { theta, on },
        &candidates,
        &selection,
        start.elapsed(),
    );
    ensure_valid(&pruned)?;
    Ok((pruned, report))
}

/// Ranks the candidates of the selected orders by the chosen criterion and
/// keeps the top k (ties broken by word-id order); everything else is
/// removed, except n-grams protected as contexts of retained longer n-grams,
/// which are kept in addition to the k and reported separately.
pub fn prune_top_k(
    model: &BackoffModel,
    criterion: Criterion,
    k: usize,
    orders: &[usize],
) -> Result<(BackoffModel, PruneReport)> {
    let orders = normalize_orders(model, orders)?;
    let candidates = score_candidates(model, &orders, None)?;
    prune_top_k_scored(model, &candidates, criterion, k, &orders)
}

/// Top-k pruning over candidates scored earlier (scores are always taken
/// against the original model, so one scoring pass can serve several k).
pub fn prune_top_k_scored(
    model: &BackoffModel,
    candidates: &[PruneCandidate],
    criterion: Criterion,
    k: usize,
    orders: &[usize],
) -> Result<(BackoffModel, PruneReport)> {
    let start = Instant::now();
    let orders = normalize_orders(model, orders)?;
    let kept = top_k_keys(candidates, criterion, k);
    let selection = select(model, candidates, &orders, |c| {
        !kept.contains(c.key.as_slice())
    });
    let pruned = rebuild_without(model, &selection.removed)?;
    let report = build_report(
        model,
        criterion,
        PruneMode::TopK { k },
        candidates,
        &selection,
        start.elapsed(),
    );
    ensure_valid(&pruned)?;
    Ok((pruned, report))
}

/// The top-k candidate keys under a criterion, descending score, ties broken
/// by ascending word-id sequence. Unprunable candidates are excluded (they
/// are retained regardless).
pub fn top_k_keys(
    candidates: &[PruneCandidate],
    criterion: Criterion,
    k: usize,
) -> HashSet<Vec<WordId>> {
    let mut ranked: Vec<&PruneCandidate> =
        candidates.iter().filter(|c| c.prunable).collect();
    ranked.sort_by(|a, b| {
        let sa = criterion_score(a, criterion);
        let sb = criterion_score(b, criterion);
        sb.partial_cmp(&sa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.key.cmp(&b.key))
    });
    ranked.iter().take(k).map(|c| c.key.clone()).collect()
}

fn criterion_score(candidate: &PruneCandidate, criterion: Criterion) -> f64 {
    match criterion {
        Criterion::RelativeEntropy => candidate.delta_entropy,
        Criterion::WeightedDifference => candidate.sr_score,
    }
}

struct Selection {
    /// Removed keys per order index (order - 1).
    removed: Vec<HashSet<NgramKey>>,
    /// Per order index: candidates kept only through context protection.
    protected_extra: Vec<usize>,
}

/// Decides removals top-down so that context protection can consult the
/// surviving set of the next-higher order.
fn select(
    model: &BackoffModel,
    candidates: &[PruneCandidate],
    orders: &[usize],
    mut want_remove: impl FnMut(&PruneCandidate) -> bool,
) -> Selection {
    let mut removed: Vec<HashSet<NgramKey>> = vec![HashSet::new(); model.order()];
    let mut protected_extra = vec![0usize; model.order()];
    for &n in orders.iter().rev() {
        for candidate in candidates.iter().filter(|c| c.key.len() == n) {
            if !candidate.prunable || !want_remove(candidate) {
                continue;
            }
            let is_context = n < model.order()
                && model
                    .continuations(&candidate.key)
                    .any(|(k, _)| !removed[n].contains(k));
            if is_context {
                protected_extra[n - 1] += 1;
                continue;
            }
            removed[n - 1].insert(candidate.key.clone().into_boxed_slice());
        }
    }
    Selection {
        removed,
        protected_extra,
    }
}

/// Clones the model minus the removed keys and recomputes the backoff weight
/// of every history whose masses the removals touched, lowest order first.
/// Histories whose inputs are untouched keep their stored weights bit-exact.
fn rebuild_without(
    model: &BackoffModel,
    removed: &[HashSet<NgramKey>],
) -> Result<BackoffModel> {
    let mut pruned = model.clone();
    for (level, removed_keys) in removed.iter().enumerate() {
        for key in removed_keys {
            pruned.tables[level].remove(key);
        }
    }

    // Histories that lost explicit continuations.
    let mut lost: Vec<HashSet<NgramKey>> = vec![HashSet::new(); model.order()];
    for removed_keys in removed.iter() {
        for key in removed_keys {
            if key.len() >= 2 {
                lost[key.len() - 2].insert(key[..key.len() - 1].to_vec().into_boxed_slice());
            }
        }
    }

    // A history's denominator also moves when its truncated history was
    // affected, so the set propagates up the orders.
    let mut affected: Vec<HashSet<NgramKey>> = vec![HashSet::new(); model.order()];
    for level in 0..model.order().saturating_sub(1) {
        let mut set = std::mem::take(&mut lost[level]);
        if level >= 1 {
            for key in pruned.tables[level].keys() {
                if affected[level - 1].contains(&key[1..]) {
                    set.insert(key.clone());
                }
            }
        }
        let mut updates = Vec::with_capacity(set.len());
        for key in &set {
            if !pruned.tables[level].contains_key(key) {
                continue;
            }
            updates.push((key.clone(), computed_bow(&pruned, key)?));
        }
        for (key, bow) in updates {
            pruned.tables[level]
                .get_mut(&key)
                .expect("presence checked above")
                .log_bow = bow;
        }
        affected[level] = set;
    }
    Ok(pruned)
}

fn ensure_valid(model: &BackoffModel) -> Result<()> {
    let report = model.validate();
    if !report.is_clean() {
        return Err(Error::InvalidModel(report.summary()));
    }
    Ok(())
}

fn build_report(
    model: &BackoffModel,
    criterion: Criterion,
    mode: PruneMode,
    candidates: &[PruneCandidate],
    selection: &Selection,
    duration: Duration,
) -> PruneReport {
    let mut removed_delta = KahanSum::default();
    for candidate in candidates {
        if selection.removed[candidate.key.len() - 1].contains(candidate.key.as_slice()) {
            removed_delta.add(candidate.delta_entropy);
        }
    }
    let per_order = (1..=model.order())
        .map(|n| {
            let original = model.ngram_count(n);
            let removed = selection.removed[n - 1].len();
            OrderCounts {
                order: n,
                original,
                retained: original - removed,
                removed,
                protected_retained: selection.protected_extra[n - 1],
            }
        })
        .collect();
    PruneReport {
        criterion,
        mode,
        per_order,
        removed_delta_entropy: removed_delta.value(),
        duration,
    }
}

/// Intersection size and fraction |a n b| / max(|a|, |b|) of two selections.
pub fn selection_overlap(
    a: &HashSet<Vec<WordId>>,
    b: &HashSet<Vec<WordId>>,
) -> (usize, f64) {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let shared = small.iter().filter(|k| large.contains(*k)).count();
    let denom = a.len().max(b.len());
    if denom == 0 {
        return (0, 1.0);
    }
    (shared, shared as f64 / denom as f64)
}

/// Writes scored candidates as TSV, sorted by the criterion score descending
/// (ties by word-id order): order, words, delta_entropy, rel_ppl_increase,
/// sr_score, protected.
pub fn write_candidates_tsv(
    model: &BackoffModel,
    candidates: &[PruneCandidate],
    criterion: Criterion,
    mut writer: impl Write,
) -> Result<()> {
    let mut sorted: Vec<&PruneCandidate> = candidates.iter().collect();
    sorted.sort_by(|a, b| {
        let sa = criterion_score(a, criterion);
        let sb = criterion_score(b, criterion);
        sb.partial_cmp(&sa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.key.cmp(&b.key))
    });
    writeln!(
        writer,
        "order\tngram\tdelta_entropy\trel_ppl_increase\tsr_score\tprotected"
    )?;
    for c in sorted {
        writeln!(
            writer,
            "{}\t{}\t{}\t{}\t{}\t{}",
            c.key.len(),
            model.vocab().render(&c.key),
            c.delta_entropy,
            c.rel_ppl_increase,
            c.sr_score,
            c.protected
        )?;
    }
    Ok(())
}
