//! Corpus ingestion and n-gram counting.
//!
//! The corpus format is plain UTF-8 text, one sentence per line, whitespace
//! tokenized. Every sentence is padded with one begin and one end token; the
//! begin token is never counted as a predicted unigram event.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::ops::Bound;

use crate::error::{Error, Result};
use crate::vocab::{NgramKey, Vocabulary, WordId, BEGIN_TOKEN, END_TOKEN, UNK_TOKEN};

/// How the vocabulary treats words outside the training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabPolicy {
    /// Vocabulary is exactly the corpus words; evaluation either skips or
    /// rejects out-of-vocabulary tokens.
    Closed,
    /// Additionally trains an `<unk>` token that evaluation can map unseen
    /// words onto.
    OpenUnk,
}

#[derive(Debug, Clone)]
pub struct CountOptions {
    /// Hard bound on tokens per corpus line.
    pub max_line_tokens: usize,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            max_line_tokens: 50_000,
        }
    }
}

/// Raw n-gram counts per order, plus count-of-counts and the sentence count.
#[derive(Debug, Clone)]
pub struct CountTable {
    order: usize,
    vocab: Vocabulary,
    /// tables[i]: counts of n-grams of order i + 1.
    tables: Vec<BTreeMap<NgramKey, u64>>,
    /// count_of_counts[i][r] = number of distinct (i + 1)-grams seen r times.
    count_of_counts: Vec<BTreeMap<u64, u64>>,
    sentence_count: u64,
}

impl CountTable {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn sentence_count(&self) -> u64 {
        self.sentence_count
    }

    pub fn count(&self, key: &[WordId]) -> u64 {
        if key.is_empty() || key.len() > self.order {
            return 0;
        }
        self.tables[key.len() - 1].get(key).copied().unwrap_or(0)
    }

    /// Iterates counted n-grams of one order in word-id order.
    pub fn ngrams(&self, order: usize) -> impl Iterator<Item = (&[WordId], u64)> {
        self.tables[order - 1].iter().map(|(k, &c)| (k.as_ref(), c))
    }

    pub fn distinct(&self, order: usize) -> usize {
        self.tables[order - 1].len()
    }

    pub fn count_of_counts(&self, order: usize) -> &BTreeMap<u64, u64> {
        &self.count_of_counts[order - 1]
    }

    /// Total predicted unigram events: corpus tokens plus sentence ends,
    /// excluding begin tokens.
    pub fn predicted_total(&self) -> u64 {
        self.tables[0].values().sum()
    }

    /// The denominator count for a history. The begin token is never counted
    /// as a unigram, so as a length-1 history its count is the sentence count.
    pub fn history_count(&self, history: &[WordId]) -> Option<u64> {
        if history.len() == 1 && Some(history[0]) == self.vocab.begin() {
            return Some(self.sentence_count);
        }
        self.tables[history.len() - 1].get(history).copied()
    }

    /// Counted continuations of a history, in word-id order.
    pub fn continuations(&self, history: &[WordId]) -> impl Iterator<Item = (&[WordId], u64)> {
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
            .map(|(k, &c)| (k.as_ref(), c))
    }
}

/// Counts all n-grams of orders 1..=order from a one-sentence-per-line corpus.
pub fn count_ngrams(
    reader: impl BufRead,
    order: usize,
    policy: VocabPolicy,
    options: &CountOptions,
) -> Result<CountTable> {
    assert!(order >= 1, "order must be at least 1");
    let mut vocab = Vocabulary::with_boundaries();
    if policy == VocabPolicy::OpenUnk {
        vocab.intern(UNK_TOKEN);
    }
    let begin = vocab.begin().expect("boundaries present");
    let end = vocab.end().expect("boundaries present");

    let mut tables: Vec<BTreeMap<NgramKey, u64>> = vec![BTreeMap::new(); order];
    let mut sentence_count = 0u64;
    let mut line_no = 0usize;
    let mut padded: Vec<WordId> = Vec::new();

    for raw in reader.lines() {
        line_no += 1;
        let raw = raw?;
        padded.clear();
        padded.push(begin);
        let mut tokens = 0usize;
        for token in raw.split_whitespace() {
            tokens += 1;
            if tokens > options.max_line_tokens {
                return Err(Error::LineTooLong {
                    line: line_no,
                    limit: options.max_line_tokens,
                });
            }
            if token == BEGIN_TOKEN || token == END_TOKEN {
                return Err(Error::ReservedToken {
                    token: token.to_string(),
                    line: line_no,
                });
            }
            padded.push(vocab.intern(token));
        }
        padded.push(end);
        sentence_count += 1;

        for n in 1..=order {
            for window in padded.windows(n) {
                if n == 1 && window[0] == begin {
                    continue;
                }
                *tables[n - 1]
                    .entry(window.to_vec().into_boxed_slice())
                    .or_insert(0) += 1;
            }
        }
    }

    if sentence_count == 0 {
        return Err(Error::EmptyCorpus);
    }

    let count_of_counts = tables
        .iter()
        .map(|table| {
            let mut coc: BTreeMap<u64, u64> = BTreeMap::new();
            for &c in table.values() {
                *coc.entry(c).or_insert(0) += 1;
            }
            coc
        })
        .collect();

    Ok(CountTable {
        order,
        vocab,
        tables,
        count_of_counts,
        sentence_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ids(table: &CountTable, words: &[&str]) -> Vec<WordId> {
        words
            .iter()
            .map(|w| table.vocab().id(w).expect("word in vocab"))
            .collect()
    }

    #[test]
    fn hand_counts_for_a_b() {
        let t = count_ngrams(
            Cursor::new("a b\n"),
            2,
            VocabPolicy::Closed,
            &CountOptions::default(),
        )
        .unwrap();
        let a = ids(&t, &["a"]);
        let b = ids(&t, &["b"]);
        assert_eq!(t.count(&a), 1);
        assert_eq!(t.count(&b), 1);
        assert_eq!(t.count(&ids(&t, &[END_TOKEN])), 1);
        // The begin token is not a unigram event.
        assert_eq!(t.count(&ids(&t, &[BEGIN_TOKEN])), 0);
        assert_eq!(t.count(&ids(&t, &[BEGIN_TOKEN, "a"])), 1);
        assert_eq!(t.count(&ids(&t, &["a", "b"])), 1);
        assert_eq!(t.count(&ids(&t, &["b", END_TOKEN])), 1);
        assert_eq!(t.distinct(1), 3);
        assert_eq!(t.distinct(2), 3);
        assert_eq!(t.sentence_count(), 1);
        assert_eq!(t.predicted_total(), 3);
    }

    #[test]
    fn empty_line_is_a_degenerate_sentence() {
        let t = count_ngrams(
            Cursor::new("\n"),
            2,
            VocabPolicy::Closed,
            &CountOptions::default(),
        )
        .unwrap();
        assert_eq!(t.count(&ids(&t, &[END_TOKEN])), 1);
        assert_eq!(t.count(&ids(&t, &[BEGIN_TOKEN, END_TOKEN])), 1);
        assert_eq!(t.sentence_count(), 1);
    }

    #[test]
    fn concatenated_corpus_doubles_every_count() {
        let once = count_ngrams(
            Cursor::new("a b c\nb a\n"),
            3,
            VocabPolicy::Closed,
            &CountOptions::default(),
        )
        .unwrap();
        let twice = count_ngrams(
            Cursor::new("a b c\nb a\na b c\nb a\n"),
            3,
            VocabPolicy::Closed,
            &CountOptions::default(),
        )
        .unwrap();
        for order in 1..=3 {
            for (key, c) in once.ngrams(order) {
                assert_eq!(twice.count(key), 2 * c, "key {key:?}");
            }
            assert_eq!(once.distinct(order), twice.distinct(order));
        }
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            count_ngrams(
                Cursor::new(""),
                2,
                VocabPolicy::Closed,
                &CountOptions::default()
            ),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn over_long_line_is_reported() {
        let options = CountOptions { max_line_tokens: 3 };
        match count_ngrams(Cursor::new("a b c d\n"), 2, VocabPolicy::Closed, &options) {
            Err(Error::LineTooLong { line: 1, limit: 3 }) => {}
            other => panic!("expected line-too-long, got {other:?}"),
        }
    }

    #[test]
    fn reserved_tokens_in_corpus_are_rejected() {
        match count_ngrams(
            Cursor::new("a <s> b\n"),
            2,
            VocabPolicy::Closed,
            &CountOptions::default(),
        ) {
            Err(Error::ReservedToken { token, line: 1 }) => assert_eq!(token, "<s>"),
            other => panic!("expected reserved-token error, got {other:?}"),
        }
    }

    #[test]
    fn mid_sentence_histories_are_consistent() {
        let t = count_ngrams(
            Cursor::new("a b a b\nb a b\na a\n"),
            2,
            VocabPolicy::Closed,
            &CountOptions::default(),
        )
        .unwrap();
        let end = t.vocab().end().unwrap();
        // For every history other than the end token, the continuation total
        // matches its unigram count (every occurrence is followed by a word
        // or the end token). History counts at sentence starts come from the
        // sentence count.
        for (key, count) in t.ngrams(1).collect::<Vec<_>>() {
            if key[0] == end {
                continue;
            }
            let total: u64 = t.continuations(key).map(|(_, c)| c).sum();
            assert_eq!(total, count, "history {key:?}");
        }
        let begin = t.vocab().begin().unwrap();
        let begin_total: u64 = t.continuations(&[begin]).map(|(_, c)| c).sum();
        assert_eq!(begin_total, t.sentence_count());
        assert_eq!(t.history_count(&[begin]), Some(3));
    }

    #[test]
    fn count_of_counts_matches_definition() {
        let t = count_ngrams(
            Cursor::new("a a a b b c\n"),
            1,
            VocabPolicy::Closed,
            &CountOptions::default(),
        )
        .unwrap();
        // a:3, b:2, c:1, </s>:1 -> n_1 = 2, n_2 = 1, n_3 = 1
        let coc = t.count_of_counts(1);
        assert_eq!(coc.get(&1), Some(&2));
        assert_eq!(coc.get(&2), Some(&1));
        assert_eq!(coc.get(&3), Some(&1));
    }

    #[test]
    fn open_unk_reserves_the_unk_token() {
        let t = count_ngrams(
            Cursor::new("a b\n"),
            2,
            VocabPolicy::OpenUnk,
            &CountOptions::default(),
        )
        .unwrap();
        let unk = t.vocab().unk().expect("unk reserved");
        assert_eq!(t.count(&[unk]), 0);
    }
}
