//! Thresholded n-gram count tables and their maximum-likelihood estimates.
//!
//! Counting runs over every contiguous window inside a sentence, boundary
//! markers included. Context totals are the pre-threshold sums of all
//! continuations of a context, so thresholding removes probability mass but
//! never pushes an estimate above 1.

mod matrix;
pub mod persist;

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, BOS, EOS};
use crate::error::{Error, Result};

pub use matrix::ProbabilityMatrix;

pub const UNK: &str = "<unk>";

/// Index into a model [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VocabId(pub u32);

impl VocabId {
    pub const UNK: VocabId = VocabId(0);
    pub const BOS: VocabId = VocabId(1);
    pub const EOS: VocabId = VocabId(2);
}

/// Model vocabulary. Ids 0..3 are `<unk>`, `<s>`, `</s>`; the remaining ids
/// are the training words with unigram count >= `min_unigram_count`, ordered
/// by descending count then lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, VocabId>,
    min_unigram_count: u64,
}

impl Vocabulary {
    pub(crate) fn from_tokens(tokens: Vec<String>, min_unigram_count: u64) -> Result<Self> {
        if tokens.len() < 3 || tokens[0] != UNK || tokens[1] != BOS || tokens[2] != EOS {
            return Err(Error::Training(
                "vocabulary must start with <unk>, <s>, </s>".into(),
            ));
        }
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), VocabId(i as u32)))
            .collect::<HashMap<_, _>>();
        if ids.len() != tokens.len() {
            return Err(Error::Training("duplicate vocabulary entry".into()));
        }
        Ok(Vocabulary {
            tokens,
            ids,
            min_unigram_count,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Vocabulary size excluding `<unk>` and the boundary markers.
    pub fn word_count(&self) -> usize {
        self.tokens.len() - 3
    }

    pub fn unk_id(&self) -> VocabId {
        VocabId::UNK
    }

    pub fn min_unigram_count(&self) -> u64 {
        self.min_unigram_count
    }

    pub fn token(&self, id: VocabId) -> &str {
        &self.tokens[id.0 as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of `word`, or `<unk>` when it is not in the vocabulary.
    pub fn lookup(&self, word: &str) -> VocabId {
        self.ids.get(word).copied().unwrap_or(VocabId::UNK)
    }

    /// Translation table from a corpus lexicon to this vocabulary.
    fn map_lexicon(&self, corpus: &Corpus) -> Vec<u32> {
        let lexicon = corpus.lexicon();
        (0..lexicon.len())
            .map(|i| self.lookup(lexicon.word(crate::corpus::TokenId(i as u32))).0)
            .collect()
    }
}

/// Counts of all `order`-grams that survived thresholding, plus the
/// pre-threshold totals of every context of length `order - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    order: usize,
    counts: HashMap<Box<[u32]>, u64>,
    context_totals: HashMap<Box<[u32]>, u64>,
}

impl CountTable {
    fn empty(order: usize) -> Self {
        CountTable {
            order,
            counts: HashMap::new(),
            context_totals: HashMap::new(),
        }
    }

    pub(crate) fn from_parts(
        order: usize,
        counts: HashMap<Box<[u32]>, u64>,
        context_totals: HashMap<Box<[u32]>, u64>,
    ) -> Self {
        CountTable {
            order,
            counts,
            context_totals,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, key: &[VocabId]) -> u64 {
        let key: Vec<u32> = key.iter().map(|v| v.0).collect();
        self.count_raw(&key)
    }

    pub fn context_total(&self, context: &[VocabId]) -> u64 {
        let key: Vec<u32> = context.iter().map(|v| v.0).collect();
        self.context_totals.get(key.as_slice()).copied().unwrap_or(0)
    }

    fn count_raw(&self, key: &[u32]) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// Entries sorted by key.
    pub fn sorted_counts(&self) -> Vec<(&[u32], u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(k, &c)| (&**k, c)).collect();
        v.sort_unstable();
        v
    }

    pub fn sorted_context_totals(&self) -> Vec<(&[u32], u64)> {
        let mut v: Vec<_> = self.context_totals.iter().map(|(k, &c)| (&**k, c)).collect();
        v.sort_unstable();
        v
    }

    fn mle(&self, key: &[u32]) -> f64 {
        let count = self.count_raw(key);
        if count == 0 {
            return 0.0;
        }
        let context = &key[..key.len() - 1];
        match self.context_totals.get(context) {
            Some(&total) if total > 0 => count as f64 / total as f64,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    max_order: usize,
    vocabulary: Vocabulary,
    tables: Vec<CountTable>,
    thresholds: Vec<u64>,
    corpus_hash: String,
}

impl NgramModel {
    /// Counts all n-grams up to `max_order` and drops those below their
    /// order's threshold. Words below the unigram threshold are replaced by
    /// `<unk>` before any higher-order counting. The unigram entries of
    /// `<unk>` and the markers are never thresholded away; if no training
    /// token maps to `<unk>` it receives a pseudo-count of 1 so that every
    /// evaluation token has a positive unigram estimate.
    pub fn train(corpus: &Corpus, max_order: usize, thresholds: &[u64]) -> Result<Self> {
        if max_order == 0 {
            return Err(Error::Training("max order must be at least 1".into()));
        }
        if thresholds.len() != max_order {
            return Err(Error::Training(format!(
                "{} thresholds given for max order {max_order}",
                thresholds.len()
            )));
        }
        if corpus.is_empty() {
            return Err(Error::Training("training corpus is empty".into()));
        }

        let lexicon = corpus.lexicon();
        let mut raw = vec![0u64; lexicon.len()];
        for s in corpus.sentences() {
            for t in s.tokens() {
                raw[t.index()] += 1;
            }
        }
        let min_unigram = thresholds[0].max(1);
        let mut kept: Vec<(u64, &str)> = (2..lexicon.len())
            .filter(|&i| raw[i] >= min_unigram)
            .map(|i| (raw[i], lexicon.word(crate::corpus::TokenId(i as u32))))
            .filter(|(_, w)| *w != UNK)
            .collect();
        kept.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        let mut tokens = vec![UNK.to_string(), BOS.to_string(), EOS.to_string()];
        tokens.extend(kept.into_iter().map(|(_, w)| w.to_string()));
        let vocabulary = Vocabulary::from_tokens(tokens, min_unigram)?;

        let map = vocabulary.map_lexicon(corpus);
        let mapped: Vec<Vec<u32>> = corpus
            .sentences()
            .iter()
            .map(|s| s.tokens().iter().map(|t| map[t.index()]).collect())
            .collect();

        let mut tables = Vec::with_capacity(max_order);
        for order in 1..=max_order {
            let mut table = CountTable::empty(order);
            for sentence in &mapped {
                for window in sentence.windows(order) {
                    *table.counts.entry(window.into()).or_insert(0) += 1;
                    *table
                        .context_totals
                        .entry(window[..order - 1].into())
                        .or_insert(0) += 1;
                }
            }
            if order == 1 {
                let unk: Box<[u32]> = Box::new([VocabId::UNK.0]);
                if let Entry::Vacant(e) = table.counts.entry(unk) {
                    e.insert(1);
                    *table.context_totals.entry(Box::new([])).or_insert(0) += 1;
                }
            }
            let minimum = thresholds[order - 1];
            table.counts.retain(|key, count| {
                *count >= minimum || (order == 1 && key[0] <= VocabId::EOS.0)
            });
            tables.push(table);
        }

        Ok(NgramModel {
            max_order,
            vocabulary,
            tables,
            thresholds: thresholds.to_vec(),
            corpus_hash: corpus.content_hash(),
        })
    }

    pub(crate) fn from_parts(
        vocabulary: Vocabulary,
        tables: Vec<CountTable>,
        thresholds: Vec<u64>,
        corpus_hash: String,
    ) -> Self {
        NgramModel {
            max_order: tables.len(),
            vocabulary,
            tables,
            thresholds,
            corpus_hash,
        }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn thresholds(&self) -> &[u64] {
        &self.thresholds
    }

    pub fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }

    /// Table for order `j` (1-based).
    pub fn table(&self, order: usize) -> &CountTable {
        &self.tables[order - 1]
    }

    pub fn table_sizes(&self) -> Vec<usize> {
        self.tables.iter().map(CountTable::len).collect()
    }

    /// `C(context target) / C(context)` at the given order, or 0 when either
    /// the n-gram or its context is unknown.
    pub fn mle_prob(&self, order: usize, target: VocabId, context: &[VocabId]) -> Result<f64> {
        if order == 0 || order > self.max_order {
            return Err(Error::usage(format!(
                "order {order} outside 1..={}",
                self.max_order
            )));
        }
        if context.len() != order - 1 {
            return Err(Error::usage(format!(
                "order {order} needs a context of {} tokens, got {}",
                order - 1,
                context.len()
            )));
        }
        let key: Vec<u32> = context.iter().chain([&target]).map(|v| v.0).collect();
        Ok(self.tables[order - 1].mle(&key))
    }

    /// One row per scored token (every token strictly between the markers),
    /// in text order. Column `j` holds the order `j + 1` estimate; windows
    /// that would reach before the sentence start get 0.
    pub fn probability_matrix(&self, text: &Corpus) -> ProbabilityMatrix {
        let map = self.vocabulary.map_lexicon(text);
        let n = self.max_order;
        let mut data = Vec::with_capacity(text.word_count() * n);
        let mut positions = Vec::with_capacity(text.word_count());
        let mut ids = Vec::new();
        for (s_idx, sentence) in text.sentences().iter().enumerate() {
            ids.clear();
            ids.extend(sentence.tokens().iter().map(|t| map[t.index()]));
            for pos in 1..ids.len() - 1 {
                for order in 1..=n {
                    let p = if pos + 1 >= order {
                        self.tables[order - 1].mle(&ids[pos + 1 - order..=pos])
                    } else {
                        0.0
                    };
                    data.push(p);
                }
                positions.push((s_idx, pos));
            }
        }
        ProbabilityMatrix::new(n, data, positions)
            .expect("count ratios are probabilities and rows are complete")
    }

    /// SHA-256 over the vocabulary and all sorted tables.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for t in self.vocabulary.tokens() {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        for table in &self.tables {
            hasher.update((table.order as u64).to_le_bytes());
            for (key, count) in table.sorted_counts() {
                for id in key {
                    hasher.update(id.to_le_bytes());
                }
                hasher.update(count.to_le_bytes());
            }
            for (key, total) in table.sorted_context_totals() {
                for id in key {
                    hasher.update(id.to_le_bytes());
                }
                hasher.update(total.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}
