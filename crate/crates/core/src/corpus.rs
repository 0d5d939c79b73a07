//! Text ingestion, tokenization and seeded partitioning of sentence corpora.
//!
//! Every sentence is stored as a sequence of [`TokenId`]s into a shared
//! [`Lexicon`], framed by the `<s>` and `</s>` markers. Sub-corpora produced by
//! [`split`] and [`FoldPlan`] share the parent's lexicon.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Index of a token string in a [`Lexicon`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const BOS: TokenId = TokenId(0);
    pub const EOS: TokenId = TokenId(1);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Interned token strings. Ids 0 and 1 are always `<s>` and `</s>`.
#[derive(Debug, Clone)]
pub struct Lexicon {
    words: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Default for Lexicon {
    fn default() -> Self {
        let mut lexicon = Lexicon {
            words: Vec::new(),
            ids: HashMap::new(),
        };
        lexicon.intern(BOS);
        lexicon.intern(EOS);
        lexicon
    }
}

impl Lexicon {
    fn intern(&mut self, word: &str) -> TokenId {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = TokenId(self.words.len() as u32);
        self.words.push(word.to_owned());
        self.ids.insert(word.to_owned(), id);
        id
    }

    pub fn word(&self, id: TokenId) -> &str {
        &self.words[id.index()]
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.ids.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// One tokenized line: `<s> w1 ... wk </s>` with k >= 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Arc<[TokenId]>,
}

impl Sentence {
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    /// Tokens between the boundary markers.
    pub fn words(&self) -> &[TokenId] {
        &self.tokens[1..self.tokens.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    lexicon: Arc<Lexicon>,
    source_label: String,
}

impl Corpus {
    /// Tokenizes UTF-8 text with one sentence per line.
    pub fn from_text(raw: &[u8], source_label: impl Into<String>) -> Result<Self> {
        Ok(Self::from_token_lines(tokenize(raw)?, source_label))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&raw, path.display().to_string())
    }

    /// Builds a corpus from already tokenized sentences (without markers).
    /// Empty sentences are dropped.
    pub fn from_token_lines<I, S, W>(lines: I, source_label: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = W>,
        W: AsRef<str>,
    {
        let mut lexicon = Lexicon::default();
        let mut sentences = Vec::new();
        for line in lines {
            let mut tokens = vec![TokenId::BOS];
            tokens.extend(line.into_iter().map(|w| lexicon.intern(w.as_ref())));
            if tokens.len() == 1 {
                continue;
            }
            tokens.push(TokenId::EOS);
            sentences.push(Sentence {
                tokens: tokens.into(),
            });
        }
        Corpus {
            sentences,
            lexicon: Arc::new(lexicon),
            source_label: source_label.into(),
        }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    /// Number of tokens between boundary markers, summed over sentences.
    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(|s| s.words().len()).sum()
    }

    /// Token strings of sentence `i`, markers included.
    pub fn sentence_strings(&self, i: usize) -> Vec<&str> {
        self.sentences[i]
            .tokens()
            .iter()
            .map(|&t| self.lexicon.word(t))
            .collect()
    }

    /// Sub-corpus with the given sentence indices, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            sentences: indices.iter().map(|&i| self.sentences[i].clone()).collect(),
            lexicon: Arc::clone(&self.lexicon),
            source_label: self.source_label.clone(),
        }
    }

    /// SHA-256 over the token strings, one sentence per line.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for i in 0..self.sentences.len() {
            hasher.update(self.sentence_strings(i).join(" ").as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Writes the corpus back out as one space-separated sentence per line,
    /// without boundary markers.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.sentences {
            let words: Vec<&str> = s.words().iter().map(|&t| self.lexicon.word(t)).collect();
            writeln!(out, "{}", words.join(" "))?;
        }
        Ok(())
    }
}

fn is_punctuation(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Tokens of a single line: NFC, lowercase, whitespace split, punctuation
/// trimmed from both ends of each token. No boundary markers.
pub fn tokenize_line(line: &str) -> Vec<String> {
    let normalized: String = line.nfc().collect::<String>().to_lowercase();
    normalized
        .split_whitespace()
        .map(|t| t.trim_matches(is_punctuation))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Splits raw text into lines and tokenizes each; lines without tokens are
/// dropped. Fails on invalid UTF-8 with the offset of the first bad byte.
pub fn tokenize(raw: &[u8]) -> Result<Vec<Vec<String>>> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Ingestion {
        offset: e.valid_up_to(),
    })?;
    Ok(text
        .lines()
        .map(tokenize_line)
        .filter(|t| !t.is_empty())
        .collect())
}

pub(crate) fn seeded_permutation(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Sizes of a three-way split of `n` sentences. Validation gets
/// `floor((n - train) / 2)`, test takes the remainder.
pub fn split_sizes(n: usize, train_frac: f64) -> Result<(usize, usize, usize)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Split(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    // Tolerate representation error such as 10 * 0.6 = 5.999...
    let train = ((n as f64) * train_frac + 1e-9).floor() as usize;
    let rest = n - train.min(n);
    let validation = rest / 2;
    let test = rest - validation;
    if train == 0 || validation == 0 || test == 0 {
        return Err(Error::Split(format!(
            "{n} sentences cannot populate train/validation/test at train fraction {train_frac}"
        )));
    }
    Ok((train, validation, test))
}

/// A train/validation/test partition with the parent indices of each part.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

pub fn split(corpus: &Corpus, train_frac: f64, seed: u64) -> Result<Split> {
    let (n_train, n_val, _) = split_sizes(corpus.len(), train_frac)?;
    let order = seeded_permutation(corpus.len(), seed, 0);
    let mut train_indices = order[..n_train].to_vec();
    let mut validation_indices = order[n_train..n_train + n_val].to_vec();
    let mut test_indices = order[n_train + n_val..].to_vec();
    train_indices.sort_unstable();
    validation_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Split {
        train: corpus.subset(&train_indices),
        validation: corpus.subset(&validation_indices),
        test: corpus.subset(&test_indices),
        train_indices,
        validation_indices,
        test_indices,
        seed,
    })
}

/// Assignment of every sentence to one of `k` folds of near-equal size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignments: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    /// Deals a seeded permutation of `n` sentences round-robin into `k` folds,
    /// so the first `n % k` folds receive one extra sentence.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Fold(format!("k must be at least 2, got {k}")));
        }
        if k > n {
            return Err(Error::Fold(format!(
                "k = {k} exceeds the sentence count {n}"
            )));
        }
        let mut assignments = vec![0; n];
        for (pos, idx) in seeded_permutation(n, seed, 0).into_iter().enumerate() {
            assignments[idx] = pos % k;
        }
        Ok(FoldPlan {
            k,
            assignments,
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// Sentence indices in fold `f`, ascending.
    pub fn members(&self, f: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a == f)
            .map(|(i, _)| i)
            .collect()
    }

    /// Sentence indices outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a != f)
            .map(|(i, _)| i)
            .collect()
    }

    /// CSV with header `sentence_index,fold`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        w.write_record(["sentence_index", "fold"])?;
        for (i, f) in self.assignments.iter().enumerate() {
            w.write_record([i.to_string(), f.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<fold plan>", e))?;
        Ok(())
    }
}

pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    FoldPlan::new(corpus.len(), k, seed)
}

impl fmt::Display for FoldPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} folds (seed {}): {:?}", self.k, self.seed, self.fold_sizes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus_of(n: usize) -> Corpus {
        Corpus::from_token_lines((0..n).map(|i| vec![format!("w{i}")]), "test")
    }

    #[test]
    fn tokenizes_with_markers() {
        let c = Corpus::from_text(b"The cat sat.", "t").unwrap();
        assert_eq!(c.sentence_strings(0), ["<s>", "the", "cat", "sat", "</s>"]);
    }

    #[test]
    fn collapses_whitespace_and_drops_empty_lines() {
        let c = Corpus::from_text(b"A  b\n\n   \n", "t").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentence_strings(0), ["<s>", "a", "b", "</s>"]);
        assert!(Corpus::from_text(b"", "t").unwrap().is_empty());
    }

    #[test]
    fn strips_only_outer_punctuation() {
        assert_eq!(
            tokenize_line("\u{201C}Don't!\u{201D} -- (e.g.) U.S."),
            ["don't", "e.g", "u.s"]
        );
        // Combining sequences normalize to the precomposed form.
        assert_eq!(tokenize_line("Cafe\u{0301}"), ["caf\u{e9}"]);
        assert!(tokenize("?! ...\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn invalid_utf8_reports_offset() {
        let err = tokenize(b"ok line\n\xffbad").unwrap_err();
        assert!(matches!(err, Error::Ingestion { offset: 8 }), "{err}");
    }

    #[test]
    fn split_sizes_follow_remainder_rule() {
        assert_eq!(split_sizes(10, 0.6).unwrap(), (6, 2, 2));
        assert_eq!(split_sizes(3, 0.6).unwrap(), (1, 1, 1));
        assert_eq!(split_sizes(11, 0.6).unwrap(), (6, 2, 3));
        assert!(matches!(split_sizes(2, 0.6), Err(Error::Split(_))));
        assert!(split_sizes(10, 1.0).is_err());
        assert!(split_sizes(10, 0.0).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let c = corpus_of(10);
        let a = split(&c, 0.6, 42).unwrap();
        let b = split(&c, 0.6, 42).unwrap();
        assert_eq!(a.train_indices, b.train_indices);
        assert_eq!(a.validation_indices, b.validation_indices);
        assert_eq!(a.test_indices, b.test_indices);
        assert_eq!(
            (a.train.len(), a.validation.len(), a.test.len()),
            (6, 2, 2)
        );
    }

    #[test]
    fn fold_sizes_examples() {
        let mut s = make_folds(&corpus_of(8), 4, 1).unwrap().fold_sizes();
        s.sort_unstable();
        assert_eq!(s, [2, 2, 2, 2]);
        let mut s = make_folds(&corpus_of(9), 4, 1).unwrap().fold_sizes();
        s.sort_unstable();
        assert_eq!(s, [2, 2, 2, 3]);
        let big = FoldPlan::new(2_360_148, 32, 0).unwrap().fold_sizes();
        assert!(big.iter().all(|&s| s == 73754 || s == 73755));
        assert_eq!(big.iter().sum::<usize>(), 2_360_148);
    }

    #[test]
    fn fold_errors() {
        assert!(matches!(make_folds(&corpus_of(3), 4, 0), Err(Error::Fold(_))));
        assert!(matches!(make_folds(&corpus_of(3), 1, 0), Err(Error::Fold(_))));
    }

    #[test]
    fn fold_csv_layout() {
        let plan = FoldPlan::new(3, 2, 5).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "sentence_index,fold");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], format!("0,{}", plan.assignments()[0]));
    }

    proptest! {
        #[test]
        fn split_partitions_corpus(n in 3usize..200, frac in 0.05f64..0.95, seed: u64) {
            let c = corpus_of(n);
            if let Ok(s) = split(&c, frac, seed) {
                let mut all: Vec<usize> = s.train_indices.iter()
                    .chain(&s.validation_indices)
                    .chain(&s.test_indices)
                    .copied()
                    .collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert!(s.test.len() >= s.validation.len());
            }
        }

        #[test]
        fn folds_are_balanced(n in 2usize..500, k in 2usize..40, seed: u64) {
            prop_assume!(k <= n);
            let plan = FoldPlan::new(n, k, seed).unwrap();
            let sizes = plan.fold_sizes();
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            prop_assert!(max - min <= 1);
            prop_assert!(plan.assignments().iter().all(|&f| f < k));
            prop_assert_eq!(plan, FoldPlan::new(n, k, seed).unwrap());
        }
    }
}
