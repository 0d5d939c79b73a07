//! Corpora sampled from a known interpolated trigram source.
//!
//! The source mixes three randomly parameterized components with weights
//! `lambda*`: a Zipf unigram over the vocabulary, a sparse bigram table and a
//! sparse trigram table. Conditional tables are derived lazily from a
//! per-context ChaCha stream, so a context's distribution does not depend on
//! the order in which contexts are first visited. Sentence lengths are drawn
//! independently of the words.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::mixture::WeightVector;

const BIGRAM_SUPPORT: usize = 10;
const TRIGRAM_SUPPORT: usize = 4;
const MAX_SENTENCE_LENGTH: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub vocab_size: usize,
    /// Unigram, bigram and trigram mixing weights.
    pub weights: WeightVector,
    pub sentences: usize,
    pub seed: u64,
    /// Mean sentence length in words (geometric, at least 1).
    pub mean_length: f64,
}

impl SyntheticSpec {
    pub fn new(vocab_size: usize, weights: WeightVector, sentences: usize, seed: u64) -> Self {
        SyntheticSpec {
            vocab_size,
            weights,
            sentences,
            seed,
            mean_length: 12.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vocab_size < TRIGRAM_SUPPORT.max(BIGRAM_SUPPORT) {
            return Err(Error::usage(format!(
                "synthetic vocabulary needs at least {BIGRAM_SUPPORT} words"
            )));
        }
        if self.weights.len() != 3 {
            return Err(Error::usage("synthetic source is a trigram mixture: give 3 weights"));
        }
        if self.sentences == 0 {
            return Err(Error::usage("synthetic corpus needs at least one sentence"));
        }
        if !(self.mean_length >= 1.0 && self.mean_length.is_finite()) {
            return Err(Error::usage("mean sentence length must be at least 1"));
        }
        Ok(())
    }
}

/// Sparse categorical distribution over word indices.
struct Sparse {
    words: Vec<usize>,
    cumulative: Vec<f64>,
}

impl Sparse {
    fn random(rng: &mut ChaCha8Rng, vocab: usize, support: usize) -> Self {
        let mut words: Vec<usize> = Vec::with_capacity(support);
        while words.len() < support {
            let w = rng.random_range(0..vocab);
            if !words.contains(&w) {
                words.push(w);
            }
        }
        let weights: Vec<f64> = (0..support)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        Self::from_weights(words, &weights)
    }

    fn from_weights(words: Vec<usize>, weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Sparse { words, cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let k = self.cumulative.partition_point(|&c| c <= u);
        self.words[k.min(self.words.len() - 1)]
    }
}

struct Source {
    vocab: usize,
    seed: u64,
    unigram: Sparse,
    bigrams: HashMap<usize, Sparse>,
    trigrams: HashMap<(usize, usize), Sparse>,
}

impl Source {
    fn new(vocab: usize, seed: u64) -> Self {
        let mut rng = Self::stream(seed, 1);
        let mut ranks: Vec<usize> = (0..vocab).collect();
        for i in (1..vocab).rev() {
            ranks.swap(i, rng.random_range(0..=i));
        }
        let weights: Vec<f64> = (0..vocab).map(|r| 1.0 / (r + 1) as f64).collect();
        Source {
            vocab,
            seed,
            unigram: Sparse::from_weights(ranks, &weights),
            bigrams: HashMap::new(),
            trigrams: HashMap::new(),
        }
    }

    fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }

    /// Context indices run over `0..=vocab`, where `vocab` stands for `<s>`.
    fn bigram(&mut self, prev: usize) -> &Sparse {
        let (vocab, seed) = (self.vocab, self.seed);
        self.bigrams.entry(prev).or_insert_with(|| {
            let mut rng = Self::stream(seed, 2 + prev as u64);
            Sparse::random(&mut rng, vocab, BIGRAM_SUPPORT)
        })
    }

    fn trigram(&mut self, prev2: usize, prev1: usize) -> &Sparse {
        let (vocab, seed) = (self.vocab, self.seed);
        self.trigrams.entry((prev2, prev1)).or_insert_with(|| {
            let contexts = (vocab + 1) as u64;
            let id = 2 + contexts + prev2 as u64 * contexts + prev1 as u64;
            let mut rng = Self::stream(seed, id);
            Sparse::random(&mut rng, vocab, TRIGRAM_SUPPORT)
        })
    }
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut source = Source::new(spec.vocab_size, spec.seed);
    let mut rng = Source::stream(spec.seed, 0);
    let w = spec.weights.as_slice();
    let stop = 1.0 / spec.mean_length;
    let bos = spec.vocab_size;
    let mut lines = Vec::with_capacity(spec.sentences);
    for _ in 0..spec.sentences {
        let mut length = 1;
        while length < MAX_SENTENCE_LENGTH && rng.random::<f64>() >= stop {
            length += 1;
        }
        let (mut prev2, mut prev1) = (bos, bos);
        let mut words = Vec::with_capacity(length);
        for _ in 0..length {
            let u: f64 = rng.random();
            let word = if u < w[0] {
                source.unigram.sample(&mut rng)
            } else if u < w[0] + w[1] {
                source.bigram(prev1).sample(&mut rng)
            } else {
                source.trigram(prev2, prev1).sample(&mut rng)
            };
            words.push(format!("w{word}"));
            prev2 = prev1;
            prev1 = word;
        }
        lines.push(words);
    }
    Ok(Corpus::from_token_lines(lines, "synthetic"))
}
