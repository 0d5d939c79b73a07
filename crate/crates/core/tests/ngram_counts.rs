use std::collections::HashMap;

use interp_lp::corpus::Corpus;
use interp_lp::ngram::{persist, NgramModel, VocabId};
use proptest::prelude::*;

const TEXT: &str = "the cat sat on the mat\nthe dog sat on the log\na cat and a dog\nthe cat ate\n";

/// Marked sentences as plain strings.
fn marked(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut s = vec!["<s>".to_string()];
            s.extend(l.split_whitespace().map(str::to_string));
            s.push("</s>".to_string());
            s
        })
        .collect()
}

/// Independent window counts keyed by joined strings.
fn brute_counts(sentences: &[Vec<String>], order: usize) -> HashMap<Vec<String>, u64> {
    let mut counts = HashMap::new();
    for s in sentences {
        for w in s.windows(order) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

fn ids(model: &NgramModel, words: &[&str]) -> Vec<VocabId> {
    words.iter().map(|w| model.vocabulary().lookup(w)).collect()
}

#[test]
fn mle_matches_brute_force_ratios() {
    let corpus = Corpus::from_text(TEXT.as_bytes(), "t").unwrap();
    let model = NgramModel::train(&corpus, 3, &[1, 1, 1]).unwrap();
    let sentences = marked(TEXT);
    for order in 1..=3 {
        let counts = brute_counts(&sentences, order);
        let mut context_totals: HashMap<Vec<String>, u64> = HashMap::new();
        for (k, c) in &counts {
            *context_totals.entry(k[..order - 1].to_vec()).or_insert(0) += c;
        }
        if order == 1 {
            // `<unk>` never appears in training text and carries one pseudo-count.
            *context_totals.get_mut(&Vec::new()).unwrap() += 1;
        }
        for (key, count) in &counts {
            let words: Vec<&str> = key.iter().map(String::as_str).collect();
            let v = ids(&model, &words);
            let expected = *count as f64 / context_totals[&key[..order - 1].to_vec()] as f64;
            let got = model.mle_prob(order, v[order - 1], &v[..order - 1]).unwrap();
            assert!((got - expected).abs() < 1e-15, "{key:?}: {got} vs {expected}");
        }
    }
    // "the cat" is followed by "sat" once and "ate" once.
    let v = ids(&model, &["the", "cat", "sat"]);
    assert_eq!(model.mle_prob(3, v[2], &v[..2]).unwrap(), 0.5);
}

#[test]
fn batch_matrix_agrees_with_scalar_queries() {
    let corpus = Corpus::from_text(TEXT.as_bytes(), "t").unwrap();
    let model = NgramModel::train(&corpus, 3, &[1, 2, 1]).unwrap();
    let eval = Corpus::from_text(b"the cat sat on a log\nzebra cat ate\n", "e").unwrap();
    let matrix = model.probability_matrix(&eval);
    assert_eq!(matrix.n_rows(), eval.word_count());
    for (i, &(s, pos)) in matrix.positions().iter().enumerate() {
        let words = eval.sentence_strings(s);
        let v = ids(&model, &words);
        for order in 1..=3 {
            let expected = if pos + 1 >= order {
                model
                    .mle_prob(order, v[pos], &v[pos + 1 - order..pos])
                    .unwrap()
            } else {
                0.0
            };
            assert_eq!(matrix.get(i, order - 1), expected, "row {i} order {order}");
        }
    }
}

#[test]
fn persisted_model_scores_identically() {
    let corpus = Corpus::from_text(TEXT.as_bytes(), "t").unwrap();
    let model = NgramModel::train(&corpus, 3, &[1, 1, 2]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    persist::save(&model, dir.path(), Some(9)).unwrap();
    let (loaded, header) = persist::load(dir.path()).unwrap();
    assert_eq!(header.seed, Some(9));
    assert_eq!(loaded.digest(), model.digest());
    let eval = Corpus::from_text(b"the cat sat on the log\n", "e").unwrap();
    assert_eq!(loaded.probability_matrix(&eval), model.probability_matrix(&eval));
}

fn small_corpus() -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(prop::collection::vec(0u8..6, 1..8), 1..25)
}

fn to_corpus(lines: &[Vec<u8>]) -> Corpus {
    let lines = lines
        .iter()
        .map(|l| l.iter().map(|w| format!("w{w}")).collect::<Vec<_>>());
    Corpus::from_token_lines(lines, "p")
}

proptest! {
    #[test]
    fn conditional_estimates_sum_to_at_most_one(
        lines in small_corpus(),
        thresholds in prop::collection::vec(1u64..4, 3),
    ) {
        let corpus = to_corpus(&lines);
        let model = NgramModel::train(&corpus, 3, &thresholds).unwrap();
        let vocab_len = model.vocabulary().len() as u32;
        for order in 1..=3 {
            let contexts: Vec<Vec<u32>> = model
                .table(order)
                .sorted_context_totals()
                .into_iter()
                .map(|(k, _)| k.to_vec())
                .collect();
            for ctx in contexts {
                let ctx: Vec<VocabId> = ctx.into_iter().map(VocabId).collect();
                let total: f64 = (0..vocab_len)
                    .map(|t| model.mle_prob(order, VocabId(t), &ctx).unwrap())
                    .sum();
                prop_assert!(total <= 1.0 + 1e-12, "order {} context {:?}: {}", order, ctx, total);
                if thresholds[order - 1] == 1 && order > 1 {
                    prop_assert!((total - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn matrix_entries_are_probabilities(lines in small_corpus(), eval in small_corpus()) {
        let model = NgramModel::train(&to_corpus(&lines), 3, &[1, 1, 1]).unwrap();
        let matrix = model.probability_matrix(&to_corpus(&eval));
        for row in matrix.rows() {
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!(row[0] > 0.0);
        }
    }
}
