mod common;

use common::{direct_log_perplexity, direct_perplexity, naive_grid_3, random_matrix, rng};
use interp_lp::grid::{grid_search, random_search, GridConfig};
use interp_lp::mixture::{mixture_prob, perplexity, WeightVector};
use interp_lp::ngram::ProbabilityMatrix;
use proptest::prelude::*;

fn matrix_strategy(max_rows: usize) -> impl Strategy<Value = ProbabilityMatrix> {
    (1..=max_rows, 1usize..=4).prop_flat_map(|(rows, cols)| {
        prop::collection::vec(prop::collection::vec(0.0f64..=1.0, cols), rows)
            .prop_map(|r| ProbabilityMatrix::from_rows(&r).unwrap())
    })
}

fn weights_strategy(n: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(0.001f64..1.0, n).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        WeightVector::cleaned(&raw.iter().map(|x| x / s).collect::<Vec<_>>()).unwrap()
    })
}

proptest! {
    #[test]
    fn mixture_lies_between_component_extremes(
        (row, w) in (1usize..=5).prop_flat_map(|n| (prop::collection::vec(0.0f64..=1.0, n), weights_strategy(n)))
    ) {
        let p = mixture_prob(&row, &w).unwrap();
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
    }

    #[test]
    fn log_space_matches_direct_product(
        (m, w) in matrix_strategy(20).prop_flat_map(|m| { let n = m.n_cols(); (Just(m), weights_strategy(n)) })
    ) {
        let direct = direct_perplexity(&m, w.as_slice());
        let ppl = perplexity(&m, &w).unwrap();
        if direct.is_finite() && direct < 1e300 {
            prop_assert!(((ppl.value - direct) / direct).abs() < 1e-9, "{} vs {}", ppl.value, direct);
        } else if direct.is_infinite() {
            prop_assert!(!ppl.is_finite() || ppl.value > 1e300);
        }
    }

    #[test]
    fn raising_every_probability_lowers_perplexity(
        (m, w) in matrix_strategy(30).prop_flat_map(|m| { let n = m.n_cols(); (Just(m), weights_strategy(n)) }),
        bump in 0.0f64..0.5,
    ) {
        let rows: Vec<Vec<f64>> = m.rows().map(|r| r.iter().map(|p| p + (1.0 - p) * bump).collect()).collect();
        let higher = ProbabilityMatrix::from_rows(&rows).unwrap();
        let before = perplexity(&m, &w).unwrap().value;
        let after = perplexity(&higher, &w).unwrap().value;
        prop_assert!(after <= before * (1.0 + 1e-12));
        prop_assert!(after >= 1.0 - 1e-12);
    }
}

#[test]
fn grid_matches_naive_double_loop() {
    let mut r = rng(11);
    for _ in 0..30 {
        let m = random_matrix(&mut r, 10, 3, 0.3);
        let got = grid_search(&m, &GridConfig::new(0.1, 3).unwrap()).unwrap();
        let (_, ppl, count) = naive_grid_3(&m, 10);
        assert_eq!(got.points_evaluated as usize, count);
        if ppl.is_finite() {
            assert!((got.perplexity.value - ppl).abs() <= 1e-9 * ppl);
            let got_ppl = direct_log_perplexity(&m, got.weights.as_slice());
            assert!((got_ppl - ppl).abs() <= 1e-9 * ppl);
        } else {
            assert!(!got.perplexity.is_finite());
        }
    }
}

#[test]
fn finer_grid_never_loses() {
    let mut r = rng(12);
    for _ in 0..20 {
        let m = random_matrix(&mut r, 15, 3, 0.2);
        let coarse = grid_search(&m, &GridConfig::new(0.1, 3).unwrap()).unwrap();
        let fine = grid_search(&m, &GridConfig::new(0.05, 3).unwrap()).unwrap();
        // The 0.05 lattice contains the 0.1 lattice.
        assert!(fine.perplexity.value <= coarse.perplexity.value * (1.0 + 1e-12));
    }
}

#[test]
fn random_search_is_seeded() {
    let mut r = rng(13);
    let m = random_matrix(&mut r, 40, 3, 0.1);
    let a = random_search(&m, 200, 5).unwrap();
    let b = random_search(&m, 200, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.points_evaluated, 203);
}
