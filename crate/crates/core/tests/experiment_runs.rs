use std::fs;

use interp_lp::corpus::{Corpus, FoldPlan};
use interp_lp::experiment::{
    emit_report, fold_data, generate_synthetic_corpus, run_experiment, ExperimentConfig,
    MethodKind, SyntheticSpec,
};
use interp_lp::mixture::{perplexity, WeightVector};
use interp_lp::ngram::NgramModel;

fn corpus() -> Corpus {
    let w = WeightVector::new(vec![0.2, 0.5, 0.3]).unwrap();
    generate_synthetic_corpus(&SyntheticSpec::new(60, w, 600, 3)).unwrap()
}

fn config() -> ExperimentConfig {
    ExperimentConfig {
        k: 4,
        seed: 17,
        random_samples: 100,
        methods: vec![
            MethodKind::Grid,
            MethodKind::Random,
            MethodKind::LpReduced,
            MethodKind::Exact,
        ],
        ..ExperimentConfig::default()
    }
}

#[test]
fn fold_models_see_only_training_sentences() {
    let corpus = corpus();
    let cfg = config();
    let report = run_experiment(&corpus, &cfg).unwrap();
    let plan = FoldPlan::new(corpus.len(), cfg.k, cfg.seed).unwrap();
    for summary in &report.folds {
        let data = fold_data(&corpus, &plan, summary.fold, cfg.train_fraction).unwrap();
        let model = NgramModel::train(&data.train, cfg.max_order, &cfg.thresholds).unwrap();
        assert_eq!(model.digest(), summary.model_digest);
        assert_eq!(
            data.train.len() + data.validation.len() + data.test.len(),
            corpus.len()
        );
        let train: std::collections::HashSet<_> = plan.complement(summary.fold).into_iter().collect();
        assert!(plan.members(summary.fold).iter().all(|i| !train.contains(i)));
    }
}

#[test]
fn reported_perplexities_recompute_from_weights() {
    let corpus = corpus();
    let cfg = config();
    let report = run_experiment(&corpus, &cfg).unwrap();
    let plan = FoldPlan::new(corpus.len(), cfg.k, cfg.seed).unwrap();
    for fold in 0..cfg.k {
        let data = fold_data(&corpus, &plan, fold, cfg.train_fraction).unwrap();
        let model = NgramModel::train(&data.train, cfg.max_order, &cfg.thresholds).unwrap();
        let test = model.probability_matrix(&data.test);
        let val = model.probability_matrix(&data.validation);
        for rec in report.records.iter().filter(|r| r.fold == fold) {
            assert_eq!(perplexity(&test, &rec.weights).unwrap().value, rec.test_perplexity);
            assert_eq!(perplexity(&val, &rec.weights).unwrap().value, rec.validation_perplexity);
        }
    }
}

#[test]
fn runs_and_files_are_reproducible() {
    let corpus = corpus();
    let cfg = config();
    let a = run_experiment(&corpus, &cfg).unwrap();
    let b = run_experiment(&corpus, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    let da = tempfile::tempdir().unwrap();
    let db = tempfile::tempdir().unwrap();
    emit_report(&a, da.path()).unwrap();
    emit_report(&b, db.path()).unwrap();
    for name in ["report.json", "summary.csv", "boxplot.csv"] {
        let x = fs::read(da.path().join(name)).unwrap();
        let y = fs::read(db.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
        assert!(!x.contains(&b'\r'));
    }
    let timings = fs::read_to_string(da.path().join("timings.csv")).unwrap();
    assert_eq!(timings.lines().count(), 1 + a.records.len());
}

#[test]
fn exact_selection_is_best_on_validation() {
    let report = run_experiment(&corpus(), &config()).unwrap();
    for fold in 0..4 {
        let recs: Vec<_> = report.records.iter().filter(|r| r.fold == fold).collect();
        let exact = recs.iter().find(|r| r.method == "exact").unwrap();
        for r in &recs {
            assert!(exact.validation_perplexity <= r.validation_perplexity + 1e-6, "{}", r.method);
        }
    }
}

#[test]
fn report_json_round_trips() {
    let report = run_experiment(&corpus(), &config()).unwrap();
    let text = serde_json::to_string_pretty(&report).unwrap();
    let back: interp_lp::experiment::ExperimentReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
}

