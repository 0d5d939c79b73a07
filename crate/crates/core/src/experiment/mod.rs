//! K-fold comparison of weight-selection methods.
//!
//! For fold `f` the held-out test portion is fold `f` of a seeded
//! [`FoldPlan`]. The remaining sentences are shuffled (stream `f + 1` of the
//! experiment seed) and divided into training and validation parts in the
//! ratio `train_fraction : (1 - train_fraction) / 2`. Every method picks its
//! weights on the validation matrix; the reported metric is the perplexity of
//! those weights on the test portion.

mod synth;

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{seeded_permutation, Corpus, FoldPlan};
use crate::error::{Error, Result};
use crate::grid::{grid_search, random_search, GridConfig};
use crate::mixture::{f64_or_inf, perplexity, WeightVector};
use crate::ngram::{NgramModel, ProbabilityMatrix};
use crate::optimizer::{
    optimize_exact, optimize_lp_bounded, LpForm, OptimizationResult, DEFAULT_EXACT_TOLERANCE,
};

pub use synth::{generate_synthetic_corpus, SyntheticSpec};

pub const SD_DEFINITION: &str =
    "sample standard deviation (k - 1 denominator) over folds with finite test perplexity";
pub const SELECTION_PROTOCOL: &str =
    "weights selected on the validation portion; reported metric is test-portion perplexity";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Grid,
    Random,
    LpReduced,
    LpFull,
    Exact,
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(MethodKind::Grid),
            "random" => Ok(MethodKind::Random),
            "lp" | "lp_reduced" => Ok(MethodKind::LpReduced),
            "lp_full" => Ok(MethodKind::LpFull),
            "exact" => Ok(MethodKind::Exact),
            other => Err(Error::usage(format!(
                "unknown method {other:?} (grid, random, lp_reduced, lp_full, exact)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub max_order: usize,
    pub thresholds: Vec<u64>,
    pub k: usize,
    pub seed: u64,
    pub grid_steps: Vec<f64>,
    pub methods: Vec<MethodKind>,
    pub random_samples: usize,
    /// Per-weight lower bounds for the LP methods.
    pub epsilon: Option<Vec<f64>>,
    pub train_fraction: f64,
    pub exact_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            max_order: 3,
            thresholds: vec![1, 1, 1],
            k: 8,
            seed: 0,
            grid_steps: vec![0.1, 0.01],
            methods: vec![
                MethodKind::Grid,
                MethodKind::Random,
                MethodKind::LpReduced,
                MethodKind::Exact,
            ],
            random_samples: 1000,
            epsilon: None,
            train_fraction: 0.6,
            exact_tol: DEFAULT_EXACT_TOLERANCE,
        }
    }
}

/// One concrete method run per fold; grid search expands per step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodSpec {
    Grid(GridConfig),
    Random { samples: usize },
    Lp(LpForm),
    Exact { tol: f64 },
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Grid(cfg) => format!("grid_{}", cfg.step()),
            MethodSpec::Random { .. } => "random".into(),
            MethodSpec::Lp(LpForm::Reduced) => "lp_reduced".into(),
            MethodSpec::Lp(LpForm::Full) => "lp_full".into(),
            MethodSpec::Exact { .. } => "exact".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::usage(format!("k must be at least 2, got {}", self.k)));
        }
        if self.max_order == 0 {
            return Err(Error::usage("max order must be at least 1"));
        }
        if self.thresholds.len() != self.max_order {
            return Err(Error::usage(format!(
                "{} thresholds for max order {}",
                self.thresholds.len(),
                self.max_order
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::usage("no methods configured"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::usage("train fraction must lie in (0, 1)"));
        }
        if self.methods.contains(&MethodKind::Grid) && self.grid_steps.is_empty() {
            return Err(Error::usage("grid search requested without grid steps"));
        }
        for &step in &self.grid_steps {
            GridConfig::new(step, self.max_order)?;
        }
        if self.random_samples == 0 {
            return Err(Error::usage("random search needs at least one sample"));
        }
        if !(self.exact_tol > 0.0) {
            return Err(Error::usage("exact tolerance must be positive"));
        }
        if let Some(eps) = &self.epsilon {
            if eps.len() != self.max_order
                || eps.iter().any(|e| !(*e >= 0.0))
                || eps.iter().sum::<f64>() > 1.0
            {
                return Err(Error::usage(
                    "epsilon needs one non-negative bound per order, summing to at most 1",
                ));
            }
        }
        Ok(())
    }

    /// Methods in report order.
    pub fn method_specs(&self) -> Result<Vec<MethodSpec>> {
        let mut specs = Vec::new();
        for kind in &self.methods {
            match kind {
                MethodKind::Grid => {
                    for &step in &self.grid_steps {
                        specs.push(MethodSpec::Grid(GridConfig::new(step, self.max_order)?));
                    }
                }
                MethodKind::Random => specs.push(MethodSpec::Random {
                    samples: self.random_samples,
                }),
                MethodKind::LpReduced => specs.push(MethodSpec::Lp(LpForm::Reduced)),
                MethodKind::LpFull => specs.push(MethodSpec::Lp(LpForm::Full)),
                MethodKind::Exact => specs.push(MethodSpec::Exact {
                    tol: self.exact_tol,
                }),
            }
        }
        let mut labels: Vec<String> = specs.iter().map(MethodSpec::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::usage("a method is listed twice"));
        }
        Ok(specs)
    }

    fn lower_bounds(&self) -> Vec<f64> {
        self.epsilon
            .clone()
            .unwrap_or_else(|| vec![0.0; self.max_order])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub method: String,
    pub weights: WeightVector,
    #[serde(with = "f64_or_inf")]
    pub validation_perplexity: f64,
    #[serde(with = "f64_or_inf")]
    pub test_perplexity: f64,
    /// Kept out of `report.json` so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub train_sentences: usize,
    pub validation_sentences: usize,
    pub test_sentences: usize,
    pub validation_tokens: usize,
    pub test_tokens: usize,
    pub table_sizes: Vec<usize>,
    /// Digest of the count tables trained on this fold's training part.
    pub model_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    /// Mean test perplexity over folds where it is finite.
    pub ev: Option<f64>,
    pub sd: Option<f64>,
    pub n_finite: usize,
    pub infinite_count: usize,
    /// Mean validation perplexity over folds where it is finite.
    pub validation_ev: Option<f64>,
    pub validation_infinite_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub label: String,
    pub sentences: usize,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub selection: String,
    pub sd_definition: String,
    pub corpus: CorpusInfo,
    pub folds: Vec<FoldSummary>,
    pub records: Vec<FoldRecord>,
    pub aggregates: Vec<MethodAggregate>,
}

/// Training, validation and test parts of one fold.
pub struct FoldData {
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
}

/// Deterministic split of fold `fold` as described in the module docs.
pub fn fold_data(corpus: &Corpus, plan: &FoldPlan, fold: usize, train_fraction: f64) -> Result<FoldData> {
    let test_idx = plan.members(fold);
    let pool = plan.complement(fold);
    let validation_share = (1.0 - train_fraction) / 2.0;
    let share = validation_share / (train_fraction + validation_share);
    let n_val = ((pool.len() as f64) * share + 1e-9).floor() as usize;
    if n_val == 0 || n_val >= pool.len() {
        return Err(Error::Split(format!(
            "{} sentences outside fold {fold} cannot populate training and validation",
            pool.len()
        )));
    }
    let order = seeded_permutation(pool.len(), plan.seed(), fold as u64 + 1);
    let mut val_idx: Vec<usize> = order[..n_val].iter().map(|&i| pool[i]).collect();
    let mut train_idx: Vec<usize> = order[n_val..].iter().map(|&i| pool[i]).collect();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok(FoldData {
        train: corpus.subset(&train_idx),
        validation: corpus.subset(&val_idx),
        test: corpus.subset(&test_idx),
    })
}

/// Weights chosen by `spec` on `matrix`.
pub fn select_weights(
    spec: &MethodSpec,
    matrix: &ProbabilityMatrix,
    lower: &[f64],
    seed: u64,
) -> Result<WeightVector> {
    Ok(match spec {
        MethodSpec::Grid(cfg) => grid_search(matrix, cfg)?.weights,
        MethodSpec::Random { samples } => random_search(matrix, *samples, seed)?.weights,
        MethodSpec::Lp(form) => optimize_lp_bounded(matrix, *form, lower)?.weights,
        MethodSpec::Exact { tol } => {
            let r: OptimizationResult = optimize_exact(matrix, *tol)?;
            r.weights
        }
    })
}

fn run_fold(
    corpus: &Corpus,
    plan: &FoldPlan,
    fold: usize,
    cfg: &ExperimentConfig,
    specs: &[MethodSpec],
) -> Result<(FoldSummary, Vec<FoldRecord>)> {
    let data = fold_data(corpus, plan, fold, cfg.train_fraction)?;
    let model = NgramModel::train(&data.train, cfg.max_order, &cfg.thresholds)?;
    if model.vocabulary().word_count() == 0 {
        return Err(Error::Training(
            "training portion yields an empty vocabulary".into(),
        ));
    }
    let validation = model.probability_matrix(&data.validation);
    let test = model.probability_matrix(&data.test);
    if validation.is_empty() || test.is_empty() {
        return Err(Error::Training("validation or test portion has no tokens".into()));
    }
    let lower = cfg.lower_bounds();
    let method_seed = cfg.seed ^ ((fold as u64 + 1) << 32);
    let mut records = Vec::with_capacity(specs.len());
    for spec in specs {
        let start = Instant::now();
        let weights = select_weights(spec, &validation, &lower, method_seed)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        records.push(FoldRecord {
            fold,
            method: spec.label(),
            validation_perplexity: perplexity(&validation, &weights)?.value,
            test_perplexity: perplexity(&test, &weights)?.value,
            weights,
            wall_ms,
        });
    }
    let summary = FoldSummary {
        fold,
        train_sentences: data.train.len(),
        validation_sentences: data.validation.len(),
        test_sentences: data.test.len(),
        validation_tokens: validation.n_rows(),
        test_tokens: test.n_rows(),
        table_sizes: model.table_sizes(),
        model_digest: model.digest(),
    };
    Ok((summary, records))
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (Some(mean), sd)
}

fn aggregate(label: &str, records: &[FoldRecord]) -> MethodAggregate {
    let mine: Vec<&FoldRecord> = records.iter().filter(|r| r.method == label).collect();
    let test: Vec<f64> = mine
        .iter()
        .map(|r| r.test_perplexity)
        .filter(|v| v.is_finite())
        .collect();
    let validation: Vec<f64> = mine
        .iter()
        .map(|r| r.validation_perplexity)
        .filter(|v| v.is_finite())
        .collect();
    let (ev, sd) = mean_sd(&test);
    MethodAggregate {
        method: label.to_string(),
        ev,
        sd,
        n_finite: test.len(),
        infinite_count: mine.len() - test.len(),
        validation_ev: mean_sd(&validation).0,
        validation_infinite_count: mine.len() - validation.len(),
    }
}

pub fn run_experiment(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let specs = cfg.method_specs()?;
    let plan = FoldPlan::new(corpus.len(), cfg.k, cfg.seed)?;
    let outcomes: Vec<Result<(FoldSummary, Vec<FoldRecord>)>> = (0..cfg.k)
        .into_par_iter()
        .map(|fold| {
            run_fold(corpus, &plan, fold, cfg, &specs).map_err(|e| Error::Experiment {
                fold,
                source: Box::new(e),
            })
        })
        .collect();
    let mut folds = Vec::with_capacity(cfg.k);
    let mut records = Vec::with_capacity(cfg.k * specs.len());
    for outcome in outcomes {
        let (summary, recs) = outcome?;
        folds.push(summary);
        records.extend(recs);
    }
    let aggregates = specs
        .iter()
        .map(|s| aggregate(&s.label(), &records))
        .collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        seed: cfg.seed,
        selection: SELECTION_PROTOCOL.into(),
        sd_definition: SD_DEFINITION.into(),
        corpus: CorpusInfo {
            label: corpus.source_label().to_string(),
            sentences: corpus.len(),
            content_hash: corpus.content_hash(),
        },
        folds,
        records,
        aggregates,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "inf".into()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

/// Writes `report.json`, `summary.csv`, `boxplot.csv` and `timings.csv`.
/// The first three depend only on the report contents; wall-clock times go
/// to `timings.csv` alone.
pub fn emit_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    write_file(&dir.join("report.json"), &json)?;

    let summary = report
        .aggregates
        .iter()
        .map(|a| {
            vec![
                a.method.clone(),
                fmt_opt(a.ev),
                fmt_opt(a.sd),
                a.infinite_count.to_string(),
            ]
        })
        .collect();
    write_file(
        &dir.join("summary.csv"),
        &csv_bytes(&["method", "ev", "sd", "infinite_count"], summary)?,
    )?;

    let boxplot = report
        .records
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.fold.to_string(),
                fmt_num(r.test_perplexity),
            ]
        })
        .collect();
    write_file(
        &dir.join("boxplot.csv"),
        &csv_bytes(&["method", "fold", "test_perplexity"], boxplot)?,
    )?;

    let timings = report
        .records
        .iter()
        .map(|r| vec![r.method.clone(), r.fold.to_string(), format!("{:.3}", r.wall_ms)])
        .collect();
    write_file(
        &dir.join("timings.csv"),
        &csv_bytes(&["method", "fold", "wall_ms"], timings)?,
    )?;
    Ok(())
}

/// Human-readable summary table.
impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>14} {:>14} {:>14} {:>5}",
            "method", "EV(test)", "SD(test)", "EV(valid)", "inf"
        )?;
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        for a in &self.aggregates {
            writeln!(
                f,
                "{:<12} {:>14} {:>14} {:>14} {:>5}",
                a.method,
                show(a.ev),
                show(a.sd),
                show(a.validation_ev),
                a.infinite_count
            )?;
        }
        Ok(())
    }
}
