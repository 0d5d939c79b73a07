//! Command-line front end. Machine-readable JSON goes to stdout; the resolved
//! configuration and human-readable tables go to stderr.
//!
//! Exit codes: 0 success, 1 computational failure (solver, weak model),
//! 2 usage or I/O error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use interp_lp::corpus::Corpus;
use interp_lp::experiment::{
    emit_report, generate_synthetic_corpus, run_experiment, ExperimentConfig, MethodKind,
    SyntheticSpec,
};
use interp_lp::grid::{grid_search, random_search, GridConfig};
use interp_lp::mixture::{perplexity, WeightVector};
use interp_lp::ngram::{persist, NgramModel, ProbabilityMatrix};
use interp_lp::optimizer::{
    approximation_surface, optimize_exact, optimize_lp_bounded, write_surface_csv, LpForm,
    DEFAULT_EXACT_TOLERANCE,
};
use interp_lp::Error;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_computational() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(name = "interp-lp", version, about = "Interpolated n-gram models with LP-selected weights")]
pub struct Cli {
    /// Worker threads for parallel sections (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count n-grams over a corpus and write a model directory.
    Train(TrainArgs),
    /// Choose interpolation weights on an evaluation corpus.
    Optimize(OptimizeArgs),
    /// Perplexity of given weights on an evaluation corpus.
    Evaluate(EvaluateArgs),
    /// K-fold comparison of weight-selection methods.
    Experiment(ExperimentArgs),
    /// Sample a corpus from a known interpolated trigram source.
    Synth(SynthArgs),
    /// Emit the product-vs-sum surface on the unit box as CSV.
    Surface(SurfaceArgs),
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Training text, one sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Output model directory.
    #[arg(long)]
    out: PathBuf,
    /// Highest n-gram order.
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Minimum count per order, e.g. 19,29,39 (default: 1 for every order).
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<u64>>,
    /// Seed recorded in the model header.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum OptimizeMethod {
    Grid,
    Random,
    /// Reduced-form surrogate LP.
    Lp,
    /// Full-form surrogate LP (one variable per token).
    LpFull,
    /// Exact concave maximizer of the log-likelihood.
    Exact,
}

#[derive(Debug, Args, Serialize)]
struct OptimizeArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Evaluation text the weights are fitted on.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    method: OptimizeMethod,
    /// Grid step [grid only; default 0.1].
    #[arg(long)]
    step: Option<f64>,
    /// Random draws [random only; default 1000].
    #[arg(long)]
    samples: Option<usize>,
    /// RNG seed [random only; default 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Frank-Wolfe gap tolerance [exact only; default 1e-8].
    #[arg(long)]
    tol: Option<f64>,
    /// Per-weight lower bounds, comma separated [lp, lp-full only].
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Interpolation weights, unigram first, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<f64>,
    /// Also write the probability matrix as CSV.
    #[arg(long)]
    matrix_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ExperimentArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report directory.
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Highest n-gram order [default 3].
    #[arg(long)]
    order: Option<usize>,
    /// Minimum count per order [default 1,1,1].
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<u64>>,
    /// Number of folds [default 8].
    #[arg(long)]
    k: Option<usize>,
    /// Seed for folds, splits and random search [default 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Grid step sizes [default 0.1,0.01].
    #[arg(long, value_delimiter = ',')]
    grid_steps: Option<Vec<f64>>,
    /// Methods among grid, random, lp_reduced, lp_full, exact
    /// [default grid,random,lp_reduced,exact].
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Random-search draws per fold [default 1000].
    #[arg(long)]
    random_samples: Option<usize>,
    /// Lower bounds on the LP weights [default none].
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Training share of the 60/20/20-style split [default 0.6].
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Exact-oracle gap tolerance [default 1e-8].
    #[arg(long)]
    exact_tol: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    vocab: usize,
    #[arg(long, default_value_t = 5000)]
    sentences: usize,
    /// Source mixing weights (unigram, bigram, trigram).
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.3")]
    weights: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean sentence length in words.
    #[arg(long, default_value_t = 12.0)]
    mean_length: f64,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SurfaceArgs {
    /// Dimension (2 or 3).
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn announce<T: Serialize>(command: &str, config: &T) {
    let resolved = json!({ "command": command, "config": config });
    eprintln!("config: {resolved}");
}

fn print_json<T: Serialize>(value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| usage(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn read_corpus(path: &Path) -> CliResult<Corpus> {
    Ok(Corpus::read(path)?)
}

fn load_model(dir: &Path) -> CliResult<NgramModel> {
    if !dir.is_dir() {
        return Err(usage(format!("{}: model directory not found", dir.display())));
    }
    Ok(persist::load(dir)?.0)
}

fn evaluation_matrix(model: &NgramModel, corpus: &Corpus) -> CliResult<ProbabilityMatrix> {
    let matrix = model.probability_matrix(corpus);
    if matrix.is_empty() {
        return Err(usage("evaluation corpus has no scorable tokens"));
    }
    Ok(matrix)
}

pub fn run(cli: Cli) -> CliResult {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| usage(format!("cannot configure {} threads: {e}", cli.threads)))?;
    }
    match cli.command {
        Command::Train(args) => train(args),
        Command::Optimize(args) => optimize(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Experiment(args) => experiment(args),
        Command::Synth(args) => synth(args),
        Command::Surface(args) => surface(args),
    }
}

fn train(mut args: TrainArgs) -> CliResult {
    let thresholds = args
        .thresholds
        .get_or_insert_with(|| vec![1; args.order])
        .clone();
    if thresholds.len() != args.order {
        return Err(usage(format!(
            "--thresholds has {} values but --order is {}",
            thresholds.len(),
            args.order
        )));
    }
    announce("train", &args);
    let corpus = read_corpus(&args.corpus)?;
    let model = NgramModel::train(&corpus, args.order, &thresholds)?;
    let header = persist::save(&model, &args.out, args.seed)?;
    eprintln!("{:<8} {:>12}", "n-gram", "size");
    for (j, size) in header.table_sizes.iter().enumerate() {
        eprintln!("{:<8} {:>12}", format!("{}-gram", j + 1), size);
    }
    print_json(&json!({
        "model": args.out,
        "sentences": corpus.len(),
        "vocab_size": header.vocab_size,
        "table_sizes": header.table_sizes,
    }))
}

fn reject_flag(given: bool, flag: &str, method: &str) -> CliResult {
    if given {
        Err(usage(format!("{flag} conflicts with --method {method}")))
    } else {
        Ok(())
    }
}

fn optimize(args: OptimizeArgs) -> CliResult {
    let method_name = args.method.to_possible_value().unwrap().get_name().to_string();
    let m = method_name.as_str();
    let is = |k: &[OptimizeMethod]| k.iter().any(|x| std::mem::discriminant(x) == std::mem::discriminant(&args.method));
    reject_flag(args.step.is_some() && !is(&[OptimizeMethod::Grid]), "--step", m)?;
    reject_flag(
        (args.samples.is_some() || args.seed.is_some()) && !is(&[OptimizeMethod::Random]),
        if args.samples.is_some() { "--samples" } else { "--seed" },
        m,
    )?;
    reject_flag(args.tol.is_some() && !is(&[OptimizeMethod::Exact]), "--tol", m)?;
    reject_flag(
        args.epsilon.is_some() && !is(&[OptimizeMethod::Lp, OptimizeMethod::LpFull]),
        "--epsilon",
        m,
    )?;
    announce("optimize", &args);

    let model = load_model(&args.model)?;
    let corpus = read_corpus(&args.corpus)?;
    let matrix = evaluation_matrix(&model, &corpus)?;
    let n = matrix.n_cols();
    let output = match args.method {
        OptimizeMethod::Grid => {
            let cfg = GridConfig::new(args.step.unwrap_or(0.1), n)?;
            let r = grid_search(&matrix, &cfg)?;
            json!({
                "method": "grid",
                "weights": r.weights,
                "perplexity": r.perplexity,
                "stats": { "step": cfg.step(), "points_evaluated": r.points_evaluated },
            })
        }
        OptimizeMethod::Random => {
            let samples = args.samples.unwrap_or(1000);
            let seed = args.seed.unwrap_or(0);
            let r = random_search(&matrix, samples, seed)?;
            json!({
                "method": "random",
                "weights": r.weights,
                "perplexity": r.perplexity,
                "stats": { "samples": samples, "seed": seed, "points_evaluated": r.points_evaluated },
            })
        }
        OptimizeMethod::Lp | OptimizeMethod::LpFull => {
            let form = if matches!(args.method, OptimizeMethod::Lp) {
                LpForm::Reduced
            } else {
                LpForm::Full
            };
            let lower = args.epsilon.clone().unwrap_or_else(|| vec![0.0; n]);
            let r = optimize_lp_bounded(&matrix, form, &lower)?;
            json!({
                "method": r.method,
                "weights": r.weights,
                "surrogate_objective": r.surrogate_objective,
                "perplexity": r.true_perplexity,
                "stats": r.solver_stats,
            })
        }
        OptimizeMethod::Exact => {
            let r = optimize_exact(&matrix, args.tol.unwrap_or(DEFAULT_EXACT_TOLERANCE))?;
            json!({
                "method": r.method,
                "weights": r.weights,
                "surrogate_objective": r.surrogate_objective,
                "perplexity": r.true_perplexity,
                "stats": r.solver_stats,
            })
        }
    };
    print_json(&output)
}

fn evaluate(args: EvaluateArgs) -> CliResult {
    announce("evaluate", &args);
    let weights = WeightVector::new(args.weights.clone())?;
    let model = load_model(&args.model)?;
    let corpus = read_corpus(&args.corpus)?;
    let matrix = evaluation_matrix(&model, &corpus)?;
    if let Some(path) = &args.matrix_out {
        let file = fs::File::create(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        matrix.write_csv(file)?;
    }
    let ppl = perplexity(&matrix, &weights)?;
    print_json(&json!({ "weights": weights, "perplexity": ppl }))
}

fn resolve_experiment(args: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let raw = fs::read(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_slice::<ExperimentConfig>(&raw)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(order) = args.order {
        cfg.max_order = order;
        if args.thresholds.is_none() && cfg.thresholds.len() != order {
            cfg.thresholds = vec![1; order];
        }
        if args.epsilon.is_none() {
            cfg.epsilon = cfg.epsilon.filter(|e| e.len() == order);
        }
    }
    if let Some(t) = &args.thresholds {
        cfg.thresholds = t.clone();
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = &args.grid_steps {
        cfg.grid_steps = steps.clone();
    }
    if let Some(methods) = &args.methods {
        cfg.methods = methods
            .iter()
            .map(|m| m.parse::<MethodKind>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(s) = args.random_samples {
        cfg.random_samples = s;
    }
    if let Some(e) = &args.epsilon {
        cfg.epsilon = Some(e.clone());
    }
    if let Some(f) = args.train_fraction {
        cfg.train_fraction = f;
    }
    if let Some(t) = args.exact_tol {
        cfg.exact_tol = t;
    }
    if cfg.epsilon.is_some()
        && !cfg
            .methods
            .iter()
            .any(|m| matches!(m, MethodKind::LpReduced | MethodKind::LpFull))
    {
        return Err(usage("--epsilon conflicts with --methods lacking an LP method"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(args: ExperimentArgs) -> CliResult {
    let cfg = resolve_experiment(&args)?;
    announce(
        "experiment",
        &json!({ "corpus": args.corpus, "out": args.out, "experiment": cfg }),
    );
    let corpus = read_corpus(&args.corpus)?;
    let report = run_experiment(&corpus, &cfg)?;
    emit_report(&report, &args.out)?;
    eprint!("{report}");
    print_json(&json!({ "out": args.out, "aggregates": report.aggregates }))
}

fn open_output(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(std::io::BufWriter::new(fs::File::create(path).map_err(
            |e| Error::Io {
                path: path.clone(),
                source: e,
            },
        )?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn synth(args: SynthArgs) -> CliResult {
    announce("synth", &args);
    let weights = WeightVector::new(args.weights.clone())?;
    let mut spec = SyntheticSpec::new(args.vocab, weights, args.sentences, args.seed);
    spec.mean_length = args.mean_length;
    let corpus = generate_synthetic_corpus(&spec)?;
    let mut out = open_output(&args.out)?;
    corpus
        .write_text(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| usage(format!("writing corpus: {e}")))?;
    eprintln!("{} sentences, {} words", corpus.len(), corpus.word_count());
    Ok(())
}

fn surface(args: SurfaceArgs) -> CliResult {
    announce("surface", &args);
    let points = approximation_surface(args.n, args.step)?;
    let mut out = open_output(&args.out)?;
    write_surface_csv(&points, &mut out)?;
    out.flush().map_err(|e| usage(format!("writing surface: {e}")))?;
    Ok(())
}
