use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use flan::benchmark::{export, generate_synthetic, ingest, split, SyntheticSpec, TabularBenchmark};
use flan::encodings::{encode_adjacency, encode_path, load_supplemental, score_matrix, unify, SupplementalTable};
use flan::search::{search, ConstantSurrogate, FlanSurrogate, OracleSurrogate, SearchConfig, Surrogate};
use flan::training::{evaluate, fit, load_checkpoint, save_checkpoint, transfer, Provenance};
use flan::{PredictorModel, RunConfig};

#[derive(Parser)]
#[command(name = "flan", version, about = "Graph-flow accuracy predictors and predictor-guided architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tabular benchmark.
    GenBench(GenBench),
    /// Write one encoding per architecture as a supplemental-vector file.
    Encode(Encode),
    /// Train a predictor on a seeded split and report rank correlation on the rest.
    Train(Train),
    /// Score a checkpoint on every benchmark arch it was not trained on.
    Eval(Eval),
    /// Adapt a checkpoint to another search space.
    Transfer(Transfer),
    /// Run predictor-guided iterative sampling and write the trace.
    Search(Search),
}

#[derive(Args)]
struct Common {
    /// Seed for splits, initialization, training and search.
    #[arg(long)]
    seed: Option<u64>,
    /// `key = value` file with predictor, training and search settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn run_config(&self) -> flan::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
            cfg.search.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenBench {
    #[arg(long, default_value_t = 5)]
    num_nodes: usize,
    #[arg(long, default_value_t = 3)]
    vocab_size: usize,
    #[arg(long, default_value_t = 1024)]
    num_archs: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    interaction_scale: f64,
    #[arg(long, default_value_t = 0)]
    space_id: u32,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingChoice {
    Adjacency,
    Path,
    Score,
    Zcp,
}

#[derive(Args)]
struct Encode {
    #[arg(long)]
    bench: PathBuf,
    #[arg(long, value_enum)]
    kind: EncodingChoice,
    /// Cap on path-encoding length per cell.
    #[arg(long, default_value_t = usize::MAX)]
    max_paths: usize,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    bench: PathBuf,
    #[arg(long, default_value_t = 128)]
    train_count: usize,
    /// Supplemental-vector file concatenated before the prediction head.
    #[arg(long)]
    supp: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    bench: PathBuf,
    #[arg(long)]
    supp: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    /// Report path (JSON Lines); standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Transfer {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    bench: PathBuf,
    /// Target-space architectures used for fine-tuning; 0 is zero-shot.
    #[arg(long, default_value_t = 16)]
    samples: usize,
    #[arg(long)]
    supp: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictorChoice {
    Flan,
    Oracle,
    Constant,
}

#[derive(Args)]
struct Search {
    #[arg(long)]
    bench: PathBuf,
    /// Start every iteration from this checkpoint instead of from scratch.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PredictorChoice::Flan)]
    predictor: PredictorChoice,
    #[arg(long)]
    budget_per_iter: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    initial_sample: Option<usize>,
    #[arg(long)]
    pool_floor: Option<usize>,
    #[arg(long)]
    supp: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    /// Trace CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    benchmark: &'a str,
    train_count: usize,
    test_count: usize,
    kendall_tau: f64,
    spearman_rho: f64,
}

#[derive(Serialize)]
struct SearchSummary<'a> {
    command: &'a str,
    predictor: &'a str,
    iterations: usize,
    evaluated: usize,
    best_id: Option<u64>,
    best_acc: Option<f64>,
    partial_iteration: Option<usize>,
}

fn create(path: &Path) -> flan::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn emit(value: &impl Serialize, out: Option<&Path>) -> flan::Result<()> {
    let line = serde_json::to_string(value)?;
    match out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{line}")?;
            w.flush()?;
        }
        None => println!("{line}"),
    }
    Ok(())
}

fn supplemental(path: Option<&Path>) -> flan::Result<Option<SupplementalTable>> {
    path.map(|p| load_supplemental(p, None)).transpose()
}

/// Fits the predictor section to the data it will see.
fn adapt(cfg: &mut RunConfig, bench: &TabularBenchmark, supp: Option<&SupplementalTable>) {
    cfg.predictor.cells_per_arch = bench.cells_per_arch;
    if let Some(table) = supp {
        if cfg.predictor.supplemental_dims.is_empty() {
            cfg.predictor.supplemental_dims = vec![table.dim];
        }
    }
}

fn rank_report(
    command: &str,
    model: &PredictorModel,
    bench: &TabularBenchmark,
    train_count: usize,
    test: &[u64],
    supp: Option<&SupplementalTable>,
) -> flan::Result<()> {
    if test.len() < 2 {
        return Err(flan::Error::InvalidArgument(format!(
            "rank metrics need at least 2 held-out architectures, got {}",
            test.len()
        )));
    }
    let r = evaluate(model, bench, test, supp)?;
    emit(
        &Report {
            command,
            benchmark: &bench.name,
            train_count,
            test_count: test.len(),
            kendall_tau: r.kendall_tau,
            spearman_rho: r.spearman_rho,
        },
        None,
    )
}

fn gen_bench(a: &GenBench) -> flan::Result<()> {
    let seed = a.common.run_config()?.train.seed;
    let mut spec = SyntheticSpec::with_random_utilities(
        a.num_nodes,
        a.vocab_size,
        a.num_archs,
        seed,
        a.noise_sigma,
        a.interaction_scale,
    );
    spec.space_id = a.space_id;
    export(&generate_synthetic(&spec)?, &a.out)
}

fn encode(a: &Encode) -> flan::Result<()> {
    let bench = ingest(&a.bench)?;
    let table = match a.kind {
        EncodingChoice::Zcp => SupplementalTable::from_proxies(&bench)?,
        EncodingChoice::Score => SupplementalTable::new("score", score_matrix(&bench))?,
        EncodingChoice::Adjacency => {
            let vectors = bench
                .archs()
                .iter()
                .map(|arch| Ok((arch.arch_id, encode_adjacency(arch, &bench.vocab, bench.num_nodes)?.values)))
                .collect::<flan::Result<_>>()?;
            SupplementalTable::new("adjacency", vectors)?
        }
        EncodingChoice::Path => {
            let vectors = bench
                .archs()
                .iter()
                .map(|arch| (arch.arch_id, encode_path(arch, &bench.vocab, a.max_paths).values))
                .collect();
            SupplementalTable::new("path", vectors)?
        }
    };
    table.save(&a.out)
}

fn train(a: &Train) -> flan::Result<()> {
    let mut cfg = a.common.run_config()?;
    let bench = ingest(&a.bench)?;
    let supp = supplemental(a.supp.as_deref())?;
    adapt(&mut cfg, &bench, supp.as_ref());
    cfg.validate()?;
    let (train_ids, test_ids) = split(&bench, a.train_count, cfg.train.seed)?;
    let vocab = unify(std::slice::from_ref(&bench.vocab))?;
    let mut model = PredictorModel::init(cfg.predictor.clone(), vocab, cfg.train.seed)?;
    fit(&mut model, &bench, &train_ids, &cfg.train, supp.as_ref())?;
    let provenance = Provenance {
        benchmark: bench.name.clone(),
        seed: cfg.train.seed,
        epochs: cfg.train.epochs,
        train_ids: train_ids.clone(),
    };
    save_checkpoint(&model, &provenance, &a.out)?;
    rank_report("train", &model, &bench, train_ids.len(), &test_ids, supp.as_ref())
}

fn eval(a: &Eval) -> flan::Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let bench = ingest(&a.bench)?;
    let supp = supplemental(a.supp.as_deref())?;
    let seen: BTreeSet<u64> = if ckpt.provenance.benchmark == bench.name {
        ckpt.provenance.train_ids.iter().copied().collect()
    } else {
        BTreeSet::new()
    };
    let test: Vec<u64> = bench.ids().into_iter().filter(|id| !seen.contains(id)).collect();
    if test.len() < 2 {
        return Err(flan::Error::InvalidArgument(format!(
            "rank metrics need at least 2 held-out architectures, got {}",
            test.len()
        )));
    }
    let r = evaluate(&ckpt.model, &bench, &test, supp.as_ref())?;
    emit(
        &Report {
            command: "eval",
            benchmark: &bench.name,
            train_count: bench.len() - test.len(),
            test_count: test.len(),
            kendall_tau: r.kendall_tau,
            spearman_rho: r.spearman_rho,
        },
        a.out.as_deref(),
    )
}

fn transfer_cmd(a: &Transfer) -> flan::Result<()> {
    let cfg = a.common.run_config()?;
    cfg.train.validate()?;
    let mut model = load_checkpoint(&a.checkpoint)?.model;
    let bench = ingest(&a.bench)?;
    let supp = supplemental(a.supp.as_deref())?;
    let (train_ids, test_ids) = if a.samples == 0 {
        (Vec::new(), bench.ids())
    } else {
        split(&bench, a.samples, cfg.train.seed)?
    };
    transfer(&mut model, &bench, &train_ids, &cfg.train, supp.as_ref())?;
    let provenance = Provenance {
        benchmark: bench.name.clone(),
        seed: cfg.train.seed,
        epochs: cfg.train.transfer_epochs,
        train_ids: train_ids.clone(),
    };
    save_checkpoint(&model, &provenance, &a.out)?;
    rank_report("transfer", &model, &bench, train_ids.len(), &test_ids, supp.as_ref())
}

fn search_cmd(a: &Search) -> flan::Result<()> {
    let mut cfg = a.common.run_config()?;
    let bench = ingest(&a.bench)?;
    let supp = supplemental(a.supp.as_deref())?;
    adapt(&mut cfg, &bench, supp.as_ref());
    let s: &mut SearchConfig = &mut cfg.search;
    if let Some(n) = a.budget_per_iter {
        s.budget_per_iter = n;
    }
    if let Some(k) = a.max_iters {
        s.max_iters = k;
    }
    if let Some(k) = a.initial_sample {
        s.initial_sample = Some(k);
    }
    if let Some(f) = a.pool_floor {
        s.pool_floor = f;
    }
    cfg.validate()?;
    let mut surrogate: Box<dyn Surrogate> = match a.predictor {
        PredictorChoice::Oracle => Box::new(OracleSurrogate),
        PredictorChoice::Constant => Box::new(ConstantSurrogate),
        PredictorChoice::Flan => {
            let mut flan = FlanSurrogate::new(cfg.predictor.clone(), cfg.train.clone());
            if let Some(table) = supp {
                flan = flan.with_supplemental(table);
            }
            if let Some(path) = &a.checkpoint {
                flan = flan.with_base(load_checkpoint(path)?.model);
            }
            Box::new(flan)
        }
    };
    let state = search(&bench, surrogate.as_mut(), &cfg.search)?;
    let mut w = create(&a.out)?;
    state.write_trace_csv(&mut w)?;
    w.flush()?;
    emit(
        &SearchSummary {
            command: "search",
            predictor: surrogate.name(),
            iterations: state.iteration,
            evaluated: state.evaluated.len(),
            best_id: state.best_so_far.map(|b| b.0),
            best_acc: state.best_so_far.map(|b| b.1),
            partial_iteration: state.partial_iteration,
        },
        None,
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenBench(a) => gen_bench(a),
        Command::Encode(a) => encode(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Transfer(a) => transfer_cmd(a),
        Command::Search(a) => search_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "flan: error: {e}");
            ExitCode::FAILURE
        }
    }
}
