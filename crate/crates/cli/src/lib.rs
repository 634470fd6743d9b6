//! Command-line front end: corpus generation, training, active runs, sweeps,
//! cross-validation and latency benchmarks. Every command is seeded and
//! writes line-oriented text (JSON lines for corpora, CSV for reports).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use aae_core::active::{
    active_loop, cross_validate, train_fraction_sweep, ActiveConfig, ActiveReport, CrossValidation, SamplingMode,
    SweepTable, DEFAULT_MAX_ROUNDS, DEFAULT_SAMPLE_FRACTION, DEFAULT_THRESHOLD,
};
use aae_core::classifiers::{
    build, load_network, predict, save_network, train, ArchitectureId, TrainConfig, TrainLog, DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE,
};
use aae_core::corpus::{generate_corpus, Corpus, GenConfig};
use aae_core::graphmodel::GraphProfile;
use aae_core::oracle::ingest_trace;
use aae_core::{AaeError, Network64, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const DEFAULT_COUNT: usize = 1000;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.41, 0.49, 0.58];
pub const MIN_BENCH_INSTANCES: usize = 50;

pub fn exit_code(err: &AaeError) -> i32 {
    match err {
        AaeError::Parse { .. } => EXIT_PARSE,
        AaeError::Io(_) => EXIT_IO,
        AaeError::Config(_) | AaeError::Validation(_) | AaeError::Capacity { .. } | AaeError::Shape(_) => {
            EXIT_VALIDATION
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "aae", version, about = "Learned estimator for graph-storage tuning decisions")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, env = "AAE_SEED")]
    pub seed: Option<u64>,
    /// TOML file with default values for any flag (keys use snake_case).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an oracle-labeled corpus.
    Gen(GenArgs),
    /// Replace corpus labels with ones derived from a runtime trace.
    Relabel(RelabelArgs),
    /// Train one classifier on a corpus.
    Train(TrainArgs),
    /// Score a corpus with a trained classifier.
    Predict(PredictArgs),
    /// Run the active-learning loop over a corpus used as the pool.
    Active(ActiveArgs),
    /// Train on growing shares of a corpus and report accuracy per architecture.
    Sweep(SweepArgs),
    /// k-fold cross-validation.
    Cv(CvArgs),
    /// Mean single-instance prediction latency per architecture.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub profile: Option<GraphProfile>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RelabelArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Lines of `provenance_id,storage_id,runtime_seconds`.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct TrainFlags {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Rescale batch gradients to at most this L2 norm.
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub arch: Option<ArchitectureId>,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Parameter file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch training log (CSV).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ActiveArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub arch: Option<ArchitectureId>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub sample_fraction: Option<f64>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Sample the least confident instances instead of uniformly.
    #[arg(long)]
    pub uncertainty: bool,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Round report (CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the final parameters here.
    #[arg(long)]
    pub params_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Architectures to include; defaults to all three.
    #[arg(long, value_delimiter = ',')]
    pub arch: Vec<ArchitectureId>,
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub arch: Option<ArchitectureId>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub arch: Vec<ArchitectureId>,
    /// Instances to time; the corpus is cycled if shorter.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Defaults read from `--config`. Command-line flags take precedence.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub profile: Option<String>,
    pub count: Option<usize>,
    pub max_len: Option<usize>,
    pub arch: Option<String>,
    pub threshold: Option<f64>,
    pub sample_fraction: Option<f64>,
    pub max_rounds: Option<usize>,
    pub uncertainty: Option<bool>,
    pub fractions: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub clip_norm: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            AaeError::Parse {
                line,
                message: e.message().to_owned(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    fn arch(&self, flag: Option<ArchitectureId>) -> Result<ArchitectureId> {
        match (flag, &self.arch) {
            (Some(a), _) => Ok(a),
            (None, Some(name)) => name.parse(),
            (None, None) => Ok(ArchitectureId::Scnn),
        }
    }

    fn archs(&self, flag: &[ArchitectureId]) -> Result<Vec<ArchitectureId>> {
        if !flag.is_empty() {
            return Ok(flag.to_vec());
        }
        match &self.arch {
            Some(names) => names.split(',').map(|n| n.trim().parse()).collect(),
            None => Ok(ArchitectureId::ALL.to_vec()),
        }
    }

    fn train_config(&self, flags: &TrainFlags, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: flags.epochs.or(self.epochs).unwrap_or(DEFAULT_EPOCHS),
            batch_size: flags.batch_size.or(self.batch_size).unwrap_or(DEFAULT_BATCH_SIZE),
            learning_rate: flags.lr.or(self.lr).unwrap_or(DEFAULT_LEARNING_RATE),
            seed,
            clip_norm: flags.clip_norm.or(self.clip_norm),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    Corpus::parse(&fs::read_to_string(path)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_gen(args: &GenArgs, cfg: &RunConfig, seed: u64) -> Result<Corpus> {
    let profile = match (args.profile, &cfg.profile) {
        (Some(p), _) => p,
        (None, Some(name)) => name.parse()?,
        (None, None) => GraphProfile::FreebaseSmall,
    };
    let mut gen = GenConfig::new(profile, args.count.or(cfg.count).unwrap_or(DEFAULT_COUNT), seed);
    if let Some(len) = args.max_len.or(cfg.max_len) {
        gen.max_len = len;
    }
    generate_corpus(&gen)
}

pub fn cmd_train(corpus: &Corpus, arch: ArchitectureId, train_cfg: &TrainConfig) -> Result<(Network64, TrainLog)> {
    let mut net = build::<f64>(arch, corpus.header.max_len, train_cfg.seed)?;
    let log = train(&mut net, &corpus.instances, train_cfg)?;
    Ok((net, log))
}

/// CSV of `index,probability,predicted,label` for every instance.
pub fn cmd_predict(corpus: &Corpus, net: &Network64) -> Result<String> {
    let mut out = String::from("index,probability,predicted,label\n");
    for (i, inst) in corpus.instances.iter().enumerate() {
        let p = predict(net, inst)?;
        let label = inst.label.map_or_else(String::new, |l| u8::from(l).to_string());
        out.push_str(&format!("{i},{p:.9},{},{label}\n", u8::from(p >= 0.5)));
    }
    Ok(out)
}

pub fn cmd_active(corpus: &Corpus, arch: ArchitectureId, cfg: &ActiveConfig) -> Result<(Network64, ActiveReport)> {
    active_loop::<f64>(&corpus.instances, arch, cfg)
}

pub fn cmd_sweep(
    corpus: &Corpus,
    archs: &[ArchitectureId],
    fractions: &[f64],
    train_cfg: &TrainConfig,
) -> Result<SweepTable> {
    train_fraction_sweep::<f64>(&corpus.instances, archs, fractions, train_cfg, train_cfg.seed)
}

pub fn cmd_cv(corpus: &Corpus, arch: ArchitectureId, folds: usize, train_cfg: &TrainConfig) -> Result<CrossValidation> {
    cross_validate::<f64>(&corpus.instances, arch, folds, train_cfg, train_cfg.seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub architecture: ArchitectureId,
    pub instances: usize,
    pub mean_seconds: f64,
    pub max_seconds: f64,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("architecture,instances,mean_seconds,max_seconds\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6},{:.6}\n", r.architecture, r.instances, r.mean_seconds, r.max_seconds));
    }
    out
}

/// Wall-clock time of single-instance predictions with freshly seeded networks.
pub fn cmd_bench(corpus: &Corpus, archs: &[ArchitectureId], count: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if count < MIN_BENCH_INSTANCES {
        return Err(AaeError::Validation(format!(
            "bench needs at least {MIN_BENCH_INSTANCES} instances, got {count}"
        )));
    }
    let mut rows = Vec::with_capacity(archs.len());
    for &arch in archs {
        let net = build::<f64>(arch, corpus.header.max_len, seed)?;
        // one untimed call to fault in allocations
        predict(&net, &corpus.instances[0])?;
        let mut total = 0.0;
        let mut worst: f64 = 0.0;
        for inst in corpus.instances.iter().cycle().take(count) {
            let start = Instant::now();
            std::hint::black_box(predict(&net, std::hint::black_box(inst))?);
            let t = start.elapsed().as_secs_f64();
            total += t;
            worst = worst.max(t);
        }
        rows.push(BenchRow {
            architecture: arch,
            instances: count,
            mean_seconds: total / count as f64,
            max_seconds: worst,
        });
    }
    Ok(rows)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    match cli.command {
        Command::Gen(args) => {
            let corpus = cmd_gen(&args, &cfg, seed)?;
            emit(args.out.as_deref(), &corpus.to_jsonl())
        }
        Command::Relabel(args) => {
            let mut corpus = read_corpus(&args.corpus)?;
            corpus.relabel(&ingest_trace(&args.trace)?)?;
            emit(args.out.as_deref(), &corpus.to_jsonl())
        }
        Command::Train(args) => {
            let corpus = read_corpus(&args.corpus)?;
            let arch = cfg.arch(args.arch)?;
            let (net, log) = cmd_train(&corpus, arch, &cfg.train_config(&args.train, seed)?)?;
            match (&args.out, &args.log) {
                (Some(out), log_path) => {
                    fs::write(out, save_network(&net))?;
                    emit(log_path.as_deref(), &log.to_csv())
                }
                (None, Some(log_path)) => {
                    fs::write(log_path, log.to_csv())?;
                    emit(None, &save_network(&net))
                }
                (None, None) => emit(None, &log.to_csv()),
            }
        }
        Command::Predict(args) => {
            let corpus = read_corpus(&args.corpus)?;
            let (_, net) = load_network::<f64>(&fs::read_to_string(&args.params)?)?;
            emit(args.out.as_deref(), &cmd_predict(&corpus, &net)?)
        }
        Command::Active(args) => {
            let corpus = read_corpus(&args.corpus)?;
            let arch = cfg.arch(args.arch)?;
            let active = ActiveConfig {
                threshold: args.threshold.or(cfg.threshold).unwrap_or(DEFAULT_THRESHOLD),
                sample_fraction: args.sample_fraction.or(cfg.sample_fraction).unwrap_or(DEFAULT_SAMPLE_FRACTION),
                max_rounds: args.max_rounds.or(cfg.max_rounds).unwrap_or(DEFAULT_MAX_ROUNDS),
                sampling: if args.uncertainty || cfg.uncertainty.unwrap_or(false) {
                    SamplingMode::Uncertainty
                } else {
                    SamplingMode::Uniform
                },
                train: cfg.train_config(&args.train, seed)?,
                seed,
            };
            let (net, report) = cmd_active(&corpus, arch, &active)?;
            if let Some(path) = &args.params_out {
                fs::write(path, save_network(&net))?;
            }
            emit(args.out.as_deref(), &report.to_csv())
        }
        Command::Sweep(args) => {
            let corpus = read_corpus(&args.corpus)?;
            let fractions = if args.fractions.is_empty() {
                cfg.fractions.clone().unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec())
            } else {
                args.fractions.clone()
            };
            let table = cmd_sweep(&corpus, &cfg.archs(&args.arch)?, &fractions, &cfg.train_config(&args.train, seed)?)?;
            emit(args.out.as_deref(), &table.to_csv())
        }
        Command::Cv(args) => {
            let corpus = read_corpus(&args.corpus)?;
            let folds = args.folds.or(cfg.folds).unwrap_or(DEFAULT_FOLDS);
            let cv = cmd_cv(&corpus, cfg.arch(args.arch)?, folds, &cfg.train_config(&args.train, seed)?)?;
            emit(args.out.as_deref(), &cv.to_csv())
        }
        Command::Bench(args) => {
            let corpus = read_corpus(&args.corpus)?;
            let count = args.count.or(cfg.count).unwrap_or(MIN_BENCH_INSTANCES);
            let rows = cmd_bench(&corpus, &cfg.archs(&args.arch)?, count, seed)?;
            emit(args.out.as_deref(), &bench_csv(&rows))
        }
    }
}
