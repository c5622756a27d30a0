//! `biaffine`: train, run, evaluate and benchmark the parser.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biaffine_core::accounting::{default_shared_total, reduction_report};
use biaffine_core::bench::{bench_csv, run_bench, BenchConfig, BenchKernel};
use biaffine_core::conllu::{read_conllu, read_conllu_with, write_conllu, Annotation};
use biaffine_core::decoder::{evaluate_sentences, AttachmentScores};
use biaffine_core::model::Model;
use biaffine_core::train::train;
use biaffine_core::{Error, ModelConfig, Result, Variant};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "biaffine", version, about = "Graph-based dependency parser with dense, symmetric or circulant biaffine scorers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a parser and save the checkpoint with the best development LAS.
    Train(TrainArgs),
    /// Predict heads and labels for a CoNLL-U file.
    Parse(ParseArgs),
    /// Print UAS and LAS against a gold treebank.
    Eval(EvalArgs),
    /// Time batched arc scoring per kernel and dimension; prints CSV.
    Bench(BenchArgs),
    /// Parameter counts of the three classifier variants.
    Params(ParamsArgs),
}

/// Settings that override the config file.
#[derive(Args, Debug)]
struct ModelFlags {
    /// key = value file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    arc_dim: Option<usize>,
    #[arg(long)]
    label_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of the training set to keep, in (0, 1].
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ModelFlags {
    fn resolve(&self) -> Result<ModelConfig> {
        let mut config = match &self.config {
            Some(path) => ModelConfig::from_file(path)?,
            None => ModelConfig::default(),
        };
        if let Some(v) = self.variant {
            config.variant = v;
        }
        if let Some(v) = self.arc_dim {
            config.arc_dim = v;
        }
        if let Some(v) = self.label_dim {
            config.label_dim = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.subsample {
            config.subsample = v;
        }
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        for item in &self.overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got `{item}`")))?;
            config.set(key.trim(), value)?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: ModelFlags,
}

#[derive(Args, Debug)]
struct ParseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Defaults to standard output.
    #[arg(long = "out")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    /// Parse the gold sentences with this model.
    #[arg(long, conflicts_with = "pred", required_unless_present = "pred")]
    model: Option<PathBuf>,
    /// Score an existing prediction file instead.
    #[arg(long)]
    pred: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [256, 512])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long = "variants", value_delimiter = ',', default_values_t = [BenchKernel::Dense, BenchKernel::Symmetric, BenchKernel::Circulant])]
    kernels: Vec<BenchKernel>,
    /// Scored head-dependent pairs per timing.
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ParamsArgs {
    /// Arc view dimension n.
    #[arg(long, default_value_t = 400)]
    arc_dim: usize,
    /// Label view dimension m.
    #[arg(long, default_value_t = 100)]
    label_dim: usize,
    #[arg(long, default_value_t = 37)]
    labels: usize,
    /// Parameters outside the two classifiers.
    #[arg(long, default_value_t = default_shared_total())]
    shared: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Numeric { .. } | Error::NonFiniteGradient { .. } => 3,
        _ => 2,
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })
        }
    }
}

fn print_scores(s: &AttachmentScores) {
    println!("UAS {:.2}", s.uas);
    println!("LAS {:.2}", s.las);
    println!("tokens {}", s.tokens);
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let config = args.flags.resolve()?;
    let train_set = read_conllu(&args.train)?;
    let dev = args.dev.as_ref().map(read_conllu).transpose()?;
    let mut announced = false;
    let outcome = train(config, &train_set, dev.as_deref(), |entry| {
        if !announced {
            println!("training sentences {}", entry.train_sentences);
            announced = true;
        }
        println!("{entry}");
    })?;
    outcome.model.save(&args.out)?;
    println!("best epoch {}", outcome.best_epoch);
    println!("saved {}", args.out.display());
    Ok(())
}

fn cmd_parse(args: &ParseArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let input = read_conllu_with(&args.input, Annotation::Optional)?;
    let parsed = model.parse(&input)?;
    write_output(args.output.as_deref(), &write_conllu(&parsed))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let gold = read_conllu(&args.gold)?;
    let pred = match (&args.model, &args.pred) {
        (Some(model), _) => Model::load(model)?.parse(&gold)?,
        (None, Some(pred)) => read_conllu(pred)?,
        (None, None) => return Err(Error::Config("either --model or --pred is required".into())),
    };
    print_scores(&evaluate_sentences(&pred, &gold)?);
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if let Some(&d) = args.dims.iter().find(|&&d| d < 2) {
        return Err(Error::Config(format!("benchmark dimensions must be at least 2, got {d}")));
    }
    let config = BenchConfig {
        dims: args.dims.clone(),
        kernels: args.kernels.clone(),
        pairs: args.pairs,
        repeats: args.repeats,
        warmup: args.warmup,
        seed: args.seed,
        ..BenchConfig::default()
    };
    let rows = run_bench(&config)?;
    write_output(args.csv.as_deref(), &bench_csv(&rows))
}

fn cmd_params(args: &ParamsArgs) -> Result<()> {
    let report = reduction_report(Some(args.shared), args.arc_dim, args.label_dim, args.labels)?;
    print!("{}", report.to_text());
    if let Some(path) = &args.csv {
        write_output(Some(path), &report.to_csv())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Parse(a) => cmd_parse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Params(a) => cmd_params(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
