use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use reluprop::format;
use reluprop::harness::{self, ExperimentSpec, GeneratorSpec, RowSpec, TesterOptions};
use reluprop::{BitVector, Error, TesterConfig, Verdict};

/// Property testers for ReLU networks.
#[derive(Parser)]
#[command(name = "reluprop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a network file and a `.meta.json` sidecar.
    Gen(GenArgs),
    /// Run one tester on a network file and print the verdict as JSON.
    Test(TestArgs),
    /// Run an experiment file and write CSV.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Random,
    AllZero,
    AllOnes,
    VanillaHard,
    N1,
    N2,
    Partition,
    CompleteZero,
    CompleteOr,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: Kind,
    /// Input nodes.
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Hidden nodes.
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Set size for n1/n2.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Epsilon for vanilla-hard.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Comma-separated positive integers for partition.
    #[arg(long, value_delimiter = ',')]
    items: Vec<u64>,
    /// Number of randomly fixed weights for complete-zero/complete-or.
    #[arg(long, default_value_t = 0)]
    fixed: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Multiplier on every sample-size constant.
    #[arg(long)]
    scale: Option<f64>,
    /// Largest search space, in bits, the witness search may enumerate.
    #[arg(long)]
    enum_cap: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    fn config(&self) -> reluprop::Result<TesterConfig> {
        let d = TesterConfig::default();
        let cfg = TesterConfig {
            epsilon: self.eps.unwrap_or(d.epsilon),
            delta: self.delta.unwrap_or(d.delta),
            lambda: self.lambda.unwrap_or(d.lambda),
            constant_scale: self.scale.unwrap_or(d.constant_scale),
            enum_cap: self.enum_cap.unwrap_or(d.enum_cap),
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TestArgs {
    /// One of: all-zero, or, one-sided-zero, one-sided-or, vanilla,
    /// all-zero-mhl, or-mhl, near-constant, monotone-or, monotone-zero.
    tester: String,
    network: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Input samples for the vanilla tester.
    #[arg(long)]
    samples: Option<usize>,
    /// Target bits for the near-constant tester, e.g. `0110`.
    #[arg(long)]
    target: Option<BitVector>,
    /// Independent runs; trial `i` uses a seed derived from `--seed` and `i`.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    spec: PathBuf,
    /// Overrides the seed in the experiment file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the trial count of every row.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report<'a> {
    tester: &'a str,
    trial: usize,
    #[serde(flatten)]
    verdict: &'a Verdict,
}

#[derive(Serialize)]
struct Meta {
    generator: GeneratorSpec,
    seed: u64,
    kind: &'static str,
    n: usize,
    outputs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    construction: Option<serde_json::Value>,
}

fn generator(args: &GenArgs) -> GeneratorSpec {
    let (n, m) = (args.n, args.m);
    match args.kind {
        Kind::Random => GeneratorSpec::Random {
            n,
            m,
            nonpositive_output: false,
        },
        Kind::AllZero => GeneratorSpec::AllZero { n, m },
        Kind::AllOnes => GeneratorSpec::AllOnes { n, m },
        Kind::VanillaHard => GeneratorSpec::VanillaHard { n, epsilon: args.eps },
        Kind::N1 => GeneratorSpec::N1 { n, k: args.k },
        Kind::N2 => GeneratorSpec::N2 { n, k: args.k },
        Kind::Partition => GeneratorSpec::Partition {
            items: args.items.clone(),
        },
        Kind::CompleteZero => GeneratorSpec::CompleteZero {
            n,
            m,
            fixed: args.fixed,
        },
        Kind::CompleteOr => GeneratorSpec::CompleteOr {
            n,
            m,
            fixed: args.fixed,
        },
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn gen(args: &GenArgs) -> Result<()> {
    let spec = generator(args);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (net, construction) = spec.build(&mut rng)?;
    format::save(&net, &args.out)?;
    let meta = Meta {
        generator: spec,
        seed: args.seed,
        kind: net.kind(),
        n: net.inputs(),
        outputs: net.outputs(),
        construction: construction.map(|c| serde_json::from_str(&c)).transpose()?,
    };
    let path = sidecar(&args.out);
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn test(args: &TestArgs) -> Result<()> {
    let cfg = args.config.config()?;
    let net = format::load(&args.network)?;
    let opts = TesterOptions {
        samples: args.samples,
        target: args.target.clone(),
    };
    let mut text = String::new();
    for trial in 0..args.trials {
        let seed = if args.trials == 1 {
            cfg.seed
        } else {
            harness::derive_seed(cfg.seed, trial as u64, "tester")
        };
        let verdict = harness::run_tester(&args.tester, &net, &cfg.with_seed(seed), &opts)?;
        let report = Report {
            tester: &args.tester,
            trial,
            verdict: &verdict,
        };
        text.push_str(&serde_json::to_string(&report)?);
        text.push('\n');
    }
    emit(args.out.as_deref(), text.as_bytes())
}

fn experiment(args: &ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let mut spec = ExperimentSpec::from_json(&text)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(t) = args.trials {
        for row in &mut spec.rows {
            match row {
                RowSpec::Test { trials, .. } | RowSpec::Game { trials, .. } => *trials = t,
            }
        }
    }
    let rows = harness::run_experiment(&spec, args.threads)?;
    emit(args.out.as_deref(), harness::to_csv_string(&rows)?.as_bytes())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::EnumerationTooLarge { .. }) => 3,
        Some(
            Error::Config(_)
            | Error::Params(_)
            | Error::Dimension(_)
            | Error::WeightOutOfRange { .. }
            | Error::NonFinite(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Test(a) => test(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
