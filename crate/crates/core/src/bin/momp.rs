use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use momp::experiments::{run_admap, run_compare, run_eval, run_generate, run_localize, run_train, ExperimentConfig};
use momp::experiments::io::CHECKPOINT;
use momp::Error;

#[derive(Parser)]
#[command(name = "momp", version, about = "Sparse MIMO-OFDM channel recovery with calibrated dictionaries")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset directory written by `generate` (default: the output directory).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint written by `train` (default: <out>/checkpoint.json).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Synthesize training and held-out datasets.
    Generate(Common),
    /// Calibrate dictionary parameters on the training observations.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Held-out NMSE per SNR and parameter errors.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Compare calibration with MOD dictionary learning on one dimension.
    CompareMod(Common),
    /// Localization errors before and after calibration.
    Localize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Angle-delay energy map of a held-out observation.
    Admap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
}

fn load_config(common: &Common) -> momp::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve(common: &Common, data: &DataArgs) -> (PathBuf, PathBuf) {
    let dir = data.data.clone().unwrap_or_else(|| common.out.clone());
    let ck = data.checkpoint.clone().unwrap_or_else(|| common.out.join(CHECKPOINT));
    (dir, ck)
}

fn run(verb: &Verb) -> momp::Result<Vec<PathBuf>> {
    let common = match verb {
        Verb::Generate(c) | Verb::CompareMod(c) => c,
        Verb::Train { common, .. } | Verb::Eval { common, .. } | Verb::Localize { common, .. } | Verb::Admap { common, .. } => common,
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(common)?;
    let out: &Path = &common.out;
    match verb {
        Verb::Generate(_) => run_generate(&cfg, out),
        Verb::CompareMod(_) => run_compare(&cfg, out),
        Verb::Train { data, .. } => run_train(&cfg, &resolve(common, data).0, out),
        Verb::Eval { data, .. } => {
            let (dir, ck) = resolve(common, data);
            run_eval(&cfg, &dir, &ck, out)
        }
        Verb::Localize { data, .. } => {
            let (dir, ck) = resolve(common, data);
            run_localize(&cfg, &dir, &ck, out)
        }
        Verb::Admap { data, .. } => {
            let (dir, ck) = resolve(common, data);
            run_admap(&cfg, &dir, ck.exists().then_some(ck.as_path()), out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.verb) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::Numerical(_) | Error::RankDeficient(_) => 3,
                _ => 1,
            })
        }
    }
}
