use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcmlp_core::data::{load_cifar100, ChannelStats, CifarFiles, Dataset};
use mcmlp_core::run::{train_run, RunManifest, RunOptions, MANIFEST_FILE};
use mcmlp_core::timing::{ratios, time_sizes, BenchOp};
use mcmlp_core::train::evaluate_top1;
use mcmlp_core::verify::{run_all, SuiteOptions};
use mcmlp_core::{count_macs, count_params, load_checkpoint, Error, RunConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mcmlp",
    version,
    about = "Train and check multi-coordinate-frame MLP image classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on CIFAR-100, writing a manifest, metrics.csv and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory with train.bin and test.bin.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Train on a class-stratified subset of K images.
        #[arg(long, value_name = "K")]
        subset: Option<usize>,
        /// Evaluate on a class-stratified subset of the test split.
        #[arg(long, value_name = "K")]
        val_subset: Option<usize>,
    },
    /// Print top-1 accuracy of a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
    },
    /// Run transform oracle and gradient-check suites.
    CheckTransforms {
        /// Range of 1D sizes, `MIN..MAX` (powers of two).
        #[arg(long, default_value = "2..1024")]
        sizes: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
    /// Time a transform at several sizes and print T(2N)/T(N).
    Bench {
        #[arg(long)]
        op: BenchOp,
        /// Comma-separated sizes.
        #[arg(long, value_delimiter = ',', default_value = "4096,8192,16384")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Print parameter and multiply-accumulate counts of a configuration.
    Params {
        #[arg(long)]
        config: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Validation(_) => EXIT_USAGE,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
            Error::Format(_)
            | Error::Checksum { .. }
            | Error::Version { .. }
            | Error::CheckpointShape { .. }
            | Error::Io(_) => EXIT_DATA,
            Error::NonFinite(_) => EXIT_NUMERIC,
            Error::Shape(_) => EXIT_INTERNAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} `{}` does not exist", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!(
            "{what} `{}` is not a directory",
            path.display()
        )))
    }
}

fn parse_size_range(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || usage(format!("--sizes expects MIN..MAX, got `{s}`"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo < 2 || hi < lo {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train {
            config,
            data,
            out,
            seed,
            epochs,
            subset,
            val_subset,
        } => {
            require_file(&config, "config")?;
            require_dir(&data, "data directory")?;
            let opts = RunOptions {
                config: RunConfig::load(&config)?,
                data_dir: data,
                out_dir: out,
                seed,
                epochs,
                subset,
                val_subset,
            };
            let total = epochs.unwrap_or(opts.config.train.epochs);
            let summary = train_run(&opts, |m, val| {
                println!(
                    "epoch {:>3}/{total}  loss {:.4}  lr {:.3e}  val top-1 {:.2}%  {:.1}s ({:.0} img/s)",
                    m.epoch + 1,
                    m.mean_loss,
                    m.lr,
                    100.0 * val,
                    m.seconds,
                    m.samples_per_sec
                );
            })?;
            println!(
                "best val top-1 {:.2}%; outputs in {}",
                100.0 * summary.best_val_top1,
                opts.out_dir.display()
            );
        }
        Command::Eval {
            checkpoint,
            data,
            batch_size,
        } => {
            require_file(&checkpoint, "checkpoint")?;
            require_dir(&data, "data directory")?;
            let (model, _) = load_checkpoint(&checkpoint)?;
            let files = CifarFiles::locate(&data)?;
            let manifest = checkpoint
                .parent()
                .map(|d| d.join(MANIFEST_FILE))
                .filter(|p| p.is_file());
            let stats = match manifest {
                Some(p) => RunManifest::read(p)?.normalization,
                None => ChannelStats::from_records(&load_cifar100(&files.train)?),
            };
            let test = Dataset::from_records(&load_cifar100(&files.test)?, &stats)
                .resize_nearest(model.config().image_size);
            let top1 = evaluate_top1(&model, &test, batch_size)?;
            println!("top-1: {:.2}%", 100.0 * top1);
        }
        Command::CheckTransforms {
            sizes,
            trials,
            seed,
        } => {
            let (min_size, max_size) = parse_size_range(&sizes)?;
            let opts = SuiteOptions {
                min_size,
                max_size,
                trials,
                seed,
                ..SuiteOptions::default()
            };
            let reports = run_all(&opts)?;
            for r in &reports {
                println!("{r}");
            }
            let failed = reports.iter().filter(|r| !r.passed()).count();
            if failed > 0 {
                return Err(Failure {
                    code: EXIT_NUMERIC,
                    message: format!("{failed} of {} checks failed", reports.len()),
                });
            }
            println!("all {} checks passed", reports.len());
        }
        Command::Bench { op, sizes, trials } => {
            let timings = time_sizes(op, &sizes, trials, 7)?;
            let r = ratios(&timings);
            // Ratio to the previous size; T(2N)/T(N) when sizes double.
            println!("{:>8}  {:>14}  {:>10}", "size", "ns", "ratio");
            for (i, t) in timings.iter().enumerate() {
                let ratio = i
                    .checked_sub(1)
                    .map_or("-".into(), |j| format!("{:.3}", r[j]));
                println!("{:>8}  {:>14.1}  {:>10}", t.size, t.median_ns, ratio);
            }
        }
        Command::Params { config } => {
            require_file(&config, "config")?;
            let cfg = RunConfig::load(&config)?;
            println!("params: {}", count_params(&cfg.model));
            println!("macs: {}", count_macs(&cfg.model));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
