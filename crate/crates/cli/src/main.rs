use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::Config;

#[derive(Parser, Debug)]
#[command(name = "fdlp", version, about = "FDLP envelope features and envelope dereverberation")]
struct Cli {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write features as CSV instead of the binary format
    #[arg(long, global = true)]
    csv: bool,
    /// Worker threads
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Fdlp,
    Fbank,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a reverberant corpus from a manifest
    Simulate {
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write one feature file per 2 s segment
    Extract {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "fdlp")]
        mode: Mode,
        /// Output prefix; files are named PREFIX.segNNN[.pad].feat
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a gain model on a simulated corpus
    Train {
        corpus: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Starting checkpoint
        #[arg(long)]
        init: Option<PathBuf>,
        /// Fine-tune through the feature chain (needs --init)
        #[arg(long)]
        joint: bool,
        /// Report CSV path [default: MODEL_OUT.report.csv]
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Dereverberate envelopes and write features
    Dereverb {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the gain computed from this clean recording instead of the model
        #[arg(long)]
        oracle_clean: Option<PathBuf>,
    },
    /// Run self-check suites: dsp, eq2, grad or all
    Verify {
        suite: String,
        /// Directory for report.txt (and checkpoint.bin for `all`)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("ERROR 1: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let code = commands::exit_code(&e);
            eprintln!("ERROR {code}: {e}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> fdlp_core::Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => Config::read(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(j) = cfg.jobs {
        if j == 0 {
            return Err(fdlp_core::Error::InvalidArgument("--jobs must be >= 1".into()));
        }
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match cli.command {
        Command::Simulate { manifest, out_dir } => commands::simulate(&cfg, &manifest, &out_dir),
        Command::Extract { input, mode, out } => commands::extract(&cfg, &input, mode, &out, cli.csv),
        Command::Train {
            corpus,
            model_out,
            epochs,
            lr,
            batch_size,
            init,
            joint,
            report,
        } => {
            if let Some(e) = epochs {
                if joint {
                    cfg.joint_epochs = e;
                } else {
                    cfg.epochs = e;
                }
            }
            if let Some(l) = lr {
                if joint {
                    cfg.joint_lr = l;
                } else {
                    cfg.lr = l;
                }
            }
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            cfg.validate().map_err(fdlp_core::Error::InvalidArgument)?;
            let report = report.unwrap_or_else(|| PathBuf::from(format!("{}.report.csv", model_out.display())));
            commands::train(&cfg, &corpus, &model_out, init.as_deref(), joint, &report)
        }
        Command::Dereverb {
            input,
            model,
            out,
            oracle_clean,
        } => commands::dereverb(&cfg, &input, &model, &out, oracle_clean.as_deref(), cli.csv),
        Command::Verify { suite, out } => commands::verify(&cfg, &suite, out.as_deref()),
    }
}
