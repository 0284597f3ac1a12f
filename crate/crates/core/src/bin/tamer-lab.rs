use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tamer_lab::analytics::{analyze_by_condition, load_logs, write_report_csv, Tail};
use tamer_lab::harness::{
    emit_csv, emit_plot_data, load_csv, run_experiment_in, summarize, write_summary, ExperimentConfig, Variant,
};
use tamer_lab::oracles::OracleConfig;
use tamer_lab::server::{serve, BIND_ENV, DEFAULT_BIND};
use tamer_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "tamer-lab", version, about = "TAMER vs Stochastic TAMER experiments and live feedback sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Optimal,
    Biased,
}

#[derive(Clone, Copy, ValueEnum)]
enum TailArg {
    One,
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupBy {
    Condition,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    PairedT,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch experiment and write per-episode records as CSV.
    Run {
        /// JSON experiment config. Flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Records CSV; a `.summary.csv` is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use seeds 0..N.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, value_enum)]
        oracle: Option<OracleArg>,
        /// Probability of a positive critique for the biased oracle.
        #[arg(long, requires = "oracle")]
        pos_rate: Option<f64>,
        /// Comma-separated list, e.g. `baseline,stochastic`.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<Variant>>,
        /// Run trials one at a time.
        #[arg(long)]
        serial: bool,
    },
    /// Per-variant, per-episode mean and std of a records CSV.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare feedback logs between conditions.
    Analyze {
        /// A `.jsonl` file or a directory of them.
        #[arg(long)]
        logs: PathBuf,
        #[arg(long, value_enum, default_value = "condition")]
        group_by: GroupBy,
        #[arg(long, value_enum, default_value = "paired-t")]
        test: TestArg,
        #[arg(long, value_enum, default_value = "two")]
        tail: TailArg,
        /// Order of comparison as `first,second`; the difference is first minus second.
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<String>>,
        /// Machine-readable CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve live sessions over HTTP and WebSocket.
    Serve {
        /// Defaults to $TAMER_LAB_ADDR, then 127.0.0.1:8080.
        #[arg(long)]
        addr: Option<SocketAddr>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, out, seeds, episodes, oracle, pos_rate, variants, serial } => {
            let (mut cfg, base) = match &config {
                Some(path) => (ExperimentConfig::load(path)?, path.parent().map(Path::to_path_buf)),
                None => (ExperimentConfig::new(OracleConfig::optimal()), None),
            };
            if let Some(n) = seeds {
                cfg.seeds = (0..n).collect();
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            match (oracle, pos_rate) {
                (Some(OracleArg::Optimal), None) => cfg.oracle = OracleConfig { seed: cfg.oracle.seed, ..OracleConfig::optimal() },
                (Some(OracleArg::Optimal), Some(_)) => {
                    return Err(Error::InvalidConfig("--pos-rate applies only to the biased oracle".into()))
                }
                (Some(OracleArg::Biased), Some(q)) => cfg.oracle = OracleConfig { seed: cfg.oracle.seed, ..OracleConfig::biased(q) },
                (Some(OracleArg::Biased), None) => {
                    return Err(Error::InvalidConfig("--oracle biased needs --pos-rate".into()))
                }
                (None, _) => {}
            }
            if let Some(v) = variants {
                cfg.variants = v;
            }
            if serial {
                cfg.parallel = false;
            }
            if let Some(o) = out {
                cfg.output = Some(o);
            }

            let records = run_experiment_in(&cfg, base.as_deref())?;
            let rows = summarize(&records)?;
            match &cfg.output {
                Some(path) => {
                    emit_csv(&records, path)?;
                    let summary = path.with_extension("summary.csv");
                    emit_plot_data(&rows, &summary)?;
                    eprintln!("wrote {} records to {} and summary to {}", records.len(), path.display(), summary.display());
                }
                None => write_summary(&rows, std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Summarize { input, out } => {
            let rows = summarize(&load_csv(&input)?)?;
            match out {
                Some(path) => emit_plot_data(&rows, path),
                None => write_summary(&rows, std::io::stdout().lock()),
            }
        }
        Command::Analyze { logs, group_by: GroupBy::Condition, test: TestArg::PairedT, tail, order, out } => {
            let logs = load_logs(&logs)?;
            let tail = match tail {
                TailArg::One => Tail::OneTailedGreater,
                TailArg::Two => Tail::TwoTailed,
            };
            let order = match order.as_deref() {
                None => None,
                Some([first, second]) => Some((first.as_str(), second.as_str())),
                Some(_) => return Err(Error::InvalidConfig("--order takes exactly two conditions".into())),
            };
            let report = analyze_by_condition(&logs, tail, order)?;
            println!("{report}");
            if let Some(path) = out {
                write_report_csv(&report, std::fs::File::create(path)?)?;
            }
            Ok(())
        }
        Command::Serve { addr } => {
            let addr = match addr {
                Some(a) => a,
                None => std::env::var(BIND_ENV)
                    .unwrap_or_else(|_| DEFAULT_BIND.to_string())
                    .parse()
                    .map_err(|e| Error::InvalidConfig(format!("{BIND_ENV}: {e}")))?,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                eprintln!("listening on http://{addr}");
                serve(addr).await
            })?;
            Ok(())
        }
    }
}
