use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nhssa::components::Thresholds;
use nhssa::pipeline::{EmbeddingChoice, PipelineConfig, DEFAULT_LAMBDA_C};
use nhssa_cli::commands::{
    cmd_bench, cmd_decompose, cmd_grid, cmd_synth, load_spec, parse_range, parse_rank,
    DecomposeOptions,
};
use nhssa_cli::service::{serve, AppState};
use nhssa_cli::session::Session;
use nhssa_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "nhssa",
    version,
    about = "Exponential retrieval from noisy time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ThresholdSet {
    Strict,
    Noisy,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a series and write a session directory.
    Decompose {
        input: PathBuf,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        mbar: Option<usize>,
        /// Pick (d, mbar) by the condition-number grid search.
        #[arg(long)]
        auto_grid: bool,
        #[arg(long, default_value_t = DEFAULT_LAMBDA_C)]
        lambda_c: f64,
        /// gap or fixed:N
        #[arg(long, default_value = "gap")]
        rank: String,
        #[arg(long, value_enum, default_value = "strict")]
        thresholds: ThresholdSet,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a Monte Carlo experiment.
    Bench {
        #[arg(long)]
        preset: Option<String>,
        /// Experiment spec as JSON.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        realizations: Option<usize>,
        /// Base seed; realization r uses seed + r.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
    /// Condition number of X0 over a (d, mbar) grid.
    Grid {
        input: PathBuf,
        #[arg(long, default_value = "4:30")]
        d_range: String,
        #[arg(long, default_value = "1:12")]
        mbar_range: String,
        #[arg(long, default_value = "grid-out")]
        out: PathBuf,
    },
    /// Serve a session to the inspector UI.
    Serve {
        session: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory with a built UI to serve at /.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Write one realization of a preset's signal plus noise.
    Synth {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Decompose {
            input,
            d,
            mbar,
            auto_grid,
            lambda_c,
            rank,
            thresholds,
            out,
            seed,
        } => {
            let embedding = match (auto_grid, d, mbar) {
                (true, None, None) => EmbeddingChoice::auto(),
                (false, Some(d), Some(mbar)) => EmbeddingChoice::Fixed { d, mbar },
                _ => {
                    return Err(CliError::Usage(
                        "give --d and --mbar, or --auto-grid".into(),
                    ))
                }
            };
            let config = PipelineConfig {
                embedding,
                rank_policy: parse_rank(&rank)?,
                lambda_c,
                thresholds: match thresholds {
                    ThresholdSet::Strict => Thresholds::default(),
                    ThresholdSet::Noisy => Thresholds::noisy(),
                },
            };
            let session = cmd_decompose(&DecomposeOptions {
                input,
                config,
                out: out.clone(),
                seed,
            })?;
            println!("session {} written to {}", session.file.id, out.display());
            println!("frequencies: {:?}", session.derived.frequencies);
        }
        Command::Bench {
            preset,
            spec,
            realizations,
            seed,
            out,
        } => {
            let mut spec = load_spec(preset.as_deref(), spec.as_deref())?;
            if let Some(n) = realizations {
                spec.realizations = n;
            }
            if let Some(s) = seed {
                spec.noise.seed = s;
            }
            let stats = cmd_bench(&spec, &out)?;
            print!("{}", nhssa::bench::render_markdown(&stats));
        }
        Command::Grid {
            input,
            d_range,
            mbar_range,
            out,
        } => {
            let grid = cmd_grid(
                &input,
                parse_range(&d_range)?,
                parse_range(&mbar_range)?,
                &out,
            )?;
            println!(
                "min cond {:e} at d = {}, mbar = {}",
                grid.min_cond(),
                grid.argmin.d,
                grid.argmin.mbar
            );
        }
        Command::Serve {
            session,
            port,
            host,
            ui_dir,
        } => {
            if !session.exists() {
                return Err(CliError::Usage(format!(
                    "session {} does not exist",
                    session.display()
                )));
            }
            let loaded = Session::load(&session)?;
            let state = AppState::new(loaded, session);
            let rt =
                tokio::runtime::Runtime::new().map_err(|e| CliError::io("tokio runtime", e))?;
            rt.block_on(serve(state, &format!("{host}:{port}"), ui_dir))?;
        }
        Command::Synth {
            preset,
            seed,
            epsilon,
            out,
        } => {
            let f = cmd_synth(&preset, seed, epsilon, &out)?;
            println!("{} samples written to {}", f.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
