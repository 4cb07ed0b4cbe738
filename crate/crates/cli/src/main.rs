use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use lambda_lqg::report::{self, SweepParameter};
use lambda_lqg::scenario::{ArchitectureChoice, Scenario};
use lambda_lqg::{Error, ErrorClass};

const EXIT_CONFIG: u8 = 2;
const EXIT_SYNTHESIS: u8 = 3;
const EXIT_ORDERING: u8 = 4;

/// Delayed decentralized LQG design for a two-actuator wavelength loop.
#[derive(Parser)]
#[command(name = "lambda-lqg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Base seed for Monte Carlo runs and traces.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the scenario.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo ensembles.
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated architectures, e.g. `dec,blockdiag`.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    arch: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize, evaluate and compare the scenario's architectures.
    Run(Common),
    /// Sweep one parameter over a grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// d2, rho_p, fir_length or interburst.
        #[arg(long)]
        parameter: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        grid: Vec<f64>,
    },
    /// Write tidy CSV tables for the reports found in a directory.
    EmitPlotdata {
        /// Report directory.
        dir: PathBuf,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
}

fn load(path: &Path) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(path)
        .map_err(Error::from)
        .with_context(|| format!("config: reading {}", path.display()))?;
    Scenario::from_json(&text).with_context(|| format!("config: {}", path.display()))
}

fn prepare(common: &Common) -> anyhow::Result<(Scenario, PathBuf)> {
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("config: --jobs")?;
    }
    let mut sc = load(&common.config)?;
    if let Some(seed) = common.seed {
        sc.monte_carlo.base_seed = seed;
    }
    if let Some(list) = &common.arch {
        sc.architectures = list
            .iter()
            .map(|a| a.trim().parse::<ArchitectureChoice>())
            .collect::<Result<_, Error>>()
            .context("config: --arch")?;
        sc.validate().context("config: --arch")?;
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&sc.output_dir));
    Ok((sc, out))
}

fn execute(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run(common) => {
            let (sc, out) = prepare(&common)?;
            let comparison = report::run(&sc, &out).context("run")?;
            print!("{}", report::summary_table(&comparison));
            log::info!("reports written to {}", out.display());
            if comparison.ordering.is_some_and(|o| !o.holds) {
                eprintln!("error[ordering]: cen_d1 <= dec <= blockdiag does not hold");
                return Ok(EXIT_ORDERING);
            }
        }
        Command::Sweep {
            common,
            parameter,
            grid,
        } => {
            let (sc, out) = prepare(&common)?;
            let parameter: SweepParameter = parameter.parse().context("config: --parameter")?;
            let result = report::sweep(&sc, parameter, &grid).context("sweep")?;
            fs::create_dir_all(&out).map_err(Error::from).context("sweep: output")?;
            let csv = result.to_csv().context("sweep")?;
            fs::write(out.join(report::SWEEP_FILE), &csv)
                .map_err(Error::from)
                .context("sweep: output")?;
            print!("{csv}");
            if result.verdict.is_some_and(|v| v.asserted && !v.holds) {
                eprintln!("error[ordering]: sweep monotonicity check failed");
                return Ok(EXIT_ORDERING);
            }
        }
        Command::EmitPlotdata { dir } => {
            for path in report::emit_plotdata(&dir).context("emit-plotdata")? {
                println!("{}", path.display());
            }
        }
        Command::Validate { config } => {
            let sc = load(&config)?;
            let model = sc.build().context("config")?;
            println!(
                "{}: valid (h = {:e} s, d1 = {}, d2 = {}, {} states)",
                sc.name,
                model.h,
                model.delays.d1,
                model.delays.d2,
                model.plant.realization.n_states()
            );
        }
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.class() == ErrorClass::Synthesis => EXIT_SYNTHESIS,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAMBDA_LQG_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error[{err}]: {:#}", err.root_cause());
            ExitCode::from(exit_code(&err))
        }
    }
}
