use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use porodyn::scenario::verify::{verify_suite, VerifyKind, VerifyOptions};
use porodyn::scenario::{parse_config, run_scenario, ScenarioConfig, ENV_OUT_DIR};
use porodyn::Error;

#[derive(Parser)]
#[command(name = "porodyn", version, about = "Eulerian poro-elastodynamics with damage and water diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the environment and the config.
        #[arg(long, env = ENV_OUT_DIR)]
        out: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        /// Cells per axis.
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a verification suite and print its report.
    Verify {
        kind: VerifyKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(path: &PathBuf) -> Result<ScenarioConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn config_error(e: &Error) -> ExitCode {
    eprintln!("config error: {e}");
    if let Error::Hypotheses(v) = e {
        for x in v {
            eprintln!("  {x}");
        }
    }
    ExitCode::from(EXIT_CONFIG)
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::ConfigSyntax { .. } | Error::Hypotheses(_))
}

fn simulate(config: PathBuf, out: Option<PathBuf>, tau: Option<f64>, cells: Option<usize>, seed: Option<u64>) -> ExitCode {
    let mut cfg = match load(&config) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    if let Some(t) = tau {
        cfg.time.tau = t;
    }
    if let Some(n) = cells {
        cfg.domain.n = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Err(e) = cfg.validate() {
        return config_error(&e);
    }
    let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match run_scenario(&cfg, &dir) {
        Ok(s) => {
            println!("{}", serde_json::to_string(&s).expect("summary serialises"));
            if let Some(m) = &s.message {
                eprintln!("{m}");
            }
            ExitCode::from(s.status.exit_code() as u8)
        }
        Err(e) if is_config_error(&e) => config_error(&e),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}

fn verify(kind: VerifyKind, config: Option<PathBuf>, samples: Option<usize>, levels: Option<usize>, seed: u64) -> ExitCode {
    let config = match config.as_ref().map(load).transpose() {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    match verify_suite(kind, &VerifyOptions { config, samples, levels, seed }) {
        Ok(r) => {
            println!("{}", serde_json::to_string_pretty(&r).expect("report serialises"));
            ExitCode::from(if r.passed { 0 } else { EXIT_FAILED })
        }
        Err(e) if is_config_error(&e) => config_error(&e),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match cli.command {
        Command::Simulate { config, out, tau, cells, seed } => simulate(config, out, tau, cells, seed),
        Command::Verify { kind, config, samples, levels, seed } => verify(kind, config, samples, levels, seed),
    }
}
