use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pilotwave_cli::{parse_config, run, Registry, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "pilotwave",
    version,
    about = "Pilot-wave trajectory experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for ensemble integration.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List registered scenarios.
    List,
    /// Check a config file without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let registry = Registry::builtin();
    let code = match cli.command {
        Command::List => {
            print!("{}", registry.table());
            0
        }
        Command::Validate { config } => match parse_config(&config, &registry) {
            Ok(c) => {
                println!(
                    "{}: ok (scenario {}, seed {})",
                    config.display(),
                    c.scenario,
                    c.seed()
                );
                0
            }
            Err(errors) => {
                eprintln!("{errors}");
                EXIT_CONFIG
            }
        },
        Command::Run {
            config,
            seed,
            out,
            workers,
        } => {
            let mut c = match parse_config(&config, &registry) {
                Ok(c) => c,
                Err(errors) => {
                    eprintln!("{errors}");
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            if let Some(s) = seed {
                c.params.seed = s;
            }
            if let Some(o) = out {
                c.output_dir = o;
            }
            if workers == Some(0) {
                eprintln!("--workers: must be ≥ 1");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
            c.workers = workers.or(c.workers);
            match run(&c, &registry) {
                Ok(status) => {
                    for f in &status.failures {
                        eprintln!("FAIL {f}");
                    }
                    println!(
                        "{}: {} ({})",
                        c.scenario,
                        if status.exit_code == 0 {
                            "pass"
                        } else {
                            "fail"
                        },
                        status.out_dir.join("report.json").display()
                    );
                    status.exit_code
                }
                Err(e) => {
                    eprintln!("i/o error: {e}");
                    1
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
