use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pnp_core::config::{load_config, load_config_with_mode, Mode};
use pnp_core::mms;
use pnp_core::run::{self, RunFailure, RunOutcome};

#[derive(Parser)]
#[command(name = "pnp", version, about = "Poisson-Nernst-Planck finite-difference solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Worker-thread cap. The solver is single-threaded, so every value
        /// gives bit-reproducible output.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Output directory (overrides io.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a manufactured-solution refinement study and print the table.
    MmsTable {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the operator and solver self-checks.
    Check,
}

fn fail(f: RunFailure) -> ExitCode {
    eprintln!("{}", f.machine_line());
    ExitCode::from(f.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, threads, out } => {
            if threads == 0 {
                eprintln!("error kind=ValidationError exit=2 message=\"--threads must be at least 1\"");
                return ExitCode::from(2);
            }
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(e.into()),
            };
            match run::run(&cfg, out.as_deref()) {
                Ok(RunOutcome::Simulation { steps, last, .. }) => {
                    println!(
                        "done steps={steps} time={} energy={:e} mass_n={:e} mass_p={:e} c_min={:e}",
                        last.time, last.energy, last.mass_n, last.mass_p, last.c_min
                    );
                    ExitCode::SUCCESS
                }
                Ok(RunOutcome::Single(e)) => {
                    println!(
                        "h={} dt={:e} steps={} err_n={:.4e} err_p={:.4e} err_phi={:.4e}",
                        e.h, e.dt, e.steps, e.err_n, e.err_p, e.err_phi
                    );
                    ExitCode::SUCCESS
                }
                Ok(RunOutcome::Convergence(rows)) => {
                    print!("{}", mms::table_text(&rows));
                    ExitCode::SUCCESS
                }
                Err(f) => fail(f),
            }
        }
        Command::MmsTable { config, out } => {
            let cfg = match load_config_with_mode(&config, Mode::MmsConvergence) {
                Ok(c) if c.mode == Mode::MmsConvergence => c,
                Ok(_) => {
                    eprintln!("error kind=ValidationError exit=2 message=\"mms-table needs mode = mms-convergence\"");
                    return ExitCode::from(2);
                }
                Err(e) => return fail(e.into()),
            };
            match run::run(&cfg, out.as_deref()) {
                Ok(RunOutcome::Convergence(rows)) => {
                    print!("{}", mms::table_text(&rows));
                    ExitCode::SUCCESS
                }
                Ok(_) => ExitCode::SUCCESS,
                Err(f) => fail(f),
            }
        }
        Command::Check => {
            let checks = run::self_check();
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
    }
}
