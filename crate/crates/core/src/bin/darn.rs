use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use darn::cli::{self, Profile};

#[derive(Parser)]
#[command(name = "darn", version, about = "Multi-source domain aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train as described by a JSON experiment config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the projection, Jacobian and power-iteration property checks.
    Verify {
        #[arg(long, value_enum, default_value = "default")]
        profile: Profile,
        /// Test hook: loosen the threshold tolerance to 1e-1.
        #[arg(long, hide = true)]
        inject_nu_fault: bool,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let code = match args.command {
        Command::Run { config, out } => cli::run(&config, out.as_deref()),
        Command::Verify {
            profile,
            inject_nu_fault,
        } => {
            let mut settings = profile.settings();
            if inject_nu_fault {
                settings.nu_tol = 1e-1;
            }
            let report = cli::verify(&settings);
            print!("{}", report.table());
            if report.passed() {
                println!("all checks passed");
                cli::EXIT_OK
            } else {
                eprintln!("failed: {}", report.failing().join(", "));
                cli::EXIT_FAILURE
            }
        }
    };
    ExitCode::from(code as u8)
}
