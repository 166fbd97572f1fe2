use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use driftlab::cli::{run, RunOptions};

/// Numerical laboratory for the Dirichlet problem
/// -div(grad u + A grad u) = f with rough skew-symmetric drift.
#[derive(Parser)]
#[command(name = "driftlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (plain `key = value` under a [section]).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports and field files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for the random test-function generators.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a drift problem through the truncation schedule.
    Solve(Common),
    /// Norm diagnostics and uniqueness-criterion classification.
    Norms(Common),
    /// Construct a skew potential with div A = a and verify it weakly.
    Potential(Common),
    /// Lipschitz truncation of a discrete field.
    Truncate(Common),
    /// Level-set energy inequality replay.
    Caccioppoli(Common),
    /// The nonuniqueness example on the unit ball.
    Zhikov {
        #[command(flatten)]
        common: Common,
        /// Override the mesh resolution.
        #[arg(long)]
        resolution: Option<u32>,
        /// Override the excision radius.
        #[arg(long)]
        rho: Option<f64>,
        /// Override the truncation schedule (comma separated).
        #[arg(long)]
        schedule: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, overrides) = match cli.command {
        Command::Solve(c) => ("solve", c, vec![]),
        Command::Norms(c) => ("norms", c, vec![]),
        Command::Potential(c) => ("potential", c, vec![]),
        Command::Truncate(c) => ("truncate", c, vec![]),
        Command::Caccioppoli(c) => ("caccioppoli", c, vec![]),
        Command::Zhikov {
            common,
            resolution,
            rho,
            schedule,
        } => {
            let mut ov = Vec::new();
            if let Some(r) = resolution {
                ov.push(("resolution".to_string(), r.to_string()));
            }
            if let Some(r) = rho {
                ov.push(("rho".to_string(), r.to_string()));
            }
            if let Some(s) = schedule {
                ov.push(("schedule".to_string(), s));
            }
            ("zhikov", common, ov)
        }
    };
    let opts = RunOptions {
        subcommand: name.to_string(),
        config_path: common.config,
        out_dir: common.out,
        threads: common.threads,
        seed: common.seed,
        overrides,
    };
    match run(&opts) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
