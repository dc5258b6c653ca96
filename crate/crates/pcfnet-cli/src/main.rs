//! `pcfnet`: batch front end for trace, exponent and Dirichlet form runs.
//!
//! Exit status is 0 on success (an infeasible inverse is a finding, not a
//! failure), 2 on bad input and 3 when an internal check fails.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pcfnet::Error;

use report::Format;

#[derive(Parser)]
#[command(name = "pcfnet", version, about = "Resistance networks and Besov exponents on p.c.f. fractals")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// Exact rational arithmetic.
    #[arg(long, global = true, conflicts_with = "float")]
    exact: bool,
    /// 128-bit float arithmetic.
    #[arg(long, global = true)]
    float: bool,
    /// Default mode when neither flag is given.
    #[arg(long, global = true, env = "PCFNET_MODE", default_value = "exact", hide_env_values = true)]
    default_mode: Mode,
    #[arg(long, global = true, value_enum, default_value = "table")]
    pub format: Format,
    /// Worker threads; 1 runs the sequential path.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Fractal description file (JSON), used in place of a catalog name.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Record wall time in the report.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Float,
}

impl Global {
    pub fn mode(&self) -> Mode {
        if self.exact {
            Mode::Exact
        } else if self.float {
            Mode::Float
        } else {
            self.default_mode
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Boundary resistances R_n(p,q) per level, with cross-checks.
    Trace(commands::TraceArgs),
    /// Rates, R*, R#, σ*, σ# and density verdicts.
    Exponents(commands::ExponentsArgs),
    /// Self-similar weights or the reverse-recursive construction.
    Dirichlet(commands::DirichletArgs),
    /// Energy tables and Besov semi-norms of the built-in witnesses.
    Witness(commands::WitnessArgs),
    /// Writes a function's level-n vertex values.
    Export(commands::ExportArgs),
    /// Reads an exported table and reports its energy.
    Energy(commands::EnergyArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Config(_) | Error::UnknownFractal { .. } | Error::Domain(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.global.jobs {
        #[cfg(feature = "parallel")]
        if j > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
                eprintln!("pcfnet: cannot size the thread pool: {e}");
                return ExitCode::from(3);
            }
        }
        if j == 0 {
            eprintln!("pcfnet: --jobs must be at least 1");
            return ExitCode::from(2);
        }
    }
    let echo = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
    let start = Instant::now();
    let out = match &cli.command {
        Command::Trace(a) => commands::trace(&cli.global, a),
        Command::Exponents(a) => commands::exponents(&cli.global, a),
        Command::Dirichlet(a) => commands::dirichlet(&cli.global, a),
        Command::Witness(a) => commands::witness(&cli.global, a),
        Command::Export(a) => match commands::export(&cli.global, a) {
            Ok(text) => {
                print!("{text}");
                return ExitCode::SUCCESS;
            }
            Err(e) => Err(e),
        },
        Command::Energy(a) => commands::energy(&cli.global, a),
    };
    match out {
        Ok(mut report) => {
            report.command = echo;
            if cli.global.timing {
                report.wall_time = Some(format!("{:.3} s", start.elapsed().as_secs_f64()));
            }
            print!("{}", report.render(cli.global.format));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pcfnet: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
