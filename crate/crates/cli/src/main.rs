//! `stardil`: command line front end. Every command prints one report and
//! exits 0 on PASS, 1 on FAIL and 2 on error.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "stardil", version, about = "Dilations of positive semidefinite maps on finite *-semigroupoids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: Global,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Override the verification budget of numeric checks.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Seed for sampling commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Plain text instead of JSON.
    #[arg(long, global = true)]
    pub human: bool,
    /// Write the produced document here instead of embedding it in the report.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FreeKind {
    Plain,
    Star,
    Groupoid,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the semigroupoid, involution and unit axioms.
    Validate { sgd: PathBuf },
    /// Structural flags of a valid table.
    Classify { sgd: PathBuf },
    /// Truncated free object of a graph.
    FreeGen {
        graph: PathBuf,
        #[arg(long)]
        lmax: usize,
        #[arg(long, value_enum, default_value = "star")]
        kind: FreeKind,
        /// Leave out the empty words (plain kind only).
        #[arg(long)]
        no_units: bool,
    },
    /// Fibre Gram positivity.
    PsdCheck { map: PathBuf },
    /// Boundedness constants from the minimal dilation.
    Bound { map: PathBuf },
    /// Build the minimal orthogonal dilation.
    Dilate { map: PathBuf },
    /// Residuals of a dilation against a map.
    Verify { map: PathBuf, dilation: PathBuf },
    /// Unitary equivalence of two dilations of one map.
    Equiv { map: PathBuf, first: PathBuf, second: PathBuf },
    /// Compress an orthogonal dilation to a minimal one.
    Minimalize { map: PathBuf, dilation: PathBuf },
    /// Unital embedding `W_x = Σ V(s)`; dilates the map if no dilation is given.
    Embed { map: PathBuf, dilation: Option<PathBuf> },
    /// Validate a Cuntz-Krieger-Toeplitz family.
    CktCheck { family: PathBuf },
    /// Representation of the truncated free *-semigroupoid induced by a family.
    Induce {
        family: PathBuf,
        #[arg(long)]
        lmax: usize,
    },
    /// Aggregated left regular representation.
    Leftreg {
        sgd: PathBuf,
        /// Aggregation as a comma-separated list, one point per object.
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<usize>>,
    },
    /// Apply the amplified map to `A` and test positivity of `T(A*A)`.
    Amplify { map: PathBuf, element: PathBuf },
    /// Sampled complete positivity.
    CpCheck {
        map: PathBuf,
        #[arg(long, default_value_t = 3)]
        n_max: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// `(I − a*a)^{1/2}` by its power series.
    SqrtSeries {
        matrix: PathBuf,
        /// Tail bound at which the series stops.
        #[arg(long, default_value_t = 1e-12)]
        series_tol: f64,
    },
    /// Cyclic representation of a positive form.
    FormRep { form: PathBuf },
}

fn init_threads() {
    if let Some(n) = std::env::var("STARDIL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let start = Instant::now();
    match commands::dispatch(&cli.command, &cli.global) {
        Ok(mut report) => {
            report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            let text = if cli.global.human { report.to_human() } else { report.to_json() };
            print!("{text}");
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
