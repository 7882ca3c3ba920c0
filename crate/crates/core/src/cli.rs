//! Command-line front end.
//!
//! Exit codes: 0 on success (and for --help/--version), 1 for bad invocations
//! or invalid parameters, 2 when a computation fails numerically.

use crate::error::{Error, Result};
use crate::experiments::{convergence_study, dichotomy_map, gronwall_sweep, lipschitz_gap_scan};
use crate::field::{mollify_sign_field, optimal_feedback, FeedbackField};
use crate::flow::{continuous_cost, solve_continuity};
use crate::measure::Measure1D;
use crate::output::{
    converge_document, dichotomy_document, discrete_document, emit_figure_data, gap_document,
    gronwall_document, meanfield_document, write_document, FigureKind, OutputFormat,
    TableDocument,
};
use crate::pmp::solve_fixed_point;
use crate::problem::ProblemParams;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::io::BufWriter;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FieldArg {
    /// The optimal feedback for the given lambda and T.
    Optimal,
    /// The regular-regime feedback, rejected when 0 < lambda <= T.
    SaturatedLinear,
    /// sign(y) smoothed to slope L through the origin.
    MollifiedSign,
    /// No drift at all.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WhichArg {
    Fig1,
    Fig2,
}

#[derive(Debug, Args)]
struct IoArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(
    name = "varflow",
    version,
    about = "Exact and particle solvers for variance-optimal control of interacting agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the N-agent problem exactly via its fixed-point conditions.
    SolveDiscrete {
        /// Terminal variance weight; any nonzero value.
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        /// Time horizon.
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        /// Number of agents (even).
        #[arg(long = "N", default_value_t = 40)]
        num_agents: usize,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Transport U(-1, 1) along a feedback field and report the cost.
    SolveMeanfield {
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, value_enum, default_value_t = FieldArg::Optimal)]
        field: FieldArg,
        /// Slope of the mollified sign field.
        #[arg(long, default_value_t = 4.0)]
        slope: f64,
        #[arg(long, default_value_t = 100_000)]
        particles: usize,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Compare N-agent costs with the mean-field cost of the same field.
    Converge {
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        /// Agent counts to evaluate.
        #[arg(long = "n-list", value_delimiter = ',', default_value = "4,16,64,256,1024")]
        n_list: Vec<usize>,
        #[arg(long, value_enum, default_value_t = FieldArg::Optimal)]
        field: FieldArg,
        #[arg(long, default_value_t = 4.0)]
        slope: f64,
        /// Particles for the mean-field reference cost.
        #[arg(long, default_value_t = 100_000)]
        particles: usize,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Cost gap of mollified sign fields against the singular-regime value.
    GapScan {
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        /// Slopes to scan, strictly increasing.
        #[arg(long = "l-list", value_delimiter = ',', default_value = "2,8,32,128")]
        l_list: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        particles: usize,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Stability sweep: W1 of flowed measure pairs against the e^{Lt} bound.
    Gronwall {
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, value_enum, default_value_t = FieldArg::Optimal)]
        field: FieldArg,
        #[arg(long, default_value_t = 4.0)]
        slope: f64,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Classify each lambda: Lipschitz minimizer or none.
    Dichotomy {
        /// Comma-separated lambda values.
        #[arg(long = "lambda-list", value_delimiter = ',', allow_hyphen_values = true)]
        lambda_list: Vec<f64>,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Emit plot data: fig1 fixed-point map, fig2 feedback heatmap.
    Figure {
        #[arg(long, value_enum)]
        which: WhichArg,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long = "N", default_value_t = 40)]
        num_agents: usize,
        /// Initial position for the fixed-point map.
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        x0: f64,
        /// Subdivisions per axis.
        #[arg(long, default_value_t = 200)]
        resolution: usize,
        #[command(flatten)]
        io: IoArgs,
    },
}

/// Parse `argv` (program name first) and execute. Never panics on bad input.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap routes help/version to stdout and errors (with usage) to
            // stderr on its own.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    }
}

fn error_exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        1
    } else {
        2
    }
}

fn build_field(kind: FieldArg, params: &ProblemParams, slope: f64) -> Result<FeedbackField> {
    match kind {
        FieldArg::Optimal => Ok(optimal_feedback(params)),
        FieldArg::SaturatedLinear => {
            FeedbackField::saturated_linear(params.lambda(), params.horizon())
        }
        FieldArg::MollifiedSign => mollify_sign_field(slope),
        FieldArg::Zero => FeedbackField::zero(params.horizon(), 2.0 + params.horizon()),
    }
}

fn emit<D: TableDocument>(io: &IoArgs, doc: &D) -> Result<()> {
    match &io.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| {
                Error::InvalidParameter(format!("cannot create {}: {e}", path.display()))
            })?;
            write_document(BufWriter::new(file), io.format.into(), doc)
        }
        None => write_document(std::io::stdout().lock(), io.format.into(), doc),
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::SolveDiscrete {
            lambda,
            horizon,
            num_agents,
            io,
        } => {
            let params = ProblemParams::new(lambda, horizon, num_agents)?;
            let solution = solve_fixed_point(&params)?;
            emit(&io, &discrete_document(&params, &solution))
        }
        Command::SolveMeanfield {
            lambda,
            horizon,
            field,
            slope,
            particles,
            dt,
            io,
        } => {
            let params = ProblemParams::new(lambda, horizon, 2)?;
            let field = build_field(field, &params, slope)?;
            let mu = Measure1D::uniform(-1.0, 1.0)?;
            let flow = solve_continuity(&field, &mu, particles, horizon, dt)?;
            let cost = continuous_cost(&params, &field, &mu, particles, dt)?;
            emit(&io, &meanfield_document(&params, &field, &flow, &cost)?)
        }
        Command::Converge {
            lambda,
            horizon,
            n_list,
            field,
            slope,
            particles,
            dt,
            io,
        } => {
            let params = ProblemParams::new(lambda, horizon, 2)?;
            let field = build_field(field, &params, slope)?;
            let rows = convergence_study(&params, &n_list, &field, particles, dt)?;
            emit(&io, &converge_document(&params, &field, particles, dt, rows))
        }
        Command::GapScan {
            lambda,
            horizon,
            l_list,
            particles,
            dt,
            io,
        } => {
            let params = ProblemParams::new(lambda, horizon, 2)?;
            let report = lipschitz_gap_scan(&params, &l_list, particles, dt)?;
            emit(&io, &gap_document(&params, particles, dt, report))
        }
        Command::Gronwall {
            lambda,
            horizon,
            field,
            slope,
            pairs,
            seed,
            dt,
            io,
        } => {
            let params = ProblemParams::new(lambda, horizon, 2)?;
            let field = build_field(field, &params, slope)?;
            let report = gronwall_sweep(&field, pairs, seed, horizon, dt)?;
            emit(&io, &gronwall_document(&field, pairs, seed, horizon, dt, report))
        }
        Command::Dichotomy {
            lambda_list,
            horizon,
            io,
        } => {
            let cells = dichotomy_map(&lambda_list, horizon)?;
            emit(&io, &dichotomy_document(horizon, &cells))
        }
        Command::Figure {
            which,
            lambda,
            horizon,
            num_agents,
            x0,
            resolution,
            io,
        } => {
            let params = ProblemParams::new(lambda, horizon, num_agents)?;
            let kind = match which {
                WhichArg::Fig1 => FigureKind::FixedPointMap,
                WhichArg::Fig2 => FigureKind::FeedbackHeatmap,
            };
            emit(&io, &emit_figure_data(kind, &params, x0, resolution)?)
        }
    }
}
