//! Command-line front end: load market files, run the aggregate solver or
//! the cooling pipeline, compare against the reference oracles, and
//! validate solution files.
//!
//! Exit status: 0 on success, 1 on input errors, 2 when a solve does not
//! converge or a verification fails. Results go to `--output` (or stdout);
//! diagnostics go to stderr.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use itu_match::equilibrium::{
    anneal_with_trace, extract_integral, verify_outcome, CoolingSchedule, EquilibriumError,
};
use itu_match::io::{self, LoadedMarket};
use itu_match::ipfp::{self, SolveError, SolverConfig};
use itu_match::oracle::{simulate_heterogeneous_market, sinkhorn_reference, SimulationDraw};
use itu_match::system::{residual, scaled_residual_norm, Market, Potentials};
use itu_match::transfer::TransferSpec;

const THREADS_ENV: &str = "ITU_MATCH_THREADS";

#[derive(Parser)]
#[command(
    name = "itu-match",
    version,
    about = "Equilibrium solver for matching markets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
enum OutputFormat {
    /// Canonical JSON document with bit-faithful numbers.
    #[default]
    StructuredText,
    /// Flattened mass table for spreadsheet inspection.
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the margin system of an aggregate market file.
    Solve {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Convergence tolerance for sup-change and residual.
        #[arg(long)]
        tol: Option<f64>,
        /// Maximum number of full sweeps.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Override the market's temperature.
        #[arg(long)]
        temperature: Option<f64>,
        /// Anchor x type pinned to zero (balanced markets only).
        #[arg(long)]
        gauge_anchor: Option<String>,
        #[arg(long, value_enum, default_value_t)]
        format: OutputFormat,
        /// Include the dominant-diagonal diagnostic in the output.
        #[arg(long)]
        diagnose: bool,
    },
    /// Cool an individual market to a sharp, verified assignment.
    Anneal {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Starting temperature of the cooling schedule.
        #[arg(long)]
        t_initial: Option<f64>,
        /// Geometric cooling factor in (0, 1).
        #[arg(long)]
        ratio: Option<f64>,
        /// Number of temperatures in the schedule.
        #[arg(long)]
        steps: Option<usize>,
        /// Solve every temperature from a cold start.
        #[arg(long)]
        no_warm_start: bool,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, value_enum, default_value_t)]
        format: OutputFormat,
    },
    /// Compare the solver against the classical scaling reference (and
    /// optionally a Monte-Carlo simulation) on a TU market.
    OracleCompare {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        tol: Option<f64>,
        /// Seed for the simulation draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulate this many agents per type (0 = skip the simulation).
        #[arg(long, default_value_t = 0)]
        agents: usize,
    },
    /// Check a solution file against the market's margin equations.
    Validate {
        market: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
}

/// Failures carrying their process exit code: input problems exit 1,
/// solver or verification failures exit 2.
enum Failure {
    Input(anyhow::Error),
    Run(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Run(_) => 2,
        }
    }

    fn message(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Run(e) => e,
        }
    }
}

fn input_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

fn run_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Run(e.into())
}

fn main() -> ExitCode {
    env_logger::init();
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are input errors; --help/--version are not.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

/// `ITU_MATCH_THREADS` caps the rayon pool used for parallel half-sweeps.
fn configure_threads() {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return;
    };
    match value.parse::<usize>() {
        Ok(threads) if threads >= 1 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
            {
                eprintln!("warning: could not configure {threads} threads: {e}");
            }
        }
        _ => eprintln!("warning: ignoring invalid {THREADS_ENV}={value:?}"),
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve {
            input,
            output,
            tol,
            max_iter,
            temperature,
            gauge_anchor,
            format,
            diagnose,
        } => solve_command(
            input,
            output.as_deref(),
            tol,
            max_iter,
            temperature,
            gauge_anchor,
            format,
            diagnose,
        ),
        Command::Anneal {
            input,
            output,
            t_initial,
            ratio,
            steps,
            no_warm_start,
            tol,
            max_iter,
            format,
        } => anneal_command(
            input,
            output.as_deref(),
            t_initial,
            ratio,
            steps,
            no_warm_start,
            tol,
            max_iter,
            format,
        ),
        Command::OracleCompare {
            input,
            output,
            tol,
            seed,
            agents,
        } => oracle_compare_command(input, output.as_deref(), tol, seed, agents),
        Command::Validate {
            market,
            solution,
            tol,
        } => validate_command(market, solution, tol),
    }
}

fn solver_config(tol: Option<f64>, max_iter: Option<usize>) -> SolverConfig {
    let mut config = SolverConfig::default();
    if let Some(tol) = tol {
        config.tol = tol;
    }
    if let Some(max_iter) = max_iter {
        config.max_iter = max_iter;
    }
    config
}

fn load_aggregate(path: &std::path::Path) -> Result<Market, Failure> {
    match io::load_market(path).map_err(input_err)? {
        LoadedMarket::Aggregate(market) => Ok(market),
        LoadedMarket::Individual(_) => Err(input_err(anyhow::anyhow!(
            "{} holds an individual market; this command needs an aggregate one",
            path.display()
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_command(
    input: PathBuf,
    output: Option<&std::path::Path>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    temperature: Option<f64>,
    gauge_anchor: Option<String>,
    format: OutputFormat,
    diagnose: bool,
) -> Result<(), Failure> {
    let mut market = load_aggregate(&input)?;
    if let Some(temperature) = temperature {
        market = market.with_temperature(temperature).map_err(input_err)?;
    }
    let mut config = solver_config(tol, max_iter);
    if let Some(label) = gauge_anchor {
        if !market.balanced() {
            return Err(input_err(anyhow::anyhow!(
                "--gauge-anchor only applies to balanced markets"
            )));
        }
        let index = market.x_index(&label).ok_or_else(|| {
            input_err(anyhow::anyhow!(
                "gauge anchor '{label}' is not an x type of the market"
            ))
        })?;
        config.gauge_anchor = Some(index);
    }

    match ipfp::solve(&market, &config) {
        Ok(solution) => {
            let diagnostic = if diagnose {
                Some(
                    ipfp::jacobian_diagnostic(&market, &solution.potentials, 1e-6)
                        .map_err(input_err)?,
                )
            } else {
                None
            };
            let rendered = match format {
                OutputFormat::StructuredText => io::render_solution(
                    &market,
                    &solution.potentials,
                    &solution.matching,
                    &solution.report,
                    diagnostic.as_ref(),
                ),
                OutputFormat::Csv => {
                    output::solution_csv(&market, &solution.matching).map_err(Failure::Run)?
                }
            };
            output::write_output(output, &rendered).map_err(Failure::Run)?;
            eprintln!(
                "converged in {} sweeps, residual {:.3e}, {:?}",
                solution.report.iterations, solution.report.final_residual, solution.report.elapsed
            );
            Ok(())
        }
        Err(SolveError::NotConverged(partial)) => {
            let rendered = match format {
                OutputFormat::StructuredText => io::render_solution(
                    &market,
                    &partial.potentials,
                    &partial.matching,
                    &partial.report,
                    None,
                ),
                OutputFormat::Csv => {
                    output::solution_csv(&market, &partial.matching).map_err(Failure::Run)?
                }
            };
            output::write_output(output, &rendered).map_err(Failure::Run)?;
            Err(run_err(anyhow::anyhow!(
                "did not converge within {} sweeps (residual {:.3e}); partial state written",
                partial.report.iterations,
                partial.report.final_residual
            )))
        }
        Err(e) => Err(run_err(e)),
    }
}

#[allow(clippy::too_many_arguments)]
fn anneal_command(
    input: PathBuf,
    output: Option<&std::path::Path>,
    t_initial: Option<f64>,
    ratio: Option<f64>,
    steps: Option<usize>,
    no_warm_start: bool,
    tol: Option<f64>,
    max_iter: Option<usize>,
    format: OutputFormat,
) -> Result<(), Failure> {
    let imarket = match io::load_market(&input).map_err(input_err)? {
        LoadedMarket::Individual(imarket) => imarket,
        LoadedMarket::Aggregate(_) => {
            return Err(input_err(anyhow::anyhow!(
                "{} holds an aggregate market; annealing needs an individual one",
                input.display()
            )))
        }
    };
    let mut schedule = CoolingSchedule::default();
    if let Some(t_initial) = t_initial {
        schedule.t_initial = t_initial;
    }
    if let Some(ratio) = ratio {
        schedule.ratio = ratio;
    }
    if let Some(steps) = steps {
        schedule.steps = steps;
    }
    schedule.warm_start = !no_warm_start;
    schedule.validate().map_err(input_err)?;
    let config = solver_config(tol, max_iter);

    let result = anneal_with_trace(&imarket, &schedule, &config).map_err(|e| match e {
        EquilibriumError::Schedule(_) => input_err(e),
        other => run_err(other),
    })?;
    let integral =
        extract_integral(&imarket, &result.outcome, result.verification.slack).map_err(run_err)?;
    let record = verify_outcome(&imarket, &integral, result.verification.slack);
    if !record.passed {
        return Err(run_err(anyhow::anyhow!(
            "integral outcome failed verification: {}",
            record.summary()
        )));
    }
    let rendered = match format {
        OutputFormat::StructuredText => {
            io::render_outcome(&imarket, &integral, &record, &result.trace)
        }
        OutputFormat::Csv => output::outcome_csv(&imarket, &integral).map_err(Failure::Run)?,
    };
    output::write_output(output, &rendered).map_err(Failure::Run)?;
    let matched = integral.matched_pairs(record.threshold).len();
    eprintln!(
        "annealed over {} temperatures down to {:.3e}; {matched} matched pairs, verification {}",
        schedule.steps,
        schedule.final_temperature(),
        record.summary()
    );
    Ok(())
}

fn oracle_compare_command(
    input: PathBuf,
    output: Option<&std::path::Path>,
    tol: Option<f64>,
    seed: u64,
    agents: usize,
) -> Result<(), Failure> {
    let market = load_aggregate(&input)?;
    let mut phi = vec![vec![0.0; market.num_y()]; market.num_x()];
    for (x, y, spec) in market.transfers() {
        match spec {
            TransferSpec::Tu { phi: value } => phi[x][y] = *value,
            other => {
                return Err(input_err(anyhow::anyhow!(
                    "oracle comparison needs a TU market, pair ({}, {}) is {}",
                    market.x_types()[x],
                    market.y_types()[y],
                    other.family_name()
                )))
            }
        }
    }
    let config = solver_config(tol, None);
    let solution = ipfp::solve(&market, &config).map_err(run_err)?;
    let reference = sinkhorn_reference(
        &phi,
        market.n(),
        market.m(),
        market.temperature(),
        (config.tol * 0.01).max(1e-13),
    )
    .map_err(run_err)?;
    let monte_carlo = if agents > 0 {
        Some(
            simulate_heterogeneous_market(&market, agents, &SimulationDraw::new(seed))
                .map_err(run_err)?,
        )
    } else {
        None
    };
    let rendered = output::comparison_document(
        &market,
        &solution.matching,
        &reference,
        monte_carlo.as_ref().map(|m| (m, seed)),
    );
    output::write_output(output, &rendered).map_err(Failure::Run)?;
    Ok(())
}

fn validate_command(
    market_path: PathBuf,
    solution_path: PathBuf,
    tol: Option<f64>,
) -> Result<(), Failure> {
    let market = load_aggregate(&market_path)?;
    let text = std::fs::read_to_string(&solution_path).map_err(|e| {
        input_err(anyhow::anyhow!(
            "failed to read {}: {e}",
            solution_path.display()
        ))
    })?;
    let file = io::parse_solution_document(&text).map_err(input_err)?;
    let body = file.solution;
    if body.x_types != market.x_types() || body.y_types != market.y_types() {
        return Err(input_err(anyhow::anyhow!(
            "solution file types do not match the market's types"
        )));
    }
    if body.temperature != market.temperature() || body.balanced != market.balanced() {
        return Err(input_err(anyhow::anyhow!(
            "solution file temperature/balanced flags do not match the market"
        )));
    }
    let tol = tol.unwrap_or(SolverConfig::default().tol);
    let potentials = Potentials::new(body.u, body.v);
    let (x_res, y_res) = residual(&market, &potentials).map_err(input_err)?;
    let norm = scaled_residual_norm(&market, &x_res, &y_res);
    let passed = norm <= tol;
    let rendered = output::validation_document(norm, tol, passed);
    output::write_output(None, &rendered).map_err(Failure::Run)?;
    if passed {
        Ok(())
    } else {
        Err(run_err(anyhow::anyhow!(
            "max scaled residual {norm:.3e} exceeds tol {tol:.3e}"
        )))
    }
}
