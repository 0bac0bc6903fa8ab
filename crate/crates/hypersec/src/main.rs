use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hypersec::cli::{
    apply_config_text, dump_config, parse_strategies, report_summaries, run, validate_config,
    CliError, ConfigError, ProblemKind, RunConfig,
};
use hypersec::solver::LineSearch;

/// Quasi-Newton solver benchmarks over sparse nonlinear systems.
#[derive(Parser)]
#[command(name = "hypersec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured strategies and write convergence traces.
    Run(RunArgs),
    /// Print the effective configuration without running.
    DumpConfig(RunArgs),
    /// List the available benchmark problems.
    ListProblems,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (INI-style); flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem to run: linear3, nonlinear3 or transport.
    #[arg(long)]
    problem: Option<String>,
    /// Comma-separated strategies: hypersecant, broyden, fd.
    #[arg(long)]
    strategies: Option<String>,
    /// Comma-separated start point (defaults to the problem's standard one).
    #[arg(long)]
    x0: Option<String>,
    /// Mesh cells of the transport problem.
    #[arg(long)]
    n_cells: Option<usize>,
    /// Time step of the transport problem.
    #[arg(long)]
    dt: Option<f64>,
    /// Implicitness of the transport step (0 explicit .. 1 implicit).
    #[arg(long)]
    theta: Option<f64>,
    /// Dirichlet edge value of the transport profile.
    #[arg(long)]
    edge_value: Option<f64>,
    /// Amplitude of the polynomial initial profile.
    #[arg(long)]
    profile_amplitude: Option<f64>,
    /// Shape exponent of the polynomial initial profile.
    #[arg(long)]
    profile_shape: Option<u32>,
    /// Absolute residual tolerance (max-norm).
    #[arg(long)]
    tol: Option<f64>,
    /// Residual tolerance relative to the initial residual.
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Step control: off or backtracking.
    #[arg(long)]
    line_search: Option<String>,
    /// Output directory for traces (default: $HYPERSEC_OUT_DIR or ./out).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write a gnuplot script referencing the trace files.
    #[arg(long)]
    gnuplot: bool,
    /// Write the effective configuration to this path before running.
    #[arg(long)]
    dump_config: Option<PathBuf>,
}

fn parse_csv_f64(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| ConfigError { key: key.to_string(), message: e.to_string() })
        })
        .collect()
}

fn build_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|source| CliError::Io { path: path.clone(), source })?;
        apply_config_text(&mut config, &text)?;
    }
    if let Some(problem) = &args.problem {
        config.problem = problem
            .parse::<ProblemKind>()
            .map_err(|e| ConfigError { key: "problem".into(), message: e })?;
    }
    if let Some(strategies) = &args.strategies {
        config.strategies = parse_strategies("strategies", strategies)?;
    }
    if let Some(x0) = &args.x0 {
        config.x0 = Some(parse_csv_f64("x0", x0)?);
    }
    if let Some(n_cells) = args.n_cells {
        config.transport.n_cells = n_cells;
    }
    if let Some(dt) = args.dt {
        config.transport.dt = dt;
    }
    if let Some(theta) = args.theta {
        config.transport.theta = theta;
    }
    if let Some(edge) = args.edge_value {
        config.transport.edge_value = edge;
    }
    if let Some(amp) = args.profile_amplitude {
        config.transport.profile_amplitude = amp;
    }
    if let Some(shape) = args.profile_shape {
        config.transport.profile_shape = shape;
    }
    if let Some(tol) = args.tol {
        config.abs_tol = tol;
    }
    if let Some(rel) = args.rel_tol {
        config.rel_tol = rel;
    }
    if let Some(max_iters) = args.max_iters {
        config.max_iterations = max_iters;
    }
    if let Some(ls) = &args.line_search {
        config.line_search = match ls.to_ascii_lowercase().as_str() {
            "off" | "none" => LineSearch::Off,
            "backtracking" | "bt" => LineSearch::Backtracking,
            other => {
                return Err(ConfigError {
                    key: "line_search".into(),
                    message: format!("expected off or backtracking, got '{other}'"),
                }
                .into())
            }
        };
    }
    if let Some(dir) = &args.out_dir {
        config.out_dir = dir.clone();
    }
    if args.gnuplot {
        config.gnuplot = true;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::ListProblems => {
            for problem in ProblemKind::all() {
                println!("{:<12} {}", problem.as_str(), problem.describe());
            }
            0
        }
        Command::DumpConfig(args) => match build_config(&args).and_then(|config| {
            validate_config(&config)?;
            Ok(config)
        }) {
            Ok(config) => {
                print!("{}", dump_config(&config));
                0
            }
            Err(err) => {
                eprintln!("error: {err}");
                err.exit_code()
            }
        },
        Command::Run(args) => match build_config(&args) {
            Ok(config) => {
                if let Some(path) = &args.dump_config {
                    if let Err(source) = fs::write(path, dump_config(&config)) {
                        eprintln!("error: i/o failure on {}: {source}", path.display());
                        return ExitCode::from(2);
                    }
                }
                match run(&config) {
                    Ok(summaries) => report_summaries(&summaries, std::io::stdout().lock()),
                    Err(err) => {
                        eprintln!("error: {err}");
                        err.exit_code()
                    }
                }
            }
            Err(err) => {
                eprintln!("error: {err}");
                err.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
