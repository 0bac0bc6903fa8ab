//! Benchmark harness: configure a problem and a set of Jacobian strategies,
//! run the solves, and emit per-iteration convergence traces plus summary
//! lines.
//!
//! Configuration lives in a flat INI-style text format (sections of
//! `key = value` lines) so it can be parsed from anywhere; command-line
//! flags override file values.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::problems::{
    polynomial_profile, Geometry, Linear3, Nonlinear3, Problem, TransportConfig, TransportProblem,
};
use crate::solver::{
    newton_solve, ConvergenceTrace, InitialJacobian, LineSearch, SolveOptions, SolveStatus,
    Strategy,
};

/// Environment variable consulted for the default output root.
pub const OUT_DIR_ENV: &str = "HYPERSEC_OUT_DIR";

/// Which benchmark system to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Linear3,
    Nonlinear3,
    Transport,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Linear3 => "linear3",
            ProblemKind::Nonlinear3 => "nonlinear3",
            ProblemKind::Transport => "transport",
        }
    }

    pub fn all() -> [ProblemKind; 3] {
        [ProblemKind::Linear3, ProblemKind::Nonlinear3, ProblemKind::Transport]
    }

    pub fn describe(&self) -> &'static str {
        match self {
            ProblemKind::Linear3 => "3-variable linear system with root (1, 1, 1)",
            ProblemKind::Nonlinear3 => "3-variable quadratic system with root (1, 1, 1)",
            ProblemKind::Transport => {
                "one implicit time step of a radial transport equation with critical-gradient diffusivity"
            }
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear3" => Ok(ProblemKind::Linear3),
            "nonlinear3" => Ok(ProblemKind::Nonlinear3),
            "transport" => Ok(ProblemKind::Transport),
            other => Err(format!("unknown problem '{other}' (expected linear3, nonlinear3 or transport)")),
        }
    }
}

/// Transport-problem knobs, mirroring [`TransportConfig`] plus the initial
/// profile parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSettings {
    pub n_cells: usize,
    pub dt: f64,
    pub theta: f64,
    pub l_crit: f64,
    pub chi_min: f64,
    pub source_exponent: f64,
    pub edge_value: f64,
    pub profile_amplitude: f64,
    pub profile_shape: u32,
    pub geometry: Geometry,
    /// Explicit profile values override the polynomial profile when set.
    pub profile_values: Option<Vec<f64>>,
}

impl Default for TransportSettings {
    fn default() -> Self {
        TransportSettings {
            n_cells: 10,
            dt: 0.1,
            theta: 1.0,
            l_crit: 0.5,
            chi_min: 0.1,
            source_exponent: 2.0,
            edge_value: 1.0,
            profile_amplitude: 1.0,
            profile_shape: 2,
            geometry: Geometry::Cylindrical,
            profile_values: None,
        }
    }
}

impl TransportSettings {
    pub fn to_transport_config(&self) -> TransportConfig<f64> {
        let u_n = match &self.profile_values {
            Some(values) => values.clone(),
            None => polynomial_profile(
                self.n_cells,
                self.edge_value,
                self.profile_amplitude,
                self.profile_shape,
            ),
        };
        TransportConfig {
            n_cells: self.n_cells,
            theta: self.theta,
            dt: self.dt,
            flux: crate::problems::FluxModel { l_crit: self.l_crit, chi_min: self.chi_min },
            source_exponent: self.source_exponent,
            geometry: self.geometry,
            u_n,
            edge_value: self.edge_value,
        }
    }
}

/// Full description of one benchmark invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub strategies: Vec<Strategy>,
    /// Start point; `None` selects the problem's standard start.
    pub x0: Option<Vec<f64>>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub line_search: LineSearch,
    pub svd_cutoff: f64,
    pub singular_floor: f64,
    pub fd_step: f64,
    pub always_svd: bool,
    pub transport: TransportSettings,
    pub out_dir: PathBuf,
    pub gnuplot: bool,
    /// Reserved; the shipped runs are deterministic.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemKind::Nonlinear3,
            strategies: vec![Strategy::Hypersecant, Strategy::Broyden, Strategy::ColoredFd],
            x0: None,
            abs_tol: 1e-12,
            rel_tol: 1e-8,
            max_iterations: 50,
            line_search: LineSearch::Off,
            svd_cutoff: 1e-12,
            singular_floor: 1e-14,
            fd_step: 1e-7,
            always_svd: false,
            transport: TransportSettings::default(),
            out_dir: default_out_dir(),
            gnuplot: false,
            seed: 0,
        }
    }
}

fn default_out_dir() -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from("out"),
    }
}

/// Standard start point of each problem.
pub fn default_start(problem: ProblemKind, transport: &TransportSettings) -> Vec<f64> {
    match problem {
        ProblemKind::Linear3 => vec![0.5, 0.5, 0.5],
        ProblemKind::Nonlinear3 => vec![0.5, 0.5, 1.5],
        ProblemKind::Transport => vec![0.0; transport.n_cells + 1],
    }
}

/// Configuration failure, naming the offending key.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("config key '{key}': {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        ConfigError { key: key.to_string(), message: message.into() }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::new(key, format!("{e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        other => Err(ConfigError::new(key, format!("expected a boolean, got '{other}'"))),
    }
}

fn parse_line_search(key: &str, value: &str) -> Result<LineSearch, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "off" | "none" => Ok(LineSearch::Off),
        "backtracking" | "bt" => Ok(LineSearch::Backtracking),
        other => Err(ConfigError::new(key, format!("expected off or backtracking, got '{other}'"))),
    }
}

fn parse_geometry(key: &str, value: &str) -> Result<Geometry, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "cylindrical" | "cyl" => Ok(Geometry::Cylindrical),
        "slab" => Ok(Geometry::Slab),
        other => Err(ConfigError::new(key, format!("expected cylindrical or slab, got '{other}'"))),
    }
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|v| parse_value::<f64>(key, v))
        .collect()
}

/// Parses a strategy list like `hypersecant,broyden,fd`.
pub fn parse_strategies(key: &str, value: &str) -> Result<Vec<Strategy>, ConfigError> {
    let out: Result<Vec<Strategy>, ConfigError> = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<Strategy>().map_err(|e| ConfigError::new(key, e)))
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err(ConfigError::new(key, "at least one strategy is required"));
    }
    Ok(out)
}

/// Applies an INI-style config text onto `config`. Unknown sections or keys
/// are errors; omitted keys keep their current values.
pub fn apply_config_text(config: &mut RunConfig, text: &str) -> Result<(), ConfigError> {
    let mut section = String::from("run");
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(ConfigError::new(line, "malformed section header"));
            }
            section = line[1..line.len() - 1].trim().to_ascii_lowercase();
            continue;
        }
        let Some((key_raw, value)) = line.split_once('=') else {
            return Err(ConfigError::new(line, "expected 'key = value'"));
        };
        let key = key_raw.trim().to_ascii_lowercase();
        let qualified = format!("{section}.{key}");
        let value = value.trim();
        match (section.as_str(), key.as_str()) {
            ("run", "problem") => {
                config.problem = value.parse().map_err(|e| ConfigError::new(&qualified, e))?
            }
            ("run", "strategies") => config.strategies = parse_strategies(&qualified, value)?,
            ("run", "out_dir") => config.out_dir = PathBuf::from(value),
            ("run", "gnuplot") => config.gnuplot = parse_bool(&qualified, value)?,
            ("run", "seed") => config.seed = parse_value(&qualified, value)?,
            ("solver", "x0") => config.x0 = Some(parse_f64_list(&qualified, value)?),
            ("solver", "abs_tol") => config.abs_tol = parse_value(&qualified, value)?,
            ("solver", "rel_tol") => config.rel_tol = parse_value(&qualified, value)?,
            ("solver", "max_iters") => config.max_iterations = parse_value(&qualified, value)?,
            ("solver", "line_search") => config.line_search = parse_line_search(&qualified, value)?,
            ("solver", "svd_cutoff") => config.svd_cutoff = parse_value(&qualified, value)?,
            ("solver", "singular_floor") => {
                config.singular_floor = parse_value(&qualified, value)?
            }
            ("solver", "fd_step") => config.fd_step = parse_value(&qualified, value)?,
            ("solver", "always_svd") => config.always_svd = parse_bool(&qualified, value)?,
            ("transport", "n_cells") => config.transport.n_cells = parse_value(&qualified, value)?,
            ("transport", "dt") => config.transport.dt = parse_value(&qualified, value)?,
            ("transport", "theta") => config.transport.theta = parse_value(&qualified, value)?,
            ("transport", "l_crit") => config.transport.l_crit = parse_value(&qualified, value)?,
            ("transport", "chi_min") => config.transport.chi_min = parse_value(&qualified, value)?,
            ("transport", "source_exponent") => {
                config.transport.source_exponent = parse_value(&qualified, value)?
            }
            ("transport", "edge_value") => {
                config.transport.edge_value = parse_value(&qualified, value)?
            }
            ("transport", "profile_amplitude") => {
                config.transport.profile_amplitude = parse_value(&qualified, value)?
            }
            ("transport", "profile_shape") => {
                config.transport.profile_shape = parse_value(&qualified, value)?
            }
            ("transport", "geometry") => {
                config.transport.geometry = parse_geometry(&qualified, value)?
            }
            ("transport", "profile_values") => {
                config.transport.profile_values = Some(parse_f64_list(&qualified, value)?)
            }
            _ => return Err(ConfigError::new(&qualified, "unknown configuration key")),
        }
    }
    Ok(())
}

/// Renders the complete effective configuration; feeding the result back
/// through [`apply_config_text`] reproduces the same run.
pub fn dump_config(config: &RunConfig) -> String {
    let mut s = String::new();
    s.push_str("[run]\n");
    s.push_str(&format!("problem = {}\n", config.problem));
    let strategies: Vec<&str> = config.strategies.iter().map(|st| st.as_str()).collect();
    s.push_str(&format!("strategies = {}\n", strategies.join(",")));
    s.push_str(&format!("out_dir = {}\n", config.out_dir.display()));
    s.push_str(&format!("gnuplot = {}\n", config.gnuplot));
    s.push_str(&format!("seed = {}\n", config.seed));
    s.push_str("\n[solver]\n");
    if let Some(x0) = &config.x0 {
        let items: Vec<String> = x0.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&format!("x0 = {}\n", items.join(",")));
    }
    s.push_str(&format!("abs_tol = {:e}\n", config.abs_tol));
    s.push_str(&format!("rel_tol = {:e}\n", config.rel_tol));
    s.push_str(&format!("max_iters = {}\n", config.max_iterations));
    let ls = match config.line_search {
        LineSearch::Off => "off",
        LineSearch::Backtracking => "backtracking",
    };
    s.push_str(&format!("line_search = {ls}\n"));
    s.push_str(&format!("svd_cutoff = {:e}\n", config.svd_cutoff));
    s.push_str(&format!("singular_floor = {:e}\n", config.singular_floor));
    s.push_str(&format!("fd_step = {:e}\n", config.fd_step));
    s.push_str(&format!("always_svd = {}\n", config.always_svd));
    s.push_str("\n[transport]\n");
    let t = &config.transport;
    s.push_str(&format!("n_cells = {}\n", t.n_cells));
    s.push_str(&format!("dt = {:e}\n", t.dt));
    s.push_str(&format!("theta = {:e}\n", t.theta));
    s.push_str(&format!("l_crit = {:e}\n", t.l_crit));
    s.push_str(&format!("chi_min = {:e}\n", t.chi_min));
    s.push_str(&format!("source_exponent = {:e}\n", t.source_exponent));
    s.push_str(&format!("edge_value = {:e}\n", t.edge_value));
    s.push_str(&format!("profile_amplitude = {:e}\n", t.profile_amplitude));
    s.push_str(&format!("profile_shape = {}\n", t.profile_shape));
    let geom = match t.geometry {
        Geometry::Cylindrical => "cylindrical",
        Geometry::Slab => "slab",
    };
    s.push_str(&format!("geometry = {geom}\n"));
    if let Some(values) = &t.profile_values {
        let items: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&format!("profile_values = {}\n", items.join(",")));
    }
    s
}

/// Validates cross-field constraints before a run.
pub fn validate_config(config: &RunConfig) -> Result<(), ConfigError> {
    if config.strategies.is_empty() {
        return Err(ConfigError::new("run.strategies", "at least one strategy is required"));
    }
    if !(config.abs_tol > 0.0) {
        return Err(ConfigError::new("solver.abs_tol", "must be positive"));
    }
    if !(config.rel_tol > 0.0) {
        return Err(ConfigError::new("solver.rel_tol", "must be positive"));
    }
    if config.max_iterations == 0 {
        return Err(ConfigError::new("solver.max_iters", "must be at least 1"));
    }
    if !(config.fd_step > 0.0) {
        return Err(ConfigError::new("solver.fd_step", "must be positive"));
    }
    let dimension = match config.problem {
        ProblemKind::Transport => {
            let tcfg = config.transport.to_transport_config();
            tcfg.validate().map_err(|msg| {
                let key = msg.split(':').next().unwrap_or("n_cells").trim().to_string();
                ConfigError::new(&format!("transport.{key}"), msg)
            })?;
            config.transport.n_cells + 1
        }
        _ => 3,
    };
    if let Some(x0) = &config.x0 {
        if x0.len() != dimension {
            return Err(ConfigError::new(
                "solver.x0",
                format!("needs {dimension} components for problem '{}'", config.problem),
            ));
        }
    }
    Ok(())
}

/// Summary of one strategy's solve within a run.
#[derive(Debug, Clone)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub status: SolveStatus,
    pub iterations: usize,
    pub fevals: usize,
    pub residual_norm: f64,
    pub trace_path: PathBuf,
}

impl fmt::Display for StrategySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "strategy={} status={} iterations={} fevals={} final_residual={:.3e} trace={}",
            self.strategy,
            self.status,
            self.iterations,
            self.fevals,
            self.residual_norm,
            self.trace_path.display()
        )
    }
}

/// Run failure: either a bad configuration or an I/O problem.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Process exit code this failure maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Writes a trace as delimiter-separated text with a header line and
/// 17-significant-digit scientific formatting.
pub fn emit_trace(trace: &ConvergenceTrace<f64>, path: &Path) -> Result<(), CliError> {
    assert!(!trace.records().is_empty(), "trace must be nonempty");
    let mut out = String::from("iteration,fevals,residual_norm,step_norm,mode\n");
    for r in trace.records() {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e},{}\n",
            r.iteration, r.fevals, r.residual_norm, r.step_norm, r.mode
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Writes a plot script referencing the trace files.
pub fn emit_gnuplot_script(
    summaries: &[StrategySummary],
    problem: ProblemKind,
    path: &Path,
) -> Result<(), CliError> {
    let mut s = String::new();
    s.push_str("set datafile separator \",\"\n");
    s.push_str("set logscale y\n");
    s.push_str("set xlabel \"function evaluations\"\n");
    s.push_str("set ylabel \"residual max-norm\"\n");
    s.push_str(&format!("set title \"{problem}\"\n"));
    let plots: Vec<String> = summaries
        .iter()
        .map(|summary| {
            let file = summary
                .trace_path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_else(|| summary.trace_path.display().to_string());
            format!(
                "\"{}\" using 2:3 skip 1 with linespoints title \"{}\"",
                file, summary.strategy
            )
        })
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    fs::write(path, s).map_err(io_err(path))
}

/// Builds the solve options a run uses for one strategy.
pub fn solve_options(config: &RunConfig) -> SolveOptions<f64> {
    let mut options = SolveOptions::new(Strategy::Broyden);
    options.abs_residual_tol = config.abs_tol;
    options.rel_residual_tol = config.rel_tol;
    options.max_iterations = config.max_iterations;
    options.line_search = config.line_search;
    options.svd_cutoff = config.svd_cutoff;
    options.singular_floor = config.singular_floor;
    options.fd_step = config.fd_step;
    options.always_svd = config.always_svd;
    if config.problem == ProblemKind::Transport {
        options.initial_jacobian = InitialJacobian::Custom(
            crate::problems::transport_initial_jacobian(config.transport.n_cells),
        );
    }
    options
}

/// Executes every strategy of the run, writing one trace file per strategy
/// and returning the summaries in strategy order.
pub fn run(config: &RunConfig) -> Result<Vec<StrategySummary>, CliError> {
    validate_config(config)?;
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let x0 = config
        .x0
        .clone()
        .unwrap_or_else(|| default_start(config.problem, &config.transport));

    let mut summaries = Vec::with_capacity(config.strategies.len());
    for &strategy in &config.strategies {
        let mut options = solve_options(config);
        options.strategy = strategy;
        let report = match config.problem {
            ProblemKind::Linear3 => newton_solve(&Linear3, &x0, &options),
            ProblemKind::Nonlinear3 => newton_solve(&Nonlinear3, &x0, &options),
            ProblemKind::Transport => {
                let problem = TransportProblem::new(config.transport.to_transport_config());
                newton_solve(&problem, &x0, &options)
            }
        };
        let trace_path = config
            .out_dir
            .join(format!("{}_{}.csv", config.problem.as_str(), strategy.as_str()));
        emit_trace(&report.trace, &trace_path)?;
        summaries.push(StrategySummary {
            strategy,
            status: report.status,
            iterations: report.trace.iterations(),
            fevals: report.trace.total_fevals(),
            residual_norm: report.residual_norm,
            trace_path,
        });
    }
    if config.gnuplot {
        let path = config.out_dir.join("plot.gp");
        emit_gnuplot_script(&summaries, config.problem, &path)?;
    }
    Ok(summaries)
}

/// Prints summaries and maps them to the process exit code: 0 when every
/// strategy converged, 2 otherwise.
pub fn report_summaries(summaries: &[StrategySummary], mut sink: impl Write) -> i32 {
    for summary in summaries {
        let _ = writeln!(sink, "{summary}");
    }
    if summaries.iter().all(|s| s.status == SolveStatus::Converged) {
        0
    } else {
        2
    }
}
