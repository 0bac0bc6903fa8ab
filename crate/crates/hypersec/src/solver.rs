//! Quasi-Newton driver: linearize, solve for the step, advance, refresh the
//! Jacobian per strategy, and keep score of residual evaluations.

use thiserror::Error;

use crate::jacobian::{
    HypersecantParams, IterationHistory, JacobianMode, JacobianState, RowUpdateEvent,
};
use crate::linalg::{norm_inf, solve_dense_with_floor, svd_least_norm_solve, DenseMatrix};
use crate::problems::{Problem, ProblemError};
use crate::Scalar;

pub use crate::jacobian::Strategy;

/// Step-length control for accepted increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LineSearch {
    /// Take the full increment unconditionally.
    #[default]
    Off,
    /// Halve the increment until the residual max-norm decreases; on
    /// failure the full step is taken anyway.
    Backtracking,
}

/// Choice of the iteration-0 Jacobian.
#[derive(Debug, Clone)]
pub enum InitialJacobian<T> {
    Identity,
    /// The problem's analytic Jacobian evaluated at the start point.
    /// Panics if the problem does not provide one.
    ExactAtStart,
    Custom(DenseMatrix<T>),
}

/// Solve configuration. Construct with [`SolveOptions::new`] and adjust
/// fields as needed.
#[derive(Debug, Clone)]
pub struct SolveOptions<T> {
    pub strategy: Strategy,
    /// Absolute tolerance on the residual max-norm.
    pub abs_residual_tol: T,
    /// Tolerance relative to the initial residual max-norm.
    pub rel_residual_tol: T,
    pub max_iterations: usize,
    pub line_search: LineSearch,
    /// Relative cutoff for SVD least-norm solves.
    pub svd_cutoff: T,
    /// Inverse-condition floor below which direct solves defer to SVD.
    pub singular_floor: T,
    /// Finite-difference step (colored-FD strategy).
    pub fd_step: T,
    pub initial_jacobian: InitialJacobian<T>,
    /// Row systems always go through SVD instead of trying a direct solve
    /// first.
    pub always_svd: bool,
}

impl<T: Scalar> SolveOptions<T> {
    pub fn new(strategy: Strategy) -> Self {
        SolveOptions {
            strategy,
            abs_residual_tol: T::of(1e-12),
            rel_residual_tol: T::of(1e-8),
            max_iterations: 50,
            line_search: LineSearch::Off,
            svd_cutoff: T::of(crate::linalg::DEFAULT_SVD_CUTOFF),
            singular_floor: T::of(crate::linalg::DEFAULT_SINGULAR_FLOOR),
            fd_step: T::of(1e-7),
            initial_jacobian: InitialJacobian::Identity,
            always_svd: false,
        }
    }

    fn hypersecant_params(&self) -> HypersecantParams<T> {
        HypersecantParams {
            svd_cutoff: self.svd_cutoff,
            singular_floor: self.singular_floor,
            always_svd: self.always_svd,
        }
    }

    fn assert_valid(&self) {
        assert!(self.abs_residual_tol > T::zero(), "tolerances must be positive");
        assert!(self.rel_residual_tol > T::zero(), "tolerances must be positive");
        assert!(self.max_iterations >= 1, "max_iterations must be at least 1");
        assert!(self.fd_step > T::zero(), "fd_step must be positive");
    }
}

/// Termination reason of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// The accepted step shrank to rounding level without meeting the
    /// residual tolerance.
    Stagnated,
    /// The problem returned an error or non-finite values.
    EvaluationFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::Stagnated => "stagnated",
            SolveStatus::EvaluationFailure => "evaluation-failure",
        };
        f.write_str(s)
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<T> {
    pub iteration: usize,
    /// Cumulative residual evaluations, the initial one included.
    pub fevals: usize,
    pub residual_norm: T,
    pub step_norm: T,
    /// Mode of the matrix used to compute this iteration's step ("init"
    /// for the k = 0 record).
    pub mode: JacobianMode,
}

/// Per-iteration convergence record, one entry per completed iteration plus
/// the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace<T> {
    records: Vec<TraceRecord<T>>,
}

impl<T> Default for ConvergenceTrace<T> {
    fn default() -> Self {
        ConvergenceTrace { records: Vec::new() }
    }
}

impl<T: Scalar> ConvergenceTrace<T> {
    pub fn records(&self) -> &[TraceRecord<T>] {
        &self.records
    }

    pub fn last(&self) -> Option<&TraceRecord<T>> {
        self.records.last()
    }

    /// Final iteration index (0 when only the initial record exists).
    pub fn iterations(&self) -> usize {
        self.last().map_or(0, |r| r.iteration)
    }

    /// Total residual evaluations consumed.
    pub fn total_fevals(&self) -> usize {
        self.last().map_or(0, |r| r.fevals)
    }

    fn push(&mut self, record: TraceRecord<T>) {
        self.records.push(record);
    }
}

/// Noteworthy events along a solve, for diagnostics and tests.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveEvent<T> {
    /// A row secant system was numerically singular; SVD recovered the row.
    RowSolveSvdFallback { iteration: usize, row: usize, inverse_condition: T },
    /// A reduced bootstrap system was degenerate; the row kept its rank-1
    /// update values.
    BootstrapKeptBroydenRow { iteration: usize, row: usize },
    /// The Newton-step solve was numerically singular; the step came from
    /// the SVD least-norm solve.
    StepSolveSvdFallback { iteration: usize, inverse_condition: T },
    /// Backtracking found no decrease; the full step was accepted.
    LineSearchFailed { iteration: usize },
}

impl<T: Scalar> std::fmt::Display for SolveEvent<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveEvent::RowSolveSvdFallback { iteration, row, inverse_condition } => write!(
                f,
                "iteration {iteration}: row {row} secant system singular (rcond {inverse_condition:e}), solved via SVD"
            ),
            SolveEvent::BootstrapKeptBroydenRow { iteration, row } => write!(
                f,
                "iteration {iteration}: row {row} bootstrap degenerate, kept rank-1 update values"
            ),
            SolveEvent::StepSolveSvdFallback { iteration, inverse_condition } => write!(
                f,
                "iteration {iteration}: step solve singular (rcond {inverse_condition:e}), used SVD least-norm step"
            ),
            SolveEvent::LineSearchFailed { iteration } => {
                write!(f, "iteration {iteration}: line search found no decrease, accepted full step")
            }
        }
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub status: SolveStatus,
    pub x: Vec<T>,
    pub residual_norm: T,
    pub trace: ConvergenceTrace<T>,
    /// The Jacobian matrix as of termination (after the final update).
    pub final_jacobian: DenseMatrix<T>,
    pub events: Vec<SolveEvent<T>>,
}

impl<T: Scalar> SolveReport<T> {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Successful backtracking outcome. `residual` is the evaluation at the
/// accepted point, so the caller spends no extra evaluation on it.
#[derive(Debug, Clone)]
pub struct LineSearchSuccess<T> {
    pub scale: T,
    pub trials: usize,
    pub x: Vec<T>,
    pub residual: Vec<T>,
}

/// All trial scales failed to decrease the residual max-norm.
#[derive(Debug, Clone, Error)]
#[error("line search found no residual decrease after {trials} trials")]
pub struct LineSearchFailure<T> {
    pub trials: usize,
    /// The full-step evaluation from the first trial, reusable by a caller
    /// that accepts the full step anyway.
    pub full_step: Result<Vec<T>, ProblemError>,
}

/// Backtracking line search over scales 1, 1/2, …, 2⁻¹⁰.
///
/// Accepts the first scale whose residual max-norm strictly undercuts
/// `f_norm`; trial evaluations that error count as failed trials. The trial
/// count is reported for evaluation accounting.
pub fn backtracking_line_search<T: Scalar, P: Problem<T> + ?Sized>(
    problem: &P,
    x: &[T],
    dx: &[T],
    f_norm: T,
) -> Result<LineSearchSuccess<T>, LineSearchFailure<T>> {
    assert!(norm_inf(dx) > T::zero(), "line search needs a nonzero increment");
    let mut scale = T::one();
    let mut full_step: Option<Result<Vec<T>, ProblemError>> = None;
    let mut trials = 0;
    for halvings in 0..=10 {
        let xt: Vec<T> = x.iter().zip(dx).map(|(&a, &b)| a + scale * b).collect();
        trials += 1;
        let ft = problem.residual(&xt);
        if halvings == 0 {
            full_step = Some(ft.clone());
        }
        if let Ok(ft) = ft {
            let norm = norm_inf(&ft);
            if norm.is_finite() && norm < f_norm {
                return Ok(LineSearchSuccess { scale, trials, x: xt, residual: ft });
            }
        }
        scale = scale * T::of(0.5);
    }
    Err(LineSearchFailure { trials, full_step: full_step.expect("at least one trial ran") })
}

fn finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs the quasi-Newton iteration on `problem` from `x0`.
///
/// Convergence is declared when the residual max-norm drops to
/// max(abs_tol, rel_tol · initial norm). Evaluation accounting: the initial
/// residual counts 1, each accepted iterate's evaluation counts 1, each
/// finite-difference color evaluation counts 1, and each line-search trial
/// counts 1.
pub fn newton_solve<T: Scalar, P: Problem<T> + ?Sized>(
    problem: &P,
    x0: &[T],
    options: &SolveOptions<T>,
) -> SolveReport<T> {
    options.assert_valid();
    let n = problem.dimension();
    assert_eq!(x0.len(), n, "start point dimension mismatch");
    let pattern = problem.pattern();
    assert_eq!(pattern.dimension(), n, "pattern dimension mismatch");

    let initial = match &options.initial_jacobian {
        InitialJacobian::Identity => DenseMatrix::identity(n),
        InitialJacobian::ExactAtStart => problem
            .exact_jacobian(x0)
            .expect("problem provides no analytic Jacobian for ExactAtStart"),
        InitialJacobian::Custom(m) => {
            assert_eq!(m.rows(), n, "custom initial Jacobian dimension mismatch");
            m.clone()
        }
    };
    let mut state = JacobianState::new(options.strategy, pattern, initial);
    let params = options.hypersecant_params();

    let mut trace = ConvergenceTrace::default();
    let mut events: Vec<SolveEvent<T>> = Vec::new();
    let mut evals = 1usize;
    let mut x = x0.to_vec();
    let mut fx = match problem.residual(&x) {
        Ok(f) if finite(&f) => f,
        _ => {
            return SolveReport {
                status: SolveStatus::EvaluationFailure,
                x,
                residual_norm: T::infinity(),
                trace,
                final_jacobian: state.matrix().clone(),
                events,
            }
        }
    };
    let initial_norm = norm_inf(&fx);
    let tol = options.abs_residual_tol.max(options.rel_residual_tol * initial_norm);
    trace.push(TraceRecord {
        iteration: 0,
        fevals: evals,
        residual_norm: initial_norm,
        step_norm: T::zero(),
        mode: JacobianMode::Init,
    });
    if initial_norm <= tol {
        return SolveReport {
            status: SolveStatus::Converged,
            x,
            residual_norm: initial_norm,
            trace,
            final_jacobian: state.matrix().clone(),
            events,
        };
    }

    let mut history = IterationHistory::new(state.pattern().max_row_len() + 1);
    history.push(x.clone(), fx.clone());

    let fail = |status: SolveStatus,
                x: Vec<T>,
                fx_norm: T,
                trace: ConvergenceTrace<T>,
                state: &JacobianState<T>,
                events: Vec<SolveEvent<T>>| SolveReport {
        status,
        x,
        residual_norm: fx_norm,
        trace,
        final_jacobian: state.matrix().clone(),
        events,
    };

    for k in 0..options.max_iterations {
        let iteration = k + 1;
        if options.strategy == Strategy::ColoredFd {
            match state.rebuild_fd(problem, &x, &fx, options.fd_step) {
                Ok(color_evals) => evals += color_evals,
                Err(_) => {
                    return fail(SolveStatus::EvaluationFailure, x, norm_inf(&fx), trace, &state, events)
                }
            }
        }
        let step_mode = state.mode();

        let rhs: Vec<T> = fx.iter().map(|&v| -v).collect();
        let dx = match solve_dense_with_floor(state.matrix(), &rhs, options.singular_floor) {
            Ok(dx) => dx,
            Err(signal) => {
                events.push(SolveEvent::StepSolveSvdFallback {
                    iteration,
                    inverse_condition: signal.inverse_condition,
                });
                svd_least_norm_solve(state.matrix(), &rhs, options.svd_cutoff)
            }
        };

        let (x_new, f_new) = match options.line_search {
            LineSearch::Off => {
                let xt: Vec<T> = x.iter().zip(&dx).map(|(&a, &b)| a + b).collect();
                evals += 1;
                match problem.residual(&xt) {
                    Ok(f) => (xt, f),
                    Err(_) => {
                        return fail(
                            SolveStatus::EvaluationFailure,
                            x,
                            norm_inf(&fx),
                            trace,
                            &state,
                            events,
                        )
                    }
                }
            }
            LineSearch::Backtracking => {
                match backtracking_line_search(problem, &x, &dx, norm_inf(&fx)) {
                    Ok(success) => {
                        evals += success.trials;
                        (success.x, success.residual)
                    }
                    Err(failure) => {
                        evals += failure.trials;
                        events.push(SolveEvent::LineSearchFailed { iteration });
                        let xt: Vec<T> = x.iter().zip(&dx).map(|(&a, &b)| a + b).collect();
                        match failure.full_step {
                            Ok(f) => (xt, f),
                            Err(_) => {
                                return fail(
                                    SolveStatus::EvaluationFailure,
                                    x,
                                    norm_inf(&fx),
                                    trace,
                                    &state,
                                    events,
                                )
                            }
                        }
                    }
                }
            }
        };
        if !finite(&f_new) {
            return fail(SolveStatus::EvaluationFailure, x, norm_inf(&fx), trace, &state, events);
        }

        let step: Vec<T> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let step_norm = norm_inf(&step);
        history.push(x_new.clone(), f_new.clone());
        for event in state.update_after_step(&history, &params) {
            events.push(match event {
                RowUpdateEvent::SvdFallback { row, inverse_condition } => {
                    SolveEvent::RowSolveSvdFallback { iteration, row, inverse_condition }
                }
                RowUpdateEvent::KeptBroydenRow { row } => {
                    SolveEvent::BootstrapKeptBroydenRow { iteration, row }
                }
            });
        }
        x = x_new;
        fx = f_new;
        let residual_norm = norm_inf(&fx);
        trace.push(TraceRecord { iteration, fevals: evals, residual_norm, step_norm, mode: step_mode });

        if residual_norm <= tol {
            return SolveReport {
                status: SolveStatus::Converged,
                x,
                residual_norm,
                trace,
                final_jacobian: state.matrix().clone(),
                events,
            };
        }
        if step_norm <= T::of(1e-14) * (T::one() + norm_inf(&x)) {
            return fail(SolveStatus::Stagnated, x, residual_norm, trace, &state, events);
        }
    }
    let residual_norm = norm_inf(&fx);
    fail(SolveStatus::MaxIterations, x, residual_norm, trace, &state, events)
}
