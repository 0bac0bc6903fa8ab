//! Jacobian approximation strategies: rank-1 secant updates, multi-secant
//! reconstruction from iteration history, and colored finite differences.

use thiserror::Error;

use crate::linalg::{
    solve_dense_with_floor, svd_least_norm_solve, DenseMatrix, DEFAULT_SINGULAR_FLOOR,
    DEFAULT_SVD_CUTOFF,
};
use crate::problems::{Problem, ProblemError};
use crate::sparsity::{greedy_color_columns, ColumnColoring, SparsityPattern};
use crate::Scalar;

/// Which Jacobian approximation a solve runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Rank-1 secant updates restricted to the sparsity pattern; no extra
    /// residual evaluations.
    Broyden,
    /// Per-row multi-secant systems assembled from the iteration history,
    /// with a secant-update bootstrap while history is short and an SVD
    /// least-norm fallback for degenerate systems.
    Hypersecant,
    /// Colored finite differences, rebuilt from scratch every iteration at
    /// one residual evaluation per color.
    ColoredFd,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Broyden => "broyden",
            Strategy::Hypersecant => "hypersecant",
            Strategy::ColoredFd => "fd",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "broyden" => Ok(Strategy::Broyden),
            "hypersecant" => Ok(Strategy::Hypersecant),
            "fd" | "colored-fd" | "coloredfd" => Ok(Strategy::ColoredFd),
            other => Err(format!("unknown strategy '{other}' (expected broyden, hypersecant or fd)")),
        }
    }
}

/// How the current Jacobian matrix was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// The initial matrix, before any update.
    Init,
    /// Rank-1 secant update.
    Broyden,
    /// Multi-secant rebuild in which at least one row still used the
    /// secant-update bootstrap.
    BroydenBootstrap,
    /// Multi-secant rebuild with every row solved from its full system.
    FullHypersecant,
    /// Colored finite differences.
    Fd,
}

impl JacobianMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            JacobianMode::Init => "init",
            JacobianMode::Broyden => "broyden",
            JacobianMode::BroydenBootstrap => "broyden-bootstrap",
            JacobianMode::FullHypersecant => "full-hypersecant",
            JacobianMode::Fd => "fd",
        }
    }
}

impl std::fmt::Display for JacobianMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Zero step: a secant update is undefined and the caller skips it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("zero step: secant update undefined")]
pub struct DegenerateStepSignal;

/// Not enough stored iterates to assemble the requested secant system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("insufficient history: {available} steps available, {needed} needed")]
pub struct InsufficientHistorySignal {
    pub available: usize,
    pub needed: usize,
}

/// Ring buffer of the most recent iterates and residuals, newest last.
#[derive(Debug, Clone)]
pub struct IterationHistory<T> {
    capacity: usize,
    xs: Vec<Vec<T>>,
    fs: Vec<Vec<T>>,
}

impl<T: Scalar> IterationHistory<T> {
    /// `capacity` must cover the longest row system plus the current
    /// iterate (max row support + 1).
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "history must hold at least two records");
        IterationHistory { capacity, xs: Vec::new(), fs: Vec::new() }
    }

    pub fn push(&mut self, x: Vec<T>, f: Vec<T>) {
        assert_eq!(x.len(), f.len(), "iterate and residual lengths differ");
        if let Some(first) = self.xs.first() {
            assert_eq!(first.len(), x.len(), "record length must not change");
        }
        if self.xs.len() == self.capacity {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        self.xs.push(x);
        self.fs.push(f);
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of steps available: records minus one.
    pub fn steps(&self) -> usize {
        self.len().saturating_sub(1)
    }

    /// Record `back` positions behind the newest one (0 = newest).
    pub fn from_newest(&self, back: usize) -> (&[T], &[T]) {
        let idx = self.len() - 1 - back;
        (&self.xs[idx], &self.fs[idx])
    }
}

/// Rank-1 secant update J + ((dF − J·dx)/(dx·dx)) ⊗ dx.
///
/// The result reproduces the newest step exactly: (J')·dx = dF to roundoff.
pub fn broyden_update<T: Scalar>(
    j: &DenseMatrix<T>,
    dx: &[T],
    df: &[T],
) -> Result<DenseMatrix<T>, DegenerateStepSignal> {
    let denom = crate::linalg::dot(dx, dx);
    if denom == T::zero() {
        return Err(DegenerateStepSignal);
    }
    let jdx = j.matvec(dx);
    let u: Vec<T> = df.iter().zip(&jdx).map(|(&a, &b)| (a - b) / denom).collect();
    Ok(crate::linalg::rank_one_update(j, &u, dx))
}

/// Rank-1 secant update written only to stored pattern entries; entries
/// outside the pattern stay untouched, so a pattern-sparse matrix stays
/// pattern-sparse. On support entries the values agree with
/// [`broyden_update`].
pub fn broyden_update_masked<T: Scalar>(
    j: &DenseMatrix<T>,
    dx: &[T],
    df: &[T],
    pattern: &SparsityPattern,
) -> Result<DenseMatrix<T>, DegenerateStepSignal> {
    let denom = crate::linalg::dot(dx, dx);
    if denom == T::zero() {
        return Err(DegenerateStepSignal);
    }
    let jdx = j.matvec(dx);
    let mut out = j.clone();
    for i in 0..j.rows() {
        let ui = (df[i] - jdx[i]) / denom;
        for &col in pattern.row_support(i) {
            out[(i, col)] += ui * dx[col];
        }
    }
    Ok(out)
}

/// Assembles the secant system of one row from the newest L+1 history
/// records, where L = support.len(): row ℓ of the system matrix is the
/// difference between the newest iterate and the (L−ℓ)-th previous one,
/// restricted to the support columns; the right-hand side carries the
/// matching residual differences of this row.
pub fn hypersecant_row_system<T: Scalar>(
    history: &IterationHistory<T>,
    row: usize,
    support: &[usize],
) -> Result<(DenseMatrix<T>, Vec<T>), InsufficientHistorySignal> {
    let l = support.len();
    if history.steps() < l {
        return Err(InsufficientHistorySignal { available: history.steps(), needed: l });
    }
    let (x_new, f_new) = history.from_newest(0);
    let mut a = DenseMatrix::zeros(l, l);
    let mut b = vec![T::zero(); l];
    for ell in 0..l {
        let (x_prev, f_prev) = history.from_newest(l - ell);
        for (c, &col) in support.iter().enumerate() {
            a[(ell, c)] = x_new[col] - x_prev[col];
        }
        b[ell] = f_new[row] - f_prev[row];
    }
    Ok((a, b))
}

/// Knobs of the multi-secant rebuild.
#[derive(Debug, Clone, Copy)]
pub struct HypersecantParams<T> {
    /// Relative cutoff for the SVD least-norm fallback.
    pub svd_cutoff: T,
    /// Inverse-condition floor below which a direct row solve defers to SVD.
    pub singular_floor: T,
    /// Skip the direct solve and always use SVD (robustness studies).
    pub always_svd: bool,
}

impl<T: Scalar> Default for HypersecantParams<T> {
    fn default() -> Self {
        HypersecantParams {
            svd_cutoff: T::of(DEFAULT_SVD_CUTOFF),
            singular_floor: T::of(DEFAULT_SINGULAR_FLOOR),
            always_svd: false,
        }
    }
}

/// Per-row diagnostics emitted by [`hypersecant_update`].
#[derive(Debug, Clone, PartialEq)]
pub enum RowUpdateEvent<T> {
    /// The direct row solve signalled singularity; the row came from the
    /// SVD least-norm solve instead.
    SvdFallback { row: usize, inverse_condition: T },
    /// The reduced bootstrap system was itself degenerate; the row kept its
    /// secant-update values.
    KeptBroydenRow { row: usize },
}

/// Result of one multi-secant rebuild.
#[derive(Debug, Clone)]
pub struct HypersecantUpdate<T> {
    pub matrix: DenseMatrix<T>,
    /// True when every row was solved from its full secant system.
    pub full: bool,
    pub events: Vec<RowUpdateEvent<T>>,
}

/// Rebuilds the Jacobian from iteration history, row by row.
///
/// Rows with enough history solve their full secant system directly,
/// falling back to the SVD least-norm solve on singularity. Rows with m
/// available steps short of their support size L first take the masked
/// rank-1 update of `previous` as a baseline B, fix L − m unknowns at their
/// B values (keeping the diagonal first, then off-diagonals by descending
/// |B|, ties by ascending column), and solve the reduced m×m system for the
/// rest.
pub fn hypersecant_update<T: Scalar>(
    previous: &DenseMatrix<T>,
    history: &IterationHistory<T>,
    pattern: &SparsityPattern,
    params: &HypersecantParams<T>,
) -> Result<HypersecantUpdate<T>, InsufficientHistorySignal> {
    let n = pattern.dimension();
    if history.len() < 2 {
        return Err(InsufficientHistorySignal { available: history.steps(), needed: 1 });
    }
    let m = history.steps();
    let (x_new, f_new) = history.from_newest(0);
    let (x_prev, f_prev) = history.from_newest(1);
    let dx: Vec<T> = x_new.iter().zip(x_prev).map(|(&a, &b)| a - b).collect();
    let df: Vec<T> = f_new.iter().zip(f_prev).map(|(&a, &b)| a - b).collect();
    let baseline = broyden_update_masked(previous, &dx, &df, pattern).unwrap_or_else(|_| previous.clone());

    let mut matrix = DenseMatrix::zeros(n, n);
    let mut events = Vec::new();
    let mut full = true;
    for row in 0..n {
        let support = pattern.row_support(row);
        let l = support.len();
        if m >= l {
            let (a, b) = hypersecant_row_system(history, row, support)
                .expect("history length checked above");
            let solution = if params.always_svd {
                svd_least_norm_solve(&a, &b, params.svd_cutoff)
            } else {
                match solve_dense_with_floor(&a, &b, params.singular_floor) {
                    Ok(sol) => sol,
                    Err(signal) => {
                        events.push(RowUpdateEvent::SvdFallback {
                            row,
                            inverse_condition: signal.inverse_condition,
                        });
                        svd_least_norm_solve(&a, &b, params.svd_cutoff)
                    }
                }
            };
            for (c, &col) in support.iter().enumerate() {
                matrix[(row, col)] = solution[c];
            }
        } else {
            full = false;
            // Retention order: diagonal first, then off-diagonals by
            // descending baseline magnitude, ties by ascending column.
            let mut off: Vec<usize> = support.iter().copied().filter(|&c| c != row).collect();
            off.sort_by(|&a, &b| {
                baseline[(row, b)]
                    .abs()
                    .partial_cmp(&baseline[(row, a)].abs())
                    .expect("finite baseline entries")
                    .then(a.cmp(&b))
            });
            let mut order = Vec::with_capacity(l);
            order.push(row);
            order.extend(off);
            let (retained, fixed) = order.split_at(m);

            let mut a = DenseMatrix::zeros(m, m);
            let mut b = vec![T::zero(); m];
            for ell in 0..m {
                let (x_old, f_old) = history.from_newest(ell + 1);
                let mut rhs = f_new[row] - f_old[row];
                for &col in fixed {
                    rhs -= baseline[(row, col)] * (x_new[col] - x_old[col]);
                }
                b[ell] = rhs;
                for (c, &col) in retained.iter().enumerate() {
                    a[(ell, c)] = x_new[col] - x_old[col];
                }
            }
            match solve_dense_with_floor(&a, &b, params.singular_floor) {
                Ok(solution) => {
                    for &col in fixed {
                        matrix[(row, col)] = baseline[(row, col)];
                    }
                    for (c, &col) in retained.iter().enumerate() {
                        matrix[(row, col)] = solution[c];
                    }
                }
                Err(_) => {
                    events.push(RowUpdateEvent::KeptBroydenRow { row });
                    for &col in support {
                        matrix[(row, col)] = baseline[(row, col)];
                    }
                }
            }
        }
    }
    Ok(HypersecantUpdate { matrix, full, events })
}

/// Colored finite-difference Jacobian.
///
/// For each color, every column of that color is perturbed simultaneously
/// by h scaled per column with max(1, |x_j|); one residual evaluation per
/// color recovers all pattern entries. `fx` must be the residual at `x`.
pub fn fd_colored_jacobian<T: Scalar, P: Problem<T> + ?Sized>(
    problem: &P,
    x: &[T],
    fx: &[T],
    coloring: &ColumnColoring,
    pattern: &SparsityPattern,
    h: T,
) -> Result<DenseMatrix<T>, ProblemError> {
    assert!(h > T::zero(), "finite-difference step must be positive");
    let n = pattern.dimension();
    let mut j = DenseMatrix::zeros(n, n);
    let scale: Vec<T> = x.iter().map(|&v| T::one().max(v.abs())).collect();
    for color in 0..coloring.num_colors() {
        let mut xp = x.to_vec();
        for col in 0..n {
            if coloring.color_of(col) == color {
                xp[col] += h * scale[col];
            }
        }
        let fp = problem.residual(&xp)?;
        for row in 0..n {
            for &col in pattern.row_support(row) {
                if coloring.color_of(col) == color {
                    j[(row, col)] = (fp[row] - fx[row]) / (h * scale[col]);
                }
            }
        }
    }
    Ok(j)
}

/// Strategy-owned Jacobian matrix plus the bookkeeping each strategy needs.
#[derive(Debug, Clone)]
pub struct JacobianState<T> {
    strategy: Strategy,
    matrix: DenseMatrix<T>,
    mode: JacobianMode,
    pattern: SparsityPattern,
    coloring: Option<ColumnColoring>,
}

impl<T: Scalar> JacobianState<T> {
    pub fn new(strategy: Strategy, pattern: SparsityPattern, initial: DenseMatrix<T>) -> Self {
        assert_eq!(initial.rows(), pattern.dimension(), "initial Jacobian dimension mismatch");
        assert!(initial.is_square(), "Jacobian must be square");
        let coloring = match strategy {
            Strategy::ColoredFd => Some(greedy_color_columns(&pattern)),
            _ => None,
        };
        JacobianState { strategy, matrix: initial, mode: JacobianMode::Init, pattern, coloring }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn mode(&self) -> JacobianMode {
        self.mode
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    pub fn coloring(&self) -> Option<&ColumnColoring> {
        self.coloring.as_ref()
    }

    /// Manual reset hook: replaces the matrix and marks it as initial.
    pub fn reinitialize(&mut self, initial: DenseMatrix<T>) {
        assert_eq!(initial.rows(), self.pattern.dimension(), "dimension mismatch");
        self.matrix = initial;
        self.mode = JacobianMode::Init;
    }

    /// Rebuilds the matrix by colored finite differences at the current
    /// iterate. Returns the residual evaluations consumed (= color count).
    pub fn rebuild_fd<P: Problem<T> + ?Sized>(
        &mut self,
        problem: &P,
        x: &[T],
        fx: &[T],
        h: T,
    ) -> Result<usize, ProblemError> {
        let coloring = self.coloring.get_or_insert_with(|| greedy_color_columns(&self.pattern));
        self.matrix = fd_colored_jacobian(problem, x, fx, coloring, &self.pattern, h)?;
        self.mode = JacobianMode::Fd;
        Ok(self.coloring.as_ref().expect("set above").num_colors())
    }

    /// Applies the strategy's post-step update from the iteration history.
    /// No-op for the finite-difference strategy, which rebuilds before each
    /// step instead.
    pub fn update_after_step(
        &mut self,
        history: &IterationHistory<T>,
        params: &HypersecantParams<T>,
    ) -> Vec<RowUpdateEvent<T>> {
        match self.strategy {
            Strategy::ColoredFd => Vec::new(),
            Strategy::Broyden => {
                if history.len() >= 2 {
                    let (x_new, f_new) = history.from_newest(0);
                    let (x_prev, f_prev) = history.from_newest(1);
                    let dx: Vec<T> = x_new.iter().zip(x_prev).map(|(&a, &b)| a - b).collect();
                    let df: Vec<T> = f_new.iter().zip(f_prev).map(|(&a, &b)| a - b).collect();
                    if let Ok(updated) = broyden_update_masked(&self.matrix, &dx, &df, &self.pattern)
                    {
                        self.matrix = updated;
                        self.mode = JacobianMode::Broyden;
                    }
                }
                Vec::new()
            }
            Strategy::Hypersecant => match hypersecant_update(&self.matrix, history, &self.pattern, params) {
                Ok(update) => {
                    self.matrix = update.matrix;
                    self.mode = if update.full {
                        JacobianMode::FullHypersecant
                    } else {
                        JacobianMode::BroydenBootstrap
                    };
                    update.events
                }
                Err(_) => Vec::new(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{linear3_residual, Linear3, Nonlinear3, Problem};
    use crate::sparsity::tridiagonal_pattern;

    type M = DenseMatrix<f64>;

    fn history_from(points: &[[f64; 3]]) -> IterationHistory<f64> {
        let mut h = IterationHistory::new(4);
        for p in points {
            h.push(p.to_vec(), linear3_residual(p));
        }
        h
    }

    #[test]
    fn broyden_noop_when_secant_already_holds() {
        // J = I, dx = e1, dF = e1: J dx == dF so the update vanishes.
        let j = M::identity(3);
        let out = broyden_update(&j, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(out.max_abs_diff(&j), 0.0);
    }

    #[test]
    fn broyden_scalar_secant() {
        let j = M::from_rows(&[&[2.0]]);
        let out = broyden_update(&j, &[1.0], &[3.0]).unwrap();
        assert_eq!(out[(0, 0)], 3.0);
    }

    #[test]
    fn broyden_zero_step_signals() {
        let j = M::identity(2);
        assert_eq!(broyden_update(&j, &[0.0, 0.0], &[1.0, 1.0]), Err(DegenerateStepSignal));
    }

    #[test]
    fn broyden_satisfies_secant_condition() {
        let j = M::from_rows(&[&[1.0, 0.25, 0.0], &[0.5, 2.0, -1.0], &[0.0, 0.75, 1.5]]);
        let dx = [0.3, -0.7, 0.2];
        let df = [1.0, 0.1, -0.4];
        let out = broyden_update(&j, &dx, &df).unwrap();
        let jdx = out.matvec(&dx);
        for (a, b) in jdx.iter().zip(df.iter()) {
            assert!((a - b).abs() <= 1e-12 * (b.abs() + 1.0));
        }
    }

    #[test]
    fn broyden_matches_termwise_formula() {
        // First step of the linear problem from (0.5, 0.5, 0.5), J = I.
        let x0 = [0.5, 0.5, 0.5];
        let f0 = linear3_residual(&x0);
        let dx: Vec<f64> = f0.iter().map(|v| -v).collect();
        let x1: Vec<f64> = x0.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let f1 = linear3_residual(&x1);
        let df: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
        let j = M::identity(3);
        let out = broyden_update(&j, &dx, &df).unwrap();
        let denom: f64 = dx.iter().map(|v| v * v).sum();
        let jdx = j.matvec(&dx);
        for i in 0..3 {
            for c in 0..3 {
                let expected = j[(i, c)] + (df[i] - jdx[i]) / denom * dx[c];
                assert!((out[(i, c)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn masked_update_preserves_pattern_and_values() {
        let pattern = tridiagonal_pattern(3);
        let j = M::identity(3);
        let dx = [0.75, 1.0, 0.75];
        let df = [1.25, 1.75, 1.25];
        let dense = broyden_update(&j, &dx, &df).unwrap();
        let masked = broyden_update_masked(&j, &dx, &df, &pattern).unwrap();
        assert_eq!(masked[(0, 2)], 0.0);
        assert_eq!(masked[(2, 0)], 0.0);
        for i in 0..3 {
            for &c in pattern.row_support(i) {
                assert_eq!(masked[(i, c)], dense[(i, c)]);
            }
        }
    }

    #[test]
    fn row_system_layout_matches_definition() {
        let h = history_from(&[
            [0.5, 0.5, 0.5],
            [1.25, 1.5, 1.25],
            [1.0, 0.9, 1.0],
            [1.05, 1.02, 1.05],
        ]);
        let support = [0usize, 1, 2];
        let (a, b) = hypersecant_row_system(&h, 1, &support).unwrap();
        // Row 0 differences x^k - x^{k-3}, row 2 differences x^k - x^{k-1}.
        assert!((a[(0, 0)] - (1.05 - 0.5)).abs() < 1e-15);
        assert!((a[(2, 1)] - (1.02 - 0.9)).abs() < 1e-15);
        let f_new = linear3_residual(&[1.05, 1.02, 1.05]);
        let f_old = linear3_residual(&[0.5, 0.5, 0.5]);
        assert!((b[0] - (f_new[1] - f_old[1])).abs() < 1e-15);
    }

    #[test]
    fn row_system_insufficient_history() {
        let h = history_from(&[[0.5, 0.5, 0.5], [1.0, 1.0, 1.0]]);
        let err = hypersecant_row_system(&h, 1, &[0, 1, 2]).unwrap_err();
        assert_eq!(err, InsufficientHistorySignal { available: 1, needed: 3 });
    }

    #[test]
    fn row_system_repeated_iterate_gives_zero_row() {
        let h = history_from(&[
            [0.5, 0.5, 0.5],
            [1.25, 1.5, 1.25],
            [1.0, 0.9, 1.0],
            [1.0, 0.9, 1.0],
        ]);
        let (a, _) = hypersecant_row_system(&h, 0, &[0, 1]).unwrap();
        // Newest equals its predecessor: the last condition row vanishes.
        assert_eq!(a[(1, 0)], 0.0);
        assert_eq!(a[(1, 1)], 0.0);
    }

    #[test]
    fn full_update_recovers_linear_jacobian() {
        // Generic (asymmetric) iterates: every row system is nonsingular and
        // the result must match the exact matrix.
        let h = history_from(&[
            [0.5, 0.6, 0.7],
            [1.3, 1.1, 0.9],
            [0.9, 1.25, 1.05],
            [1.02, 0.98, 1.01],
        ]);
        let pattern = tridiagonal_pattern(3);
        let update =
            hypersecant_update(&M::identity(3), &h, &pattern, &HypersecantParams::default())
                .unwrap();
        assert!(update.full);
        assert!(update.events.is_empty());
        let exact = Problem::<f64>::exact_jacobian(&Linear3, &[0.0; 3]).unwrap();
        assert!(update.matrix.max_abs_diff(&exact) < 1e-9);
    }

    #[test]
    fn degenerate_history_takes_svd_path() {
        // x1 and x3 identical in every record: the middle-row system has two
        // equal columns.
        let h = history_from(&[
            [0.5, 0.5, 0.5],
            [1.25, 1.5, 1.25],
            [0.95, 1.08, 0.95],
            [1.01, 0.99, 1.01],
        ]);
        let pattern = tridiagonal_pattern(3);
        let update =
            hypersecant_update(&M::identity(3), &h, &pattern, &HypersecantParams::default())
                .unwrap();
        assert!(update.full);
        let svd_rows: Vec<usize> = update
            .events
            .iter()
            .map(|e| match e {
                RowUpdateEvent::SvdFallback { row, inverse_condition } => {
                    assert!(*inverse_condition <= 1e-14);
                    *row
                }
                other => panic!("unexpected event {other:?}"),
            })
            .collect();
        assert_eq!(svd_rows, vec![1]);
        // Least-norm solution of the symmetric middle row.
        assert!((update.matrix[(1, 0)] - 0.5).abs() < 1e-9);
        assert!((update.matrix[(1, 1)] - 1.0).abs() < 1e-9);
        assert!((update.matrix[(1, 2)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_single_step_matches_explicit_formulas() {
        let x0 = [0.5, 0.5, 1.5];
        let x1 = [1.1, 0.8, 1.2];
        let f0 = crate::problems::nonlinear3_residual(&x0);
        let f1 = crate::problems::nonlinear3_residual(&x1);
        let mut h = IterationHistory::new(4);
        h.push(x0.to_vec(), f0.clone());
        h.push(x1.to_vec(), f1.clone());
        let pattern = tridiagonal_pattern(3);
        let prev = M::identity(3);
        let update =
            hypersecant_update(&prev, &h, &pattern, &HypersecantParams::default()).unwrap();
        assert!(!update.full);

        let dx: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let df: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
        let b = broyden_update_masked(&prev, &dx, &df, &pattern).unwrap();
        // Row 0: keep B[0][1], solve the diagonal from the single condition.
        let h00 = (df[0] - b[(0, 1)] * dx[1]) / dx[0];
        assert!((update.matrix[(0, 0)] - h00).abs() < 1e-12);
        assert_eq!(update.matrix[(0, 1)], b[(0, 1)]);
        // Row 1: keep both off-diagonals.
        let h11 = (df[1] - b[(1, 0)] * dx[0] - b[(1, 2)] * dx[2]) / dx[1];
        assert!((update.matrix[(1, 1)] - h11).abs() < 1e-12);
        assert_eq!(update.matrix[(1, 0)], b[(1, 0)]);
        assert_eq!(update.matrix[(1, 2)], b[(1, 2)]);
    }

    #[test]
    fn bootstrap_zero_denominator_keeps_baseline_row() {
        // No movement in x2 at all: row 2's reduced system is singular and
        // the row keeps its baseline values.
        let x0 = [0.5, 1.0, 1.5];
        let x1 = [0.9, 1.0, 1.1];
        let f0 = crate::problems::nonlinear3_residual(&x0);
        let f1 = crate::problems::nonlinear3_residual(&x1);
        let mut h = IterationHistory::new(4);
        h.push(x0.to_vec(), f0.clone());
        h.push(x1.to_vec(), f1.clone());
        let pattern = tridiagonal_pattern(3);
        let update =
            hypersecant_update(&M::identity(3), &h, &pattern, &HypersecantParams::default())
                .unwrap();
        assert!(update
            .events
            .iter()
            .any(|e| matches!(e, RowUpdateEvent::KeptBroydenRow { row: 1 })));
    }

    #[test]
    fn history_window_slides() {
        let mut h = IterationHistory::new(3);
        for k in 0..5 {
            let v = k as f64;
            h.push(vec![v, v, v], vec![v, v, v]);
        }
        assert_eq!(h.len(), 3);
        assert_eq!(h.from_newest(0).0[0], 4.0);
        assert_eq!(h.from_newest(2).0[0], 2.0);
    }

    #[test]
    fn fd_exact_on_linear_problem() {
        let problem = Linear3;
        let pattern = Problem::<f64>::pattern(&problem);
        let coloring = greedy_color_columns(&pattern);
        let x = [0.3, -0.2, 0.9];
        let fx = problem.residual(&x).unwrap();
        let j = fd_colored_jacobian(&problem, &x, &fx, &coloring, &pattern, 1e-7).unwrap();
        let exact = problem.exact_jacobian(&x).unwrap();
        assert!(j.max_abs_diff(&exact) < 1e-9);
    }

    #[test]
    fn fd_near_exact_on_quadratic_problem() {
        let problem = Nonlinear3;
        let pattern = Problem::<f64>::pattern(&problem);
        let coloring = greedy_color_columns(&pattern);
        let x = [1.0, 1.0, 1.0];
        let fx = problem.residual(&x).unwrap();
        let j = fd_colored_jacobian(&problem, &x, &fx, &coloring, &pattern, 1e-7).unwrap();
        let exact = problem.exact_jacobian(&x).unwrap();
        assert!(j.max_abs_diff(&exact) < 1e-6);
    }

    #[test]
    fn fd_respects_pattern_zeros() {
        let problem = Nonlinear3;
        let pattern = Problem::<f64>::pattern(&problem);
        let coloring = greedy_color_columns(&pattern);
        let x = [0.7, 1.1, 1.3];
        let fx = problem.residual(&x).unwrap();
        let j = fd_colored_jacobian(&problem, &x, &fx, &coloring, &pattern, 1e-7).unwrap();
        assert_eq!(j[(0, 2)], 0.0);
        assert_eq!(j[(2, 0)], 0.0);
    }

    #[test]
    fn state_reinitialize_hook() {
        let pattern = tridiagonal_pattern(3);
        let mut state = JacobianState::new(Strategy::Broyden, pattern, M::identity(3));
        let mut h = IterationHistory::new(4);
        h.push(vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]);
        h.push(vec![1.0, 1.0, 1.0], vec![0.5, 0.5, 0.5]);
        state.update_after_step(&h, &HypersecantParams::default());
        assert_eq!(state.mode(), JacobianMode::Broyden);
        state.reinitialize(M::identity(3));
        assert_eq!(state.mode(), JacobianMode::Init);
        assert_eq!(state.matrix().max_abs_diff(&M::identity(3)), 0.0);
    }
}
