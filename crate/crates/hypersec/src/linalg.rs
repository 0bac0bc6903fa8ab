//! Small dense linear-algebra kernel.
//!
//! Direct solves with an inverse-condition estimate that signals numerical
//! singularity, and a one-sided Jacobi SVD used for least-norm solves of
//! degenerate secant systems. System sizes here are tiny (row systems of
//! dimension ≤ 3 for the shipped problems, Newton steps of dimension N+1),
//! so everything is O(n³) without apology.

use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::Scalar;

/// Default floor on the inverse-condition estimate below which a direct
/// solve reports [`SingularSignal`] instead of returning garbage.
pub const DEFAULT_SINGULAR_FLOOR: f64 = 1e-14;

/// Default relative cutoff for treating singular values as zero in
/// least-norm solves.
pub const DEFAULT_SVD_CUTOFF: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, entries: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows(rows: &[&[T]]) -> Self {
        let nrows = rows.len();
        let ncols = if nrows == 0 { 0 } else { rows[0].len() };
        let mut entries = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            entries.extend_from_slice(r);
        }
        DenseMatrix { rows: nrows, cols: ncols, entries }
    }

    pub fn from_vec(rows: usize, cols: usize, entries: Vec<T>) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count must be rows*cols");
        DenseMatrix { rows, cols, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> DenseMatrix<T> {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Max-norm of the entrywise difference; matrices must be same shape.
    pub fn max_abs_diff(&self, other: &DenseMatrix<T>) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum())
            .fold(T::zero(), T::max)
    }

    /// Max-norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum())
            .fold(T::zero(), T::max)
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.entries[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.entries[i * self.cols + j]
    }
}

/// Reported by direct solves when the coefficient matrix is numerically
/// singular; the caller is expected to fall back to an SVD least-norm solve.
#[derive(Debug, Clone, Error)]
#[error("coefficient matrix is numerically singular (inverse condition {inverse_condition:e})")]
pub struct SingularSignal<T: Scalar> {
    pub inverse_condition: T,
}

struct LuFactors<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> LuFactors<T> {
    /// LU with partial pivoting. Returns None when an exactly zero pivot
    /// turns up (structurally singular to working precision).
    fn factor(a: &DenseMatrix<T>) -> Option<Self> {
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let m = lu[(i, k)] / pivot;
                lu[(i, k)] = m;
                for j in k + 1..n {
                    let upd = m * lu[(k, j)];
                    lu[(i, j)] -= upd;
                }
            }
        }
        Some(LuFactors { lu, perm })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.perm.len();
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            for i in k + 1..n {
                let upd = self.lu[(i, k)] * y[k];
                y[i] -= upd;
            }
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in k + 1..n {
                s -= self.lu[(k, j)] * y[j];
            }
            y[k] = s / self.lu[(k, k)];
        }
        y
    }

    /// 1-norm of the inverse, computed column by column. Fine at these sizes.
    fn inverse_norm_one(&self) -> T {
        let n = self.perm.len();
        let mut worst = T::zero();
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let col = self.solve(&e);
            e[j] = T::zero();
            let sum: T = col.iter().map(|v| v.abs()).sum();
            worst = worst.max(sum);
        }
        worst
    }
}

/// Direct solve of a square system with the default singularity floor.
pub fn solve_dense<T: Scalar>(a: &DenseMatrix<T>, b: &[T]) -> Result<Vec<T>, SingularSignal<T>> {
    solve_dense_with_floor(a, b, T::of(DEFAULT_SINGULAR_FLOOR))
}

/// Direct solve of a square system via LU with partial pivoting.
///
/// Signals [`SingularSignal`] when the 1-norm inverse-condition estimate
/// falls below `floor` (or a pivot is exactly zero). Dimension mismatches
/// are programming errors and panic.
pub fn solve_dense_with_floor<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &[T],
    floor: T,
) -> Result<Vec<T>, SingularSignal<T>> {
    assert!(a.is_square(), "solve_dense needs a square matrix");
    assert_eq!(a.rows(), b.len(), "dimension mismatch");
    let factors = match LuFactors::factor(a) {
        Some(f) => f,
        None => return Err(SingularSignal { inverse_condition: T::zero() }),
    };
    let denom = a.norm_one() * factors.inverse_norm_one();
    let rcond = if denom > T::zero() && denom.is_finite() {
        T::one() / denom
    } else {
        T::zero()
    };
    if !rcond.is_finite() || rcond < floor {
        return Err(SingularSignal { inverse_condition: rcond });
    }
    Ok(factors.solve(b))
}

/// Singular value decomposition A = U · diag(w) · Vᵀ with w nonincreasing.
///
/// `u` is rows×k and `v` is cols×k with k = min(rows, cols). Columns of `u`
/// belonging to zero singular values are zero vectors; that is sufficient
/// for reconstruction and pseudoinverse application, which is all this
/// kernel promises.
#[derive(Debug, Clone)]
pub struct SvdResult<T> {
    u: DenseMatrix<T>,
    singular_values: Vec<T>,
    v: DenseMatrix<T>,
}

impl<T: Scalar> SvdResult<T> {
    pub fn singular_values(&self) -> &[T] {
        &self.singular_values
    }

    pub fn u(&self) -> &DenseMatrix<T> {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix<T> {
        &self.v
    }

    /// Applies the truncated pseudoinverse: x = V · diag(w⁺) · Uᵀ · b, where
    /// 1/wᵢ is replaced by zero for every wᵢ < rel_cutoff · w_max.
    pub fn pseudoinverse_apply(&self, b: &[T], rel_cutoff: T) -> Vec<T> {
        let k = self.singular_values.len();
        let wmax = self.singular_values.first().copied().unwrap_or(T::zero());
        let cut = rel_cutoff * wmax;
        let mut coeff = vec![T::zero(); k];
        for (s, c) in self.singular_values.iter().zip(coeff.iter_mut()) {
            if *s > T::zero() && *s >= cut {
                *c = T::one() / *s;
            }
        }
        let n = self.v.rows();
        let m = self.u.rows();
        let mut x = vec![T::zero(); n];
        for s in 0..k {
            if coeff[s] == T::zero() {
                continue;
            }
            let mut ub = T::zero();
            for i in 0..m {
                ub += self.u[(i, s)] * b[i];
            }
            let scale = ub * coeff[s];
            for j in 0..n {
                x[j] += self.v[(j, s)] * scale;
            }
        }
        x
    }

    /// U · diag(w) · Vᵀ, for factorization-quality checks.
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let m = self.u.rows();
        let n = self.v.rows();
        let k = self.singular_values.len();
        let mut a = DenseMatrix::zeros(m, n);
        for s in 0..k {
            let w = self.singular_values[s];
            if w == T::zero() {
                continue;
            }
            for i in 0..m {
                let uw = self.u[(i, s)] * w;
                for j in 0..n {
                    a[(i, j)] += uw * self.v[(j, s)];
                }
            }
        }
        a
    }
}

/// One-sided Jacobi SVD. Robust and plenty fast at the sizes used here.
pub fn svd<T: Scalar>(a: &DenseMatrix<T>) -> SvdResult<T> {
    if a.rows() < a.cols() {
        // Factor the transpose and swap the roles of U and V.
        let t = svd(&a.transpose());
        return SvdResult { u: t.v, singular_values: t.singular_values, v: t.u };
    }
    let m = a.rows();
    let n = a.cols();
    let mut b = a.clone();
    let mut v = DenseMatrix::<T>::identity(n);
    let tol = T::epsilon() * T::of(16.0);
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for i in 0..m {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() || gamma == T::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    b[(i, p)] = c * bp - s * bq;
                    b[(i, q)] = s * bp + c * bq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    // Column norms of the rotated matrix are the singular values.
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![T::zero(); n];
    for j in 0..n {
        w[j] = (0..m).map(|i| b[(i, j)] * b[(i, j)]).sum::<T>().sqrt();
    }
    order.sort_by(|&x, &y| w[y].partial_cmp(&w[x]).expect("finite singular values"));
    let mut u = DenseMatrix::zeros(m, n);
    let mut vs = DenseMatrix::zeros(n, n);
    let mut ws = vec![T::zero(); n];
    for (dst, &src) in order.iter().enumerate() {
        ws[dst] = w[src];
        if w[src] > T::zero() {
            for i in 0..m {
                u[(i, dst)] = b[(i, src)] / w[src];
            }
        }
        for i in 0..n {
            vs[(i, dst)] = v[(i, src)];
        }
    }
    SvdResult { u, singular_values: ws, v: vs }
}

/// Minimum-norm least-squares solve via truncated SVD: singular values below
/// rel_cutoff · w_max are treated as exactly zero. An all-zero matrix yields
/// the zero vector.
pub fn svd_least_norm_solve<T: Scalar>(a: &DenseMatrix<T>, b: &[T], rel_cutoff: T) -> Vec<T> {
    assert_eq!(a.rows(), b.len(), "dimension mismatch");
    svd(a).pseudoinverse_apply(b, rel_cutoff)
}

/// Returns J + u ⊗ v without touching the inputs.
pub fn rank_one_update<T: Scalar>(j: &DenseMatrix<T>, u: &[T], v: &[T]) -> DenseMatrix<T> {
    assert_eq!(u.len(), j.rows(), "dimension mismatch");
    assert_eq!(v.len(), j.cols(), "dimension mismatch");
    let mut out = j.clone();
    for i in 0..j.rows() {
        let ui = u[i];
        let row = out.row_mut(i);
        for (rj, &vj) in row.iter_mut().zip(v) {
            *rj += ui * vj;
        }
    }
    out
}

/// Dot product.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Max norm.
pub fn norm_inf<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|x| x.abs()).fold(T::zero(), T::max)
}

/// Euclidean norm.
pub fn norm_two<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}
