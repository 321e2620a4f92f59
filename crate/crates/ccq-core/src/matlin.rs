//! Dense matrix linear algebra over exact integers and `f64`.
//!
//! Provides the two matrix types used everywhere else ([`IntMatrix`] with
//! overflow-checked arithmetic and [`RealMatrix`]), the symmetric Jacobi
//! eigensolver [`sym_eig`], and [`common_eigenprojectors`], which splits a
//! family of exactly-commuting symmetric integer matrices into their common
//! eigenspace projectors.
//!
//! # Tolerances
//!
//! All approximate comparisons go through [`Tolerance`]: a residual `r`
//! measured at magnitude `m` counts as zero iff `|r| <= abs_eps * (1 + |m|)`.
//! The default `abs_eps` is [`DEFAULT_ABS_EPS`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CcqError, Result};

/// Default absolute epsilon for [`Tolerance`].
pub const DEFAULT_ABS_EPS: f64 = 1e-8;

/// Convergence threshold for the Jacobi sweep: iteration stops once the
/// off-diagonal Frobenius norm drops below `JACOBI_OFF_EPS * (1 + ||A||_F)`.
pub const JACOBI_OFF_EPS: f64 = 1e-12;

/// Maximum number of Jacobi sweeps before giving up. Convergence is
/// quadratic; well-conditioned symmetric input needs fewer than 15 sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 64;

/// Relative eigenvalue clustering threshold used when splitting commuting
/// families: two adjacent eigenvalues belong to one cluster iff their gap is
/// at most `CLUSTER_EPS * (1 + spread)` where `spread` is the eigenvalue
/// range of the block being split.
pub const CLUSTER_EPS: f64 = 1e-6;

/// Equality band for comparing eigenvalue tuples computed by independent
/// routes: components within `1e-9 * (1 + magnitude)` are treated as equal
/// so that floating-point noise cannot flip the canonical sort order.
const TUPLE_CMP_EPS: f64 = 1e-9;

/// Lexicographically descending order on eigenvalue tuples, with a relative
/// equality band on each component. Tuples of genuinely distinct common
/// eigenspaces differ by far more than the band, so the order is stable
/// across independent computations of the same spectrum.
pub(crate) fn cmp_eigentuples_desc(a: &[f64], b: &[f64]) -> core::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let band = TUPLE_CMP_EPS * (1.0 + fabs(*x).max(fabs(*y)));
        if fabs(x - y) <= band {
            continue;
        }
        match y.partial_cmp(x) {
            Some(core::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    core::cmp::Ordering::Equal
}

#[inline]
pub(crate) fn fabs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Absolute/relative tolerance rule shared by the whole crate.
///
/// A residual `r` at magnitude `m` passes iff `|r| <= abs_eps * (1 + |m|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    /// Absolute epsilon; must be finite and strictly positive.
    pub abs_eps: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs_eps: DEFAULT_ABS_EPS,
        }
    }
}

impl Tolerance {
    /// Creates a tolerance, rejecting non-finite or non-positive epsilons.
    pub fn new(abs_eps: f64) -> Result<Self> {
        if !abs_eps.is_finite() || abs_eps <= 0.0 {
            return Err(CcqError::pre(format!(
                "tolerance must be finite and positive, got {abs_eps}"
            )));
        }
        Ok(Tolerance { abs_eps })
    }

    /// `|residual| <= abs_eps * (1 + |magnitude|)`.
    #[inline]
    pub fn passes(&self, residual: f64, magnitude: f64) -> bool {
        residual.is_finite() && fabs(residual) <= self.abs_eps * (1.0 + fabs(magnitude))
    }

    /// The absolute bound implied at a given magnitude.
    #[inline]
    pub fn bound(&self, magnitude: f64) -> f64 {
        self.abs_eps * (1.0 + fabs(magnitude))
    }
}

// ---------------------------------------------------------------------------
// IntMatrix
// ---------------------------------------------------------------------------

/// Dense row-major `i64` matrix with overflow-checked arithmetic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = IntMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(CcqError::pre("ragged rows in integer matrix"));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(IntMatrix {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row-major data slice.
    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn transpose(&self) -> IntMatrix {
        let mut t = IntMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (i + 1..self.cols).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Overflow-checked matrix product.
    ///
    /// # Errors
    ///
    /// Rejects shape mismatches and any intermediate `i64` overflow.
    pub fn mul(&self, other: &IntMatrix) -> Result<IntMatrix> {
        if self.cols != other.rows {
            return Err(CcqError::pre(format!(
                "integer matrix product shape mismatch: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let prod = a
                        .checked_mul(other.get(k, j))
                        .ok_or_else(|| CcqError::pre("integer overflow in matrix product"))?;
                    let sum = out
                        .get(i, j)
                        .checked_add(prod)
                        .ok_or_else(|| CcqError::pre("integer overflow in matrix product"))?;
                    out.set(i, j, sum);
                }
            }
        }
        Ok(out)
    }

    /// Overflow-checked sum.
    pub fn add(&self, other: &IntMatrix) -> Result<IntMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(CcqError::pre("integer matrix sum shape mismatch"));
        }
        let mut out = IntMatrix::zeros(self.rows, self.cols);
        for (o, (a, b)) in out
            .data
            .iter_mut()
            .zip(self.data.iter().zip(other.data.iter()))
        {
            *o = a
                .checked_add(*b)
                .ok_or_else(|| CcqError::pre("integer overflow in matrix sum"))?;
        }
        Ok(out)
    }

    /// Sum of all entries (overflow-checked).
    pub fn entry_sum(&self) -> Result<i64> {
        self.data.iter().try_fold(0i64, |acc, &v| {
            acc.checked_add(v)
                .ok_or_else(|| CcqError::pre("integer overflow in entry sum"))
        })
    }

    /// Converts to an `f64` matrix.
    pub fn to_real(&self) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    /// First position where the two matrices differ, if any.
    pub fn first_difference(&self, other: &IntMatrix) -> Option<(usize, usize)> {
        if self.rows != other.rows || self.cols != other.cols {
            return Some((0, 0));
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.get(i, j) != other.get(i, j) {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

// ---------------------------------------------------------------------------
// RealMatrix
// ---------------------------------------------------------------------------

/// Dense row-major `f64` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RealMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Constant matrix with every entry equal to `v`.
    pub fn constant(rows: usize, cols: usize, v: f64) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    /// Builds a matrix from row slices; all rows must have equal length and
    /// finite entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(CcqError::pre("ragged rows in real matrix"));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            for &v in row {
                if !v.is_finite() {
                    return Err(CcqError::pre("non-finite entry in real matrix"));
                }
                data.push(v);
            }
        }
        Ok(RealMatrix {
            rows: r,
            cols: c,
            data,
        })
    }

    /// Builds an `rows x cols` matrix by evaluating `f(i, j)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = RealMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> RealMatrix {
        let mut t = RealMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Matrix product; panics on shape mismatch (internal callers always
    /// match shapes, public entry points validate first).
    pub fn mul(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!(
            self.cols, other.rows,
            "real matrix product shape mismatch: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = RealMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = i * out.cols;
                let brow = k * other.cols;
                for j in 0..other.cols {
                    out.data[orow + j] += a * other.data[brow + j];
                }
            }
        }
        out
    }

    /// Entrywise (Schur) product; panics on shape mismatch.
    pub fn hadamard(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn add(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// Trace; panics if not square.
    pub fn trace(&self) -> f64 {
        assert!(self.is_square(), "trace of non-square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    /// Sum of all entries.
    pub fn entry_sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Frobenius norm.
    pub fn frob_norm(&self) -> f64 {
        sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| {
            let a = fabs(v);
            if a > m {
                a
            } else {
                m
            }
        })
    }

    /// `tr(self * otherᵀ)` — the Frobenius inner product; panics on shape
    /// mismatch.
    pub fn frob_inner(&self, other: &RealMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Returns the columns `cols` as a new matrix (in the given order).
    pub fn select_columns(&self, cols: &[usize]) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.rows, cols.len());
        for (jj, &j) in cols.iter().enumerate() {
            for i in 0..self.rows {
                out.set(i, jj, self.get(i, j));
            }
        }
        out
    }

    /// True iff all entries are finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `||a - b||_F`, rejecting shape mismatches.
pub fn frobenius_residual(a: &RealMatrix, b: &RealMatrix) -> Result<f64> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(CcqError::pre(format!(
            "frobenius_residual shape mismatch: {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(a.sub(b).frob_norm())
}

/// Largest absolute entry of `a - b`, rejecting shape mismatches.
pub fn max_abs_residual(a: &RealMatrix, b: &RealMatrix) -> Result<f64> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(CcqError::pre(format!(
            "residual shape mismatch: {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(a.sub(b).max_abs())
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Result of [`sym_eig`]: `values` are descending, `vectors` holds the
/// corresponding orthonormal eigenvectors as columns, so that
/// `A = V diag(values) Vᵀ`.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: RealMatrix,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues are returned in descending order; each eigenvector's largest
/// (first, on ties within 1e-12) absolute component is made positive so the
/// output is deterministic.
///
/// # Errors
///
/// - non-square input;
/// - asymmetry beyond `tol` (the maximum of `|a_ij - a_ji|` is reported);
/// - failure to converge within [`JACOBI_MAX_SWEEPS`] sweeps.
pub fn sym_eig(a: &RealMatrix, tol: Tolerance) -> Result<SymEig> {
    if !a.is_square() {
        return Err(CcqError::pre(format!(
            "sym_eig requires a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if !a.all_finite() {
        return Err(CcqError::pre("sym_eig input has non-finite entries"));
    }
    let n = a.rows;
    let scale = a.max_abs();
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d = fabs(a.get(i, j) - a.get(j, i));
            if d > max_asym {
                max_asym = d;
            }
        }
    }
    if !tol.passes(max_asym, scale) {
        return Err(CcqError::tol(
            "sym_eig symmetry check",
            max_asym,
            tol.bound(scale),
        ));
    }

    // Work on the symmetrized copy so tiny admissible asymmetry cannot bias
    // the rotations.
    let mut m = RealMatrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let mut v = RealMatrix::identity(n);
    let fro = m.frob_norm();
    let stop = JACOBI_OFF_EPS * (1.0 + fro);

    let mut converged = n <= 1;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off += 2.0 * m.get(i, j) * m.get(i, j);
            }
        }
        if sqrt(off) <= stop {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if fabs(apq) <= stop / (n as f64) {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                // Rotate rows/columns p and q of m.
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                // Accumulate the rotation into v.
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off += 2.0 * m.get(i, j) * m.get(i, j);
            }
        }
        return Err(CcqError::tol("sym_eig Jacobi convergence", sqrt(off), stop));
    }

    // Sort eigenpairs by descending eigenvalue (stable: ties keep Jacobi
    // order), then canonicalize each eigenvector's sign.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(j, j)
            .partial_cmp(&m.get(i, i))
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = v.select_columns(&order);
    for j in 0..n {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..n {
            let a = fabs(vectors.get(i, j));
            if a > best_abs + 1e-12 {
                best_abs = a;
                best = i;
            }
        }
        if vectors.get(best, j) < 0.0 {
            for i in 0..n {
                vectors.set(i, j, -vectors.get(i, j));
            }
        }
    }
    Ok(SymEig { values, vectors })
}

// ---------------------------------------------------------------------------
// Common eigenprojectors of a commuting family
// ---------------------------------------------------------------------------

/// One common eigenspace of a commuting symmetric family: the orthogonal
/// projector onto it, its dimension, and the eigenvalue each input matrix
/// takes on it.
#[derive(Clone, Debug)]
pub struct EigenProjector {
    pub projector: RealMatrix,
    pub rank: usize,
    /// `eigenvalues[k]` is the eigenvalue of the `k`-th input matrix on this
    /// eigenspace.
    pub eigenvalues: Vec<f64>,
}

/// Splits a family of exactly-commuting symmetric integer matrices into the
/// orthogonal projectors onto their common eigenspaces.
///
/// Projectors are returned sorted by their eigenvalue tuples, lexicographically
/// descending; for adjacency matrices of an association scheme this puts the
/// all-ones eigenspace (eigenvalue = valency, the Perron root of each matrix)
/// first.
///
/// # Errors
///
/// - empty family, non-square or mismatched shapes;
/// - a matrix that is not exactly symmetric;
/// - a pair that does not exactly commute (reported with the first differing
///   entry of the two products);
/// - verification failure: the projectors must be idempotent, mutually
///   orthogonal, sum to the identity, and reproduce every input matrix as
///   `Σ eigenvalue · projector`, all within `tol`.
pub fn common_eigenprojectors(mats: &[IntMatrix], tol: Tolerance) -> Result<Vec<EigenProjector>> {
    if mats.is_empty() {
        return Err(CcqError::pre("common_eigenprojectors: empty family"));
    }
    let n = mats[0].rows();
    for (k, m) in mats.iter().enumerate() {
        if m.rows() != n || m.cols() != n {
            return Err(CcqError::pre(format!(
                "common_eigenprojectors: matrix {k} has shape {}x{}, expected {n}x{n}",
                m.rows(),
                m.cols()
            )));
        }
        if !m.is_symmetric() {
            return Err(CcqError::pre(format!(
                "common_eigenprojectors: matrix {k} is not symmetric"
            )));
        }
    }
    for a in 0..mats.len() {
        for b in a + 1..mats.len() {
            let ab = mats[a].mul(&mats[b])?;
            let ba = mats[b].mul(&mats[a])?;
            if let Some((i, j)) = ab.first_difference(&ba) {
                return Err(CcqError::pre(format!(
                    "common_eigenprojectors: matrices {a} and {b} do not commute \
                     (entry ({i},{j}): {} vs {})",
                    ab.get(i, j),
                    ba.get(i, j)
                )));
            }
        }
    }

    // Successive refinement: maintain orthonormal bases of subspaces that are
    // invariant under all matrices processed so far, splitting each by the
    // eigenvalue clusters of the next matrix restricted to it.
    let mut subs: Vec<RealMatrix> = vec![RealMatrix::identity(n)];
    for m in mats {
        let mf = m.to_real();
        let mut next: Vec<RealMatrix> = Vec::new();
        for basis in &subs {
            let dim = basis.cols();
            if dim == 1 {
                next.push(basis.clone());
                continue;
            }
            // Restriction of m to the subspace: basisᵀ * m * basis.
            let restricted = basis.transpose().mul(&mf.mul(basis));
            let eig = sym_eig(&restricted, tol)?;
            let spread = eig.values[0] - eig.values[dim - 1];
            let gap_bound = CLUSTER_EPS * (1.0 + fabs(spread));
            let rotated = basis.mul(&eig.vectors);
            let mut start = 0usize;
            for j in 1..=dim {
                if j == dim || eig.values[j - 1] - eig.values[j] > gap_bound {
                    next.push(rotated.select_columns(&(start..j).collect::<Vec<_>>()));
                    start = j;
                }
            }
        }
        subs = next;
    }

    // Assemble projectors and eigenvalue tuples.
    let mut projs: Vec<EigenProjector> = Vec::with_capacity(subs.len());
    for basis in &subs {
        let rank = basis.cols();
        let projector = basis.mul(&basis.transpose());
        let eigenvalues: Vec<f64> = mats
            .iter()
            .map(|m| {
                let mv = m.to_real().mul(basis);
                basis.frob_inner(&mv) / rank as f64
            })
            .collect();
        projs.push(EigenProjector {
            projector,
            rank,
            eigenvalues,
        });
    }
    projs.sort_by(|a, b| cmp_eigentuples_desc(&a.eigenvalues, &b.eigenvalues));

    verify_projector_family(mats, &projs, n, tol)?;
    Ok(projs)
}

/// Checks idempotency, mutual orthogonality, completeness, and the spectral
/// recombination of every input matrix.
fn verify_projector_family(
    mats: &[IntMatrix],
    projs: &[EigenProjector],
    n: usize,
    tol: Tolerance,
) -> Result<()> {
    let total_rank: usize = projs.iter().map(|p| p.rank).sum();
    if total_rank != n {
        return Err(CcqError::pre(format!(
            "common_eigenprojectors: ranks sum to {total_rank}, expected {n}"
        )));
    }
    let mut sum = RealMatrix::zeros(n, n);
    for (h, p) in projs.iter().enumerate() {
        let sq = p.projector.mul(&p.projector);
        let res = max_abs_residual(&sq, &p.projector)?;
        if !tol.passes(res, 1.0) {
            return Err(CcqError::tol(
                format!("projector {h} idempotency"),
                res,
                tol.bound(1.0),
            ));
        }
        sum = sum.add(&p.projector);
        for (h2, p2) in projs.iter().enumerate().skip(h + 1) {
            let prod = p.projector.mul(&p2.projector);
            let res = prod.max_abs();
            if !tol.passes(res, 1.0) {
                return Err(CcqError::tol(
                    format!("projectors {h} and {h2} orthogonality"),
                    res,
                    tol.bound(1.0),
                ));
            }
        }
    }
    let res = max_abs_residual(&sum, &RealMatrix::identity(n))?;
    if !tol.passes(res, 1.0) {
        return Err(CcqError::tol(
            "projector completeness (sum = identity)",
            res,
            tol.bound(1.0),
        ));
    }
    for (k, m) in mats.iter().enumerate() {
        let mf = m.to_real();
        let mut rebuilt = RealMatrix::zeros(n, n);
        for p in projs {
            rebuilt = rebuilt.add(&p.projector.scale(p.eigenvalues[k]));
        }
        let res = max_abs_residual(&rebuilt, &mf)?;
        if !tol.passes(res, mf.max_abs()) {
            return Err(CcqError::tol(
                format!("spectral recombination of matrix {k}"),
                res,
                tol.bound(mf.max_abs()),
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle_adjacency(n: usize, dist: usize) -> IntMatrix {
        let mut m = IntMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let d = (i as i64 - j as i64).rem_euclid(n as i64) as usize;
                let d = d.min(n - d);
                if d == dist {
                    m.set(i, j, 1);
                }
            }
        }
        m
    }

    #[test]
    fn tolerance_rule() {
        let tol = Tolerance::default();
        assert!(tol.passes(5e-9, 0.0));
        assert!(tol.passes(1.5e-8, 1.0));
        assert!(!tol.passes(3e-8, 1.0));
        assert!(Tolerance::new(0.0).is_err());
        assert!(Tolerance::new(f64::NAN).is_err());
    }

    #[test]
    fn int_matrix_mul_and_overflow() {
        let a = IntMatrix::from_rows(&[vec![1, 2], vec![3, 4]]).unwrap();
        let b = IntMatrix::from_rows(&[vec![5, 6], vec![7, 8]]).unwrap();
        let c = a.mul(&b).unwrap();
        assert_eq!(c.data(), &[19, 22, 43, 50]);

        let big = IntMatrix::from_rows(&[vec![i64::MAX, 1], vec![0, 1]]).unwrap();
        assert!(big.mul(&big).is_err());
    }

    #[test]
    fn sym_eig_diagonal_and_known() {
        let tol = Tolerance::default();
        let a = RealMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let e = sym_eig(&a, tol).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-12);
        assert!((e.values[1] + 1.0).abs() < 1e-12);

        // [[0,1],[1,0]] has eigenvalues ±1 with eigenvectors (1,±1)/√2.
        let b = RealMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = sym_eig(&b, tol).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] + 1.0).abs() < 1e-12);
        // Reconstruction.
        let mut rebuilt = RealMatrix::zeros(2, 2);
        for h in 0..2 {
            let col = e.vectors.select_columns(&[h]);
            rebuilt = rebuilt.add(&col.mul(&col.transpose()).scale(e.values[h]));
        }
        assert!(max_abs_residual(&rebuilt, &b).unwrap() < 1e-12);
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let a = RealMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        match sym_eig(&a, Tolerance::default()) {
            Err(CcqError::Tolerance { residual, .. }) => assert!((residual - 1.0).abs() < 1e-15),
            other => panic!("expected tolerance error, got {other:?}"),
        }
    }

    #[test]
    fn sym_eig_reconstructs_random_like_matrix() {
        // Deterministic "random" symmetric matrix.
        let n = 12;
        let mut a = RealMatrix::zeros(n, n);
        let mut state = 88172645463325252u64;
        let mut rng = || {
            // xorshift64
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        for i in 0..n {
            for j in i..n {
                let v = rng();
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        let e = sym_eig(&a, Tolerance::default()).unwrap();
        let mut rebuilt = RealMatrix::zeros(n, n);
        for h in 0..n {
            let col = e.vectors.select_columns(&[h]);
            rebuilt = rebuilt.add(&col.mul(&col.transpose()).scale(e.values[h]));
        }
        assert!(max_abs_residual(&rebuilt, &a).unwrap() < 1e-10);
        // Eigenvalues descending.
        for h in 1..n {
            assert!(e.values[h - 1] >= e.values[h] - 1e-12);
        }
        // Orthonormality.
        let vtv = e.vectors.transpose().mul(&e.vectors);
        assert!(max_abs_residual(&vtv, &RealMatrix::identity(n)).unwrap() < 1e-12);
    }

    #[test]
    fn pentagon_projectors_have_ranks_1_2_2() {
        // Distance-1 and distance-2 adjacency of the 5-cycle.
        let a1 = cycle_adjacency(5, 1);
        let a2 = cycle_adjacency(5, 2);
        let projs = common_eigenprojectors(&[a1, a2], Tolerance::default()).unwrap();
        let ranks: Vec<usize> = projs.iter().map(|p| p.rank).collect();
        assert_eq!(ranks, vec![1, 2, 2]);
        // First projector is J/5.
        let j5 = RealMatrix::constant(5, 5, 0.2);
        assert!(max_abs_residual(&projs[0].projector, &j5).unwrap() < 1e-10);
        // Eigenvalues of A_1 on the two 2-dim spaces: 2cos(72°), 2cos(144°).
        let golden = (5.0f64.sqrt() - 1.0) / 2.0; // 2cos72° = 0.618...
        assert!((projs[1].eigenvalues[0] - golden).abs() < 1e-10);
        // 2cos144° = −(√5+1)/2
        assert!((projs[2].eigenvalues[0] + golden + 1.0).abs() < 1e-10);
    }

    #[test]
    fn cube_projectors_have_ranks_1_3_3_1() {
        // Hamming H(3,2) distance relations on 8 points.
        let n = 8usize;
        let mut mats = Vec::new();
        for dist in 1..=3usize {
            let mut m = IntMatrix::zeros(n, n);
            for x in 0..n {
                for y in 0..n {
                    if (x ^ y).count_ones() as usize == dist {
                        m.set(x, y, 1);
                    }
                }
            }
            mats.push(m);
        }
        let projs = common_eigenprojectors(&mats, Tolerance::default()).unwrap();
        let ranks: Vec<usize> = projs.iter().map(|p| p.rank).collect();
        assert_eq!(ranks, vec![1, 3, 3, 1]);
        // Eigenvalue tuple ordering is lexicographic descending: valencies first.
        assert_eq!(
            projs[0]
                .eigenvalues
                .iter()
                .map(|v| libm::round(*v) as i64)
                .collect::<Vec<_>>(),
            vec![3, 3, 1]
        );
    }

    #[test]
    fn rejects_non_commuting() {
        let a = IntMatrix::from_rows(&[vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 0]]).unwrap();
        let b = IntMatrix::from_rows(&[vec![0, 0, 1], vec![0, 0, 0], vec![1, 0, 0]]).unwrap();
        assert!(common_eigenprojectors(&[a, b], Tolerance::default()).is_err());
    }
}
