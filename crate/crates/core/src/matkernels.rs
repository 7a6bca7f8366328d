//! Dense complex linear algebra for the small matrices that show up in the
//! PHY layer: channel matrices, leakage stacks, beamformers and subspace
//! bases. Everything here is at most a few dozen rows and columns.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration. Tall inputs are first
//! reduced with a Householder QR so the rotations only ever touch a square
//! triangular factor.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;

/// Column vector.
pub type CVector = Vec<C64>;

/// Relative tolerance used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("svd did not converge for a {rows}x{cols} matrix")]
    NoConvergence { rows: usize, cols: usize },
    #[error("rank-deficient {rows}x{cols} matrix (sigma_min/sigma_max = {ratio:e})")]
    RankDeficient { rows: usize, cols: usize, ratio: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {rows}x{cols} matrix")]
    NonFinite { rows: usize, cols: usize },
}

/// Dense row-major complex matrix.
///
/// Zero-sized shapes are allowed (an `M x 0` basis when the interference
/// space is empty, a `0 x L` leakage stack for a single network).
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from row-major data. Panics if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    /// Stacks column vectors side by side. All must share the same length;
    /// an empty list needs the row count spelled out.
    pub fn from_columns(rows: usize, columns: &[CVector]) -> Self {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (c, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), rows, "column length");
            for (r, v) in col.iter().enumerate() {
                m.data[r * cols + c] = *v;
            }
        }
        m
    }

    /// Matrix with i.i.d. CN(0, 1) entries.
    pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| standard_complex_normal(rng)).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn column(&self, c: usize) -> CVector {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^H * rhs` without materializing the adjoint.
    pub fn adjoint_matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "adjoint_matmul row dimension");
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let lhs_row = &self.data[k * self.cols..(k + 1) * self.cols];
            let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
            for (r, a) in lhs_row.iter().enumerate() {
                let a = a.conj();
                let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> CVector {
        assert_eq!(self.cols, v.len(), "mul_vec dimension");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^H * v`.
    pub fn adjoint_mul_vec(&self, v: &[C64]) -> CVector {
        assert_eq!(self.rows, v.len(), "adjoint_mul_vec dimension");
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (r, vr) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * vr;
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!(self.shape(), rhs.shape(), "sub shape");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Vertical concatenation. Every block needs the same column count.
    pub fn vstack(blocks: &[Self], cols: usize) -> Self {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            assert_eq!(b.cols, cols, "vstack column count");
            data.extend_from_slice(&b.data);
        }
        Self { rows, cols, data }
    }

    /// Keeps the first `n` columns.
    pub fn leading_columns(&self, n: usize) -> Self {
        assert!(n <= self.cols);
        Self::from_fn(self.rows, n, |r, c| self[(r, c)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// One CN(0, 1) draw: independent real and imaginary parts of variance 1/2.
#[inline]
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn vec_norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `a^H b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Thin singular value decomposition `a = left * diag(singular) * right^H`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `rows x n`, orthonormal columns.
    pub left: ComplexMatrix,
    /// Length `n`, descending, nonnegative.
    pub singular: Vec<f64>,
    /// `cols x n`, orthonormal columns.
    pub right: ComplexMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut scaled = self.left.clone();
        for r in 0..scaled.rows {
            for c in 0..scaled.cols {
                scaled[(r, c)] *= self.singular[c];
            }
        }
        scaled.matmul(&self.right.adjoint())
    }
}

/// Thin SVD with `n = min(rows, cols)`.
pub fn svd(a: &ComplexMatrix) -> Result<SvdResult, LinalgError> {
    check_finite(a)?;
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Ok(SvdResult {
            left: ComplexMatrix::zeros(rows, 0),
            singular: Vec::new(),
            right: ComplexMatrix::zeros(cols, 0),
        });
    }
    if rows < cols {
        let t = svd(&a.adjoint())?;
        return Ok(SvdResult {
            left: t.right,
            singular: t.singular,
            right: t.left,
        });
    }

    // rows >= cols: a = Q R, then R V = W with orthogonal columns.
    let (q, r) = householder_qr_thin(a);
    let (w, v, sigma) = one_sided_jacobi(r)?;
    let n = cols;
    let mut left_r = ComplexMatrix::zeros(n, n);
    let mut accepted: Vec<CVector> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for c in 0..n {
        let mut x: CVector = if sigma[c] > f64::MIN_POSITIVE {
            (0..n).map(|row| w[(row, c)] / sigma[c]).collect()
        } else {
            vec![C64::new(0.0, 0.0); n]
        };
        // Small singular values leave w/sigma slightly off the unit sphere.
        for _ in 0..2 {
            for b in &accepted {
                let d = inner(b, &x);
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi -= d * bi;
                }
            }
        }
        let norm = vec_norm_sqr(&x).sqrt();
        if norm > 0.5 {
            for (row, xi) in x.iter().enumerate() {
                left_r[(row, c)] = xi / norm;
            }
            accepted.push(x.iter().map(|z| z / norm).collect());
        } else {
            deficient.push(c);
        }
    }
    if !deficient.is_empty() {
        complete_orthonormal_columns(&mut left_r, &deficient);
    }
    Ok(SvdResult {
        left: q.matmul(&left_r),
        singular: sigma,
        right: v,
    })
}

/// All `cols` right-singular directions of `a`, including the ones that
/// span its null space when `rows < cols`. Singular values are padded with
/// zeros to length `cols`; the columns of the returned basis are matched to
/// them, so the last column is always a minimizer of `||a w||` on the unit
/// sphere.
pub fn right_singular_basis(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), LinalgError> {
    check_finite(a)?;
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Ok((Vec::new(), ComplexMatrix::zeros(0, 0)));
    }
    if rows == 0 {
        return Ok((vec![0.0; cols], ComplexMatrix::identity(cols)));
    }
    if rows >= cols {
        let h = householder(a);
        let (_, v, sigma) = one_sided_jacobi(square_r(&h, cols))?;
        return Ok((sigma, v));
    }
    // Wide: rotate the columns of `a` directly. Columns driven to zero are
    // the null directions and sort to the end.
    let (_, v, sigma) = one_sided_jacobi(a.clone())?;
    Ok((sigma, v))
}

/// Orthonormal basis of the orthogonal complement of `a`'s column span.
///
/// `a` is `M x (M - dim)` with orthonormal columns (`M x 0` is allowed, in
/// which case any `M x M` unitary is a valid answer and the identity is
/// returned).
pub fn null_space(a: &ComplexMatrix, expected_dim: usize) -> Result<ComplexMatrix, LinalgError> {
    let (m, k) = a.shape();
    if k + expected_dim != m {
        return Err(LinalgError::Dimension(format!(
            "null space of a {m}x{k} basis has dimension {}, requested {expected_dim}",
            m - k.min(m)
        )));
    }
    check_finite(a)?;
    if k == 0 {
        return Ok(ComplexMatrix::identity(m));
    }
    let (q_full, _) = householder_qr_full(a);
    Ok(ComplexMatrix::from_fn(m, expected_dim, |r, c| q_full[(r, k + c)]))
}

/// Moore-Penrose inverse of a tall full-column-rank matrix.
pub fn pseudo_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let (rows, cols) = a.shape();
    if cols > rows {
        return Err(LinalgError::Dimension(format!(
            "pseudo_inverse expects a tall matrix, got {rows}x{cols}"
        )));
    }
    let s = svd(a)?;
    let smax = s.singular.first().copied().unwrap_or(0.0);
    let smin = s.singular.last().copied().unwrap_or(0.0);
    if cols == 0 || !(smin > RANK_TOL * smax) {
        return Err(LinalgError::RankDeficient {
            rows,
            cols,
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    // V * Sigma^-1 * Omega^H
    let mut v_scaled = s.right.clone();
    for r in 0..cols {
        for c in 0..cols {
            v_scaled[(r, c)] /= s.singular[c];
        }
    }
    Ok(v_scaled.matmul(&s.left.adjoint()))
}

/// Haar-distributed `rows x cols` matrix with orthonormal columns.
pub fn random_orthonormal<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<ComplexMatrix, LinalgError> {
    if cols > rows {
        return Err(LinalgError::Dimension(format!(
            "random_orthonormal needs cols <= rows, got {rows}x{cols}"
        )));
    }
    if cols == 0 {
        return Ok(ComplexMatrix::zeros(rows, 0));
    }
    let g = ComplexMatrix::random_gaussian(rows, cols, rng);
    let (mut q, r) = householder_qr_thin(&g);
    // Fix the phase ambiguity of QR so the result is Haar, not just unitary.
    for c in 0..cols {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..rows {
            q[(row, c)] *= phase;
        }
    }
    Ok(q)
}

fn check_finite(a: &ComplexMatrix) -> Result<(), LinalgError> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(LinalgError::NonFinite {
            rows: a.rows,
            cols: a.cols,
        })
    }
}

fn to_columns(a: &ComplexMatrix) -> Vec<CVector> {
    (0..a.cols).map(|c| a.column(c)).collect()
}

/// Two distinct mutable columns.
fn column_pair(cols: &mut [CVector], p: usize, q: usize) -> (&mut CVector, &mut CVector) {
    debug_assert!(p < q);
    let (head, tail) = cols.split_at_mut(q);
    (&mut head[p], &mut tail[0])
}

/// `x <- x - (beta v^H x) v` on `x[offset..]`.
fn reflect(v: &[C64], beta: f64, x: &mut [C64]) {
    let dot: C64 = v.iter().zip(x.iter()).map(|(vi, xi)| vi.conj() * xi).sum();
    let f = dot * beta;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= vi * f;
    }
}

/// Householder reflectors for `a` (rows >= cols is not required). Returns
/// the reflector vectors, their scalings and the upper-triangular factor.
struct Householder {
    vectors: Vec<CVector>,
    betas: Vec<f64>,
    /// Columns of `R` (`m` entries each).
    r: Vec<CVector>,
}

fn householder(a: &ComplexMatrix) -> Householder {
    let (m, n) = a.shape();
    let mut cols = to_columns(a);
    let steps = n.min(m);
    let mut vectors = Vec::with_capacity(steps);
    let mut betas = Vec::with_capacity(steps);
    for k in 0..steps {
        let (head, tail) = cols.split_at_mut(k + 1);
        let x = &mut head[k][k..];
        let alpha_norm = vec_norm_sqr(x).sqrt();
        if alpha_norm == 0.0 {
            vectors.push(vec![C64::new(0.0, 0.0); m - k]);
            betas.push(0.0);
            continue;
        }
        let x0 = x[0];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let mut v: CVector = x.to_vec();
        v[0] += phase * alpha_norm;
        let vnorm2 = vec_norm_sqr(&v);
        let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
        // The reflector maps x onto -phase |x| e_1.
        x[0] = -phase * alpha_norm;
        for xi in x[1..].iter_mut() {
            *xi = C64::new(0.0, 0.0);
        }
        for c in tail.iter_mut() {
            reflect(&v, beta, &mut c[k..]);
        }
        vectors.push(v);
        betas.push(beta);
    }
    Householder { vectors, betas, r: cols }
}

/// Applies the accumulated reflectors to the first `q_cols` columns of the
/// identity.
fn form_q(h: &Householder, m: usize, q_cols: usize) -> ComplexMatrix {
    let mut q: Vec<CVector> = (0..q_cols)
        .map(|c| {
            let mut e = vec![C64::new(0.0, 0.0); m];
            if c < m {
                e[c] = C64::new(1.0, 0.0);
            }
            e
        })
        .collect();
    for k in (0..h.vectors.len()).rev() {
        if h.betas[k] == 0.0 {
            continue;
        }
        for col in q.iter_mut() {
            reflect(&h.vectors[k], h.betas[k], &mut col[k..]);
        }
    }
    ComplexMatrix::from_columns(m, &q)
}

/// Leading `n x n` block of `R` (requires m >= n).
fn square_r(h: &Householder, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |i, j| h.r[j][i])
}

/// `a = Q R` with `Q` `m x n` and `R` `n x n` (requires m >= n).
fn householder_qr_thin(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    let h = householder(a);
    (form_q(&h, m, n), square_r(&h, n))
}

/// Full `m x m` unitary `Q` and `m x n` `R`.
fn householder_qr_full(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let m = a.rows;
    let h = householder(a);
    let q = form_q(&h, m, m);
    (q, ComplexMatrix::from_columns(m, &h.r))
}

/// One-sided Jacobi on the columns of `a` (any shape). Returns the rotated
/// matrix `a V` with mutually orthogonal columns sorted by descending norm,
/// the accumulated unitary `V`, and the column norms.
fn one_sided_jacobi(a: ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix, Vec<f64>), LinalgError> {
    let (rows, cols) = a.shape();
    let mut w = to_columns(&a);
    let mut v = to_columns(&ComplexMatrix::identity(cols));
    let mut norms: Vec<f64> = w.iter().map(|c| vec_norm_sqr(c)).collect();
    let scale: f64 = norms.iter().sum();
    let tiny = scale * f64::EPSILON * f64::EPSILON;
    let tol = (rows.max(1) as f64) * f64::EPSILON;

    let mut converged = cols < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols - 1 {
            for q in p + 1..cols {
                let (wp, wq) = column_pair(&mut w, p, q);
                let gamma: C64 = wp.iter().zip(wq.iter()).map(|(x, y)| x.conj() * y).sum();
                let alpha = norms[p];
                let beta = norms[q];
                let g = gamma.norm();
                if g <= tol * (alpha * beta).sqrt() || g <= tiny {
                    continue;
                }
                rotated = true;
                // Rotation that zeroes the (p, q) entry of the Gram matrix.
                let zeta = (beta - alpha) / (2.0 * g);
                let t = if zeta == 0.0 { 1.0 } else { zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt()) };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let phase = gamma / g;
                let (ps, qs) = (phase.conj() * s, phase * s);
                let rotate = |xp: &mut CVector, xq: &mut CVector| {
                    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
                        let (x, y) = (*a, *b);
                        *a = x * c - y * ps;
                        *b = x * qs + y * c;
                    }
                };
                rotate(wp, wq);
                norms[p] = alpha - t * g;
                norms[q] = beta + t * g;
                let (vp, vq) = column_pair(&mut v, p, q);
                rotate(vp, vq);
            }
        }
        if !rotated {
            converged = true;
        }
        // The running updates drift; refresh once per sweep.
        for (n, c) in norms.iter_mut().zip(&w) {
            *n = vec_norm_sqr(c);
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { rows, cols });
    }

    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let w_sorted: Vec<CVector> = order.iter().map(|&i| std::mem::take(&mut w[i])).collect();
    let v_sorted: Vec<CVector> = order.iter().map(|&i| std::mem::take(&mut v[i])).collect();
    let sigma = order.iter().map(|&i| norms[i].max(0.0).sqrt()).collect();
    Ok((
        ComplexMatrix::from_columns(rows, &w_sorted),
        ComplexMatrix::from_columns(cols, &v_sorted),
        sigma,
    ))
}

/// Replaces the listed columns of a square matrix with unit vectors
/// orthogonal to every other column.
fn complete_orthonormal_columns(m: &mut ComplexMatrix, missing: &[usize]) {
    let n = m.rows;
    let mut basis: Vec<CVector> = (0..m.cols)
        .filter(|c| !missing.contains(c))
        .map(|c| m.column(c))
        .collect();
    let mut candidate = 0;
    for &c in missing {
        loop {
            assert!(candidate < n, "orthonormal completion ran out of candidates");
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[candidate] = C64::new(1.0, 0.0);
            candidate += 1;
            // Two passes of Gram-Schmidt.
            for _ in 0..2 {
                for b in &basis {
                    let d = inner(b, &e);
                    for (x, y) in e.iter_mut().zip(b) {
                        *x -= d * y;
                    }
                }
            }
            let norm = vec_norm_sqr(&e).sqrt();
            if norm > 1e-6 {
                for x in e.iter_mut() {
                    *x /= norm;
                }
                for r in 0..n {
                    m[(r, c)] = e[r];
                }
                basis.push(e);
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn orthonormality_error(m: &ComplexMatrix) -> f64 {
        m.adjoint_matmul(m).sub(&ComplexMatrix::identity(m.cols())).frobenius_norm()
    }

    #[test]
    fn svd_of_identity() {
        let s = svd(&ComplexMatrix::identity(2)).unwrap();
        assert!((s.singular[0] - 1.0).abs() < 1e-14);
        assert!((s.singular[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_of_diagonal_recovers_basis() {
        let a = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(3.0, 0.0)]]);
        let s = svd(&a).unwrap();
        assert!((s.singular[0] - 3.0).abs() < 1e-14);
        assert!((s.singular[1] - 1.0).abs() < 1e-14);
        // first right vector is e2 up to phase
        assert!((s.right[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(s.right[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn svd_of_zero_matrix_keeps_orthonormal_factors() {
        let s = svd(&ComplexMatrix::zeros(4, 3)).unwrap();
        assert!(s.singular.iter().all(|&x| x == 0.0));
        assert!(orthonormality_error(&s.left) < 1e-12);
        assert!(orthonormality_error(&s.right) < 1e-12);
    }

    #[test]
    fn svd_of_rank_one() {
        let u = vec![c(1.0, 1.0), c(0.5, 0.0), c(0.0, -2.0)];
        let v = vec![c(0.3, 0.1), c(-1.0, 0.2)];
        let a = ComplexMatrix::from_fn(3, 2, |r, k| u[r] * v[k].conj());
        let s = svd(&a).unwrap();
        assert!(s.singular[1] < 1e-12);
        let expect = (vec_norm_sqr(&u) * vec_norm_sqr(&v)).sqrt();
        assert!((s.singular[0] - expect).abs() < 1e-12);
        assert!(orthonormality_error(&s.left) < 1e-10);
        assert!(s.reconstruct().sub(&a).frobenius_norm() < 1e-12);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = ComplexMatrix::identity(2);
        a[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(svd(&a), Err(LinalgError::NonFinite { .. })));
    }

    #[test]
    fn wide_svd_and_right_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ComplexMatrix::random_gaussian(2, 5, &mut rng);
        let s = svd(&a).unwrap();
        assert_eq!(s.left.shape(), (2, 2));
        assert_eq!(s.right.shape(), (5, 2));
        assert!(s.reconstruct().sub(&a).frobenius_norm() < 1e-10);

        let (sig, v) = right_singular_basis(&a).unwrap();
        assert_eq!(sig.len(), 5);
        assert!(orthonormality_error(&v) < 1e-10);
        for k in 2..5 {
            assert!(sig[k] < 1e-12);
            assert!(vec_norm_sqr(&a.mul_vec(&v.column(k))) < 1e-20);
        }
        assert!((sig[0] - s.singular[0]).abs() < 1e-10);
    }

    #[test]
    fn null_space_of_coordinate_plane() {
        let e = |i: usize| {
            let mut v = vec![c(0.0, 0.0); 3];
            v[i] = c(1.0, 0.0);
            v
        };
        let a = ComplexMatrix::from_columns(3, &[e(0), e(1)]);
        let u = null_space(&a, 1).unwrap();
        assert_eq!(u.shape(), (3, 1));
        assert!((u[(2, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(u[(0, 0)].norm() < 1e-12 && u[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn null_space_of_empty_basis_is_unitary() {
        let u = null_space(&ComplexMatrix::zeros(3, 0), 3).unwrap();
        assert_eq!(u.shape(), (3, 3));
        assert!(orthonormality_error(&u) < 1e-14);
    }

    #[test]
    fn null_space_random_orthonormal_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_orthonormal(4, 2, &mut rng).unwrap();
        let u = null_space(&a, 2).unwrap();
        assert_eq!(u.shape(), (4, 2));
        assert!(a.adjoint_matmul(&u).frobenius_norm() < 1e-10);
        assert!(orthonormality_error(&u) < 1e-10);
    }

    #[test]
    fn null_space_dimension_mismatch() {
        let a = ComplexMatrix::zeros(3, 1);
        assert!(matches!(null_space(&a, 1), Err(LinalgError::Dimension(_))));
    }

    #[test]
    fn pseudo_inverse_of_unit_vector() {
        let a = ComplexMatrix::from_columns(3, &[vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]]);
        let f = pseudo_inverse(&a).unwrap();
        assert_eq!(f.shape(), (1, 3));
        assert!((f[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(f[(0, 1)].norm() < 1e-14 && f[(0, 2)].norm() < 1e-14);
        assert!((f.matmul(&a)[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn pseudo_inverse_of_scaled_identity() {
        let f = pseudo_inverse(&ComplexMatrix::identity(2).scale(2.0)).unwrap();
        assert!(f.sub(&ComplexMatrix::identity(2).scale(0.5)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn pseudo_inverse_residual_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = ComplexMatrix::random_gaussian(4, 2, &mut rng);
        let f = pseudo_inverse(&a).unwrap();
        assert!(f.matmul(&a).sub(&ComplexMatrix::identity(2)).frobenius_norm() < 1e-8);
    }

    #[test]
    fn pseudo_inverse_rejects_rank_deficient() {
        let col = vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 1.0)];
        let a = ComplexMatrix::from_columns(3, &[col.clone(), col]);
        assert!(matches!(pseudo_inverse(&a), Err(LinalgError::RankDeficient { .. })));
    }

    #[test]
    fn random_orthonormal_shapes_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_orthonormal(1, 1, &mut rng).unwrap();
        assert!((s[(0, 0)].norm() - 1.0).abs() < 1e-14);

        let q = random_orthonormal(3, 2, &mut rng).unwrap();
        assert!(orthonormality_error(&q) < 1e-10);

        let a = random_orthonormal(4, 3, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = random_orthonormal(4, 3, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        assert!(random_orthonormal(2, 3, &mut rng).is_err());
    }
}
