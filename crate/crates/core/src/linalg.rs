//! Dense linear algebra for the small matrices that appear in the rate
//! certificates: products, norms, cyclic-Jacobi symmetric eigensolver,
//! one-sided Jacobi SVD and LU solves.
//!
//! Everything here is sized for n ≲ 50. Storage is row-major `Vec<f64>`.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Tolerance used when checking that an input is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from a list of equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != m) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(n, m, data)
    }

    /// Column vector.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Matrix product. Panics on inner-dimension mismatch.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Matrix-vector product. Panics on dimension mismatch.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ x` without forming the transpose.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|x| s * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_with(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Largest entrywise deviation from symmetry.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(M + Mᵀ)/2`.
    pub fn symmetrized(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// Assembles `[[a, b], [c, d]]`.
    pub fn block2(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Matrix {
        assert_eq!(a.rows, b.rows, "block rows mismatch");
        assert_eq!(c.rows, d.rows, "block rows mismatch");
        assert_eq!(a.cols, c.cols, "block cols mismatch");
        assert_eq!(b.cols, d.cols, "block cols mismatch");
        let (r0, c0) = a.shape();
        Matrix::from_fn(a.rows + c.rows, a.cols + b.cols, |i, j| match (i < r0, j < c0) {
            (true, true) => a[(i, j)],
            (true, false) => b[(i, j - c0)],
            (false, true) => c[(i - r0, j)],
            (false, false) => d[(i - r0, j - c0)],
        })
    }

    /// Copies out the sub-block with top-left corner `(r, c)`.
    pub fn sub_block(&self, r: usize, c: usize, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| self[(r + i, c + j)])
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain("matrix entries must be finite".into()))
        }
    }

    /// Whitespace-separated rows, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|x| format!("{x:e}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Parses whitespace-separated rows; blank lines and `#` comments are skipped.
    pub fn parse_text(text: &str) -> Result<Matrix> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("line {}: bad number {tok:?}", lineno + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse("no rows".into()));
        }
        Matrix::from_rows(&rows)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean norm of the concatenation `(a, b)`.
pub fn joint_norm(a: &[f64], b: &[f64]) -> f64 {
    (dot(a, a) + dot(b, b)).sqrt()
}

/// Symmetric eigendecomposition, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// `Q diag(f(λ)) Qᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let q = &self.eigenvectors;
        let n = q.rows();
        let scaled = Matrix::from_fn(n, n, |i, j| q[(i, j)] * f(self.eigenvalues[j]));
        scaled.matmul(&q.transpose())
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(|x| x)
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// The input is symmetrized as `(M + Mᵀ)/2` after checking that it is
/// symmetric to within [`SYMMETRY_TOL`] (relative to its largest entry).
pub fn sym_eigen(m: &Matrix) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "sym_eigen needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    m.check_finite()?;
    if m.asymmetry() > SYMMETRY_TOL * m.max_abs().max(1.0) {
        return Err(Error::Domain(format!(
            "matrix is not symmetric (deviation {:e})",
            m.asymmetry()
        )));
    }
    let n = m.rows;
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    let target = JACOBI_REL_TOL * scale;

    let off = |a: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = scale == 0.0 || off(&a) <= target;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        converged = off(&a) <= target;
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "Jacobi eigensolver: {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Thin singular value decomposition `M = U diag(σ) Vᵀ`.
///
/// For an `m x n` input with `k = min(m, n)`, `u` is `m x k`, `v` is `n x k`
/// and `singular_values` has length `k`, sorted descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn min(&self) -> f64 {
        *self.singular_values.last().unwrap()
    }

    pub fn reconstruct(&self) -> Matrix {
        let (m, k) = self.u.shape();
        let us = Matrix::from_fn(m, k, |i, j| self.u[(i, j)] * self.singular_values[j]);
        us.matmul(&self.v.transpose())
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(m: &Matrix) -> Result<Svd> {
    m.check_finite()?;
    if m.rows < m.cols {
        let t = svd_tall(&m.transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    svd_tall(m)
}

fn svd_tall(m: &Matrix) -> Result<Svd> {
    let (rows, n) = m.shape();
    // columns of `w` are rotated until mutually orthogonal
    let mut w = m.clone();
    let mut v = Matrix::identity(n);
    let eps = f64::EPSILON;

    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        converged = true;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        sweeps += 1;
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "one-sided Jacobi SVD: {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let sigma: Vec<f64> = (0..n).map(|j| norm(&w.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));

    let smax = order.first().map(|&j| sigma[j]).unwrap_or(0.0);
    let null_tol = smax * (rows as f64) * eps;
    let mut u = Matrix::zeros(rows, n);
    let mut singular_values = Vec::with_capacity(n);
    let mut vs = Matrix::zeros(n, n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        singular_values.push(sigma[j]);
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
        if sigma[j] > null_tol && sigma[j] > 0.0 {
            for i in 0..rows {
                u[(i, k)] = w[(i, j)] / sigma[j];
            }
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok(Svd {
        u,
        singular_values,
        v: vs,
    })
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all
/// other columns (Gram-Schmidt against the standard basis).
fn complete_orthonormal(u: &mut Matrix, missing: &[usize]) {
    let rows = u.rows;
    let mut basis = 0;
    for &k in missing {
        loop {
            assert!(basis < rows, "ran out of basis vectors");
            let mut cand = vec![0.0; rows];
            cand[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for j in 0..u.cols {
                    if j == k {
                        continue;
                    }
                    let col = u.col(j);
                    let proj = dot(&col, &cand);
                    for i in 0..rows {
                        cand[i] -= proj * col[i];
                    }
                }
            }
            let nrm = norm(&cand);
            if nrm > 1e-8 {
                for i in 0..rows {
                    u[(i, k)] = cand[i] / nrm;
                }
                break;
            }
        }
    }
}

/// Solves `M x = b` by LU with partial pivoting.
pub fn solve(m: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "solve needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    if b.len() != m.rows {
        return Err(Error::Dimension(format!(
            "rhs length {} does not match {} rows",
            b.len(),
            m.rows
        )));
    }
    m.check_finite()?;
    let n = m.rows;
    let pivot_tol = 1e-14 * m.frobenius_norm();
    let mut lu = m.clone();
    let mut x = b.to_vec();

    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= pivot_tol || pmax == 0.0 {
            return Err(Error::Singular(format!("pivot {pmax:e} in column {k}")));
        }
        if piv != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = tmp;
            }
            x.swap(k, piv);
        }
        let d = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / d;
            if f == 0.0 {
                continue;
            }
            lu[(i, k)] = f;
            for j in (k + 1)..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
            x[i] -= f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= lu[(i, j)] * x[j];
        }
        x[i] = s / lu[(i, i)];
    }
    Ok(x)
}

/// Spectral norm `σ_max(M)`.
pub fn op_norm(m: &Matrix) -> Result<f64> {
    Ok(svd(m)?.max())
}

/// Principal square root of a symmetric positive semidefinite matrix.
///
/// Eigenvalues in `[-1e-12, 0)` are clamped to zero; anything more negative
/// is a domain error.
pub fn sqrt_psd(m: &Matrix) -> Result<Matrix> {
    let eig = sym_eigen(m)?;
    let lo = eig.min();
    if lo < -1e-12 {
        return Err(Error::Domain(format!(
            "square root of a matrix with eigenvalue {lo:e}"
        )));
    }
    Ok(eig.reconstruct_with(|x| x.max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = Rng64::new(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.uniform())
    }

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = Rng64::new(seed);
        let g = Matrix::from_fn(n, n, |_, _| rng.normal());
        g.add(&g.transpose()).scale(0.5)
    }

    fn orthogonality_error(q: &Matrix) -> f64 {
        q.transpose()
            .matmul(q)
            .sub(&Matrix::identity(q.cols()))
            .frobenius_norm()
    }

    #[test]
    fn eigen_two_by_two() {
        let m = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eigen(&m).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_identity() {
        let e = sym_eigen(&Matrix::identity(5)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0; 5]);
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        let m = random_symmetric(5, 42);
        let e = sym_eigen(&m).unwrap();
        assert!(e.reconstruct().sub(&m).frobenius_norm() < 1e-10);
        assert!(orthogonality_error(&e.eigenvectors) < 1e-10);
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigen_rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(sym_eigen(&rect), Err(Error::Dimension(_))));
        let asym = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eigen(&asym), Err(Error::Domain(_))));
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn svd_small_cases() {
        let s = svd(&Matrix::identity(2)).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0]);
        let d = Matrix::from_rows(&[[3.0, 0.0], [0.0, 4.0]]).unwrap();
        let s = svd(&d).unwrap();
        assert!((s.singular_values[0] - 4.0).abs() < 1e-15);
        assert!((s.singular_values[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn svd_reconstructs_random() {
        let m = random_matrix(5, 5, 7);
        let s = svd(&m).unwrap();
        assert!(s.reconstruct().sub(&m).frobenius_norm() < 1e-10);
        assert!(orthogonality_error(&s.u) < 1e-10);
        assert!(orthogonality_error(&s.v) < 1e-10);
    }

    #[test]
    fn svd_matches_gram_eigenvalues() {
        for (r, c, seed) in [(5, 5, 1), (7, 3, 2), (3, 6, 3)] {
            let m = random_matrix(r, c, seed);
            let s = svd(&m).unwrap();
            let gram = if r >= c {
                m.transpose().matmul(&m)
            } else {
                m.matmul(&m.transpose())
            };
            let e = sym_eigen(&gram).unwrap();
            for (sv, ev) in s.singular_values.iter().zip(&e.eigenvalues) {
                assert!((sv * sv - ev).abs() <= 1e-10 * ev.abs().max(1.0));
            }
            assert!(s.reconstruct().sub(&m).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn svd_rank_deficient_completes_basis() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]).unwrap();
        let s = svd(&m).unwrap();
        assert!(s.min() < 1e-12);
        assert!(orthogonality_error(&s.u) < 1e-12);
        assert!(s.reconstruct().sub(&m).frobenius_norm() < 1e-12);
    }

    #[test]
    fn solve_examples() {
        let m = Matrix::from_rows(&[[1.0, 1.0], [-1.0, 1.0]]).unwrap();
        let x = solve(&m, &[1.0, 0.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
        let mx = m.matvec(&x);
        assert!((mx[0] - 1.0).abs() < 1e-15 && mx[1].abs() < 1e-15);

        let x = solve(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn solve_hilbert() {
        let h = Matrix::from_fn(4, 4, |i, j| 1.0 / (i + j + 1) as f64);
        let b = h.matvec(&[1.0; 4]);
        let x = solve(&h, &b).unwrap();
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn solve_errors() {
        let sing = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert!(matches!(solve(&sing, &[1.0, 1.0]), Err(Error::Singular(_))));
        assert!(matches!(
            solve(&Matrix::identity(2), &[1.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&Matrix::identity(2)).unwrap() - 1.0).abs() < 1e-15);
        let m = Matrix::from_rows(&[[0.0, 2.0], [0.0, 0.0]]).unwrap();
        assert!((op_norm(&m).unwrap() - 2.0).abs() < 1e-15);
        let r = random_matrix(5, 5, 9);
        let gram = r.matmul(&r.transpose());
        let oracle = sym_eigen(&gram).unwrap().max().sqrt();
        assert!((op_norm(&r).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let g = random_matrix(4, 4, 3);
        let m = g.matmul(&g.transpose());
        let s = sqrt_psd(&m).unwrap();
        assert!(s.matmul(&s).sub(&m).frobenius_norm() < 1e-10);
        let neg = Matrix::diag(&[1.0, -1e-3]);
        assert!(matches!(sqrt_psd(&neg), Err(Error::Domain(_))));
        let tiny = Matrix::diag(&[1.0, -1e-13]);
        assert_eq!(sqrt_psd(&tiny).unwrap()[(1, 1)], 0.0);
    }

    #[test]
    fn commutation_identity_for_square_roots() {
        // C (I - 4η²CᵀC)^{1/2} = (I - 4η²CCᵀ)^{1/2} C
        for seed in 0..10 {
            let c = random_matrix(5, 5, 100 + seed);
            let eta = 0.9 / (2.0 * op_norm(&c).unwrap());
            let n = c.rows();
            let lhs_root = sqrt_psd(
                &Matrix::identity(n).sub(&c.transpose().matmul(&c).scale(4.0 * eta * eta)),
            )
            .unwrap();
            let rhs_root =
                sqrt_psd(&Matrix::identity(n).sub(&c.matmul(&c.transpose()).scale(4.0 * eta * eta)))
                    .unwrap();
            let lhs = c.matmul(&lhs_root);
            let rhs = rhs_root.matmul(&c);
            assert!(lhs.sub(&rhs).frobenius_norm() < 1e-9);
        }
    }

    #[test]
    fn text_round_trip() {
        let m = random_matrix(3, 2, 5);
        let back = Matrix::parse_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(Matrix::parse_text("1 2\n3").is_err());
        assert!(Matrix::parse_text("# only comment\n").is_err());
    }

    #[test]
    fn block_assembly() {
        let a = Matrix::identity(2);
        let b = Matrix::zeros(2, 1);
        let c = Matrix::zeros(1, 2);
        let d = Matrix::diag(&[5.0]);
        let m = Matrix::block2(&a, &b, &c, &d);
        assert_eq!(m.shape(), (3, 3));
        assert_eq!(m[(2, 2)], 5.0);
        assert_eq!(m.sub_block(2, 2, 1, 1), d);
    }
}
