//! Compressed sparse row storage for symmetric positive definite matrices and
//! a preconditioned conjugate gradient solver.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpdMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSpdMatrix {
    /// Builds a matrix from CSR arrays, checking sorted columns, exact symmetry
    /// and a positive diagonal.
    pub fn from_csr(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidMatrix(msg));
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 || row_ptr[n] != col_idx.len() {
            return bad("row offsets do not describe the column array".into());
        }
        if col_idx.len() != values.len() {
            return bad("column and value arrays differ in length".into());
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return bad(format!("row offsets decrease at row {i}"));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("columns of row {i} are not strictly increasing"));
            }
            if cols.last().is_some_and(|&c| c >= n) {
                return bad(format!("column index out of range in row {i}"));
            }
        }
        let matrix = SparseSpdMatrix { n, row_ptr, col_idx, values };
        for i in 0..n {
            for k in matrix.row_ptr[i]..matrix.row_ptr[i + 1] {
                let (j, v) = (matrix.col_idx[k], matrix.values[k]);
                if !v.is_finite() {
                    return bad(format!("non-finite entry at ({i},{j})"));
                }
                if matrix.get(j, i) != v {
                    return bad(format!("entry ({i},{j}) has no matching transpose"));
                }
            }
            if !(matrix.get(i, i) > 0.0) {
                return bad(format!("diagonal entry {i} is not positive"));
            }
        }
        Ok(matrix)
    }

    /// Assembly path: the caller guarantees the CSR invariants.
    pub(crate) fn from_csr_unchecked(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        SparseSpdMatrix { n, row_ptr, col_idx, values }
    }

    /// Sums duplicate `(i, j, v)` entries and validates the result.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|&&(i, j, _)| i >= n || j >= n) {
            return Err(Error::InvalidMatrix(format!("entry ({i},{j}) outside a {n}x{n} matrix")));
        }
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::from_csr(n, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        SparseSpdMatrix { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in dense.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.col_idx[k]] = self.values[k];
            }
        }
        dense
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(x, &self.matvec(x)?))
    }

    pub(crate) fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            *yi = self.col_idx[start..end].iter().zip(&self.values[start..end]).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.n, got: len })
        }
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    /// Iteration cap; `None` means `10 n`.
    pub max_iter: Option<usize>,
    pub precond: Preconditioner,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { rel_tol: 1e-12, max_iter: None, precond: Preconditioner::Jacobi }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iters: usize,
    /// True relative residual `|b - A x| / |b|` of the returned `x`.
    pub rel_residual: f64,
}

/// Solves `A x = b` from a zero initial guess.
pub fn cg_solve(a: &SparseSpdMatrix, b: &[f64], opts: &CgOptions) -> Result<CgOutcome> {
    cg_solve_from(a, b, &vec![0.0; a.dim()], opts)
}

/// Solves `A x = b` starting from `x0`. Convergence is declared on the true
/// residual; when the recursively updated residual drifts from it the
/// iteration restarts from the current iterate.
pub fn cg_solve_from(a: &SparseSpdMatrix, b: &[f64], x0: &[f64], opts: &CgOptions) -> Result<CgOutcome> {
    a.check_len(b.len())?;
    a.check_len(x0.len())?;
    if !(opts.rel_tol > 0.0 && opts.rel_tol < 1.0) {
        return Err(Error::InvalidParameter(format!("rel_tol must lie in (0,1), got {}", opts.rel_tol)));
    }
    if b.iter().chain(x0).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("right-hand side or initial guess is not finite".into()));
    }
    let n = a.dim();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iters: 0, rel_residual: 0.0 });
    }
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let target = opts.rel_tol * b_norm;
    let inv_diag: Vec<f64> = match opts.precond {
        Preconditioner::Jacobi => a.diagonal().iter().map(|d| 1.0 / d).collect(),
        Preconditioner::None => vec![1.0; n],
    };

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iters = 0;
    loop {
        // true residual
        a.matvec_into(&x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        let r_norm = norm(&r);
        if r_norm <= target {
            return Ok(CgOutcome { x, iters, rel_residual: r_norm / b_norm });
        }
        if iters >= max_iter {
            return Err(Error::NonConvergence { iters, residual: r_norm / b_norm });
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iters < max_iter {
            a.matvec_into(&p, &mut ap);
            let curvature = dot(&p, &ap);
            if !(curvature > 0.0) {
                return Err(Error::Breakdown { iter: iters, curvature });
            }
            let alpha = rz / curvature;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iters += 1;
            if norm(&r) <= target {
                break;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}
