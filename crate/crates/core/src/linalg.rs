//! Compressed sparse row storage and the direct solver.
//!
//! Factorization is delegated to faer's sparse LU (COLAMD ordering, partial
//! pivoting). A row-major matrix is handed to faer as the column-major storage
//! of its transpose and solved with the transposed factors, so no copy of the
//! index arrays is needed.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from raw arrays, checking the canonical-form invariants.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 || row_ptr[0] != 0 {
            return Err(Error::DimensionMismatch("row_ptr length".into()));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::DimensionMismatch("col_idx/values length".into()));
        }
        for r in 0..n_rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::DimensionMismatch(format!("row_ptr decreases at row {r}")));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::DimensionMismatch(format!("row {r} is not strictly sorted")));
            }
            if let Some(&c) = cols.last() {
                if c >= n_cols {
                    return Err(Error::IndexOutOfRange {
                        row: r,
                        col: c,
                        n_rows,
                        n_cols,
                    });
                }
            }
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Sum duplicate `(row, col, value)` entries into canonical CSR.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::IndexOutOfRange {
                    row: r,
                    col: c,
                    n_rows,
                    n_cols,
                });
            }
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        // Bucket by row, then sort and merge each row.
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..n_rows {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in row.iter() {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    /// Storage position of entry `(r, c)`, if present.
    #[inline]
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let start = self.row_ptr[r];
        self.col_idx[start..self.row_ptr[r + 1]]
            .binary_search(&c)
            .ok()
            .map(|k| start + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for {} columns",
                x.len(),
                self.n_cols
            )));
        }
        Ok((0..self.n_rows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect())
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                col_idx[next[c]] = r;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr: counts,
            col_idx,
            values,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry of `self - self^T`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - t.get(r, c)).abs());
            }
            let (cols, vals) = t.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(r, c)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] += v;
            }
        }
        d
    }

    /// Same sparsity pattern as `other`.
    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }
}

/// Relative residual `||a x - b|| / (||a||_F ||x|| + ||b||)`.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Result<f64> {
    let ax = a.matvec(x)?;
    let r = norm2(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
    let scale = a.frobenius_norm() * norm2(x) + norm2(b);
    Ok(if scale > 0.0 { r / scale } else { r })
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Direct solver that keeps the symbolic factorization of the last pattern.
///
/// Time steps reassemble matrices with an unchanged pattern, so only the
/// numeric factorization is repeated.
#[derive(Default)]
pub struct LuSolver {
    cached: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

impl LuSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
        if a.n_rows != a.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}",
                a.n_rows, a.n_cols
            )));
        }
        if b.len() != a.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "rhs of length {} for {} rows",
                b.len(),
                a.n_rows
            )));
        }
        let n = a.n_rows;
        if n == 0 {
            return Ok(Vec::new());
        }
        if let Some(r) = (0..n).find(|&r| a.row_ptr[r] == a.row_ptr[r + 1]) {
            return Err(Error::Singular { row: r });
        }
        // CSR of A is the CSC of A^T.
        let symbolic_t =
            SymbolicSparseColMatRef::new_checked(n, n, &a.row_ptr, None, &a.col_idx);
        let reuse = matches!(&self.cached, Some((rp, ci, _)) if *rp == a.row_ptr && *ci == a.col_idx);
        if !reuse {
            let sym = SymbolicLu::try_new(symbolic_t).map_err(|e| Error::Solver(format!("{e:?}")))?;
            self.cached = Some((a.row_ptr.clone(), a.col_idx.clone(), sym));
        }
        let sym = self.cached.as_ref().unwrap().2.clone();
        let at = SparseColMatRef::new(symbolic_t, &a.values);
        let lu = Lu::try_new_with_symbolic(sym, at).map_err(|e| match e {
            LuError::SymbolicSingular { index } => Error::Singular { row: index },
            LuError::Generic(g) => Error::Solver(format!("{g:?}")),
        })?;
        let mut x = b.to_vec();
        let rhs = MatMut::from_column_major_slice_mut(&mut x, n, 1);
        lu.solve_transpose_in_place_with_conj(Conj::No, rhs);
        if let Some(row) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Singular { row });
        }
        Ok(x)
    }
}

/// One-shot sparse LU solve of `a x = b`.
pub fn solve_direct(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    LuSolver::new().solve(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn empty_and_duplicate_triplets() {
        let m = CsrMatrix::from_triplets(3, 4, &[]).unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.row_ptr(), &[0, 0, 0, 0]);
        let m = CsrMatrix::from_triplets(1, 1, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.values(), &[3.0]);
        assert!(matches!(
            CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]),
            Err(Error::IndexOutOfRange { row: 2, .. })
        ));
    }

    #[test]
    fn triplets_match_dense_accumulation() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let n = 20;
        let triplets: Vec<_> = (0..150)
            .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut dense = vec![vec![0.0; n]; n];
        for &(r, c, v) in &triplets {
            dense[r][c] += v;
        }
        let m = CsrMatrix::from_triplets(n, n, &triplets).unwrap();
        let recon = m.to_dense();
        for r in 0..n {
            for c in 0..n {
                assert!((recon[r][c] - dense[r][c]).abs() < 1e-14);
            }
            assert!(m.row(r).0.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn matvec_cases() {
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(CsrMatrix::identity(3).matvec(&x).unwrap(), x);
        assert_eq!(CsrMatrix::zeros(3, 3).matvec(&x).unwrap(), vec![0.0; 3]);
        assert!(CsrMatrix::identity(2).matvec(&x).is_err());

        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let n = 10;
        let dense: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..n)
                    .map(|_| if rng.gen_bool(0.4) { rng.gen_range(-2.0..2.0) } else { 0.0 })
                    .collect()
            })
            .collect();
        let triplets: Vec<_> = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter(|&(r, c)| dense[r][c] != 0.0)
            .map(|(r, c)| (r, c, dense[r][c]))
            .collect();
        let m = CsrMatrix::from_triplets(n, n, &triplets).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = m.matvec(&x).unwrap();
        for r in 0..n {
            let expect: f64 = (0..n).map(|c| dense[r][c] * x[c]).sum();
            assert!((y[r] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn direct_solves() {
        let b = vec![1.0, 2.0, 3.0];
        assert_eq!(solve_direct(&CsrMatrix::identity(3), &b).unwrap(), b);

        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)])
            .unwrap();
        let x = solve_direct(&a, &[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);

        assert!(matches!(
            solve_direct(&CsrMatrix::zeros(3, 3), &b),
            Err(Error::Singular { row: 0 })
        ));
        // Structurally full, numerically rank deficient.
        let rank1 = CsrMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert!(solve_direct(&rank1, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn nonsymmetric_needs_pivoting() {
        // Zero leading diagonal, as in saddle-point systems.
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 1, 1.0), (0, 2, 2.0), (1, 0, 1.0), (1, 1, 4.0), (2, 0, 3.0), (2, 2, -1.0)],
        )
        .unwrap();
        let x_true = [0.5, -1.0, 2.0];
        let b = a.matvec(&x_true).unwrap();
        let x = solve_direct(&a, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-13);
        }
    }

    /// Random sparse SPD: diagonally dominant symmetric matrix.
    fn random_spd(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        let mut diag = vec![1.0; n];
        for _ in 0..4 * n {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if i == j {
                continue;
            }
            let v: f64 = rng.gen_range(-1.0..1.0);
            triplets.push((i, j, v));
            triplets.push((j, i, v));
            diag[i] += v.abs();
            diag[j] += v.abs();
        }
        triplets.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
        CsrMatrix::from_triplets(n, n, &triplets).unwrap()
    }

    #[test]
    fn solve_matvec_round_trip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let mut solver = LuSolver::new();
        for seed in 0..10 {
            let a = random_spd(200, seed);
            let x: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = a.matvec(&x).unwrap();
            let y = solver.solve(&a, &b).unwrap();
            let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = x.iter().zip(&y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(err <= 1e-8 * xmax);
            assert!(relative_residual(&a, &y, &b).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn symbolic_reuse_with_new_values() {
        let mut a = random_spd(50, 1);
        let mut solver = LuSolver::new();
        let b = vec![1.0; 50];
        let x1 = solver.solve(&a, &b).unwrap();
        for v in a.values_mut() {
            *v *= 2.0;
        }
        let x2 = solver.solve(&a, &b).unwrap();
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - 2.0 * q).abs() < 1e-12);
        }
    }
}
