//! Compressed sparse row matrices sharing one sparsity pattern per space.

use std::sync::Arc;

use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    /// Sorted column indices within each row.
    pub col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from unsorted, possibly duplicated column lists per row.
    pub fn from_rows(n_cols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: rows.len(),
            n_cols,
            row_ptr,
            col_idx,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].binary_search(&j).ok().map(|p| a + p)
    }
}

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<SparsityPattern>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        Self { pattern, values: vec![0.0; nnz] }
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|i| vec![i]).collect();
        let pattern = Arc::new(SparsityPattern::from_rows(n, rows));
        Self { pattern, values: vec![1.0; n] }
    }

    /// Sums duplicate entries.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); n_rows];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let pattern = Arc::new(SparsityPattern::from_rows(n_cols, rows));
        let mut m = Self::zeros(pattern);
        for &(i, j, v) in triplets {
            m.add_to(i, j, v);
        }
        m
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n_cols = a.first().map_or(0, |r| r.len());
        let mut t = Vec::new();
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 || i == j {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(a.len(), n_cols, &t)
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
        (&self.pattern.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Panics if `(i, j)` is not in the pattern.
    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .pattern
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[p] += v;
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let pat = &*self.pattern;
        for (i, yi) in y.iter_mut().enumerate().take(pat.n_rows) {
            let mut s = 0.0;
            for p in pat.row_ptr[i]..pat.row_ptr[i + 1] {
                s += self.values[p] * x[pat.col_idx[p]];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows()];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let pat = &*self.pattern;
        let mut y = vec![0.0; pat.n_cols];
        for i in 0..pat.n_rows {
            for p in pat.row_ptr[i]..pat.row_ptr[i + 1] {
                y[pat.col_idx[p]] += self.values[p] * x[i];
            }
        }
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let pat = &*self.pattern;
        let mut s = 0.0;
        for i in 0..pat.n_rows {
            let mut r = 0.0;
            for p in pat.row_ptr[i]..pat.row_ptr[i + 1] {
                r += self.values[p] * y[pat.col_idx[p]];
            }
            s += x[i] * r;
        }
        s
    }

    fn same_pattern(&self, other: &CsrMatrix) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern
    }

    /// `self += alpha * other`; both matrices must share a pattern.
    pub fn axpy(&mut self, alpha: f64, other: &CsrMatrix) {
        assert!(self.same_pattern(other), "axpy requires matching sparsity patterns");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push((j, i, v));
            }
        }
        Self::from_triplets(self.n_cols(), self.n_rows(), &t)
    }

    /// `max |A - A^T| <= tol * max |A|`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self.max_abs();
        (0..self.n_rows()).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .all(|(&j, &v)| (v - self.get(j, i)).abs() <= tol * scale)
        })
    }

    /// Replaces rows and columns of constrained dofs by the identity. Idempotent.
    pub fn eliminate_dirichlet(&mut self, constrained: &[bool]) {
        let pat = Arc::clone(&self.pattern);
        for i in 0..pat.n_rows {
            for p in pat.row_ptr[i]..pat.row_ptr[i + 1] {
                let j = pat.col_idx[p];
                if constrained[i] || constrained[j] {
                    self.values[p] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }

    /// Restriction to the rows and columns listed in `keep` (in that order).
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n_cols()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            let (cols, vals) = self.row(old_i);
            for (&j, &v) in cols.iter().zip(vals) {
                if map[j] != usize::MAX {
                    t.push((new_i, map[j], v));
                }
            }
        }
        Self::from_triplets(keep.len(), keep.len(), &t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n_cols()]; self.n_rows()];
        for (i, row) in a.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] += v;
            }
        }
        a
    }

    /// Column-major view of a structurally symmetric matrix (CSR of `A` is CSC of `A^T`).
    pub(crate) fn as_faer_symmetric(&self) -> SparseColMatRef<'_, usize, f64> {
        let pat = &*self.pattern;
        let sym = SymbolicSparseColMatRef::new_checked(pat.n_rows, pat.n_cols, &pat.row_ptr, None, &pat.col_idx);
        SparseColMatRef::new(sym, &self.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
