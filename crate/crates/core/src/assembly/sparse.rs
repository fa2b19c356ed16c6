//! Compressed-row sparse matrices.

use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` entries. Duplicates are summed
    /// in input order, so the result only depends on the triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..nrows {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            // stable: equal columns keep their input order
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.len());
        let trip: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(j, v)| (i, j, *v))
            })
            .collect();
        Self::from_triplets(rows.len(), ncols, &trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
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

    /// Entries `(col, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[a..b].binary_search(&j) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        par::fill_indexed(y, |i| {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[self.col_idx[k]];
            }
            s
        });
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// `Aᵀ x`.
    pub fn mul_vec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                trip.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trip)
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut trip = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    trip.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, &trip)
    }

    /// `alpha A + beta B`.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            trip.extend(self.row(i).map(|(j, v)| (i, j, alpha * v)));
            trip.extend(other.row(i).map(|(j, v)| (i, j, beta * v)));
        }
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Restriction to the given rows and columns, renumbered in list order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_slot = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_slot[c] = k;
        }
        let mut trip = Vec::new();
        for (new_i, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                let s = col_slot[j];
                if s != usize::MAX {
                    trip.push((new_i, s, v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &trip)
    }

    /// Drops stored entries with `|v| <= tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            trip.extend(self.row(i).filter(|(_, v)| v.abs() > tol).map(|(j, v)| (i, j, v)));
        }
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - Aᵀ|` over all entries.
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let mut m: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m = m.max((v - self.get(j, i)).abs());
            }
        }
        m
    }

    /// Assembles `[[a, btᵀ], [bt, c]]` where `bt` is the lower-left block.
    pub fn block_2x2(a: &SparseMatrix, bt: &SparseMatrix, c: Option<&SparseMatrix>) -> Self {
        let n = a.nrows;
        let m = bt.nrows;
        assert_eq!(bt.ncols, n);
        let mut trip = Vec::with_capacity(a.nnz() + 2 * bt.nnz());
        for i in 0..n {
            trip.extend(a.row(i).map(|(j, v)| (i, j, v)));
        }
        for i in 0..m {
            for (j, v) in bt.row(i) {
                trip.push((n + i, j, v));
                trip.push((j, n + i, v));
            }
        }
        if let Some(c) = c {
            for i in 0..m {
                trip.extend(c.row(i).map(|(j, v)| (n + i, n + j, v)));
            }
        }
        Self::from_triplets(n + m, n + m, &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}
