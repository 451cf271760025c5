use super::Matrix;

/// Compressed sparse rows: row `v` lists `(source, weight)` entries in
/// ascending source order. Used for message passing where row `v` receives
/// messages from its columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAdj {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl SparseAdj {
    /// Builds from unordered `(row, col, weight)` triplets. Duplicate
    /// positions are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(triplets.len());
        let mut val: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, w) in triplets {
            assert!(r < n && c < n, "triplet ({r},{c}) out of range for n={n}");
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += w;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col.push(c);
            val.push(w);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col, val }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    #[inline]
    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    #[inline]
    pub fn col(&self, k: usize) -> usize {
        self.col[k]
    }

    #[inline]
    pub fn val(&self, k: usize) -> f64 {
        self.val[k]
    }

    /// Row index of every stored entry, in storage order.
    pub fn entry_rows(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            rows.extend(std::iter::repeat_n(r, self.row_range(r).len()));
        }
        rows
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for k in self.row_range(r) {
                m.set(r, self.col[k], self.val[k]);
            }
        }
        m
    }

    /// `self × h` accumulated into `out`, summing each row in ascending
    /// column order (bit-identical to the dense i-k-j product).
    pub(crate) fn spmm_into(&self, h: &Matrix, out: &mut Matrix) {
        let d = h.cols();
        for r in 0..self.n {
            let orow = out.row_mut(r);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let w = self.val[k];
                let hrow = &h.data()[self.col[k] * d..(self.col[k] + 1) * d];
                for (o, &x) in orow.iter_mut().zip(hrow) {
                    *o += w * x;
                }
            }
        }
    }

    /// `selfᵀ × g` accumulated into `out`.
    pub(crate) fn spmm_t_into(&self, g: &Matrix, out: &mut Matrix) {
        let d = g.cols();
        for r in 0..self.n {
            let grow = &g.data()[r * d..(r + 1) * d];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let w = self.val[k];
                let orow = out.row_mut(self.col[k]);
                for (o, &x) in orow.iter_mut().zip(grow) {
                    *o += w * x;
                }
            }
        }
    }
}
