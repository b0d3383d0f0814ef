use crate::error::{Error, Result};

/// Constant sparse matrix in compressed-row form.
///
/// Column indices within a row are kept in insertion order and may repeat;
/// products accumulate entries in that stored order. This lets one matrix
/// express both graph adjacency (sorted, unique neighbors) and sequence
/// membership (element `i` of a sequence points at its input row, repeated
/// labels included).
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    num_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(num_cols: usize, offsets: Vec<usize>, cols: Vec<usize>, vals: Vec<f64>) -> Result<Self> {
        if offsets.first() != Some(&0) {
            return Err(Error::Contract("csr offsets must start at 0".into()));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Contract("csr offsets must be nondecreasing".into()));
        }
        if *offsets.last().unwrap() != cols.len() || cols.len() != vals.len() {
            return Err(Error::dim("csr", &[cols.len()], &[vals.len()]));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= num_cols) {
            return Err(Error::Index {
                what: "csr column",
                index: bad,
                len: num_cols,
            });
        }
        Ok(CsrMatrix {
            num_cols,
            offsets,
            cols,
            vals,
        })
    }

    /// One row per group, each entry weighted `1` (sum) or `1/len` (mean).
    /// Empty groups stay empty rows.
    pub fn from_groups<G: AsRef<[usize]>>(num_cols: usize, groups: &[G], mean: bool) -> Result<Self> {
        let mut offsets = Vec::with_capacity(groups.len() + 1);
        offsets.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for g in groups {
            let g = g.as_ref();
            let w = if mean && !g.is_empty() {
                1.0 / g.len() as f64
            } else {
                1.0
            };
            cols.extend_from_slice(g);
            vals.extend(std::iter::repeat_n(w, g.len()));
            offsets.push(cols.len());
        }
        Self::new(num_cols, offsets, cols, vals)
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    /// `self · dense` for a row-major `dense` with `width` columns.
    pub fn mul_dense(&self, dense: &[f64], width: usize) -> Vec<f64> {
        debug_assert_eq!(dense.len(), self.num_cols * width);
        let mut out = vec![0.0; self.num_rows() * width];
        for r in 0..self.num_rows() {
            let dst = &mut out[r * width..(r + 1) * width];
            for (c, w) in self.row_entries(r) {
                let src = &dense[c * width..(c + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// `selfᵀ · dense`, accumulated into `out` (`num_cols × width`).
    pub fn mul_dense_transposed_into(&self, dense: &[f64], width: usize, out: &mut [f64]) {
        debug_assert_eq!(dense.len(), self.num_rows() * width);
        debug_assert_eq!(out.len(), self.num_cols * width);
        for r in 0..self.num_rows() {
            let src = &dense[r * width..(r + 1) * width];
            for (c, w) in self.row_entries(r) {
                let dst = &mut out[c * width..(c + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
}
