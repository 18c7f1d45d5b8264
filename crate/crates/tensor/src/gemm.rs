//! Single-precision matrix products. Everything heavy in the engine
//! (linear layers, attention, convolution via patch gathering) funnels into
//! [`gemm`], which splits the output into fixed row panels and hands each to
//! the packed `matrixmultiply` microkernel.

use crate::par;

/// Rows of the output handled by one task.
const ROW_PANEL: usize = 32;

/// A strided, read-only view of a 2-D matrix.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    data: &'a [f32],
    rows: usize,
    cols: usize,
    row_stride: isize,
    col_stride: isize,
}

impl<'a> MatRef<'a> {
    /// Contiguous row-major matrix.
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "matrix view exceeds storage");
        Self { data, rows, cols, row_stride: cols as isize, col_stride: 1 }
    }

    /// Transposed view over the same storage.
    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    /// Optionally transposed, for `op(A)` style call sites.
    pub fn maybe_t(self, transpose: bool) -> Self {
        if transpose {
            self.t()
        } else {
            self
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// `C = A·B` (or `C += A·B` when `accumulate`), with `C` contiguous row-major.
pub fn gemm(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f32], accumulate: bool) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "gemm inner dimensions");
    assert_eq!(c.len(), m * n, "gemm output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    par::for_each_chunk_mut(c, ROW_PANEL * n, |panel, out| {
        let row0 = panel * ROW_PANEL;
        let rows = out.len() / n;
        // SAFETY: the views were bounds-checked at construction; the panel
        // starts at row `row0 < m` and spans `rows` rows of A and C. Each
        // task writes only its own disjoint chunk of C.
        unsafe {
            let a_ptr = a.data.as_ptr().offset(row0 as isize * a.row_stride);
            matrixmultiply::sgemm(
                rows,
                k,
                n,
                1.0,
                a_ptr,
                a.row_stride,
                a.col_stride,
                b.data.as_ptr(),
                b.row_stride,
                b.col_stride,
                beta,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    });
}

/// Reference triple loop with `f64` accumulation; used as a test oracle.
pub fn gemm_naive(a: MatRef<'_>, b: MatRef<'_>) -> Vec<f32> {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let at =
        |d: &MatRef<'_>, i: usize, j: usize| d.data[(i as isize * d.row_stride + j as isize * d.col_stride) as usize];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for p in 0..k {
                acc += at(&a, i, p) as f64 * at(&b, p, j) as f64;
            }
            out[i * n + j] = acc as f32;
        }
    }
    out
}
