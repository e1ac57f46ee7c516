//! Thin safe wrapper over `matrixmultiply::dgemm`.

/// Strides of a row-major `rows × cols` matrix, optionally viewed transposed.
#[derive(Clone, Copy, Debug)]
pub(crate) struct View {
    pub rs: isize,
    pub cs: isize,
}

impl View {
    pub fn row_major(cols: usize) -> Self {
        View {
            rs: cols as isize,
            cs: 1,
        }
    }

    /// A row-major matrix with `cols` columns, read as its transpose.
    pub fn transposed(cols: usize) -> Self {
        View {
            rs: 1,
            cs: cols as isize,
        }
    }

    fn max_index(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            return 0;
        }
        (rows - 1) * self.rs as usize + (cols - 1) * self.cs as usize
    }
}

/// `c = a·b + beta·c` with `a: m×k`, `b: k×n`, `c: m×n` (row-major, contiguous).
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    av: View,
    b: &[f64],
    bv: View,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    assert!(av.max_index(m, k) < a.len(), "gemm: lhs out of bounds");
    assert!(bv.max_index(k, n) < b.len(), "gemm: rhs out of bounds");
    assert!(m * n <= c.len(), "gemm: output out of bounds");
    // SAFETY: the asserts above bound every element dgemm reads or writes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            av.rs,
            av.cs,
            b.as_ptr(),
            bv.rs,
            bv.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
