use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2};

/// `op(a) · op(b)` for row-major buffers, where `op` optionally transposes.
///
/// `a` is stored as `a_rows × a_cols`, `b` as `b_rows × b_cols`.
pub(crate) fn gemm(
    a: &[f64],
    (a_rows, a_cols): (usize, usize),
    trans_a: bool,
    b: &[f64],
    (b_rows, b_cols): (usize, usize),
    trans_b: bool,
) -> Vec<f64> {
    let a = ArrayView2::from_shape((a_rows, a_cols), a).expect("gemm lhs shape");
    let b = ArrayView2::from_shape((b_rows, b_cols), b).expect("gemm rhs shape");
    let a = if trans_a { a.reversed_axes() } else { a };
    let b = if trans_b { b.reversed_axes() } else { b };
    let mut out = Array2::<f64>::zeros((a.nrows(), b.ncols()));
    general_mat_mul(1.0, &a, &b, 0.0, &mut out);
    let (data, offset) = out.into_raw_vec_and_offset();
    debug_assert_eq!(offset.unwrap_or(0), 0);
    data
}

/// Permute `[d0 × d1 × d2]` to `[d0 × d2 × d1]`.
pub(crate) fn swap_last_two(data: &[f64], d0: usize, d1: usize, d2: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for i in 0..d0 {
        let base = i * d1 * d2;
        for j in 0..d1 {
            for k in 0..d2 {
                out[base + k * d1 + j] = data[base + j * d2 + k];
            }
        }
    }
    out
}
