//! Dense kernels behind the convolutional layers: register-tiled GEMM
//! variants and 3x3 im2col/col2im. Everything is row-major.

use super::scalar::Scalar;

/// Column-tile width of the microkernels. Chosen so a 4xNT accumulator block
/// stays in vector registers for both f32 and f64.
const NT: usize = 32;
/// Row-tile height.
const MT: usize = 4;

/// `c[m x n] += a[m x k] * b[k x n]`.
pub fn gemm_nn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut i = 0;
    while i < m {
        let mt = MT.min(m - i);
        let mut j = 0;
        while j < n {
            let nt = NT.min(n - j);
            if mt == MT && nt == NT {
                microkernel_nn::<T>(a, b, c, i, j, k, n);
            } else {
                for r in 0..mt {
                    let row = i + r;
                    for kk in 0..k {
                        let av = a[row * k + kk];
                        let b_row = &b[kk * n..kk * n + n];
                        let c_row = &mut c[row * n..row * n + n];
                        for t in j..j + nt {
                            c_row[t] += av * b_row[t];
                        }
                    }
                }
            }
            j += nt;
        }
        i += mt;
    }
}

#[inline(always)]
fn microkernel_nn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], i: usize, j: usize, k: usize, n: usize) {
    let mut acc = [[T::ZERO; NT]; MT];
    for kk in 0..k {
        let b_tile: &[T; NT] = b[kk * n + j..kk * n + j + NT].try_into().unwrap();
        for r in 0..MT {
            let av = a[(i + r) * k + kk];
            let row = &mut acc[r];
            for t in 0..NT {
                row[t] += av * b_tile[t];
            }
        }
    }
    for r in 0..MT {
        let c_tile: &mut [T] = &mut c[(i + r) * n + j..(i + r) * n + j + NT];
        for t in 0..NT {
            c_tile[t] += acc[r][t];
        }
    }
}


/// `c[k x n] += a[m x k]^T * b[m x n]`.
pub fn gemm_tn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    let mut i = 0;
    while i < k {
        let kt = MT.min(k - i);
        let mut j = 0;
        while j < n {
            let nt = NT.min(n - j);
            if kt == MT && nt == NT {
                microkernel_tn::<T>(a, b, c, i, j, m, k, n);
            } else {
                for mm in 0..m {
                    let b_row = &b[mm * n..mm * n + n];
                    for r in 0..kt {
                        let av = a[mm * k + i + r];
                        let c_row = &mut c[(i + r) * n..(i + r) * n + n];
                        for t in j..j + nt {
                            c_row[t] += av * b_row[t];
                        }
                    }
                }
            }
            j += nt;
        }
        i += kt;
    }
}

#[inline(always)]
fn microkernel_tn<T: Scalar>(
    a: &[T],
    b: &[T],
    c: &mut [T],
    i: usize,
    j: usize,
    m: usize,
    k: usize,
    n: usize,
) {
    let mut acc = [[T::ZERO; NT]; MT];
    for mm in 0..m {
        let b_tile: &[T; NT] = b[mm * n + j..mm * n + j + NT].try_into().unwrap();
        for r in 0..MT {
            let av = a[mm * k + i + r];
            let row = &mut acc[r];
            for t in 0..NT {
                row[t] += av * b_tile[t];
            }
        }
    }
    for r in 0..MT {
        let c_tile = &mut c[(i + r) * n + j..(i + r) * n + j + NT];
        for t in 0..NT {
            c_tile[t] += acc[r][t];
        }
    }
}

/// Output side of a 3x3 convolution with padding 1 at the given stride.
pub fn conv_out_side(in_side: usize, stride: usize) -> usize {
    (in_side - 1) / stride + 1
}

/// Unfold a `channels x side x side` input into the `(channels*9) x out^2`
/// patch matrix of a 3x3 convolution with padding 1.
pub fn im2col3x3<T: Scalar>(
    input: &[T],
    channels: usize,
    in_side: usize,
    stride: usize,
    cols: &mut [T],
) {
    let out_side = conv_out_side(in_side, stride);
    let n = out_side * out_side;
    debug_assert_eq!(cols.len(), channels * 9 * n);
    debug_assert_eq!(input.len(), channels * in_side * in_side);
    for ch in 0..channels {
        let plane = &input[ch * in_side * in_side..(ch + 1) * in_side * in_side];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ch * 9 + ky * 3 + kx) * n..(ch * 9 + ky * 3 + kx + 1) * n];
                for oy in 0..out_side {
                    let iy = (oy * stride + ky) as isize - 1;
                    let dst = &mut row[oy * out_side..(oy + 1) * out_side];
                    if iy < 0 || iy >= in_side as isize {
                        dst.iter_mut().for_each(|v| *v = T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * in_side..(iy as usize + 1) * in_side];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - 1;
                        *d = if ix >= 0 && ix < in_side as isize {
                            src[ix as usize]
                        } else {
                            T::ZERO
                        };
                    }
                }
            }
        }
    }
}

/// The transposed patch matrix, `out^2 x (channels*9)`: one row per output
/// position. Used by the weight-gradient GEMM so it can run in the plain
/// row-major kernel.
pub fn im2col3x3_transposed<T: Scalar>(
    input: &[T],
    channels: usize,
    in_side: usize,
    stride: usize,
    cols_t: &mut [T],
) {
    let out_side = conv_out_side(in_side, stride);
    let k = channels * 9;
    debug_assert_eq!(cols_t.len(), out_side * out_side * k);
    debug_assert_eq!(input.len(), channels * in_side * in_side);
    for oy in 0..out_side {
        for ox in 0..out_side {
            let row = &mut cols_t[(oy * out_side + ox) * k..(oy * out_side + ox + 1) * k];
            let mut q = 0;
            for ch in 0..channels {
                let plane = &input[ch * in_side * in_side..(ch + 1) * in_side * in_side];
                for ky in 0..3 {
                    let iy = (oy * stride + ky) as isize - 1;
                    for kx in 0..3 {
                        let ix = (ox * stride + kx) as isize - 1;
                        row[q] = if iy >= 0
                            && iy < in_side as isize
                            && ix >= 0
                            && ix < in_side as isize
                        {
                            plane[iy as usize * in_side + ix as usize]
                        } else {
                            T::ZERO
                        };
                        q += 1;
                    }
                }
            }
        }
    }
}

/// Scatter-add the patch-matrix gradient back onto the input layout
/// (the adjoint of [`im2col3x3`]).
pub fn col2im3x3<T: Scalar>(
    cols: &[T],
    channels: usize,
    in_side: usize,
    stride: usize,
    d_input: &mut [T],
) {
    let out_side = conv_out_side(in_side, stride);
    let n = out_side * out_side;
    debug_assert_eq!(cols.len(), channels * 9 * n);
    debug_assert_eq!(d_input.len(), channels * in_side * in_side);
    for ch in 0..channels {
        let plane = &mut d_input[ch * in_side * in_side..(ch + 1) * in_side * in_side];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ch * 9 + ky * 3 + kx) * n..(ch * 9 + ky * 3 + kx + 1) * n];
                for oy in 0..out_side {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= in_side as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * in_side..(iy as usize + 1) * in_side];
                    let src = &row[oy * out_side..(oy + 1) * out_side];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < in_side as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

pub fn relu_inplace<T: Scalar>(xs: &mut [T]) {
    for x in xs.iter_mut() {
        *x = x.maximum(T::ZERO);
    }
}

/// `d_pre[i] = d_post[i]` where the pre-activation was positive, else 0.
pub fn relu_backward<T: Scalar>(pre: &[T], d_post: &[T], d_pre: &mut [T]) {
    for ((z, d), out) in pre.iter().zip(d_post.iter()).zip(d_pre.iter_mut()) {
        *out = if *z > T::ZERO { *d } else { T::ZERO };
    }
}

/// Numerically stable softmax cross-entropy for one sample.
/// Returns the loss and writes `softmax - onehot(label)` into `d_logits`.
pub fn cross_entropy_grad<T: Scalar>(logits: &[T], label: usize, d_logits: &mut [T]) -> T {
    let max = logits
        .iter()
        .copied()
        .fold(T::from_f64(f64::NEG_INFINITY), |a, b| a.maximum(b));
    let mut denom = T::ZERO;
    for (&l, d) in logits.iter().zip(d_logits.iter_mut()) {
        let e = (l - max).exp();
        *d = e;
        denom += e;
    }
    for d in d_logits.iter_mut() {
        *d = *d / denom;
    }
    let log_sum = denom.ln() + max;
    let loss = log_sum - logits[label];
    d_logits[label] -= T::ONE;
    loss
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                for j in 0..n {
                    c[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        c
    }

    fn pseudo(n: usize, salt: u64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let x = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt;
                (x % 1000) as f64 / 500.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn gemm_nn_matches_naive_on_awkward_sizes() {
        for &(m, k, n) in &[(4, 9, 32), (5, 7, 33), (16, 144, 64), (3, 2, 100), (1, 1, 1)] {
            let a = pseudo(m * k, 1);
            let b = pseudo(k * n, 2);
            let mut c = pseudo(m * n, 3);
            let mut expect = c.clone();
            let inc = naive_gemm(&a, &b, m, k, n);
            expect.iter_mut().zip(inc.iter()).for_each(|(e, i)| *e += i);
            gemm_nn(&a, &b, &mut c, m, k, n);
            for (x, y) in c.iter().zip(expect.iter()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn transposed_unfold_matches_plain() {
        let (c, side, stride) = (3, 8, 2);
        let out = conv_out_side(side, stride);
        let (k, n) = (c * 9, out * out);
        let x = pseudo(c * side * side, 4);
        let mut cols = vec![0.0; k * n];
        let mut cols_t = vec![0.0; n * k];
        im2col3x3(&x, c, side, stride, &mut cols);
        im2col3x3_transposed(&x, c, side, stride, &mut cols_t);
        for q in 0..k {
            for t in 0..n {
                assert_eq!(cols[q * n + t], cols_t[t * k + q]);
            }
        }
    }

    #[test]
    fn gemm_tn_matches_naive() {
        let (m, k, n) = (7, 6, 40);
        let a = pseudo(m * k, 6);
        let b = pseudo(m * n, 7);
        let mut c = vec![0.0; k * n];
        gemm_tn(&a, &b, &mut c, m, k, n);
        for q in 0..k {
            for j in 0..n {
                let dot: f64 = (0..m).map(|mm| a[mm * k + q] * b[mm * n + j]).sum();
                assert!((c[q * n + j] - dot).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y
        let (c, side, stride) = (2, 6, 2);
        let out = conv_out_side(side, stride);
        let x = pseudo(c * side * side, 8);
        let y = pseudo(c * 9 * out * out, 9);
        let mut cols = vec![0.0; c * 9 * out * out];
        im2col3x3(&x, c, side, stride, &mut cols);
        let lhs: f64 = cols.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; c * side * side];
        col2im3x3(&y, c, side, stride, &mut back);
        let rhs: f64 = x.iter().zip(back.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn uniform_logits_cross_entropy_is_log_n() {
        let logits = [0.0f64; 4];
        let mut d = [0.0f64; 4];
        let loss = cross_entropy_grad(&logits, 2, &mut d);
        assert_eq!(loss, 4.0f64.ln());
        for (i, &g) in d.iter().enumerate() {
            let expect = if i == 2 { 0.25 - 1.0 } else { 0.25 };
            assert!((g - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn conv_out_sides() {
        assert_eq!(conv_out_side(32, 1), 32);
        assert_eq!(conv_out_side(32, 2), 16);
        assert_eq!(conv_out_side(8, 2), 4);
    }
}
