//! Raw numeric kernels shared by the forward and backward passes.
//!
//! Everything here is pure: fixed iteration order, no hidden state. The GEMM
//! calls go through `matrixmultiply`, whose blocking is deterministic for a
//! given problem size, so whole-run reproducibility holds bit-for-bit.

/// `c = a (m x k) * b (k x n)`, row-major, overwriting `c`.
pub fn mm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, 0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c += a (m x k) * b (k x n)`.
pub fn mm_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, 1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c = a (m x k) * b^T` where `b` is stored as `n x k`.
pub fn mm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, 0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c += a^T * b` where `a` is stored as `k x m`, `b` as `k x n`.
pub fn mm_tn_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, 1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c += a (m x k) * b^T` where `b` is stored as `n x k`.
pub fn mm_nt_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, 1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place softmax over each row of an `rows x cols` matrix, with the row max
/// subtracted before exponentiation.
pub fn softmax_rows(x: &mut [f64], rows: usize, cols: usize) {
    debug_assert_eq!(x.len(), rows * cols);
    for r in 0..rows {
        let row = &mut x[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Softmax over each row restricted to columns where `valid` is true; invalid
/// columns come out exactly 0. A row with no valid column comes out all-zero.
pub fn masked_softmax_rows(x: &mut [f64], rows: usize, cols: usize, valid: &[bool]) {
    debug_assert_eq!(x.len(), rows * cols);
    debug_assert_eq!(valid.len(), cols);
    for r in 0..rows {
        let row = &mut x[r * cols..(r + 1) * cols];
        let mut max = f64::NEG_INFINITY;
        for (v, &ok) in row.iter().zip(valid) {
            if ok && *v > max {
                max = *v;
            }
        }
        if max == f64::NEG_INFINITY {
            row.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let mut sum = 0.0;
        for (v, &ok) in row.iter_mut().zip(valid) {
            if ok {
                *v = (*v - max).exp();
                sum += *v;
            } else {
                *v = 0.0;
            }
        }
        for (v, &ok) in row.iter_mut().zip(valid) {
            if ok {
                *v /= sum;
            }
        }
    }
}

/// Zero-padded 1-D cross-correlation patch matrix for a `c_in x t` signal and
/// an odd kernel width `k`: output is `(c_in * k) x t` with
/// `col[(c*k + kk), tt] = x[c, tt + kk - (k-1)/2]` (0 outside the signal).
pub fn im2col_ct(x: &[f64], c_in: usize, t: usize, k: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), c_in * t);
    let pad = (k - 1) / 2;
    let mut cols = vec![0.0; c_in * k * t];
    for c in 0..c_in {
        for kk in 0..k {
            let row = &mut cols[(c * k + kk) * t..(c * k + kk + 1) * t];
            for (tt, slot) in row.iter_mut().enumerate() {
                let src = tt as isize + kk as isize - pad as isize;
                if src >= 0 && (src as usize) < t {
                    *slot = x[c * t + src as usize];
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col_ct`]: scatter-add patch gradients back onto the signal.
pub fn col2im_ct(dcols: &[f64], c_in: usize, t: usize, k: usize, dx: &mut [f64]) {
    debug_assert_eq!(dcols.len(), c_in * k * t);
    debug_assert_eq!(dx.len(), c_in * t);
    let pad = (k - 1) / 2;
    for c in 0..c_in {
        for kk in 0..k {
            let row = &dcols[(c * k + kk) * t..(c * k + kk + 1) * t];
            for (tt, &v) in row.iter().enumerate() {
                let src = tt as isize + kk as isize - pad as isize;
                if src >= 0 && (src as usize) < t {
                    dx[c * t + src as usize] += v;
                }
            }
        }
    }
}

/// Patch matrix for a `[t, j, c_in]` tensor convolved along `t` independently
/// per joint with a shared kernel: output is `(c_in * k) x (j * t)` with
/// columns ordered joint-major (`col = jj * t + tt`).
pub fn im2col_tjc(x: &[f64], t: usize, j: usize, c_in: usize, k: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), t * j * c_in);
    let pad = (k - 1) / 2;
    let jt = j * t;
    let mut cols = vec![0.0; c_in * k * jt];
    for c in 0..c_in {
        for kk in 0..k {
            let base = (c * k + kk) * jt;
            for jj in 0..j {
                for tt in 0..t {
                    let src = tt as isize + kk as isize - pad as isize;
                    if src >= 0 && (src as usize) < t {
                        cols[base + jj * t + tt] = x[(src as usize * j + jj) * c_in + c];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col_tjc`].
pub fn col2im_tjc(dcols: &[f64], t: usize, j: usize, c_in: usize, k: usize, dx: &mut [f64]) {
    debug_assert_eq!(dcols.len(), c_in * k * j * t);
    debug_assert_eq!(dx.len(), t * j * c_in);
    let pad = (k - 1) / 2;
    let jt = j * t;
    for c in 0..c_in {
        for kk in 0..k {
            let base = (c * k + kk) * jt;
            for jj in 0..j {
                for tt in 0..t {
                    let src = tt as isize + kk as isize - pad as isize;
                    if src >= 0 && (src as usize) < t {
                        dx[(src as usize * j + jj) * c_in + c] += dcols[base + jj * t + tt];
                    }
                }
            }
        }
    }
}

/// Scatter a `c_out x (j * t)` GEMM result (joint-major columns) into a
/// `[t, j, c_out]` tensor.
pub fn scatter_cjt_to_tjc(y_cjt: &[f64], t: usize, j: usize, c_out: usize, out: &mut [f64]) {
    debug_assert_eq!(y_cjt.len(), c_out * j * t);
    debug_assert_eq!(out.len(), t * j * c_out);
    let jt = j * t;
    for o in 0..c_out {
        let src = &y_cjt[o * jt..(o + 1) * jt];
        for jj in 0..j {
            for tt in 0..t {
                out[(tt * j + jj) * c_out + o] = src[jj * t + tt];
            }
        }
    }
}

/// Inverse of [`scatter_cjt_to_tjc`]: gather a `[t, j, c]` tensor into
/// `c x (j * t)` joint-major columns.
pub fn gather_tjc_to_cjt(x: &[f64], t: usize, j: usize, c: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), t * j * c);
    let jt = j * t;
    let mut out = vec![0.0; c * jt];
    for cc in 0..c {
        let dst = &mut out[cc * jt..(cc + 1) * jt];
        for jj in 0..j {
            for tt in 0..t {
                dst[jj * t + tt] = x[(tt * j + jj) * c + cc];
            }
        }
    }
    out
}

/// Per-channel mean and biased variance of `x` where the channel index is
/// given by `channel_of(flat_index)`. Accumulation is left-to-right in memory
/// order.
pub fn channel_stats(
    x: &[f64],
    channels: usize,
    channel_of: impl Fn(usize) -> usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut count = vec![0usize; channels];
    let mut mean = vec![0.0; channels];
    for (i, &v) in x.iter().enumerate() {
        let c = channel_of(i);
        mean[c] += v;
        count[c] += 1;
    }
    for c in 0..channels {
        mean[c] /= count[c].max(1) as f64;
    }
    let mut var = vec![0.0; channels];
    for (i, &v) in x.iter().enumerate() {
        let c = channel_of(i);
        let d = v - mean[c];
        var[c] += d * d;
    }
    for c in 0..channels {
        var[c] /= count[c].max(1) as f64;
    }
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_mm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = acc;
            }
        }
        c
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        // Small deterministic LCG; good enough to fill oracle inputs.
        let mut s = seed.wrapping_mul(2654435761).wrapping_add(12345);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn mm_matches_triple_loop() {
        for &(m, k, n) in &[(1, 1, 1), (3, 4, 2), (5, 7, 6), (16, 16, 16), (2, 9, 13)] {
            let a = pseudo(m * k, (m * 100 + k) as u64);
            let b = pseudo(k * n, (k * 100 + n) as u64);
            let mut c = vec![0.0; m * n];
            mm(m, k, n, &a, &b, &mut c);
            let want = naive_mm(m, k, n, &a, &b);
            for (got, want) in c.iter().zip(&want) {
                assert!((got - want).abs() <= 1e-12, "{} vs {}", got, want);
            }
        }
    }

    #[test]
    fn mm_nt_and_tn_match_explicit_transposes() {
        let (m, k, n) = (4, 5, 3);
        let a = pseudo(m * k, 1);
        let bt = pseudo(n * k, 2); // b stored n x k
        let mut c = vec![0.0; m * n];
        mm_nt(m, k, n, &a, &bt, &mut c);
        let mut b = vec![0.0; k * n];
        for i in 0..n {
            for j in 0..k {
                b[j * n + i] = bt[i * k + j];
            }
        }
        let want = naive_mm(m, k, n, &a, &b);
        for (got, want) in c.iter().zip(&want) {
            assert!((got - want).abs() <= 1e-12);
        }

        let at = pseudo(k * m, 3); // a stored k x m
        let b2 = pseudo(k * n, 4);
        let mut c2 = vec![0.0; m * n];
        mm_tn_acc(m, k, n, &at, &b2, &mut c2);
        let mut a2 = vec![0.0; m * k];
        for i in 0..k {
            for j in 0..m {
                a2[j * k + i] = at[i * m + j];
            }
        }
        let want2 = naive_mm(m, k, n, &a2, &b2);
        for (got, want) in c2.iter().zip(&want2) {
            assert!((got - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn sigmoid_midpoint_and_stability() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(800.0) > 0.999);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-3);
        assert!((sigmoid(-4.0) - 0.017986209962091559).abs() < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one_without_overflow() {
        let mut x = vec![1000.0, 0.0, 0.0, -1000.0, 3.0, 3.0];
        softmax_rows(&mut x, 2, 3);
        for r in 0..2 {
            let s: f64 = x[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(x[0] > 0.999);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn masked_softmax_zeroes_invalid_columns_exactly() {
        let mut x = vec![5.0, 1.0, 2.0, 3.0, -2.0, 0.0, 1.0, 4.0];
        let valid = [true, false, true, false];
        masked_softmax_rows(&mut x, 2, 4, &valid);
        for r in 0..2 {
            assert_eq!(x[r * 4 + 1], 0.0);
            assert_eq!(x[r * 4 + 3], 0.0);
            let s: f64 = x[r * 4..(r + 1) * 4].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_softmax_all_invalid_row_is_zero() {
        let mut x = vec![1.0, 2.0];
        masked_softmax_rows(&mut x, 1, 2, &[false, false]);
        assert_eq!(x, vec![0.0, 0.0]);
    }

    /// Naive direct cross-correlation, the oracle for the im2col route.
    fn naive_conv_ct(x: &[f64], c_in: usize, t: usize, w: &[f64], c_out: usize, k: usize) -> Vec<f64> {
        let pad = (k - 1) / 2;
        let mut y = vec![0.0; c_out * t];
        for o in 0..c_out {
            for tt in 0..t {
                let mut acc = 0.0;
                for c in 0..c_in {
                    for kk in 0..k {
                        let src = tt as isize + kk as isize - pad as isize;
                        if src >= 0 && (src as usize) < t {
                            acc += w[(o * c_in + c) * k + kk] * x[c * t + src as usize];
                        }
                    }
                }
                y[o * t + tt] = acc;
            }
        }
        y
    }

    #[test]
    fn im2col_gemm_matches_naive_conv() {
        let (c_in, t, c_out, k) = (3, 11, 4, 5);
        let x = pseudo(c_in * t, 10);
        let w = pseudo(c_out * c_in * k, 11);
        let cols = im2col_ct(&x, c_in, t, k);
        let mut y = vec![0.0; c_out * t];
        mm(c_out, c_in * k, t, &w, &cols, &mut y);
        let want = naive_conv_ct(&x, c_in, t, &w, c_out, k);
        for (got, want) in y.iter().zip(&want) {
            assert!((got - want).abs() <= 1e-10);
        }
    }

    #[test]
    fn ones_kernel_on_ones_signal() {
        // [1,1,1] (*) [1,1,1] with zero padding = [2,3,2]
        let x = [1.0, 1.0, 1.0];
        let w = [1.0, 1.0, 1.0];
        let cols = im2col_ct(&x, 1, 3, 3);
        let mut y = vec![0.0; 3];
        mm(1, 3, 3, &w, &cols, &mut y);
        assert_eq!(y, vec![2.0, 3.0, 2.0]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)> for random x, c.
        let (c_in, t, k) = (2, 7, 3);
        let x = pseudo(c_in * t, 20);
        let cvec = pseudo(c_in * k * t, 21);
        let cols = im2col_ct(&x, c_in, t, k);
        let lhs: f64 = cols.iter().zip(&cvec).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; c_in * t];
        col2im_ct(&cvec, c_in, t, k, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn tjc_route_matches_per_joint_ct_route() {
        let (t, j, c_in, c_out, k) = (6, 3, 2, 4, 3);
        let x = pseudo(t * j * c_in, 30);
        let w = pseudo(c_out * c_in * k, 31);
        let cols = im2col_tjc(&x, t, j, c_in, k);
        let mut y_cjt = vec![0.0; c_out * j * t];
        mm(c_out, c_in * k, j * t, &w, &cols, &mut y_cjt);
        let mut y = vec![0.0; t * j * c_out];
        scatter_cjt_to_tjc(&y_cjt, t, j, c_out, &mut y);

        for jj in 0..j {
            // extract joint jj as c_in x t
            let mut xj = vec![0.0; c_in * t];
            for tt in 0..t {
                for c in 0..c_in {
                    xj[c * t + tt] = x[(tt * j + jj) * c_in + c];
                }
            }
            let want = naive_conv_ct(&xj, c_in, t, &w, c_out, k);
            for o in 0..c_out {
                for tt in 0..t {
                    let got = y[(tt * j + jj) * c_out + o];
                    assert!((got - want[o * t + tt]).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn tjc_gather_scatter_roundtrip() {
        let (t, j, c) = (4, 3, 5);
        let x = pseudo(t * j * c, 40);
        let cjt = gather_tjc_to_cjt(&x, t, j, c);
        let mut back = vec![0.0; t * j * c];
        scatter_cjt_to_tjc(&cjt, t, j, c, &mut back);
        assert_eq!(x, back);
    }

    #[test]
    fn col2im_tjc_is_adjoint() {
        let (t, j, c_in, k) = (5, 2, 3, 3);
        let x = pseudo(t * j * c_in, 50);
        let cvec = pseudo(c_in * k * j * t, 51);
        let cols = im2col_tjc(&x, t, j, c_in, k);
        let lhs: f64 = cols.iter().zip(&cvec).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; t * j * c_in];
        col2im_tjc(&cvec, t, j, c_in, k, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn channel_stats_mean_and_biased_variance() {
        // 2 channels as last axis of [3, 2]: x = [[1, 10], [2, 20], [3, 30]]
        let x = [1.0, 10.0, 2.0, 20.0, 3.0, 30.0];
        let (mean, var) = channel_stats(&x, 2, |i| i % 2);
        assert!((mean[0] - 2.0).abs() < 1e-15);
        assert!((mean[1] - 20.0).abs() < 1e-15);
        assert!((var[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((var[1] - 200.0 / 3.0).abs() < 1e-14);
    }
}
