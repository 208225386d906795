//! Numeric kernels shared by the training and inference paths.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Floating-point element type of a model (`f32` for training, `f64` for
/// gradient checks).
pub trait Scalar:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn max(self, other: Self) -> Self;

    /// `C = alpha * A B + beta * C` over raw strided storage.
    ///
    /// # Safety
    /// Every addressed element must lie inside the pointed-to allocations.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            fn max(self, other: Self) -> Self {
                <$t>::max(self, other)
            }
            unsafe fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Strided read-only view of a matrix inside a slice.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T: Scalar> Mat<'a, T> {
    /// Contiguous row-major `rows × cols`.
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn strided(data: &'a [T], rows: usize, cols: usize, rs: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            rs,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// Mutable strided view.
pub(crate) struct MatMut<'a, T> {
    pub data: &'a mut [T],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
}

impl<'a, T: Scalar> MatMut<'a, T> {
    pub fn new(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            rs: cols,
        }
    }

    pub fn strided(data: &'a mut [T], rows: usize, cols: usize, rs: usize) -> Self {
        Self { data, rows, cols, rs }
    }
}

/// `c = a·b` (`accumulate == false`) or `c += a·b`.
pub(crate) fn gemm<T: Scalar>(c: MatMut<'_, T>, a: Mat<'_, T>, b: Mat<'_, T>, alpha: T, accumulate: bool) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!(c.rows, a.rows, "output rows differ");
    assert_eq!(c.cols, b.cols, "output cols differ");
    a.check();
    b.check();
    if c.rows > 0 && c.cols > 0 {
        assert!((c.rows - 1) * c.rs + c.cols - 1 < c.data.len(), "output view out of bounds");
    }
    let beta = if accumulate { T::ONE } else { T::ZERO };
    // SAFETY: all three views were bounds-checked above.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            1,
        );
    }
}

pub(crate) const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm. Writes `out`, per-row mean and reciprocal std.
pub(crate) fn layernorm_forward<T: Scalar>(
    out: &mut [T],
    mean: &mut [T],
    rstd: &mut [T],
    x: &[T],
    gamma: &[T],
    beta: &[T],
) {
    let c = gamma.len();
    let inv_c = T::from_f64(1.0 / c as f64);
    let eps = T::from_f64(LN_EPS);
    for (r, (xr, or)) in x.chunks_exact(c).zip(out.chunks_exact_mut(c)).enumerate() {
        let mut m = T::ZERO;
        for &v in xr {
            m += v;
        }
        m *= inv_c;
        let mut var = T::ZERO;
        for &v in xr {
            let d = v - m;
            var += d * d;
        }
        let s = T::ONE / (var * inv_c + eps).sqrt();
        for i in 0..c {
            or[i] = (xr[i] - m) * s * gamma[i] + beta[i];
        }
        mean[r] = m;
        rstd[r] = s;
    }
}

/// Accumulates `dgamma`, `dbeta` and adds the input gradient into `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn layernorm_backward<T: Scalar>(
    dx: &mut [T],
    dgamma: &mut [T],
    dbeta: &mut [T],
    dout: &[T],
    x: &[T],
    mean: &[T],
    rstd: &[T],
    gamma: &[T],
) {
    let c = gamma.len();
    let inv_c = T::from_f64(1.0 / c as f64);
    let mut xhat = vec![T::ZERO; c];
    let mut dxhat = vec![T::ZERO; c];
    for r in 0..mean.len() {
        let xr = &x[r * c..(r + 1) * c];
        let dr = &dout[r * c..(r + 1) * c];
        let (m, s) = (mean[r], rstd[r]);
        let mut sum_d = T::ZERO;
        let mut sum_dx = T::ZERO;
        for i in 0..c {
            xhat[i] = (xr[i] - m) * s;
            dxhat[i] = dr[i] * gamma[i];
            dgamma[i] += dr[i] * xhat[i];
            dbeta[i] += dr[i];
            sum_d += dxhat[i];
            sum_dx += dxhat[i] * xhat[i];
        }
        let mean_d = sum_d * inv_c;
        let mean_dx = sum_dx * inv_c;
        let out = &mut dx[r * c..(r + 1) * c];
        for i in 0..c {
            out[i] += (dxhat[i] - mean_d - xhat[i] * mean_dx) * s;
        }
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044_715;

/// Tanh-approximated GELU. Returns the activation and stores `tanh(u)`.
pub(crate) fn gelu_forward<T: Scalar>(out: &mut [T], tanh_u: &mut [T], x: &[T]) {
    let k = T::from_f64(GELU_K);
    let c = T::from_f64(GELU_C);
    let half = T::from_f64(0.5);
    for ((o, t), &v) in out.iter_mut().zip(tanh_u.iter_mut()).zip(x) {
        let th = (k * (v + c * v * v * v)).tanh();
        *t = th;
        *o = half * v * (T::ONE + th);
    }
}

pub(crate) fn gelu_backward<T: Scalar>(dx: &mut [T], dout: &[T], x: &[T], tanh_u: &[T]) {
    let k = T::from_f64(GELU_K);
    let c3 = T::from_f64(3.0 * GELU_C);
    let half = T::from_f64(0.5);
    for i in 0..dx.len() {
        let (v, th) = (x[i], tanh_u[i]);
        let du = k * (T::ONE + c3 * v * v);
        let d = half * (T::ONE + th) + half * v * (T::ONE - th * th) * du;
        dx[i] = dout[i] * d;
    }
}

pub(crate) fn add_bias<T: Scalar>(x: &mut [T], bias: &[T]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

pub(crate) fn accumulate_col_sums<T: Scalar>(dbias: &mut [T], d: &[T]) {
    for row in d.chunks_exact(dbias.len()) {
        for (g, &v) in dbias.iter_mut().zip(row) {
            *g += v;
        }
    }
}

/// In-place softmax of `row[..len]`, zeroing the rest.
pub(crate) fn softmax_prefix<T: Scalar>(row: &mut [T], len: usize) {
    let mut max = row[0];
    for &v in &row[1..len] {
        max = max.max(v);
    }
    let mut sum = T::ZERO;
    for v in &mut row[..len] {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::ONE / sum;
    for v in &mut row[..len] {
        *v *= inv;
    }
    for v in &mut row[len..] {
        *v = T::ZERO;
    }
}
