//! Thin safe wrapper over `matrixmultiply::dgemm`.

/// Strided matrix view: element `(i, j)` lives at `data[i * row_stride + j * col_stride]`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> View<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            row_stride: 1,
            col_stride: cols,
        }
    }

    fn check(&self, rows: usize, cols: usize) {
        if rows > 0 && cols > 0 {
            let last = (rows - 1) * self.row_stride + (cols - 1) * self.col_stride;
            assert!(last < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// `c = alpha * a * b + beta * c` with `a: m x k`, `b: k x n` and `c` row-major `m x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: View<'_>,
    b: View<'_>,
    beta: f64,
    c: &mut [f64],
) {
    a.check(m, k);
    b.check(k, n);
    assert!(c.len() >= m * n, "output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every index touched by dgemm is bounds-checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_product_and_transpose() {
        // [1 2; 3 4] * [5; 6] = [17; 39]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0];
        let mut c = [0.0; 2];
        gemm(
            2,
            2,
            1,
            1.0,
            View::rows(&a, 2),
            View::rows(&b, 1),
            0.0,
            &mut c,
        );
        assert_eq!(c, [17.0, 39.0]);
        // a^T * b = [1*5+3*6, 2*5+4*6]
        gemm(
            2,
            2,
            1,
            1.0,
            View::transposed(&a, 2),
            View::rows(&b, 1),
            0.0,
            &mut c,
        );
        assert_eq!(c, [23.0, 34.0]);
    }
}

const TANH_P: [f64; 3] = [
    -9.643_991_794_250_523e-1,
    -9.928_772_310_019_186e1,
    -1.614_687_684_417_084_5e3,
];
const TANH_Q: [f64; 3] = [
    1.128_116_784_916_329_3e2,
    2.235_488_390_601_004_6e3,
    4.844_063_053_251_255e3,
];

/// `exp(y)` for `0 <= y <= 40`: range reduction by `ln 2` and a degree-13
/// Taylor polynomial on `|r| <= ln2 / 2`.
#[inline(always)]
fn exp_small_range(y: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // adding 1.5 * 2^52 rounds to an integer held in the low mantissa bits
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    let t = y * std::f64::consts::LOG2_E + SHIFTER;
    let k = t - SHIFTER;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    let scale = t
        .to_bits()
        .wrapping_sub(SHIFTER.to_bits())
        .wrapping_add(1023)
        << 52;
    p * f64::from_bits(scale)
}

/// Elementwise `tanh`, written branch-free so the loop vectorizes: a
/// rational approximation for `|x| < 0.625` and `1 - 2 / (exp(2|x|) + 1)`
/// above. Agrees with `f64::tanh` to a few ulp.
pub(crate) fn tanh_in_place(v: &mut [f64]) {
    for x in v.iter_mut() {
        let a = x.abs().min(20.0);
        let s = a * a;
        let num = (TANH_P[0] * s + TANH_P[1]) * s + TANH_P[2];
        let den = ((s + TANH_Q[0]) * s + TANH_Q[1]) * s + TANH_Q[2];
        let small = a + a * s * (num / den);
        let e = exp_small_range(2.0 * a.max(0.625));
        let large = 1.0 - 2.0 / (e + 1.0);
        let t = if a < 0.625 { small } else { large };
        *x = if x.is_nan() { *x } else { t.copysign(*x) };
    }
}
