use num_traits::Float;
use std::fmt::Debug;

/// Element type for tensors. Implemented for `f32` (training) and `f64`
/// (gradient checks); both run through the same generic code.
pub trait Scalar: Float + Debug + Default + Send + Sync + std::iter::Sum + 'static {
    /// `C = alpha * A B + beta * C` with arbitrary row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                assert!(span(m, k, rsa, csa) <= a.len());
                assert!(span(k, n, rsb, csb) <= b.len());
                assert!(span(m, n, rsc, csc) <= c.len());
                // SAFETY: the asserts above guarantee every strided index of
                // the three matrices lies inside its slice.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }

            fn from_f64(x: f64) -> Self {
                x as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

fn span(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
}

/// Row-major `A (m x k) * B (k x n)` into a fresh buffer.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    T::gemm(
        m,
        k,
        n,
        T::one(),
        a,
        k as isize,
        1,
        b,
        n as isize,
        1,
        T::zero(),
        &mut c,
        n as isize,
        1,
    );
    c
}

/// Gram matrix `A A^T` of a row-major `n x d` matrix.
pub fn matmul_transposed<T: Scalar>(a: &[T], n: usize, d: usize) -> Vec<T> {
    let mut c = vec![T::zero(); n * n];
    T::gemm(
        n,
        d,
        n,
        T::one(),
        a,
        d as isize,
        1,
        a,
        1,
        d as isize,
        T::zero(),
        &mut c,
        n as isize,
        1,
    );
    c
}
