use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point element type of a [`Tensor`](super::Tensor).
///
/// Implemented for `f32` (inference and training) and `f64` (oracles and
/// gradient checks).
pub trait Scalar:
    Float + FromPrimitive + Default + Debug + Display + Send + Sync + Sum + 'static
{
    fn lit(v: f64) -> Self;

    fn erf(self) -> Self;

    /// `c = alpha * a * b + beta * c` with arbitrary row/column strides.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );
}

fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs.unsigned_abs() + (cols - 1) * cs.unsigned_abs() + 1
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path, $erf:path) => {
        impl Scalar for $t {
            #[inline(always)]
            fn lit(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn erf(self) -> Self {
                $erf(self)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                (rsa, csa): (isize, isize),
                b: &[Self],
                (rsb, csb): (isize, isize),
                beta: Self,
                c: &mut [Self],
                (rsc, csc): (isize, isize),
            ) {
                assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0 && rsc >= 0 && csc >= 0);
                assert!(a.len() >= extent(m, k, rsa, csa), "gemm: lhs too short");
                assert!(b.len() >= extent(k, n, rsb, csb), "gemm: rhs too short");
                assert!(c.len() >= extent(m, n, rsc, csc), "gemm: output too short");
                // SAFETY: the asserts above bound every index the kernel touches
                // by the slice lengths, and `c` is uniquely borrowed.
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
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm, libm::erff);
impl_scalar!(f64, matrixmultiply::dgemm, libm::erf);
