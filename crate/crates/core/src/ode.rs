//! Fixed-step explicit integration.

use crate::scalar::Scalar;

/// One classical fourth-order Runge-Kutta step of `dy/dt = f(y)`.
///
/// The right-hand side is autonomous within a step; time-dependent inputs
/// (network switching, setpoint steps) are held constant over the step by
/// the caller.
pub fn rk4_step<T, const N: usize, F>(y: &[T; N], h: T, mut f: F) -> [T; N]
where
    T: Scalar,
    F: FnMut(&[T; N]) -> [T; N],
{
    let half = h / T::two();
    let k1 = f(y);
    let k2 = f(&axpy(y, half, &k1));
    let k3 = f(&axpy(y, half, &k2));
    let k4 = f(&axpy(y, h, &k3));
    let sixth = h / T::lit(6.0);
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + sixth * (k1[i] + T::two() * (k2[i] + k3[i]) + k4[i]);
    }
    out
}

#[inline]
fn axpy<T: Scalar, const N: usize>(y: &[T; N], a: T, k: &[T; N]) -> [T; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + a * k[i];
    }
    out
}
