//! Dormand-Prince 5(4) step with embedded error estimate, shared by the
//! planar orbit integrator and the first-kind Poincaré map.

use crate::scalar::Real;

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

// 5th-order weights minus embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub(crate) struct Step<T, const N: usize> {
    pub y: [T; N],
    pub err: [T; N],
    /// `f(s + h, y)`, reusable as the first stage of the next step.
    pub f_end: [T; N],
}

pub(crate) fn dp5_step<T, const N: usize, F>(f: &F, s: T, y: &[T; N], f0: &[T; N], h: T) -> Step<T, N>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
{
    let mut k = [[T::zero(); N]; 7];
    k[0] = *f0;
    for stage in 1..7 {
        let mut yi = *y;
        for (j, kj) in k.iter().enumerate().take(stage) {
            let a = T::lit(A[stage][j]);
            if a != T::zero() {
                for i in 0..N {
                    yi[i] += h * a * kj[i];
                }
            }
        }
        if stage == 6 {
            // stage 7 abscissa equals the step end; yi is the 5th-order solution
            k[6] = f(s + h, &yi);
            let mut err = [T::zero(); N];
            for (j, kj) in k.iter().enumerate() {
                let e = T::lit(E[j]);
                for i in 0..N {
                    err[i] += h * e * kj[i];
                }
            }
            return Step {
                y: yi,
                err,
                f_end: k[6],
            };
        }
        k[stage] = f(s + T::lit(C[stage]) * h, &yi);
    }
    unreachable!()
}

/// Scaled RMS norm of the local error estimate.
pub(crate) fn error_norm<T: Real, const N: usize>(
    y0: &[T; N],
    y1: &[T; N],
    err: &[T; N],
    rtol: T,
    atol: T,
) -> T {
    let mut acc = T::zero();
    for i in 0..N {
        let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / T::from_usize_lossy(N)).sqrt()
}

/// Step-size factor from the error norm, clamped to `[0.2, 5]`.
pub(crate) fn step_factor<T: Real>(err: T) -> T {
    if err == T::zero() {
        return T::lit(5.0);
    }
    (T::lit(0.9) * err.powf(T::lit(-0.2)))
        .min(T::lit(5.0))
        .max(T::lit(0.2))
}

/// Starting step from the scaled sizes of the state and its derivative.
pub(crate) fn initial_step<T: Real, const N: usize>(y: &[T; N], f0: &[T; N], rtol: T, atol: T) -> T {
    let mut d0 = T::zero();
    let mut d1 = T::zero();
    for i in 0..N {
        let sc = atol + rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    let (d0, d1) = (d0.sqrt(), d1.sqrt());
    if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
        T::lit(1e-6)
    } else {
        T::lit(0.01) * d0 / d1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_single_step() {
        let f = |_s: f64, y: &[f64; 1]| [y[0]];
        let st = dp5_step(&f, 0.0, &[1.0], &[1.0], 0.1);
        assert!((st.y[0] - 0.1f64.exp()).abs() < 1e-9);
        assert!(st.err[0].abs() < 1e-7);
        assert!((st.f_end[0] - st.y[0]).abs() < 1e-15);
    }

    #[test]
    fn fifth_order_convergence() {
        // local error of a single step scales like h^6
        let f = |s: f64, y: &[f64; 1]| [s.cos() * y[0]];
        let exact = |s: f64| s.sin().exp();
        let e = |h: f64| (dp5_step(&f, 0.0, &[1.0], &[1.0], h).y[0] - exact(h)).abs();
        let ratio = e(0.2) / e(0.1);
        assert!(ratio > 40.0, "ratio {ratio}");
    }
}
