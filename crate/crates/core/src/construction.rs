//! Construction of the sign-changing periodic solution: one branch per sign
//! interval of `A`, each shot along the invariant manifold leaving the
//! zero at its left end, then glued at the zeros.
//!
//! Every branch is computed in a normalised frame where `B > 0` and
//! `A > 0` on the interval. Negative `B` is removed by `x ↦ -x` and
//! negative `A` by the point reflection `(t, x) ↦ (-t, -x)`.

use std::fmt::Write as _;

use crate::coefficients::{AbelSystem, Extremum};
use crate::conditions::{
    analyze_conditions, classify_zero, find_zeros, sign_intervals, Sign, SignInterval, ZeroKind,
    ZeroOfA,
};
use crate::error::{Error, Result};
use crate::lienard::{
    barrier_check_samples, flip, integrate, slope_field, IntegratorOptions, LineBarrier,
    PlanarState, Side, StopCondition, StopReason, BARRIER_SLACK,
};
use crate::scalar::Real;

pub const DEFAULT_SLOPE_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_CSV_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions<T> {
    /// Seed offset `δ` at saddle zeros.
    pub delta: T,
    /// Right-end standoff as a fraction of the interval length.
    pub exit_fraction: T,
    pub slope_tolerance: T,
    pub rel_tol: T,
    pub abs_tol: T,
    /// Largest `t` increment between stored samples, as a fraction of `T`.
    pub sample_fraction: T,
    /// Order of the local series at the zeros.
    pub series_order: usize,
    /// Upper bound on `u B² / |A|` at a degenerate standoff `u`.
    pub stiffness_budget: T,
    /// Re-run each branch with `δ/2` and record the midpoint change.
    pub check_seed_sensitivity: bool,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            delta: T::lit(1e-4),
            exit_fraction: T::lit(1e-3),
            slope_tolerance: T::lit(DEFAULT_SLOPE_TOLERANCE),
            rel_tol: T::lit(1e-11),
            abs_tol: T::lit(1e-14),
            sample_fraction: T::lit(1.0 / 4000.0),
            series_order: 16,
            stiffness_budget: T::lit(1e5),
            check_seed_sensitivity: true,
        }
    }
}

/// Local representation `x = Σ h_k (t-c)^k + K |t-c|^ρ` of a branch near
/// the zero `c`, used on `span` where the branch was not integrated.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalModel<T> {
    pub center: T,
    /// `coeffs[k]` multiplies `(t-c)^k`; `coeffs[0] = 0`.
    pub coeffs: Vec<T>,
    pub correction: T,
    pub exponent: T,
    pub span: (T, T),
}

impl<T: Real> LocalModel<T> {
    /// `(x, ẋ)` at `t`.
    pub fn eval(&self, t: T) -> (T, T) {
        let u = t - self.center;
        let mut x = T::zero();
        let mut d = T::zero();
        for (k, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            x = x * u + c;
            d = d * u + T::from_usize_lossy(k) * c;
        }
        // Horner above produced Σ c_k u^{k-1} and Σ k c_k u^{k-1}.
        x *= u;
        if self.correction != T::zero() && u != T::zero() {
            let au = u.abs();
            x += self.correction * au.powf(self.exponent);
            d += self.correction * self.exponent * au.powf(self.exponent - T::one()) * u.signum();
        }
        (x, d)
    }

    pub fn slope(&self) -> T {
        self.coeffs.get(1).copied().unwrap_or_else(T::zero)
    }

    /// Image under `(t, x) ↦ (-t, -x)`.
    pub fn reflected(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| if k % 2 == 0 { -c } else { c })
            .collect();
        Self {
            center: -self.center,
            coeffs,
            correction: -self.correction,
            exponent: self.exponent,
            span: (-self.span.1, -self.span.0),
        }
    }

    /// Image under `x ↦ -x`.
    pub fn negated(&self) -> Self {
        Self {
            center: self.center,
            coeffs: self.coeffs.iter().map(|&c| -c).collect(),
            correction: -self.correction,
            exponent: self.exponent,
            span: self.span,
        }
    }
}

/// Taylor coefficients of the invariant curve `x = h(t - t0)` through the
/// zero `t0` with `h'(0) = slope`. Substituting into `h (h' - B - C h) = A`
/// and matching powers gives a linear equation for each `h_n` with
/// coefficient `B(t0) - (n+1) h_1`. The series is truncated before the
/// first resonant order.
pub fn manifold_series<T: Real>(sys: &AbelSystem<T>, t0: T, slope: T, order: usize) -> Vec<T> {
    let order = order.max(1);
    let a = sys.a.taylor(t0, order);
    let b = sys.b.taylor(t0, order);
    let c = sys.c.taylor(t0, order);
    let mut h = vec![T::zero(); order + 2];
    h[1] = slope;
    let scale = T::one() + b[0].abs() + slope.abs();
    for n in 2..=order {
        let denom = b[0] - T::from_usize_lossy(n + 1) * slope;
        if denom.abs() < T::lit(1e-8) * scale {
            h.truncate(n);
            return h;
        }
        // g_j = B_j + (C h)_j - (j+1) h_{j+1}, with h_n still zero
        let g = |j: usize| {
            let mut v = b[j] - T::from_usize_lossy(j + 1) * h[j + 1];
            for k in 1..=j {
                v += c[j - k] * h[k];
            }
            v
        };
        let mut r = a[n];
        for k in 1..n {
            r += h[k] * g(n - k);
        }
        let hn = -r / denom;
        if !hn.is_finite() {
            h.truncate(n);
            return h;
        }
        h[n] = hn;
    }
    h.truncate(order + 1);
    h
}

fn poly_eval<T: Real>(coeffs: &[T], u: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * u + c)
}

/// Cubic Hermite interpolation on `[t0, t1]`, returning value and derivative.
fn hermite<T: Real>(p0: (T, T, T), p1: (T, T, T), t: T) -> (T, T) {
    let (t0, x0, d0) = p0;
    let (t1, x1, d1) = p1;
    let h = t1 - t0;
    if h <= T::zero() {
        return (x0, d0);
    }
    let s = (t - t0) / h;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = two * s3 - three * s2 + T::one();
    let h10 = s3 - two * s2 + s;
    let h01 = -two * s3 + three * s2;
    let h11 = s3 - s2;
    let x = h00 * x0 + h10 * h * d0 + h01 * x1 + h11 * h * d1;
    let six = T::lit(6.0);
    let dh00 = (six * s2 - six * s) / h;
    let dh10 = three * s2 - T::lit(4.0) * s + T::one();
    let dh01 = (-six * s2 + six * s) / h;
    let dh11 = three * s2 - two * s;
    let d = dh00 * x0 + dh10 * d0 + dh01 * x1 + dh11 * d1;
    (x, d)
}

/// Intercept of the least-squares quadratic through `(u, y)`.
fn quadratic_intercept<T: Real>(pts: &[(T, T)]) -> T {
    if pts.len() < 3 {
        return pts.iter().map(|p| p.1).fold(T::zero(), |a, b| a + b)
            / T::from_usize_lossy(pts.len().max(1));
    }
    // Normalise u to [0, 1] for conditioning.
    let umax = pts.iter().map(|p| p.0.abs()).fold(T::zero(), T::max);
    let umax = if umax > T::zero() { umax } else { T::one() };
    let mut m = [[T::zero(); 4]; 3];
    for &(u, y) in pts {
        let v = u / umax;
        let basis = [T::one(), v, v * v];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            m[i][3] += basis[i] * y;
        }
    }
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        if m[col][col] == T::zero() {
            return pts[0].1;
        }
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for k in col..4 {
                    let v = m[col][k];
                    m[r][k] -= f * v;
                }
            }
        }
    }
    m[0][3] / m[0][0]
}

/// Slope at the zero `c` from samples near it: `x/(t-c)` fitted against
/// `t - c` over the decade `|t-c| ∈ [u0, 10 u0]` and extrapolated to 0.
/// The window is shortened to `width` past `u0` when the standoff is large.
pub fn slope_estimate<T: Real>(samples: &[(T, T, T)], c: T, u0: T, width: T) -> T {
    let ratio = |s: &(T, T, T)| (s.0 - c, s.1 / (s.0 - c));
    let lim = (T::lit(10.0) * u0).min(u0 + width);
    let mut pts: Vec<(T, T)> = samples
        .iter()
        .filter(|s| (s.0 - c).abs() <= lim * T::lit(1.000001) && s.0 != c)
        .map(ratio)
        .collect();
    if pts.len() < 6 {
        let mut near: Vec<&(T, T, T)> = samples.iter().filter(|s| s.0 != c).collect();
        near.sort_by(|p, q| (p.0 - c).abs().partial_cmp(&(q.0 - c).abs()).unwrap());
        pts = near.into_iter().take(6).map(ratio).collect();
    }
    quadratic_intercept(&pts)
}

/// Solution on one sign interval, stored in the frame of the system it was
/// requested for.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionBranch<T> {
    pub interval: SignInterval<T>,
    /// Integrated `(t, x, ẋ)` in increasing `t`, strictly inside the interval.
    pub samples: Vec<(T, T, T)>,
    pub entry_slope: T,
    pub exit_slope: T,
    /// Distance from the seeding zero at which integration started.
    pub seed_offset: T,
    /// Local models covering `[a, first sample]` and `[last sample, b]`.
    pub left_model: LocalModel<T>,
    pub right_model: LocalModel<T>,
    pub barrier_certificates: Vec<(LineBarrier<T>, bool)>,
    /// Midpoint change when the seed offset is halved.
    pub seed_sensitivity: Option<T>,
    /// `λ₋(b) < α < λ₊(b)` at a node exit; `None` for other exits.
    pub cone_ordering: Option<bool>,
    /// Set when one endpoint is a degenerate zero, where the center-manifold
    /// branch was selected.
    pub center_manifold: bool,
}

impl<T: Real> SolutionBranch<T> {
    /// `(x, ẋ)` at `t` in `[a, b]`.
    pub fn eval(&self, t: T) -> (T, T) {
        if t <= self.left_model.span.1 || self.samples.is_empty() {
            return self.left_model.eval(t);
        }
        if t >= self.right_model.span.0 {
            return self.right_model.eval(t);
        }
        hermite_lookup(&self.samples, t)
    }

    /// Image under `x ↦ -x`.
    pub fn negated(&self) -> Self {
        Self {
            interval: self.interval,
            samples: self.samples.iter().map(|&(t, x, d)| (t, -x, -d)).collect(),
            entry_slope: -self.entry_slope,
            exit_slope: -self.exit_slope,
            seed_offset: self.seed_offset,
            left_model: self.left_model.negated(),
            right_model: self.right_model.negated(),
            barrier_certificates: self
                .barrier_certificates
                .iter()
                .map(|(l, ok)| (l.negated(), *ok))
                .collect(),
            seed_sensitivity: self.seed_sensitivity,
            cone_ordering: self.cone_ordering,
            center_manifold: self.center_manifold,
        }
    }

    /// Image under `(t, x) ↦ (-t, -x)`, attached to `interval`.
    fn reflected(&self, interval: SignInterval<T>) -> Self {
        Self {
            interval,
            samples: self.samples.iter().rev().map(|&(t, x, d)| (-t, -x, d)).collect(),
            entry_slope: self.exit_slope,
            exit_slope: self.entry_slope,
            seed_offset: self.seed_offset,
            left_model: self.right_model.reflected(),
            right_model: self.left_model.reflected(),
            barrier_certificates: self
                .barrier_certificates
                .iter()
                .map(|(l, ok)| (l.reflected(), *ok))
                .collect(),
            seed_sensitivity: self.seed_sensitivity,
            cone_ordering: self.cone_ordering,
            center_manifold: self.center_manifold,
        }
    }

    pub fn certificates_ok(&self) -> bool {
        self.barrier_certificates.iter().all(|(_, ok)| *ok)
    }
}

fn hermite_lookup<T: Real>(samples: &[(T, T, T)], t: T) -> (T, T) {
    let i = samples.partition_point(|s| s.0 <= t);
    if i == 0 {
        return hermite(samples[0], samples[0], t);
    }
    if i == samples.len() {
        let last = samples[samples.len() - 1];
        return (last.1, last.2);
    }
    hermite(samples[i - 1], samples[i], t)
}

/// Starting point on the branch leaving the zero at the left end of a
/// positive-`A` interval (with `B > 0`).
pub fn seed_point<T: Real>(sys: &AbelSystem<T>, zero: &ZeroOfA<T>, delta: T) -> Result<(T, T)> {
    if zero.is_focus {
        return Err(Error::WrongZeroKind {
            t: zero.t.as_f64(),
            kind: "focus",
        });
    }
    let t = zero.t + delta;
    match zero.kind {
        ZeroKind::Saddle => Ok((t, zero.lambda_minus * delta)),
        ZeroKind::Degenerate => Ok((t, -sys.a.evaluate(t) / sys.b.evaluate(t))),
        ZeroKind::UnstableNode => Err(Error::WrongZeroKind {
            t: zero.t.as_f64(),
            kind: zero.kind.name(),
        }),
    }
}

/// `α` of the slanted barrier, zero when `min Ȧ ≥ 0`.
pub fn cone_slope<T: Real>(sys: &AbelSystem<T>) -> T {
    let (_, min_adot) = sys.a.derivative_extremum(Extremum::Min);
    let (_, max_c) = sys.c.abs_extremum(Extremum::Max);
    if min_adot >= T::zero() {
        T::zero()
    } else {
        (-min_adot / (T::one() + sys.period() * max_c)).sqrt()
    }
}

/// Smallest `u ≥ start` on a geometric ladder with `u B² / |A| ≤ budget`
/// at distance `u` from a degenerate zero, capped at `cap`.
fn degenerate_standoff<T: Real, F: Fn(T) -> T>(abs_a: F, b_sq: T, start: T, cap: T, budget: T) -> T {
    let mut u = start.min(cap);
    while u < cap {
        let av = abs_a(u);
        if av > T::zero() && u * b_sq / av <= budget {
            return u;
        }
        u *= T::lit(1.25);
    }
    cap
}

struct RawBranch<T> {
    samples: Vec<(T, T, T)>,
    seed_offset: T,
    left_model: LocalModel<T>,
    right_model: LocalModel<T>,
    entry_slope: T,
    exit_slope: T,
}

/// Shoots across `(a, b)` where `A > 0` and `B > 0`.
fn shoot_positive<T: Real>(
    sys: &AbelSystem<T>,
    a: T,
    b: T,
    za: &ZeroOfA<T>,
    zb: &ZeroOfA<T>,
    delta: T,
    opts: &SolverOptions<T>,
) -> Result<RawBranch<T>> {
    let len = b - a;
    let cap = T::lit(0.2) * len;
    let ba = sys.b.evaluate(a);
    let bb = sys.b.evaluate(b);

    let (u_s, entry_model_slope) = match za.kind {
        ZeroKind::Saddle => (delta.min(cap), za.lambda_minus),
        ZeroKind::Degenerate => (
            degenerate_standoff(|u| sys.a.evaluate(a + u).abs(), ba * ba, delta, cap, opts.stiffness_budget),
            T::zero(),
        ),
        ZeroKind::UnstableNode => {
            return Err(Error::WrongZeroKind {
                t: za.t.as_f64(),
                kind: za.kind.name(),
            })
        }
    };
    let series_a = manifold_series(sys, a, entry_model_slope, opts.series_order);
    let x0 = poly_eval(&series_a, u_s);
    if !(x0 < T::zero()) {
        return Err(Error::BranchEscape {
            t: (a + u_s).as_f64(),
            x: x0.as_f64(),
        });
    }

    let start_exit = opts.exit_fraction * len;
    let (v_e, exit_model_slope, rho) = match zb.kind {
        ZeroKind::Degenerate => (
            degenerate_standoff(|v| sys.a.evaluate(b - v).abs(), bb * bb, start_exit, cap, opts.stiffness_budget),
            T::zero(),
            // approach to the center manifold is faster than any power
            T::lit(8.0),
        ),
        _ => (
            start_exit.min(cap),
            zb.lambda_minus,
            // a near-degenerate node has a huge ratio; cap it like the degenerate case
            (zb.lambda_plus / zb.lambda_minus).max(T::lit(2.0)).min(T::lit(8.0)),
        ),
    };
    let t_end = b - v_e;

    let iopts = IntegratorOptions {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        max_dt: Some(opts.sample_fraction * sys.period()),
        max_steps: 4_000_000,
    };
    let traj = integrate(
        sys,
        PlanarState::new(a + u_s, x0),
        &[StopCondition::TimeReached(t_end)],
        &iopts,
    )?;
    let (tl, xl) = traj.last();
    if traj.stop != StopReason::TimeReached {
        return Err(Error::BranchEscape {
            t: tl.as_f64(),
            x: xl.as_f64(),
        });
    }
    let alpha = cone_slope(sys);
    let slack = T::lit(BARRIER_SLACK);
    let mut samples = Vec::with_capacity(traj.samples.len());
    for &(t, x) in &traj.samples {
        if !(x < T::zero()) || x < alpha * (t - b) - slack {
            return Err(Error::BranchEscape {
                t: t.as_f64(),
                x: x.as_f64(),
            });
        }
        samples.push((t, x, slope_field(sys, t, x)?));
    }

    let series_b = manifold_series(sys, b, exit_model_slope, opts.series_order);
    let correction = (xl - poly_eval(&series_b, -v_e)) / v_e.powf(rho);
    Ok(RawBranch {
        entry_slope: slope_estimate(&samples, a, u_s, T::lit(0.02) * len),
        exit_slope: slope_estimate(&samples, b, v_e, T::lit(0.02) * len),
        samples,
        seed_offset: u_s,
        left_model: LocalModel {
            center: a,
            coeffs: series_a,
            correction: T::zero(),
            exponent: T::one(),
            span: (a, a + u_s),
        },
        right_model: LocalModel {
            center: b,
            coeffs: series_b,
            correction,
            exponent: rho,
            span: (t_end, b),
        },
    })
}

fn normalized_barriers<T: Real>(sys: &AbelSystem<T>, a: T, b: T, max_abs_x: T) -> Vec<LineBarrier<T>> {
    let (_, max_a) = sys.a.abs_extremum(Extremum::Max);
    let (_, max_c) = sys.c.abs_extremum(Extremum::Max);
    let m = if max_c > T::lit(1e-14) {
        (max_a / max_c).sqrt()
    } else {
        let (_, min_b) = sys.b.abs_extremum(Extremum::Min);
        T::lit(2.0) * max_a / min_b + max_abs_x
    };
    let alpha = cone_slope(sys);
    let mut lines = vec![
        LineBarrier::new(T::zero(), -m, Side::Above, (a, b)),
        LineBarrier::new(T::zero(), T::zero(), Side::Below, (a, b)),
    ];
    if alpha > T::zero() {
        lines.push(LineBarrier::new(alpha, -alpha * b, Side::Above, (a, b)));
    }
    lines
}

fn check_lines<T: Real>(lines: Vec<LineBarrier<T>>, samples: &[(T, T, T)]) -> Vec<(LineBarrier<T>, bool)> {
    let tx: Vec<(T, T)> = samples.iter().map(|s| (s.0, s.1)).collect();
    lines
        .into_iter()
        .map(|l| {
            let ok = barrier_check_samples(&tx, &l).0;
            (l, ok)
        })
        .collect()
}

/// Horizontal barriers `x = -M` and `x = 0` and, when `α > 0`, the slanted
/// barrier `x = α (t - b)`, built in the normalised frame of `interval` and
/// mapped back to the frame of `sys`. `max_abs_x` enters `M` when `C ≡ 0`.
pub fn interval_barriers<T: Real>(
    sys: &AbelSystem<T>,
    interval: &SignInterval<T>,
    max_abs_x: T,
) -> Vec<LineBarrier<T>> {
    let neg = sys.b.evaluate(T::zero()) < T::zero();
    let work = if neg { sys.negate_x() } else { sys.clone() };
    let reflect = interval.sign_of_a == Sign::Negative;
    let (work, a, b) = if reflect {
        (flip(&work), -interval.b, -interval.a)
    } else {
        (work, interval.a, interval.b)
    };
    normalized_barriers(&work, a, b, max_abs_x)
        .into_iter()
        .map(|l| {
            let l = if reflect { l.reflected() } else { l };
            if neg {
                l.negated()
            } else {
                l
            }
        })
        .collect()
}

/// [`interval_barriers`] checked on the branch samples.
pub fn barrier_certificates<T: Real>(
    sys: &AbelSystem<T>,
    branch: &SolutionBranch<T>,
) -> Vec<(LineBarrier<T>, bool)> {
    let max_x = branch.samples.iter().map(|s| s.1.abs()).fold(T::zero(), T::max);
    check_lines(interval_barriers(sys, &branch.interval, max_x), &branch.samples)
}

/// Solves one sign interval of `sys`, which must have `B > 0`. Intervals
/// with `A < 0` are solved in the flipped system and reflected back.
pub fn solve_interval<T: Real>(
    sys: &AbelSystem<T>,
    interval: &SignInterval<T>,
    opts: &SolverOptions<T>,
) -> Result<SolutionBranch<T>> {
    let reflect = interval.sign_of_a == Sign::Negative;
    let (work, a, b) = if reflect {
        (flip(sys), -interval.b, -interval.a)
    } else {
        (sys.clone(), interval.a, interval.b)
    };
    let za = classify_zero(&work, a);
    let zb = classify_zero(&work, b);
    for z in [&za, &zb] {
        if z.is_focus {
            let t = if reflect { -z.t } else { z.t };
            return Err(Error::FocusAtZero {
                t: t.as_f64(),
                discriminant: z.discriminant.as_f64(),
            });
        }
    }
    let raw = shoot_positive(&work, a, b, &za, &zb, opts.delta, opts)?;
    let mid = (a + b) / T::lit(2.0);
    let value_at = |r: &RawBranch<T>| hermite_lookup(&r.samples, mid).0;
    let seed_sensitivity = if opts.check_seed_sensitivity {
        let half = shoot_positive(&work, a, b, &za, &zb, opts.delta / T::lit(2.0), opts)?;
        Some((value_at(&raw) - value_at(&half)).abs())
    } else {
        None
    };
    let alpha = cone_slope(&work);
    let cone_ordering = (zb.kind == ZeroKind::UnstableNode)
        .then(|| zb.lambda_minus < alpha && alpha < zb.lambda_plus);
    let max_x = raw.samples.iter().map(|s| s.1.abs()).fold(T::zero(), T::max);
    let barrier_certificates = check_lines(normalized_barriers(&work, a, b, max_x), &raw.samples);
    let branch = SolutionBranch {
        interval: SignInterval {
            a,
            b,
            sign_of_a: Sign::Positive,
        },
        samples: raw.samples,
        entry_slope: raw.entry_slope,
        exit_slope: raw.exit_slope,
        seed_offset: raw.seed_offset,
        left_model: raw.left_model,
        right_model: raw.right_model,
        barrier_certificates,
        seed_sensitivity,
        cone_ordering,
        center_manifold: za.kind == ZeroKind::Degenerate || zb.kind == ZeroKind::Degenerate,
    };
    Ok(if reflect {
        branch.reflected(*interval)
    } else {
        branch
    })
}

/// The glued `T`-periodic solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSolution<T> {
    pub period: T,
    /// Zeros of `A` in `[0, T)`, classified with `B` made positive.
    pub zeros: Vec<ZeroOfA<T>>,
    /// Sign of `B`; slopes at the zeros carry this factor.
    pub b_sign: Sign,
    pub branches: Vec<SolutionBranch<T>>,
}

fn same_mod<T: Real>(x: T, y: T, period: T) -> bool {
    let d = x - y;
    (d - (d / period).round() * period).abs() <= T::lit(1e-9) * (T::one() + period)
}

impl<T: Real> PeriodicSolution<T> {
    /// The identically vanishing solution.
    pub fn trivial(period: T) -> Self {
        Self {
            period,
            zeros: Vec::new(),
            b_sign: Sign::Positive,
            branches: Vec::new(),
        }
    }

    /// Expected slope of the solution through the zero `z`.
    pub fn expected_slope(&self, z: &ZeroOfA<T>) -> T {
        match z.kind {
            ZeroKind::Degenerate => T::zero(),
            _ => self.b_sign.factor::<T>() * z.lambda_minus,
        }
    }

    /// `(x*(t), ẋ*(t))`, extended periodically.
    pub fn eval(&self, t: T) -> (T, T) {
        let Some(first) = self.branches.first() else {
            return (T::zero(), T::zero());
        };
        let t0 = first.interval.a;
        let mut r = (t - t0) % self.period;
        if r < T::zero() {
            r += self.period;
        }
        let tau = t0 + r;
        let i = self.branches.partition_point(|br| br.interval.b < tau);
        let snap = T::lit(8.0) * T::epsilon() * (T::one() + tau.abs());
        match self.branches.get(i) {
            // the reduction can land an ulp off a zero, where x* is exactly 0
            Some(br) if (tau - br.interval.b).abs() <= snap => br.eval(br.interval.b),
            Some(br) if (tau - br.interval.a).abs() <= snap => br.eval(br.interval.a),
            Some(br) if br.interval.a <= tau => br.eval(tau),
            _ => (T::zero(), T::zero()),
        }
    }

    pub fn value(&self, t: T) -> T {
        self.eval(t).0
    }

    pub fn uses_center_manifold(&self) -> bool {
        self.branches.iter().any(|b| b.center_manifold)
    }

    pub fn certificates_ok(&self) -> bool {
        self.branches.iter().all(|b| b.certificates_ok())
    }

    /// `t,x,xdot` on `n` uniform points of `[0, T)`.
    pub fn to_csv(&self, n: usize) -> String {
        let mut s = String::from("t,x,xdot\n");
        for k in 0..n {
            let t = self.period * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            let (x, d) = self.eval(t);
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", t.as_f64(), x.as_f64(), d.as_f64());
        }
        s
    }

    /// Zeros, branch diagnostics and certificate verdicts.
    pub fn sidecar(&self) -> String {
        let f = |v: T| format!("{:.16e}", v.as_f64());
        let mut s = String::new();
        let _ = writeln!(s, "period = {}", f(self.period));
        let _ = writeln!(s, "B_sign = {}", self.b_sign);
        let _ = writeln!(s, "zeros = {}", self.zeros.len());
        for z in &self.zeros {
            let _ = writeln!(
                s,
                "zero t = {} kind = {} Adot = {} discriminant = {} lambda_minus = {} lambda_plus = {}",
                f(z.t),
                z.kind,
                f(z.adot),
                f(z.discriminant),
                f(self.b_sign.factor::<T>() * z.lambda_minus),
                f(self.b_sign.factor::<T>() * z.lambda_plus)
            );
        }
        let _ = writeln!(s, "branches = {}", self.branches.len());
        for br in &self.branches {
            let iv = &br.interval;
            let _ = writeln!(
                s,
                "branch a = {} b = {} sign_A = {} samples = {} entry_slope = {} exit_slope = {} seed_offset = {}",
                f(iv.a),
                f(iv.b),
                iv.sign_of_a,
                br.samples.len(),
                f(br.entry_slope),
                f(br.exit_slope),
                f(br.seed_offset)
            );
            if let Some(d) = br.seed_sensitivity {
                let _ = writeln!(s, "  seed_sensitivity = {}", f(d));
            }
            if let Some(c) = br.cone_ordering {
                let _ = writeln!(s, "  cone_ordering = {c}");
            }
            if br.center_manifold {
                let _ = writeln!(s, "  center_manifold_branch_selected = true");
            }
            for (l, ok) in &br.barrier_certificates {
                let _ = writeln!(
                    s,
                    "  barrier slope = {} intercept = {} side = {:?} ok = {}",
                    f(l.slope),
                    f(l.intercept),
                    l.side,
                    ok
                );
            }
        }
        let _ = writeln!(s, "certificates_ok = {}", self.certificates_ok());
        let _ = writeln!(s, "center_manifold_used = {}", self.uses_center_manifold());
        s
    }
}

/// Glues branches into a periodic solution after checking, at every zero,
/// that both adjacent branches arrive with the expected slope.
pub fn assemble<T: Real>(
    mut branches: Vec<SolutionBranch<T>>,
    zeros: Vec<ZeroOfA<T>>,
    period: T,
    b_sign: Sign,
    slope_tolerance: T,
) -> Result<PeriodicSolution<T>> {
    branches.sort_by(|p, q| p.interval.a.partial_cmp(&q.interval.a).unwrap());
    let sol = PeriodicSolution {
        period,
        zeros,
        b_sign,
        branches,
    };
    for z in &sol.zeros {
        let expected = sol.expected_slope(z);
        let left = sol.branches.iter().find(|br| same_mod(br.interval.b, z.t, period));
        let right = sol.branches.iter().find(|br| same_mod(br.interval.a, z.t, period));
        let l = left.map_or(expected, |br| br.exit_slope);
        let r = right.map_or(expected, |br| br.entry_slope);
        if (l - expected).abs() > slope_tolerance || (r - expected).abs() > slope_tolerance {
            return Err(Error::GluingMismatch {
                t: z.t.as_f64(),
                left: l.as_f64(),
                right: r.as_f64(),
                expected: expected.as_f64(),
            });
        }
    }
    Ok(sol)
}

/// Largest `|x ẋ - A - B x - C x²|` on `grid_n` uniform points, skipping
/// points within `1e-6 T` of a zero.
pub fn residual<T: Real>(sys: &AbelSystem<T>, sol: &PeriodicSolution<T>, grid_n: usize) -> T {
    let period = sys.period();
    let n = grid_n.max(1);
    let guard = T::lit(1e-6) * period;
    let mut worst = T::zero();
    for k in 0..n {
        let t = period * T::from_usize_lossy(k) / T::from_usize_lossy(n);
        let near = sol.zeros.iter().any(|z| {
            let d = t - z.t;
            (d - (d / period).round() * period).abs() < guard
        });
        if near {
            continue;
        }
        let (x, d) = sol.eval(t);
        let r = x * d - sys.a.evaluate(t) - sys.b.evaluate(t) * x - sys.c.evaluate(t) * x * x;
        worst = worst.max(r.abs());
    }
    worst
}

/// Full pipeline: conditions, zeros, one branch per sign interval, gluing.
pub fn solve<T: Real>(sys: &AbelSystem<T>, opts: &SolverOptions<T>) -> Result<PeriodicSolution<T>> {
    let report = analyze_conditions(sys);
    if !report.holds_main {
        return Err(Error::ConditionViolated {
            margin: report.margin_main.as_f64(),
        });
    }
    let period = sys.period();
    if sys.a.is_identically_zero(T::lit(1e-14)) {
        return Ok(PeriodicSolution::trivial(period));
    }
    let neg = report.b_sign == Sign::Negative;
    let work = if neg { sys.negate_x() } else { sys.clone() };
    let zeros = find_zeros(&work)?;
    if let Some(z) = zeros.iter().find(|z| z.is_focus) {
        return Err(Error::FocusAtZero {
            t: z.t.as_f64(),
            discriminant: z.discriminant.as_f64(),
        });
    }
    let mut branches = Vec::new();
    for iv in sign_intervals(&zeros, &work) {
        let br = solve_interval(&work, &iv, opts)?;
        branches.push(if neg { br.negated() } else { br });
    }
    assemble(branches, zeros, period, report.b_sign, opts.slope_tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::PeriodicCoefficient;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn normal(sin: Vec<f64>, cos: Vec<f64>, mean: f64) -> AbelSystem<f64> {
        AbelSystem::normal_form(PeriodicCoefficient::new(TAU, mean, cos, sin))
    }

    fn lambda_minus(b: f64, adot: f64) -> f64 {
        b / 2.0 - (b * b / 4.0 + adot).sqrt()
    }

    #[test]
    fn cone_slopes() {
        assert!((cone_slope(&normal(vec![0.1], vec![], 0.0)) - 0.1f64.sqrt()).abs() < 1e-12);
        // 0.1(1 - cos t) still has min Ȧ = -0.1
        assert!((cone_slope(&normal(vec![], vec![-0.1], 0.1)) - 0.1f64.sqrt()).abs() < 1e-12);
        assert_eq!(cone_slope(&normal(vec![], vec![], 0.0)), 0.0);
        let with_c = AbelSystem::new(
            PeriodicCoefficient::new(TAU, 0.0, vec![], vec![0.1]),
            PeriodicCoefficient::constant(TAU, 1.0),
            PeriodicCoefficient::constant(TAU, 0.5),
        )
        .unwrap();
        let want = (0.1 / (1.0 + TAU * 0.5)).sqrt();
        assert!((cone_slope(&with_c) - want).abs() < 1e-12);
    }

    #[test]
    fn series_matches_cubic_zero() {
        // A = 0.025 t³ + O(t⁵) near 0 with B = 1: h₃ = -0.025
        let sys = normal(vec![0.05, -0.025], vec![], 0.0);
        let h = manifold_series(&sys, 0.0, 0.0, 6);
        assert!(h[1].abs() < 1e-15 && h[2].abs() < 1e-15);
        assert!((h[3] + 0.025).abs() < 1e-12, "{h:?}");
        assert!((h[4] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn series_solves_the_equation() {
        let sys = normal(vec![0.1], vec![], 0.0);
        let lm = lambda_minus(1.0, 0.1);
        let model = LocalModel {
            center: 0.0,
            coeffs: manifold_series(&sys, 0.0, lm, 14),
            correction: 0.0,
            exponent: 1.0,
            span: (0.0, 0.1),
        };
        for u in [1e-3, 1e-2, 0.1] {
            let (x, d) = model.eval(u);
            let r = x * d - 0.1 * u.sin() - x;
            assert!(r.abs() < 1e-13, "u={u} r={r}");
        }
    }

    #[test]
    fn seed_points() {
        let sys = normal(vec![0.1], vec![], 0.0);
        let z = classify_zero(&sys, 0.0);
        let (t, x) = seed_point(&sys, &z, 1e-3).unwrap();
        assert_eq!(t, 1e-3);
        assert!((x - lambda_minus(1.0, 0.1) * 1e-3).abs() < 1e-18);
        assert!((x + 9.1608e-5).abs() < 1e-8);

        let deg = normal(vec![0.05, -0.025], vec![], 0.0);
        let (_, x) = seed_point(&deg, &classify_zero(&deg, 0.0), 1e-3).unwrap();
        assert!((x + 2.5e-11).abs() < 1e-14, "{x}");

        let node = classify_zero(&sys, PI);
        assert!(matches!(seed_point(&sys, &node, 1e-3), Err(Error::WrongZeroKind { .. })));
    }

    #[test]
    fn reflection_of_model_is_involutive() {
        let m = LocalModel {
            center: 0.5f64,
            coeffs: vec![0.0, 0.2, -0.3, 0.4],
            correction: 0.7,
            exponent: 3.0,
            span: (0.4, 0.5),
        };
        let r = m.reflected();
        for t in [0.42, 0.47] {
            let (x, d) = m.eval(t);
            let (xr, dr) = r.eval(-t);
            assert!((x + xr).abs() < 1e-15 && (d - dr).abs() < 1e-14);
        }
        assert_eq!(r.reflected(), m);
    }

    #[test]
    fn normal_form_branches() {
        let sys = normal(vec![0.1], vec![], 0.0);
        let sol = solve(&sys, &SolverOptions::default()).unwrap();
        assert_eq!(sol.branches.len(), 2);
        let (b0, b1) = (&sol.branches[0], &sol.branches[1]);
        let lm0 = lambda_minus(1.0, 0.1);
        let lmpi = lambda_minus(1.0, -0.1);
        assert!((b0.entry_slope - lm0).abs() < 1e-3, "{}", b0.entry_slope);
        assert!((b0.exit_slope - lmpi).abs() < 1e-3, "{}", b0.exit_slope);
        assert!((b1.entry_slope - lmpi).abs() < 1e-3);
        assert!((b1.exit_slope - lm0).abs() < 1e-3);
        assert!(b0.samples.iter().all(|s| s.1 < 0.0));
        assert!(b1.samples.iter().all(|s| s.1 > 0.0));
        for br in &sol.branches {
            for &(t, x, d) in &br.samples {
                assert!((d - slope_field(&sys, t, x).unwrap()).abs() < 1e-8);
            }
            assert!(br.certificates_ok());
            assert!(br.seed_sensitivity.unwrap() < 1e-6);
        }
        assert_eq!(b0.cone_ordering, Some(true));
        // odd A: the second branch is the point reflection of the first about (π, 0)
        for t in [0.5, 1.3, 2.9] {
            assert!((sol.value(t) + sol.value(TAU - t)).abs() < 1e-8);
        }
        assert_eq!(b0.barrier_certificates.len(), 3);
        let alpha = b0.barrier_certificates[2].0.slope;
        assert!((alpha - 0.1f64.sqrt()).abs() < 1e-9);
        assert!(residual(&sys, &sol, 4000) < 1e-7);
    }

    #[test]
    fn evaluator_is_periodic_and_vanishes_on_zeros() {
        let sys = normal(vec![0.1], vec![], 0.0);
        let sol = solve(&sys, &SolverOptions::default()).unwrap();
        assert_eq!(sol.value(0.0), 0.0);
        assert_eq!(sol.value(PI), 0.0);
        // t + T is itself rounded, so only the reduction is exact
        for t in [0.3, 2.0, 4.5] {
            assert!((sol.value(t) - sol.value(t + TAU)).abs() < 1e-14);
            assert!((sol.value(t) - sol.value(t - 3.0 * TAU)).abs() < 1e-14);
        }
    }

    #[test]
    fn perturbed_solution_has_large_residual() {
        let sys = normal(vec![0.1], vec![], 0.0);
        let mut sol = solve(&sys, &SolverOptions::default()).unwrap();
        for br in &mut sol.branches {
            for s in &mut br.samples {
                s.1 += 1e-3;
            }
        }
        assert!(residual(&sys, &sol, 4000) > 1e-4);
    }

    #[test]
    fn negative_b_mirrors_the_solution() {
        let sys = normal(vec![0.1], vec![], 0.0);
        let neg = sys.negate_x();
        let opts = SolverOptions::default();
        let s = solve(&sys, &opts).unwrap();
        let n = solve(&neg, &opts).unwrap();
        assert_eq!(n.b_sign, Sign::Negative);
        for t in [0.4, 2.2, 3.9, 5.5] {
            assert!((s.value(t) + n.value(t)).abs() < 1e-12);
        }
        assert!(n.certificates_ok());
        assert!(residual(&neg, &n, 2000) < 1e-7);
    }

    #[test]
    fn degenerate_entry() {
        let sys = normal(vec![0.05, -0.025], vec![], 0.0);
        let sol = solve(&sys, &SolverOptions::default()).unwrap();
        assert!(sol.uses_center_manifold());
        assert!(sol.branches[0].entry_slope.abs() < 1e-3);
        assert!(residual(&sys, &sol, 4000) < 1e-7, "{}", residual(&sys, &sol, 4000));
        assert!(sol.certificates_ok());
    }

    #[test]
    fn tangential_zero_single_branch() {
        let sys = normal(vec![], vec![-0.1], 0.1);
        let sol = solve(&sys, &SolverOptions::default()).unwrap();
        assert_eq!(sol.branches.len(), 1);
        let br = &sol.branches[0];
        assert!(br.entry_slope.abs() < 1e-3 && br.exit_slope.abs() < 1e-3);
        assert!(br.samples.iter().all(|s| s.1 < 0.0));
        assert!(residual(&sys, &sol, 4000) < 1e-7);
    }

    #[test]
    fn trivial_and_failing_systems() {
        let zero = normal(vec![], vec![], 0.0);
        let sol = solve(&zero, &SolverOptions::default()).unwrap();
        assert!(sol.branches.is_empty());
        assert_eq!(residual(&zero, &sol, 100), 0.0);
        assert_eq!(sol.value(1.0), 0.0);

        let focus = normal(vec![0.3], vec![], 0.0);
        assert!(matches!(
            solve(&focus, &SolverOptions::default()),
            Err(Error::ConditionViolated { .. })
        ));
    }

    #[test]
    fn synthetic_escape_fails_certificate() {
        let sys = normal(vec![0.1], vec![], 0.0);
        let mut br = solve(&sys, &SolverOptions::default()).unwrap().branches[0].clone();
        br.samples[10].1 = 0.5;
        let certs = barrier_certificates(&sys, &br);
        assert!(!certs[1].1 && certs[2].1);
        br.samples[10].1 = -2.0;
        let certs = barrier_certificates(&sys, &br);
        assert!(certs[1].1 && !certs[2].1);
    }

    #[test]
    fn certificates_recomputed_in_original_frame() {
        let sys = normal(vec![0.1], vec![], 0.0).negate_x();
        let sol = solve(&sys, &SolverOptions::default()).unwrap();
        for br in &sol.branches {
            assert_eq!(barrier_certificates(&sys, br), br.barrier_certificates);
        }
    }
}
