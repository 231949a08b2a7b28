//! Periodic coefficient functions as finite Fourier series.
//!
//! A [`PeriodicCoefficient`] is
//! `f(t) = mean + Σ_k [cos_k · cos(kωt) + sin_k · sin(kωt)]`, `ω = 2π/T`,
//! which gives exact derivatives of every order, exact period integrals
//! and an exact reflection `t ↦ -t`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default number of grid points per period for extremum searches.
pub const DEFAULT_EXTREMUM_GRID: usize = 4096;

/// Default number of harmonics kept when re-projecting in [`normalize`].
pub const DEFAULT_PROJECTION_HARMONICS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

/// A `C^∞`, `T`-periodic scalar function given by a finite Fourier series.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCoefficient<T> {
    period: T,
    mean: T,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Real> PeriodicCoefficient<T> {
    /// Panics if `period` is not strictly positive and finite.
    pub fn new(period: T, mean: T, cos: Vec<T>, sin: Vec<T>) -> Self {
        assert!(
            period > T::zero() && period.is_finite(),
            "period must be positive and finite"
        );
        Self {
            period,
            mean,
            cos,
            sin,
        }
    }

    pub fn constant(period: T, value: T) -> Self {
        Self::new(period, value, Vec::new(), Vec::new())
    }

    pub fn zero(period: T) -> Self {
        Self::constant(period, T::zero())
    }

    pub fn period(&self) -> T {
        self.period
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn cos_coeffs(&self) -> &[T] {
        &self.cos
    }

    pub fn sin_coeffs(&self) -> &[T] {
        &self.sin
    }

    /// Highest harmonic index carried by the series.
    pub fn harmonics(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    /// Angular frequency `2π/T` of the fundamental.
    pub fn omega(&self) -> T {
        T::lit(2.0) * T::PI() / self.period
    }

    fn coeff(v: &[T], k: usize) -> T {
        v.get(k).copied().unwrap_or_else(T::zero)
    }

    pub fn evaluate(&self, t: T) -> T {
        self.nth_derivative(t, 0)
    }

    pub fn derivative_at(&self, t: T) -> T {
        self.nth_derivative(t, 1)
    }

    /// `n`-th derivative of the series at `t`, differentiated term by term.
    pub fn nth_derivative(&self, t: T, n: u32) -> T {
        let w = self.omega();
        let mut acc = if n == 0 { self.mean } else { T::zero() };
        for k in 1..=self.harmonics() {
            let a = Self::coeff(&self.cos, k - 1);
            let b = Self::coeff(&self.sin, k - 1);
            if a == T::zero() && b == T::zero() {
                continue;
            }
            let kw = T::from_usize_lossy(k) * w;
            let (s, c) = (kw * t).sin_cos();
            // d^n/dθ^n of (a cos θ + b sin θ) cycles with period 4.
            let term = match n % 4 {
                0 => a * c + b * s,
                1 => -a * s + b * c,
                2 => -a * c - b * s,
                _ => a * s - b * c,
            };
            acc += kw.powi(n as i32) * term;
        }
        acc
    }

    /// Taylor coefficients `f^(n)(t)/n!` for `n = 0..=order`.
    pub fn taylor(&self, t: T, order: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(order + 1);
        let mut factorial = T::one();
        for n in 0..=order {
            if n > 0 {
                factorial *= T::from_usize_lossy(n);
            }
            out.push(self.nth_derivative(t, n as u32) / factorial);
        }
        out
    }

    /// `∫_0^T f(t) dt`; every harmonic integrates to zero.
    pub fn period_integral(&self) -> T {
        self.mean * self.period
    }

    /// The exact derivative as a new series.
    pub fn derivative(&self) -> Self {
        let w = self.omega();
        let n = self.harmonics();
        let mut cos = Vec::with_capacity(n);
        let mut sin = Vec::with_capacity(n);
        for k in 1..=n {
            let kw = T::from_usize_lossy(k) * w;
            cos.push(kw * Self::coeff(&self.sin, k - 1));
            sin.push(-kw * Self::coeff(&self.cos, k - 1));
        }
        Self::new(self.period, T::zero(), cos, sin)
    }

    /// `t ↦ f(-t)`: sine terms change sign.
    pub fn reversed(&self) -> Self {
        Self::new(
            self.period,
            self.mean,
            self.cos.clone(),
            self.sin.iter().map(|&b| -b).collect(),
        )
    }

    pub fn negated(&self) -> Self {
        self.scaled(-T::one())
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self::new(
            self.period,
            self.mean * factor,
            self.cos.iter().map(|&a| a * factor).collect(),
            self.sin.iter().map(|&b| b * factor).collect(),
        )
    }

    /// True if every coefficient is below `tol` in magnitude.
    pub fn is_identically_zero(&self, tol: T) -> bool {
        self.mean.abs() <= tol
            && self.cos.iter().all(|a| a.abs() <= tol)
            && self.sin.iter().all(|b| b.abs() <= tol)
    }

    /// Least-squares projection of `f` onto `harmonics` harmonics using
    /// `samples` equispaced points (discrete Fourier transform).
    pub fn project<F: Fn(T) -> T>(period: T, harmonics: usize, samples: usize, f: F) -> Self {
        let samples = samples.max(2 * harmonics + 2);
        let n = T::from_usize_lossy(samples);
        let h = period / n;
        let values: Vec<T> = (0..samples)
            .map(|i| f(T::from_usize_lossy(i) * h))
            .collect();
        let w = T::lit(2.0) * T::PI() / period;
        let mean = values.iter().fold(T::zero(), |acc, &v| acc + v) / n;
        let two = T::lit(2.0);
        let mut cos = Vec::with_capacity(harmonics);
        let mut sin = Vec::with_capacity(harmonics);
        for k in 1..=harmonics {
            let kw = T::from_usize_lossy(k) * w;
            let (mut ca, mut sa) = (T::zero(), T::zero());
            for (i, &v) in values.iter().enumerate() {
                let (s, c) = (kw * T::from_usize_lossy(i) * h).sin_cos();
                ca += v * c;
                sa += v * s;
            }
            cos.push(two * ca / n);
            sin.push(two * sa / n);
        }
        Self::new(period, mean, cos, sin)
    }

    /// Global extremum of `f` over one period.
    pub fn global_extremum(&self, kind: Extremum) -> (T, T) {
        extremum_over_period(self.period, DEFAULT_EXTREMUM_GRID, kind, |t| self.evaluate(t))
    }

    /// Global extremum of `|f|` over one period.
    pub fn abs_extremum(&self, kind: Extremum) -> (T, T) {
        extremum_over_period(self.period, DEFAULT_EXTREMUM_GRID, kind, |t| {
            self.evaluate(t).abs()
        })
    }

    /// Global extremum of `f'` over one period.
    pub fn derivative_extremum(&self, kind: Extremum) -> (T, T) {
        extremum_over_period(self.period, DEFAULT_EXTREMUM_GRID, kind, |t| {
            self.derivative_at(t)
        })
    }
}

/// Dense-grid search over `[0, T)` followed by golden-section refinement
/// around every grid-local candidate. Returns `(t*, g(t*))`.
pub fn extremum_over_period<T: Real, G: Fn(T) -> T>(
    period: T,
    grid: usize,
    kind: Extremum,
    g: G,
) -> (T, T) {
    let grid = grid.max(8);
    let sign = match kind {
        Extremum::Min => T::one(),
        Extremum::Max => -T::one(),
    };
    let h = period / T::from_usize_lossy(grid);
    let values: Vec<T> = (0..grid)
        .map(|i| sign * g(T::from_usize_lossy(i) * h))
        .collect();
    let mut best = (T::zero(), values[0]);
    for i in 0..grid {
        let prev = values[(i + grid - 1) % grid];
        let next = values[(i + 1) % grid];
        let v = values[i];
        if v <= prev && v <= next {
            let ti = T::from_usize_lossy(i) * h;
            let (t, val) = golden_min(ti - h, ti + h, |t| sign * g(t));
            let (t, val) = if val <= v { (t, val) } else { (ti, v) };
            if val < best.1 {
                best = (t, val);
            }
        }
    }
    let t = best.0 - period * (best.0 / period).floor();
    (t, sign * best.1)
}

/// Golden-section minimisation of a unimodal `f` on `[lo, hi]`.
pub fn golden_min<T: Real, F: Fn(T) -> T>(mut lo: T, mut hi: T, f: F) -> (T, T) {
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (hi - lo).abs() <= T::epsilon() * (T::one() + lo.abs() + hi.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// The normalized equation `x ẋ = A(t) + B(t) x + C(t) x²`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbelSystem<T> {
    pub a: PeriodicCoefficient<T>,
    pub b: PeriodicCoefficient<T>,
    pub c: PeriodicCoefficient<T>,
}

fn same_period<T: Real>(p: T, q: T) -> bool {
    (p - q).abs() <= T::lit(1e-12) * p.abs().max(q.abs())
}

impl<T: Real> AbelSystem<T> {
    pub fn new(
        a: PeriodicCoefficient<T>,
        b: PeriodicCoefficient<T>,
        c: PeriodicCoefficient<T>,
    ) -> Result<Self> {
        if !same_period(a.period(), b.period()) || !same_period(a.period(), c.period()) {
            return Err(Error::PeriodMismatch);
        }
        Ok(Self { a, b, c })
    }

    /// `x ẋ = A(t) + x` with the given `A`.
    pub fn normal_form(a: PeriodicCoefficient<T>) -> Self {
        let period = a.period();
        Self {
            a,
            b: PeriodicCoefficient::constant(period, T::one()),
            c: PeriodicCoefficient::zero(period),
        }
    }

    pub fn period(&self) -> T {
        self.a.period()
    }

    /// `x ↦ -x`, which maps `B` to `-B` and leaves `A`, `C` unchanged.
    pub fn negate_x(&self) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.negated(),
            c: self.c.clone(),
        }
    }
}

/// `[b0(t) + b1(t) x] ẋ = a0(t) + a1(t) x + a2(t) x²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralAbelSystem<T> {
    pub a0: PeriodicCoefficient<T>,
    pub a1: PeriodicCoefficient<T>,
    pub a2: PeriodicCoefficient<T>,
    pub b0: PeriodicCoefficient<T>,
    pub b1: PeriodicCoefficient<T>,
}

impl<T: Real> GeneralAbelSystem<T> {
    pub fn new(
        a0: PeriodicCoefficient<T>,
        a1: PeriodicCoefficient<T>,
        a2: PeriodicCoefficient<T>,
        b0: PeriodicCoefficient<T>,
        b1: PeriodicCoefficient<T>,
    ) -> Result<Self> {
        let p = a0.period();
        if [&a1, &a2, &b0, &b1]
            .iter()
            .any(|f| !same_period(p, f.period()))
        {
            return Err(Error::PeriodMismatch);
        }
        Ok(Self { a0, a1, a2, b0, b1 })
    }

    pub fn period(&self) -> T {
        self.a0.period()
    }

    /// Right-hand side `ẋ` of the general equation.
    pub fn velocity(&self, t: T, x: T) -> T {
        let num = self.a0.evaluate(t) + self.a1.evaluate(t) * x + self.a2.evaluate(t) * x * x;
        num / (self.b0.evaluate(t) + self.b1.evaluate(t) * x)
    }

    /// Exact normalized coefficients at `t` (before projection).
    pub fn normalized_at(&self, t: T) -> (T, T, T) {
        let (a0, a1, a2) = (
            self.a0.evaluate(t),
            self.a1.evaluate(t),
            self.a2.evaluate(t),
        );
        let (b0, b1) = (self.b0.evaluate(t), self.b1.evaluate(t));
        let beta = b0 / b1;
        let beta_dot =
            (self.b0.derivative_at(t) * b1 - b0 * self.b1.derivative_at(t)) / (b1 * b1);
        let a = (a0 - a1 * beta + a2 * beta * beta) / b1;
        let b = (a1 - T::lit(2.0) * a2 * beta + b1 * beta_dot) / b1;
        let c = a2 / b1;
        (a, b, c)
    }

    /// The shift `β = b0/b1` relating the two unknowns, `y = x + β`.
    pub fn shift_at(&self, t: T) -> T {
        self.b0.evaluate(t) / self.b1.evaluate(t)
    }
}

/// Output of [`normalize`]: the projected system plus the largest
/// pointwise projection error over `A`, `B`, `C`.
#[derive(Debug, Clone)]
pub struct NormalizedSystem<T> {
    pub system: AbelSystem<T>,
    pub residual: T,
}

/// Recasts the general equation through `y = x + b0/b1` and re-projects
/// the resulting coefficients onto `harmonics` harmonics.
pub fn normalize<T: Real>(
    g: &GeneralAbelSystem<T>,
    harmonics: usize,
    min_b1: T,
) -> Result<NormalizedSystem<T>> {
    let (_, b1_min) = g.b1.abs_extremum(Extremum::Min);
    if b1_min < min_b1 {
        return Err(Error::DegenerateLeadingCoefficient {
            min_abs_b1: b1_min.as_f64(),
        });
    }
    let period = g.period();
    let samples = 8 * harmonics.max(32);
    let a = PeriodicCoefficient::project(period, harmonics, samples, |t| g.normalized_at(t).0);
    let b = PeriodicCoefficient::project(period, harmonics, samples, |t| g.normalized_at(t).1);
    let c = PeriodicCoefficient::project(period, harmonics, samples, |t| g.normalized_at(t).2);

    // Residual on the staggered grid, away from the projection nodes.
    let check = 4 * samples;
    let h = period / T::from_usize_lossy(check);
    let mut residual = T::zero();
    for i in 0..check {
        let t = (T::from_usize_lossy(i) + T::lit(0.5)) * h;
        let (ea, eb, ec) = g.normalized_at(t);
        residual = residual
            .max((a.evaluate(t) - ea).abs())
            .max((b.evaluate(t) - eb).abs())
            .max((c.evaluate(t) - ec).abs());
    }
    Ok(NormalizedSystem {
        system: AbelSystem { a, b, c },
        residual,
    })
}
