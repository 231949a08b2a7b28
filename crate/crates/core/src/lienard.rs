//! The planar Liénard system `dt/ds = x`, `dx/ds = A(t) + B(t)x + C(t)x²`,
//! whose orbits are the integral curves of the scalar equation off `x = 0`.

use std::fmt::Write as _;

use crate::coefficients::{AbelSystem, PeriodicCoefficient};
use crate::error::{Error, Result};
use crate::ode::{dp5_step, error_norm, initial_step, step_factor};
use crate::scalar::Real;

/// `ẋ = S(t, x) = A/x + B + Cx`.
pub fn slope_field<T: Real>(sys: &AbelSystem<T>, t: T, x: T) -> Result<T> {
    if x.abs() < T::lit(1e-300).max(T::min_positive_value()) {
        return Err(Error::DivisionAtZero { t: t.as_f64() });
    }
    Ok(sys.a.evaluate(t) / x + sys.b.evaluate(t) + sys.c.evaluate(t) * x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarState<T> {
    pub t: T,
    pub x: T,
    pub s: T,
}

impl<T: Real> PlanarState<T> {
    pub fn new(t: T, x: T) -> Self {
        Self { t, x, s: T::zero() }
    }
}

/// `(dt/ds, dx/ds)`; regular at `x = 0`.
pub fn planar_field<T: Real>(sys: &AbelSystem<T>, state: &PlanarState<T>) -> (T, T) {
    let (t, x) = (state.t, state.x);
    (
        x,
        sys.a.evaluate(t) + sys.b.evaluate(t) * x + sys.c.evaluate(t) * x * x,
    )
}

fn flip_odd<T: Real>(f: &PeriodicCoefficient<T>) -> PeriodicCoefficient<T> {
    // -f(-t): cosine part and mean change sign, sine part is kept
    f.reversed().negated()
}

/// `(t, x) ↦ (-t, -x)`: `Â(t) = -A(-t)`, `B̂(t) = B(-t)`, `Ĉ(t) = -C(-t)`.
pub fn flip<T: Real>(sys: &AbelSystem<T>) -> AbelSystem<T> {
    AbelSystem {
        a: flip_odd(&sys.a),
        b: sys.b.reversed(),
        c: flip_odd(&sys.c),
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCondition<T> {
    /// `t` reached the target exactly.
    TimeReached(T),
    /// `|x|` rose above the ceiling.
    AbsAbove(T),
    /// `|x|` fell below the floor.
    AbsBelow(T),
    /// Accepted step count reached the cap.
    StepCap(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TimeReached,
    AboveCeiling,
    BelowFloor,
    StepCap,
    /// `x` changed sign; past that point `t` would run backwards.
    SignChange,
    /// Started on a critical point of the planar field.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    /// Upper bound on the `t`-increment between consecutive samples.
    pub max_dt: Option<T>,
    /// Hard limit; exceeding it is [`Error::StepCountExceeded`] unless a
    /// [`StopCondition::StepCap`] fires first.
    pub max_steps: usize,
}

impl<T: Real> Default for IntegratorOptions<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-9),
            abs_tol: T::lit(1e-12),
            max_dt: None,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegratorStats<T> {
    pub steps: usize,
    pub rejected: usize,
    pub min_step: T,
}

/// Orbit samples `(t, x)` with strictly increasing `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub samples: Vec<(T, T)>,
    pub stats: IntegratorStats<T>,
    pub stop: StopReason,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> (T, T) {
        *self.samples.last().expect("trajectory has at least one sample")
    }

    /// Linear interpolation in `t`; `None` outside the sampled range.
    pub fn interpolate(&self, t: T) -> Option<T> {
        let s = &self.samples;
        if s.is_empty() || t < s[0].0 || t > s[s.len() - 1].0 {
            return None;
        }
        let i = s.partition_point(|p| p.0 <= t);
        if i == 0 {
            return Some(s[0].1);
        }
        if i >= s.len() {
            return Some(s[s.len() - 1].1);
        }
        let (t0, x0) = s[i - 1];
        let (t1, x1) = s[i];
        Some(x0 + (x1 - x0) * (t - t0) / (t1 - t0))
    }

    /// CSV with header `t,x`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x\n");
        for (t, x) in &self.samples {
            let _ = writeln!(out, "{:.16e},{:.16e}", t.as_f64(), x.as_f64());
        }
        out
    }
}

/// Integrates the planar field from `start` with the `s` direction chosen
/// so that `t` increases (`ds` has the sign of `x`). A start on `x = 0`
/// off a zero of `A` continues into `x > 0` when `A > 0` and cannot move
/// forward in `t` when `A < 0`.
pub fn integrate<T: Real>(
    sys: &AbelSystem<T>,
    start: PlanarState<T>,
    stops: &[StopCondition<T>],
    opts: &IntegratorOptions<T>,
) -> Result<Trajectory<T>> {
    let mut samples = vec![(start.t, start.x)];
    let mut stats = IntegratorStats {
        steps: 0,
        rejected: 0,
        min_step: T::infinity(),
    };
    let finish = |samples, stats, stop| Ok(Trajectory { samples, stats, stop });

    let (_, dx0) = planar_field(sys, &start);
    if start.x == T::zero() && dx0 == T::zero() {
        return finish(samples, stats, StopReason::Stationary);
    }
    if start.x == T::zero() && dx0 < T::zero() {
        return finish(samples, stats, StopReason::SignChange);
    }
    let dir = if start.x < T::zero() { -T::one() } else { T::one() };
    let field = |_s: T, y: &[T; 2]| {
        let (dt, dx) = planar_field(sys, &PlanarState::new(y[0], y[1]));
        [dir * dt, dir * dx]
    };

    let target = stops.iter().find_map(|c| match c {
        StopCondition::TimeReached(t) => Some(*t),
        _ => None,
    });
    if let Some(tt) = target {
        if start.t >= tt {
            return finish(samples, stats, StopReason::TimeReached);
        }
    }
    let cap = stops.iter().find_map(|c| match c {
        StopCondition::StepCap(n) => Some(*n),
        _ => None,
    });

    let (rtol, atol) = (opts.rel_tol, opts.abs_tol);
    let mut s = start.s;
    let mut y = [start.t, start.x];
    let mut f0 = field(s, &y);
    let clamp = |h: T, x: T| match opts.max_dt {
        Some(dt) if x != T::zero() => h.min(dt / x.abs()),
        _ => h,
    };
    let mut h = clamp(initial_step(&y, &f0, rtol, atol), y[1]);

    loop {
        if let Some(n) = cap {
            if stats.steps >= n {
                return finish(samples, stats, StopReason::StepCap);
            }
        }
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::StepCountExceeded {
                steps: opts.max_steps,
                t: y[0].as_f64(),
            });
        }
        let step = dp5_step(&field, s, &y, &f0, h);
        let err = error_norm(&y, &step.y, &step.err, rtol, atol);
        if !(err <= T::one()) || !step.y[1].is_finite() {
            stats.rejected += 1;
            h *= if err.is_finite() { step_factor(err) } else { T::lit(0.2) };
            if h <= T::min_positive_value()
                || (y[0] + h * f0[0] == y[0] && y[1] + h * f0[1] == y[1])
            {
                return Err(Error::StepSizeUnderflow {
                    t: y[0].as_f64(),
                    x: y[1].as_f64(),
                });
            }
            continue;
        }
        stats.steps += 1;
        stats.min_step = stats.min_step.min(h);
        let mut next = step.y;

        if dir * next[1] <= T::zero() {
            return finish(samples, stats, StopReason::SignChange);
        }

        if let Some(tt) = target {
            if next[0] >= tt {
                // Newton on the step length so the step lands on t = tt.
                let mut hn = h * (tt - y[0]) / (next[0] - y[0]);
                for _ in 0..12 {
                    let trial = dp5_step(&field, s, &y, &f0, hn);
                    let g = trial.y[0] - tt;
                    next = trial.y;
                    if g.abs() <= T::lit(4.0) * T::epsilon() * (T::one() + tt.abs()) {
                        break;
                    }
                    hn -= g / trial.f_end[0];
                }
                samples.push((tt, next[1]));
                stats.min_step = stats.min_step.min(hn);
                return finish(samples, stats, StopReason::TimeReached);
            }
        }
        if !(next[0] > y[0]) {
            return finish(samples, stats, StopReason::SignChange);
        }
        samples.push((next[0], next[1]));
        s += h;
        y = next;
        f0 = step.f_end;

        for c in stops {
            match *c {
                StopCondition::AbsAbove(m) if y[1].abs() > m => {
                    return finish(samples, stats, StopReason::AboveCeiling)
                }
                StopCondition::AbsBelow(m) if y[1].abs() < m => {
                    return finish(samples, stats, StopReason::BelowFloor)
                }
                _ => {}
            }
        }
        h = clamp(h * step_factor(err), y[1]);
    }
}

/// Raw integration of the planar field in `s` up to `s_end` (which may be
/// negative), without any orientation normalisation. Used to trace orbits
/// that wind around a focus.
pub fn integrate_orbit<T: Real>(
    sys: &AbelSystem<T>,
    start: PlanarState<T>,
    s_end: T,
    opts: &IntegratorOptions<T>,
) -> Result<Vec<PlanarState<T>>> {
    let sgn = if s_end < start.s { -T::one() } else { T::one() };
    let field = |_s: T, y: &[T; 2]| {
        let (dt, dx) = planar_field(sys, &PlanarState::new(y[0], y[1]));
        [sgn * dt, sgn * dx]
    };
    let span = (s_end - start.s).abs();
    let mut out = vec![start];
    let mut y = [start.t, start.x];
    let mut f0 = field(T::zero(), &y);
    let mut tau = T::zero();
    let mut h = initial_step(&y, &f0, opts.rel_tol, opts.abs_tol).min(span);
    let mut count = 0usize;
    while tau < span {
        count += 1;
        if count > opts.max_steps {
            return Err(Error::StepCountExceeded {
                steps: opts.max_steps,
                t: y[0].as_f64(),
            });
        }
        h = h.min(span - tau);
        let step = dp5_step(&field, tau, &y, &f0, h);
        let err = error_norm(&y, &step.y, &step.err, opts.rel_tol, opts.abs_tol);
        if !(err <= T::one()) {
            h *= step_factor(if err.is_finite() { err } else { T::lit(1e10) });
            if h <= T::min_positive_value() {
                return Err(Error::StepSizeUnderflow {
                    t: y[0].as_f64(),
                    x: y[1].as_f64(),
                });
            }
            continue;
        }
        tau += h;
        y = step.y;
        f0 = step.f_end;
        out.push(PlanarState {
            t: y[0],
            x: y[1],
            s: start.s + sgn * tau,
        });
        h *= step_factor(err);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Above,
    Below,
}

/// The line `x = m t + n` on `[t1, t2)`, with the side trajectories are
/// required to stay on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineBarrier<T> {
    pub slope: T,
    pub intercept: T,
    pub side: Side,
    pub t_range: (T, T),
}

impl<T: Real> LineBarrier<T> {
    pub fn new(slope: T, intercept: T, side: Side, t_range: (T, T)) -> Self {
        assert!(t_range.0 < t_range.1, "barrier range must be nonempty");
        Self {
            slope,
            intercept,
            side,
            t_range,
        }
    }

    pub fn value(&self, t: T) -> T {
        self.slope * t + self.intercept
    }

    /// Signed distance to the wrong side; positive means violated.
    pub fn violation(&self, t: T, x: T) -> T {
        match self.side {
            Side::Above => self.value(t) - x,
            Side::Below => x - self.value(t),
        }
    }

    /// Image under `(t, x) ↦ (-t, -x)`.
    pub fn reflected(&self) -> Self {
        Self {
            slope: self.slope,
            intercept: -self.intercept,
            side: match self.side {
                Side::Above => Side::Below,
                Side::Below => Side::Above,
            },
            t_range: (-self.t_range.1, -self.t_range.0),
        }
    }

    /// Image under `x ↦ -x`.
    pub fn negated(&self) -> Self {
        Self {
            slope: -self.slope,
            intercept: -self.intercept,
            side: match self.side {
                Side::Above => Side::Below,
                Side::Below => Side::Above,
            },
            t_range: self.t_range,
        }
    }
}

/// Slack allowed on the wrong side of a barrier.
pub const BARRIER_SLACK: f64 = 1e-9;

/// `(ok, worst_violation)` over the samples falling in the barrier range.
pub fn barrier_check_samples<T: Real>(samples: &[(T, T)], barrier: &LineBarrier<T>) -> (bool, T) {
    let (t1, t2) = barrier.t_range;
    let worst = samples
        .iter()
        .filter(|(t, _)| *t >= t1 && *t < t2)
        .map(|&(t, x)| barrier.violation(t, x))
        .fold(T::neg_infinity(), T::max);
    (worst <= T::lit(BARRIER_SLACK), worst)
}

pub fn barrier_check<T: Real>(traj: &Trajectory<T>, barrier: &LineBarrier<T>) -> (bool, T) {
    barrier_check_samples(&traj.samples, barrier)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn normal(eps: f64) -> AbelSystem<f64> {
        AbelSystem::normal_form(PeriodicCoefficient::new(2.0 * PI, 0.0, vec![], vec![eps]))
    }

    fn reference() -> AbelSystem<f64> {
        let p = 2.0 * PI;
        AbelSystem::new(
            PeriodicCoefficient::zero(p),
            PeriodicCoefficient::constant(p, 1.0),
            PeriodicCoefficient::zero(p),
        )
        .unwrap()
    }

    #[test]
    fn slope_field_examples() {
        let sys = normal(0.1);
        assert!((slope_field(&sys, PI / 2.0, -1.0).unwrap() - 0.9).abs() < 1e-15);
        assert!((slope_field(&sys, 0.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            slope_field(&sys, 1.0, 0.0),
            Err(Error::DivisionAtZero { .. })
        ));
    }

    #[test]
    fn planar_field_examples() {
        let sys = normal(0.1);
        assert_eq!(planar_field(&sys, &PlanarState::new(0.0, 0.0)), (0.0, 0.0));
        let (dt, dx) = planar_field(&sys, &PlanarState::new(PI / 2.0, -1.0));
        assert_eq!(dt, -1.0);
        assert!((dx + 0.9).abs() < 1e-15);
        assert_eq!(planar_field(&reference(), &PlanarState::new(3.0, 1.0)), (1.0, 1.0));
    }

    #[test]
    fn flip_examples() {
        let sys = AbelSystem::new(
            PeriodicCoefficient::new(2.0, 0.1, vec![0.2], vec![0.3]),
            PeriodicCoefficient::new(2.0, 1.0, vec![0.1], vec![-0.2]),
            PeriodicCoefficient::new(2.0, 0.05, vec![0.01], vec![0.02]),
        )
        .unwrap();
        assert_eq!(flip(&flip(&sys)), sys);
        let f = flip(&sys);
        for t in [0.3f64, 1.1] {
            assert!((f.a.evaluate(t) + sys.a.evaluate(-t)).abs() < 1e-15);
            assert!((f.b.evaluate(t) - sys.b.evaluate(-t)).abs() < 1e-15);
            assert!((f.c.evaluate(t) + sys.c.evaluate(-t)).abs() < 1e-15);
        }
        let n = normal(0.1);
        let fa = flip(&n).a;
        assert!((fa.evaluate(1.0) - 0.1 * 1f64.sin()).abs() < 1e-15);
        assert!(flip(&n).c.is_identically_zero(0.0));
    }

    #[test]
    fn stationary_at_critical_point() {
        let tr = integrate(
            &normal(0.1),
            PlanarState::new(0.0, 0.0),
            &[StopCondition::TimeReached(1.0)],
            &IntegratorOptions::default(),
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::Stationary);
        assert_eq!(tr.samples, vec![(0.0, 0.0)]);
    }

    #[test]
    fn reference_problem_is_linear() {
        // ẋ = 1 with x(0) = 1 gives x = 1 + t
        let tr = integrate(
            &reference(),
            PlanarState::new(0.0, 1.0),
            &[StopCondition::TimeReached(1.0)],
            &IntegratorOptions::default(),
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::TimeReached);
        let worst = tr
            .samples
            .iter()
            .map(|(t, x)| (x - 1.0 - t).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "worst {worst}");
        assert_eq!(tr.last().0, 1.0);
    }

    #[test]
    fn error_tracks_tolerance() {
        // x ẋ = 1 + x² with x(0) = 1 gives x = sqrt(2 e^{2t} - 1)
        let sys = AbelSystem::new(
            PeriodicCoefficient::constant(2.0 * PI, 1.0),
            PeriodicCoefficient::zero(2.0 * PI),
            PeriodicCoefficient::constant(2.0 * PI, 1.0),
        )
        .unwrap();
        let error = |tol: f64| {
            let opts = IntegratorOptions {
                rel_tol: tol,
                abs_tol: tol * 1e-3,
                ..IntegratorOptions::default()
            };
            let tr = integrate(&sys, PlanarState::new(0.0, 1.0), &[StopCondition::TimeReached(1.0)], &opts).unwrap();
            tr.samples
                .iter()
                .map(|(t, x)| (x - (2.0 * (2.0 * t).exp() - 1.0).sqrt()).abs())
                .fold(0.0, f64::max)
        };
        let errs: Vec<f64> = [1e-4, 1e-6, 1e-8, 1e-10].into_iter().map(error).collect();
        for (w, tol) in errs.windows(2).zip([1e-4, 1e-6, 1e-8]) {
            assert!(w[0] > 10.0 * w[1], "{errs:?}");
            assert!(w[0] < 100.0 * tol, "{errs:?}");
        }
    }

    #[test]
    fn stays_in_cone_on_first_interval() {
        let sys = normal(0.1);
        let alpha = 0.1f64.sqrt();
        let lm = 0.5 - (0.25f64 + 0.1).sqrt();
        let tr = integrate(
            &sys,
            PlanarState::new(0.01, lm * 0.01),
            &[StopCondition::TimeReached(PI - 0.01)],
            &IntegratorOptions::default(),
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::TimeReached);
        for w in tr.samples.windows(2) {
            assert!(w[1].0 > w[0].0, "t must increase for x < 0");
        }
        for &(t, x) in &tr.samples {
            assert!(x < 0.0 && x > alpha * (t - PI), "({t}, {x}) leaves the cone");
        }
        let barrier = LineBarrier::new(alpha, -alpha * PI, Side::Above, (0.0, PI));
        assert!(barrier_check(&tr, &barrier).0);
    }

    #[test]
    fn positive_start_stays_positive() {
        let tr = integrate(
            &normal(0.1),
            PlanarState::new(0.0, 1.0),
            &[StopCondition::TimeReached(2.0 * PI)],
            &IntegratorOptions::default(),
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::TimeReached);
        assert!(tr.samples.iter().all(|&(_, x)| x > 0.0));
    }

    #[test]
    fn sign_change_stops() {
        // x < 0 where A < 0: the orbit rises into x = 0
        let tr = integrate(
            &normal(1.0),
            PlanarState::new(4.0, -0.01),
            &[StopCondition::TimeReached(6.0)],
            &IntegratorOptions::default(),
        )
        .unwrap();
        assert_eq!(tr.stop, StopReason::SignChange);
        for w in tr.samples.windows(2) {
            assert!(w[1].0 > w[0].0);
        }
    }

    #[test]
    fn ceiling_and_floor() {
        let opts = IntegratorOptions::default();
        let tr = integrate(&reference(), PlanarState::new(0.0, 1.0), &[StopCondition::AbsAbove(2.0)], &opts)
            .unwrap();
        assert_eq!(tr.stop, StopReason::AboveCeiling);
        assert!(tr.last().1 > 2.0);
        let tr = integrate(&reference(), PlanarState::new(0.0, 1.0), &[StopCondition::StepCap(3)], &opts)
            .unwrap();
        assert_eq!(tr.stop, StopReason::StepCap);
        assert_eq!(tr.stats.steps, 3);
    }

    #[test]
    fn step_limit_is_an_error() {
        let opts = IntegratorOptions {
            max_steps: 2,
            ..IntegratorOptions::default()
        };
        let r = integrate(&reference(), PlanarState::new(0.0, 1.0), &[StopCondition::TimeReached(100.0)], &opts);
        assert!(matches!(r, Err(Error::StepCountExceeded { .. })));
    }

    #[test]
    fn max_dt_bounds_sample_spacing() {
        let opts = IntegratorOptions {
            max_dt: Some(0.01),
            ..IntegratorOptions::default()
        };
        let tr = integrate(&reference(), PlanarState::new(0.0, 1.0), &[StopCondition::TimeReached(1.0)], &opts)
            .unwrap();
        for w in tr.samples.windows(2) {
            assert!(w[1].0 - w[0].0 <= 0.0101);
        }
    }

    #[test]
    fn barrier_examples() {
        let samples = vec![(0.0, 1.0), (0.5, 1.2), (1.0, 1.1)];
        let line = LineBarrier::new(0.0, 0.5, Side::Above, (0.0, 2.0));
        let (ok, worst) = barrier_check_samples(&samples, &line);
        assert!(ok && worst <= 0.0);
        let crossing = vec![(0.0, 1.0), (0.5, 0.2), (1.0, 1.1)];
        let (ok, worst) = barrier_check_samples(&crossing, &line);
        assert!(!ok && worst > 0.0);
        // translated outward still passes
        let lower = LineBarrier::new(0.0, 0.1, Side::Above, (0.0, 2.0));
        assert!(barrier_check_samples(&samples, &lower).0);
        // reflection maps samples and barrier consistently
        let refl: Vec<_> = samples.iter().map(|&(t, x)| (-t, -x)).collect();
        let r = line.reflected();
        assert!(barrier_check_samples(&refl, &LineBarrier { t_range: (-2.0, 0.0 + 1e-12), ..r }).0);
    }

    #[test]
    fn orbit_winds_around_focus() {
        let sys = normal(0.3);
        let st = integrate_orbit(&sys, PlanarState::new(PI, 1e-3), -60.0, &IntegratorOptions::default())
            .unwrap();
        let changes = st.windows(2).filter(|w| (w[0].x < 0.0) != (w[1].x < 0.0)).count();
        assert!(changes >= 2, "{changes}");
        assert!(st.last().unwrap().x.abs() < 1e-3);
    }
}
