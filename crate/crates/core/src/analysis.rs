//! Numerical evidence for the qualitative results: instability of the
//! sign-changing solution, uniqueness by shooting, sharpness of the focus
//! condition, and a Poincaré scan of the first-kind equation for
//! constant-sign solutions.

use std::fmt::Write as _;

use crate::coefficients::AbelSystem;
use crate::conditions::{classify_zero, find_zeros, Sign, SignInterval, ZeroOfA};
use crate::construction::PeriodicSolution;
use crate::error::{Error, Result};
use crate::lienard::{
    flip, integrate, integrate_orbit, IntegratorOptions, PlanarState, StopCondition, StopReason,
    Trajectory,
};
use crate::ode::{dp5_step, error_norm, initial_step, step_factor};
use crate::scalar::Real;

/// Threshold on `|u|` beyond which a first-kind solution counts as blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e8;
/// Discriminants closer to zero than this are reported as boundary cases.
pub const DISCRIMINANT_TOLERANCE: f64 = 1e-10;

fn fmt<T: Real>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

/// The system and interval after making `B > 0` and `A > 0` on the
/// interval, with the maps back to the original frame.
struct Frame<T> {
    sys: AbelSystem<T>,
    a: T,
    b: T,
    negate: bool,
    reflect: bool,
}

impl<T: Real> Frame<T> {
    fn new(sys: &AbelSystem<T>, interval: &SignInterval<T>) -> Self {
        let negate = sys.b.evaluate(T::zero()) < T::zero();
        let work = if negate { sys.negate_x() } else { sys.clone() };
        let reflect = interval.sign_of_a == Sign::Negative;
        if reflect {
            Self {
                sys: flip(&work),
                a: -interval.b,
                b: -interval.a,
                negate,
                reflect,
            }
        } else {
            Self {
                sys: work,
                a: interval.a,
                b: interval.b,
                negate,
                reflect,
            }
        }
    }

    fn to_original(&self, (t, x): (T, T)) -> (T, T) {
        let (t, x) = if self.reflect { (-t, -x) } else { (t, x) };
        (t, if self.negate { -x } else { x })
    }

    fn map_samples(&self, samples: &[(T, T)]) -> Vec<(T, T)> {
        let mut out: Vec<(T, T)> = samples.iter().map(|&p| self.to_original(p)).collect();
        if self.reflect {
            out.reverse();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityWitness<T> {
    pub interval: SignInterval<T>,
    /// Initial perturbation at the normalised left endpoint.
    pub x_a: T,
    /// Perturbed solution in the original frame.
    pub trajectory: Trajectory<T>,
    pub separation_ok: bool,
    /// Smallest `|x - x*| - |x*|` over the compared samples.
    pub separation_margin: T,
    /// `min S` over the interval, `S = A/x_a + B + C x_a` (normalised frame).
    pub positivity_margin: T,
    pub positivity_ok: bool,
}

impl<T: Real> InstabilityWitness<T> {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "interval = [{}, {}]", fmt(self.interval.a), fmt(self.interval.b));
        let _ = writeln!(s, "sign_A = {}", self.interval.sign_of_a);
        let _ = writeln!(s, "x_a = {}", fmt(self.x_a));
        let _ = writeln!(s, "samples = {}", self.trajectory.samples.len());
        let _ = writeln!(s, "stop = {:?}", self.trajectory.stop);
        let _ = writeln!(s, "positivity_margin = {}", fmt(self.positivity_margin));
        let _ = writeln!(s, "positivity_ok = {}", self.positivity_ok);
        let _ = writeln!(s, "separation_margin = {}", fmt(self.separation_margin));
        let _ = writeln!(s, "separation_ok = {}", self.separation_ok);
        s
    }

    /// `t,x,x_star` per trajectory sample.
    pub fn to_csv(&self, sol: &PeriodicSolution<T>) -> String {
        let mut s = String::from("t,x,x_star\n");
        for &(t, x) in &self.trajectory.samples {
            let _ = writeln!(s, "{},{},{}", fmt(t), fmt(x), fmt(sol.value(t)));
        }
        s
    }
}

/// A perturbation size well inside the admissible range: a tenth of the
/// cone width `α (b-a)/2` at the interval midpoint, at most `0.1`, and
/// `1e-3` when the cone is flat.
pub fn default_perturbation<T: Real>(sys: &AbelSystem<T>, interval: &SignInterval<T>) -> T {
    let alpha = crate::construction::cone_slope(sys);
    if alpha > T::zero() {
        (T::lit(0.05) * alpha * interval.len()).min(T::lit(0.1))
    } else {
        T::lit(1e-3)
    }
}

/// Integrates from `(a, x_a)` on the side opposite to `x*` and compares the
/// result with `x*` on the interval.
pub fn instability_witness<T: Real>(
    sys: &AbelSystem<T>,
    sol: &PeriodicSolution<T>,
    interval: &SignInterval<T>,
    x_a: T,
) -> Result<InstabilityWitness<T>> {
    if !(x_a > T::zero()) {
        return Err(Error::InvalidArgument("x_a must be positive".into()));
    }
    let fr = Frame::new(sys, interval);
    let n = 2000;
    let mut positivity_margin = T::infinity();
    for k in 0..n {
        let t = fr.a + (fr.b - fr.a) * T::from_usize_lossy(k) / T::from_usize_lossy(n);
        let s = fr.sys.a.evaluate(t) / x_a + fr.sys.b.evaluate(t) + fr.sys.c.evaluate(t) * x_a;
        positivity_margin = positivity_margin.min(s);
    }
    let opts = IntegratorOptions {
        max_dt: Some(sys.period() / T::lit(2000.0)),
        ..IntegratorOptions::default()
    };
    let raw = integrate(
        &fr.sys,
        PlanarState::new(fr.a, x_a),
        &[StopCondition::TimeReached(fr.b)],
        &opts,
    )?;
    let trajectory = Trajectory {
        samples: fr.map_samples(&raw.samples),
        stats: raw.stats,
        stop: raw.stop,
    };
    let mut separation_margin = T::infinity();
    for &(t, x) in &trajectory.samples {
        let xs = sol.value(t);
        separation_margin = separation_margin.min((x - xs).abs() - xs.abs());
    }
    let reached = raw.stop == StopReason::TimeReached;
    Ok(InstabilityWitness {
        interval: *interval,
        x_a,
        trajectory,
        separation_ok: reached && separation_margin > T::zero(),
        separation_margin,
        positivity_margin,
        positivity_ok: positivity_margin > T::zero(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShootingOutcome {
    /// Traced back to the zero with its slope preserved.
    ReachesEndpointOnManifold,
    /// Crosses `x = 0` before reaching the zero.
    CrossesZeroEarly,
    /// Passes the zero with `x` bounded away from 0.
    EscapesCone,
}

impl ShootingOutcome {
    pub fn name(self) -> &'static str {
        match self {
            Self::ReachesEndpointOnManifold => "reaches_endpoint_on_manifold",
            Self::CrossesZeroEarly => "crosses_zero_early",
            Self::EscapesCone => "escapes_cone",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingResult<T> {
    pub slope: T,
    pub outcome: ShootingOutcome,
    /// `x/(t-a)` where the backward trace was stopped, if it got there.
    pub end_ratio: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport<T> {
    /// Seeding zero in the normalised frame.
    pub zero: ZeroOfA<T>,
    pub delta: T,
    pub results: Vec<ShootingResult<T>>,
    /// Slope separating the two off-manifold outcomes, found by bisection.
    pub separatrix: Option<T>,
}

impl<T: Real> UniquenessReport<T> {
    pub fn on_manifold_count(&self) -> usize {
        self.results
            .iter()
            .filter(|r| r.outcome == ShootingOutcome::ReachesEndpointOnManifold)
            .count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "zero_t = {}", fmt(self.zero.t));
        let _ = writeln!(s, "zero_kind = {}", self.zero.kind);
        let _ = writeln!(s, "lambda_minus = {}", fmt(self.zero.lambda_minus));
        let _ = writeln!(s, "delta = {}", fmt(self.delta));
        let _ = writeln!(s, "trials = {}", self.results.len());
        let _ = writeln!(s, "on_manifold = {}", self.on_manifold_count());
        match self.separatrix {
            Some(v) => {
                let _ = writeln!(s, "separatrix = {}", fmt(v));
                let _ = writeln!(s, "separatrix_error = {}", fmt((v - self.zero.lambda_minus).abs()));
            }
            None => {
                let _ = writeln!(s, "separatrix = none");
            }
        }
        s
    }

    /// `slope,outcome,end_ratio`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("slope,outcome,end_ratio\n");
        for r in &self.results {
            let ratio = r.end_ratio.map_or_else(|| "nan".to_string(), fmt);
            let _ = writeln!(s, "{},{},{}", fmt(r.slope), r.outcome.name(), ratio);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessOptions<T> {
    /// Seed offset from the zero.
    pub delta: T,
    /// Amplification of an off-manifold deviation allowed before the trace
    /// is stopped and its slope compared.
    pub amplification: T,
    pub bisection_steps: usize,
}

impl<T: Real> Default for UniquenessOptions<T> {
    fn default() -> Self {
        Self {
            delta: T::lit(1e-6),
            amplification: T::lit(1e4),
            bisection_steps: 60,
        }
    }
}

/// Traces the solution through `(a+δ, sδ)` back toward `a`. Backward in `t`
/// is forward in the flipped system, seeded at `(-a-δ, -sδ)`.
fn shoot_back<T: Real>(
    flipped: &AbelSystem<T>,
    a: T,
    slope: T,
    delta: T,
    stop_at: T,
) -> Result<(StopReason, (T, T))> {
    let opts = IntegratorOptions {
        rel_tol: T::lit(1e-12),
        abs_tol: T::lit(1e-16) * delta,
        max_dt: None,
        max_steps: 1_000_000,
    };
    let traj = integrate(
        flipped,
        PlanarState::new(-a - delta, -slope * delta),
        &[StopCondition::TimeReached(-a - stop_at)],
        &opts,
    )?;
    let (t, x) = traj.last();
    Ok((traj.stop, (-t, -x)))
}

/// Classifies trial slopes at the saddle starting `interval` (slopes refer to
/// the normalised frame, where the branch is negative), then bisects
/// between neighbouring trials that end on different sides of the zero.
pub fn uniqueness_scan<T: Real>(
    sys: &AbelSystem<T>,
    interval: &SignInterval<T>,
    slopes: &[T],
    opts: &UniquenessOptions<T>,
) -> Result<UniquenessReport<T>> {
    let fr = Frame::new(sys, interval);
    let zero = classify_zero(&fr.sys, fr.a);
    if zero.kind != crate::conditions::ZeroKind::Saddle || zero.is_focus {
        return Err(Error::WrongZeroKind {
            t: zero.t.as_f64(),
            kind: if zero.is_focus { "focus" } else { zero.kind.name() },
        });
    }
    if let Some(s) = slopes.iter().find(|s| **s > T::zero()) {
        return Err(Error::InvalidArgument(format!("trial slope {s} is positive")));
    }
    let flipped = flip(&fr.sys);
    let delta = opts.delta;
    // deviations grow like (δ/u)^(λ₊/|λ₋|) on the way in
    let rho = zero.lambda_plus / zero.lambda_minus.abs();
    let u_end = delta * opts.amplification.powf(-T::one() / rho);
    let a = fr.a;

    let mut results = Vec::with_capacity(slopes.len());
    for &s in slopes {
        let (reason, (t, x)) = shoot_back(&flipped, a, s, delta, u_end)?;
        let (outcome, end_ratio) = match reason {
            StopReason::TimeReached => {
                let r = x / (t - a);
                let keeps = s < T::zero() && (r - s).abs() <= T::lit(0.5) * s.abs();
                let outcome = if keeps {
                    ShootingOutcome::ReachesEndpointOnManifold
                } else if r > s {
                    ShootingOutcome::CrossesZeroEarly
                } else {
                    ShootingOutcome::EscapesCone
                };
                (outcome, Some(r))
            }
            _ => (ShootingOutcome::CrossesZeroEarly, None),
        };
        results.push(ShootingResult {
            slope: s,
            outcome,
            end_ratio,
        });
    }

    // Past the zero every trace is off the manifold: it either crosses
    // x = 0 (slope too shallow) or arrives at t = a with x < 0 (too steep).
    let side = |s: T| -> Result<bool> {
        let (reason, _) = shoot_back(&flipped, a, s, delta, T::zero())?;
        Ok(reason != StopReason::TimeReached)
    };
    let mut sorted: Vec<T> = slopes.to_vec();
    sorted.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut separatrix = None;
    for w in sorted.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if !side(lo)? && side(hi)? {
            let (mut lo, mut hi) = (lo, hi);
            for _ in 0..opts.bisection_steps {
                let mid = (lo + hi) / T::lit(2.0);
                if side(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            separatrix = Some((lo + hi) / T::lit(2.0));
            break;
        }
    }
    Ok(UniquenessReport {
        zero,
        delta,
        results,
        separatrix,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharpnessVerdict {
    /// Some zero is a focus; no solution can vanish there.
    NoNonconstantSignSolution,
    /// Some discriminant is zero within tolerance and none is negative.
    BoundaryCase,
    NoFocus,
}

impl SharpnessVerdict {
    pub fn name(self) -> &'static str {
        match self {
            Self::NoNonconstantSignSolution => "no_nonconstant_sign_solution",
            Self::BoundaryCase => "boundary_case",
            Self::NoFocus => "no_focus",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroDiagnosis<T> {
    pub zero: ZeroOfA<T>,
    pub degenerate_discriminant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessReport<T> {
    pub zeros: Vec<ZeroDiagnosis<T>>,
    pub verdict: SharpnessVerdict,
    /// Orbit traced backward in `s` around the first focus.
    pub spiral: Option<Vec<PlanarState<T>>>,
    pub spiral_sign_changes: usize,
}

impl<T: Real> SharpnessReport<T> {
    pub fn foci(&self) -> impl Iterator<Item = &ZeroDiagnosis<T>> {
        self.zeros.iter().filter(|z| z.zero.is_focus)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "verdict = {}", self.verdict.name());
        let _ = writeln!(s, "zeros = {}", self.zeros.len());
        for z in &self.zeros {
            let _ = writeln!(
                s,
                "zero t = {} discriminant = {} is_focus = {} degenerate_discriminant = {}",
                fmt(z.zero.t),
                fmt(z.zero.discriminant),
                z.zero.is_focus,
                z.degenerate_discriminant
            );
        }
        let _ = writeln!(s, "foci = {}", self.foci().count());
        if let Some(orbit) = &self.spiral {
            let _ = writeln!(s, "spiral_samples = {}", orbit.len());
            let _ = writeln!(s, "spiral_sign_changes = {}", self.spiral_sign_changes);
        }
        s
    }

    /// `s,t,x` along the spiral orbit.
    pub fn spiral_csv(&self) -> String {
        let mut s = String::from("s,t,x\n");
        for p in self.spiral.iter().flatten() {
            let _ = writeln!(s, "{},{},{}", fmt(p.s), fmt(p.t), fmt(p.x));
        }
        s
    }
}

/// Lists the foci among the zeros of `A` and, if there is one, traces a
/// short orbit around it to exhibit the rotation.
pub fn sharpness_probe<T: Real>(sys: &AbelSystem<T>) -> Result<SharpnessReport<T>> {
    let work = if sys.b.evaluate(T::zero()) < T::zero() {
        sys.negate_x()
    } else {
        sys.clone()
    };
    let zeros: Vec<ZeroDiagnosis<T>> = if work.a.is_identically_zero(T::lit(1e-14)) {
        Vec::new()
    } else {
        find_zeros(&work)?
            .into_iter()
            .map(|zero| ZeroDiagnosis {
                degenerate_discriminant: zero.discriminant.abs() < T::lit(DISCRIMINANT_TOLERANCE),
                zero,
            })
            .collect()
    };
    let focus = zeros.iter().find(|z| z.zero.is_focus && !z.degenerate_discriminant);
    let verdict = if focus.is_some() {
        SharpnessVerdict::NoNonconstantSignSolution
    } else if zeros.iter().any(|z| z.degenerate_discriminant) {
        SharpnessVerdict::BoundaryCase
    } else {
        SharpnessVerdict::NoFocus
    };
    let mut spiral = None;
    let mut spiral_sign_changes = 0;
    if let Some(f) = focus {
        // Backward in s the focus attracts at rate B/2; one and a half
        // turns of the rotation with frequency sqrt(-discriminant).
        let omega = (-f.zero.discriminant).sqrt();
        let r = T::lit(1e-2);
        let opts = IntegratorOptions {
            rel_tol: T::lit(1e-12),
            abs_tol: T::lit(1e-20),
            max_dt: None,
            max_steps: 200_000,
        };
        let s_end = -T::lit(3.0) * T::PI() / omega;
        let orbit = integrate_orbit(&work, PlanarState::new(f.zero.t, r), s_end, &opts)?;
        spiral_sign_changes = orbit
            .windows(2)
            .filter(|w| (w[0].x < T::zero()) != (w[1].x < T::zero()))
            .count();
        spiral = Some(orbit);
    }
    Ok(SharpnessReport {
        zeros,
        verdict,
        spiral,
        spiral_sign_changes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareImage<T> {
    pub u0: T,
    /// `u(T; u0)`, or `None` after a blow-up.
    pub image: Option<T>,
    /// Time at which `|u|` passed the blow-up threshold.
    pub blowup_time: Option<T>,
    /// Sign of `u` at the blow-up.
    pub blowup_sign: Option<Sign>,
}

impl<T: Real> PoincareImage<T> {
    /// Sign of `P(u0) - u0`, taking a blow-up as an infinite image.
    fn gap_sign(&self) -> Option<Sign> {
        match (self.image, self.blowup_sign) {
            (Some(p), _) if p != self.u0 => Some(Sign::of(p - self.u0)),
            (None, s) => s,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareScan<T> {
    pub u0_grid: Vec<T>,
    pub images: Vec<PoincareImage<T>>,
    pub fixed_points: Vec<T>,
}

impl<T: Real> PoincareScan<T> {
    pub fn blowups(&self) -> usize {
        self.images.iter().filter(|i| i.image.is_none()).count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid_points = {}", self.u0_grid.len());
        let _ = writeln!(s, "blowups = {}", self.blowups());
        let _ = writeln!(s, "fixed_points = {}", self.fixed_points.len());
        for u in &self.fixed_points {
            let _ = writeln!(s, "fixed_point u0 = {} x = {}", fmt(*u), fmt(T::one() / *u));
        }
        let _ = writeln!(
            s,
            "note = scan of the first-kind map; an empty list is evidence, not proof, of no constant-sign periodic solution"
        );
        s
    }

    /// `u0,image,blowup_time`; missing values are written as `nan`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("u0,image,blowup_time\n");
        let opt = |v: Option<T>| v.map_or_else(|| "nan".to_string(), fmt);
        for i in &self.images {
            let _ = writeln!(s, "{},{},{}", fmt(i.u0), opt(i.image), opt(i.blowup_time));
        }
        s
    }
}

/// One period of `u̇ = A(-t) u³ + B(-t) u² + C(-t) u`, the image of the
/// second-kind equation under `x = 1/u` and `t ↦ -t`.
pub fn first_kind_map<T: Real>(sys: &AbelSystem<T>, u0: T) -> Result<PoincareImage<T>> {
    let period = sys.period();
    let f = |t: T, y: &[T; 1]| {
        let u = y[0];
        let r = -t;
        [((sys.a.evaluate(r) * u + sys.b.evaluate(r)) * u + sys.c.evaluate(r)) * u]
    };
    let (rtol, atol) = (T::lit(1e-12), T::lit(1e-14));
    let ceiling = T::lit(BLOWUP_THRESHOLD);
    let mut t = T::zero();
    let mut y = [u0];
    let mut f0 = f(t, &y);
    let mut h = initial_step(&y, &f0, rtol, atol).min(period);
    let mut steps = 0usize;
    while t < period {
        steps += 1;
        if steps > 2_000_000 {
            return Err(Error::StepCountExceeded {
                steps,
                t: t.as_f64(),
            });
        }
        let h_try = h.min(period - t);
        let step = dp5_step(&f, t, &y, &f0, h_try);
        let err = error_norm(&y, &step.y, &step.err, rtol, atol);
        if !(err <= T::one()) || !step.y[0].is_finite() {
            h = h_try * if err.is_finite() { step_factor(err) } else { T::lit(0.2) };
            if t + h == t {
                // stalled against a singularity
                return Ok(PoincareImage {
                    u0,
                    image: None,
                    blowup_time: Some(t),
                    blowup_sign: Some(Sign::of(y[0])),
                });
            }
            continue;
        }
        t = if h_try == period - t { period } else { t + h_try };
        y = step.y;
        f0 = step.f_end;
        if y[0].abs() > ceiling {
            return Ok(PoincareImage {
                u0,
                image: None,
                blowup_time: Some(t),
                blowup_sign: Some(Sign::of(y[0])),
            });
        }
        h = h_try * step_factor(err);
    }
    Ok(PoincareImage {
        u0,
        image: Some(y[0]),
        blowup_time: None,
        blowup_sign: None,
    })
}

/// Evaluates the first-kind Poincaré map on `u0_grid` and bisects every
/// sign change of `P(u0) - u0` between neighbouring grid points of the same
/// sign. A blow-up counts as an infinite image in its direction, so a
/// fixed point next to the escape set is still bracketed; bisection limits
/// that are not fixed points are dropped.
pub fn first_kind_poincare<T: Real>(sys: &AbelSystem<T>, u0_grid: &[T]) -> Result<PoincareScan<T>> {
    if u0_grid.iter().any(|u| *u == T::zero()) {
        return Err(Error::InvalidArgument("u0 grid must not contain 0".into()));
    }
    let mut grid = u0_grid.to_vec();
    grid.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let images = grid
        .iter()
        .map(|&u| first_kind_map(sys, u))
        .collect::<Result<Vec<_>>>()?;
    let mut fixed_points = Vec::new();
    for (k, img) in images.iter().enumerate() {
        if img.image == Some(img.u0) {
            fixed_points.push(img.u0);
            continue;
        }
        let Some(next) = images.get(k + 1) else { continue };
        let (Some(g), Some(gn)) = (img.gap_sign(), next.gap_sign()) else {
            continue;
        };
        if (img.u0 > T::zero()) != (next.u0 > T::zero()) || g == gn {
            continue;
        }
        let (mut lo, mut hi) = (img.u0, next.u0);
        for _ in 0..80 {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            match first_kind_map(sys, mid)?.gap_sign() {
                Some(s) if s == g => lo = mid,
                Some(_) => hi = mid,
                None => {
                    lo = mid;
                    hi = mid;
                }
            }
        }
        let u = (lo + hi) / T::lit(2.0);
        if let Some(p) = first_kind_map(sys, u)?.image {
            if (p - u).abs() <= T::lit(1e-6) * (T::one() + u.abs()) {
                fixed_points.push(u);
            }
        }
    }
    Ok(PoincareScan {
        u0_grid: grid,
        images,
        fixed_points,
    })
}

/// Log-spaced grid on `[lo, hi]` and its mirror on `[-hi, -lo]`.
pub fn default_u0_grid<T: Real>(lo: T, hi: T, per_side: usize) -> Vec<T> {
    let n = per_side.max(2);
    let (l0, l1) = (lo.ln(), hi.ln());
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let v = (l0 + (l1 - l0) * T::from_usize_lossy(k) / T::from_usize_lossy(n - 1)).exp();
        out.push(v);
        out.push(-v);
    }
    out.sort_by(|p, q| p.partial_cmp(q).unwrap());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::PeriodicCoefficient;
    use crate::conditions::{sign_intervals, ZeroKind};
    use crate::construction::{solve, SolverOptions};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn normal(sin: Vec<f64>) -> AbelSystem<f64> {
        AbelSystem::normal_form(PeriodicCoefficient::new(TAU, 0.0, vec![], sin))
    }

    fn constant_system(a: f64, b: f64, c: f64, period: f64) -> AbelSystem<f64> {
        let k = |v| PeriodicCoefficient::constant(period, v);
        AbelSystem::new(k(a), k(b), k(c)).unwrap()
    }

    fn lambda_minus(adot: f64) -> f64 {
        0.5 - (0.25 + adot).sqrt()
    }

    fn first_interval(sys: &AbelSystem<f64>) -> SignInterval<f64> {
        let zeros = find_zeros(sys).unwrap();
        sign_intervals(&zeros, sys)[0]
    }

    #[test]
    fn instability_on_both_intervals() {
        let sys = normal(vec![0.1]);
        let sol = solve(&sys, &SolverOptions::default()).unwrap();
        let zeros = find_zeros(&sys).unwrap();
        let ivs = sign_intervals(&zeros, &sys);
        for x_a in [1e-3, 1e-12, 0.05] {
            let w = instability_witness(&sys, &sol, &ivs[0], x_a).unwrap();
            assert!(w.separation_ok && w.positivity_ok, "x_a={x_a}");
            assert!(w.trajectory.samples.iter().all(|s| s.1 > 0.0));
        }
        let small = instability_witness(&sys, &sol, &ivs[0], 1e-3).unwrap();
        let large = instability_witness(&sys, &sol, &ivs[0], 0.05).unwrap();
        assert!(large.separation_margin > small.separation_margin);

        let w = instability_witness(&sys, &sol, &ivs[1], 1e-3).unwrap();
        assert!(w.separation_ok);
        assert!(w.trajectory.samples.iter().all(|s| s.1 < 0.0));
        assert!(w.trajectory.samples.windows(2).all(|p| p[0].0 < p[1].0));
        assert!(instability_witness(&sys, &sol, &ivs[0], 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn witnesses_are_ordered(lo in 1e-6f64..0.05, factor in 1.01f64..3.0) {
            let sys = normal(vec![0.1]);
            let sol = crate::construction::PeriodicSolution::trivial(TAU);
            let iv = first_interval(&sys);
            let w1 = instability_witness(&sys, &sol, &iv, lo).unwrap();
            let w2 = instability_witness(&sys, &sol, &iv, lo * factor).unwrap();
            for &(t, x) in &w1.trajectory.samples {
                if let Some(x2) = w2.trajectory.interpolate(t) {
                    prop_assert!(x2 > x - 1e-9, "t={} {} {}", t, x, x2);
                }
            }
        }
    }

    #[test]
    fn uniqueness_recovers_stable_slope() {
        let sys = normal(vec![0.1]);
        let iv = first_interval(&sys);
        let lm = lambda_minus(0.1);
        let slopes = [-0.5, -0.2, -0.12, lm, -0.07, -0.03, 0.0];
        let rep = uniqueness_scan(&sys, &iv, &slopes, &UniquenessOptions::default()).unwrap();
        assert_eq!(rep.on_manifold_count(), 1, "{}", rep.to_csv());
        assert_eq!(rep.results[3].outcome, ShootingOutcome::ReachesEndpointOnManifold);
        assert_ne!(rep.results[0].outcome, ShootingOutcome::ReachesEndpointOnManifold);
        assert_eq!(rep.results[6].outcome, ShootingOutcome::CrossesZeroEarly);
        let sep = rep.separatrix.unwrap();
        assert!((sep - lm).abs() < 1e-4, "separatrix {sep} vs {lm}");

        // The exact stable slope is an ambiguous bracket end; zero closes it.
        let rep = uniqueness_scan(&sys, &iv, &[-0.5, -0.3, 0.0, lm], &UniquenessOptions::default()).unwrap();
        assert!((rep.separatrix.unwrap() - lm).abs() < 1e-4);
    }

    #[test]
    fn uniqueness_needs_a_saddle() {
        let sys = normal(vec![0.1]);
        let zeros = find_zeros(&sys).unwrap();
        let ivs = sign_intervals(&zeros, &sys);
        // the negative interval is scanned in the flipped system, where its
        // left end -2π is again a saddle
        let rep = uniqueness_scan(&sys, &ivs[1], &[-0.2, -0.05], &UniquenessOptions::default());
        assert!(rep.is_ok());
        assert!(uniqueness_scan(&sys, &ivs[0], &[0.1], &UniquenessOptions::default()).is_err());
        let deg = normal(vec![0.05, -0.025]);
        let iv = first_interval(&deg);
        assert!(matches!(
            uniqueness_scan(&deg, &iv, &[-0.1], &UniquenessOptions::default()),
            Err(Error::WrongZeroKind { .. })
        ));
    }

    #[test]
    fn sharpness_cases() {
        let rep = sharpness_probe(&normal(vec![0.3])).unwrap();
        assert_eq!(rep.verdict, SharpnessVerdict::NoNonconstantSignSolution);
        let foci: Vec<_> = rep.foci().collect();
        assert_eq!(foci.len(), 1);
        assert!((foci[0].zero.t - PI).abs() < 1e-10);
        assert!((foci[0].zero.discriminant + 0.05).abs() < 1e-12);
        assert!(rep.spiral_sign_changes >= 3, "{}", rep.spiral_sign_changes);

        let rep = sharpness_probe(&normal(vec![0.1])).unwrap();
        assert_eq!(rep.verdict, SharpnessVerdict::NoFocus);
        let d: Vec<f64> = rep.zeros.iter().map(|z| z.zero.discriminant).collect();
        assert!((d[0] - 0.35).abs() < 1e-12 && (d[1] - 0.15).abs() < 1e-12);
        assert!(rep.spiral.is_none());

        let rep = sharpness_probe(&normal(vec![0.25])).unwrap();
        assert_eq!(rep.verdict, SharpnessVerdict::BoundaryCase);
        for z in &rep.zeros {
            assert_eq!(z.zero.discriminant < 0.0, z.zero.is_focus);
        }
    }

    #[test]
    fn poincare_matches_riccati_oracle() {
        let sys = constant_system(0.0, 1.0, 0.0, TAU);
        let grid = default_u0_grid(1e-3, 10.0, 25);
        let scan = first_kind_poincare(&sys, &grid).unwrap();
        for img in &scan.images {
            let u0 = img.u0;
            if u0 < 1.0 / TAU - 1e-3 {
                let exact = u0 / (1.0 - TAU * u0);
                let got = img.image.expect("finite");
                assert!((got - exact).abs() < 1e-8 * (1.0 + exact.abs()), "u0={u0}");
            } else if u0 > 1.0 / TAU + 1e-3 {
                assert!(img.image.is_none(), "u0={u0} should blow up");
            }
        }
        assert!(scan.fixed_points.iter().all(|u| *u <= 0.0));
        assert!(scan.blowups() > 0);
    }

    #[test]
    fn poincare_detects_known_fixed_point() {
        // u' = u² - u has the constant solution u = 1
        let sys = constant_system(0.0, 1.0, -1.0, TAU);
        let exact = |u0: f64| 1.0 / (1.0 + (1.0 / u0 - 1.0) * TAU.exp());
        let img = first_kind_map(&sys, 0.5).unwrap();
        assert!((img.image.unwrap() - exact(0.5)).abs() < 1e-10);
        let scan = first_kind_poincare(&sys, &default_u0_grid(1e-3, 10.0, 30)).unwrap();
        assert_eq!(scan.fixed_points.len(), 1, "{:?}", scan.fixed_points);
        assert!((scan.fixed_points[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn poincare_finds_nothing_for_zero_mean_normal_form() {
        let scan = first_kind_poincare(&normal(vec![0.1]), &default_u0_grid(1e-3, 10.0, 30)).unwrap();
        assert!(scan.fixed_points.is_empty(), "{:?}", scan.fixed_points);
        assert!(scan.to_csv().lines().count() == 61);
        assert!(first_kind_poincare(&normal(vec![0.1]), &[0.0]).is_err());
    }

    #[test]
    fn reports_serialise() {
        let sys = normal(vec![0.1]);
        let iv = first_interval(&sys);
        let rep = uniqueness_scan(&sys, &iv, &[-0.2, -0.05], &UniquenessOptions::default()).unwrap();
        assert!(rep.to_text().contains("separatrix = "));
        assert_eq!(rep.to_csv().lines().count(), 3);
        let z = classify_zero(&sys, 0.0);
        assert_eq!(z.kind, ZeroKind::Saddle);
    }
}
