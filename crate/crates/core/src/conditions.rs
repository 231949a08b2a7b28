//! Hypothesis checks on an [`AbelSystem`] and the zero structure of `A`.

use std::fmt::{self, Write as _};

use crate::coefficients::{AbelSystem, Extremum};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `|A(t_i)|` below this counts as a zero.
pub const ZERO_TOLERANCE: f64 = 1e-10;
/// `|Ȧ(t_i)|` below this classifies the zero as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;
/// Required accuracy of bisected zero locations.
pub const ZERO_LOCATION_TOLERANCE: f64 = 1e-12;
/// Grid used to detect sign changes and tangencies of `A`.
pub const ZERO_SCAN_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn of<T: Real>(v: T) -> Sign {
        if v < T::zero() {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }

    pub fn factor<T: Real>(self) -> T {
        match self {
            Sign::Positive => T::one(),
            Sign::Negative => -T::one(),
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "positive",
            Sign::Negative => "negative",
        })
    }
}

/// Extremal quantities behind the existence condition
/// `min|B|² > -4 min Ȧ [1 + T max|C|]` and its consequence
/// `min|B|² > 2 max|A| max|C|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport<T> {
    pub min_abs_b_sq: T,
    pub min_adot: T,
    pub max_abs_c: T,
    pub max_abs_a: T,
    pub period: T,
    pub rhs_main: T,
    pub holds_main: bool,
    pub rhs_secondary: T,
    pub holds_secondary: bool,
    pub b_sign: Sign,
    pub zero_mean_a: bool,
    pub margin_main: T,
}

pub const CONDITION_CSV_HEADER: &str = "min_abs_B_sq,min_Adot,max_abs_A,max_abs_C,rhs_main,margin_main,holds_main,holds_secondary,zero_mean_A";

impl<T: Real> ConditionReport<T> {
    /// Flat `key = value` block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f = |v: T| format!("{:.16e}", v.as_f64());
        let _ = writeln!(s, "min_abs_B_sq = {}", f(self.min_abs_b_sq));
        let _ = writeln!(s, "min_Adot = {}", f(self.min_adot));
        let _ = writeln!(s, "max_abs_A = {}", f(self.max_abs_a));
        let _ = writeln!(s, "max_abs_C = {}", f(self.max_abs_c));
        let _ = writeln!(s, "period = {}", f(self.period));
        let _ = writeln!(s, "rhs_main = {}", f(self.rhs_main));
        let _ = writeln!(s, "margin_main = {}", f(self.margin_main));
        let _ = writeln!(s, "holds_main = {}", self.holds_main);
        let _ = writeln!(s, "rhs_secondary = {}", f(self.rhs_secondary));
        let _ = writeln!(s, "holds_secondary = {}", self.holds_secondary);
        let _ = writeln!(s, "B_sign = {}", self.b_sign);
        let _ = writeln!(s, "zero_mean_A = {}", self.zero_mean_a);
        s
    }

    /// One CSV row in [`CONDITION_CSV_HEADER`] order.
    pub fn to_csv_row(&self) -> String {
        let f = |v: T| format!("{:.16e}", v.as_f64());
        format!(
            "{},{},{},{},{},{},{},{},{}",
            f(self.min_abs_b_sq),
            f(self.min_adot),
            f(self.max_abs_a),
            f(self.max_abs_c),
            f(self.rhs_main),
            f(self.margin_main),
            self.holds_main,
            self.holds_secondary,
            self.zero_mean_a
        )
    }
}

pub fn analyze_conditions<T: Real>(sys: &AbelSystem<T>) -> ConditionReport<T> {
    let period = sys.period();
    let (_, min_abs_b) = sys.b.abs_extremum(Extremum::Min);
    let (_, min_adot) = sys.a.derivative_extremum(Extremum::Min);
    let (_, max_abs_c) = sys.c.abs_extremum(Extremum::Max);
    let (_, max_abs_a) = sys.a.abs_extremum(Extremum::Max);
    let min_abs_b_sq = min_abs_b * min_abs_b;
    // `+ 0` folds the -0.0 produced when min Ȧ = 0.
    let rhs_main = -T::lit(4.0) * min_adot * (T::one() + period * max_abs_c) + T::zero();
    let rhs_secondary = T::lit(2.0) * max_abs_a * max_abs_c;
    let b_sign = Sign::of(sys.b.evaluate(T::zero()));
    ConditionReport {
        min_abs_b_sq,
        min_adot,
        max_abs_c,
        max_abs_a,
        period,
        rhs_main,
        holds_main: min_abs_b_sq > rhs_main,
        rhs_secondary,
        holds_secondary: min_abs_b_sq > rhs_secondary,
        b_sign,
        zero_mean_a: sys.a.mean().abs() <= T::lit(1e-12),
        margin_main: min_abs_b_sq - rhs_main,
    }
}

/// Critical-point type of the planar field at `(t_i, 0)`, assuming `B > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroKind {
    /// `Ȧ > 0`.
    Saddle,
    /// `Ȧ < 0`.
    UnstableNode,
    /// `Ȧ = 0` within [`DEGENERACY_TOLERANCE`].
    Degenerate,
}

impl ZeroKind {
    pub fn name(self) -> &'static str {
        match self {
            ZeroKind::Saddle => "saddle",
            ZeroKind::UnstableNode => "unstable-node",
            ZeroKind::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for ZeroKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A zero of `A` together with the linearisation of the planar field there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroOfA<T> {
    pub t: T,
    pub adot: T,
    pub b: T,
    pub kind: ZeroKind,
    /// `B²/4 + Ȧ`; negative means a focus.
    pub discriminant: T,
    pub lambda_minus: T,
    pub lambda_plus: T,
    pub is_focus: bool,
}

pub fn classify_zero<T: Real>(sys: &AbelSystem<T>, t: T) -> ZeroOfA<T> {
    let adot = sys.a.derivative_at(t);
    let b = sys.b.evaluate(t);
    let half_b = b / T::lit(2.0);
    let discriminant = half_b * half_b + adot;
    let is_focus = discriminant < T::zero();
    let root = if is_focus {
        T::zero()
    } else {
        discriminant.sqrt()
    };
    let kind = if adot.abs() < T::lit(DEGENERACY_TOLERANCE) {
        ZeroKind::Degenerate
    } else if adot > T::zero() {
        ZeroKind::Saddle
    } else {
        ZeroKind::UnstableNode
    };
    ZeroOfA {
        t,
        adot,
        b,
        kind,
        discriminant,
        lambda_minus: half_b - root,
        lambda_plus: half_b + root,
        is_focus,
    }
}

fn bisect<T: Real, F: Fn(T) -> T>(mut lo: T, mut hi: T, f: F) -> T {
    // Runs to machine precision, well below ZERO_LOCATION_TOLERANCE.
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == T::zero() {
            return mid;
        }
        if (fm < T::zero()) == (flo < T::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    // keep whichever end has the smaller residual
    let mid = lo + (hi - lo) / T::lit(2.0);
    [lo, mid, hi]
        .into_iter()
        .min_by(|x, y| f(*x).abs().partial_cmp(&f(*y).abs()).unwrap())
        .unwrap()
}

/// All zeros of `A` in `[0, T)`, sorted.
///
/// An identically vanishing `A` yields an empty list; a nonvanishing `A`
/// yields [`Error::NoZeros`].
pub fn find_zeros<T: Real>(sys: &AbelSystem<T>) -> Result<Vec<ZeroOfA<T>>> {
    let a = &sys.a;
    if a.is_identically_zero(T::lit(1e-14)) {
        return Ok(Vec::new());
    }
    let period = sys.period();
    let n = ZERO_SCAN_GRID;
    let h = period / T::from_usize_lossy(n);
    let ts: Vec<T> = (0..=n).map(|i| T::from_usize_lossy(i) * h).collect();
    let vs: Vec<T> = ts.iter().map(|&t| a.evaluate(t)).collect();
    let eval = |t: T| a.evaluate(t);

    let mut found: Vec<T> = Vec::new();
    for i in 0..n {
        let (v0, v1) = (vs[i], vs[i + 1]);
        if v0 == T::zero() {
            found.push(ts[i]);
            continue;
        }
        if v1 != T::zero() && (v0 < T::zero()) != (v1 < T::zero()) {
            found.push(bisect(ts[i], ts[i + 1], eval));
            continue;
        }
        // Tangency: a grid-local minimum of |A| with no sign change around it.
        let prev = if i == 0 { vs[n - 1] } else { vs[i - 1] };
        if v0.abs() <= prev.abs()
            && v0.abs() <= v1.abs()
            && (prev < T::zero()) == (v0 < T::zero())
            && (v1 < T::zero()) == (v0 < T::zero())
        {
            let (t, m) = crate::coefficients::golden_min(ts[i] - h, ts[i] + h, |t| eval(t).abs());
            if m < T::lit(ZERO_TOLERANCE) {
                found.push(t);
            }
        }
    }
    let wrap = |t: T| {
        let r = t - period * (t / period).floor();
        if r >= period {
            r - period
        } else {
            r
        }
    };
    let mut found: Vec<T> = found.into_iter().map(wrap).collect();
    found.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let merge = T::lit(1e-9) * (T::one() + period);
    let mut zeros: Vec<T> = Vec::new();
    for t in found {
        match zeros.last() {
            Some(&last) if t - last <= merge => {
                if eval(t).abs() < eval(last).abs() {
                    *zeros.last_mut().unwrap() = t;
                }
            }
            _ => zeros.push(t),
        }
    }
    if zeros.len() > 1 {
        let first = zeros[0];
        let last = *zeros.last().unwrap();
        if first + period - last <= merge {
            zeros.pop();
        }
    }
    if zeros.is_empty() {
        return Err(Error::NoZeros);
    }
    Ok(zeros.into_iter().map(|t| classify_zero(sys, t)).collect())
}

/// Maximal open interval between consecutive zeros on which `A` has
/// constant strict sign. `b` may exceed `T` for the wrap-around interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignInterval<T> {
    pub a: T,
    pub b: T,
    pub sign_of_a: Sign,
}

impl<T: Real> SignInterval<T> {
    pub fn len(&self) -> T {
        self.b - self.a
    }

    pub fn midpoint(&self) -> T {
        (self.a + self.b) / T::lit(2.0)
    }

    pub fn contains(&self, t: T) -> bool {
        t > self.a && t < self.b
    }
}

pub fn sign_intervals<T: Real>(zeros: &[ZeroOfA<T>], sys: &AbelSystem<T>) -> Vec<SignInterval<T>> {
    let period = sys.period();
    let mut out = Vec::with_capacity(zeros.len());
    for (i, z) in zeros.iter().enumerate() {
        let b = if i + 1 < zeros.len() {
            zeros[i + 1].t
        } else {
            zeros[0].t + period
        };
        let mid = (z.t + b) / T::lit(2.0);
        let v = sys.a.evaluate(mid);
        if v.abs() < T::lit(ZERO_TOLERANCE) {
            continue;
        }
        out.push(SignInterval {
            a: z.t,
            b,
            sign_of_a: Sign::of(v),
        });
    }
    out
}
