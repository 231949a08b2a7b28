use std::fmt::Write as _;

use abel_core::analysis::{
    default_u0_grid, first_kind_poincare, instability_witness, sharpness_probe, uniqueness_scan,
    SharpnessVerdict, UniquenessOptions,
};
use abel_core::coefficients::{normalize, AbelSystem, Extremum};
use abel_core::conditions::{
    analyze_conditions, classify_zero, find_zeros, sign_intervals, Sign, SignInterval, ZeroKind,
    ZeroOfA,
};
use abel_core::construction::{
    interval_barriers, residual, slope_estimate, solve, PeriodicSolution, SolverOptions,
};
use abel_core::lienard::{barrier_check_samples, flip};
use abel_core::Error;

use crate::config::{system_to_config, ProblemConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONDITION: i32 = 2;
pub const EXIT_FOCUS: i32 = 3;
pub const EXIT_CERTIFICATE: i32 = 4;

/// Smallest `|b1|` accepted when normalising a general-form problem.
const MIN_LEADING: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Evaluate the existence condition.
    Check,
    /// Locate and classify the zeros of A.
    Zeros,
    /// Construct the sign-changing periodic solution.
    Solve,
    /// Re-check a solution CSV (needs --solution).
    Verify,
    /// Instability witnesses on every sign interval.
    Stability,
    /// Shooting scan at every saddle zero.
    Uniqueness,
    /// Poincaré map of the first-kind equation.
    Poincare,
    /// Focus report for the sharpness of the condition.
    Sharpness,
    /// Reduce a general-form problem to A, B, C.
    Normalize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    /// `(file name, contents)` to be written to the output directory.
    pub files: Vec<(String, String)>,
}

impl RunOutput {
    fn fail(code: i32, msg: impl Into<String>) -> Self {
        let mut stderr = msg.into();
        stderr.push('\n');
        Self {
            code,
            stderr,
            ..Self::default()
        }
    }

    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunInputs {
    /// Contents of the solution CSV for `verify`.
    pub solution_csv: Option<String>,
}

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn run(command: Command, cfg: &ProblemConfig, inputs: &RunInputs) -> RunOutput {
    if command == Command::Normalize {
        return cmd_normalize(cfg);
    }
    let (sys, note) = match system(cfg) {
        Ok(s) => s,
        Err(out) => return out,
    };
    let mut out = match command {
        Command::Check => cmd_check(&sys),
        Command::Zeros => cmd_zeros(&sys),
        Command::Solve => cmd_solve(&sys, cfg),
        Command::Verify => match &inputs.solution_csv {
            Some(text) => cmd_verify(&sys, cfg, text),
            None => RunOutput::fail(EXIT_USAGE, "verify needs --solution FILE"),
        },
        Command::Stability => cmd_stability(&sys, cfg),
        Command::Uniqueness => cmd_uniqueness(&sys, cfg),
        Command::Poincare => cmd_poincare(&sys, cfg),
        Command::Sharpness => cmd_sharpness(&sys),
        Command::Normalize => unreachable!(),
    };
    if let Some(n) = note {
        out.stderr.insert_str(0, &n);
    }
    out
}

/// The second-kind system of the problem, normalising a general-form one.
fn system(cfg: &ProblemConfig) -> Result<(AbelSystem<f64>, Option<String>), RunOutput> {
    if let Some(sys) = cfg.normal_system() {
        return Ok((sys, None));
    }
    let g = cfg.general_system().expect("one form is present");
    match normalize(&g, cfg.solver.harmonics, MIN_LEADING) {
        Ok(n) => {
            let note = format!("normalised general form, projection residual {:e}\n", n.residual);
            Ok((n.system, Some(note)))
        }
        Err(e) => Err(RunOutput::fail(EXIT_USAGE, format!("cannot normalise: {e}"))),
    }
}

fn solver_options(cfg: &ProblemConfig) -> SolverOptions<f64> {
    SolverOptions {
        delta: cfg.solver.delta,
        exit_fraction: cfg.solver.exit_fraction,
        slope_tolerance: cfg.solver.slope_tol,
        rel_tol: cfg.solver.rel_tol,
        abs_tol: cfg.solver.abs_tol,
        ..SolverOptions::default()
    }
}

/// The system with `B > 0`, in which zeros are classified.
fn positive_b(sys: &AbelSystem<f64>) -> AbelSystem<f64> {
    if sys.b.evaluate(0.0) < 0.0 {
        sys.negate_x()
    } else {
        sys.clone()
    }
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::ConditionViolated { .. } | Error::NoZeros => EXIT_CONDITION,
        Error::FocusAtZero { .. } => EXIT_FOCUS,
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_CERTIFICATE,
    }
}

fn cmd_check(sys: &AbelSystem<f64>) -> RunOutput {
    let report = analyze_conditions(sys);
    let text = report.to_text();
    let mut out = RunOutput {
        code: if report.holds_main { EXIT_OK } else { EXIT_CONDITION },
        stdout: text.clone(),
        ..RunOutput::default()
    };
    out.file("report.txt", text);
    out
}

fn cmd_zeros(sys: &AbelSystem<f64>) -> RunOutput {
    let work = positive_b(sys);
    let zeros = if work.a.is_identically_zero(1e-14) {
        Vec::new()
    } else {
        match find_zeros(&work) {
            Ok(z) => z,
            Err(Error::NoZeros) => Vec::new(),
            Err(e) => return RunOutput::fail(error_code(&e), e.to_string()),
        }
    };
    let sign = if sys.b.evaluate(0.0) < 0.0 { -1.0 } else { 1.0 };
    let mut csv = String::from("t,kind,Adot,B,discriminant,lambda_minus,lambda_plus,is_focus\n");
    for z in &zeros {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            f(z.t),
            z.kind,
            f(z.adot),
            f(sign * z.b),
            f(z.discriminant),
            f(sign * z.lambda_minus),
            f(sign * z.lambda_plus),
            z.is_focus
        );
    }
    let foci = zeros.iter().filter(|z| z.is_focus).count();
    let mut text = format!("zeros = {}\nfoci = {}\n", zeros.len(), foci);
    if zeros.is_empty() {
        text.push_str("note = A has no sign change\n");
    }
    let mut out = RunOutput {
        code: if foci > 0 { EXIT_FOCUS } else { EXIT_OK },
        stdout: text.clone() + &csv,
        ..RunOutput::default()
    };
    out.file("zeros.csv", csv);
    out.file("zeros.txt", text);
    out
}

/// Solves and also reports the failure exit code and message, if any.
fn solve_checked(
    sys: &AbelSystem<f64>,
    cfg: &ProblemConfig,
) -> Result<PeriodicSolution<f64>, RunOutput> {
    let report = analyze_conditions(sys);
    if !report.holds_main {
        let mut out = RunOutput::fail(
            EXIT_CONDITION,
            format!("existence condition fails (margin {:e})", report.margin_main),
        );
        out.stdout = report.to_text();
        out.file("report.txt", report.to_text());
        return Err(out);
    }
    solve(sys, &solver_options(cfg)).map_err(|e| RunOutput::fail(error_code(&e), e.to_string()))
}

fn cmd_solve(sys: &AbelSystem<f64>, cfg: &ProblemConfig) -> RunOutput {
    let sol = match solve_checked(sys, cfg) {
        Ok(s) => s,
        Err(out) => return out,
    };
    let res = residual(sys, &sol, cfg.solver.grid.max(4000));
    let sensitivity = sol
        .branches
        .iter()
        .filter_map(|b| b.seed_sensitivity)
        .fold(0.0f64, f64::max);
    let ok = sol.certificates_ok() && res < cfg.solver.residual_tol && sensitivity < 1e-6;
    let mut text = analyze_conditions(sys).to_text();
    text.push_str(&sol.sidecar());
    let _ = writeln!(text, "residual = {}", f(res));
    let _ = writeln!(text, "max_seed_sensitivity = {}", f(sensitivity));
    let _ = writeln!(text, "verdict = {}", if ok { "ok" } else { "certificate_failed" });
    let mut out = RunOutput {
        code: if ok { EXIT_OK } else { EXIT_CERTIFICATE },
        stdout: text.clone(),
        ..RunOutput::default()
    };
    if sol.uses_center_manifold() {
        out.stderr
            .push_str("note: a degenerate zero was crossed on the center-manifold branch x ~ -A/B\n");
    }
    out.file("solution.csv", sol.to_csv(cfg.solver.grid));
    out.file("report.txt", text);
    out
}

fn parse_solution_csv(text: &str) -> Result<Vec<(f64, f64, f64)>, String> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("t,x,xdot") => {}
        other => return Err(format!("expected header `t,x,xdot`, found {other:?}")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("row {}: {e}", i + 2))?;
        if vals.len() != 3 {
            return Err(format!("row {}: expected 3 columns", i + 2));
        }
        rows.push((vals[0], vals[1], vals[2]));
    }
    if rows.len() < 10 {
        return Err("solution has fewer than 10 rows".into());
    }
    Ok(rows)
}

/// `x - y` reduced to `[-T/2, T/2)`.
fn wrap(d: f64, period: f64) -> f64 {
    d - (d / period).round() * period
}

fn cmd_verify(sys: &AbelSystem<f64>, cfg: &ProblemConfig, csv: &str) -> RunOutput {
    let rows = match parse_solution_csv(csv) {
        Ok(r) => r,
        Err(e) => return RunOutput::fail(EXIT_USAGE, format!("bad solution file: {e}")),
    };
    let report = analyze_conditions(sys);
    if !report.holds_main {
        return RunOutput::fail(EXIT_CONDITION, "existence condition fails");
    }
    let period = sys.period();
    let work = positive_b(sys);
    let zeros: Vec<ZeroOfA<f64>> = if work.a.is_identically_zero(1e-14) {
        Vec::new()
    } else {
        match find_zeros(&work) {
            Ok(z) => z,
            Err(e) => return RunOutput::fail(error_code(&e), e.to_string()),
        }
    };
    let guard = 1e-6 * period;
    let near_zero = |t: f64| zeros.iter().any(|z| wrap(t - z.t, period).abs() < guard);

    let mut worst_res = 0.0f64;
    let mut sign_ok = true;
    let mut zero_ok = true;
    for &(t, x, d) in &rows {
        if near_zero(t) {
            zero_ok &= x.abs() < 1e-8;
            continue;
        }
        let (a, b, c) = (sys.a.evaluate(t), sys.b.evaluate(t), sys.c.evaluate(t));
        worst_res = worst_res.max((x * d - a - b * x - c * x * x).abs());
        if a.abs() > 1e-12 {
            sign_ok &= x * (-a * b) > 0.0;
        }
    }
    let res_ok = worst_res < cfg.solver.residual_tol;

    let b_sign = Sign::of(sys.b.evaluate(0.0));
    let spacing = period / rows.len() as f64;
    let mut slope_lines = String::new();
    let mut slopes_ok = true;
    for z in &zeros {
        let expected = match z.kind {
            ZeroKind::Degenerate => 0.0,
            _ => b_sign.factor::<f64>() * z.lambda_minus,
        };
        let local: Vec<(f64, f64, f64)> = rows
            .iter()
            .map(|&(t, x, d)| (z.t + wrap(t - z.t, period), x, d))
            .filter(|r| {
                let u = (r.0 - z.t).abs();
                u > guard && u <= 12.0 * spacing
            })
            .collect();
        let side = |left: bool| -> Vec<(f64, f64, f64)> {
            let mut v: Vec<_> = local.iter().copied().filter(|r| (r.0 < z.t) == left).collect();
            v.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
            v
        };
        for (name, pts) in [("left", side(true)), ("right", side(false))] {
            if pts.len() < 3 {
                continue;
            }
            let u0 = pts.iter().map(|r| (r.0 - z.t).abs()).fold(f64::INFINITY, f64::min);
            let s = slope_estimate(&pts, z.t, u0, 12.0 * spacing);
            let ok = (s - expected).abs() <= cfg.solver.slope_tol;
            slopes_ok &= ok;
            let _ = writeln!(
                slope_lines,
                "slope t = {} side = {} estimate = {} expected = {} ok = {}",
                f(z.t),
                name,
                f(s),
                f(expected),
                ok
            );
        }
    }

    let mut barriers_ok = true;
    let intervals: Vec<SignInterval<f64>> = sign_intervals(&zeros, &work);
    for iv in &intervals {
        let inside: Vec<(f64, f64)> = rows
            .iter()
            .map(|&(t, x, _)| (iv.a + (t - iv.a).rem_euclid(period), x))
            .filter(|&(t, _)| t > iv.a + guard && t < iv.b - guard)
            .collect();
        let max_x = inside.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        for line in interval_barriers(sys, iv, max_x) {
            barriers_ok &= barrier_check_samples(&inside, &line).0;
        }
    }

    let ok = res_ok && sign_ok && zero_ok && slopes_ok && barriers_ok;
    let mut text = String::new();
    let _ = writeln!(text, "rows = {}", rows.len());
    let _ = writeln!(text, "residual = {}", f(worst_res));
    let _ = writeln!(text, "residual_ok = {res_ok}");
    let _ = writeln!(text, "sign_ok = {sign_ok}");
    let _ = writeln!(text, "zeros_ok = {zero_ok}");
    text.push_str(&slope_lines);
    let _ = writeln!(text, "slopes_ok = {slopes_ok}");
    let _ = writeln!(text, "barriers_ok = {barriers_ok}");
    let _ = writeln!(text, "verdict = {}", if ok { "ok" } else { "certificate_failed" });
    let mut out = RunOutput {
        code: if ok { EXIT_OK } else { EXIT_CERTIFICATE },
        stdout: text.clone(),
        ..RunOutput::default()
    };
    out.file("verify.txt", text);
    out
}

fn cmd_stability(sys: &AbelSystem<f64>, cfg: &ProblemConfig) -> RunOutput {
    let sol = match solve_checked(sys, cfg) {
        Ok(s) => s,
        Err(out) => return out,
    };
    let mut out = RunOutput::default();
    let mut text = String::new();
    let mut all_ok = true;
    for (i, br) in sol.branches.iter().enumerate() {
        for (k, &x_a) in cfg.analysis.x_a.iter().enumerate() {
            match instability_witness(sys, &sol, &br.interval, x_a) {
                Ok(w) => {
                    all_ok &= w.separation_ok;
                    let _ = writeln!(text, "[witness {i}.{k}]");
                    text.push_str(&w.to_text());
                    out.file(&format!("stability_{i}_{k}.csv"), w.to_csv(&sol));
                }
                Err(e) => {
                    all_ok = false;
                    let _ = writeln!(out.stderr, "witness {i}.{k}: {e}");
                }
            }
        }
    }
    let _ = writeln!(text, "verdict = {}", if all_ok { "unstable" } else { "certificate_failed" });
    out.code = if all_ok { EXIT_OK } else { EXIT_CERTIFICATE };
    out.stdout = text.clone();
    out.file("stability.txt", text);
    out
}

fn cmd_uniqueness(sys: &AbelSystem<f64>, cfg: &ProblemConfig) -> RunOutput {
    let report = analyze_conditions(sys);
    if !report.holds_main {
        return RunOutput::fail(EXIT_CONDITION, "existence condition fails");
    }
    let work = positive_b(sys);
    let zeros = match find_zeros(&work) {
        Ok(z) => z,
        Err(e) => return RunOutput::fail(error_code(&e), e.to_string()),
    };
    let mut out = RunOutput::default();
    let mut text = String::new();
    let mut all_ok = true;
    let opts = UniquenessOptions::default();
    for (i, iv) in sign_intervals(&zeros, &work).iter().enumerate() {
        let zero = if iv.sign_of_a == Sign::Negative {
            classify_zero(&flip(&work), -iv.b)
        } else {
            classify_zero(&work, iv.a)
        };
        let _ = writeln!(text, "[interval {i}] a = {} b = {} sign_A = {}", f(iv.a), f(iv.b), iv.sign_of_a);
        if zero.kind != ZeroKind::Saddle || zero.is_focus {
            let _ = writeln!(text, "skipped = seeding zero is {}", zero.kind);
            continue;
        }
        let mut slopes = cfg.analysis.slopes.clone();
        if cfg.analysis.include_lambda {
            slopes.push(zero.lambda_minus);
        }
        match uniqueness_scan(sys, iv, &slopes, &opts) {
            Ok(rep) => {
                if cfg.analysis.include_lambda {
                    let sep_ok = rep
                        .separatrix
                        .is_some_and(|s| (s - zero.lambda_minus).abs() < 1e-4);
                    all_ok &= rep.on_manifold_count() == 1 && sep_ok;
                }
                text.push_str(&rep.to_text());
                out.file(&format!("uniqueness_{i}.csv"), rep.to_csv());
            }
            Err(e) => {
                all_ok = false;
                let _ = writeln!(out.stderr, "interval {i}: {e}");
            }
        }
    }
    let _ = writeln!(text, "verdict = {}", if all_ok { "unique" } else { "certificate_failed" });
    out.code = if all_ok { EXIT_OK } else { EXIT_CERTIFICATE };
    out.stdout = text.clone();
    out.file("uniqueness.txt", text);
    out
}

fn cmd_poincare(sys: &AbelSystem<f64>, cfg: &ProblemConfig) -> RunOutput {
    let a = &cfg.analysis;
    let grid = default_u0_grid(a.u0_min, a.u0_max, a.u0_points);
    match first_kind_poincare(sys, &grid) {
        Ok(scan) => {
            let mut text = scan.to_text();
            let zero_mean = sys.a.mean().abs() <= 1e-12;
            let _ = writeln!(text, "zero_mean_A = {zero_mean}");
            let mut out = RunOutput {
                stdout: text.clone(),
                ..RunOutput::default()
            };
            out.file("poincare.csv", scan.to_csv());
            out.file("poincare.txt", text);
            out
        }
        Err(e) => RunOutput::fail(error_code(&e), e.to_string()),
    }
}

fn cmd_sharpness(sys: &AbelSystem<f64>) -> RunOutput {
    match sharpness_probe(sys) {
        Ok(rep) => {
            let report = analyze_conditions(sys);
            let mut text = rep.to_text();
            let (_, min_b) = sys.b.abs_extremum(Extremum::Min);
            let _ = writeln!(text, "min_abs_B_sq = {}", f(min_b * min_b));
            let _ = writeln!(text, "min_Adot = {}", f(report.min_adot));
            let mut out = RunOutput {
                code: if rep.verdict == SharpnessVerdict::NoNonconstantSignSolution {
                    EXIT_FOCUS
                } else {
                    EXIT_OK
                },
                stdout: text.clone(),
                ..RunOutput::default()
            };
            if rep.spiral.is_some() {
                out.file("spiral.csv", rep.spiral_csv());
            }
            out.file("sharpness.txt", text);
            out
        }
        Err(Error::NoZeros) => {
            let text = "verdict = no_zeros\n".to_string();
            let mut out = RunOutput {
                stdout: text.clone(),
                ..RunOutput::default()
            };
            out.file("sharpness.txt", text);
            out
        }
        Err(e) => RunOutput::fail(error_code(&e), e.to_string()),
    }
}

fn cmd_normalize(cfg: &ProblemConfig) -> RunOutput {
    let Some(g) = cfg.general_system() else {
        return RunOutput::fail(EXIT_USAGE, "normalize needs general-form blocks a0, a1, a2, b0, b1");
    };
    match normalize(&g, cfg.solver.harmonics, MIN_LEADING) {
        Ok(n) => {
            let body = system_to_config(&n.system);
            let mut out = RunOutput {
                stdout: format!("{body}# projection_residual = {}\n", f(n.residual)),
                ..RunOutput::default()
            };
            out.file("normalized.txt", body);
            out
        }
        Err(e) => RunOutput::fail(EXIT_USAGE, e.to_string()),
    }
}
