use abel_core::coefficients::{AbelSystem, PeriodicCoefficient};
use abel_core::conditions::{analyze_conditions, ZeroKind};
use abel_core::construction::{residual, solve, SolverOptions};
use proptest::prelude::*;
use std::f64::consts::TAU;

fn system(a: (f64, f64, f64, f64), b: (f64, f64), c: (f64, f64)) -> AbelSystem<f64> {
    let co = |mean, cos: Vec<f64>, sin: Vec<f64>| PeriodicCoefficient::new(TAU, mean, cos, sin);
    AbelSystem::new(
        co(a.0, vec![a.1], vec![a.2, a.3]),
        co(b.0, vec![b.1], vec![]),
        co(0.0, vec![c.0], vec![c.1]),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_invariants_hold(
        a in (-0.02f64..0.02, -0.05f64..0.05, -0.08f64..0.08, -0.03f64..0.03),
        b_mean in prop_oneof![0.9f64..1.6, -1.6f64..-0.9],
        b_cos in -0.2f64..0.2,
        c in (-0.05f64..0.05, -0.05f64..0.05),
    ) {
        let sys = system(a, (b_mean, b_cos), c);
        let report = analyze_conditions(&sys);
        prop_assume!(report.holds_main);
        prop_assume!(sys.a.abs_extremum(abel_core::coefficients::Extremum::Max).1 > 1e-3);
        let sol = match solve(&sys, &SolverOptions::default()) {
            Ok(s) => s,
            Err(abel_core::Error::NoZeros) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        prop_assert!(residual(&sys, &sol, 2000) < 1e-7);
        prop_assert!(sol.certificates_ok());
        for br in &sol.branches {
            for &(t, x, _) in &br.samples {
                let want = -sys.a.evaluate(t) * sys.b.evaluate(t);
                prop_assert!(x * want > 0.0, "sign at t={} x={}", t, x);
            }
            prop_assert!(br.seed_sensitivity.unwrap() < 1e-6);
        }
        for z in &sol.zeros {
            prop_assert_eq!(sol.value(z.t), 0.0);
            let expected = match z.kind {
                ZeroKind::Degenerate => 0.0,
                _ => report.b_sign.factor::<f64>() * z.lambda_minus,
            };
            let h = 1e-3;
            let right = sol.value(z.t + h) / h;
            let left = sol.value(z.t - h) / -h;
            prop_assert!((right - expected).abs() < 1e-3 + 1e-2 * h, "right {} vs {}", right, expected);
            prop_assert!((left - expected).abs() < 1e-3 + 1e-2 * h, "left {} vs {}", left, expected);
        }
    }
}

#[test]
fn single_precision_pipeline() {
    let sys = AbelSystem::normal_form(PeriodicCoefficient::new(
        std::f32::consts::TAU,
        0.0f32,
        vec![],
        vec![0.1],
    ));
    let opts = SolverOptions {
        rel_tol: 1e-6f32,
        abs_tol: 1e-7,
        check_seed_sensitivity: false,
        delta: 1e-3,
        ..SolverOptions::default()
    };
    let sol = solve(&sys, &opts).unwrap();
    assert_eq!(sol.branches.len(), 2);
    let lm = 0.5 - (0.35f32).sqrt();
    assert!((sol.branches[0].entry_slope - lm).abs() < 1e-3);
    assert!(residual(&sys, &sol, 1000) < 1e-3);
}
