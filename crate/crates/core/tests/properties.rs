use proptest::prelude::*;

use siqrb_core::equilibria::{endemic_equilibrium, stationarity_residual};
use siqrb_core::model::rhs_uncontrolled;
use siqrb_core::ocp::{adjoint_sweep, cost, gradient, OcpWeights};
use siqrb_core::stability::fend_consistency;
use siqrb_core::{integrate, integrate_with, ControlSignal, ModelParams, Scheme, State, DEFAULT_STEP};

fn state() -> impl Strategy<Value = State> {
    (0.0..20_000.0, 0.0..5_000.0, 0.0..1_000.0, 0.0..1_000.0, 0.0..1e6)
        .prop_map(|(s, i, q, r, b)| State::new(s, i, q, r, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn trajectories_stay_non_negative(x0 in state(), u in 1.0..4.0f64) {
        let signal = ControlSignal::constant(u, 4.0, 60 * 70);
        let tr = integrate(&ModelParams::table1(), &x0, 60.0, DEFAULT_STEP, Some(&signal)).unwrap();
        prop_assert!(tr.states.iter().all(|x| x.0.iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn endemic_point_is_stationary(beta in 0.05..5.0f64, delta in 0.001..0.1f64, tau in 0usize..5) {
        let p = ModelParams { beta, delta, tau: tau as f64, ..ModelParams::table1() };
        let e = endemic_equilibrium(&p).unwrap();
        prop_assume!(e.is_some());
        let e = e.unwrap();
        prop_assert!(stationarity_residual(&p, &e) < 1e-9);
        let f = rhs_uncontrolled(&e, &e, &p).unwrap();
        prop_assert!(f.max_abs() < 1e-9 * e.max_abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn fend_closed_form_matches_moduli(beta in 0.048..5.0f64) {
        let ys: Vec<f64> = (0..40).map(|k| 10f64.powf(-4.0 + 0.15 * k as f64)).collect();
        prop_assert!(fend_consistency(&ModelParams::table1().with_beta(beta), &ys).unwrap() < 1e-6);
    }
}

#[test]
fn euler_converges_at_first_order() {
    let p = ModelParams::table1();
    let init = State::table1_initial();
    let b_at = |h: f64| *integrate(&p, &init, 20.0, h, None).unwrap().final_state();
    let (c, m, f) = (b_at(1.0 / 10.0), b_at(1.0 / 20.0), b_at(1.0 / 40.0));
    for k in 0..5 {
        let ratio = (c[k] - m[k]) / (m[k] - f[k]);
        assert!((1.7..=2.3).contains(&ratio), "component {k}: ratio {ratio}");
    }
}

#[test]
fn rk4_and_euler_agree_to_step_accuracy() {
    let p = ModelParams::table1();
    let init = State::table1_initial();
    let e = integrate_with(&p, &init, 30.0, DEFAULT_STEP, None, Scheme::Euler).unwrap();
    let r = integrate_with(&p, &init, 30.0, DEFAULT_STEP, None, Scheme::Rk4).unwrap();
    let d = e.final_state().sub(r.final_state());
    assert!(d.max_abs() < 1e-2 * r.final_state().max_abs());
}

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let p = ModelParams::table1();
    let init = State::table1_initial();
    let w = OcpWeights::case(3).unwrap();
    let n = 182 * 70;
    let base: Vec<f64> = (0..n).map(|k| 2.5 + (k as f64 * 0.002).sin()).collect();
    let dir: Vec<f64> = (0..n).map(|k| (k as f64 * 0.0007).cos()).collect();
    let j_at = |eps: f64| {
        let values = base.iter().zip(&dir).map(|(b, d)| b + eps * d).collect();
        let u = ControlSignal::Nodes { values, u_max: 4.0 };
        let tr = integrate(&p, &init, 182.0, DEFAULT_STEP, Some(&u)).unwrap();
        cost(&tr, &u, &w).unwrap()
    };
    let u = ControlSignal::Nodes { values: base.clone(), u_max: 4.0 };
    let tr = integrate(&p, &init, 182.0, DEFAULT_STEP, Some(&u)).unwrap();
    let adj = adjoint_sweep(&tr, &u, &p, &w).unwrap();
    let analytic: f64 = gradient(&tr, &adj, &p, &w).iter().zip(&dir).map(|(g, d)| g * d).sum();
    let fd = (j_at(1e-3) - j_at(-1e-3)) / 2e-3;
    assert!(((fd - analytic) / analytic).abs() < 1e-6, "fd {fd} analytic {analytic}");
}

#[test]
fn zero_delay_matches_an_undelayed_euler_run() {
    let p = ModelParams::table1().with_tau(0.0);
    let init = State::table1_initial();
    let tr = integrate(&p, &init, 182.0, DEFAULT_STEP, None).unwrap();
    let mut x = init.0;
    for (k, got) in tr.states.iter().enumerate().skip(1) {
        let [s, i, q, r, b] = x;
        let force = p.beta * b / (p.kappa + b);
        let dx = [
            p.lambda - force * s + p.omega * r - p.mu * s,
            force * s - (p.delta + p.alpha1 + p.mu) * i,
            p.delta * i - (p.epsilon + p.alpha2 + p.mu) * q,
            p.epsilon * q - (p.omega + p.mu) * r,
            p.eta * i - p.d * b,
        ];
        for c in 0..5 {
            x[c] += DEFAULT_STEP * dx[c];
            assert!((got[c] - x[c]).abs() <= 1e-12 * x[c].abs().max(1.0), "node {k}");
        }
    }
}
