//! Delayed SIQRB vector field and a fixed-step integrator with constant
//! pre-history.
//!
//! The delay `tau` must be an integer multiple of the step `h`, so every
//! delayed lookup lands exactly on a stored grid node.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, State, B, COMPONENT_NAMES, I, Q, R, S};

/// Default step: 70 nodes per day, i.e. 12740 steps over 182 days and a
/// 140-node offset for a 2-day delay.
pub const DEFAULT_STEP: f64 = 1.0 / 70.0;

/// Undershoot below zero tolerated (and clamped) after a step.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

/// Right-hand side with quarantine rate `delta * u`; `u = 1` is the
/// uncontrolled model. Only `S` and `B` are read from the delayed state.
#[inline]
pub(crate) fn vector_field(x: &State, delayed: &State, u: f64, p: &ModelParams) -> State {
    let force = p.beta * x[B] / (p.kappa + x[B]);
    let incidence = p.beta * delayed[B] / (p.kappa + delayed[B]) * delayed[S];
    let quarantine = p.delta * u;
    State([
        p.lambda - force * x[S] + p.omega * x[R] - p.mu * x[S],
        incidence - (quarantine + p.alpha1 + p.mu) * x[I],
        quarantine * x[I] - (p.epsilon + p.alpha2 + p.mu) * x[Q],
        p.epsilon * x[Q] - (p.omega + p.mu) * x[R],
        p.eta * x[I] - p.d * x[B],
    ])
}

pub fn rhs_uncontrolled(x: &State, delayed: &State, p: &ModelParams) -> Result<State> {
    finite_output(vector_field(x, delayed, 1.0, p))
}

pub fn rhs_controlled(
    x: &State,
    delayed: &State,
    u: f64,
    u_max: f64,
    p: &ModelParams,
) -> Result<State> {
    if !(1.0..=u_max).contains(&u) {
        return Err(Error::ControlOutOfBounds { value: u, upper: u_max });
    }
    finite_output(vector_field(x, delayed, u, p))
}

fn finite_output(dx: State) -> Result<State> {
    if dx.is_finite() {
        Ok(dx)
    } else {
        Err(Error::NonFinite(format!("vector field {:?}", dx.0)))
    }
}

/// Number of steps of size `h` spanning `value`; fails unless `value / h` is
/// an integer up to rounding.
pub fn steps_for(quantity: &'static str, value: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("step h = {h} must be positive")));
    }
    if !(value >= 0.0 && value.is_finite()) {
        return Err(Error::InvalidInput(format!("{quantity} = {value} must be non-negative")));
    }
    let k = (value / h).round();
    if (k * h - value).abs() > 1e-9 * value.max(1.0) {
        return Err(Error::GridMisalignment { quantity, value, step: h });
    }
    Ok(k as usize)
}

/// Quarantine-intensity control with values in `[1, u_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlSignal {
    /// One value per integration step (piecewise constant on `[t_k, t_{k+1})`).
    Nodes { values: Vec<f64>, u_max: f64 },
    /// Bang-bang control starting at `initial` (either 1 or `u_max`) and
    /// toggling between the bounds at each switch time.
    Switches {
        initial: f64,
        times: Vec<f64>,
        u_max: f64,
    },
}

impl ControlSignal {
    pub fn constant(value: f64, u_max: f64, steps: usize) -> Self {
        ControlSignal::Nodes {
            values: vec![value; steps],
            u_max,
        }
    }

    /// `u_max` on `[0, t_s]`, then 1.
    pub fn single_switch(t_s: f64, u_max: f64) -> Self {
        ControlSignal::Switches {
            initial: u_max,
            times: vec![t_s],
            u_max,
        }
    }

    pub fn u_max(&self) -> f64 {
        match self {
            ControlSignal::Nodes { u_max, .. } | ControlSignal::Switches { u_max, .. } => *u_max,
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        let u_max = self.u_max();
        if !(u_max.is_finite() && u_max >= 1.0) {
            return Err(Error::InvalidInput(format!("u_max = {u_max} must be >= 1")));
        }
        let in_bounds = |v: f64| (1.0..=u_max).contains(&v);
        match self {
            ControlSignal::Nodes { values, .. } => {
                if let Some(&v) = values.iter().find(|&&v| !in_bounds(v)) {
                    return Err(Error::ControlOutOfBounds { value: v, upper: u_max });
                }
            }
            ControlSignal::Switches { initial, times, .. } => {
                if *initial != 1.0 && *initial != u_max {
                    return Err(Error::InvalidInput(format!(
                        "initial level {initial} is not a bound of [1, {u_max}]"
                    )));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidInput("switch times must be strictly increasing".into()));
                }
                if times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
                    return Err(Error::InvalidInput(format!("switch times must lie in [0, {horizon}]")));
                }
            }
        }
        Ok(())
    }

    /// Per-step values on a grid of `steps` cells of width `h`. A switch
    /// falling inside a cell yields the cell average of the two levels, so
    /// the discrete cost depends continuously on the switch times.
    pub fn node_values(&self, h: f64, steps: usize) -> Result<Vec<f64>> {
        self.validate(h * steps as f64)?;
        match self {
            ControlSignal::Nodes { values, .. } => {
                if values.len() != steps {
                    return Err(Error::GridMismatch(format!(
                        "control has {} values, grid has {} steps",
                        values.len(),
                        steps
                    )));
                }
                Ok(values.clone())
            }
            ControlSignal::Switches {
                initial,
                times,
                u_max,
            } => {
                let other = if *initial == 1.0 { *u_max } else { 1.0 };
                let level = |n: usize| if n % 2 == 0 { *initial } else { other };
                let mut out = Vec::with_capacity(steps);
                let mut next = 0;
                for k in 0..steps {
                    let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
                    if next >= times.len() || times[next] >= b {
                        out.push(level(next));
                        continue;
                    }
                    let mut acc = 0.0;
                    let mut cursor = a;
                    while next < times.len() && times[next] < b {
                        let t = times[next].max(a);
                        acc += level(next) * (t - cursor);
                        cursor = t;
                        next += 1;
                    }
                    acc += level(next) * (b - cursor);
                    let v = (acc / h).clamp(1.0, *u_max);
                    // a switch on the cell's left edge leaves a single level
                    out.push(if (v - level(next)).abs() <= 1e-12 * u_max { level(next) } else { v });
                }
                Ok(out)
            }
        }
    }
}

/// States on the uniform grid `t0 + k h`, plus the constant history used on
/// `[t0 - tau, t0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t0: f64,
    pub h: f64,
    pub states: Vec<State>,
    pub prehistory: State,
    /// `tau / h`.
    pub delay_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of integration steps (`len() - 1`).
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(move |k| self.time(k))
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory is never empty")
    }

    /// State at node `k - delay_steps`, or the pre-history before the start.
    #[inline]
    pub fn delayed(&self, k: usize) -> &State {
        match k.checked_sub(self.delay_steps) {
            Some(j) => &self.states[j],
            None => &self.prehistory,
        }
    }

    /// Index of the grid node closest to `t`, clamped to the grid.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.h).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.steps())
        }
    }

    pub fn component(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[index]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Scheme {
    #[default]
    Euler,
    /// Classical fourth-order stages. Delayed values come from grid nodes
    /// only: node `k - m` at the start of the step, node `k - m + 1` at its
    /// end and their mean at the half step.
    Rk4,
}

/// Integrates from `init` over `[0, horizon]` with step `h`. `control =
/// None` integrates the uncontrolled model.
pub fn integrate(
    p: &ModelParams,
    init: &State,
    horizon: f64,
    h: f64,
    control: Option<&ControlSignal>,
) -> Result<Trajectory> {
    integrate_with(p, init, horizon, h, control, Scheme::Euler)
}

pub fn integrate_with(
    p: &ModelParams,
    init: &State,
    horizon: f64,
    h: f64,
    control: Option<&ControlSignal>,
    scheme: Scheme,
) -> Result<Trajectory> {
    p.validate()?;
    let steps = steps_for("T", horizon, h)?;
    let u = match control {
        Some(c) => Some(c.node_values(h, steps)?),
        None => None,
    };
    integrate_nodes(p, init, h, steps, u.as_deref(), scheme)
}

/// Integration with per-step control values already laid out on the grid.
pub(crate) fn integrate_nodes(
    p: &ModelParams,
    init: &State,
    h: f64,
    steps: usize,
    u: Option<&[f64]>,
    scheme: Scheme,
) -> Result<Trajectory> {
    init.check_non_negative()?;
    let delay_steps = steps_for("tau", p.tau, h)?;
    if steps == 0 {
        return Err(Error::InvalidInput("horizon must span at least one step".into()));
    }
    let mut traj = Trajectory {
        t0: 0.0,
        h,
        states: Vec::with_capacity(steps + 1),
        prehistory: *init,
        delay_steps,
    };
    traj.states.push(*init);
    let mut clamped = 0usize;
    for k in 0..steps {
        let uk = u.map_or(1.0, |u| u[k]);
        let x = traj.states[k];
        let next = match scheme {
            Scheme::Euler => x.axpy(h, &vector_field(&x, traj.delayed(k), uk, p)),
            Scheme::Rk4 => rk4_step(&traj, k, &x, uk, p),
        };
        let next = guard_state(next, traj.time(k + 1), &mut clamped)?;
        traj.states.push(next);
    }
    if clamped > 0 {
        warn!("clamped {clamped} round-off undershoots below zero");
    }
    Ok(traj)
}

fn rk4_step(traj: &Trajectory, k: usize, x: &State, u: f64, p: &ModelParams) -> State {
    let h = traj.h;
    let m = traj.delay_steps;
    let f = |y: &State, yd: &State| vector_field(y, yd, u, p);
    let k1;
    let k2;
    let k3;
    let k4;
    if m == 0 {
        k1 = f(x, x);
        let y2 = x.axpy(0.5 * h, &k1);
        k2 = f(&y2, &y2);
        let y3 = x.axpy(0.5 * h, &k2);
        k3 = f(&y3, &y3);
        let y4 = x.axpy(h, &k3);
        k4 = f(&y4, &y4);
    } else {
        let start = *traj.delayed(k);
        let end = *traj.delayed(k + 1);
        let mid = start.axpy(1.0, &end);
        let mid = State(mid.0.map(|v| 0.5 * v));
        k1 = f(x, &start);
        k2 = f(&x.axpy(0.5 * h, &k1), &mid);
        k3 = f(&x.axpy(0.5 * h, &k2), &mid);
        k4 = f(&x.axpy(h, &k3), &end);
    }
    let mut out = *x;
    for c in 0..5 {
        out[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    }
    out
}

fn guard_state(mut x: State, t: f64, clamped: &mut usize) -> Result<State> {
    for c in 0..5 {
        let v = x[c];
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{} at t = {t}", COMPONENT_NAMES[c])));
        }
        if v < 0.0 {
            if v < -NEGATIVE_TOLERANCE {
                return Err(Error::NegativeState {
                    component: COMPONENT_NAMES[c],
                    value: v,
                    time: t,
                });
            }
            x[c] = 0.0;
            *clamped += 1;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{disease_free_equilibrium, endemic_equilibrium};

    fn dfe() -> (ModelParams, State) {
        let p = ModelParams::table1();
        (p, disease_free_equilibrium(&p).unwrap())
    }

    #[test]
    fn dfe_is_stationary() {
        let (p, x) = dfe();
        let dx = rhs_uncontrolled(&x, &x, &p).unwrap();
        assert!(dx.max_abs() <= 1e-9 * (1.0 + x.norm()));
        let traj = integrate(&p, &x, 10.0, DEFAULT_STEP, None).unwrap();
        for s in &traj.states {
            assert!(s.sub(&x).max_abs() <= 1e-9 * x.norm());
        }
    }

    #[test]
    fn endemic_point_is_stationary_for_both_right_hand_sides() {
        let p = ModelParams::table1();
        let e = endemic_equilibrium(&p).unwrap().unwrap();
        let scale = 1e-9 * (1.0 + e.norm());
        assert!(rhs_uncontrolled(&e, &e, &p).unwrap().norm() < scale);
        assert!(rhs_controlled(&e, &e, 1.0, 4.0, &p).unwrap().norm() < scale);
    }

    #[test]
    fn bacteria_equation_reads_current_infectives() {
        let (p, mut x) = dfe();
        x[I] = 12.0;
        let dx = rhs_uncontrolled(&x, &x, &p).unwrap();
        assert_eq!(dx[B], p.eta * 12.0 - p.d * 0.0);
    }

    #[test]
    fn only_s_and_b_are_read_from_the_delayed_state() {
        let p = ModelParams::table1();
        let x = State::table1_initial();
        let mut delayed = State::new(4000.0, 1.0, 2.0, 3.0, 1e5);
        let base = rhs_uncontrolled(&x, &delayed, &p).unwrap();
        delayed[I] = 999.0;
        delayed[Q] = 999.0;
        delayed[R] = 999.0;
        assert_eq!(base, rhs_uncontrolled(&x, &delayed, &p).unwrap());
        delayed[S] = 10.0;
        assert_ne!(base[I], rhs_uncontrolled(&x, &delayed, &p).unwrap()[I]);
    }

    #[test]
    fn unit_control_is_the_uncontrolled_model() {
        let p = ModelParams::table1();
        let x = State::table1_initial();
        let y = State::new(5000.0, 1500.0, 10.0, 1.0, 2e5);
        assert_eq!(
            rhs_uncontrolled(&x, &y, &p).unwrap(),
            rhs_controlled(&x, &y, 1.0, 4.0, &p).unwrap()
        );
    }

    #[test]
    fn maximal_control_quadruples_quarantine_inflow() {
        let p = ModelParams::table1();
        let x = State::new(5750.0, 1700.0, 0.0, 0.0, 275e3);
        let d1 = rhs_controlled(&x, &x, 1.0, 4.0, &p).unwrap();
        let d4 = rhs_controlled(&x, &x, 4.0, 4.0, &p).unwrap();
        // Q = 0, so dQ/dt is the inflow alone
        assert!((d4[Q] - 4.0 * d1[Q]).abs() < 1e-12 * d4[Q]);
        assert!(d4[I] < d1[I]);
        assert_eq!(d4[S], d1[S]);
    }

    #[test]
    fn control_bounds_are_enforced() {
        let p = ModelParams::table1();
        let x = State::table1_initial();
        assert!(rhs_controlled(&x, &x, 0.5, 4.0, &p).is_err());
        assert!(rhs_controlled(&x, &x, 4.5, 4.0, &p).is_err());
        let c = ControlSignal::Nodes {
            values: vec![1.0, 5.0],
            u_max: 4.0,
        };
        assert!(matches!(c.validate(1.0), Err(Error::ControlOutOfBounds { .. })));
    }

    #[test]
    fn grid_misalignment_is_rejected() {
        let p = ModelParams::table1().with_tau(2.005);
        let err = integrate(&p, &State::table1_initial(), 10.0, DEFAULT_STEP, None).unwrap_err();
        assert!(matches!(err, Error::GridMisalignment { quantity: "tau", .. }));
        let err = integrate(&ModelParams::table1(), &State::table1_initial(), 10.001, 0.01, None)
            .unwrap_err();
        assert!(matches!(err, Error::GridMisalignment { quantity: "T", .. }));
    }

    #[test]
    fn negative_initial_state_is_rejected() {
        let init = State::new(1.0, -1.0, 0.0, 0.0, 0.0);
        assert!(integrate(&ModelParams::table1(), &init, 1.0, 0.5, None).is_err());
    }

    #[test]
    fn delayed_lookup_is_exact_index_offset() {
        let p = ModelParams::table1();
        let traj = integrate(&p, &State::table1_initial(), 10.0, DEFAULT_STEP, None).unwrap();
        assert_eq!(traj.delay_steps, 140);
        assert_eq!(traj.len(), 701);
        for k in [0usize, 139, 140, 141, 500] {
            let expected = if k >= 140 { traj.states[k - 140] } else { traj.prehistory };
            assert_eq!(*traj.delayed(k), expected);
        }
    }

    #[test]
    fn paper_grid_has_12740_steps() {
        assert_eq!(steps_for("T", 182.0, DEFAULT_STEP).unwrap(), 12740);
    }

    #[test]
    fn switch_control_averages_the_cell_holding_the_switch() {
        let c = ControlSignal::single_switch(0.25, 4.0);
        let u = c.node_values(0.1, 5).unwrap();
        assert_eq!(u[0], 4.0);
        assert_eq!(u[1], 4.0);
        assert!((u[2] - 2.5).abs() < 1e-12);
        assert_eq!(&u[3..], &[1.0, 1.0]);

        let c = ControlSignal::Switches {
            initial: 1.0,
            times: vec![0.1, 0.3],
            u_max: 3.0,
        };
        let u = c.node_values(0.1, 4).unwrap();
        for (a, b) in u.iter().zip([1.0, 3.0, 3.0, 1.0]) {
            assert!((a - b).abs() < 1e-12, "{u:?}");
        }
    }

    #[test]
    fn switch_times_must_increase_and_stay_in_horizon() {
        let c = ControlSignal::Switches {
            initial: 4.0,
            times: vec![2.0, 1.0],
            u_max: 4.0,
        };
        assert!(c.validate(10.0).is_err());
        let c = ControlSignal::single_switch(11.0, 4.0);
        assert!(c.validate(10.0).is_err());
    }

    #[test]
    fn rk4_agrees_with_fine_euler() {
        let p = ModelParams::table1();
        let init = State::table1_initial();
        let rk = integrate_with(&p, &init, 20.0, 0.1, None, Scheme::Rk4).unwrap();
        let fine = integrate(&p, &init, 20.0, 0.1 / 64.0, None).unwrap();
        let coarse = integrate(&p, &init, 20.0, 0.1, None).unwrap();
        let err_rk = rk.final_state().sub(fine.final_state()).max_abs();
        let err_euler = coarse.final_state().sub(fine.final_state()).max_abs();
        assert!(err_rk < err_euler, "rk4 {err_rk} vs euler {err_euler}");
    }
}
