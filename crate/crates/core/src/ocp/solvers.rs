use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::adjoint::{adjoint_nodes, discrete_phi};
use super::{cost_nodes, switching_function, OcpGrid, OcpSolution, OcpWeights};
use crate::error::{Error, Result};
use crate::model::{integrate_nodes, ControlSignal, Scheme, Trajectory, DEFAULT_STEP};
use crate::params::{ModelParams, State};

/// Settings for [`solve_projected_gradient`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgOptions {
    pub h: f64,
    /// Stop when `max_k |u_k - clip(u_k - φ_k / W_u)| <= tolerance`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Starting control; defaults to `u ≡ 1`.
    pub initial: Option<Vec<f64>>,
}

impl Default for PgOptions {
    fn default() -> Self {
        Self {
            h: DEFAULT_STEP,
            tolerance: 1e-8,
            max_iterations: 5000,
            initial: None,
        }
    }
}

/// Settings for [`solve_switch_time`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchOptions {
    pub h: f64,
    pub n_switches: usize,
    /// Spacing of the coarse scan that brackets a single switch (days).
    pub scan_step: f64,
    /// Final bracket width in days.
    pub xtol: f64,
    /// Start at `u_max` (true) or at 1.
    pub start_high: bool,
}

impl Default for SwitchOptions {
    fn default() -> Self {
        Self {
            h: DEFAULT_STEP,
            n_switches: 1,
            scan_step: 1.0,
            xtol: 1e-9,
            start_high: true,
        }
    }
}

struct Evaluator<'a> {
    p: &'a ModelParams,
    w: &'a OcpWeights,
    init: &'a State,
    grid: OcpGrid,
}

impl Evaluator<'_> {
    fn forward(&self, u: &[f64]) -> Result<(Trajectory, f64)> {
        let traj = integrate_nodes(self.p, self.init, self.grid.h, self.grid.steps, Some(u), Scheme::Euler)?;
        let j = cost_nodes(&traj, u, self.w)?;
        Ok((traj, j))
    }

    fn phi(&self, traj: &Trajectory, u: &[f64]) -> Result<Vec<f64>> {
        let adj = adjoint_nodes(traj, u, self.p, self.w)?;
        Ok(discrete_phi(traj, &adj, self.p, self.w))
    }

    fn projected_gradient_norm(&self, u: &[f64], phi: &[f64]) -> f64 {
        u.iter()
            .zip(phi)
            .map(|(&uk, &f)| (uk - (uk - f / self.w.w_u).clamp(1.0, self.w.u_max)).abs())
            .fold(0.0, f64::max)
    }

    fn assemble(
        &self,
        control: ControlSignal,
        converged: bool,
        iterations: usize,
        bracket_failure: bool,
    ) -> Result<OcpSolution> {
        let u = control.node_values(self.grid.h, self.grid.steps)?;
        let (state, cost) = self.forward(&u)?;
        let adjoint = adjoint_nodes(&state, &u, self.p, self.w)?;
        let switching = switching_function(&state, &adjoint, self.p, self.w);
        let pg = self.projected_gradient_norm(&u, &switching.phi[..u.len()]);
        Ok(OcpSolution {
            lambda0: adjoint.initial(),
            control,
            state,
            adjoint,
            cost,
            switching,
            converged,
            iterations,
            projected_gradient_norm: pg,
            bracket_failure,
        })
    }
}

fn setup<'a>(
    p: &'a ModelParams,
    w: &'a OcpWeights,
    init: &'a State,
    h: f64,
) -> Result<Evaluator<'a>> {
    p.validate()?;
    w.validate()?;
    init.check_non_negative()?;
    Ok(Evaluator {
        p,
        w,
        init,
        grid: OcpGrid::new(w.horizon, h)?,
    })
}

/// State, costates and switching record for a given control, without any
/// optimization. Marked converged when the projected gradient is within
/// `PgOptions::default().tolerance`.
pub fn evaluate_control(
    p: &ModelParams,
    w: &OcpWeights,
    init: &State,
    h: f64,
    control: ControlSignal,
) -> Result<OcpSolution> {
    let ev = setup(p, w, init, h)?;
    let mut sol = ev.assemble(control, false, 0, false)?;
    sol.converged = sol.projected_gradient_norm <= PgOptions::default().tolerance;
    Ok(sol)
}

/// Spectral projected gradient on the per-step controls with the exact
/// discrete gradient `h φ` and Armijo backtracking along the projected
/// direction.
pub fn solve_projected_gradient(
    p: &ModelParams,
    w: &OcpWeights,
    init: &State,
    options: &PgOptions,
) -> Result<OcpSolution> {
    let ev = setup(p, w, init, options.h)?;
    let n = ev.grid.steps;
    let h = ev.grid.h;
    let mut u = match &options.initial {
        Some(v) => {
            if v.len() != n {
                return Err(Error::GridMismatch(format!("initial control has {} values, grid has {n}", v.len())));
            }
            v.iter().map(|x| x.clamp(1.0, w.u_max)).collect()
        }
        None => vec![1.0; n],
    };
    let (mut traj, mut j) = ev.forward(&u)?;
    let mut phi = ev.phi(&traj, &u)?;
    // step in control units per unit of φ
    let (s_min, s_max) = (1e-12 / w.w_u, 1e12 / w.w_u);
    let mut s = 1.0 / w.w_u;
    let mut converged = false;
    let mut iterations = 0;
    let noise = |j: f64| 1e-13 * j.abs().max(1.0);

    while iterations < options.max_iterations {
        let pg = ev.projected_gradient_norm(&u, &phi);
        if pg <= options.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let d: Vec<f64> = u
            .iter()
            .zip(&phi)
            .map(|(&uk, &f)| (uk - s * f).clamp(1.0, w.u_max) - uk)
            .collect();
        let slope: f64 = h * phi.iter().zip(&d).map(|(f, dk)| f * dk).sum::<f64>();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = u
                .iter()
                .zip(&d)
                .map(|(&uk, &dk)| (uk + alpha * dk).clamp(1.0, w.u_max))
                .collect();
            let (t_traj, t_j) = ev.forward(&trial)?;
            if t_j <= j + 1e-4 * alpha * slope + noise(j) {
                accepted = Some((trial, t_traj, t_j));
                break;
            }
            alpha *= 0.5;
        }
        let Some((new_u, new_traj, new_j)) = accepted else {
            warn!("projected gradient line search stalled at iteration {iterations} (pg = {pg:e})");
            break;
        };
        let new_phi = ev.phi(&new_traj, &new_u)?;
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..n {
            let du = new_u[k] - u[k];
            ss += du * du;
            sy += du * (new_phi[k] - phi[k]);
        }
        s = if sy > 0.0 { (ss / sy).clamp(s_min, s_max) } else { s_max };
        debug!("pg iter {iterations}: J = {new_j:.12e}, pg = {pg:e}, alpha = {alpha}");
        u = new_u;
        traj = new_traj;
        j = new_j;
        phi = new_phi;
    }
    drop(traj);
    if !converged {
        warn!("projected gradient stopped after {iterations} iterations without reaching tolerance");
    }
    ev.assemble(
        ControlSignal::Nodes {
            values: u,
            u_max: w.u_max,
        },
        converged,
        iterations,
        false,
    )
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

fn golden_section<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<(f64, usize)> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut evals = 2;
    while (b - a) > xtol && evals < 500 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        evals += 1;
    }
    Ok((if fc <= fd { c } else { d }, evals))
}

/// Optimizes the switch times of a bang-bang control. One switch uses a
/// coarse scan plus golden-section search; more switches use compass search.
pub fn solve_switch_time(
    p: &ModelParams,
    w: &OcpWeights,
    init: &State,
    options: &SwitchOptions,
) -> Result<OcpSolution> {
    if options.n_switches == 0 {
        return Err(Error::InvalidInput("at least one switch is required".into()));
    }
    let ev = setup(p, w, init, options.h)?;
    let horizon = w.horizon;
    let initial = if options.start_high { w.u_max } else { 1.0 };
    let signal = |times: Vec<f64>| ControlSignal::Switches {
        initial,
        times,
        u_max: w.u_max,
    };
    let eval = |times: &[f64]| -> Result<f64> {
        let u = signal(times.to_vec()).node_values(ev.grid.h, ev.grid.steps)?;
        Ok(ev.forward(&u)?.1)
    };

    if options.n_switches == 1 {
        let m = (horizon / options.scan_step).ceil().max(2.0) as usize;
        let nodes: Vec<f64> = (0..=m).map(|k| (k as f64 * horizon / m as f64).min(horizon)).collect();
        let mut values = Vec::with_capacity(nodes.len());
        for &t in &nodes {
            values.push(eval(&[t])?);
        }
        let best = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let bracket_failure = best == 0 || best == m;
        if bracket_failure {
            warn!(
                "switch-time optimum at the boundary t = {} (no interior minimum)",
                nodes[best]
            );
        }
        let lo = nodes[best.saturating_sub(1)];
        let hi = nodes[(best + 1).min(m)];
        let (t_s, evals) = golden_section(|t| eval(&[t]), lo, hi, options.xtol)?;
        return ev.assemble(signal(vec![t_s]), true, m + 1 + evals, bracket_failure);
    }

    let n = options.n_switches;
    let mut times: Vec<f64> = (1..=n).map(|i| horizon * i as f64 / (n + 1) as f64).collect();
    let mut best = eval(&times)?;
    let mut step = horizon / (2.0 * (n + 1) as f64);
    let mut iterations = 0;
    let feasible = |t: &[f64]| t.windows(2).all(|w| w[0] < w[1]) && t.iter().all(|&x| (0.0..=horizon).contains(&x));
    while step > options.xtol.max(1e-9) && iterations < 100_000 {
        iterations += 1;
        let mut improved = false;
        for i in 0..n {
            for dir in [1.0, -1.0] {
                let mut trial = times.clone();
                trial[i] += dir * step;
                if !feasible(&trial) {
                    continue;
                }
                let v = eval(&trial)?;
                if v < best {
                    best = v;
                    times = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    ev.assemble(signal(times), true, iterations, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub cost_projected_gradient: f64,
    pub cost_switch_time: f64,
    pub relative_difference: f64,
    pub switch_projected_gradient: Option<f64>,
    pub switch_switch_time: Option<f64>,
}

/// Runs both solvers on the same problem and compares their costs.
pub fn cross_validate(
    p: &ModelParams,
    w: &OcpWeights,
    init: &State,
    h: f64,
) -> Result<CrossValidation> {
    let pg = solve_projected_gradient(p, w, init, &PgOptions { h, ..PgOptions::default() })?;
    let sw = solve_switch_time(p, w, init, &SwitchOptions { h, ..SwitchOptions::default() })?;
    Ok(CrossValidation {
        cost_projected_gradient: pg.cost,
        cost_switch_time: sw.cost,
        relative_difference: (pg.cost - sw.cost).abs() / sw.cost.abs(),
        switch_projected_gradient: pg.first_switch(),
        switch_switch_time: sw.first_switch(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, _) = golden_section(|x| Ok((x - 0.3) * (x - 0.3)), 0.0, 1.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn negligible_state_weights_give_unit_control() {
        let p = ModelParams::table1();
        let w = OcpWeights {
            w_i: 1e-9,
            w_b: 1e-9,
            horizon: 20.0,
            ..OcpWeights::default()
        };
        let sol = solve_projected_gradient(&p, &w, &State::table1_initial(), &PgOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.control_values().iter().all(|&u| u == 1.0));
        assert!(sol.switching.switches.is_empty());
    }

    #[test]
    fn negligible_state_weights_switch_at_start() {
        let p = ModelParams::table1();
        let w = OcpWeights {
            w_i: 1e-9,
            w_b: 1e-9,
            horizon: 20.0,
            ..OcpWeights::default()
        };
        let sol = solve_switch_time(&p, &w, &State::table1_initial(), &SwitchOptions::default()).unwrap();
        let ControlSignal::Switches { times, .. } = &sol.control else {
            panic!("switch solver returns a switch signal");
        };
        assert!(times[0] < 1e-6, "{times:?}");
        assert!(sol.bracket_failure);
    }

    #[test]
    fn zero_switches_rejected() {
        let p = ModelParams::table1();
        let opts = SwitchOptions { n_switches: 0, ..SwitchOptions::default() };
        assert!(solve_switch_time(&p, &OcpWeights::default(), &State::table1_initial(), &opts).is_err());
    }
}
