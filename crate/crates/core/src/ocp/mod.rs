//! Optimal quarantine control of the delayed model with an L1 cost
//!
//! ```text
//! J = ∫_0^T (W_I I + W_B B + W_u u) dt,   1 <= u <= u_max,
//! ```
//!
//! solved by discretize-then-optimize on the explicit Euler grid. The
//! backward sweep in [`adjoint`] is the exact adjoint of the discrete
//! forward map, so its gradient is the true gradient of the discrete cost.

mod adjoint;
mod pmp;
mod solvers;
mod switching;

pub use adjoint::{adjoint_sweep, gradient, AdjointTrajectory};
pub use pmp::{verify_pmp, verify_pmp_with, CheckResult, PmpOptions, PmpReport};
pub use solvers::{
    cross_validate, evaluate_control, solve_projected_gradient, solve_switch_time, CrossValidation,
    PgOptions,
    SwitchOptions,
};
pub use switching::{switching_function, StrictBangBang, SwitchingRecord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{steps_for, ControlSignal, Trajectory, DEFAULT_STEP};
use crate::params::{B, I};

/// Weights and bounds of the cost functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpWeights {
    pub w_i: f64,
    pub w_b: f64,
    pub w_u: f64,
    pub u_max: f64,
    /// Horizon `T` in days.
    pub horizon: f64,
}

impl Default for OcpWeights {
    fn default() -> Self {
        Self::case(1).expect("case 1 exists")
    }
}

impl OcpWeights {
    /// Reference weight cases: 1 → `(W_I, W_B) = (1, 1)`, 2 → `(10, 1)`,
    /// 3 → `(1, 10)`; `W_u = 1000`, `u_max = 4`, `T = 182`.
    pub fn case(n: u8) -> Result<Self> {
        let (w_i, w_b) = match n {
            1 => (1.0, 1.0),
            2 => (10.0, 1.0),
            3 => (1.0, 10.0),
            _ => return Err(Error::InvalidInput(format!("unknown weight case {n}"))),
        };
        Ok(Self {
            w_i,
            w_b,
            w_u: 1000.0,
            u_max: 4.0,
            horizon: 182.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("W_I", self.w_i),
            ("W_B", self.w_b),
            ("W_u", self.w_u),
            ("T", self.horizon),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be positive",
                });
            }
        }
        if !(self.u_max.is_finite() && self.u_max > 1.0) {
            return Err(Error::InvalidParameter {
                name: "u_max",
                value: self.u_max,
                reason: "must exceed 1",
            });
        }
        Ok(())
    }

    /// Half-width of the band `|φ| < 1e-6 W_u` treated as numerically zero.
    pub fn switching_tolerance(&self) -> f64 {
        1e-6 * self.w_u
    }
}

/// Grid shared by all OCP computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpGrid {
    pub h: f64,
    pub steps: usize,
}

impl OcpGrid {
    pub fn new(horizon: f64, h: f64) -> Result<Self> {
        Ok(Self {
            h,
            steps: steps_for("T", horizon, h)?,
        })
    }

    pub fn default_for(w: &OcpWeights) -> Result<Self> {
        Self::new(w.horizon, DEFAULT_STEP)
    }
}

/// Left-endpoint quadrature of the running cost, consistent with the
/// explicit Euler transcription.
pub fn cost(traj: &Trajectory, u: &ControlSignal, w: &OcpWeights) -> Result<f64> {
    let values = u.node_values(traj.h, traj.steps())?;
    cost_nodes(traj, &values, w)
}

pub(crate) fn cost_nodes(traj: &Trajectory, u: &[f64], w: &OcpWeights) -> Result<f64> {
    if u.len() != traj.steps() {
        return Err(Error::GridMismatch(format!(
            "{} control values for {} steps",
            u.len(),
            traj.steps()
        )));
    }
    let sum: f64 = traj
        .states
        .iter()
        .zip(u)
        .map(|(x, &uk)| w.w_i * x[I] + w.w_b * x[B] + w.w_u * uk)
        .sum();
    Ok(traj.h * sum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpSolution {
    pub control: ControlSignal,
    pub state: Trajectory,
    pub adjoint: AdjointTrajectory,
    pub cost: f64,
    pub switching: SwitchingRecord,
    pub lambda0: [f64; 5],
    pub converged: bool,
    pub iterations: usize,
    /// `max_k |u_k - clip(u_k - φ_k / W_u)|` at the returned control.
    pub projected_gradient_norm: f64,
    /// Set by the switch-time solver when the optimum sits at an end of the
    /// admissible switch interval instead of inside a bracket.
    pub bracket_failure: bool,
}

impl OcpSolution {
    /// Per-step control values.
    pub fn control_values(&self) -> Vec<f64> {
        self.control
            .node_values(self.state.h, self.state.steps())
            .expect("solution control matches its grid")
    }

    /// First detected switch time, if any.
    pub fn first_switch(&self) -> Option<f64> {
        self.switching.switches.first().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::integrate;
    use crate::params::{ModelParams, State};

    #[test]
    fn constant_integrand_cost() {
        let p = ModelParams::table1();
        let w = OcpWeights::case(1).unwrap();
        let zero = State::new(100.0, 0.0, 0.0, 0.0, 0.0);
        let p0 = ModelParams { lambda: p.mu * 100.0, ..p };
        let traj = integrate(&p0, &zero, 182.0, 1.0 / 70.0, None).unwrap();
        let u = ControlSignal::constant(1.0, 4.0, traj.steps());
        let j = cost(&traj, &u, &w).unwrap();
        assert!((j - 182_000.0).abs() < 1e-6);
    }

    #[test]
    fn cost_is_linear_in_control_weight() {
        let p = ModelParams::table1();
        let w = OcpWeights::case(1).unwrap();
        let u = ControlSignal::single_switch(50.0, 4.0);
        let traj = integrate(&p, &State::table1_initial(), 182.0, 1.0 / 70.0, Some(&u)).unwrap();
        let j1 = cost(&traj, &u, &w).unwrap();
        let w2 = OcpWeights { w_u: 2.0 * w.w_u, ..w };
        let j2 = cost(&traj, &u, &w2).unwrap();
        let integral_u: f64 = 50.0 * 4.0 + 132.0;
        assert!((j2 - j1 - w.w_u * integral_u).abs() < 1e-6 * j1);
    }

    #[test]
    fn cost_rejects_mismatched_grid() {
        let p = ModelParams::table1();
        let traj = integrate(&p, &State::table1_initial(), 10.0, 0.5, None).unwrap();
        let u = ControlSignal::constant(1.0, 4.0, 7);
        assert!(matches!(
            cost(&traj, &u, &OcpWeights::default()),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn weights_validation() {
        assert!(OcpWeights::case(4).is_err());
        let w = OcpWeights { u_max: 1.0, ..OcpWeights::default() };
        assert!(w.validate().is_err());
        let w = OcpWeights { w_u: 0.0, ..OcpWeights::default() };
        assert!(w.validate().is_err());
        assert!(OcpWeights::default().validate().is_ok());
    }
}
