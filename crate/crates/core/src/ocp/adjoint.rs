use serde::{Deserialize, Serialize};

use super::OcpWeights;
use crate::error::{Error, Result};
use crate::model::{ControlSignal, Trajectory};
use crate::params::{ModelParams, B, I, Q, R, S};

/// Costates `λ1..λ5` on the state grid; `costates[n]` is the terminal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointTrajectory {
    pub h: f64,
    pub costates: Vec<[f64; 5]>,
}

impl AdjointTrajectory {
    pub fn initial(&self) -> [f64; 5] {
        self.costates[0]
    }

    pub fn terminal(&self) -> [f64; 5] {
        *self.costates.last().expect("non-empty")
    }
}

/// Backward sweep of the discrete adjoint of the explicit Euler scheme.
///
/// `λ_k = λ_{k+1} + h (∇ₓL + f_x(k)ᵀ λ_{k+1}) + h f_y(k+m)ᵀ λ_{k+m+1}`,
/// where `m = tau / h` and the last (advanced) term is present only while
/// `k + m < n`. The constant pre-history is data, so nothing flows back
/// from steps that read it.
pub fn adjoint_sweep(
    state: &Trajectory,
    u: &ControlSignal,
    p: &ModelParams,
    w: &OcpWeights,
) -> Result<AdjointTrajectory> {
    let values = u.node_values(state.h, state.steps())?;
    adjoint_nodes(state, &values, p, w)
}

pub(crate) fn adjoint_nodes(
    state: &Trajectory,
    u: &[f64],
    p: &ModelParams,
    w: &OcpWeights,
) -> Result<AdjointTrajectory> {
    let n = state.steps();
    if u.len() != n {
        return Err(Error::GridMismatch(format!("{} control values for {n} steps", u.len())));
    }
    let k_ = p.kappa;
    if (state.delay_steps as f64 * state.h - p.tau).abs() > 1e-9 * p.tau.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "trajectory delay offset {} does not match tau = {}",
            state.delay_steps, p.tau
        )));
    }
    let m = state.delay_steps;
    let h = state.h;
    let a2 = p.epsilon + p.alpha2 + p.mu;
    let a3 = p.omega + p.mu;
    let mut lam = vec![[0.0; 5]; n + 1];
    for k in (0..n).rev() {
        let x = &state.states[k];
        let l = lam[k + 1];
        let force = p.beta * x[B] / (k_ + x[B]);
        let sens = p.beta * k_ * x[S] / ((k_ + x[B]) * (k_ + x[B]));
        let q = p.delta * u[k];
        let mut g = [
            -l[S] * (force + p.mu),
            w.w_i - l[I] * (q + p.alpha1 + p.mu) + l[Q] * q + l[B] * p.eta,
            -l[Q] * a2 + l[R] * p.epsilon,
            l[S] * p.omega - l[R] * a3,
            w.w_b - l[S] * sens - l[B] * p.d,
        ];
        // x_k is the delayed argument of step k + m
        if k + m < n {
            let l_inf = lam[k + m + 1][I];
            g[S] += l_inf * force;
            g[B] += l_inf * sens;
        }
        for c in 0..5 {
            lam[k][c] = l[c] + h * g[c];
        }
    }
    if lam.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("adjoint sweep".into()));
    }
    Ok(AdjointTrajectory { h, costates: lam })
}

/// `∂J/∂u_k = h (W_u + δ I_k (λ3_{k+1} - λ2_{k+1}))`.
pub fn gradient(
    state: &Trajectory,
    adjoint: &AdjointTrajectory,
    p: &ModelParams,
    w: &OcpWeights,
) -> Vec<f64> {
    discrete_phi(state, adjoint, p, w)
        .into_iter()
        .map(|phi| state.h * phi)
        .collect()
}

/// Switching function of the discrete problem for each step `k < n`.
pub(crate) fn discrete_phi(
    state: &Trajectory,
    adjoint: &AdjointTrajectory,
    p: &ModelParams,
    w: &OcpWeights,
) -> Vec<f64> {
    (0..state.steps())
        .map(|k| {
            let l = &adjoint.costates[k + 1];
            w.w_u + p.delta * state.states[k][I] * (l[Q] - l[I])
        })
        .collect()
}
