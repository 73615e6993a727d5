//! Closed-form equilibria and the basic reproduction number. None of these
//! depend on the delay.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::vector_field;
use crate::params::{ModelParams, State};

/// `βΛη / (μκd·a1)`.
pub fn basic_reproduction_number(p: &ModelParams) -> Result<f64> {
    p.validate()?;
    Ok(p.r0())
}

/// The ingestion rate at which `R0 = 1`, all other parameters fixed.
pub fn threshold_beta(p: &ModelParams) -> Result<f64> {
    let c = p.derived()?;
    Ok(p.mu * p.kappa * p.d * c.a1 / (p.lambda * p.eta))
}

pub fn disease_free_equilibrium(p: &ModelParams) -> Result<State> {
    p.validate()?;
    Ok(State::new(p.lambda / p.mu, 0.0, 0.0, 0.0, 0.0))
}

/// Endemic equilibrium; `None` unless `R0 > 1` strictly.
pub fn endemic_equilibrium(p: &ModelParams) -> Result<Option<State>> {
    let r0 = basic_reproduction_number(p)?;
    if r0 <= 1.0 {
        return Ok(None);
    }
    Ok(Some(endemic_closed_form(p)))
}

/// The endemic closed forms evaluated without the `R0 > 1` guard. Below the
/// threshold some components are negative; the stability scan uses this
/// continuation to trace coefficient signs over the whole `beta` range.
pub(crate) fn endemic_closed_form(p: &ModelParams) -> State {
    let r0 = p.r0();
    let c = p.derived().expect("validated");
    let excess = (r0 - 1.0) / (r0 * c.d_bar);
    let scale = p.beta * p.lambda * excess;
    State::new(
        c.a1 * c.rho / (p.eta * c.d_bar),
        scale * c.a2 * c.a3,
        scale * c.a3 * p.delta,
        scale * p.delta * p.epsilon,
        scale * p.eta * c.a2 * c.a3 / p.d,
    )
}

/// Relative stationarity residual `‖f(x, x)‖ / (1 + ‖x‖)`.
pub fn stationarity_residual(p: &ModelParams, x: &State) -> f64 {
    vector_field(x, x, 1.0, p).norm() / (1.0 + x.norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub dfe: f64,
    pub endemic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub dfe: State,
    pub r0: f64,
    pub endemic: Option<State>,
    pub residuals: Residuals,
}

pub fn equilibria(p: &ModelParams) -> Result<EquilibriumSet> {
    let dfe = disease_free_equilibrium(p)?;
    let endemic = endemic_equilibrium(p)?;
    Ok(EquilibriumSet {
        residuals: Residuals {
            dfe: stationarity_residual(p, &dfe),
            endemic: endemic.as_ref().map(|e| stationarity_residual(p, e)),
        },
        dfe,
        r0: p.r0(),
        endemic,
    })
}
