//! Epidemiological constants of the delayed SIQRB model and the state vector.

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Population used for the recruitment rate of the reference scenario,
/// `S(0) + I(0) + Q(0) + R(0)`.
pub const REFERENCE_POPULATION: f64 = 7450.0;

/// The twelve epidemiological constants plus the symptom delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Recruitment rate Λ (persons/day).
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    /// Natural death rate (1/day).
    pub mu: f64,
    /// Ingestion rate of bacteria from contaminated sources (1/day).
    pub beta: f64,
    /// Half-saturation constant (cells/ml).
    pub kappa: f64,
    /// Immunity waning rate (1/day).
    pub omega: f64,
    /// Quarantine rate (1/day).
    pub delta: f64,
    /// Recovery rate of quarantined individuals (1/day).
    pub epsilon: f64,
    /// Disease death rate of infectives (1/day).
    pub alpha1: f64,
    /// Disease death rate of quarantined individuals (1/day).
    pub alpha2: f64,
    /// Shedding rate (cells/ml/day/person).
    pub eta: f64,
    /// Bacteria death rate (1/day).
    pub d: f64,
    /// Delay between infection and symptoms (days).
    pub tau: f64,
}

impl ModelParams {
    /// Reference values for the Artibonite (Haiti) outbreak, with the
    /// fitted `tau`, `delta`, `beta` and `alpha1`.
    pub fn table1() -> Self {
        Self {
            lambda: 24.4 * REFERENCE_POPULATION / 365_000.0,
            mu: 2.2493e-5,
            beta: 0.7,
            kappa: 1.0e6,
            omega: 0.4 / 365.0,
            delta: 0.02,
            epsilon: 0.2,
            alpha1: 0.012,
            alpha2: 0.0001,
            eta: 10.0,
            d: 0.33,
            tau: 2.0,
        }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn with_tau(self, tau: f64) -> Self {
        Self { tau, ..self }
    }

    /// `(name, value)` pairs in declaration order.
    pub fn fields(&self) -> [(&'static str, f64); 12] {
        [
            ("Lambda", self.lambda),
            ("mu", self.mu),
            ("beta", self.beta),
            ("kappa", self.kappa),
            ("omega", self.omega),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("eta", self.eta),
            ("d", self.d),
            ("tau", self.tau),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        const POSITIVE: [&str; 6] = ["Lambda", "mu", "beta", "kappa", "eta", "d"];
        for (name, value) in self.fields() {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
            if POSITIVE.contains(&name) {
                if value <= 0.0 {
                    return Err(Error::InvalidParameter {
                        name,
                        value,
                        reason: "must be strictly positive",
                    });
                }
            } else if value < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be non-negative",
                });
            }
        }
        Ok(())
    }

    pub fn derived(&self) -> Result<DerivedConstants> {
        self.validate()?;
        Ok(DerivedConstants::from_params(self))
    }

    /// Basic reproduction number `βΛη / (μκd·a1)`.
    pub fn r0(&self) -> f64 {
        let a1 = self.delta + self.alpha1 + self.mu;
        self.beta * self.lambda * self.eta / (self.mu * self.kappa * self.d * a1)
    }
}

/// Composite rates that appear throughout the equilibrium and stability
/// formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub rho: f64,
    pub d_bar: f64,
    pub a: f64,
    pub a_tilde: f64,
}

impl DerivedConstants {
    fn from_params(p: &ModelParams) -> Self {
        let a1 = p.delta + p.alpha1 + p.mu;
        let a2 = p.epsilon + p.alpha2 + p.mu;
        let a3 = p.omega + p.mu;
        let a = a1 * a2 * a3;
        let a_tilde = a - p.delta * p.epsilon * p.omega;
        let rho = p.lambda * p.eta * a2 * a3 + p.kappa * p.d * a_tilde;
        let d_bar = a * p.mu + p.beta * a_tilde;
        Self {
            a1,
            a2,
            a3,
            rho,
            d_bar,
            a,
            a_tilde,
        }
    }
}

pub const S: usize = 0;
pub const I: usize = 1;
pub const Q: usize = 2;
pub const R: usize = 3;
pub const B: usize = 4;

pub const COMPONENT_NAMES: [&str; 5] = ["S", "I", "Q", "R", "B"];

/// Compartment sizes `(S, I, Q, R, B)`; the first four in persons, `B` in cells/ml.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State(pub [f64; 5]);

impl State {
    pub const ZERO: State = State([0.0; 5]);

    pub fn new(s: f64, i: f64, q: f64, r: f64, b: f64) -> Self {
        Self([s, i, q, r, b])
    }

    /// Initial state of the reference scenario.
    pub fn table1_initial() -> Self {
        Self::new(5750.0, 1700.0, 0.0, 0.0, 275.0e3)
    }

    pub fn s(&self) -> f64 {
        self.0[S]
    }
    pub fn i(&self) -> f64 {
        self.0[I]
    }
    pub fn q(&self) -> f64 {
        self.0[Q]
    }
    pub fn r(&self) -> f64 {
        self.0[R]
    }
    pub fn b(&self) -> f64 {
        self.0[B]
    }

    /// Human population `S + I + Q + R`.
    pub fn population(&self) -> f64 {
        self.0[..4].iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &State) -> State {
        let mut out = *self;
        for (o, v) in out.0.iter_mut().zip(other.0.iter()) {
            *o += scale * v;
        }
        out
    }

    pub fn sub(&self, other: &State) -> State {
        self.axpy(-1.0, other)
    }

    pub fn check_non_negative(&self) -> Result<()> {
        for (k, &v) in self.0.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("initial {}", COMPONENT_NAMES[k])));
            }
            if v < 0.0 {
                return Err(Error::NegativeState {
                    component: COMPONENT_NAMES[k],
                    value: v,
                    time: 0.0,
                });
            }
        }
        Ok(())
    }
}

impl Index<usize> for State {
    type Output = f64;
    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl IndexMut<usize> for State {
    fn index_mut(&mut self, index: usize) -> &mut f64 {
        &mut self.0[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_derived_constants() {
        let c = ModelParams::table1().derived().unwrap();
        assert!((c.a1 - 0.032022493).abs() < 1e-12);
        assert!((c.a3 - 0.001118383).abs() < 1e-9);
        assert!((c.a2 - 0.200122493).abs() < 1e-12);
        assert!(c.a >= c.a_tilde && c.a_tilde >= 0.0);
    }

    #[test]
    fn recruitment_uses_initial_population() {
        let p = ModelParams::table1();
        assert_eq!(State::table1_initial().population(), REFERENCE_POPULATION);
        assert!((p.lambda - 0.4980274).abs() < 1e-7);
    }

    #[test]
    fn no_quarantine_cycle_means_a_equals_a_tilde() {
        let p = ModelParams {
            delta: 0.0,
            epsilon: 0.0,
            omega: 0.0,
            ..ModelParams::table1()
        };
        let c = p.derived().unwrap();
        assert_eq!(c.a, c.a_tilde);
    }

    #[test]
    fn rejects_bad_values() {
        let p = ModelParams {
            mu: 0.0,
            ..ModelParams::table1()
        };
        assert!(matches!(
            p.validate(),
            Err(Error::InvalidParameter { name: "mu", .. })
        ));
        let p = ModelParams {
            delta: -0.1,
            ..ModelParams::table1()
        };
        assert!(p.validate().is_err());
        let p = ModelParams {
            eta: f64::NAN,
            ..ModelParams::table1()
        };
        assert!(p.derived().is_err());
        let p = ModelParams {
            tau: 0.0,
            omega: 0.0,
            ..ModelParams::table1()
        };
        assert!(p.validate().is_ok());
    }

    #[test]
    fn rho_and_d_bar_match_definitions() {
        let p = ModelParams::table1();
        let c = p.derived().unwrap();
        let rho = p.lambda * p.eta * c.a2 * c.a3
            + p.kappa * p.d * (c.a1 * c.a2 * c.a3 - p.delta * p.epsilon * p.omega);
        let d_bar = c.a1 * c.a2 * c.a3 * p.mu + p.beta * c.a_tilde;
        assert_eq!(c.rho, rho);
        assert_eq!(c.d_bar, d_bar);
    }
}
