//! Delayed SIQRB cholera model toolkit.
//!
//! * [`model`]: vector field and fixed-step integration with constant pre-history
//! * [`equilibria`]: disease-free and endemic equilibria, `R0`
//! * [`stability`]: linearization, characteristic quasi-polynomial, `F` roots and
//!   coefficient sign scans
//! * [`calibration`]: box-constrained least-squares fit of `(tau, delta, beta, alpha1)`
//! * [`ocp`]: L1 optimal quarantine control with exact discrete adjoints and
//!   first-order optimality checks
//! * [`io`]: key-value configuration files and CSV schemas

pub mod calibration;
pub mod equilibria;
pub mod error;
pub mod io;
pub mod model;
pub mod ocp;
pub mod params;
pub mod poly;
pub mod stability;

pub use error::{Error, Result};
pub use model::{integrate, integrate_with, ControlSignal, Scheme, Trajectory, DEFAULT_STEP};
pub use params::{DerivedConstants, ModelParams, State};
