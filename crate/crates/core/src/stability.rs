//! Local stability of equilibria of the delayed model.
//!
//! Around an equilibrium the linearization reads `z' = A0 z + A1 z(t - tau)`
//! and its characteristic quasi-polynomial is `P1(χ) + exp(-τχ) P2(χ)`.
//! Delay-induced stability switches require positive real roots of
//! `F(y) = |P1(iy)|^2 - |P2(iy)|^2`.

use log::debug;
use nalgebra::SMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{endemic_closed_form, stationarity_residual};
use crate::error::{Error, Result};
use crate::params::{ModelParams, State, B, S};
use crate::poly;

pub type Matrix5 = SMatrix<f64, 5, 5>;

/// Relative stationarity residual accepted by [`linearize`].
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-8;

/// Relative tolerance for the equalities `R0 = 1` and `a1 d = 1`.
pub const THRESHOLD_TOLERANCE: f64 = 1e-12;

pub const STABLE_FOR_ALL_DELAYS: &str = "locally asymptotically stable for all tau >= 0";
pub const NO_ENDEMIC: &str = "no endemic equilibrium (R0 <= 1)";
pub const UNDETERMINED: &str = "undetermined (non-positive coefficient)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationPoint {
    pub equilibrium: State,
    /// Force of infection `βB/(κ+B)` at the equilibrium.
    pub lambda_bar: f64,
    /// Incidence sensitivity `βκS/(κ+B)^2`.
    pub c: f64,
}

impl LinearizationPoint {
    fn at(p: &ModelParams, eq: &State) -> Self {
        let denom = p.kappa + eq[B];
        Self {
            equilibrium: *eq,
            lambda_bar: p.beta * eq[B] / denom,
            c: p.beta * p.kappa * eq[S] / (denom * denom),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub point: LinearizationPoint,
    /// Jacobian with respect to the current state.
    pub a0: Matrix5,
    /// Jacobian with respect to the delayed state.
    pub a1: Matrix5,
}

pub fn linearize(p: &ModelParams, eq: &State) -> Result<Linearization> {
    p.validate()?;
    let residual = stationarity_residual(p, eq);
    if !(residual <= EQUILIBRIUM_TOLERANCE) {
        return Err(Error::NotAnEquilibrium { residual });
    }
    Ok(linearize_unchecked(p, eq))
}

fn linearize_unchecked(p: &ModelParams, eq: &State) -> Linearization {
    let c = p.derived().expect("validated");
    let point = LinearizationPoint::at(p, eq);
    let (lb, cc) = (point.lambda_bar, point.c);
    #[rustfmt::skip]
    let a0 = Matrix5::from_row_slice(&[
        -lb - p.mu, 0.0,      0.0,       p.omega, -cc,
        0.0,        -c.a1,    0.0,       0.0,     0.0,
        0.0,        p.delta,  -c.a2,     0.0,     0.0,
        0.0,        0.0,      p.epsilon, -c.a3,   0.0,
        0.0,        p.eta,    0.0,       0.0,     -p.d,
    ]);
    let mut a1 = Matrix5::zeros();
    a1[(1, 0)] = lb;
    a1[(1, 4)] = cc;
    Linearization { point, a0, a1 }
}

/// `P1` (degree 5, monic) and `P2` (degree 3), ascending coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharPolyPair {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

impl CharPolyPair {
    /// `P1(χ) + exp(-τχ) P2(χ)`.
    pub fn quasi_polynomial(&self, chi: Complex64, tau: f64) -> Complex64 {
        poly::eval_complex(&self.p1, chi) + (-tau * chi).exp() * poly::eval_complex(&self.p2, chi)
    }

    /// Coefficients of `F` as an even polynomial in `y` (degree 10).
    pub fn f_polynomial(&self) -> Vec<f64> {
        let mut f = poly::modulus_squared_on_imaginary_axis(&self.p1);
        for (o, v) in f.iter_mut().zip(poly::modulus_squared_on_imaginary_axis(&self.p2)) {
            *o -= v;
        }
        f
    }

    /// Positive real roots of `F`, found in `w = y^2` and returned as `y`.
    pub fn f_positive_roots(&self) -> Vec<f64> {
        let f = self.f_polynomial();
        let in_w: Vec<f64> = f.iter().step_by(2).copied().collect();
        poly::positive_real_roots(&in_w, 1e-12)
            .into_iter()
            .map(f64::sqrt)
            .collect()
    }
}

pub fn char_poly_pair(p: &ModelParams, point: &LinearizationPoint) -> Result<CharPolyPair> {
    let c = p.derived()?;
    let (lb, eta_c) = (point.lambda_bar, p.eta * point.c);
    let dew = p.delta * p.epsilon * p.omega;
    let p1 = poly::from_negated_roots(&[c.a1, c.a2, c.a3, p.d, lb + p.mu]);
    let p2 = vec![
        -eta_c * c.a2 * c.a3 * p.mu - dew * p.d * lb,
        -(eta_c * (c.a2 * c.a3 + c.a2 * p.mu + c.a3 * p.mu) + dew * lb),
        -eta_c * (c.a2 + c.a3 + p.mu),
        -eta_c,
    ];
    Ok(CharPolyPair { p1, p2 })
}

/// `|P1(iy)|^2 - |P2(iy)|^2`.
pub fn f_of_y(pair: &CharPolyPair, y: f64) -> f64 {
    let iy = Complex64::new(0.0, y);
    poly::eval_complex(&pair.p1, iy).norm_sqr() - poly::eval_complex(&pair.p2, iy).norm_sqr()
}

/// Even coefficients `c0, c2, ..., c10` of `F` at the endemic equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCoefficients {
    pub c: [f64; 6],
    /// Force of infection at the endemic equilibrium, `a1a2a3μκd(R0−1)/ρ`.
    pub lambda_star: f64,
    /// The long closed-form expression for `c0`, kept for comparison with
    /// the authoritative factored value `c[0]`.
    pub c0_long_form: f64,
}

impl StabilityCoefficients {
    pub fn c0(&self) -> f64 {
        self.c[0]
    }
    pub fn c2(&self) -> f64 {
        self.c[1]
    }

    /// `Σ c_{2k} y^{2k}`.
    pub fn eval(&self, y: f64) -> f64 {
        let w = y * y;
        self.c.iter().rev().fold(0.0, |acc, &c| acc * w + c)
    }

    /// `c0, ..., c8` all strictly positive (`c10 = 1`).
    pub fn all_positive(&self) -> bool {
        self.c.iter().all(|&c| c > 0.0)
    }
}

/// Coefficients of `F_end`; requires `R0 > 1`.
pub fn fend_coefficients(p: &ModelParams) -> Result<StabilityCoefficients> {
    p.validate()?;
    let r0 = p.r0();
    if r0 <= 1.0 {
        return Err(Error::NoEndemicEquilibrium { r0 });
    }
    let coeffs = fend_coefficients_continued(p);
    let scale = coeffs.c[0].abs().max(coeffs.c0_long_form.abs());
    if (coeffs.c[0] - coeffs.c0_long_form).abs() > 1e-6 * scale {
        debug!(
            "c0 long form {:e} disagrees with |P1(0)|^2 - |P2(0)|^2 = {:e} at beta = {}",
            coeffs.c0_long_form, coeffs.c[0], p.beta
        );
    }
    Ok(coeffs)
}

/// Closed-form coefficients without the `R0 > 1` guard; below threshold the
/// endemic point is continued analytically (negative components).
pub(crate) fn fend_coefficients_continued(p: &ModelParams) -> StabilityCoefficients {
    let k = p.derived().expect("validated");
    let (a1, a2, a3, a, at, rho) = (k.a1, k.a2, k.a3, k.a, k.a_tilde, k.rho);
    let (beta, mu, kap, d, eta, lam) = (p.beta, p.mu, p.kappa, p.d, p.eta, p.lambda);
    let dew = p.delta * p.epsilon * p.omega;
    let r0 = p.r0();
    let excess = r0 - 1.0;
    let lambda_star = a * mu * kap * d * excess / rho;
    let ls_mu2 = (lambda_star + mu).powi(2);
    let sq = |x: f64| x * x;

    // F(0) = (P1(0) - P2(0)) (P1(0) + P2(0)); the second factor has the
    // closed form -(μ d A / (R0 ρ)) (1 - R0) (R0 κ d Ã + Λη a2 a3).
    let eta_c = a1 * d * (1.0 + a * mu * kap * d * (1.0 - r0) / (beta * rho));
    let p1_0 = a * d * (lambda_star + mu);
    let p2_0 = -(eta_c * a2 * a3 * mu + dew * d * lambda_star);
    let sum0 = -(mu * d * a / (r0 * rho)) * (1.0 - r0) * (r0 * kap * d * at + lam * eta * a2 * a3);
    let c0 = (p1_0 - p2_0) * sum0;

    let c0_long_form = sq(a * mu / (beta * rho))
        * d.powi(3)
        * kap
        * (a * mu + beta * at)
        * excess
        * (sq(beta) * lam * eta / mu * (a2 * a3 + dew / a1) + rho + kap * d * (a * mu - 2.0 * beta * dew));

    let mixed = a2 * a3 + a2 * mu + a3 * mu - a2 * d - a3 * d - mu * d;
    let x = a2 * a3 * mu * kap * excess / (beta * rho);
    let c2 = (sq(a2 * a3 * mu) + 2.0 * a1 * (a2 * a3).powi(3) * sq(mu) * kap * d * excess / rho)
        * (sq(a1) + sq(d))
        + (sq(a1 * d) * a2 * a3 * mu * kap * excess / (beta * rho))
            * (x * (sq(a) * (sq(beta) - sq(d))
                + sq(a1 * d) * (sq(beta) - sq(mu)) * (sq(a2) + sq(a3))
                + 2.0 * beta * dew * mixed * a1 * d
                + sq(beta) * (sq(a2 * a3 * d) - sq(dew)))
                - 2.0 * beta * dew * mixed
                + 2.0 * a1 * d * (sq(a2 * a3) + sq(a2 * mu) + sq(a3 * mu) + beta * mu * (sq(a2) + sq(a3))));

    let bracket = beta * rho + beta * kap * d * at + a * mu * kap * d;
    let c4 = sq(a1 * d) * a2 * a3 * mu * kap * excess / (beta * rho)
        * (a1 * d * (sq(a2) + sq(a3) + sq(mu)) / (beta * rho) * bracket
            + 2.0 * a1 * mu * d * beta
            + 2.0 * kap * d * dew * (a * mu + beta * at) / rho)
        + sq(a2 * a3) * (sq(a1) + sq(d))
        + sq(a1 * d * lambda_star)
        + (sq(a1 * a2) + sq(a1 * a3) + sq(a2 * a3) + sq(a2 * d) + sq(a3 * d)) * ls_mu2;
    let c6 = (a1 * d).powi(3) * a2 * a3 * mu * kap * excess / sq(beta * rho) * bracket
        + sq(a2) * (sq(a1) + sq(d))
        + sq(a3) * (sq(a1) + sq(a2) + sq(d))
        + ls_mu2 * (sq(a1) + sq(a2) + sq(a3) + sq(d));
    let c8 = sq(a1) + sq(a2) + sq(a3) + sq(d) + ls_mu2;

    StabilityCoefficients {
        c: [c0, c2, c4, c6, c8, 1.0],
        lambda_star,
        c0_long_form,
    }
}

/// Largest relative discrepancy between `F` evaluated through complex moduli
/// at the endemic linearization and the closed-form coefficients, over `ys`.
/// Each difference is scaled by the sum of absolute term magnitudes.
pub fn fend_consistency(p: &ModelParams, ys: &[f64]) -> Result<f64> {
    let coeffs = fend_coefficients(p)?;
    let eq = endemic_closed_form(p);
    let lin = linearize(p, &eq)?;
    let pair = char_poly_pair(p, &lin.point)?;
    let mut worst: f64 = 0.0;
    for &y in ys {
        let w = y * y;
        let scale: f64 = coeffs
            .c
            .iter()
            .enumerate()
            .map(|(k, c)| (c * w.powi(k as i32)).abs())
            .sum();
        let diff = (f_of_y(&pair, y) - coeffs.eval(y)).abs() / scale;
        worst = worst.max(diff);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DfeClassification {
    /// `a1 d >= 1`: stability is that of the undelayed system for every delay.
    DelayIndependent { stable: bool },
    /// `a1 d < 1`: `F` has a positive simple root and a critical delay exists.
    DelayDependent { theorem_root: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfeStability {
    pub r0: f64,
    pub a1_d: f64,
    pub classification: DfeClassification,
    /// Positive roots of `F` at the DFE computed from the polynomial itself.
    pub f_positive_roots: Vec<f64>,
    /// `P1(0) + P2(0) = a1 a2 a3 d μ (1 - R0)`.
    pub p1_plus_p2_at_zero: f64,
}

pub fn dfe_stability(p: &ModelParams) -> Result<DfeStability> {
    let k = p.derived()?;
    let r0 = p.r0();
    if (r0 - 1.0).abs() <= THRESHOLD_TOLERANCE {
        return Err(Error::ThresholdCase);
    }
    let dfe = crate::equilibria::disease_free_equilibrium(p)?;
    let lin = linearize(p, &dfe)?;
    let pair = char_poly_pair(p, &lin.point)?;
    let a1_d = k.a1 * p.d;
    let classification = if a1_d >= 1.0 - THRESHOLD_TOLERANCE {
        DfeClassification::DelayIndependent { stable: r0 < 1.0 }
    } else {
        let (a1s, ds) = (k.a1 * k.a1, p.d * p.d);
        let w = 0.5 * (-a1s - ds + ((a1s - ds).powi(2) + 4.0).sqrt());
        DfeClassification::DelayDependent {
            theorem_root: w.sqrt(),
        }
    };
    Ok(DfeStability {
        r0,
        a1_d,
        classification,
        f_positive_roots: pair.f_positive_roots(),
        p1_plus_p2_at_zero: pair.p1[0] + pair.p2[0],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub beta: f64,
    pub r0: f64,
    /// `c0, c2, c4, c6, c8`.
    pub coefficients: [f64; 5],
    pub classification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub coefficient: String,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub beta_min: f64,
    pub beta_max: f64,
    pub rows: Vec<ScanRow>,
    /// Bisection-refined sign changes of `c0` and `c2`, in increasing `beta`.
    pub crossings: Vec<Crossing>,
    /// Maximal runs of grid points where all coefficients are positive and `R0 > 1`.
    pub stable_intervals: Vec<(f64, f64)>,
    /// Grid points where a coefficient vanishes to rounding without a
    /// bracketing sign change; the grid cannot resolve these.
    pub unresolved: Vec<Crossing>,
    pub conclusion: String,
}

/// Signs of the `F_end` coefficients over a linear `beta` grid.
pub fn beta_threshold_scan(
    p: &ModelParams,
    beta_min: f64,
    beta_max: f64,
    n_points: usize,
) -> Result<StabilityReport> {
    p.validate()?;
    if !(beta_min > 0.0 && beta_max <= 5.0 && beta_min < beta_max) {
        return Err(Error::InvalidInput(format!(
            "beta range [{beta_min}, {beta_max}] must lie in ]0, 5] with min < max"
        )));
    }
    if n_points < 2 {
        return Err(Error::InvalidInput("scan needs at least 2 points".into()));
    }
    let step = (beta_max - beta_min) / (n_points - 1) as f64;
    let betas: Vec<f64> = (0..n_points)
        .map(|k| if k + 1 == n_points { beta_max } else { beta_min + k as f64 * step })
        .collect();
    let rows: Vec<ScanRow> = betas
        .par_iter()
        .map(|&beta| {
            let q = p.with_beta(beta);
            let c = fend_coefficients_continued(&q);
            let r0 = q.r0();
            let classification = if r0 <= 1.0 {
                NO_ENDEMIC
            } else if c.all_positive() {
                STABLE_FOR_ALL_DELAYS
            } else {
                UNDETERMINED
            };
            ScanRow {
                beta,
                r0,
                coefficients: [c.c[0], c.c[1], c.c[2], c.c[3], c.c[4]],
                classification: classification.to_string(),
            }
        })
        .collect();

    let mut crossings = Vec::new();
    let mut unresolved = Vec::new();
    for (idx, name) in [(0usize, "c0"), (1, "c2")] {
        let value = |beta: f64| fend_coefficients_continued(&p.with_beta(beta)).c[idx];
        for pair in rows.windows(2) {
            let (fa, fb) = (pair[0].coefficients[idx], pair[1].coefficients[idx]);
            if fa != 0.0 && fb != 0.0 && fa.signum() != fb.signum() {
                let xtol = 1e-10f64.min(1e-9 * pair[0].beta);
                if let Some(beta) = poly::bisect(value, pair[0].beta, pair[1].beta, xtol) {
                    crossings.push(Crossing {
                        coefficient: name.to_string(),
                        beta,
                    });
                }
            }
        }
        for row in &rows {
            if row.coefficients[idx] == 0.0 {
                unresolved.push(Crossing {
                    coefficient: name.to_string(),
                    beta: row.beta,
                });
            }
        }
    }
    crossings.sort_by(|a, b| a.beta.partial_cmp(&b.beta).unwrap());

    let mut stable_intervals = Vec::new();
    let mut start: Option<f64> = None;
    for (k, row) in rows.iter().enumerate() {
        let stable = row.classification == STABLE_FOR_ALL_DELAYS;
        match (stable, start) {
            (true, None) => start = Some(row.beta),
            (false, Some(s)) => {
                stable_intervals.push((s, rows[k - 1].beta));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        stable_intervals.push((s, rows.last().unwrap().beta));
    }

    let conclusion = if rows.iter().all(|r| r.classification == STABLE_FOR_ALL_DELAYS) {
        format!("E* {STABLE_FOR_ALL_DELAYS}")
    } else if stable_intervals.is_empty() {
        "no sub-interval with all coefficients positive and R0 > 1".to_string()
    } else {
        format!(
            "E* {STABLE_FOR_ALL_DELAYS} on {} sub-interval(s); elsewhere undetermined or R0 <= 1",
            stable_intervals.len()
        )
    };

    Ok(StabilityReport {
        beta_min,
        beta_max,
        rows,
        crossings,
        stable_intervals,
        unresolved,
        conclusion,
    })
}
