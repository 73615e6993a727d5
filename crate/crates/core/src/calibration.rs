//! Least-squares calibration of `(tau, delta, beta, alpha1)` against observed
//! infective counts.
//!
//! The objective compares point values of `I(t)` (not cumulative counts) at
//! the grid node nearest each observation time, with the full delayed model
//! and `u ≡ 1`. Search runs in three deterministic stages: a coarse lattice
//! over the box, bounded Levenberg-Marquardt on the continuous axes
//! alternating with a pattern search over `tau` snaps, and a final compass
//! search with step halving. The middle stage is there because `delta` and
//! `alpha1` sit on a long, narrow valley where compass moves stall.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{integrate, Trajectory, DEFAULT_STEP};
use crate::params::{ModelParams, State, I};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceSeries {
    /// `(t in days since start, observed infectives)`.
    pub observations: Vec<(f64, f64)>,
}

impl IncidenceSeries {
    pub fn new(observations: Vec<(f64, f64)>) -> Result<Self> {
        let s = Self { observations };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::InvalidInput("incidence series is empty".into()));
        }
        for &(t, v) in &self.observations {
            if !(t.is_finite() && t >= 0.0) || !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!("bad observation ({t}, {v})")));
            }
        }
        if self.observations.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput("observation times must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        self.observations.last().map_or(0.0, |o| o.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn at(&self, z: f64) -> f64 {
        self.lo + z * self.width()
    }
}

/// Search box for the four fitted parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBoxes {
    pub tau: Interval,
    pub delta: Interval,
    pub beta: Interval,
    pub alpha1: Interval,
}

impl Default for FitBoxes {
    fn default() -> Self {
        Self {
            tau: Interval::new(2.0, 3.0),
            delta: Interval::new(0.01, 0.02),
            beta: Interval::new(0.7, 1.2),
            alpha1: Interval::new(0.005, 0.025),
        }
    }
}

impl FitBoxes {
    fn axes(&self) -> [Interval; 4] {
        [self.tau, self.delta, self.beta, self.alpha1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub tau: f64,
    pub delta: f64,
    pub beta: f64,
    pub alpha1: f64,
}

impl FitParams {
    fn to_array(self) -> [f64; 4] {
        [self.tau, self.delta, self.beta, self.alpha1]
    }

    fn from_array(v: [f64; 4]) -> Self {
        Self {
            tau: v[0],
            delta: v[1],
            beta: v[2],
            alpha1: v[3],
        }
    }

    /// Parameters with these values substituted and `tau` snapped to the
    /// nearest multiple of `h`.
    pub fn apply(&self, base: &ModelParams, h: f64) -> ModelParams {
        ModelParams {
            tau: (self.tau / h).round() * h,
            delta: self.delta,
            beta: self.beta,
            alpha1: self.alpha1,
            ..*base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub boxes: FitBoxes,
    /// Parameters that are not fitted.
    pub base: ModelParams,
    pub init: State,
    pub h: f64,
    /// Lattice points per axis in the coarse stage (tau, delta, beta, alpha1).
    pub grid: [usize; 4],
    /// Refinement stops once the compass step falls below this fraction of
    /// each axis width.
    pub refine_tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for FitSpec {
    fn default() -> Self {
        Self {
            boxes: FitBoxes::default(),
            base: ModelParams::table1(),
            init: State::table1_initial(),
            h: DEFAULT_STEP,
            grid: [5, 5, 6, 5],
            refine_tolerance: 1e-4,
            max_evaluations: 20_000,
        }
    }
}

impl FitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in ["tau", "delta", "beta", "alpha1"].iter().zip(self.boxes.axes()) {
            if !(axis.lo.is_finite() && axis.hi.is_finite() && axis.lo <= axis.hi) {
                return Err(Error::InvalidInput(format!("box for {name} is empty")));
            }
        }
        if self.grid.iter().any(|&g| g == 0) {
            return Err(Error::InvalidInput("grid needs at least one point per axis".into()));
        }
        self.base.validate()
    }

    fn steps_for(&self, data: &IncidenceSeries) -> f64 {
        (data.last_time() / self.h).ceil().max(1.0) * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFlags {
    pub tau: bool,
    pub delta: bool,
    pub beta: bool,
    pub alpha1: bool,
}

impl BoundaryFlags {
    pub fn any(&self) -> bool {
        self.tau || self.delta || self.beta || self.alpha1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Best point, `tau` reported at its grid snap.
    pub params: FitParams,
    pub sse: f64,
    pub boundary: BoundaryFlags,
    pub trajectory: Trajectory,
    pub evaluations: usize,
}

fn simulate(candidate: &FitParams, spec: &FitSpec, horizon: f64) -> Result<Trajectory> {
    let p = candidate.apply(&spec.base, spec.h);
    integrate(&p, &spec.init, horizon, spec.h, None)
}

fn sse_against(traj: &Trajectory, data: &IncidenceSeries) -> f64 {
    data.observations
        .iter()
        .map(|&(t, obs)| {
            let r = traj.states[traj.nearest_index(t)][I] - obs;
            r * r
        })
        .sum()
}

/// `Σ (I_model(t_k) - I_obs(t_k))^2`; a failed integration yields `+∞`.
pub fn sse_objective(candidate: &FitParams, spec: &FitSpec, data: &IncidenceSeries) -> Result<f64> {
    data.validate()?;
    for ((name, axis), v) in ["tau", "delta", "beta", "alpha1"]
        .iter()
        .zip(spec.boxes.axes())
        .zip(candidate.to_array())
    {
        if !axis.contains(v) {
            return Err(Error::InvalidInput(format!(
                "{name} = {v} outside [{}, {}]",
                axis.lo, axis.hi
            )));
        }
    }
    Ok(objective(candidate, spec, data))
}

fn objective(candidate: &FitParams, spec: &FitSpec, data: &IncidenceSeries) -> f64 {
    match simulate(candidate, spec, spec.steps_for(data)) {
        Ok(traj) => sse_against(&traj, data),
        Err(e) => {
            warn!("candidate {candidate:?} rejected: {e}");
            f64::INFINITY
        }
    }
}

/// Samples `I` from a model run at each time, nearest-node.
pub fn synthetic_series(candidate: &FitParams, spec: &FitSpec, times: &[f64]) -> Result<IncidenceSeries> {
    let horizon = (times.iter().fold(0.0f64, |m, &t| m.max(t)) / spec.h).ceil().max(1.0) * spec.h;
    let traj = simulate(candidate, spec, horizon)?;
    IncidenceSeries::new(
        times
            .iter()
            .map(|&t| (t, traj.states[traj.nearest_index(t)][I]))
            .collect(),
    )
}

/// Lattice points used as starting points for the local stages.
const MULTI_STARTS: usize = 6;

fn lattice(n: usize) -> Vec<f64> {
    if n == 1 {
        vec![0.5]
    } else {
        (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
    }
}

/// Bounded Levenberg-Marquardt on the continuous axes `delta, beta, alpha1`
/// in unit-box coordinates, `tau` held fixed. Axes sitting on a bound with
/// the gradient pointing outward are frozen for that iteration.
fn levenberg_marquardt(
    mut z: [f64; 4],
    mut best: f64,
    residuals: &dyn Fn([f64; 4]) -> Option<Vec<f64>>,
    evaluations: &mut usize,
) -> ([f64; 4], f64) {
    let sse = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let Some(mut r) = residuals(z) else {
        return (z, best);
    };
    *evaluations += 1;
    let mut damping = 1e-3;
    for _ in 0..200 {
        let mut jac = DMatrix::zeros(r.len(), 3);
        for j in 0..3 {
            let step = if z[j + 1] > 0.5 { -1e-7 } else { 1e-7 };
            let mut zp = z;
            zp[j + 1] += step;
            let Some(rp) = residuals(zp) else {
                return (z, best);
            };
            *evaluations += 1;
            for (i, (a, b)) in rp.iter().zip(&r).enumerate() {
                jac[(i, j)] = (a - b) / step;
            }
        }
        let rv = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rv;
        let a = jac.transpose() * &jac;
        let free: Vec<usize> = (0..3)
            .filter(|&j| !((z[j + 1] <= 0.0 && g[j] > 0.0) || (z[j + 1] >= 1.0 && g[j] < 0.0)))
            .collect();
        if free.is_empty() {
            break;
        }
        let mut accepted = false;
        while damping < 1e12 {
            let n = free.len();
            let mut m = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            for (p, &i) in free.iter().enumerate() {
                rhs[p] = -g[i];
                for (q, &k) in free.iter().enumerate() {
                    m[(p, q)] = a[(i, k)];
                }
                m[(p, p)] += damping * a[(i, i)].max(1e-12);
            }
            let Some(delta) = m.lu().solve(&rhs) else {
                damping *= 10.0;
                continue;
            };
            let mut trial = z;
            for (p, &i) in free.iter().enumerate() {
                trial[i + 1] = (z[i + 1] + delta[p]).clamp(0.0, 1.0);
            }
            if trial == z {
                break;
            }
            *evaluations += 1;
            match residuals(trial) {
                Some(rt) if sse(&rt) < best => {
                    let gain = best - sse(&rt);
                    best = sse(&rt);
                    z = trial;
                    r = rt;
                    damping = (damping * 0.1).max(1e-12);
                    accepted = gain > 1e-15 * best.max(f64::MIN_POSITIVE);
                    break;
                }
                _ => damping *= 10.0,
            }
        }
        if !accepted {
            break;
        }
    }
    (z, best)
}

pub fn fit(spec: &FitSpec, data: &IncidenceSeries) -> Result<FitResult> {
    spec.validate()?;
    data.validate()?;
    let axes = spec.boxes.axes();
    let to_params = |z: [f64; 4]| {
        let mut v = [0.0; 4];
        for i in 0..4 {
            v[i] = axes[i].at(z[i].clamp(0.0, 1.0));
        }
        FitParams::from_array(v)
    };

    let levels: Vec<Vec<f64>> = spec.grid.iter().map(|&n| lattice(n)).collect();
    let mut points = Vec::new();
    for &a in &levels[0] {
        for &b in &levels[1] {
            for &c in &levels[2] {
                for &d in &levels[3] {
                    points.push([a, b, c, d]);
                }
            }
        }
    }
    let values: Vec<f64> = points
        .par_iter()
        .map(|z| objective(&to_params(*z), spec, data))
        .collect();
    let mut evaluations = values.len();
    if values.iter().all(|v| !v.is_finite()) {
        return Err(Error::Infeasible(format!(
            "all {} lattice candidates failed to integrate",
            values.len()
        )));
    }

    let residuals = |z: [f64; 4]| -> Option<Vec<f64>> {
        let traj = simulate(&to_params(z), spec, spec.steps_for(data)).ok()?;
        Some(
            data.observations
                .iter()
                .map(|&(t, obs)| traj.states[traj.nearest_index(t)][I] - obs)
                .collect(),
        )
    };
    let tau_snap = if axes[0].width() > 0.0 { spec.h / axes[0].width() } else { f64::INFINITY };
    let tau_start = if spec.grid[0] > 1 { 1.0 / (spec.grid[0] - 1) as f64 } else { 0.5 };

    // tau moves in whole grid snaps; each trial value is profiled over the
    // continuous axes before it is compared
    let polish = |z0: [f64; 4], v0: f64| -> ([f64; 4], f64, usize) {
        let mut evals = 0;
        let (mut z, mut best) = levenberg_marquardt(z0, v0, &residuals, &mut evals);
        let mut s = tau_start;
        while s >= tau_snap {
            let mut moved = false;
            for dir in [1.0, -1.0] {
                let mut trial = z;
                trial[0] = (z[0] + dir * s).clamp(0.0, 1.0);
                if trial[0] == z[0] {
                    continue;
                }
                let v = objective(&to_params(trial), spec, data);
                evals += 1;
                let (zt, vt) = levenberg_marquardt(trial, v, &residuals, &mut evals);
                if vt < best {
                    (z, best, moved) = (zt, vt, true);
                    break;
                }
            }
            if !moved {
                s *= 0.5;
            }
        }
        (z, best, evals)
    };

    let mut order: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order.truncate(MULTI_STARTS);
    let polished: Vec<([f64; 4], f64, usize)> = order
        .par_iter()
        .map(|&i| polish(points[i], values[i]))
        .collect();
    evaluations += polished.iter().map(|p| p.2).sum::<usize>();
    let (mut z, mut best, _) = *polished
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one finite start");
    let mut step: [f64; 4] = std::array::from_fn(|i| {
        if spec.grid[i] > 1 {
            0.5 / (spec.grid[i] - 1) as f64
        } else {
            0.25
        }
    });
    while step.iter().any(|&s| s >= spec.refine_tolerance) && evaluations < spec.max_evaluations {
        let mut improved = false;
        for i in 0..4 {
            if axes[i].width() == 0.0 || step[i] < spec.refine_tolerance {
                continue;
            }
            for dir in [1.0, -1.0] {
                let mut trial = z;
                trial[i] = (trial[i] + dir * step[i]).clamp(0.0, 1.0);
                if trial[i] == z[i] {
                    continue;
                }
                let v = objective(&to_params(trial), spec, data);
                evaluations += 1;
                if v < best {
                    best = v;
                    z = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for s in &mut step {
                *s *= 0.5;
            }
        }
    }

    let mut params = to_params(z);
    params.tau = (params.tau / spec.h).round() * spec.h;
    let horizon = spec.steps_for(data);
    let trajectory = simulate(&params, spec, horizon)?;
    let sse = sse_against(&trajectory, data);
    let edge = |axis: Interval, v: f64| {
        let eps = 1e-9 * axis.width().max(f64::MIN_POSITIVE);
        (v - axis.lo).abs() <= eps || (v - axis.hi).abs() <= eps
    };
    Ok(FitResult {
        boundary: BoundaryFlags {
            tau: edge(axes[0], params.tau),
            delta: edge(axes[1], params.delta),
            beta: edge(axes[2], params.beta),
            alpha1: edge(axes[3], params.alpha1),
        },
        params,
        sse,
        trajectory,
        evaluations,
    })
}
