use serde::{Deserialize, Serialize};

use super::adjoint::discrete_phi;
use super::{AdjointTrajectory, OcpWeights};
use crate::model::Trajectory;
use crate::params::ModelParams;

/// Consecutive near-zero nodes that count as a possible singular arc.
const SINGULAR_MIN_NODES: usize = 5;

/// The three conditions around the first switch `t_s`: `φ < 0` before it,
/// `φ̇(t_s) > 0`, and `φ > 0` after it. Nodes inside the ambiguous band are
/// not checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrictBangBang {
    pub switch_time: f64,
    pub before_negative: bool,
    pub slope: f64,
    pub slope_positive: bool,
    pub after_positive: bool,
}

impl StrictBangBang {
    pub fn holds(&self) -> bool {
        self.before_negative && self.slope_positive && self.after_positive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingRecord {
    /// `φ` at every state node; the last entry is `φ(T) = W_u`.
    pub phi: Vec<f64>,
    pub h: f64,
    /// Half-width of the ambiguous band around zero.
    pub tolerance: f64,
    /// Sign changes of `φ`, linearly interpolated between bracketing nodes.
    pub switches: Vec<f64>,
    /// Centered-difference slopes `φ̇` at each switch.
    pub slopes: Vec<f64>,
    pub strict_bang_bang: Option<StrictBangBang>,
    /// Intervals where `|φ|` stays inside the band; flagged, never synthesized.
    pub possible_singular_arcs: Vec<(f64, f64)>,
}

impl SwitchingRecord {
    pub fn from_phi(phi: Vec<f64>, h: f64, tolerance: f64) -> Self {
        let n = phi.len();
        let mut switches = Vec::new();
        let mut slopes = Vec::new();
        let mut last: Option<usize> = None;
        for k in 0..n {
            if phi[k] == 0.0 {
                continue;
            }
            if let Some(a) = last {
                if phi[a].signum() != phi[k].signum() {
                    let t = a as f64 * h + (k - a) as f64 * h * phi[a] / (phi[a] - phi[k]);
                    switches.push(t);
                    slopes.push(centered_slope(&phi, h, t));
                }
            }
            last = Some(k);
        }

        let strict_bang_bang = switches.first().map(|&t_s| {
            let slope = slopes[0];
            let unambiguous = |k: &usize| phi[*k].abs() > tolerance;
            let split = (t_s / h).floor() as usize;
            let before_negative = (0..=split.min(n - 1)).filter(unambiguous).all(|k| phi[k] < 0.0);
            let after_positive = (split + 1..n).filter(unambiguous).all(|k| phi[k] > 0.0);
            StrictBangBang {
                switch_time: t_s,
                before_negative,
                slope,
                slope_positive: slope > 0.0,
                after_positive,
            }
        });

        let mut possible_singular_arcs = Vec::new();
        let mut run_start: Option<usize> = None;
        for k in 0..=n {
            let inside = k < n && phi[k].abs() <= tolerance;
            match (inside, run_start) {
                (true, None) => run_start = Some(k),
                (false, Some(s)) => {
                    if k - s >= SINGULAR_MIN_NODES {
                        possible_singular_arcs.push((s as f64 * h, (k - 1) as f64 * h));
                    }
                    run_start = None;
                }
                _ => {}
            }
        }

        Self {
            phi,
            h,
            tolerance,
            switches,
            slopes,
            strict_bang_bang,
            possible_singular_arcs,
        }
    }
}

/// `(φ[j+2] - φ[j-2]) / (4h)` around the node nearest `t`, one-sided at the ends.
fn centered_slope(phi: &[f64], h: f64, t: f64) -> f64 {
    let n = phi.len();
    let j = ((t / h).round() as usize).min(n - 1);
    let lo = j.saturating_sub(2);
    let hi = (j + 2).min(n - 1);
    if hi == lo {
        return 0.0;
    }
    (phi[hi] - phi[lo]) / ((hi - lo) as f64 * h)
}

/// Switching function `φ = W_u + δ I (λ3 - λ2)` of the discrete problem on
/// every node, with switch detection and the strict bang-bang checks.
pub fn switching_function(
    state: &Trajectory,
    adjoint: &AdjointTrajectory,
    p: &ModelParams,
    w: &OcpWeights,
) -> SwitchingRecord {
    let mut phi = discrete_phi(state, adjoint, p, w);
    let n = state.steps();
    let l = &adjoint.costates[n];
    phi.push(w.w_u + p.delta * state.states[n][crate::params::I] * (l[2] - l[1]));
    SwitchingRecord::from_phi(phi, state.h, w.switching_tolerance())
}
