//! Plain-text formats: `key = value` configuration files and the CSV
//! artifacts written by the command-line tool.
//!
//! Floats are written with `{:.16e}` (17 significant digits) so every value
//! survives a write/read cycle bit for bit.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::calibration::IncidenceSeries;
use crate::error::{Error, Result};
use crate::model::{Trajectory, DEFAULT_STEP};
use crate::ocp::{OcpSolution, OcpWeights};
use crate::params::{ModelParams, State, COMPONENT_NAMES};
use crate::stability::StabilityReport;

/// Everything a run needs besides the command itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ModelParams,
    pub init: State,
    pub horizon: f64,
    pub h: f64,
    pub weights: OcpWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        let weights = OcpWeights::default();
        Self {
            params: ModelParams::table1(),
            init: State::table1_initial(),
            horizon: weights.horizon,
            h: DEFAULT_STEP,
            weights,
        }
    }
}

const STATE_KEYS: [&str; 5] = ["S0", "I0", "Q0", "R0", "B0"];

impl RunConfig {
    /// Parses `key = value` lines over the reference defaults. `#` starts a
    /// comment. Unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected key = value, got {content:?}"),
            })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| Error::Config {
                line,
                message: format!("{key}: {:?} is not a number", value.trim()),
            })?;
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config {
                    line,
                    message: format!("{key} given twice"),
                });
            }
            seen.push(key.to_string());
            if !cfg.set(key, value) {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key {key}"),
                });
            }
        }
        cfg.weights.horizon = cfg.horizon;
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: f64) -> bool {
        let p = &mut self.params;
        let slot = match key {
            "Lambda" => &mut p.lambda,
            "mu" => &mut p.mu,
            "beta" => &mut p.beta,
            "kappa" => &mut p.kappa,
            "omega" => &mut p.omega,
            "delta" => &mut p.delta,
            "epsilon" => &mut p.epsilon,
            "alpha1" => &mut p.alpha1,
            "alpha2" => &mut p.alpha2,
            "eta" => &mut p.eta,
            "d" => &mut p.d,
            "tau" => &mut p.tau,
            "T" => &mut self.horizon,
            "h" => &mut self.h,
            "W_I" => &mut self.weights.w_i,
            "W_B" => &mut self.weights.w_b,
            "W_u" => &mut self.weights.w_u,
            "u_max" => &mut self.weights.u_max,
            _ => match STATE_KEYS.iter().position(|k| *k == key) {
                Some(i) => &mut self.init.0[i],
                None => return false,
            },
        };
        *slot = value;
        true
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.weights.validate()?;
        for (name, v) in STATE_KEYS.iter().zip(self.init.0) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "initial state must be finite and non-negative".into(),
                });
            }
        }
        crate::model::steps_for("T", self.horizon, self.h)?;
        crate::model::steps_for("tau", self.params.tau, self.h)?;
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` gives back the same values.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.params.fields() {
            out.push_str(&format!("{k} = {v:.16e}\n"));
        }
        for (k, v) in STATE_KEYS.iter().zip(self.init.0) {
            out.push_str(&format!("{k} = {v:.16e}\n"));
        }
        let w = &self.weights;
        for (k, v) in [
            ("T", self.horizon),
            ("h", self.h),
            ("W_I", w.w_i),
            ("W_B", w.w_b),
            ("W_u", w.w_u),
            ("u_max", w.u_max),
        ] {
            out.push_str(&format!("{k} = {v:.16e}\n"));
        }
        out
    }
}

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidInput(format!("I/O: {e}"))
}

/// `t,S,I,Q,R,B` and, when a control is given, `u`. The control has one value
/// per step; the last node repeats the final step's value.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory, control: Option<&[f64]>) -> Result<()> {
    write_trajectory_csv_strided(w, traj, control, 1)
}

/// Like [`write_trajectory_csv`] but keeps only every `stride`-th node; the
/// final node is always written.
pub fn write_trajectory_csv_strided<W: Write>(
    mut w: W,
    traj: &Trajectory,
    control: Option<&[f64]>,
    stride: usize,
) -> Result<()> {
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be positive".into()));
    }
    if let Some(u) = control {
        if u.len() != traj.steps() {
            return Err(Error::GridMismatch(format!(
                "control has {} values for {} steps",
                u.len(),
                traj.steps()
            )));
        }
    }
    let mut header = format!("t,{}", COMPONENT_NAMES.join(","));
    if control.is_some() {
        header.push_str(",u");
    }
    writeln!(w, "{header}").map_err(io_err)?;
    let last = traj.len() - 1;
    for (k, x) in traj.states.iter().enumerate() {
        if k % stride != 0 && k != last {
            continue;
        }
        let mut row = f(traj.time(k));
        for v in x.0 {
            row.push(',');
            row.push_str(&f(v));
        }
        if let Some(u) = control {
            row.push(',');
            row.push_str(&f(u[k.min(u.len().saturating_sub(1))]));
        }
        writeln!(w, "{row}").map_err(io_err)?;
    }
    Ok(())
}

/// `t,S,I,Q,R,B,u,phi,l1,..,l5`.
pub fn write_solution_csv<W: Write>(mut w: W, sol: &OcpSolution) -> Result<()> {
    let u = sol.control_values();
    writeln!(w, "t,S,I,Q,R,B,u,phi,l1,l2,l3,l4,l5").map_err(io_err)?;
    for (k, x) in sol.state.states.iter().enumerate() {
        let mut cells = vec![f(sol.state.time(k))];
        cells.extend(x.0.iter().map(|&v| f(v)));
        cells.push(f(u[k.min(u.len() - 1)]));
        cells.push(f(sol.switching.phi[k]));
        cells.extend(sol.adjoint.costates[k].iter().map(|&v| f(v)));
        writeln!(w, "{}", cells.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// `beta,c0,c2,c4,c6,c8,classification`.
pub fn write_scan_csv<W: Write>(mut w: W, report: &StabilityReport) -> Result<()> {
    writeln!(w, "beta,c0,c2,c4,c6,c8,classification").map_err(io_err)?;
    for row in &report.rows {
        let mut cells = vec![f(row.beta)];
        cells.extend(row.coefficients.iter().map(|&v| f(v)));
        cells.push(row.classification.clone());
        writeln!(w, "{}", cells.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// A parsed CSV file: header names and rows of raw cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header: Vec<String> = match lines.next() {
            Some(l) => l.map_err(io_err)?.split(',').map(|s| s.trim().to_string()).collect(),
            None => return Err(Error::InvalidInput("empty CSV".into())),
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if cells.len() != header.len() {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} cells, header has {}",
                    i + 2,
                    cells.len(),
                    header.len()
                )));
            }
            rows.push(cells);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column parsed as floats.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .column(name)
            .ok_or_else(|| Error::InvalidInput(format!("missing column {name}")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse()
                    .map_err(|_| Error::InvalidInput(format!("row {}: {:?} is not a number", i + 2, r[c])))
            })
            .collect()
    }
}

/// Reads `t,I_obs`.
pub fn read_incidence_csv<R: BufRead>(r: R) -> Result<IncidenceSeries> {
    let table = CsvTable::read(r)?;
    let t = table.numbers("t")?;
    let obs = table.numbers("I_obs")?;
    IncidenceSeries::new(t.into_iter().zip(obs).collect())
}

pub fn write_incidence_csv<W: Write>(mut w: W, series: &IncidenceSeries) -> Result<()> {
    writeln!(w, "t,I_obs").map_err(io_err)?;
    for &(t, v) in &series.observations {
        writeln!(w, "{},{}", f(t), f(v)).map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::integrate;

    #[test]
    fn config_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.params.beta = 0.123456789012345678;
        cfg.init.0[4] = 1.0 / 3.0;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_overrides_and_errors() {
        let cfg = RunConfig::parse("# comment\nbeta = 0.9\n\nW_I = 10 # trailing\n").unwrap();
        assert_eq!(cfg.params.beta, 0.9);
        assert_eq!(cfg.weights.w_i, 10.0);
        assert_eq!(cfg.params.lambda, ModelParams::table1().lambda);
        assert!(matches!(RunConfig::parse("gamma = 1"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(RunConfig::parse("beta = 1\nbeta = 2"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(RunConfig::parse("beta 1"), Err(Error::Config { .. })));
        assert!(RunConfig::parse("tau = 2.001").is_err());
        assert!(RunConfig::parse("mu = -1").is_err());
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let p = ModelParams::table1();
        let traj = integrate(&p, &State::table1_initial(), 3.0, DEFAULT_STEP, None).unwrap();
        let u = vec![1.5; traj.steps()];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, Some(&u)).unwrap();
        let table = CsvTable::read(buf.as_slice()).unwrap();
        assert_eq!(table.header, ["t", "S", "I", "Q", "R", "B", "u"]);
        let b = table.numbers("B").unwrap();
        assert_eq!(b.len(), traj.len());
        for (k, v) in b.iter().enumerate() {
            assert_eq!(*v, traj.states[k].b());
        }
    }

    #[test]
    fn incidence_round_trip() {
        let s = IncidenceSeries::new(vec![(0.0, 1700.0), (7.0, 1234.5678901234567)]).unwrap();
        let mut buf = Vec::new();
        write_incidence_csv(&mut buf, &s).unwrap();
        assert_eq!(read_incidence_csv(buf.as_slice()).unwrap(), s);
        assert!(read_incidence_csv("t,I_obs\n0,1\n0,2\n".as_bytes()).is_err());
        assert!(read_incidence_csv("t,x\n0,1\n".as_bytes()).is_err());
    }
}
