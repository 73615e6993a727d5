use std::path::Path;

use anyhow::{Context as _, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use siqrb_core::calibration::{fit as fit_series, FitSpec, IncidenceSeries};
use siqrb_core::equilibria::{endemic_equilibrium, equilibria as equilibrium_set, threshold_beta};
use siqrb_core::io::{
    read_incidence_csv, write_scan_csv, write_solution_csv, write_trajectory_csv, write_trajectory_csv_strided,
    CsvTable, RunConfig,
};
use siqrb_core::ocp::{
    evaluate_control, solve_projected_gradient, solve_switch_time, verify_pmp_with, OcpSolution, OcpWeights,
    PgOptions, PmpOptions, SwitchOptions,
};
use siqrb_core::stability::{beta_threshold_scan, dfe_stability, fend_coefficients};
use siqrb_core::{integrate, integrate_with, ControlSignal, ModelParams, Scheme, State, Trajectory};

use crate::manifest::{digest, Artifacts, FileDigest};
use crate::{
    EquilibriumArg, FitArgs, InputError, OptimizeArgs, ReproduceArgs, SchemeArg, SimulateArgs, SolverArg,
    StabilityArgs, VerifyArgs, WeightArgs,
};

/// Horizon of the long-run simulation emitted by `reproduce-paper`.
const LONG_HORIZON: f64 = 5000.0;

pub struct Context {
    pub cfg: RunConfig,
    pub grid_points: Option<usize>,
}

/// What a subcommand hands back for the manifest.
pub struct Report {
    pub resolved: RunConfig,
    pub inputs: Vec<FileDigest>,
    /// Set when the run finished but a numerical check failed.
    pub failure: Option<String>,
}

impl Report {
    fn ok(resolved: RunConfig) -> Self {
        Self {
            resolved,
            inputs: Vec::new(),
            failure: None,
        }
    }
}

impl Context {
    fn resolve(&self, horizon: Option<f64>) -> Result<RunConfig> {
        let mut cfg = self.cfg.clone();
        if let Some(t) = horizon {
            cfg.horizon = t;
            cfg.weights.horizon = t;
        }
        if let Some(n) = self.grid_points {
            if n == 0 {
                return Err(InputError("--grid-points must be positive".into()).into());
            }
            cfg.h = cfg.horizon / n as f64;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn labeled(x: &State) -> Value {
    json!({ "S": x[0], "I": x[1], "Q": x[2], "R": x[3], "B": x[4] })
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> siqrb_core::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes(value: &Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn print(value: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn read_input(path: &Path) -> Result<(Vec<u8>, FileDigest)> {
    let bytes = std::fs::read(path).map_err(|e| InputError(format!("cannot read {}: {e}", path.display())))?;
    let d = FileDigest {
        path: path.display().to_string(),
        sha256: digest(&bytes),
    };
    Ok((bytes, d))
}

fn max_rel_distance(x: &State, target: &State) -> f64 {
    (0..5)
        .map(|k| (x[k] - target[k]).abs() / target[k].abs())
        .fold(0.0, f64::max)
}

pub fn simulate(ctx: &Context, args: &SimulateArgs, arts: &mut Artifacts) -> Result<Report> {
    let cfg = ctx.resolve(args.horizon)?;
    let steps = (cfg.horizon / cfg.h).round() as usize;
    let u_max = cfg.weights.u_max;
    let control = match (args.switch, args.control) {
        (Some(t), _) => Some(ControlSignal::single_switch(t, u_max)),
        (None, Some(u)) => Some(ControlSignal::constant(u, u_max, steps)),
        (None, None) => None,
    };
    let scheme = match args.scheme {
        SchemeArg::Euler => Scheme::Euler,
        SchemeArg::Rk4 => Scheme::Rk4,
    };
    let traj = integrate_with(&cfg.params, &cfg.init, cfg.horizon, cfg.h, control.as_ref(), scheme)?;
    let u = control.as_ref().map(|c| c.node_values(cfg.h, steps)).transpose()?;
    arts.write(
        "trajectory.csv",
        &render(|w| write_trajectory_csv_strided(w, &traj, u.as_deref(), args.stride))?,
    )?;
    let summary = trajectory_summary(&cfg.params, &traj)?;
    arts.write("summary.json", &json_bytes(&summary)?)?;
    print(&summary)?;
    Ok(Report::ok(cfg))
}

fn trajectory_summary(p: &ModelParams, traj: &Trajectory) -> Result<Value> {
    let endemic = endemic_equilibrium(p)?;
    Ok(json!({
        "horizon": traj.horizon(),
        "steps": traj.steps(),
        "h": traj.h,
        "final_state": labeled(traj.final_state()),
        "endemic_equilibrium": endemic.as_ref().map(labeled),
        "max_rel_distance_to_endemic": endemic.map(|e| max_rel_distance(traj.final_state(), &e)),
    }))
}

fn equilibria_summary(p: &ModelParams) -> Result<Value> {
    let set = equilibrium_set(p)?;
    Ok(json!({
        "r0": set.r0,
        "threshold_beta": threshold_beta(p)?,
        "disease_free": labeled(&set.dfe),
        "endemic": set.endemic.as_ref().map(labeled),
        "residuals": set.residuals,
    }))
}

pub fn equilibria(ctx: &Context, arts: &mut Artifacts) -> Result<Report> {
    let cfg = ctx.resolve(None)?;
    let summary = equilibria_summary(&cfg.params)?;
    arts.write("equilibria.json", &json_bytes(&summary)?)?;
    print(&summary)?;
    Ok(Report::ok(cfg))
}

/// Scan CSV and JSON summary for the endemic point over a beta range.
fn endemic_scan(p: &ModelParams, lo: f64, hi: f64, points: usize) -> Result<(Vec<u8>, Value)> {
    let report = beta_threshold_scan(p, lo, hi, points)?;
    let csv = render(|w| write_scan_csv(w, &report))?;
    let summary = json!({
        "equilibrium": "endemic",
        "beta_min": report.beta_min,
        "beta_max": report.beta_max,
        "points": report.rows.len(),
        "crossings": report.crossings,
        "stable_intervals": report.stable_intervals,
        "unresolved": report.unresolved,
        "conclusion": report.conclusion,
        "at_configured_beta": fend_coefficients(p).ok(),
    });
    Ok((csv, summary))
}

pub fn stability(ctx: &Context, args: &StabilityArgs, arts: &mut Artifacts) -> Result<Report> {
    let cfg = ctx.resolve(None)?;
    let summary = match args.equilibrium {
        EquilibriumArg::Dfe => {
            let d = dfe_stability(&cfg.params)?;
            json!({ "equilibrium": "disease_free", "report": d })
        }
        EquilibriumArg::Endemic => {
            let (csv, summary) = endemic_scan(&cfg.params, args.beta_min, args.beta_max, args.points)?;
            arts.write("scan.csv", &csv)?;
            summary
        }
    };
    arts.write("stability.json", &json_bytes(&summary)?)?;
    print(&summary)?;
    Ok(Report::ok(cfg))
}

fn load_series(path: &Path, horizon: f64) -> Result<(IncidenceSeries, FileDigest)> {
    let (bytes, d) = read_input(path)?;
    let series = read_incidence_csv(bytes.as_slice()).with_context(|| format!("data {}", path.display()))?;
    if series.last_time() > horizon {
        return Err(InputError(format!(
            "observation at t = {} lies beyond the horizon T = {horizon}",
            series.last_time()
        ))
        .into());
    }
    Ok((series, d))
}

/// Fitted parameters, fitted trajectory CSV and summary.
fn fit_artifacts(cfg: &RunConfig, series: &IncidenceSeries) -> Result<(Vec<u8>, Value)> {
    let spec = FitSpec {
        base: cfg.params,
        init: cfg.init,
        h: cfg.h,
        ..FitSpec::default()
    };
    let r = fit_series(&spec, series)?;
    let csv = render(|w| write_trajectory_csv(w, &r.trajectory, None))?;
    let summary = json!({
        "params": r.params,
        "sse": r.sse,
        "observations": series.len(),
        "at_box_boundary": r.boundary,
        "evaluations": r.evaluations,
        "boxes": spec.boxes,
    });
    Ok((csv, summary))
}

pub fn fit(ctx: &Context, args: &FitArgs, arts: &mut Artifacts) -> Result<Report> {
    let cfg = ctx.resolve(None)?;
    let (series, d) = load_series(&args.data, cfg.horizon)?;
    let (csv, summary) = fit_artifacts(&cfg, &series)?;
    arts.write("fit_trajectory.csv", &csv)?;
    arts.write("fit.json", &json_bytes(&summary)?)?;
    print(&summary)?;
    Ok(Report {
        inputs: vec![d],
        ..Report::ok(cfg)
    })
}

fn resolve_weights(cfg: &RunConfig, a: &WeightArgs) -> Result<OcpWeights> {
    let mut w = match a.case {
        Some(n) => OcpWeights {
            horizon: cfg.horizon,
            ..OcpWeights::case(n)?
        },
        None => cfg.weights,
    };
    w.horizon = cfg.horizon;
    if let Some(v) = a.wi {
        w.w_i = v;
    }
    if let Some(v) = a.wb {
        w.w_b = v;
    }
    if let Some(v) = a.wu {
        w.w_u = v;
    }
    if let Some(v) = a.umax {
        w.u_max = v;
    }
    w.validate()?;
    Ok(w)
}

/// Solution CSV, scaled switching function CSV and summary for one solve.
struct Solved {
    files: Vec<(&'static str, Vec<u8>)>,
    summary: Value,
    failure: Option<String>,
}

fn solve_one(cfg: &RunConfig, solver: SolverArg, max_iterations: usize, plot_scale: f64) -> Result<Solved> {
    let (p, w) = (&cfg.params, &cfg.weights);
    let sol = match solver {
        SolverArg::Pg => solve_projected_gradient(
            p,
            w,
            &cfg.init,
            &PgOptions {
                h: cfg.h,
                max_iterations,
                ..PgOptions::default()
            },
        )?,
        SolverArg::Switch => solve_switch_time(
            p,
            w,
            &cfg.init,
            &SwitchOptions {
                h: cfg.h,
                ..SwitchOptions::default()
            },
        )?,
    };
    let report = verify_pmp_with(&sol, p, w, &PmpOptions { plot_scale })?;
    let phi_csv = {
        let mut s = String::from("t,phi_scaled\n");
        for (k, v) in report.phi_scaled.iter().enumerate() {
            s.push_str(&format!("{:.16e},{v:.16e}\n", sol.state.time(k)));
        }
        s.into_bytes()
    };
    let mut pmp = serde_json::to_value(&report)?;
    if let Some(m) = pmp.as_object_mut() {
        m.remove("phi_scaled");
    }
    let failure = solve_failure(&sol);
    let summary = json!({
        "solver": match solver { SolverArg::Pg => "projected-gradient", SolverArg::Switch => "switch-time" },
        "weights": w,
        "J": sol.cost,
        "t_s": sol.first_switch(),
        "switches": sol.switching.switches,
        "lambda0": sol.lambda0,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "projected_gradient_norm": sol.projected_gradient_norm,
        "bracket_failure": sol.bracket_failure,
        "pmp_report": pmp,
    });
    Ok(Solved {
        files: vec![
            ("solution.csv", render(|wr| write_solution_csv(wr, &sol))?),
            ("phi_plot.csv", phi_csv),
        ],
        summary,
        failure,
    })
}

fn solve_failure(sol: &OcpSolution) -> Option<String> {
    if sol.bracket_failure {
        Some("optimal switch sits at the edge of the admissible interval".into())
    } else if !sol.converged {
        Some(format!(
            "solver stopped after {} iterations with projected gradient {:e}",
            sol.iterations, sol.projected_gradient_norm
        ))
    } else {
        None
    }
}

pub fn optimize(ctx: &Context, args: &OptimizeArgs, arts: &mut Artifacts) -> Result<Report> {
    let mut cfg = ctx.resolve(None)?;
    cfg.weights = resolve_weights(&cfg, &args.weights)?;
    let solved = solve_one(&cfg, args.solver, args.max_iterations, args.plot_scale)?;
    for (name, bytes) in &solved.files {
        arts.write(name, bytes)?;
    }
    arts.write("summary.json", &json_bytes(&solved.summary)?)?;
    print(&solved.summary)?;
    Ok(Report {
        failure: solved.failure,
        ..Report::ok(cfg)
    })
}

pub fn verify(ctx: &Context, args: &VerifyArgs, arts: &mut Artifacts) -> Result<Report> {
    let mut cfg = ctx.resolve(None)?;
    cfg.weights = resolve_weights(&cfg, &args.weights)?;
    let (bytes, d) = read_input(&args.solution)?;
    let table = CsvTable::read(bytes.as_slice()).with_context(|| format!("solution {}", args.solution.display()))?;
    let t = table.numbers("t")?;
    let u = table.numbers("u")?;
    let steps = (cfg.horizon / cfg.h).round() as usize;
    let aligned = t.len() == steps + 1
        && t.iter()
            .enumerate()
            .all(|(k, &tk)| (tk - k as f64 * cfg.h).abs() <= 1e-9 * cfg.horizon);
    if !aligned {
        return Err(InputError(format!(
            "solution has {} rows; expected {} nodes on the grid h = {}",
            t.len(),
            steps + 1,
            cfg.h
        ))
        .into());
    }
    let control = ControlSignal::Nodes {
        values: u[..steps].to_vec(),
        u_max: cfg.weights.u_max,
    };
    let mut sol = evaluate_control(&cfg.params, &cfg.weights, &cfg.init, cfg.h, control)?;
    if let Some(c) = args.cost {
        sol.cost = c;
    }
    let report = verify_pmp_with(&sol, &cfg.params, &cfg.weights, &PmpOptions::default())?;
    let mut value = serde_json::to_value(&report)?;
    if let Some(m) = value.as_object_mut() {
        m.remove("phi_scaled");
        m.insert("J".into(), json!(sol.cost));
        m.insert("switches".into(), json!(sol.switching.switches));
    }
    arts.write("verify.json", &json_bytes(&value)?)?;
    print(&value)?;
    Ok(Report {
        inputs: vec![d],
        failure: (!report.passed).then(|| format!("optimality check failed: {}", report.failures.join("; "))),
        ..Report::ok(cfg)
    })
}

pub fn reproduce(ctx: &Context, args: &ReproduceArgs, arts: &mut Artifacts) -> Result<Report> {
    let cfg = ctx.resolve(None)?;
    let p = &cfg.params;
    let mut inputs = Vec::new();
    let mut failures = Vec::new();

    arts.write("table1/equilibria.json", &json_bytes(&equilibria_summary(p)?)?)?;

    let (csv, summary) = endemic_scan(p, 1e-6, 5.0, 10_000)?;
    arts.write("beta_scan/scan.csv", &csv)?;
    arts.write("beta_scan/stability.json", &json_bytes(&summary)?)?;
    arts.write(
        "beta_scan/disease_free.json",
        &json_bytes(&serde_json::to_value(dfe_stability(p)?)?)?,
    )?;

    if let Some(path) = &args.data {
        let (series, d) = load_series(path, cfg.horizon)?;
        inputs.push(d);
        let (csv, summary) = fit_artifacts(&cfg, &series)?;
        arts.write("fitted_simulation/trajectory.csv", &csv)?;
        arts.write("fitted_simulation/fit.json", &json_bytes(&summary)?)?;
    }

    let cases: Vec<Result<(u8, Solved)>> = (1..=3u8)
        .into_par_iter()
        .map(|n| {
            let mut c = cfg.clone();
            c.weights = OcpWeights {
                horizon: cfg.horizon,
                ..OcpWeights::case(n)?
            };
            Ok((n, solve_one(&c, SolverArg::Pg, PgOptions::default().max_iterations, 1.0)?))
        })
        .collect();
    let mut ocp = Vec::new();
    for case in cases {
        let (n, solved) = case?;
        for (name, bytes) in &solved.files {
            arts.write(&format!("ocp_case{n}/{name}"), bytes)?;
        }
        arts.write(&format!("ocp_case{n}/summary.json"), &json_bytes(&solved.summary)?)?;
        if let Some(f) = solved.failure {
            failures.push(format!("case {n}: {f}"));
        }
        ocp.push(json!({ "case": n, "J": solved.summary["J"], "t_s": solved.summary["t_s"] }));
    }
    arts.write("ocp_comparison.json", &json_bytes(&json!(ocp))?)?;

    let long = integrate(p, &cfg.init, LONG_HORIZON, cfg.h, None)?;
    let stride = (1.0 / cfg.h).round().max(1.0) as usize;
    arts.write(
        "long_horizon/trajectory.csv",
        &render(|w| write_trajectory_csv_strided(w, &long, None, stride))?,
    )?;
    arts.write("long_horizon/summary.json", &json_bytes(&trajectory_summary(p, &long)?)?)?;

    Ok(Report {
        resolved: cfg,
        inputs,
        failure: (!failures.is_empty()).then(|| failures.join("; ")),
    })
}
