//! Subcommand drivers: solve, then write artifacts.

use nozzleflow::acceptance;
use nozzleflow::nozzle::calibrate_inflow;
use nozzleflow::potentialflow::{self, sonic_curve, SonicCurve, VelocityField2D};
use nozzleflow::problem::Setup;
use nozzleflow::quasi1d::{solve_subsonic_on_grid, Flow1D, TransonicSolver};
use nozzleflow::rotational::{self, EulerState2D};
use nozzleflow::shock1d::{solve_shock, ShockMap, ShockSolution};
use nozzleflow::{grid::Grid, Error};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::output::{Artifacts, Cell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve1d,
    Shock,
    #[value(name = "solve2d-potential")]
    Solve2dPotential,
    #[value(name = "solve2d-euler")]
    Solve2dEuler,
    SonicCurve,
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve1d => "solve1d",
            Command::Shock => "shock",
            Command::Solve2dPotential => "solve2d-potential",
            Command::Solve2dEuler => "solve2d-euler",
            Command::SonicCurve => "sonic-curve",
            Command::Validate => "validate",
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, only: &[usize]) -> Result<serde_json::Value, CliError> {
    let mut out = Artifacts::create(&cfg.output.dir)?;
    let summary = match cmd {
        Command::Solve1d => solve1d(cfg, &mut out)?,
        Command::Shock => shock(cfg, &mut out)?,
        Command::Solve2dPotential => potential(cfg, &mut out)?,
        Command::Solve2dEuler => euler(cfg, &mut out)?,
        Command::SonicCurve => sonic(cfg, &mut out)?,
        Command::Validate => {
            let ids: Vec<usize> = if only.is_empty() { (1..=acceptance::CRITERIA).collect() } else { only.to_vec() };
            let report = acceptance::run_selected(&ids);
            out.json("validation.json", &report)?;
            let manifest = out.finish(cmd.name(), cfg)?;
            for c in &report.criteria {
                eprintln!("{}", c.line());
            }
            if !report.all_pass() {
                return Err(CliError::ValidationFailed(report.total - report.passed));
            }
            return Ok(json!({ "status": "ok", "subcommand": cmd.name(), "passed": report.passed, "total": report.total, "manifest": manifest }));
        }
    };
    let manifest = out.finish(cmd.name(), cfg)?;
    Ok(json!({ "status": "ok", "subcommand": cmd.name(), "summary": summary, "manifest": manifest }))
}

fn inflow_velocity(cfg: &RunConfig) -> Result<f64, CliError> {
    match cfg.inflow.u0.fixed() {
        Some(u) => Ok(u),
        None => Ok(calibrate_inflow(&cfg.profile()?, &cfg.gas_model()?, cfg.inflow.rho0)?),
    }
}

fn flow_rows(f: &Flow1D, region: Option<&str>) -> Vec<Vec<Cell>> {
    let p = f.pressure();
    (0..f.len())
        .map(|i| {
            let mut row = Vec::with_capacity(7);
            if let Some(r) = region {
                row.push(Cell::Text(r.to_string()));
            }
            row.extend([f.x1[i], f.a[i], f.u[i], f.rho[i], p[i], f.m2[i]].map(Cell::from));
            row
        })
        .collect()
}

const FLOW_HEADER: [&str; 6] = ["x1", "a", "u", "rho", "p", "M2"];

fn solve1d(cfg: &RunConfig, out: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let (p, g) = (cfg.profile()?, cfg.gas_model()?);
    let u0 = inflow_velocity(cfg)?;
    let grid = Grid::new(p.l0(), p.l1(), cfg.solver.n1)?;
    let flow = match TransonicSolver::new(&p, &g, cfg.inflow.rho0, u0, cfg.solver.delta_sonic * p.length()) {
        Ok(s) => s.solve_on_grid(&grid.x)?,
        Err(Error::NotCalibrated(_)) => solve_subsonic_on_grid(&p, &g, cfg.inflow.rho0, u0, p.l0(), &grid.x)?,
        Err(e) => return Err(e.into()),
    };
    if cfg.output.wants(Format::Csv) {
        out.csv("flow1d.csv", &FLOW_HEADER, &flow_rows(&flow, None))?;
    }
    let summary = json!({
        "u0": u0,
        "transonic": flow.c_star.is_some(),
        "j": flow.j,
        "b0": flow.b0,
        "c_star": flow.c_star,
        "sonic_index": flow.sonic_index,
        "bernoulli_residual": flow.bernoulli_residual(),
        "mass_flux_error": flow.mass_flux_error(),
    });
    if cfg.output.wants(Format::Json) {
        out.json("flow1d.json", &summary)?;
    }
    Ok(summary)
}

fn shock_summary(s: &ShockSolution, p_e: f64, cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let (rm, rmom) = s.rh_residuals(&cfg.gas_model()?);
    Ok(json!({
        "p_e": p_e,
        "ls": s.ls,
        "p_exit": s.p_exit,
        "rho_minus": s.rho_minus,
        "u_minus": s.u_minus,
        "rho_plus": s.rho_plus,
        "u_plus": s.u_plus,
        "rh_mass_residual": rm,
        "rh_momentum_residual": rmom,
    }))
}

fn shock(cfg: &RunConfig, out: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let sc = cfg.shock.clone().unwrap_or(crate::config::ShockConfig { p_e: None, sweep: None });
    if sc.p_e.is_none() && sc.sweep.is_none() {
        return Err(CliError::Invalid("shock needs shock.p_e or shock.sweep".into()));
    }
    let (p, g) = (cfg.profile()?, cfg.gas_model()?);
    let (rho0, n1) = (cfg.inflow.rho0, cfg.solver.n1);
    let u0 = inflow_velocity(cfg)?;
    let (p_min, p_max) = ShockMap::new(&p, &g, rho0, u0)?.pressure_range()?;
    let mut summary = json!({ "p_min": p_min, "p_max": p_max });
    if let Some(p_e) = sc.p_e {
        let s = solve_shock(&p, &g, rho0, u0, p_e, n1)?;
        if cfg.output.wants(Format::Csv) {
            let mut rows = flow_rows(&s.upstream, Some("upstream"));
            rows.extend(flow_rows(&s.downstream, Some("downstream")));
            let header: Vec<&str> = std::iter::once("region").chain(FLOW_HEADER).collect();
            out.csv("shock.csv", &header, &rows)?;
        }
        let one = shock_summary(&s, p_e, cfg)?;
        if cfg.output.wants(Format::Json) {
            out.json("shock.json", &json!({ "p_min": p_min, "p_max": p_max, "solution": one }))?;
        }
        summary["solution"] = one;
    }
    if let Some(sw) = sc.sweep {
        let values = sw.values();
        let runs: Vec<Result<ShockSolution, Error>> = values.par_iter().map(|&pe| solve_shock(&p, &g, rho0, u0, pe, n1)).collect();
        let runs: Vec<ShockSolution> = runs.into_iter().collect::<Result<_, _>>()?;
        if cfg.output.wants(Format::Csv) {
            let rows: Vec<Vec<Cell>> = values
                .iter()
                .zip(&runs)
                .map(|(&pe, s)| [pe, s.ls, s.p_exit, s.rho_minus, s.u_minus, s.rho_plus, s.u_plus].map(Cell::from).into())
                .collect();
            out.csv("shock_sweep.csv", &["p_e", "ls", "p_exit", "rho_minus", "u_minus", "rho_plus", "u_plus"], &rows)?;
        }
        let all: Vec<serde_json::Value> = values.iter().zip(&runs).map(|(&pe, s)| shock_summary(s, pe, cfg)).collect::<Result<_, _>>()?;
        if cfg.output.wants(Format::Json) {
            out.json("shock_sweep.json", &json!({ "p_min": p_min, "p_max": p_max, "runs": all }))?;
        }
        summary["sweep"] = json!(runs.len());
    }
    Ok(summary)
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    Ok(Setup::new(&cfg.profile()?, &cfg.gas_model()?, cfg.inflow.rho0, cfg.inflow.u0.fixed(), cfg.solver)?)
}

fn field_rows(f: &VelocityField2D, columns: &[&dyn Fn(usize, usize) -> f64]) -> Vec<Vec<Cell>> {
    let mut rows = Vec::with_capacity(f.grid.len() * f.x2.len());
    for i in 0..f.grid.len() {
        for q in 0..f.x2.len() {
            let mut row = vec![Cell::Num(f.grid.x[i]), Cell::Num(f.x2[q])];
            row.extend(columns.iter().map(|c| Cell::Num(c(i, q))));
            rows.push(row);
        }
    }
    rows
}

fn write_curve(out: &mut Artifacts, c: &SonicCurve) -> Result<(), CliError> {
    let rows: Vec<Vec<Cell>> = (0..c.x2.len()).map(|k| vec![Cell::Num(c.x2[k]), Cell::Num(c.xi[k]), Cell::Num(c.dxi[k])]).collect();
    out.csv("sonic_curve.csv", &["x2", "xi", "dxi"], &rows)
}

fn curve_summary(c: &SonicCurve) -> serde_json::Value {
    json!({ "sup_xi": c.sup_xi(), "sup_dxi": c.sup_dxi() })
}

fn potential(cfg: &RunConfig, out: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let s = setup(cfg)?;
    let sol = potentialflow::picard_solve(&s, &cfg.boundary)?;
    let diag = potentialflow::diagnostics(&s, &sol, &cfg.boundary)?;
    let curve = sonic_curve(&sol.field, &s.basis)?;
    let f = &sol.field;
    if cfg.output.wants(Format::Csv) {
        let p = f.pressure(s.gas.gamma());
        let rows = field_rows(
            f,
            &[&|i, q| f.u1.get(i, q), &|i, q| f.u2.get(i, q), &|i, q| f.rho.get(i, q), &|i, q| f.m2.get(i, q), &|i, q| p.get(i, q)],
        );
        out.csv("potential.csv", &["x1", "x2", "u1", "u2", "rho", "M2", "p"], &rows)?;
        write_curve(out, &curve)?;
    }
    let summary = json!({
        "iterations": sol.history.iterations,
        "u1_perturbation_h1": potentialflow::u1_perturbation_h1(&sol, &s.basis),
        "sigma_min": sol.sigma_min,
        "diagnostics": diag,
        "sonic_curve": curve_summary(&curve),
    });
    if cfg.output.wants(Format::Json) {
        out.json("potential.json", &json!({ "summary": summary, "history": sol.history }))?;
    }
    Ok(summary)
}

fn euler_solve(cfg: &RunConfig) -> Result<(Setup, EulerState2D), CliError> {
    let s = setup(cfg)?;
    let st = rotational::two_layer_solve(&s, &cfg.boundary)?;
    Ok((s, st))
}

fn euler(cfg: &RunConfig, out: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let (s, st) = euler_solve(cfg)?;
    let diag = rotational::diagnostics(&s, &st, &cfg.boundary)?;
    let curve = rotational::state_sonic_curve(&s, &st)?;
    let f = &st.field;
    if cfg.output.wants(Format::Csv) {
        let p = f.pressure(s.gas.gamma());
        let rows = field_rows(
            f,
            &[
                &|i, q| f.u1.get(i, q),
                &|i, q| f.u2.get(i, q),
                &|i, q| f.rho.get(i, q),
                &|i, q| p.get(i, q),
                &|i, q| f.b.get(i, q),
                &|i, q| st.omega.get(i, q),
                &|i, q| f.m2.get(i, q),
            ],
        );
        out.csv("euler.csv", &["x1", "x2", "u1", "u2", "rho", "p", "B", "omega", "M2"], &rows)?;
        write_curve(out, &curve)?;
    }
    let summary = json!({
        "outer_iterations": st.outer.iterations,
        "perturbation_h1": rotational::perturbation_h1(&s, &st),
        "diagnostics": diag,
        "sonic_curve": curve_summary(&curve),
    });
    if cfg.output.wants(Format::Json) {
        out.json("convergence.json", &json!({ "summary": summary, "outer": st.outer, "inner": st.inner }))?;
    }
    Ok(summary)
}

/// Irrotational solve when the entrance Bernoulli data vanish, rotational otherwise.
fn sonic(cfg: &RunConfig, out: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let rotational = cfg.boundary.bin_cos.iter().any(|v| *v != 0.0);
    let curve = if rotational {
        let (s, st) = euler_solve(cfg)?;
        rotational::state_sonic_curve(&s, &st)?
    } else {
        let s = setup(cfg)?;
        let sol = potentialflow::picard_solve(&s, &cfg.boundary)?;
        sonic_curve(&sol.field, &s.basis)?
    };
    if cfg.output.wants(Format::Csv) {
        write_curve(out, &curve)?;
    }
    let mut summary = curve_summary(&curve);
    summary["model"] = json!(if rotational { "euler" } else { "potential" });
    if cfg.output.wants(Format::Json) {
        out.json("sonic_curve.json", &json!({ "summary": summary, "curve": curve }))?;
    }
    Ok(summary)
}
