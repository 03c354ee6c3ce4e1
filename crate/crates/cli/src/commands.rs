//! The `simulate`, `verify`, `sweep` and `fields` commands.

use std::fs;
use std::path::Path;

use capstokes::evolution::{mu_sweep, simulate, PhysicalParams, StepControls, Trajectory};
use capstokes::fields::{interior_stokes_residual, sample_fields, BulkPoint};
use capstokes::grid::{sobolev_norm, GridFunction};
use capstokes::potentials::geometry_of;
use capstokes::solver::solve_density;
use capstokes::verify::{run_suite, standard_profile, Suite, STANDARD_HALF_LENGTH};
use capstokes::Grid;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{fmt_f64, trajectory_csv, write_file, write_json};
use crate::CliError;

pub struct Flags<'a> {
    pub out: &'a Path,
    pub quiet: bool,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    status: &'a str,
    grid: (f64, usize),
    params: PhysicalParams,
    controls: StepControls,
    times: &'a [f64],
    sobolev_s: f64,
    norms: Vec<f64>,
    max_abs: Vec<f64>,
    contamination: Vec<f64>,
    norm_trail_non_increasing: bool,
    final_spectral_tail: f64,
    accepted_steps: usize,
    rejected_steps: usize,
    phi_evaluations: usize,
    solves: usize,
    max_solver_residual: f64,
    max_condition: f64,
}

fn summarize<'a>(traj: &'a Trajectory, controls: &StepControls) -> RunSummary<'a> {
    let s = controls.sobolev_s;
    let d = &traj.last.diagnostics;
    let non_increasing = d
        .norm_trail
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + controls.tol);
    RunSummary {
        status: "ok",
        grid: (traj.last.f.grid().half_length(), traj.last.f.grid().len()),
        params: traj.last.params,
        controls: *controls,
        times: &traj.times,
        sobolev_s: s,
        norms: traj.profiles.iter().map(|f| sobolev_norm(f, s)).collect(),
        max_abs: traj.profiles.iter().map(GridFunction::max_abs).collect(),
        contamination: traj
            .profiles
            .iter()
            .map(capstokes::evolution::boundary_contamination)
            .collect(),
        norm_trail_non_increasing: non_increasing,
        final_spectral_tail: d.spectral_tail,
        accepted_steps: d.accepted_steps,
        rejected_steps: d.rejected_steps,
        phi_evaluations: d.phi_evaluations,
        solves: d.solves,
        max_solver_residual: d.max_solver_residual,
        max_condition: d.max_condition,
    }
}

pub fn cmd_simulate(cfg: &RunConfig, flags: &Flags) -> Result<(), CliError> {
    let grid = cfg.require_grid()?;
    let params = cfg.require_params()?;
    let times = cfg.output_times()?;
    let f0 = cfg.initial_profile(&grid)?;
    fs::create_dir_all(flags.out)?;
    match simulate(&f0, &params, &times, &cfg.controls) {
        Ok(traj) => {
            write_file(&flags.out.join("trajectory.csv"), &trajectory_csv(&traj))?;
            let summary = summarize(&traj, &cfg.controls);
            write_json(&flags.out.join("summary.json"), &summary)?;
            if !flags.quiet {
                let last = summary.norms.len() - 1;
                println!(
                    "t = {}  H^{} norm = {}  max|f| = {}  steps = {}",
                    fmt_f64(traj.times[last]),
                    summary.sobolev_s,
                    fmt_f64(summary.norms[last]),
                    fmt_f64(summary.max_abs[last]),
                    summary.accepted_steps
                );
            }
            Ok(())
        }
        Err(e) => {
            let failure = json!({
                "status": "failed",
                "error": e.to_string(),
                "grid": (grid.half_length(), grid.len()),
                "params": params,
            });
            write_json(&flags.out.join("summary.json"), &failure)?;
            Err(CliError::Numerical(e.to_string()))
        }
    }
}

pub fn cmd_verify(cfg: Option<&RunConfig>, suite: Suite, flags: &Flags) -> Result<(), CliError> {
    let grid = match cfg.and_then(|c| c.grid) {
        Some(_) => cfg.unwrap().require_grid()?,
        None => Grid::new(STANDARD_HALF_LENGTH, 1024).expect("valid default grid"),
    };
    let f = match cfg.and_then(|c| c.profile.as_ref()) {
        Some(_) => cfg.unwrap().initial_profile(&grid)?,
        None => standard_profile(&grid),
    };
    let seed = cfg.map_or(0, |c| c.seed);
    let bounds = cfg.map(|c| c.bounds).unwrap_or_default();
    let entries = run_suite(suite, &f, seed, &bounds);
    fs::create_dir_all(flags.out)?;
    write_json(&flags.out.join("verify.json"), &entries)?;
    if !flags.quiet {
        for e in &entries {
            println!(
                "{} {}  bound={:.1e}",
                if e.passed { "PASS" } else { "FAIL" },
                e.report,
                e.bound
            );
        }
    }
    let failed = entries.iter().filter(|e| !e.passed).count();
    if failed > 0 {
        return Err(CliError::Bound(format!(
            "{failed} residual(s) exceed their bounds"
        )));
    }
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig, flags: &Flags) -> Result<(), CliError> {
    let grid = cfg.require_grid()?;
    let params = cfg.require_params()?;
    let times = cfg.output_times()?;
    let list = cfg
        .mu_plus_list
        .as_ref()
        .ok_or_else(|| CliError::Config("mu_plus_list: missing".into()))?;
    if list.is_empty() {
        return Err(CliError::Config("mu_plus_list: must not be empty".into()));
    }
    let f0 = cfg.initial_profile(&grid)?;
    fs::create_dir_all(flags.out)?;
    let (report, failure) =
        match mu_sweep(&f0, params.mu, params.sigma, &times, list, &cfg.controls) {
            Ok(r) => (r, None),
            Err(e) => (
                *e.partial,
                Some(format!("mu_plus = {}: {}", e.mu_plus, e.source)),
            ),
        };
    if let Some(base) = &report.baseline {
        write_file(&flags.out.join("run_mu_plus_0.csv"), &trajectory_csv(base))?;
    }
    for (mp, run) in report.mu_plus.iter().zip(&report.runs) {
        write_file(
            &flags.out.join(format!("run_mu_plus_{}.csv", fmt_f64(*mp))),
            &trajectory_csv(run),
        )?;
    }
    let doc = json!({
        "status": if failure.is_some() { "failed" } else { "ok" },
        "error": failure,
        "grid": (grid.half_length(), grid.len()),
        "report": report,
    });
    write_json(&flags.out.join("sweep.json"), &doc)?;
    if let Some(msg) = failure {
        return Err(CliError::Numerical(msg));
    }
    if !flags.quiet {
        for (mp, e) in report.mu_plus.iter().zip(&report.errors) {
            println!("mu_plus = {}  E = {}", fmt_f64(*mp), fmt_f64(*e));
        }
        match report.slope {
            Some(s) => println!("slope = {}", fmt_f64(s)),
            None => println!("slope = n/a (fewer than two points)"),
        }
    }
    Ok(())
}

pub fn cmd_fields(cfg: &RunConfig, flags: &Flags) -> Result<(), CliError> {
    let grid = cfg.require_grid()?;
    let params = cfg.require_params()?;
    let points = cfg.sample_points()?;
    let f = cfg.initial_profile(&grid)?;
    let geom = geometry_of(&f);
    let (beta, _) = solve_density(&geom, 0.5, 1.0, &geom.g.scale(params.sigma))
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let bulk: Vec<BulkPoint> = points.iter().map(|p| BulkPoint::new(p[0], p[1])).collect();
    let samples = sample_fields(&geom, &beta, &bulk, params.mu);
    let residuals: Vec<_> = {
        use rayon::prelude::*;
        bulk.par_iter()
            .map(|&x| interior_stokes_residual(&geom, &beta, x, params.mu, cfg.fd_step))
            .collect()
    };
    let mut csv = String::from("x1,x2,v1,v2,p,residual,status\n");
    let mut rejected = 0;
    for ((x, sample), residual) in bulk.iter().zip(&samples).zip(&residuals) {
        match (sample, residual) {
            (Ok(s), Ok(r)) => csv.push_str(&format!(
                "{},{},{},{},{},{},ok\n",
                fmt_f64(x.x1),
                fmt_f64(x.x2),
                fmt_f64(s.velocity[0]),
                fmt_f64(s.velocity[1]),
                fmt_f64(s.pressure),
                fmt_f64(*r)
            )),
            (Err(e), _) | (Ok(_), Err(e)) => {
                rejected += 1;
                csv.push_str(&format!(
                    "{},{},,,,,rejected: {}\n",
                    fmt_f64(x.x1),
                    fmt_f64(x.x2),
                    e.to_string().replace(',', ";")
                ));
            }
        }
    }
    fs::create_dir_all(flags.out)?;
    write_file(&flags.out.join("fields.csv"), &csv)?;
    if !flags.quiet {
        let worst = residuals
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .fold(0.0_f64, |m, r| m.max(*r));
        println!(
            "{} points, {} rejected, max interior residual = {}",
            bulk.len(),
            rejected,
            fmt_f64(worst)
        );
    }
    Ok(())
}
