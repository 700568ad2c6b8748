//! Running one configured experiment and writing its outputs.

use std::fs;
use std::path::Path;

use serde::Serialize;
use vme_core::scenario::{build_initial_condition, build_modulus_field, relative_error_linf};
use vme_core::{
    dns_run, run, DnsProblem, MultiscaleSystem, RunOptions, RunResult, TwoScaleMesh, VmeError,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{write_snapshots, write_step_log};

/// VME against DNS at one requested output time. `error` is `None` when the
/// reference field vanishes there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub requested: f64,
    pub time_vme: f64,
    pub time_dns: f64,
    pub error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub config: RunConfig,
    pub vme: Option<RunResult>,
    pub dns: Option<RunResult>,
    pub errors: Vec<ErrorRow>,
}

impl Report {
    /// Error row nearest the requested time.
    pub fn error_at(&self, t: f64) -> Option<&ErrorRow> {
        self.errors
            .iter()
            .min_by(|a, b| (a.requested - t).abs().total_cmp(&(b.requested - t).abs()))
    }
}

#[derive(Serialize)]
struct RunMetrics<'a> {
    solver: &'a str,
    steps: usize,
    final_time: f64,
    wall_seconds: f64,
    total_split_iterations: usize,
    max_split_iterations: usize,
    max_newton_iterations: usize,
    initial_energy: f64,
    final_energy: f64,
    snapshot_times: Vec<f64>,
}

impl<'a> RunMetrics<'a> {
    fn new(solver: &'a str, r: &RunResult) -> Self {
        let energy = |s: Option<&vme_core::StepRecord>| s.map_or(0.0, |s| s.total_energy());
        RunMetrics {
            solver,
            steps: r.steps.len().saturating_sub(1),
            final_time: r.steps.last().map_or(0.0, |s| s.time),
            wall_seconds: r.wall_seconds,
            total_split_iterations: r.total_split_iterations(),
            max_split_iterations: r.max_split_iterations(),
            max_newton_iterations: r.max_newton_iterations(),
            initial_energy: energy(r.steps.first()),
            final_energy: energy(r.steps.last()),
            snapshot_times: r.snapshots.iter().map(|s| s.time).collect(),
        }
    }
}

#[derive(Serialize)]
struct Metrics<'a> {
    units: &'a str,
    config: &'a RunConfig,
    runs: Vec<RunMetrics<'a>>,
    errors: &'a [ErrorRow],
}

fn options(config: &RunConfig) -> RunOptions {
    RunOptions {
        end_time: config.end_time,
        output_times: config.output_times.clone(),
        workers: config.workers,
        land_on_outputs: config.land_on_outputs,
    }
}

pub fn run_vme(config: &RunConfig) -> Result<RunResult, VmeError> {
    let mesh = TwoScaleMesh::build(config.n_es, config.n_ecp, config.n_ef, config.bc)?;
    let material = build_modulus_field(&config.microstructure, config.n_es, config.n_ef)?;
    let d0 = build_initial_condition(&config.pulse, mesh.coarse_nodes());
    let v0 = vec![0.0; d0.len()];
    let sys = MultiscaleSystem::new(mesh, material)?;
    run(&sys, &config.integrator, &d0, &v0, &options(config))
}

pub fn dns_problem(config: &RunConfig) -> Result<DnsProblem, VmeError> {
    let problem = DnsProblem {
        n_el: config.n_el,
        material: build_modulus_field(
            &config.microstructure,
            config.n_es,
            config.n_el / config.n_es,
        )?,
        bc: config.bc,
        integrator: config.dns_integrator,
        cfl: config.dns_cfl,
        p: config.integrator.p,
    };
    problem.validate()?;
    Ok(problem)
}

pub fn run_dns(config: &RunConfig) -> Result<RunResult, VmeError> {
    let problem = dns_problem(config)?;
    let d0 = build_initial_condition(&config.pulse, &problem.nodes());
    let v0 = vec![0.0; d0.len()];
    dns_run(&problem, &d0, &v0, &options(config))
}

/// Runs the configured solvers without touching the filesystem.
pub fn execute(config: &RunConfig) -> Result<Report, CliError> {
    let vme = config
        .solver
        .runs_vme()
        .then(|| run_vme(config))
        .transpose()?;
    let dns = config
        .solver
        .runs_dns()
        .then(|| run_dns(config))
        .transpose()?;
    let mut errors = Vec::new();
    if let (Some(a), Some(b)) = (&vme, &dns) {
        for &t in &config.output_times {
            let sample = relative_error_linf(a, b, t, config.integrator.denom_floor);
            let row = match sample {
                Ok(s) => ErrorRow {
                    requested: t,
                    time_vme: s.time_a,
                    time_dns: s.time_b,
                    error: Some(s.error),
                },
                Err(VmeError::ZeroReference(_)) => ErrorRow {
                    requested: t,
                    time_vme: a.snapshot_near(t)?.time,
                    time_dns: b.snapshot_near(t)?.time,
                    error: None,
                },
                Err(e) => return Err(e.into()),
            };
            errors.push(row);
        }
    }
    Ok(Report {
        config: config.clone(),
        vme,
        dns,
        errors,
    })
}

/// Writes `snapshots.csv`, `metrics.json` and `steps.log` into `dir`. When
/// both solvers ran, the VME fields go to `snapshots.csv` and the reference
/// fields to `reference_snapshots.csv`.
pub fn write_outputs(report: &Report, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut runs = Vec::new();
    let mut logs: Vec<(&str, &[vme_core::StepRecord])> = Vec::new();
    match (&report.vme, &report.dns) {
        (Some(v), dns) => {
            write_snapshots(&dir.join("snapshots.csv"), &v.snapshots)?;
            if let Some(d) = dns {
                write_snapshots(&dir.join("reference_snapshots.csv"), &d.snapshots)?;
            }
        }
        (None, Some(d)) => write_snapshots(&dir.join("snapshots.csv"), &d.snapshots)?,
        (None, None) => {}
    }
    if let Some(v) = &report.vme {
        runs.push(RunMetrics::new("vme", v));
        logs.push(("vme", &v.steps));
    }
    if let Some(d) = &report.dns {
        runs.push(RunMetrics::new("dns", d));
        logs.push(("dns", &d.steps));
    }
    write_step_log(&dir.join("steps.log"), &logs)?;

    let metrics = Metrics {
        units: "nondimensional",
        config: &report.config,
        runs,
        errors: &report.errors,
    };
    let path = dir.join("metrics.json");
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
}

/// Runs the experiment and writes its outputs to the configured directory.
pub fn run_experiment(config: &RunConfig) -> Result<Report, CliError> {
    let report = execute(config)?;
    write_outputs(&report, &config.output_dir)?;
    Ok(report)
}
