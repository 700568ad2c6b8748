//! Single-scale reference solver on a uniform grid that resolves the
//! microstructure, using the same element kernels as the two-scale path.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    single_scale_force, single_scale_lumped_mass, single_scale_strain_energy,
    single_scale_stretches,
};
use crate::error::{Result, VmeError};
use crate::integrate::{
    average_velocity, drive, lumped_solve, predict, substep_velocity, with_workers, RunOptions,
    Scheme, SubstepConstants,
};
use crate::material::MaterialField;
use crate::mesh::{
    fixed_end_nodes, single_scale_quadrature, uniform_nodes, BoundaryConditions, QuadPoint,
};
use crate::result::{RunResult, Snapshot, StepRecord};
use crate::stability::{check_floor, clamp_cfl, critical_dt_dns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DnsIntegrator {
    /// Central differences.
    #[serde(rename = "cdm")]
    Cdm,
    /// Noh-Bathe explicit sub-step scheme.
    #[serde(rename = "sub-step")]
    SubStep,
}

impl DnsIntegrator {
    /// The two-scale scheme sharing this integrator's CFL limit.
    fn stability_scheme(self) -> Scheme {
        match self {
            DnsIntegrator::Cdm => Scheme::EeCdm,
            DnsIntegrator::SubStep => Scheme::EeSsm,
        }
    }
}

impl fmt::Display for DnsIntegrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DnsIntegrator::Cdm => "cdm",
            DnsIntegrator::SubStep => "sub-step",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnsProblem {
    pub n_el: usize,
    pub material: MaterialField,
    pub bc: BoundaryConditions,
    pub integrator: DnsIntegrator,
    pub cfl: f64,
    pub p: f64,
}

impl DnsProblem {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_el == 0 {
            problems.push("n_el must be at least 1".to_string());
        }
        if self.material.len() != self.n_el {
            problems.push(format!(
                "material field has {} entries for {} elements",
                self.material.len(),
                self.n_el
            ));
        }
        if !(self.cfl > 0.0 && self.cfl.is_finite()) {
            problems.push(format!("cfl must be positive, got {}", self.cfl));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(VmeError::InvalidSubstepRatio(self.p));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(VmeError::InvalidDiscretization(problems.join("; ")))
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        uniform_nodes(self.n_el)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DnsState {
    pub time: f64,
    pub step: usize,
    pub d: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DnsSolver {
    problem: DnsProblem,
    points: Vec<QuadPoint>,
    mass: Vec<f64>,
    fixed: Vec<bool>,
}

impl DnsSolver {
    pub fn new(problem: DnsProblem) -> Result<Self> {
        problem.validate()?;
        let n_nodes = 2 * problem.n_el + 1;
        let points = single_scale_quadrature(problem.n_el);
        let mass = single_scale_lumped_mass(&points, &problem.material, n_nodes);
        let mut fixed = vec![false; n_nodes];
        for i in fixed_end_nodes(n_nodes, problem.bc) {
            fixed[i] = true;
        }
        Ok(DnsSolver {
            problem,
            points,
            mass,
            fixed,
        })
    }

    pub fn problem(&self) -> &DnsProblem {
        &self.problem
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.mass
    }

    fn acceleration(&self, d: &[f64]) -> Result<Vec<f64>> {
        let f = single_scale_force(&self.points, &self.problem.material, d)?;
        Ok(lumped_solve(&f, None, &self.mass, &self.fixed))
    }

    pub fn initial_state(&self, d0: &[f64], v0: &[f64]) -> Result<DnsState> {
        let n = self.mass.len();
        if d0.len() != n || v0.len() != n {
            return Err(VmeError::InvalidConfig(format!(
                "initial condition needs {n} nodal values, got {} and {}",
                d0.len(),
                v0.len()
            )));
        }
        Ok(DnsState {
            time: 0.0,
            step: 0,
            d: d0.to_vec(),
            v: v0.to_vec(),
            a: self.acceleration(d0)?,
        })
    }

    pub fn stable_dt(&self, state: &DnsState) -> Result<f64> {
        let cfl = clamp_cfl(
            self.problem.integrator.stability_scheme(),
            self.problem.p,
            self.problem.cfl,
        );
        let dt = critical_dt_dns(&self.points, &self.problem.material, &state.d, cfl)?;
        check_floor(dt, state.step + 1)
    }

    pub fn step(&self, s: &DnsState, dt: f64) -> Result<DnsState> {
        let (d, v, a) = match self.problem.integrator {
            DnsIntegrator::Cdm => {
                let d1 = predict(&s.d, &s.v, &s.a, dt, 0.5 * dt * dt);
                let a1 = self.acceleration(&d1)?;
                let v1 = average_velocity(&s.v, &s.a, &a1, 0.5 * dt);
                (d1, v1, a1)
            }
            DnsIntegrator::SubStep => {
                let c = SubstepConstants::new(self.problem.p, dt)?;
                let dp = predict(&s.d, &s.v, &s.a, c.a[0], c.a[1]);
                let ap = self.acceleration(&dp)?;
                let vp = average_velocity(&s.v, &s.a, &ap, c.a[2]);
                let d1 = predict(&dp, &vp, &ap, c.a[3], c.a[4]);
                let a1 = self.acceleration(&d1)?;
                let v1 = substep_velocity(&vp, &s.a, &ap, &a1, &c);
                (d1, v1, a1)
            }
        };
        Ok(DnsState {
            time: s.time + dt,
            step: s.step + 1,
            d,
            v,
            a,
        })
    }

    pub fn kinetic_energy(&self, state: &DnsState) -> f64 {
        state
            .v
            .iter()
            .zip(&self.mass)
            .map(|(v, m)| 0.5 * m * v * v)
            .sum()
    }

    pub fn strain_energy(&self, state: &DnsState) -> Result<f64> {
        single_scale_strain_energy(&self.points, &self.problem.material, &state.d)
    }

    pub fn snapshot(&self, state: &DnsState) -> Result<Snapshot> {
        let stretches = single_scale_stretches(&self.points, &state.d)?;
        let f_avg = self
            .points
            .chunks(3)
            .zip(stretches.chunks(3))
            .map(|(pts, fs)| {
                let w: f64 = pts.iter().map(|p| p.weight).sum();
                pts.iter()
                    .zip(fs)
                    .map(|(p, f)| p.weight * f.value())
                    .sum::<f64>()
                    / w
            })
            .collect();
        Ok(Snapshot {
            time: state.time,
            step: state.step,
            nodes: self.problem.nodes(),
            u_total: state.d.clone(),
            u_coarse: state.d.clone(),
            u_fine: vec![0.0; state.d.len()],
            f_avg,
        })
    }

    fn record(&self, state: &DnsState, dt: f64) -> Result<StepRecord> {
        Ok(StepRecord {
            step: state.step,
            time: state.time,
            dt,
            split_iterations: 0,
            newton_iterations: 0,
            worst_subdomain: None,
            kinetic_energy: self.kinetic_energy(state),
            strain_energy: self.strain_energy(state)?,
        })
    }
}

/// Integrate the single-scale problem from nodal `d0`, `v0`.
pub fn dns_run(
    problem: &DnsProblem,
    d0: &[f64],
    v0: &[f64],
    opts: &RunOptions,
) -> Result<RunResult> {
    let solver = DnsSolver::new(problem.clone())?;
    with_workers(opts.workers, || {
        let state = solver.initial_state(d0, v0)?;
        let record = solver.record(&state, 0.0)?;
        drive(
            opts,
            state,
            |s| s.time,
            |s, cap| {
                let dt = solver.stable_dt(s)?.min(cap);
                let next = solver.step(s, dt)?;
                let record = solver.record(&next, dt)?;
                Ok((next, record))
            },
            record,
            |s| solver.snapshot(s),
        )
    })?
}

/// Element-averaged stretch of the snapshot nearest `time`.
pub fn element_stretch_profile(result: &RunResult, time: f64) -> Result<Vec<f64>> {
    Ok(result.snapshot_near(time)?.f_avg.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::NeoHookean;

    fn problem(n_el: usize, integrator: DnsIntegrator) -> DnsProblem {
        DnsProblem {
            n_el,
            material: MaterialField::uniform(n_el, NeoHookean::reference()),
            bc: BoundaryConditions::clamped(),
            integrator,
            cfl: 1.0,
            p: 0.54,
        }
    }

    #[test]
    fn zero_initial_condition_stays_zero() {
        for integ in [DnsIntegrator::Cdm, DnsIntegrator::SubStep] {
            let p = problem(10, integ);
            let zero = vec![0.0; 21];
            let opts = RunOptions {
                end_time: 0.05,
                output_times: vec![0.05],
                workers: None,
                land_on_outputs: false,
            };
            let r = dns_run(&p, &zero, &zero, &opts).unwrap();
            assert!(r.snapshots[0].u_total.iter().all(|&u| u == 0.0));
            assert!(r.snapshots[0].f_avg.iter().all(|&f| f == 1.0));
        }
    }

    #[test]
    fn uniform_stretch_profile() {
        let p = problem(8, DnsIntegrator::Cdm);
        let solver = DnsSolver::new(p.clone()).unwrap();
        let d: Vec<f64> = p.nodes().iter().map(|x| 0.02 * x).collect();
        let s = solver.initial_state(&d, &vec![0.0; d.len()]).unwrap();
        for f in solver.snapshot(&s).unwrap().f_avg {
            assert!((f - 1.02).abs() < 1e-14);
        }
    }

    #[test]
    fn second_order_in_time() {
        // Single mode on a coarse grid, two step sizes, compare to a fine run.
        for integ in [DnsIntegrator::Cdm, DnsIntegrator::SubStep] {
            let p = problem(6, integ);
            let solver = DnsSolver::new(p.clone()).unwrap();
            let d0: Vec<f64> = p
                .nodes()
                .iter()
                .map(|x| 1e-6 * (std::f64::consts::PI * (x + 0.5)).sin())
                .collect();
            let v0 = vec![0.0; d0.len()];
            let end = 0.2;
            let run = |n: usize| {
                let mut s = solver.initial_state(&d0, &v0).unwrap();
                let dt = end / n as f64;
                for _ in 0..n {
                    s = solver.step(&s, dt).unwrap();
                }
                s.d
            };
            let reference = run(4096);
            let err = |n: usize| {
                run(n)
                    .iter()
                    .zip(&reference)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            };
            let (e1, e2) = (err(64), err(128));
            let order = (e1 / e2).log2();
            assert!(order > 1.8, "{integ}: observed order {order}");
        }
    }

    #[test]
    fn rejects_bad_problem() {
        let mut p = problem(4, DnsIntegrator::Cdm);
        p.n_el = 5;
        assert!(DnsSolver::new(p).is_err());
        let mut p = problem(4, DnsIntegrator::SubStep);
        p.p = 1.0;
        assert!(matches!(
            DnsSolver::new(p),
            Err(VmeError::InvalidSubstepRatio(_))
        ));
    }
}
