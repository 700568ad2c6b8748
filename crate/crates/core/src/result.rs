//! Run outputs: field snapshots and per-step records.

use serde::Serialize;

use crate::error::{Result, VmeError};
use crate::mesh::{interpolate, shape_values, DOMAIN_START};

/// Nodal fields on a uniform quadratic grid at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub step: usize,
    /// Node coordinates; element `e` spans nodes `2e..=2e+2`.
    pub nodes: Vec<f64>,
    pub u_total: Vec<f64>,
    pub u_coarse: Vec<f64>,
    pub u_fine: Vec<f64>,
    /// Quadrature-weighted mean stretch of each element.
    pub f_avg: Vec<f64>,
}

impl Snapshot {
    pub fn n_elements(&self) -> usize {
        self.f_avg.len()
    }

    /// Total displacement at `x` from the quadratic interpolant.
    pub fn sample(&self, x: f64) -> f64 {
        let n_el = self.n_elements();
        let h = (self.nodes[self.nodes.len() - 1] - self.nodes[0]) / n_el as f64;
        let e = (((x - DOMAIN_START) / h).floor().max(0.0) as usize).min(n_el - 1);
        let left = self.nodes[2 * e];
        let xi = 2.0 * (x - left) / h - 1.0;
        interpolate(
            &shape_values(xi),
            [
                self.u_total[2 * e],
                self.u_total[2 * e + 1],
                self.u_total[2 * e + 2],
            ],
        )
    }

    /// Total variation of the element-averaged stretch profile.
    pub fn stretch_variation(&self) -> f64 {
        self.f_avg.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    /// Largest split iteration count over the stages of the step.
    pub split_iterations: usize,
    /// Largest Newton iteration count over subdomains and stages.
    pub newton_iterations: usize,
    /// Subdomain that needed the most split iterations to pass its test.
    pub worst_subdomain: Option<usize>,
    pub kinetic_energy: f64,
    pub strain_energy: f64,
}

impl StepRecord {
    pub fn total_energy(&self) -> f64 {
        self.kinetic_energy + self.strain_energy
    }

    /// One line of the step log.
    pub fn log_line(&self) -> String {
        let worst = self
            .worst_subdomain
            .map_or("-".to_string(), |w| w.to_string());
        format!(
            "step={} t={:.17e} dt={:.17e} split_iters={} newton_iters={} worst_subdomain={} energy={:.17e}",
            self.step,
            self.time,
            self.dt,
            self.split_iterations,
            self.newton_iterations,
            worst,
            self.total_energy()
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunResult {
    pub snapshots: Vec<Snapshot>,
    /// Step 0 holds the initial state with `dt = 0`.
    pub steps: Vec<StepRecord>,
    pub wall_seconds: f64,
}

impl RunResult {
    /// Snapshot with time nearest `t`, provided it lies within one step of it.
    pub fn snapshot_near(&self, t: f64) -> Result<&Snapshot> {
        let best = self
            .snapshots
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
            .ok_or(VmeError::MissingSnapshot(t))?;
        let reach = self.steps.iter().map(|s| s.dt).fold(0.0, f64::max);
        if (best.time - t).abs() <= reach.max(1e-14) {
            Ok(best)
        } else {
            Err(VmeError::MissingSnapshot(t))
        }
    }

    pub fn total_split_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.split_iterations).sum()
    }

    pub fn max_split_iterations(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.split_iterations)
            .max()
            .unwrap_or(0)
    }

    pub fn max_newton_iterations(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.newton_iterations)
            .max()
            .unwrap_or(0)
    }
}

/// Time-capture helper: picks the step nearest each requested time.
#[derive(Debug, Clone)]
pub(crate) struct SnapshotSchedule {
    pending: Vec<f64>,
}

impl SnapshotSchedule {
    pub(crate) fn new(times: &[f64]) -> Self {
        let mut pending: Vec<f64> = times.to_vec();
        pending.sort_by(f64::total_cmp);
        pending.dedup();
        pending.reverse();
        SnapshotSchedule { pending }
    }

    /// Given the previous and current step times, report whether the
    /// previous and/or current state is the nearest one to any request that
    /// has now been passed. Ties go to the previous state.
    pub(crate) fn advance(&mut self, previous: f64, current: f64) -> (bool, bool) {
        let mut take = (false, false);
        while let Some(&t) = self.pending.last() {
            if !crate::integrate::reached(current, t) {
                break;
            }
            self.pending.pop();
            if current - t < t - previous {
                take.1 = true;
            } else {
                take.0 = true;
            }
        }
        take
    }

    pub(crate) fn next(&self) -> Option<f64> {
        self.pending.last().copied()
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}
