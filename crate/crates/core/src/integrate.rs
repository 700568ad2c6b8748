//! Operator-split time integration of the coupled coarse/fine system.
//!
//! Three schemes are provided: central differences at both scales
//! (EE-CDM), the Noh-Bathe explicit sub-step scheme at both scales (EE-SSM),
//! and Noh-Bathe for the coarse scale with the Bathe composite implicit
//! scheme for the fine scale (EI-SSM). Within each stage the coarse
//! acceleration and the fine fields are iterated to a fixed point.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_masses, coarse_internal_force, fine_internal_force, fine_nodal, fine_tangent,
    strain_energy, subdomain_stretches, AssembledOperators,
};
use crate::error::{Result, VmeError};
use crate::material::MaterialField;
use crate::mesh::{interpolate, shape_values, TwoScaleMesh};
use crate::result::{RunResult, Snapshot, SnapshotSchedule, StepRecord};
use crate::stability::{check_floor, clamp_cfl, critical_dt_multiscale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "ee-cdm")]
    EeCdm,
    #[serde(rename = "ee-ssm")]
    EeSsm,
    #[serde(rename = "ei-ssm")]
    EiSsm,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::EeCdm, Scheme::EeSsm, Scheme::EiSsm];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::EeCdm => "ee-cdm",
            Scheme::EeSsm => "ee-ssm",
            Scheme::EiSsm => "ei-ssm",
        }
    }

    /// Whether the fine scale carries a consistent (implicit) mass.
    pub fn implicit_fine(self) -> bool {
        self == Scheme::EiSsm
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = VmeError;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                VmeError::InvalidConfig(format!(
                    "unknown scheme `{s}` (expected ee-cdm, ee-ssm or ei-ssm)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub p: f64,
    pub cfl: f64,
    pub tol_c: f64,
    pub tol_f: f64,
    pub tol_newton: f64,
    pub max_split_iters: usize,
    pub max_newton_iters: usize,
    pub denom_floor: f64,
    /// Freeze the fine scale at zero and integrate the coarse scale alone.
    pub coarse_only: bool,
    #[serde(default)]
    pub relaxation: Relaxation,
}

/// Update rule of the split iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relaxation {
    /// Take each fine solve as the next iterate.
    None,
    /// Aitken dynamic relaxation; same fixed point, fewer passes.
    #[default]
    Aitken,
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, cfl: f64) -> Self {
        IntegratorConfig {
            scheme,
            p: 0.54,
            cfl,
            tol_c: 1e-3,
            tol_f: 1e-3,
            tol_newton: 1e-10,
            max_split_iters: 1000,
            max_newton_iters: 25,
            denom_floor: 1e-12,
            coarse_only: false,
            relaxation: Relaxation::Aitken,
        }
    }

    /// Every violated constraint, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.p > 0.0 && self.p < 1.0) {
            out.push(format!("p must lie in (0, 1), got {}", self.p));
        }
        if !(self.cfl > 0.0 && self.cfl.is_finite()) {
            out.push(format!("cfl must be positive, got {}", self.cfl));
        }
        for (name, v) in [
            ("tol_c", self.tol_c),
            ("tol_f", self.tol_f),
            ("tol_newton", self.tol_newton),
            ("denom_floor", self.denom_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive, got {v}"));
            }
        }
        if self.max_split_iters == 0 {
            out.push("max_split_iters must be at least 1".into());
        }
        if self.max_newton_iters == 0 {
            out.push("max_newton_iters must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(VmeError::InvalidSubstepRatio(self.p));
        }
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(VmeError::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Noh-Bathe weights `(q1, q2, q0)`.
pub fn substep_weights(p: f64) -> Result<(f64, f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(VmeError::InvalidSubstepRatio(p));
    }
    let q1 = (1.0 - 2.0 * p) / (2.0 * p * (1.0 - p));
    let q2 = 0.5 - p * q1;
    let q0 = -q1 - q2 + 0.5;
    Ok((q1, q2, q0))
}

/// Explicit sub-step integration constants for one increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstepConstants {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub a: [f64; 8],
}

impl SubstepConstants {
    pub fn new(p: f64, dt: f64) -> Result<Self> {
        let (q1, q2, q0) = substep_weights(p)?;
        let a0 = p * dt;
        let a1 = 0.5 * (p * dt) * (p * dt);
        let a2 = a0 / 2.0;
        let a3 = (1.0 - p) * dt;
        let a4 = 0.5 * a3 * a3;
        let a5 = q0 * a3;
        let a6 = (0.5 + q1) * a3;
        let a7 = q2 * a3;
        Ok(SubstepConstants {
            q0,
            q1,
            q2,
            a: [a0, a1, a2, a3, a4, a5, a6, a7],
        })
    }
}

/// Bathe composite constants `(c1, c2, c3)` for one increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl ImplicitConstants {
    pub fn new(p: f64, dt: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(VmeError::InvalidSubstepRatio(p));
        }
        Ok(ImplicitConstants {
            c1: (1.0 - p) / (p * dt),
            c2: -1.0 / ((1.0 - p) * p * dt),
            c3: (2.0 - p) / ((1.0 - p) * dt),
        })
    }
}

// Shared kinematic kernels; the single-scale solver calls the same ones.

/// `d + cv v + ca a`.
pub(crate) fn predict(d: &[f64], v: &[f64], a: &[f64], cv: f64, ca: f64) -> Vec<f64> {
    d.iter()
        .zip(v)
        .zip(a)
        .map(|((d, v), a)| d + cv * v + ca * a)
        .collect()
}

/// `v + h (a0 + a1)`.
pub(crate) fn average_velocity(v: &[f64], a0: &[f64], a1: &[f64], h: f64) -> Vec<f64> {
    v.iter()
        .zip(a0)
        .zip(a1)
        .map(|((v, a0), a1)| v + h * (a0 + a1))
        .collect()
}

/// `v_p + a5 a_n + a6 a_p + a7 a_1`.
pub(crate) fn substep_velocity(
    v_p: &[f64],
    a_n: &[f64],
    a_p: &[f64],
    a_1: &[f64],
    c: &SubstepConstants,
) -> Vec<f64> {
    (0..v_p.len())
        .map(|i| v_p[i] + c.a[5] * a_n[i] + c.a[6] * a_p[i] + c.a[7] * a_1[i])
        .collect()
}

/// Diagonal solve `m a = -f - g`; prescribed dofs get zero.
pub(crate) fn lumped_solve(f: &[f64], g: Option<&[f64]>, m: &[f64], fixed: &[bool]) -> Vec<f64> {
    (0..f.len())
        .map(|i| {
            if fixed[i] {
                0.0
            } else {
                let rhs = match g {
                    Some(g) => -f[i] - g[i],
                    None => -f[i],
                };
                rhs / m[i]
            }
        })
        .collect()
}

/// Relative L-infinity change with an absolute fallback for tiny references.
pub fn relative_change(new: &[f64], old: &[f64], floor: f64) -> f64 {
    let num = new
        .iter()
        .zip(old)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let den = old.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if den < floor {
        num
    } else {
        num / den
    }
}

/// Discretized two-scale problem with its mass operators.
#[derive(Debug, Clone)]
pub struct MultiscaleSystem {
    pub mesh: TwoScaleMesh,
    pub material: MaterialField,
    pub ops: AssembledOperators,
}

impl MultiscaleSystem {
    pub fn new(mesh: TwoScaleMesh, material: MaterialField) -> Result<Self> {
        let expected = mesh.n_es() * mesh.n_ef();
        if material.len() != expected {
            return Err(VmeError::InvalidMaterial(format!(
                "material field has {} entries, mesh has {expected} fine elements",
                material.len()
            )));
        }
        let ops = assemble_masses(&mesh, &material);
        Ok(MultiscaleSystem {
            mesh,
            material,
            ops,
        })
    }

    /// `sum_alpha M_cf a_f`, accumulated in subdomain order.
    fn coupling_force(&self, a_f: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.n_coarse_nodes()];
        for (alpha, a) in a_f.iter().enumerate() {
            let start = self.mesh.patch_nodes(alpha).start;
            let m = &self.ops.coupling_cf[alpha];
            let rows = m.nrows();
            let patch = &mut out[start..start + rows];
            for (col, &aj) in m.as_slice().chunks_exact(rows).zip(a) {
                for (o, &mij) in patch.iter_mut().zip(col) {
                    *o += mij * aj;
                }
            }
        }
        out
    }

    /// Coarse acceleration from `M_c a_c = -f_c - sum M_cf a_f`.
    fn coarse_acceleration(&self, f_c: &[f64], a_f: Option<&[Vec<f64>]>) -> Vec<f64> {
        let g = a_f.map(|a| self.coupling_force(a));
        lumped_solve(
            f_c,
            g.as_deref(),
            &self.ops.coarse_lumped,
            self.mesh.coarse_fixed_mask(),
        )
    }

    /// `-f_f - M_fc a_c` on subdomain `alpha`.
    fn fine_rhs(&self, alpha: usize, f_f: &[f64], a_c: &[f64]) -> Vec<f64> {
        let m = &self.ops.coupling_fc[alpha];
        let rows = m.nrows();
        let mut out: Vec<f64> = f_f.iter().map(|f| -f).collect();
        for (col, &aj) in m
            .as_slice()
            .chunks_exact(rows)
            .zip(&a_c[self.mesh.patch_nodes(alpha)])
        {
            for (o, &mij) in out.iter_mut().zip(col) {
                *o -= mij * aj;
            }
        }
        out
    }

    fn fine_forces(&self, d_c: &[f64], d_f: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        first_error(
            (0..self.mesh.n_es())
                .into_par_iter()
                .map(|alpha| {
                    fine_internal_force(
                        &self.mesh,
                        &self.material,
                        alpha,
                        &d_c[self.mesh.patch_nodes(alpha)],
                        &d_f[alpha],
                    )
                })
                .collect(),
        )
    }

    /// Zero state (fine fields zero-length when the fine scale is frozen).
    pub fn zero_state(&self) -> MultiscaleState {
        let n_c = self.mesh.n_coarse_nodes();
        let fine: Vec<Vec<f64>> = (0..self.mesh.n_es())
            .map(|a| vec![0.0; self.mesh.n_fine_dofs(a)])
            .collect();
        MultiscaleState {
            time: 0.0,
            step: 0,
            d_c: vec![0.0; n_c],
            v_c: vec![0.0; n_c],
            a_c: vec![0.0; n_c],
            d_f: fine.clone(),
            v_f: fine.clone(),
            a_f: fine,
        }
    }

    /// Kinetic energy `1/2 v^T M v` of the coupled system.
    pub fn kinetic_energy(&self, state: &MultiscaleState, scheme: Scheme) -> f64 {
        let mut ke: f64 = state
            .v_c
            .iter()
            .zip(&self.ops.coarse_lumped)
            .map(|(v, m)| 0.5 * m * v * v)
            .sum();
        for alpha in 0..self.mesh.n_es() {
            let v_f = DVector::from_column_slice(&state.v_f[alpha]);
            let v_c = DVector::from_column_slice(&state.v_c[self.mesh.patch_nodes(alpha)]);
            ke += v_c.dot(&(&self.ops.coupling_cf[alpha] * &v_f));
            let fine = &self.ops.fine[alpha];
            ke += if scheme.implicit_fine() {
                0.5 * v_f.dot(&(&fine.consistent * &v_f))
            } else {
                v_f.iter()
                    .zip(&fine.lumped)
                    .map(|(v, m)| 0.5 * m * v * v)
                    .sum::<f64>()
            };
        }
        ke
    }

    pub fn strain_energy(&self, state: &MultiscaleState) -> Result<f64> {
        strain_energy(&self.mesh, &self.material, &state.d_c, &state.d_f)
    }

    /// Nodal fields on the global fine grid.
    pub fn snapshot(&self, state: &MultiscaleState) -> Result<Snapshot> {
        let mesh = &self.mesh;
        let n_ef = mesh.n_ef();
        let k = mesh.fine_per_coarse();
        let nodes = mesh.global_fine_nodes();
        let mut u_coarse = vec![0.0; nodes.len()];
        let mut u_fine = vec![0.0; nodes.len()];
        let mut f_avg = Vec::with_capacity(mesh.n_es() * n_ef);
        for alpha in 0..mesh.n_es() {
            let patch = &state.d_c[mesh.patch_nodes(alpha)];
            let nodal = fine_nodal(mesh, alpha, &state.d_f[alpha]);
            for (i, u) in nodal.iter().enumerate() {
                let g = 2 * n_ef * alpha + i;
                let e = (i / 2).min(n_ef - 1);
                let r = i - 2 * e;
                let big_e = e / k;
                let xi_c = crate::mesh::fine_to_coarse_parent(e % k, k, r as f64 - 1.0);
                let vals = [patch[2 * big_e], patch[2 * big_e + 1], patch[2 * big_e + 2]];
                u_coarse[g] = interpolate(&shape_values(xi_c), vals);
                if i > 0 || alpha == 0 {
                    u_fine[g] = *u;
                }
            }
            let stretches = subdomain_stretches(mesh, alpha, patch, Some(&state.d_f[alpha]))?;
            for (pts, fs) in mesh.fine_points().chunks(3).zip(stretches.chunks(3)) {
                let w: f64 = pts.iter().map(|p| p.weight).sum();
                let wf: f64 = pts.iter().zip(fs).map(|(p, f)| p.weight * f.value()).sum();
                f_avg.push(wf / w);
            }
        }
        let u_total = u_coarse.iter().zip(&u_fine).map(|(c, f)| c + f).collect();
        Ok(Snapshot {
            time: state.time,
            step: state.step,
            nodes,
            u_total,
            u_coarse,
            u_fine,
            f_avg,
        })
    }
}

/// Deterministic error selection: the lowest-index failure wins.
fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiscaleState {
    pub time: f64,
    pub step: usize,
    pub d_c: Vec<f64>,
    pub v_c: Vec<f64>,
    pub a_c: Vec<f64>,
    pub d_f: Vec<Vec<f64>>,
    pub v_f: Vec<Vec<f64>>,
    pub a_f: Vec<Vec<f64>>,
}

/// Iteration counts of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepStats {
    pub split_iterations: usize,
    pub newton_iterations: usize,
    pub worst_subdomain: Option<usize>,
}

impl StepStats {
    fn merge(self, other: StepStats) -> StepStats {
        let worst = if other.split_iterations >= self.split_iterations {
            other.worst_subdomain.or(self.worst_subdomain)
        } else {
            self.worst_subdomain
        };
        StepStats {
            split_iterations: self.split_iterations.max(other.split_iterations),
            newton_iterations: self.newton_iterations.max(other.newton_iterations),
            worst_subdomain: worst,
        }
    }
}

/// Affine map from a fine displacement iterate to its acceleration.
#[derive(Debug, Clone)]
enum ImplicitStage<'a> {
    /// Trapezoidal sub-step over `p dt`.
    Sub {
        d_n: &'a [f64],
        v_n: &'a [f64],
        a_n: &'a [f64],
        pdt: f64,
    },
    /// Three-point backward full step.
    Full {
        d_n: &'a [f64],
        d_p: &'a [f64],
        v_n: &'a [f64],
        v_p: &'a [f64],
        c: ImplicitConstants,
    },
}

impl ImplicitStage<'_> {
    fn acceleration(&self, d: &[f64]) -> Vec<f64> {
        match self {
            ImplicitStage::Sub { d_n, v_n, a_n, pdt } => {
                let g = 4.0 / (pdt * pdt);
                (0..d.len())
                    .map(|i| (d[i] - d_n[i] - v_n[i] * pdt) * g - a_n[i])
                    .collect()
            }
            ImplicitStage::Full {
                d_n,
                d_p,
                v_n,
                v_p,
                c,
            } => (0..d.len())
                .map(|i| {
                    c.c3 * (c.c3 * d[i] + c.c2 * d_p[i] + c.c1 * d_n[i])
                        + c.c2 * v_p[i]
                        + c.c1 * v_n[i]
                })
                .collect(),
        }
    }

    fn mass_coefficient(&self) -> f64 {
        match self {
            ImplicitStage::Sub { pdt, .. } => 4.0 / (pdt * pdt),
            ImplicitStage::Full { c, .. } => c.c3 * c.c3,
        }
    }
}

enum FineUpdate<'a> {
    /// Fine scale frozen at zero.
    Frozen,
    /// Lumped-mass explicit solve with fixed internal forces.
    Lumped { f_f: Vec<Vec<f64>> },
    /// Consistent-mass solve with fixed internal forces.
    Consistent {
        f_f: Vec<Vec<f64>>,
        factors: Vec<Cholesky<f64, Dyn>>,
    },
    /// Newton solve of the implicit fine equations.
    Implicit { stages: Vec<ImplicitStage<'a>> },
}

/// Dynamic relaxation of the split iterate from its last two residuals.
#[derive(Default)]
struct Aitken {
    omega: f64,
    previous: Option<Vec<f64>>,
}

impl Aitken {
    fn relax(
        &mut self,
        update: &FineUpdate<'_>,
        fine: Vec<FineResult>,
        d_f: &mut [Vec<f64>],
        a_f: &mut [Vec<f64>],
    ) {
        // The iterate is the fine displacement for Newton solves and the
        // fine acceleration otherwise.
        let stages = match update {
            FineUpdate::Implicit { stages } => Some(stages),
            _ => None,
        };
        let mut residual = Vec::new();
        for (alpha, res) in fine.iter().enumerate() {
            match &res.d {
                Some(d) => residual.extend(d.iter().zip(&d_f[alpha]).map(|(g, x)| g - x)),
                None => residual.extend(res.a.iter().zip(&a_f[alpha]).map(|(g, x)| g - x)),
            }
        }
        self.omega = match &self.previous {
            None => 1.0,
            Some(prev) => {
                let mut num = 0.0;
                let mut den = 0.0;
                for (r, p) in residual.iter().zip(prev) {
                    num += p * (r - p);
                    den += (r - p) * (r - p);
                }
                if den > 0.0 {
                    -self.omega * num / den
                } else {
                    self.omega
                }
            }
        };
        let mut offset = 0;
        for (alpha, res) in fine.into_iter().enumerate() {
            let x = if res.d.is_some() {
                &mut d_f[alpha]
            } else {
                &mut a_f[alpha]
            };
            for (xi, r) in x.iter_mut().zip(&residual[offset..]) {
                *xi += self.omega * r;
            }
            offset += x.len();
            if let Some(stages) = stages {
                a_f[alpha] = stages[alpha].acceleration(&d_f[alpha]);
            }
        }
        self.previous = Some(residual);
    }
}

struct SplitOutcome {
    a_c: Vec<f64>,
    d_f: Vec<Vec<f64>>,
    a_f: Vec<Vec<f64>>,
    stats: StepStats,
}

struct FineResult {
    d: Option<Vec<f64>>,
    a: Vec<f64>,
    newton: usize,
}

struct Stepper<'a> {
    sys: &'a MultiscaleSystem,
    cfg: &'a IntegratorConfig,
    /// Index of the step being computed, for diagnostics.
    step: usize,
}

impl Stepper<'_> {
    fn frozen(&self) -> bool {
        self.cfg.coarse_only
    }

    fn fine_view<'b>(&self, d_f: &'b [Vec<f64>]) -> &'b [Vec<f64>] {
        if self.frozen() {
            &[]
        } else {
            d_f
        }
    }

    fn newton(
        &self,
        alpha: usize,
        d_c: &[f64],
        a_c: &[f64],
        start: &[f64],
        stage: &ImplicitStage<'_>,
    ) -> Result<FineResult> {
        let mesh = &self.sys.mesh;
        let patch = &d_c[mesh.patch_nodes(alpha)];
        let m = &self.sys.ops.fine[alpha].consistent;
        let ac = DVector::from_column_slice(&a_c[mesh.patch_nodes(alpha)]);
        let coupling = &self.sys.ops.coupling_fc[alpha] * ac;
        let mut d = DVector::from_column_slice(start);
        let mut i = 0;
        loop {
            let a = stage.acceleration(d.as_slice());
            let f = fine_internal_force(mesh, &self.sys.material, alpha, patch, d.as_slice())?;
            let ma = m * DVector::from_column_slice(&a);
            let r =
                DVector::from_iterator(f.len(), (0..f.len()).map(|j| -ma[j] - f[j] - coupling[j]));
            let norm = r.norm();
            if norm < self.cfg.tol_newton {
                return Ok(FineResult {
                    d: Some(d.as_slice().to_vec()),
                    a,
                    newton: i,
                });
            }
            if i == self.cfg.max_newton_iters {
                return Err(VmeError::NewtonNonConvergence {
                    step: self.step,
                    subdomain: alpha,
                    iterations: i,
                    residual: norm,
                });
            }
            let k = fine_tangent(mesh, &self.sys.material, alpha, patch, d.as_slice())?;
            let jac: DMatrix<f64> = m * stage.mass_coefficient() + k;
            let chol = jac
                .cholesky()
                .ok_or(VmeError::SingularTangent { subdomain: alpha })?;
            let delta = chol.solve(&r);
            // Halve the update until every stretch stays positive.
            let mut scale = 1.0;
            loop {
                let trial = &d + &delta * scale;
                match subdomain_stretches(mesh, alpha, patch, Some(trial.as_slice())) {
                    Ok(_) => {
                        d = trial;
                        break;
                    }
                    Err(e @ VmeError::NonPositiveStretch { .. }) => {
                        if scale < 1e-6 {
                            return Err(e);
                        }
                        scale *= 0.5;
                    }
                    Err(e) => return Err(e),
                }
            }
            i += 1;
        }
    }

    fn fine_solve(
        &self,
        update: &FineUpdate<'_>,
        d_c: &[f64],
        a_c: &[f64],
        d_f: &[Vec<f64>],
    ) -> Result<Vec<FineResult>> {
        let sys = self.sys;
        let n_es = sys.mesh.n_es();
        let solve = |alpha: usize| match update {
            FineUpdate::Frozen => unreachable!("frozen fine scale has no fine solve"),
            FineUpdate::Lumped { f_f } => {
                let mut a = sys.fine_rhs(alpha, &f_f[alpha], a_c);
                for (v, m) in a.iter_mut().zip(&sys.ops.fine[alpha].lumped) {
                    *v /= m;
                }
                Ok(FineResult {
                    d: None,
                    a,
                    newton: 0,
                })
            }
            FineUpdate::Consistent { f_f, factors } => {
                let rhs = DVector::from_vec(sys.fine_rhs(alpha, &f_f[alpha], a_c));
                Ok(FineResult {
                    d: None,
                    a: factors[alpha].solve(&rhs).as_slice().to_vec(),
                    newton: 0,
                })
            }
            FineUpdate::Implicit { stages } => {
                self.newton(alpha, d_c, a_c, &d_f[alpha], &stages[alpha])
            }
        };
        // Explicit solves are a few dozen flops each; only Newton solves are
        // worth distributing.
        let results: Vec<Result<FineResult>> = if matches!(update, FineUpdate::Implicit { .. }) {
            (0..n_es).into_par_iter().map(solve).collect()
        } else {
            (0..n_es).map(solve).collect()
        };
        first_error(results)
    }

    /// Fixed-point iteration between the coarse and fine acceleration solves.
    fn split(
        &self,
        update: FineUpdate<'_>,
        d_c: &[f64],
        mut d_f: Vec<Vec<f64>>,
        mut a_f: Vec<Vec<f64>>,
    ) -> Result<SplitOutcome> {
        let sys = self.sys;
        let cfg = self.cfg;
        let implicit = matches!(update, FineUpdate::Implicit { .. });
        let mut f_c = Vec::new();
        let mut a_c_prev: Option<Vec<f64>> = None;
        let mut max_newton = 0;
        let mut aitken = Aitken::default();
        for k in 1..=cfg.max_split_iters {
            if k == 1 || implicit {
                f_c = coarse_internal_force(&sys.mesh, &sys.material, d_c, self.fine_view(&d_f))?;
            }
            if self.frozen() {
                let a_c = sys.coarse_acceleration(&f_c, None);
                return Ok(SplitOutcome {
                    a_c,
                    d_f,
                    a_f,
                    stats: StepStats {
                        split_iterations: 1,
                        newton_iterations: 0,
                        worst_subdomain: None,
                    },
                });
            }
            let a_c = sys.coarse_acceleration(&f_c, Some(&a_f));
            let fine = self.fine_solve(&update, d_c, &a_c, &d_f)?;

            let coarse_ok = match &a_c_prev {
                Some(prev) => relative_change(&a_c, prev, cfg.denom_floor) < cfg.tol_c,
                None => false,
            };
            let mut worst: Option<(usize, f64)> = None;
            let mut fine_ok = true;
            for (alpha, res) in fine.iter().enumerate() {
                let mut e = relative_change(&res.a, &a_f[alpha], cfg.denom_floor);
                if let Some(d) = &res.d {
                    e = e.max(relative_change(d, &d_f[alpha], cfg.denom_floor));
                }
                fine_ok &= e < cfg.tol_f;
                if worst.is_none_or(|(_, w)| e > w) {
                    worst = Some((alpha, e));
                }
                max_newton = max_newton.max(res.newton);
            }
            // The coarse change is undefined on the first pass; the fine
            // test alone gates it.
            let converged = fine_ok && (coarse_ok || k == 1);
            if k == cfg.max_split_iters && !converged {
                return Err(VmeError::SplitNonConvergence {
                    step: self.step,
                    iterations: k,
                    worst_subdomain: worst.map(|w| w.0),
                });
            }
            if !converged && cfg.relaxation == Relaxation::Aitken {
                aitken.relax(&update, fine, &mut d_f, &mut a_f);
            } else {
                for (alpha, res) in fine.into_iter().enumerate() {
                    if let Some(d) = res.d {
                        d_f[alpha] = d;
                    }
                    a_f[alpha] = res.a;
                }
            }
            if converged {
                return Ok(SplitOutcome {
                    a_c,
                    d_f,
                    a_f,
                    stats: StepStats {
                        split_iterations: k,
                        newton_iterations: max_newton,
                        worst_subdomain: worst.map(|w| w.0),
                    },
                });
            }
            a_c_prev = Some(a_c);
        }
        unreachable!("split loop returns from its final iteration")
    }

    fn explicit_update(&self, d_c: &[f64], d_f: &[Vec<f64>]) -> Result<FineUpdate<'static>> {
        if self.frozen() {
            Ok(FineUpdate::Frozen)
        } else {
            Ok(FineUpdate::Lumped {
                f_f: self.sys.fine_forces(d_c, d_f)?,
            })
        }
    }

    fn ee_cdm(&self, s: &MultiscaleState, dt: f64) -> Result<(MultiscaleState, StepStats)> {
        let cv = dt;
        let ca = 0.5 * dt * dt;
        let d_c = predict(&s.d_c, &s.v_c, &s.a_c, cv, ca);
        let d_f: Vec<Vec<f64>> = (0..s.d_f.len())
            .map(|a| predict(&s.d_f[a], &s.v_f[a], &s.a_f[a], cv, ca))
            .collect();
        let update = self.explicit_update(&d_c, &d_f)?;
        let out = self.split(update, &d_c, d_f, s.a_f.clone())?;
        let h = 0.5 * dt;
        let v_c = average_velocity(&s.v_c, &s.a_c, &out.a_c, h);
        let v_f = (0..s.v_f.len())
            .map(|a| average_velocity(&s.v_f[a], &s.a_f[a], &out.a_f[a], h))
            .collect();
        Ok((
            MultiscaleState {
                time: s.time + dt,
                step: s.step + 1,
                d_c,
                v_c,
                a_c: out.a_c,
                d_f: out.d_f,
                v_f,
                a_f: out.a_f,
            },
            out.stats,
        ))
    }

    fn ee_ssm(&self, s: &MultiscaleState, dt: f64) -> Result<(MultiscaleState, StepStats)> {
        let c = SubstepConstants::new(self.cfg.p, dt)?;
        let n = s.d_f.len();
        // Sub-step.
        let d_cp = predict(&s.d_c, &s.v_c, &s.a_c, c.a[0], c.a[1]);
        let d_fp: Vec<Vec<f64>> = (0..n)
            .map(|a| predict(&s.d_f[a], &s.v_f[a], &s.a_f[a], c.a[0], c.a[1]))
            .collect();
        let update = self.explicit_update(&d_cp, &d_fp)?;
        let sub = self.split(update, &d_cp, d_fp, s.a_f.clone())?;
        let v_cp = average_velocity(&s.v_c, &s.a_c, &sub.a_c, c.a[2]);
        let v_fp: Vec<Vec<f64>> = (0..n)
            .map(|a| average_velocity(&s.v_f[a], &s.a_f[a], &sub.a_f[a], c.a[2]))
            .collect();
        // Full step.
        let d_c1 = predict(&d_cp, &v_cp, &sub.a_c, c.a[3], c.a[4]);
        let d_f1: Vec<Vec<f64>> = (0..n)
            .map(|a| predict(&sub.d_f[a], &v_fp[a], &sub.a_f[a], c.a[3], c.a[4]))
            .collect();
        let update = self.explicit_update(&d_c1, &d_f1)?;
        let full = self.split(update, &d_c1, d_f1, sub.a_f.clone())?;
        let v_c1 = substep_velocity(&v_cp, &s.a_c, &sub.a_c, &full.a_c, &c);
        let v_f1 = (0..n)
            .map(|a| substep_velocity(&v_fp[a], &s.a_f[a], &sub.a_f[a], &full.a_f[a], &c))
            .collect();
        Ok((
            MultiscaleState {
                time: s.time + dt,
                step: s.step + 1,
                d_c: d_c1,
                v_c: v_c1,
                a_c: full.a_c,
                d_f: full.d_f,
                v_f: v_f1,
                a_f: full.a_f,
            },
            sub.stats.merge(full.stats),
        ))
    }

    fn ei_ssm(&self, s: &MultiscaleState, dt: f64) -> Result<(MultiscaleState, StepStats)> {
        if self.frozen() {
            return self.ee_ssm(s, dt);
        }
        let c = SubstepConstants::new(self.cfg.p, dt)?;
        let ic = ImplicitConstants::new(self.cfg.p, dt)?;
        let n = s.d_f.len();
        let pdt = c.a[0];
        // Sub-step.
        let d_cp = predict(&s.d_c, &s.v_c, &s.a_c, c.a[0], c.a[1]);
        let stages = (0..n)
            .map(|a| ImplicitStage::Sub {
                d_n: &s.d_f[a],
                v_n: &s.v_f[a],
                a_n: &s.a_f[a],
                pdt,
            })
            .collect();
        let sub = self.split(
            FineUpdate::Implicit { stages },
            &d_cp,
            s.d_f.clone(),
            s.a_f.clone(),
        )?;
        let v_cp = average_velocity(&s.v_c, &s.a_c, &sub.a_c, c.a[2]);
        let v_fp: Vec<Vec<f64>> = (0..n)
            .map(|a| {
                (0..s.d_f[a].len())
                    .map(|i| (sub.d_f[a][i] - s.d_f[a][i]) * (2.0 / pdt) - s.v_f[a][i])
                    .collect()
            })
            .collect();
        // Full step.
        let d_c1 = predict(&d_cp, &v_cp, &sub.a_c, c.a[3], c.a[4]);
        let stages = (0..n)
            .map(|a| ImplicitStage::Full {
                d_n: &s.d_f[a],
                d_p: &sub.d_f[a],
                v_n: &s.v_f[a],
                v_p: &v_fp[a],
                c: ic,
            })
            .collect();
        let full = self.split(
            FineUpdate::Implicit { stages },
            &d_c1,
            sub.d_f.clone(),
            sub.a_f.clone(),
        )?;
        let v_c1 = substep_velocity(&v_cp, &s.a_c, &sub.a_c, &full.a_c, &c);
        let v_f1 = (0..n)
            .map(|a| {
                (0..s.d_f[a].len())
                    .map(|i| ic.c3 * full.d_f[a][i] + ic.c2 * sub.d_f[a][i] + ic.c1 * s.d_f[a][i])
                    .collect()
            })
            .collect();
        Ok((
            MultiscaleState {
                time: s.time + dt,
                step: s.step + 1,
                d_c: d_c1,
                v_c: v_c1,
                a_c: full.a_c,
                d_f: full.d_f,
                v_f: v_f1,
                a_f: full.a_f,
            },
            sub.stats.merge(full.stats),
        ))
    }
}

/// Initial accelerations from the coupled equations of motion at `t = 0`,
/// with zero fine displacement and velocity.
pub fn initial_accelerations(
    sys: &MultiscaleSystem,
    cfg: &IntegratorConfig,
    d_c0: &[f64],
    v_c0: &[f64],
) -> Result<(MultiscaleState, StepStats)> {
    let mut state = sys.zero_state();
    state.d_c = d_c0.to_vec();
    state.v_c = v_c0.to_vec();
    let stepper = Stepper { sys, cfg, step: 0 };
    let update = if cfg.coarse_only {
        FineUpdate::Frozen
    } else if cfg.scheme.implicit_fine() {
        let factors = first_error(
            sys.ops
                .fine
                .iter()
                .enumerate()
                .map(|(alpha, f)| {
                    f.consistent
                        .clone()
                        .cholesky()
                        .ok_or(VmeError::SingularTangent { subdomain: alpha })
                })
                .collect(),
        )?;
        FineUpdate::Consistent {
            f_f: sys.fine_forces(&state.d_c, &state.d_f)?,
            factors,
        }
    } else {
        stepper.explicit_update(&state.d_c, &state.d_f)?
    };
    let out = stepper.split(update, &state.d_c, state.d_f.clone(), state.a_f.clone())?;
    state.a_c = out.a_c;
    state.a_f = out.a_f;
    Ok((state, out.stats))
}

fn check_state(sys: &MultiscaleSystem, state: &MultiscaleState) -> Result<()> {
    if state.d_c.len() != sys.mesh.n_coarse_nodes() || state.d_f.len() != sys.mesh.n_es() {
        return Err(VmeError::InvalidConfig(
            "state does not match the mesh".into(),
        ));
    }
    Ok(())
}

/// Advance `state` by one increment `dt` with the configured scheme.
pub fn step(
    sys: &MultiscaleSystem,
    cfg: &IntegratorConfig,
    state: &MultiscaleState,
    dt: f64,
) -> Result<(MultiscaleState, StepStats)> {
    check_state(sys, state)?;
    let stepper = Stepper {
        sys,
        cfg,
        step: state.step + 1,
    };
    match cfg.scheme {
        Scheme::EeCdm => stepper.ee_cdm(state, dt),
        Scheme::EeSsm => stepper.ee_ssm(state, dt),
        Scheme::EiSsm => stepper.ei_ssm(state, dt),
    }
}

pub fn step_ee_cdm(
    sys: &MultiscaleSystem,
    cfg: &IntegratorConfig,
    state: &MultiscaleState,
    dt: f64,
) -> Result<(MultiscaleState, StepStats)> {
    step(
        sys,
        &IntegratorConfig {
            scheme: Scheme::EeCdm,
            ..cfg.clone()
        },
        state,
        dt,
    )
}

pub fn step_ee_ssm(
    sys: &MultiscaleSystem,
    cfg: &IntegratorConfig,
    state: &MultiscaleState,
    dt: f64,
) -> Result<(MultiscaleState, StepStats)> {
    step(
        sys,
        &IntegratorConfig {
            scheme: Scheme::EeSsm,
            ..cfg.clone()
        },
        state,
        dt,
    )
}

pub fn step_ei_ssm(
    sys: &MultiscaleSystem,
    cfg: &IntegratorConfig,
    state: &MultiscaleState,
    dt: f64,
) -> Result<(MultiscaleState, StepStats)> {
    step(
        sys,
        &IntegratorConfig {
            scheme: Scheme::EiSsm,
            ..cfg.clone()
        },
        state,
        dt,
    )
}

/// Stable increment for the current state under `cfg`.
pub fn stable_dt(
    sys: &MultiscaleSystem,
    cfg: &IntegratorConfig,
    state: &MultiscaleState,
) -> Result<f64> {
    let cfl = clamp_cfl(cfg.scheme, cfg.p, cfg.cfl);
    let fine: &[Vec<f64>] = if cfg.coarse_only { &[] } else { &state.d_f };
    let crit = critical_dt_multiscale(&sys.mesh, &sys.material, &state.d_c, fine, cfg.scheme, cfl)?;
    check_floor(crit.governing(), state.step + 1)
}

/// End time, requested snapshot times and worker count of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunOptions {
    pub end_time: f64,
    pub output_times: Vec<f64>,
    /// Rayon worker count; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Shorten the step before each output time so snapshots land on it
    /// exactly, instead of taking the nearest step.
    #[serde(default)]
    pub land_on_outputs: bool,
}

/// Run `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| VmeError::InvalidConfig(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Times within a few ulps count as equal, so capped steps land on targets.
pub(crate) fn reached(time: f64, target: f64) -> bool {
    time >= target - 1e-12 * target.abs().max(1.0)
}

/// Generic time loop shared by the two-scale and single-scale drivers.
pub(crate) fn drive<S: Clone + Send>(
    opts: &RunOptions,
    initial: S,
    time_of: impl Fn(&S) -> f64,
    mut advance: impl FnMut(&S, f64) -> Result<(S, StepRecord)>,
    initial_record: StepRecord,
    snapshot: impl Fn(&S) -> Result<Snapshot>,
) -> Result<RunResult> {
    let start = Instant::now();
    let mut schedule = SnapshotSchedule::new(&opts.output_times);
    let mut result = RunResult {
        steps: vec![initial_record],
        ..RunResult::default()
    };
    let mut state = initial;
    let mut last_captured = None;
    let mut capture = |s: &S, step: usize, result: &mut RunResult| -> Result<()> {
        if last_captured != Some(step) {
            result.snapshots.push(snapshot(s)?);
            last_captured = Some(step);
        }
        Ok(())
    };
    let (_, now) = schedule.advance(f64::NEG_INFINITY, time_of(&state));
    if now {
        capture(&state, 0, &mut result)?;
    }
    let mut index = 0;
    while !reached(time_of(&state), opts.end_time) || !schedule.is_empty() {
        let now = time_of(&state);
        let cap = if opts.land_on_outputs {
            let target = schedule.next().map_or(opts.end_time, |t| {
                if reached(now, opts.end_time) {
                    t
                } else {
                    t.min(opts.end_time)
                }
            });
            target - now
        } else {
            f64::INFINITY
        };
        let (next, record) = advance(&state, cap)?;
        let (prev, cur) = schedule.advance(time_of(&state), time_of(&next));
        if prev {
            capture(&state, index, &mut result)?;
        }
        index += 1;
        if cur {
            capture(&next, index, &mut result)?;
        }
        result.steps.push(record);
        state = next;
    }
    result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Integrate from the initial coarse displacement and velocity.
pub fn run(
    sys: &MultiscaleSystem,
    cfg: &IntegratorConfig,
    d_c0: &[f64],
    v_c0: &[f64],
    opts: &RunOptions,
) -> Result<RunResult> {
    cfg.validate()?;
    with_workers(opts.workers, || {
        let (state, stats) = initial_accelerations(sys, cfg, d_c0, v_c0)?;
        let record = step_record(sys, cfg, &state, 0.0, stats)?;
        drive(
            opts,
            state,
            |s| s.time,
            |s, cap| {
                let dt = stable_dt(sys, cfg, s)?.min(cap);
                let (next, stats) = step(sys, cfg, s, dt)?;
                let record = step_record(sys, cfg, &next, dt, stats)?;
                log::debug!("{}", record.log_line());
                Ok((next, record))
            },
            record,
            |s| sys.snapshot(s),
        )
    })?
}

fn step_record(
    sys: &MultiscaleSystem,
    cfg: &IntegratorConfig,
    state: &MultiscaleState,
    dt: f64,
    stats: StepStats,
) -> Result<StepRecord> {
    Ok(StepRecord {
        step: state.step,
        time: state.time,
        dt,
        split_iterations: stats.split_iterations,
        newton_iterations: stats.newton_iterations,
        worst_subdomain: stats.worst_subdomain,
        kinetic_energy: sys.kinetic_energy(state, cfg.scheme),
        strain_energy: sys.strain_energy(state)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::NeoHookean;
    use crate::mesh::BoundaryConditions;
    use approx::assert_relative_eq;

    fn system(n_es: usize, n_ecp: usize, n_ef: usize) -> MultiscaleSystem {
        let mesh = TwoScaleMesh::build(n_es, n_ecp, n_ef, BoundaryConditions::clamped()).unwrap();
        let mat = MaterialField::uniform(n_es * n_ef, NeoHookean::reference());
        MultiscaleSystem::new(mesh, mat).unwrap()
    }

    fn pulse(sys: &MultiscaleSystem, a: f64, c: f64) -> Vec<f64> {
        sys.mesh
            .coarse_nodes()
            .iter()
            .map(|x| a * (1.0 - (x / c).tanh().powi(2)))
            .collect()
    }

    #[test]
    fn substep_constant_values() {
        let (q1, q2, q0) = substep_weights(0.54).unwrap();
        assert_relative_eq!(q1, -0.1610305, epsilon = 1e-7);
        assert_relative_eq!(q2, 0.5869565, epsilon = 1e-7);
        assert_relative_eq!(q0, 0.0740741, epsilon = 1e-7);
        assert_eq!(substep_weights(0.5).unwrap(), (0.0, 0.5, 0.0));
        assert!(matches!(
            substep_weights(1.0),
            Err(VmeError::InvalidSubstepRatio(_))
        ));
        assert!(substep_weights(0.0).is_err());
        let c = SubstepConstants::new(0.54, 0.01).unwrap();
        assert_relative_eq!(c.a[0], 0.0054, epsilon = 1e-16);
        assert_relative_eq!(c.a[5] + c.a[6] + c.a[7], c.a[3], epsilon = 1e-16);
    }

    #[test]
    fn implicit_constant_values() {
        let c = ImplicitConstants::new(0.54, 1.0).unwrap();
        assert_relative_eq!(c.c1, 0.8518519, epsilon = 1e-7);
        assert_relative_eq!(c.c2, -4.0257649, epsilon = 1e-7);
        assert_relative_eq!(c.c3, 3.1739130, epsilon = 1e-7);
        let h = ImplicitConstants::new(0.54, 2.0).unwrap();
        assert_relative_eq!(h.c1, c.c1 / 2.0, epsilon = 1e-15);
        assert_relative_eq!(h.c2, c.c2 / 2.0, epsilon = 1e-15);
        assert_relative_eq!(h.c3, c.c3 / 2.0, epsilon = 1e-15);
        assert!(ImplicitConstants::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn relative_change_guard() {
        assert_eq!(relative_change(&[1.1], &[1.0], 1e-12), 0.10000000000000009);
        assert_eq!(relative_change(&[1e-14], &[0.0], 1e-12), 1e-14);
    }

    #[test]
    fn zero_state_stays_zero() {
        let sys = system(4, 1, 4);
        for scheme in Scheme::ALL {
            let cfg = IntegratorConfig::new(scheme, 0.5);
            let zero = vec![0.0; sys.mesh.n_coarse_nodes()];
            let (s0, _) = initial_accelerations(&sys, &cfg, &zero, &zero).unwrap();
            assert_eq!(s0, sys.zero_state());
            let mut s = s0;
            for _ in 0..3 {
                let dt = stable_dt(&sys, &cfg, &s).unwrap();
                s = step(&sys, &cfg, &s, dt).unwrap().0;
            }
            assert!(s
                .d_c
                .iter()
                .chain(s.d_f.iter().flatten())
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("cdm".parse::<Scheme>().is_err());
    }

    #[test]
    fn decoupled_initial_acceleration_converges_in_one_pass() {
        let mut sys = system(6, 1, 4);
        for m in sys
            .ops
            .coupling_cf
            .iter_mut()
            .chain(sys.ops.coupling_fc.iter_mut())
        {
            m.fill(0.0);
        }
        let d0 = pulse(&sys, 0.04, 0.05);
        let zero = vec![0.0; d0.len()];
        let cfg = IntegratorConfig::new(Scheme::EeSsm, 1.0);
        let (_, stats) = initial_accelerations(&sys, &cfg, &d0, &zero).unwrap();
        // The first pass seeds from zero; the second confirms the fixed point.
        assert!(stats.split_iterations <= 2);
    }

    #[test]
    fn linear_newton_converges_in_one_iteration() {
        let sys = system(4, 1, 4);
        let cfg = IntegratorConfig::new(Scheme::EiSsm, 0.5);
        let d0 = pulse(&sys, 1e-9, 0.1);
        let zero = vec![0.0; d0.len()];
        let (s, _) = initial_accelerations(&sys, &cfg, &d0, &zero).unwrap();
        let dt = stable_dt(&sys, &cfg, &s).unwrap();
        let (_, stats) = step(&sys, &cfg, &s, dt).unwrap();
        assert!(stats.newton_iterations <= 1, "{stats:?}");
    }

    #[test]
    fn fine_field_vanishes_on_interior_boundaries() {
        let sys = system(5, 1, 4);
        for scheme in Scheme::ALL {
            let cfg = IntegratorConfig::new(scheme, 0.5);
            let d0 = pulse(&sys, 0.04, 0.1);
            let zero = vec![0.0; d0.len()];
            let (mut s, _) = initial_accelerations(&sys, &cfg, &d0, &zero).unwrap();
            for _ in 0..5 {
                let dt = stable_dt(&sys, &cfg, &s).unwrap();
                s = step(&sys, &cfg, &s, dt).unwrap().0;
            }
            let snap = sys.snapshot(&s).unwrap();
            for alpha in 0..=5 {
                assert_eq!(snap.u_fine[8 * alpha], 0.0);
            }
            // Clamped ends hold their initial values.
            assert_eq!(s.d_c[0], d0[0]);
            assert_eq!(s.d_c.last(), d0.last());
        }
    }

    #[test]
    fn run_with_zero_end_time_returns_initial_state() {
        let sys = system(4, 1, 2);
        let cfg = IntegratorConfig::new(Scheme::EeSsm, 1.0);
        let d0 = pulse(&sys, 0.01, 0.1);
        let zero = vec![0.0; d0.len()];
        let opts = RunOptions {
            end_time: 0.0,
            output_times: vec![0.0],
            workers: Some(1),
            land_on_outputs: false,
        };
        let r = run(&sys, &cfg, &d0, &zero, &opts).unwrap();
        assert_eq!(r.snapshots.len(), 1);
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.snapshots[0].time, 0.0);
        assert_eq!(r.snapshots[0].u_total, r.snapshots[0].u_coarse);
    }

    #[test]
    fn split_cap_is_a_hard_error() {
        let sys = system(4, 1, 8);
        let mut cfg = IntegratorConfig::new(Scheme::EeSsm, 1.0);
        cfg.max_split_iters = 1;
        cfg.tol_f = 1e-300;
        let d0 = pulse(&sys, 0.04, 0.1);
        let zero = vec![0.0; d0.len()];
        let err = initial_accelerations(&sys, &cfg, &d0, &zero).unwrap_err();
        assert!(matches!(
            err,
            VmeError::SplitNonConvergence { iterations: 1, .. }
        ));
    }

    #[test]
    fn newton_cap_is_a_hard_error() {
        let sys = system(4, 1, 8);
        let mut cfg = IntegratorConfig::new(Scheme::EiSsm, 0.5);
        cfg.max_newton_iters = 1;
        cfg.tol_newton = 1e-300;
        let d0 = pulse(&sys, 0.04, 0.1);
        let zero = vec![0.0; d0.len()];
        let (s, _) = initial_accelerations(&sys, &cfg, &d0, &zero).unwrap();
        let dt = stable_dt(&sys, &cfg, &s).unwrap();
        let err = step(&sys, &cfg, &s, dt).unwrap_err();
        assert!(
            matches!(err, VmeError::NewtonNonConvergence { step: 1, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn config_validation() {
        let mut cfg = IntegratorConfig::new(Scheme::EeSsm, 1.0);
        assert!(cfg.validate().is_ok());
        cfg.p = 1.2;
        assert!(matches!(
            cfg.validate(),
            Err(VmeError::InvalidSubstepRatio(_))
        ));
        cfg.p = 0.5;
        cfg.tol_c = 0.0;
        cfg.max_newton_iters = 0;
        assert_eq!(cfg.problems().len(), 2);
    }
}
