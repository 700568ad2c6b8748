//! Problem construction in nondimensional units and comparisons between runs.
//!
//! Lengths are scaled by the bar length, time by `L / v` with the reference
//! phase wave speed `v = sqrt(E / rho)`, and moduli and densities by the
//! reference phase values.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VmeError};
use crate::integrate::{MultiscaleState, MultiscaleSystem};
use crate::material::{MaterialField, NeoHookean};
use crate::mesh::{element_nodes, interpolate, shape_values, DOMAIN_START};
use crate::result::{RunResult, Snapshot};

/// Initial displacement `a (1 - tanh^2(X / c))`, at rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialPulse {
    pub amplitude: f64,
    pub width: f64,
}

impl InitialPulse {
    pub fn new(amplitude: f64, width: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(VmeError::InvalidConfig(format!(
                "pulse amplitude must be finite, got {amplitude}"
            )));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(VmeError::InvalidConfig(format!(
                "pulse width must be positive, got {width}"
            )));
        }
        Ok(InitialPulse { amplitude, width })
    }

    pub fn displacement(&self, x: f64) -> f64 {
        let t = (x / self.width).tanh();
        self.amplitude * (1.0 - t * t)
    }
}

/// Nodal samples of the pulse. The fine scale starts at zero and everything
/// starts at rest.
pub fn build_initial_condition(pulse: &InitialPulse, nodes: &[f64]) -> Vec<f64> {
    nodes.iter().map(|&x| pulse.displacement(x)).collect()
}

/// Reference scales of a dimensional problem: bar length, and modulus and
/// density of the reference phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub length: f64,
    pub modulus: f64,
    pub density: f64,
}

impl Scaling {
    pub fn new(length: f64, modulus: f64, density: f64) -> Result<Self> {
        for (name, v) in [
            ("length", length),
            ("modulus", modulus),
            ("density", density),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(VmeError::InvalidConfig(format!(
                    "reference {name} must be positive, got {v}"
                )));
            }
        }
        Ok(Scaling {
            length,
            modulus,
            density,
        })
    }

    pub fn wave_speed(&self) -> f64 {
        (self.modulus / self.density).sqrt()
    }

    pub fn length_to_unit(&self, x: f64) -> f64 {
        x / self.length
    }

    pub fn time_to_unit(&self, t: f64) -> f64 {
        self.wave_speed() * t / self.length
    }

    pub fn time_from_unit(&self, t: f64) -> f64 {
        t * self.length / self.wave_speed()
    }

    /// Pulse with amplitude and width given in physical lengths.
    pub fn pulse(&self, amplitude: f64, width: f64) -> Result<InitialPulse> {
        InitialPulse::new(self.length_to_unit(amplitude), self.length_to_unit(width))
    }
}

/// Periodic two-phase layering: modulus 1 on the first `fraction` of each
/// cell and `contrast` on the rest, unit density throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Microstructure {
    pub contrast: f64,
    pub fraction: f64,
}

impl Microstructure {
    pub fn new(contrast: f64, fraction: f64) -> Result<Self> {
        if !(contrast > 0.0 && contrast.is_finite()) {
            return Err(VmeError::InvalidMaterial(format!(
                "contrast must be positive, got {contrast}"
            )));
        }
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(VmeError::InvalidMaterial(format!(
                "phase fraction must lie in (0, 1), got {fraction}"
            )));
        }
        Ok(Microstructure { contrast, fraction })
    }

    pub fn homogeneous() -> Self {
        Microstructure {
            contrast: 1.0,
            fraction: 0.5,
        }
    }
}

/// Per-element material for `n_cells` cells of `elements_per_cell` uniform
/// elements each, phase assigned by element midpoint.
pub fn build_modulus_field(
    micro: &Microstructure,
    n_cells: usize,
    elements_per_cell: usize,
) -> Result<MaterialField> {
    let scaled = micro.fraction * elements_per_cell as f64;
    if (scaled - scaled.round()).abs() > 1e-9 {
        return Err(VmeError::NonConformingPhase {
            beta: micro.fraction,
            elements_per_cell,
        });
    }
    let soft = NeoHookean::reference();
    let other = NeoHookean::new(micro.contrast, 1.0)?;
    Ok(MaterialField::new(
        (0..n_cells * elements_per_cell)
            .map(|g| {
                let mid = ((g % elements_per_cell) as f64 + 0.5) / elements_per_cell as f64;
                if mid < micro.fraction {
                    soft
                } else {
                    other
                }
            })
            .collect(),
    ))
}

/// Coarse plus owning-subdomain fine interpolant at each point.
pub fn total_displacement(
    sys: &MultiscaleSystem,
    state: &MultiscaleState,
    points: &[f64],
) -> Vec<f64> {
    let mesh = &sys.mesh;
    let h_c = mesh.coarse_element_length();
    let h_f = mesh.fine_element_length();
    points
        .iter()
        .map(|&x| {
            let big_e = (((x - DOMAIN_START) / h_c).floor().max(0.0) as usize).min(mesh.n_ec() - 1);
            let xi_c = mesh.coarse_element(big_e).inverse_map(x);
            let u_c = interpolate(
                &shape_values(xi_c),
                element_nodes(big_e).map(|n| state.d_c[n]),
            );
            let alpha = mesh.subdomain_of(x);
            let nodal = crate::assembly::fine_nodal(mesh, alpha, &state.d_f[alpha]);
            let left = mesh.fine_nodes(alpha)[0];
            let e = (((x - left) / h_f).floor().max(0.0) as usize).min(mesh.n_ef() - 1);
            let xi_f = mesh.fine_element(alpha * mesh.n_ef() + e).inverse_map(x);
            let u_f = interpolate(&shape_values(xi_f), element_nodes(e).map(|n| nodal[n]));
            u_c + u_f
        })
        .collect()
}

/// Relative L-infinity difference of two snapshots, sampled at the union of
/// their node coordinates, normalized by the second.
pub fn snapshot_error(a: &Snapshot, b: &Snapshot, denom_floor: f64) -> Result<f64> {
    let mut xs: Vec<f64> = a.nodes.iter().chain(&b.nodes).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let mut diff = 0.0f64;
    let mut norm = 0.0f64;
    for x in xs {
        let ub = b.sample(x);
        diff = diff.max((a.sample(x) - ub).abs());
        norm = norm.max(ub.abs());
    }
    if norm < denom_floor {
        return Err(VmeError::ZeroReference(norm));
    }
    Ok(diff / norm)
}

/// Error between two runs at one requested time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSample {
    pub requested: f64,
    pub time_a: f64,
    pub time_b: f64,
    pub error: f64,
}

/// `||u_a - u_b|| / ||u_b||` at the snapshots nearest `time`.
pub fn relative_error_linf(
    run_a: &RunResult,
    run_b: &RunResult,
    time: f64,
    denom_floor: f64,
) -> Result<ErrorSample> {
    let a = run_a.snapshot_near(time)?;
    let b = run_b.snapshot_near(time)?;
    Ok(ErrorSample {
        requested: time,
        time_a: a.time,
        time_b: b.time,
        error: snapshot_error(a, b, denom_floor)?,
    })
}
