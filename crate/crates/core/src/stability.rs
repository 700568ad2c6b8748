//! Critical time increments from element-level frequency bounds.

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{single_scale_stretches, subdomain_stretches};
use crate::error::{Result, VmeError};
use crate::integrate::Scheme;
use crate::material::{MaterialField, NeoHookean, Stretch};
use crate::mesh::{QuadPoint, TwoScaleMesh};

/// Smallest admissible time increment.
pub const DT_FLOOR: f64 = 1e-9;

/// `2 sqrt(6) / h` times the largest wave speed factor among `stretches`.
pub fn element_max_frequency(h: f64, material: &NeoHookean, stretches: &[Stretch]) -> f64 {
    let speed = stretches
        .iter()
        .map(|&f| material.wave_speed_factor(f))
        .fold(0.0, f64::max);
    frequency(h, speed)
}

fn frequency(h: f64, speed: f64) -> f64 {
    2.0 * 6f64.sqrt() / h * speed
}

/// `2 / omega` for an element of length `h` and peak wave speed `speed`.
fn element_dt(h: f64, speed: f64) -> f64 {
    2.0 / frequency(h, speed)
}

/// Largest CFL number a scheme admits.
pub fn cfl_cap(scheme: Scheme, p: f64) -> f64 {
    match scheme {
        Scheme::EeCdm => 1.0,
        Scheme::EeSsm | Scheme::EiSsm => 1.0 / p,
    }
}

/// Clamp `cfl` to the scheme cap, warning when it had to be reduced.
pub fn clamp_cfl(scheme: Scheme, p: f64, cfl: f64) -> f64 {
    let cap = cfl_cap(scheme, p);
    if cfl > cap {
        log::warn!("CFL {cfl} exceeds the {scheme} limit {cap}; using {cap}");
        cap
    } else {
        cfl
    }
}

/// Per-point wave speeds of a single-scale grid, reduced to a per-element max.
fn single_scale_element_speeds(
    points: &[QuadPoint],
    material: &MaterialField,
    d: &[f64],
) -> Result<Vec<f64>> {
    let stretches = single_scale_stretches(points, d)?;
    let n_el = points.last().map_or(0, |p| p.element + 1);
    let mut speed = vec![0.0f64; n_el];
    for (p, f) in points.iter().zip(stretches) {
        speed[p.element] = speed[p.element].max(material.get(p.element).wave_speed_factor(f));
    }
    Ok(speed)
}

/// Critical increment of a uniform single-scale grid, already scaled by `cfl`.
pub fn critical_dt_dns(
    points: &[QuadPoint],
    material: &MaterialField,
    d: &[f64],
    cfl: f64,
) -> Result<f64> {
    let n_el = points.last().map_or(1, |p| p.element + 1);
    let h = crate::mesh::uniform_element_length(n_el);
    let speeds = single_scale_element_speeds(points, material, d)?;
    Ok(cfl
        * speeds
            .into_iter()
            .map(|s| element_dt(h, s))
            .fold(f64::INFINITY, f64::min))
}

/// Critical increments of the two-scale system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalDt {
    /// Single-scale estimate on the fine grid.
    pub dt_dns: f64,
    pub dt_coarse: f64,
    pub dt_fine: f64,
    pub cfl: f64,
    pub scheme: Scheme,
}

impl CriticalDt {
    /// The bound that governs the scheme: coarse for EI-SSM, fine otherwise.
    pub fn governing(&self) -> f64 {
        match self.scheme {
            Scheme::EiSsm => self.dt_coarse,
            Scheme::EeCdm | Scheme::EeSsm => self.dt_fine,
        }
    }
}

/// Critical increments for the current state. `d_f` empty means the fine
/// scale is frozen at zero.
pub fn critical_dt_multiscale(
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    d_c: &[f64],
    d_f: &[Vec<f64>],
    scheme: Scheme,
    cfl: f64,
) -> Result<CriticalDt> {
    let per_coarse = mesh.fine_per_coarse();
    let h_f = mesh.fine_element_length();
    let h_c = mesh.coarse_element_length();
    let bounds = (0..mesh.n_es())
        .into_par_iter()
        .map(|alpha| {
            let fine = d_f.get(alpha).map(Vec::as_slice);
            let stretches = subdomain_stretches(mesh, alpha, &d_c[mesh.patch_nodes(alpha)], fine)?;
            let mut fine_dt = f64::INFINITY;
            let mut coarse_dt = f64::INFINITY;
            let mut coarse_speed = 0.0f64;
            for (e, chunk) in stretches.chunks(3).enumerate() {
                let mat = material.get(alpha * mesh.n_ef() + e);
                let speed = chunk
                    .iter()
                    .map(|&f| mat.wave_speed_factor(f))
                    .fold(0.0, f64::max);
                fine_dt = fine_dt.min(element_dt(h_f, speed));
                coarse_speed = coarse_speed.max(speed);
                if (e + 1) % per_coarse == 0 {
                    coarse_dt = coarse_dt.min(element_dt(h_c, coarse_speed));
                    coarse_speed = 0.0;
                }
            }
            Ok((fine_dt, coarse_dt))
        })
        .collect::<Vec<Result<(f64, f64)>>>();
    let mut dt_fine = f64::INFINITY;
    let mut dt_coarse = f64::INFINITY;
    for b in bounds {
        let (f, c) = b?;
        dt_fine = dt_fine.min(f);
        dt_coarse = dt_coarse.min(c);
    }
    Ok(CriticalDt {
        dt_dns: cfl * dt_fine,
        dt_coarse: cfl * dt_coarse,
        dt_fine: cfl * dt_fine,
        cfl,
        scheme,
    })
}

/// Reject increments below [`DT_FLOOR`].
pub fn check_floor(dt: f64, step: usize) -> Result<f64> {
    if dt.is_finite() && dt >= DT_FLOOR {
        Ok(dt)
    } else {
        Err(VmeError::DtFloor {
            dt,
            floor: DT_FLOOR,
            step,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{single_scale_consistent_mass, single_scale_tangent};
    use crate::mesh::{single_scale_quadrature, BoundaryConditions};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn s(v: f64) -> Stretch {
        Stretch::new(v).unwrap()
    }

    #[test]
    fn reference_frequency() {
        let m = NeoHookean::reference();
        let w = element_max_frequency(1.0 / 800.0, &m, &[s(1.0); 3]);
        assert_relative_eq!(w, 3919.18, epsilon = 1e-2);
        assert_relative_eq!(2.0 / w, 5.1031e-4, epsilon = 1e-8);
        let w2 = element_max_frequency(2.0 / 800.0, &m, &[s(1.0); 3]);
        assert_relative_eq!(w2, w / 2.0, epsilon = 1e-12);
        let w3 = element_max_frequency(1.0 / 800.0, &m, &[s(1.0), s(0.5), s(1.0)]);
        assert_relative_eq!(w3 / w, 2.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn dns_dt_values() {
        let pts = single_scale_quadrature(800);
        let mat = MaterialField::uniform(800, NeoHookean::reference());
        let d = vec![0.0; 1601];
        let dt = critical_dt_dns(&pts, &mat, &d, 1.0).unwrap();
        assert_relative_eq!(dt, 5.1031e-4, epsilon = 1e-8);
        assert_relative_eq!(
            critical_dt_dns(&pts, &mat, &d, 0.5).unwrap(),
            dt / 2.0,
            epsilon = 1e-15
        );
        let het = MaterialField::new(
            (0..800)
                .map(|e| NeoHookean::new(if e % 8 < 4 { 1.0 } else { 2.0 }, 1.0).unwrap())
                .collect(),
        );
        assert_relative_eq!(
            critical_dt_dns(&pts, &het, &d, 1.0).unwrap(),
            dt / 2f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn multiscale_dt_values() {
        let mesh = TwoScaleMesh::build(100, 1, 8, BoundaryConditions::clamped()).unwrap();
        let mat = MaterialField::uniform(800, NeoHookean::reference());
        let d_c = vec![0.0; mesh.n_coarse_nodes()];
        let c = critical_dt_multiscale(&mesh, &mat, &d_c, &[], Scheme::EeSsm, 1.0).unwrap();
        assert_relative_eq!(c.dt_fine, 5.1031e-4, epsilon = 1e-8);
        assert_relative_eq!(c.dt_coarse, 4.0825e-3, epsilon = 1e-7);
        assert_eq!(c.governing(), c.dt_fine);
        let ei = critical_dt_multiscale(&mesh, &mat, &d_c, &[], Scheme::EiSsm, 1.0).unwrap();
        assert_eq!(ei.governing(), ei.dt_coarse);
        assert!(c.dt_fine <= c.dt_coarse);

        let matched = TwoScaleMesh::build(10, 8, 8, BoundaryConditions::clamped()).unwrap();
        let d_c = vec![0.0; matched.n_coarse_nodes()];
        let m = critical_dt_multiscale(
            &matched,
            &MaterialField::uniform(80, NeoHookean::reference()),
            &d_c,
            &[],
            Scheme::EeCdm,
            1.0,
        )
        .unwrap();
        assert_eq!(m.dt_fine, m.dt_coarse);
    }

    #[test]
    fn dt_tracks_state() {
        let pts = single_scale_quadrature(20);
        let mat = MaterialField::uniform(20, NeoHookean::reference());
        let x = crate::mesh::uniform_nodes(20);
        let base = critical_dt_dns(&pts, &mat, &vec![0.0; 41], 1.0).unwrap();
        let tension: Vec<f64> = x.iter().map(|x| 0.1 * x).collect();
        let compression: Vec<f64> = x.iter().map(|x| -0.1 * x).collect();
        assert!(critical_dt_dns(&pts, &mat, &tension, 1.0).unwrap() > base);
        assert!(critical_dt_dns(&pts, &mat, &compression, 1.0).unwrap() < base);
    }

    #[test]
    fn element_bound_dominates_assembled_spectrum() {
        for n_el in [1, 2, 5, 14] {
            let pts = single_scale_quadrature(n_el);
            let mat = MaterialField::uniform(n_el, NeoHookean::reference());
            let n = 2 * n_el + 1;
            let k = single_scale_tangent(&pts, &mat, &vec![0.0; n]).unwrap();
            let m = single_scale_consistent_mass(&pts, &mat, n);
            // Lumped mass generalized problem, clamped ends removed.
            let free: Vec<usize> = (1..n - 1).collect();
            let nf = free.len();
            let mut a = DMatrix::zeros(nf, nf);
            for (i, &r) in free.iter().enumerate() {
                let mi = m.row(r).sum();
                for (j, &c) in free.iter().enumerate() {
                    let mj = m.row(c).sum();
                    a[(i, j)] = k[(r, c)] / (mi * mj).sqrt();
                }
            }
            let w_max = a.symmetric_eigenvalues().max().sqrt();
            let bound =
                element_max_frequency(1.0 / n_el as f64, &NeoHookean::reference(), &[s(1.0); 3]);
            assert!(w_max <= bound, "n_el={n_el}: {w_max} > {bound}");
        }
    }

    #[test]
    fn cfl_caps() {
        assert_eq!(cfl_cap(Scheme::EeCdm, 0.54), 1.0);
        assert_relative_eq!(cfl_cap(Scheme::EeSsm, 0.54), 1.0 / 0.54);
        assert_eq!(clamp_cfl(Scheme::EeCdm, 0.54, 1.5), 1.0);
        assert_eq!(clamp_cfl(Scheme::EiSsm, 0.54, 0.5), 0.5);
    }

    #[test]
    fn floor() {
        assert!(check_floor(1e-3, 0).is_ok());
        assert!(matches!(
            check_floor(1e-12, 7),
            Err(VmeError::DtFloor { step: 7, .. })
        ));
    }
}
