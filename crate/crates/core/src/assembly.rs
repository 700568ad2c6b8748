//! Element integration and assembly for both scales.
//!
//! Every coarse-scale integral runs over the fine quadrature points of the
//! subdomain it belongs to, with coarse shape data taken from the patch
//! quadrature table of [`TwoScaleMesh`]. Stresses are evaluated from the
//! total stretch `F = 1 + d(u_c + u_f)/dX`.
//!
//! Element vectors are accumulated per element and then scattered, and the
//! coarse force is reduced over subdomains in index order, so results do not
//! depend on how many rayon workers are used.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Result, StretchSite};
use crate::material::{MaterialField, NeoHookean, Stretch};
use crate::mesh::{element_nodes, interpolate, QuadPoint, TwoScaleMesh};

type ElementMatrix = [[f64; 3]; 3];

/// Consistent element mass matrices of a grouped quadrature table.
fn element_masses(
    points: &[QuadPoint],
    density: impl Fn(usize) -> f64,
) -> Vec<(usize, ElementMatrix)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let el = points[i].element;
        let mut me = [[0.0; 3]; 3];
        while i < points.len() && points[i].element == el {
            let p = &points[i];
            let wr = p.weight * density(i);
            for a in 0..3 {
                for b in 0..3 {
                    me[a][b] += wr * (p.values[a] * p.values[b]);
                }
            }
            i += 1;
        }
        out.push((el, me));
    }
    out
}

fn row_sums(me: &ElementMatrix) -> [f64; 3] {
    [
        me[0][0] + me[0][1] + me[0][2],
        me[1][0] + me[1][1] + me[1][2],
        me[2][0] + me[2][1] + me[2][2],
    ]
}

/// Accumulate `sum_q w B^T P` per element and scatter into `out`.
fn scatter_forces(points: &[QuadPoint], stress: &[f64], out: &mut [f64]) {
    let mut i = 0;
    while i < points.len() {
        let el = points[i].element;
        let mut fe = [0.0; 3];
        while i < points.len() && points[i].element == el {
            let p = &points[i];
            for a in 0..3 {
                fe[a] += p.weight * p.gradients[a] * stress[i];
            }
            i += 1;
        }
        for (a, n) in element_nodes(el).into_iter().enumerate() {
            out[n] += fe[a];
        }
    }
}

/// Displacement gradient at each point of a grouped table.
fn gradients_at(points: &[QuadPoint], nodal: &[f64]) -> Vec<f64> {
    points
        .iter()
        .map(|p| interpolate(&p.gradients, element_nodes(p.element).map(|n| nodal[n])))
        .collect()
}

/// Single-scale lumped mass on a uniform quadratic grid.
pub fn single_scale_lumped_mass(
    points: &[QuadPoint],
    material: &MaterialField,
    n_nodes: usize,
) -> Vec<f64> {
    let mut m = vec![0.0; n_nodes];
    for (el, me) in element_masses(points, |i| material.get(points[i].element).density()) {
        for (a, n) in element_nodes(el).into_iter().enumerate() {
            m[n] += row_sums(&me)[a];
        }
    }
    m
}

/// Single-scale consistent mass, dense.
pub fn single_scale_consistent_mass(
    points: &[QuadPoint],
    material: &MaterialField,
    n_nodes: usize,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n_nodes, n_nodes);
    for (el, me) in element_masses(points, |i| material.get(points[i].element).density()) {
        let nodes = element_nodes(el);
        for a in 0..3 {
            for b in 0..3 {
                m[(nodes[a], nodes[b])] += me[a][b];
            }
        }
    }
    m
}

/// Stretch at every point of a single-scale grid.
pub fn single_scale_stretches(points: &[QuadPoint], d: &[f64]) -> Result<Vec<Stretch>> {
    gradients_at(points, d)
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            Stretch::from_gradient(g).map_err(|e| {
                e.with_site(StretchSite {
                    subdomain: None,
                    element: Some(points[i].element),
                    point: Some(i % 3),
                })
            })
        })
        .collect()
}

/// Single-scale internal force vector.
pub fn single_scale_force(
    points: &[QuadPoint],
    material: &MaterialField,
    d: &[f64],
) -> Result<Vec<f64>> {
    let stretches = single_scale_stretches(points, d)?;
    let stress: Vec<f64> = points
        .iter()
        .zip(&stretches)
        .map(|(p, &f)| material.get(p.element).stress(f))
        .collect();
    let mut out = vec![0.0; d.len()];
    scatter_forces(points, &stress, &mut out);
    Ok(out)
}

/// Single-scale tangent stiffness, dense.
pub fn single_scale_tangent(
    points: &[QuadPoint],
    material: &MaterialField,
    d: &[f64],
) -> Result<DMatrix<f64>> {
    let stretches = single_scale_stretches(points, d)?;
    let mut k = DMatrix::zeros(d.len(), d.len());
    for (p, &f) in points.iter().zip(&stretches) {
        let wd = p.weight * material.get(p.element).tangent(f);
        let nodes = element_nodes(p.element);
        for a in 0..3 {
            for b in 0..3 {
                k[(nodes[a], nodes[b])] += wd * (p.gradients[a] * p.gradients[b]);
            }
        }
    }
    Ok(k)
}

/// Single-scale stored energy `sum_q w psi(F)`.
pub fn single_scale_strain_energy(
    points: &[QuadPoint],
    material: &MaterialField,
    d: &[f64],
) -> Result<f64> {
    let stretches = single_scale_stretches(points, d)?;
    Ok(points
        .iter()
        .zip(&stretches)
        .map(|(p, &f)| p.weight * material.get(p.element).energy(f))
        .sum())
}

/// Fine mass data of one subdomain, on the reduced (free) fine dofs.
#[derive(Debug, Clone)]
pub struct FineMass {
    pub consistent: DMatrix<f64>,
    pub lumped: Vec<f64>,
}

/// State-independent mass operators of the two-scale system.
#[derive(Debug, Clone)]
pub struct AssembledOperators {
    /// Row-sum lumped coarse mass, full nodal length.
    pub coarse_lumped: Vec<f64>,
    /// Consistent coarse element masses, indexed by global coarse element.
    pub coarse_elements: Vec<[[f64; 3]; 3]>,
    pub fine: Vec<FineMass>,
    /// `M^{c f_alpha}`: patch coarse nodes by reduced fine dofs.
    pub coupling_cf: Vec<DMatrix<f64>>,
    /// `M^{f_alpha c}`: reduced fine dofs by patch coarse nodes.
    pub coupling_fc: Vec<DMatrix<f64>>,
}

impl AssembledOperators {
    /// Dense consistent coarse mass.
    pub fn coarse_consistent(&self) -> DMatrix<f64> {
        let n = self.coarse_lumped.len();
        let mut m = DMatrix::zeros(n, n);
        for (el, me) in self.coarse_elements.iter().enumerate() {
            let nodes = element_nodes(el);
            for a in 0..3 {
                for b in 0..3 {
                    m[(nodes[a], nodes[b])] += me[a][b];
                }
            }
        }
        m
    }
}

/// Per-point material lookup for subdomain `alpha`.
fn point_material<'a>(
    mesh: &TwoScaleMesh,
    material: &'a MaterialField,
    alpha: usize,
    i: usize,
) -> &'a NeoHookean {
    material.get(alpha * mesh.n_ef() + mesh.fine_points()[i].element)
}

/// Build the coarse, fine and coupling mass matrices.
pub fn assemble_masses(mesh: &TwoScaleMesh, material: &MaterialField) -> AssembledOperators {
    assert_eq!(
        material.len(),
        mesh.n_es() * mesh.n_ef(),
        "material field must have one entry per fine element"
    );
    let n_es = mesh.n_es();
    let mut coarse_lumped = vec![0.0; mesh.n_coarse_nodes()];
    let mut coarse_elements = Vec::with_capacity(mesh.n_ec());
    let mut fine = Vec::with_capacity(n_es);
    let mut coupling_cf = Vec::with_capacity(n_es);
    let mut coupling_fc = Vec::with_capacity(n_es);

    for alpha in 0..n_es {
        let density = |i: usize| point_material(mesh, material, alpha, i).density();
        let patch = mesh.patch_nodes(alpha);
        let mut patch_lumped = vec![0.0; patch.len()];
        for (el, me) in element_masses(mesh.coarse_points(), density) {
            for (a, n) in element_nodes(el).into_iter().enumerate() {
                patch_lumped[n] += row_sums(&me)[a];
            }
            coarse_elements.push(me);
        }
        for (i, m) in patch_lumped.into_iter().enumerate() {
            coarse_lumped[patch.start + i] += m;
        }

        let dof = mesh.fine_dof_map(alpha);
        let n_f = mesh.n_fine_dofs(alpha);
        let mut consistent = DMatrix::zeros(n_f, n_f);
        let mut nodal_lumped = vec![0.0; dof.len()];
        for (el, me) in element_masses(mesh.fine_points(), density) {
            let nodes = element_nodes(el);
            let rows = row_sums(&me);
            for a in 0..3 {
                nodal_lumped[nodes[a]] += rows[a];
                let Some(ra) = dof[nodes[a]] else { continue };
                for b in 0..3 {
                    if let Some(rb) = dof[nodes[b]] {
                        consistent[(ra, rb)] += me[a][b];
                    }
                }
            }
        }
        let lumped = nodal_lumped
            .iter()
            .zip(dof)
            .filter_map(|(&m, d)| d.map(|_| m))
            .collect();
        fine.push(FineMass { consistent, lumped });

        let mut cf = DMatrix::zeros(patch.len(), n_f);
        let mut fc = DMatrix::zeros(n_f, patch.len());
        for (i, (qc, qf)) in mesh
            .coarse_points()
            .iter()
            .zip(mesh.fine_points())
            .enumerate()
        {
            let wr = qf.weight * density(i);
            let cn = element_nodes(qc.element);
            let fnodes = element_nodes(qf.element);
            for a in 0..3 {
                for b in 0..3 {
                    if let Some(rb) = dof[fnodes[b]] {
                        let v = wr * qc.values[a] * qf.values[b];
                        cf[(cn[a], rb)] += v;
                        fc[(rb, cn[a])] += v;
                    }
                }
            }
        }
        coupling_cf.push(cf);
        coupling_fc.push(fc);
    }

    AssembledOperators {
        coarse_lumped,
        coarse_elements,
        fine,
        coupling_cf,
        coupling_fc,
    }
}

/// Expand reduced fine dofs to subdomain-local nodal values.
pub fn fine_nodal(mesh: &TwoScaleMesh, alpha: usize, d_f: &[f64]) -> Vec<f64> {
    mesh.fine_dof_map(alpha)
        .iter()
        .map(|d| d.map_or(0.0, |i| d_f[i]))
        .collect()
}

/// Restrict subdomain-local nodal values to reduced fine dofs.
pub fn fine_reduce(mesh: &TwoScaleMesh, alpha: usize, nodal: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_fine_dofs(alpha)];
    for (v, d) in nodal.iter().zip(mesh.fine_dof_map(alpha)) {
        if let Some(i) = d {
            out[*i] = *v;
        }
    }
    out
}

/// Total stretch at each fine quadrature point of subdomain `alpha`. `d_f`
/// is the reduced fine vector; `None` evaluates the coarse field alone.
pub fn subdomain_stretches(
    mesh: &TwoScaleMesh,
    alpha: usize,
    d_c_patch: &[f64],
    d_f: Option<&[f64]>,
) -> Result<Vec<Stretch>> {
    let coarse = gradients_at(mesh.coarse_points(), d_c_patch);
    let fine = d_f.map(|d| gradients_at(mesh.fine_points(), &fine_nodal(mesh, alpha, d)));
    coarse
        .into_iter()
        .enumerate()
        .map(|(i, gc)| {
            let g = match &fine {
                Some(gf) => gc + gf[i],
                None => gc,
            };
            Stretch::from_gradient(g).map_err(|e| {
                e.with_site(StretchSite {
                    subdomain: Some(alpha),
                    element: Some(alpha * mesh.n_ef() + mesh.fine_points()[i].element),
                    point: Some(i % 3),
                })
            })
        })
        .collect()
}

fn subdomain_stress(
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    alpha: usize,
    d_c_patch: &[f64],
    d_f: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let stretches = subdomain_stretches(mesh, alpha, d_c_patch, d_f)?;
    Ok(stretches
        .into_iter()
        .enumerate()
        .map(|(i, f)| point_material(mesh, material, alpha, i).stress(f))
        .collect())
}

/// Patch-local coarse internal force of subdomain `alpha`.
pub fn patch_coarse_force(
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    alpha: usize,
    d_c_patch: &[f64],
    d_f: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let stress = subdomain_stress(mesh, material, alpha, d_c_patch, d_f)?;
    let mut out = vec![0.0; d_c_patch.len()];
    scatter_forces(mesh.coarse_points(), &stress, &mut out);
    Ok(out)
}

/// Sum patch vectors into a global coarse vector in subdomain order.
pub fn reduce_patches(mesh: &TwoScaleMesh, patches: Vec<Vec<f64>>) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_coarse_nodes()];
    for (alpha, patch) in patches.into_iter().enumerate() {
        let start = mesh.patch_nodes(alpha).start;
        for (i, v) in patch.into_iter().enumerate() {
            out[start + i] += v;
        }
    }
    out
}

/// Coarse internal force `f^c_int(d_c, {d_f})`. An empty `d_f` slice
/// evaluates the coarse field alone (fine scale frozen at zero).
pub fn coarse_internal_force(
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    d_c: &[f64],
    d_f: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let patches = (0..mesh.n_es())
        .into_par_iter()
        .map(|alpha| {
            let fine = d_f.get(alpha).map(Vec::as_slice);
            patch_coarse_force(mesh, material, alpha, &d_c[mesh.patch_nodes(alpha)], fine)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce_patches(mesh, patches))
}

/// Fine internal force of subdomain `alpha` on the reduced fine dofs.
pub fn fine_internal_force(
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    alpha: usize,
    d_c_patch: &[f64],
    d_f: &[f64],
) -> Result<Vec<f64>> {
    let stress = subdomain_stress(mesh, material, alpha, d_c_patch, Some(d_f))?;
    let mut nodal = vec![0.0; mesh.fine_dof_map(alpha).len()];
    scatter_forces(mesh.fine_points(), &stress, &mut nodal);
    Ok(fine_reduce(mesh, alpha, &nodal))
}

/// Fine tangent stiffness `sum_e int B_f^T D B_f` on the reduced fine dofs.
pub fn fine_tangent(
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    alpha: usize,
    d_c_patch: &[f64],
    d_f: &[f64],
) -> Result<DMatrix<f64>> {
    let stretches = subdomain_stretches(mesh, alpha, d_c_patch, Some(d_f))?;
    let dof = mesh.fine_dof_map(alpha);
    let n = mesh.n_fine_dofs(alpha);
    let mut k = DMatrix::zeros(n, n);
    for (i, (p, f)) in mesh.fine_points().iter().zip(stretches).enumerate() {
        let wd = p.weight * point_material(mesh, material, alpha, i).tangent(f);
        let nodes = element_nodes(p.element);
        for a in 0..3 {
            let Some(ra) = dof[nodes[a]] else { continue };
            for b in 0..3 {
                if let Some(rb) = dof[nodes[b]] {
                    k[(ra, rb)] += wd * (p.gradients[a] * p.gradients[b]);
                }
            }
        }
    }
    Ok(k)
}

/// Coarse tangent stiffness on the full coarse nodal set (fixed nodes
/// included). Only needed for stability analysis.
pub fn coarse_tangent(
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    d_c: &[f64],
    d_f: &[Vec<f64>],
) -> Result<DMatrix<f64>> {
    let n = mesh.n_coarse_nodes();
    let mut k = DMatrix::zeros(n, n);
    for alpha in 0..mesh.n_es() {
        let patch = mesh.patch_nodes(alpha);
        let fine = d_f.get(alpha).map(Vec::as_slice);
        let stretches = subdomain_stretches(mesh, alpha, &d_c[patch.clone()], fine)?;
        for (i, (p, f)) in mesh.coarse_points().iter().zip(stretches).enumerate() {
            let wd = p.weight * point_material(mesh, material, alpha, i).tangent(f);
            let nodes = element_nodes(p.element);
            for a in 0..3 {
                for b in 0..3 {
                    k[(patch.start + nodes[a], patch.start + nodes[b])] +=
                        wd * (p.gradients[a] * p.gradients[b]);
                }
            }
        }
    }
    Ok(k)
}

/// Stored energy of the total field, integrated on the fine grid.
pub fn strain_energy(
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    d_c: &[f64],
    d_f: &[Vec<f64>],
) -> Result<f64> {
    let parts = (0..mesh.n_es())
        .into_par_iter()
        .map(|alpha| {
            let fine = d_f.get(alpha).map(Vec::as_slice);
            let stretches = subdomain_stretches(mesh, alpha, &d_c[mesh.patch_nodes(alpha)], fine)?;
            Ok(mesh
                .fine_points()
                .iter()
                .zip(stretches)
                .enumerate()
                .map(|(i, (p, f))| p.weight * point_material(mesh, material, alpha, i).energy(f))
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.into_iter().sum())
}
