//! Two-scale discretization of the unit domain `[-1/2, 1/2]`.
//!
//! The domain is tiled by `n_es` enrichment subdomains (unit cells). Each
//! cell carries a patch of `n_ecp` coarse quadratic elements and, separately,
//! `n_ef` fine quadratic elements. The two grids are compatible: every coarse
//! element is exactly the union of `n_ef / n_ecp` consecutive fine elements,
//! so coarse-scale integrals are evaluated at fine-scale quadrature points.
//!
//! All grids are uniform, which keeps the isoparametric maps affine and the
//! inverse coarse map exact.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VmeError};

/// Left end of the nondimensional domain.
pub const DOMAIN_START: f64 = -0.5;
/// Nondimensional domain length.
pub const DOMAIN_LENGTH: f64 = 1.0;

/// Three-point Gauss-Legendre rule on `[-1, 1]`.
pub const GAUSS_POINTS: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
pub const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Quadratic Lagrange shape functions at parent coordinate `xi`.
pub fn shape_values(xi: f64) -> [f64; 3] {
    [0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)]
}

/// Parent-coordinate derivatives of [`shape_values`].
pub fn shape_parent_gradients(xi: f64) -> [f64; 3] {
    [xi - 0.5, -2.0 * xi, xi + 0.5]
}

/// `sum_i coeffs[i] * values[i]`, accumulated left to right.
#[inline]
pub fn interpolate(coeffs: &[f64; 3], values: [f64; 3]) -> f64 {
    coeffs[0] * values[0] + coeffs[1] * values[1] + coeffs[2] * values[2]
}

/// Nodes of element `e` on a uniform quadratic grid (left, mid, right).
#[inline]
pub fn element_nodes(e: usize) -> [usize; 3] {
    [2 * e, 2 * e + 1, 2 * e + 2]
}

/// Node coordinates of `n_el` uniform quadratic elements spanning the domain.
pub fn uniform_nodes(n_el: usize) -> Vec<f64> {
    let step = DOMAIN_LENGTH / (2 * n_el) as f64;
    (0..=2 * n_el)
        .map(|i| DOMAIN_START + i as f64 * step)
        .collect()
}

/// Element length of a uniform grid with `n_el` elements over the domain.
#[inline]
pub fn uniform_element_length(n_el: usize) -> f64 {
    DOMAIN_LENGTH / n_el as f64
}

/// An affine three-node element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticElement {
    pub left: f64,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeEval {
    pub values: [f64; 3],
    pub gradients: [f64; 3],
    pub jacobian: f64,
}

impl QuadraticElement {
    pub fn new(left: f64, length: f64) -> Self {
        QuadraticElement { left, length }
    }

    pub fn node_coords(&self) -> [f64; 3] {
        [
            self.left,
            self.left + 0.5 * self.length,
            self.left + self.length,
        ]
    }

    pub fn jacobian(&self) -> f64 {
        0.5 * self.length
    }

    /// Shape values and physical gradients at parent coordinate `xi`.
    pub fn shape_eval(&self, xi: f64) -> ShapeEval {
        let jacobian = self.jacobian();
        let dn = shape_parent_gradients(xi);
        ShapeEval {
            values: shape_values(xi),
            gradients: [dn[0] / jacobian, dn[1] / jacobian, dn[2] / jacobian],
            jacobian,
        }
    }

    /// Physical coordinate of parent point `xi`.
    pub fn map(&self, xi: f64) -> f64 {
        self.left + 0.5 * (xi + 1.0) * self.length
    }

    /// Parent coordinate of physical point `x`.
    pub fn inverse_map(&self, x: f64) -> f64 {
        2.0 * (x - self.left) / self.length - 1.0
    }
}

/// One integration point with the shape data of the element it is used for.
///
/// `element` indexes whatever grid the shape data belongs to; for two-scale
/// tables it is the patch-local coarse or fine element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub element: usize,
    /// Gauss weight times jacobian of the element being integrated over.
    pub weight: f64,
    pub values: [f64; 3],
    pub gradients: [f64; 3],
}

/// Quadrature table for a uniform single-scale grid (element-major, three
/// points per element). Since the grid is uniform every element shares the
/// same shape data; only `element` differs.
pub fn single_scale_quadrature(n_el: usize) -> Vec<QuadPoint> {
    let elem = QuadraticElement::new(0.0, uniform_element_length(n_el));
    (0..n_el)
        .flat_map(|e| {
            (0..3).map(move |q| {
                let s = elem.shape_eval(GAUSS_POINTS[q]);
                QuadPoint {
                    element: e,
                    weight: GAUSS_WEIGHTS[q] * s.jacobian,
                    values: s.values,
                    gradients: s.gradients,
                }
            })
        })
        .collect()
}

/// Exterior end condition of the 1-D domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EndCondition {
    /// Prescribed zero displacement.
    #[default]
    Fixed,
    /// Traction boundary (zero traction in every supported problem).
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BoundaryConditions {
    pub left: EndCondition,
    pub right: EndCondition,
}

impl BoundaryConditions {
    pub fn clamped() -> Self {
        BoundaryConditions::default()
    }
}

/// Nodal indices of a uniform grid with `n_nodes` nodes that carry a
/// prescribed displacement.
pub fn fixed_end_nodes(n_nodes: usize, bc: BoundaryConditions) -> Vec<usize> {
    let mut fixed = Vec::new();
    if bc.left == EndCondition::Fixed {
        fixed.push(0);
    }
    if bc.right == EndCondition::Fixed {
        fixed.push(n_nodes - 1);
    }
    fixed
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoScaleMesh {
    n_es: usize,
    n_ecp: usize,
    n_ef: usize,
    bc: BoundaryConditions,
    cell_length: f64,
    coarse_length: f64,
    fine_length: f64,
    coarse_nodes: Vec<f64>,
    fine_nodes: Vec<Vec<f64>>,
    coarse_connectivity: Vec<[usize; 3]>,
    fine_connectivity: Vec<[usize; 3]>,
    coarse_fixed: Vec<bool>,
    fine_constrained: Vec<Vec<usize>>,
    fine_dof: Vec<Vec<Option<usize>>>,
    fine_to_coarse: Vec<usize>,
    coarse_points: Vec<QuadPoint>,
    fine_points: Vec<QuadPoint>,
    point_parent: Vec<(f64, f64)>,
}

impl TwoScaleMesh {
    pub fn build(n_es: usize, n_ecp: usize, n_ef: usize, bc: BoundaryConditions) -> Result<Self> {
        let mut problems = Vec::new();
        if n_es == 0 {
            problems.push("n_es must be at least 1".to_string());
        }
        if n_ecp == 0 {
            problems.push("n_ecp must be at least 1".to_string());
        }
        if n_ef < n_ecp {
            problems.push(format!("n_ef ({n_ef}) must be at least n_ecp ({n_ecp})"));
        } else if n_ecp > 0 && n_ef % n_ecp != 0 {
            problems.push(format!(
                "n_ef ({n_ef}) must be divisible by n_ecp ({n_ecp})"
            ));
        }
        if !problems.is_empty() {
            return Err(VmeError::InvalidDiscretization(problems.join("; ")));
        }

        let n_ec = n_es * n_ecp;
        let per_coarse = n_ef / n_ecp;
        let cell_length = DOMAIN_LENGTH / n_es as f64;
        let coarse_length = uniform_element_length(n_ec);
        let fine_length = uniform_element_length(n_es * n_ef);

        let coarse_nodes = uniform_nodes(n_ec);
        let global_fine = uniform_nodes(n_es * n_ef);
        let fine_nodes: Vec<Vec<f64>> = (0..n_es)
            .map(|a| global_fine[2 * n_ef * a..=2 * n_ef * (a + 1)].to_vec())
            .collect();

        let coarse_connectivity = (0..n_ec).map(element_nodes).collect();
        let fine_connectivity = (0..n_ef).map(element_nodes).collect();

        let mut coarse_fixed = vec![false; coarse_nodes.len()];
        for i in fixed_end_nodes(coarse_nodes.len(), bc) {
            coarse_fixed[i] = true;
        }

        // Fine fields vanish on every subdomain boundary except where the
        // boundary is an exterior traction boundary.
        let last_local = 2 * n_ef;
        let mut fine_constrained = Vec::with_capacity(n_es);
        let mut fine_dof = Vec::with_capacity(n_es);
        for a in 0..n_es {
            let mut constrained = Vec::new();
            let left_free = a == 0 && bc.left == EndCondition::Free;
            let right_free = a == n_es - 1 && bc.right == EndCondition::Free;
            if !left_free {
                constrained.push(0);
            }
            if !right_free {
                constrained.push(last_local);
            }
            let mut next = 0;
            let map = (0..=last_local)
                .map(|i| {
                    if constrained.contains(&i) {
                        None
                    } else {
                        next += 1;
                        Some(next - 1)
                    }
                })
                .collect();
            fine_constrained.push(constrained);
            fine_dof.push(map);
        }

        let fine_to_coarse = (0..n_ef).map(|e| e / per_coarse).collect();

        // Patch-local two-scale quadrature table. The coarse parent
        // coordinate of a fine point is M_c^{-1}(M_f(xi_f)), written in parent
        // space so that identical grids map exactly.
        let fine_elem = QuadraticElement::new(0.0, fine_length);
        let coarse_elem = QuadraticElement::new(0.0, coarse_length);
        let mut coarse_points = Vec::with_capacity(3 * n_ef);
        let mut fine_points = Vec::with_capacity(3 * n_ef);
        let mut point_parent = Vec::with_capacity(3 * n_ef);
        for e in 0..n_ef {
            let big_e = e / per_coarse;
            let j = e % per_coarse;
            for q in 0..3 {
                let xi_f = GAUSS_POINTS[q];
                let xi_c = fine_to_coarse_parent(j, per_coarse, xi_f);
                let sf = fine_elem.shape_eval(xi_f);
                let sc = coarse_elem.shape_eval(xi_c);
                let weight = GAUSS_WEIGHTS[q] * sf.jacobian;
                fine_points.push(QuadPoint {
                    element: e,
                    weight,
                    values: sf.values,
                    gradients: sf.gradients,
                });
                coarse_points.push(QuadPoint {
                    element: big_e,
                    weight,
                    values: sc.values,
                    gradients: sc.gradients,
                });
                point_parent.push((xi_f, xi_c));
            }
        }

        Ok(TwoScaleMesh {
            n_es,
            n_ecp,
            n_ef,
            bc,
            cell_length,
            coarse_length,
            fine_length,
            coarse_nodes,
            fine_nodes,
            coarse_connectivity,
            fine_connectivity,
            coarse_fixed,
            fine_constrained,
            fine_dof,
            fine_to_coarse,
            coarse_points,
            fine_points,
            point_parent,
        })
    }

    pub fn n_es(&self) -> usize {
        self.n_es
    }

    pub fn n_ecp(&self) -> usize {
        self.n_ecp
    }

    pub fn n_ef(&self) -> usize {
        self.n_ef
    }

    /// Total number of coarse elements.
    pub fn n_ec(&self) -> usize {
        self.n_es * self.n_ecp
    }

    /// Fine elements per coarse element.
    pub fn fine_per_coarse(&self) -> usize {
        self.n_ef / self.n_ecp
    }

    pub fn boundary_conditions(&self) -> BoundaryConditions {
        self.bc
    }

    pub fn cell_length(&self) -> f64 {
        self.cell_length
    }

    pub fn coarse_element_length(&self) -> f64 {
        self.coarse_length
    }

    pub fn fine_element_length(&self) -> f64 {
        self.fine_length
    }

    pub fn coarse_nodes(&self) -> &[f64] {
        &self.coarse_nodes
    }

    pub fn n_coarse_nodes(&self) -> usize {
        self.coarse_nodes.len()
    }

    pub fn fine_nodes(&self, alpha: usize) -> &[f64] {
        &self.fine_nodes[alpha]
    }

    pub fn coarse_connectivity(&self) -> &[[usize; 3]] {
        &self.coarse_connectivity
    }

    /// Subdomain-local fine connectivity (identical for every subdomain).
    pub fn fine_connectivity(&self) -> &[[usize; 3]] {
        &self.fine_connectivity
    }

    pub fn is_coarse_fixed(&self, node: usize) -> bool {
        self.coarse_fixed[node]
    }

    pub fn coarse_fixed_mask(&self) -> &[bool] {
        &self.coarse_fixed
    }

    /// Local fine node indices whose fine displacement is held at zero.
    pub fn fine_constrained(&self, alpha: usize) -> &[usize] {
        &self.fine_constrained[alpha]
    }

    /// Map from local fine node to reduced (free) fine dof.
    pub fn fine_dof_map(&self, alpha: usize) -> &[Option<usize>] {
        &self.fine_dof[alpha]
    }

    pub fn n_fine_dofs(&self, alpha: usize) -> usize {
        self.fine_dof[alpha].iter().flatten().count()
    }

    /// Global coarse nodes of the patch covering subdomain `alpha`.
    pub fn patch_nodes(&self, alpha: usize) -> Range<usize> {
        let start = 2 * self.n_ecp * alpha;
        start..start + 2 * self.n_ecp + 1
    }

    /// Global coarse element owning subdomain `alpha`'s local fine element `e`.
    pub fn owning_coarse_element(&self, alpha: usize, e: usize) -> usize {
        alpha * self.n_ecp + self.fine_to_coarse[e]
    }

    /// Patch-local coarse element of each local fine element.
    pub fn fine_to_coarse(&self) -> &[usize] {
        &self.fine_to_coarse
    }

    /// Coarse shape data at the fine quadrature points of one subdomain.
    pub fn coarse_points(&self) -> &[QuadPoint] {
        &self.coarse_points
    }

    /// Fine shape data at the fine quadrature points of one subdomain.
    pub fn fine_points(&self) -> &[QuadPoint] {
        &self.fine_points
    }

    /// `(xi_f, xi_c)` of every patch quadrature point.
    pub fn point_parent_coords(&self) -> &[(f64, f64)] {
        &self.point_parent
    }

    pub fn coarse_element(&self, global: usize) -> QuadraticElement {
        QuadraticElement::new(self.coarse_nodes[2 * global], self.coarse_length)
    }

    /// Fine element by global index `alpha * n_ef + e`.
    pub fn fine_element(&self, global: usize) -> QuadraticElement {
        let (alpha, e) = (global / self.n_ef, global % self.n_ef);
        QuadraticElement::new(self.fine_nodes[alpha][2 * e], self.fine_length)
    }

    /// Locate the coarse element and parent coordinate of a fine parent point
    /// by composing the fine isoparametric map with the inverse coarse map.
    pub fn map_fine_to_coarse_parent(&self, fine_global: usize, xi_f: f64) -> Result<(usize, f64)> {
        let (alpha, e) = (fine_global / self.n_ef, fine_global % self.n_ef);
        let x = self.fine_element(fine_global).map(xi_f);
        let coarse = self.owning_coarse_element(alpha, e);
        let xi_c = self.coarse_element(coarse).inverse_map(x);
        if !(-1.0 - 1e-10..=1.0 + 1e-10).contains(&xi_c) {
            return Err(VmeError::PointOutsideCoarseElement {
                x,
                fine_element: fine_global,
                coarse_element: coarse,
            });
        }
        Ok((coarse, xi_c.clamp(-1.0, 1.0)))
    }

    /// Subdomain containing `x` (interior boundary points go to the right cell).
    pub fn subdomain_of(&self, x: f64) -> usize {
        let s = ((x - DOMAIN_START) / self.cell_length).floor();
        (s.max(0.0) as usize).min(self.n_es - 1)
    }

    /// Every fine node coordinate in the domain, shared subdomain boundary
    /// nodes listed once.
    pub fn global_fine_nodes(&self) -> Vec<f64> {
        uniform_nodes(self.n_es * self.n_ef)
    }
}

/// Parent coordinate inside a coarse element of a point at `xi_f` in its
/// `j`-th of `k` fine sub-elements.
pub(crate) fn fine_to_coarse_parent(j: usize, k: usize, xi_f: f64) -> f64 {
    if k == 1 {
        xi_f
    } else {
        (2.0 * j as f64 + 1.0 + xi_f) / k as f64 - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mesh(n_es: usize, n_ecp: usize, n_ef: usize) -> TwoScaleMesh {
        TwoScaleMesh::build(n_es, n_ecp, n_ef, BoundaryConditions::clamped()).unwrap()
    }

    #[test]
    fn default_discretization() {
        let m = mesh(100, 1, 8);
        assert_eq!(m.n_ec(), 100);
        assert_relative_eq!(m.coarse_element_length(), 0.01, epsilon = 1e-15);
        assert_relative_eq!(m.fine_element_length(), 0.00125, epsilon = 1e-15);
        assert_eq!(m.n_coarse_nodes(), 201);
        assert_eq!(m.global_fine_nodes().len(), 1601);
        assert_eq!(m.n_fine_dofs(0), 15);
    }

    #[test]
    fn single_element_mesh() {
        let m = mesh(1, 1, 1);
        assert_eq!(m.coarse_nodes(), &[-0.5, 0.0, 0.5]);
        assert_eq!(m.fine_nodes(0), &[-0.5, 0.0, 0.5]);
        assert_eq!(m.n_fine_dofs(0), 1);
    }

    #[test]
    fn patched_discretization() {
        let m = mesh(25, 4, 32);
        assert_eq!(m.n_ec(), 100);
        assert_eq!(m.fine_per_coarse(), 8);
        for e in 0..32 {
            assert_eq!(m.owning_coarse_element(3, e), 12 + e / 8);
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let bc = BoundaryConditions::clamped();
        assert!(TwoScaleMesh::build(0, 1, 1, bc).is_err());
        assert!(TwoScaleMesh::build(1, 0, 1, bc).is_err());
        assert!(TwoScaleMesh::build(1, 2, 1, bc).is_err());
        assert!(matches!(
            TwoScaleMesh::build(4, 2, 7, bc),
            Err(VmeError::InvalidDiscretization(_))
        ));
    }

    #[test]
    fn shape_function_nodal_values() {
        assert_eq!(shape_values(0.0), [0.0, 1.0, 0.0]);
        assert_eq!(shape_values(1.0), [0.0, 0.0, 1.0]);
        assert_eq!(shape_values(-1.0), [1.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn partition_of_unity(xi in -1.0f64..=1.0, h in 1e-4f64..1.0) {
            let s = QuadraticElement::new(0.3, h).shape_eval(xi);
            prop_assert!((s.values.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            prop_assert!(s.gradients.iter().sum::<f64>().abs() < 1e-12 / h);
        }
    }

    #[test]
    fn fine_to_coarse_map_example() {
        let m = mesh(100, 1, 8);
        // Fine element [0, 0.00125] is the first fine element of cell 50.
        let global = 50 * 8;
        let el = m.fine_element(global);
        assert_relative_eq!(el.left, 0.0, epsilon = 1e-15);
        let (coarse, xi_c) = m.map_fine_to_coarse_parent(global, 0.0).unwrap();
        assert_eq!(coarse, 50);
        assert_relative_eq!(xi_c, -0.875, epsilon = 1e-12);
        let (_, xi_c) = m.map_fine_to_coarse_parent(global, -1.0).unwrap();
        assert_relative_eq!(xi_c, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_grids_map_identically() {
        let m = mesh(10, 4, 4);
        for (xi_f, xi_c) in m.point_parent_coords() {
            assert_eq!(xi_f, xi_c);
        }
        for xi in [-1.0, -0.3, 0.0, 0.77, 1.0] {
            let (_, xi_c) = m.map_fine_to_coarse_parent(17, xi).unwrap();
            assert_relative_eq!(xi_c, xi, epsilon = 1e-12);
        }
    }

    #[test]
    fn parent_table_matches_physical_round_trip() {
        for (n_es, n_ecp, n_ef) in [(100, 1, 8), (25, 2, 32), (25, 4, 32), (3, 3, 9)] {
            let m = mesh(n_es, n_ecp, n_ef);
            for alpha in [0, n_es / 2, n_es - 1] {
                for e in 0..n_ef {
                    for q in 0..3 {
                        let (xi_f, xi_c_table) = m.point_parent_coords()[3 * e + q];
                        let (coarse, xi_c) =
                            m.map_fine_to_coarse_parent(alpha * n_ef + e, xi_f).unwrap();
                        assert_eq!(coarse, m.owning_coarse_element(alpha, e));
                        assert!((xi_c - xi_c_table).abs() < 1e-12);
                        let x_f = m.fine_element(alpha * n_ef + e).map(xi_f);
                        let x_c = m.coarse_element(coarse).map(xi_c);
                        assert!((x_f - x_c).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn coarse_interpolation_reproduces_linear_field() {
        let m = mesh(25, 2, 32);
        let u: Vec<f64> = m.coarse_nodes().to_vec();
        for alpha in 0..m.n_es() {
            let patch = m.patch_nodes(alpha);
            for (i, (qc, qf)) in m.coarse_points().iter().zip(m.fine_points()).enumerate() {
                let nodes = element_nodes(qc.element).map(|n| u[patch.start + n]);
                let x = m
                    .fine_element(alpha * m.n_ef() + qf.element)
                    .map(m.point_parent_coords()[i].0);
                assert!((interpolate(&qc.values, nodes) - x).abs() < 1e-12);
                assert!((interpolate(&qc.gradients, nodes) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn coarse_elements_are_unions_of_fine_elements() {
        let m = mesh(25, 4, 32);
        for alpha in 0..m.n_es() {
            for big_e in 0..m.n_ecp() {
                let coarse = m.coarse_element(alpha * m.n_ecp() + big_e);
                let owned: Vec<usize> = (0..m.n_ef())
                    .filter(|&e| m.fine_to_coarse()[e] == big_e)
                    .collect();
                let first = m.fine_element(alpha * m.n_ef() + owned[0]);
                let last = m.fine_element(alpha * m.n_ef() + *owned.last().unwrap());
                assert!((first.left - coarse.left).abs() < 1e-12);
                assert!((last.node_coords()[2] - coarse.node_coords()[2]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subdomains_tile_the_domain() {
        let m = mesh(7, 1, 3);
        assert_relative_eq!(m.fine_nodes(0)[0], -0.5);
        assert_relative_eq!(*m.fine_nodes(6).last().unwrap(), 0.5, epsilon = 1e-15);
        for a in 0..6 {
            assert_eq!(m.fine_nodes(a).last(), m.fine_nodes(a + 1).first());
        }
    }

    #[test]
    fn constrained_fine_nodes() {
        let m = mesh(4, 1, 2);
        for a in 0..4 {
            assert_eq!(m.fine_constrained(a), &[0, 4]);
            assert_eq!(m.fine_dof_map(a), &[None, Some(0), Some(1), Some(2), None]);
        }
        let free = TwoScaleMesh::build(
            4,
            1,
            2,
            BoundaryConditions {
                left: EndCondition::Free,
                right: EndCondition::Fixed,
            },
        )
        .unwrap();
        assert_eq!(free.fine_constrained(0), &[4]);
        assert_eq!(free.fine_constrained(1), &[0, 4]);
        assert_eq!(free.n_fine_dofs(0), 4);
        assert!(!free.is_coarse_fixed(0));
        assert!(free.is_coarse_fixed(8));
    }

    #[test]
    fn gather_maps_cover_global_dofs() {
        let m = mesh(5, 2, 4);
        let mut hits = vec![0usize; m.n_coarse_nodes()];
        for conn in m.coarse_connectivity() {
            let mut sorted = *conn;
            sorted.sort();
            assert!(sorted.windows(2).all(|w| w[0] != w[1]));
            for &n in conn {
                hits[n] += 1;
            }
        }
        assert!(hits.iter().all(|&h| h > 0));
        for a in 0..m.n_es() {
            let patch = m.patch_nodes(a);
            assert_eq!(patch.len(), 2 * m.n_ecp() + 1);
            assert_eq!(m.coarse_nodes()[patch.start], m.fine_nodes(a)[0]);
        }
    }

    #[test]
    fn subdomain_lookup() {
        let m = mesh(4, 1, 2);
        assert_eq!(m.subdomain_of(-0.5), 0);
        assert_eq!(m.subdomain_of(-0.26), 0);
        assert_eq!(m.subdomain_of(0.1), 2);
        assert_eq!(m.subdomain_of(0.5), 3);
    }
}
