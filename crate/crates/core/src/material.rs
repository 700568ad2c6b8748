//! Compressible Neo-Hookean law reduced to one dimension with zero Poisson
//! ratio (`lambda = 0`, `mu = E / 2`). All quantities are nondimensional:
//! moduli are scaled by the reference phase modulus and densities by the
//! reference phase density.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StretchSite, VmeError};

/// A validated, strictly positive 1-D stretch `F = 1 + du/dX`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Stretch(f64);

impl Stretch {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Stretch(value))
        } else {
            Err(VmeError::NonPositiveStretch {
                value,
                site: StretchSite::default(),
            })
        }
    }

    /// Stretch from a displacement gradient.
    pub fn from_gradient(du_dx: f64) -> Result<Self> {
        Self::new(1.0 + du_dx)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeoHookean {
    modulus_ratio: f64,
    density_ratio: f64,
}

impl NeoHookean {
    pub fn new(modulus_ratio: f64, density_ratio: f64) -> Result<Self> {
        if !(modulus_ratio > 0.0 && modulus_ratio.is_finite()) {
            return Err(VmeError::InvalidMaterial(format!(
                "modulus ratio must be positive, got {modulus_ratio}"
            )));
        }
        if !(density_ratio > 0.0 && density_ratio.is_finite()) {
            return Err(VmeError::InvalidMaterial(format!(
                "density ratio must be positive, got {density_ratio}"
            )));
        }
        Ok(NeoHookean {
            modulus_ratio,
            density_ratio,
        })
    }

    /// The reference phase: unit modulus and unit density.
    pub fn reference() -> Self {
        NeoHookean {
            modulus_ratio: 1.0,
            density_ratio: 1.0,
        }
    }

    pub fn modulus(&self) -> f64 {
        self.modulus_ratio
    }

    pub fn density(&self) -> f64 {
        self.density_ratio
    }

    /// Shear modulus `mu = E / 2`.
    pub fn shear_modulus(&self) -> f64 {
        0.5 * self.modulus_ratio
    }

    /// Strain energy density `(E/4)(F^2 - 1 - 2 ln F)`.
    pub fn energy(&self, f: Stretch) -> f64 {
        let f = f.0;
        0.25 * self.modulus_ratio * (f * f - 1.0 - 2.0 * f.ln())
    }

    /// First Piola-Kirchhoff stress `(E/2)(F - 1/F)`.
    pub fn stress(&self, f: Stretch) -> f64 {
        let f = f.0;
        0.5 * self.modulus_ratio * (f - 1.0 / f)
    }

    /// Tangent modulus `dP/dF = (E/2)(1 + 1/F^2)`.
    pub fn tangent(&self, f: Stretch) -> f64 {
        let f = f.0;
        0.5 * self.modulus_ratio * (1.0 + 1.0 / (f * f))
    }

    /// Local longitudinal wave speed `sqrt(D / rho0)`.
    pub fn wave_speed_factor(&self, f: Stretch) -> f64 {
        (self.tangent(f) / self.density_ratio).sqrt()
    }
}

/// Piecewise-constant material parameters, one entry per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialField {
    params: Vec<NeoHookean>,
}

impl MaterialField {
    pub fn new(params: Vec<NeoHookean>) -> Self {
        MaterialField { params }
    }

    pub fn uniform(n_elements: usize, params: NeoHookean) -> Self {
        MaterialField {
            params: vec![params; n_elements],
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, element: usize) -> &NeoHookean {
        &self.params[element]
    }

    pub fn as_slice(&self) -> &[NeoHookean] {
        &self.params
    }

    pub fn moduli(&self) -> impl Iterator<Item = f64> + '_ {
        self.params.iter().map(NeoHookean::modulus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mat(e: f64, rho: f64) -> NeoHookean {
        NeoHookean::new(e, rho).unwrap()
    }

    fn s(v: f64) -> Stretch {
        Stretch::new(v).unwrap()
    }

    #[test]
    fn energy_values() {
        assert_eq!(mat(1.0, 1.0).energy(s(1.0)), 0.0);
        assert_relative_eq!(
            mat(1.0, 1.0).energy(s(2.0)),
            0.25 * (3.0 - 2.0 * 2f64.ln()),
            epsilon = 1e-15
        );
        assert_relative_eq!(mat(1.0, 1.0).energy(s(2.0)), 0.403426, epsilon = 1e-6);
        assert_relative_eq!(mat(2.0, 1.0).energy(s(0.5)), 0.318147, epsilon = 1e-6);
    }

    #[test]
    fn stress_values() {
        assert_eq!(mat(1.0, 1.0).stress(s(1.0)), 0.0);
        assert_relative_eq!(mat(1.0, 1.0).stress(s(2.0)), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn tangent_values() {
        let m = mat(1.0, 1.0);
        assert_eq!(m.tangent(s(1.0)), 1.0);
        assert_relative_eq!(m.tangent(s(2.0)), 0.625, epsilon = 1e-15);
        assert_relative_eq!(m.tangent(s(0.5)), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn wave_speed_values() {
        assert_eq!(mat(1.0, 1.0).wave_speed_factor(s(1.0)), 1.0);
        assert_relative_eq!(
            mat(2.0, 1.0).wave_speed_factor(s(1.0)),
            2f64.sqrt(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            mat(1.0, 1.0).wave_speed_factor(s(0.5)),
            1.58114,
            epsilon = 1e-5
        );
    }

    #[test]
    fn rejects_non_positive_stretch() {
        assert!(matches!(
            Stretch::new(0.0),
            Err(VmeError::NonPositiveStretch { .. })
        ));
        assert!(matches!(
            Stretch::new(-0.3),
            Err(VmeError::NonPositiveStretch { .. })
        ));
        assert!(Stretch::new(f64::NAN).is_err());
        assert!(Stretch::from_gradient(-1.0).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(NeoHookean::new(0.0, 1.0).is_err());
        assert!(NeoHookean::new(1.0, -1.0).is_err());
    }

    #[test]
    fn derivative_chain_on_grid() {
        let h = 1e-6;
        for e in [1.0, 2.0, 0.01] {
            let m = mat(e, 1.0);
            for f in [0.2, 0.5, 0.9, 1.0, 1.1, 2.0, 5.0] {
                let fd_stress = (m.energy(s(f + h)) - m.energy(s(f - h))) / (2.0 * h);
                let p = m.stress(s(f));
                assert!(
                    (p - fd_stress).abs() / p.abs().max(e) < 1e-6,
                    "stress at F={f}"
                );
                let fd_tangent = (m.stress(s(f + h)) - m.stress(s(f - h))) / (2.0 * h);
                let d = m.tangent(s(f));
                assert!(
                    (d - fd_tangent).abs() / d.abs().max(e) < 1e-6,
                    "tangent at F={f}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn energy_nonnegative_and_tangent_positive(f in 1e-3f64..50.0, e in 1e-3f64..10.0) {
            let m = mat(e, 1.0);
            prop_assert!(m.energy(s(f)) >= 0.0);
            prop_assert!(m.tangent(s(f)) > 0.0);
            // sign(P) = sign(F - 1)
            let p = m.stress(s(f));
            prop_assert!(p * (f - 1.0) >= 0.0);
        }

        #[test]
        fn energy_vanishes_only_at_identity(f in 1e-3f64..50.0) {
            prop_assume!((f - 1.0).abs() > 1e-4);
            prop_assert!(mat(1.0, 1.0).energy(s(f)) > 0.0);
        }
    }
}
