use thiserror::Error;

/// Where a non-positive stretch was encountered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StretchSite {
    pub subdomain: Option<usize>,
    pub element: Option<usize>,
    pub point: Option<usize>,
}

impl std::fmt::Display for StretchSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if let Some(s) = self.subdomain {
            parts.push(format!("subdomain {s}"));
        }
        if let Some(e) = self.element {
            parts.push(format!("element {e}"));
        }
        if let Some(q) = self.point {
            parts.push(format!("quadrature point {q}"));
        }
        if parts.is_empty() {
            f.write_str("unknown location")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

#[derive(Debug, Error)]
pub enum VmeError {
    #[error("non-positive stretch F = {value} at {site}")]
    NonPositiveStretch { value: f64, site: StretchSite },

    #[error("invalid material parameters: {0}")]
    InvalidMaterial(String),

    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),

    #[error(
        "point X = {x} of fine element {fine_element} lies outside coarse element {coarse_element}"
    )]
    PointOutsideCoarseElement {
        x: f64,
        fine_element: usize,
        coarse_element: usize,
    },

    #[error("sub-step ratio p = {0} must lie in (0, 1)")]
    InvalidSubstepRatio(f64),

    #[error("operator split did not converge at step {step} after {iterations} iterations (worst subdomain {worst_subdomain:?})")]
    SplitNonConvergence {
        step: usize,
        iterations: usize,
        worst_subdomain: Option<usize>,
    },

    #[error("Newton iterations did not converge at step {step} in subdomain {subdomain} after {iterations} iterations (residual {residual:e})")]
    NewtonNonConvergence {
        step: usize,
        subdomain: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("fine tangent of subdomain {subdomain} is not positive definite")]
    SingularTangent { subdomain: usize },

    #[error("time increment {dt:e} fell below the floor {floor:e} at step {step}")]
    DtFloor { dt: f64, floor: f64, step: usize },

    #[error("phase fraction {beta} does not conform to {elements_per_cell} elements per cell")]
    NonConformingPhase { beta: f64, elements_per_cell: usize },

    #[error("no snapshot within reach of t = {0}")]
    MissingSnapshot(f64),

    #[error("reference field norm {0:e} is too small for a relative error")]
    ZeroReference(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl VmeError {
    pub(crate) fn with_site(self, site: StretchSite) -> Self {
        match self {
            VmeError::NonPositiveStretch { value, .. } => {
                VmeError::NonPositiveStretch { value, site }
            }
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, VmeError>;
