//! Variational multiscale enrichment for 1-D hyperelastic wave propagation.
//!
//! The displacement is split into a coarse field on a global grid and fine
//! fields local to each enrichment subdomain (one unit cell of a layered
//! microstructure). Both scales use quadratic elements; the fine fields
//! vanish on subdomain boundaries.

pub mod assembly;
pub mod dns;
pub mod error;
pub mod integrate;
pub mod material;
pub mod mesh;
pub mod result;
pub mod scenario;
pub mod stability;

pub use dns::{dns_run, DnsIntegrator, DnsProblem, DnsSolver};
pub use error::{Result, StretchSite, VmeError};
pub use integrate::{
    run, IntegratorConfig, MultiscaleState, MultiscaleSystem, Relaxation, RunOptions, Scheme,
};
pub use material::{MaterialField, NeoHookean, Stretch};
pub use mesh::{BoundaryConditions, EndCondition, TwoScaleMesh};
pub use result::{RunResult, Snapshot, StepRecord};
pub use scenario::{InitialPulse, Microstructure, Scaling};
