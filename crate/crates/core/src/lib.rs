//! Simulation and verification toolkit for an n-species volume-filling
//! cross-diffusion model of biofilm growth.
//!
//! The model couples n biomass fractions `u_i` through two scalar closures
//! `p` and `q` of the total biomass `M = sum u_i`:
//!
//! ```text
//! d/dt u_i = alpha_i * div( p(M)^2 * grad( u_i q(M) / p(M) ) ) + r_i(u)
//! ```
//!
//! with a porous-medium degeneracy at `M = 0` and a singular diffusion
//! barrier at the saturation value `M = 1`. The crate provides
//!
//! * closure evaluation by adaptive quadrature plus a tabulated fast path
//!   ([`closures`]),
//! * the entropy algebra of the system: density, relative entropy, entropy
//!   variables and their inversion, Hessian ([`entropy`]),
//! * explicit and implicit finite-difference time stepping on structured
//!   grids with entropy diagnostics ([`solver`], [`diagnostics`]),
//! * reaction terms and a sampler-based validator of their structural
//!   assumptions ([`reactions`]),
//! * a one-dimensional hopping-lattice model whose diffusive limit is the
//!   same PDE, with a refinement study ([`lattice`]),
//! * independent numerical oracles used by the test and acceptance suites
//!   ([`verify`]).

pub mod closures;
pub mod config;
pub mod diagnostics;
pub mod entropy;
pub mod error;
pub mod lattice;
pub mod params;
pub mod reactions;
pub mod solver;
pub mod verify;

pub use closures::Closures;
pub use config::{ReactionKind, ReadyRun, RunConfig, TestCase};
pub use diagnostics::DiagnosticsRow;
pub use entropy::{Composition, Reference};
pub use error::{Error, Result};
pub use params::{ModelParams, DELTA_CAP};
pub use solver::{
    BoundaryCondition, GridSpec, NewtonOptions, RunOutcome, Scheme, Simulation, State, StepReport,
};
pub use verify::OracleReport;
