//! Contact Hamiltonian mechanics on Darboux-chart atlases with scalar
//! cocycles.
//!
//! The engine computes contact Hamiltonian vector fields, Jacobi brackets,
//! symplectizations, time-dependent dynamics and contact Hamilton–Jacobi
//! residuals/characteristics for contact manifolds presented as atlases of
//! Darboux charts glued by transition maps with nonvanishing scalar cocycles.
//! Per-chart reduced Hamiltonians that transform by the cocycle represent a
//! single global Hamiltonian even for structures with no global contact form
//! (Möbius jet bundle, projectivized cotangent bundles).
//!
//! Modules:
//! * [`expr`] — expression parsing, evaluation and canonical serialization;
//! * [`jet`] — order-2 forward-mode jets with finite-difference cross-checks;
//! * [`geometry`] — charts, transitions, cocycles, builtin model catalog;
//! * [`contact`] — contact forms, fields, brackets, Legendre graphs;
//! * [`symplectic`] — the homogeneous symplectic cover and linear-solve route;
//! * [`dynamics`] — RK4 trajectory integration with chart switching;
//! * [`hj`] — Hamilton–Jacobi residuals and characteristics;
//! * [`verify`] — the seeded identity suites behind the `verify` command;
//! * [`sample`] — the reproducible LCG sampler.

pub mod contact;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod hj;
pub mod jet;
pub mod sample;
pub mod symplectic;
pub mod verify;

pub use contact::{
    bracket_via_fields, darboux_dform, darboux_form, jacobi_bracket, nondegeneracy, reeb_field,
    tangency_residual, ContactModel, SectionModel,
};
pub use dynamics::{autonomize_field, decay_check, integrate, ExtendedPoint, SwitchEvent, Trajectory};
pub use error::{Error, Result};
pub use expr::{parse, Env, Expr};
pub use geometry::{Atlas, Chart, ChartPoint, CoordRole, Interval, TransitionMap};
pub use hj::{hj_characteristics, hj_residual, hj_verify, GridAxis, HjReport};
pub use jet::{fd_check, jet2, Jet2};
pub use sample::Lcg64;
pub use symplectic::{omega, poisson_bracket_homogeneous, CoverPoint};
pub use verify::{run_identity_suites, CheckReport, Comparison, VerifyOptions};
