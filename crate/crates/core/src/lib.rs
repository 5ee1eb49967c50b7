//! Finite-difference laboratory for degenerate nonlinear diffusion on
//! stratified Lie groups.
//!
//! The crate discretizes two initial-boundary problems on an axis-aligned box
//! with Dirichlet data — a porous-medium equation driven by the p-sub-Laplacian
//! and a pseudo-parabolic equation with a regularizing time derivative — then
//! monitors the energy functionals behind the concavity method and assembles
//! machine-readable certificates for four blow-up / global-existence criteria.

pub mod certificate;
pub mod config;
pub mod error;
pub mod experiment;
pub mod functionals;
pub mod grid;
pub mod group;
pub mod nonlinearity;
pub mod pme;
pub mod pseudo;

pub use error::{Error, Result};
