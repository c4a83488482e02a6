//! Simulation and optimal control of two interacting electrons in a 2D
//! double quantum dot.
//!
//! The model Hamiltonian is assembled in a symmetrized basis of products of
//! oscillator orbitals ([`basis`], [`operators`]), diagonalized as a function
//! of a static electric field ([`spectrum`]), and propagated in the
//! eigenstate or adiabatic basis ([`dynamics`]). Control pulses are found with
//! Krotov iterations ([`control`]); hyperfine-induced singlet-triplet
//! dephasing is simulated by ensemble averaging over frozen nuclear fields
//! ([`hyperfine`]). [`experiments`] ties the stages together behind a
//! config-driven runner with an on-disk cache.

pub mod basis;
pub mod control;
pub mod coulomb;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod hermite;
pub mod hyperfine;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod spectrum;

pub use error::{Error, Result};
