//! Driven measures on the N-ary tree: symbolic addresses, driven systems,
//! cylinder masses, condition checks, dimension estimates, de Rham curves,
//! singularity tests and the transfer-operator density solver.

pub mod conditions;
pub mod config;
pub mod derham;
pub mod dimension;
pub mod error;
pub mod measure;
pub mod rational;
pub mod singularity;
pub mod symbolic;
pub mod systems;
pub mod transfer;

pub use error::{Error, Result};
