//! Bayesian estimation of a quantity of interest for plane linear elasticity
//! with a Karhunen–Loève parameterised Young's modulus, using interlaced
//! polynomial lattice rules for the posterior integrals.

pub mod bayes;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod field;
pub mod qmc;

pub use error::{Error, Result};
