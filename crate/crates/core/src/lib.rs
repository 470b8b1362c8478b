//! Numéraire (growth-optimal) portfolios for markets described by
//! piecewise-constant predictable characteristics `(b, c, ν)` under
//! polyhedral constraints.
//!
//! The pipeline is: validate the characteristics ([`market`]), build the
//! constraint geometry ([`constraints`]), rule out unbounded increasing
//! profits ([`arbitrage`]), maximize the growth rate and certify the
//! optimizer ([`solver`]), then check the theory pathwise by seeded Monte
//! Carlo ([`simulation`]).

pub mod arbitrage;
pub mod constraints;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod market;
pub mod quadrature;
pub mod report;
pub mod simulation;
pub mod solver;
pub mod spec_file;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
