//! Exact finite models for recurrence experiments on tori.

pub mod arith;
pub mod bohr;
pub mod certificates;
pub mod cyclotomic;
pub mod error;
pub mod exec;
pub mod harmonic;
pub mod irrational;
pub mod joinings;
pub mod lab;
pub mod lattice;
pub mod roth;
pub mod torus;
pub mod weyl;

pub use arith::Rational;
pub use error::{LabError, Result};
pub use exec::Strategy;
