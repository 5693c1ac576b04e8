//! Fourth-order summation-by-parts finite difference operators for the
//! variable-coefficient wave equation, with and without ghost points, together
//! with one-dimensional boundary treatments, explicit time stepping, banded
//! linear algebra and two-dimensional mesh refinement interface couplings.

pub mod certify;
pub mod error;
pub mod interface2d;
pub mod linalg;
pub mod timestepping;
pub mod wave1d;
pub mod operators;

pub use error::{Result, SbpError};
