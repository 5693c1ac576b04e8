//! Experiment harness for the fourth-order summation-by-parts wave solvers.

pub mod cases;
pub mod cfl;
pub mod conditioning;
pub mod config;
pub mod convergence;
pub mod criteria;
pub mod longtime;
pub mod table;
