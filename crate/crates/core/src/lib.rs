//! Boundary-integral simulation of capillarity-driven quasistationary Stokes
//! flow in a fluid layer bounded above by the graph of a function.

pub mod evolution;
pub mod fields;
pub mod grid;
pub mod kernels;
pub mod potentials;
pub mod solver;
pub mod verify;

pub use grid::{make_grid, DensityPair, Grid, GridError, GridFunction};
pub use kernels::{BlockOperator, Jet, OperatorMatrix};
