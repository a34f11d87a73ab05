//! Bound states of one-dimensional multi-well potentials with gain and loss.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod continuation;
pub mod grid;
pub mod grid_solver;
pub mod matrix_model;
pub mod potential;
pub mod rootfind;
pub mod symmetrization;
pub mod tridiag;

pub use grid::{Grid, GridError};
pub use grid_solver::{solve_lowest, solve_lowest_from, EigenPair, SolverError, SolverOptions, Spectrum};
pub use potential::{GaussianWell, MultiWellPotential, Param, PotentialError};
