//! Overlapping Schwarz methods for convex finite-element energies, with
//! momentum acceleration and adaptive gradient restarts.
//!
//! The crate provides structured P1 and lowest-order divergence-conforming
//! discretizations on the unit square, one- and two-level overlapping space
//! decompositions, four energy instances (s-Laplacian, Poisson, obstacle,
//! dual total variation), and the solver family: forward-backward splitting,
//! accelerated proximal gradients with adaptive restart, plain and
//! accelerated Schwarz iterations, and a preconditioned conjugate gradient
//! baseline for the linear case.

pub mod decomposition;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod solvers;

pub use error::{Error, Result};
