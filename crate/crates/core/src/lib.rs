//! Boundary-element solver for the linearized Poisson-Boltzmann equation.
//!
//! The molecular surface is discretized with the node-patch scheme: every mesh
//! vertex owns a polygonal patch built from the centroids and edge midpoints of
//! its incident triangles, and the surface potential `f` and its normal
//! derivative `h` are taken constant on each patch. The resulting second-kind
//! system is solved matrix-free with restarted GMRES, where every product is
//! split into
//!
//! * a near field of cached patch integrals ([`kernels::near_coefficients`]), and
//! * a far field evaluated by a hierarchical multipole engine
//!   ([`engine::Engine`]) over Laplace and Yukawa expansions
//!   ([`multipole`]).
//!
//! Data that would live on separate machines in a cluster run is partitioned
//! across simulated localities ([`distribution`]); every cross-locality value
//! moves through a [`distribution::Serializer`] or a reduction.
//!
//! The crate's runnable examples (`cargo run --release --example <name>`)
//! cover each capability; see the README for the list.

pub mod cli;
pub mod distribution;
pub mod engine;
pub mod error;
pub mod io;
pub mod kernels;
pub mod multipole;
pub mod quadrature;
pub mod solver;
pub mod surface;

pub use error::{Error, Result};

/// Cartesian 3-vector in Å.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Electrostatic constant in kcal·Å/(mol·e²).
pub const COULOMB_KCAL: f64 = 332.0637;
