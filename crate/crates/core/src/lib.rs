//! Electrostatics and trapping-potential toolkit for a four-blade linear
//! Paul trap with segmented dc blades and two biasing rods.
//!
//! The pipeline is: [`geometry`] builds labeled conductor surfaces,
//! [`bem`] solves one unit-voltage basis per electrode, [`potential`]
//! superposes them into pseudopotential and static energies, and
//! [`analysis`] / [`compensation`] extract minima, frequencies, depths and
//! voltage responses. [`scenario`] drives all of it from a text file.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bem;
pub mod compensation;
pub mod contour;
pub mod error;
pub mod fdm;
pub mod format;
pub mod geometry;
pub mod optics;
pub mod potential;
pub mod scenario;
pub mod units;

pub use error::{Error, Result};
