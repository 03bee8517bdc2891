//! Piecewise-flat Ricci flow on periodic block triangulations of the 3-torus.
//!
//! The geometry is carried entirely by edge lengths. [`lattice`] builds the
//! triangulation, [`geometry`] and [`dual_volumes`] turn lengths into angles
//! and volumes, [`curvature`] assembles the Ricci curvature per edge and
//! [`flow`] integrates the flow. [`stability`] linearises the flow about flat
//! lengths and [`fitting`] extracts growth rates from simulated traces.

pub mod cli;
pub mod curvature;
pub mod dual_volumes;
pub mod error;
pub mod fitting;
pub mod flow;
pub mod geometry;
pub mod lattice;
pub mod polyhedron;
pub mod stability;

pub use error::{Error, Result};
