//! Geometrically consistent cost aggregation for multi-view stereo.
//!
//! Plane-sweep cost volumes, normal-guided propagation of neighbouring
//! matching costs into a pixel's own depth-hypothesis space, depth
//! extraction, normal estimation, consistency fusion and an analytic
//! synthetic-scene renderer used to verify all of the above.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cascade;
pub mod costvol;
pub mod depthmap;
pub mod error;
pub mod fusion;
pub mod gcp;
pub mod geometry;
pub mod hypotheses;
pub mod image;
pub mod linalg;
pub mod normals;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{Mat3, Vec3};
