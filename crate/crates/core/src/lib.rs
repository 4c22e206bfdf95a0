//! Multi-task fisheye perception for automated parking.
//!
//! A shared-encoder network with segmentation, detection and soiling
//! decoders, its trainer, the fisheye geometry that maps image evidence onto
//! the ground, a procedural scene generator, an ego-centered occupancy map and
//! a parking-slot planner.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod labels;
pub mod map;
pub mod model;
pub mod park;
pub mod plane;
pub mod planner;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
