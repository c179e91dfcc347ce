//! Monocular vehicle velocity estimation from dash-cam clips.
//!
//! The pipeline tracks a vehicle backwards from its last-frame box
//! ([`tracker`]), turns the track and optional dense cue maps into a fixed
//! feature vector ([`cues`]), and regresses velocity and position with an
//! ensemble of CReLU networks bucketed by distance ([`regressor`],
//! [`ensemble`]). [`evaluation`] implements the per-range velocity error and
//! [`synthcam`] renders synthetic clips with exact ground truth.

pub mod cues;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod regressor;
pub mod synthcam;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{
    box_area, classify_range_by_distance, shrink_box, BoundingBox, ImageFrame, RangeClass,
    VehicleAnnotation, VideoSequence,
};
