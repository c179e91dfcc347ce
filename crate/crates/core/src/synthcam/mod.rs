//! Deterministic synthetic dash-cam clips: textured fronto-parallel vehicle
//! billboards moving at constant relative velocity in front of a pinhole
//! camera, over a static textured background.

mod dataset;
mod noise;
mod render;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub use dataset::{
    generate_dataset, generate_scenes, DistanceProfile, GeneratedScene, GeneratedSequence, GroundTruthFile, VehicleTruthFile,
    GROUND_TRUTH_FILE, INDEX_FILE, MANIFEST_FILE,
};
pub use render::{render_background, render_sequence, SyntheticGroundTruth, VehicleTruth, MIN_CONTRAST};

/// Camera mounting height above the road, metres.
pub const CAMERA_HEIGHT_M: f64 = 1.5;
/// Vehicles never come closer than this (longitudinal metres).
pub const MIN_DEPTH_M: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Focal length in pixels.
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// Focal length equal to the image width, principal point at the centre.
    pub fn for_image(width: usize, height: usize) -> Self {
        CameraIntrinsics {
            f: width as f64,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f > 0.0 && self.f.is_finite() && self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::invalid("focal length must be positive"));
        }
        Ok(())
    }
}

/// Vehicle pose at one instant: lateral `x` and longitudinal `z` offsets of
/// the rear face centre, in metres, plus its physical size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub z: f64,
    pub width_m: f64,
    pub height_m: f64,
}

/// Pinhole projection of a vehicle standing on the road plane.
/// Width and height scale as `f/Z`; the centre sits at
/// `(cx + f·X/Z, cy + f·Y/Z)` with `Y = camera height - vehicle height / 2`.
pub fn project_vehicle(state: &VehicleState, intr: &CameraIntrinsics, camera_height: f64) -> Result<BoundingBox> {
    if !(state.z > 0.0) {
        return Err(Error::invalid(format!("vehicle depth {} must be positive", state.z)));
    }
    let s = intr.f / state.z;
    let y = camera_height - state.height_m / 2.0;
    BoundingBox::from_center(intr.cx + s * state.x, intr.cy + s * y, s * state.width_m, s * state.height_m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    /// Position at the first frame, metres.
    pub x: f64,
    pub z: f64,
    /// Relative velocity, m/s.
    pub vx: f64,
    pub vz: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub texture_seed: u64,
}

impl VehicleSpec {
    pub fn state_at(&self, frame: usize, fps: f64) -> VehicleState {
        let t = frame as f64 / fps;
        VehicleState {
            x: self.x + self.vx * t,
            z: self.z + self.vz * t,
            width_m: self.width_m,
            height_m: self.height_m,
        }
    }
}

/// Constant-intensity rectangle drawn over everything during `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccluderSpec {
    pub rect: BoundingBox,
    pub intensity: f32,
    pub start_frame: usize,
    pub end_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frames: usize,
    pub intrinsics: CameraIntrinsics,
    pub camera_height: f64,
    pub background_seed: u64,
    pub vehicles: Vec<VehicleSpec>,
    pub occluder: Option<OccluderSpec>,
}

impl SceneSpec {
    /// Scene with default intrinsics and camera height, 40 frames at 20 fps.
    pub fn new(width: usize, height: usize, background_seed: u64, vehicles: Vec<VehicleSpec>) -> Self {
        SceneSpec {
            width,
            height,
            fps: 20.0,
            frames: 40,
            intrinsics: CameraIntrinsics::for_image(width, height),
            camera_height: CAMERA_HEIGHT_M,
            background_seed,
            vehicles,
            occluder: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::invalid("synthetic frames must be at least 8x8"));
        }
        if self.frames < 2 {
            return Err(Error::invalid("a scene needs at least two frames"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::invalid("fps must be positive"));
        }
        self.intrinsics.validate()?;
        for (i, v) in self.vehicles.iter().enumerate() {
            if !(v.width_m > 0.0 && v.height_m > 0.0) {
                return Err(Error::invalid(format!("vehicle {i} needs a positive size")));
            }
            for t in [0, self.frames - 1] {
                if !(v.state_at(t, self.fps).z > 0.0) {
                    return Err(Error::invalid(format!("vehicle {i} leaves the half-space in front of the camera")));
                }
            }
        }
        if let Some(o) = &self.occluder {
            o.rect.validate()?;
        }
        Ok(())
    }
}
