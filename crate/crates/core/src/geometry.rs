//! Value types shared by every stage of the pipeline: boxes, frames,
//! sequences, annotations and range labels.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance (m) below which a vehicle is in the near range.
pub const NEAR_LIMIT_M: f64 = 20.0;
/// Distance (m) from which a vehicle is in the far range.
pub const FAR_LIMIT_M: f64 = 45.0;

/// Axis-aligned pixel rectangle. `(x, y)` is the top-left corner.
///
/// Coordinates are real-valued; nothing is rounded until pixels are read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid(format!("non-finite box {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!("box with non-positive size {self:?}")));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        box_area(self)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        BoundingBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Intersection over union; 0 for disjoint boxes.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// True if the box shares a region of positive area with `[0,width]×[0,height]`.
    pub fn overlaps_frame(&self, width: usize, height: usize) -> bool {
        self.x < width as f64 && self.y < height as f64 && self.right() > 0.0 && self.bottom() > 0.0
    }
}

/// Shrinks `b` about its center by `fraction` of its width and height.
pub fn shrink_box(b: &BoundingBox, fraction: f64) -> Result<BoundingBox> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("shrink fraction {fraction} outside [0,1)")));
    }
    b.validate()?;
    let dw = b.w * fraction;
    let dh = b.h * fraction;
    Ok(BoundingBox {
        x: b.x + 0.5 * dw,
        y: b.y + 0.5 * dh,
        w: b.w - dw,
        h: b.h - dh,
    })
}

pub fn box_area(b: &BoundingBox) -> f64 {
    b.w * b.h
}

/// Distance bucket of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeClass {
    Near,
    Medium,
    Far,
}

impl RangeClass {
    pub const ALL: [RangeClass; 3] = [RangeClass::Near, RangeClass::Medium, RangeClass::Far];

    pub fn name(self) -> &'static str {
        match self {
            RangeClass::Near => "near",
            RangeClass::Medium => "medium",
            RangeClass::Far => "far",
        }
    }
}

impl fmt::Display for RangeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Buckets a ground-truth distance into `[0,20)`, `[20,45)` and `[45,∞)` metres.
pub fn classify_range_by_distance(d: f64) -> Result<RangeClass> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::invalid(format!("distance {d} must be finite and non-negative")));
    }
    Ok(if d < NEAR_LIMIT_M {
        RangeClass::Near
    } else if d < FAR_LIMIT_M {
        RangeClass::Medium
    } else {
        RangeClass::Far
    })
}

/// Grayscale image with intensities in `[0,1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageFrame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0,1]")));
        }
        Ok(ImageFrame { width, height, data })
    }

    /// Constructor for data already known to be in range (pyramid levels, renderers).
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        ImageFrame { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_gray8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
        Self::new(width, height, data)
    }

    /// Converts interleaved 8-bit RGB using Rec. 601 luma weights.
    pub fn from_rgb8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::invalid("rgb buffer length does not match dimensions"));
        }
        let data = pixels
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Quantizes to 8 bits, rounding to nearest.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Bilinear sample at pixel coordinates, where pixel `(i, j)` sits at `(i, j)`.
    /// Coordinates are clamped to the image.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xmax = (self.width - 1) as f64;
        let ymax = (self.height - 1) as f64;
        let x = x.clamp(0.0, xmax);
        let y = y.clamp(0.0, ymax);
        let x0 = x.floor();
        let y0 = y.floor();
        let ax = x - x0;
        let ay = y - y0;
        let x0 = x0 as usize;
        let y0 = y0 as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        let i00 = self.data[row0 + x0] as f64;
        let i10 = self.data[row0 + x1] as f64;
        let i01 = self.data[row1 + x0] as f64;
        let i11 = self.data[row1 + x1] as f64;
        (1.0 - ay) * ((1.0 - ax) * i00 + ax * i10) + ay * ((1.0 - ax) * i01 + ax * i11)
    }
}

/// Rec. 601 luma of an 8-bit RGB triple, normalized to `[0,1]`.
pub fn luma(r: u8, g: u8, b: u8) -> f32 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    (y / 255.0).clamp(0.0, 1.0) as f32
}

/// Ordered frames of one dash-cam clip.
#[derive(Debug, Clone)]
pub struct VideoSequence {
    pub frames: Vec<ImageFrame>,
    pub fps: f64,
    pub sequence_id: String,
    pub drive_id: String,
}

impl VideoSequence {
    pub const DEFAULT_LEN: usize = 40;
    pub const DEFAULT_FPS: f64 = 20.0;

    pub fn new(
        frames: Vec<ImageFrame>,
        fps: f64,
        sequence_id: impl Into<String>,
        drive_id: impl Into<String>,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("sequence has no frames"));
        }
        if !(fps > 0.0) {
            return Err(Error::invalid(format!("fps {fps} must be positive")));
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        if frames.iter().any(|f| f.width() != w || f.height() != h) {
            return Err(Error::invalid("frames differ in size"));
        }
        Ok(VideoSequence {
            frames,
            fps,
            sequence_id: sequence_id.into(),
            drive_id: drive_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.frames[0].width(), self.frames[0].height())
    }
}

/// Last-frame label of one vehicle. Velocity and position are absent for test data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleAnnotation {
    pub last_frame_box: BoundingBox,
    pub velocity: Option<[f64; 2]>,
    pub position: Option<[f64; 2]>,
}

impl VehicleAnnotation {
    pub fn distance(&self) -> Option<f64> {
        self.position.map(|[px, py]| px.hypot(py))
    }

    pub fn range_class(&self) -> Option<Result<RangeClass>> {
        self.distance().map(classify_range_by_distance)
    }
}
