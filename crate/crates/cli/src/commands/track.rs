use std::io::Cursor;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use image::{ImageFormat, Rgb, RgbImage};
use rayon::prelude::*;
use velocam::dataset::{write_atomic, write_json};
use velocam::tracker::{track_vehicle, FrameSource, Track, TrackFile};
use velocam::{BoundingBox, ImageFrame};

use super::dataset;
use crate::config::PipelineConfig;

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Dataset index or single sequence manifest.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Receives one `<vehicle_id>.json` track per annotated vehicle.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write every frame with its box drawn, as PNG, under `<dir>/<vehicle_id>/`.
    #[arg(long)]
    pub overlay_dir: Option<PathBuf>,
}

pub fn track_path(dir: &Path, vehicle_id: &str) -> PathBuf {
    dir.join(format!("{vehicle_id}.json"))
}

pub fn run(args: &TrackArgs, cfg: &PipelineConfig) -> Result<()> {
    let manifests = dataset(&args.dataset)?;
    let counts = manifests
        .par_iter()
        .map(|lm| -> Result<(usize, usize)> {
            let m = &lm.manifest;
            if m.annotations.is_empty() {
                return Ok((0, 0));
            }
            let seq = lm.load_sequence()?;
            let mut fallback = 0;
            for (i, ann) in m.annotations.iter().enumerate() {
                let id = m.vehicle_id(i);
                let track = track_vehicle(&seq, &ann.last_frame_box, &cfg.tracker)
                    .with_context(|| format!("tracking {id}"))?;
                fallback += track.fallback_frames().len();
                write_json(&track_path(&args.out_dir, &id), &TrackFile::new(&m.sequence_id, Some(id.clone()), &track))?;
                if let Some(dir) = &args.overlay_dir {
                    write_overlays(&dir.join(&id), &seq.frames, &track)?;
                }
            }
            Ok((m.annotations.len(), fallback))
        })
        .collect::<Result<Vec<_>>>()?;
    let vehicles: usize = counts.iter().map(|c| c.0).sum();
    let fallback: usize = counts.iter().map(|c| c.1).sum();
    eprintln!("tracked {vehicles} vehicles; {fallback} fallback frames");
    Ok(())
}

const MEDIAN_FLOW_COLOR: Rgb<u8> = Rgb([40, 220, 40]);
const FALLBACK_COLOR: Rgb<u8> = Rgb([240, 60, 30]);

fn write_overlays(dir: &Path, frames: &[ImageFrame], track: &Track) -> Result<()> {
    for (t, (frame, (b, source))) in frames.iter().zip(track.boxes.iter().zip(&track.sources)).enumerate() {
        let color = match source {
            FrameSource::MedianFlow => MEDIAN_FLOW_COLOR,
            FrameSource::Fallback => FALLBACK_COLOR,
        };
        let img = overlay(frame, b, color);
        let mut png = Vec::new();
        img.write_to(&mut Cursor::new(&mut png), ImageFormat::Png)?;
        write_atomic(&dir.join(format!("frame_{t:03}.png")), &png)?;
    }
    Ok(())
}

/// Grayscale frame with a two-pixel box outline.
fn overlay(frame: &ImageFrame, b: &BoundingBox, color: Rgb<u8>) -> RgbImage {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let gray = frame.to_gray8();
    let mut img = RgbImage::from_fn(w, h, |x, y| {
        let g = gray[(y * w + x) as usize];
        Rgb([g, g, g])
    });
    let x0 = b.x.round() as i64;
    let y0 = b.y.round() as i64;
    let x1 = b.right().round() as i64 - 1;
    let y1 = b.bottom().round() as i64 - 1;
    let mut put = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for k in 0..2 {
        for x in x0..=x1 {
            put(x, y0 + k);
            put(x, y1 - k);
        }
        for y in y0..=y1 {
            put(x0 + k, y);
            put(x1 - k, y);
        }
    }
    img
}
