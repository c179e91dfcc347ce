use crate::error::{Error, Result};
use crate::geometry::ImageFrame;

/// Gaussian pyramid; level 0 is the input frame.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<ImageFrame>,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[ImageFrame] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &ImageFrame {
        &self.levels[k]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn base(&self) -> &ImageFrame {
        &self.levels[0]
    }
}

const BINOMIAL: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Builds `levels` levels, each a 5-tap binomial blur of the previous one
/// subsampled by two (edges replicated).
pub fn build_pyramid(frame: &ImageFrame, levels: usize) -> Result<ImagePyramid> {
    if levels == 0 {
        return Err(Error::invalid("pyramid needs at least one level"));
    }
    let min_side = 1usize << (levels - 1);
    if frame.width() < min_side || frame.height() < min_side {
        return Err(Error::invalid(format!(
            "{}x{} frame too small for {levels} pyramid levels",
            frame.width(),
            frame.height()
        )));
    }
    let mut out = Vec::with_capacity(levels);
    out.push(frame.clone());
    for _ in 1..levels {
        let next = downsample(out.last().unwrap());
        out.push(next);
    }
    Ok(ImagePyramid { levels: out })
}

fn downsample(src: &ImageFrame) -> ImageFrame {
    let (w, h) = (src.width(), src.height());
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let data = src.data();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    // Horizontal pass at even columns only.
    let mut tmp = vec![0f32; nw * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        let out = &mut tmp[y * nw..(y + 1) * nw];
        for (i, o) in out.iter_mut().enumerate() {
            let c = 2 * i as isize;
            let mut acc = 0f32;
            for (k, wt) in BINOMIAL.iter().enumerate() {
                acc += wt * row[clamp(c + k as isize - 2, w)];
            }
            *o = acc;
        }
    }

    let mut dst = vec![0f32; nw * nh];
    for j in 0..nh {
        let c = 2 * j as isize;
        let rows: [usize; 5] = std::array::from_fn(|k| clamp(c + k as isize - 2, h));
        let out = &mut dst[j * nw..(j + 1) * nw];
        for (k, wt) in BINOMIAL.iter().enumerate() {
            let src_row = &tmp[rows[k] * nw..(rows[k] + 1) * nw];
            for (o, s) in out.iter_mut().zip(src_row) {
                *o += wt * s;
            }
        }
    }
    for v in &mut dst {
        *v = v.clamp(0.0, 1.0);
    }
    ImageFrame::from_raw(nw, nh, dst)
}
