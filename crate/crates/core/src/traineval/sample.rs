//! Turning stored clips into (low-resolution input, high-resolution target) pairs.

use crate::datapipe::{area_resample, round_dim, ClipData, Frame};
use crate::error::{Error, Result};
use crate::model::ModelInput;

/// Rectangle of the high-resolution frame used for one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn full(frame: &Frame) -> Self {
        Region {
            x0: 0,
            y0: 0,
            width: frame.width(),
            height: frame.height(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub input: ModelInput,
    pub target: Frame,
    /// Query timestamp (a key-frame timestamp).
    pub t: u64,
    /// Scale that maps the input height exactly onto the target height.
    pub scale: f64,
}

/// Low-resolution side length for a high-resolution side `n` at scale `s`.
pub fn lr_dim(n: usize, s: f64) -> usize {
    round_dim(n as f64 / s).max(1)
}

/// Builds a sample from frames `start..start + num_frames` of `clip`, with the
/// target at frame `start + key`. The input is the area-degraded region and the
/// events are cropped and re-binned to the input resolution.
pub fn make_sample(
    clip: &ClipData,
    start: usize,
    num_frames: usize,
    key: usize,
    s: f64,
    region: Region,
) -> Result<Sample> {
    if !(s >= 1.0) || !s.is_finite() {
        return Err(Error::Input(format!(
            "scale must be a finite value >= 1, got {s}"
        )));
    }
    let frames = clip.clip.frames();
    if num_frames == 0 || start + num_frames > frames.len() || key >= num_frames {
        return Err(Error::Input(format!(
            "clip `{}` has {} frames; cannot take {num_frames} from {start} with key {key}",
            clip.clip.name,
            frames.len()
        )));
    }
    let ts = clip.clip.timestamps_us();
    let interval = ts[1] - ts[0];
    let (lw, lh) = (lr_dim(region.width, s), lr_dim(region.height, s));
    let crop = |f: &Frame| f.crop(region.x0, region.y0, region.width, region.height);
    let lr_frames = frames[start..start + num_frames]
        .iter()
        .map(|f| area_resample(&crop(f)?, lw, lh))
        .collect::<Result<Vec<_>>>()?;
    let events = clip
        .events
        .crop(region.x0, region.y0, region.width, region.height)?
        .rescale(lw, lh)?;
    let input = ModelInput::new(
        lr_frames,
        ts[start..start + num_frames].to_vec(),
        interval,
        events,
    )?;
    Ok(Sample {
        input,
        target: crop(&frames[start + key])?,
        t: ts[start + key],
        scale: region.height as f64 / lh as f64,
    })
}

/// Crops both frames to their common top-left region.
pub fn common_region(a: &Frame, b: &Frame) -> Result<(Frame, Frame)> {
    let w = a.width().min(b.width());
    let h = a.height().min(b.height());
    Ok((a.crop(0, 0, w, h)?, b.crop(0, 0, w, h)?))
}
