//! Synthetic scenes, low-resolution degradation and dataset persistence.

mod clip;
pub mod dataset;
mod degrade;
mod frame;
pub mod ppm;

pub use clip::{generate_synthetic_clip, Pattern, SceneSpec, VideoClip, DEFAULT_FRAME_INTERVAL_US};
pub use dataset::{build_dataset, load_dataset, synthesize_clip, ClipData, Dataset};
pub use degrade::{area_resample, degrade, round_dim};
pub use frame::{quantize_u8, resize_plane_bilinear, Frame, CHANNELS, LUMA};

use rand::Rng;

use crate::error::{Error, Result};

/// Top-left corner of a uniformly random `size × size` window.
pub fn random_crop_origin(
    width: usize,
    height: usize,
    size: usize,
    rng: &mut impl Rng,
) -> Result<(usize, usize)> {
    if size == 0 || size > width || size > height {
        return Err(Error::Input(format!(
            "crop size {size} does not fit {width}x{height}"
        )));
    }
    Ok((
        rng.gen_range(0..=width - size),
        rng.gen_range(0..=height - size),
    ))
}
