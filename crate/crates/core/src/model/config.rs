use serde::{Deserialize, Serialize};

use super::blocks::DecoderKind;
use crate::diffcore::SampleMode;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_input_frames: usize,
    pub channels: usize,
    /// Voxel segments over the whole input span.
    pub segments: usize,
    pub attn_window: usize,
    pub attn_heads: usize,
    pub interpolation_mode: SampleMode,
    pub decoder_kind: DecoderKind,
    pub s_max: f64,
    /// Decode a residual over the input frames sampled at the query grid.
    pub image_residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_input_frames: 3,
            channels: 16,
            segments: 16,
            attn_window: 8,
            attn_heads: 2,
            interpolation_mode: SampleMode::Linear,
            decoder_kind: DecoderKind::Cnn,
            s_max: 8.0,
            image_residual: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_input_frames == 0 {
            return bad("num_input_frames must be >= 1".into());
        }
        if self.channels == 0 {
            return bad("channels must be >= 1".into());
        }
        if self.segments == 0 {
            return bad("segments must be >= 1".into());
        }
        if self.attn_window == 0 || self.attn_heads == 0 {
            return bad("attention window and head count must be >= 1".into());
        }
        if !self.channels.is_multiple_of(self.attn_heads) {
            return bad(format!(
                "channels {} not divisible by {} attention heads",
                self.channels, self.attn_heads
            ));
        }
        if !(self.s_max > 1.0) || !self.s_max.is_finite() {
            return bad(format!(
                "s_max must be a finite value > 1, got {}",
                self.s_max
            ));
        }
        Ok(())
    }

    /// Voxel segments fed to each frame's event stem.
    pub fn group_size(&self) -> usize {
        self.segments
            .div_ceil(self.num_input_frames)
            .min(self.segments)
    }

    /// First segment of frame `i`'s group: the group is centred on the frame's
    /// normalized time and clamped inside the grid, so groups may overlap.
    pub fn group_start(&self, i: usize) -> usize {
        let k = self.group_size();
        let tau = (i as f64 + 0.5) / self.num_input_frames as f64;
        let centre = tau * self.segments as f64 - k as f64 / 2.0;
        let start = (centre + 0.5).floor().max(0.0) as usize;
        start.min(self.segments - k)
    }
}
