//! Evaluation of an upscaler over a dataset at a list of scales.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{psnr, ssim};
use super::sample::{common_region, make_sample, Region};
use crate::datapipe::{Dataset, Frame};
use crate::error::{Error, Result};
use crate::model::{output_dims, Model, ModelInput};

/// Anything that maps a low-resolution input to a frame at scale `s`, time `t`.
pub trait Upscaler: Sync {
    fn upscale(&self, input: &ModelInput, s: f64, t: u64) -> Result<Frame>;
    fn num_params(&self) -> usize;
    fn num_input_frames(&self) -> usize;
}

impl Upscaler for Model {
    fn upscale(&self, input: &ModelInput, s: f64, t: u64) -> Result<Frame> {
        self.infer(input, s, t)
    }

    fn num_params(&self) -> usize {
        Model::num_params(self)
    }

    fn num_input_frames(&self) -> usize {
        self.cfg.num_input_frames
    }
}

/// Bilinear resize of the key frame; at `s = 1` it is the identity.
#[derive(Clone, Copy, Debug)]
pub struct BilinearBaseline {
    pub num_input_frames: usize,
}

impl Upscaler for BilinearBaseline {
    fn upscale(&self, input: &ModelInput, s: f64, t: u64) -> Result<Frame> {
        let idx = input
            .timestamps
            .iter()
            .position(|&ts| ts == t)
            .ok_or_else(|| Error::Input(format!("time {t} is not a key-frame timestamp")))?;
        let (h, w) = output_dims(s, input.height(), input.width());
        input.frames[idx].resize_bilinear(w, h)
    }

    fn num_params(&self) -> usize {
        0
    }

    fn num_input_frames(&self) -> usize {
        self.num_input_frames
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub scale: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub clips: Vec<EvalRow>,
    pub avg_psnr_db: f64,
    pub avg_ssim: f64,
    pub params: usize,
    pub wall_s: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Input(format!("report serialization: {e}")))
    }
}

/// Scores one clip at one scale on its first window, middle key frame.
pub fn evaluate_clip(
    up: &dyn Upscaler,
    clip: &crate::datapipe::ClipData,
    s: f64,
) -> Result<EvalRow> {
    let t = up.num_input_frames();
    let full = Region::full(&clip.clip.frames()[0]);
    let sample = make_sample(clip, 0, t, t / 2, s, full)?;
    let pred = up.upscale(&sample.input, sample.scale, sample.t)?;
    let (pred, gt) = common_region(&pred, &sample.target)?;
    Ok(EvalRow {
        name: clip.clip.name.clone(),
        scale: s,
        psnr_db: psnr(&pred, &gt)?,
        ssim: ssim(&pred, &gt)?,
    })
}

/// Runs every (clip, scale) pair, in parallel across pairs; rows keep
/// clip-major, scale-minor order.
pub fn evaluate(up: &dyn Upscaler, dataset: &Dataset, scales: &[f64]) -> Result<EvalReport> {
    let start = Instant::now();
    let jobs: Vec<(usize, f64)> = (0..dataset.len())
        .flat_map(|c| scales.iter().map(move |&s| (c, s)))
        .collect();
    let clips = jobs
        .par_iter()
        .map(|&(c, s)| evaluate_clip(up, &dataset.clips[c], s))
        .collect::<Result<Vec<_>>>()?;
    let n = clips.len().max(1) as f64;
    Ok(EvalReport {
        avg_psnr_db: clips.iter().map(|r| r.psnr_db).sum::<f64>() / n,
        avg_ssim: clips.iter().map(|r| r.ssim).sum::<f64>() / n,
        params: up.num_params(),
        wall_s: start.elapsed().as_secs_f64(),
        clips,
    })
}

/// Loads a checkpoint and evaluates it.
pub fn evaluate_checkpoint(
    cfg: &crate::model::ModelConfig,
    checkpoint: &Path,
    dataset: &Dataset,
    scales: &[f64],
) -> Result<EvalReport> {
    let model = super::train::load_model(cfg, checkpoint)?;
    evaluate(&model, dataset, scales)
}
