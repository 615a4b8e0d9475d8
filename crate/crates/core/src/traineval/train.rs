//! Seeded, single-writer training loop.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::{make_sample, Region, Sample};
use crate::datapipe::{random_crop_origin, round_dim, ClipData, Dataset, CHANNELS};
use crate::diffcore::checkpoint::save_params;
use crate::diffcore::{AdamState, Graph, ParamStore, Real, Var};
use crate::error::{Error, Result};
use crate::model::{
    bind_leaves, forward_graph, init_params, param_specs, prepare_input, Model, ModelConfig,
    ModelVars,
};

pub const TRACE_FILE: &str = "trace.csv";
pub const FINAL_CHECKPOINT: &str = "model.evw";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub eps_charb: f64,
    /// Scales drawn per step; every sample in the batch is trained at each.
    pub scales_per_step: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// Overrides the epoch-derived step count.
    pub max_steps: Option<usize>,
    /// Crop side in input (low-resolution) pixels.
    pub crop: usize,
    /// Fixed key frame within each window; random when unset.
    pub key_frame: Option<usize>,
    /// Write `ckpt_<step>.evw` every this many steps (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            epochs: 1,
            batch_size: 2,
            seed: 0,
            eps_charb: 1e-3,
            scales_per_step: 1,
            s_min: 1.0,
            s_max: 4.0,
            max_steps: None,
            crop: 32,
            key_frame: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.eps_charb > 0.0) {
            return bad(format!("eps_charb must be > 0, got {}", self.eps_charb));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 || self.scales_per_step == 0 || self.crop == 0 {
            return bad("batch_size, scales_per_step and crop must be >= 1".into());
        }
        if !(self.s_min >= 1.0) || !(self.s_max >= self.s_min) || !self.s_max.is_finite() {
            return bad(format!(
                "scale range [{}, {}] is invalid",
                self.s_min, self.s_max
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Loss of every step, in order.
    pub trace: Vec<f64>,
}

/// Sum of Charbonnier losses of `samples` on one graph; unclamped outputs.
pub fn total_loss_graph<T: Real>(
    g: &mut Graph<T>,
    vars: &ModelVars,
    cfg: &ModelConfig,
    samples: &[Sample],
    eps: f64,
) -> Result<Var> {
    let mut total: Option<Var> = None;
    for s in samples {
        let prep = prepare_input(&s.input, s.scale, s.t, cfg)?;
        let out = forward_graph(g, vars, &prep, cfg)?;
        let target = g.constant(
            &[CHANNELS, s.target.height(), s.target.width()],
            s.target
                .data()
                .iter()
                .map(|&v| T::from_f64(v as f64))
                .collect(),
        )?;
        let l = g.charbonnier(out.sr, target, eps)?;
        total = Some(match total {
            Some(acc) => g.add(acc, l)?,
            None => l,
        });
    }
    total.ok_or_else(|| Error::Input("total loss over an empty sample set".into()))
}

/// Sum over `(scale, key index)` pairs of the Charbonnier loss on the first
/// `T` frames of `clip`, full frame.
pub fn total_loss(model: &Model, clip: &ClipData, pairs: &[(f64, usize)], eps: f64) -> Result<f64> {
    let t = model.cfg.num_input_frames;
    let samples = pairs
        .iter()
        .map(|&(s, key)| {
            let full = Region::full(&clip.clip.frames()[0]);
            make_sample(clip, 0, t, key, s, full)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut g = Graph::<f64>::new();
    let params = model.params.cast::<f64>();
    let (vars, _) = bind_leaves(&mut g, &model.cfg, &params)?;
    let loss = total_loss_graph(&mut g, &vars, &model.cfg, &samples, eps)?;
    Ok(g.value(loss)[0])
}

fn windows(dataset: &Dataset, t: usize) -> Vec<(usize, usize)> {
    dataset
        .clips
        .iter()
        .enumerate()
        .flat_map(|(c, d)| (0..(d.clip.len() + 1).saturating_sub(t)).map(move |s| (c, s)))
        .collect()
}

fn draw_sample(
    clip: &ClipData,
    start: usize,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    s: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Sample> {
    let t = model_cfg.num_input_frames;
    let key = match cfg.key_frame {
        Some(k) if k < t => k,
        Some(k) => {
            return Err(Error::Config(format!(
                "key_frame {k} outside window of {t} frames"
            )))
        }
        None => rng.gen_range(0..t),
    };
    let (w, h) = (clip.clip.width(), clip.clip.height());
    let side = round_dim(cfg.crop as f64 * s).clamp(1, w.min(h));
    let (x0, y0) = random_crop_origin(w, h, side, rng)?;
    make_sample(
        clip,
        start,
        t,
        key,
        s,
        Region {
            x0,
            y0,
            width: side,
            height: side,
        },
    )
}

pub fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("ckpt_{step:06}.evw"))
}

pub fn format_trace(trace: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    out
}

/// Trains a freshly initialized model (seeded by `cfg.seed`).
///
/// With `out_dir`, writes periodic checkpoints, the final checkpoint and the
/// loss trace there.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    dataset: &Dataset,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let params = init_params(model_cfg, cfg.seed)?;
    train_from(
        Model::from_params(model_cfg.clone(), params)?,
        cfg,
        dataset,
        out_dir,
    )
}

pub fn train_from(
    model: Model,
    cfg: &TrainConfig,
    dataset: &Dataset,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let Model {
        cfg: model_cfg,
        mut params,
    } = model;
    model_cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Input("training dataset is empty".into()));
    }
    let pool = windows(dataset, model_cfg.num_input_frames);
    if pool.is_empty() {
        return Err(Error::Input(format!(
            "no clip has the {} frames the model needs",
            model_cfg.num_input_frames
        )));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for (_, t) in params.iter_mut() {
        t.requires_grad = true;
    }

    let steps = cfg
        .max_steps
        .unwrap_or_else(|| cfg.epochs * pool.len().div_ceil(cfg.batch_size));
    let specs = param_specs(&model_cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.lr);
    let mut queue: Vec<(usize, usize)> = Vec::new();
    let mut trace = Vec::with_capacity(steps);
    let mut last_ckpt: Option<PathBuf> = None;

    for step in 0..steps {
        let scales: Vec<f64> = (0..cfg.scales_per_step)
            .map(|_| rng.gen_range(cfg.s_min..=cfg.s_max))
            .collect();
        let mut samples = Vec::with_capacity(cfg.batch_size * scales.len());
        for _ in 0..cfg.batch_size {
            if queue.is_empty() {
                queue = pool.clone();
                queue.shuffle(&mut rng);
                queue.reverse();
            }
            let (c, start) = queue.pop().expect("refilled above");
            for &s in &scales {
                samples.push(draw_sample(
                    &dataset.clips[c],
                    start,
                    &model_cfg,
                    cfg,
                    s,
                    &mut rng,
                )?);
            }
        }

        let mut g = Graph::<f32>::new();
        let (vars, leaves) = bind_leaves(&mut g, &model_cfg, &params)?;
        let loss = total_loss_graph(&mut g, &vars, &model_cfg, &samples, cfg.eps_charb)?;
        let value = g.value(loss)[0].as_f64();
        if !value.is_finite() {
            let last = last_ckpt
                .as_ref()
                .map_or_else(|| "none".to_string(), |p| p.display().to_string());
            return Err(Error::Numerical {
                step,
                reason: format!("loss is {value}; last checkpoint: {last}"),
            });
        }
        g.backward(loss)?;
        params.zero_grad();
        for (spec, &leaf) in specs.iter().zip(&leaves) {
            if let (Some(grad), Some(tensor)) = (g.grad(leaf), params.get_mut(&spec.name)) {
                tensor.accumulate_grad(grad);
            }
        }
        adam.step(&mut params).map_err(|e| match e {
            Error::NonFiniteGradient(name) => Error::Numerical {
                step,
                reason: format!("non-finite gradient in `{name}`"),
            },
            other => other,
        })?;
        trace.push(value);
        log::debug!("step {step} loss {value:.6}");

        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
                let path = checkpoint_path(dir, step + 1);
                save_params(&path, &params)?;
                last_ckpt = Some(path);
            }
        }
    }
    params.zero_grad();

    if let Some(dir) = out_dir {
        save_params(&dir.join(FINAL_CHECKPOINT), &params)?;
        let path = dir.join(TRACE_FILE);
        fs::write(&path, format_trace(&trace)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainOutcome {
        model: Model {
            cfg: model_cfg,
            params,
        },
        trace,
    })
}

/// Loads a checkpoint for a configuration, checking names and shapes.
pub fn load_model(cfg: &ModelConfig, path: &Path) -> Result<Model> {
    let params: ParamStore<f32> = crate::diffcore::checkpoint::load_params(path)?;
    Model::from_params(cfg.clone(), params)
}
