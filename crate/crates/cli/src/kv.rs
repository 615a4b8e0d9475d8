//! Flat `key=value` files. Blank lines and `#` comments are skipped.

use std::path::Path;

use evsr::model::ModelConfig;
use evsr::traineval::TrainConfig;

use crate::error::{CliError, Result};

/// One `key=value` setting and the line it came from (0 for flags).
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(text: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::line(path, i + 1, format!("expected key=value, got `{line}`"))
        })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(CliError::line(path, i + 1, "empty key"));
        }
        out.push(Entry {
            key: key.to_string(),
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::line(path, 0, e.to_string()))?;
    parse(&text, path)
}

fn value<T: std::str::FromStr>(e: &Entry, source: &Path) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    e.value.parse().map_err(|err| {
        CliError::line(
            source,
            e.line,
            format!("bad value `{}` for {}: {err}", e.value, e.key),
        )
    })
}

/// Combined model and training settings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Applies entries in order; later ones win. `source` labels errors.
    pub fn apply(&mut self, entries: &[Entry], source: &Path) -> Result<()> {
        for e in entries {
            self.set(e, source)?;
        }
        Ok(())
    }

    fn set(&mut self, e: &Entry, src: &Path) -> Result<()> {
        let (m, t) = (&mut self.model, &mut self.train);
        match e.key.as_str() {
            "frames" => m.num_input_frames = value(e, src)?,
            "channels" => m.channels = value(e, src)?,
            "segments" => m.segments = value(e, src)?,
            "attn_window" => m.attn_window = value(e, src)?,
            "attn_heads" => m.attn_heads = value(e, src)?,
            "interpolation" => m.interpolation_mode = value(e, src)?,
            "decoder" => m.decoder_kind = value(e, src)?,
            "model_s_max" => m.s_max = value(e, src)?,
            "image_residual" => m.image_residual = value(e, src)?,
            "lr" => t.lr = value(e, src)?,
            "epochs" => t.epochs = value(e, src)?,
            "batch_size" => t.batch_size = value(e, src)?,
            "seed" => t.seed = value(e, src)?,
            "eps_charb" => t.eps_charb = value(e, src)?,
            "scales_per_step" => t.scales_per_step = value(e, src)?,
            "s_min" => t.s_min = value(e, src)?,
            "s_max" => t.s_max = value(e, src)?,
            "steps" => t.max_steps = Some(value(e, src)?),
            "crop" => t.crop = value(e, src)?,
            "key_frame" => t.key_frame = Some(value(e, src)?),
            "checkpoint_every" => t.checkpoint_every = value(e, src)?,
            other => {
                return Err(CliError::line(
                    src,
                    e.line,
                    format!("unknown key `{other}`"),
                ))
            }
        }
        Ok(())
    }

    /// The model half, in the same format [`RunConfig::apply`] reads.
    pub fn model_text(&self) -> String {
        let m = &self.model;
        format!(
            "frames={}\nchannels={}\nsegments={}\nattn_window={}\nattn_heads={}\ninterpolation={}\ndecoder={}\nmodel_s_max={}\nimage_residual={}\n",
            m.num_input_frames,
            m.channels,
            m.segments,
            m.attn_window,
            m.attn_heads,
            m.interpolation_mode,
            m.decoder_kind,
            m.s_max,
            m.image_residual
        )
    }
}
