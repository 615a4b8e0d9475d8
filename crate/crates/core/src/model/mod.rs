//! Spatial-temporal fusion, temporal filter and implicit decoding branches.

pub mod blocks;
mod config;
mod forward;
mod params;

pub use blocks::{DecoderKind, LayerVars};
pub use config::ModelConfig;
pub use forward::*;
pub use params::{check_params, init_params, param_specs, ParamSpec};

use crate::diffcore::ParamStore;
use crate::error::Result;

/// Configuration plus trained or initial parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore<f32>,
}

impl Model {
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&cfg, seed)?;
        Ok(Model { cfg, params })
    }

    pub fn from_params(cfg: ModelConfig, params: ParamStore<f32>) -> Result<Self> {
        cfg.validate()?;
        check_params(&cfg, &params)?;
        Ok(Model { cfg, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn infer(&self, input: &ModelInput, s: f64, t: u64) -> Result<crate::datapipe::Frame> {
        model_forward(input, s, t, &self.params, &self.cfg)
    }
}
