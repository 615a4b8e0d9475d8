//! Parameter naming, shapes and initialization.
//!
//! Names follow `branch.stage.layer.kind`, e.g. `stf.shallow_frame.conv1.weight`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::diffcore::attention::attention_param_shapes;
use crate::diffcore::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Inputs feeding each output unit; zero for biases.
    pub fan_in: usize,
}

fn push_conv(out: &mut Vec<ParamSpec>, prefix: &str, c_out: usize, c_in: usize, k: usize) {
    out.push(ParamSpec {
        name: format!("{prefix}.weight"),
        shape: vec![c_out, c_in, k, k],
        fan_in: c_in * k * k,
    });
    out.push(ParamSpec {
        name: format!("{prefix}.bias"),
        shape: vec![c_out],
        fan_in: 0,
    });
}

fn push_attention(out: &mut Vec<ParamSpec>, prefix: &str, dim: usize) {
    for (suffix, shape) in attention_param_shapes(dim, 2 * dim) {
        let fan_in = if shape.len() == 2 { shape[0] } else { 0 };
        out.push(ParamSpec {
            name: format!("{prefix}.{suffix}"),
            shape,
            fan_in,
        });
    }
}

/// Every parameter of the model in canonical order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let c = cfg.channels;
    let k = cfg.decoder_kind.kernel();
    let mut out = Vec::new();
    push_conv(&mut out, "stf.stem.frame", c, 3, 1);
    push_conv(&mut out, "stf.stem.event", c, 2 * cfg.group_size(), 1);
    for stage in ["shallow_frame", "shallow_event"] {
        push_conv(&mut out, &format!("stf.{stage}.conv1"), c, c, 3);
        push_conv(&mut out, &format!("stf.{stage}.conv2"), c, c, 3);
    }
    push_attention(&mut out, "stf.shallow_fusion", 2 * c);
    for stage in ["deep_frame", "deep_event"] {
        push_conv(&mut out, &format!("stf.{stage}.conv1"), c, c, 3);
        push_conv(&mut out, &format!("stf.{stage}.conv2"), c, c, 3);
    }
    push_attention(&mut out, "stf.deep_fusion", c);
    push_conv(&mut out, "tf.body.conv1", c, 2, 3);
    push_conv(&mut out, "tf.body.conv2", c, c, 3);
    push_conv(&mut out, "tf.body.conv3", c, c, 3);
    push_conv(&mut out, "stir.decoder.layer1", c, c, k);
    push_conv(&mut out, "stir.decoder.layer2", c, c, k);
    push_conv(&mut out, "stir.decoder.layer3", 3, c, k);
    out
}

/// Weights uniform on `±1/sqrt(fan_in)`, zero biases.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore<f32>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for spec in param_specs(cfg) {
        let n: usize = spec.shape.iter().product();
        let data: Vec<f32> = if spec.fan_in == 0 {
            vec![0.0; n]
        } else {
            let bound = 1.0 / (spec.fan_in as f64).sqrt();
            (0..n)
                .map(|_| rng.gen_range(-bound..bound) as f32)
                .collect()
        };
        store.insert(spec.name, Tensor::new(&spec.shape, data)?.with_grad());
    }
    Ok(store)
}

/// Confirms `params` holds exactly the configured names and shapes.
pub fn check_params<T: Real>(cfg: &ModelConfig, params: &ParamStore<T>) -> Result<()> {
    let specs = param_specs(cfg);
    for spec in &specs {
        let t = params
            .get(&spec.name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{}`", spec.name)))?;
        if t.shape() != spec.shape.as_slice() {
            return Err(Error::Config(format!(
                "parameter `{}` has shape {:?}, expected {:?}",
                spec.name,
                t.shape(),
                spec.shape
            )));
        }
    }
    if params.len() != specs.len() {
        let extra = params
            .names()
            .find(|n| !specs.iter().any(|s| s.name == *n))
            .unwrap_or_default()
            .to_string();
        return Err(Error::Config(format!("unexpected parameter `{extra}`")));
    }
    Ok(())
}
