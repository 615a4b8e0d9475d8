//! Convolutional building blocks shared by the branches.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Real, Var};
use crate::error::{Error, Result};

/// Leaky-rectifier slope used between every pair of layers.
pub const ACT_SLOPE: f64 = 0.1;

/// A convolution's weight `[c_out, c_in, k, k]` and bias `[c_out]`.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    #[default]
    Cnn,
    Mlp,
}

impl DecoderKind {
    /// Spatial kernel size of every decoder layer.
    pub fn kernel(self) -> usize {
        match self {
            DecoderKind::Cnn => 3,
            DecoderKind::Mlp => 1,
        }
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(DecoderKind::Cnn),
            "mlp" => Ok(DecoderKind::Mlp),
            other => Err(Error::Usage(format!(
                "unknown decoder kind `{other}` (expected cnn or mlp)"
            ))),
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderKind::Cnn => "cnn",
            DecoderKind::Mlp => "mlp",
        })
    }
}

/// Same-padded, stride-1 convolution with bias.
pub fn conv<T: Real>(g: &mut Graph<T>, x: Var, layer: &LayerVars) -> Result<Var> {
    let k = g.shape(layer.weight).get(2).copied().unwrap_or(1);
    g.conv2d(x, layer.weight, Some(layer.bias), 1, k / 2)
}

/// Convolutions with the activation between consecutive layers only.
pub fn conv_stack<T: Real>(g: &mut Graph<T>, x: Var, layers: &[LayerVars]) -> Result<Var> {
    let mut h = x;
    for (i, layer) in layers.iter().enumerate() {
        if i > 0 {
            h = g.leaky_relu(h, ACT_SLOPE);
        }
        h = conv(g, h, layer)?;
    }
    Ok(h)
}

/// High preserving block: `x + conv2(act(conv1(x)))`.
pub fn hpb<T: Real>(g: &mut Graph<T>, x: Var, conv1: &LayerVars, conv2: &LayerVars) -> Result<Var> {
    let h = conv_stack(g, x, &[*conv1, *conv2])?;
    g.add(x, h)
}

/// Three-layer decoder from a `C×H×W` feature map to RGB. The `mlp` kind is
/// the same stack with 1×1 kernels, i.e. a per-pixel perceptron.
pub fn decoder<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    layers: &[LayerVars],
    kind: DecoderKind,
) -> Result<Var> {
    if layers.len() != 3 {
        return Err(Error::dim("decoder", "layer count", 3, layers.len()));
    }
    for l in layers {
        let k = g.shape(l.weight).get(2).copied().unwrap_or(0);
        if k != kind.kernel() {
            return Err(Error::Config(format!(
                "{kind} decoder expects {0}x{0} kernels, got {k}x{k}",
                kind.kernel()
            )));
        }
    }
    conv_stack(g, x, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    #[test]
    fn zero_hpb_is_identity() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(
            &Tensor::from_f64(
                &[2, 3, 3],
                &(0..18).map(|i| i as f64 * 0.3 - 2.0).collect::<Vec<_>>(),
            )
            .unwrap(),
        );
        let w = Tensor::zeros(&[2, 2, 3, 3]);
        let b = Tensor::zeros(&[2]);
        let l1 = LayerVars {
            weight: g.leaf(&w),
            bias: g.leaf(&b),
        };
        let l2 = LayerVars {
            weight: g.leaf(&w),
            bias: g.leaf(&b),
        };
        let y = hpb(&mut g, x, &l1, &l2).unwrap();
        assert_eq!(g.value(x), g.value(y));
    }

    #[test]
    fn decoder_rejects_wrong_kernel() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&Tensor::zeros(&[2, 4, 4]));
        let layers: Vec<LayerVars> = [(2, 2), (2, 2), (3, 2)]
            .iter()
            .map(|&(o, i)| LayerVars {
                weight: g.leaf(&Tensor::zeros(&[o, i, 3, 3])),
                bias: g.leaf(&Tensor::zeros(&[o])),
            })
            .collect();
        assert!(matches!(
            decoder(&mut g, x, &layers, DecoderKind::Mlp),
            Err(Error::Config(_))
        ));
        let y = decoder(&mut g, x, &layers, DecoderKind::Cnn).unwrap();
        assert_eq!(g.shape(y), &[3, 4, 4]);
    }

    #[test]
    fn decoder_kind_parse() {
        assert_eq!("MLP".parse::<DecoderKind>().unwrap(), DecoderKind::Mlp);
        assert!("siren".parse::<DecoderKind>().is_err());
    }
}
