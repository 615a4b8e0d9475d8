//! Multi-head self-attention block and its windowed application to feature maps.

use std::sync::Arc;

use super::{Graph, Real, Var, GATHER_ZERO};
use crate::error::{Error, Result};

/// Weights of one attention block. Projection matrices are stored
/// `D_in × D_out` so that tokens multiply on the left.
#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Parameter suffixes and shapes for a block of width `dim` with MLP width `hidden`.
pub fn attention_param_shapes(dim: usize, hidden: usize) -> Vec<(&'static str, Vec<usize>)> {
    vec![
        ("attn_q.weight", vec![dim, dim]),
        ("attn_q.bias", vec![dim]),
        ("attn_k.weight", vec![dim, dim]),
        ("attn_k.bias", vec![dim]),
        ("attn_v.weight", vec![dim, dim]),
        ("attn_v.bias", vec![dim]),
        ("attn_o.weight", vec![dim, dim]),
        ("attn_o.bias", vec![dim]),
        ("mlp_1.weight", vec![dim, hidden]),
        ("mlp_1.bias", vec![hidden]),
        ("mlp_2.weight", vec![hidden, dim]),
        ("mlp_2.bias", vec![dim]),
    ]
}

impl AttentionWeights {
    /// Builds from vars ordered as in [`attention_param_shapes`].
    pub fn from_slice(v: &[Var]) -> Self {
        AttentionWeights {
            wq: v[0],
            bq: v[1],
            wk: v[2],
            bk: v[3],
            wv: v[4],
            bv: v[5],
            wo: v[6],
            bo: v[7],
            w1: v[8],
            b1: v[9],
            w2: v[10],
            b2: v[11],
        }
    }
}

const MLP_SLOPE: f64 = 0.1;

fn project<T: Real>(g: &mut Graph<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    g.add_bias(y, b)
}

/// Self-attention over `tokens` of shape `[B, N, D]`, followed by a token-wise
/// MLP; both sub-layers are residual.
///
/// `key_valid`, when given, has `B·N` entries; invalid keys get zero weight.
pub fn attention_block<T: Real>(
    g: &mut Graph<T>,
    tokens: Var,
    p: &AttentionWeights,
    heads: usize,
    key_valid: Option<&[bool]>,
) -> Result<Var> {
    let shape = g.shape(tokens).to_vec();
    if shape.len() != 3 {
        return Err(Error::dim("attention_block", "token rank", 3, shape.len()));
    }
    let (b, n, d) = (shape[0], shape[1], shape[2]);
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!(
            "token width {d} is not divisible by {heads} attention heads"
        )));
    }
    if let Some(mask) = key_valid {
        if mask.len() != b * n {
            return Err(Error::dim("attention_block", "key mask", b * n, mask.len()));
        }
    }
    let dh = d / heads;

    let split_heads = |g: &mut Graph<T>, x: Var| -> Result<Var> {
        let x = g.reshape(x, &[b, n, heads, dh])?;
        g.permute(x, &[0, 2, 1, 3])
    };
    let q = project(g, tokens, p.wq, p.bq)?;
    let q = split_heads(g, q)?;
    let k = project(g, tokens, p.wk, p.bk)?;
    let k = g.reshape(k, &[b, n, heads, dh])?;
    let kt = g.permute(k, &[0, 2, 3, 1])?;
    let v = project(g, tokens, p.wv, p.bv)?;
    let v = split_heads(g, v)?;

    let scores = g.matmul(q, kt)?;
    let mut scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
    if let Some(mask) = key_valid.filter(|m| m.iter().any(|&ok| !ok)) {
        let mut bias = Vec::with_capacity(b * heads * n * n);
        for bi in 0..b {
            let row: Vec<T> = mask[bi * n..(bi + 1) * n]
                .iter()
                .map(|&ok| if ok { T::zero() } else { T::neg_infinity() })
                .collect();
            for _ in 0..heads * n {
                bias.extend_from_slice(&row);
            }
        }
        let bias = g.constant(&[b, heads, n, n], bias)?;
        scores = g.add(scores, bias)?;
    }
    let weights = g.softmax(scores);
    let mixed = g.matmul(weights, v)?;
    let mixed = g.permute(mixed, &[0, 2, 1, 3])?;
    let mixed = g.reshape(mixed, &[b, n, d])?;
    let attended = project(g, mixed, p.wo, p.bo)?;
    let x1 = g.add(tokens, attended)?;

    let h = project(g, x1, p.w1, p.b1)?;
    let h = g.leaky_relu(h, MLP_SLOPE);
    let h = project(g, h, p.w2, p.b2)?;
    g.add(x1, h)
}

/// Gather plans that cut a `C×H×W` map into `win×win` token windows
/// (zero-padded at the bottom/right edges) and stitch them back.
#[derive(Clone, Debug)]
pub struct WindowPlan {
    pub windows: usize,
    pub tokens_per_window: usize,
    pub channels: usize,
    partition: Arc<Vec<u32>>,
    merge: Arc<Vec<u32>>,
    key_valid: Vec<bool>,
}

impl WindowPlan {
    pub fn new(channels: usize, h: usize, w: usize, win: usize) -> Result<Self> {
        if win == 0 {
            return Err(Error::Config("attention window must be >= 1".into()));
        }
        let ny = h.div_ceil(win);
        let nx = w.div_ceil(win);
        let n = win * win;
        let windows = ny * nx;
        let mut partition = Vec::with_capacity(windows * n * channels);
        let mut key_valid = Vec::with_capacity(windows * n);
        let mut merge = vec![0u32; channels * h * w];
        for wy in 0..ny {
            for wx in 0..nx {
                let widx = wy * nx + wx;
                for py in 0..win {
                    for px in 0..win {
                        let (y, x) = (wy * win + py, wx * win + px);
                        let inside = y < h && x < w;
                        key_valid.push(inside);
                        let tok = widx * n + py * win + px;
                        for c in 0..channels {
                            if inside {
                                partition.push((c * h * w + y * w + x) as u32);
                                merge[c * h * w + y * w + x] = (tok * channels + c) as u32;
                            } else {
                                partition.push(GATHER_ZERO);
                            }
                        }
                    }
                }
            }
        }
        Ok(WindowPlan {
            windows,
            tokens_per_window: n,
            channels,
            partition: Arc::new(partition),
            merge: Arc::new(merge),
            key_valid,
        })
    }

    pub fn has_padding(&self) -> bool {
        self.key_valid.iter().any(|&v| !v)
    }
}

/// Applies [`attention_block`] independently inside each spatial window of a `C×H×W` map.
pub fn window_attention<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    p: &AttentionWeights,
    heads: usize,
    win: usize,
) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 {
        return Err(Error::dim("window_attention", "input rank", 3, shape.len()));
    }
    let plan = WindowPlan::new(shape[0], shape[1], shape[2], win)?;
    let tokens = g.gather(
        x,
        plan.partition.clone(),
        &[plan.windows, plan.tokens_per_window, plan.channels],
    )?;
    let mask = plan.has_padding().then_some(plan.key_valid.as_slice());
    let out = attention_block(g, tokens, p, heads, mask)?;
    g.gather(out, plan.merge.clone(), &shape)
}
