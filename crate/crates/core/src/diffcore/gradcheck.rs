//! Central finite-difference verification of analytic gradients.
//!
//! Every registered op is evaluated on seeded random `f64` inputs. The scalar
//! probe is `sum(op(inputs) ⊙ R)` for a fixed random `R`, so every output
//! element contributes to the checked gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{
    attention_block, attention_param_shapes, window_attention, AttentionWeights,
};
use super::{Graph, SampleMode, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::blocks::{decoder, hpb, DecoderKind, LayerVars};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub op: String,
    pub seed: u64,
    pub checked: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum InputKind {
    /// Uniform on `[-1, 1]`.
    Signed,
    /// Magnitude in `[0.1, 1]` with random sign; keeps kinks out of reach of the step.
    AwayFromZero,
}

/// Builds a scalar-or-tensor output from leaf inputs on an `f64` graph.
pub type GraphBuilder<'a> = dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + 'a;

type BuildFn = Box<GraphBuilder<'static>>;

struct OpCase {
    shapes: Vec<Vec<usize>>,
    kind: InputKind,
    build: BuildFn,
}

/// Names accepted by [`finite_diff_check`].
pub const REGISTERED_OPS: &[&str] = &[
    "relu",
    "leaky_relu",
    "elementwise",
    "layout",
    "matmul",
    "softmax",
    "conv2d",
    "attention_block",
    "window_attention",
    "grid_sample_3d",
    "hpb",
    "decoder_cnn",
    "decoder_mlp",
    "charbonnier",
];

fn attention_shapes(tokens: Vec<usize>, dim: usize) -> Vec<Vec<usize>> {
    let mut shapes = vec![tokens];
    shapes.extend(
        attention_param_shapes(dim, 2 * dim)
            .into_iter()
            .map(|(_, s)| s),
    );
    shapes
}

fn conv_layers(v: &[Var]) -> Vec<LayerVars> {
    v.chunks(2)
        .map(|c| LayerVars {
            weight: c[0],
            bias: c[1],
        })
        .collect()
}

fn decoder_shapes(c: usize, hw: usize, k: usize) -> Vec<Vec<usize>> {
    vec![
        vec![c, hw, hw],
        vec![c, c, k, k],
        vec![c],
        vec![c, c, k, k],
        vec![c],
        vec![3, c, k, k],
        vec![3],
    ]
}

fn registry(name: &str, seed: u64) -> Result<OpCase> {
    let case = |shapes: Vec<Vec<usize>>, kind: InputKind, build: BuildFn| OpCase {
        shapes,
        kind,
        build,
    };
    Ok(match name {
        "relu" => case(
            vec![vec![3, 4]],
            InputKind::AwayFromZero,
            Box::new(|g, v| Ok(g.relu(v[0]))),
        ),
        "leaky_relu" => case(
            vec![vec![3, 4]],
            InputKind::AwayFromZero,
            Box::new(|g, v| Ok(g.leaky_relu(v[0], 0.1))),
        ),
        "elementwise" => case(
            vec![vec![2, 3], vec![2, 3], vec![3]],
            InputKind::Signed,
            Box::new(|g, v| {
                let p = g.mul(v[0], v[1])?;
                let d = g.sub(p, v[0])?;
                let s = g.add(d, v[1])?;
                let s = g.scale(s, 1.7);
                let s = g.add_bias(s, v[2])?;
                let m = g.mean(s);
                let t = g.sum(s);
                g.concat(&[m, t], 0)
            }),
        ),
        "layout" => case(
            vec![vec![2, 3, 4], vec![2, 1, 4]],
            InputKind::Signed,
            Box::new(|g, v| {
                let c = g.concat(&[v[0], v[1]], 1)?;
                let p = g.permute(c, &[2, 0, 1])?;
                let s = g.slice(p, 0, 1, 2)?;
                g.reshape(s, &[4, 4])
            }),
        ),
        "matmul" => case(
            vec![vec![2, 3, 4], vec![2, 4, 5]],
            InputKind::Signed,
            Box::new(|g, v| g.matmul(v[0], v[1])),
        ),
        "softmax" => case(
            vec![vec![3, 5]],
            InputKind::Signed,
            Box::new(|g, v| Ok(g.softmax(v[0]))),
        ),
        "conv2d" => case(
            vec![vec![1, 4, 4], vec![2, 1, 3, 3], vec![2]],
            InputKind::Signed,
            Box::new(|g, v| g.conv2d(v[0], v[1], Some(v[2]), 1, 1)),
        ),
        "attention_block" => case(
            attention_shapes(vec![2, 3, 4], 4),
            InputKind::Signed,
            Box::new(|g, v| {
                attention_block(g, v[0], &AttentionWeights::from_slice(&v[1..]), 2, None)
            }),
        ),
        "window_attention" => case(
            attention_shapes(vec![4, 5, 6], 4),
            InputKind::Signed,
            Box::new(|g, v| {
                window_attention(g, v[0], &AttentionWeights::from_slice(&v[1..]), 2, 4)
            }),
        ),
        "grid_sample_3d" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a_0001);
            let dims = [3usize, 4, 2];
            let coords: Vec<[f64; 3]> = (0..20)
                .map(|_| {
                    let interior = |rng: &mut ChaCha8Rng, n: usize| {
                        let lo = 0.5 / n as f64;
                        rng.gen_range(lo..1.0 - lo)
                    };
                    [
                        interior(&mut rng, dims[1]),
                        interior(&mut rng, dims[0]),
                        interior(&mut rng, dims[2]),
                    ]
                })
                .collect();
            case(
                vec![vec![3, 4, 2, 2]],
                InputKind::Signed,
                Box::new(move |g, v| g.grid_sample_3d(v[0], &coords, SampleMode::Linear)),
            )
        }
        "hpb" => case(
            vec![
                vec![3, 5, 5],
                vec![3, 3, 3, 3],
                vec![3],
                vec![3, 3, 3, 3],
                vec![3],
            ],
            InputKind::Signed,
            Box::new(|g, v| {
                let l = conv_layers(&v[1..]);
                hpb(g, v[0], &l[0], &l[1])
            }),
        ),
        "decoder_cnn" => case(
            decoder_shapes(4, 5, 3),
            InputKind::Signed,
            Box::new(|g, v| decoder(g, v[0], &conv_layers(&v[1..]), DecoderKind::Cnn)),
        ),
        "decoder_mlp" => case(
            decoder_shapes(4, 5, 1),
            InputKind::Signed,
            Box::new(|g, v| decoder(g, v[0], &conv_layers(&v[1..]), DecoderKind::Mlp)),
        ),
        "charbonnier" => case(
            vec![vec![3, 4, 4], vec![3, 4, 4]],
            InputKind::Signed,
            Box::new(|g, v| g.charbonnier(v[0], v[1], 1e-3)),
        ),
        other => return Err(Error::Usage(format!("unregistered op `{other}`"))),
    })
}

fn random_inputs(
    shapes: &[Vec<usize>],
    kind: InputKind,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Tensor<f64>>> {
    shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            let data = (0..n)
                .map(|_| match kind {
                    InputKind::Signed => rng.gen_range(-1.0..1.0),
                    InputKind::AwayFromZero => {
                        let m = rng.gen_range(0.1..1.0);
                        if rng.gen_bool(0.5) {
                            m
                        } else {
                            -m
                        }
                    }
                })
                .collect();
            Tensor::new(s, data).map(Tensor::with_grad)
        })
        .collect()
}

fn probe(
    build: &GraphBuilder,
    inputs: &[Tensor<f64>],
    weights: &mut Option<Vec<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<(Graph<f64>, Vec<Var>, Var)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    let out = build(&mut g, &vars)?;
    let shape = g.shape(out).to_vec();
    let n = g.value(out).len();
    let w = weights.get_or_insert_with(|| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let wv = g.constant(&shape, w.clone())?;
    let prod = g.mul(out, wv)?;
    let loss = g.sum(prod);
    Ok((g, vars, loss))
}

/// Compares analytic and central-difference gradients of a registered op.
///
/// `input_shapes` overrides the op's default shapes. The check passes when
/// the maximum relative error is strictly below `tol`.
pub fn finite_diff_check(
    op: &str,
    input_shapes: Option<&[Vec<usize>]>,
    seed: u64,
    tol: f64,
) -> Result<GradCheckReport> {
    let case = registry(op, seed)?;
    if !(tol >= 0.0) {
        return Err(Error::Usage(format!(
            "tolerance must be non-negative, got {tol}"
        )));
    }
    let shapes = match input_shapes {
        Some(s) => {
            if s.len() != case.shapes.len() {
                return Err(Error::dim(
                    "finite_diff_check",
                    "input count",
                    case.shapes.len(),
                    s.len(),
                ));
            }
            s.to_vec()
        }
        None => case.shapes.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = random_inputs(&shapes, case.kind, &mut rng)?;
    check_gradients(op, &case.build, inputs, seed, &mut rng, tol)
}

/// Finite-difference check of an arbitrary graph builder over the given
/// inputs; every input element is perturbed.
pub fn check_graph_gradients(
    label: &str,
    build: &GraphBuilder,
    inputs: Vec<Tensor<f64>>,
    seed: u64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    check_gradients(label, build, inputs, seed, &mut rng, tol)
}

fn check_gradients(
    label: &str,
    build: &GraphBuilder,
    mut inputs: Vec<Tensor<f64>>,
    seed: u64,
    rng: &mut ChaCha8Rng,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut weights = None;
    let (mut g, vars, loss) = probe(build, &inputs, &mut weights, rng)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(&inputs)
        .map(|(&v, t)| {
            g.grad(v)
                .map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec)
        })
        .collect();

    let mut eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let (g, _, loss) = probe(build, inputs, &mut weights, rng)?;
        Ok(g.value(loss)[0])
    };

    let mut max_rel_err = 0.0f64;
    let mut checked = 0;
    #[allow(clippy::needless_range_loop)]
    for i in 0..inputs.len() {
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            inputs[i].data_mut()[j] = orig + FD_STEP;
            let plus = eval(&inputs)?;
            inputs[i].data_mut()[j] = orig - FD_STEP;
            let minus = eval(&inputs)?;
            inputs[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[i][j];
            let denom = a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            let err = (a - numeric).abs() / denom;
            max_rel_err = if err.is_nan() {
                f64::INFINITY
            } else {
                max_rel_err.max(err)
            };
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        op: label.to_string(),
        seed,
        checked,
        max_rel_err,
        pass: max_rel_err < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_away_from_kink() {
        let r = finite_diff_check("relu", None, 1, 1e-6).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn conv2d_small() {
        let r = finite_diff_check("conv2d", None, 2, 1e-4).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.checked, 16 + 18 + 2);
    }

    #[test]
    fn grid_sample_interior() {
        let r = finite_diff_check("grid_sample_3d", None, 3, 1e-4).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn zero_tolerance_fails() {
        let r = finite_diff_check("softmax", None, 4, 0.0).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn unknown_op_is_usage_error() {
        assert!(matches!(
            finite_diff_check("fft", None, 0, 1e-4),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn shape_override() {
        let shapes = vec![vec![2, 6, 6], vec![3, 2, 3, 3], vec![3]];
        let r = finite_diff_check("conv2d", Some(&shapes), 5, 1e-4).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
