use evsr::diffcore::attention::attention_param_shapes;
use evsr::diffcore::checkpoint::{decode, encode, load_params, save_params};
use evsr::diffcore::*;
use evsr::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn leaf(g: &mut Graph<f64>, shape: &[usize], data: Vec<f64>) -> Var {
    g.leaf(&Tensor::new(shape, data).unwrap().with_grad())
}

#[test]
fn conv2d_examples() {
    let mut g = Graph::<f64>::new();
    let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.7 - 2.0).collect();
    let xv = leaf(&mut g, &[1, 3, 3], x.clone());
    let one = leaf(&mut g, &[1, 1, 1, 1], vec![1.0]);
    let zb = leaf(&mut g, &[1], vec![0.0]);
    let y = g.conv2d(xv, one, Some(zb), 1, 0).unwrap();
    assert_eq!(g.value(y), x.as_slice());

    let ones = leaf(&mut g, &[1, 3, 3], vec![1.0; 9]);
    let k = leaf(&mut g, &[1, 1, 3, 3], vec![1.0; 9]);
    let y = g.conv2d(ones, k, None, 1, 0).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 1]);
    assert_eq!(g.value(y), &[9.0]);

    let zk = leaf(&mut g, &[2, 1, 3, 3], vec![0.0; 18]);
    let b = leaf(&mut g, &[2], vec![0.25, -1.5]);
    let y = g.conv2d(xv, zk, Some(b), 1, 1).unwrap();
    assert_eq!(&g.value(y)[..9], &[0.25; 9]);
    assert_eq!(&g.value(y)[9..], &[-1.5; 9]);
}

#[test]
fn conv2d_shape_errors_name_the_axis() {
    let mut g = Graph::<f64>::new();
    let x = leaf(&mut g, &[2, 4, 4], vec![0.0; 32]);
    let k = leaf(&mut g, &[1, 3, 3, 3], vec![0.0; 27]);
    match g.conv2d(x, k, None, 1, 1) {
        Err(Error::Dimension { axis, .. }) => assert!(!axis.is_empty()),
        other => panic!("expected dimension error, got {other:?}"),
    }
}

fn attention_params(
    g: &mut Graph<f64>,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, AttentionWeights) {
    let mut raw = Vec::new();
    let mut vars = Vec::new();
    for (_, shape) in attention_param_shapes(d, 2 * d) {
        let n = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        vars.push(leaf(g, &shape, data.clone()));
        raw.push(data);
    }
    (raw, AttentionWeights::from_slice(&vars))
}

fn affine(x: &[f64], w: &[f64], b: &[f64], din: usize, dout: usize) -> Vec<f64> {
    (0..dout)
        .map(|j| b[j] + (0..din).map(|i| x[i] * w[i * dout + j]).sum::<f64>())
        .collect()
}

#[test]
fn single_token_attention_closed_form() {
    let d = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::<f64>::new();
    let (p, w) = attention_params(&mut g, d, &mut rng);
    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let xv = leaf(&mut g, &[1, 1, d], x.clone());
    let y = attention_block(&mut g, xv, &w, 2, None).unwrap();

    let v = affine(&x, &p[4], &p[5], d, d);
    let o = affine(&v, &p[6], &p[7], d, d);
    let x1: Vec<f64> = x.iter().zip(&o).map(|(a, b)| a + b).collect();
    let h: Vec<f64> = affine(&x1, &p[8], &p[9], d, 2 * d)
        .into_iter()
        .map(|v| if v > 0.0 { v } else { 0.1 * v })
        .collect();
    let m = affine(&h, &p[10], &p[11], 2 * d, d);
    for j in 0..d {
        assert!((g.value(y)[j] - (x1[j] + m[j])).abs() < 1e-12);
    }
}

#[test]
fn identical_tokens_give_identical_rows() {
    let d = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = Graph::<f64>::new();
    let (_, w) = attention_params(&mut g, d, &mut rng);
    let tok = [0.3, -0.2, 0.9, 0.1];
    let xv = leaf(
        &mut g,
        &[1, 5, d],
        tok.iter().copied().cycle().take(5 * d).collect(),
    );
    let y = attention_block(&mut g, xv, &w, 2, None).unwrap();
    let out = g.value(y);
    for r in 1..5 {
        assert_eq!(&out[r * d..(r + 1) * d], &out[..d]);
    }
}

#[test]
fn zero_value_and_mlp_output_is_passthrough() {
    let d = 4;
    let mut g = Graph::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut vars = Vec::new();
    for (name, shape) in attention_param_shapes(d, 2 * d) {
        let n: usize = shape.iter().product();
        let zero = name.starts_with("attn_v") || name.starts_with("mlp_2") || name == "attn_o.bias";
        let data = if zero {
            vec![0.0; n]
        } else {
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        vars.push(leaf(&mut g, &shape, data));
    }
    let w = AttentionWeights::from_slice(&vars);
    let x: Vec<f64> = (0..3 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let xv = leaf(&mut g, &[1, 3, d], x.clone());
    let y = attention_block(&mut g, xv, &w, 2, None).unwrap();
    assert_eq!(g.value(y), x.as_slice());
    let bad = attention_block(&mut g, xv, &w, 3, None);
    assert!(matches!(bad, Err(Error::Config(_))));
}

#[test]
fn grid_sample_examples() {
    let mut g = Graph::<f64>::new();
    let f = leaf(&mut g, &[1, 2, 1, 1], vec![0.0, 1.0]);
    let y = g
        .grid_sample_3d(f, &[[0.5, 0.5, 0.5]], SampleMode::Linear)
        .unwrap();
    assert!((g.value(y)[0] - 0.5).abs() < 1e-15);
    let empty = g.grid_sample_3d(f, &[], SampleMode::Linear).unwrap();
    assert!(g.value(empty).is_empty());
    assert!(matches!(
        g.grid_sample_3d(f, &[[f64::NAN, 0.5, 0.5]], SampleMode::Linear),
        Err(Error::Input(_))
    ));
}

#[test]
fn backward_examples() {
    let mut g = Graph::<f64>::new();
    let x = leaf(&mut g, &[3], vec![1.0, 2.0, 3.0]);
    let p = leaf(&mut g, &[2], vec![5.0, 6.0]);
    let sq = g.mul(x, x).unwrap();
    let loss = g.sum(sq);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
    assert!(g.grad(p).is_none_or(|gp| gp.iter().all(|&v| v == 0.0)));
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[4.0, 8.0, 12.0]);
    assert!(matches!(g.backward(sq), Err(Error::Usage(_))));
}

#[test]
fn every_registered_op_passes_default_check() {
    for op in REGISTERED_OPS {
        let r = finite_diff_check(op, None, 0, 1e-4).unwrap();
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    store.insert(
        "a.b.c.weight",
        Tensor::new(&[2, 3], (0..6).map(|_| rng.gen()).collect()).unwrap(),
    );
    store.insert(
        "a.b.c.bias",
        Tensor::new(&[3], vec![f32::MIN_POSITIVE, -0.0, 1e30]).unwrap(),
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.evw");
    save_params(&path, &store).unwrap();
    let back = load_params(&path).unwrap();
    for ((na, ta), (nb, tb)) in store.iter().zip(back.iter()) {
        assert_eq!(na, nb);
        assert_eq!(ta.shape(), tb.shape());
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(ta), bits(tb));
    }
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"EGVW");
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode(&bad, &path).is_err());
    let reencoded = encode(store.iter()).unwrap();
    assert_eq!(reencoded, bytes);
}

fn random_grid(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Vec<f64> {
    (0..dims.iter().product())
        .map(|_| rng.gen_range(-2.0..2.0))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn affine_fields_are_reproduced(seed in any::<u64>(), h in 2usize..6, w in 2usize..6, t in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c, d) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0));
        let f = |x: f64, y: f64, tt: f64| a * x + b * y + c * tt + d;
        let mut data = Vec::new();
        for iy in 0..h {
            for ix in 0..w {
                for it in 0..t {
                    data.push(f((ix as f64 + 0.5) / w as f64, (iy as f64 + 0.5) / h as f64, (it as f64 + 0.5) / t as f64));
                }
            }
        }
        let mut g = Graph::<f64>::new();
        let fv = g.constant(&[h, w, t, 1], data).unwrap();
        let inside = |rng: &mut ChaCha8Rng, n: usize| rng.gen_range(0.5 / n as f64..=1.0 - 0.5 / n as f64);
        let coords: Vec<[f64; 3]> = (0..20).map(|_| [inside(&mut rng, w), inside(&mut rng, h), inside(&mut rng, t)]).collect();
        let y = g.grid_sample_3d(fv, &coords, SampleMode::Linear).unwrap();
        for (q, v) in coords.iter().zip(g.value(y)) {
            prop_assert!((v - f(q[0], q[1], q[2])).abs() <= 1e-6);
        }
    }

    #[test]
    fn node_centres_are_exact(seed in any::<u64>(), h in 1usize..5, w in 1usize..5, t in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = 3;
        let data = random_grid(&mut rng, [h, w, t, c]);
        let mut g = Graph::<f64>::new();
        let fv = g.constant(&[h, w, t, c], data.clone()).unwrap();
        let mut coords = Vec::new();
        let mut expect = Vec::new();
        for iy in 0..h {
            for ix in 0..w {
                for it in 0..t {
                    coords.push([(ix as f64 + 0.5) / w as f64, (iy as f64 + 0.5) / h as f64, (it as f64 + 0.5) / t as f64]);
                    let base = ((iy * w + ix) * t + it) * c;
                    expect.extend_from_slice(&data[base..base + c]);
                }
            }
        }
        let near = g.grid_sample_3d(fv, &coords, SampleMode::Nearest).unwrap();
        prop_assert_eq!(g.value(near), expect.as_slice());
        let lin = g.grid_sample_3d(fv, &coords, SampleMode::Linear).unwrap();
        for (a, b) in g.value(lin).iter().zip(&expect) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn linear_samples_are_convex(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..5)];
        let data = random_grid(&mut rng, [dims[0], dims[1], dims[2], 1]);
        let mut g = Graph::<f64>::new();
        let fv = g.constant(&[dims[0], dims[1], dims[2], 1], data.clone()).unwrap();
        let coords: Vec<[f64; 3]> = (0..16).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let y = g.grid_sample_3d(fv, &coords, SampleMode::Linear).unwrap();
        let taps = evsr::diffcore::ops::sample::build_taps([dims[0], dims[1], dims[2]], &coords, SampleMode::Linear).unwrap();
        for (q, v) in g.value(y).iter().enumerate() {
            let nodes = &taps.taps[q * 8..(q + 1) * 8];
            let lo = nodes.iter().map(|&(i, _)| data[i as usize]).fold(f64::INFINITY, f64::min);
            let hi = nodes.iter().map(|&(i, _)| data[i as usize]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..2 * 6 * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..3 * 2 * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let run = || {
            let mut g = Graph::<f64>::new();
            let xv = g.constant(&[2, 6, 6], x.clone()).unwrap();
            let kv = g.constant(&[3, 2, 3, 3], k.clone()).unwrap();
            let y = g.conv2d(xv, kv, None, 1, 1).unwrap();
            let s = g.softmax(y);
            g.value(s).to_vec()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn adam_step_counter(n in 1usize..20) {
        let mut store = ParamStore::<f64>::new();
        store.insert("p", Tensor::new(&[2], vec![1.0, -1.0]).unwrap().with_grad());
        let mut adam = AdamState::new(1e-2);
        for i in 0..n {
            store.get_mut("p").unwrap().accumulate_grad(&[0.5, -0.25]);
            adam.step(&mut store).unwrap();
            prop_assert_eq!(adam.step, i as u64 + 1);
            prop_assert_eq!(adam.first_moment(0).unwrap().len(), 2);
            store.zero_grad();
        }
    }
}

/// Adam on a one-parameter Charbonnier problem reaches the target.
#[test]
fn adam_charbonnier_toy_converges() {
    let target = 0.7;
    let mut store = ParamStore::<f64>::new();
    store.insert("w", Tensor::new(&[1], vec![0.0]).unwrap().with_grad());
    let mut adam = AdamState::new(1e-3);
    let mut steps = 0;
    while (store.get("w").unwrap().data()[0] - target).abs() > 1e-3 {
        assert!(steps < 10_000, "did not converge");
        let mut g = Graph::<f64>::new();
        let w = g.leaf(store.get("w").unwrap());
        let t = g.constant(&[1], vec![target]).unwrap();
        let l = g.charbonnier(w, t, 1e-3).unwrap();
        g.backward(l).unwrap();
        store.zero_grad();
        store
            .get_mut("w")
            .unwrap()
            .accumulate_grad(g.grad(w).unwrap());
        adam.step(&mut store).unwrap();
        steps += 1;
    }
}
