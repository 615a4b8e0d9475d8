use evsr::datapipe::{synthesize_clip, ClipData, Dataset, Frame, Pattern, SceneSpec};
use evsr::diffcore::checkpoint::load_params;
use evsr::eventsim::EventSimConfig;
use evsr::model::{init_params, Model, ModelConfig};
use evsr::traineval::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_cfg() -> ModelConfig {
    ModelConfig {
        num_input_frames: 3,
        channels: 4,
        segments: 6,
        attn_window: 8,
        attn_heads: 2,
        ..Default::default()
    }
}

fn clip(name: &str, w: usize, h: usize) -> ClipData {
    let mut spec = SceneSpec::new(name, Pattern::GaussianBlobs, w, h);
    spec.frame_count = 4;
    spec.seed = 5;
    synthesize_clip(&spec, &EventSimConfig::default()).unwrap()
}

fn random_frame(seed: u64, w: usize, h: usize) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Frame::new(
        w,
        h,
        (0..3 * w * h).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
    )
    .unwrap()
}

fn quick_train(max_steps: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 1,
        max_steps: Some(max_steps),
        crop: 6,
        s_max: 2.0,
        seed: 11,
        ..Default::default()
    }
}

/// Straightforward SSIM: a full 2-D Gaussian window at every valid offset.
fn ssim_reference(a: &Frame, b: &Frame) -> f64 {
    let n = SSIM_WINDOW;
    let r = (n / 2) as f64;
    let mut w: Vec<f64> = (0..n * n)
        .map(|i| {
            let (dy, dx) = ((i / n) as f64 - r, (i % n) as f64 - r);
            (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut acc = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        for y in 0..=a.height() - n {
            for x in 0..=a.width() - n {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, wi) in w.iter().enumerate() {
                    let (p, q) = (
                        a.get(c, y + i / n, x + i % n) as f64,
                        b.get(c, y + i / n, x + i % n) as f64,
                    );
                    ma += wi * p;
                    mb += wi * q;
                    saa += wi * p * p;
                    sbb += wi * q * q;
                    sab += wi * p * q;
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    acc / count as f64
}

#[test]
fn charbonnier_closed_forms() {
    let eps = 1e-3;
    for d in [0.0f64, 0.5, -2.0, 1e-4] {
        let direct = (d * d + eps * eps).sqrt();
        assert!((charbonnier_term(d, eps) - direct).abs() < 1e-12, "d={d}");
    }
    let a = Frame::filled(4, 3, 0.25).unwrap();
    let b = Frame::filled(4, 3, 0.75).unwrap();
    assert!((charbonnier(&a, &a, eps).unwrap() - eps).abs() < 1e-12);
    let expected = (0.25 + eps * eps).sqrt();
    assert!((charbonnier(&a, &b, eps).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn psnr_known_values() {
    let a = Frame::filled(8, 8, 0.0).unwrap();
    assert!((psnr(&a, &Frame::filled(8, 8, 0.1).unwrap()).unwrap() - 20.0).abs() < 1e-5);
    assert!((psnr(&a, &Frame::filled(8, 8, 0.5).unwrap()).unwrap() - 6.0206).abs() < 1e-4);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
}

#[test]
fn ssim_matches_sliding_window_reference() {
    let a = random_frame(1, 17, 13);
    let b = random_frame(2, 17, 13).map(|v| 0.5 * v + 0.25);
    let fast = ssim(&a, &b).unwrap();
    assert!((fast - ssim_reference(&a, &b)).abs() < 1e-9, "{fast}");
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    assert!(ssim(&random_frame(0, 10, 20), &random_frame(1, 10, 20)).is_err());
}

#[test]
fn perfect_model_loss_is_eps_per_pair() {
    let cfg = tiny_cfg();
    let mut params = init_params(&cfg, 4).unwrap();
    for (name, t) in params.iter_mut() {
        if name.starts_with("stir.decoder.layer3") {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let model = Model::from_params(cfg, params).unwrap();
    let c = clip("p", 12, 10);
    let eps = 1e-3;
    let one = total_loss(&model, &c, &[(1.0, 1)], eps).unwrap();
    assert!((one - eps).abs() < 1e-12, "{one}");
    let three = total_loss(&model, &c, &[(1.0, 0), (1.0, 1), (1.0, 2)], eps).unwrap();
    assert!((three - 3.0 * eps).abs() < 1e-12, "{three}");
}

#[test]
fn loss_is_additive_over_pairs() {
    let model = Model::init(tiny_cfg(), 8).unwrap();
    let c = clip("a", 12, 12);
    let single = total_loss(&model, &c, &[(2.0, 1)], 1e-3).unwrap();
    let double = total_loss(&model, &c, &[(2.0, 1), (2.0, 1)], 1e-3).unwrap();
    assert!((double - 2.0 * single).abs() < 1e-12 * double.max(1.0));
    let mixed = total_loss(&model, &c, &[(2.0, 1), (1.5, 0)], 1e-3).unwrap();
    let other = total_loss(&model, &c, &[(1.5, 0)], 1e-3).unwrap();
    assert!((mixed - single - other).abs() < 1e-12);
}

#[test]
fn zero_steps_writes_the_initial_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset {
        clips: vec![clip("z", 12, 12)],
    };
    let cfg = tiny_cfg();
    let out = train(&cfg, &quick_train(0), &data, Some(dir.path())).unwrap();
    assert!(out.trace.is_empty());
    let saved = load_params(&dir.path().join(FINAL_CHECKPOINT)).unwrap();
    let init = init_params(&cfg, 11).unwrap();
    assert_eq!(saved.len(), init.len());
    for ((na, a), (nb, b)) in saved.iter().zip(init.iter()) {
        assert_eq!(na, nb);
        assert_eq!(a.data(), b.data());
    }
    let trace = std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    assert_eq!(trace, "step,loss\n");
}

#[test]
fn training_is_deterministic() {
    let data = Dataset {
        clips: vec![clip("d", 12, 12)],
    };
    let cfg = tiny_cfg();
    let dir = tempfile::tempdir().unwrap();
    let mut tc = quick_train(3);
    tc.checkpoint_every = 2;
    let a = train(&cfg, &tc, &data, Some(dir.path())).unwrap();
    let b = train(&cfg, &tc, &data, None).unwrap();
    assert_eq!(a.trace.len(), 3);
    assert_eq!(a.trace, b.trace);
    assert!(a.trace.iter().all(|l| l.is_finite() && *l > 0.0));
    assert!(checkpoint_path(dir.path(), 2).exists());
    let csv = std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    assert_eq!(csv, format_trace(&a.trace));
    let reloaded = load_model(&cfg, &dir.path().join(FINAL_CHECKPOINT)).unwrap();
    for ((_, x), (_, y)) in reloaded.params.iter().zip(a.model.params.iter()) {
        assert_eq!(x.data(), y.data());
    }
}

#[test]
fn huge_learning_rate_reports_the_step() {
    let data = Dataset {
        clips: vec![clip("n", 12, 12)],
    };
    let mut tc = quick_train(40);
    tc.lr = 1e30;
    let err = train(&tiny_cfg(), &tc, &data, None).unwrap_err();
    assert!(err.is_numerical(), "{err}");
}

#[test]
fn evaluate_reports() {
    let data = Dataset {
        clips: vec![clip("e0", 16, 14), clip("e1", 16, 14)],
    };
    let model = Model::init(tiny_cfg(), 1).unwrap();
    let empty = evaluate(&model, &data, &[]).unwrap();
    assert!(empty.clips.is_empty());
    assert_eq!((empty.avg_psnr_db, empty.avg_ssim), (0.0, 0.0));
    let expected_params: usize = model.params.iter().map(|(_, t)| t.numel()).sum();
    assert_eq!(empty.params, expected_params);

    let one = evaluate(
        &model,
        &Dataset {
            clips: vec![data.clips[0].clone()],
        },
        &[1.0],
    )
    .unwrap();
    assert_eq!(one.clips.len(), 1);
    assert_eq!(one.avg_psnr_db, one.clips[0].psnr_db);

    let base = BilinearBaseline {
        num_input_frames: 3,
    };
    let rep = evaluate(&base, &data, &[1.0, 2.0]).unwrap();
    let names: Vec<_> = rep
        .clips
        .iter()
        .map(|r| (r.name.as_str(), r.scale))
        .collect();
    assert_eq!(names, [("e0", 1.0), ("e0", 2.0), ("e1", 1.0), ("e1", 2.0)]);
    assert_eq!(rep.clips[0].psnr_db, PSNR_CAP_DB);
    assert_eq!(rep.params, 0);
    let json: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    assert_eq!(json["clips"].as_array().unwrap().len(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metrics_are_symmetric(sa in any::<u64>(), sb in any::<u64>(), w in 11usize..20, h in 11usize..20) {
        let (a, b) = (random_frame(sa, w, h), random_frame(sb, w, h));
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
    }

    #[test]
    fn charbonnier_is_at_least_eps(sa in any::<u64>(), sb in any::<u64>(), eps in 1e-6f64..1e-1) {
        let (a, b) = (random_frame(sa, 5, 4), random_frame(sb, 5, 4));
        let l = charbonnier(&a, &b, eps).unwrap();
        prop_assert!(l >= eps - 1e-15);
        let mean_abs = a.data().iter().zip(b.data()).map(|(&p, &q)| (p as f64 - q as f64).abs()).sum::<f64>() / 60.0;
        prop_assert!(l <= eps + mean_abs + 1e-12);
    }
}
