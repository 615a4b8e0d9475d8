use std::path::{Path, PathBuf};
use std::time::Instant;

use evsr::datapipe::dataset::{load_clip, read_clip_frames};
use evsr::datapipe::{build_dataset, load_dataset, ppm::write_ppm};
use evsr::diffcore::{finite_diff_check, REGISTERED_OPS};
use evsr::eventsim::{io::write_evt1, synthesize_events, EventSimConfig};
use evsr::model::{compute_features, export_features, ModelConfig, ModelInput};
use evsr::traineval::{
    self, evaluate, BilinearBaseline, EvalReport, Upscaler, FINAL_CHECKPOINT, TRACE_FILE,
};
use serde_json::json;

use crate::error::{CliError, Result};
use crate::kv::{self, Entry, RunConfig};
use crate::manifest::{manifest_path, write_atomic, RunManifest};
use crate::{DatasetArgs, EvalArgs, GradcheckArgs, InferArgs, SimArgs, SimulateArgs, TrainArgs};

/// Model configuration written next to training checkpoints.
pub const MODEL_CONFIG_FILE: &str = "model.cfg";

fn sim_config(a: &SimArgs) -> Result<EventSimConfig> {
    let cfg = EventSimConfig {
        theta: a.theta,
        noise_floor: a.noise_floor,
        refractory_us: a.refractory_us,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn sim_json(c: &EventSimConfig) -> serde_json::Value {
    json!({ "theta": c.theta, "noise_floor": c.noise_floor, "refractory_us": c.refractory_us })
}

fn finish(
    mut m: RunManifest,
    start: Instant,
    inputs: &[&Path],
    artifact: &Path,
    outputs: Vec<PathBuf>,
) -> Result<()> {
    m.inputs = inputs.iter().map(|p| p.to_path_buf()).collect();
    m.outputs = outputs;
    m.wall_s = start.elapsed().as_secs_f64();
    m.write(&manifest_path(artifact))
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = sim_config(&a.sim)?;
    let (clip, _) = read_clip_frames(&a.video_dir)?;
    let stream = synthesize_events(&clip, &cfg)?;
    write_evt1(&a.out, &stream)?;
    log::info!("{} events from {} frames", stream.len(), clip.len());
    let m = RunManifest::new("simulate", sim_json(&cfg), None);
    finish(m, start, &[&a.video_dir], &a.out, vec![a.out.clone()])
}

pub fn dataset(a: DatasetArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = sim_config(&a.sim)?;
    let text = std::fs::read_to_string(&a.specs)
        .map_err(|e| CliError::line(&a.specs, 0, e.to_string()))?;
    let specs = crate::specs::parse(&text, &a.specs, a.seed)?;
    if specs.is_empty() {
        return Err(CliError::line(&a.specs, 0, "no scenes listed"));
    }
    let data = build_dataset(&specs, &cfg, &a.out)?;
    let mut config = sim_json(&cfg);
    config["scenes"] = serde_json::to_value(&specs).map_err(|e| CliError::Usage(e.to_string()))?;
    let outputs = data
        .clips
        .iter()
        .map(|c| a.out.join(&c.clip.name))
        .collect();
    let m = RunManifest::new("dataset", config, Some(a.seed));
    finish(m, start, &[&a.specs], &a.out, outputs)
}

/// Flag values as config entries, applied after the file so they win.
fn flag_entries(a: &TrainArgs) -> Vec<Entry> {
    let mut out = Vec::new();
    let mut push = |key: &str, v: Option<String>| {
        if let Some(value) = v {
            out.push(Entry {
                key: key.into(),
                value,
                line: 0,
            });
        }
    };
    push("seed", a.seed.map(|v| v.to_string()));
    push("steps", a.steps.map(|v| v.to_string()));
    push("lr", a.lr.map(|v| v.to_string()));
    push("epochs", a.epochs.map(|v| v.to_string()));
    push("batch_size", a.batch_size.map(|v| v.to_string()));
    push("crop", a.crop.map(|v| v.to_string()));
    push("s_min", a.s_min.map(|v| v.to_string()));
    push("s_max", a.s_max.map(|v| v.to_string()));
    push("key_frame", a.key_frame.map(|v| v.to_string()));
    push(
        "checkpoint_every",
        a.checkpoint_every.map(|v| v.to_string()),
    );
    push("scales_per_step", a.scales_per_step.map(|v| v.to_string()));
    push("frames", a.frames.map(|v| v.to_string()));
    push("channels", a.channels.map(|v| v.to_string()));
    push("segments", a.segments.map(|v| v.to_string()));
    push("interpolation", a.interpolation.clone());
    push("decoder", a.decoder.clone());
    out
}

pub fn train(a: TrainArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    if let Some(path) = &a.config {
        cfg.apply(&kv::read(path)?, path)?;
    }
    cfg.apply(&flag_entries(&a), Path::new("<flags>"))?;
    cfg.model.validate()?;
    cfg.train.validate()?;
    let data = load_dataset(&a.data)?;
    std::fs::create_dir_all(&a.out).map_err(|e| evsr::Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    write_atomic(&a.out.join(MODEL_CONFIG_FILE), cfg.model_text().as_bytes())?;
    let outcome = traineval::train(&cfg.model, &cfg.train, &data, Some(&a.out))?;
    if let Some(last) = outcome.trace.last() {
        log::info!("{} steps, final loss {last:.6}", outcome.trace.len());
    }
    let config = json!({ "model": cfg.model, "train": cfg.train });
    let m = RunManifest::new("train", config, Some(cfg.train.seed));
    let outputs = vec![
        a.out.join(FINAL_CHECKPOINT),
        a.out.join(TRACE_FILE),
        a.out.join(MODEL_CONFIG_FILE),
    ];
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.config.as_deref());
    finish(m, start, &inputs, &a.out, outputs)
}

/// `--config` if given, else `model.cfg` beside the checkpoint, else defaults.
fn model_config(config: Option<&Path>, ckpt: Option<&Path>) -> Result<ModelConfig> {
    let sidecar = ckpt
        .and_then(Path::parent)
        .map(|d| d.join(MODEL_CONFIG_FILE))
        .filter(|p| p.exists());
    let mut cfg = RunConfig::default();
    if let Some(path) = config.map(Path::to_path_buf).or(sidecar) {
        cfg.apply(&kv::read(&path)?, &path)?;
    }
    cfg.model.validate()?;
    Ok(cfg.model)
}

pub fn parse_scales(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 1.0)
                .ok_or_else(|| CliError::Usage(format!("scale `{s}` is not a real number >= 1")))
        })
        .collect()
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let start = Instant::now();
    let scales = parse_scales(&a.scales)?;
    let data = load_dataset(&a.data)?;
    let cfg = model_config(a.config.as_deref(), a.ckpt.as_deref())?;
    let report: EvalReport = match &a.ckpt {
        Some(ckpt) => {
            let model = traineval::load_model(&cfg, ckpt)?;
            evaluate(&model, &data, &scales)?
        }
        None => {
            let base = BilinearBaseline {
                num_input_frames: cfg.num_input_frames,
            };
            evaluate(&base as &dyn Upscaler, &data, &scales)?
        }
    };
    let text = report.to_json()? + "\n";
    match &a.out {
        None => print!("{text}"),
        Some(out) => {
            write_atomic(out, text.as_bytes())?;
            let config = json!({ "model": cfg, "scales": scales, "baseline": a.baseline });
            let m = RunManifest::new("eval", config, None);
            let mut inputs = vec![a.data.as_path()];
            inputs.extend(a.ckpt.as_deref());
            finish(m, start, &inputs, out, vec![out.clone()])?;
        }
    }
    Ok(())
}

pub fn infer(a: InferArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = model_config(a.config.as_deref(), Some(&a.ckpt))?;
    let model = traineval::load_model(&cfg, &a.ckpt)?;
    let data = load_clip(&a.clip)?;
    let clip = &data.clip;
    let t = cfg.num_input_frames;
    if clip.len() < t {
        return Err(
            evsr::Error::Input(format!("clip has {} frames, model needs {t}", clip.len())).into(),
        );
    }
    let index = a.time_index.unwrap_or(t / 2);
    if index >= clip.len() {
        return Err(evsr::Error::Input(format!(
            "time index {index} outside clip of {} frames",
            clip.len()
        ))
        .into());
    }
    let first = index.saturating_sub(t / 2).min(clip.len() - t);
    let ts = clip.timestamps_us();
    let input = ModelInput::new(
        clip.frames()[first..first + t].to_vec(),
        ts[first..first + t].to_vec(),
        ts[1] - ts[0],
        data.events.clone(),
    )?;
    let frame = model.infer(&input, a.scale, ts[index])?;
    write_ppm(&a.out, &frame)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(path) = &a.dump_features {
        let (fst, ft) = compute_features(&input, a.scale, ts[index], &model.params, &cfg)?;
        export_features(&fst, &ft, path)?;
        outputs.push(path.clone());
    }
    let config =
        json!({ "model": cfg, "scale": a.scale, "time_index": index, "window_start": first });
    let m = RunManifest::new("infer", config, None);
    finish(m, start, &[&a.ckpt, &a.clip], &a.out, outputs)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let ops: Vec<&str> = if a.ops.is_empty() {
        REGISTERED_OPS.to_vec()
    } else {
        a.ops.iter().map(String::as_str).collect()
    };
    if let Some(bad) = ops.iter().find(|op| !REGISTERED_OPS.contains(op)) {
        return Err(CliError::Usage(format!(
            "unknown op `{bad}` (registered: {})",
            REGISTERED_OPS.join(", ")
        )));
    }
    if !(a.tol >= 0.0) {
        return Err(CliError::Usage(format!(
            "tolerance must be >= 0, got {}",
            a.tol
        )));
    }
    println!(
        "{:<18} {:>5} {:>8} {:>12}  result",
        "op", "seed", "checked", "max_rel_err"
    );
    let (mut failed, mut total) = (0, 0);
    for op in &ops {
        for seed in 0..a.seeds {
            let r = finite_diff_check(op, None, seed, a.tol)?;
            total += 1;
            failed += usize::from(!r.pass);
            let verdict = if r.pass { "PASS" } else { "FAIL" };
            println!(
                "{:<18} {:>5} {:>8} {:>12.3e}  {verdict}",
                r.op, r.seed, r.checked, r.max_rel_err
            );
        }
    }
    if failed > 0 {
        return Err(CliError::GradCheck(failed, total));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_parse_as_reals() {
        assert_eq!(parse_scales("2,4,6.5").unwrap(), [2.0, 4.0, 6.5]);
        assert_eq!(parse_scales(" 1.5 , 8 ").unwrap(), [1.5, 8.0]);
        assert!(parse_scales("").unwrap().is_empty());
        assert!(parse_scales("2,x").is_err());
        assert!(parse_scales("0.5").is_err());
    }
}
