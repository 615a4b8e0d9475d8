//! The three branches and the end-to-end forward pass.

use std::collections::HashMap;
use std::path::Path;

use super::blocks::{conv, conv_stack, decoder, hpb, LayerVars};
use super::config::ModelConfig;
use super::params::{check_params, param_specs};
use crate::datapipe::{round_dim, Frame, CHANNELS};
use crate::diffcore::attention::{attention_param_shapes, window_attention, AttentionWeights};
use crate::diffcore::checkpoint::write_tensors;
use crate::diffcore::{Graph, ParamStore, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::eventrepr::{
    rasterize_window, select_window, voxelize, EventVoxelGrid, EventWindowImage,
};
use crate::eventsim::{Event, EventStream};

/// Signed time interval in microseconds; may start before zero because the
/// input span extends half a frame interval beyond the first and last frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeSpan {
    pub start: i64,
    pub end: i64,
}

impl TimeSpan {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if end <= start {
            return Err(Error::Input(format!(
                "degenerate time span [{start}, {end}]"
            )));
        }
        Ok(TimeSpan { start, end })
    }

    pub fn duration(&self) -> u64 {
        (self.end - self.start) as u64
    }

    pub fn contains(&self, t: u64) -> bool {
        let t = t as i64;
        t >= self.start && t <= self.end
    }

    pub fn normalize(&self, t: u64) -> f64 {
        (t as i64 - self.start) as f64 / (self.end - self.start) as f64
    }
}

/// `H×W×T×C` feature volume; frame `i` sits at normalized time `(i + 0.5)/T`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialTemporalFeature {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub span: TimeSpan,
    pub frame_times: Vec<f64>,
}

impl SpatialTemporalFeature {
    pub fn shape(&self) -> [usize; 4] {
        [self.height, self.width, self.frames, self.channels]
    }
}

/// `H'×W'×C` feature map at the output resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalFeature {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl TemporalFeature {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        TemporalFeature {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }
}

/// Row-major `(x, y, t)` query coordinates, all in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateGrid {
    pub height: usize,
    pub width: usize,
    pub coords: Vec<[f64; 3]>,
}

/// Output resolution for scale `s`, rounding half up.
pub fn output_dims(s: f64, height: usize, width: usize) -> (usize, usize) {
    (round_dim(s * height as f64), round_dim(s * width as f64))
}

pub fn make_coordinate_grid(
    s: f64,
    t: u64,
    height: usize,
    width: usize,
    span: TimeSpan,
) -> Result<CoordinateGrid> {
    if !(s >= 1.0) || !s.is_finite() {
        return Err(Error::Input(format!(
            "scale must be a finite value >= 1, got {s}"
        )));
    }
    let span = TimeSpan::new(span.start, span.end)?;
    if !span.contains(t) {
        return Err(Error::Input(format!(
            "query time {t} outside [{}, {}]",
            span.start, span.end
        )));
    }
    let (h, w) = output_dims(s, height, width);
    let tq = span.normalize(t);
    let coords = (0..h)
        .flat_map(|i| {
            (0..w).map(move |j| [(j as f64 + 0.5) / w as f64, (i as f64 + 0.5) / h as f64, tq])
        })
        .collect();
    Ok(CoordinateGrid {
        height: h,
        width: w,
        coords,
    })
}

/// Graph handles for the spatial-temporal fusion branch.
#[derive(Clone, Debug)]
pub struct StfVars {
    pub stem_frame: LayerVars,
    pub stem_event: LayerVars,
    pub shallow_frame: [LayerVars; 2],
    pub shallow_event: [LayerVars; 2],
    pub shallow_fusion: AttentionWeights,
    pub deep_frame: [LayerVars; 2],
    pub deep_event: [LayerVars; 2],
    pub deep_fusion: AttentionWeights,
}

#[derive(Clone, Debug)]
pub struct ModelVars {
    pub stf: StfVars,
    pub tf: [LayerVars; 3],
    pub decoder: [LayerVars; 3],
}

impl ModelVars {
    /// Maps vars given in [`param_specs`] order onto the branch structure.
    pub fn from_vars(cfg: &ModelConfig, vars: &[Var]) -> Result<Self> {
        let specs = param_specs(cfg);
        if specs.len() != vars.len() {
            return Err(Error::dim(
                "ModelVars",
                "parameter count",
                specs.len(),
                vars.len(),
            ));
        }
        let map: HashMap<&str, Var> = specs
            .iter()
            .map(|s| s.name.as_str())
            .zip(vars.iter().copied())
            .collect();
        let layer = |p: &str| LayerVars {
            weight: map[format!("{p}.weight").as_str()],
            bias: map[format!("{p}.bias").as_str()],
        };
        let pair = |stage: &str| {
            [
                layer(&format!("stf.{stage}.conv1")),
                layer(&format!("stf.{stage}.conv2")),
            ]
        };
        let attn = |p: &str| {
            let v: Vec<Var> = attention_param_shapes(1, 1)
                .iter()
                .map(|(suffix, _)| map[format!("{p}.{suffix}").as_str()])
                .collect();
            AttentionWeights::from_slice(&v)
        };
        Ok(ModelVars {
            stf: StfVars {
                stem_frame: layer("stf.stem.frame"),
                stem_event: layer("stf.stem.event"),
                shallow_frame: pair("shallow_frame"),
                shallow_event: pair("shallow_event"),
                shallow_fusion: attn("stf.shallow_fusion"),
                deep_frame: pair("deep_frame"),
                deep_event: pair("deep_event"),
                deep_fusion: attn("stf.deep_fusion"),
            },
            tf: [
                layer("tf.body.conv1"),
                layer("tf.body.conv2"),
                layer("tf.body.conv3"),
            ],
            decoder: [
                layer("stir.decoder.layer1"),
                layer("stir.decoder.layer2"),
                layer("stir.decoder.layer3"),
            ],
        })
    }
}

/// Adds every parameter to the graph as a leaf and returns the handles.
pub fn bind_params<T: Real>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    params: &ParamStore<T>,
) -> Result<ModelVars> {
    bind_leaves(g, cfg, params).map(|(v, _)| v)
}

/// Like [`bind_params`], also returning the leaves in [`param_specs`] order.
pub fn bind_leaves<T: Real>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    params: &ParamStore<T>,
) -> Result<(ModelVars, Vec<Var>)> {
    check_params(cfg, params)?;
    let vars: Vec<Var> = param_specs(cfg)
        .iter()
        .map(|s| g.leaf(params.get(&s.name).expect("checked above")))
        .collect();
    Ok((ModelVars::from_vars(cfg, &vars)?, vars))
}

fn constant<T: Real>(g: &mut Graph<T>, shape: &[usize], data: &[f32]) -> Result<Var> {
    g.constant(shape, data.iter().map(|&v| T::from_f64(v as f64)).collect())
}

fn to_f32<T: Real>(v: &[T]) -> Vec<f32> {
    v.iter().map(|x| x.as_f64() as f32).collect()
}

/// Outputs of the shallow stage for one time step.
#[derive(Clone, Copy, Debug)]
pub struct ShallowOut {
    /// Attention-fused `2C×H×W` map before the channel split.
    pub fused: Var,
    pub frame: Var,
    pub event: Var,
}

/// HPB per stream, concatenation, windowed attention, channel split and a
/// residual add back onto each stream.
pub fn shallow_stage<T: Real>(
    g: &mut Graph<T>,
    f0: Var,
    e0: Var,
    v: &StfVars,
    cfg: &ModelConfig,
) -> Result<ShallowOut> {
    let c = g.shape(f0)[0];
    let fl = hpb(g, f0, &v.shallow_frame[0], &v.shallow_frame[1])?;
    let el = hpb(g, e0, &v.shallow_event[0], &v.shallow_event[1])?;
    let cat = g.concat(&[fl, el], 0)?;
    let fused = window_attention(g, cat, &v.shallow_fusion, cfg.attn_heads, cfg.attn_window)?;
    let fs = g.slice(fused, 0, 0, c)?;
    let es = g.slice(fused, 0, c, c)?;
    Ok(ShallowOut {
        fused,
        frame: g.add(fl, fs)?,
        event: g.add(el, es)?,
    })
}

/// One time step of the fusion branch: `3×H×W` frame and `2K×H×W` event
/// group to a `C×H×W` map.
pub fn stf_step<T: Real>(
    g: &mut Graph<T>,
    frame: Var,
    events: Var,
    v: &StfVars,
    cfg: &ModelConfig,
) -> Result<(Var, ShallowOut)> {
    let f0 = conv(g, frame, &v.stem_frame)?;
    let e0 = conv(g, events, &v.stem_event)?;
    let sh = shallow_stage(g, f0, e0, v, cfg)?;
    let fd = hpb(g, sh.frame, &v.deep_frame[0], &v.deep_frame[1])?;
    let ed = hpb(g, sh.event, &v.deep_event[0], &v.deep_event[1])?;
    let sum = g.add(fd, ed)?;
    let out = window_attention(g, sum, &v.deep_fusion, cfg.attn_heads, cfg.attn_window)?;
    Ok((out, sh))
}

/// Runs the shared step per frame and stacks the results into `H×W×T×C`.
pub fn stf_graph<T: Real>(
    g: &mut Graph<T>,
    frames: &[Var],
    event_groups: &[Var],
    v: &StfVars,
    cfg: &ModelConfig,
) -> Result<(Var, Vec<ShallowOut>)> {
    if frames.len() != cfg.num_input_frames || event_groups.len() != frames.len() {
        return Err(Error::dim(
            "stf_forward",
            "frame count",
            cfg.num_input_frames,
            frames.len(),
        ));
    }
    let mut maps = Vec::with_capacity(frames.len());
    let mut shallow = Vec::with_capacity(frames.len());
    for (&f, &e) in frames.iter().zip(event_groups) {
        let (out, sh) = stf_step(g, f, e, v, cfg)?;
        maps.push(out);
        shallow.push(sh);
    }
    Ok((frame_volume(g, &maps)?, shallow))
}

/// Three convolutions over the `2×H'×W'` window image; result is `H'×W'×C`.
pub fn tf_graph<T: Real>(g: &mut Graph<T>, window: Var, layers: &[LayerVars; 3]) -> Result<Var> {
    let h = conv_stack(g, window, layers)?;
    g.permute(h, &[1, 2, 0])
}

/// Samples `fst` at the grid, adds `ft` and decodes to `3×H'×W'` (unclamped).
///
/// With `base` (an `H×W×T×3` frame volume), the decoder output is added to
/// the volume sampled at the same grid.
pub fn stir_graph<T: Real>(
    g: &mut Graph<T>,
    fst: Var,
    ft: Var,
    base: Option<Var>,
    grid: &CoordinateGrid,
    layers: &[LayerVars; 3],
    cfg: &ModelConfig,
) -> Result<Var> {
    let c = g.shape(fst)[3];
    let expected = [grid.height, grid.width, c];
    if g.shape(ft) != expected {
        return Err(Error::Input(format!(
            "temporal feature shape {:?} does not match sampled feature shape {:?}",
            g.shape(ft),
            expected
        )));
    }
    let sampled = g.grid_sample_3d(fst, &grid.coords, cfg.interpolation_mode)?;
    let sampled = g.reshape(sampled, &expected)?;
    let sum = g.add(sampled, ft)?;
    let x = g.permute(sum, &[2, 0, 1])?;
    let out = decoder(g, x, layers, cfg.decoder_kind)?;
    match base {
        None => Ok(out),
        Some(volume) => {
            let b = g.grid_sample_3d(volume, &grid.coords, cfg.interpolation_mode)?;
            let b = g.reshape(b, &[grid.height, grid.width, CHANNELS])?;
            let b = g.permute(b, &[2, 0, 1])?;
            g.add(out, b)
        }
    }
}

/// Stacks `C×H×W` maps along a new temporal axis into `H×W×T×C`.
pub fn frame_volume<T: Real>(g: &mut Graph<T>, frames: &[Var]) -> Result<Var> {
    let mut items = Vec::with_capacity(frames.len());
    for &f in frames {
        let s = g.shape(f).to_vec();
        items.push(g.reshape(f, &[1, s[0], s[1], s[2]])?);
    }
    let stacked = g.concat(&items, 0)?;
    g.permute(stacked, &[2, 3, 0, 1])
}

/// Frames, their timestamps and the events covering them, all at the input
/// resolution. Frames are assumed uniformly spaced.
#[derive(Clone, Debug)]
pub struct ModelInput {
    pub frames: Vec<Frame>,
    pub timestamps: Vec<u64>,
    pub frame_interval_us: u64,
    pub events: EventStream,
}

impl ModelInput {
    pub fn new(
        frames: Vec<Frame>,
        timestamps: Vec<u64>,
        frame_interval_us: u64,
        events: EventStream,
    ) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Input("model input has no frames".into()))?;
        if timestamps.len() != frames.len() {
            return Err(Error::dim(
                "ModelInput",
                "timestamps",
                frames.len(),
                timestamps.len(),
            ));
        }
        if frames.iter().any(|f| !f.same_dims(first)) {
            return Err(Error::Input("model input frames differ in size".into()));
        }
        if events.width() != first.width() || events.height() != first.height() {
            return Err(Error::Input(format!(
                "events are {}x{} but frames are {}x{}",
                events.width(),
                events.height(),
                first.width(),
                first.height()
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input(
                "frame timestamps must strictly increase".into(),
            ));
        }
        if frame_interval_us == 0 {
            return Err(Error::Input("frame interval must be > 0".into()));
        }
        Ok(ModelInput {
            frames,
            timestamps,
            frame_interval_us,
            events,
        })
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    /// First to last frame, widened by half an interval on both sides.
    pub fn span(&self) -> TimeSpan {
        let half = (self.frame_interval_us / 2) as i64;
        TimeSpan {
            start: self.timestamps[0] as i64 - half,
            end: *self.timestamps.last().expect("non-empty") as i64 + half,
        }
    }

    /// Half-width of the near-timestamp event window.
    pub fn window_half_width(&self) -> u64 {
        self.frame_interval_us / 2
    }

    /// Events inside the span, shifted so the span starts at zero.
    pub fn span_events(&self) -> Result<EventStream> {
        let span = self.span();
        let events = self
            .events
            .events()
            .iter()
            .filter(|e| span.contains(e.t))
            .map(|e| Event::new((e.t as i64 - span.start) as u64, e.x, e.y, e.p))
            .collect();
        EventStream::new(self.width(), self.height(), 0, span.duration(), events)
    }
}

fn normalized(data: &[f32]) -> Vec<f32> {
    let max = data.iter().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        data.iter().map(|v| v / max).collect()
    } else {
        data.to_vec()
    }
}

/// Per-frame event slabs `2K×H×W`, scaled by the grid maximum.
pub fn event_groups(voxels: &EventVoxelGrid, cfg: &ModelConfig) -> Result<Vec<Vec<f32>>> {
    if voxels.segments != cfg.segments {
        return Err(Error::dim(
            "event_groups",
            "segments",
            cfg.segments,
            voxels.segments,
        ));
    }
    let max = voxels.max();
    (0..cfg.num_input_frames)
        .map(|i| voxels.segment_channels(cfg.group_start(i), cfg.group_size(), max))
        .collect()
}

/// Network-ready tensors for one query.
#[derive(Clone, Debug)]
pub struct PreparedInput {
    pub height: usize,
    pub width: usize,
    pub frames: Vec<Vec<f32>>,
    pub event_groups: Vec<Vec<f32>>,
    /// `2×H'×W'` window counts scaled by their maximum.
    pub window: Vec<f32>,
    pub grid: CoordinateGrid,
    pub span: TimeSpan,
}

impl PreparedInput {
    pub fn out_dims(&self) -> (usize, usize) {
        (self.grid.height, self.grid.width)
    }
}

pub fn prepare_input(
    input: &ModelInput,
    s: f64,
    t: u64,
    cfg: &ModelConfig,
) -> Result<PreparedInput> {
    cfg.validate()?;
    if input.frames.len() != cfg.num_input_frames {
        return Err(Error::Config(format!(
            "model expects {} input frames, got {}",
            cfg.num_input_frames,
            input.frames.len()
        )));
    }
    if s > cfg.s_max {
        log::warn!("scale {s} exceeds s_max {}; extrapolating", cfg.s_max);
    }
    let span = input.span();
    let grid = make_coordinate_grid(s, t, input.height(), input.width(), span)?;
    let voxels = voxelize(&input.span_events()?, cfg.segments)?;
    let window = select_window(&input.events, t, input.window_half_width())?;
    let img = rasterize_window(&window, grid.height, grid.width)?;
    Ok(PreparedInput {
        height: input.height(),
        width: input.width(),
        frames: input.frames.iter().map(|f| f.data().to_vec()).collect(),
        event_groups: event_groups(&voxels, cfg)?,
        window: normalized(img.data()),
        grid,
        span,
    })
}

/// Graph handles produced by [`forward_graph`].
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub fst: Var,
    pub ft: Var,
    /// Unclamped `3×H'×W'` output.
    pub sr: Var,
    pub shallow: Vec<ShallowOut>,
}

pub fn forward_graph<T: Real>(
    g: &mut Graph<T>,
    vars: &ModelVars,
    prep: &PreparedInput,
    cfg: &ModelConfig,
) -> Result<ForwardVars> {
    let (h, w) = (prep.height, prep.width);
    let k2 = 2 * cfg.group_size();
    let frames = prep
        .frames
        .iter()
        .map(|f| constant(g, &[CHANNELS, h, w], f))
        .collect::<Result<Vec<_>>>()?;
    let groups = prep
        .event_groups
        .iter()
        .map(|e| constant(g, &[k2, h, w], e))
        .collect::<Result<Vec<_>>>()?;
    let (fst, shallow) = stf_graph(g, &frames, &groups, &vars.stf, cfg)?;
    let (oh, ow) = prep.out_dims();
    let window = constant(g, &[2, oh, ow], &prep.window)?;
    let ft = tf_graph(g, window, &vars.tf)?;
    let base = if cfg.image_residual {
        Some(frame_volume(g, &frames)?)
    } else {
        None
    };
    let sr = stir_graph(g, fst, ft, base, &prep.grid, &vars.decoder, cfg)?;
    Ok(ForwardVars {
        fst,
        ft,
        sr,
        shallow,
    })
}

fn frame_times(t: usize) -> Vec<f64> {
    (0..t).map(|i| (i as f64 + 0.5) / t as f64).collect()
}

/// Fusion branch over `T` frames and a voxel grid spanning them.
pub fn stf_forward(
    frames: &[Frame],
    voxels: &EventVoxelGrid,
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
) -> Result<SpatialTemporalFeature> {
    cfg.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::Input("no frames".into()))?;
    let (h, w) = (first.height(), first.width());
    if frames.iter().any(|f| !f.same_dims(first)) || voxels.height != h || voxels.width != w {
        return Err(Error::Input("frames and voxel grid must share H×W".into()));
    }
    let groups = event_groups(voxels, cfg)?;
    let mut g = Graph::<f32>::new();
    let vars = bind_params(&mut g, cfg, params)?;
    let fvars = frames
        .iter()
        .map(|f| constant(&mut g, &[CHANNELS, h, w], f.data()))
        .collect::<Result<Vec<_>>>()?;
    let evars = groups
        .iter()
        .map(|e| constant(&mut g, &[2 * cfg.group_size(), h, w], e))
        .collect::<Result<Vec<_>>>()?;
    let (fst, _) = stf_graph(&mut g, &fvars, &evars, &vars.stf, cfg)?;
    Ok(SpatialTemporalFeature {
        height: h,
        width: w,
        frames: frames.len(),
        channels: cfg.channels,
        data: to_f32(g.value(fst)),
        span: TimeSpan::new(voxels.t_start as i64, voxels.t_end as i64)?,
        frame_times: frame_times(frames.len()),
    })
}

/// Temporal filter branch over an already resized window image.
pub fn tf_forward(
    img: &EventWindowImage,
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
) -> Result<TemporalFeature> {
    let mut g = Graph::<f32>::new();
    let vars = bind_params(&mut g, cfg, params)?;
    let x = constant(&mut g, &[2, img.height, img.width], img.data())?;
    let ft = tf_graph(&mut g, x, &vars.tf)?;
    Ok(TemporalFeature {
        height: img.height,
        width: img.width,
        channels: cfg.channels,
        data: to_f32(g.value(ft)),
    })
}

fn frame_from_output<T: Real>(g: &Graph<T>, sr: Var) -> Result<Frame> {
    let s = g.shape(sr);
    let (h, w) = (s[1], s[2]);
    Frame::new(w, h, to_f32(g.value(sr)))
}

/// Decodes an output frame from the two feature tensors alone (no image
/// residual); values are clamped to `[0, 1]`.
pub fn stir_forward(
    fst: &SpatialTemporalFeature,
    ft: &TemporalFeature,
    grid: &CoordinateGrid,
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
) -> Result<Frame> {
    let mut g = Graph::<f32>::new();
    let vars = bind_params(&mut g, cfg, params)?;
    let f = constant(&mut g, &fst.shape(), &fst.data)?;
    let t = constant(&mut g, &[ft.height, ft.width, ft.channels], &ft.data)?;
    let sr = stir_graph(&mut g, f, t, None, grid, &vars.decoder, cfg)?;
    frame_from_output(&g, sr)
}

/// Super-resolved frame at scale `s` and time `t`, clamped to `[0, 1]`.
pub fn model_forward(
    input: &ModelInput,
    s: f64,
    t: u64,
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
) -> Result<Frame> {
    let prep = prepare_input(input, s, t, cfg)?;
    let mut g = Graph::<f32>::new();
    let vars = bind_params(&mut g, cfg, params)?;
    let out = forward_graph(&mut g, &vars, &prep, cfg)?;
    frame_from_output(&g, out.sr)
}

/// Both feature tensors of one query, for offline inspection.
pub fn compute_features(
    input: &ModelInput,
    s: f64,
    t: u64,
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
) -> Result<(SpatialTemporalFeature, TemporalFeature)> {
    let prep = prepare_input(input, s, t, cfg)?;
    let mut g = Graph::<f32>::new();
    let vars = bind_params(&mut g, cfg, params)?;
    let out = forward_graph(&mut g, &vars, &prep, cfg)?;
    let (oh, ow) = prep.out_dims();
    Ok((
        SpatialTemporalFeature {
            height: prep.height,
            width: prep.width,
            frames: cfg.num_input_frames,
            channels: cfg.channels,
            data: to_f32(g.value(out.fst)),
            span: prep.span,
            frame_times: frame_times(cfg.num_input_frames),
        },
        TemporalFeature {
            height: oh,
            width: ow,
            channels: cfg.channels,
            data: to_f32(g.value(out.ft)),
        },
    ))
}

/// Writes `fst` (`H×W×T×C`) and `ft` (`H'×W'×C`) in the checkpoint format.
pub fn export_features(
    fst: &SpatialTemporalFeature,
    ft: &TemporalFeature,
    path: &Path,
) -> Result<()> {
    let a = Tensor::new(&fst.shape(), fst.data.clone())?;
    let b = Tensor::new(&[ft.height, ft.width, ft.channels], ft.data.clone())?;
    write_tensors(path, [("features.stf", &a), ("features.tf", &b)])
}
