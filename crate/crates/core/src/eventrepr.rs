//! Network-facing event representations: the global moment-segment voxel
//! grid and the rasterized window of events around a query time.

use crate::datapipe::resize_plane_bilinear;
use crate::error::{Error, Result};
use crate::eventsim::EventStream;

/// Polarity-separated event counts, laid out `H × W × M × 2`
/// (channel 0 positive, channel 1 negative).
#[derive(Clone, Debug, PartialEq)]
pub struct EventVoxelGrid {
    pub height: usize,
    pub width: usize,
    pub segments: usize,
    pub t_start: u64,
    pub t_end: u64,
    data: Vec<f32>,
}

impl EventVoxelGrid {
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn index(&self, y: usize, x: usize, m: usize, p: usize) -> usize {
        ((y * self.width + x) * self.segments + m) * 2 + p
    }

    pub fn get(&self, y: usize, x: usize, segment: usize, channel: usize) -> f32 {
        self.data[self.index(y, x, segment, channel)]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    /// Channel-major `2K × H × W` slab for segments `[start, start + count)`,
    /// ordered (segment, polarity). Values are divided by `scale` when it is positive.
    pub fn segment_channels(&self, start: usize, count: usize, scale: f32) -> Result<Vec<f32>> {
        if count == 0 || start + count > self.segments {
            return Err(Error::Input(format!(
                "segment range {start}..{} outside grid of {}",
                start + count,
                self.segments
            )));
        }
        let hw = self.height * self.width;
        let inv = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        let mut out = vec![0.0f32; 2 * count * hw];
        for i in 0..hw {
            let (y, x) = (i / self.width, i % self.width);
            for k in 0..count {
                for p in 0..2 {
                    out[(2 * k + p) * hw + i] = self.get(y, x, start + k, p) * inv;
                }
            }
        }
        Ok(out)
    }
}

/// Temporal bin of timestamp `t` among `m` equal segments of `[t_start, t_end]`.
pub fn segment_of(t: u64, t_start: u64, t_end: u64, m: usize) -> usize {
    let rel = (t.saturating_sub(t_start)) as u128 * m as u128 / (t_end - t_start) as u128;
    (rel as usize).min(m - 1)
}

/// Bins a stream into `m` moment segments over its own time bounds.
pub fn voxelize(stream: &EventStream, m: usize) -> Result<EventVoxelGrid> {
    if m == 0 {
        return Err(Error::Input("voxel grid needs at least one segment".into()));
    }
    if stream.t_end() <= stream.t_start() {
        return Err(Error::Input(format!(
            "cannot voxelize a degenerate interval [{}, {}]",
            stream.t_start(),
            stream.t_end()
        )));
    }
    let mut grid = EventVoxelGrid {
        height: stream.height(),
        width: stream.width(),
        segments: m,
        t_start: stream.t_start(),
        t_end: stream.t_end(),
        data: vec![0.0; stream.height() * stream.width() * m * 2],
    };
    for e in stream.events() {
        let bin = segment_of(e.t, grid.t_start, grid.t_end, m);
        let ch = if e.p > 0 { 0 } else { 1 };
        let idx = grid.index(e.y as usize, e.x as usize, bin, ch);
        grid.data[idx] += 1.0;
    }
    Ok(grid)
}

/// Events with timestamps in the closed interval `[t − dt, t + dt]`.
pub fn select_window(stream: &EventStream, t: u64, dt: u64) -> Result<EventStream> {
    stream.time_slice(t.saturating_sub(dt), t.saturating_add(dt))
}

/// Polarity-separated counts resized to the output resolution, `2 × H' × W'`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventWindowImage {
    pub height: usize,
    pub width: usize,
    pub t_center: u64,
    pub half_width: u64,
    data: Vec<f32>,
}

impl EventWindowImage {
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        EventWindowImage {
            height,
            width,
            t_center: 0,
            half_width: 0,
            data: vec![0.0; 2 * width * height],
        }
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.data[(channel * self.height + y) * self.width + x]
    }
}

/// Accumulates counts at the sensor resolution, then bilinearly resizes each
/// polarity channel to `out_h × out_w`.
pub fn rasterize_window(
    window: &EventStream,
    out_h: usize,
    out_w: usize,
) -> Result<EventWindowImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Input(format!(
            "raster size {out_w}x{out_h} has a zero dimension"
        )));
    }
    let (w, h) = (window.width(), window.height());
    let mut counts = vec![vec![0.0f64; w * h]; 2];
    for e in window.events() {
        let ch = if e.p > 0 { 0 } else { 1 };
        counts[ch][e.y as usize * w + e.x as usize] += 1.0;
    }
    let mut data = Vec::with_capacity(2 * out_h * out_w);
    for plane in &counts {
        data.extend(
            resize_plane_bilinear(plane, w, h, out_w, out_h)
                .into_iter()
                .map(|v| v as f32),
        );
    }
    Ok(EventWindowImage {
        height: out_h,
        width: out_w,
        t_center: window.t_start() + (window.t_end() - window.t_start()) / 2,
        half_width: (window.t_end() - window.t_start()) / 2,
        data,
    })
}
