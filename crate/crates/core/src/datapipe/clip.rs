use std::f64::consts::TAU;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::{Frame, CHANNELS};
use crate::error::{Error, Result};

pub const DEFAULT_FRAME_INTERVAL_US: u64 = 10_000;

/// Ordered frames with strictly increasing microsecond timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    pub name: String,
    frames: Vec<Frame>,
    timestamps_us: Vec<u64>,
}

impl VideoClip {
    pub fn new(
        name: impl Into<String>,
        frames: Vec<Frame>,
        timestamps_us: Vec<u64>,
    ) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::Input(format!(
                "a clip needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if frames.len() != timestamps_us.len() {
            return Err(Error::dim(
                "clip",
                "timestamps",
                frames.len(),
                timestamps_us.len(),
            ));
        }
        if let Some(i) = timestamps_us.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Input(format!(
                "timestamps must strictly increase: {} then {} at frame {}",
                timestamps_us[i],
                timestamps_us[i + 1],
                i + 1
            )));
        }
        if let Some(i) = frames.iter().position(|f| !f.same_dims(&frames[0])) {
            return Err(Error::Input(format!(
                "frame {i} is {}x{}, expected {}x{}",
                frames[i].width(),
                frames[i].height(),
                frames[0].width(),
                frames[0].height()
            )));
        }
        Ok(VideoClip {
            name: name.into(),
            frames,
            timestamps_us,
        })
    }

    /// Frames spaced `interval_us` apart starting at `t0`.
    pub fn uniform(
        name: impl Into<String>,
        frames: Vec<Frame>,
        t0: u64,
        interval_us: u64,
    ) -> Result<Self> {
        let ts = (0..frames.len() as u64)
            .map(|k| t0 + k * interval_us)
            .collect();
        Self::new(name, frames, ts)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn timestamps_us(&self) -> &[u64] {
        &self.timestamps_us
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn t_start(&self) -> u64 {
        self.timestamps_us[0]
    }

    pub fn t_end(&self) -> u64 {
        *self.timestamps_us.last().unwrap()
    }

    pub fn map_frames(&self, f: impl Fn(&Frame) -> Result<Frame>) -> Result<VideoClip> {
        let frames = self.frames.iter().map(f).collect::<Result<_>>()?;
        VideoClip::new(self.name.clone(), frames, self.timestamps_us.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Gradient,
    Checkerboard,
    GaussianBlobs,
    TextureNoise,
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(Pattern::Gradient),
            "checkerboard" => Ok(Pattern::Checkerboard),
            "gaussian-blobs" => Ok(Pattern::GaussianBlobs),
            "texture-noise" => Ok(Pattern::TextureNoise),
            other => Err(Error::Usage(format!(
                "unknown pattern `{other}` (expected gradient, checkerboard, gaussian-blobs, texture-noise)"
            ))),
        }
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pattern::Gradient => "gradient",
            Pattern::Checkerboard => "checkerboard",
            Pattern::GaussianBlobs => "gaussian-blobs",
            Pattern::TextureNoise => "texture-noise",
        })
    }
}

/// Description of a synthetic translating-pattern scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub pattern: Pattern,
    /// Pixels per frame.
    pub velocity: (f64, f64),
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub frame_interval_us: u64,
}

impl SceneSpec {
    pub fn new(name: impl Into<String>, pattern: Pattern, width: usize, height: usize) -> Self {
        SceneSpec {
            name: name.into(),
            pattern,
            velocity: (1.0, 0.5),
            frame_count: 5,
            width,
            height,
            seed: 0,
            frame_interval_us: DEFAULT_FRAME_INTERVAL_US,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_count < 2 {
            return Err(Error::Input(format!(
                "scene `{}`: frame_count must be >= 2",
                self.name
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Input(format!(
                "scene `{}`: dims must be >= 1",
                self.name
            )));
        }
        if self.frame_interval_us == 0 {
            return Err(Error::Input(format!(
                "scene `{}`: frame interval must be > 0",
                self.name
            )));
        }
        if !(self.velocity.0.is_finite() && self.velocity.1.is_finite()) {
            return Err(Error::Input(format!(
                "scene `{}`: velocity must be finite",
                self.name
            )));
        }
        Ok(())
    }
}

fn periodic_delta(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Renders the periodic base image of a pattern, planar RGB in `[0.05, 0.95]`.
fn render_base(spec: &SceneSpec) -> Vec<f64> {
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    fn color(rng: &mut ChaCha8Rng) -> [f64; 3] {
        [rng.gen(), rng.gen(), rng.gen()]
    }
    let mut out = vec![0.0; CHANNELS * w * h];
    let mut put = |c: usize, y: usize, x: usize, v: f64| {
        out[(c * h + y) * w + x] = 0.05 + 0.9 * v.clamp(0.0, 1.0)
    };
    match spec.pattern {
        Pattern::Gradient => {
            let phase: [f64; 3] = color(&mut rng);
            for y in 0..h {
                for x in 0..w {
                    let u = (x as f64 + 0.5) / w as f64;
                    let v = (y as f64 + 0.5) / h as f64;
                    put(0, y, x, (u + phase[0]).fract());
                    put(1, y, x, (v + phase[1]).fract());
                    put(2, y, x, (0.5 * (u + v) + phase[2]).fract());
                }
            }
        }
        Pattern::Checkerboard => {
            let cell = (w.min(h) / 8).max(2);
            let a = color(&mut rng);
            let b = color(&mut rng).map(|v| 1.0 - v);
            for y in 0..h {
                for x in 0..w {
                    let pick = if (x / cell + y / cell) % 2 == 0 { a } else { b };
                    for (c, v) in pick.iter().enumerate() {
                        put(c, y, x, *v);
                    }
                }
            }
        }
        Pattern::GaussianBlobs => {
            let n = 6 + rng.gen_range(0..5);
            let scale = w.min(h) as f64;
            let blobs: Vec<_> = (0..n)
                .map(|_| {
                    let cx = rng.gen_range(0.0..w as f64);
                    let cy = rng.gen_range(0.0..h as f64);
                    let sigma = rng.gen_range(0.05..0.15) * scale;
                    let amp = color(&mut rng).map(|v| v - 0.5);
                    (cx, cy, sigma, amp)
                })
                .collect();
            for y in 0..h {
                for x in 0..w {
                    let mut acc = [0.5f64; 3];
                    for &(cx, cy, s, amp) in &blobs {
                        let dx = periodic_delta(x as f64 + 0.5, cx, w as f64);
                        let dy = periodic_delta(y as f64 + 0.5, cy, h as f64);
                        let g = (-(dx * dx + dy * dy) / (2.0 * s * s)).exp();
                        for c in 0..3 {
                            acc[c] += amp[c] * g;
                        }
                    }
                    for (c, v) in acc.iter().enumerate() {
                        put(c, y, x, *v);
                    }
                }
            }
        }
        Pattern::TextureNoise => {
            // Integer frequencies keep the texture periodic over the frame.
            let waves: Vec<Vec<(f64, f64, f64, f64)>> = (0..CHANNELS)
                .map(|_| {
                    (0..12)
                        .map(|_| {
                            let fx = rng.gen_range(-6i32..=6) as f64;
                            let fy = rng.gen_range(-6i32..=6) as f64;
                            let amp =
                                rng.gen_range(0.2..1.0) / (1.0 + 0.15 * (fx.abs() + fy.abs()));
                            (fx, fy, amp, rng.gen_range(0.0..TAU))
                        })
                        .collect()
                })
                .collect();
            for (c, ws) in waves.iter().enumerate() {
                let norm: f64 = ws.iter().map(|w| w.2).sum();
                for y in 0..h {
                    for x in 0..w {
                        let u = x as f64 / w as f64;
                        let v = y as f64 / h as f64;
                        let s: f64 = ws
                            .iter()
                            .map(|&(fx, fy, a, p)| a * (TAU * (fx * u + fy * v) + p).sin())
                            .sum();
                        put(c, y, x, 0.5 + 0.5 * s / norm);
                    }
                }
            }
        }
    }
    out
}

/// Bilinear sample of a periodic plane at continuous pixel coordinates.
fn sample_wrapped(plane: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let xf = x.rem_euclid(w as f64);
    let yf = y.rem_euclid(h as f64);
    let x0 = (xf.floor() as usize) % w;
    let y0 = (yf.floor() as usize) % h;
    let (fx, fy) = (xf - xf.floor(), yf - yf.floor());
    let (x1, y1) = ((x0 + 1) % w, (y0 + 1) % h);
    let at = |yy: usize, xx: usize| plane[yy * w + xx];
    let top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
    let bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
    top + fy * (bottom - top)
}

/// Renders `spec.frame_count` frames of the pattern translated by the
/// velocity each frame, wrapping periodically.
pub fn generate_synthetic_clip(spec: &SceneSpec) -> Result<VideoClip> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let base = render_base(spec);
    let frames = (0..spec.frame_count)
        .map(|k| {
            let (sx, sy) = (spec.velocity.0 * k as f64, spec.velocity.1 * k as f64);
            let mut data = Vec::with_capacity(CHANNELS * w * h);
            for c in 0..CHANNELS {
                let plane = &base[c * w * h..(c + 1) * w * h];
                for y in 0..h {
                    for x in 0..w {
                        data.push(sample_wrapped(plane, w, h, x as f64 - sx, y as f64 - sy) as f32);
                    }
                }
            }
            Frame::new(w, h, data)
        })
        .collect::<Result<Vec<_>>>()?;
    VideoClip::uniform(spec.name.clone(), frames, 0, spec.frame_interval_us)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(pattern: Pattern) -> SceneSpec {
        SceneSpec {
            seed: 11,
            ..SceneSpec::new("s", pattern, 16, 12)
        }
    }

    #[test]
    fn zero_motion_gives_identical_frames() {
        let s = SceneSpec {
            velocity: (0.0, 0.0),
            ..spec(Pattern::TextureNoise)
        };
        let clip = generate_synthetic_clip(&s).unwrap();
        assert!(clip.frames().iter().all(|f| f == &clip.frames()[0]));
    }

    #[test]
    fn full_period_motion_is_identity() {
        let s = SceneSpec {
            velocity: (16.0, 0.0),
            ..spec(Pattern::GaussianBlobs)
        };
        let clip = generate_synthetic_clip(&s).unwrap();
        assert!(clip.frames().windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn deterministic_per_seed() {
        for p in [
            Pattern::Gradient,
            Pattern::Checkerboard,
            Pattern::GaussianBlobs,
            Pattern::TextureNoise,
        ] {
            let a = generate_synthetic_clip(&spec(p)).unwrap();
            let b = generate_synthetic_clip(&spec(p)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unknown_pattern_is_usage_error() {
        assert!(matches!("plaid".parse::<Pattern>(), Err(Error::Usage(_))));
    }

    #[test]
    fn clip_validation() {
        let f = Frame::filled(2, 2, 0.5).unwrap();
        assert!(VideoClip::new("a", vec![f.clone()], vec![0]).is_err());
        assert!(VideoClip::new("a", vec![f.clone(), f.clone()], vec![5, 5]).is_err());
        assert!(VideoClip::new("a", vec![f.clone(), f], vec![5, 6]).is_ok());
    }
}
