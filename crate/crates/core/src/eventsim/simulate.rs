//! Log-intensity threshold event synthesis and its inverse integration.

use serde::{Deserialize, Serialize};

use super::stream::{Event, EventStream};
use crate::datapipe::{Frame, VideoClip};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSimConfig {
    /// Contrast threshold in log-intensity units.
    pub theta: f64,
    /// Offset added to linear intensity before taking the log.
    pub noise_floor: f64,
    /// Minimum gap between two emitted events of one pixel.
    pub refractory_us: u64,
}

impl Default for EventSimConfig {
    fn default() -> Self {
        EventSimConfig {
            theta: 0.15,
            noise_floor: 1.0 / 255.0,
            refractory_us: 0,
        }
    }
}

impl EventSimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::Input(format!(
                "theta must be > 0, got {}",
                self.theta
            )));
        }
        if !(self.noise_floor > 0.0) || !self.noise_floor.is_finite() {
            return Err(Error::Input(format!(
                "noise floor must be > 0, got {}",
                self.noise_floor
            )));
        }
        Ok(())
    }

    fn log_intensity(&self, v: f64) -> f64 {
        (v + self.noise_floor).ln()
    }
}

/// Emits threshold-crossing events for one pixel's log-intensity samples.
///
/// Between samples the log intensity is linear. Each time it reaches the
/// reference level ±θ an event fires at the interpolated crossing time and
/// the reference moves by ±θ. Events suppressed by the refractory period
/// still move the reference.
pub fn pixel_events(
    log_samples: &[f64],
    times: &[u64],
    cfg: &EventSimConfig,
    mut emit: impl FnMut(u64, i8),
) -> f64 {
    let theta = cfg.theta;
    let mut reference = log_samples[0];
    let mut last_emit: Option<u64> = None;
    for k in 0..log_samples.len() - 1 {
        let (a, b) = (log_samples[k], log_samples[k + 1]);
        let (t0, t1) = (times[k], times[k + 1]);
        let span = (t1 - t0) as f64;
        if a == b {
            continue;
        }
        let polarity: i8 = if b > a { 1 } else { -1 };
        loop {
            let level = reference + polarity as f64 * theta;
            let reached = if polarity > 0 { level <= b } else { level >= b };
            if !reached {
                break;
            }
            let frac = ((level - a) / (b - a)).clamp(0.0, 1.0);
            // Events belong to the half-open interval (t0, t1].
            let t = (t0 + (frac * span).round() as u64).clamp(t0 + 1, t1);
            reference = level;
            let allowed = match last_emit {
                Some(prev) => cfg.refractory_us == 0 || t - prev >= cfg.refractory_us,
                None => true,
            };
            if allowed {
                emit(t, polarity);
                last_emit = Some(t);
            }
        }
    }
    reference
}

fn check_clip(video: &VideoClip) -> Result<()> {
    if video.len() < 2 {
        return Err(Error::Input(
            "event synthesis needs at least 2 frames".into(),
        ));
    }
    if video.timestamps_us().windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input(
            "frame timestamps must strictly increase".into(),
        ));
    }
    Ok(())
}

fn log_planes(video: &VideoClip, cfg: &EventSimConfig) -> Vec<Vec<f64>> {
    video
        .frames()
        .iter()
        .map(|f| {
            f.luminance()
                .into_iter()
                .map(|v| cfg.log_intensity(v))
                .collect()
        })
        .collect()
}

/// Synthesizes the event stream of a clip from frame luminance.
pub fn synthesize_events(video: &VideoClip, cfg: &EventSimConfig) -> Result<EventStream> {
    cfg.validate()?;
    check_clip(video)?;
    let (w, h) = (video.width(), video.height());
    let logs = log_planes(video, cfg);
    let times = video.timestamps_us();
    let mut events = Vec::new();
    let mut samples = vec![0.0; logs.len()];
    for y in 0..h {
        for x in 0..w {
            for (s, plane) in samples.iter_mut().zip(&logs) {
                *s = plane[y * w + x];
            }
            pixel_events(&samples, times, cfg, |t, p| {
                events.push(Event::new(t, x as u16, y as u16, p))
            });
        }
    }
    events.sort_by_key(Event::sort_key);
    EventStream::new(w, h, video.t_start(), video.t_end(), events)
}

/// Net polarity per pixel over events with `t0 < t <= t1`.
fn polarity_sums(stream: &EventStream, t0: u64, t1: u64) -> Vec<i64> {
    let mut sums = vec![0i64; stream.width() * stream.height()];
    for e in stream.events().iter().filter(|e| e.t > t0 && e.t <= t1) {
        sums[e.y as usize * stream.width() + e.x as usize] += e.p as i64;
    }
    sums
}

fn integrate_plane(plane: &[f64], sums: &[i64], cfg: &EventSimConfig) -> Vec<f64> {
    plane
        .iter()
        .zip(sums)
        .map(|(&v, &s)| {
            ((v + cfg.noise_floor) * (cfg.theta * s as f64).exp() - cfg.noise_floor).clamp(0.0, 1.0)
        })
        .collect()
}

/// Advances `frame0` from `t0` to `t1` with the events in `(t0, t1]`:
/// `I(t1) = (I(t0) + n)·exp(θ·Σp) − n`, clamped to `[0, 1]`.
pub fn integrate_events(
    frame0: &Frame,
    stream: &EventStream,
    cfg: &EventSimConfig,
    t0: u64,
    t1: u64,
) -> Result<Frame> {
    cfg.validate()?;
    if t1 < t0 {
        return Err(Error::Input(format!(
            "integration interval [{t0}, {t1}] is reversed"
        )));
    }
    if frame0.width() != stream.width() || frame0.height() != stream.height() {
        return Err(Error::Input(format!(
            "frame {}x{} does not match sensor {}x{}",
            frame0.width(),
            frame0.height(),
            stream.width(),
            stream.height()
        )));
    }
    let sums = polarity_sums(stream, t0, t1);
    let mut data = Vec::with_capacity(frame0.data().len());
    for c in 0..3 {
        let plane: Vec<f64> = frame0.plane(c).iter().map(|&v| v as f64).collect();
        data.extend(
            integrate_plane(&plane, &sums, cfg)
                .into_iter()
                .map(|v| v as f32),
        );
    }
    Frame::new(frame0.width(), frame0.height(), data)
}

/// Per-pixel `|log Î_end − log I_end|` after synthesizing events and
/// integrating them from the first frame's luminance to the last.
pub fn round_trip_residual(video: &VideoClip, cfg: &EventSimConfig) -> Result<Vec<f64>> {
    let stream = synthesize_events(video, cfg)?;
    let first = video.frames()[0].luminance();
    let last = video.frames().last().unwrap().luminance();
    let sums = polarity_sums(&stream, video.t_start(), video.t_end());
    // Events never land on t_start, so (t_start, t_end] holds all of them.
    let estimate = integrate_plane(&first, &sums, cfg);
    Ok(estimate
        .iter()
        .zip(&last)
        .map(|(&e, &l)| (cfg.log_intensity(e) - cfg.log_intensity(l)).abs())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_clip(values: &[f32], interval: u64) -> VideoClip {
        let frames = values
            .iter()
            .map(|&v| Frame::filled(1, 1, v).unwrap())
            .collect();
        VideoClip::uniform("px", frames, 0, interval).unwrap()
    }

    #[test]
    fn constant_clip_is_silent() {
        let clip = gray_clip(&[0.4, 0.4, 0.4], 1000);
        assert!(synthesize_events(&clip, &EventSimConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn integrate_empty_is_identity() {
        let f = Frame::from_fn(3, 2, |c, y, x| (c + y + x) as f32 / 8.0).unwrap();
        let s = EventStream::empty(3, 2, 0, 100).unwrap();
        assert_eq!(
            integrate_events(&f, &s, &EventSimConfig::default(), 0, 100).unwrap(),
            f
        );
    }

    #[test]
    fn integrate_two_positive_events() {
        let cfg = EventSimConfig {
            theta: 0.15,
            ..Default::default()
        };
        let i0 = (0.5 - cfg.noise_floor) as f32;
        let f = Frame::filled(1, 1, i0).unwrap();
        let s = EventStream::new(
            1,
            1,
            0,
            10,
            vec![Event::new(3, 0, 0, 1), Event::new(7, 0, 0, 1)],
        )
        .unwrap();
        let out = integrate_events(&f, &s, &cfg, 0, 10).unwrap();
        let expected = (i0 as f64 + cfg.noise_floor) * 0.3f64.exp();
        assert!((out.get(0, 0, 0) as f64 + cfg.noise_floor - expected).abs() < 1e-6);
        assert!((expected - 0.67493).abs() < 1e-5);
    }

    #[test]
    fn cancelling_events_restore_frame() {
        let f = Frame::filled(2, 1, 0.3).unwrap();
        let ev = vec![
            Event::new(1, 1, 0, 1),
            Event::new(2, 1, 0, 1),
            Event::new(3, 1, 0, -1),
            Event::new(4, 1, 0, -1),
        ];
        let s = EventStream::new(2, 1, 0, 5, ev).unwrap();
        let out = integrate_events(&f, &s, &EventSimConfig::default(), 0, 5).unwrap();
        assert!((out.get(0, 0, 1) - 0.3).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_theta_and_short_clips() {
        let f = Frame::filled(1, 1, 0.3).unwrap();
        let s = EventStream::empty(1, 1, 0, 5).unwrap();
        let bad = EventSimConfig {
            theta: 0.0,
            ..Default::default()
        };
        assert!(integrate_events(&f, &s, &bad, 0, 5).is_err());
        let clip = gray_clip(&[0.2, 0.3], 10);
        assert!(synthesize_events(&clip, &bad).is_err());
    }

    #[test]
    fn refractory_suppresses_close_events() {
        let clip = gray_clip(&[0.05, 0.9], 1000);
        let free = synthesize_events(&clip, &EventSimConfig::default()).unwrap();
        let limited = synthesize_events(
            &clip,
            &EventSimConfig {
                refractory_us: 400,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(limited.len() < free.len());
        assert!(limited.events().windows(2).all(|w| w[1].t - w[0].t >= 400));
    }
}
