//! Area-average (box filter) downsampling used to derive low-resolution inputs.

use super::frame::{Frame, CHANNELS};
use crate::error::{Error, Result};

/// Round half up, used for every scale-to-pixel-count conversion.
pub fn round_dim(v: f64) -> usize {
    (v + 0.5).floor().max(0.0) as usize
}

/// Fractional-coverage weights: output pixel `i` covers `[i·r, (i+1)·r)` of
/// the input axis, with `r = n_in / n_out`. Each row sums to one.
fn coverage_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let r = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let lo = i as f64 * r;
            let hi = ((i + 1) as f64 * r).min(n_in as f64);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in);
            (first..last)
                .filter_map(|k| {
                    let overlap = (hi.min(k as f64 + 1.0) - lo.max(k as f64)).max(0.0);
                    (overlap > 0.0).then_some((k, overlap / r))
                })
                .collect()
        })
        .collect()
}

/// Resamples to exactly `width × height` by area averaging.
pub fn area_resample(hr: &Frame, width: usize, height: usize) -> Result<Frame> {
    if width == 0 || height == 0 {
        return Err(Error::Input(format!(
            "area resample target {width}x{height} has a zero dimension"
        )));
    }
    let wx = coverage_weights(hr.width(), width);
    let wy = coverage_weights(hr.height(), height);
    let mut data = Vec::with_capacity(CHANNELS * width * height);
    let mut rows = vec![0.0f64; hr.height() * width];
    for c in 0..CHANNELS {
        let plane = hr.plane(c);
        for y in 0..hr.height() {
            let src = &plane[y * hr.width()..(y + 1) * hr.width()];
            for (x, taps) in wx.iter().enumerate() {
                rows[y * width + x] = taps.iter().map(|&(k, w)| w * src[k] as f64).sum();
            }
        }
        for taps in &wy {
            for x in 0..width {
                let v: f64 = taps.iter().map(|&(k, w)| w * rows[k * width + x]).sum();
                data.push(v as f32);
            }
        }
    }
    Frame::new(width, height, data)
}

/// Downscales by `s`: output dims are `round(H/s) × round(W/s)`.
pub fn degrade(hr: &Frame, s: f64) -> Result<Frame> {
    if !(s >= 1.0) || !s.is_finite() {
        return Err(Error::Input(format!(
            "degradation scale must be a finite value >= 1, got {s}"
        )));
    }
    let h = round_dim(hr.height() as f64 / s);
    let w = round_dim(hr.width() as f64 / s);
    if h == 0 || w == 0 {
        return Err(Error::Input(format!(
            "scale {s} maps {}x{} to an empty image",
            hr.width(),
            hr.height()
        )));
    }
    area_resample(hr, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_one_is_identity() {
        let f = Frame::from_fn(7, 5, |c, y, x| {
            ((c * 31 + y * 7 + x * 3) % 17) as f32 / 16.0
        })
        .unwrap();
        assert_eq!(degrade(&f, 1.0).unwrap(), f);
    }

    #[test]
    fn checkerboard_averages_to_half() {
        let f = Frame::from_fn(2, 2, |_, y, x| ((x + y) % 2) as f32).unwrap();
        let lr = degrade(&f, 2.0).unwrap();
        assert_eq!((lr.width(), lr.height()), (1, 1));
        assert!(lr.data().iter().all(|&v| (v - 0.5).abs() < 1e-7));
    }

    #[test]
    fn constant_is_preserved() {
        let f = Frame::filled(13, 9, 0.4).unwrap();
        for s in [1.3, 2.0, 2.6, 4.5] {
            let lr = degrade(&f, s).unwrap();
            assert!(lr.data().iter().all(|&v| (v - 0.4).abs() < 1e-6), "s={s}");
        }
    }

    #[test]
    fn empty_output_is_error() {
        let f = Frame::filled(3, 3, 0.4).unwrap();
        assert!(degrade(&f, 8.0).is_err());
        assert!(degrade(&f, 0.5).is_err());
    }

    #[test]
    fn weights_partition_each_input_pixel() {
        for (n_in, n_out) in [(10, 3), (64, 25), (7, 7), (9, 4)] {
            let w = coverage_weights(n_in, n_out);
            let r = n_in as f64 / n_out as f64;
            let mut per_input = vec![0.0; n_in];
            for row in &w {
                assert!((row.iter().map(|t| t.1).sum::<f64>() - 1.0).abs() < 1e-12);
                for &(k, v) in row {
                    per_input[k] += v * r;
                }
            }
            assert!(per_input.iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }
}
