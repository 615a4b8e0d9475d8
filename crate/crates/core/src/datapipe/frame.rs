use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Rec. 601 luma weights; they sum to one.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Planar RGB image with values in `[0, 1]`, stored `[3][height][width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Frame {
    /// Builds a frame from planar data, clamping every value into `[0, 1]`.
    pub fn new(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!(
                "frame dims must be >= 1, got {width}x{height}"
            )));
        }
        let expected = CHANNELS * width * height;
        if data.len() != expected {
            return Err(Error::dim("frame", "numel", expected, data.len()));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("frame value at {bad} is not finite")));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; CHANNELS * width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(CHANNELS * width * height);
        for c in 0..CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn luminance(&self) -> Vec<f64> {
        let n = self.width * self.height;
        (0..n)
            .map(|i| {
                (0..CHANNELS)
                    .map(|c| LUMA[c] * self.data[c * n + i] as f64)
                    .sum()
            })
            .collect()
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Snaps every value to the nearest multiple of 1/255.
    pub fn quantized(&self) -> Frame {
        self.map(|v| quantize_u8(v) as f32 / 255.0)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Frame> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Input(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds frame {}x{}",
                self.width, self.height
            )));
        }
        Frame::from_fn(width, height, |c, y, x| self.get(c, y0 + y, x0 + x))
    }

    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Frame> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!(
                "resize target must be >= 1, got {width}x{height}"
            )));
        }
        let mut data = Vec::with_capacity(CHANNELS * width * height);
        for c in 0..CHANNELS {
            let plane: Vec<f64> = self.plane(c).iter().map(|&v| v as f64).collect();
            data.extend(
                resize_plane_bilinear(&plane, self.width, self.height, width, height)
                    .into_iter()
                    .map(|v| v as f32),
            );
        }
        Frame::new(width, height, data)
    }
}

pub fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `a + f·(b − a)`, kept inside `[min(a,b), max(a,b)]`.
#[inline]
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    (a + f * (b - a)).clamp(a.min(b), a.max(b))
}

fn source_taps(n_out: usize, n_in: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let u =
                ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = (u.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, u - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling of a single plane with pixel-center alignment and
/// edge clamping. Constant planes stay exactly constant and every output lies
/// within the range of its source neighbours.
pub fn resize_plane_bilinear(
    src: &[f64],
    w_in: usize,
    h_in: usize,
    w_out: usize,
    h_out: usize,
) -> Vec<f64> {
    assert_eq!(src.len(), w_in * h_in, "plane size");
    let xs = source_taps(w_out, w_in);
    let ys = source_taps(h_out, h_in);
    let mut out = Vec::with_capacity(w_out * h_out);
    for &(y0, y1, fy) in &ys {
        let r0 = &src[y0 * w_in..(y0 + 1) * w_in];
        let r1 = &src[y1 * w_in..(y1 + 1) * w_in];
        for &(x0, x1, fx) in &xs {
            let top = lerp(r0[x0], r0[x1], fx);
            let bottom = lerp(r1[x0], r1[x1], fx);
            out.push(lerp(top, bottom, fy));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_on_construction() {
        let f = Frame::new(1, 1, vec![-0.5, 0.5, 2.0]).unwrap();
        assert_eq!(f.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn identity_resize() {
        let f = Frame::from_fn(5, 3, |c, y, x| (c + 2 * y + 3 * x) as f32 / 20.0).unwrap();
        assert_eq!(f.resize_bilinear(5, 3).unwrap(), f);
    }

    #[test]
    fn constant_resize_is_exact() {
        let f = Frame::filled(4, 4, 0.3).unwrap();
        let r = f.resize_bilinear(13, 7).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.3f32));
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(Frame::new(0, 2, vec![]).is_err());
        assert!(Frame::new(2, 2, vec![0.0; 5]).is_err());
    }
}
