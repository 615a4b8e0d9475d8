//! Charbonnier penalty and image-quality metrics.

use crate::datapipe::{Frame, CHANNELS};
use crate::error::{Error, Result};

/// PSNR reported for (numerically) identical images.
pub const PSNR_CAP_DB: f64 = 100.0;
const MSE_FLOOR: f64 = 1e-10;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_dims(op: &str, a: &Frame, b: &Frame) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Input(format!(
            "{op}: frame sizes differ ({}x{} vs {}x{})",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Charbonnier value of a single difference, written so that `d = 0` gives
/// exactly `eps`.
#[inline]
pub fn charbonnier_term(d: f64, eps: f64) -> f64 {
    let d2 = d * d;
    eps + d2 / ((d2 + eps * eps).sqrt() + eps)
}

/// Mean over all pixels and channels of `sqrt(diff² + eps²)`.
pub fn charbonnier(pred: &Frame, gt: &Frame, eps: f64) -> Result<f64> {
    check_dims("charbonnier", pred, gt)?;
    if !(eps > 0.0) {
        return Err(Error::Input(format!(
            "charbonnier eps must be > 0, got {eps}"
        )));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| charbonnier_term(p as f64 - g as f64, eps) - eps)
        .sum();
    Ok(eps + sum / pred.data().len() as f64)
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    check_dims("mse", a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// PSNR in dB for unit peak from a mean squared error, capped near zero.
pub fn psnr_from_mse(m: f64) -> f64 {
    if m < MSE_FLOOR {
        PSNR_CAP_DB
    } else {
        10.0 * (1.0 / m).log10()
    }
}

/// Peak signal-to-noise ratio for unit peak, capped for identical images.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

fn gaussian_kernel() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering of an `h × w` plane.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, &kv)| kv * src[y * w + x + i])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, &kv)| kv * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, k: &[f64]) -> f64 {
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, k);
    let mu_b = filter_valid(b, h, w, k);
    let aa = filter_valid(&prod(a, a), h, w, k);
    let bb = filter_valid(&prod(b, b), h, w, k);
    let ab = filter_valid(&prod(a, b), h, w, k);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5) over valid
/// positions, averaged over channels.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_dims("ssim", a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Input(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let k = gaussian_kernel();
    let plane = |f: &Frame, c: usize| f.plane(c).iter().map(|&v| v as f64).collect::<Vec<_>>();
    let sum: f64 = (0..CHANNELS)
        .map(|c| ssim_plane(&plane(a, c), &plane(b, c), h, w, &k))
        .sum();
    Ok(sum / CHANNELS as f64)
}
