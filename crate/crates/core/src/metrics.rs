//! Image-quality metrics on the 8-bit scale. All accumulation is in `f64`.

use crate::data::ImagePlane;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_size<T: Scalar>(a: &ImagePlane<T>, b: &ImagePlane<T>, op: &'static str) -> Result<()> {
    if a.height() != b.height() {
        return Err(Error::Dimension { op, axis: "height", expected: a.height(), found: b.height() });
    }
    if a.width() != b.width() {
        return Err(Error::Dimension { op, axis: "width", expected: a.width(), found: b.width() });
    }
    Ok(())
}

/// Mean squared error after removing `shave` pixels from every border.
pub fn mse<T: Scalar>(a: &ImagePlane<T>, b: &ImagePlane<T>, shave: usize) -> Result<f64> {
    same_size(a, b, "psnr")?;
    let (h, w) = (a.height(), a.width());
    if 2 * shave >= h || 2 * shave >= w {
        return Err(Error::contract(format!("shave {shave} leaves nothing of a {h}x{w} image")));
    }
    let mut acc = 0.0;
    for y in shave..h - shave {
        for x in shave..w - shave {
            let d = a.get(y, x).to_f64().unwrap_or(f64::NAN) - b.get(y, x).to_f64().unwrap_or(f64::NAN);
            acc += d * d;
        }
    }
    Ok(acc / ((h - 2 * shave) * (w - 2 * shave)) as f64)
}

/// `10·log10(255² / MSE)` in dB over the shaved region; identical inputs
/// give `f64::INFINITY`.
pub fn psnr<T: Scalar>(a: &ImagePlane<T>, b: &ImagePlane<T>, shave: usize) -> Result<f64> {
    let m = mse(a, b, shave)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / m).log10())
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of a row-major `h×w` image.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..k).map(|t| taps[t] * src[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|t| taps[t] * tmp[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over all 11×11 Gaussian-weighted windows
/// (σ = 1.5, K1 = 0.01, K2 = 0.03, L = 255).
pub fn ssim<T: Scalar>(a: &ImagePlane<T>, b: &ImagePlane<T>) -> Result<f64> {
    same_size(a, b, "ssim")?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::contract(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let fa: Vec<f64> = a.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    let fb: Vec<f64> = b.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = filter_valid(&fa, h, w, &taps);
    let mu_b = filter_valid(&fb, h, w, &taps);
    let e_aa = filter_valid(&prod(&fa, &fa), h, w, &taps);
    let e_bb = filter_valid(&prod(&fb, &fb), h, w, &taps);
    let e_ab = filter_valid(&prod(&fa, &fb), h, w, &taps);
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / n as f64)
}
