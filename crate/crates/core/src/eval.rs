//! Y-channel super-resolution and scoring against the bicubic baseline.

use crate::data::{bicubic_resize, bicubic_resize_tensor, ImagePlane, PlaneRole};
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim};
use crate::model::Model;
use crate::scalar::Scalar;

fn to_network<T: Scalar>(lr: &ImagePlane<T>) -> crate::Tensor<T> {
    lr.to_tensor(T::one() / T::lit(255.0))
}

fn from_network<T: Scalar>(t: &crate::Tensor<T>) -> ImagePlane<T> {
    ImagePlane::from_tensor(t, 0, 0, T::lit(255.0), PlaneRole::Y).clamp(T::zero(), T::lit(255.0))
}

/// Upscales a Y plane on the 0..255 scale, clamping the result.
pub fn super_resolve<T: Scalar>(model: &Model<T>, lr: &ImagePlane<T>) -> Result<ImagePlane<T>> {
    Ok(from_network(&model.infer(&to_network(lr))?))
}

/// Bicubic upscaling along the same numeric path as the model's residual
/// branch, so a network that outputs zero reproduces it exactly.
pub fn bicubic_baseline<T: Scalar>(lr: &ImagePlane<T>, scale: usize) -> ImagePlane<T> {
    let t = to_network(lr);
    from_network(&bicubic_resize_tensor(&t, lr.height() * scale, lr.width() * scale))
}

/// Low-resolution input for an HR plane: crop to a multiple of `scale`,
/// then bicubic downscale.
pub fn degrade<T: Scalar>(hr: &ImagePlane<T>, scale: usize) -> (ImagePlane<T>, ImagePlane<T>) {
    let hr = hr.crop_to_multiple(scale);
    let lr = bicubic_resize(&hr, hr.height() / scale, hr.width() / scale);
    (hr, lr)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    pub bicubic_psnr: f64,
    pub bicubic_ssim: f64,
}

fn shaved<T: Scalar>(p: &ImagePlane<T>, shave: usize) -> Result<ImagePlane<T>> {
    if 2 * shave >= p.height() || 2 * shave >= p.width() {
        return Err(Error::config(format!("{}x{} image too small for a {shave}-pixel border", p.height(), p.width())));
    }
    p.crop(shave, shave, p.height() - 2 * shave, p.width() - 2 * shave)
}

/// Scores the model and bicubic upscaling of `lr` against `hr`, both with a
/// border of `scale` pixels excluded. Without `lr`, it is derived from `hr`.
pub fn score_image<T: Scalar>(model: &Model<T>, name: &str, hr: &ImagePlane<T>, lr: Option<&ImagePlane<T>>) -> Result<ImageScore> {
    let r = model.scale();
    let (hr, lr) = match lr {
        Some(lr) => {
            let hr = hr.crop_to_multiple(r);
            let lr = lr.crop(0, 0, hr.height() / r, hr.width() / r)?;
            (hr, lr)
        }
        None => degrade(hr, r),
    };
    let sr = super_resolve(model, &lr)?;
    let base = bicubic_baseline(&lr, r);
    let (hs, ss, bs) = (shaved(&hr, r)?, shaved(&sr, r)?, shaved(&base, r)?);
    Ok(ImageScore {
        name: name.to_string(),
        psnr: psnr(&hr, &sr, r)?,
        ssim: ssim(&hs, &ss)?,
        bicubic_psnr: psnr(&hr, &base, r)?,
        bicubic_ssim: ssim(&hs, &bs)?,
    })
}

/// Arithmetic means of a set of scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSummary {
    pub count: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub bicubic_psnr: f64,
    pub bicubic_ssim: f64,
}

impl ScoreSummary {
    pub fn of(scores: &[ImageScore]) -> Self {
        let n = scores.len().max(1) as f64;
        let mean = |f: fn(&ImageScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
        ScoreSummary {
            count: scores.len(),
            psnr: mean(|s| s.psnr),
            ssim: mean(|s| s.ssim),
            bicubic_psnr: mean(|s| s.bicubic_psnr),
            bicubic_ssim: mean(|s| s.bicubic_ssim),
        }
    }
}
