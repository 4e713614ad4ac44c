use crate::error::Result;
use crate::scalar::Scalar;

use super::plane::ImagePlane;
use super::resize::bicubic_resize;

/// Side of the low-resolution patch fed to the network.
pub const LR_PATCH: usize = 32;
/// Window stride in high-resolution pixels.
pub const PATCH_STRIDE: usize = 64;

/// The five variants produced from every base patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Augmentation {
    Identity,
    FlipHorizontal,
    Rotate90,
    Rotate180,
    Rotate270,
}

impl Augmentation {
    pub const ALL: [Augmentation; 5] = [
        Augmentation::Identity,
        Augmentation::FlipHorizontal,
        Augmentation::Rotate90,
        Augmentation::Rotate180,
        Augmentation::Rotate270,
    ];

    pub fn id(self) -> u8 {
        Self::ALL.iter().position(|&a| a == self).expect("listed") as u8
    }

    pub fn inverse(self) -> Self {
        match self {
            Augmentation::Rotate90 => Augmentation::Rotate270,
            Augmentation::Rotate270 => Augmentation::Rotate90,
            other => other,
        }
    }
}

/// Applies `aug`; rotations are counter-clockwise.
pub fn augment<T: Scalar>(p: &ImagePlane<T>, aug: Augmentation) -> ImagePlane<T> {
    let (h, w) = (p.height(), p.width());
    match aug {
        Augmentation::Identity => p.clone(),
        Augmentation::FlipHorizontal => ImagePlane::from_fn(h, w, p.role, |y, x| p.get(y, w - 1 - x)),
        Augmentation::Rotate90 => ImagePlane::from_fn(w, h, p.role, |y, x| p.get(x, w - 1 - y)),
        Augmentation::Rotate180 => ImagePlane::from_fn(h, w, p.role, |y, x| p.get(h - 1 - y, w - 1 - x)),
        Augmentation::Rotate270 => ImagePlane::from_fn(w, h, p.role, |y, x| p.get(h - 1 - x, y)),
    }
}

pub fn invert_augmentation<T: Scalar>(p: &ImagePlane<T>, aug: Augmentation) -> ImagePlane<T> {
    augment(p, aug.inverse())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair<T> {
    pub lr: ImagePlane<T>,
    pub hr: ImagePlane<T>,
    pub augmentation: Augmentation,
}

/// Cuts `32r × 32r` windows at stride 64 out of `hr`, expands each into
/// its five augmented variants and downsamples each variant to 32×32.
/// Images smaller than one window yield nothing.
pub fn extract_patches<T: Scalar>(hr: &ImagePlane<T>, scale: usize) -> Result<Vec<PatchPair<T>>> {
    let side = LR_PATCH * scale;
    let mut out = Vec::new();
    if hr.height() < side || hr.width() < side {
        return Ok(out);
    }
    for top in (0..=hr.height() - side).step_by(PATCH_STRIDE) {
        for left in (0..=hr.width() - side).step_by(PATCH_STRIDE) {
            let base = hr.crop(top, left, side, side)?;
            for aug in Augmentation::ALL {
                let hr_patch = augment(&base, aug);
                let lr = bicubic_resize(&hr_patch, LR_PATCH, LR_PATCH);
                out.push(PatchPair { lr, hr: hr_patch, augmentation: aug });
            }
        }
    }
    Ok(out)
}

/// `⌊(extent − 32r) / 64⌋ + 1` windows along an axis, or 0.
pub fn windows_along(extent: usize, scale: usize) -> usize {
    let side = LR_PATCH * scale;
    if extent < side {
        0
    } else {
        (extent - side) / PATCH_STRIDE + 1
    }
}
