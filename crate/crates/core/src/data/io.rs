use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::Result;
use crate::scalar::Scalar;

use super::color::rgb_to_ycbcr;
use super::plane::{ImagePlane, PlaneRole};

/// A decoded 8-bit image as floating-point planes.
#[derive(Clone, Debug)]
pub enum LoadedImage<T> {
    Gray(ImagePlane<T>),
    Rgb([ImagePlane<T>; 3]),
}

impl<T: Scalar> LoadedImage<T> {
    pub fn height(&self) -> usize {
        match self {
            LoadedImage::Gray(p) => p.height(),
            LoadedImage::Rgb(p) => p[0].height(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            LoadedImage::Gray(p) => p.width(),
            LoadedImage::Rgb(p) => p[0].width(),
        }
    }

    /// Luma plane plus chroma planes for colour input. Grayscale input is
    /// used directly as Y.
    pub fn to_ycbcr(&self) -> (ImagePlane<T>, Option<(ImagePlane<T>, ImagePlane<T>)>) {
        match self {
            LoadedImage::Gray(p) => {
                let mut y = p.clone();
                y.role = PlaneRole::Y;
                (y, None)
            }
            LoadedImage::Rgb([r, g, b]) => {
                let (y, cb, cr) = rgb_to_ycbcr(r, g, b);
                (y, Some((cb, cr)))
            }
        }
    }
}

/// Reads PNG or PGM/PPM.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<LoadedImage<T>> {
    let img = image::open(path.as_ref())?;
    Ok(from_dynamic(img))
}

pub(crate) fn from_dynamic<T: Scalar>(img: DynamicImage) -> LoadedImage<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let plane = |k: usize| {
            ImagePlane::from_fn(h, w, PlaneRole::Gray, |y, x| T::lit(rgb.get_pixel(x as u32, y as u32)[k] as f64))
        };
        LoadedImage::Rgb([plane(0), plane(1), plane(2)])
    } else {
        let g = img.to_luma8();
        LoadedImage::Gray(ImagePlane::from_fn(h, w, PlaneRole::Gray, |y, x| T::lit(g.get_pixel(x as u32, y as u32)[0] as f64)))
    }
}

fn to_u8<T: Scalar>(v: T) -> u8 {
    v.to_f64().unwrap_or(0.0).round().clamp(0.0, 255.0) as u8
}

pub fn save_gray_png<T: Scalar>(plane: &ImagePlane<T>, path: impl AsRef<Path>) -> Result<()> {
    let img = GrayImage::from_fn(plane.width() as u32, plane.height() as u32, |x, y| {
        image::Luma([to_u8(plane.get(y as usize, x as usize))])
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn save_rgb_png<T: Scalar>(planes: [&ImagePlane<T>; 3], path: impl AsRef<Path>) -> Result<()> {
    let img = RgbImage::from_fn(planes[0].width() as u32, planes[0].height() as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb([to_u8(planes[0].get(y, x)), to_u8(planes[1].get(y, x)), to_u8(planes[2].get(y, x))])
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
