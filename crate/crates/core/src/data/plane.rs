use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaneRole {
    Y,
    Cb,
    Cr,
    Gray,
}

/// One image channel on the 8-bit scale `[0, 255]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
    pub role: PlaneRole,
}

impl<T: Scalar> ImagePlane<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>, role: PlaneRole) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension { op: "ImagePlane::new", axis: "elements", expected: height * width, found: data.len() });
        }
        Ok(ImagePlane { height, width, data, role })
    }

    pub fn filled(height: usize, width: usize, value: T, role: PlaneRole) -> Self {
        ImagePlane { height, width, data: vec![value; height * width], role }
    }

    pub fn from_fn(height: usize, width: usize, role: PlaneRole, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        ImagePlane { height, width, data, role }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Copy of the `h×w` window at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if top + h > self.height {
            return Err(Error::Dimension { op: "crop", axis: "height", expected: self.height, found: top + h });
        }
        if left + w > self.width {
            return Err(Error::Dimension { op: "crop", axis: "width", expected: self.width, found: left + w });
        }
        Ok(ImagePlane::from_fn(h, w, self.role, |y, x| self.get(top + y, left + x)))
    }

    /// Crops the bottom/right edges so both sides are multiples of `r`.
    pub fn crop_to_multiple(&self, r: usize) -> Self {
        let (h, w) = (self.height - self.height % r, self.width - self.width % r);
        self.crop(0, 0, h, w).expect("shrinking crop")
    }

    pub fn clamp(&self, lo: T, hi: T) -> Self {
        ImagePlane { data: self.data.iter().map(|v| v.max(lo).min(hi)).collect(), ..self.clone() }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        ImagePlane { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn cast<U: Scalar>(&self) -> ImagePlane<U> {
        ImagePlane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN))).collect(),
            role: self.role,
        }
    }

    /// `(1, 1, h, w)` tensor with values multiplied by `factor`.
    pub fn to_tensor(&self, factor: T) -> Tensor<T> {
        Tensor::from_vec(Shape::new(1, 1, self.height, self.width), self.data.iter().map(|&v| v * factor).collect())
            .expect("plane size")
    }

    /// Plane from channel `c` of batch item `n`, multiplied by `factor`.
    pub fn from_tensor(t: &Tensor<T>, n: usize, c: usize, factor: T, role: PlaneRole) -> Self {
        let s = t.shape();
        let start = (n * s.c + c) * s.plane();
        let data = t.data()[start..start + s.plane()].iter().map(|&v| v * factor).collect();
        ImagePlane { height: s.h, width: s.w, data, role }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
