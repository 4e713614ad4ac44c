//! Separable cubic-convolution resampling (Keys kernel, `a = −0.5`) with
//! edge replication. Pixel centres are aligned: output sample `o` maps to
//! source coordinate `(o + 0.5) / scale − 0.5`. When shrinking, the kernel
//! is stretched by `1 / scale` to low-pass the source.

use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

use super::plane::ImagePlane;

pub const CUBIC_A: f64 = -0.5;

pub fn cubic_kernel(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Taps and normalized weights for every output position along one axis.
struct AxisWeights {
    taps: usize,
    index: Vec<usize>,
    weight: Vec<f64>,
}

impl AxisWeights {
    fn new(input: usize, output: usize) -> Self {
        let scale = output as f64 / input as f64;
        let support = if scale < 1.0 { 2.0 / scale } else { 2.0 };
        let stretch = if scale < 1.0 { scale } else { 1.0 };
        let taps = (2.0 * support).ceil() as usize + 1;
        let mut index = Vec::with_capacity(output * taps);
        let mut weight = Vec::with_capacity(output * taps);
        for o in 0..output {
            let center = (o as f64 + 0.5) / scale - 0.5;
            let first = (center - support).floor() as isize;
            let mut ws: Vec<f64> = (0..taps).map(|t| cubic_kernel((center - (first + t as isize) as f64) * stretch)).collect();
            let total: f64 = ws.iter().sum();
            ws.iter_mut().for_each(|w| *w /= total);
            for (t, w) in ws.into_iter().enumerate() {
                index.push((first + t as isize).clamp(0, input as isize - 1) as usize);
                weight.push(w);
            }
        }
        AxisWeights { taps, index, weight }
    }
}

fn resize_slice<T: Scalar>(src: &[T], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<T> {
    if (h, w) == (out_h, out_w) {
        return src.to_vec();
    }
    let ax_w = AxisWeights::new(w, out_w);
    let ax_h = AxisWeights::new(h, out_h);
    // horizontal pass in f64, then vertical
    let mut tmp = vec![0.0f64; h * out_w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..out_w {
            let base = x * ax_w.taps;
            let mut acc = 0.0;
            for t in 0..ax_w.taps {
                acc += ax_w.weight[base + t] * row[ax_w.index[base + t]].to_f64().unwrap_or(f64::NAN);
            }
            tmp[y * out_w + x] = acc;
        }
    }
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let base = y * ax_h.taps;
        for x in 0..out_w {
            let mut acc = 0.0;
            for t in 0..ax_h.taps {
                acc += ax_h.weight[base + t] * tmp[ax_h.index[base + t] * out_w + x];
            }
            out.push(T::lit(acc));
        }
    }
    out
}

pub fn bicubic_resize<T: Scalar>(plane: &ImagePlane<T>, out_h: usize, out_w: usize) -> ImagePlane<T> {
    assert!(out_h >= 1 && out_w >= 1, "output size must be positive");
    let data = resize_slice(plane.data(), plane.height(), plane.width(), out_h, out_w);
    ImagePlane::new(out_h, out_w, data, plane.role).expect("resized size")
}

/// Resizes every `(n, c)` plane of a tensor.
pub fn bicubic_resize_tensor<T: Scalar>(t: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let s = t.shape();
    let mut data = Vec::with_capacity(s.n * s.c * out_h * out_w);
    for plane in t.data().chunks(s.plane()) {
        data.extend(resize_slice(plane, s.h, s.w, out_h, out_w));
    }
    Tensor::from_vec(Shape::new(s.n, s.c, out_h, out_w), data).expect("resized size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PlaneRole;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_interpolates() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        // partition of unity at any offset
        for k in 0..10 {
            let f = k as f64 / 10.0;
            let s: f64 = (-1..=2).map(|t| cubic_kernel(f - t as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_plane_stays_constant() {
        let p = ImagePlane::<f32>::filled(17, 13, 97.25, PlaneRole::Y);
        for (h, w) in [(34, 26), (8, 6), (51, 39), (5, 29)] {
            let q = bicubic_resize(&p, h, w);
            assert!(q.data().iter().all(|v| (v - 97.25).abs() < 1e-4));
        }
    }

    #[test]
    fn identity_size_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Tensor::<f32>::rand_uniform(Shape::new(1, 1, 9, 7), 0.0, 255.0, &mut rng);
        let p = ImagePlane::from_tensor(&t, 0, 0, 1.0, PlaneRole::Y);
        assert_eq!(bicubic_resize(&p, 9, 7), p);
    }

    #[test]
    fn upsampled_delta_samples_the_kernel() {
        let n = 16;
        let mut p = ImagePlane::<f64>::filled(n, n, 0.0, PlaneRole::Gray);
        let (cy, cx) = (8usize, 7usize);
        p.set(cy, cx, 1.0);
        let q = bicubic_resize(&p, 2 * n, 2 * n);
        for y in 8..24 {
            for x in 8..24 {
                let sy = (y as f64 + 0.5) / 2.0 - 0.5;
                let sx = (x as f64 + 0.5) / 2.0 - 0.5;
                let want = cubic_kernel(sy - cy as f64) * cubic_kernel(sx - cx as f64);
                assert!((q.get(y, x) - want).abs() < 1e-12, "({y},{x})");
            }
        }
    }

    #[test]
    fn resize_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Tensor::<f64>::rand_uniform(Shape::new(1, 1, 12, 10), 0.0, 255.0, &mut rng);
        let b = Tensor::<f64>::rand_uniform(Shape::new(1, 1, 12, 10), 0.0, 255.0, &mut rng);
        let mix = a.zip_map(&b, |x, y| 0.3 * x - 1.7 * y).unwrap();
        for (h, w) in [(24, 20), (6, 5), (18, 15)] {
            let ra = bicubic_resize_tensor(&a, h, w);
            let rb = bicubic_resize_tensor(&b, h, w);
            let want = ra.zip_map(&rb, |x, y| 0.3 * x - 1.7 * y).unwrap();
            assert!(bicubic_resize_tensor(&mix, h, w).max_abs_diff(&want).unwrap() < 1e-5);
        }
    }
}
