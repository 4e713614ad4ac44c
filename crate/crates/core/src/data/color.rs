//! ITU-R BT.601 studio-swing YCbCr (Y in [16, 235], chroma in [16, 240]).

use crate::scalar::Scalar;

use super::plane::{ImagePlane, PlaneRole};

const FWD: [[f64; 3]; 3] = [
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
];
const OFFSET: [f64; 3] = [16.0, 128.0, 128.0];

fn inverse() -> [[f64; 3]; 3] {
    let m = FWD;
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [cof(1, 2, 1, 2) / det, -cof(0, 2, 1, 2) / det, cof(0, 1, 1, 2) / det],
        [-cof(1, 2, 0, 2) / det, cof(0, 2, 0, 2) / det, -cof(0, 1, 0, 2) / det],
        [cof(1, 2, 0, 1) / det, -cof(0, 2, 0, 1) / det, cof(0, 1, 0, 1) / det],
    ]
}

fn apply<T: Scalar>(
    a: &ImagePlane<T>,
    b: &ImagePlane<T>,
    c: &ImagePlane<T>,
    f: impl Fn([f64; 3]) -> [f64; 3],
    roles: [PlaneRole; 3],
) -> (ImagePlane<T>, ImagePlane<T>, ImagePlane<T>) {
    assert!(
        a.height() == b.height() && a.height() == c.height() && a.width() == b.width() && a.width() == c.width(),
        "colour planes must share a size"
    );
    let n = a.data().len();
    let mut out = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for i in 0..n {
        let px = [a.data()[i], b.data()[i], c.data()[i]].map(|v| v.to_f64().unwrap_or(f64::NAN));
        let r = f(px);
        for k in 0..3 {
            out[k].push(T::lit(r[k]));
        }
    }
    let [x, y, z] = out;
    let (h, w) = (a.height(), a.width());
    (
        ImagePlane::new(h, w, x, roles[0]).expect("size"),
        ImagePlane::new(h, w, y, roles[1]).expect("size"),
        ImagePlane::new(h, w, z, roles[2]).expect("size"),
    )
}

/// RGB in `[0, 255]` to `(Y, Cb, Cr)`.
pub fn rgb_to_ycbcr<T: Scalar>(
    r: &ImagePlane<T>,
    g: &ImagePlane<T>,
    b: &ImagePlane<T>,
) -> (ImagePlane<T>, ImagePlane<T>, ImagePlane<T>) {
    apply(
        r,
        g,
        b,
        |p| {
            let mut out = OFFSET;
            for (k, row) in FWD.iter().enumerate() {
                out[k] += (row[0] * p[0] + row[1] * p[1] + row[2] * p[2]) / 255.0;
            }
            out
        },
        [PlaneRole::Y, PlaneRole::Cb, PlaneRole::Cr],
    )
}

/// Exact inverse of [`rgb_to_ycbcr`]; no clamping.
pub fn ycbcr_to_rgb<T: Scalar>(
    y: &ImagePlane<T>,
    cb: &ImagePlane<T>,
    cr: &ImagePlane<T>,
) -> (ImagePlane<T>, ImagePlane<T>, ImagePlane<T>) {
    let inv = inverse();
    apply(
        y,
        cb,
        cr,
        |p| {
            let d = [p[0] - OFFSET[0], p[1] - OFFSET[1], p[2] - OFFSET[2]];
            let mut out = [0.0; 3];
            for (k, row) in inv.iter().enumerate() {
                out[k] = 255.0 * (row[0] * d[0] + row[1] * d[1] + row[2] * d[2]);
            }
            out
        },
        [PlaneRole::Gray; 3],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn px(v: f64) -> ImagePlane<f64> {
        ImagePlane::filled(1, 1, v, PlaneRole::Gray)
    }

    #[test]
    fn white_and_black_reference_points() {
        let (y, _, _) = rgb_to_ycbcr(&px(255.0), &px(255.0), &px(255.0));
        assert!((y.get(0, 0) - 235.0).abs() < 0.5);
        let (y, cb, cr) = rgb_to_ycbcr(&px(0.0), &px(0.0), &px(0.0));
        assert_eq!((y.get(0, 0), cb.get(0, 0), cr.get(0, 0)), (16.0, 128.0, 128.0));
    }

    #[test]
    fn round_trip_random_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut plane = || ImagePlane::<f32>::from_fn(16, 16, PlaneRole::Gray, |_, _| rng.random_range(0..=255u8) as f32);
        let (r, g, b) = (plane(), plane(), plane());
        let (y, cb, cr) = rgb_to_ycbcr(&r, &g, &b);
        let (r2, g2, b2) = ycbcr_to_rgb(&y, &cb, &cr);
        let mut worst = 0.0f32;
        for (a, b) in [(&r, &r2), (&g, &g2), (&b, &b2)] {
            for (x, y) in a.data().iter().zip(b.data()) {
                worst = worst.max((x - y.round()).abs());
            }
        }
        assert!(worst < 0.51, "worst {worst}");
    }
}
