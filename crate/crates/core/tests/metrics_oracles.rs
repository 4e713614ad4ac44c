use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srcondense::data::{ImagePlane, PlaneRole};
use srcondense::metrics::{psnr, ssim};

fn random_plane(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ImagePlane<f64> {
    ImagePlane::from_fn(h, w, PlaneRole::Y, |_, _| rng.random_range(0.0..255.0))
}

fn naive_psnr(a: &ImagePlane<f64>, b: &ImagePlane<f64>, shave: usize) -> f64 {
    let mut sq = Vec::new();
    for y in shave..a.height() - shave {
        for x in shave..a.width() - shave {
            sq.push((a.get(y, x) - b.get(y, x)).powi(2));
        }
    }
    let mse = sq.iter().sum::<f64>() / sq.len() as f64;
    20.0 * 255.0f64.log10() - 10.0 * mse.log10()
}

/// Direct per-window SSIM with a 2-D Gaussian and two-pass moments.
fn naive_ssim(a: &ImagePlane<f64>, b: &ImagePlane<f64>) -> f64 {
    let (k, sigma) = (11usize, 1.5f64);
    let c = (k as f64 - 1.0) / 2.0;
    let mut win = vec![vec![0.0; k]; k];
    let mut z = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-((i as f64 - c).powi(2) + (j as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp();
            z += *v;
        }
    }
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y in 0..=a.height() - k {
        for x in 0..=a.width() - k {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let wt = win[i][j] / z;
                    ma += wt * a.get(y + i, x + j);
                    mb += wt * b.get(y + i, x + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let wt = win[i][j] / z;
                    let (da, db) = (a.get(y + i, x + j) - ma, b.get(y + i, x + j) - mb);
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn psnr_matches_two_pass_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (h, w) = (rng.random_range(12..40), rng.random_range(12..40));
        let a = random_plane(h, w, &mut rng);
        let b = ImagePlane::from_fn(h, w, PlaneRole::Y, |y, x| a.get(y, x) + rng.random_range(-30.0..30.0));
        let shave = rng.random_range(0..5);
        let got = psnr(&a, &b, shave).unwrap();
        assert!((got - naive_psnr(&a, &b, shave)).abs() < 1e-9, "{got}");
    }
}

#[test]
fn ssim_matches_windowed_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let (h, w) = (rng.random_range(11..30), rng.random_range(11..30));
        let a = random_plane(h, w, &mut rng);
        let noise = random_plane(h, w, &mut rng);
        let t: f64 = rng.random_range(0.0..1.0);
        let b = ImagePlane::from_fn(h, w, PlaneRole::Y, |y, x| (1.0 - t) * a.get(y, x) + t * noise.get(y, x));
        let got = ssim(&a, &b).unwrap();
        let want = naive_ssim(&a, &b);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn ssim_bounds_and_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = random_plane(24, 24, &mut rng);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    let inv = a.map(|v| 255.0 - v);
    let s = ssim(&a, &inv).unwrap();
    assert!((-1.0..1.0).contains(&s), "{s}");
    assert!(ssim(&random_plane(10, 20, &mut rng), &random_plane(10, 20, &mut rng)).is_err());
}
