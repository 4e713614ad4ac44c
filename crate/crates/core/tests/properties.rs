use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srcondense::data::{augment, bicubic_resize, invert_augmentation, rgb_to_ycbcr, ycbcr_to_rgb, Augmentation, ImagePlane, PlaneRole};
use srcondense::lgc::CondensingConv;
use srcondense::ops::conv2d;
use srcondense::{ConvParams, ConvSpec, Shape, Tensor};

fn plane(h: usize, w: usize, seed: u64) -> ImagePlane<f64> {
    let t = Tensor::<f64>::rand_uniform(Shape::new(1, 1, h, w), 0.0, 255.0, &mut ChaCha8Rng::seed_from_u64(seed));
    ImagePlane::new(h, w, t.into_vec(), PlaneRole::Y).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bicubic_keeps_constants(h in 2usize..24, w in 2usize..24, oh in 1usize..40, ow in 1usize..40, c in 0.0f64..255.0) {
        let out = bicubic_resize(&ImagePlane::filled(h, w, c, PlaneRole::Y), oh, ow);
        prop_assert_eq!((out.height(), out.width()), (oh, ow));
        for &v in out.data() {
            prop_assert!((v - c).abs() < 1e-9, "{} vs {}", v, c);
        }
    }

    #[test]
    fn augmentation_inverts(h in 1usize..12, w in 1usize..12, seed in any::<u64>(), k in 0usize..5) {
        let p = plane(h, w, seed);
        let aug = Augmentation::ALL[k];
        let back = invert_augmentation(&augment(&p, aug), aug);
        prop_assert_eq!(back, p);
    }

    #[test]
    fn colour_round_trip(seed in any::<u64>()) {
        let (r, g, b) = (plane(5, 7, seed), plane(5, 7, seed ^ 1), plane(5, 7, seed ^ 2));
        let (y, cb, cr) = rgb_to_ycbcr(&r, &g, &b);
        let (r2, g2, b2) = ycbcr_to_rgb(&y, &cb, &cr);
        for (a, z) in [(&r, &r2), (&g, &g2), (&b, &b2)] {
            for (p, q) in a.data().iter().zip(z.data()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn conv_is_linear(seed in any::<u64>(), k in 1usize..4, s in 1usize..3, p in 0usize..2, groups in 1usize..3, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cin = 2 * groups;
        let x = Tensor::<f64>::randn(Shape::new(2, cin, 7, 6), 1.0, &mut rng);
        let y = Tensor::<f64>::randn(Shape::new(2, cin, 7, 6), 1.0, &mut rng);
        let w = Tensor::<f64>::randn(Shape::new(3 * groups, 2, k, k), 1.0, &mut rng);
        let params = ConvParams::new(w, None, ConvSpec::new(s, p, groups));
        let mix = x.zip_map(&y, |u, v| a * u + b * v).unwrap();
        let lhs = conv2d(&mix, &params).unwrap();
        let rhs = conv2d(&x, &params).unwrap().zip_map(&conv2d(&y, &params).unwrap(), |u, v| a * u + b * v).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
    }

    #[test]
    fn lgc_masks_only_shrink(seed in any::<u64>(), groups in 1usize..4, factor in 1usize..5, per_group in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cin = groups * factor * 2;
        let w = Tensor::<f64>::randn(Shape::new(groups * per_group, cin, 1, 1), 1.0, &mut rng);
        let mut l = CondensingConv::new("p", w, groups, factor).unwrap();
        let mut prev = l.mask().clone();
        for stage in 1..factor {
            l.condense().unwrap();
            for (o, n) in prev.data().iter().zip(l.mask().data()) {
                prop_assert!(*n <= *o);
            }
            prop_assert_eq!(l.retained_per_group(), CondensingConv::<f64>::retained_after(cin, factor, stage));
            prev = l.mask().clone();
        }
        prop_assert!(l.is_fully_condensed());
    }
}
