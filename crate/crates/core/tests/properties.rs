//! Randomized checks of the invariants that hold for arbitrary inputs.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softdecode_core::jpeg::{block_dct8, Block};
use softdecode_core::metrics::{mse, psnr, psnr_b, ssim};
use softdecode_core::net::fuse;
use softdecode_core::pipeline::{augment, extract_pairs, rotate90, Sampling};
use softdecode_core::tensor::{half_mse_loss, BatchNorm, Conv2d, Tensor};
use softdecode_core::{build_quant_table, degrade, Branch, GrayImage, QuantSpec};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tensor(shape: [usize; 4], r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| r.random_range(-1.0..1.0))
}

fn image(h: usize, w: usize, r: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::from_fn(h, w, |_, _| r.random_range(0..=255) as f64)
}

/// Piecewise-smooth content, closer to natural images than white noise.
fn smooth_image(h: usize, w: usize, r: &mut ChaCha8Rng) -> GrayImage {
    let (a, b, c) = (
        r.random_range(0.02..0.2),
        r.random_range(0.02..0.2),
        r.random_range(40.0..200.0),
    );
    GrayImage::from_fn(h, w, |i, j| {
        (c + 50.0 * (a * i as f64).sin() + 40.0 * (b * j as f64).cos() + r.random_range(-8.0..8.0))
            .clamp(0.0, 255.0)
            .round()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let mut r = rng(seed);
        let conv = Conv2d::from_parts(tensor([3, 2, 3, 3], &mut r), None).unwrap();
        let x = tensor([2, 2, 5, 6], &mut r);
        let y = tensor([2, 2, 5, 6], &mut r);
        let mut ax = x.clone();
        ax.scale(alpha);
        let mut by = y.clone();
        by.scale(beta);
        let lhs = conv.forward(&ax.add(&by).unwrap()).unwrap();
        let (fx, fy) = (conv.forward(&x).unwrap(), conv.forward(&y).unwrap());
        for ((l, a), b) in lhs.data().iter().zip(fx.data()).zip(fy.data()) {
            prop_assert!((l - (alpha * a + beta * b)).abs() < 1e-10);
        }
    }

    #[test]
    fn eval_batchnorm_is_per_sample(seed in any::<u64>(), n in 1usize..5) {
        let mut r = rng(seed);
        let mut bn = BatchNorm::<f64>::new(3);
        for v in bn.gamma.iter_mut().chain(&mut bn.beta).chain(&mut bn.running_mean) {
            *v = r.random_range(-2.0..2.0);
        }
        bn.running_var.iter_mut().for_each(|v| *v = r.random_range(0.1..3.0));
        let x = tensor([n, 3, 4, 5], &mut r);
        let batched = bn.forward_eval(&x).unwrap();
        for i in 0..n {
            let single = bn.forward_eval(&x.slice_batch(i, 1).unwrap()).unwrap();
            prop_assert_eq!(single.data(), batched.sample(i));
        }
    }

    #[test]
    fn half_mse_is_nonnegative_and_zero_only_on_equality(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = tensor([2, 4, 3, 3], &mut r);
        let b = tensor([2, 4, 3, 3], &mut r);
        let (loss, _) = half_mse_loss(&a, &b).unwrap();
        prop_assert!(loss > 0.0);
        let (zero, grad) = half_mse_loss(&a, &a).unwrap();
        prop_assert_eq!(zero, 0.0);
        prop_assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn quant_tables_are_monotone(lo in 1u8..=100, hi in 1u8..=100) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let (a, b) = (build_quant_table(lo).unwrap(), build_quant_table(hi).unwrap());
        prop_assert!(a.table().iter().zip(b.table()).all(|(x, y)| x >= y));
        prop_assert!(a.table().iter().all(|&q| (1..=255).contains(&q)));
    }

    #[test]
    fn dct_preserves_energy(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut block: Block = [[0.0; 8]; 8];
        block.iter_mut().flatten().for_each(|v| *v = r.random_range(-128.0..128.0));
        let coeffs = block_dct8(&block);
        let e0: f64 = block.iter().flatten().map(|v| v * v).sum();
        let e1: f64 = coeffs.iter().flatten().map(|v| v * v).sum();
        prop_assert!((e0 - e1).abs() <= 1e-10 * e0.max(1.0));
    }

    #[test]
    fn requantization_loses_less(seed in any::<u64>(), qf in 5u8..=90) {
        let mut r = rng(seed);
        let x = smooth_image(48, 40, &mut r);
        let spec = QuantSpec::new(qf).unwrap();
        let y = degrade(&x, &spec);
        let yy = degrade(&y, &spec);
        prop_assert!(psnr(&yy, &y).unwrap() > psnr(&y, &x).unwrap());
        prop_assert!(y.pixels().iter().all(|&v| v == v.round() && (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn psnr_b_never_exceeds_psnr(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = image(24, 32, &mut r);
        let y = image(24, 32, &mut r);
        prop_assert!(psnr_b(&x, &y).unwrap() <= psnr(&x, &y).unwrap());
    }

    #[test]
    fn metrics_are_deterministic_and_symmetric(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = image(20, 22, &mut r);
        let y = image(20, 22, &mut r);
        prop_assert_eq!(psnr(&x, &y).unwrap().to_bits(), psnr(&x, &y).unwrap().to_bits());
        prop_assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
        prop_assert_eq!(mse(&x, &y).unwrap(), mse(&y, &x).unwrap());
        prop_assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-15);
        prop_assert_eq!(psnr_b(&x, &y).unwrap().to_bits(), psnr_b(&x, &y).unwrap().to_bits());
    }

    #[test]
    fn fusion_is_symmetric(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = GrayImage::from_fn(6, 8, |_, _| r.random_range(-50.0..300.0));
        let b = GrayImage::from_fn(6, 8, |_, _| r.random_range(-50.0..300.0));
        prop_assert_eq!(fuse(&a, &b).unwrap(), fuse(&b, &a).unwrap());
        prop_assert_eq!(fuse(&a, &a).unwrap(), a.clamped());
    }

    #[test]
    fn rotations_form_a_group(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
        let img = image(h, w, &mut rng(seed));
        prop_assert_eq!(rotate90(&rotate90(&img, 1), 1), rotate90(&img, 2));
        prop_assert_eq!(rotate90(&img, 4), img.clone());
        prop_assert_eq!(rotate90(&rotate90(&img, 3), 1), img);
    }

    #[test]
    fn augmented_variants_are_even_and_large(h in 40usize..160, w in 40usize..160) {
        let img = GrayImage::from_fn(h, w, |i, j| ((i * 3 + j) % 256) as f64);
        let variants = augment(&img);
        prop_assert!(variants.len() <= 12);
        for v in &variants {
            prop_assert!(v.height() % 2 == 0 && v.width() % 2 == 0);
            prop_assert!(v.height() >= 62 && v.width() >= 62);
        }
        if h.min(w) >= 124 {
            prop_assert_eq!(variants.len(), 12);
        }
    }

    #[test]
    fn patch_pairs_are_aligned(seed in any::<u64>(), wavelet in any::<bool>()) {
        let mut r = rng(seed);
        let clean = image(70, 84, &mut r);
        let degraded = image(70, 84, &mut r);
        let branch = if wavelet { Branch::Wavelet } else { Branch::Pixel };
        let pairs = extract_pairs(&clean, &degraded, branch, 10, 31, 6, Sampling::Random, seed).unwrap();
        let unpack = |t: &Tensor<f64>| {
            softdecode_core::PackedQuad::new(t.clone(), branch.packing()).unwrap().unpack().unwrap()
        };
        for p in &pairs {
            let (oy, ox) = p.origin;
            let wx = clean.crop(2 * oy, 2 * ox, 62, 62).unwrap();
            let wy = degraded.crop(2 * oy, 2 * ox, 62, 62).unwrap();
            let (cx, cy) = (unpack(&p.x), unpack(&p.y));
            for (a, b) in cx.pixels().iter().zip(wx.pixels()).chain(cy.pixels().iter().zip(wy.pixels())) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
