//! Loss and metric values against independent hand-written references.

use dstt::loss::{adversarial_loss, gan_losses, loss_hole, loss_valid, total_generator_loss, LossWeights};
use dstt::metrics::{masked_psnr, psnr, ssim};
use dstt::{SeededRng, Tensor};
use proptest::prelude::*;

fn random(rng: &mut SeededRng, shape: &[usize], amp: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(-amp, amp)).collect()).unwrap()
}

/// Direct SSIM: per-window statistics from explicit loops, two-pass variance.
fn ssim_reference(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let (c1, c2) = ((0.01f64 * 2.0).powi(2), (0.03f64 * 2.0).powi(2));
    let mut sum = 0.0;
    let mut count = 0.0;
    for r in 0..=h - 8 {
        for c in 0..=w - 8 {
            let idx: Vec<usize> = (r..r + 8).flat_map(|i| (c..c + 8).map(move |j| i * w + j)).collect();
            let mean = |v: &[f64]| idx.iter().map(|&i| v[i]).sum::<f64>() / 64.0;
            let (ma, mb) = (mean(a), mean(b));
            let va = idx.iter().map(|&i| (a[i] - ma).powi(2)).sum::<f64>() / 64.0;
            let vb = idx.iter().map(|&i| (b[i] - mb).powi(2)).sum::<f64>() / 64.0;
            let cov = idx.iter().map(|&i| (a[i] - ma) * (b[i] - mb)).sum::<f64>() / 64.0;
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1.0;
        }
    }
    sum / count
}

#[test]
fn masked_l1_hand_cases() {
    let target = Tensor::<f64>::zeros(&[2, 3, 2, 2]);
    // frame 0: hole at pixel 0; frame 1: holes at pixels 2 and 3
    let m = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
    let masks = Tensor::from_vec(&[2, 1, 2, 2], m.clone()).unwrap();
    let err: Vec<f64> = (0..24).map(|i| 0.01 * i as f64).collect();
    let pred = Tensor::from_vec(&[2, 3, 2, 2], err.clone()).unwrap();
    let (mut hole, mut hole_n, mut valid, mut valid_n) = (0.0, 0.0, 0.0, 0.0);
    for (i, e) in err.iter().enumerate() {
        let mv = m[(i / 12) * 4 + i % 4];
        hole += mv * e;
        hole_n += mv;
        valid += (1.0 - mv) * e;
        valid_n += 1.0 - mv;
    }
    let got_hole = loss_hole(&pred, &target, &masks).unwrap().item().unwrap();
    let got_valid = loss_valid(&pred, &target, &masks).unwrap().item().unwrap();
    assert!((got_hole - hole / hole_n).abs() < 1e-12);
    assert!((got_valid - valid / valid_n).abs() < 1e-12);
}

#[test]
fn hole_loss_ignores_the_valid_region() {
    let mut rng = SeededRng::new(2);
    let target = random(&mut rng, &[1, 3, 4, 4], 1.0);
    let masks = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap();
    let pred = random(&mut rng, &[1, 3, 4, 4], 1.0);
    let mut noisy = pred.to_vec();
    for (i, v) in noisy.iter_mut().enumerate() {
        if (i % 16) % 3 != 0 {
            *v += 7.0;
        }
    }
    let noisy = Tensor::from_vec(&[1, 3, 4, 4], noisy).unwrap();
    let a = loss_hole(&pred, &target, &masks).unwrap().item().unwrap();
    let b = loss_hole(&noisy, &target, &masks).unwrap().item().unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn gan_losses_match_closed_forms() {
    let real = Tensor::from_vec(&[4], vec![-2.0, 0.0, 1.5, 30.0]).unwrap();
    let fake = Tensor::from_vec(&[4], vec![0.5, -1.0, 3.0, -40.0]).unwrap();
    let log_sig = |x: f64| -(1.0 + (-x).exp()).ln();
    let want_d = -(real.data().iter().map(|&x| log_sig(x)).sum::<f64>() / 4.0
        + fake.data().iter().map(|&x| log_sig(-x)).sum::<f64>() / 4.0);
    let want_adv = -fake.data().iter().map(|&x| log_sig(x)).sum::<f64>() / 4.0;
    let (l_d, l_adv) = gan_losses(&real, &fake).unwrap();
    assert!((l_d.item().unwrap() - want_d).abs() < 1e-9);
    assert!((l_adv.item().unwrap() - want_adv).abs() < 1e-9);
}

#[test]
fn adversarial_gradient_is_negative_everywhere() {
    let fake = Tensor::<f64>::from_vec(&[5], vec![-50.0, -1.0, 0.0, 2.0, 50.0]).unwrap().with_requires_grad(true);
    adversarial_loss(&fake).backward().unwrap();
    let g = fake.grad().unwrap();
    // d/dx −log σ(x) / N = −(1 − σ(x)) / N
    for (&x, &gx) in fake.data().iter().zip(&g) {
        let want = -(1.0 - 1.0 / (1.0 + (-x).exp())) / 5.0;
        assert!(gx < 0.0 || x >= 50.0);
        assert!((gx - want).abs() < 1e-12);
    }
}

#[test]
fn extreme_logits_stay_finite() {
    let logits = Tensor::from_vec(&[3], vec![-50.0f32, 0.0, 50.0]).unwrap();
    let (l_d, l_adv) = gan_losses(&logits, &logits).unwrap();
    assert!(l_d.item().unwrap().is_finite() && l_adv.item().unwrap().is_finite());
}

#[test]
fn weighted_total() {
    let got = total_generator_loss(
        &Tensor::scalar(0.2f64),
        &Tensor::scalar(0.1),
        &Tensor::scalar(0.7),
        &LossWeights::default(),
    )
    .unwrap();
    assert!((got.item().unwrap() - 0.307).abs() < 1e-12);
}

#[test]
fn psnr_falls_as_noise_grows() {
    let mut rng = SeededRng::new(3);
    let clean = random(&mut rng, &[3, 16, 16], 0.5);
    let noise = random(&mut rng, &[3, 16, 16], 1.0);
    let mut last = f64::INFINITY;
    for amp in [0.01, 0.05, 0.1, 0.3, 0.6] {
        let noisy = clean.add(&noise.scale(amp)).unwrap();
        let p = psnr(&clean, &noisy).unwrap();
        assert!(p < last, "{amp}: {p} ≥ {last}");
        last = p;
    }
}

#[test]
fn masked_psnr_equals_psnr_over_hole_pixels() {
    let mut rng = SeededRng::new(6);
    let (pred, target) = (random(&mut rng, &[2, 3, 4, 4], 1.0), random(&mut rng, &[2, 3, 4, 4], 1.0));
    let masks = Tensor::<f64>::ones(&[2, 1, 4, 4]);
    let (a, b) = (masked_psnr(&pred, &target, &masks).unwrap(), psnr(&pred, &target).unwrap());
    assert!((a - b).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ssim_matches_reference_and_is_symmetric(h in 8usize..12, w in 8usize..12, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let (a, b) = (random(&mut rng, &[h, w], 1.0), random(&mut rng, &[h, w], 1.0));
        let got = ssim(&a, &b).unwrap();
        prop_assert!((got - ssim_reference(a.data(), b.data(), h, w)).abs() < 1e-9);
        prop_assert!((got - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    /// Windows of a zero-mean period-2 pattern have zero mean, so the
    /// luminance term is 1 and negation flips the structure term's sign.
    #[test]
    fn ssim_of_a_negated_zero_mean_image_is_negative(p in 0.2f64..1.0, q in -1.0f64..1.0, r in -1.0f64..1.0) {
        let cell = [p, q, r, -(p + q + r)];
        let data: Vec<f64> = (0..100).map(|i| cell[2 * ((i / 10) % 2) + (i % 10) % 2]).collect();
        let a = Tensor::from_vec(&[10, 10], data).unwrap();
        let got = ssim(&a, &a.neg()).unwrap();
        prop_assert!(got < 0.0, "{}", got);
        prop_assert!((got - ssim_reference(a.data(), a.neg().data(), 10, 10)).abs() < 1e-9);
    }
}
