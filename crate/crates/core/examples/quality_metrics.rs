//! PSNR and SSIM of a synthetic frame under increasing noise and under
//! zero-fill corruption.

use dstt::data::{corrupt, synth_dataset, DatasetSpec, MaskConfig};
use dstt::metrics::{masked_psnr, psnr, psnr_u8, ssim};
use dstt::{Result, SeededRng, Tensor};

fn main() -> Result<()> {
    let mut rng = SeededRng::new(1);
    let spec = DatasetSpec { clips: 1, ..DatasetSpec::default() };
    let clip = synth_dataset(&mut rng, &spec)?.remove(0).window(0, 5)?;
    let clean = clip.frames();

    for sigma in [0.0, 0.01, 0.05, 0.1, 0.3] {
        let noisy: Vec<f32> = clean.data().iter().map(|&v| (v + rng.uniform(-sigma, sigma) as f32).clamp(-1.0, 1.0)).collect();
        let noisy = Tensor::from_vec(clean.shape(), noisy)?;
        println!(
            "noise ±{sigma:<4}  psnr {:>7.2} dB  8-bit {:>7.2} dB  ssim {:.4}",
            psnr(&noisy, clean)?,
            psnr_u8(&noisy, clean)?,
            ssim(&noisy, clean)?
        );
    }

    let (h, w) = clip.frame_size();
    let masks = MaskConfig::default().sample(&mut rng, clip.frame_count(), h, w)?;
    let x = corrupt(&clip, &masks)?;
    println!(
        "zero-fill: psnr {:.2} dB, hole psnr {:.2} dB, ssim {:.4}",
        psnr(x.frames(), clean)?,
        masked_psnr(x.frames(), clean, masks.masks())?,
        ssim(x.frames(), clean)?
    );
    Ok(())
}
