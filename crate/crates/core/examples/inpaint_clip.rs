//! Trains briefly, inpaints a held-out clip, and writes the corrupted input,
//! the raw prediction and the composite next to the ground truth.
//!
//! `cargo run --release --example inpaint_clip -- [OUT_DIR] [STEPS]`

use std::path::PathBuf;

use dstt::data::{composite, corrupt, save_clip, save_masks};
use dstt::eval::{desk_config, held_out_set};
use dstt::metrics::{masked_psnr, psnr, ssim};
use dstt::model::generator_forward;
use dstt::train::Trainer;
use dstt::{Result, VideoClip};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "inpaint_out".into()));
    let mut cfg = desk_config();
    cfg.steps = args.next().map_or(300, |s| s.parse().expect("STEPS must be an integer"));

    let mut trainer = Trainer::new(cfg.clone())?;
    trainer.run(|_, _| Ok(()))?;

    let (truth, masks) = held_out_set(&cfg, 1)?.remove(0);
    let corrupted = corrupt(&truth, &masks)?;
    let raw = generator_forward(corrupted.frames(), masks.masks(), &cfg.model, &trainer.generator().frozen())?;
    let raw = VideoClip::new(raw)?;
    let filled = composite(&raw, &corrupted, &masks)?;

    save_clip(&truth, &out.join("truth"))?;
    save_clip(&corrupted, &out.join("corrupted"))?;
    save_masks(&masks, &out.join("corrupted"))?;
    save_clip(&raw, &out.join("raw"))?;
    save_clip(&filled, &out.join("composite"))?;

    println!("after {} steps:", cfg.steps);
    println!("  zero-fill hole PSNR  {:.2} dB", masked_psnr(corrupted.frames(), truth.frames(), masks.masks())?);
    println!("  model hole PSNR      {:.2} dB", masked_psnr(raw.frames(), truth.frames(), masks.masks())?);
    println!("  composite PSNR       {:.2} dB", psnr(filled.frames(), truth.frames())?);
    println!("  composite SSIM       {:.4}", ssim(filled.frames(), truth.frames())?);
    println!("frames written under {}", out.display());
    Ok(())
}
