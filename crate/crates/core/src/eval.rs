//! Desk-scale learning protocol: train on a handful of synthetic clips, then
//! measure hole PSNR on clips the trainer never saw.

use std::time::{Duration, Instant};

use crate::data::{corrupt, synth_dataset, DatasetSpec, MaskSequence, VideoClip};
use crate::error::{Error, Result};
use crate::metrics::masked_psnr;
use crate::model::{generator_forward, ModelConfig, ParamStore};
use crate::rng::SeededRng;
use crate::train::{median, StepReport, TrainConfig, Trainer};

/// Seed offset separating held-out scenes from training scenes.
pub const HELD_OUT_SEED_OFFSET: u64 = 0x9e37_79b9;
pub const HELD_OUT_CLIPS: usize = 8;

/// The default model trained without the adversarial term.
pub fn desk_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.loss.lambda_adv = 0.0;
    cfg
}

/// Fresh scenes from the training generator, each cut to its first
/// `clip_frames` frames and paired with masks from the training mask
/// distribution.
pub fn held_out_set(cfg: &TrainConfig, clips: usize) -> Result<Vec<(VideoClip, MaskSequence)>> {
    let seed = cfg.data.seed.wrapping_add(HELD_OUT_SEED_OFFSET);
    let spec = DatasetSpec { clips, seed, ..cfg.data.clone() };
    let mut rng = SeededRng::new(seed);
    let videos = synth_dataset(&mut rng, &spec)?;
    videos
        .iter()
        .map(|v| {
            let clip = v.window(0, cfg.clip_frames)?;
            let (h, w) = clip.frame_size();
            let masks = cfg.masks.sample(&mut rng, cfg.clip_frames, h, w)?;
            Ok((clip, masks))
        })
        .collect()
}

/// Hole PSNR of the generator on each held-out pair.
pub fn held_out_psnr(model: &ModelConfig, params: &ParamStore, set: &[(VideoClip, MaskSequence)]) -> Result<Vec<f64>> {
    let frozen = params.frozen();
    set.iter()
        .map(|(clip, masks)| {
            let x = corrupt(clip, masks)?;
            let pred = generator_forward(x.frames(), masks.masks(), model, &frozen)?;
            masked_psnr(&pred, clip.frames(), masks.masks())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DeskRun {
    pub history: Vec<StepReport>,
    pub held_out_psnr: Vec<f64>,
    pub elapsed: Duration,
}

impl DeskRun {
    pub fn mean_held_out_psnr(&self) -> f64 {
        self.held_out_psnr.iter().sum::<f64>() / self.held_out_psnr.len() as f64
    }

    fn l_hole(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.l_hole).collect()
    }

    /// Median `L_hole` over steps 26–75, i.e. around step 50.
    pub fn l_hole_near_step_50(&self) -> f64 {
        let h = self.l_hole();
        median(&h[25.min(h.len())..75.min(h.len())])
    }

    /// Median `L_hole` over the last 100 steps.
    pub fn final_l_hole(&self) -> f64 {
        let h = self.l_hole();
        median(&h[h.len().saturating_sub(100)..])
    }
}

/// Trains `cfg` from scratch and evaluates on `HELD_OUT_CLIPS` fresh scenes.
pub fn run_desk(cfg: TrainConfig, mut on_step: impl FnMut(&StepReport)) -> Result<DeskRun> {
    if cfg.steps < 75 {
        return Err(Error::config("the desk protocol needs at least 75 steps"));
    }
    let start = Instant::now();
    let held_out = held_out_set(&cfg, HELD_OUT_CLIPS)?;
    let mut trainer = Trainer::new(cfg)?;
    let mut history = Vec::new();
    trainer.run(|_, r| {
        on_step(r);
        history.push(*r);
        Ok(())
    })?;
    let held_out_psnr = held_out_psnr(&trainer.config().model, trainer.generator(), &held_out)?;
    Ok(DeskRun { history, held_out_psnr, elapsed: start.elapsed() })
}
