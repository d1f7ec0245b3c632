//! Adversarial training loop, optimizer and checkpoints.

pub mod checkpoint;
mod optim;

pub use checkpoint::{Checkpoint, Payload, Record};
pub use optim::{adam_step, collect_grads, lr_schedule, Grads, OptimConfig, OptimState};

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{corrupt, sample_training_clip, synth_dataset, DatasetSpec, MaskConfig, MaskSequence, VideoClip};
use crate::error::{Error, Result};
use crate::loss::{
    adversarial_loss, discriminator_forward, discriminator_loss, init_discriminator, loss_hole, loss_valid,
    DiscriminatorConfig, LossWeights,
};
use crate::model::{generator_forward, init_generator, ModelConfig, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: u64,
    /// Frames per training window.
    pub clip_frames: usize,
    /// Windows per step.
    pub batch_size: usize,
    pub model: ModelConfig,
    pub discriminator: DiscriminatorConfig,
    pub loss: LossWeights,
    pub optim: OptimConfig,
    pub data: DatasetSpec,
    pub masks: MaskConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 2_000,
            clip_frames: 5,
            batch_size: 1,
            model: ModelConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            loss: LossWeights::default(),
            optim: OptimConfig::default(),
            data: DatasetSpec::default(),
            masks: MaskConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.clip_frames == 0 {
            return Err(Error::config("batch_size and clip_frames must be positive"));
        }
        if self.adversarial() && self.clip_frames < crate::loss::MIN_FRAMES {
            return Err(Error::config(format!(
                "adversarial training needs clip_frames ≥ {}",
                crate::loss::MIN_FRAMES
            )));
        }
        if self.clip_frames > self.data.frames {
            return Err(Error::config(format!(
                "clip_frames {} exceeds the {} frames per video",
                self.clip_frames, self.data.frames
            )));
        }
        if (self.data.height, self.data.width) != (self.model.frame_h, self.model.frame_w) {
            return Err(Error::config(format!(
                "data frames {}×{} differ from model frames {}×{}",
                self.data.height, self.data.width, self.model.frame_h, self.model.frame_w
            )));
        }
        Ok(())
    }

    /// Whether the discriminator takes part at all.
    pub fn adversarial(&self) -> bool {
        self.loss.lambda_adv != 0.0
    }
}

/// One target window with its masks.
#[derive(Debug, Clone)]
pub struct Sample {
    pub target: VideoClip,
    pub masks: MaskSequence,
}

/// Loss components after one step. Adversarial terms are 0 when `λ_adv = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub lr: f64,
    pub l_hole: f64,
    pub l_valid: f64,
    pub l_adv: f64,
    pub l_d: f64,
}

impl StepReport {
    pub const CSV_HEADER: &'static str = "step,lr,l_hole,l_valid,l_adv,l_d";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{},{},{},{}",
            self.step, self.lr, self.l_hole, self.l_valid, self.l_adv, self.l_d
        )
    }
}

/// Everything the optimizer mutates.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub generator: ParamStore,
    pub discriminator: ParamStore,
    pub gen_opt: OptimState,
    pub disc_opt: OptimState,
}

fn non_finite_names(store: &ParamStore) -> Vec<String> {
    store
        .iter()
        .filter(|(_, t)| t.data().iter().any(|v| !v.is_finite()) || t.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())))
        .map(|(n, _)| n.to_string())
        .collect()
}

fn check_finite(losses: &[(&str, f64)], stores: &[&ParamStore]) -> Result<()> {
    let bad: Vec<String> = losses
        .iter()
        .filter(|(_, v)| !v.is_finite())
        .map(|(n, v)| format!("{n}={v}"))
        .collect();
    let tensors: Vec<String> = stores.iter().flat_map(|s| non_finite_names(s)).collect();
    if bad.is_empty() && tensors.is_empty() {
        return Ok(());
    }
    let mut msg = String::new();
    if !bad.is_empty() {
        let _ = write!(msg, "losses [{}]", bad.join(", "));
    }
    if !tensors.is_empty() {
        let _ = write!(msg, "{}tensors [{}]", if msg.is_empty() { "" } else { "; " }, tensors.join(", "));
    }
    Err(Error::NonFinite(msg))
}

fn mean(terms: Vec<Tensor>) -> Result<Tensor> {
    let n = terms.len();
    let mut it = terms.into_iter();
    let mut acc = it.next().ok_or_else(|| Error::contract("empty batch"))?;
    for t in it {
        acc = acc.add(&t)?;
    }
    Ok(acc.scale(1.0 / n as f64))
}

/// Updates the discriminator on real targets and detached predictions;
/// returns `L_D`. Nothing flows back into whatever produced `preds`.
pub fn discriminator_step(
    params: &mut ParamStore,
    opt: &mut OptimState,
    batch: &[Sample],
    preds: &[Tensor],
) -> Result<f64> {
    let disc = params.tracked();
    let terms = batch
        .iter()
        .zip(preds)
        .map(|(s, p)| {
            let real = discriminator_forward(s.target.frames(), &disc)?;
            let fake = discriminator_forward(&p.detach(), &disc)?;
            discriminator_loss(&real, &fake)
        })
        .collect::<Result<Vec<_>>>()?;
    let loss = mean(terms)?;
    let l_d = loss.item()? as f64;
    check_finite(&[("l_d", l_d)], &[params])?;
    loss.backward()?;
    let grads = collect_grads(&disc)?;
    check_finite(&[], &[&disc])?;
    adam_step(params, &grads, opt)?;
    Ok(l_d)
}

/// One optimisation step: a discriminator update on detached predictions,
/// then a generator update against the freshly updated discriminator. With
/// `λ_adv = 0` the discriminator is neither evaluated nor updated.
pub fn train_step(state: &mut TrainState, batch: &[Sample], model: &ModelConfig, weights: &LossWeights) -> Result<StepReport> {
    let adversarial = weights.lambda_adv != 0.0;
    let lr = state.gen_opt.lr();
    let gen = state.generator.tracked();
    let mut preds = Vec::with_capacity(batch.len());
    for s in batch {
        let x = corrupt(&s.target, &s.masks)?;
        preds.push(generator_forward(x.frames(), s.masks.masks(), model, &gen)?);
    }
    if preds.iter().any(|p| p.data().iter().any(|v| !v.is_finite())) {
        check_finite(&[("prediction", f64::NAN)], &[&state.generator])?;
    }

    let l_d = if adversarial {
        discriminator_step(&mut state.discriminator, &mut state.disc_opt, batch, &preds)?
    } else {
        0.0
    };

    let frozen_disc = state.discriminator.frozen();
    let (mut holes, mut valids, mut advs) = (Vec::new(), Vec::new(), Vec::new());
    for (s, p) in batch.iter().zip(&preds) {
        let m = s.masks.masks();
        holes.push(loss_hole(p, s.target.frames(), m)?);
        valids.push(loss_valid(p, s.target.frames(), m)?);
        if adversarial {
            advs.push(adversarial_loss(&discriminator_forward(p, &frozen_disc)?));
        }
    }
    let hole = mean(holes)?;
    let valid = mean(valids)?;
    let mut total = hole.scale(weights.lambda_hole).add(&valid.scale(weights.lambda_valid))?;
    let mut l_adv = 0.0;
    if adversarial {
        let adv = mean(advs)?;
        l_adv = adv.item()? as f64;
        total = total.add(&adv.scale(weights.lambda_adv))?;
    }
    let (l_hole, l_valid) = (hole.item()? as f64, valid.item()? as f64);
    check_finite(&[("l_hole", l_hole), ("l_valid", l_valid), ("l_adv", l_adv)], &[&state.generator])?;
    total.backward()?;
    let grads = collect_grads(&gen)?;
    check_finite(&[], &[&gen])?;
    adam_step(&mut state.generator, &grads, &mut state.gen_opt)?;

    Ok(StepReport {
        step: state.gen_opt.step,
        lr,
        l_hole,
        l_valid,
        l_adv,
        l_d,
    })
}

/// Owns the dataset, parameters, optimizer state and sampling stream of a run.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    state: TrainState,
    dataset: Vec<VideoClip>,
    rng: SeededRng,
}

impl Trainer {
    /// Fresh run on the synthetic dataset described by `config.data`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        let dataset = synth_dataset(&mut SeededRng::new(config.data.seed), &config.data)?;
        Self::with_dataset(config, dataset)
    }

    pub fn with_dataset(config: TrainConfig, dataset: Vec<VideoClip>) -> Result<Self> {
        config.validate()?;
        check_dataset(&config, &dataset)?;
        let mut rng = SeededRng::new(config.seed);
        let generator = init_generator(&config.model, &mut rng)?;
        let discriminator = init_discriminator(&config.discriminator, &mut rng)?;
        let state = TrainState {
            gen_opt: OptimState::new(config.optim.clone(), &generator),
            disc_opt: OptimState::new(config.optim.clone(), &discriminator),
            generator,
            discriminator,
        };
        Ok(Self { config, state, dataset, rng })
    }

    /// Restores a run; `dataset` defaults to regenerating `config.data`.
    pub fn resume(ckpt: &Checkpoint, dataset: Option<Vec<VideoClip>>) -> Result<Self> {
        let config: TrainConfig = serde_json::from_slice(ckpt.bytes("meta/config")?)?;
        config.validate()?;
        let dataset = match dataset {
            Some(d) => d,
            None => synth_dataset(&mut SeededRng::new(config.data.seed), &config.data)?,
        };
        check_dataset(&config, &dataset)?;
        let generator = restore_store(ckpt, "gen/")?;
        let discriminator = restore_store(ckpt, "disc/")?;
        let state = TrainState {
            gen_opt: restore_optim(ckpt, "adam.gen", &config.optim, &generator)?,
            disc_opt: restore_optim(ckpt, "adam.disc", &config.optim, &discriminator)?,
            generator,
            discriminator,
        };
        let rng = SeededRng::from_state(ckpt.u64("meta/rng")?);
        Ok(Self { config, state, dataset, rng })
    }

    /// Changes the step at which [`Trainer::run`] stops.
    pub fn set_total_steps(&mut self, steps: u64) {
        self.config.steps = steps;
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn generator(&self) -> &ParamStore {
        &self.state.generator
    }

    pub fn dataset(&self) -> &[VideoClip] {
        &self.dataset
    }

    /// Completed steps.
    pub fn step_count(&self) -> u64 {
        self.state.gen_opt.step
    }

    /// Draws a batch from the run's sampling stream.
    pub fn sample_batch(&mut self) -> Result<Vec<Sample>> {
        (0..self.config.batch_size)
            .map(|_| {
                let video = &self.dataset[self.rng.below(self.dataset.len())];
                let (target, masks) = sample_training_clip(video, &mut self.rng, self.config.clip_frames, &self.config.masks)?;
                Ok(Sample { target, masks })
            })
            .collect()
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let batch = self.sample_batch()?;
        train_step(&mut self.state, &batch, &self.config.model, &self.config.loss)
    }

    /// Steps until `config.steps` are done, calling `on_step` after each.
    pub fn run(&mut self, mut on_step: impl FnMut(&Self, &StepReport) -> Result<()>) -> Result<()> {
        while self.step_count() < self.config.steps {
            let report = self.step()?;
            on_step(self, &report)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut c = Checkpoint::default();
        c.push(Record::bytes("meta/config", serde_json::to_vec(&self.config)?));
        c.push(Record::u64s("meta/rng", vec![self.rng.state()]));
        for (prefix, store) in [("gen/", &self.state.generator), ("disc/", &self.state.discriminator)] {
            for (name, t) in store.iter() {
                c.push(Record::tensor(format!("{prefix}{name}"), t));
            }
        }
        for (prefix, opt) in [("adam.gen", &self.state.gen_opt), ("adam.disc", &self.state.disc_opt)] {
            c.push(Record::u64s(format!("{prefix}.step"), vec![opt.step]));
            for (name, m) in &opt.first {
                c.push(Record::f64s(format!("{prefix}.m/{name}"), m.clone()));
            }
            for (name, v) in &opt.second {
                c.push(Record::f64s(format!("{prefix}.v/{name}"), v.clone()));
            }
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint()?.save(path)
    }
}

fn check_dataset(config: &TrainConfig, dataset: &[VideoClip]) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::config("training dataset is empty"));
    }
    for (i, clip) in dataset.iter().enumerate() {
        if clip.frame_size() != (config.model.frame_h, config.model.frame_w) || clip.frame_count() < config.clip_frames {
            return Err(Error::config(format!(
                "video {i} is {} frames of {:?}; need ≥ {} frames of {}×{}",
                clip.frame_count(),
                clip.frame_size(),
                config.clip_frames,
                config.model.frame_h,
                config.model.frame_w
            )));
        }
    }
    Ok(())
}

fn restore_store(ckpt: &Checkpoint, prefix: &str) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for r in &ckpt.records {
        if let Some(name) = r.name.strip_prefix(prefix) {
            store.insert(name, ckpt.f32_tensor(&r.name)?);
        }
    }
    if store.is_empty() {
        return Err(Error::Checkpoint(format!("no {prefix}* records")));
    }
    Ok(store)
}

fn restore_optim(ckpt: &Checkpoint, prefix: &str, config: &OptimConfig, params: &ParamStore) -> Result<OptimState> {
    let mut state = OptimState::new(config.clone(), params);
    state.step = ckpt.u64(&format!("{prefix}.step"))?;
    for (name, t) in params.iter() {
        for (slot, key) in [(&mut state.first, "m"), (&mut state.second, "v")] {
            let values = ckpt.f64s(&format!("{prefix}.{key}/{name}"))?;
            if values.len() != t.numel() {
                return Err(Error::Checkpoint(format!("{prefix}.{key}/{name} has {} values", values.len())));
            }
            slot.insert(name.to_string(), values.to_vec());
        }
    }
    Ok(state)
}

/// Model configuration and generator weights from a training checkpoint.
pub fn load_generator(path: &Path) -> Result<(TrainConfig, ParamStore)> {
    let ckpt = Checkpoint::load(path)?;
    let config: TrainConfig = serde_json::from_slice(ckpt.bytes("meta/config")?)?;
    config.model.validate()?;
    Ok((config, restore_store(&ckpt, "gen/")?))
}

/// Median of `values`; NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}
