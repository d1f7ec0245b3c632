//! Clips, masks, frame I/O, synthetic videos and the corruption protocol.

mod io;
mod masks;
pub mod netpbm;
mod synth;

pub use io::{frame_path, load_clip, load_dataset, load_masks, mask_path, save_clip, save_masks};
pub use masks::{gen_stationary_square_masks, MaskConfig};
pub use synth::{render_scene, synth_dataset, DatasetSpec, MovingObject, ObjectShape, Scene, Texture};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// `t` RGB frames, `t×3×h×w`, values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: Tensor<f32>,
}

impl VideoClip {
    /// Wraps `t×3×h×w` frames, clamping values into `[-1, 1]`.
    pub fn new(frames: Tensor<f32>) -> Result<Self> {
        let s = frames.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::shape(format!("clip must be t×3×h×w, got {s:?}")));
        }
        if frames.data().iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("NaN in clip frames".into()));
        }
        let clamped = frames.data().iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        Ok(Self {
            frames: Tensor::from_vec(s, clamped)?,
        })
    }

    pub fn frames(&self) -> &Tensor<f32> {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.shape()[0]
    }

    /// `(h, w)`
    pub fn frame_size(&self) -> (usize, usize) {
        (self.frames.shape()[2], self.frames.shape()[3])
    }

    /// Frames `start..start+len` as a new clip.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        Ok(Self {
            frames: self.frames.narrow(0, start, len)?.detach(),
        })
    }

    /// Data of a single frame, `3×h×w`.
    pub fn frame(&self, i: usize) -> &[f32] {
        let (h, w) = self.frame_size();
        &self.frames.data()[i * 3 * h * w..(i + 1) * 3 * h * w]
    }
}

/// Binary masks `t×1×h×w`; 1 marks a hole.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSequence {
    masks: Tensor<f32>,
}

impl MaskSequence {
    pub fn new(masks: Tensor<f32>) -> Result<Self> {
        let s = masks.shape();
        if s.len() != 4 || s[1] != 1 {
            return Err(Error::shape(format!("masks must be t×1×h×w, got {s:?}")));
        }
        if let Some(v) = masks.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::contract(format!("mask value {v} is not binary")));
        }
        Ok(Self { masks })
    }

    pub fn zeros(t: usize, h: usize, w: usize) -> Self {
        Self { masks: Tensor::zeros(&[t, 1, h, w]) }
    }

    pub fn masks(&self) -> &Tensor<f32> {
        &self.masks
    }

    pub fn frame_count(&self) -> usize {
        self.masks.shape()[0]
    }

    pub fn frame_size(&self) -> (usize, usize) {
        (self.masks.shape()[2], self.masks.shape()[3])
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let (h, w) = self.frame_size();
        &self.masks.data()[i * h * w..(i + 1) * h * w]
    }

    /// Number of hole pixels across all frames.
    pub fn hole_pixels(&self) -> usize {
        self.masks.data().iter().filter(|&&v| v == 1.0).count()
    }
}

fn check_aligned(clip: &VideoClip, masks: &MaskSequence) -> Result<()> {
    if clip.frame_count() != masks.frame_count() || clip.frame_size() != masks.frame_size() {
        return Err(Error::shape(format!(
            "clip {:?} and masks {:?} are not aligned",
            clip.frames().shape(),
            masks.masks().shape()
        )));
    }
    Ok(())
}

/// `X = Y ⊙ (1 − M)`: hole pixels become 0 (mid-gray), valid pixels are kept
/// bit-exactly.
pub fn corrupt(clip: &VideoClip, masks: &MaskSequence) -> Result<VideoClip> {
    check_aligned(clip, masks)?;
    let (h, w) = clip.frame_size();
    let plane = h * w;
    let mut out = clip.frames().to_vec();
    for (i, frame) in out.chunks_exact_mut(3 * plane).enumerate() {
        let m = masks.frame(i);
        for channel in frame.chunks_exact_mut(plane) {
            for (v, &mv) in channel.iter_mut().zip(m) {
                if mv == 1.0 {
                    *v = 0.0;
                }
            }
        }
    }
    VideoClip::new(Tensor::from_vec(clip.frames().shape(), out)?)
}

/// `Ŷ ⊙ M + X ⊙ (1 − M)`: predicted holes, original valid pixels.
pub fn composite(pred: &VideoClip, corrupted: &VideoClip, masks: &MaskSequence) -> Result<VideoClip> {
    check_aligned(pred, masks)?;
    check_aligned(corrupted, masks)?;
    let (h, w) = pred.frame_size();
    let plane = h * w;
    let mut out = corrupted.frames().to_vec();
    for (i, (frame, p)) in out.chunks_exact_mut(3 * plane).zip(pred.frames().data().chunks_exact(3 * plane)).enumerate() {
        let m = masks.frame(i);
        for (channel, pc) in frame.chunks_exact_mut(plane).zip(p.chunks_exact(plane)) {
            for ((v, &pv), &mv) in channel.iter_mut().zip(pc).zip(m) {
                if mv == 1.0 {
                    *v = pv;
                }
            }
        }
    }
    VideoClip::new(Tensor::from_vec(pred.frames().shape(), out)?)
}

/// A training pair: a random contiguous window of `t` frames and freshly
/// drawn stationary masks.
pub fn sample_training_clip(
    video: &VideoClip,
    rng: &mut SeededRng,
    t: usize,
    mask_cfg: &MaskConfig,
) -> Result<(VideoClip, MaskSequence)> {
    let len = video.frame_count();
    if t == 0 || len < t {
        return Err(Error::contract(format!(
            "cannot sample {t} frames from a video of {len}"
        )));
    }
    let start = rng.below(len - t + 1);
    let clip = video.window(start, t)?;
    let (h, w) = video.frame_size();
    let masks = mask_cfg.sample(rng, t, h, w)?;
    Ok((clip, masks))
}

/// Pixel byte to `[-1, 1]`.
pub fn byte_to_unit(p: u8) -> f32 {
    2.0 * (p as f32 / 255.0) - 1.0
}

/// `[-1, 1]` to a pixel byte, rounding half up and clamping.
pub fn unit_to_byte(v: f32) -> u8 {
    let scaled = (v as f64 + 1.0) * 0.5 * 255.0;
    (scaled + 0.5).floor().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_clip(t: usize, h: usize, w: usize) -> VideoClip {
        let n = t * 3 * h * w;
        let data = (0..n).map(|i| (i as f32 / n as f32) * 2.0 - 1.0).collect();
        VideoClip::new(Tensor::from_vec(&[t, 3, h, w], data).unwrap()).unwrap()
    }

    #[test]
    fn pixel_range_map() {
        assert_eq!(byte_to_unit(255), 1.0);
        assert_eq!(byte_to_unit(0), -1.0);
        assert!((byte_to_unit(128) - 0.003_921_6).abs() < 1e-6);
    }

    #[test]
    fn byte_roundtrip_is_exact() {
        for p in 0..=255u8 {
            assert_eq!(unit_to_byte(byte_to_unit(p)), p);
        }
    }

    #[test]
    fn corrupt_zero_mask_is_identity() {
        let clip = ramp_clip(2, 4, 4);
        let out = corrupt(&clip, &MaskSequence::zeros(2, 4, 4)).unwrap();
        assert_eq!(out, clip);
    }

    #[test]
    fn corrupt_full_mask_zeroes_everything_and_is_idempotent() {
        let clip = ramp_clip(2, 4, 4);
        let masks = MaskSequence::new(Tensor::ones(&[2, 1, 4, 4])).unwrap();
        let out = corrupt(&clip, &masks).unwrap();
        assert!(out.frames().data().iter().all(|&v| v == 0.0));
        assert_eq!(corrupt(&out, &masks).unwrap(), out);
    }

    #[test]
    fn masks_must_be_binary() {
        let t = Tensor::from_vec(&[1, 1, 1, 2], vec![0.0, 0.5]).unwrap();
        assert!(MaskSequence::new(t).is_err());
    }

    #[test]
    fn clip_values_are_clamped() {
        let t = Tensor::from_vec(&[1, 3, 1, 1], vec![2.0, -3.0, 0.5]).unwrap();
        assert_eq!(VideoClip::new(t).unwrap().frames().data(), &[1.0, -1.0, 0.5]);
    }

    #[test]
    fn sampling_five_of_five_is_identity_window() {
        let clip = ramp_clip(5, 24, 24);
        let mut rng = SeededRng::new(3);
        let (win, masks) = sample_training_clip(&clip, &mut rng, 5, &MaskConfig::default()).unwrap();
        assert_eq!(win, clip);
        assert_eq!(masks.frame_count(), 5);
    }

    #[test]
    fn sampling_from_short_video_fails() {
        let clip = ramp_clip(3, 24, 24);
        let mut rng = SeededRng::new(3);
        assert!(matches!(
            sample_training_clip(&clip, &mut rng, 5, &MaskConfig::default()),
            Err(Error::Contract(_))
        ));
    }
}
