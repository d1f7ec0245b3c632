//! Frame directories: `frame_%05d.ppm` (P6) and `mask_%05d.pgm` (P5,
//! 0 = valid, 255 = hole; any sample ≥ 128 is read as a hole).

use std::fs;
use std::path::{Path, PathBuf};

use super::netpbm::{self, PnmImage};
use super::{byte_to_unit, unit_to_byte, MaskSequence, VideoClip};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn frame_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("frame_{i:05}.ppm"))
}

pub fn mask_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("mask_{i:05}.pgm"))
}

fn read_image(path: &Path, channels: usize) -> Result<PnmImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = netpbm::parse(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset: e.offset,
        message: e.message,
    })?;
    if img.channels != channels {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("expected {} image", if channels == 3 { "P6" } else { "P5" }),
        });
    }
    Ok(img)
}

fn check_size(path: &Path, img: &PnmImage, expected: Option<(usize, usize)>) -> Result<()> {
    match expected {
        Some((h, w)) if (img.height, img.width) != (h, w) => Err(Error::contract(format!(
            "{} is {}×{}, expected {h}×{w}",
            path.display(),
            img.height,
            img.width
        ))),
        _ => Ok(()),
    }
}

/// Reads `frame_00000.ppm`, `frame_00001.ppm`, … until the first gap.
pub fn load_clip(dir: &Path) -> Result<VideoClip> {
    let mut size = None;
    let mut data = Vec::new();
    let mut t = 0;
    while frame_path(dir, t).exists() {
        let path = frame_path(dir, t);
        let img = read_image(&path, 3)?;
        check_size(&path, &img, size)?;
        size = Some((img.height, img.width));
        let plane = img.width * img.height;
        let mut planar = vec![0.0f32; 3 * plane];
        for (p, px) in img.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                planar[c * plane + p] = byte_to_unit(px[c]);
            }
        }
        data.extend(planar);
        t += 1;
    }
    let (h, w) = size.ok_or_else(|| Error::NotFound(format!("no frame_00000.ppm in {}", dir.display())))?;
    VideoClip::new(Tensor::from_vec(&[t, 3, h, w], data)?)
}

/// Reads exactly `count` masks of `h×w`.
pub fn load_masks(dir: &Path, count: usize, (h, w): (usize, usize)) -> Result<MaskSequence> {
    if count == 0 {
        return Err(Error::contract("zero masks requested"));
    }
    let mut data = Vec::with_capacity(count * h * w);
    for i in 0..count {
        let path = mask_path(dir, i);
        if !path.exists() {
            return Err(Error::NotFound(format!("mask frame {i:05} not found")));
        }
        let img = read_image(&path, 1)?;
        check_size(&path, &img, Some((h, w)))?;
        data.extend(img.data.iter().map(|&b| if b >= 128 { 1.0f32 } else { 0.0 }));
    }
    MaskSequence::new(Tensor::from_vec(&[count, 1, h, w], data)?)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_clip(clip: &VideoClip, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = clip.frame_size();
    let plane = h * w;
    for i in 0..clip.frame_count() {
        let frame = clip.frame(i);
        let mut bytes = Vec::with_capacity(3 * plane);
        for p in 0..plane {
            for c in 0..3 {
                bytes.push(unit_to_byte(frame[c * plane + p]));
            }
        }
        let img = PnmImage { width: w, height: h, channels: 3, data: bytes };
        write(&frame_path(dir, i), &netpbm::encode(&img))?;
    }
    Ok(())
}

pub fn save_masks(masks: &MaskSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = masks.frame_size();
    for i in 0..masks.frame_count() {
        let data = masks.frame(i).iter().map(|&v| if v == 1.0 { 255 } else { 0 }).collect();
        let img = PnmImage { width: w, height: h, channels: 1, data };
        write(&mask_path(dir, i), &netpbm::encode(&img))?;
    }
    Ok(())
}

/// Every `clip_*`-style subdirectory holding `frame_00000.ppm`, in name
/// order; a directory that itself holds frames is a one-clip dataset.
pub fn load_dataset(dir: &Path) -> Result<Vec<VideoClip>> {
    if frame_path(dir, 0).exists() {
        return Ok(vec![load_clip(dir)?]);
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() && frame_path(&path, 0).exists() {
            dirs.push(path);
        }
    }
    if dirs.is_empty() {
        return Err(Error::NotFound(format!("no clips under {}", dir.display())));
    }
    dirs.sort();
    dirs.iter().map(|d| load_clip(d)).collect()
}
