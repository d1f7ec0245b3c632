//! Renders a few synthetic clips with training masks and writes them as
//! PPM/PGM frame directories.
//!
//! `cargo run --example synth_dataset -- [OUT_DIR]`

use std::path::PathBuf;

use dstt::data::{corrupt, save_clip, save_masks, synth_dataset, DatasetSpec, MaskConfig};
use dstt::{Result, SeededRng};

fn main() -> Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth_out".into()));
    let spec = DatasetSpec { clips: 3, ..DatasetSpec::default() };
    let mut rng = SeededRng::new(spec.seed);
    let videos = synth_dataset(&mut rng, &spec)?;
    for (i, video) in videos.iter().enumerate() {
        let (h, w) = video.frame_size();
        let masks = MaskConfig::default().sample(&mut rng, video.frame_count(), h, w)?;
        let dir = out.join(format!("clip_{i:05}"));
        save_clip(video, &dir)?;
        save_masks(&masks, &dir)?;
        save_clip(&corrupt(video, &masks)?, &dir.join("corrupted"))?;
        println!(
            "{}: {} frames of {h}×{w}, {} hole pixels per frame",
            dir.display(),
            video.frame_count(),
            masks.hole_pixels() / masks.frame_count()
        );
    }
    Ok(())
}
