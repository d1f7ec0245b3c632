//! Stops a run halfway, saves it, resumes from the file, and confirms the
//! losses and weights match an uninterrupted run bit for bit.

use dstt::train::{Checkpoint, StepReport, TrainConfig, Trainer};
use dstt::Result;

fn losses(trainer: &mut Trainer) -> Result<Vec<StepReport>> {
    let mut out = Vec::new();
    trainer.run(|_, r| {
        out.push(*r);
        Ok(())
    })?;
    Ok(out)
}

fn main() -> std::result::Result<(), Box<dyn std::error::Error>> {
    let cfg = TrainConfig { steps: 20, ..TrainConfig::default() };
    let dir = std::env::temp_dir().join(format!("dstt-resume-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("half.dstt");

    let mut straight = Trainer::new(cfg.clone())?;
    let full = losses(&mut straight)?;

    let mut first = Trainer::new(cfg.clone())?;
    first.set_total_steps(cfg.steps / 2);
    let mut pieced = losses(&mut first)?;
    first.save(&path)?;
    let size = std::fs::metadata(&path)?.len();
    println!("saved step {} to {} ({size} bytes)", first.step_count(), path.display());

    let mut second = Trainer::resume(&Checkpoint::load(&path)?, None)?;
    second.set_total_steps(cfg.steps);
    pieced.extend(losses(&mut second)?);

    for (a, b) in full.iter().zip(&pieced) {
        let same = a == b;
        println!("step {:>2}  L_hole {:.6}  L_d {:.6}  {}", a.step, a.l_hole, a.l_d, if same { "=" } else { "DIFFERS" });
    }
    println!("trajectories identical: {}", full == pieced);
    println!("weights identical: {}", straight.generator().bit_equal(second.generator()));
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
