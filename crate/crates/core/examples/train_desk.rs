//! Trains the default model on eight synthetic clips without the adversarial
//! term, then reports hole PSNR on scenes it never saw.
//!
//! `cargo run --release --example train_desk -- [STEPS]`

use dstt::eval::{desk_config, run_desk};
use dstt::Result;

fn main() -> Result<()> {
    let mut cfg = desk_config();
    if let Some(steps) = std::env::args().nth(1) {
        cfg.steps = steps.parse().expect("STEPS must be an integer");
    }
    let run = run_desk(cfg, |r| {
        if r.step % 100 == 0 {
            println!("step {:>5}  lr {:.0e}  L_hole {:.4}  L_valid {:.4}", r.step, r.lr, r.l_hole, r.l_valid);
        }
    })?;
    println!("median L_hole around step 50: {:.4}", run.l_hole_near_step_50());
    println!("median L_hole over the last 100 steps: {:.4}", run.final_l_hole());
    let per_clip: Vec<String> = run.held_out_psnr.iter().map(|p| format!("{p:.2}")).collect();
    println!("held-out hole PSNR: mean {:.2} dB, per clip {per_clip:?}", run.mean_held_out_psnr());
    println!("elapsed {:.1}s", run.elapsed.as_secs_f64());
    Ok(())
}
