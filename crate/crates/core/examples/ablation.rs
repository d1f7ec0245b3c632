//! Compares hierarchy depth and block order under the desk protocol.
//!
//! `cargo run --release --example ablation -- [STEPS]`

use dstt::eval::{desk_config, run_desk};
use dstt::Result;

fn main() -> Result<()> {
    let steps = std::env::args().nth(1).map_or(2000, |s| s.parse().expect("STEPS must be an integer"));
    let variants = [("tstststs", 4), ("tstststs", 0), ("ttttssss", 4), ("sssstttt", 4)];
    for (stacking, layers) in variants {
        let mut cfg = desk_config();
        cfg.steps = steps;
        cfg.model.stacking = stacking.into();
        cfg.model.hierarchy_layers = layers;
        let run = run_desk(cfg, |_| {})?;
        println!(
            "{stacking} L={layers}: held-out hole PSNR {:.2} dB, L_hole {:.4} -> {:.4}, {:.0}s",
            run.mean_held_out_psnr(),
            run.l_hole_near_step_50(),
            run.final_l_hole(),
            run.elapsed.as_secs_f64()
        );
    }
    Ok(())
}
