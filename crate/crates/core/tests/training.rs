//! Training loop: resumption and a short learning smoke run.

use dstt::data::DatasetSpec;
use dstt::train::{median, Checkpoint, StepReport, TrainConfig, Trainer};

fn run(trainer: &mut Trainer) -> Vec<StepReport> {
    let mut out = Vec::new();
    trainer
        .run(|_, r| {
            out.push(*r);
            Ok(())
        })
        .unwrap();
    out
}

#[test]
fn interrupted_run_matches_uninterrupted_bit_for_bit() {
    let cfg = TrainConfig { steps: 10, ..TrainConfig::default() };
    assert!(cfg.adversarial());
    let mut straight = Trainer::new(cfg.clone()).unwrap();
    let full = run(&mut straight);

    let mut first = Trainer::new(cfg).unwrap();
    first.set_total_steps(5);
    let mut halves = run(&mut first);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.dstt");
    first.save(&path).unwrap();
    let ckpt = Checkpoint::load(&path).unwrap();
    assert_eq!(ckpt, first.checkpoint().unwrap());

    let mut second = Trainer::resume(&ckpt, None).unwrap();
    assert_eq!(second.step_count(), 5);
    second.set_total_steps(10);
    halves.extend(run(&mut second));

    assert_eq!(halves.len(), 10);
    for (a, b) in full.iter().zip(&halves) {
        assert_eq!(a.step, b.step);
        for (x, y) in [(a.l_hole, b.l_hole), (a.l_valid, b.l_valid), (a.l_adv, b.l_adv), (a.l_d, b.l_d)] {
            assert_eq!(x.to_bits(), y.to_bits(), "step {}", a.step);
        }
    }
    assert!(second.generator().bit_equal(straight.generator()));
    assert!(second.state().discriminator.bit_equal(&straight.state().discriminator));
    assert_eq!(second.state().gen_opt, straight.state().gen_opt);
    assert_eq!(second.state().disc_opt, straight.state().disc_opt);
}

#[test]
fn hole_loss_falls_on_a_single_clip() {
    let mut cfg = TrainConfig {
        steps: 200,
        data: DatasetSpec { clips: 1, ..DatasetSpec::default() },
        ..TrainConfig::default()
    };
    cfg.loss.lambda_adv = 0.0;
    let history = run(&mut Trainer::new(cfg).unwrap());
    let hole: Vec<f64> = history.iter().map(|r| r.l_hole).collect();
    let (early, late) = (median(&hole[..50]), median(&hole[150..]));
    assert!(late < early, "median L_hole {early} -> {late}");
    assert!(history.iter().all(|r| r.l_adv == 0.0 && r.l_d == 0.0));
}
