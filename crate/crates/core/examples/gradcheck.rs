//! Finite-difference check of every primitive and of the full generator and
//! discriminator on a 24×24 model.

use dstt::verify::{run_gradcheck_suite, GradcheckConfig};
use dstt::Result;

fn main() -> Result<()> {
    let cfg = GradcheckConfig::default();
    let start = std::time::Instant::now();
    let outcomes = run_gradcheck_suite(&cfg, |o| {
        println!(
            "{} {:<26} {:>4} entries ({} kinks skipped)  max rel err {:.2e}",
            if o.passed { "ok  " } else { "FAIL" },
            o.name,
            o.report.checked,
            o.report.skipped_kinks,
            o.report.max_rel_err
        );
    })?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!(
        "{} checks, {failed} failed, tolerance {:e}, {:.1}s",
        outcomes.len(),
        cfg.tolerance,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
