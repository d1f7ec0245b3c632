//! Counts and times attention in temporal, spatial and coupled modes.

use dstt::metrics::bench::{attention_mac_count, run_bench, AttentionMode, BenchConfig};
use dstt::Result;

fn main() -> Result<()> {
    let report = run_bench(&BenchConfig::default())?;
    println!("{:>2} {:>2} {:>4} {:>4}  {:>14} {:>14} {:>16}  {:>6}  {:>10} {:>10}", "t", "s", "n", "d", "temporal", "spatial", "coupled", "ratio", "dec. ms", "coup. ms");
    for r in &report.rows {
        let c = &r.config;
        println!(
            "{:>2} {:>2} {:>4} {:>4}  {:>14} {:>14} {:>16}  {:>6}  {:>10.2} {:>10.2}{}",
            c.t,
            c.s,
            c.n,
            c.d,
            r.temporal.measured_macs,
            r.spatial.measured_macs,
            r.coupled.measured_macs,
            r.ratio.to_string(),
            r.decoupled_millis(),
            r.coupled.millis,
            c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default()
        );
    }
    println!("measured counts equal the closed forms: {}", report.all_match());
    let (t, s) = (5, 2);
    let coupled = attention_mac_count(t, s, 1, 1, AttentionMode::Coupled);
    let split = attention_mac_count(t, s, 1, 1, AttentionMode::Temporal) + attention_mac_count(t, s, 1, 1, AttentionMode::Spatial);
    println!("t={t}, s={s}: coupled / decoupled = {coupled}/{split} = t·s²/(t+s²) = {}/{}", t * s * s, t + s * s);
    Ok(())
}
