//! Attention cost against explicit enumeration of attending token pairs.

use dstt::metrics::bench::{attention_mac_count, bench_row, AttentionMode, BenchRow, Ratio};
use dstt::SeededRng;

/// Token coordinates `(frame, zone_row, zone_col, index_in_zone)`.
fn tokens(t: usize, s: usize, n: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for f in 0..t {
        for zr in 0..s {
            for zc in 0..s {
                for i in 0..n {
                    out.push((f, zr, zc, i));
                }
            }
        }
    }
    out
}

/// Ordered (query, key) pairs that attend to each other under `mode`.
fn pairs(t: usize, s: usize, n: usize, mode: AttentionMode) -> u64 {
    let all = tokens(t, s, n);
    let mut count = 0;
    for q in &all {
        for k in &all {
            let attends = match mode {
                AttentionMode::Temporal => (q.1, q.2) == (k.1, k.2),
                AttentionMode::Spatial => q.0 == k.0,
                AttentionMode::Coupled => true,
            };
            count += attends as u64;
        }
    }
    count
}

#[test]
fn analytic_and_measured_counts_match_enumeration() {
    let modes = [AttentionMode::Temporal, AttentionMode::Spatial, AttentionMode::Coupled];
    let mut rng = SeededRng::new(5);
    for t in 1..=3 {
        for s in 1..=3 {
            for n in 1..=3 {
                for d in 1..=2 {
                    // Each attending pair costs d MACs for the score and d for the value.
                    let brute: Vec<u64> = modes.iter().map(|&m| 2 * d as u64 * pairs(t, s, n, m)).collect();
                    let analytic: Vec<u64> =
                        modes.iter().map(|&m| attention_mac_count(t as u64, s as u64, n as u64, d as u64, m)).collect();
                    assert_eq!(analytic, brute, "t={t} s={s} n={n} d={d}");
                    let row = bench_row(&BenchRow::new(t, s, n, d), &mut rng).unwrap();
                    let measured = [row.temporal, row.spatial, row.coupled].map(|m| m.measured_macs);
                    assert_eq!(measured.to_vec(), brute, "t={t} s={s} n={n} d={d}");
                    let ratio = Ratio::new(brute[2], brute[0] + brute[1]).unwrap();
                    assert_eq!(row.ratio, ratio);
                    assert_eq!(ratio, Ratio::new((t * s * s) as u64, (t + s * s) as u64).unwrap());
                }
            }
        }
    }
}

#[test]
fn five_frames_two_by_two_zones_is_twenty_ninths() {
    let row = bench_row(&BenchRow::new(5, 2, 4, 8), &mut SeededRng::new(0)).unwrap();
    assert!(row.counts_match());
    assert_eq!(row.ratio.to_string(), "20/9");
}
