//! Attention cost of decoupled (temporal / spatial) versus coupled MSA.
//!
//! Counts cover the two attention contractions, `Q·Kᵀ` and `softmax(·)·V`;
//! the Q/K/V/output projections cost the same in every mode and are left out.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{attention, TokenGrid};
use crate::rng::SeededRng;
use crate::tensor::{counter, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Each zone attends across all frames: `s²` groups of `t·n` tokens.
    Temporal,
    /// Each frame attends across all zones: `t` groups of `s²·n` tokens.
    Spatial,
    /// Every token attends to every other token: one group of `t·s²·n`.
    Coupled,
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionMode::Temporal => "temporal",
            AttentionMode::Spatial => "spatial",
            AttentionMode::Coupled => "coupled",
        })
    }
}

impl FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(AttentionMode::Temporal),
            "spatial" => Ok(AttentionMode::Spatial),
            "coupled" => Ok(AttentionMode::Coupled),
            other => Err(Error::config(format!("unknown attention mode {other:?}"))),
        }
    }
}

/// `(groups, tokens per group)` for a mode.
pub fn attention_groups(t: u64, s: u64, n: u64, mode: AttentionMode) -> (u64, u64) {
    match mode {
        AttentionMode::Temporal => (s * s, t * n),
        AttentionMode::Spatial => (t, s * s * n),
        AttentionMode::Coupled => (1, t * s * s * n),
    }
}

/// Analytic MACs: temporal `2t²s²n²d`, spatial `2ts⁴n²d`, coupled `2t²s⁴n²d`.
pub fn attention_mac_count(t: u64, s: u64, n: u64, d: u64, mode: AttentionMode) -> u64 {
    let (groups, tokens) = attention_groups(t, s, n, mode);
    2 * groups * tokens * tokens * d
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Non-negative fraction in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::contract("ratio with zero denominator"));
        }
        let g = gcd(num, den).max(1);
        Ok(Self { num: num / g, den: den / g })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRow {
    pub t: usize,
    pub s: usize,
    pub n: usize,
    pub d: usize,
    /// Free-text provenance of the row's geometry, echoed into the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BenchRow {
    pub fn new(t: usize, s: usize, n: usize, d: usize) -> Self {
        Self { t, s, n, d, note: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub rows: Vec<BenchRow>,
    /// Seed for the random token values.
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            rows: vec![
                BenchRow::new(5, 2, 4, 8),
                BenchRow::new(3, 3, 6, 16),
                BenchRow::new(5, 1, 16, 8),
                BenchRow::new(1, 2, 9, 8),
                BenchRow {
                    note: Some("assumed 240×432 frames: 20×36 tokens, 180 per zone".into()),
                    ..BenchRow::new(5, 2, 180, 512)
                },
            ],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMeasurement {
    pub analytic_macs: u64,
    pub measured_macs: u64,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub config: BenchRow,
    pub temporal: ModeMeasurement,
    pub spatial: ModeMeasurement,
    pub coupled: ModeMeasurement,
    /// `coupled / (temporal + spatial)`, from measured counts.
    pub ratio: Ratio,
    /// `t·s² / (t + s²)`.
    pub expected_ratio: Ratio,
}

impl ComplexityRow {
    pub fn counts_match(&self) -> bool {
        [self.temporal, self.spatial, self.coupled]
            .iter()
            .all(|m| m.analytic_macs == m.measured_macs)
            && self.ratio == self.expected_ratio
    }

    pub fn decoupled_millis(&self) -> f64 {
        self.temporal.millis + self.spatial.millis
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub rows: Vec<ComplexityRow>,
}

impl ComplexityReport {
    pub fn all_match(&self) -> bool {
        self.rows.iter().all(ComplexityRow::counts_match)
    }

    pub const CSV_HEADER: &'static str = "t,s,n,d,temporal_macs,temporal_measured,spatial_macs,spatial_measured,\
coupled_macs,coupled_measured,ratio_num,ratio_den,ratio,temporal_ms,spatial_ms,coupled_ms,note";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let c = &r.config;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.3},{:.3},{:.3},\"{}\"\n",
                c.t,
                c.s,
                c.n,
                c.d,
                r.temporal.analytic_macs,
                r.temporal.measured_macs,
                r.spatial.analytic_macs,
                r.spatial.measured_macs,
                r.coupled.analytic_macs,
                r.coupled.measured_macs,
                r.ratio.num,
                r.ratio.den,
                r.ratio.value(),
                r.temporal.millis,
                r.spatial.millis,
                r.coupled.millis,
                c.note.as_deref().unwrap_or("").replace('"', "'"),
            ));
        }
        out
    }
}

/// Zone height and width with `zh·zw = n`, as square as possible.
fn zone_shape(n: usize) -> (usize, usize) {
    let mut zh = (n as f64).sqrt() as usize;
    while zh > 1 && !n.is_multiple_of(zh) {
        zh -= 1;
    }
    let zh = zh.max(1);
    (zh, n / zh)
}

fn timed_attention(groups: &Tensor) -> Result<(u64, f64)> {
    let start = Instant::now();
    let (out, macs) = counter::measure(|| attention(groups, groups, groups));
    out?;
    Ok((macs, start.elapsed().as_secs_f64() * 1e3))
}

/// Runs single-head attention for each mode on random tokens of one row.
pub fn bench_row(row: &BenchRow, rng: &mut SeededRng) -> Result<ComplexityRow> {
    let BenchRow { t, s, n, d, .. } = *row;
    if t == 0 || s == 0 || n == 0 || d == 0 {
        return Err(Error::config(format!("bench row {row:?} has a zero extent")));
    }
    let (zh, zw) = zone_shape(n);
    let (h, w) = (s * zh, s * zw);
    let data = (0..t * h * w * d).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
    let grid = TokenGrid::new(Tensor::from_vec(&[t, h, w, d], data)?)?;

    let (tu, su, nu, du) = (t as u64, s as u64, n as u64, d as u64);
    let measure = |groups: Tensor, mode| -> Result<ModeMeasurement> {
        let (measured_macs, millis) = timed_attention(&groups)?;
        Ok(ModeMeasurement {
            analytic_macs: attention_mac_count(tu, su, nu, du, mode),
            measured_macs,
            millis,
        })
    };
    let temporal = measure(grid.temporal_groups(s)?, AttentionMode::Temporal)?;
    let spatial = measure(grid.spatial_groups(s)?, AttentionMode::Spatial)?;
    let coupled = measure(grid.tokens().reshape(&[1, t * h * w, d])?, AttentionMode::Coupled)?;
    Ok(ComplexityRow {
        config: row.clone(),
        ratio: Ratio::new(coupled.measured_macs, temporal.measured_macs + spatial.measured_macs)?,
        expected_ratio: Ratio::new(tu * su * su, tu + su * su)?,
        temporal,
        spatial,
        coupled,
    })
}

/// Benchmarks every row in order.
pub fn run_bench(config: &BenchConfig) -> Result<ComplexityReport> {
    let mut rng = SeededRng::new(config.seed);
    let rows = config.rows.iter().map(|r| bench_row(r, &mut rng)).collect::<Result<_>>()?;
    Ok(ComplexityReport { rows })
}
