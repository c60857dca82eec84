//! Per-round metrics, rate fitting and byte-to-accuracy summaries.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::algorithms::StepSizes;
use crate::config::ExperimentConfig;
use crate::stats::linear_fit;

/// Fewest positive tail samples a rate fit accepts.
pub const MIN_FIT_SAMPLES: usize = 20;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundSample {
    pub round: u64,
    /// `Σ_i ‖x_i − s*‖²`, when the reference point is known.
    pub suboptimality: Option<f64>,
    /// `Σ_i ‖x_i − mean(x)‖²`.
    pub consensus_error: f64,
    /// Bytes sent by each node up to this round.
    pub cumulative_bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub samples: Vec<RoundSample>,
}

/// Renders a float with 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl Trace {
    pub fn push(&mut self, sample: RoundSample) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&RoundSample> {
        self.samples.last()
    }

    /// CSV with header `round,suboptimality,consensus_error,cumulative_bytes`;
    /// an unknown suboptimality is an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,suboptimality,consensus_error,cumulative_bytes\n");
        for s in &self.samples {
            let sub = s.suboptimality.map(format_float).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                s.round,
                sub,
                format_float(s.consensus_error),
                s.cumulative_bytes
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    /// Suboptimality reached the target at this round.
    Converged { round: u64 },
    /// `max_rounds` elapsed without reaching the target.
    Exhausted,
    /// The state blew up at this round even after the retry budget.
    Diverged { round: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `1 − exp(slope)` of `log(suboptimality)` against the round index.
    pub gamma_hat: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub config: ExperimentConfig,
    /// Step sizes of the attempt that produced this record.
    pub steps: StepSizes,
    /// Number of halvings applied before this attempt.
    pub retries: u32,
    pub bytes_per_iter: u64,
    pub outcome: Outcome,
    pub final_suboptimality: Option<f64>,
    pub fitted_rate: Option<RateFit>,
    /// Kept out of the JSON rendering; written as CSV instead.
    #[serde(skip)]
    pub trace: Trace,
}

impl RunRecord {
    pub fn converged(&self) -> bool {
        matches!(self.outcome, Outcome::Converged { .. })
    }

    pub fn rounds(&self) -> u64 {
        self.trace.last().map_or(0, |s| s.round)
    }
}

/// `Σ_i ‖x_i − s‖²`.
pub fn suboptimality(x: &[DVector<f64>], s: &DVector<f64>) -> f64 {
    x.iter().map(|xi| (xi - s).norm_squared()).sum()
}

/// `Σ_i ‖x_i − mean(x)‖²`.
pub fn consensus_error(x: &[DVector<f64>]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mean = x.iter().fold(DVector::zeros(x[0].len()), |acc, v| acc + v) / x.len() as f64;
    suboptimality(x, &mean)
}

/// Log-linear fit of `values` against `rounds` over the last `tail_fraction`
/// of the samples, truncated at the first non-positive value. Returns `None`
/// with fewer than [`MIN_FIT_SAMPLES`] usable samples or when `R²` is
/// undefined.
pub fn fit_rate_series(rounds: &[f64], values: &[f64], tail_fraction: f64) -> Option<RateFit> {
    let len = rounds.len().min(values.len());
    let fraction = tail_fraction.clamp(0.0, 1.0);
    let start = len - ((len as f64 * fraction).ceil() as usize).min(len);
    let positive = values[start..len]
        .iter()
        .take_while(|v| **v > 0.0 && v.is_finite())
        .count();
    if positive < MIN_FIT_SAMPLES {
        return None;
    }
    let end = start + positive;
    let ys: Vec<f64> = values[start..end].iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&rounds[start..end], &ys)?;
    Some(RateFit {
        gamma_hat: 1.0 - fit.slope.exp(),
        r2: fit.r2?,
    })
}

/// Rate fit of the suboptimality column of `trace`.
pub fn fit_linear_rate(trace: &Trace, tail_fraction: f64) -> Option<RateFit> {
    let mut rounds = Vec::with_capacity(trace.len());
    let mut values = Vec::with_capacity(trace.len());
    for s in &trace.samples {
        rounds.push(s.round as f64);
        values.push(s.suboptimality?);
    }
    fit_rate_series(&rounds, &values, tail_fraction)
}

/// First sample with suboptimality at most `eps`, if any.
fn first_hit(trace: &Trace, eps: f64) -> Option<&RoundSample> {
    trace
        .samples
        .iter()
        .find(|s| s.suboptimality.is_some_and(|v| v <= eps))
}

/// Per-node bytes sent before the suboptimality first drops to `eps`.
pub fn bytes_to_accuracy(trace: &Trace, eps: f64) -> Option<u64> {
    first_hit(trace, eps).map(|s| s.cumulative_bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub bytes_per_iter: u64,
    pub iters_to_eps: Option<u64>,
    pub total_bytes: Option<u64>,
    pub gamma_hat: Option<f64>,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub eps: f64,
    pub rows: Vec<SummaryRow>,
}

const SUMMARY_HEADER: [&str; 6] = [
    "label",
    "bytes_per_iter",
    "iters_to_eps",
    "total_bytes",
    "gamma_hat",
    "r2",
];

impl SummaryTable {
    fn cells(&self) -> Vec<[String; 6]> {
        let opt_int = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
        let opt_float = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        self.rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    r.bytes_per_iter.to_string(),
                    opt_int(r.iters_to_eps),
                    opt_int(r.total_bytes),
                    opt_float(r.gamma_hat),
                    opt_float(r.r2),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = SUMMARY_HEADER.join(",");
        out.push('\n');
        for row in self.cells() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Column-aligned rendering for terminals.
    pub fn to_text(&self) -> String {
        let cells = self.cells();
        let mut widths = SUMMARY_HEADER.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |fields: Vec<&str>| {
            let padded: Vec<String> = fields
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(k, (f, w))| {
                    if k == 0 {
                        format!("{f:<w$}")
                    } else {
                        format!("{f:>w$}")
                    }
                })
                .collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        };
        line(SUMMARY_HEADER.to_vec());
        for row in &cells {
            line(row.iter().map(String::as_str).collect());
        }
        out
    }
}

/// One row per record: bytes per round, rounds and bytes until the
/// suboptimality first reaches `eps`, and the tail rate fit.
pub fn summarize(records: &[RunRecord], eps: f64) -> SummaryTable {
    let rows = records
        .iter()
        .map(|r| {
            let hit = first_hit(&r.trace, eps);
            SummaryRow {
                label: r.label.clone(),
                bytes_per_iter: r.bytes_per_iter,
                iters_to_eps: hit.map(|s| s.round),
                total_bytes: hit.map(|s| s.cumulative_bytes),
                gamma_hat: r.fitted_rate.map(|f| f.gamma_hat),
                r2: r.fitted_rate.map(|f| f.r2),
            }
        })
        .collect();
    SummaryTable { eps, rows }
}
