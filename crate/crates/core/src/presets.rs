//! Built-in reproduction experiments with pinned seeds.

use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, StepSizes};
use crate::compressors::{
    certify_contraction, certify_contraction_expectation, certify_induced_decay, estimate_delta,
    CertificationReport, CompressorSpec,
};
use crate::config::{
    CompressorConfig, ExperimentConfig, GraphConfig, InitialState, ObjectiveConfig, Preset,
};
use crate::error::Result;
use crate::graph::{spectrum, Graph};
use crate::rng::{stream, Stream};
use crate::runner::run;
use crate::telemetry::{summarize, RunRecord, SummaryTable};

/// Seed of the least-squares instance and initial state used by [`table1`].
pub const TABLE1_SEED: u64 = 1;
pub const TABLE1_NODES: usize = 10;
pub const TABLE1_DIM: usize = 5;
pub const TABLE1_ACCURACY: f64 = 1e-4;
/// Bytes per iteration expected from the default cost model, in row order.
pub const TABLE1_BYTES: [u64; 5] = [40, 8, 16, 9, 20];
/// Quantization level of the `unbiased_lbits` row.
pub const TABLE1_LBITS: u32 = 4;

pub const ROSENBROCK_ACCURACY: f64 = 1e-2;
pub const ROSENBROCK_MAX_ROUNDS: u64 = 1_000_000;

/// Compressors of the table, in row order, with their labels.
pub fn table1_compressors(seed: u64) -> Vec<(&'static str, CompressorSpec)> {
    vec![
        ("no_compression", CompressorSpec::identity()),
        ("scalarization", CompressorSpec::scalarization()),
        ("topk_k2", CompressorSpec::topk(2).expect("k = 2 is valid")),
        ("uniform_quantizer", CompressorSpec::uniform_quantizer()),
        (
            "unbiased_lbits",
            CompressorSpec::unbiased_lbits(TABLE1_LBITS, seed).expect("valid bit count"),
        ),
    ]
}

/// DPD-OC on a 10-node unit ring with a random 5-dimensional least-squares
/// objective; `κ0` is each compressor's certified step.
pub fn table1_configs(seed: u64) -> Vec<ExperimentConfig> {
    table1_compressors(seed)
        .into_iter()
        .map(|(label, spec)| ExperimentConfig {
            label: label.to_string(),
            preset: Preset::Table1,
            algorithm: Algorithm::DpdOc,
            graph: GraphConfig::Ring {
                n: TABLE1_NODES,
                weight: 1.0,
            },
            steps: StepSizes {
                kappa0: spec.certified_kappa0(TABLE1_DIM),
                ..StepSizes::default()
            },
            compressor: Some(CompressorConfig::from_spec(&spec)),
            objective: Some(ObjectiveConfig::RandomLeastSquares { d: TABLE1_DIM }),
            dimension: None,
            cost_model: Default::default(),
            max_rounds: 200_000,
            target_accuracy: Some(TABLE1_ACCURACY),
            seed,
            observer_ordering: Default::default(),
            allow_unverified_delta: false,
            initial_state: InitialState::default(),
            trace_stride: 1,
            output_dir: None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Table1Report {
    pub records: Vec<RunRecord>,
    pub summary: SummaryTable,
    pub checks: Vec<PresetCheck>,
}

impl Table1Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Checks the byte column and the total-bytes ordering of a finished table.
pub fn table1_checks(summary: &SummaryTable) -> Vec<PresetCheck> {
    let bytes: Vec<u64> = summary.rows.iter().map(|r| r.bytes_per_iter).collect();
    let mut checks = vec![PresetCheck {
        name: "bytes_per_iter".into(),
        passed: bytes == TABLE1_BYTES,
        detail: format!("{bytes:?}, expected {TABLE1_BYTES:?}"),
    }];
    let totals: Vec<Option<u64>> = summary.rows.iter().map(|r| r.total_bytes).collect();
    checks.push(PresetCheck {
        name: "all_reach_accuracy".into(),
        passed: totals.len() == TABLE1_BYTES.len() && totals.iter().all(Option::is_some),
        detail: format!("{totals:?}"),
    });
    let ordered = match totals.split_first() {
        Some((Some(base), rest)) => rest.iter().all(|t| t.is_some_and(|t| t < *base)),
        _ => false,
    };
    checks.push(PresetCheck {
        name: "compressed_total_below_baseline".into(),
        passed: ordered,
        detail: format!("{totals:?}"),
    });
    checks
}

/// Runs every row of the table sequentially.
pub fn table1(seed: u64) -> Result<Table1Report> {
    let records = table1_configs(seed)
        .iter()
        .map(run)
        .collect::<Result<Vec<_>>>()?;
    Ok(table1_report(records))
}

/// Summary and checks for already finished table runs.
pub fn table1_report(records: Vec<RunRecord>) -> Table1Report {
    let summary = summarize(&records, TABLE1_ACCURACY);
    let checks = table1_checks(&summary);
    Table1Report {
        records,
        summary,
        checks,
    }
}

/// DPD-OC with scalarization on a Rosenbrock sum with all shifts 1, started
/// from zero. The objective is convex but not strongly convex, so only the
/// accuracy target is checked.
pub fn convex_rosenbrock_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        label: "convex_rosenbrock".into(),
        preset: Preset::ConvexRosenbrock,
        algorithm: Algorithm::DpdOc,
        graph: GraphConfig::Ring {
            n: TABLE1_NODES,
            weight: 1.0,
        },
        compressor: Some(CompressorConfig::from_spec(&CompressorSpec::scalarization())),
        objective: Some(ObjectiveConfig::RosenbrockSum {
            d: TABLE1_DIM,
            shifts: None,
        }),
        dimension: None,
        steps: StepSizes {
            kappa: 0.05,
            kappa0: 1.0,
            alpha: 0.5,
            beta: 0.3,
            eta: 0.01,
        },
        cost_model: Default::default(),
        max_rounds: ROSENBROCK_MAX_ROUNDS,
        target_accuracy: Some(ROSENBROCK_ACCURACY),
        seed,
        observer_ordering: Default::default(),
        allow_unverified_delta: false,
        initial_state: InitialState::Zeros,
        trace_stride: 100,
        output_dir: None,
    }
}

/// Compressors of the certification sweep with the step each is checked at.
pub fn verify_compressors(d: usize, seed: u64) -> Vec<(CompressorSpec, f64)> {
    let with_certified = |spec: CompressorSpec| {
        let k0 = spec.certified_kappa0(d);
        (spec, k0)
    };
    vec![
        (CompressorSpec::scalarization(), 0.5),
        with_certified(CompressorSpec::topk(2).expect("valid k")),
        with_certified(CompressorSpec::uniform_quantizer()),
        with_certified(CompressorSpec::saturated_quantizer(0.5).expect("valid Δ")),
        (CompressorSpec::scaled_floor(0.9).expect("valid γ"), 1.0),
        (
            CompressorSpec::unbiased_lbits(TABLE1_LBITS, seed).expect("valid l"),
            1.0,
        ),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub compressor: String,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub decay: Vec<CertificationReport>,
    pub contraction: Vec<CertificationReport>,
    pub delta: Vec<DeltaEstimate>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.decay
            .iter()
            .chain(&self.contraction)
            .all(|r| r.passed())
    }
}

pub struct VerifySettings {
    pub d: usize,
    pub trials: usize,
    pub horizon: usize,
    pub contraction_samples: usize,
    pub delta_samples: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            d: TABLE1_DIM,
            trials: 100,
            horizon: 500,
            contraction_samples: 100_000,
            delta_samples: 10_000,
        }
    }
}

/// Induced-decay certificates for every kind, contraction certificates
/// for the contraction family and commutation estimates on the 10-node
/// ring for identity, scalarization and top-1.
pub fn compressor_verify(seed: u64, settings: &VerifySettings) -> Result<VerifyReport> {
    let d = settings.d;
    let mut rng = stream(seed, Stream::Certification);
    let mut decay = Vec::new();
    for (spec, kappa0) in verify_compressors(d, seed) {
        decay.push(certify_induced_decay(
            &spec,
            kappa0,
            d,
            settings.trials,
            settings.horizon,
            &mut rng,
        )?);
    }
    let mut contraction = Vec::new();
    for spec in [
        CompressorSpec::topk(2)?,
        CompressorSpec::uniform_quantizer(),
        CompressorSpec::saturated_quantizer(0.5)?,
    ] {
        let (p, phi) = spec.contraction_params(d).expect("contraction kind");
        contraction.push(certify_contraction(
            &spec,
            p,
            phi,
            settings.contraction_samples,
            d,
            &mut rng,
        )?);
    }
    let lbits = CompressorSpec::unbiased_lbits(TABLE1_LBITS, seed)?;
    // E‖C(x) − x‖² ≤ d ‖x‖∞² / 4^l ≤ (d / 4^l) ‖x‖²
    let phi = 1.0 - d as f64 / 4f64.powi(TABLE1_LBITS as i32);
    if phi > 0.0 {
        contraction.push(certify_contraction_expectation(
            &lbits,
            1.0,
            phi,
            (settings.contraction_samples / 100).max(10),
            100,
            d,
            &mut rng,
        )?);
    }
    let ring = spectrum(&Graph::ring(TABLE1_NODES, 1.0)?.laplacian())?;
    let mut delta = Vec::new();
    for spec in [
        CompressorSpec::identity(),
        CompressorSpec::scalarization(),
        CompressorSpec::topk(1)?,
    ] {
        delta.push(DeltaEstimate {
            compressor: spec.to_string(),
            delta: estimate_delta(&spec, &ring, d, settings.delta_samples, &mut rng)?,
        });
    }
    Ok(VerifyReport {
        decay,
        contraction,
        delta,
    })
}
