//! Subcommand implementations.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use stcomp::compressors::{
    certify_contraction, certify_contraction_expectation, certify_induced_decay, certify_pe,
    estimate_delta, CertificationReport, PeBounds,
};
use stcomp::config::{CompressorConfig, Preset};
use stcomp::presets::{self, VerifySettings};
use stcomp::rng::{stream, Stream};
use stcomp::telemetry::{summarize, Outcome};
use stcomp::{spectrum, CompressorKind, CompressorSpec, ExperimentConfig, Graph, RunRecord};

use crate::output::{write_atomic, write_json, write_record};
use crate::{CertifyArgs, Overrides, PresetArgs, PresetName, RunArgs, SweepArgs};

/// Outcome of a command that ran to completion.
pub enum Status {
    Success,
    /// A checked property failed or a run diverged.
    Failed,
}

/// Invalid user input; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(message: impl Into<String>) -> anyhow::Error {
    ConfigError(message.into()).into()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| config_error(format!("reading {}: {e}", path.display())))
}

fn parse_value(text: &str, what: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| config_error(format!("{what} is not valid JSON: {e}")))
}

fn apply_overrides(
    mut config: ExperimentConfig,
    o: &Overrides,
) -> stcomp::Result<ExperimentConfig> {
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if let Some(rounds) = o.max_rounds {
        config.max_rounds = rounds;
    }
    if let Some(eps) = o.accuracy {
        config.target_accuracy = Some(eps);
    }
    config.allow_unverified_delta |= o.allow_unverified_delta;
    config.validate()?;
    Ok(config)
}

fn out_dir(flag: &Option<PathBuf>, config: Option<&PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| config.cloned())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn describe(record: &RunRecord) -> String {
    let outcome = match &record.outcome {
        Outcome::Converged { round } => format!("converged at round {round}"),
        Outcome::Exhausted => format!("stopped after {} rounds", record.rounds()),
        Outcome::Diverged { round, message } => format!("diverged at round {round}: {message}"),
    };
    let sub = record
        .final_suboptimality
        .map_or("n/a".to_string(), |s| format!("{s:.3e}"));
    format!(
        "{}: {outcome}; {} bytes/iteration, {} bytes total, final suboptimality {sub}, {} retries",
        record.label,
        record.bytes_per_iter,
        record.trace.last().map_or(0, |s| s.cumulative_bytes),
        record.retries,
    )
}

fn diverged(record: &RunRecord) -> bool {
    matches!(record.outcome, Outcome::Diverged { .. })
}

/// Prints the sampled commutation bound for nonlinear direct compression.
fn print_delta_estimate(config: &ExperimentConfig) -> Result<()> {
    let Some(spec) = config.compressor_spec()? else {
        return Ok(());
    };
    if !(config.algorithm.is_direct() && config.allow_unverified_delta && !spec.is_linear()) {
        return Ok(());
    }
    let graph = config.graph.build(config.seed)?;
    let spec_l = spectrum(&graph.laplacian())?;
    let mut rng = stream(config.seed, Stream::Certification);
    let delta = estimate_delta(&spec, &spec_l, config.d()?, 1000, &mut rng)?;
    println!(
        "{}: unverified direct compression with {spec}; estimated δ̂ = {delta:.4e}",
        config.label
    );
    Ok(())
}

pub fn run(args: &RunArgs) -> Result<Status> {
    let text = read(&args.config)?;
    let value = parse_value(&text, "config")?;
    if let Some(preset) = value.get("preset") {
        let preset: Preset = serde_json::from_value(preset.clone())
            .map_err(|e| config_error(format!("configuration error at `preset`: {e}")))?;
        if preset != Preset::None {
            let seed = match args.overrides.seed {
                Some(s) => Some(s),
                None => value
                    .get("seed")
                    .map(|s| {
                        s.as_u64().ok_or_else(|| {
                            config_error("configuration error at `seed`: expected an integer")
                        })
                    })
                    .transpose()?,
            };
            let config_out = value
                .get("output_dir")
                .and_then(Value::as_str)
                .map(PathBuf::from);
            let out = out_dir(&args.overrides.out, config_out.as_ref());
            let name = match preset {
                Preset::Table1 => PresetName::Table1,
                Preset::ConvexRosenbrock => PresetName::ConvexRosenbrock,
                Preset::CompressorVerify => PresetName::CompressorVerify,
                Preset::None => unreachable!(),
            };
            return run_preset(name, seed, &out);
        }
    }
    let config = apply_overrides(ExperimentConfig::parse_json(&text)?, &args.overrides)?;
    let out = out_dir(&args.overrides.out, config.output_dir.as_ref());
    print_delta_estimate(&config)?;
    let record = stcomp::run(&config)?;
    write_record(&out, &record)?;
    println!("{}", describe(&record));
    Ok(if diverged(&record) {
        Status::Failed
    } else {
        Status::Success
    })
}

pub fn preset(args: &PresetArgs) -> Result<Status> {
    run_preset(args.name, args.seed, &out_dir(&args.out, None))
}

fn run_preset(name: PresetName, seed: Option<u64>, out: &Path) -> Result<Status> {
    let seed = seed.unwrap_or(presets::TABLE1_SEED);
    match name {
        PresetName::Table1 => {
            let records = presets::table1_configs(seed)
                .par_iter()
                .map(stcomp::run)
                .collect::<stcomp::Result<Vec<_>>>()?;
            for r in &records {
                write_record(out, r)?;
                println!("{}", describe(r));
            }
            let report = presets::table1_report(records);
            write_atomic(out, "table1.summary.csv", &report.summary.to_csv())?;
            print!("{}", report.summary.to_text());
            for c in &report.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            let failed = !report.passed() || report.records.iter().any(diverged);
            Ok(if failed {
                Status::Failed
            } else {
                Status::Success
            })
        }
        PresetName::ConvexRosenbrock => {
            let record = stcomp::run(&presets::convex_rosenbrock_config(seed))?;
            write_record(out, &record)?;
            println!("{}", describe(&record));
            Ok(if record.converged() {
                Status::Success
            } else {
                Status::Failed
            })
        }
        PresetName::CompressorVerify => {
            let report = presets::compressor_verify(seed, &VerifySettings::default())?;
            write_json(out, "compressor_verify.json", &report)?;
            for r in report.decay.iter().chain(&report.contraction) {
                println!("{}", describe_certificate(r));
            }
            for d in &report.delta {
                println!("commutation {}: δ̂ = {:.4e}", d.compressor, d.delta);
            }
            Ok(if report.passed() {
                Status::Success
            } else {
                Status::Failed
            })
        }
    }
}

fn describe_certificate(r: &CertificationReport) -> String {
    let rate = r
        .decay_rate
        .map_or("n/a".to_string(), |v| format!("{v:.4}"));
    format!(
        "{} {:?} {} (d = {}): {} violations in {} samples, decay rate {rate}, Lipschitz estimate {:.4}",
        if r.passed() { "PASS" } else { "FAIL" },
        r.check,
        r.compressor,
        r.dimension,
        r.violations,
        r.samples,
        r.lipschitz_estimate,
    )
}

#[derive(Serialize)]
struct CertifyOutput {
    compressor: CompressorConfig,
    dimension: usize,
    kappa0: f64,
    induced_decay: CertificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    contraction: Option<CertificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    excitation: Option<PeBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

/// Compressor, dimension and graph to certify against.
fn certify_target(args: &CertifyArgs) -> Result<(CompressorSpec, usize, Graph)> {
    let text = match (&args.config, &args.compressor) {
        (Some(path), _) => read(path)?,
        (None, Some(inline)) => inline.clone(),
        (None, None) => return Err(config_error("pass --config or --compressor")),
    };
    let value = parse_value(&text, "compressor")?;
    let ring = || Graph::ring(args.nodes, 1.0);
    let (spec, d, graph) = if value.get("compressor").is_some() {
        let config = ExperimentConfig::from_json(&text)?;
        let spec = config
            .compressor_spec()?
            .ok_or_else(|| config_error("configuration error at `compressor`: missing"))?;
        let d = args.dimension.unwrap_or(config.d()?);
        (spec, d, config.graph.build(config.seed)?)
    } else {
        let block: CompressorConfig = serde_json::from_value(value)
            .map_err(|e| config_error(format!("configuration error at `compressor`: {e}")))?;
        (
            block.to_spec()?,
            args.dimension.unwrap_or(presets::TABLE1_DIM),
            ring()?,
        )
    };
    spec.validate(Some(d))?;
    Ok((spec, d, graph))
}

pub fn certify(args: &CertifyArgs) -> Result<Status> {
    let (spec, d, graph) = certify_target(args)?;
    let kappa0 = args.kappa0.unwrap_or_else(|| spec.certified_kappa0(d));
    if !(kappa0.is_finite() && kappa0 > 0.0) {
        return Err(config_error(format!(
            "configuration error at `kappa0`: must be > 0, got {kappa0}"
        )));
    }
    let mut rng = stream(args.seed, Stream::Certification);
    let induced_decay =
        certify_induced_decay(&spec, kappa0, d, args.trials, args.horizon, &mut rng)?;
    println!("{} at κ0 = {kappa0}", describe_certificate(&induced_decay));
    let mut violations = induced_decay.violations;

    let contraction = if args.contraction {
        let report = if spec.is_stochastic() {
            let (p, phi) = match (args.p, args.phi, &spec.kind) {
                (Some(p), Some(phi), _) => (p, phi),
                (_, _, CompressorKind::UnbiasedLbits { bits }) => {
                    (1.0, 1.0 - d as f64 / 4f64.powi(*bits as i32))
                }
                _ => {
                    return Err(config_error(
                        "configuration error at `p`: pass --p and --phi",
                    ))
                }
            };
            certify_contraction_expectation(
                &spec,
                p,
                phi,
                (args.samples / 100).max(10),
                100,
                d,
                &mut rng,
            )?
        } else {
            let (p, phi) = match (args.p, args.phi) {
                (Some(p), Some(phi)) => (p, phi),
                _ => spec.contraction_params(d).ok_or_else(|| {
                    config_error(format!(
                        "configuration error at `p`: {} declares no contraction parameters; pass --p and --phi",
                        spec.name()
                    ))
                })?,
            };
            certify_contraction(&spec, p, phi, args.samples, d, &mut rng)?
        };
        println!("{}", describe_certificate(&report));
        violations += report.violations;
        Some(report)
    } else {
        None
    };

    let excitation =
        match (args.pe_window, &spec.kind) {
            (None, _) => None,
            (Some(window), CompressorKind::Scalarization { schedule }) => {
                let bounds = certify_pe(schedule, window, d, args.pe_horizon)?;
                let excited = bounds.alpha1 > 1e-12;
                println!(
                    "{} excitation over windows of {window}: α1 = {:.6}, α2 = {:.6}",
                    if excited { "PASS" } else { "FAIL" },
                    bounds.alpha1,
                    bounds.alpha2
                );
                violations += usize::from(!excited);
                Some(bounds)
            }
            (Some(_), _) => return Err(config_error(
                "configuration error at `pe_window`: excitation bounds apply to scalarization only",
            )),
        };

    let delta = if args.delta {
        let delta = estimate_delta(
            &spec,
            &spectrum(&graph.laplacian())?,
            d,
            args.samples,
            &mut rng,
        )?;
        println!("commutation on {} nodes: δ̂ = {delta:.4e}", graph.n());
        Some(delta)
    } else {
        None
    };

    let output = CertifyOutput {
        compressor: CompressorConfig::from_spec(&spec),
        dimension: d,
        kappa0,
        induced_decay,
        contraction,
        excitation,
        delta,
    };
    if let Some(out) = &args.out {
        write_json(out, &format!("{}.certify.json", spec.name()), &output)?;
    }
    Ok(if violations == 0 {
        Status::Success
    } else {
        Status::Failed
    })
}

pub fn sweep(args: &SweepArgs) -> Result<Status> {
    let base = parse_value(&read(&args.config)?, "base config")?;
    if !base.is_object() {
        return Err(config_error("base config must be a JSON object"));
    }
    let variants = parse_value(&read(&args.variants)?, "variants")?;
    let Value::Array(patches) = variants else {
        return Err(config_error(
            "variants must be a JSON array of merge patches",
        ));
    };
    let base_label = base
        .get("label")
        .and_then(Value::as_str)
        .unwrap_or("run")
        .to_string();
    let mut configs = Vec::with_capacity(patches.len());
    let mut labels = HashSet::new();
    for (i, patch) in patches.iter().enumerate() {
        let mut doc = base.clone();
        json_patch::merge(&mut doc, patch);
        if patch.get("label").is_none() {
            doc["label"] = Value::String(format!("{base_label}_{i}"));
        }
        let config = ExperimentConfig::parse_json(&doc.to_string())
            .and_then(|c| apply_overrides(c, &args.overrides))
            .with_context(|| format!("variant {i}"))?;
        if !labels.insert(config.label.clone()) {
            return Err(config_error(format!(
                "variant {i}: duplicate label `{}`",
                config.label
            )));
        }
        configs.push(config);
    }
    if configs.is_empty() {
        return Err(config_error("variants must contain at least one patch"));
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        pool = pool.num_threads(jobs);
    }
    let records = pool.build()?.install(|| {
        configs
            .par_iter()
            .map(stcomp::run)
            .collect::<stcomp::Result<Vec<_>>>()
    })?;

    for (config, record) in configs.iter().zip(&records) {
        write_record(
            &out_dir(&args.overrides.out, config.output_dir.as_ref()),
            record,
        )?;
        println!("{}", describe(record));
    }
    let eps = args
        .overrides
        .accuracy
        .or(configs[0].target_accuracy)
        .unwrap_or(presets::TABLE1_ACCURACY);
    let summary = summarize(&records, eps);
    let base_out = base
        .get("output_dir")
        .and_then(Value::as_str)
        .map(PathBuf::from);
    write_atomic(
        &out_dir(&args.overrides.out, base_out.as_ref()),
        &format!("{base_label}.sweep.csv"),
        &summary.to_csv(),
    )?;
    print!("{}", summary.to_text());
    Ok(if records.iter().any(diverged) {
        Status::Failed
    } else {
        Status::Success
    })
}
