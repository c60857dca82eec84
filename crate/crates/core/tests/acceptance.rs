//! Acceptance suite. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng;
use stcomp::compressors::{byte_cost, certify_contraction, certify_induced_decay, estimate_delta};
use stcomp::config::CompressorConfig;
use stcomp::presets::{
    convex_rosenbrock_config, table1_configs, table1_report, verify_compressors, TABLE1_BYTES,
    TABLE1_DIM, TABLE1_LBITS, TABLE1_SEED,
};
use stcomp::rng::seeded;
use stcomp::telemetry::fit_rate_series;
use stcomp::{
    make_least_squares, run_inspected, spectrum, Algorithm, CompressorSpec, CostModel,
    ExperimentConfig, Graph, Objective, Problem, RunRecord, Simulation, StepSizes,
};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, budget: f64) -> Verdict {
    check(
        elapsed.as_secs_f64() < budget,
        format!("{:.2}s of a {budget}s budget", elapsed.as_secs_f64()),
    )
}

fn all(parts: Vec<Verdict>) -> Verdict {
    let ok = parts.iter().all(Result::is_ok);
    let text = parts
        .into_iter()
        .map(|p| match p {
            Ok(s) => s,
            Err(s) => format!("FAILED: {s}"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    check(ok, text)
}

/// Bit equality of every observer copy with its source node's own copy.
fn observers_identical(sim: &Simulation) -> bool {
    let state = sim.state();
    state.observers.iter().all(|copies| {
        copies.iter().all(|(j, copy)| {
            let own = state.observer(*j, *j).unwrap();
            copy.iter()
                .zip(own.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
        })
    })
}

#[derive(Default)]
struct RunStats {
    max_dual_sum: f64,
    observer_mismatches: u64,
    rounds_checked: u64,
}

fn run_checked(config: &ExperimentConfig) -> (RunRecord, RunStats) {
    let mut stats = RunStats::default();
    let record = run_inspected(config, |sim| {
        if let Some(sum) = sim.state().dual_sum() {
            stats.max_dual_sum = stats.max_dual_sum.max(sum.norm());
        }
        if sim.problem().algorithm.uses_observers() && !observers_identical(sim) {
            stats.observer_mismatches += 1;
        }
        stats.rounds_checked += 1;
        Ok(())
    })
    .expect("run completes");
    (record, stats)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let model = CostModel::default();
    let specs = [
        CompressorSpec::identity(),
        CompressorSpec::scalarization(),
        CompressorSpec::topk(2).unwrap(),
        CompressorSpec::uniform_quantizer(),
        CompressorSpec::unbiased_lbits(TABLE1_LBITS, 0).unwrap(),
    ];
    let bytes: Vec<u64> = specs.iter().map(|s| byte_cost(s, 5, &model)).collect();
    all(vec![
        check(
            bytes == [40, 8, 16, 9, 20],
            format!("bytes/iteration {bytes:?}"),
        ),
        within(start.elapsed(), 1.0),
    ])
}

struct Table1Data {
    records: Vec<RunRecord>,
    stats: Vec<RunStats>,
    elapsed: Duration,
}

fn table1_data() -> Table1Data {
    let start = Instant::now();
    let (records, stats) = table1_configs(TABLE1_SEED).iter().map(run_checked).unzip();
    Table1Data {
        records,
        stats,
        elapsed: start.elapsed(),
    }
}

fn criterion_2(data: &Table1Data) -> Verdict {
    let report = table1_report(data.records.clone());
    let rows: Vec<String> = report
        .summary
        .rows
        .iter()
        .map(|r| format!("{}={:?}", r.label, r.total_bytes))
        .collect();
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    all(vec![
        check(
            failed.is_empty(),
            format!("total bytes {}; failed checks {failed:?}", rows.join(", ")),
        ),
        check(
            report
                .summary
                .rows
                .iter()
                .map(|r| r.bytes_per_iter)
                .eq(TABLE1_BYTES),
            "bytes/iteration column".into(),
        ),
        within(data.elapsed, 60.0),
    ])
}

fn criterion_3(data: &Table1Data) -> Verdict {
    let parts = data
        .records
        .iter()
        .map(|r| match (r.converged(), r.fitted_rate) {
            (true, Some(fit)) => check(
                fit.gamma_hat > 0.0 && fit.r2 >= 0.98,
                format!("{} γ̂={:.3e} R²={:.5}", r.label, fit.gamma_hat, fit.r2),
            ),
            _ => Err(format!("{} has no fitted rate", r.label)),
        })
        .collect();
    all(parts)
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded(41);
    let mut parts = Vec::new();
    for (spec, kappa0) in verify_compressors(TABLE1_DIM, 7) {
        let report = certify_induced_decay(&spec, kappa0, TABLE1_DIM, 100, 500, &mut rng).unwrap();
        parts.push(check(
            report.violations == 0,
            format!(
                "{} κ0={kappa0}: {} violations",
                spec.name(),
                report.violations
            ),
        ));
    }
    parts.push(within(start.elapsed(), 10.0));
    all(parts)
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded(42);
    let mut parts = Vec::new();
    for spec in [
        CompressorSpec::topk(2).unwrap(),
        CompressorSpec::uniform_quantizer(),
        CompressorSpec::saturated_quantizer(0.5).unwrap(),
    ] {
        let (p, phi) = spec.contraction_params(TABLE1_DIM).unwrap();
        let report = certify_contraction(&spec, p, phi, 100_000, TABLE1_DIM, &mut rng).unwrap();
        parts.push(check(
            report.violations == 0,
            format!(
                "{} (p={p}, φ={phi}): {} violations, worst ratio {:.4}",
                spec.name(),
                report.violations,
                report.worst_ratio.unwrap()
            ),
        ));
    }
    parts.push(within(start.elapsed(), 5.0));
    all(parts)
}

fn criterion_6() -> Verdict {
    let ring = spectrum(&Graph::ring(10, 1.0).unwrap().laplacian()).unwrap();
    let mut rng = seeded(43);
    let mut delta =
        |spec: CompressorSpec| estimate_delta(&spec, &ring, TABLE1_DIM, 10_000, &mut rng).unwrap();
    let identity = delta(CompressorSpec::identity());
    let scalar = delta(CompressorSpec::scalarization());
    let top1 = delta(CompressorSpec::topk(1).unwrap());
    all(vec![
        check(identity <= 1e-10, format!("identity δ̂={identity:.2e}")),
        check(scalar <= 1e-10, format!("scalarization δ̂={scalar:.2e}")),
        check(top1 > 1e-3, format!("topk k=1 δ̂={top1:.3}")),
    ])
}

fn variant(algorithm: Algorithm, spec: CompressorSpec, kappa0: f64) -> ExperimentConfig {
    let mut config = table1_configs(TABLE1_SEED)[0].clone();
    config.label = format!("{algorithm}_{}", spec.name());
    config.algorithm = algorithm;
    config.compressor = Some(CompressorConfig::from_spec(&spec));
    config.steps.kappa0 = kappa0;
    config
}

fn criterion_7(data: &Table1Data) -> Verdict {
    let mut parts = Vec::new();
    for (record, stats) in data.records.iter().zip(&data.stats) {
        parts.push(check(
            record.converged() && stats.max_dual_sum <= 1e-9,
            format!("dpd_oc/{} max‖Σv‖={:.1e}", record.label, stats.max_dual_sum),
        ));
    }
    for config in [
        variant(Algorithm::DpdDc, CompressorSpec::scalarization(), 0.3),
        variant(Algorithm::DpdFc, CompressorSpec::topk(2).unwrap(), 1.0),
        variant(Algorithm::DpdFc, CompressorSpec::scalarization(), 1.0),
    ] {
        let (record, stats) = run_checked(&config);
        parts.push(check(
            record.converged() && stats.max_dual_sum <= 1e-9,
            format!(
                "{} converged={} max‖Σv‖={:.1e}",
                config.label,
                record.converged(),
                stats.max_dual_sum
            ),
        ));
    }

    let graph = Graph::ring(10, 1.0).unwrap();
    let problem = Problem::new(
        Algorithm::ConsensusDc,
        graph,
        CompressorSpec::scalarization(),
    );
    let mut rng = seeded(44);
    let x0: Vec<DVector<f64>> = (0..10)
        .map(|_| DVector::from_fn(TABLE1_DIM, |_, _| rng.gen_range(-5.0..5.0)))
        .collect();
    let steps = StepSizes {
        kappa0: 0.3,
        ..StepSizes::default()
    };
    let mut sim = Simulation::new(problem, steps, x0).unwrap();
    let mean0 = sim.state().mean_x();
    let mut drift = 0.0f64;
    for _ in 0..10_000 {
        sim.step().unwrap();
        drift = drift.max((sim.state().mean_x() - &mean0).amax());
    }
    parts.push(check(
        drift <= 1e-9,
        format!("consensus_dc average drift {drift:.1e} over 10⁴ rounds"),
    ));
    all(parts)
}

fn criterion_8(data: &Table1Data) -> Verdict {
    let mut parts = Vec::new();
    let mut rounds = 0;
    for (record, stats) in data.records.iter().zip(&data.stats) {
        rounds += stats.rounds_checked;
        parts.push(check(
            stats.observer_mismatches == 0,
            format!(
                "dpd_oc/{}: {} mismatched rounds",
                record.label, stats.observer_mismatches
            ),
        ));
    }
    for (_, spec) in stcomp::presets::table1_compressors(5) {
        let kappa0 = spec.certified_kappa0(TABLE1_DIM);
        let mut config = variant(Algorithm::ConsensusOc, spec, kappa0);
        config.objective = None;
        config.dimension = Some(TABLE1_DIM);
        config.steps.alpha = 0.1;
        config.max_rounds = 3000;
        config.target_accuracy = None;
        let (_, stats) = run_checked(&config);
        rounds += stats.rounds_checked;
        parts.push(check(
            stats.observer_mismatches == 0,
            format!(
                "{}: {} mismatched rounds",
                config.label, stats.observer_mismatches
            ),
        ));
    }
    if parts.iter().all(Result::is_ok) {
        Ok(format!(
            "{rounds} rounds across {} OC runs, all copies bit-identical",
            parts.len()
        ))
    } else {
        all(parts)
    }
}

fn criterion_9() -> Verdict {
    let parts = common::oracle_cases()
        .into_iter()
        .map(|(alg, c)| {
            let gap = common::max_oracle_gap(alg, c, 10);
            check(gap <= 1e-14, format!("{alg}/{c:?} {gap:.1e}"))
        })
        .collect();
    all(parts)
}

fn criterion_10() -> Verdict {
    let mut rng = seeded(45);
    let ls = make_least_squares(10, TABLE1_DIM, &mut rng).unwrap();
    let rosen = Objective::rosenbrock(10, TABLE1_DIM).unwrap();
    let mut worst_ls = 0.0f64;
    let mut worst_rosen = 0.0f64;
    for k in 0..100 {
        let i = k % 10;
        let x = DVector::from_fn(TABLE1_DIM, |_, _| rng.gen_range(-2.0..2.0));
        worst_ls = worst_ls.max(ls.check_gradient(i, &x, 1e-5).unwrap());
        worst_rosen = worst_rosen.max(rosen.check_gradient(i, &x, 1e-5).unwrap());
    }
    all(vec![
        check(
            worst_ls <= 1e-5,
            format!("least squares max rel. error {worst_ls:.1e}"),
        ),
        check(
            worst_rosen <= 1e-5,
            format!("rosenbrock_sum max rel. error {worst_rosen:.1e}"),
        ),
    ])
}

fn criterion_11() -> Verdict {
    let start = Instant::now();
    let config = convex_rosenbrock_config(TABLE1_SEED);
    let record = stcomp::run(&config).unwrap();
    all(vec![
        check(
            record.converged(),
            format!(
                "{:?}, final suboptimality {:?}",
                record.outcome, record.final_suboptimality
            ),
        ),
        within(start.elapsed(), 120.0),
    ])
}

fn criterion_12() -> Verdict {
    const SEEDS: u64 = 20;
    const ROUNDS: u64 = 4000;
    let mut mean = vec![0.0; ROUNDS as usize + 1];
    let mut mismatches = 0;
    for seed in 0..SEEDS {
        let mut config = table1_configs(TABLE1_SEED)[4].clone();
        config.compressor.as_mut().unwrap().seed = Some(seed);
        config.target_accuracy = None;
        config.max_rounds = ROUNDS;
        let (record, stats) = run_checked(&config);
        mismatches += stats.observer_mismatches;
        for (m, s) in mean.iter_mut().zip(&record.trace.samples) {
            *m += s.suboptimality.unwrap() / SEEDS as f64;
        }
    }
    let rounds: Vec<f64> = (0..=ROUNDS).map(|t| t as f64).collect();
    match fit_rate_series(&rounds, &mean, 0.5) {
        Some(fit) => check(
            fit.r2 >= 0.95 && fit.gamma_hat > 0.0 && mismatches == 0,
            format!(
                "mean over {SEEDS} seeds: γ̂={:.3e} R²={:.5}, final mean {:.2e}",
                fit.gamma_hat, fit.r2, mean[ROUNDS as usize]
            ),
        ),
        None => Err("no rate could be fitted".into()),
    }
}

fn main() {
    let mut failures = 0;
    let mut report = |id: u32, name: &str, verdict: Verdict| match verdict {
        Ok(detail) => println!("PASS criterion {id:>2} {name}: {detail}"),
        Err(detail) => {
            failures += 1;
            println!("FAIL criterion {id:>2} {name}: {detail}");
        }
    };
    report(1, "byte costs", criterion_1());
    let table1 = table1_data();
    report(2, "table reproduction", criterion_2(&table1));
    report(3, "linear rate", criterion_3(&table1));
    report(4, "induced decay certification", criterion_4());
    report(5, "contraction certification", criterion_5());
    report(6, "commutation estimator", criterion_6());
    report(7, "conservation", criterion_7(&table1));
    report(8, "observer consistency", criterion_8(&table1));
    report(9, "oracle equivalence", criterion_9());
    report(10, "gradient checks", criterion_10());
    report(11, "convex rosenbrock", criterion_11());
    report(12, "mean-square convergence", criterion_12());
    println!("acceptance: {} of 12 criteria passed", 12 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
