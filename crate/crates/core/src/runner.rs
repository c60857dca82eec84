//! Running a configured experiment to completion.

use nalgebra::DVector;

use crate::algorithms::{Problem, Simulation, StepSizes};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::telemetry::{
    consensus_error, fit_linear_rate, suboptimality, Outcome, RoundSample, RunRecord, Trace,
    DEFAULT_TAIL_FRACTION,
};

/// Halvings of `(κ, κ0, α)` attempted after a divergence.
pub const MAX_RETRIES: u32 = 6;

/// Point the suboptimality is measured against: the objective's optimum,
/// or the initial average for pure consensus.
pub fn reference_point(problem: &Problem, x0: &[DVector<f64>]) -> Result<Option<DVector<f64>>> {
    if problem.algorithm.is_primal_dual() {
        match &problem.objective {
            Some(objective) => objective.optimum(),
            None => Ok(None),
        }
    } else {
        let d = x0.first().map_or(0, |v| v.len());
        Ok(Some(
            x0.iter().fold(DVector::zeros(d), |acc, v| acc + v) / x0.len() as f64,
        ))
    }
}

struct Attempt {
    trace: Trace,
    outcome: Outcome,
}

fn sample(sim: &Simulation, reference: Option<&DVector<f64>>) -> RoundSample {
    let x = &sim.state().x;
    RoundSample {
        round: sim.round(),
        suboptimality: reference.map(|s| suboptimality(x, s)),
        consensus_error: consensus_error(x),
        cumulative_bytes: sim.cumulative_bytes(),
    }
}

fn attempt<F: FnMut(&Simulation) -> Result<()>>(
    config: &ExperimentConfig,
    problem: &Problem,
    steps: StepSizes,
    x0: &[DVector<f64>],
    reference: Option<&DVector<f64>>,
    inspect: &mut F,
) -> Result<Attempt> {
    let mut sim = Simulation::new(problem.clone(), steps, x0.to_vec())?;
    let mut trace = Trace::default();
    let first = sample(&sim, reference);
    trace.push(first);
    inspect(&sim)?;
    let target = config.target_accuracy;
    let reached =
        |s: &RoundSample| matches!((target, s.suboptimality), (Some(eps), Some(v)) if v <= eps);
    if reached(&first) {
        return Ok(Attempt {
            trace,
            outcome: Outcome::Converged { round: 0 },
        });
    }
    while sim.round() < config.max_rounds {
        match sim.step() {
            Ok(()) => {}
            Err(Error::Divergence {
                round,
                x_norm,
                v_norm,
                detail,
            }) => {
                let message = format!(
                    "diverged at round {round} (|x| = {x_norm:e}, |v| = {v_norm:e}); {detail}"
                );
                return Ok(Attempt {
                    trace,
                    outcome: Outcome::Diverged { round, message },
                });
            }
            Err(e) => return Err(e),
        }
        inspect(&sim)?;
        let round = sim.round();
        let needs_value =
            target.is_some() || round % config.trace_stride == 0 || round == config.max_rounds;
        if !needs_value {
            continue;
        }
        let s = sample(&sim, reference);
        if reached(&s) {
            trace.push(s);
            return Ok(Attempt {
                trace,
                outcome: Outcome::Converged { round },
            });
        }
        if round % config.trace_stride == 0 || round == config.max_rounds {
            trace.push(s);
        }
    }
    Ok(Attempt {
        trace,
        outcome: Outcome::Exhausted,
    })
}

/// Runs `config`, halving the step sizes after each divergence up to
/// [`MAX_RETRIES`] times. A run that still diverges is returned with
/// [`Outcome::Diverged`] and its partial trace.
pub fn run(config: &ExperimentConfig) -> Result<RunRecord> {
    run_inspected(config, |_| Ok(()))
}

/// Like [`run`], calling `inspect` on the round-0 state and after every
/// round of every attempt; an error from `inspect` aborts the run.
pub fn run_inspected<F>(config: &ExperimentConfig, mut inspect: F) -> Result<RunRecord>
where
    F: FnMut(&Simulation) -> Result<()>,
{
    for w in config.warnings() {
        log::warn!("{}: {w}", config.label);
    }
    let (problem, x0) = config.build()?;
    let reference = reference_point(&problem, &x0)?;
    let d = x0[0].len();
    let mut steps = config.steps;
    let mut retries = 0;
    loop {
        let a = attempt(
            config,
            &problem,
            steps,
            &x0,
            reference.as_ref(),
            &mut inspect,
        )?;
        if let Outcome::Diverged { message, .. } = &a.outcome {
            if retries < MAX_RETRIES {
                retries += 1;
                steps = steps.halved();
                log::warn!(
                    "{}: {message}; retry {retries}/{MAX_RETRIES} with {steps}",
                    config.label
                );
                continue;
            }
        }
        let final_suboptimality = a.trace.last().and_then(|s| s.suboptimality);
        let fitted_rate = match a.outcome {
            Outcome::Diverged { .. } => None,
            _ => fit_linear_rate(&a.trace, DEFAULT_TAIL_FRACTION),
        };
        return Ok(RunRecord {
            label: config.label.clone(),
            config: config.clone(),
            steps,
            retries,
            bytes_per_iter: problem.bytes_per_round(d),
            outcome: a.outcome,
            final_suboptimality,
            fitted_rate,
            trace: a.trace,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "algorithm": "dpd_oc",
                "graph": {{ "kind": "ring", "n": 6 }},
                "compressor": {{ "kind": "scalarization" }},
                "objective": {{ "kind": "random_least_squares", "d": 3 }},
                "steps": {{ "kappa0": 1.0 }},
                "seed": 4
                {extra}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn no_target_runs_every_round() {
        let record = run(&config(r#", "max_rounds": 250"#)).unwrap();
        assert_eq!(record.outcome, Outcome::Exhausted);
        assert_eq!(record.trace.len(), 251);
        assert_eq!(record.trace.last().unwrap().cumulative_bytes, 250 * 8);
    }

    #[test]
    fn stride_keeps_last_round() {
        let record = run(&config(r#", "max_rounds": 95, "trace_stride": 10"#)).unwrap();
        let rounds: Vec<u64> = record.trace.samples.iter().map(|s| s.round).collect();
        assert_eq!(rounds, vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 95]);
    }

    #[test]
    fn converges_and_repeats_bit_for_bit() {
        let c = config(r#", "max_rounds": 200000, "target_accuracy": 1e-6"#);
        let a = run(&c).unwrap();
        assert!(a.converged(), "{:?}", a.outcome);
        assert!(a.final_suboptimality.unwrap() <= 1e-6);
        let b = run(&c).unwrap();
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        let fit = a.fitted_rate.unwrap();
        assert!(fit.gamma_hat > 0.0);
    }

    #[test]
    fn divergence_retries_then_recovers() {
        let mut c = config(r#", "max_rounds": 3000"#);
        c.steps.kappa = 3.0;
        let record = run(&c).unwrap();
        assert!(record.retries > 0);
        assert!(record.steps.kappa < 3.0);
        assert!(!matches!(record.outcome, Outcome::Diverged { .. }));
    }
}
