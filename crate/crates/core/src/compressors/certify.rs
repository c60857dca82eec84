//! Empirical certificates for the compressor axioms.
//!
//! Every routine here samples; none of them proves anything. A report with
//! zero violations means no counterexample was found among the samples.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CompressorSpec, ExcitationSchedule};
use crate::error::{Error, Result};
use crate::graph::Spectrum;
use crate::stats::linear_fit;

/// Noise realizations averaged per initial point in mean-square mode.
pub const MEAN_SQUARE_SEEDS: usize = 50;

const DIVERGENCE_NORM: f64 = 1e12;
const CONTRACTION_SLACK: f64 = 1e-12;
const MIN_DECAY_R2: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificationCheck {
    InducedDecay,
    MeanSquareDecay,
    Contraction,
    ContractionExpectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub check: CertificationCheck,
    pub compressor: String,
    pub dimension: usize,
    /// Per-step contraction factor of the worst-case normalized trajectory
    /// envelope; only set when the log-norm fit has `R² ≥ 0.9`. A value of 0
    /// means every trajectory reached exactly zero.
    pub decay_rate: Option<f64>,
    pub decay_r2: Option<f64>,
    /// Largest sampled `‖C(x,t)‖ / ‖x‖`.
    pub lipschitz_estimate: f64,
    /// Largest sampled `‖C(x)/p − x‖² / ‖x‖²` (contraction checks only).
    pub worst_ratio: Option<f64>,
    pub violations: usize,
    pub samples: usize,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Windowed excitation bounds `α1 I ≤ Σ_{s=t}^{t+T1-1} ψ(s)ψ(s)ᵀ ≤ α2 I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeBounds {
    pub alpha1: f64,
    pub alpha2: f64,
}

fn gaussian<R: Rng>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Gaussian direction with magnitudes spread over `1e-3 .. 1e3`; a quarter
/// of the samples get an independent scale per coordinate.
fn mixed_scale<R: Rng>(d: usize, rng: &mut R) -> DVector<f64> {
    let per_coordinate = rng.gen_bool(0.25);
    let common = 10f64.powf(rng.gen_range(-3.0..3.0));
    DVector::from_fn(d, |_, _| {
        let scale = if per_coordinate {
            10f64.powf(rng.gen_range(-3.0..3.0))
        } else {
            common
        };
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

fn check_counts(trials: usize, horizon: usize) -> Result<()> {
    if trials < 10 {
        return Err(Error::config(
            "certify.trials",
            format!("need at least 10 trials, got {trials}"),
        ));
    }
    if horizon < 50 {
        return Err(Error::config(
            "certify.horizon",
            format!("need a horizon of at least 50, got {horizon}"),
        ));
    }
    Ok(())
}

fn check_kappa0(kappa0: f64) -> Result<()> {
    if !(kappa0.is_finite() && kappa0 > 0.0) {
        return Err(Error::config(
            "certify.kappa0",
            format!("κ0 must be > 0, got {kappa0}"),
        ));
    }
    Ok(())
}

/// Log-linear fit over the last half of the positive prefix of `envelope`.
fn fit_envelope(envelope: &[f64]) -> (Option<f64>, Option<f64>) {
    let positive = envelope.iter().take_while(|v| **v > 0.0).count();
    if positive < 4 {
        return (Some(0.0), None);
    }
    let start = positive / 2;
    let xs: Vec<f64> = (start..positive).map(|t| t as f64).collect();
    let ys: Vec<f64> = envelope[start..positive].iter().map(|v| v.ln()).collect();
    match linear_fit(&xs, &ys) {
        Some(fit) => {
            let rate = fit
                .r2
                .filter(|r2| *r2 >= MIN_DECAY_R2)
                .map(|_| fit.slope.exp());
            (rate, fit.r2)
        }
        None => (None, None),
    }
}

/// Simulates `x(t+1) = x(t) − κ0 C(x(t), t)` from `trials` Gaussian initial
/// points. A trajectory is a violation if it ends above its starting norm or
/// exceeds `1e12`. Stochastic kinds are routed to
/// [`certify_mean_square_decay`] with [`MEAN_SQUARE_SEEDS`] realizations.
pub fn certify_induced_decay<R: Rng>(
    spec: &CompressorSpec,
    kappa0: f64,
    d: usize,
    trials: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<CertificationReport> {
    if spec.is_stochastic() {
        return certify_mean_square_decay(spec, kappa0, d, trials, horizon, MEAN_SQUARE_SEEDS, rng);
    }
    spec.validate(Some(d))?;
    check_counts(trials, horizon)?;
    check_kappa0(kappa0)?;

    let mut envelope = vec![0.0f64; horizon + 1];
    let mut violations = 0;
    let mut lipschitz = 0.0f64;
    for _ in 0..trials {
        let mut x = gaussian(d, rng);
        let start = x.norm();
        envelope[0] = envelope[0].max(1.0);
        let mut diverged = false;
        for t in 0..horizon {
            let c = spec.apply(&x, t as u64, None)?;
            let norm = x.norm();
            if norm > 0.0 {
                lipschitz = lipschitz.max(c.norm() / norm);
            }
            x.axpy(-kappa0, &c, 1.0);
            let next = x.norm();
            if !next.is_finite() || next > DIVERGENCE_NORM {
                diverged = true;
                break;
            }
            envelope[t + 1] = envelope[t + 1].max(next / start);
        }
        if diverged || x.norm() > start {
            violations += 1;
        }
    }
    let (decay_rate, decay_r2) = if violations == 0 {
        fit_envelope(&envelope)
    } else {
        (None, None)
    };
    Ok(CertificationReport {
        check: CertificationCheck::InducedDecay,
        compressor: spec.to_string(),
        dimension: d,
        decay_rate,
        decay_r2,
        lipschitz_estimate: lipschitz,
        worst_ratio: None,
        violations,
        samples: trials,
    })
}

/// Mean-square version of [`certify_induced_decay`]: for every initial point
/// the squared norm is averaged over `seeds` independent noise paths, and the
/// trial is a violation when that average ends above `‖x(0)‖²`.
pub fn certify_mean_square_decay<R: Rng>(
    spec: &CompressorSpec,
    kappa0: f64,
    d: usize,
    trials: usize,
    horizon: usize,
    seeds: usize,
    rng: &mut R,
) -> Result<CertificationReport> {
    spec.validate(Some(d))?;
    check_counts(trials, horizon)?;
    check_kappa0(kappa0)?;
    if seeds == 0 {
        return Err(Error::config(
            "certify.seeds",
            "need at least one noise realization",
        ));
    }

    let mut envelope = vec![0.0f64; horizon + 1];
    let mut violations = 0;
    let mut lipschitz = 0.0f64;
    let mut mean_square = vec![0.0f64; horizon + 1];
    for _ in 0..trials {
        let x0 = gaussian(d, rng);
        let start_sq = x0.norm_squared();
        mean_square.iter_mut().for_each(|m| *m = 0.0);
        let mut diverged = false;
        'paths: for _ in 0..seeds {
            let mut x = x0.clone();
            mean_square[0] += start_sq;
            for t in 0..horizon {
                let c = spec.apply(&x, t as u64, Some(&mut *rng))?;
                let norm = x.norm();
                if norm > 0.0 {
                    lipschitz = lipschitz.max(c.norm() / norm);
                }
                x.axpy(-kappa0, &c, 1.0);
                let sq = x.norm_squared();
                if !sq.is_finite() || sq.sqrt() > DIVERGENCE_NORM {
                    diverged = true;
                    break 'paths;
                }
                mean_square[t + 1] += sq;
            }
        }
        if diverged || mean_square[horizon] / seeds as f64 > start_sq {
            violations += 1;
            continue;
        }
        for (env, ms) in envelope.iter_mut().zip(&mean_square) {
            *env = env.max((ms / seeds as f64 / start_sq).sqrt());
        }
    }
    let (decay_rate, decay_r2) = if violations == 0 {
        fit_envelope(&envelope)
    } else {
        (None, None)
    };
    Ok(CertificationReport {
        check: CertificationCheck::MeanSquareDecay,
        compressor: spec.to_string(),
        dimension: d,
        decay_rate,
        decay_r2,
        lipschitz_estimate: lipschitz,
        worst_ratio: None,
        violations,
        samples: trials,
    })
}

/// `‖C(x,t)/p − x‖² ≤ (1 − φ)‖x‖² + 1e-12 ‖x‖²` at one point.
pub fn contraction_slack_holds(
    spec: &CompressorSpec,
    x: &DVector<f64>,
    t: u64,
    p: f64,
    phi: f64,
) -> Result<bool> {
    let c = spec.apply(x, t, None)?;
    let lhs = (c / p - x).norm_squared();
    let sq = x.norm_squared();
    Ok(lhs <= (1.0 - phi) * sq + CONTRACTION_SLACK * sq)
}

fn check_contraction_params(p: f64, phi: f64) -> Result<()> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::config(
            "certify.p",
            format!("p must be > 0, got {p}"),
        ));
    }
    if !(phi > 0.0 && phi <= 1.0) {
        return Err(Error::config(
            "certify.phi",
            format!("φ must lie in (0, 1], got {phi}"),
        ));
    }
    Ok(())
}

/// Counts violations of the contraction inequality over `samples`
/// mixed-scale points. Deterministic kinds only.
pub fn certify_contraction<R: Rng>(
    spec: &CompressorSpec,
    p: f64,
    phi: f64,
    samples: usize,
    d: usize,
    rng: &mut R,
) -> Result<CertificationReport> {
    if spec.is_stochastic() {
        return Err(Error::config(
            "compressor.kind",
            "stochastic kinds are checked with certify_contraction_expectation",
        ));
    }
    spec.validate(Some(d))?;
    check_contraction_params(p, phi)?;

    let mut violations = 0;
    let mut worst = 0.0f64;
    let mut lipschitz = 0.0f64;
    for _ in 0..samples {
        let x = mixed_scale(d, rng);
        let t = rng.gen_range(0..1000u64);
        let c = spec.apply(&x, t, None)?;
        let sq = x.norm_squared();
        if sq == 0.0 {
            continue;
        }
        let lhs = (&c / p - &x).norm_squared();
        worst = worst.max(lhs / sq);
        lipschitz = lipschitz.max(c.norm() / sq.sqrt());
        if lhs > (1.0 - phi) * sq + CONTRACTION_SLACK * sq {
            violations += 1;
        }
    }
    Ok(CertificationReport {
        check: CertificationCheck::Contraction,
        compressor: spec.to_string(),
        dimension: d,
        decay_rate: None,
        decay_r2: None,
        lipschitz_estimate: lipschitz,
        worst_ratio: Some(worst),
        violations,
        samples,
    })
}

/// Stochastic contraction `E‖C(x)/p − x‖² ≤ (1 − φ)‖x‖²`. The expectation is
/// estimated from `inner` draws per point; a point is a violation when the
/// estimate exceeds the bound by more than three standard errors.
pub fn certify_contraction_expectation<R: Rng>(
    spec: &CompressorSpec,
    p: f64,
    phi: f64,
    samples: usize,
    inner: usize,
    d: usize,
    rng: &mut R,
) -> Result<CertificationReport> {
    spec.validate(Some(d))?;
    check_contraction_params(p, phi)?;
    if inner < 2 {
        return Err(Error::config(
            "certify.inner",
            "need at least 2 inner draws per point",
        ));
    }

    let mut violations = 0;
    let mut worst = 0.0f64;
    let mut lipschitz = 0.0f64;
    for _ in 0..samples {
        let x = mixed_scale(d, rng);
        let t = rng.gen_range(0..1000u64);
        let sq = x.norm_squared();
        if sq == 0.0 {
            continue;
        }
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..inner {
            let c = spec.apply(&x, t, Some(&mut *rng))?;
            lipschitz = lipschitz.max(c.norm() / sq.sqrt());
            let e = (&c / p - &x).norm_squared();
            sum += e;
            sum_sq += e * e;
        }
        let k = inner as f64;
        let mean = sum / k;
        let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
        let stderr = (var / k).sqrt();
        worst = worst.max(mean / sq);
        if mean - 3.0 * stderr > (1.0 - phi) * sq + CONTRACTION_SLACK * sq {
            violations += 1;
        }
    }
    Ok(CertificationReport {
        check: CertificationCheck::ContractionExpectation,
        compressor: spec.to_string(),
        dimension: d,
        decay_rate: None,
        decay_r2: None,
        lipschitz_estimate: lipschitz,
        worst_ratio: Some(worst),
        violations,
        samples,
    })
}

/// Extreme eigenvalues of every window sum `Σ_{s=t}^{t+T1-1} ψ(s)ψ(s)ᵀ`
/// for `t = 0..=t_max`.
pub fn certify_pe(
    schedule: &ExcitationSchedule,
    window: usize,
    d: usize,
    t_max: u64,
) -> Result<PeBounds> {
    if window == 0 {
        return Err(Error::config(
            "certify.window",
            "window length T1 must be at least 1",
        ));
    }
    if d == 0 {
        return Err(Error::config("certify.d", "dimension must be at least 1"));
    }
    if let ExcitationSchedule::Periodic(vs) = schedule {
        if vs.is_empty() || vs.iter().any(|v| v.len() != d) {
            return Err(Error::config(
                "compressor.schedule",
                format!("periodic vectors must all have length {d}"),
            ));
        }
    }
    let mut alpha1 = f64::INFINITY;
    let mut alpha2 = f64::NEG_INFINITY;
    for t in 0..=t_max {
        let mut w = DMatrix::<f64>::zeros(d, d);
        for s in t..t + window as u64 {
            let psi = schedule.vector(s, d);
            w.ger(1.0, &psi, &psi, 1.0);
        }
        let eig = SymmetricEigen::new(w);
        alpha1 = alpha1.min(eig.eigenvalues.min());
        alpha2 = alpha2.max(eig.eigenvalues.max());
    }
    Ok(PeBounds { alpha1, alpha2 })
}

/// Sampled lower estimate of the smallest `δ` with
/// `‖C̄(S⊗ᵀx, t) − S⊗ᵀ𝒞(x, t)‖ ≤ δ ‖S⊗ᵀx‖`, where `C̄` and `𝒞` apply the
/// compressor block-wise. Samples with `‖S⊗ᵀx‖ < 1e-9` are skipped.
pub fn estimate_delta<R: Rng>(
    spec: &CompressorSpec,
    spectrum: &Spectrum,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if spec.is_stochastic() {
        return Err(Error::config(
            "compressor.kind",
            "the commutation bound is only estimated for deterministic kinds",
        ));
    }
    spec.validate(Some(d))?;
    let s = &spectrum.s_basis;
    let (n, m) = (s.nrows(), s.ncols());

    let project = |blocks: &[DVector<f64>]| -> Vec<DVector<f64>> {
        (0..m)
            .map(|k| {
                let mut acc = DVector::zeros(d);
                for (i, b) in blocks.iter().enumerate() {
                    acc.axpy(s[(i, k)], b, 1.0);
                }
                acc
            })
            .collect()
    };

    let mut delta = 0.0f64;
    for _ in 0..samples {
        let x: Vec<DVector<f64>> = (0..n).map(|_| mixed_scale(d, rng)).collect();
        let t = rng.gen_range(0..1000u64);
        let y = project(&x);
        let y_norm = y.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
        if y_norm < 1e-9 {
            continue;
        }
        let cx: Vec<DVector<f64>> = x
            .iter()
            .map(|b| spec.apply(b, t, None))
            .collect::<Result<_>>()?;
        let projected = project(&cx);
        let mut diff_sq = 0.0;
        for (yk, pk) in y.iter().zip(&projected) {
            diff_sq += (spec.apply(yk, t, None)? - pk).norm_squared();
        }
        delta = delta.max(diff_sq.sqrt() / y_norm);
    }
    Ok(delta)
}
