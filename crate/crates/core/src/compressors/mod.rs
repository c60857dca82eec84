//! Spatio-temporal compressor catalog.
//!
//! A compressor is a map `C(x, t)` from a `d`-vector and a round index to
//! the `d`-vector the receiver actually uses. The simulator exchanges these
//! decoded vectors directly and accounts the wire size separately through
//! [`byte_cost`].
//!
//! | kind                 | decoded value                                          |
//! |----------------------|--------------------------------------------------------|
//! | `identity`           | `x`                                                    |
//! | `scalarization`      | `ψ(t) ψ(t)ᵀ x`, default `ψ(t) = e_{t mod d}`            |
//! | `topk`               | keep the `k` largest `|x_i|`, ties to the lowest index |
//! | `uniform_quantizer`  | `‖x‖∞ / 2 · sgn(x)` with `sgn(0) = 0`                  |
//! | `saturated_quantizer`| `x_i` if `|x_i| ≤ Δ`, else `sgn(x_i) Δ ⌊|x_i|/Δ⌋`       |
//! | `scaled_floor`       | `sgn(x_i) γ^t ⌊|x_i| / γ^t⌋`                           |
//! | `unbiased_lbits`     | `‖x‖∞/2^{l-1} sgn(x_i) ⌊2^{l-1}|x_i|/‖x‖∞ + ω_i⌋`       |
//!
//! Only `unbiased_lbits` is stochastic; it needs a caller-provided random
//! stream and draws one fresh `ω ∈ [0,1)^d` per call.

mod certify;
mod cost;

use std::fmt;

use nalgebra::DVector;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use certify::{
    certify_contraction, certify_contraction_expectation, certify_induced_decay,
    certify_mean_square_decay, certify_pe, contraction_slack_holds, estimate_delta,
    CertificationCheck, CertificationReport, PeBounds, MEAN_SQUARE_SEEDS,
};
pub use cost::{byte_cost, CostModel};

/// Excitation vector schedule of the scalarization compressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationSchedule {
    /// `ψ(t) = e_i` with `i = t mod d` (0-based).
    #[default]
    CyclingBasis,
    /// `ψ(t) = vectors[t mod len]`.
    Periodic(Vec<Vec<f64>>),
}

impl ExcitationSchedule {
    pub fn vector(&self, t: u64, d: usize) -> DVector<f64> {
        match self {
            ExcitationSchedule::CyclingBasis => {
                let mut v = DVector::zeros(d);
                v[(t % d as u64) as usize] = 1.0;
                v
            }
            ExcitationSchedule::Periodic(vs) => {
                DVector::from_column_slice(&vs[(t % vs.len() as u64) as usize])
            }
        }
    }

    fn validate(&self, d: Option<usize>) -> Result<()> {
        if let ExcitationSchedule::Periodic(vs) = self {
            if vs.is_empty() {
                return Err(Error::config(
                    "compressor.schedule",
                    "periodic schedule is empty",
                ));
            }
            let len = vs[0].len();
            if vs
                .iter()
                .any(|v| v.len() != len || v.iter().any(|c| !c.is_finite()))
            {
                return Err(Error::config(
                    "compressor.schedule",
                    "periodic vectors must be finite and share one length",
                ));
            }
            if let Some(d) = d {
                if len != d {
                    return Err(Error::config(
                        "compressor.schedule",
                        format!("periodic vectors have length {len}, dimension is {d}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressorKind {
    Identity,
    Scalarization {
        #[serde(default)]
        schedule: ExcitationSchedule,
    },
    Topk {
        k: usize,
    },
    UniformQuantizer,
    SaturatedQuantizer {
        delta: f64,
    },
    ScaledFloor {
        gamma: f64,
    },
    UnbiasedLbits {
        bits: u32,
    },
}

impl CompressorKind {
    pub fn name(&self) -> &'static str {
        match self {
            CompressorKind::Identity => "identity",
            CompressorKind::Scalarization { .. } => "scalarization",
            CompressorKind::Topk { .. } => "topk",
            CompressorKind::UniformQuantizer => "uniform_quantizer",
            CompressorKind::SaturatedQuantizer { .. } => "saturated_quantizer",
            CompressorKind::ScaledFloor { .. } => "scaled_floor",
            CompressorKind::UnbiasedLbits { .. } => "unbiased_lbits",
        }
    }
}

/// One validated compressor instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressorSpec {
    #[serde(flatten)]
    pub kind: CompressorKind,
    /// Fixed per-message wire size replacing the cost model's value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byte_cost_override: Option<u64>,
    /// Seed of the compressor's random stream; present iff the kind is stochastic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompressorSpec {
    /// Validates parameter ranges. Stochastic kinds get seed 0 until
    /// [`with_seed`](Self::with_seed) replaces it.
    pub fn new(kind: CompressorKind) -> Result<Self> {
        let spec = Self {
            seed: matches!(kind, CompressorKind::UnbiasedLbits { .. }).then_some(0),
            kind,
            byte_cost_override: None,
        };
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn identity() -> Self {
        Self::new(CompressorKind::Identity).expect("identity has no parameters")
    }

    pub fn scalarization() -> Self {
        Self::new(CompressorKind::Scalarization {
            schedule: ExcitationSchedule::CyclingBasis,
        })
        .expect("cycling basis is always valid")
    }

    pub fn topk(k: usize) -> Result<Self> {
        Self::new(CompressorKind::Topk { k })
    }

    pub fn uniform_quantizer() -> Self {
        Self::new(CompressorKind::UniformQuantizer).expect("no parameters")
    }

    pub fn saturated_quantizer(delta: f64) -> Result<Self> {
        Self::new(CompressorKind::SaturatedQuantizer { delta })
    }

    pub fn scaled_floor(gamma: f64) -> Result<Self> {
        Self::new(CompressorKind::ScaledFloor { gamma })
    }

    pub fn unbiased_lbits(bits: u32, seed: u64) -> Result<Self> {
        Ok(Self::new(CompressorKind::UnbiasedLbits { bits })?.with_seed(seed))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_byte_cost(mut self, bytes: u64) -> Self {
        self.byte_cost_override = Some(bytes);
        self
    }

    /// Checks parameter ranges, and dimension-dependent ones when `d` is known.
    pub fn validate(&self, d: Option<usize>) -> Result<()> {
        match &self.kind {
            CompressorKind::Identity | CompressorKind::UniformQuantizer => {}
            CompressorKind::Scalarization { schedule } => schedule.validate(d)?,
            CompressorKind::Topk { k } => {
                if *k == 0 {
                    return Err(Error::config("compressor.k", "k must be at least 1"));
                }
                if let Some(d) = d {
                    if *k > d {
                        return Err(Error::config(
                            "compressor.k",
                            format!("k = {k} exceeds the dimension d = {d}"),
                        ));
                    }
                }
            }
            CompressorKind::SaturatedQuantizer { delta } => {
                if !(delta.is_finite() && *delta > 0.0) {
                    return Err(Error::config(
                        "compressor.delta",
                        format!("Δ must be > 0, got {delta}"),
                    ));
                }
            }
            CompressorKind::ScaledFloor { gamma } => {
                let lower = (-1.0f64).exp();
                if !(*gamma > lower && *gamma < 1.0) {
                    return Err(Error::config(
                        "compressor.gamma",
                        format!("γe must lie in (e⁻¹, 1) = ({lower:.6}, 1), got {gamma}"),
                    ));
                }
            }
            CompressorKind::UnbiasedLbits { bits } => {
                if *bits == 0 || *bits > 52 {
                    return Err(Error::config(
                        "compressor.bits",
                        format!("l must be in 1..=52, got {bits}"),
                    ));
                }
            }
        }
        match (self.is_stochastic(), self.seed) {
            (true, None) => Err(Error::config(
                "compressor.seed",
                format!("stochastic kind `{}` requires a seed", self.kind.name()),
            )),
            (false, Some(_)) => Err(Error::config(
                "compressor.seed",
                format!("deterministic kind `{}` takes no seed", self.kind.name()),
            )),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.kind, CompressorKind::UnbiasedLbits { .. })
    }

    /// Linear in `x` for every `t`; such kinds commute with the disagreement
    /// projection and are safe for direct compression.
    pub fn is_linear(&self) -> bool {
        matches!(
            self.kind,
            CompressorKind::Identity | CompressorKind::Scalarization { .. }
        )
    }

    /// Declared bound `L_c` with `‖C(x,t)‖ ≤ L_c ‖x‖`. For `unbiased_lbits` it
    /// holds for every realization of `ω`.
    pub fn linear_bound(&self, d: usize) -> f64 {
        match &self.kind {
            CompressorKind::Identity
            | CompressorKind::Topk { .. }
            | CompressorKind::SaturatedQuantizer { .. }
            | CompressorKind::ScaledFloor { .. } => 1.0,
            CompressorKind::Scalarization { schedule } => match schedule {
                ExcitationSchedule::CyclingBasis => 1.0,
                ExcitationSchedule::Periodic(vs) => vs
                    .iter()
                    .map(|v| v.iter().map(|c| c * c).sum::<f64>())
                    .fold(0.0, f64::max),
            },
            // 2p with p = d/2
            CompressorKind::UniformQuantizer => d as f64,
            CompressorKind::UnbiasedLbits { bits } => {
                1.0 + (d as f64).sqrt() / 2f64.powi(*bits as i32 - 1)
            }
        }
    }

    /// `(p, φ)` of the contraction inequality for the kinds that satisfy it.
    pub fn contraction_params(&self, d: usize) -> Option<(f64, f64)> {
        match &self.kind {
            CompressorKind::Topk { k } => Some((1.0, *k as f64 / d as f64)),
            CompressorKind::UniformQuantizer => Some((d as f64 / 2.0, 1.0 / (d as f64 * d as f64))),
            CompressorKind::SaturatedQuantizer { .. } => Some((1.0, 0.75)),
            _ => None,
        }
    }

    /// Step `κ0` for which the induced recursion `x ← x − κ0 C(x,t)` is known
    /// to be linearly stable.
    pub fn certified_kappa0(&self, d: usize) -> f64 {
        match self.contraction_params(d) {
            Some((p, _)) => 1.0 / p,
            None => 1.0,
        }
    }

    pub fn payload(&self, d: usize) -> Payload {
        match &self.kind {
            CompressorKind::Identity | CompressorKind::SaturatedQuantizer { .. } => {
                Payload::Reals(d)
            }
            CompressorKind::Scalarization { .. } => Payload::Reals(1),
            CompressorKind::Topk { k } => Payload::SparseReals(*k),
            CompressorKind::UniformQuantizer => Payload::NormAndSigns(d),
            CompressorKind::ScaledFloor { .. } => Payload::Integers(d),
            CompressorKind::UnbiasedLbits { bits } => Payload::NormAndLevels { d, bits: *bits },
        }
    }

    /// Evaluates `C(x, t)`.
    pub fn apply(
        &self,
        x: &DVector<f64>,
        t: u64,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<DVector<f64>> {
        if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericInput(format!(
                "compressor input component {bad} is {}",
                x[bad]
            )));
        }
        let d = x.len();
        Ok(match &self.kind {
            CompressorKind::Identity => x.clone(),
            CompressorKind::Scalarization { schedule } => match schedule {
                ExcitationSchedule::CyclingBasis => {
                    let i = (t % d as u64) as usize;
                    let mut out = DVector::zeros(d);
                    out[i] = x[i];
                    out
                }
                ExcitationSchedule::Periodic(_) => {
                    let psi = schedule.vector(t, d);
                    &psi * psi.dot(x)
                }
            },
            CompressorKind::Topk { k } => top_k(x, *k),
            CompressorKind::UniformQuantizer => {
                let half_norm = x.amax() / 2.0;
                x.map(|v| half_norm * sign(v))
            }
            CompressorKind::SaturatedQuantizer { delta } => x.map(|v| {
                if v.abs() <= *delta {
                    v
                } else {
                    sign(v) * (delta * (v.abs() / delta).floor()).min(v.abs())
                }
            }),
            CompressorKind::ScaledFloor { gamma } => {
                let scale = gamma.powf(t as f64);
                x.map(|v| {
                    let q = v.abs() / scale;
                    if q.is_finite() {
                        sign(v) * (scale * q.floor()).min(v.abs())
                    } else {
                        // γ^t underflowed: the grid is finer than f64 resolution
                        v
                    }
                })
            }
            CompressorKind::UnbiasedLbits { bits } => {
                let rng = rng.ok_or_else(|| {
                    Error::config(
                        "compressor.seed",
                        "unbiased_lbits needs a random stream but none was supplied",
                    )
                })?;
                let levels = 2f64.powi(*bits as i32 - 1);
                let norm = x.amax();
                let mut out = DVector::zeros(d);
                for i in 0..d {
                    let omega = unit_interval(rng.next_u64());
                    if norm > 0.0 {
                        out[i] = norm / levels
                            * sign(x[i])
                            * (levels * x[i].abs() / norm + omega).floor();
                    }
                }
                out
            }
        })
    }

    /// Evaluates `C(x, t)` and packages it with its wire size under the
    /// default cost model.
    pub fn compress(
        &self,
        x: &DVector<f64>,
        t: u64,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<CompressedMessage> {
        self.compress_with(x, t, rng, &CostModel::default())
    }

    pub fn compress_with(
        &self,
        x: &DVector<f64>,
        t: u64,
        rng: Option<&mut dyn RngCore>,
        model: &CostModel,
    ) -> Result<CompressedMessage> {
        let d = x.len();
        self.validate(Some(d))?;
        let decoded = self.apply(x, t, rng)?;
        Ok(CompressedMessage {
            decoded,
            byte_cost: byte_cost(self, d, model),
            payload: self.payload(d),
        })
    }
}

impl fmt::Display for CompressorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CompressorKind::Topk { k } => write!(f, "topk(k={k})"),
            CompressorKind::SaturatedQuantizer { delta } => {
                write!(f, "saturated_quantizer(Δ={delta})")
            }
            CompressorKind::ScaledFloor { gamma } => write!(f, "scaled_floor(γe={gamma})"),
            CompressorKind::UnbiasedLbits { bits } => write!(f, "unbiased_lbits(l={bits})"),
            other => f.write_str(other.name()),
        }
    }
}

/// What would travel on the wire for one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Reals(usize),
    SparseReals(usize),
    NormAndSigns(usize),
    Integers(usize),
    NormAndLevels { d: usize, bits: u32 },
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Reals(1) => write!(f, "1 scalar"),
            Payload::Reals(n) => write!(f, "{n} scalars"),
            Payload::SparseReals(k) => write!(f, "{k} values + {k} indices"),
            Payload::NormAndSigns(d) => write!(f, "norm + {d} sign bits"),
            Payload::Integers(d) => write!(f, "{d} integers"),
            Payload::NormAndLevels { d, bits } => write!(f, "norm + {d} signed {bits}-bit levels"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMessage {
    pub decoded: DVector<f64>,
    pub byte_cost: u64,
    pub payload: Payload,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Top 53 bits of a 64-bit draw, scaled into `[0, 1)`.
fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn top_k(x: &DVector<f64>, k: usize) -> DVector<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    // stable sort keeps the lower index first among equal magnitudes
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()));
    let mut out = DVector::zeros(x.len());
    for &i in order.iter().take(k) {
        out[i] = x[i];
    }
    out
}
