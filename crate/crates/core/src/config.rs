//! Experiment configuration: a JSON document describing one run.
//!
//! ```json
//! {
//!   "label": "oc-topk",
//!   "algorithm": "dpd_oc",
//!   "graph": { "kind": "ring", "n": 10 },
//!   "compressor": { "kind": "topk", "k": 2 },
//!   "objective": { "kind": "random_least_squares", "d": 5 },
//!   "steps": { "kappa": 0.05, "kappa0": 1.0, "beta": 0.3, "eta": 0.1 },
//!   "max_rounds": 50000,
//!   "target_accuracy": 1e-4,
//!   "seed": 1
//! }
//! ```
//!
//! Unknown keys are rejected everywhere. Parse and validation errors carry
//! the dotted path of the offending field.

use std::path::PathBuf;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, ObserverOrdering, Problem, StepSizes};
use crate::compressors::{CompressorKind, CompressorSpec, CostModel, ExcitationSchedule};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::objectives::{make_least_squares, Objective};
use crate::rng::{stream, Stream};

fn one() -> f64 {
    1.0
}

fn default_label() -> String {
    "run".to_string()
}

fn default_stride() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    Ring {
        n: usize,
        #[serde(default = "one")]
        weight: f64,
    },
    Complete {
        n: usize,
        #[serde(default = "one")]
        weight: f64,
    },
    /// Explicit undirected edges `(i, j, w)`, 0-based.
    Edges {
        n: usize,
        edges: Vec<(usize, usize, f64)>,
    },
    /// Edge-list file (`n <count>` header, then `i j w` lines).
    EdgeList { path: PathBuf },
    /// Erdős–Rényi graph redrawn until connected, from the run seed.
    RandomConnected {
        n: usize,
        p: f64,
        #[serde(default = "unit_weights")]
        weights: (f64, f64),
    },
}

fn unit_weights() -> (f64, f64) {
    (1.0, 1.0)
}

impl GraphConfig {
    pub fn build(&self, seed: u64) -> Result<Graph> {
        match self {
            GraphConfig::Ring { n, weight } => Graph::ring(*n, *weight),
            GraphConfig::Complete { n, weight } => Graph::complete(*n, *weight),
            GraphConfig::Edges { n, edges } => Graph::from_edges(*n, edges),
            GraphConfig::EdgeList { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::config("graph.path", format!("cannot read {}: {e}", path.display()))
                })?;
                Graph::parse_edge_list(&text)
            }
            GraphConfig::RandomConnected { n, p, weights } => {
                Graph::random_connected(*n, *p, *weights, &mut stream(seed, Stream::Graph))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    /// Least squares with `H_i, b_i ~ N(0, 1)` drawn from the run seed.
    RandomLeastSquares { d: usize },
    /// Least squares with explicit data, `h` row-major `n × d`.
    LeastSquares { d: usize, h: Vec<f64>, b: Vec<f64> },
    /// Rosenbrock sum; all shifts default to 1.
    RosenbrockSum {
        d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shifts: Option<Vec<f64>>,
    },
}

impl ObjectiveConfig {
    pub fn d(&self) -> usize {
        match self {
            ObjectiveConfig::RandomLeastSquares { d }
            | ObjectiveConfig::LeastSquares { d, .. }
            | ObjectiveConfig::RosenbrockSum { d, .. } => *d,
        }
    }

    pub fn build(&self, n: usize, seed: u64) -> Result<Objective> {
        match self {
            ObjectiveConfig::RandomLeastSquares { d } => {
                let obj = make_least_squares(n, *d, &mut stream(seed, Stream::Objective))?;
                Ok(match obj {
                    Objective::LeastSquares { n, d, h, b, .. } => Objective::LeastSquares {
                        n,
                        d,
                        h,
                        b,
                        seed: Some(seed),
                    },
                    other => other,
                })
            }
            ObjectiveConfig::LeastSquares { d, h, b } => {
                if b.len() != n {
                    return Err(Error::config(
                        "objective.b",
                        format!("expected one entry per node ({n}), got {}", b.len()),
                    ));
                }
                Objective::least_squares(n, *d, h.clone(), b.clone())
            }
            ObjectiveConfig::RosenbrockSum { d, shifts } => {
                let shifts = shifts.clone().unwrap_or_else(|| vec![1.0; n]);
                if shifts.len() != n {
                    return Err(Error::config(
                        "objective.shifts",
                        format!("expected one shift per node ({n}), got {}", shifts.len()),
                    ));
                }
                Objective::rosenbrock_with_shifts(*d, shifts)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// `x_i(0) ~ scale · N(0, I)` from the run seed.
    Gaussian {
        #[serde(default = "one")]
        scale: f64,
    },
    Zeros,
    Explicit {
        x: Vec<Vec<f64>>,
    },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Gaussian { scale: 1.0 }
    }
}

impl InitialState {
    pub fn build(&self, n: usize, d: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        match self {
            InitialState::Gaussian { scale } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return Err(Error::config(
                        "initial_state.scale",
                        format!("must be finite and ≥ 0, got {scale}"),
                    ));
                }
                let mut rng = stream(seed, Stream::InitialState);
                Ok((0..n)
                    .map(|_| {
                        DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
                    })
                    .collect())
            }
            InitialState::Zeros => Ok(vec![DVector::zeros(d); n]),
            InitialState::Explicit { x } => {
                if x.len() != n || x.iter().any(|r| r.len() != d) {
                    return Err(Error::config(
                        "initial_state.x",
                        format!("expected {n} rows of length {d}"),
                    ));
                }
                Ok(x.iter().map(|r| DVector::from_column_slice(r)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorName {
    Identity,
    Scalarization,
    Topk,
    UniformQuantizer,
    SaturatedQuantizer,
    ScaledFloor,
    UnbiasedLbits,
}

/// Flat compressor block: `kind` plus whichever parameters that kind takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorConfig {
    pub kind: CompressorName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ExcitationSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byte_cost_override: Option<u64>,
}

impl CompressorConfig {
    pub fn to_spec(&self) -> Result<CompressorSpec> {
        let missing = |field: &str| {
            Error::config(
                format!("compressor.{field}"),
                format!("required for {:?}", self.kind),
            )
        };
        let mut allowed: Vec<&str> = vec![];
        let kind = match self.kind {
            CompressorName::Identity => CompressorKind::Identity,
            CompressorName::Scalarization => {
                allowed.push("schedule");
                CompressorKind::Scalarization {
                    schedule: self.schedule.clone().unwrap_or_default(),
                }
            }
            CompressorName::Topk => {
                allowed.push("k");
                CompressorKind::Topk {
                    k: self.k.ok_or_else(|| missing("k"))?,
                }
            }
            CompressorName::UniformQuantizer => CompressorKind::UniformQuantizer,
            CompressorName::SaturatedQuantizer => {
                allowed.push("delta");
                CompressorKind::SaturatedQuantizer {
                    delta: self.delta.ok_or_else(|| missing("delta"))?,
                }
            }
            CompressorName::ScaledFloor => {
                allowed.push("gamma");
                CompressorKind::ScaledFloor {
                    gamma: self.gamma.ok_or_else(|| missing("gamma"))?,
                }
            }
            CompressorName::UnbiasedLbits => {
                allowed.push("bits");
                CompressorKind::UnbiasedLbits {
                    bits: self.bits.ok_or_else(|| missing("bits"))?,
                }
            }
        };
        for (field, present) in [
            ("k", self.k.is_some()),
            ("delta", self.delta.is_some()),
            ("gamma", self.gamma.is_some()),
            ("bits", self.bits.is_some()),
            ("schedule", self.schedule.is_some()),
        ] {
            if present && !allowed.contains(&field) {
                return Err(Error::config(
                    format!("compressor.{field}"),
                    format!("not a parameter of {}", kind.name()),
                ));
            }
        }
        let spec = CompressorSpec {
            kind,
            byte_cost_override: self.byte_cost_override,
            seed: self.seed,
        };
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn from_spec(spec: &CompressorSpec) -> Self {
        let mut c = CompressorConfig {
            kind: CompressorName::Identity,
            k: None,
            delta: None,
            gamma: None,
            bits: None,
            schedule: None,
            seed: spec.seed,
            byte_cost_override: spec.byte_cost_override,
        };
        c.kind = match &spec.kind {
            CompressorKind::Identity => CompressorName::Identity,
            CompressorKind::Scalarization { schedule } => {
                if *schedule != ExcitationSchedule::CyclingBasis {
                    c.schedule = Some(schedule.clone());
                }
                CompressorName::Scalarization
            }
            CompressorKind::Topk { k } => {
                c.k = Some(*k);
                CompressorName::Topk
            }
            CompressorKind::UniformQuantizer => CompressorName::UniformQuantizer,
            CompressorKind::SaturatedQuantizer { delta } => {
                c.delta = Some(*delta);
                CompressorName::SaturatedQuantizer
            }
            CompressorKind::ScaledFloor { gamma } => {
                c.gamma = Some(*gamma);
                CompressorName::ScaledFloor
            }
            CompressorKind::UnbiasedLbits { bits } => {
                c.bits = Some(*bits);
                CompressorName::UnbiasedLbits
            }
        };
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    None,
    Table1,
    ConvexRosenbrock,
    CompressorVerify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default)]
    pub preset: Preset,
    pub algorithm: Algorithm,
    pub graph: GraphConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressor: Option<CompressorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveConfig>,
    /// Vector dimension for runs without an objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub steps: StepSizes,
    #[serde(default)]
    pub cost_model: CostModel,
    pub max_rounds: u64,
    /// Stop once the suboptimality is at most this value; absent means
    /// run all `max_rounds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub observer_ordering: ObserverOrdering,
    #[serde(default)]
    pub allow_unverified_delta: bool,
    #[serde(default)]
    pub initial_state: InitialState,
    /// Record every `trace_stride`-th round (the last round is always kept).
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let config = Self::parse_json(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses a JSON document without [`validate`](Self::validate), for
    /// callers that adjust fields first.
    pub fn parse_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." { String::new() } else { path },
                e.into_inner().to_string(),
            )
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn compressor_spec(&self) -> Result<Option<CompressorSpec>> {
        self.compressor
            .as_ref()
            .map(CompressorConfig::to_spec)
            .transpose()
    }

    pub fn d(&self) -> Result<usize> {
        match (&self.objective, self.dimension) {
            (Some(o), Some(d)) if o.d() != d => Err(Error::config(
                "dimension",
                format!("dimension {d} disagrees with the objective's d = {}", o.d()),
            )),
            (Some(o), _) => Ok(o.d()),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(Error::config(
                "dimension",
                "needed when there is no objective",
            )),
        }
    }

    /// Schema-level checks that do not need to build the graph or objective.
    pub fn validate(&self) -> Result<()> {
        self.steps.validate()?;
        if self.max_rounds == 0 {
            return Err(Error::config("max_rounds", "must be at least 1"));
        }
        if self.trace_stride == 0 {
            return Err(Error::config("trace_stride", "must be at least 1"));
        }
        if let Some(eps) = self.target_accuracy {
            if eps.is_nan() || eps < 0.0 {
                return Err(Error::config(
                    "target_accuracy",
                    format!("must be ≥ 0, got {eps}"),
                ));
            }
        }
        if matches!(self.label.as_str(), "" | "." | "..") || self.label.contains(['/', '\\']) {
            return Err(Error::config(
                "label",
                "must be a non-empty file-name-safe string",
            ));
        }
        let d = self.d()?;
        if self.algorithm.is_primal_dual() && self.objective.is_none() {
            return Err(Error::config(
                "objective",
                format!("{} needs an objective", self.algorithm),
            ));
        }
        let spec = self.compressor_spec()?;
        match (&spec, self.algorithm) {
            (None, Algorithm::DpdBaseline) => {}
            (Some(s), Algorithm::DpdBaseline) if s.kind == CompressorKind::Identity => {}
            (Some(_), Algorithm::DpdBaseline) => {
                return Err(Error::config(
                    "compressor",
                    "dpd_baseline transmits uncompressed states; drop the compressor block",
                ))
            }
            (None, algorithm) => {
                return Err(Error::config(
                    "compressor",
                    format!("{algorithm} needs a compressor"),
                ))
            }
            (Some(s), algorithm) => {
                s.validate(Some(d))?;
                if algorithm.is_direct() {
                    check_direct_compression(s, self.allow_unverified_delta)?;
                }
            }
        }
        Ok(())
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let (Ok(Some(spec)), Ok(d)) = (self.compressor_spec(), self.d()) {
            let certified = spec.certified_kappa0(d);
            if self.algorithm.compresses() && self.steps.kappa0 > certified {
                out.push(format!(
                    "κ0 = {} exceeds the certified stable step {certified} of {spec}",
                    self.steps.kappa0
                ));
            }
            if self.algorithm.is_direct() && !spec.is_linear() {
                out.push(format!(
                    "direct compression with nonlinear {spec} runs without a verified commutation bound"
                ));
            }
        }
        out
    }

    /// Builds the graph, objective, compressor and initial iterates.
    pub fn build(&self) -> Result<(Problem, Vec<DVector<f64>>)> {
        self.validate()?;
        let graph = self.graph.build(self.seed)?;
        if !graph.is_connected() {
            return Err(Error::InvalidTopology("graph is not connected".into()));
        }
        let n = graph.n();
        let d = self.d()?;
        let compressor = self
            .compressor_spec()?
            .unwrap_or_else(CompressorSpec::identity);
        let mut problem = Problem::new(self.algorithm, graph, compressor)
            .with_ordering(self.observer_ordering)
            .with_cost_model(self.cost_model.clone());
        if let Some(objective) = &self.objective {
            problem = problem.with_objective(objective.build(n, self.seed)?);
        }
        let x0 = self.initial_state.build(n, d, self.seed)?;
        Ok((problem, x0))
    }
}

/// Direct compression is only covered for kinds that commute with the
/// disagreement projection; everything else needs an explicit opt-in, and
/// stochastic kinds are never accepted.
pub fn check_direct_compression(spec: &CompressorSpec, allow_unverified_delta: bool) -> Result<()> {
    if spec.is_stochastic() {
        return Err(Error::config(
            "compressor.kind",
            format!(
                "{} is stochastic; direct compression requires a deterministic compressor, \
                 use an observer- or filter-based algorithm",
                spec.name()
            ),
        ));
    }
    if !spec.is_linear() && !allow_unverified_delta {
        return Err(Error::config(
            "compressor.kind",
            format!(
                "direct compression requires the commutation bound between the compressor and \
                 the disagreement projection; {} is nonlinear, so pass --allow-unverified-delta \
                 (and check `certify --delta`) or use an observer- or filter-based algorithm",
                spec.name()
            ),
        ));
    }
    Ok(())
}
