//! Synchronous-round simulation of the compressed consensus and primal-dual
//! algorithms.
//!
//! Every node broadcasts exactly one (possibly compressed) `d`-vector per
//! round, so the per-node byte cost of a round is the compressor's message
//! cost. Observer-based variants keep one copy `x̂ⁱ_j` per holder `i` and
//! source `j ∈ N_i ∪ {i}`; the copies are stored separately on purpose and
//! checked for bit equality after every round.

use std::fmt;

use nalgebra::DVector;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::compressors::{byte_cost, CompressorSpec, CostModel};
use crate::error::{Error, Result};
use crate::graph::{Graph, Laplacian};
use crate::objectives::Objective;
use crate::rng::{stream, SimRng, Stream};

/// States above this Euclidean norm are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// `x_i ← x_i − κ0 Σ_j L_ij C(x_j, t)`
    ConsensusDc,
    /// Observer-based consensus with gain `α`.
    ConsensusOc,
    /// Uncompressed primal-dual reference.
    DpdBaseline,
    DpdDc,
    DpdOc,
    DpdFc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::ConsensusDc,
        Algorithm::ConsensusOc,
        Algorithm::DpdBaseline,
        Algorithm::DpdDc,
        Algorithm::DpdOc,
        Algorithm::DpdFc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ConsensusDc => "consensus_dc",
            Algorithm::ConsensusOc => "consensus_oc",
            Algorithm::DpdBaseline => "dpd_baseline",
            Algorithm::DpdDc => "dpd_dc",
            Algorithm::DpdOc => "dpd_oc",
            Algorithm::DpdFc => "dpd_fc",
        }
    }

    pub fn is_primal_dual(self) -> bool {
        !matches!(self, Algorithm::ConsensusDc | Algorithm::ConsensusOc)
    }

    pub fn uses_observers(self) -> bool {
        matches!(self, Algorithm::ConsensusOc | Algorithm::DpdOc)
    }

    pub fn uses_filters(self) -> bool {
        self == Algorithm::DpdFc
    }

    /// Direct compression feeds `C(x_j)` straight into the coupling term.
    pub fn is_direct(self) -> bool {
        matches!(self, Algorithm::ConsensusDc | Algorithm::DpdDc)
    }

    pub fn compresses(self) -> bool {
        self != Algorithm::DpdBaseline
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether the coupling term of an observer-based round reads the copies
/// before (`pre_update`) or after (`post_update`) this round's increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverOrdering {
    #[default]
    PreUpdate,
    PostUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSizes {
    pub kappa: f64,
    pub kappa0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            kappa: 0.05,
            kappa0: 0.5,
            alpha: 0.5,
            beta: 0.3,
            eta: 0.1,
        }
    }
}

impl StepSizes {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("kappa", self.kappa),
            ("kappa0", self.kappa0),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eta", self.eta),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(
                    format!("steps.{name}"),
                    format!("must be a finite number > 0, got {value}"),
                ));
            }
        }
        Ok(())
    }

    /// Retry schedule after a divergence: the step-like gains are halved,
    /// the coupling weights `β` and `η` are kept.
    pub fn halved(&self) -> Self {
        StepSizes {
            kappa: self.kappa / 2.0,
            kappa0: self.kappa0 / 2.0,
            alpha: self.alpha / 2.0,
            ..*self
        }
    }
}

impl fmt::Display for StepSizes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "κ = {}, κ0 = {}, α = {}, β = {}, η = {}",
            self.kappa, self.kappa0, self.alpha, self.beta, self.eta
        )
    }
}

/// All per-node vectors of one algorithm at one round. Vectors an algorithm
/// does not use are left empty.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmState {
    pub round: u64,
    pub x: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    /// `observers[i]` holds `(j, x̂ⁱ_j)` for `j ∈ N_i ∪ {i}`, ascending in `j`.
    pub observers: Vec<Vec<(usize, DVector<f64>)>>,
    pub sigma: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
}

impl AlgorithmState {
    /// Round-0 state: the given primal iterates, zero duals, zero observer
    /// copies and zero filters.
    pub fn initial(algorithm: Algorithm, graph: &Graph, x: Vec<DVector<f64>>) -> Self {
        let d = x.first().map_or(0, |v| v.len());
        let zeros = || vec![DVector::zeros(d); x.len()];
        AlgorithmState {
            round: 0,
            v: if algorithm.is_primal_dual() {
                zeros()
            } else {
                Vec::new()
            },
            observers: if algorithm.uses_observers() {
                (0..graph.n())
                    .map(|i| holdings(graph, i).map(|j| (j, DVector::zeros(d))).collect())
                    .collect()
            } else {
                Vec::new()
            },
            sigma: if algorithm.uses_filters() {
                zeros()
            } else {
                Vec::new()
            },
            z: if algorithm.uses_filters() {
                zeros()
            } else {
                Vec::new()
            },
            x,
        }
    }

    /// Copy `x̂ⁱ_j` held by node `i`.
    pub fn observer(&self, i: usize, j: usize) -> Option<&DVector<f64>> {
        let copies = self.observers.get(i)?;
        copies
            .binary_search_by_key(&j, |(k, _)| *k)
            .ok()
            .map(|pos| &copies[pos].1)
    }

    pub fn x_norm(&self) -> f64 {
        stacked_norm(&self.x)
    }

    pub fn v_norm(&self) -> f64 {
        stacked_norm(&self.v)
    }

    /// `Σ_i v_i`, or `None` for consensus states.
    pub fn dual_sum(&self) -> Option<DVector<f64>> {
        let first = self.v.first()?;
        Some(
            self.v
                .iter()
                .fold(DVector::zeros(first.len()), |acc, v| acc + v),
        )
    }

    pub fn mean_x(&self) -> DVector<f64> {
        let d = self.x.first().map_or(0, |v| v.len());
        self.x.iter().fold(DVector::zeros(d), |acc, v| acc + v) / self.x.len() as f64
    }
}

fn stacked_norm(blocks: &[DVector<f64>]) -> f64 {
    blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
}

/// Sources whose copies node `i` keeps: its neighbors and itself, ascending.
fn holdings(graph: &Graph, i: usize) -> impl Iterator<Item = usize> + '_ {
    (0..graph.n()).filter(move |&j| j == i || graph.weight(i, j) != 0.0)
}

/// Everything fixed about a run except step sizes and state.
#[derive(Debug, Clone)]
pub struct Problem {
    pub algorithm: Algorithm,
    pub graph: Graph,
    /// Ignored by `dpd_baseline`, which always sends raw states.
    pub compressor: CompressorSpec,
    /// Required by the primal-dual algorithms.
    pub objective: Option<Objective>,
    pub cost_model: CostModel,
    pub ordering: ObserverOrdering,
}

impl Problem {
    pub fn new(algorithm: Algorithm, graph: Graph, compressor: CompressorSpec) -> Self {
        Problem {
            algorithm,
            graph,
            compressor,
            objective: None,
            cost_model: CostModel::default(),
            ordering: ObserverOrdering::default(),
        }
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = Some(objective);
        self
    }

    pub fn with_ordering(mut self, ordering: ObserverOrdering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_cost_model(mut self, cost_model: CostModel) -> Self {
        self.cost_model = cost_model;
        self
    }

    /// The compressor actually applied; `dpd_baseline` transmits raw states.
    pub fn effective_compressor(&self) -> CompressorSpec {
        if self.algorithm.compresses() {
            self.compressor.clone()
        } else {
            CompressorSpec::identity()
        }
    }

    /// Per-node bytes sent in one round.
    pub fn bytes_per_round(&self, d: usize) -> u64 {
        byte_cost(&self.effective_compressor(), d, &self.cost_model)
    }

    /// Analytic equilibrium of a primal-dual algorithm: `x_i = s*`,
    /// `v_i = −η ∇f_i(s*) / β`, observer copies and filters at `s*`.
    pub fn equilibrium(&self, steps: &StepSizes) -> Result<AlgorithmState> {
        if !self.algorithm.is_primal_dual() {
            return Err(Error::config(
                "algorithm",
                "equilibria are defined for primal-dual algorithms",
            ));
        }
        let objective = self.require_objective()?;
        let s = objective
            .optimum()?
            .ok_or_else(|| Error::Numerical("objective has no closed-form optimum".into()))?;
        let n = self.graph.n();
        let mut state = AlgorithmState::initial(self.algorithm, &self.graph, vec![s.clone(); n]);
        for i in 0..n {
            state.v[i] = objective.gradient(i, &s)? * (-steps.eta / steps.beta);
        }
        for copies in &mut state.observers {
            for (_, copy) in copies.iter_mut() {
                copy.copy_from(&s);
            }
        }
        for b in state.sigma.iter_mut().chain(state.z.iter_mut()) {
            b.copy_from(&s);
        }
        Ok(state)
    }

    fn require_objective(&self) -> Result<&Objective> {
        self.objective.as_ref().ok_or_else(|| {
            Error::config(
                "objective",
                format!("{} needs an objective", self.algorithm),
            )
        })
    }
}

/// A running instance of one algorithm.
#[derive(Debug, Clone)]
pub struct Simulation {
    problem: Problem,
    compressor: CompressorSpec,
    laplacian: Laplacian,
    steps: StepSizes,
    state: AlgorithmState,
    noise: Option<SimRng>,
    bytes_per_round: u64,
    cumulative_bytes: u64,
}

impl Simulation {
    /// Starts from `x(0) = x0` with every auxiliary vector zero.
    pub fn new(problem: Problem, steps: StepSizes, x0: Vec<DVector<f64>>) -> Result<Self> {
        let state = AlgorithmState::initial(problem.algorithm, &problem.graph, x0);
        Self::from_state(problem, steps, state)
    }

    /// Starts from an arbitrary state, e.g. an equilibrium.
    pub fn from_state(problem: Problem, steps: StepSizes, state: AlgorithmState) -> Result<Self> {
        steps.validate()?;
        let n = problem.graph.n();
        if state.x.len() != n {
            return Err(Error::config(
                "initial_state",
                format!("expected {n} node vectors, got {}", state.x.len()),
            ));
        }
        let d = state.x[0].len();
        if d == 0 || state.x.iter().any(|x| x.len() != d) {
            return Err(Error::config(
                "initial_state",
                "node vectors must share one positive length",
            ));
        }
        if state.x.iter().any(|x| x.iter().any(|c| !c.is_finite())) {
            return Err(Error::NumericInput("initial state is not finite".into()));
        }
        let compressor = problem.effective_compressor();
        compressor.validate(Some(d))?;
        if problem.algorithm.is_primal_dual() {
            let objective = problem.require_objective()?;
            if objective.n() != n || objective.d() != d {
                return Err(Error::config(
                    "objective",
                    format!(
                        "objective is {}×{} but the run has n = {n}, d = {d}",
                        objective.n(),
                        objective.d()
                    ),
                ));
            }
        }
        let noise = compressor
            .seed
            .filter(|_| compressor.is_stochastic())
            .map(|seed| stream(seed, Stream::Compressor));
        let bytes_per_round = problem.bytes_per_round(d);
        Ok(Simulation {
            laplacian: problem.graph.laplacian(),
            compressor,
            problem,
            steps,
            state,
            noise,
            bytes_per_round,
            cumulative_bytes: 0,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn state(&self) -> &AlgorithmState {
        &self.state
    }

    pub fn steps(&self) -> &StepSizes {
        &self.steps
    }

    pub fn round(&self) -> u64 {
        self.state.round
    }

    pub fn d(&self) -> usize {
        self.state.x[0].len()
    }

    pub fn bytes_per_round(&self) -> u64 {
        self.bytes_per_round
    }

    /// Per-node bytes sent since round 0.
    pub fn cumulative_bytes(&self) -> u64 {
        self.cumulative_bytes
    }

    /// Compresses one message per node, in node order.
    fn broadcast(&mut self, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let t = self.state.round;
        let compressor = &self.compressor;
        let mut noise = self.noise.as_mut();
        inputs
            .iter()
            .map(|x| compressor.apply(x, t, noise.as_mut().map(|r| &mut **r as &mut dyn RngCore)))
            .collect()
    }

    fn gradients(&self) -> Result<Vec<DVector<f64>>> {
        let objective = self.problem.require_objective()?;
        (0..self.state.x.len())
            .map(|i| objective.gradient(i, &self.state.x[i]))
            .collect()
    }

    /// `Σ_j L_ij x̂ⁱ_j` for every node `i`.
    fn observer_coupling(&self) -> Vec<DVector<f64>> {
        (0..self.state.x.len())
            .map(|i| {
                let mut acc = DVector::zeros(self.d());
                for &(j, w) in self.laplacian.row(i) {
                    let copy = self
                        .state
                        .observer(i, j)
                        .expect("holder keeps a copy of every neighbor");
                    acc.axpy(w, copy, 1.0);
                }
                acc
            })
            .collect()
    }

    /// `x̂ⁱ_j += κ0 x_{j,c}` at every holder.
    fn advance_observers(&mut self, messages: &[DVector<f64>]) {
        let kappa0 = self.steps.kappa0;
        for copies in &mut self.state.observers {
            for (j, copy) in copies.iter_mut() {
                copy.axpy(kappa0, &messages[*j], 1.0);
            }
        }
    }

    /// Observer innovations `x_{j,c} = C(x_j − x̂ʲ_j, t)`.
    fn observer_messages(&mut self) -> Result<Vec<DVector<f64>>> {
        let errors: Vec<DVector<f64>> = (0..self.state.x.len())
            .map(|j| &self.state.x[j] - self.state.observer(j, j).expect("own copy"))
            .collect();
        self.broadcast(&errors)
    }

    /// Coupling term of an observer-based round, honoring the ordering.
    fn observer_round(&mut self) -> Result<Vec<DVector<f64>>> {
        let messages = self.observer_messages()?;
        Ok(match self.problem.ordering {
            ObserverOrdering::PreUpdate => {
                let coupling = self.observer_coupling();
                self.advance_observers(&messages);
                coupling
            }
            ObserverOrdering::PostUpdate => {
                self.advance_observers(&messages);
                self.observer_coupling()
            }
        })
    }

    /// Advances one synchronous round.
    pub fn step(&mut self) -> Result<()> {
        let StepSizes {
            kappa,
            kappa0,
            alpha,
            beta,
            ..
        } = self.steps;
        let n = self.state.x.len();
        match self.problem.algorithm {
            Algorithm::ConsensusDc => {
                let c = self.broadcast(&self.state.x.clone())?;
                for i in 0..n {
                    let lc = self.laplacian.apply_row(i, &c);
                    self.state.x[i].axpy(-kappa0, &lc, 1.0);
                }
            }
            Algorithm::ConsensusOc => {
                let coupling = self.observer_round()?;
                for (x, lx) in self.state.x.iter_mut().zip(&coupling) {
                    x.axpy(-alpha, lx, 1.0);
                }
            }
            Algorithm::DpdBaseline => {
                let g = self.gradients()?;
                let lx = self.laplacian.apply(&self.state.x);
                self.primal_dual_update(&lx, kappa, &lx, kappa * beta, &g);
            }
            Algorithm::DpdDc => {
                let g = self.gradients()?;
                let c = self.broadcast(&self.state.x.clone())?;
                let lc = self.laplacian.apply(&c);
                self.primal_dual_update(&lc, kappa0, &lc, kappa0 * beta, &g);
            }
            Algorithm::DpdOc => {
                let g = self.gradients()?;
                let coupling = self.observer_round()?;
                self.primal_dual_update(&coupling, kappa, &coupling, kappa * beta, &g);
            }
            Algorithm::DpdFc => {
                let g = self.gradients()?;
                let residual: Vec<DVector<f64>> = (0..n)
                    .map(|i| &self.state.x[i] - &self.state.sigma[i])
                    .collect();
                let q = self.broadcast(&residual)?;
                let lq = self.laplacian.apply(&q);
                let coupling: Vec<DVector<f64>> = (0..n)
                    .map(|i| &self.state.sigma[i] - &self.state.z[i] + &lq[i])
                    .collect();
                self.primal_dual_update(&coupling, kappa, &coupling, kappa * beta, &g);
                for i in 0..n {
                    self.state.sigma[i].axpy(kappa0, &q[i], 1.0);
                    self.state.z[i].axpy(kappa0, &(&q[i] - &lq[i]), 1.0);
                }
            }
        }
        self.state.round += 1;
        self.cumulative_bytes += self.bytes_per_round;
        self.check_divergence()?;
        if self.problem.algorithm.uses_observers() {
            self.check_observers()?;
        }
        Ok(())
    }

    /// `x_i −= a·p_i + κ(β v_i + η ∇f_i)` and `v_i += b·q_i`, all from round-t values.
    fn primal_dual_update(
        &mut self,
        primal_coupling: &[DVector<f64>],
        a: f64,
        dual_coupling: &[DVector<f64>],
        b: f64,
        grads: &[DVector<f64>],
    ) {
        let StepSizes {
            kappa, beta, eta, ..
        } = self.steps;
        for i in 0..self.state.x.len() {
            let drift = &self.state.v[i] * beta + &grads[i] * eta;
            self.state.x[i].axpy(-a, &primal_coupling[i], 1.0);
            self.state.x[i].axpy(-kappa, &drift, 1.0);
            self.state.v[i].axpy(b, &dual_coupling[i], 1.0);
        }
    }

    fn check_divergence(&self) -> Result<()> {
        let x_norm = self.state.x_norm();
        let v_norm = self.state.v_norm();
        let bad = |v: f64| !v.is_finite() || v > DIVERGENCE_NORM;
        if bad(x_norm) || bad(v_norm) {
            return Err(Error::Divergence {
                round: self.state.round,
                x_norm,
                v_norm,
                detail: format!("{} with {}", self.problem.algorithm, self.steps),
            });
        }
        Ok(())
    }

    /// Every copy `x̂ⁱ_j` must equal node `j`'s own copy bit for bit.
    pub fn check_observers(&self) -> Result<()> {
        for copies in &self.state.observers {
            for (j, copy) in copies {
                let own = self.state.observer(*j, *j).expect("own copy");
                if copy
                    .iter()
                    .zip(own.iter())
                    .any(|(a, b)| a.to_bits() != b.to_bits())
                {
                    return Err(Error::ObserverInconsistency {
                        node: *j,
                        round: self.state.round,
                    });
                }
            }
        }
        Ok(())
    }
}
