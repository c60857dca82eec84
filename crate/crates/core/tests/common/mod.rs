//! Straight-line reference implementation of every update rule on a fixed
//! three-node, two-dimensional instance, written with plain arrays and no
//! library code, plus the comparison against the library's simulator.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DVector;
use stcomp::{Algorithm, CompressorSpec, Graph, Objective, Problem, Simulation, StepSizes};

pub type V = [f64; 2];

pub const W: [[f64; 3]; 3] = [[0.0, 1.0, 0.5], [1.0, 0.0, 2.0], [0.5, 2.0, 0.0]];
pub const H: [V; 3] = [[1.0, 0.5], [-0.3, 2.0], [0.7, -1.1]];
pub const B: [f64; 3] = [0.4, -1.0, 2.5];
pub const X0: [V; 3] = [[1.0, -2.0], [0.5, 3.0], [-1.5, 0.25]];

pub const STEPS: StepSizes = StepSizes {
    kappa: 0.07,
    kappa0: 0.6,
    alpha: 0.3,
    beta: 0.4,
    eta: 0.2,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Comp {
    Identity,
    Scalar,
    Top1,
}

fn compress(c: Comp, x: V, t: u64) -> V {
    match c {
        Comp::Identity => x,
        Comp::Scalar => {
            if t.is_multiple_of(2) {
                [x[0], 0.0]
            } else {
                [0.0, x[1]]
            }
        }
        Comp::Top1 => {
            if x[1].abs() > x[0].abs() {
                [0.0, x[1]]
            } else {
                [x[0], 0.0]
            }
        }
    }
}

fn lap(y: &[V; 3], i: usize) -> V {
    let deg = W[i][0] + W[i][1] + W[i][2];
    let mut out = [deg * y[i][0], deg * y[i][1]];
    for j in 0..3 {
        out[0] -= W[i][j] * y[j][0];
        out[1] -= W[i][j] * y[j][1];
    }
    out
}

fn grad(i: usize, x: V) -> V {
    let r = H[i][0] * x[0] + H[i][1] * x[1] - B[i];
    [H[i][0] * r, H[i][1] * r]
}

#[derive(Clone, Debug)]
pub struct Ref {
    pub x: [V; 3],
    pub v: [V; 3],
    /// `xhat[i][j]`: node i's copy of node j (every pair is adjacent).
    pub xhat: [[V; 3]; 3],
    pub sigma: [V; 3],
    pub z: [V; 3],
}

impl Ref {
    pub fn new() -> Self {
        Ref {
            x: X0,
            v: [[0.0; 2]; 3],
            xhat: [[[0.0; 2]; 3]; 3],
            sigma: [[0.0; 2]; 3],
            z: [[0.0; 2]; 3],
        }
    }
}

pub fn ref_step(alg: Algorithm, c: Comp, s: &Ref, t: u64) -> Ref {
    let (k, k0, a, b, e) = (
        STEPS.kappa,
        STEPS.kappa0,
        STEPS.alpha,
        STEPS.beta,
        STEPS.eta,
    );
    let mut n = s.clone();
    match alg {
        Algorithm::ConsensusDc => {
            let cx = [
                compress(c, s.x[0], t),
                compress(c, s.x[1], t),
                compress(c, s.x[2], t),
            ];
            for i in 0..3 {
                let l = lap(&cx, i);
                n.x[i] = [s.x[i][0] - k0 * l[0], s.x[i][1] - k0 * l[1]];
            }
        }
        Algorithm::ConsensusOc => {
            let mut msg = [[0.0; 2]; 3];
            for j in 0..3 {
                msg[j] = compress(
                    c,
                    [s.x[j][0] - s.xhat[j][j][0], s.x[j][1] - s.xhat[j][j][1]],
                    t,
                );
            }
            for i in 0..3 {
                let l = lap(&s.xhat[i], i);
                n.x[i] = [s.x[i][0] - a * l[0], s.x[i][1] - a * l[1]];
                for j in 0..3 {
                    n.xhat[i][j] = [
                        s.xhat[i][j][0] + k0 * msg[j][0],
                        s.xhat[i][j][1] + k0 * msg[j][1],
                    ];
                }
            }
        }
        Algorithm::DpdBaseline => {
            for i in 0..3 {
                let l = lap(&s.x, i);
                let g = grad(i, s.x[i]);
                for m in 0..2 {
                    n.x[i][m] = s.x[i][m] - k * (l[m] + b * s.v[i][m] + e * g[m]);
                    n.v[i][m] = s.v[i][m] + k * b * l[m];
                }
            }
        }
        Algorithm::DpdDc => {
            let cx = [
                compress(c, s.x[0], t),
                compress(c, s.x[1], t),
                compress(c, s.x[2], t),
            ];
            for i in 0..3 {
                let l = lap(&cx, i);
                let g = grad(i, s.x[i]);
                for m in 0..2 {
                    n.x[i][m] = s.x[i][m] - k0 * l[m] - k * (b * s.v[i][m] + e * g[m]);
                    n.v[i][m] = s.v[i][m] + k0 * b * l[m];
                }
            }
        }
        Algorithm::DpdOc => {
            let mut msg = [[0.0; 2]; 3];
            for j in 0..3 {
                msg[j] = compress(
                    c,
                    [s.x[j][0] - s.xhat[j][j][0], s.x[j][1] - s.xhat[j][j][1]],
                    t,
                );
            }
            for i in 0..3 {
                let l = lap(&s.xhat[i], i);
                let g = grad(i, s.x[i]);
                for m in 0..2 {
                    n.x[i][m] = s.x[i][m] - k * (l[m] + b * s.v[i][m] + e * g[m]);
                    n.v[i][m] = s.v[i][m] + k * b * l[m];
                }
                for j in 0..3 {
                    n.xhat[i][j] = [
                        s.xhat[i][j][0] + k0 * msg[j][0],
                        s.xhat[i][j][1] + k0 * msg[j][1],
                    ];
                }
            }
        }
        Algorithm::DpdFc => {
            let mut q = [[0.0; 2]; 3];
            for i in 0..3 {
                q[i] = compress(c, [s.x[i][0] - s.sigma[i][0], s.x[i][1] - s.sigma[i][1]], t);
            }
            for i in 0..3 {
                let lq = lap(&q, i);
                let g = grad(i, s.x[i]);
                for m in 0..2 {
                    let couple = s.sigma[i][m] - s.z[i][m] + lq[m];
                    n.sigma[i][m] = s.sigma[i][m] + k0 * q[i][m];
                    n.z[i][m] = s.z[i][m] + k0 * (q[i][m] - lq[m]);
                    n.x[i][m] = s.x[i][m] - k * (couple + b * s.v[i][m] + e * g[m]);
                    n.v[i][m] = s.v[i][m] + k * b * couple;
                }
            }
        }
    }
    n
}

pub fn library_spec(c: Comp) -> CompressorSpec {
    match c {
        Comp::Identity => CompressorSpec::identity(),
        Comp::Scalar => CompressorSpec::scalarization(),
        Comp::Top1 => CompressorSpec::topk(1).unwrap(),
    }
}

pub fn library_simulation(alg: Algorithm, c: Comp) -> Simulation {
    let graph = Graph::from_weights(nalgebra::DMatrix::from_fn(3, 3, |i, j| W[i][j])).unwrap();
    let h: Vec<f64> = H.iter().flatten().copied().collect();
    let objective = Objective::least_squares(3, 2, h, B.to_vec()).unwrap();
    let problem = Problem::new(alg, graph, library_spec(c)).with_objective(objective);
    let x0 = X0.iter().map(|r| DVector::from_column_slice(r)).collect();
    Simulation::new(problem, STEPS, x0).unwrap()
}

fn gap(a: &[V; 3], b: &[DVector<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..3 {
        for m in 0..2 {
            worst = worst.max((a[i][m] - b[i][m]).abs() / a[i][m].abs().max(1.0));
        }
    }
    worst
}

/// Largest difference between the oracle and the library over `rounds`
/// rounds, across every state vector the algorithm uses. Entries above 1
/// in magnitude are compared relatively.
pub fn max_oracle_gap(alg: Algorithm, c: Comp, rounds: u64) -> f64 {
    let mut sim = library_simulation(alg, c);
    let mut r = Ref::new();
    let mut worst = 0.0f64;
    for t in 0..rounds {
        r = ref_step(alg, c, &r, t);
        sim.step().unwrap();
        let s = sim.state();
        worst = worst.max(gap(&r.x, &s.x));
        if alg.is_primal_dual() {
            worst = worst.max(gap(&r.v, &s.v));
        }
        if alg.uses_filters() {
            worst = worst.max(gap(&r.sigma, &s.sigma)).max(gap(&r.z, &s.z));
        }
        if alg.uses_observers() {
            for i in 0..3 {
                let copies: Vec<DVector<f64>> =
                    (0..3).map(|j| s.observer(i, j).unwrap().clone()).collect();
                worst = worst.max(gap(&r.xhat[i], &copies));
            }
        }
    }
    worst
}

/// The compressor each algorithm is compared with.
pub fn oracle_cases() -> Vec<(Algorithm, Comp)> {
    vec![
        (Algorithm::ConsensusDc, Comp::Scalar),
        (Algorithm::ConsensusOc, Comp::Top1),
        (Algorithm::DpdBaseline, Comp::Identity),
        (Algorithm::DpdDc, Comp::Scalar),
        (Algorithm::DpdOc, Comp::Top1),
        (Algorithm::DpdFc, Comp::Top1),
    ]
}
