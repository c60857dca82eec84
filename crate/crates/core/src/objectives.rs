//! Per-node objectives `f_i` with analytic gradients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_RESAMPLES: usize = 100;
const MIN_EIGENVALUE: f64 = 1e-3;

/// The objective family of an experiment.
///
/// `least_squares`: `f_i(x) = ½ (H_iᵀ x − b_i)²` with `h` stored row-major
/// (`n` rows of length `d`, row `i` is `H_i`).
///
/// `rosenbrock_sum`: `f_i(x) = Σ_{j<d-1} [100 (x_{j+1} − x_j²)² + (x_j − a_i)²]`
/// with `a_i = shifts[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    LeastSquares {
        n: usize,
        d: usize,
        h: Vec<f64>,
        b: Vec<f64>,
        /// Seed the data was drawn from, kept for provenance only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    RosenbrockSum {
        n: usize,
        d: usize,
        shifts: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConstants {
    /// Strong-convexity constant of `Σ f_i` (0 when not strongly convex).
    pub mu: f64,
    /// Uniform Lipschitz bound of the per-node gradients, when one exists.
    pub lf: Option<f64>,
    pub s_star: Option<DVector<f64>>,
}

fn check_finite(x: &DVector<f64>, what: &str) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::NumericInput(format!(
            "{what} component {k} is {}",
            x[k]
        ))),
        None => Ok(()),
    }
}

/// Draws `H_i, b_i ~ N(0, 1)` until `λ_min(Σ H_i H_iᵀ) > 1e-3`.
pub fn make_least_squares<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Objective> {
    if d == 0 {
        return Err(Error::config("objective.d", "dimension must be at least 1"));
    }
    if n < d {
        return Err(Error::Construction(format!(
            "least squares with n = {n} < d = {d} cannot have a positive definite Hessian"
        )));
    }
    for _ in 0..MAX_RESAMPLES {
        let h: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let obj = Objective::LeastSquares {
            n,
            d,
            h,
            b,
            seed: None,
        };
        if obj.hessian_min_eigenvalue() > MIN_EIGENVALUE {
            return Ok(obj);
        }
    }
    Err(Error::Construction(format!(
        "no well-conditioned least-squares instance after {MAX_RESAMPLES} draws"
    )))
}

impl Objective {
    pub fn least_squares(n: usize, d: usize, h: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let obj = Objective::LeastSquares {
            n,
            d,
            h,
            b,
            seed: None,
        };
        obj.validate()?;
        Ok(obj)
    }

    /// Rosenbrock sum with every shift equal to 1, so that `s* = 1_d`.
    pub fn rosenbrock(n: usize, d: usize) -> Result<Self> {
        Self::rosenbrock_with_shifts(d, vec![1.0; n])
    }

    pub fn rosenbrock_with_shifts(d: usize, shifts: Vec<f64>) -> Result<Self> {
        let obj = Objective::RosenbrockSum {
            n: shifts.len(),
            d,
            shifts,
        };
        obj.validate()?;
        Ok(obj)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Objective::LeastSquares { .. } => "least_squares",
            Objective::RosenbrockSum { .. } => "rosenbrock_sum",
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Objective::LeastSquares { n, .. } | Objective::RosenbrockSum { n, .. } => *n,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Objective::LeastSquares { d, .. } | Objective::RosenbrockSum { d, .. } => *d,
        }
    }

    /// Checks shapes, finiteness and, for least squares, positive
    /// definiteness of `Σ H_i H_iᵀ`.
    pub fn validate(&self) -> Result<()> {
        match self {
            Objective::LeastSquares { n, d, h, b, .. } => {
                if *n == 0 || *d == 0 {
                    return Err(Error::config("objective", "n and d must be at least 1"));
                }
                if h.len() != n * d {
                    return Err(Error::config(
                        "objective.h",
                        format!("expected {} entries (n·d), got {}", n * d, h.len()),
                    ));
                }
                if b.len() != *n {
                    return Err(Error::config(
                        "objective.b",
                        format!("expected {n} entries, got {}", b.len()),
                    ));
                }
                if h.iter().chain(b).any(|v| !v.is_finite()) {
                    return Err(Error::config("objective", "data must be finite"));
                }
                if self.hessian_min_eigenvalue() <= 0.0 {
                    return Err(Error::Construction(
                        "Σ H_i H_iᵀ is singular; the objective has no unique minimizer".into(),
                    ));
                }
            }
            Objective::RosenbrockSum { n, d, shifts } => {
                if *n == 0 {
                    return Err(Error::config("objective.shifts", "need one shift per node"));
                }
                if *d < 2 {
                    return Err(Error::config("objective.d", "rosenbrock_sum needs d ≥ 2"));
                }
                if shifts.len() != *n || shifts.iter().any(|a| !a.is_finite()) {
                    return Err(Error::config(
                        "objective.shifts",
                        "need one finite shift per node",
                    ));
                }
            }
        }
        Ok(())
    }

    fn row(&self, i: usize) -> DVector<f64> {
        match self {
            Objective::LeastSquares { d, h, .. } => {
                DVector::from_column_slice(&h[i * d..(i + 1) * d])
            }
            Objective::RosenbrockSum { .. } => unreachable!("rows exist for least squares only"),
        }
    }

    fn hessian(&self) -> DMatrix<f64> {
        let (n, d) = (self.n(), self.d());
        let mut m = DMatrix::zeros(d, d);
        for i in 0..n {
            let hi = self.row(i);
            m.ger(1.0, &hi, &hi, 1.0);
        }
        m
    }

    fn hessian_min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.hessian()).eigenvalues.min()
    }

    fn check_node(&self, i: usize, x: &DVector<f64>) -> Result<()> {
        if i >= self.n() {
            return Err(Error::config(
                "node",
                format!("node {i} out of range for n = {}", self.n()),
            ));
        }
        if x.len() != self.d() {
            return Err(Error::NumericInput(format!(
                "expected a vector of length {}, got {}",
                self.d(),
                x.len()
            )));
        }
        check_finite(x, "objective input")
    }

    pub fn value(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_node(i, x)?;
        Ok(match self {
            Objective::LeastSquares { b, .. } => {
                let r = self.row(i).dot(x) - b[i];
                0.5 * r * r
            }
            Objective::RosenbrockSum { d, shifts, .. } => {
                let a = shifts[i];
                (0..d - 1)
                    .map(|j| {
                        let u = x[j + 1] - x[j] * x[j];
                        100.0 * u * u + (x[j] - a) * (x[j] - a)
                    })
                    .sum()
            }
        })
    }

    pub fn gradient(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_node(i, x)?;
        Ok(match self {
            Objective::LeastSquares { b, .. } => {
                let hi = self.row(i);
                let r = hi.dot(x) - b[i];
                hi * r
            }
            Objective::RosenbrockSum { d, shifts, .. } => {
                let a = shifts[i];
                let mut g = DVector::zeros(*d);
                for j in 0..d - 1 {
                    let u = x[j + 1] - x[j] * x[j];
                    g[j] += -400.0 * x[j] * u + 2.0 * (x[j] - a);
                    g[j + 1] += 200.0 * u;
                }
                g
            }
        })
    }

    /// `Σ_i f_i(x)`.
    pub fn total_value(&self, x: &DVector<f64>) -> Result<f64> {
        (0..self.n()).map(|i| self.value(i, x)).sum()
    }

    /// `Σ_i ∇f_i(x)`.
    pub fn total_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(self.d());
        for i in 0..self.n() {
            g += self.gradient(i, x)?;
        }
        Ok(g)
    }

    /// Minimizer of `Σ f_i` when it has a closed form.
    pub fn optimum(&self) -> Result<Option<DVector<f64>>> {
        match self {
            Objective::LeastSquares { b, .. } => {
                let mut rhs = DVector::zeros(self.d());
                for (i, bi) in b.iter().enumerate() {
                    rhs.axpy(*bi, &self.row(i), 1.0);
                }
                let chol = self.hessian().cholesky().ok_or_else(|| {
                    Error::Numerical("Σ H_i H_iᵀ is not positive definite".into())
                })?;
                Ok(Some(chol.solve(&rhs)))
            }
            Objective::RosenbrockSum { d, shifts, .. } => {
                if shifts.iter().all(|a| *a == 1.0) {
                    Ok(Some(DVector::from_element(*d, 1.0)))
                } else {
                    Ok(None)
                }
            }
        }
    }

    pub fn constants(&self) -> Result<ObjectiveConstants> {
        let s_star = self.optimum()?;
        Ok(match self {
            Objective::LeastSquares { .. } => ObjectiveConstants {
                mu: self.hessian_min_eigenvalue(),
                lf: Some(
                    (0..self.n())
                        .map(|i| self.row(i).norm_squared())
                        .fold(0.0, f64::max),
                ),
                s_star,
            },
            Objective::RosenbrockSum { .. } => ObjectiveConstants {
                mu: 0.0,
                lf: None,
                s_star,
            },
        })
    }

    /// Maximum per-coordinate discrepancy between the analytic gradient of
    /// node `i` and central differences with step `h`, relative to
    /// `max(1, ‖∇f_i(x)‖)`.
    pub fn check_gradient(&self, i: usize, x: &DVector<f64>, h: f64) -> Result<f64> {
        if !(1e-8..=1e-3).contains(&h) {
            return Err(Error::config(
                "h",
                format!("step must lie in [1e-8, 1e-3], got {h}"),
            ));
        }
        let g = self.gradient(i, x)?;
        let scale = g.norm().max(1.0);
        let mut worst = 0.0f64;
        for k in 0..self.d() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (self.value(i, &plus)? - self.value(i, &minus)?) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / scale);
        }
        Ok(worst)
    }
}
