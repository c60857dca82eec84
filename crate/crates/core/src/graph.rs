//! Communication graphs, Laplacians and their spectra.
//!
//! A [`Graph`] is an undirected weighted graph stored as a dense symmetric
//! weight matrix with zero diagonal. Its [`Laplacian`] keeps both the dense
//! matrix and a row-wise list of nonzero entries, which is what the round
//! based algorithms iterate over. [`spectrum`] returns the ascending
//! eigenvalues and an orthonormal basis `S` of the complement of the
//! all-ones vector.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    weights: DMatrix<f64>,
}

impl Graph {
    /// Builds a graph from a full weight matrix.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::InvalidTopology(format!(
                "weight matrix is {}x{}, expected square",
                n,
                weights.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidTopology(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidTopology(format!("self-loop on node {i}")));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidTopology(format!(
                        "weight ({i},{j}) = {w} is not a finite nonnegative number"
                    )));
                }
                if w != weights[(j, i)] {
                    return Err(Error::InvalidTopology(format!(
                        "weights ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph on `n` nodes from undirected weighted edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTopology(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        let mut weights = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({i},{j}) references a node outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidTopology(format!("self-loop on node {i}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidTopology(format!(
                    "edge ({i},{j}) has non-positive weight {w}"
                )));
            }
            if weights[(i, j)] != 0.0 {
                return Err(Error::InvalidTopology(format!("duplicate edge ({i},{j})")));
            }
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
        Ok(Self { weights })
    }

    /// Cycle graph where node `i` is joined to `i ± 1 mod n`.
    pub fn ring(n: usize, weight: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidTopology(format!(
                "a ring needs at least 3 nodes, got {n}"
            )));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, weight)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize, weight: f64) -> Result<Self> {
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, weight));
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Parses the edge-list text format: a header line `n <count>` followed
    /// by one `i j w` line per undirected edge with 0-based indices. Blank
    /// lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            match n {
                None => {
                    if fields.len() != 2 || fields[0] != "n" {
                        return Err(parse_err(format!(
                            "expected header `n <count>`, found `{line}`"
                        )));
                    }
                    let count = fields[1]
                        .parse::<usize>()
                        .map_err(|e| parse_err(format!("bad node count: {e}")))?;
                    n = Some(count);
                }
                Some(_) => {
                    if fields.len() != 3 {
                        return Err(parse_err(format!("expected `i j w`, found `{line}`")));
                    }
                    let i = fields[0]
                        .parse::<usize>()
                        .map_err(|e| parse_err(format!("bad index `{}`: {e}", fields[0])))?;
                    let j = fields[1]
                        .parse::<usize>()
                        .map_err(|e| parse_err(format!("bad index `{}`: {e}", fields[1])))?;
                    let w = fields[2]
                        .parse::<f64>()
                        .map_err(|e| parse_err(format!("bad weight `{}`: {e}", fields[2])))?;
                    edges.push((i, j, w));
                }
            }
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            message: "missing `n <count>` header".into(),
        })?;
        Self::from_edges(n, &edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n());
        for (i, j, w) in self.edges() {
            let _ = writeln!(out, "{i} {j} {w:?}");
        }
        out
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = self.weights[(i, j)];
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&j| self.weights[(i, j)] > 0.0)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn laplacian(&self) -> Laplacian {
        let n = self.n();
        let mut m = -self.weights.clone();
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| self.weights[(i, j)]).sum();
            m[(i, i)] = row_sum;
        }
        Laplacian::from_matrix(m)
    }

    /// Breadth-first reachability over positive-weight edges.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    /// Erdős–Rényi sample: each pair joined with probability `p`, weight
    /// drawn uniformly from `[w_min, w_max]`. May be disconnected.
    pub fn erdos_renyi<R: Rng + ?Sized>(
        n: usize,
        p: f64,
        (w_min, w_max): (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    let w = if w_max > w_min {
                        rng.gen_range(w_min..=w_max)
                    } else {
                        w_min
                    };
                    edges.push((i, j, w));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Erdős–Rényi samples, rejecting disconnected ones.
    pub fn random_connected<R: Rng + ?Sized>(
        n: usize,
        p: f64,
        weight_range: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        const MAX_ATTEMPTS: usize = 1000;
        for _ in 0..MAX_ATTEMPTS {
            let g = Self::erdos_renyi(n, p, weight_range, rng)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::Construction(format!(
            "no connected sample with n={n}, p={p} after {MAX_ATTEMPTS} attempts"
        )))
    }
}

/// Graph Laplacian `L = D - A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl Laplacian {
    fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let n = matrix.nrows();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| matrix[(i, j)] != 0.0)
                    .map(|j| (j, matrix[(i, j)]))
                    .collect()
            })
            .collect();
        Self { matrix, rows }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Nonzero entries `(j, L_ij)` of row `i` in ascending `j`, diagonal included.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `Σ_j L_ij y_j` for one node, summed in ascending `j`.
    pub fn apply_row(&self, i: usize, ys: &[DVector<f64>]) -> DVector<f64> {
        let d = ys[0].len();
        let mut acc = DVector::zeros(d);
        for &(j, lij) in &self.rows[i] {
            acc.axpy(lij, &ys[j], 1.0);
        }
        acc
    }

    /// `Σ_j L_ij y_j` for every node.
    pub fn apply(&self, ys: &[DVector<f64>]) -> Vec<DVector<f64>> {
        (0..self.n()).map(|i| self.apply_row(i, ys)).collect()
    }
}

/// Eigen-decomposition of a Laplacian.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// `λ_1 ≤ … ≤ λ_n`.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// `n × (n-1)` orthonormal basis of the complement of the all-ones vector.
    pub s_basis: DMatrix<f64>,
}

impl Spectrum {
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues[1]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("spectrum is never empty")
    }
}

/// Flips `v` so its first component with magnitude above `tol` is positive.
fn canonical_sign(v: &mut DVector<f64>, tol: f64) {
    if let Some(first) = v.iter().copied().find(|c| c.abs() > tol) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Cyclic Jacobi sweeps on `VᵀAV`, which the QR solver leaves nearly but
/// not fully diagonal (residuals near 1e-8 on some Laplacians).
fn jacobi_polish(a: &DMatrix<f64>, v: &mut DMatrix<f64>, values: &mut DVector<f64>) {
    let n = a.nrows();
    let mut m = v.transpose() * a * &*v;
    for _ in 0..30 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)] * m[(p, q)])
            .sum();
        if off.sqrt() <= f64::EPSILON * m.norm() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    for k in 0..n {
        values[k] = m[(k, k)];
    }
}

/// Sorted eigenpairs of a Laplacian and an orthonormal basis of the
/// complement of the all-ones vector.
pub fn spectrum(laplacian: &Laplacian) -> Result<Spectrum> {
    let l = laplacian.matrix();
    let n = l.nrows();
    let mut eig = SymmetricEigen::try_new(l.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigen-solver did not converge".into()))?;
    jacobi_polish(l, &mut eig.eigenvectors, &mut eig.eigenvalues);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();

    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        canonical_sign(&mut v, 1e-12);
        eigenvectors.set_column(col, &v);
    }

    let scale = eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let zero_tol = 1e-9 * scale;
    let nullity = eigenvalues
        .iter()
        .filter(|v| v.abs() <= zero_tol)
        .count()
        .max(1);

    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);

    // Null-space directions orthogonal to 1: project, orthonormalise, keep the
    // nullity - 1 strongest. For connected graphs this block is empty.
    if nullity > 1 {
        let mut candidates: Vec<DVector<f64>> = (0..nullity)
            .map(|c| {
                let v: DVector<f64> = eigenvectors.column(c).into_owned();
                &v - &ones * ones.dot(&v)
            })
            .collect();
        candidates.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        for mut v in candidates {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
            let norm = v.norm();
            if norm > 1e-8 && basis.len() < nullity - 1 {
                v /= norm;
                canonical_sign(&mut v, 1e-12);
                basis.push(v);
            }
        }
        if basis.len() != nullity - 1 {
            return Err(Error::Numerical(
                "could not orthonormalise the Laplacian null space".into(),
            ));
        }
    }
    for c in nullity..n {
        basis.push(eigenvectors.column(c).into_owned());
    }
    let s_basis = DMatrix::from_columns(&basis);

    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        s_basis,
    })
}
