//! Validated transition matrices, Markov–Dobrushin overlap coefficients,
//! stationary laws and the exact total-variation oracle.
//!
//! Total variation is measured in the full convention `Σ_k |μ_k − ν_k|`,
//! so distances live in `[0, 2]`. [`half_tv_distance`] gives the
//! `sup_A |μ(A) − ν(A)|` view.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default row-sum tolerance used when validating transition matrices.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Size above which [`stationary_distribution`] switches from a direct
/// linear solve to power iteration.
pub const DIRECT_SOLVE_MAX_STATES: usize = 2000;

const STATIONARY_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NonSquare { row: usize, len: usize, expected: usize },
    #[error("need at least 2 states, got {0}")]
    TooFewStates(usize),
    #[error("entry ({0}, {1}) is not finite")]
    NonFinite(usize, usize),
    #[error("negative entry at ({0}, {1})")]
    NegativeEntry(usize, usize),
    #[error("row {0} sums to {1}, outside tolerance")]
    RowSumViolation(usize, f64),
    #[error("state {index} out of range for {n} states")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("weight {1} at index {0} is negative or not finite")]
    InvalidWeight(usize, f64),
    #[error("distribution weights sum to {0}")]
    NotNormalized(f64),
    #[error("chain is reducible")]
    Reducible,
    #[error("chain is periodic with period {0}")]
    Periodic(usize),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("kernel sequence is empty")]
    EmptyKernel,
    #[error("time {t} is beyond the horizon {horizon}")]
    HorizonExceeded { t: usize, horizon: usize },
    #[error("step count must be at least 1")]
    ZeroSteps,
}

/// A row-stochastic transition matrix over states `0..n`, `n ≥ 2`.
///
/// Entries are stored row-major; row `i` is the law `p(i, ·)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct StochasticMatrix {
    n: usize,
    p: Vec<f64>,
}

impl StochasticMatrix {
    /// Validates `rows` with the default tolerance and no renormalization.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ChainError> {
        validate_stochastic(&rows, ROW_SUM_TOL, false)
    }

    pub fn identity(n: usize) -> Self {
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = 1.0;
        }
        StochasticMatrix { n, p }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.p.chunks_exact(self.n)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.p)
    }

    /// Matrix product `self · other` (first `self`, then `other`).
    pub fn compose(&self, other: &StochasticMatrix) -> Result<StochasticMatrix, ChainError> {
        if self.n != other.n {
            return Err(ChainError::LengthMismatch(self.n, other.n));
        }
        let n = self.n;
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            let out = &mut p[i * n..(i + 1) * n];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(StochasticMatrix { n, p })
    }

    /// The `m`-step kernel `P^m`.
    pub fn power(&self, m: usize) -> Result<StochasticMatrix, ChainError> {
        if m == 0 {
            return Err(ChainError::ZeroSteps);
        }
        let mut acc = self.clone();
        for _ in 1..m {
            acc = acc.compose(self)?;
        }
        Ok(acc)
    }

    /// Row vector propagation `w · P`.
    pub fn propagate(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            for (o, &pij) in out.iter_mut().zip(self.row(i)) {
                *o += wi * pij;
            }
        }
        out
    }

    /// Applies a state relabeling: new state `perm[i]` is old state `i`.
    pub fn relabel(&self, perm: &[usize]) -> Result<StochasticMatrix, ChainError> {
        let n = self.n;
        if perm.len() != n {
            return Err(ChainError::LengthMismatch(perm.len(), n));
        }
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                p[perm[i] * n + perm[j]] = self.get(i, j);
            }
        }
        Ok(StochasticMatrix { n, p })
    }
}

impl TryFrom<Vec<Vec<f64>>> for StochasticMatrix {
    type Error = ChainError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        StochasticMatrix::new(rows)
    }
}

impl From<StochasticMatrix> for Vec<Vec<f64>> {
    fn from(m: StochasticMatrix) -> Self {
        m.to_rows()
    }
}

/// Checks and wraps a raw square array as a [`StochasticMatrix`].
///
/// With `renormalize` set, a row whose sum lies in `[1 − tol·n, 1 + tol·n]`
/// is divided by its sum. Without it, any row whose sum is more than `tol`
/// away from 1 is rejected.
pub fn validate_stochastic(
    raw: &[Vec<f64>],
    tol: f64,
    renormalize: bool,
) -> Result<StochasticMatrix, ChainError> {
    let n = raw.len();
    for (i, row) in raw.iter().enumerate() {
        if row.len() != n {
            return Err(ChainError::NonSquare { row: i, len: row.len(), expected: n });
        }
    }
    if n < 2 {
        return Err(ChainError::TooFewStates(n));
    }
    let mut p = Vec::with_capacity(n * n);
    for (i, row) in raw.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(ChainError::NonFinite(i, j));
            }
            if v < 0.0 {
                return Err(ChainError::NegativeEntry(i, j));
            }
        }
        let sum: f64 = row.iter().sum();
        if renormalize {
            let slack = tol * n as f64;
            if !(1.0 - slack..=1.0 + slack).contains(&sum) || sum == 0.0 {
                return Err(ChainError::RowSumViolation(i, sum));
            }
            p.extend(row.iter().map(|v| v / sum));
        } else {
            if (sum - 1.0).abs() > tol {
                return Err(ChainError::RowSumViolation(i, sum));
            }
            p.extend_from_slice(row);
        }
    }
    Ok(StochasticMatrix { n, p })
}

/// A probability vector over `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    w: Vec<f64>,
}

impl Distribution {
    pub fn new(w: Vec<f64>) -> Result<Self, ChainError> {
        for (i, &x) in w.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(ChainError::InvalidWeight(i, x));
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(ChainError::NotNormalized(sum));
        }
        Ok(Distribution { w })
    }

    /// The point mass `δ_i` on `n` states.
    pub fn point(n: usize, i: usize) -> Result<Self, ChainError> {
        if i >= n {
            return Err(ChainError::IndexOutOfRange { index: i, n });
        }
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Ok(Distribution { w })
    }

    pub fn uniform(n: usize) -> Self {
        Distribution { w: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn get(&self, i: usize) -> f64 {
        self.w[i]
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = ChainError;

    fn try_from(w: Vec<f64>) -> Result<Self, Self::Error> {
        Distribution::new(w)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// Slices cover times `0..len`; nothing is defined beyond.
    Finite,
    /// `P_{t+T} = P_t` with `T` the number of slices.
    Periodic,
}

/// A sequence of transition matrices; slice `t` moves the chain from time
/// `t` to `t + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeVaryingKernel {
    slices: Vec<StochasticMatrix>,
    mode: KernelMode,
}

impl TimeVaryingKernel {
    pub fn new(slices: Vec<StochasticMatrix>, mode: KernelMode) -> Result<Self, ChainError> {
        let first = slices.first().ok_or(ChainError::EmptyKernel)?;
        let n = first.n();
        if let Some(bad) = slices.iter().find(|s| s.n() != n) {
            return Err(ChainError::LengthMismatch(n, bad.n()));
        }
        Ok(TimeVaryingKernel { slices, mode })
    }

    pub fn finite(slices: Vec<StochasticMatrix>) -> Result<Self, ChainError> {
        Self::new(slices, KernelMode::Finite)
    }

    pub fn periodic(slices: Vec<StochasticMatrix>) -> Result<Self, ChainError> {
        Self::new(slices, KernelMode::Periodic)
    }

    /// A time-homogeneous kernel `P` seen as a period-1 sequence.
    pub fn homogeneous(p: StochasticMatrix) -> Self {
        TimeVaryingKernel { slices: vec![p], mode: KernelMode::Periodic }
    }

    pub fn n(&self) -> usize {
        self.slices[0].n()
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn is_periodic(&self) -> bool {
        self.mode == KernelMode::Periodic
    }

    pub fn slices(&self) -> &[StochasticMatrix] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Number of defined steps, `None` when periodic.
    pub fn horizon(&self) -> Option<usize> {
        match self.mode {
            KernelMode::Finite => Some(self.slices.len()),
            KernelMode::Periodic => None,
        }
    }

    pub fn period(&self) -> Option<usize> {
        match self.mode {
            KernelMode::Finite => None,
            KernelMode::Periodic => Some(self.slices.len()),
        }
    }

    pub fn slice(&self, t: usize) -> Result<&StochasticMatrix, ChainError> {
        match self.mode {
            KernelMode::Periodic => Ok(&self.slices[t % self.slices.len()]),
            KernelMode::Finite => self
                .slices
                .get(t)
                .ok_or(ChainError::HorizonExceeded { t, horizon: self.slices.len() }),
        }
    }

    /// Fails unless steps `0..steps` are all defined.
    pub fn check_horizon(&self, steps: usize) -> Result<(), ChainError> {
        match self.horizon() {
            Some(h) if steps > h => Err(ChainError::HorizonExceeded { t: steps - 1, horizon: h }),
            _ => Ok(()),
        }
    }
}

/// Anything that hands out the transition matrix used at time `t`.
pub trait Kernel {
    fn states(&self) -> usize;
    fn at(&self, t: usize) -> Result<&StochasticMatrix, ChainError>;
}

impl Kernel for StochasticMatrix {
    fn states(&self) -> usize {
        self.n
    }

    fn at(&self, _t: usize) -> Result<&StochasticMatrix, ChainError> {
        Ok(self)
    }
}

impl Kernel for TimeVaryingKernel {
    fn states(&self) -> usize {
        self.n()
    }

    fn at(&self, t: usize) -> Result<&StochasticMatrix, ChainError> {
        self.slice(t)
    }
}

/// Pairwise overlaps `κ(i, j) = Σ_k p(i,k) ∧ p(j,k)` of one kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaProfile {
    pub pairwise: Vec<Vec<f64>>,
    /// Minimum over off-diagonal pairs.
    pub scalar: f64,
    /// The first pair `(i, j)`, `i < j`, attaining the minimum.
    pub worst_pair: (usize, usize),
    /// Which power of the kernel the overlaps were computed on.
    pub step_count: usize,
}

/// `Σ_k a_k ∧ b_k`, summed in index order.
pub fn overlap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).sum()
}

fn check_index(p: &StochasticMatrix, i: usize) -> Result<(), ChainError> {
    if i >= p.n() {
        Err(ChainError::IndexOutOfRange { index: i, n: p.n() })
    } else {
        Ok(())
    }
}

/// One-step overlap of rows `i` and `j`; exactly 1 on the diagonal.
pub fn kappa_pair(p: &StochasticMatrix, i: usize, j: usize) -> Result<f64, ChainError> {
    check_index(p, i)?;
    check_index(p, j)?;
    if i == j {
        return Ok(1.0);
    }
    Ok(overlap(p.row(i), p.row(j)))
}

/// The same overlap computed through densities against the averaged
/// reference measure `Λ(k) = (p(i,k) + p(j,k)) / 2`.
pub fn kappa_pair_via_reference(p: &StochasticMatrix, i: usize, j: usize) -> Result<f64, ChainError> {
    check_index(p, i)?;
    check_index(p, j)?;
    if i == j {
        return Ok(1.0);
    }
    let total = p
        .row(i)
        .iter()
        .zip(p.row(j))
        .filter_map(|(&a, &b)| {
            let lambda = 0.5 * (a + b);
            (lambda > 0.0).then(|| (a / lambda).min(b / lambda) * lambda)
        })
        .sum();
    Ok(total)
}

fn profile_of(p: &StochasticMatrix, step_count: usize) -> KappaProfile {
    let n = p.n();
    let mut pairwise = vec![vec![1.0; n]; n];
    let mut scalar = f64::INFINITY;
    let mut worst_pair = (0, 1);
    for i in 0..n {
        for j in i + 1..n {
            let k = overlap(p.row(i), p.row(j));
            pairwise[i][j] = k;
            pairwise[j][i] = k;
            if k < scalar {
                scalar = k;
                worst_pair = (i, j);
            }
        }
    }
    KappaProfile { pairwise, scalar, worst_pair, step_count }
}

/// Overlap profile of the `m`-step kernel `P^m`.
pub fn kappa(p: &StochasticMatrix, m: usize) -> Result<KappaProfile, ChainError> {
    let pm = p.power(m)?;
    Ok(profile_of(&pm, m))
}

/// Sum of absolute differences (full variation, range `[0, 2]`).
pub fn tv_distance(mu: &Distribution, nu: &Distribution) -> Result<f64, ChainError> {
    tv_weights(mu.weights(), nu.weights())
}

pub fn half_tv_distance(mu: &Distribution, nu: &Distribution) -> Result<f64, ChainError> {
    Ok(0.5 * tv_distance(mu, nu)?)
}

/// [`tv_distance`] on raw weight vectors.
pub fn tv_weights(a: &[f64], b: &[f64]) -> Result<f64, ChainError> {
    if a.len() != b.len() {
        return Err(ChainError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Laws `μ · P_0 ⋯ P_{t−1}` for `t = 0..=steps`.
pub fn marginal_curve<K: Kernel>(
    kernel: &K,
    mu: &Distribution,
    steps: usize,
) -> Result<Vec<Vec<f64>>, ChainError> {
    if mu.len() != kernel.states() {
        return Err(ChainError::LengthMismatch(mu.len(), kernel.states()));
    }
    let mut out = Vec::with_capacity(steps + 1);
    let mut w = mu.weights().to_vec();
    out.push(w.clone());
    for t in 0..steps {
        w = kernel.at(t)?.propagate(&w);
        out.push(w.clone());
    }
    Ok(out)
}

/// Exact distance `d(t) = tv(μ₁ Π_{s<t} P_s, μ₂ Π_{s<t} P_s)` for
/// `t = 0..=n_max`, by row-vector propagation.
pub fn exact_tv_curve<K: Kernel>(
    kernel: &K,
    mu1: &Distribution,
    mu2: &Distribution,
    n_max: usize,
) -> Result<Vec<f64>, ChainError> {
    if n_max == 0 {
        return Err(ChainError::ZeroSteps);
    }
    let a = marginal_curve(kernel, mu1, n_max)?;
    let b = marginal_curve(kernel, mu2, n_max)?;
    a.iter().zip(&b).map(|(x, y)| tv_weights(x, y)).collect()
}

/// Detailed balance `|π_i p_ij − π_j p_ji| < tol` for all pairs.
pub fn is_reversible(p: &StochasticMatrix, pi: &Distribution, tol: f64) -> bool {
    let n = p.n();
    if pi.len() != n {
        return false;
    }
    (0..n).all(|i| {
        (i + 1..n).all(|j| (pi.get(i) * p.get(i, j) - pi.get(j) * p.get(j, i)).abs() < tol)
    })
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].unwrap_or(0);
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Period of the support digraph, or `None` when it is not strongly
/// connected.
pub fn period(p: &StochasticMatrix) -> Option<usize> {
    let n = p.n();
    let mut fwd = vec![Vec::new(); n];
    let mut rev = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if p.get(i, j) > 0.0 {
                fwd[i].push(j);
                rev[j].push(i);
            }
        }
    }
    let level = bfs_levels(&fwd, 0);
    if level.iter().any(Option::is_none) || bfs_levels(&rev, 0).iter().any(Option::is_none) {
        return None;
    }
    let lv = |i: usize| level[i].unwrap_or(0);
    let mut g = 0;
    for (u, targets) in fwd.iter().enumerate() {
        for &v in targets {
            g = gcd(g, (lv(u) + 1).abs_diff(lv(v)));
        }
    }
    Some(g)
}

pub fn is_irreducible(p: &StochasticMatrix) -> bool {
    period(p).is_some()
}

/// Irreducible with period 1.
pub fn is_ergodic(p: &StochasticMatrix) -> bool {
    period(p) == Some(1)
}

/// The unique `π` with `π P = π`, for irreducible aperiodic `P`.
///
/// Solved directly for `n ≤ 2000`, by power iteration above that; the
/// result is refined by power steps until `‖π P − π‖∞ < tol`.
pub fn stationary_distribution(p: &StochasticMatrix, tol: f64) -> Result<Distribution, ChainError> {
    match period(p) {
        None => return Err(ChainError::Reducible),
        Some(1) => {}
        Some(d) => return Err(ChainError::Periodic(d)),
    }
    let n = p.n();
    let mut pi = if n <= DIRECT_SOLVE_MAX_STATES {
        direct_stationary(p).unwrap_or_else(|| vec![1.0 / n as f64; n])
    } else {
        vec![1.0 / n as f64; n]
    };
    let residual = |w: &[f64]| {
        p.propagate(w)
            .iter()
            .zip(w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let mut iterations = 0;
    while residual(&pi) >= tol {
        if iterations == STATIONARY_MAX_ITER {
            return Err(ChainError::NoConvergence(iterations));
        }
        pi = p.propagate(&pi);
        normalize(&mut pi);
        iterations += 1;
    }
    Distribution::new(pi)
}

fn normalize(w: &mut [f64]) {
    for x in w.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
}

fn direct_stationary(p: &StochasticMatrix) -> Option<Vec<f64>> {
    let n = p.n();
    // (Pᵀ − I) π = 0 with the last equation replaced by Σπ = 1.
    let mut a = p.to_dmatrix().transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b)?;
    let mut pi: Vec<f64> = x.iter().copied().collect();
    if pi.iter().any(|v| !v.is_finite()) {
        return None;
    }
    normalize(&mut pi);
    Some(pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> StochasticMatrix {
        StochasticMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn p_e() -> StochasticMatrix {
        m(&[&[0.0, 0.3, 0.7], &[1.0, 0.0, 0.0], &[0.8, 0.1, 0.1]])
    }

    #[test]
    fn validates_examples() {
        assert!(StochasticMatrix::new(vec![vec![0.65, 0.35], vec![0.35, 0.65]]).is_ok());
        assert!(StochasticMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_ok());
        match validate_stochastic(&[vec![0.5, 0.6], vec![0.5, 0.5]], 1e-9, false) {
            Err(ChainError::RowSumViolation(0, s)) => assert_abs_diff_eq!(s, 1.1, epsilon = 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_shapes_and_entries() {
        assert!(matches!(
            validate_stochastic(&[vec![1.0, 0.0], vec![1.0]], 1e-9, false),
            Err(ChainError::NonSquare { row: 1, .. })
        ));
        assert_eq!(
            validate_stochastic(&[vec![1.0]], 1e-9, false),
            Err(ChainError::TooFewStates(1))
        );
        assert_eq!(
            validate_stochastic(&[vec![1.2, -0.2], vec![0.5, 0.5]], 1e-9, false),
            Err(ChainError::NegativeEntry(0, 1))
        );
        assert_eq!(
            validate_stochastic(&[vec![f64::NAN, 1.0], vec![0.5, 0.5]], 1e-9, false),
            Err(ChainError::NonFinite(0, 0))
        );
    }

    #[test]
    fn renormalization_window() {
        let raw = [vec![0.5, 0.5 + 1e-9], vec![0.5, 0.5]];
        assert!(validate_stochastic(&raw, 1e-10, false).is_err());
        let p = validate_stochastic(&raw, 1e-9, true).unwrap();
        assert_abs_diff_eq!(p.row(0).iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(validate_stochastic(&[vec![0.5, 0.6], vec![0.5, 0.5]], 1e-9, true).is_err());
    }

    #[test]
    fn pairwise_overlaps_of_p_e() {
        let p = p_e();
        assert_eq!(kappa_pair(&p, 0, 1).unwrap(), 0.0);
        assert_abs_diff_eq!(kappa_pair(&p, 1, 2).unwrap(), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(kappa_pair(&p, 0, 2).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(kappa_pair(&p, 2, 2).unwrap(), 1.0);
        assert_eq!(
            kappa_pair(&p, 0, 3),
            Err(ChainError::IndexOutOfRange { index: 3, n: 3 })
        );
    }

    #[test]
    fn reference_measure_form_agrees() {
        let p = p_e();
        assert_abs_diff_eq!(kappa_pair_via_reference(&p, 0, 2).unwrap(), 0.2, epsilon = 1e-12);
        let a = m(&[&[0.65, 0.35], &[0.35, 0.65]]);
        assert_abs_diff_eq!(kappa_pair_via_reference(&a, 0, 1).unwrap(), 0.7, epsilon = 1e-12);
        let disjoint = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(kappa_pair_via_reference(&disjoint, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn kappa_scalar_and_two_step() {
        let a = m(&[&[0.65, 0.35], &[0.35, 0.65]]);
        assert_eq!(kappa(&a, 1).unwrap().scalar, 0.7);
        let e1 = kappa(&p_e(), 1).unwrap();
        assert_eq!(e1.scalar, 0.0);
        assert_eq!(e1.worst_pair, (0, 1));
        let e2 = kappa(&p_e(), 2).unwrap();
        assert!(e2.scalar > 0.0);
        assert_eq!(e2.step_count, 2);
        assert_eq!(kappa(&a, 0), Err(ChainError::ZeroSteps));
    }

    #[test]
    fn stationary_examples() {
        let c = m(&[&[0.0, 0.3, 0.7], &[0.3, 0.7, 0.0], &[0.7, 0.0, 0.3]]);
        let pi = stationary_distribution(&c, 1e-12).unwrap();
        for &w in pi.weights() {
            assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-12);
        }
        let a = m(&[&[0.65, 0.35], &[0.35, 0.65]]);
        let pi = stationary_distribution(&a, 1e-12).unwrap();
        assert_abs_diff_eq!(pi.get(0), 0.5, epsilon = 1e-12);
        // Oracle: balance 0.2 π₀ = 0.4 π₁ with π₀ + π₁ = 1.
        let b = m(&[&[0.8, 0.2], &[0.4, 0.6]]);
        let pi = stationary_distribution(&b, 1e-12).unwrap();
        assert_abs_diff_eq!(pi.get(0), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi.get(1), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn stationary_rejects_reducible_and_periodic() {
        assert_eq!(
            stationary_distribution(&StochasticMatrix::identity(3), 1e-12),
            Err(ChainError::Reducible)
        );
        let flip = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(stationary_distribution(&flip, 1e-12), Err(ChainError::Periodic(2)));
        let cycle = m(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        assert_eq!(period(&cycle), Some(3));
        assert_eq!(period(&p_e()), Some(1));
    }

    #[test]
    fn tv_examples() {
        let d = |w: &[f64]| Distribution::new(w.to_vec()).unwrap();
        assert_eq!(tv_distance(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 2.0);
        assert_eq!(tv_distance(&d(&[0.3, 0.7]), &d(&[0.3, 0.7])).unwrap(), 0.0);
        assert_abs_diff_eq!(tv_distance(&d(&[0.7, 0.3]), &d(&[0.5, 0.5])).unwrap(), 0.4, epsilon = 1e-15);
        assert_eq!(
            tv_distance(&d(&[1.0, 0.0]), &Distribution::uniform(3)),
            Err(ChainError::LengthMismatch(2, 3))
        );
    }

    #[test]
    fn tv_curve_examples() {
        let d0 = Distribution::point(2, 0).unwrap();
        let d1 = Distribution::point(2, 1).unwrap();
        let a = m(&[&[0.65, 0.35], &[0.35, 0.65]]);
        let curve = exact_tv_curve(&a, &d0, &d1, 12).unwrap();
        for (n, v) in curve.iter().enumerate() {
            assert_abs_diff_eq!(*v, 2.0 * 0.3f64.powi(n as i32), epsilon = 1e-14);
        }
        let id = StochasticMatrix::identity(2);
        assert!(exact_tv_curve(&id, &d0, &d1, 5).unwrap().iter().all(|&v| v == 2.0));
        let flat = m(&[&[0.2, 0.8], &[0.2, 0.8]]);
        let curve = exact_tv_curve(&flat, &d0, &d1, 4).unwrap();
        assert_eq!(curve[0], 2.0);
        assert!(curve[1..].iter().all(|&v| v == 0.0));
        assert!(exact_tv_curve(&a, &d0, &Distribution::uniform(3), 2).is_err());
    }

    #[test]
    fn reversibility() {
        let a = m(&[&[0.65, 0.35], &[0.35, 0.65]]);
        assert!(is_reversible(&a, &Distribution::uniform(2), 1e-12));
        let f = m(&[
            &[0.3, 0.3, 0.1, 0.3],
            &[0.3, 0.7, 0.0, 0.0],
            &[0.1, 0.0, 0.8, 0.1],
            &[0.3, 0.0, 0.1, 0.6],
        ]);
        let pi = stationary_distribution(&f, 1e-12).unwrap();
        assert!(is_reversible(&f, &pi, 1e-12));
        let e = p_e();
        let pi = stationary_distribution(&e, 1e-12).unwrap();
        assert!(!is_reversible(&e, &pi, 1e-9));
    }

    #[test]
    fn kernel_slices() {
        let a = m(&[&[0.65, 0.35], &[0.35, 0.65]]);
        let b = m(&[&[0.8, 0.2], &[0.4, 0.6]]);
        let per = TimeVaryingKernel::periodic(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(per.slice(3).unwrap(), &b);
        assert_eq!(per.period(), Some(2));
        let fin = TimeVaryingKernel::finite(vec![a, b]).unwrap();
        assert_eq!(fin.slice(2), Err(ChainError::HorizonExceeded { t: 2, horizon: 2 }));
        assert!(fin.check_horizon(2).is_ok());
        assert!(fin.check_horizon(3).is_err());
        assert_eq!(TimeVaryingKernel::finite(vec![]), Err(ChainError::EmptyKernel));
        let mixed = TimeVaryingKernel::finite(vec![StochasticMatrix::identity(2), StochasticMatrix::identity(3)]);
        assert!(mixed.is_err());
    }

    #[test]
    fn serde_validates() {
        let err: Result<StochasticMatrix, _> = serde_json_like("[[0.5,0.6],[0.5,0.5]]");
        assert!(err.is_err());
        let ok: StochasticMatrix = serde_json_like("[[0.25,0.75],[1,0]]").unwrap();
        assert_eq!(ok.get(0, 1), 0.75);
    }

    fn serde_json_like<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, serde_json::Error> {
        serde_json::from_str(s)
    }
}
