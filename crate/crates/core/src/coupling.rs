//! The coupling operator `V̂` on ordered pairs of distinct states.
//!
//! For a pair `x = (i, j)` with overlap `κ(x) < 1` the two copies fail to
//! couple with probability `1 − κ(x)` and then move independently to the
//! residual laws `φ₁ = (p(i,·) − m)/(1 − κ)`, `φ₂ = (p(j,·) − m)/(1 − κ)`
//! where `m = p(i,·) ∧ p(j,·)`. The residuals have disjoint supports, so
//! the pair stays off the diagonal and
//!
//! ```text
//! V̂[(i,j), (k,l)] = (1 − κ(i,j)) · φ₁(k) · φ₂(l)
//! ```
//!
//! `(V̂ⁿ 1)(x)` is exactly the probability that the coupled copies started
//! at `x` are still apart after `n` steps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{overlap, ChainError, StochasticMatrix, TimeVaryingKernel};

/// States above which operators are refused unless a larger limit is given.
pub const DEFAULT_MAX_STATES: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("pair ({0}, {0}) lies on the diagonal")]
    DiagonalPair(usize),
    #[error("{n} states gives a {dim}×{dim} operator; limit is {limit} states")]
    TooLarge { n: usize, dim: usize, limit: usize },
    #[error("kernel is not periodic")]
    NotPeriodic,
    #[error("operator dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Bijection between ordered pairs `(i, j)`, `i ≠ j`, and `0..n(n−1)`.
///
/// Row-major over `i`, skipping the diagonal:
/// `index = i·(n−1) + (j if j < i else j − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIndex {
    n: usize,
}

impl PairIndex {
    pub fn new(n: usize) -> Self {
        PairIndex { n }
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n.saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self, i: usize, j: usize) -> Option<usize> {
        if i == j || i >= self.n || j >= self.n {
            return None;
        }
        Some(i * (self.n - 1) + if j < i { j } else { j - 1 })
    }

    pub fn decode(&self, index: usize) -> (usize, usize) {
        let i = index / (self.n - 1);
        let r = index % (self.n - 1);
        (i, if r < i { r } else { r + 1 })
    }

    /// Index of the swapped pair `(j, i)`.
    pub fn swapped(&self, index: usize) -> usize {
        let (i, j) = self.decode(index);
        j * (self.n - 1) + if i < j { i } else { i - 1 }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).map(|x| self.decode(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    None,
    /// Disjoint rows: coupling cannot happen at this step.
    KappaZero,
    /// Identical rows: coupling happens surely.
    KappaOne,
}

/// Overlap and normalized leftovers of two transition rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPair {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub kappa: f64,
    pub degenerate: Degeneracy,
}

impl ResidualPair {
    /// Splits two laws into common part and residuals.
    ///
    /// Residuals are normalized by their own mass, which equals `1 − κ`
    /// for exactly normalized rows.
    pub fn of_rows(a: &[f64], b: &[f64]) -> Self {
        let kappa = overlap(a, b);
        let mut phi1: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - x.min(*y)).collect();
        let mut phi2: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x.min(*y)).collect();
        let r1: f64 = phi1.iter().sum();
        let r2: f64 = phi2.iter().sum();
        if r1 == 0.0 || r2 == 0.0 {
            return ResidualPair {
                phi1: a.to_vec(),
                phi2: a.to_vec(),
                kappa: 1.0,
                degenerate: Degeneracy::KappaOne,
            };
        }
        phi1.iter_mut().for_each(|v| *v /= r1);
        phi2.iter_mut().for_each(|v| *v /= r2);
        let degenerate = if kappa == 0.0 { Degeneracy::KappaZero } else { Degeneracy::None };
        ResidualPair { phi1, phi2, kappa, degenerate }
    }

    /// The normalized common part `m/κ`, or `None` when `κ = 0`.
    pub fn common(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
        let kappa = overlap(a, b);
        (kappa > 0.0).then(|| a.iter().zip(b).map(|(x, y)| x.min(*y) / kappa).collect())
    }

    pub fn damping(&self) -> f64 {
        match self.degenerate {
            Degeneracy::KappaOne => 0.0,
            _ => 1.0 - self.kappa,
        }
    }
}

/// Residual decomposition of rows `i ≠ j` of `P`.
pub fn residual_pair(p: &StochasticMatrix, i: usize, j: usize) -> Result<ResidualPair, CouplingError> {
    for s in [i, j] {
        if s >= p.n() {
            return Err(ChainError::IndexOutOfRange { index: s, n: p.n() }.into());
        }
    }
    if i == j {
        return Err(CouplingError::DiagonalPair(i));
    }
    Ok(ResidualPair::of_rows(p.row(i), p.row(j)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    OneStep,
    MStep(usize),
    TimeSlice(usize),
    PeriodProduct(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOperator {
    pub n: usize,
    pub pair_index: PairIndex,
    /// Nonnegative `n(n−1) × n(n−1)` matrix.
    pub matrix: DMatrix<f64>,
    /// `V̂·1`; equals `1 − κ(pair)` for one-step operators.
    pub damping: Vec<f64>,
    pub provenance: Provenance,
}

impl CouplingOperator {
    pub fn dim(&self) -> usize {
        self.pair_index.len()
    }

    pub fn max_row_sum(&self) -> f64 {
        self.damping.iter().copied().fold(0.0, f64::max)
    }

    pub fn apply(&self, h: &DVector<f64>) -> DVector<f64> {
        &self.matrix * h
    }

    /// Restriction to functions symmetric under `(i,j) ↦ (j,i)`, indexed by
    /// unordered pairs `i < j` in lexicographic order.
    ///
    /// `V̂` commutes with the swap, and the swap-symmetrized Perron vector is
    /// still a Perron vector, so this block carries the spectral radius at
    /// one eighth of the eigensolver cost.
    pub fn swap_symmetric_block(&self) -> DMatrix<f64> {
        let n = self.n;
        let unordered: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let d = unordered.len();
        let mut out = DMatrix::zeros(d, d);
        for (r, &(i, j)) in unordered.iter().enumerate() {
            let row = self.pair_index.encode(i, j).unwrap_or(0);
            for (c, &(k, l)) in unordered.iter().enumerate() {
                let a = self.pair_index.encode(k, l).unwrap_or(0);
                let b = self.pair_index.encode(l, k).unwrap_or(0);
                out[(r, c)] = self.matrix[(row, a)] + self.matrix[(row, b)];
            }
        }
        out
    }
}

fn check_size(n: usize, limit: usize) -> Result<(), CouplingError> {
    if n > limit {
        let dim = n * (n - 1);
        return Err(CouplingError::TooLarge { n, dim, limit });
    }
    Ok(())
}

fn one_step(p: &StochasticMatrix, provenance: Provenance, limit: usize) -> Result<CouplingOperator, CouplingError> {
    let n = p.n();
    check_size(n, limit)?;
    let index = PairIndex::new(n);
    let dim = index.len();
    let mut matrix = DMatrix::zeros(dim, dim);
    let mut damping = vec![0.0; dim];
    for x in 0..dim {
        let (i, j) = index.decode(x);
        let rp = ResidualPair::of_rows(p.row(i), p.row(j));
        let d = rp.damping();
        if d == 0.0 {
            continue;
        }
        for (k, &a) in rp.phi1.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (l, &b) in rp.phi2.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                // Disjoint supports never put mass on k == l.
                if let Some(y) = index.encode(k, l) {
                    matrix[(x, y)] = d * a * b;
                }
            }
        }
        damping[x] = matrix.row(x).sum();
    }
    Ok(CouplingOperator { n, pair_index: index, matrix, damping, provenance })
}

/// One-step operator, refusing chains above [`DEFAULT_MAX_STATES`].
pub fn build_vhat(p: &StochasticMatrix) -> Result<CouplingOperator, CouplingError> {
    one_step(p, Provenance::OneStep, DEFAULT_MAX_STATES)
}

pub fn build_vhat_with_limit(p: &StochasticMatrix, max_states: usize) -> Result<CouplingOperator, CouplingError> {
    one_step(p, Provenance::OneStep, max_states)
}

/// One-step construction applied to the `m`-step kernel `P^m`.
pub fn build_vhat_m(p: &StochasticMatrix, m: usize) -> Result<CouplingOperator, CouplingError> {
    let pm = p.power(m)?;
    one_step(&pm, Provenance::MStep(m), DEFAULT_MAX_STATES)
}

/// Operator of slice `t` (reduced mod `T` for periodic kernels).
pub fn build_vhat_slice(k: &TimeVaryingKernel, t: usize) -> Result<CouplingOperator, CouplingError> {
    let slice = k.slice(t)?;
    one_step(slice, Provenance::TimeSlice(t), DEFAULT_MAX_STATES)
}

/// `V̂₀ · V̂₁ ⋯ V̂_{T−1}` over one period.
pub fn build_period_operator(k: &TimeVaryingKernel) -> Result<CouplingOperator, CouplingError> {
    let period = k.period().ok_or(CouplingError::NotPeriodic)?;
    let mut acc = build_vhat_slice(k, 0)?;
    for t in 1..period {
        let next = build_vhat_slice(k, t)?;
        acc.matrix = &acc.matrix * &next.matrix;
    }
    acc.damping = acc.matrix.row_iter().map(|r| r.sum()).collect();
    acc.provenance = Provenance::PeriodProduct(period);
    Ok(acc)
}

/// `(V̂^k 1)(x)` for `k = 0..=n`, indexed `[k][pair]`.
pub fn bound_vector(v: &CouplingOperator, n: usize) -> Vec<Vec<f64>> {
    let mut h = DVector::from_element(v.dim(), 1.0);
    let mut out = Vec::with_capacity(n + 1);
    out.push(h.as_slice().to_vec());
    for _ in 0..n {
        h = v.apply(&h);
        out.push(h.as_slice().to_vec());
    }
    out
}

/// `(V̂₀ V̂₁ ⋯ V̂_{k−1} 1)(x)` for `k = 0..=n`, indexed `[k][pair]`.
pub fn product_bound_vector(k: &TimeVaryingKernel, n: usize) -> Result<Vec<Vec<f64>>, CouplingError> {
    k.check_horizon(n)?;
    let distinct = k.period().unwrap_or(k.len()).min(n.max(1));
    let ops: Vec<CouplingOperator> = (0..distinct)
        .map(|t| build_vhat_slice(k, t))
        .collect::<Result<_, _>>()?;
    let dim = PairIndex::new(k.n()).len();
    let ones = DVector::from_element(dim, 1.0);
    let mut out = Vec::with_capacity(n + 1);
    out.push(ones.as_slice().to_vec());
    for steps in 1..=n {
        let mut h = ones.clone();
        for t in (0..steps).rev() {
            h = ops[t % ops.len()].apply(&h);
        }
        out.push(h.as_slice().to_vec());
    }
    Ok(out)
}

/// Largest entry of `|V̂^(m) − V̂^m|`.
///
/// The `m`-step operator built from `P^m` and the `m`-th power of the
/// one-step operator need not agree entrywise; this quantifies by how much.
pub fn power_discrepancy(p: &StochasticMatrix, m: usize) -> Result<f64, CouplingError> {
    let vm = build_vhat_m(p, m)?;
    let v = build_vhat(p)?;
    let mut pow = v.matrix.clone();
    for _ in 1..m {
        pow = &pow * &v.matrix;
    }
    Ok((&vm.matrix - pow).amax())
}

/// Joint law of `(X̃¹₁, X̃²₁)` from the uncoupled pair `(i, j)`, flattened
/// row-major over `n × n`: diagonal cells carry the common part, the rest
/// `(1 − κ) φ₁ ⊗ φ₂`.
pub fn joint_step_law(p: &StochasticMatrix, i: usize, j: usize) -> Result<Vec<f64>, CouplingError> {
    let rp = residual_pair(p, i, j)?;
    let n = p.n();
    let d = rp.damping();
    let mut law = vec![0.0; n * n];
    for u in 0..n {
        for v in 0..n {
            law[u * n + v] = d * rp.phi1[u] * rp.phi2[v];
        }
        law[u * n + u] += p.get(i, u).min(p.get(j, u));
    }
    if rp.degenerate == Degeneracy::KappaOne {
        for u in 0..n {
            for v in 0..n {
                law[u * n + v] = if u == v { p.get(i, u) } else { 0.0 };
            }
        }
    }
    Ok(law)
}
