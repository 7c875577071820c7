//! Convergence bounds as comparable per-step curves.
//!
//! Every curve bounds the full variation `Σ|μ₁Pⁿ − μ₂Pⁿ|`, hence the
//! leading factor 2 on coupling probabilities. `Asymptotic` curves only
//! describe an exponential rate and carry no finite-`n` guarantee.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    self, is_reversible, kappa, stationary_distribution, tv_weights, ChainError,
    Distribution, KappaProfile, Kernel, StochasticMatrix, TimeVaryingKernel,
};
use crate::coupling::{
    self, bound_vector, build_period_operator, build_vhat, build_vhat_with_limit, joint_step_law,
    product_bound_vector, CouplingError, PairIndex, ResidualPair,
};
use crate::spectral::{self, operator_spectrum, SpectralError, SpectralOptions, SpectralSummary};

/// Slack allowed when checking that a bound dominates an exact value.
pub const DOMINATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("chain is not reversible with respect to its stationary law")]
    NotReversible,
    #[error("step size m must be at least 1")]
    ZeroStep,
    #[error("base has {0} states but the kernel has {1}")]
    DimensionMismatch(usize, usize),
    #[error("no finite perturbation size: {0}")]
    Infeasible(Witness),
    #[error("perturbation fit is infeasible")]
    InfeasibleFit,
    #[error("curve {label} is below the exact distance at step {k}: {bound} < {exact}")]
    DominationViolated { label: String, k: usize, exact: f64, bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// Valid at every step.
    Bound,
    /// Only the exponential rate is certified.
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveVariant {
    pub label: String,
    pub values: Vec<f64>,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub label: String,
    pub kind: CurveKind,
    /// `b(0), …, b(n)`.
    pub values: Vec<f64>,
    pub rate: Option<f64>,
    pub constant: Option<f64>,
    pub variants: Vec<CurveVariant>,
    pub note: Option<String>,
}

impl BoundCurve {
    fn geometric(label: &str, kind: CurveKind, constant: f64, rate: f64, n: usize) -> Self {
        BoundCurve {
            label: label.to_string(),
            kind,
            values: geometric_values(constant, rate, n),
            rate: Some(rate),
            constant: Some(constant),
            variants: Vec::new(),
            note: None,
        }
    }

    fn variant(mut self, label: &str, values: Vec<f64>, rate: Option<f64>) -> Self {
        self.variants.push(CurveVariant { label: label.to_string(), values, rate });
        self
    }

    fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.to_string());
        self
    }

    /// First step where `exact` exceeds the curve by more than `tol`.
    pub fn first_violation(&self, exact: &[f64], tol: f64) -> Option<usize> {
        self.values.iter().zip(exact).position(|(b, e)| *e > *b + tol)
    }
}

fn geometric_values(constant: f64, rate: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| constant * rate.powi(k as i32)).collect()
}

/// `2(1 − κ)^k`, with the factor-free form as a variant.
pub fn md_curve(kp: &KappaProfile, n: usize) -> BoundCurve {
    let rate = 1.0 - kp.scalar;
    BoundCurve::geometric("md", CurveKind::Bound, 2.0, rate, n).variant(
        "md-half-tv",
        geometric_values(1.0, rate, n),
        Some(rate),
    )
}

/// `2(1 − κ^(m))^{⌊k/m⌋} (1 − κ)^{k − m⌊k/m⌋}`; the variant drops the
/// trailing one-step factor.
pub fn md_m_curve(p: &StochasticMatrix, m: usize, n: usize) -> Result<BoundCurve, BoundsError> {
    if m == 0 {
        return Err(BoundsError::ZeroStep);
    }
    let k1 = 1.0 - kappa(p, 1)?.scalar;
    let km = 1.0 - kappa(p, m)?.scalar;
    let values = (0..=n)
        .map(|k| 2.0 * km.powi((k / m) as i32) * k1.powi((k % m) as i32))
        .collect();
    let blocks_only = (0..=n).map(|k| 2.0 * km.powi((k / m) as i32)).collect();
    Ok(BoundCurve {
        label: format!("md-m{m}"),
        kind: CurveKind::Bound,
        values,
        rate: Some(km.powf(1.0 / m as f64)),
        constant: Some(2.0),
        variants: Vec::new(),
        note: None,
    }
    .variant(&format!("md-m{m}-blocks"), blocks_only, Some(km.powf(1.0 / m as f64))))
}

/// Exact coupling curve `2 max_x (V̂^k 1)(x)` with rate `r(V̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBound {
    pub curve: BoundCurve,
    /// `2 (V̂^k 1)(x)` indexed `[pair][k]`.
    pub pair_curves: Vec<Vec<f64>>,
    pub pair_index: PairIndex,
    pub summary: SpectralSummary,
}

pub fn spectral_bound(p: &StochasticMatrix, n: usize) -> Result<SpectralBound, BoundsError> {
    spectral_bound_with(p, n, coupling::DEFAULT_MAX_STATES, &SpectralOptions::default())
}

pub fn spectral_bound_with(
    p: &StochasticMatrix,
    n: usize,
    max_states: usize,
    opts: &SpectralOptions,
) -> Result<SpectralBound, BoundsError> {
    let v = build_vhat_with_limit(p, max_states)?;
    let summary = operator_spectrum(&v, opts)?;
    let by_step = bound_vector(&v, n);
    let values = by_step
        .iter()
        .map(|h| 2.0 * h.iter().copied().fold(0.0, f64::max))
        .collect();
    let pair_curves = (0..v.dim())
        .map(|x| by_step.iter().map(|h| 2.0 * h[x]).collect())
        .collect();
    let curve = BoundCurve {
        label: "coupling-exact".into(),
        kind: CurveKind::Bound,
        values,
        rate: Some(summary.radius),
        constant: None,
        variants: Vec::new(),
        note: None,
    };
    Ok(SpectralBound { curve, pair_curves, pair_index: v.pair_index, summary })
}

/// `((1 − π_i)/(2π_i))^{1/2} γ^k` for reversible chains, `γ = |λ₂|`.
///
/// Compared against the half-variation distance to `π`.
pub fn ds_bound(p: &StochasticMatrix, i: usize, n: usize) -> Result<BoundCurve, BoundsError> {
    if i >= p.n() {
        return Err(ChainError::IndexOutOfRange { index: i, n: p.n() }.into());
    }
    let pi = stationary_distribution(p, 1e-12)?;
    if !is_reversible(p, &pi, 1e-10) {
        return Err(BoundsError::NotReversible);
    }
    let gamma = spectral::second_modulus(p)?;
    let c = ds_constant(pi.get(i));
    Ok(BoundCurve::geometric("ds", CurveKind::Bound, c, gamma, n)
        .with_note("dominates the half-variation distance to the stationary law"))
}

fn ds_constant(pi_i: f64) -> f64 {
    ((1.0 - pi_i) / (2.0 * pi_i)).sqrt()
}

/// One-step overlaps `κ_t` for `t < n`.
fn slice_kappas(k: &TimeVaryingKernel, n: usize) -> Result<Vec<f64>, BoundsError> {
    (0..n).map(|t| Ok(kappa(k.slice(t)?, 1)?.scalar)).collect()
}

fn block_kappa(k: &TimeVaryingKernel, start: usize, m: usize) -> Result<f64, BoundsError> {
    let mut prod = k.slice(start)?.clone();
    for t in start + 1..start + m {
        prod = prod.compose(k.slice(t)?)?;
    }
    Ok(kappa(&prod, 1)?.scalar)
}

/// `2 ∏_{t<k} (1 − κ_t)` for `m = 1`.
///
/// For `m > 1`, whole blocks use `κ^(m)` of `P_{bm} ⋯ P_{bm+m−1}` and the
/// incomplete tail uses one-step factors, so only slices before `k` enter.
pub fn nonhom_product_curve(k: &TimeVaryingKernel, n: usize, m: usize) -> Result<BoundCurve, BoundsError> {
    if m == 0 {
        return Err(BoundsError::ZeroStep);
    }
    k.check_horizon(n)?;
    let one = slice_kappas(k, n)?;
    let blocks: Vec<f64> = (0..n / m).map(|b| block_kappa(k, b * m, m)).collect::<Result<_, _>>()?;
    let values: Vec<f64> = (0..=n)
        .map(|steps| {
            let full = steps / m;
            let a: f64 = blocks[..full].iter().map(|x| 1.0 - x).product();
            let b: f64 = one[full * m..steps].iter().map(|x| 1.0 - x).product();
            2.0 * a * b
        })
        .collect();
    let rate = match k.period() {
        Some(t) => {
            let cycle = t / gcd(t, m);
            let mut prod = 1.0;
            for b in 0..cycle {
                prod *= 1.0 - block_kappa(k, b * m, m)?;
            }
            Some(prod.powf(1.0 / (cycle * m) as f64))
        }
        None => None,
    };
    let mut curve = BoundCurve {
        label: if m == 1 { "md-product".into() } else { format!("md-product-m{m}") },
        kind: CurveKind::Bound,
        values,
        rate,
        constant: Some(2.0),
        variants: Vec::new(),
        note: None,
    };
    if m == 1 && n > 0 {
        let worst = match k.period() {
            Some(t) => slice_kappas(k, t)?,
            None => one.clone(),
        }
        .into_iter()
        .map(|x| 1.0 - x)
        .fold(0.0, f64::max);
        curve = curve.variant("md-product-uniform", geometric_values(2.0, worst, n), Some(worst));
    }
    Ok(curve)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `2 Σ_{x¹≠x²} μ₁(x¹) μ₂(x²) (V̂₀ ⋯ V̂_{k−1} 1)(x¹, x²)`.
pub fn nonhom_coupling_curve(
    k: &TimeVaryingKernel,
    mu1: &Distribution,
    mu2: &Distribution,
    n: usize,
) -> Result<BoundCurve, BoundsError> {
    let s = k.n();
    for mu in [mu1, mu2] {
        if mu.len() != s {
            return Err(BoundsError::DimensionMismatch(mu.len(), s));
        }
    }
    let h = product_bound_vector(k, n)?;
    let index = PairIndex::new(s);
    let values = h
        .iter()
        .map(|hk| {
            2.0 * index
                .pairs()
                .zip(hk)
                .map(|((a, b), v)| mu1.get(a) * mu2.get(b) * v)
                .sum::<f64>()
        })
        .collect();
    Ok(BoundCurve {
        label: "coupling-product".into(),
        kind: CurveKind::Bound,
        values,
        rate: None,
        constant: None,
        variants: Vec::new(),
        note: None,
    })
}

/// `r(V̂₀ ⋯ V̂_{T−1})^{1/T}` and the exact curve `2 max_x (V̂₀ ⋯ V̂_{k−1} 1)(x)`.
pub fn periodic_rate(k: &TimeVaryingKernel, n: usize) -> Result<(f64, BoundCurve), BoundsError> {
    let period = k.period().ok_or(CouplingError::NotPeriodic)?;
    let op = build_period_operator(k)?;
    let summary = spectral::spectral_radius(&op.matrix)?;
    let rate = summary.radius.powf(1.0 / period as f64);
    let h = product_bound_vector(k, n)?;
    let values = h.iter().map(|v| 2.0 * v.iter().copied().fold(0.0, f64::max)).collect();
    Ok((
        rate,
        BoundCurve {
            label: "coupling-periodic".into(),
            kind: CurveKind::Bound,
            values,
            rate: Some(rate),
            constant: None,
            variants: Vec::new(),
            note: None,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `κ̄ ≤ (1+ε) κ_t`.
    OverlapLower,
    /// `1 − κ_t ≤ (1+ε)(1 − κ̄)`.
    NonCouplingUpper,
    /// `φ_{t,1}(u) ≤ (1+ε) φ̄₁(u)`.
    FirstResidual,
    /// `φ_{t,2}(u) ≤ (1+ε) φ̄₂(u)`.
    SecondResidual,
    /// `p_t(x, u) ≤ (1+ε) p̄(x, u)`.
    Transition,
    /// `(p_t(x¹,u) ∧ p_t(x²,u))/κ_t ≤ (1+ε)(p̄(x¹,u) ∧ p̄(x²,u))/κ̄`.
    CommonPart,
}

/// Where a constraint binds or fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub slice: usize,
    pub kind: ConstraintKind,
    /// Pair `(x¹, x²)`, or `(x, x)` for transition constraints.
    pub pair: (usize, usize),
    pub state: Option<usize>,
    /// `inf` for an infeasible constraint; JSON writes it as `null`.
    #[serde(deserialize_with = "null_as_infinity")]
    pub ratio: f64,
}

fn null_as_infinity<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl std::fmt::Display for Witness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} at slice {}, pair {:?}", self.kind, self.slice, self.pair)?;
        if let Some(u) = self.state {
            write!(f, ", state {u}")?;
        }
        write!(f, " (ratio {})", self.ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFit {
    pub epsilon: f64,
    pub delta: f64,
    pub feasible: bool,
    /// Base overlap `κ̄`.
    pub kappa_base: f64,
    /// `r(V̂)` of the base.
    pub radius_base: f64,
    pub rate_md: f64,
    pub rate_md_alt: f64,
    pub rate_spectral: f64,
    pub sense1: bool,
    pub sense2: bool,
    /// The constraint attaining the largest ratio.
    pub binding: Option<Witness>,
}

impl PerturbationFit {
    /// Rates implied by a given `ε` for a base with overlap `kappa_base`
    /// and operator radius `radius_base`.
    pub fn with_epsilon(epsilon: f64, kappa_base: f64, radius_base: f64) -> Self {
        let delta = (1.0 + epsilon).powi(2) - 1.0;
        let rate_md = 1.0 - kappa_base / (1.0 + epsilon);
        let rate_md_alt = (1.0 + epsilon) * (1.0 - kappa_base);
        let rate_spectral = (1.0 + delta) * radius_base;
        PerturbationFit {
            epsilon,
            delta,
            feasible: epsilon.is_finite(),
            kappa_base,
            radius_base,
            rate_md,
            rate_md_alt,
            rate_spectral,
            sense1: rate_spectral < 1.0,
            sense2: rate_spectral < rate_md,
            binding: None,
        }
    }
}

struct Scan {
    worst: f64,
    binding: Option<Witness>,
}

impl Scan {
    /// Records `a ≤ (1+ε) b`: inactive when `a = 0`, infeasible when
    /// `a > 0 = b`.
    fn check(&mut self, a: f64, b: f64, w: Witness) -> Result<(), BoundsError> {
        if a <= 0.0 {
            return Ok(());
        }
        if b <= 0.0 {
            return Err(BoundsError::Infeasible(Witness { ratio: f64::INFINITY, ..w }));
        }
        let ratio = a / b;
        if ratio > self.worst {
            self.worst = ratio;
            self.binding = Some(Witness { ratio, ..w });
        }
        Ok(())
    }
}

/// Smallest `ε ≥ 0` for which every slice is a `(1+ε)`-perturbation of
/// `base` in overlaps, residuals, transitions and normalized common parts.
///
/// Periodic kernels are scanned over one period; finite ones over their
/// horizon. Pairs with `κ_t = 1` have no residual and skip residual checks.
pub fn fit_perturbation(base: &StochasticMatrix, k: &TimeVaryingKernel) -> Result<PerturbationFit, BoundsError> {
    let n = base.n();
    if k.n() != n {
        return Err(BoundsError::DimensionMismatch(n, k.n()));
    }
    let mut scan = Scan { worst: 1.0, binding: None };
    let base_pairs: Vec<Vec<ResidualPair>> = (0..n)
        .map(|a| (0..n).map(|b| ResidualPair::of_rows(base.row(a), base.row(b))).collect())
        .collect();
    for (t, slice) in k.slices().iter().enumerate() {
        for x in 0..n {
            for u in 0..n {
                let w = Witness { slice: t, kind: ConstraintKind::Transition, pair: (x, x), state: Some(u), ratio: 0.0 };
                scan.check(slice.get(x, u), base.get(x, u), w)?;
            }
        }
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let bar = &base_pairs[a][b];
                let cur = ResidualPair::of_rows(slice.row(a), slice.row(b));
                let w = |kind, state| Witness { slice: t, kind, pair: (a, b), state, ratio: 0.0 };
                scan.check(bar.kappa, cur.kappa, w(ConstraintKind::OverlapLower, None))?;
                scan.check(cur.damping(), bar.damping(), w(ConstraintKind::NonCouplingUpper, None))?;
                if cur.damping() > 0.0 {
                    for u in 0..n {
                        scan.check(cur.phi1[u], bar.phi1[u], w(ConstraintKind::FirstResidual, Some(u)))?;
                        scan.check(cur.phi2[u], bar.phi2[u], w(ConstraintKind::SecondResidual, Some(u)))?;
                    }
                }
                if let (Some(c), Some(cb)) = (
                    ResidualPair::common(slice.row(a), slice.row(b)),
                    ResidualPair::common(base.row(a), base.row(b)),
                ) {
                    for u in 0..n {
                        scan.check(c[u], cb[u], w(ConstraintKind::CommonPart, Some(u)))?;
                    }
                }
            }
        }
    }
    let kappa_base = kappa(base, 1)?.scalar;
    let radius_base = operator_spectrum(&build_vhat(base)?, &SpectralOptions::default())?.radius;
    let mut fit = PerturbationFit::with_epsilon((scan.worst - 1.0).max(0.0), kappa_base, radius_base);
    fit.binding = scan.binding;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBounds {
    pub curves: Vec<BoundCurve>,
    pub sense1: bool,
    pub sense2: bool,
    /// Largest entrywise ratio of slice to base one-step pair laws.
    pub domination_max_ratio: f64,
    /// Whether that ratio stays within `(1+ε)²`.
    pub domination_holds: bool,
}

/// Geometric curves at the three perturbation rates, and the entrywise
/// check of slice pair laws against `(1+ε)²` times the base pair law.
pub fn perturbation_bounds(
    fit: &PerturbationFit,
    base: &StochasticMatrix,
    k: &TimeVaryingKernel,
    n: usize,
) -> Result<PerturbationBounds, BoundsError> {
    if !fit.feasible {
        return Err(BoundsError::InfeasibleFit);
    }
    let s = base.n();
    if k.n() != s {
        return Err(BoundsError::DimensionMismatch(s, k.n()));
    }
    let mut max_ratio: f64 = 0.0;
    for slice in k.slices() {
        for a in 0..s {
            for b in 0..s {
                let (cur, bar) = if a == b {
                    (diag_law(slice, a), diag_law(base, a))
                } else {
                    (joint_step_law(slice, a, b)?, joint_step_law(base, a, b)?)
                };
                for (c, r) in cur.iter().zip(&bar) {
                    if *c > 0.0 {
                        max_ratio = max_ratio.max(if *r > 0.0 { c / r } else { f64::INFINITY });
                    }
                }
            }
        }
    }
    let bound = (1.0 + fit.epsilon).powi(2);
    let curves = vec![
        BoundCurve::geometric("perturbed-md", CurveKind::Bound, 2.0, fit.rate_md, n),
        BoundCurve::geometric("perturbed-md-alt", CurveKind::Bound, 2.0, fit.rate_md_alt, n),
        BoundCurve::geometric("perturbed-coupling", CurveKind::Asymptotic, 2.0, fit.rate_spectral, n)
            .with_note("rate only"),
    ];
    Ok(PerturbationBounds {
        curves,
        sense1: fit.sense1,
        sense2: fit.sense2,
        domination_max_ratio: max_ratio,
        domination_holds: max_ratio <= bound + 1e-12,
    })
}

fn diag_law(p: &StochasticMatrix, x: usize) -> Vec<f64> {
    let n = p.n();
    let mut law = vec![0.0; n * n];
    for u in 0..n {
        law[u * n + u] = p.get(x, u);
    }
    law
}

/// `max_{x≠x'} tv(δ_x Π_{s<k} P_s, δ_{x'} Π_{s<k} P_s)` for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub values: Vec<f64>,
    /// Argmax at `k = 1`.
    pub worst_pair: (usize, usize),
    /// Per-pair distances, indexed `[pair][k]` in [`PairIndex`] order.
    #[serde(skip)]
    pub per_pair: Vec<Vec<f64>>,
}

pub fn oracle_envelope<K: Kernel>(kernel: &K, n: usize) -> Result<Envelope, BoundsError> {
    let s = kernel.states();
    let index = PairIndex::new(s);
    let mut per_pair = vec![Vec::with_capacity(n + 1); index.len()];
    let mut m = DMatrix::<f64>::identity(s, s);
    for step in 0..=n {
        if step > 0 {
            m = &m * kernel.at(step - 1)?.to_dmatrix();
        }
        for (x, (a, b)) in index.pairs().enumerate() {
            let ra: Vec<f64> = m.row(a).iter().copied().collect();
            let rb: Vec<f64> = m.row(b).iter().copied().collect();
            per_pair[x].push(tv_weights(&ra, &rb)?);
        }
    }
    let values = (0..=n)
        .map(|k| per_pair.iter().map(|c| c[k]).fold(0.0, f64::max))
        .collect();
    let worst = if n >= 1 && !per_pair.is_empty() {
        let mut best = 0;
        for x in 1..per_pair.len() {
            if per_pair[x][1] > per_pair[best][1] {
                best = x;
            }
        }
        index.decode(best)
    } else {
        (0, 1)
    };
    Ok(Envelope { values, worst_pair: worst, per_pair })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub m_max: usize,
    pub n_max: usize,
    pub max_states: usize,
    pub spectral: SpectralOptions,
    /// Largest state count for the `V̂^(m)` versus `V̂^m` comparison.
    pub discrepancy_max_states: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            m_max: 3,
            n_max: 50,
            max_states: coupling::DEFAULT_MAX_STATES,
            spectral: SpectralOptions::default(),
            discrepancy_max_states: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reversibility {
    pub reversible: bool,
    pub stationary: Option<Vec<f64>>,
    /// `((1 − π_i)/(2π_i))^{1/2}` per state, when reversible.
    pub ds_constants: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingFlags {
    /// `|λ₂| ≤ r(V̂) + 1e−6`.
    pub second_modulus_le_radius: bool,
    /// `r(V̂) ≤ 1 − κ + 1e−12`.
    pub radius_le_md_rate: bool,
    /// Label and domination status of each finite-step curve.
    pub oracle_dominated: Vec<(String, bool)>,
    /// Reversible chains: DS curve above the half-variation distance.
    pub ds_dominates_half_tv: Option<bool>,
    /// Reversible chains: full variation exceeds the DS curve somewhere.
    pub ds_below_full_tv: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub states: usize,
    pub kappa_profiles: Vec<KappaProfile>,
    pub kappa: f64,
    pub r_vhat: f64,
    pub second_modulus: f64,
    pub chain_spectrum: SpectralSummary,
    pub operator_spectrum: SpectralSummary,
    pub reversibility: Reversibility,
    pub curves: Vec<BoundCurve>,
    pub oracle: Envelope,
    pub ordering: OrderingFlags,
    /// `(m, max |V̂^(m) − V̂^m|)` for small chains.
    pub m_step_discrepancy: Vec<(usize, f64)>,
}

fn check_dominates(curve: &BoundCurve, exact: &[f64]) -> Result<(), BoundsError> {
    match curve.first_violation(exact, DOMINATION_TOL) {
        None => Ok(()),
        Some(k) => Err(BoundsError::DominationViolated {
            label: curve.label.clone(),
            k,
            exact: exact[k],
            bound: curve.values[k],
        }),
    }
}

/// Every applicable bound for a homogeneous chain, checked against the
/// exact worst-pair distance.
pub fn compare_report(p: &StochasticMatrix, opts: &ReportOptions) -> Result<BoundsReport, BoundsError> {
    let n = opts.n_max;
    let kappa_profiles: Vec<KappaProfile> =
        (1..=opts.m_max.max(1)).map(|m| kappa(p, m)).collect::<Result<_, _>>()?;
    let kappa1 = kappa_profiles[0].scalar;
    let chain_spectrum = spectral::spectral_radius_with(&p.to_dmatrix(), &opts.spectral)?;
    let second = chain_spectrum.second_modulus;

    let mut curves = vec![md_curve(&kappa_profiles[0], n)];
    for m in 2..=opts.m_max {
        curves.push(md_m_curve(p, m, n)?);
    }
    let sb = spectral_bound_with(p, n, opts.max_states, &opts.spectral)?;
    let r = sb.summary.radius;
    curves.push(sb.curve.clone());

    let oracle = oracle_envelope(p, n)?;
    let mut dominated = Vec::new();
    for c in curves.iter().filter(|c| c.kind == CurveKind::Bound) {
        check_dominates(c, &oracle.values)?;
        dominated.push((c.label.clone(), true));
    }

    let (reversibility, ds_flags) = reversible_part(p, second, n, &mut curves)?;
    let m_step_discrepancy = if p.n() <= opts.discrepancy_max_states {
        (2..=opts.m_max)
            .map(|m| Ok((m, coupling::power_discrepancy(p, m)?)))
            .collect::<Result<_, BoundsError>>()?
    } else {
        Vec::new()
    };

    Ok(BoundsReport {
        states: p.n(),
        kappa: kappa1,
        kappa_profiles,
        r_vhat: r,
        second_modulus: second,
        chain_spectrum,
        operator_spectrum: sb.summary,
        reversibility,
        curves,
        ordering: OrderingFlags {
            second_modulus_le_radius: second <= r + 1e-6,
            radius_le_md_rate: r <= 1.0 - kappa1 + 1e-12,
            oracle_dominated: dominated,
            ds_dominates_half_tv: ds_flags.map(|f| f.0),
            ds_below_full_tv: ds_flags.map(|f| f.1),
        },
        oracle,
        m_step_discrepancy,
    })
}

fn reversible_part(
    p: &StochasticMatrix,
    gamma: f64,
    n: usize,
    curves: &mut Vec<BoundCurve>,
) -> Result<(Reversibility, Option<(bool, bool)>), BoundsError> {
    let pi = match stationary_distribution(p, 1e-12) {
        Ok(pi) => pi,
        Err(ChainError::Reducible | ChainError::Periodic(_) | ChainError::NoConvergence(_)) => {
            return Ok((Reversibility { reversible: false, stationary: None, ds_constants: None }, None));
        }
        Err(e) => return Err(e.into()),
    };
    if !is_reversible(p, &pi, 1e-10) {
        let rev = Reversibility { reversible: false, stationary: Some(pi.weights().to_vec()), ds_constants: None };
        return Ok((rev, None));
    }
    let constants: Vec<f64> = pi.weights().iter().map(|&w| ds_constant(w)).collect();
    let mut half_ok = true;
    let mut full_exceeds = false;
    for i in 0..p.n() {
        let start = Distribution::point(p.n(), i)?;
        let laws = chain::marginal_curve(p, &start, n)?;
        for (k, law) in laws.iter().enumerate() {
            let bound = constants[i] * gamma.powi(k as i32);
            let d = 0.5 * tv_weights(law, pi.weights())?;
            half_ok &= d <= bound + DOMINATION_TOL;
            full_exceeds |= 2.0 * d > bound + DOMINATION_TOL;
        }
    }
    let worst = constants.iter().copied().fold(0.0, f64::max);
    curves.push(
        BoundCurve::geometric("ds", CurveKind::Bound, worst, gamma, n)
            .with_note("dominates the half-variation distance to the stationary law"),
    );
    let rev = Reversibility { reversible: true, stationary: Some(pi.weights().to_vec()), ds_constants: Some(constants) };
    Ok((rev, Some((half_ok, full_exceeds))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonhomReport {
    pub states: usize,
    pub steps: usize,
    pub slice_kappas: Vec<f64>,
    pub curves: Vec<BoundCurve>,
    pub periodic_rate: Option<f64>,
    /// `|λ₂(P₀ ⋯ P_{T−1})|^{1/T}` for periodic kernels.
    pub period_chain_rate: Option<f64>,
    pub oracle: Envelope,
    pub oracle_dominated: Vec<(String, bool)>,
    pub perturbation: Option<PerturbationFit>,
    pub perturbation_bounds: Option<PerturbationBounds>,
}

/// Product and coupling bounds for a time-varying kernel, plus the
/// perturbation fit when a base chain is supplied.
pub fn nonhom_report(
    k: &TimeVaryingKernel,
    base: Option<&StochasticMatrix>,
    opts: &ReportOptions,
) -> Result<NonhomReport, BoundsError> {
    let n = match k.horizon() {
        Some(h) => opts.n_max.min(h),
        None => opts.n_max,
    };
    let mut curves = vec![nonhom_product_curve(k, n, 1)?];
    for m in 2..=opts.m_max.min(n.max(1)) {
        curves.push(nonhom_product_curve(k, n, m)?);
    }
    let h = product_bound_vector(k, n)?;
    curves.push(BoundCurve {
        label: "coupling-product".into(),
        kind: CurveKind::Bound,
        values: h.iter().map(|v| 2.0 * v.iter().copied().fold(0.0, f64::max)).collect(),
        rate: None,
        constant: None,
        variants: Vec::new(),
        note: None,
    });
    let (periodic_rate, period_chain_rate) = match k.period() {
        Some(t) => {
            let (rate, _) = periodic_rate(k, n)?;
            let mut prod = k.slice(0)?.clone();
            for s in 1..t {
                prod = prod.compose(k.slice(s)?)?;
            }
            let lam = spectral::second_modulus(&prod)?;
            if let Some(c) = curves.last_mut() {
                c.rate = Some(rate);
            }
            (Some(rate), Some(lam.powf(1.0 / t as f64)))
        }
        None => (None, None),
    };
    let oracle = oracle_envelope(k, n)?;
    let mut dominated = Vec::new();
    for c in &curves {
        check_dominates(c, &oracle.values)?;
        dominated.push((c.label.clone(), true));
    }
    let (perturbation, pb) = match base {
        Some(b) => {
            let fit = fit_perturbation(b, k)?;
            let pb = perturbation_bounds(&fit, b, k, n)?;
            (Some(fit), Some(pb))
        }
        None => (None, None),
    };
    Ok(NonhomReport {
        states: k.n(),
        steps: n,
        slice_kappas: slice_kappas(k, k.period().unwrap_or(n).max(1).min(k.len()))?,
        curves,
        periodic_rate,
        period_chain_rate,
        oracle,
        oracle_dominated: dominated,
        perturbation,
        perturbation_bounds: pb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> StochasticMatrix {
        StochasticMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn p_a() -> StochasticMatrix {
        m(&[&[0.65, 0.35], &[0.35, 0.65]])
    }

    fn p_d() -> StochasticMatrix {
        m(&[&[0.0, 0.3, 0.7], &[0.7, 0.0, 0.3], &[0.3, 0.7, 0.0]])
    }

    fn p_e() -> StochasticMatrix {
        m(&[&[0.0, 0.3, 0.7], &[1.0, 0.0, 0.0], &[0.8, 0.1, 0.1]])
    }

    fn p_h() -> StochasticMatrix {
        m(&[
            &[0.0, 0.0, 0.0, 0.8, 0.2],
            &[0.0, 0.6, 0.3, 0.1, 0.0],
            &[0.0, 0.3, 0.7, 0.0, 0.0],
            &[0.8, 0.1, 0.0, 0.1, 0.0],
            &[0.2, 0.0, 0.0, 0.0, 0.8],
        ])
    }

    fn q_pair() -> TimeVaryingKernel {
        let q1 = m(&[&[1.0 / 8.0, 7.0 / 8.0], &[1.0 / 3.0, 2.0 / 3.0]]);
        let q2 = m(&[&[3.0 / 4.0, 1.0 / 4.0], &[2.0 / 3.0, 1.0 / 3.0]]);
        TimeVaryingKernel::periodic(vec![q1, q2]).unwrap()
    }

    #[test]
    fn md_examples() {
        let c = md_curve(&kappa(&p_a(), 1).unwrap(), 5);
        assert_abs_diff_eq!(c.rate.unwrap(), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(c.values[3], 2.0 * 0.027, epsilon = 1e-15);
        assert_abs_diff_eq!(c.variants[0].values[3], 0.027, epsilon = 1e-15);
        let c = md_curve(&kappa(&p_e(), 1).unwrap(), 4);
        assert!(c.values.iter().all(|&v| v == 2.0));
        let flat = m(&[&[0.4, 0.6], &[0.4, 0.6]]);
        let c = md_curve(&kappa(&flat, 1).unwrap(), 3);
        assert_eq!(c.values, vec![2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn md_m_examples() {
        assert_eq!(md_m_curve(&p_a(), 1, 6).unwrap().values, md_curve(&kappa(&p_a(), 1).unwrap(), 6).values);
        let c = md_m_curve(&p_e(), 2, 10).unwrap();
        assert!(c.values[10] < 2.0 * 0.9f64.powi(5));
        assert!(c.rate.unwrap() < 1.0);
        assert_eq!(md_m_curve(&p_e(), 0, 3), Err(BoundsError::ZeroStep));
    }

    #[test]
    fn spectral_bound_examples() {
        let b = spectral_bound(&p_a(), 8).unwrap();
        assert_abs_diff_eq!(b.curve.rate.unwrap(), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(b.curve.values[4], 2.0 * 0.3f64.powi(4), epsilon = 1e-15);
        let b = spectral_bound(&p_h(), 5).unwrap();
        assert_abs_diff_eq!(b.curve.rate.unwrap(), 0.9354656555509322, epsilon = 1e-9);
        let b = spectral_bound(&p_d(), 5).unwrap();
        assert_abs_diff_eq!(b.curve.rate.unwrap(), 0.7, epsilon = 1e-10);
    }

    #[test]
    fn exact_curve_decay_of_p_e() {
        let b = spectral_bound(&p_e(), 42).unwrap();
        let r = (9.0 + 65f64.sqrt()) / 20.0;
        let ratio = b.curve.values[40] / b.curve.values[38];
        assert_abs_diff_eq!(ratio, r * r, epsilon = 1e-6);
    }

    #[test]
    fn ds_examples() {
        let c = ds_bound(&p_a(), 0, 4).unwrap();
        assert_abs_diff_eq!(c.constant.unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.rate.unwrap(), 0.3, epsilon = 1e-12);
        let half = m(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert_abs_diff_eq!(ds_bound(&half, 1, 2).unwrap().constant.unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        assert_eq!(ds_bound(&p_e(), 0, 3), Err(BoundsError::NotReversible));
    }

    #[test]
    fn product_curves_of_periodic_pair() {
        let c = nonhom_product_curve(&q_pair(), 6, 1).unwrap();
        assert_abs_diff_eq!(c.values[1], 2.0 * 5.0 / 24.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.values[2], 2.0 * 5.0 / 288.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.rate.unwrap(), (5.0f64 / 288.0).sqrt(), epsilon = 1e-15);
        let weak = &c.variants[0];
        assert_abs_diff_eq!(weak.rate.unwrap(), 5.0 / 24.0, epsilon = 1e-15);

        let hom = TimeVaryingKernel::homogeneous(p_a());
        let c = nonhom_product_curve(&hom, 5, 1).unwrap();
        let md = md_curve(&kappa(&p_a(), 1).unwrap(), 5);
        for (a, b) in c.values.iter().zip(&md.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let c2 = nonhom_product_curve(&TimeVaryingKernel::homogeneous(p_e()), 7, 2).unwrap();
        let md2 = md_m_curve(&p_e(), 2, 7).unwrap();
        for (a, b) in c2.values.iter().zip(&md2.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let fin = TimeVaryingKernel::finite(vec![p_a(); 3]).unwrap();
        assert!(nonhom_product_curve(&fin, 4, 1).is_err());
    }

    #[test]
    fn coupling_curve_examples() {
        let k = q_pair();
        let d0 = Distribution::point(2, 0).unwrap();
        let d1 = Distribution::point(2, 1).unwrap();
        let c = nonhom_coupling_curve(&k, &d0, &d0, 4).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
        let c = nonhom_coupling_curve(&k, &d0, &d1, 4).unwrap();
        assert_abs_diff_eq!(c.values[2], 2.0 * 5.0 / 288.0, epsilon = 1e-15);

        let hom = TimeVaryingKernel::homogeneous(p_e());
        let sb = spectral_bound(&p_e(), 6).unwrap();
        let d2 = Distribution::point(3, 2).unwrap();
        let d0 = Distribution::point(3, 0).unwrap();
        let c = nonhom_coupling_curve(&hom, &d2, &d0, 6).unwrap();
        let x = sb.pair_index.encode(2, 0).unwrap();
        for (a, b) in c.values.iter().zip(&sb.pair_curves[x]) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert!(matches!(
            nonhom_coupling_curve(&hom, &Distribution::uniform(2), &d0, 2),
            Err(BoundsError::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn periodic_rate_examples() {
        let (rate, curve) = periodic_rate(&q_pair(), 6).unwrap();
        assert_abs_diff_eq!(rate, (5.0f64 / 288.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(curve.values[4], 2.0 * (5.0f64 / 288.0).powi(2), epsilon = 1e-15);
        let (rate, _) = periodic_rate(&TimeVaryingKernel::homogeneous(p_e()), 2).unwrap();
        assert_abs_diff_eq!(rate, (9.0 + 65f64.sqrt()) / 20.0, epsilon = 1e-10);
        let flat = m(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let k = TimeVaryingKernel::periodic(vec![p_a(), flat]).unwrap();
        assert_eq!(periodic_rate(&k, 2).unwrap().0, 0.0);
        let fin = TimeVaryingKernel::finite(vec![p_a()]).unwrap();
        assert_eq!(periodic_rate(&fin, 1), Err(BoundsError::Coupling(CouplingError::NotPeriodic)));
    }

    #[test]
    fn fit_of_constant_kernel_is_zero() {
        for p in [p_a(), p_e(), p_h()] {
            let k = TimeVaryingKernel::homogeneous(p.clone());
            let fit = fit_perturbation(&p, &k).unwrap();
            assert_eq!(fit.epsilon, 0.0);
            assert_eq!(fit.delta, 0.0);
            let pb = perturbation_bounds(&fit, &p, &k, 3).unwrap();
            assert!(pb.domination_holds);
        }
        let fit = fit_perturbation(&p_h(), &TimeVaryingKernel::homogeneous(p_h())).unwrap();
        assert_eq!(fit.rate_md, 1.0);
        assert!(fit.sense2);
        assert_abs_diff_eq!(fit.rate_spectral, 0.9354656555509322, epsilon = 1e-9);
    }

    #[test]
    fn fit_flags_unsupported_entries() {
        let base = m(&[&[1.0, 0.0], &[0.3, 0.7]]);
        let slice = m(&[&[0.9, 0.1], &[0.3, 0.7]]);
        let k = TimeVaryingKernel::finite(vec![base.clone(), slice]).unwrap();
        match fit_perturbation(&base, &k) {
            Err(BoundsError::Infeasible(w)) => {
                assert_eq!(w.slice, 1);
                assert!(w.ratio.is_infinite());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn small_perturbation_of_p_a() {
        let s1 = m(&[&[0.66, 0.34], &[0.35, 0.65]]);
        let s2 = m(&[&[0.64, 0.36], &[0.36, 0.64]]);
        let k = TimeVaryingKernel::periodic(vec![s1, s2]).unwrap();
        let fit = fit_perturbation(&p_a(), &k).unwrap();
        assert!(fit.epsilon > 0.0 && fit.epsilon < 0.1);
        assert_eq!(fit.delta, (1.0 + fit.epsilon).powi(2) - 1.0);
        assert!(fit.sense1);
        let pb = perturbation_bounds(&fit, &p_a(), &k, 10).unwrap();
        assert!(pb.domination_holds);
        assert_eq!(pb.curves.len(), 3);
    }

    #[test]
    fn sense_flags() {
        let fit = PerturbationFit::with_epsilon(0.5, 0.7, 0.5);
        assert!(!fit.sense1);
        let pb = perturbation_bounds(&fit, &p_a(), &TimeVaryingKernel::homogeneous(p_a()), 3).unwrap();
        assert_eq!(pb.curves.len(), 3);
        let bad = PerturbationFit { feasible: false, ..fit };
        assert_eq!(
            perturbation_bounds(&bad, &p_a(), &TimeVaryingKernel::homogeneous(p_a()), 3),
            Err(BoundsError::InfeasibleFit)
        );
    }

    #[test]
    fn reports() {
        let g = m(&[
            &[0.0, 0.2, 0.3, 0.5],
            &[0.4, 0.3, 0.3, 0.0],
            &[0.8, 0.1, 0.1, 0.0],
            &[0.5, 0.3, 0.2, 0.0],
        ]);
        let r = compare_report(&g, &ReportOptions::default()).unwrap();
        assert_abs_diff_eq!(r.kappa, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(r.r_vhat, 0.5780290771682994, epsilon = 1e-9);
        assert_abs_diff_eq!(r.second_modulus, r.r_vhat, epsilon = 1e-9);
        assert!(r.ordering.second_modulus_le_radius && r.ordering.radius_le_md_rate);
        assert!(!r.reversibility.reversible);

        let r = compare_report(&p_a(), &ReportOptions::default()).unwrap();
        assert!(r.reversibility.reversible);
        assert_eq!(r.ordering.ds_dominates_half_tv, Some(true));
        assert!(r.curves.iter().any(|c| c.label == "ds"));
        assert_eq!(r.m_step_discrepancy.len(), 2);

        // The two slices put their residuals on opposite states.
        let nr = nonhom_report(&q_pair(), Some(&q_pair().slices()[0].clone()), &ReportOptions::default());
        match nr {
            Err(BoundsError::Infeasible(w)) => assert_eq!(w.slice, 1),
            other => panic!("expected infeasible, got {other:?}"),
        }
        let nr = nonhom_report(&q_pair(), None, &ReportOptions::default()).unwrap();
        assert_abs_diff_eq!(nr.periodic_rate.unwrap(), (5.0f64 / 288.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(nr.period_chain_rate.unwrap(), (5.0f64 / 288.0).sqrt(), epsilon = 1e-12);
        assert_eq!(nr.slice_kappas.len(), 2);
    }

    #[test]
    fn envelope_worst_pair() {
        let e = oracle_envelope(&p_e(), 3).unwrap();
        assert_eq!(e.values[0], 2.0);
        assert_eq!(e.worst_pair, (0, 1));
        assert_abs_diff_eq!(e.values[1], 2.0, epsilon = 1e-15);
    }
}
