//! Monte Carlo simulation of the coupled pair `(η¹, η², ξ, ζ)`.
//!
//! While uncoupled (`ζ = 1`) the pair moves jointly: with probability
//! `κ(η¹, η²)` both jump to one draw from the normalized common part and
//! coupling happens (`ζ = 0`), otherwise `η¹` and `η²` move independently
//! to the residual laws. Once coupled only `ξ` moves; the `η` components
//! are frozen since nothing downstream reads them.
//!
//! Trial `i` uses its own `ChaCha8Rng` seeded with `seed ^ i`, so results
//! depend only on the seed and the configuration.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::chain::{marginal_curve, ChainError, Distribution, Kernel, StochasticMatrix, TimeVaryingKernel};
use crate::coupling::ResidualPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingState {
    pub eta1: usize,
    pub eta2: usize,
    pub xi: usize,
    pub coupled: bool,
}

impl CouplingState {
    pub fn uncoupled(eta1: usize, eta2: usize) -> Self {
        CouplingState { eta1, eta2, xi: eta1, coupled: false }
    }

    pub fn coupled_at(xi: usize) -> Self {
        CouplingState { eta1: xi, eta2: xi, xi, coupled: true }
    }

    /// `1` while apart, `0` once coupled.
    pub fn zeta(&self) -> u8 {
        u8::from(!self.coupled)
    }

    pub fn first(&self) -> usize {
        if self.coupled {
            self.xi
        } else {
            self.eta1
        }
    }

    pub fn second(&self) -> usize {
        if self.coupled {
            self.xi
        } else {
            self.eta2
        }
    }
}

fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Maximal coupling of two laws: equal draws with probability
/// `Σ p₁ ∧ p₂`, otherwise independent draws from the residuals.
pub fn sample_coupled_pair<R: Rng + ?Sized>(
    p1: &Distribution,
    p2: &Distribution,
    rng: &mut R,
) -> Result<(usize, usize, bool), ChainError> {
    if p1.len() != p2.len() {
        return Err(ChainError::LengthMismatch(p1.len(), p2.len()));
    }
    Ok(coupled_draw(p1.weights(), p2.weights(), rng))
}

fn coupled_draw<R: Rng + ?Sized>(a: &[f64], b: &[f64], rng: &mut R) -> (usize, usize, bool) {
    let rp = ResidualPair::of_rows(a, b);
    if rng.random::<f64>() >= rp.damping() {
        let common: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.min(*y)).collect();
        let c = draw(&common, rng);
        (c, c, true)
    } else {
        (draw(&rp.phi1, rng), draw(&rp.phi2, rng), false)
    }
}

/// Per-pair residual data of one transition matrix.
struct StepTable {
    n: usize,
    pairs: Vec<PairStep>,
}

struct PairStep {
    damping: f64,
    common: Vec<f64>,
    phi1: Vec<f64>,
    phi2: Vec<f64>,
}

impl StepTable {
    fn new(p: &StochasticMatrix) -> Self {
        let n = p.n();
        let mut pairs = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let rp = ResidualPair::of_rows(p.row(a), p.row(b));
                let common = p.row(a).iter().zip(p.row(b)).map(|(x, y)| x.min(*y)).collect();
                pairs.push(PairStep { damping: rp.damping(), common, phi1: rp.phi1, phi2: rp.phi2 });
            }
        }
        StepTable { n, pairs }
    }
}

fn advance<R: Rng + ?Sized>(s: CouplingState, p: &StochasticMatrix, table: &StepTable, rng: &mut R) -> CouplingState {
    if s.coupled {
        return CouplingState { xi: draw(p.row(s.xi), rng), ..s };
    }
    let ps = &table.pairs[s.eta1 * table.n + s.eta2];
    if rng.random::<f64>() >= ps.damping {
        let c = draw(&ps.common, rng);
        CouplingState { eta1: s.eta1, eta2: s.eta2, xi: c, coupled: true }
    } else {
        let e1 = draw(&ps.phi1, rng);
        let e2 = draw(&ps.phi2, rng);
        CouplingState { eta1: e1, eta2: e2, xi: e1, coupled: false }
    }
}

/// One transition with kernel `p`.
pub fn step<R: Rng + ?Sized>(state: CouplingState, p: &StochasticMatrix, rng: &mut R) -> CouplingState {
    advance(state, p, &StepTable::new(p), rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKernel {
    Homogeneous(StochasticMatrix),
    TimeVarying(TimeVaryingKernel),
}

impl Kernel for SimKernel {
    fn states(&self) -> usize {
        match self {
            SimKernel::Homogeneous(p) => p.n(),
            SimKernel::TimeVarying(k) => k.n(),
        }
    }

    fn at(&self, t: usize) -> Result<&StochasticMatrix, ChainError> {
        match self {
            SimKernel::Homogeneous(p) => Ok(p),
            SimKernel::TimeVarying(k) => k.slice(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    States(usize, usize),
    Laws(Distribution, Distribution),
}

impl InitSpec {
    pub fn laws(&self, n: usize) -> Result<(Distribution, Distribution), ChainError> {
        match self {
            InitSpec::States(a, b) => Ok((Distribution::point(n, *a)?, Distribution::point(n, *b)?)),
            InitSpec::Laws(a, b) => {
                for d in [a, b] {
                    if d.len() != n {
                        return Err(ChainError::LengthMismatch(d.len(), n));
                    }
                }
                Ok((a.clone(), b.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub kernel: SimKernel,
    pub init: InitSpec,
    pub horizon: usize,
    pub trials: u64,
    pub seed: u64,
    pub track_marginals: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCounts {
    /// `[t][state]` occupancy counts of the first copy.
    pub first: Vec<Vec<u64>>,
    pub second: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub trials: u64,
    /// Empirical `P(ζ_t = 1)` for `t = 0..=horizon`.
    pub p_not_coupled: Vec<f64>,
    /// 95% Wilson half-widths.
    pub ci_half: Vec<f64>,
    /// Trials first coupled at each time `t = 0..=horizon`.
    pub coupling_time_histogram: Vec<u64>,
    pub never_coupled: u64,
    pub marginal_counts: Option<MarginalCounts>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("horizon must be at least 1")]
    NoHorizon,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

fn tables(kernel: &SimKernel, horizon: usize) -> Result<Vec<StepTable>, ChainError> {
    let distinct = match kernel {
        SimKernel::Homogeneous(_) => 1,
        SimKernel::TimeVarying(k) => {
            k.check_horizon(horizon)?;
            k.period().unwrap_or(horizon).max(1)
        }
    };
    (0..distinct).map(|t| Ok(StepTable::new(kernel.at(t)?))).collect()
}

fn validate(config: &SimConfig) -> Result<(Distribution, Distribution, Vec<StepTable>), SimError> {
    if config.trials == 0 {
        return Err(SimError::NoTrials);
    }
    if config.horizon == 0 {
        return Err(SimError::NoHorizon);
    }
    let (mu1, mu2) = config.init.laws(config.kernel.states())?;
    let t = tables(&config.kernel, config.horizon)?;
    Ok((mu1, mu2, t))
}

fn run_trial(
    config: &SimConfig,
    mu: &(Distribution, Distribution),
    tables: &[StepTable],
    trial: u64,
    mut visit: impl FnMut(usize, &CouplingState),
) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ trial);
    let (a, b, c) = coupled_draw(mu.0.weights(), mu.1.weights(), &mut rng);
    let mut s = if c { CouplingState::coupled_at(a) } else { CouplingState::uncoupled(a, b) };
    visit(0, &s);
    for t in 0..config.horizon {
        let p = config.kernel.at(t).expect("horizon checked");
        s = advance(s, p, &tables[t % tables.len()], &mut rng);
        visit(t + 1, &s);
    }
}

/// States `0..=horizon` of one trial, as generated inside [`simulate`].
pub fn trajectory(config: &SimConfig, trial: u64) -> Result<Vec<CouplingState>, SimError> {
    let (mu1, mu2, tables) = validate(config)?;
    let mut out = Vec::with_capacity(config.horizon + 1);
    run_trial(config, &(mu1, mu2), &tables, trial, |_, s| out.push(*s));
    Ok(out)
}

pub fn simulate(config: &SimConfig) -> Result<SimResult, SimError> {
    let (mu1, mu2, tables) = validate(config)?;
    let h = config.horizon;
    let n = config.kernel.states();
    let mut apart = vec![0u64; h + 1];
    let mut hist = vec![0u64; h + 1];
    let mut never = 0u64;
    let mut counts = config
        .track_marginals
        .then(|| MarginalCounts { first: vec![vec![0; n]; h + 1], second: vec![vec![0; n]; h + 1] });
    let mu = (mu1, mu2);
    for trial in 0..config.trials {
        let mut coupled_at = None;
        run_trial(config, &mu, &tables, trial, |t, s| {
            if s.coupled {
                coupled_at.get_or_insert(t);
            } else {
                apart[t] += 1;
            }
            if let Some(c) = counts.as_mut() {
                c.first[t][s.first()] += 1;
                c.second[t][s.second()] += 1;
            }
        });
        match coupled_at {
            Some(t) => hist[t] += 1,
            None => never += 1,
        }
    }
    let trials = config.trials;
    let p_not_coupled = apart.iter().map(|&k| k as f64 / trials as f64).collect();
    let ci_half = apart
        .iter()
        .map(|&k| {
            let (lo, hi) = wilson_interval(k, trials, 0.95);
            0.5 * (hi - lo)
        })
        .collect();
    Ok(SimResult {
        trials,
        p_not_coupled,
        ci_half,
        coupling_time_histogram: hist,
        never_coupled: never,
        marginal_counts: counts,
    })
}

/// Wilson score interval for `successes` out of `trials` at `confidence`.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * confidence);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalStat {
    pub t: usize,
    pub max_abs_error_first: f64,
    pub max_abs_error_second: f64,
    pub p_value_first: f64,
    pub p_value_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub per_time: Vec<MarginalStat>,
    pub max_abs_error: f64,
    pub min_p_value: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarginalError {
    #[error("simulation ran without marginal tracking")]
    NotTracked,
    #[error("requested {0} steps but the simulation covered {1}")]
    BeyondHorizon(usize, usize),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Empirical occupancy of each copy against exact propagation, with a
/// chi-square goodness-of-fit p-value per time.
pub fn empirical_marginals_check<K: Kernel>(
    result: &SimResult,
    kernel: &K,
    init: &InitSpec,
    n: usize,
) -> Result<MarginalReport, MarginalError> {
    let counts = result.marginal_counts.as_ref().ok_or(MarginalError::NotTracked)?;
    if n + 1 > counts.first.len() {
        return Err(MarginalError::BeyondHorizon(n, counts.first.len() - 1));
    }
    let (mu1, mu2) = init.laws(kernel.states())?;
    let exact1 = marginal_curve(kernel, &mu1, n)?;
    let exact2 = marginal_curve(kernel, &mu2, n)?;
    let trials = result.trials as f64;
    let mut per_time = Vec::with_capacity(n + 1);
    for t in 0..=n {
        let (e1, p1) = fit_stats(&counts.first[t], &exact1[t], trials);
        let (e2, p2) = fit_stats(&counts.second[t], &exact2[t], trials);
        per_time.push(MarginalStat {
            t,
            max_abs_error_first: e1,
            max_abs_error_second: e2,
            p_value_first: p1,
            p_value_second: p2,
        });
    }
    let max_abs_error = per_time
        .iter()
        .map(|s| s.max_abs_error_first.max(s.max_abs_error_second))
        .fold(0.0, f64::max);
    let min_p_value = per_time
        .iter()
        .map(|s| s.p_value_first.min(s.p_value_second))
        .fold(1.0, f64::min);
    Ok(MarginalReport { per_time, max_abs_error, min_p_value })
}

fn fit_stats(counts: &[u64], exact: &[f64], trials: f64) -> (f64, f64) {
    let mut err: f64 = 0.0;
    let mut chi2 = 0.0;
    let mut cells = 0usize;
    let mut impossible = false;
    for (&c, &q) in counts.iter().zip(exact) {
        let freq = c as f64 / trials;
        err = err.max((freq - q).abs());
        if q > 1e-15 {
            let expected = q * trials;
            chi2 += (c as f64 - expected).powi(2) / expected;
            cells += 1;
        } else if c > 0 {
            impossible = true;
        }
    }
    let p = if impossible {
        0.0
    } else if cells <= 1 {
        1.0
    } else {
        ChiSquared::new((cells - 1) as f64).map_or(1.0, |d| d.sf(chi2))
    };
    (err, p)
}

/// Exact law of the coupled pair at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLaw {
    /// Mass of uncoupled `(η¹, η²) = (a, b)` at `a·n + b`.
    pub apart: Vec<f64>,
    /// Mass of coupled `ξ = c`.
    pub together: Vec<f64>,
}

impl PairLaw {
    pub fn not_coupled(&self) -> f64 {
        self.apart.iter().sum()
    }

    /// `P(X̃¹ ≠ X̃²)`.
    pub fn differ(&self) -> f64 {
        let n = self.together.len();
        (0..n * n).filter(|x| x / n != x % n).map(|x| self.apart[x]).sum()
    }

    pub fn first_marginal(&self) -> Vec<f64> {
        let n = self.together.len();
        (0..n).map(|a| self.together[a] + (0..n).map(|b| self.apart[a * n + b]).sum::<f64>()).collect()
    }

    pub fn second_marginal(&self) -> Vec<f64> {
        let n = self.together.len();
        (0..n).map(|b| self.together[b] + (0..n).map(|a| self.apart[a * n + b]).sum::<f64>()).collect()
    }
}

/// Propagates the full law of `(η¹, η², ξ, ζ)` for `t = 0..=steps`.
pub fn exact_pair_law<K: Kernel>(
    kernel: &K,
    mu1: &Distribution,
    mu2: &Distribution,
    steps: usize,
) -> Result<Vec<PairLaw>, ChainError> {
    let n = kernel.states();
    if mu1.len() != n || mu2.len() != n {
        return Err(ChainError::LengthMismatch(mu1.len().max(mu2.len()), n));
    }
    let rp = ResidualPair::of_rows(mu1.weights(), mu2.weights());
    let d = rp.damping();
    let mut law = PairLaw {
        apart: (0..n * n).map(|x| d * rp.phi1[x / n] * rp.phi2[x % n]).collect(),
        together: mu1.weights().iter().zip(mu2.weights()).map(|(a, b)| a.min(*b)).collect(),
    };
    let mut out = vec![law.clone()];
    for t in 0..steps {
        let p = kernel.at(t)?;
        let mut next = PairLaw { apart: vec![0.0; n * n], together: vec![0.0; n] };
        for c in 0..n {
            if law.together[c] > 0.0 {
                for u in 0..n {
                    next.together[u] += law.together[c] * p.get(c, u);
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let w = law.apart[a * n + b];
                if w == 0.0 {
                    continue;
                }
                let rp = ResidualPair::of_rows(p.row(a), p.row(b));
                let common: Vec<f64> = p.row(a).iter().zip(p.row(b)).map(|(x, y)| x.min(*y)).collect();
                let mass: f64 = common.iter().sum();
                let couple = 1.0 - rp.damping();
                if mass > 0.0 {
                    for u in 0..n {
                        next.together[u] += w * couple * common[u] / mass;
                    }
                }
                let d = rp.damping();
                for k in 0..n {
                    for l in 0..n {
                        next.apart[k * n + l] += w * d * rp.phi1[k] * rp.phi2[l];
                    }
                }
            }
        }
        law = next;
        out.push(law.clone());
    }
    Ok(out)
}
