//! Spectra and spectral radii.
//!
//! The dense QR eigensolver is authoritative. Every radius is also
//! checked against the repeated-squaring sequence `‖A^{2^k}‖^{1/2^k}` and,
//! for nonnegative input, against Collatz–Wielandt brackets from power
//! iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::StochasticMatrix;
use crate::coupling::CouplingOperator;
use crate::eigen;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("matrix is empty")]
    Empty,
    #[error("matrix is {0}×{1}, not square")]
    NotSquare(usize, usize),
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("negative entry at ({0}, {1})")]
    NegativeEntry(usize, usize),
    #[error("QR iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("eigenvalue trace residual {residual:e} exceeds {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("squaring count must be at least 1")]
    NoSquarings,
    #[error("spectral radius cross-check failed: {0}")]
    CrossCheckMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// Bound on the relative trace residual of the eigenvalues.
    pub residual_tol: f64,
    /// Allowed gap between independent radius estimates.
    pub cross_check_tol: f64,
    /// QR sweeps allowed per matrix dimension.
    pub sweeps_per_dim: usize,
    pub gelfand_squarings: usize,
    /// Early stop once successive Gelfand terms differ by less than this
    /// relative amount.
    pub gelfand_stop: f64,
    pub power_tol: f64,
    pub power_max_iter: usize,
    /// Use the swap-symmetric block of coupling operators above this many
    /// pairs.
    pub reduce_above: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            residual_tol: 1e-10,
            cross_check_tol: 1e-6,
            sweeps_per_dim: 100,
            gelfand_squarings: 40,
            gelfand_stop: 1e-12,
            power_tol: 1e-10,
            power_max_iter: 20_000,
            reduce_above: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub radius: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    /// Width of `[lower, upper]`, the intersection of all brackets seen.
    pub residual: f64,
    pub converged: bool,
    /// The two-step bracket converged while the one-step one did not.
    pub oscillating: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("power iteration did not converge after {} iterations (best estimate {})", .0.iterations, .0.radius)]
    NoConvergence(PowerResult),
    #[error(transparent)]
    Input(#[from] SpectralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: String,
    pub qr_sweeps: usize,
    /// `|Σλ − tr A| / max(1, Σ|a_ii|, ‖A‖∞)`.
    pub trace_residual: f64,
    pub gelfand: Vec<f64>,
    pub power: Option<PowerResult>,
    /// Distance of the eigenvalue removed for `second_modulus` from 1.
    pub unit_eigenvalue_distance: Option<f64>,
    pub non_stochastic_like: bool,
    /// `A^{2^k}` vanished exactly, which proves the radius is zero.
    pub exactly_nilpotent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Sorted by descending modulus, ties by real then imaginary part.
    pub eigenvalues: Vec<Complex64>,
    pub radius: f64,
    /// Largest modulus after removing the eigenvalue nearest 1 for
    /// stochastic input, or the leading eigenvalue otherwise.
    pub second_modulus: f64,
    pub gap: f64,
    pub diagnostics: Diagnostics,
}

fn check_square(a: &DMatrix<f64>) -> Result<(), SpectralError> {
    if a.nrows() == 0 {
        return Err(SpectralError::Empty);
    }
    if a.nrows() != a.ncols() {
        return Err(SpectralError::NotSquare(a.nrows(), a.ncols()));
    }
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if !a[(i, j)].is_finite() {
                return Err(SpectralError::NonFinite(i, j));
            }
        }
    }
    Ok(())
}

fn sort_spectrum(v: &mut [Complex64]) {
    v.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
}

fn eigen_core(a: &DMatrix<f64>, opts: &SpectralOptions) -> Result<(Vec<Complex64>, usize, f64), SpectralError> {
    check_square(a)?;
    let n = a.nrows();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            rows.push(a[(i, j)]);
        }
    }
    let out = eigen::real_eigenvalues(&rows, n, opts.sweeps_per_dim * n.max(1))
        .map_err(SpectralError::NoConvergence)?;
    let mut values = out.values;
    sort_spectrum(&mut values);
    let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
    let abs_diag: f64 = (0..n).map(|i| a[(i, i)].abs()).sum();
    let inf_norm = inf_norm(a);
    let sum_re: f64 = values.iter().map(|z| z.re).sum();
    let residual = (sum_re - trace).abs() / 1f64.max(abs_diag).max(inf_norm);
    if residual > opts.residual_tol {
        return Err(SpectralError::ResidualTooLarge { residual, tol: opts.residual_tol });
    }
    Ok((values, out.sweeps, residual))
}

/// All eigenvalues with multiplicity, sorted by descending modulus.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>, SpectralError> {
    eigen_core(a, &SpectralOptions::default()).map(|(v, _, _)| v)
}

fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Removes the eigenvalue nearest 1; returns the largest remaining modulus
/// and the distance of the removed one.
fn remove_unit(values: &[Complex64]) -> (f64, f64) {
    let one = Complex64::new(1.0, 0.0);
    let (idx, dist) = values
        .iter()
        .enumerate()
        .map(|(i, z)| (i, (z - one).norm()))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let second = values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != idx)
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max);
    (second, dist)
}

/// `|λ₂|`: largest modulus once one eigenvalue nearest 1 is removed.
pub fn second_modulus(p: &StochasticMatrix) -> Result<f64, SpectralError> {
    let values = eigenvalues(&p.to_dmatrix())?;
    Ok(remove_unit(&values).0)
}

/// Power iteration from the all-ones vector.
///
/// Each step yields the bracket `min ≤ r ≤ max` of `(Av)_i / v_i` over the
/// support of `v`; convergence means the bracket width is at most
/// `tol · max`. Dominant `±λ` pairs stall the one-step bracket while the
/// two-step one closes, which is reported as `oscillating`.
pub fn spectral_radius_power(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<PowerResult, PowerError> {
    check_square(a)?;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if a[(i, j)] < 0.0 {
                return Err(SpectralError::NegativeEntry(i, j).into());
            }
        }
    }
    let n = a.nrows();
    let mut prev: Option<(DVector<f64>, f64)> = None;
    let mut v = DVector::from_element(n, 1.0);
    let mut best = PowerResult {
        radius: f64::NAN,
        lower: 0.0,
        upper: f64::INFINITY,
        iterations: 0,
        residual: f64::INFINITY,
        converged: false,
        oscillating: false,
    };
    for it in 1..=max_iter {
        let w = a * &v;
        let scale = w.max();
        if scale == 0.0 {
            return Ok(PowerResult {
                radius: 0.0,
                lower: 0.0,
                upper: 0.0,
                iterations: it,
                residual: 0.0,
                converged: true,
                oscillating: false,
            });
        }
        let (lo, hi) = bracket(&w, &v, 1.0);
        best.lower = best.lower.max(lo);
        best.upper = best.upper.min(hi);
        best.iterations = it;
        best.residual = best.upper - best.lower;
        best.radius = 0.5 * (lo + hi).clamp(2.0 * best.lower, 2.0 * best.upper);
        if hi - lo <= tol * hi {
            best.converged = true;
            return Ok(best);
        }
        let next = w / scale;
        if let Some((older, s_prev)) = &prev {
            // A² v_{k−1} = s_k s_{k+1} v_{k+1}.
            let (lo2, hi2) = bracket(&next, older, s_prev * scale);
            if lo2 > 0.0 && hi2 - lo2 <= tol * hi2 {
                best.oscillating = true;
                best.radius = (0.5 * (lo2 + hi2)).sqrt();
                return Err(PowerError::NoConvergence(best));
            }
        }
        prev = Some((v, scale));
        v = next;
    }
    Err(PowerError::NoConvergence(best))
}

fn bracket(w: &DVector<f64>, v: &DVector<f64>, factor: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (wi, vi) in w.iter().zip(v.iter()) {
        if *vi > 0.0 {
            let q = factor * wi / vi;
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    (lo, hi)
}

/// `g(k) = ‖A^{2^k}‖∞^{1/2^k}` for `k = 0..=k_max`.
///
/// Each square is rescaled to unit norm with the scale kept in log form.
pub fn gelfand_sequence(a: &DMatrix<f64>, k_max: usize) -> Result<Vec<f64>, SpectralError> {
    gelfand(a, k_max, 0.0).map(|(g, _)| g)
}

/// Returns the sequence and whether some power vanished exactly.
/// Stops early once the relative decrement falls below `stop`.
fn gelfand(a: &DMatrix<f64>, k_max: usize, stop: f64) -> Result<(Vec<f64>, bool), SpectralError> {
    check_square(a)?;
    if k_max == 0 {
        return Err(SpectralError::NoSquarings);
    }
    let mut b = a.clone();
    let mut log_scale = 0.0f64;
    let mut out = Vec::with_capacity(k_max + 1);
    let mut exps = 1.0f64;
    let mut flat_steps = 0;
    let norm0 = inf_norm(&b);
    out.push(norm0);
    if norm0 == 0.0 {
        return Ok((out, true));
    }
    b /= norm0;
    log_scale += norm0.ln();
    for _ in 1..=k_max {
        b = &b * &b;
        log_scale *= 2.0;
        exps *= 2.0;
        let s = inf_norm(&b);
        if s == 0.0 {
            out.push(0.0);
            return Ok((out, true));
        }
        b /= s;
        log_scale += s.ln();
        let g = (log_scale / exps).exp();
        let last = *out.last().unwrap_or(&g);
        out.push(g);
        if stop > 0.0 && (last - g).abs() <= stop * g {
            flat_steps += 1;
            if flat_steps == 2 {
                break;
            }
        } else {
            flat_steps = 0;
        }
    }
    Ok((out, false))
}

/// Eigensolver radius, checked against the Gelfand tail and power
/// iteration. Raises `CrossCheckMismatch` when they disagree.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<SpectralSummary, SpectralError> {
    spectral_radius_with(a, &SpectralOptions::default())
}

pub fn spectral_radius_with(a: &DMatrix<f64>, opts: &SpectralOptions) -> Result<SpectralSummary, SpectralError> {
    summarize(a, opts, "francis-qr")
}

fn is_row_stochastic(a: &DMatrix<f64>) -> bool {
    a.row_iter().all(|r| r.iter().all(|&x| x >= 0.0) && (r.sum() - 1.0).abs() <= 1e-9)
}

fn summarize(a: &DMatrix<f64>, opts: &SpectralOptions, method: &str) -> Result<SpectralSummary, SpectralError> {
    let (values, sweeps, trace_residual) = eigen_core(a, opts)?;
    let mut radius = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = opts.cross_check_tol;

    let (gelfand, nilpotent) = gelfand(a, opts.gelfand_squarings, opts.gelfand_stop)?;
    let tail = *gelfand.last().unwrap_or(&0.0);
    if nilpotent {
        radius = 0.0;
    } else if (radius - tail).abs() > tol * radius.max(1.0) {
        return Err(SpectralError::CrossCheckMismatch(format!(
            "eigensolver radius {radius} vs Gelfand tail {tail} after {} squarings",
            gelfand.len() - 1
        )));
    }

    let nonnegative = a.iter().all(|&x| x >= 0.0);
    let power = if nonnegative {
        Some(power_check(a, radius, opts)?)
    } else {
        None
    };

    let stochastic = is_row_stochastic(a);
    let (second, unit_dist) = if stochastic {
        let (s, d) = remove_unit(&values);
        (s, Some(d))
    } else {
        (values.iter().skip(1).map(|z| z.norm()).fold(0.0, f64::max), None)
    };
    Ok(SpectralSummary {
        eigenvalues: values,
        radius,
        second_modulus: second,
        gap: 1.0 - second,
        diagnostics: Diagnostics {
            method: method.to_string(),
            qr_sweeps: sweeps,
            trace_residual,
            gelfand,
            power,
            unit_eigenvalue_distance: unit_dist,
            non_stochastic_like: unit_dist.is_some_and(|d| d > 1e-6),
            exactly_nilpotent: nilpotent,
        },
    })
}

fn power_check(a: &DMatrix<f64>, radius: f64, opts: &SpectralOptions) -> Result<PowerResult, SpectralError> {
    let tol = opts.cross_check_tol;
    let mismatch = |what: &str, p: &PowerResult| {
        SpectralError::CrossCheckMismatch(format!(
            "eigensolver radius {radius} vs power iteration {what} {} [{}, {}]",
            p.radius, p.lower, p.upper
        ))
    };
    let scale = radius.max(1.0);
    match spectral_radius_power(a, opts.power_tol, opts.power_max_iter) {
        Ok(p) => {
            if (p.radius - radius).abs() > tol * scale {
                return Err(mismatch("estimate", &p));
            }
            Ok(p)
        }
        Err(PowerError::NoConvergence(p)) => {
            if p.lower > radius + tol * scale || p.upper < radius - tol * scale {
                return Err(mismatch("bracket", &p));
            }
            if p.oscillating {
                let sq = a * a;
                if let Ok(p2) = spectral_radius_power(&sq, opts.power_tol, opts.power_max_iter) {
                    let resolved = p2.radius.sqrt();
                    if (resolved - radius).abs() > tol * scale {
                        return Err(mismatch("squared estimate", &p2));
                    }
                    return Ok(PowerResult { radius: resolved, ..p });
                }
            }
            Ok(p)
        }
        Err(PowerError::Input(e)) => Err(e),
    }
}

/// Spectral summary of a coupling operator, on its swap-symmetric block
/// when the operator has more than `opts.reduce_above` pairs. The block
/// carries the radius but only part of the spectrum.
pub fn operator_spectrum(op: &CouplingOperator, opts: &SpectralOptions) -> Result<SpectralSummary, SpectralError> {
    if op.dim() > opts.reduce_above {
        summarize(&op.swap_symmetric_block(), opts, "francis-qr/swap-symmetric-block")
    } else {
        summarize(&op.matrix, opts, "francis-qr")
    }
}

/// Radius of a coupling operator from the eigensolver alone.
pub fn operator_radius_fast(op: &CouplingOperator) -> Result<f64, SpectralError> {
    let block = op.swap_symmetric_block();
    let (values, _, _) = eigen_core(&block, &SpectralOptions::default())?;
    Ok(values.first().map_or(0.0, |z| z.norm()))
}
