use std::path::Path;

use coupling_rate::bounds::{
    compare_report, nonhom_product_curve, nonhom_report, BoundCurve, BoundsError, BoundsReport, NonhomReport,
    ReportOptions, Witness,
};
use coupling_rate::coupling::{bound_vector, build_vhat_with_limit, product_bound_vector};
use coupling_rate::ensemble::random_ergodic;
use coupling_rate::sim::{simulate, wilson_interval, InitSpec, SimConfig, SimKernel, SimResult};
use coupling_rate::{Kernel, PairIndex, StochasticMatrix, TimeVaryingKernel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::input::{build_kernel, read_file, MatrixJson};
use crate::render::{exact, flag, opt, sig, Table};
use crate::{CliError, Format};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOutput {
    pub matrix: MatrixJson,
    pub seed: Option<u64>,
    pub report: BoundsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub k: usize,
    pub ci99: (f64, f64),
    /// Exact probability that the coupled pair has not met.
    pub exact: f64,
    /// Same quantity bounded through the overlap alone.
    pub overlap_bound: f64,
    pub dominated: bool,
    pub exact_in_ci: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub init: (usize, usize),
    pub horizon: usize,
    pub seed: u64,
    pub result: SimResult,
    pub steps: Vec<StepCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonhomOutput {
    pub periodic: bool,
    /// Number of slices in one cycle of the input sequence.
    pub cycle: usize,
    pub report: NonhomReport,
    /// `(label, tail rate)` read off each curve over whole cycles.
    pub tail_rates: Vec<(String, Option<f64>)>,
    pub infeasible: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomRow {
    pub index: usize,
    pub kappa: f64,
    pub md_rate: f64,
    pub radius: f64,
    pub second_modulus: f64,
    pub ordered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomOutput {
    pub states: usize,
    pub count: usize,
    pub seed: u64,
    pub sparsity: f64,
    pub rows: Vec<RandomRow>,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Output {
    Analyze(AnalyzeOutput),
    Simulate(SimulateOutput),
    Nonhom(NonhomOutput),
    Random(RandomOutput),
}

fn load_matrix(path: &Path) -> Result<StochasticMatrix, CliError> {
    read_file(path)?
        .into_matrix()
        .ok_or_else(|| CliError::Usage(format!("{}: expected a single matrix, found a sequence", path.display())))
}

pub struct AnalyzeParams {
    pub options: ReportOptions,
    pub seed: Option<u64>,
}

pub fn analyze(path: &Path, params: &AnalyzeParams) -> Result<Output, CliError> {
    let p = load_matrix(path)?;
    let report = compare_report(&p, &params.options)?;
    Ok(Output::Analyze(AnalyzeOutput { matrix: MatrixJson::from(&p), seed: params.seed, report }))
}

pub struct SimulateParams {
    pub init: (usize, usize),
    pub trials: u64,
    pub horizon: usize,
    pub seed: u64,
    pub max_states: usize,
}

pub fn simulate_cmd(path: &Path, params: &SimulateParams) -> Result<Output, CliError> {
    let (slices, periodic) = read_file(path)?.into_slices();
    let (a, b) = params.init;
    let h = params.horizon;
    let (kernel, tvk) = if slices.len() == 1 && periodic {
        let p = slices.into_iter().next().unwrap();
        (SimKernel::Homogeneous(p.clone()), TimeVaryingKernel::homogeneous(p))
    } else {
        let k = build_kernel(slices, periodic, None)?;
        (SimKernel::TimeVarying(k.clone()), k)
    };
    let config = SimConfig {
        kernel: kernel.clone(),
        init: InitSpec::States(a, b),
        horizon: h,
        trials: params.trials,
        seed: params.seed,
        track_marginals: false,
    };
    let result = simulate(&config)?;

    let n = kernel.states();
    let exact_curve: Vec<f64> = if a == b {
        vec![0.0; h + 1]
    } else {
        let x = PairIndex::new(n).encode(a, b).expect("off-diagonal pair");
        let vecs = match &kernel {
            SimKernel::Homogeneous(p) => bound_vector(&build_vhat_with_limit(p, params.max_states)?, h),
            SimKernel::TimeVarying(k) => product_bound_vector(k, h)?,
        };
        vecs.iter().map(|v| v[x]).collect()
    };
    let overlap = nonhom_product_curve(&tvk, h, 1)?;
    let steps: Vec<StepCheck> = (0..=h)
        .map(|k| {
            let apart = (result.p_not_coupled[k] * result.trials as f64).round() as u64;
            let ci99 = wilson_interval(apart, result.trials, 0.99);
            let e = exact_curve[k];
            StepCheck {
                k,
                ci99,
                exact: e,
                overlap_bound: if a == b { 0.0 } else { 0.5 * overlap.values[k] },
                dominated: ci99.0 <= e + 1e-12,
                exact_in_ci: ci99.0 <= e + 1e-12 && e <= ci99.1 + 1e-12,
            }
        })
        .collect();
    let pass = steps.iter().all(|s| s.dominated);
    Ok(Output::Simulate(SimulateOutput { init: params.init, horizon: h, seed: params.seed, result, steps, pass }))
}

pub struct NonhomParams {
    pub periodic: Option<bool>,
    pub base: Option<std::path::PathBuf>,
    pub options: ReportOptions,
}

pub fn nonhom(path: &Path, params: &NonhomParams) -> Result<Output, CliError> {
    let (slices, file_periodic) = read_file(path)?.into_slices();
    let periodic = params.periodic.unwrap_or(file_periodic);
    let cycle = slices.len();
    let unroll = (file_periodic && !periodic).then_some(params.options.n_max);
    let k = build_kernel(slices, periodic, unroll)?;
    let base = params.base.as_deref().map(load_matrix).transpose()?;
    let (report, infeasible) = match nonhom_report(&k, base.as_ref(), &params.options) {
        Ok(r) => (r, None),
        Err(BoundsError::Infeasible(w)) => (nonhom_report(&k, None, &params.options)?, Some(w)),
        Err(e) => return Err(e.into()),
    };
    let mut tail_rates: Vec<(String, Option<f64>)> =
        report.curves.iter().map(|c| (c.label.clone(), tail_rate(&c.values, cycle))).collect();
    tail_rates.push(("exact-tv".into(), tail_rate(&report.oracle.values, cycle)));
    Ok(Output::Nonhom(NonhomOutput { periodic, cycle, report, tail_rates, infeasible }))
}

/// Geometric decay per step over the second half of the curve, measured
/// across a whole number of cycles.
pub fn tail_rate(values: &[f64], cycle: usize) -> Option<f64> {
    let end = values.len().checked_sub(1)?;
    let cycle = cycle.max(1);
    let span = (end / 2) / cycle * cycle;
    let (a, b) = (values[end - span], values[end]);
    (span > 0 && a > 0.0 && b > 0.0).then(|| (b / a).powf(1.0 / span as f64))
}

pub struct RandomParams {
    pub states: usize,
    pub count: usize,
    pub seed: u64,
    pub sparsity: f64,
    pub options: ReportOptions,
}

pub fn random(params: &RandomParams) -> Result<Output, CliError> {
    if params.states < 2 {
        return Err(CliError::Usage("random chains need at least 2 states".into()));
    }
    if !(0.0..1.0).contains(&params.sparsity) {
        return Err(CliError::Usage("sparsity must lie in [0, 1)".into()));
    }
    let mut rows = Vec::with_capacity(params.count);
    for index in 0..params.count {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(index as u64));
        let p = random_ergodic(params.states, params.sparsity, &mut rng, 10_000)
            .map_err(|_| CliError::Usage(format!("no ergodic chain found for draw {index}; lower the sparsity")))?;
        let r = compare_report(&p, &params.options)?;
        rows.push(RandomRow {
            index,
            kappa: r.kappa,
            md_rate: 1.0 - r.kappa,
            radius: r.r_vhat,
            second_modulus: r.second_modulus,
            ordered: r.ordering.second_modulus_le_radius && r.ordering.radius_le_md_rate,
        });
    }
    let violations = rows.iter().filter(|r| !r.ordered).count();
    Ok(Output::Random(RandomOutput {
        states: params.states,
        count: params.count,
        seed: params.seed,
        sparsity: params.sparsity,
        rows,
        violations,
    }))
}

impl Output {
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        if format == Format::Json {
            let mut s = serde_json::to_string_pretty(self)?;
            s.push('\n');
            return Ok(s);
        }
        let csv = format == Format::Csv;
        Ok(match self {
            Output::Analyze(a) => analyze_text(a, csv),
            Output::Simulate(s) => simulate_text(s, csv),
            Output::Nonhom(n) => nonhom_text(n, csv),
            Output::Random(r) => random_text(r, csv),
        })
    }
}

/// Key/value block: aligned text, or `# key,value` lines ahead of CSV data.
fn summary(pairs: &[(String, String)], csv: bool) -> String {
    if csv {
        return pairs.iter().map(|(k, v)| format!("# {k},{v}\n")).collect();
    }
    let w = pairs.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    pairs.iter().map(|(k, v)| format!("{k:<w$}  {v}\n")).collect()
}

fn kv(k: impl Into<String>, v: impl Into<String>) -> (String, String) {
    (k.into(), v.into())
}

fn curve_columns<'a>(curves: &[&'a BoundCurve]) -> Vec<(String, &'a [f64])> {
    let mut cols = Vec::new();
    for c in curves {
        cols.push((c.label.clone(), c.values.as_slice()));
        for v in &c.variants {
            cols.push((v.label.clone(), v.values.as_slice()));
        }
    }
    cols
}

fn curve_table(oracle: &[f64], cols: &[(String, &[f64])], csv: bool) -> Table {
    let mut header = vec!["k".to_string(), "exact-tv".to_string()];
    header.extend(cols.iter().map(|c| c.0.clone()));
    let mut t = Table::new(header);
    let fmt = |x: f64| if csv { exact(x) } else { sig(x) };
    for (k, &o) in oracle.iter().enumerate() {
        let mut row = vec![k.to_string(), fmt(o)];
        row.extend(cols.iter().map(|c| c.1.get(k).map(|&x| fmt(x)).unwrap_or_default()));
        t.row(row);
    }
    t
}

fn rate_table(curves: &[&BoundCurve]) -> Table {
    let mut t = Table::new(["curve", "rate", "constant", "note"]);
    for c in curves {
        t.row([c.label.clone(), opt(c.rate), opt(c.constant), c.note.clone().unwrap_or_default()]);
        for v in &c.variants {
            t.row([v.label.clone(), opt(v.rate), String::new(), String::new()]);
        }
    }
    t
}

fn fmt_pair(p: (usize, usize)) -> String {
    format!("({}, {})", p.0, p.1)
}

fn analyze_text(a: &AnalyzeOutput, csv: bool) -> String {
    let r = &a.report;
    let mut s = vec![
        kv("states", r.states.to_string()),
        kv("kappa", sig(r.kappa)),
        kv("1-kappa", sig(1.0 - r.kappa)),
    ];
    for kp in r.kappa_profiles.iter().skip(1) {
        let m = kp.step_count;
        s.push(kv(format!("kappa({m})"), sig(kp.scalar)));
        s.push(kv(format!("(1-kappa({m}))^(1/{m})"), sig((1.0 - kp.scalar).powf(1.0 / m as f64))));
    }
    s.push(kv("r(V)", sig(r.r_vhat)));
    s.push(kv("|lambda2|", sig(r.second_modulus)));
    s.push(kv("spectral method", r.operator_spectrum.diagnostics.method.clone()));
    s.push(kv("reversible", flag(r.reversibility.reversible)));
    if let Some(c) = &r.reversibility.ds_constants {
        s.push(kv("ds constants", c.iter().map(|&x| sig(x)).collect::<Vec<_>>().join(" ")));
    }
    for (m, d) in &r.m_step_discrepancy {
        s.push(kv(format!("m-step operator gap m={m}"), sig(*d)));
    }
    s.push(kv("|lambda2| <= r(V)", flag(r.ordering.second_modulus_le_radius)));
    s.push(kv("r(V) <= 1-kappa", flag(r.ordering.radius_le_md_rate)));
    for (label, ok) in &r.ordering.oracle_dominated {
        s.push(kv(format!("{label} dominates exact tv"), flag(*ok)));
    }
    if let Some(b) = r.ordering.ds_dominates_half_tv {
        s.push(kv("ds dominates half tv", flag(b)));
    }
    if let Some(b) = r.ordering.ds_below_full_tv {
        s.push(kv("ds exceeded by full tv", flag(b)));
    }
    s.push(kv("worst pair", fmt_pair(r.oracle.worst_pair)));
    if let Some(seed) = a.seed {
        s.push(kv("seed", seed.to_string()));
    }
    let curves: Vec<&BoundCurve> = r.curves.iter().collect();
    let table = curve_table(&r.oracle.values, &curve_columns(&curves), csv);
    if csv {
        summary(&s, true) + &table.csv()
    } else {
        format!("{}\n{}\n{}", summary(&s, false), rate_table(&curves).text(), table.text())
    }
}

fn simulate_text(o: &SimulateOutput, csv: bool) -> String {
    let s = vec![
        kv("init", fmt_pair(o.init)),
        kv("trials", o.result.trials.to_string()),
        kv("horizon", o.horizon.to_string()),
        kv("seed", o.seed.to_string()),
        kv("never coupled", o.result.never_coupled.to_string()),
        kv("verdict", if o.pass { "PASS" } else { "FAIL" }),
    ];
    let mut t = Table::new(["k", "p_hat", "ci95", "ci99_lo", "ci99_hi", "exact", "overlap_bound", "dominated"]);
    let fmt = |x: f64| if csv { exact(x) } else { sig(x) };
    for st in &o.steps {
        t.row([
            st.k.to_string(),
            fmt(o.result.p_not_coupled[st.k]),
            fmt(o.result.ci_half[st.k]),
            fmt(st.ci99.0),
            fmt(st.ci99.1),
            fmt(st.exact),
            fmt(st.overlap_bound),
            flag(st.dominated).to_string(),
        ]);
    }
    if csv {
        summary(&s, true) + &t.csv()
    } else {
        format!("{}\n{}", summary(&s, false), t.text())
    }
}

fn nonhom_text(o: &NonhomOutput, csv: bool) -> String {
    let r = &o.report;
    let mut s = vec![
        kv("states", r.states.to_string()),
        kv("steps", r.steps.to_string()),
        kv("periodic", flag(o.periodic)),
        kv("slice kappas", r.slice_kappas.iter().take(o.cycle).map(|&x| sig(x)).collect::<Vec<_>>().join(" ")),
        kv("periodic operator rate", opt(r.periodic_rate)),
        kv("period chain |lambda2|^(1/T)", opt(r.period_chain_rate)),
    ];
    for (label, rate) in &o.tail_rates {
        s.push(kv(format!("tail rate {label}"), opt(*rate)));
    }
    for (label, ok) in &r.oracle_dominated {
        s.push(kv(format!("{label} dominates exact tv"), flag(*ok)));
    }
    if let Some(w) = &o.infeasible {
        s.push(kv("perturbation", format!("infeasible: {w}")));
    }
    if let Some(f) = &r.perturbation {
        s.push(kv("epsilon", sig(f.epsilon)));
        s.push(kv("delta", sig(f.delta)));
        s.push(kv("perturbed md rate", sig(f.rate_md)));
        s.push(kv("perturbed md rate (alt)", sig(f.rate_md_alt)));
        s.push(kv("perturbed spectral rate", sig(f.rate_spectral)));
        s.push(kv("spectral rate below md rate", flag(f.sense2)));
        s.push(kv("spectral rate below 1", flag(f.sense1)));
        if let Some(w) = &f.binding {
            s.push(kv("binding constraint", w.to_string()));
        }
    }
    if let Some(pb) = &r.perturbation_bounds {
        s.push(kv("domination max ratio", sig(pb.domination_max_ratio)));
        s.push(kv("domination holds", flag(pb.domination_holds)));
    }
    let mut curves: Vec<&BoundCurve> = r.curves.iter().collect();
    if let Some(pb) = &r.perturbation_bounds {
        curves.extend(pb.curves.iter());
    }
    let table = curve_table(&r.oracle.values, &curve_columns(&curves), csv);
    if csv {
        summary(&s, true) + &table.csv()
    } else {
        format!("{}\n{}\n{}", summary(&s, false), rate_table(&curves).text(), table.text())
    }
}

fn random_text(o: &RandomOutput, csv: bool) -> String {
    let s = vec![
        kv("states", o.states.to_string()),
        kv("count", o.count.to_string()),
        kv("seed", o.seed.to_string()),
        kv("sparsity", sig(o.sparsity)),
        kv("ordering violations", o.violations.to_string()),
    ];
    let mut t = Table::new(["index", "kappa", "1-kappa", "r(V)", "|lambda2|", "ordered"]);
    let fmt = |x: f64| if csv { exact(x) } else { sig(x) };
    for r in &o.rows {
        t.row([
            r.index.to_string(),
            fmt(r.kappa),
            fmt(r.md_rate),
            fmt(r.radius),
            fmt(r.second_modulus),
            flag(r.ordered).to_string(),
        ]);
    }
    if csv {
        summary(&s, true) + &t.csv()
    } else if t.is_empty() {
        summary(&s, false)
    } else {
        format!("{}\n{}", summary(&s, false), t.text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_rate_spans_whole_cycles() {
        let v: Vec<f64> = (0..=10).map(|k| if k % 2 == 0 { 0.25f64.powi(k / 2) } else { 0.0 }).collect();
        assert!((tail_rate(&v, 2).unwrap() - 0.5).abs() < 1e-15);
        let w: Vec<f64> = (0..=8).map(|k| 0.3f64.powi(k)).collect();
        assert!((tail_rate(&w, 1).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(tail_rate(&[1.0], 1), None);
    }
}
