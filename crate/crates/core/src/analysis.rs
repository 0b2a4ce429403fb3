//! Variance and efficiency analytics for chain output: within-cloud
//! variance, time-average variance constants, combined estimator variance,
//! the optimal number of backward trajectories and efficiency.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::mcmc::{ChainOutput, ExtractionMode};

/// Unbiased sample variance (divisor `len - 1`). `None` below two values.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Some(ss / (values.len() - 1) as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Average over sweeps of the unbiased sample variance of the `J`
/// trajectories at time `k`. Indexed `[sweep][trajectory][time]`.
pub fn within_cloud_variance(per_sweep_trajectories: &[Vec<Vec<f64>>], k: usize) -> Result<f64> {
    if per_sweep_trajectories.is_empty() {
        return Err(Error::InvalidInput("no sweeps".into()));
    }
    let mut total = 0.0;
    let mut values = Vec::new();
    for sweep in per_sweep_trajectories {
        values.clear();
        values.extend(sweep.iter().map(|traj| traj[k]));
        total += sample_variance(&values)
            .ok_or_else(|| Error::InvalidInput(format!("within-cloud variance needs J >= 2, got {}", values.len())))?;
    }
    Ok(total / per_sweep_trajectories.len() as f64)
}

/// TAVC estimate plus the diagnostics raised while computing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TavcEstimate {
    pub value: f64,
    /// The raw lag sum was negative and was replaced by 0.
    pub floored: bool,
    /// First and last quarter means differ by more than 5 standard errors.
    pub nonstationary: bool,
}

/// Biased (divide-by-`R`) sample autocovariance at `lag`.
fn autocovariance(centered: &[f64], lag: usize) -> f64 {
    let r = centered.len();
    let s: f64 = centered[..r - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
    s / r as f64
}

fn lag_sum(series: &[f64]) -> f64 {
    let r = series.len();
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let max_lag = ((r as f64).sqrt().ceil() as usize).saturating_sub(1).min(r - 1);
    let mut total = autocovariance(&centered, 0);
    for lag in 1..=max_lag {
        total += 2.0 * (1.0 - lag as f64 / r as f64) * autocovariance(&centered, lag);
    }
    total
}

/// Time-average variance constant: lag-truncated (`|l| < ceil(sqrt(R))`)
/// sum of autocovariances weighted by `1 - |l|/R`.
pub fn tavc_with_diagnostics(series: &[f64]) -> Result<TavcEstimate> {
    let r = series.len();
    if r < 4 {
        return Err(Error::InvalidInput(format!("TAVC needs at least 4 values, got {r}")));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("TAVC series contains non-finite values".into()));
    }
    let raw = lag_sum(series);
    let floored = raw < 0.0;
    if floored {
        warn!("negative TAVC estimate {raw:e} floored at 0");
    }
    let value = raw.max(0.0);

    let q = r / 4;
    let first = &series[..q];
    let last = &series[r - q..];
    let quarter_var = |s: &[f64]| if s.len() >= 4 { lag_sum(s).max(0.0) / s.len() as f64 } else { 0.0 };
    let se = (quarter_var(first) + quarter_var(last)).sqrt();
    let diff = (mean(first) - mean(last)).abs();
    let nonstationary = if se > 0.0 { diff > 5.0 * se } else { diff > 1e-12 * (1.0 + mean(series).abs()) };
    if nonstationary {
        warn!("series looks nonstationary: first and last quarter means differ by {diff:.4} (s.e. {se:.4})");
    }
    Ok(TavcEstimate {
        value,
        floored,
        nonstationary,
    })
}

pub fn tavc(series: &[f64]) -> Result<f64> {
    tavc_with_diagnostics(series).map(|t| t.value)
}

/// Variance of an `R`-sweep average of `J`-trajectory means:
/// `(sigma_sq / J + tavc) / R`.
pub fn estimator_variance(sigma_sq: f64, tavc_bsm: f64, j: usize, r: usize) -> Result<f64> {
    if j == 0 || r == 0 {
        return Err(Error::InvalidParameter("J and R must be at least 1".into()));
    }
    Ok((sigma_sq / j as f64 + tavc_bsm) / r as f64)
}

/// `sqrt((sigma_sq / tau_bs) / (tavc / tau_pf))`: trajectories per sweep
/// minimising variance per unit of computation.
pub fn j_opt(sigma_sq: f64, tavc_bsm: f64, tau_bs: f64, tau_pf: f64) -> Result<f64> {
    for (name, v) in [("sigma_sq", sigma_sq), ("tavc", tavc_bsm), ("tau_bs", tau_bs), ("tau_pf", tau_pf)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(((sigma_sq / tau_bs) / (tavc_bsm / tau_pf)).sqrt())
}

pub fn geometric_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// Integer trajectory count from per-time optima: the rounded geometric
/// mean, at least 1.
pub fn recommended_j(per_time: &[f64]) -> Option<usize> {
    geometric_mean(per_time).map(|g| (g.round() as usize).max(1))
}

pub fn efficiency(variance: f64, total_time_s: f64) -> Result<f64> {
    if !(variance > 0.0) || !(total_time_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "efficiency needs positive variance and time, got {variance} and {total_time_s}"
        )));
    }
    Ok(1.0 / (variance * total_time_s))
}

/// One row of a [`VarianceReport`]. Quantities that do not apply to a method
/// are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub k: usize,
    pub method: String,
    pub sigma_sq: f64,
    pub tavc: f64,
    pub std_err: f64,
    pub efficiency: f64,
    pub j_opt: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarianceReport {
    pub rows: Vec<VarianceRow>,
    pub tau_pf: f64,
    pub tau_bs: f64,
    /// Geometric mean of the per-time `j_opt` values, if any were computed.
    pub j_opt_geometric_mean: Option<f64>,
}

pub const VARIANCE_REPORT_HEADER: [&str; 7] = ["k", "method", "sigma_sq", "tavc", "std_err", "efficiency", "j_opt"];

impl VarianceReport {
    pub fn method_rows<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a VarianceRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(VARIANCE_REPORT_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.method.clone(),
                r.sigma_sq.to_string(),
                r.tavc.to_string(),
                r.std_err.to_string(),
                r.efficiency.to_string(),
                r.j_opt.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 7 {
                return Err(Error::Parse(format!("expected 7 columns, got {}", rec.len())));
            }
            let f = |i: usize| -> Result<f64> {
                rec[i].trim().parse().map_err(|_| Error::Parse(format!("bad number '{}'", &rec[i])))
            };
            rows.push(VarianceRow {
                k: rec[0].trim().parse().map_err(|_| Error::Parse(format!("bad time index '{}'", &rec[0])))?,
                method: rec[1].to_string(),
                sigma_sq: f(2)?,
                tavc: f(3)?,
                std_err: f(4)?,
                efficiency: f(5)?,
                j_opt: f(6)?,
            });
        }
        Ok(Self {
            rows,
            ..Self::default()
        })
    }
}

/// Summary of per-time efficiency ratios between two methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSummary {
    pub min: f64,
    pub max: f64,
    pub geometric_mean: f64,
    pub count_above_one: usize,
    pub count: usize,
}

/// Summarises `ratios`, ignoring non-finite or non-positive entries.
pub fn ratio_summary(ratios: &[f64]) -> Option<RatioSummary> {
    let valid: Vec<f64> = ratios.iter().copied().filter(|r| r.is_finite() && *r > 0.0).collect();
    let geometric_mean = geometric_mean(&valid)?;
    Some(RatioSummary {
        min: valid.iter().copied().fold(f64::INFINITY, f64::min),
        max: valid.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        geometric_mean,
        count_above_one: valid.iter().filter(|r| **r > 1.0).count(),
        count: valid.len(),
    })
}

/// Per-time efficiency ratios `numerator / denominator` from a report.
pub fn efficiency_ratios(report: &VarianceReport, numerator: &str, denominator: &str) -> Vec<f64> {
    report
        .method_rows(numerator)
        .filter_map(|a| {
            report
                .method_rows(denominator)
                .find(|b| b.k == a.k)
                .map(|b| a.efficiency / b.efficiency)
        })
        .collect()
}

/// Plain-text table of pairwise efficiency ratios for every method pair,
/// each later method against each earlier one.
pub fn comparison_table(report: &VarianceReport) -> String {
    let methods = report.methods();
    let mut out = String::new();
    for (b_idx, b) in methods.iter().enumerate() {
        for a in &methods[b_idx + 1..] {
            if let Some(s) = ratio_summary(&efficiency_ratios(report, a, b)) {
                let _ = writeln!(
                    out,
                    "{a} vs {b}: min {:.3} max {:.3} geomean {:.3} above one {}/{}",
                    s.min, s.max, s.geometric_mean, s.count_above_one, s.count
                );
            }
        }
    }
    out
}

/// Per-sweep output of one extraction mode, as needed for variance analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSeries {
    pub mode: ExtractionMode,
    /// `[sweep][k]` per-sweep estimates.
    pub estimates: Vec<Vec<f64>>,
    /// `[sweep][k]` sample variance across the trajectories of a sweep.
    pub within_variance: Option<Vec<Vec<f64>>>,
    /// Extraction seconds summed over the run.
    pub seconds: f64,
}

/// Everything [`variance_report`] needs from a chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub methods: Vec<MethodSeries>,
    /// Filter seconds summed over the run.
    pub filter_seconds: f64,
    /// Mean seconds per filter run.
    pub tau_pf: f64,
    /// Mean seconds per backward-sampled trajectory (0 without BS).
    pub tau_bs: f64,
}

impl RunData {
    pub fn from_chain(out: &ChainOutput) -> Self {
        let records = &out.records;
        let r = records.len().max(1) as f64;
        let modes: Vec<ExtractionMode> = out.summary.mode_means.iter().map(|(m, _)| *m).collect();
        let methods = modes
            .iter()
            .map(|&mode| {
                let outputs: Vec<_> = records.iter().filter_map(|rec| rec.output(mode)).collect();
                let within_variance = outputs
                    .iter()
                    .map(|o| o.within_variance.clone())
                    .collect::<Option<Vec<_>>>()
                    .filter(|w| !w.is_empty());
                MethodSeries {
                    mode,
                    estimates: outputs.iter().map(|o| o.estimates.clone()).collect(),
                    within_variance,
                    seconds: outputs.iter().map(|o| o.seconds).sum(),
                }
            })
            .collect();
        let filter_seconds: f64 = records.iter().map(|rec| rec.tau_pf).sum();
        Self {
            methods,
            filter_seconds,
            tau_pf: filter_seconds / r,
            tau_bs: records.iter().map(|rec| rec.tau_bs).sum::<f64>() / r,
        }
    }

    pub fn sweeps(&self) -> usize {
        self.methods.first().map_or(0, |m| m.estimates.len())
    }

    pub fn method(&self, mode: ExtractionMode) -> Option<&MethodSeries> {
        self.methods.iter().find(|m| m.mode == mode)
    }
}

/// Column `k` of a `[sweep][k]` table.
pub fn series_at(per_sweep: &[Vec<f64>], k: usize) -> Vec<f64> {
    per_sweep.iter().map(|row| row[k]).collect()
}

fn tavc_or_nan(series: &[f64]) -> f64 {
    match tavc(series) {
        Ok(v) => v,
        Err(e) => {
            warn!("TAVC unavailable: {e}");
            f64::NAN
        }
    }
}

/// Per-time standard errors, efficiencies and trajectory-count optima for
/// every method of a run.
///
/// Single-path methods use `sqrt(tavc / R)`. Backward sampling combines its
/// within-sweep variance with the TAVC of the backward-smoothing series when
/// that mode was run, and otherwise uses the TAVC of its own `J`-averaged
/// series. Quantities that cannot be formed are NaN.
pub fn variance_report(data: &RunData) -> Result<VarianceReport> {
    let r = data.sweeps();
    if r == 0 {
        return Err(Error::InvalidInput("run has no recorded sweeps".into()));
    }
    let len = data.methods[0].estimates[0].len();
    let bsm_tavc: Option<Vec<f64>> = data
        .method(ExtractionMode::BackwardSmoothing)
        .map(|m| (0..len).map(|k| tavc_or_nan(&series_at(&m.estimates, k))).collect());
    let mut rows = Vec::new();
    let mut j_opts = Vec::new();
    for (idx, method) in data.methods.iter().enumerate() {
        let time = data.filter_seconds + method.seconds;
        for k in 0..len {
            let own_tavc = match (&bsm_tavc, method.mode) {
                (Some(t), ExtractionMode::BackwardSmoothing) => t[k],
                _ => tavc_or_nan(&series_at(&method.estimates, k)),
            };
            let mut sigma_sq = f64::NAN;
            let mut j = f64::NAN;
            let variance = match method.mode {
                ExtractionMode::Backward { trajectories } => {
                    if let Some(w) = &method.within_variance {
                        sigma_sq = mean(&series_at(w, k));
                    }
                    match &bsm_tavc {
                        Some(t) if sigma_sq.is_finite() && t[k].is_finite() => {
                            if let Ok(v) = j_opt(sigma_sq, t[k], data.tau_bs, data.tau_pf) {
                                j = v;
                                if data.methods[..idx].iter().all(|m| !matches!(m.mode, ExtractionMode::Backward { .. })) {
                                    j_opts.push(v);
                                }
                            }
                            estimator_variance(sigma_sq, t[k], trajectories, r)?
                        }
                        _ => own_tavc / r as f64,
                    }
                }
                _ => own_tavc / r as f64,
            };
            rows.push(VarianceRow {
                k,
                method: method.mode.to_string(),
                sigma_sq,
                tavc: own_tavc,
                std_err: variance.sqrt(),
                efficiency: efficiency(variance, time).unwrap_or(f64::NAN),
                j_opt: j,
            });
        }
    }
    Ok(VarianceReport {
        rows,
        tau_pf: data.tau_pf,
        tau_bs: data.tau_bs,
        j_opt_geometric_mean: geometric_mean(&j_opts),
    })
}
