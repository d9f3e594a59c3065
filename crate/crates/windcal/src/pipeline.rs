//! Rolling fit-and-score over a verification date range: each day's
//! model is fitted on its own preceding window, then that day's cases
//! are scored. Days are independent, so the per-day work runs on a
//! rayon pool when the `parallel` feature is enabled (the default) and
//! sequentially otherwise; results are bit-identical either way because
//! aggregation happens in date order after the fan-out.

use chrono::{Days, NaiveDate};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Archive, DateRange, CENSOR_THRESHOLD};
use crate::error::{Error, Result};
use crate::estimate::{fit, EmConfig};
use crate::mixture::{BmaModel, GroupScheme, PredictiveDist};
use crate::verify::{
    crps_ensemble, crps_mixture, empirical_quantile, ks_uniform_test, mae, pit_histogram,
    pit_values, rank_histogram, rmse, Histogram, RankSummary, ScoreReport,
};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub scheme: GroupScheme,
    pub window_days: u64,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub em: EmConfig,
    pub pit_bins: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scheme: GroupScheme::TwoGroup,
            window_days: 28,
            levels: vec![0.667, 0.90],
            seed: 0,
            em: EmConfig::default(),
            pit_bins: 11,
        }
    }
}

/// Raw-ensemble scores of one complete 11-member case.
#[derive(Debug, Clone)]
pub struct RawScores {
    pub crps: f64,
    pub median: f64,
    pub mean: f64,
    /// (lower, upper) empirical interval per configured level.
    pub intervals: Vec<(f64, f64)>,
    pub members: Vec<f64>,
}

/// BMA scores of one case, plus its predictive distribution (kept for
/// the PIT pass).
#[derive(Debug, Clone)]
pub struct ScoredCase {
    pub station: String,
    pub obs: f64,
    pub dist: PredictiveDist,
    pub crps: f64,
    pub median: f64,
    pub mean: f64,
    /// (lower, upper) central interval per configured level.
    pub intervals: Vec<(f64, f64)>,
    /// Present only for complete cases.
    pub raw: Option<RawScores>,
}

/// One verification day: the model fitted on the preceding window and
/// the scored cases of the day (possibly none, when the archive has no
/// forecasts for that date).
#[derive(Debug, Clone)]
pub struct DayResult {
    pub date: NaiveDate,
    pub model: BmaModel,
    pub cases: Vec<ScoredCase>,
}

#[derive(Debug, Clone)]
pub struct VerifyOutput {
    pub days: Vec<DayResult>,
    /// Days whose window could not be fitted, with the reason.
    pub skipped: Vec<(NaiveDate, String)>,
}

/// Fit and score one verification day.
pub fn predict_day(archive: &Archive, date: NaiveDate, cfg: &PipelineConfig) -> Result<DayResult> {
    let fitted = fit(archive, date, cfg.window_days, cfg.scheme, &cfg.em)?;
    let model = fitted.model;
    let mut cases = Vec::new();
    for case in archive.cases_on(date) {
        if case.n_available() == 0 {
            continue;
        }
        let dist = model.predictive(case)?;
        let mut intervals = Vec::with_capacity(cfg.levels.len());
        for &level in &cfg.levels {
            intervals.push(dist.central_interval(level)?);
        }
        let raw = case.member_values().map(|mut members| {
            let crps = crps_ensemble(&members, case.obs).expect("complete ensemble");
            let mean = members.iter().sum::<f64>() / members.len() as f64;
            let unsorted = members.clone();
            members.sort_by(f64::total_cmp);
            let median = empirical_quantile(&members, 0.5);
            let intervals = cfg
                .levels
                .iter()
                .map(|&level| {
                    let alpha = 1.0 - level;
                    (
                        empirical_quantile(&members, alpha / 2.0),
                        empirical_quantile(&members, 1.0 - alpha / 2.0),
                    )
                })
                .collect();
            RawScores {
                crps,
                median,
                mean,
                intervals,
                members: unsorted,
            }
        });
        cases.push(ScoredCase {
            station: case.station.clone(),
            obs: case.obs,
            crps: crps_mixture(&dist, case.obs),
            median: dist.median(),
            mean: dist.mean(),
            intervals,
            dist,
            raw,
        });
    }
    Ok(DayResult { date, model, cases })
}

fn date_span(from: NaiveDate, to: NaiveDate) -> Result<Vec<NaiveDate>> {
    if to < from {
        return Err(Error::InsufficientData(format!(
            "empty verification range {from} .. {to}"
        )));
    }
    let mut dates = Vec::new();
    let mut d = from;
    while d <= to {
        dates.push(d);
        d = d + Days::new(1);
    }
    Ok(dates)
}

fn assemble(dates: Vec<NaiveDate>, results: Vec<Result<DayResult>>) -> Result<VerifyOutput> {
    let mut days = Vec::new();
    let mut skipped = Vec::new();
    for (date, result) in dates.into_iter().zip(results) {
        match result {
            Ok(day) => days.push(day),
            Err(e) => skipped.push((date, e.to_string())),
        }
    }
    if days.is_empty() {
        let reason = skipped
            .first()
            .map(|(d, r)| format!("{d}: {r}"))
            .unwrap_or_else(|| "empty range".into());
        return Err(Error::InsufficientData(format!(
            "no verification day could be fitted ({reason})"
        )));
    }
    Ok(VerifyOutput { days, skipped })
}

/// Verify every day in `[from, to]`, fanning the per-day work out to the
/// rayon pool when the `parallel` feature is on.
pub fn verify_range(
    archive: &Archive,
    from: NaiveDate,
    to: NaiveDate,
    cfg: &PipelineConfig,
) -> Result<VerifyOutput> {
    let dates = date_span(from, to)?;
    #[cfg(feature = "parallel")]
    let results: Vec<Result<DayResult>> = dates
        .par_iter()
        .map(|&date| predict_day(archive, date, cfg))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<DayResult>> = dates
        .iter()
        .map(|&date| predict_day(archive, date, cfg))
        .collect();
    assemble(dates, results)
}

/// Sequential twin of [`verify_range`]; the benchmark baseline, and a
/// determinism check (its output must equal the parallel one's).
pub fn verify_range_sequential(
    archive: &Archive,
    from: NaiveDate,
    to: NaiveDate,
    cfg: &PipelineConfig,
) -> Result<VerifyOutput> {
    let dates = date_span(from, to)?;
    let results: Vec<Result<DayResult>> = dates
        .iter()
        .map(|&date| predict_day(archive, date, cfg))
        .collect();
    assemble(dates, results)
}

/// Aggregate verification results: score reports for the BMA forecast
/// and the raw ensemble, the PIT diagnostics of the BMA forecast, and
/// the rank histogram of the raw ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifySummary {
    pub bma: ScoreReport,
    /// Raw-ensemble scores over complete cases; absent when no case has
    /// all 11 members.
    pub raw: Option<ScoreReport>,
    pub pit: Vec<f64>,
    pub pit_histogram: Histogram,
    /// (D statistic, asymptotic p-value) of the PIT uniformity test.
    pub pit_ks: (f64, f64),
    pub rank: RankSummary,
    pub n_days: usize,
    pub n_skipped_days: usize,
}

pub fn summarize(output: &VerifyOutput, cfg: &PipelineConfig) -> Result<VerifySummary> {
    let mut dists = Vec::new();
    let mut obs = Vec::new();
    let mut crps = Vec::new();
    let mut medians = Vec::new();
    let mut means = Vec::new();
    let mut covered = vec![0usize; cfg.levels.len()];
    let mut widths = vec![0.0f64; cfg.levels.len()];

    let mut raw_crps = Vec::new();
    let mut raw_medians = Vec::new();
    let mut raw_means = Vec::new();
    let mut raw_obs = Vec::new();
    let mut raw_covered = vec![0usize; cfg.levels.len()];
    let mut raw_widths = vec![0.0f64; cfg.levels.len()];
    let mut raw_cases = Vec::new();

    for day in &output.days {
        for sc in &day.cases {
            dists.push(sc.dist.clone());
            obs.push(sc.obs);
            crps.push(sc.crps);
            medians.push(sc.median);
            means.push(sc.mean);
            for (i, &(lo, hi)) in sc.intervals.iter().enumerate() {
                if sc.obs >= lo && sc.obs <= hi {
                    covered[i] += 1;
                }
                widths[i] += hi - lo;
            }
            if let Some(raw) = &sc.raw {
                raw_crps.push(raw.crps);
                raw_medians.push(raw.median);
                raw_means.push(raw.mean);
                raw_obs.push(sc.obs);
                for (i, &(lo, hi)) in raw.intervals.iter().enumerate() {
                    if sc.obs >= lo && sc.obs <= hi {
                        raw_covered[i] += 1;
                    }
                    raw_widths[i] += hi - lo;
                }
                let mut case = crate::data::ForecastCase {
                    date: day.date,
                    station: sc.station.clone(),
                    obs: sc.obs,
                    control: Some(raw.members[0]),
                    perturbed: [None; 10],
                };
                for (j, slot) in case.perturbed.iter_mut().enumerate() {
                    *slot = Some(raw.members[j + 1]);
                }
                raw_cases.push(case);
            }
        }
    }
    if obs.is_empty() {
        return Err(Error::InsufficientData(
            "no cases to score in the verification range".into(),
        ));
    }

    let n = obs.len();
    let bma = ScoreReport {
        mean_crps: crps.iter().sum::<f64>() / n as f64,
        mae_median: mae(&medians, &obs)?,
        mae_mean: mae(&means, &obs)?,
        rmse_median: rmse(&medians, &obs)?,
        rmse_mean: rmse(&means, &obs)?,
        intervals: cfg
            .levels
            .iter()
            .enumerate()
            .map(|(i, &level)| crate::verify::IntervalStat {
                level,
                coverage: covered[i] as f64 / n as f64,
                avg_width: widths[i] / n as f64,
            })
            .collect(),
        n_cases: n,
    };

    let raw = if raw_obs.is_empty() {
        None
    } else {
        let rn = raw_obs.len();
        Some(ScoreReport {
            mean_crps: raw_crps.iter().sum::<f64>() / rn as f64,
            mae_median: mae(&raw_medians, &raw_obs)?,
            mae_mean: mae(&raw_means, &raw_obs)?,
            rmse_median: rmse(&raw_medians, &raw_obs)?,
            rmse_mean: rmse(&raw_means, &raw_obs)?,
            intervals: cfg
                .levels
                .iter()
                .enumerate()
                .map(|(i, &level)| crate::verify::IntervalStat {
                    level,
                    coverage: raw_covered[i] as f64 / rn as f64,
                    avg_width: raw_widths[i] / rn as f64,
                })
                .collect(),
            n_cases: rn,
        })
    };

    let pit = pit_values(&dists, &obs, CENSOR_THRESHOLD, cfg.seed)?;
    let pit_hist = pit_histogram(&pit, cfg.pit_bins);
    let pit_ks = ks_uniform_test(&pit)?;
    let rank = rank_histogram(&raw_cases, cfg.seed ^ 0x9E37_79B9_7F4A_7C15);

    Ok(VerifySummary {
        bma,
        raw,
        pit,
        pit_histogram: pit_hist,
        pit_ks,
        rank,
        n_days: output.days.len(),
        n_skipped_days: output.skipped.len(),
    })
}

/// One row of the fitted-parameter time series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsRow {
    pub date: NaiveDate,
    pub window: DateRange,
    pub n_train_cases: usize,
    /// Per-member weight of each group, in group order.
    pub weights: Vec<f64>,
    pub b0: f64,
    pub b1: f64,
    pub c0: f64,
    pub c1: f64,
}

pub fn weights_series(output: &VerifyOutput) -> Vec<WeightsRow> {
    output
        .days
        .iter()
        .map(|day| WeightsRow {
            date: day.date,
            window: day.model.fit_window(),
            n_train_cases: day.model.n_train_cases(),
            weights: day.model.group_weights().to_vec(),
            b0: day.model.link().b0,
            b1: day.model.link().b1,
            c0: day.model.link().c0,
            c1: day.model.link().c1,
        })
        .collect()
}

/// Summary statistics over a weight/parameter time series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsSummary {
    /// Fraction of days on which every group weight exceeds 0.001 (a
    /// "real mixture" rather than a collapse onto one group).
    pub real_mixture_fraction: f64,
    pub rel_sd_b0: f64,
    pub rel_sd_b1: f64,
    pub rel_sd_c0: f64,
    pub rel_sd_c1: f64,
    pub n_days: usize,
}

pub fn weights_summary(rows: &[WeightsRow]) -> Result<WeightsSummary> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("weights series"));
    }
    let real = rows
        .iter()
        .filter(|r| r.weights.iter().all(|&w| w > 0.001))
        .count();
    let rel_sd = |values: Vec<f64>| -> f64 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if n < 2.0 || mean.abs() < 1e-300 {
            return f64::NAN;
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var.sqrt() / mean.abs()
    };
    Ok(WeightsSummary {
        real_mixture_fraction: real as f64 / rows.len() as f64,
        rel_sd_b0: rel_sd(rows.iter().map(|r| r.b0).collect()),
        rel_sd_b1: rel_sd(rows.iter().map(|r| r.b1).collect()),
        rel_sd_c0: rel_sd(rows.iter().map(|r| r.c0).collect()),
        rel_sd_c1: rel_sd(rows.iter().map(|r| r.c1).collect()),
        n_days: rows.len(),
    })
}

/// One row of the training-length sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub window_days: u64,
    pub verify_from: NaiveDate,
    pub verify_to: NaiveDate,
    pub scores: ScoreReport,
}

/// Sweep the training window length over `min_days ..= max_days` while
/// holding the verification range fixed, so the rows are comparable.
/// The archive must reach back `max_days` before `from`.
pub fn sweep(
    archive: &Archive,
    from: NaiveDate,
    to: NaiveDate,
    min_days: u64,
    max_days: u64,
    cfg: &PipelineConfig,
) -> Result<Vec<SweepRow>> {
    if min_days == 0 || max_days < min_days {
        return Err(Error::Domain {
            what: "sweep window bounds",
            value: min_days as f64,
        });
    }
    let range = archive.date_range().ok_or(Error::EmptyInput("archive"))?;
    let required = from - Days::new(max_days);
    if range.start > required {
        return Err(Error::InsufficientData(format!(
            "archive starts {}, but sweeping {max_days}-day windows from {from} requires history back to {required}",
            range.start
        )));
    }
    let mut rows = Vec::new();
    for window_days in min_days..=max_days {
        let run_cfg = PipelineConfig {
            window_days,
            ..cfg.clone()
        };
        let output = verify_range(archive, from, to, &run_cfg)?;
        let summary = summarize(&output, &run_cfg)?;
        rows.push(SweepRow {
            window_days,
            verify_from: from,
            verify_to: to,
            scores: summary.bma,
        });
    }
    Ok(rows)
}
