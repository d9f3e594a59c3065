//! Scoring and calibration diagnostics: CRPS for mixtures and raw
//! ensembles, MAE/RMSE, rank and PIT histograms, a KS uniformity test,
//! and prediction-interval coverage and width.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ForecastCase;
use crate::error::{Error, Result};
use crate::mixture::PredictiveDist;

/// CRPS of a predictive mixture against one observation, by adaptive
/// quadrature of (F(y) − 1{y ≥ obs})² split at the observation. The
/// upper integration bound is the largest component 1−1e−9 quantile (or
/// the observation, if larger), so the truncated tail contributes less
/// than the 1e-6 quadrature tolerance.
pub fn crps_mixture(dist: &PredictiveDist, obs: f64) -> f64 {
    let tail = dist
        .components()
        .iter()
        .map(|(_, g)| g.quantile(1.0 - 1e-9).expect("valid probability"))
        .fold(0.0, f64::max);
    let obs = obs.max(0.0);
    let upper = tail.max(obs);
    let split = obs.min(upper);
    let mut total = 0.0;
    if split > 0.0 {
        total += adaptive_simpson(
            &|y| {
                let f = dist.cdf(y);
                f * f
            },
            0.0,
            split,
            5e-7,
        );
    }
    if upper > split {
        total += adaptive_simpson(
            &|y| {
                let f = dist.cdf(y) - 1.0;
                f * f
            },
            split,
            upper,
            5e-7,
        );
    }
    total
}

/// CRPS of a raw ensemble treated as an empirical CDF, in the exact
/// kernel form (1/m)Σ|xᵢ−y| − (1/2m²)ΣΣ|xᵢ−xⱼ|.
pub fn crps_ensemble(members: &[f64], obs: f64) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptyInput("ensemble members"));
    }
    let m = members.len() as f64;
    let dist_to_obs: f64 = members.iter().map(|x| (x - obs).abs()).sum::<f64>() / m;
    let mut pairwise = 0.0;
    for (i, xi) in members.iter().enumerate() {
        for xj in &members[i + 1..] {
            pairwise += (xi - xj).abs();
        }
    }
    Ok(dist_to_obs - pairwise / (m * m))
}

pub fn mae(forecasts: &[f64], observations: &[f64]) -> Result<f64> {
    check_lengths(forecasts, observations)?;
    let n = forecasts.len() as f64;
    Ok(forecasts
        .iter()
        .zip(observations)
        .map(|(f, y)| (f - y).abs())
        .sum::<f64>()
        / n)
}

pub fn rmse(forecasts: &[f64], observations: &[f64]) -> Result<f64> {
    check_lengths(forecasts, observations)?;
    let n = forecasts.len() as f64;
    Ok((forecasts
        .iter()
        .zip(observations)
        .map(|(f, y)| (f - y) * (f - y))
        .sum::<f64>()
        / n)
        .sqrt())
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistogramKind {
    /// Observation rank among the 11 members: 12 bins.
    Rank,
    /// Probability integral transform: `bins` equal cells on [0,1].
    Pit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub kind: HistogramKind,
    pub bin_counts: Vec<usize>,
}

impl Histogram {
    pub fn n_cases(&self) -> usize {
        self.bin_counts.iter().sum()
    }

    /// Plot-ready CSV, one row per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count\n");
        for (i, c) in self.bin_counts.iter().enumerate() {
            out.push_str(&format!("{},{c}\n", i + 1));
        }
        out
    }
}

/// Verification rank histogram of the raw ensemble plus containment
/// bookkeeping. Cases with missing members are skipped and counted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankSummary {
    pub histogram: Histogram,
    pub n_skipped: usize,
    /// Fraction of scored cases whose ensemble range contains the
    /// observation.
    pub range_containment: f64,
}

/// Rank of each observation among its 11 member forecasts
/// (1 = below all, 12 = above all), ties broken by a seeded uniform
/// draw. Only complete cases are ranked.
pub fn rank_histogram(cases: &[ForecastCase], seed: u64) -> RankSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bins = vec![0usize; 12];
    let mut skipped = 0usize;
    let mut contained = 0usize;
    let mut scored = 0usize;
    for case in cases {
        let members = match case.member_values() {
            Some(m) => m,
            None => {
                skipped += 1;
                continue;
            }
        };
        let below = members.iter().filter(|&&f| f < case.obs).count();
        let ties = members.iter().filter(|&&f| f == case.obs).count();
        let jitter = if ties > 0 {
            rng.random_range(0..=ties)
        } else {
            0
        };
        let rank = 1 + below + jitter; // 1..=12
        bins[rank - 1] += 1;
        scored += 1;
        let lo = members.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = members.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if case.obs >= lo && case.obs <= hi {
            contained += 1;
        }
    }
    RankSummary {
        histogram: Histogram {
            kind: HistogramKind::Rank,
            bin_counts: bins,
        },
        n_skipped: skipped,
        range_containment: if scored > 0 {
            contained as f64 / scored as f64
        } else {
            0.0
        },
    }
}

/// PIT values: the predictive CDF evaluated at each observation. An
/// observation under the censoring threshold is randomized uniformly on
/// [0, F(threshold)] with a seeded generator, removing the artificial
/// spike the threshold would otherwise create.
pub fn pit_values(
    dists: &[PredictiveDist],
    observations: &[f64],
    censor_threshold: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if dists.len() != observations.len() {
        return Err(Error::LengthMismatch {
            left: dists.len(),
            right: observations.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(dists
        .iter()
        .zip(observations)
        .map(|(dist, &obs)| {
            if obs < censor_threshold {
                rng.random::<f64>() * dist.cdf(censor_threshold)
            } else {
                dist.cdf(obs)
            }
        })
        .collect())
}

/// PIT histogram with `bins` equal-width cells on [0, 1].
pub fn pit_histogram(pit: &[f64], bins: usize) -> Histogram {
    let mut counts = vec![0usize; bins];
    for &p in pit {
        let cell = ((p * bins as f64) as usize).min(bins - 1);
        counts[cell] += 1;
    }
    Histogram {
        kind: HistogramKind::Pit,
        bin_counts: counts,
    }
}

/// One-sample Kolmogorov-Smirnov test against the uniform distribution
/// on [0,1]. Returns (D, p) where p comes from the asymptotic Kolmogorov
/// series at √n·D.
pub fn ks_uniform_test(pit: &[f64]) -> Result<(f64, f64)> {
    if pit.is_empty() {
        return Err(Error::EmptyInput("PIT values"));
    }
    let mut sorted = pit.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let below = x - i as f64 / n;
        let above = (i + 1) as f64 / n - x;
        d = d.max(below).max(above);
    }
    Ok((d, kolmogorov_survival(n.sqrt() * d)))
}

/// Asymptotic Kolmogorov survival function
/// Q(t) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²t²}, truncated at 100 terms.
fn kolmogorov_survival(t: f64) -> f64 {
    if t < 0.05 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * t * t).exp();
        sum += if (k as usize) % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Coverage and average width of one central prediction interval level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalStat {
    pub level: f64,
    pub coverage: f64,
    pub avg_width: f64,
}

/// Coverage (fraction of observations inside) and average width of the
/// central intervals of predictive mixtures, per requested level.
pub fn interval_stats(
    dists: &[PredictiveDist],
    observations: &[f64],
    levels: &[f64],
) -> Result<Vec<IntervalStat>> {
    if dists.len() != observations.len() {
        return Err(Error::LengthMismatch {
            left: dists.len(),
            right: observations.len(),
        });
    }
    if dists.is_empty() {
        return Err(Error::EmptyInput("predictive distributions"));
    }
    let n = dists.len() as f64;
    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut covered = 0usize;
        let mut width = 0.0;
        for (dist, &obs) in dists.iter().zip(observations) {
            let (lo, hi) = dist.central_interval(level)?;
            if obs >= lo && obs <= hi {
                covered += 1;
            }
            width += hi - lo;
        }
        out.push(IntervalStat {
            level,
            coverage: covered as f64 / n,
            avg_width: width / n,
        });
    }
    Ok(out)
}

/// The raw-ensemble counterpart of [`interval_stats`]: the 11 member
/// forecasts of each case are treated as a statistical sample and the
/// interval endpoints are its empirical α/2 and 1−α/2 quantiles.
pub fn ensemble_interval_stats(
    member_sets: &[Vec<f64>],
    observations: &[f64],
    levels: &[f64],
) -> Result<Vec<IntervalStat>> {
    if member_sets.len() != observations.len() {
        return Err(Error::LengthMismatch {
            left: member_sets.len(),
            right: observations.len(),
        });
    }
    if member_sets.is_empty() {
        return Err(Error::EmptyInput("ensembles"));
    }
    let n = member_sets.len() as f64;
    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        let alpha = 1.0 - level;
        let mut covered = 0usize;
        let mut width = 0.0;
        for (members, &obs) in member_sets.iter().zip(observations) {
            let mut sorted = members.clone();
            sorted.sort_by(f64::total_cmp);
            let lo = empirical_quantile(&sorted, alpha / 2.0);
            let hi = empirical_quantile(&sorted, 1.0 - alpha / 2.0);
            if obs >= lo && obs <= hi {
                covered += 1;
            }
            width += hi - lo;
        }
        out.push(IntervalStat {
            level,
            coverage: covered as f64 / n,
            avg_width: width / n,
        });
    }
    Ok(out)
}

/// Linear-interpolation empirical quantile (R type 7) of a sorted sample.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Aggregate verification scores: mean CRPS of the probabilistic
/// forecast, MAE and RMSE of both point forecasts (median and mean), and
/// interval coverage/width per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub mean_crps: f64,
    pub mae_median: f64,
    pub mae_mean: f64,
    pub rmse_median: f64,
    pub rmse_mean: f64,
    pub intervals: Vec<IntervalStat>,
    pub n_cases: usize,
}

impl ScoreReport {
    pub fn csv_header(levels: &[f64]) -> String {
        let mut out =
            String::from("source,mean_crps,mae_median,mae_mean,rmse_median,rmse_mean,n_cases");
        for level in levels {
            out.push_str(&format!(",coverage_{level},avg_width_{level}"));
        }
        out
    }

    pub fn csv_row(&self, source: &str) -> String {
        let mut out = format!(
            "{source},{},{},{},{},{},{}",
            self.mean_crps,
            self.mae_median,
            self.mae_mean,
            self.rmse_median,
            self.rmse_mean,
            self.n_cases
        );
        for stat in &self.intervals {
            out.push_str(&format!(",{},{}", stat.coverage, stat.avg_width));
        }
        out
    }
}

/// Adaptive Simpson quadrature with an absolute tolerance. Subdivision
/// is forced for the first few levels: smooth exponential tails can fool
/// the error estimate at coarse resolution.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        forced: u32,
    ) -> f64 {
        let (left, lm, flm) = step(f, a, fa, m, fm);
        let (right, rm, frm) = step(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || (forced == 0 && delta.abs() <= 15.0 * tol) {
            left + right + delta / 15.0
        } else {
            let forced = forced.saturating_sub(1);
            recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1, forced)
                + recurse(
                    f,
                    m,
                    fm,
                    b,
                    fb,
                    rm,
                    frm,
                    right,
                    tol / 2.0,
                    depth - 1,
                    forced,
                )
        }
    }
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = step(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50, 5)
}
