//! Model fitting from a training window: bias coefficients by pooled
//! linear regression, then group weights and spread coefficients by
//! censored maximum likelihood via EM.

use chrono::NaiveDate;

use crate::data::{Archive, DateRange, ForecastCase};
use crate::error::{Error, Result};
use crate::mixture::{case_components, BmaModel, GroupScheme, LinkParams, ENSEMBLE_SIZE};

/// Likelihood contributions are clamped here before taking logs, so a
/// far-tail observation cannot produce −∞.
const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// Forecast-observation cases inside one training window.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    cases: Vec<ForecastCase>,
    window: DateRange,
    censor_threshold: f64,
}

impl TrainingSet {
    pub fn new(cases: Vec<ForecastCase>, window: DateRange, censor_threshold: f64) -> Self {
        Self {
            cases,
            window,
            censor_threshold,
        }
    }

    pub fn cases(&self) -> &[ForecastCase] {
        &self.cases
    }

    pub fn window(&self) -> DateRange {
        self.window
    }

    pub fn censor_threshold(&self) -> f64 {
        self.censor_threshold
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

/// EM stopping rules and the optional floor applied to group weights.
#[derive(Debug, Clone, Copy)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop when the relative log-likelihood change falls below this.
    pub rel_tol: f64,
    /// Group weights may reach exactly zero when this is 0 (the default).
    pub weight_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-7,
            weight_floor: 0.0,
        }
    }
}

/// A fitted model together with EM diagnostics.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: BmaModel,
    /// Censored log-likelihood after each accepted iteration, starting
    /// with the value at the initial point.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Ordinary least squares of observations on forecasts, pooling every
/// non-missing member of every case (all members share one regression).
/// Returns (b0, b1).
pub fn fit_bias(train: &TrainingSet) -> Result<(f64, f64)> {
    let mut n = 0.0_f64;
    let mut sum_f = 0.0;
    let mut sum_y = 0.0;
    for case in &train.cases {
        for (_, f) in case.available_members() {
            n += 1.0;
            sum_f += f;
            sum_y += case.obs;
        }
    }
    if n < 2.0 {
        return Err(Error::InsufficientData(format!(
            "{} pooled forecast-observation pairs; need at least 2",
            n as usize
        )));
    }
    let mean_f = sum_f / n;
    let mean_y = sum_y / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for case in &train.cases {
        for (_, f) in case.available_members() {
            sxx += (f - mean_f) * (f - mean_f);
            sxy += (f - mean_f) * (case.obs - mean_y);
        }
    }
    if sxx <= 0.0 {
        return Err(Error::SingularFit);
    }
    let b1 = sxy / sxx;
    let b0 = mean_y - b1 * mean_f;
    Ok((b0, b1))
}

/// Censored log-likelihood of the training set: an observation y at or
/// above the censoring threshold contributes log mixture-pdf(y); one
/// below it contributes log mixture-cdf(threshold), the probability of
/// the censored interval.
pub fn censored_loglik(
    train: &TrainingSet,
    link: &LinkParams,
    group_weights: &[f64],
    scheme: GroupScheme,
) -> f64 {
    train
        .cases
        .iter()
        .map(|case| case_loglik(case, link, group_weights, scheme, train.censor_threshold))
        .sum()
}

fn case_loglik(
    case: &ForecastCase,
    link: &LinkParams,
    group_weights: &[f64],
    scheme: GroupScheme,
    threshold: f64,
) -> f64 {
    let components = match case_components(scheme, group_weights, link, case) {
        Ok(c) => c,
        Err(_) => return 0.0, // no members: the case carries no information
    };
    let mut like = 0.0;
    for (w, g) in &components {
        like += w * if case.obs < threshold {
            g.cdf(threshold)
        } else {
            g.pdf(case.obs)
        };
    }
    like.max(LIKELIHOOD_FLOOR).ln()
}

/// One E-step: per-case responsibilities over available members,
/// accumulated into per-group sums and per-group member counts.
fn responsibility_sums(
    train: &TrainingSet,
    link: &LinkParams,
    group_weights: &[f64],
    scheme: GroupScheme,
) -> (Vec<f64>, Vec<f64>) {
    let n_groups = scheme.group_count();
    let mut resp = vec![0.0; n_groups];
    let mut count = vec![0.0; n_groups];
    let threshold = train.censor_threshold;
    for case in &train.cases {
        let members: Vec<(usize, f64)> = case.available_members().collect();
        if members.is_empty() {
            continue;
        }
        let mut terms = Vec::with_capacity(members.len());
        let mut total = 0.0;
        for &(member, forecast) in &members {
            let w = group_weights[scheme.group_of(member)];
            let g = match link.component(forecast) {
                Ok(g) => g,
                Err(_) => continue,
            };
            let density = if case.obs < threshold {
                g.cdf(threshold)
            } else {
                g.pdf(case.obs)
            };
            let term = w * density;
            total += term;
            terms.push((member, term));
        }
        for &(member, term) in &terms {
            let group = scheme.group_of(member);
            let z = if total > 0.0 && total.is_finite() {
                term / total
            } else {
                // degenerate case: fall back to the prior member weights
                let w_sum: f64 = members
                    .iter()
                    .map(|&(m, _)| group_weights[scheme.group_of(m)])
                    .sum();
                if w_sum > 0.0 {
                    group_weights[group] / w_sum
                } else {
                    1.0 / members.len() as f64
                }
            };
            resp[group] += z;
            count[group] += 1.0;
        }
    }
    (resp, count)
}

/// Maximum-likelihood fit of group weights and (c0, c1) for fixed
/// (b0, b1), by EM with Wilks-style censoring. The E-step computes
/// member responsibilities (censored observations use the component
/// probability of the censored interval); the M-step averages
/// responsibilities per group and renormalizes to the scheme's
/// constraint, then refines (c0, c1) by Nelder-Mead with weights held
/// fixed. Accepted iterations never decrease the log-likelihood.
pub fn em_fit(
    train: &TrainingSet,
    link_mean: (f64, f64),
    scheme: GroupScheme,
    cfg: &EmConfig,
) -> Result<EmFit> {
    if train.is_empty() {
        return Err(Error::InsufficientData(format!(
            "empty training window {} .. {}",
            train.window.start, train.window.end
        )));
    }
    let (b0, b1) = link_mean;

    // initialization: uniform weight per member, c0 from the regression
    // residual spread, no forecast-dependent spread
    let mut weights = vec![1.0 / ENSEMBLE_SIZE as f64; scheme.group_count()];
    let mut link = LinkParams {
        b0,
        b1,
        c0: residual_sd(train, b0, b1).max(0.05),
        c1: 0.0,
    };

    let mut ll = censored_loglik(train, &link, &weights, scheme);
    if !ll.is_finite() {
        return Err(Error::Estimation(format!(
            "non-finite log-likelihood at the initial point (c0 = {})",
            link.c0
        )));
    }
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;

        // weight update: average responsibility per group member slot,
        // renormalized to Σ size·w = 1; kept only if it does not lower
        // the likelihood (missing members make the plain update inexact)
        let (resp, count) = responsibility_sums(train, &link, &weights, scheme);
        let mut candidate: Vec<f64> = resp
            .iter()
            .zip(&count)
            .zip(&weights)
            .map(|((&r, &c), &w)| if c > 0.0 { r / c } else { w })
            .map(|w| w.max(cfg.weight_floor))
            .collect();
        let total: f64 = candidate
            .iter()
            .zip(scheme.group_sizes())
            .map(|(&w, &s)| w * s as f64)
            .sum();
        if total > 0.0 {
            for w in &mut candidate {
                *w /= total;
            }
            let ll_w = censored_loglik(train, &link, &candidate, scheme);
            if ll_w >= ll {
                weights = candidate;
                ll = ll_w;
            }
        }

        // spread update: 2-D Nelder-Mead on (c0, c1), seeded at the
        // incumbent so the result can never be worse
        let objective = |c: &[f64]| {
            let trial = LinkParams {
                b0,
                b1,
                c0: c[0],
                c1: c[1],
            };
            -censored_loglik(train, &trial, &weights, scheme)
        };
        let steps = [simplex_step(link.c0), simplex_step(link.c1)];
        let (best, neg_ll) = nelder_mead_min(&objective, &[link.c0, link.c1], &steps, 200);
        if -neg_ll >= ll && neg_ll.is_finite() {
            link.c0 = best[0];
            link.c1 = best[1];
            ll = -neg_ll;
        }

        let prev = *trace.last().unwrap();
        trace.push(ll);
        if (ll - prev).abs() <= cfg.rel_tol * prev.abs().max(1e-12) {
            converged = true;
            break;
        }
    }

    let model = BmaModel::new(scheme, link, weights, train.window, train.len())?;
    Ok(EmFit {
        model,
        loglik_trace: trace,
        iterations,
        converged,
    })
}

/// Full fit for one target date: select the preceding window from the
/// archive (all stations pooled), regress the bias coefficients, then run
/// EM for weights and spread.
pub fn fit(
    archive: &Archive,
    target_date: NaiveDate,
    window_days: u64,
    scheme: GroupScheme,
    cfg: &EmConfig,
) -> Result<EmFit> {
    if window_days == 0 {
        return Err(Error::Domain {
            what: "window_days",
            value: 0.0,
        });
    }
    let train = archive.window(target_date, window_days);
    if train.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no cases in window {} .. {} (target {target_date})",
            train.window().start,
            train.window().end
        )));
    }
    let link_mean = fit_bias(&train)?;
    em_fit(&train, link_mean, scheme, cfg)
}

fn residual_sd(train: &TrainingSet, b0: f64, b1: f64) -> f64 {
    let mut n = 0.0;
    let mut ss = 0.0;
    for case in &train.cases {
        for (_, f) in case.available_members() {
            let r = case.obs - b0 - b1 * f;
            ss += r * r;
            n += 1.0;
        }
    }
    if n > 1.0 {
        (ss / (n - 1.0)).sqrt()
    } else {
        1.0
    }
}

fn simplex_step(value: f64) -> f64 {
    if value.abs() > 1e-3 {
        0.1 * value.abs()
    } else {
        0.02
    }
}

/// Nelder-Mead minimization with an evaluation budget; returns the best
/// point seen. Standard reflect/expand/contract/shrink coefficients.
fn nelder_mead_min(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    max_evals: usize,
) -> (Vec<f64>, f64) {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let dim = x0.len();
    let mut evals = 0;
    let eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        simplex.push(p);
    }
    let mut scores: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        if (scores[worst] - scores[best]).abs() <= 1e-10 * (scores[best].abs() + 1e-12) {
            break;
        }

        let mut centroid = vec![0.0; dim];
        for &i in order.iter().take(dim) {
            for d in 0..dim {
                centroid[d] += simplex[i][d];
            }
        }
        for c in &mut centroid {
            *c /= dim as f64;
        }

        let reflected: Vec<f64> = (0..dim)
            .map(|d| centroid[d] + ALPHA * (centroid[d] - simplex[worst][d]))
            .collect();
        let score_r = eval(&reflected, &mut evals);

        if score_r < scores[best] {
            if evals < max_evals {
                let expanded: Vec<f64> = (0..dim)
                    .map(|d| centroid[d] + GAMMA * (reflected[d] - centroid[d]))
                    .collect();
                let score_e = eval(&expanded, &mut evals);
                if score_e < score_r {
                    simplex[worst] = expanded;
                    scores[worst] = score_e;
                    continue;
                }
            }
            simplex[worst] = reflected;
            scores[worst] = score_r;
            continue;
        }
        if score_r < scores[second_worst] {
            simplex[worst] = reflected;
            scores[worst] = score_r;
            continue;
        }

        let contracted: Vec<f64> = (0..dim)
            .map(|d| centroid[d] + RHO * (simplex[worst][d] - centroid[d]))
            .collect();
        let score_c = eval(&contracted, &mut evals);
        if score_c < scores[worst] {
            simplex[worst] = contracted;
            scores[worst] = score_c;
            continue;
        }

        let anchor = simplex[best].clone();
        for &i in order.iter().skip(1) {
            for (x, b) in simplex[i].iter_mut().zip(&anchor) {
                *x = b + SIGMA * (*x - b);
            }
            scores[i] = eval(&simplex[i], &mut evals);
            if evals >= max_evals {
                break;
            }
        }
    }

    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    (simplex[best].clone(), scores[best])
}
