//! Forecast archives: ingestion, training windows, and synthetic
//! generation from a known model (the oracle for estimation tests).

use std::collections::HashMap;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::TrainingSet;
use crate::mixture::{BmaModel, ENSEMBLE_SIZE};

/// Observations below this speed are recorded as zero (anemometer
/// startup threshold).
pub const CENSOR_THRESHOLD: f64 = 0.1;

/// An inclusive calendar-date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// One (date, station) record: control forecast, ten perturbed members
/// and the validating observation. Member order is semantic: odd indices
/// carry the added perturbations, even indices the subtracted ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastCase {
    pub date: NaiveDate,
    pub station: String,
    /// Validating observation in m/s; 0 means below the 0.1 m/s startup.
    pub obs: f64,
    pub control: Option<f64>,
    pub perturbed: [Option<f64>; 10],
}

impl ForecastCase {
    /// Forecast of member `idx` (0 = control, 1..=10 = ℓ1..ℓ10).
    pub fn member(&self, idx: usize) -> Option<f64> {
        if idx == 0 {
            self.control
        } else {
            self.perturbed[idx - 1]
        }
    }

    /// Iterate over (member index, forecast) for non-missing members.
    pub fn available_members(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..ENSEMBLE_SIZE).filter_map(|idx| self.member(idx).map(|f| (idx, f)))
    }

    pub fn n_available(&self) -> usize {
        self.available_members().count()
    }

    pub fn is_complete(&self) -> bool {
        self.n_available() == ENSEMBLE_SIZE
    }

    /// All 11 member values, in member order; only valid on complete cases.
    pub fn member_values(&self) -> Option<Vec<f64>> {
        if !self.is_complete() {
            return None;
        }
        Some(self.available_members().map(|(_, f)| f).collect())
    }

    fn validate(&self) -> Result<()> {
        if self.station.is_empty() || self.station.contains(',') || self.station.contains('\n') {
            return Err(Error::InvalidStation(self.station.clone()));
        }
        if !(self.obs.is_finite() && self.obs >= 0.0) {
            return Err(Error::Domain {
                what: "obs",
                value: self.obs,
            });
        }
        for (_, f) in self.available_members() {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::Domain {
                    what: "member forecast",
                    value: f,
                });
            }
        }
        Ok(())
    }
}

const CSV_HEADER: &str = "date,station,obs,fc,fl1,fl2,fl3,fl4,fl5,fl6,fl7,fl8,fl9,fl10";

/// Counts of rows dropped while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadSummary {
    /// Rows rejected because the observation field was missing.
    pub rejected_missing_obs: usize,
}

/// A set of forecast cases with unique (date, station) keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    cases: Vec<ForecastCase>,
}

impl Archive {
    pub fn from_cases(cases: Vec<ForecastCase>) -> Result<Self> {
        let mut seen: HashMap<(NaiveDate, &str), usize> = HashMap::new();
        for (i, case) in cases.iter().enumerate() {
            case.validate()?;
            if let Some(&first) = seen.get(&(case.date, case.station.as_str())) {
                return Err(Error::DuplicateKey {
                    key: format!("({}, {})", case.date, case.station),
                    first: first + 1,
                    second: i + 1,
                });
            }
            seen.insert((case.date, case.station.as_str()), i);
        }
        Ok(Self { cases })
    }

    pub fn cases(&self) -> &[ForecastCase] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn stations(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for case in &self.cases {
            if !out.contains(&case.station) {
                out.push(case.station.clone());
            }
        }
        out.sort();
        out
    }

    pub fn date_range(&self) -> Option<DateRange> {
        let start = self.cases.iter().map(|c| c.date).min()?;
        let end = self.cases.iter().map(|c| c.date).max()?;
        Some(DateRange { start, end })
    }

    /// Cases falling on one calendar date, in stable (input) order.
    pub fn cases_on(&self, date: NaiveDate) -> Vec<&ForecastCase> {
        self.cases.iter().filter(|c| c.date == date).collect()
    }

    /// Training window: all stations' cases with
    /// `target − days ≤ date ≤ target − 1`. Dates with no data simply
    /// contribute nothing; the result may be empty.
    pub fn window(&self, target: NaiveDate, days: u64) -> TrainingSet {
        let start = target - Days::new(days);
        let end = target - Days::new(1);
        let cases: Vec<ForecastCase> = self
            .cases
            .iter()
            .filter(|c| c.date >= start && c.date <= end)
            .cloned()
            .collect();
        TrainingSet::new(cases, DateRange { start, end }, CENSOR_THRESHOLD)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, LoadSummary)> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<(Self, LoadSummary)> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == CSV_HEADER => {}
            Some((_, header)) => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("unexpected header {header:?}"),
                })
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "empty file".into(),
                })
            }
        }

        let mut cases = Vec::new();
        let mut summary = LoadSummary::default();
        let mut seen: HashMap<(NaiveDate, String), usize> = HashMap::new();
        for (idx, raw) in lines {
            let line = idx + 1; // 1-based, header is line 1
            if raw.is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(',').collect();
            if fields.len() != 14 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 14 fields, found {}", fields.len()),
                });
            }
            let date = fields[0].parse::<NaiveDate>().map_err(|e| Error::Parse {
                line,
                msg: format!("bad date {:?}: {e}", fields[0]),
            })?;
            let station = fields[1].to_string();
            let obs = match parse_optional(fields[2], line, "obs")? {
                Some(v) => v,
                None => {
                    summary.rejected_missing_obs += 1;
                    continue;
                }
            };
            let control = parse_optional(fields[3], line, "fc")?;
            let mut perturbed = [None; 10];
            for (j, slot) in perturbed.iter_mut().enumerate() {
                *slot = parse_optional(fields[4 + j], line, "member")?;
            }
            let case = ForecastCase {
                date,
                station,
                obs,
                control,
                perturbed,
            };
            case.validate().map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
            if let Some(&first) = seen.get(&(case.date, case.station.clone())) {
                return Err(Error::DuplicateKey {
                    key: format!("({}, {})", case.date, case.station),
                    first,
                    second: line,
                });
            }
            seen.insert((case.date, case.station.clone()), line);
            cases.push(case);
        }
        Ok((Self { cases }, summary))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.cases.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for case in &self.cases {
            out.push_str(&case.date.to_string());
            out.push(',');
            out.push_str(&case.station);
            out.push(',');
            push_value(&mut out, Some(case.obs));
            push_value(&mut out, case.control);
            for member in &case.perturbed {
                push_value(&mut out, *member);
            }
            // drop the trailing comma
            out.pop();
            out.push('\n');
        }
        out
    }
}

fn push_value(out: &mut String, value: Option<f64>) {
    match value {
        Some(v) => out.push_str(&format!("{v},")),
        None => out.push_str("NA,"),
    }
}

fn parse_optional(field: &str, line: usize, what: &str) -> Result<Option<f64>> {
    if field.is_empty() || field == "NA" {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|e| Error::Parse {
        line,
        msg: format!("bad {what} value {field:?}: {e}"),
    })
}

/// Configuration of the synthetic forecast process. Member forecasts are
/// log-normal with a shared per-case factor and an independent per-member
/// factor:
/// `ln f = log_mean + log_sd_case·Z_case + log_sd_member·Z_member`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_days: usize,
    pub n_stations: usize,
    pub start_date: NaiveDate,
    pub seed: u64,
    pub log_mean: f64,
    pub log_sd_case: f64,
    pub log_sd_member: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_days: 60,
            n_stations: 10,
            start_date: NaiveDate::from_ymd_opt(2010, 10, 1).unwrap(),
            seed: 0,
            log_mean: 1.0,
            log_sd_case: 1.2,
            log_sd_member: 0.5,
        }
    }
}

/// Draw a synthetic archive from a known model: per case, draw member
/// forecasts, pick the generating member by the model's per-member
/// weights, then draw the observation from that member's gamma component.
/// Observations under the censoring threshold are recorded as zero.
/// Deterministic given the seed (each case has its own derived stream).
pub fn simulate(truth: &BmaModel, cfg: &SimConfig) -> Archive {
    let mut cases = Vec::with_capacity(cfg.n_days * cfg.n_stations);
    let weights: Vec<f64> = (0..ENSEMBLE_SIZE)
        .map(|m| truth.per_member_weight(m))
        .collect();
    for day in 0..cfg.n_days {
        let date = cfg.start_date + Days::new(day as u64);
        for st in 0..cfg.n_stations {
            let mut rng = case_rng(cfg.seed, day as u64, st as u64);
            let z_case: f64 = rand_distr::StandardNormal.sample(&mut rng);
            let base = (cfg.log_mean + cfg.log_sd_case * z_case).exp();
            let forecasts: Vec<f64> = (0..ENSEMBLE_SIZE)
                .map(|_| {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    base * (cfg.log_sd_member * z).exp()
                })
                .collect();
            let chosen = sample_categorical(&weights, rng.random::<f64>());
            let law = truth.link().component(forecasts[chosen]).expect("floored");
            let gamma = rand_distr::Gamma::new(law.shape(), law.scale()).expect("valid law");
            let raw: f64 = gamma.sample(&mut rng);
            let obs = if raw < CENSOR_THRESHOLD { 0.0 } else { raw };
            let mut perturbed = [None; 10];
            for (j, slot) in perturbed.iter_mut().enumerate() {
                *slot = Some(forecasts[j + 1]);
            }
            cases.push(ForecastCase {
                date,
                station: format!("S{:02}", st + 1),
                obs,
                control: Some(forecasts[0]),
                perturbed,
            });
        }
    }
    Archive { cases }
}

fn sample_categorical(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn case_rng(seed: u64, day: u64, station: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(
        seed ^ splitmix64(day.wrapping_mul(2) ^ station.wrapping_mul(0x1000_0001)),
    ))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{GroupScheme, LinkParams};

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    const SAMPLE: &str = "\
date,station,obs,fc,fl1,fl2,fl3,fl4,fl5,fl6,fl7,fl8,fl9,fl10
2010-10-01,Debrecen,3.2,4,2,2.1,2.2,2.3,2.4,2.5,2.6,2.7,2.8,2.9
2010-10-01,Szeged,1.5,1.8,NA,NA,NA,1.9,2,2.1,2.2,2.3,2.4,2.5
2010-10-02,Debrecen,0,0.4,0.5,0.6,0.7,0.8,0.9,1,1.1,1.2,1.3,1.4
";

    #[test]
    fn load_well_formed() {
        let (archive, summary) = Archive::from_csv(SAMPLE).unwrap();
        assert_eq!(archive.len(), 3);
        assert_eq!(summary.rejected_missing_obs, 0);
        assert_eq!(archive.cases()[0].station, "Debrecen");
        assert_eq!(archive.cases()[0].control, Some(4.0));
    }

    #[test]
    fn na_members_become_missing() {
        let (archive, _) = Archive::from_csv(SAMPLE).unwrap();
        let szeged = &archive.cases()[1];
        assert_eq!(szeged.n_available(), 8);
        assert_eq!(szeged.member(1), None);
        assert_eq!(szeged.member(4), Some(1.9));
        assert!(!szeged.is_complete());
        assert!(archive.cases()[0].is_complete());
    }

    #[test]
    fn missing_obs_rows_are_rejected_with_count() {
        let text = SAMPLE.replace("2010-10-01,Szeged,1.5", "2010-10-01,Szeged,NA");
        let (archive, summary) = Archive::from_csv(&text).unwrap();
        assert_eq!(archive.len(), 2);
        assert_eq!(summary.rejected_missing_obs, 1);
    }

    #[test]
    fn duplicate_keys_name_both_lines() {
        let mut text = SAMPLE.to_string();
        text.push_str("2010-10-01,Debrecen,9,9,9,9,9,9,9,9,9,9,9,9\n");
        match Archive::from_csv(&text) {
            Err(Error::DuplicateKey { first, second, .. }) => {
                assert_eq!(first, 2);
                assert_eq!(second, 5);
            }
            other => panic!("expected DuplicateKey, got {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_carry_line_numbers() {
        let text =
            "date,station,obs,fc,fl1,fl2,fl3,fl4,fl5,fl6,fl7,fl8,fl9,fl10\n2010-10-01,X,1,2,3\n";
        match Archive::from_csv(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected Parse, got {other:?}"),
        }
        let text = SAMPLE.replace("3.2", "not-a-number");
        assert!(matches!(
            Archive::from_csv(&text),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn csv_round_trips_bit_exact() {
        let (archive, _) = Archive::from_csv(SAMPLE).unwrap();
        let text = archive.to_csv();
        let (again, _) = Archive::from_csv(&text).unwrap();
        assert_eq!(archive, again);
        assert_eq!(text, again.to_csv());
    }

    #[test]
    fn window_selects_preceding_days_only() {
        let truth = test_model();
        let cfg = SimConfig {
            n_days: 40,
            n_stations: 2,
            ..SimConfig::default()
        };
        let archive = simulate(&truth, &cfg);
        let target = date(2010, 11, 10); // day 41 of the archive
        let train = archive.window(target, 28);
        // days 12..=39 of the record (2010-10-13 .. 2010-11-09)
        assert_eq!(train.cases().len(), 28 * 2);
        let max_date = train.cases().iter().map(|c| c.date).max().unwrap();
        let min_date = train.cases().iter().map(|c| c.date).min().unwrap();
        assert_eq!(max_date, date(2010, 11, 9));
        assert_eq!(min_date, date(2010, 10, 13));
        assert!(max_date < target);

        let empty = archive.window(date(2010, 10, 1), 5);
        assert!(empty.cases().is_empty());

        let one_day = archive.window(date(2010, 10, 3), 1);
        assert!(one_day.cases().iter().all(|c| c.date == date(2010, 10, 2)));
    }

    fn test_model() -> BmaModel {
        BmaModel::two_group(
            LinkParams {
                b0: 0.3,
                b1: 1.1,
                c0: 0.6,
                c1: 0.2,
            },
            0.4,
            DateRange {
                start: date(2010, 10, 1),
                end: date(2010, 10, 28),
            },
            280,
        )
        .unwrap()
    }

    #[test]
    fn simulate_is_deterministic_and_censored() {
        let truth = test_model();
        let cfg = SimConfig {
            n_days: 30,
            n_stations: 4,
            seed: 9,
            ..SimConfig::default()
        };
        let a = simulate(&truth, &cfg);
        let b = simulate(&truth, &cfg);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.len(), 120);
        assert!(a
            .cases()
            .iter()
            .all(|c| c.obs == 0.0 || c.obs >= CENSOR_THRESHOLD));
        assert!(a.cases().iter().all(|c| c.is_complete()));

        let other = simulate(
            &truth,
            &SimConfig {
                seed: 10,
                ..cfg.clone()
            },
        );
        assert_ne!(a.to_csv(), other.to_csv());
    }

    #[test]
    fn scheme_groups_follow_member_parity() {
        assert_eq!(GroupScheme::ThreeGroup.group_of(0), 0);
        for idx in [1usize, 3, 5, 7, 9] {
            assert_eq!(GroupScheme::ThreeGroup.group_of(idx), 1);
        }
        for idx in [2usize, 4, 6, 8, 10] {
            assert_eq!(GroupScheme::ThreeGroup.group_of(idx), 2);
        }
    }
}
