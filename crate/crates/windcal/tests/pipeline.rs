//! Integration tests for the rolling fit-and-score pipeline.

use chrono::NaiveDate;
use windcal::data::{simulate, DateRange, SimConfig};
use windcal::estimate::EmConfig;
use windcal::mixture::{BmaModel, LinkParams};
use windcal::pipeline::{
    summarize, sweep, verify_range, verify_range_sequential, weights_series, weights_summary,
    PipelineConfig,
};

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn truth(omega: f64) -> BmaModel {
    BmaModel::two_group(
        LinkParams {
            b0: 0.3,
            b1: 1.1,
            c0: 0.6,
            c1: 0.2,
        },
        omega,
        DateRange {
            start: date(2010, 10, 1),
            end: date(2010, 10, 28),
        },
        280,
    )
    .unwrap()
}

fn quick_em() -> EmConfig {
    EmConfig {
        max_iters: 60,
        rel_tol: 1e-6,
        ..EmConfig::default()
    }
}

#[test]
fn verify_range_scores_every_day_without_leakage() {
    let archive = simulate(
        &truth(0.4),
        &SimConfig {
            n_days: 40,
            n_stations: 3,
            seed: 5,
            ..SimConfig::default()
        },
    );
    let cfg = PipelineConfig {
        window_days: 20,
        em: quick_em(),
        ..PipelineConfig::default()
    };
    let from = date(2010, 10, 26);
    let to = date(2010, 11, 9);
    let output = verify_range(&archive, from, to, &cfg).unwrap();
    assert_eq!(output.days.len(), 15);
    assert!(output.skipped.is_empty());
    for day in &output.days {
        // the window must end strictly before the verification day
        assert!(day.model.fit_window().end < day.date);
        assert_eq!(
            day.model.fit_window().start,
            day.date - chrono::Days::new(20)
        );
        assert_eq!(day.cases.len(), 3);
    }

    let summary = summarize(&output, &cfg).unwrap();
    assert_eq!(summary.bma.n_cases, 45);
    assert_eq!(summary.raw.as_ref().unwrap().n_cases, 45);
    assert_eq!(summary.pit.len(), 45);
    assert_eq!(summary.rank.histogram.n_cases(), 45);
    assert_eq!(summary.pit_histogram.n_cases(), 45);
}

#[test]
fn parallel_and_sequential_results_are_identical() {
    let archive = simulate(
        &truth(0.3),
        &SimConfig {
            n_days: 30,
            n_stations: 3,
            seed: 11,
            ..SimConfig::default()
        },
    );
    let cfg = PipelineConfig {
        window_days: 15,
        em: quick_em(),
        ..PipelineConfig::default()
    };
    let from = date(2010, 10, 20);
    let to = date(2010, 10, 30);
    let par = verify_range(&archive, from, to, &cfg).unwrap();
    let seq = verify_range_sequential(&archive, from, to, &cfg).unwrap();

    let sum_par = serde_json::to_string(&summarize(&par, &cfg).unwrap()).unwrap();
    let sum_seq = serde_json::to_string(&summarize(&seq, &cfg).unwrap()).unwrap();
    assert_eq!(sum_par, sum_seq);

    let w_par = serde_json::to_string(&weights_series(&par)).unwrap();
    let w_seq = serde_json::to_string(&weights_series(&seq)).unwrap();
    assert_eq!(w_par, w_seq);
}

#[test]
fn days_before_any_history_are_skipped_with_reasons() {
    let archive = simulate(
        &truth(0.4),
        &SimConfig {
            n_days: 20,
            n_stations: 2,
            seed: 3,
            ..SimConfig::default()
        },
    );
    let cfg = PipelineConfig {
        window_days: 10,
        em: quick_em(),
        ..PipelineConfig::default()
    };
    // 2010-10-01 has an empty preceding window; later days fit
    let output = verify_range(&archive, date(2010, 10, 1), date(2010, 10, 12), &cfg).unwrap();
    assert!(!output.skipped.is_empty());
    assert!(output
        .skipped
        .iter()
        .all(|(d, reason)| *d == date(2010, 10, 1) && reason.contains("insufficient")));
    assert_eq!(output.days.len(), 11);

    // an entirely unfittable range errors
    let err = verify_range(&archive, date(2010, 9, 1), date(2010, 9, 5), &cfg);
    assert!(err.is_err());
}

#[test]
fn weights_series_tracks_fitted_models() {
    // all weight on the control, with member spread mild enough that the
    // two-step fit stays well specified on 120-case windows
    let archive = simulate(
        &truth(1.0),
        &SimConfig {
            n_days: 30,
            n_stations: 6,
            seed: 29,
            log_mean: 1.25,
            log_sd_case: 0.8,
            log_sd_member: 0.35,
            ..SimConfig::default()
        },
    );
    let cfg = PipelineConfig {
        window_days: 20,
        em: quick_em(),
        ..PipelineConfig::default()
    };
    let output = verify_range(&archive, date(2010, 10, 21), date(2010, 10, 30), &cfg).unwrap();
    let rows = weights_series(&output);
    assert_eq!(rows.len(), output.days.len());
    // fitted omega stays high and the perturbed members' weight
    // collapses, so no day is a real mixture
    for row in &rows {
        assert!(
            row.weights[0] > 0.95,
            "omega {} unexpectedly low",
            row.weights[0]
        );
    }
    let summary = weights_summary(&rows).unwrap();
    assert!(summary.real_mixture_fraction < 0.2);
    assert_eq!(summary.n_days, rows.len());
}

#[test]
fn sweep_holds_the_verification_range_fixed() {
    let archive = simulate(
        &truth(0.4),
        &SimConfig {
            n_days: 35,
            n_stations: 2,
            seed: 41,
            ..SimConfig::default()
        },
    );
    let cfg = PipelineConfig {
        em: quick_em(),
        ..PipelineConfig::default()
    };
    let from = date(2010, 10, 21);
    let to = date(2010, 11, 4);
    let rows = sweep(&archive, from, to, 10, 20, &cfg).unwrap();
    assert_eq!(rows.len(), 11);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.window_days, 10 + i as u64);
        assert_eq!(row.verify_from, from);
        assert_eq!(row.verify_to, to);
        assert!(row.scores.n_cases > 0);
    }

    // archive reaches back only 20 days before `from`: a 21-60 day sweep
    // must refuse
    let err = sweep(&archive, from, to, 10, 60, &cfg);
    match err {
        Err(windcal::Error::InsufficientData(msg)) => {
            assert!(msg.contains("requires history"));
        }
        other => panic!("expected InsufficientData, got {other:?}"),
    }
}
