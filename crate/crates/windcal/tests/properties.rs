//! Property tests for the algebraic invariants that must hold on any
//! input, not just the seeded fixtures.

use chrono::NaiveDate;
use proptest::prelude::*;
use windcal::data::{DateRange, ForecastCase};
use windcal::gamma::GammaLaw;
use windcal::mixture::{BmaModel, LinkParams};
use windcal::verify::crps_ensemble;

fn window() -> DateRange {
    let start = NaiveDate::from_ymd_opt(2010, 10, 1).unwrap();
    DateRange {
        start,
        end: start + chrono::Days::new(27),
    }
}

proptest! {
    #[test]
    fn moment_parameterization_round_trips(
        mean in 0.1f64..20.0,
        sd in 0.05f64..10.0,
    ) {
        let law = GammaLaw::from_mean_sd(mean, sd).unwrap();
        prop_assert!((law.mean() - mean).abs() <= 1e-12 * mean);
        prop_assert!((law.sd() - sd).abs() <= 1e-12 * sd);
    }

    #[test]
    fn cdf_is_monotone_and_pdf_nonnegative(
        mean in 0.1f64..20.0,
        sd in 0.05f64..10.0,
        a in 0.0f64..40.0,
        b in 0.0f64..40.0,
    ) {
        let law = GammaLaw::from_mean_sd(mean, sd).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(law.cdf(lo) <= law.cdf(hi) + 1e-15);
        prop_assert!(law.pdf(a) >= 0.0);
        prop_assert!((0.0..=1.0).contains(&law.cdf(a)));
    }

    #[test]
    fn quantile_inverts_cdf_when_representable(
        mean in 0.1f64..20.0,
        sd in 0.05f64..10.0,
        p in 0.001f64..0.999,
    ) {
        let law = GammaLaw::from_mean_sd(mean, sd).unwrap();
        let x = law.quantile(p).unwrap();
        if x > 0.0 {
            prop_assert!((law.cdf(x) - p).abs() <= 1e-9, "cdf({x}) = {} vs p = {p}", law.cdf(x));
        }
    }

    #[test]
    fn predictive_weights_always_sum_to_one(
        omega in 0.0f64..1.0,
        b0 in -0.5f64..1.0,
        b1 in 0.5f64..1.5,
        c0 in 0.1f64..1.0,
        c1 in 0.0f64..0.5,
        control in proptest::option::of(0.2f64..12.0),
        perturbed in proptest::collection::vec(proptest::option::of(0.2f64..12.0), 10),
    ) {
        let model = BmaModel::two_group(
            LinkParams { b0, b1, c0, c1 },
            omega,
            window(),
            1,
        ).unwrap();
        let mut members = [None; 10];
        for (slot, value) in members.iter_mut().zip(&perturbed) {
            *slot = *value;
        }
        let case = ForecastCase {
            date: NaiveDate::from_ymd_opt(2010, 10, 29).unwrap(),
            station: "X".into(),
            obs: 1.0,
            control,
            perturbed: members,
        };
        match model.predictive(&case) {
            Ok(dist) => {
                let total: f64 = dist.components().iter().map(|(w, _)| w).sum();
                prop_assert!((total - 1.0).abs() <= 1e-10);
                prop_assert_eq!(dist.components().len(), case.n_available());
            }
            Err(_) => prop_assert_eq!(case.n_available(), 0),
        }
    }

    #[test]
    fn ensemble_crps_is_nonnegative(
        members in proptest::collection::vec(0.0f64..15.0, 1..=11),
        obs in 0.0f64..15.0,
    ) {
        let crps = crps_ensemble(&members, obs).unwrap();
        prop_assert!(crps >= -1e-12);
    }
}
