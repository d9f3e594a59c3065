//! Two-group and three-group BMA gamma mixtures and the predictive
//! distribution they induce for a single forecast case.
//!
//! Per-member weights are stored per exchangeable group: the two-group
//! model carries (ω, (1−ω)/10), the three-group model (ω_c, ω_o, ω_e)
//! with ω_c + 5ω_o + 5ω_e = 1.

use serde::{Deserialize, Serialize};

use crate::data::{DateRange, ForecastCase};
use crate::error::{Error, Result};
use crate::gamma::GammaLaw;

/// Number of ensemble members (control + 10 perturbed).
pub const ENSEMBLE_SIZE: usize = 11;

/// Floor applied to linked means and standard deviations before gamma
/// construction, keeping likelihoods finite when fitted coefficients send
/// a component parameter nonpositive.
pub const PARAM_FLOOR: f64 = 1e-4;

const WEIGHT_TOL: f64 = 1e-10;

/// Exchangeable-group layout over the 11 members. Member index 0 is the
/// control; 1..=10 are the perturbed members ℓ1..ℓ10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupScheme {
    /// {control}, {ℓ1..ℓ10}
    TwoGroup,
    /// {control}, {ℓ1,ℓ3,ℓ5,ℓ7,ℓ9}, {ℓ2,ℓ4,ℓ6,ℓ8,ℓ10}
    ThreeGroup,
}

impl GroupScheme {
    pub fn group_count(self) -> usize {
        match self {
            GroupScheme::TwoGroup => 2,
            GroupScheme::ThreeGroup => 3,
        }
    }

    /// Group id of a member index.
    pub fn group_of(self, member: usize) -> usize {
        assert!(member < ENSEMBLE_SIZE, "member index out of range");
        match self {
            GroupScheme::TwoGroup => usize::from(member != 0),
            GroupScheme::ThreeGroup => {
                if member == 0 {
                    0
                } else if member % 2 == 1 {
                    1
                } else {
                    2
                }
            }
        }
    }

    pub fn group_sizes(self) -> &'static [usize] {
        match self {
            GroupScheme::TwoGroup => &[1, 10],
            GroupScheme::ThreeGroup => &[1, 5, 5],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroupScheme::TwoGroup => "two-group",
            GroupScheme::ThreeGroup => "three-group",
        }
    }
}

impl std::str::FromStr for GroupScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-group" => Ok(GroupScheme::TwoGroup),
            "three-group" => Ok(GroupScheme::ThreeGroup),
            other => Err(Error::Estimation(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Shared link coefficients: a member forecast f maps to a gamma
/// component with mean b0 + b1·f and standard deviation c0 + c1·f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub b0: f64,
    pub b1: f64,
    pub c0: f64,
    pub c1: f64,
}

impl LinkParams {
    pub fn mean_at(&self, forecast: f64) -> f64 {
        self.b0 + self.b1 * forecast
    }

    pub fn sd_at(&self, forecast: f64) -> f64 {
        self.c0 + self.c1 * forecast
    }

    /// Gamma component for one member forecast, with both linked
    /// parameters floored at [`PARAM_FLOOR`].
    pub fn component(&self, forecast: f64) -> Result<GammaLaw> {
        GammaLaw::from_mean_sd(
            self.mean_at(forecast).max(PARAM_FLOOR),
            self.sd_at(forecast).max(PARAM_FLOOR),
        )
    }
}

/// A fitted BMA mixture model: group scheme, link coefficients and
/// per-member group weights, plus fitting provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct BmaModel {
    scheme: GroupScheme,
    link: LinkParams,
    group_weights: Vec<f64>,
    fit_window: DateRange,
    n_train_cases: usize,
}

impl BmaModel {
    /// Construct with explicit per-member group weights. Weights must be
    /// nonnegative and satisfy Σ group_size·weight = 1 within 1e-10.
    pub fn new(
        scheme: GroupScheme,
        link: LinkParams,
        group_weights: Vec<f64>,
        fit_window: DateRange,
        n_train_cases: usize,
    ) -> Result<Self> {
        if group_weights.len() != scheme.group_count() {
            return Err(Error::Estimation(format!(
                "expected {} group weights, got {}",
                scheme.group_count(),
                group_weights.len()
            )));
        }
        let mut total = 0.0;
        for (&w, &size) in group_weights.iter().zip(scheme.group_sizes()) {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Domain {
                    what: "group weight",
                    value: w,
                });
            }
            total += w * size as f64;
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Estimation(format!(
                "member weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            scheme,
            link,
            group_weights,
            fit_window,
            n_train_cases,
        })
    }

    /// Two-group model with control weight ω.
    pub fn two_group(
        link: LinkParams,
        omega: f64,
        fit_window: DateRange,
        n_train_cases: usize,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::Domain {
                what: "omega",
                value: omega,
            });
        }
        Self::new(
            GroupScheme::TwoGroup,
            link,
            vec![omega, (1.0 - omega) / 10.0],
            fit_window,
            n_train_cases,
        )
    }

    /// Three-group model with per-member weights (ω_c, ω_o, ω_e).
    pub fn three_group(
        link: LinkParams,
        omega_c: f64,
        omega_o: f64,
        omega_e: f64,
        fit_window: DateRange,
        n_train_cases: usize,
    ) -> Result<Self> {
        Self::new(
            GroupScheme::ThreeGroup,
            link,
            vec![omega_c, omega_o, omega_e],
            fit_window,
            n_train_cases,
        )
    }

    pub fn scheme(&self) -> GroupScheme {
        self.scheme
    }

    pub fn link(&self) -> &LinkParams {
        &self.link
    }

    /// Per-member weight for each group, in group order.
    pub fn group_weights(&self) -> &[f64] {
        &self.group_weights
    }

    pub fn per_member_weight(&self, member: usize) -> f64 {
        self.group_weights[self.scheme.group_of(member)]
    }

    pub fn fit_window(&self) -> DateRange {
        self.fit_window
    }

    pub fn n_train_cases(&self) -> usize {
        self.n_train_cases
    }

    /// Predictive mixture for one forecast case: each non-missing member
    /// contributes its group's per-member weight and a floored gamma
    /// component; weights are renormalized over the available members.
    pub fn predictive(&self, case: &ForecastCase) -> Result<PredictiveDist> {
        let components = case_components(self.scheme, &self.group_weights, &self.link, case)?;
        Ok(PredictiveDist { components })
    }
}

/// Weighted gamma components for one case under a (scheme, weights, link)
/// triple: missing members are dropped and the remaining weights
/// renormalized. This is the single source of the per-case mixture, shared
/// by prediction and by the training likelihood.
pub(crate) fn case_components(
    scheme: GroupScheme,
    group_weights: &[f64],
    link: &LinkParams,
    case: &ForecastCase,
) -> Result<Vec<(f64, GammaLaw)>> {
    let mut components = Vec::with_capacity(ENSEMBLE_SIZE);
    let mut total = 0.0;
    for (member, forecast) in case.available_members() {
        let w = group_weights[scheme.group_of(member)];
        total += w;
        components.push((w, link.component(forecast)?));
    }
    if components.is_empty() {
        return Err(Error::EmptyCase);
    }
    if (total - 1.0).abs() <= 1e-12 {
        // complete case: keep the model weights exactly
    } else if total > WEIGHT_TOL {
        for (w, _) in &mut components {
            *w /= total;
        }
    } else {
        // all mass sat on missing members; fall back to equal weights
        let equal = 1.0 / components.len() as f64;
        for (w, _) in &mut components {
            *w = equal;
        }
    }
    Ok(components)
}

/// On-disk JSON layout for [`BmaModel`].
#[derive(Serialize, Deserialize)]
struct ModelRepr {
    scheme: String,
    b0: f64,
    b1: f64,
    c0: f64,
    c1: f64,
    weights: WeightsRepr,
    fit_window: DateRange,
    n_train_cases: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightsRepr {
    Three {
        omega_c: f64,
        omega_o: f64,
        omega_e: f64,
    },
    Two {
        omega: f64,
    },
}

impl From<BmaModel> for ModelRepr {
    fn from(model: BmaModel) -> Self {
        let weights = match model.scheme {
            GroupScheme::TwoGroup => WeightsRepr::Two {
                omega: model.group_weights[0],
            },
            GroupScheme::ThreeGroup => WeightsRepr::Three {
                omega_c: model.group_weights[0],
                omega_o: model.group_weights[1],
                omega_e: model.group_weights[2],
            },
        };
        ModelRepr {
            scheme: model.scheme.as_str().to_string(),
            b0: model.link.b0,
            b1: model.link.b1,
            c0: model.link.c0,
            c1: model.link.c1,
            weights,
            fit_window: model.fit_window,
            n_train_cases: model.n_train_cases,
        }
    }
}

impl TryFrom<ModelRepr> for BmaModel {
    type Error = Error;

    fn try_from(repr: ModelRepr) -> Result<Self> {
        let scheme: GroupScheme = repr.scheme.parse()?;
        let link = LinkParams {
            b0: repr.b0,
            b1: repr.b1,
            c0: repr.c0,
            c1: repr.c1,
        };
        match (scheme, repr.weights) {
            (GroupScheme::TwoGroup, WeightsRepr::Two { omega }) => {
                BmaModel::two_group(link, omega, repr.fit_window, repr.n_train_cases)
            }
            (
                GroupScheme::ThreeGroup,
                WeightsRepr::Three {
                    omega_c,
                    omega_o,
                    omega_e,
                },
            ) => BmaModel::three_group(
                link,
                omega_c,
                omega_o,
                omega_e,
                repr.fit_window,
                repr.n_train_cases,
            ),
            _ => Err(Error::Estimation(
                "weights object does not match scheme".into(),
            )),
        }
    }
}

/// The fitted mixture for one forecast case: one (weight, gamma) pair per
/// available ensemble member, weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDist {
    components: Vec<(f64, GammaLaw)>,
}

impl PredictiveDist {
    /// Build directly from components (test and tooling hook); weights
    /// must sum to 1 within 1e-10.
    pub fn from_components(components: Vec<(f64, GammaLaw)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyCase);
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Estimation(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, GammaLaw)] {
        &self.components
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.components.iter().map(|(w, g)| w * g.pdf(x)).sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.components.iter().map(|(w, g)| w * g.cdf(x)).sum()
    }

    /// Mixture mean: Σ wᵢ·μᵢ.
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|(w, g)| w * g.mean()).sum()
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5).expect("0.5 is a valid probability")
    }

    /// Inverse CDF by bracketed bisection with Newton refinement; the
    /// bracket upper end is the largest component mean + 20·sd, widened
    /// if needed.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain {
                what: "p",
                value: p,
            });
        }
        let mut hi = self
            .components
            .iter()
            .map(|(_, g)| g.mean() + 20.0 * g.sd())
            .fold(f64::MIN, f64::max);
        while self.cdf(hi) < p && hi < 1e300 {
            hi *= 2.0;
        }
        let mut lo = 0.0_f64;
        let mut x = 0.5 * hi;
        let mut best_x = x;
        let mut best_err = f64::INFINITY;
        for _ in 0..200 {
            let f = self.cdf(x) - p;
            if f.abs() < best_err {
                best_err = f.abs();
                best_x = x;
            }
            if f.abs() <= 1e-12 {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= f64::EPSILON * hi.max(1.0) {
                break;
            }
            let slope = self.pdf(x);
            let newton = if slope > 0.0 && slope.is_finite() {
                x - f / slope
            } else {
                f64::NAN
            };
            x = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(best_x)
    }

    /// Central prediction interval: (quantile(α/2), quantile(1−α/2))
    /// with α = 1 − level.
    pub fn central_interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain {
                what: "level",
                value: level,
            });
        }
        let alpha = 1.0 - level;
        let lower = self.quantile(alpha / 2.0)?;
        let upper = self.quantile(1.0 - alpha / 2.0)?;
        Ok((lower, upper))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window() -> DateRange {
        DateRange {
            start: NaiveDate::from_ymd_opt(2010, 10, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2010, 10, 28).unwrap(),
        }
    }

    fn case(control: Option<f64>, perturbed: [Option<f64>; 10]) -> ForecastCase {
        ForecastCase {
            date: NaiveDate::from_ymd_opt(2010, 10, 29).unwrap(),
            station: "Debrecen".into(),
            obs: 3.2,
            control,
            perturbed,
        }
    }

    fn spot_link() -> LinkParams {
        LinkParams {
            b0: 0.0,
            b1: 1.0,
            c0: 0.5,
            c1: 0.0,
        }
    }

    /// The ω = 0.3 two-group case used across the spot checks:
    /// control 4.0, all perturbed members 2.0, link (0, 1, 0.5, 0).
    fn spot_mixture() -> PredictiveDist {
        let model = BmaModel::two_group(spot_link(), 0.3, window(), 1).unwrap();
        model.predictive(&case(Some(4.0), [Some(2.0); 10])).unwrap()
    }

    #[test]
    fn degenerate_weight_reduces_to_control() {
        let model = BmaModel::two_group(spot_link(), 1.0, window(), 1).unwrap();
        let dist = model.predictive(&case(Some(4.0), [Some(2.0); 10])).unwrap();
        let control = GammaLaw::from_mean_sd(4.0, 0.5).unwrap();
        for x in [0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 8.0] {
            assert!((dist.pdf(x) - control.pdf(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_forecasts_collapse_to_one_gamma() {
        let model = BmaModel::two_group(spot_link(), 0.17, window(), 1).unwrap();
        let dist = model.predictive(&case(Some(3.0), [Some(3.0); 10])).unwrap();
        let single = GammaLaw::from_mean_sd(3.0, 0.5).unwrap();
        for x in [0.1, 1.0, 2.5, 3.0, 4.0, 6.0] {
            assert!((dist.pdf(x) - single.pdf(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn pdf_matches_hand_summed_components() {
        let dist = spot_mixture();
        let g1 = GammaLaw::from_mean_sd(4.0, 0.5).unwrap();
        let g2 = GammaLaw::from_mean_sd(2.0, 0.5).unwrap();
        for x in [2.0, 3.0] {
            let by_hand = 0.3 * g1.pdf(x) + 0.7 * g2.pdf(x);
            assert!((dist.pdf(x) - by_hand).abs() < 1e-10);
        }
        assert_eq!(dist.pdf(-0.5), 0.0);
    }

    #[test]
    fn cdf_matches_hand_combined_components() {
        let dist = spot_mixture();
        let g1 = GammaLaw::from_mean_sd(4.0, 0.5).unwrap();
        let g2 = GammaLaw::from_mean_sd(2.0, 0.5).unwrap();
        let by_hand = 0.3 * g1.cdf(3.0) + 0.7 * g2.cdf(3.0);
        assert!((dist.cdf(3.0) - by_hand).abs() < 1e-10);
        assert_eq!(dist.cdf(0.0), 0.0);

        // normalization at a far-right point
        let far = dist
            .components()
            .iter()
            .map(|(_, g)| g.mean() + 50.0 * g.sd())
            .fold(f64::MIN, f64::max);
        assert!(dist.cdf(far) >= 1.0 - 1e-9);
    }

    #[test]
    fn mean_is_linear_in_components() {
        let dist = spot_mixture();
        assert!((dist.mean() - (0.3 * 4.0 + 0.7 * 2.0)).abs() < 1e-12);

        let single =
            PredictiveDist::from_components(vec![(1.0, GammaLaw::from_mean_sd(2.5, 0.3).unwrap())])
                .unwrap();
        assert!((single.mean() - 2.5).abs() < 1e-12);

        // equal-weight components average their means
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let laws: Vec<GammaLaw> = (0..11)
            .map(|_| {
                GammaLaw::from_mean_sd(rng.random_range(0.5..8.0), rng.random_range(0.2..2.0))
                    .unwrap()
            })
            .collect();
        let expected = laws.iter().map(|g| g.mean()).sum::<f64>() / 11.0;
        let dist =
            PredictiveDist::from_components(laws.into_iter().map(|g| (1.0 / 11.0, g)).collect())
                .unwrap();
        assert!((dist.mean() - expected).abs() < 1e-12);
    }

    #[test]
    fn median_and_quantile_self_check() {
        let exp1 =
            PredictiveDist::from_components(vec![(1.0, GammaLaw::new(1.0, 1.0).unwrap())]).unwrap();
        assert!((exp1.median() - std::f64::consts::LN_2).abs() < 1e-9);

        let dist = spot_mixture();
        let v = dist.quantile(0.5).unwrap();
        assert!((dist.cdf(v) - 0.5).abs() < 1e-7);

        // round trip in the bulk
        for x in [1.5, 2.0, 2.5, 3.5, 4.5] {
            let p = dist.cdf(x);
            let back = dist.quantile(p).unwrap();
            assert!((back - x).abs() < 1e-6);
        }

        assert!(dist.quantile(0.0).is_err());
        assert!(dist.quantile(1.2).is_err());
    }

    #[test]
    fn central_interval_brackets_mass() {
        let dist = spot_mixture();
        let (lo, hi) = dist.central_interval(0.9).unwrap();
        assert!(lo < hi);
        assert!((dist.cdf(lo) - 0.05).abs() < 1e-7);
        assert!((dist.cdf(hi) - 0.95).abs() < 1e-7);

        let exp1 =
            PredictiveDist::from_components(vec![(1.0, GammaLaw::new(1.0, 1.0).unwrap())]).unwrap();
        let (lo, hi) = exp1.central_interval(0.667).unwrap();
        let g = GammaLaw::new(1.0, 1.0).unwrap();
        assert!((lo - g.quantile(0.1665).unwrap()).abs() < 1e-7);
        assert!((hi - g.quantile(0.8335).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn missing_members_drop_and_renormalize() {
        let model = BmaModel::two_group(spot_link(), 0.3, window(), 1).unwrap();
        let mut perturbed = [Some(2.0); 10];
        perturbed[2] = None;
        perturbed[7] = None;
        perturbed[9] = None;
        let dist = model.predictive(&case(Some(4.0), perturbed)).unwrap();
        assert_eq!(dist.components().len(), 8);
        let total: f64 = dist.components().iter().map(|(w, _)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // control weight scales up: 0.3 / (0.3 + 7·0.07)
        assert!((dist.components()[0].0 - 0.3 / 0.79).abs() < 1e-12);

        // no missing members: weights equal the model's group weights
        let full = model.predictive(&case(Some(4.0), [Some(2.0); 10])).unwrap();
        assert_eq!(full.components()[0].0, 0.3);
        assert!((full.components()[1].0 - 0.07).abs() < 1e-15);

        let nothing = case(None, [None; 10]);
        assert!(matches!(model.predictive(&nothing), Err(Error::EmptyCase)));
    }

    #[test]
    fn all_weight_on_missing_members_falls_back_to_equal() {
        let model = BmaModel::two_group(spot_link(), 1.0, window(), 1).unwrap();
        let dist = model.predictive(&case(None, [Some(2.0); 10])).unwrap();
        assert_eq!(dist.components().len(), 10);
        for (w, _) in dist.components() {
            assert!((w - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn three_group_with_equal_perturbed_weights_matches_two_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let link = LinkParams {
                b0: rng.random_range(-0.5..1.0),
                b1: rng.random_range(0.5..1.5),
                c0: rng.random_range(0.1..1.0),
                c1: rng.random_range(0.0..0.5),
            };
            let omega = rng.random_range(0.0..1.0);
            let two = BmaModel::two_group(link, omega, window(), 1).unwrap();
            let three = BmaModel::three_group(
                link,
                omega,
                (1.0 - omega) / 10.0,
                (1.0 - omega) / 10.0,
                window(),
                1,
            )
            .unwrap();
            let mut perturbed = [None; 10];
            for slot in &mut perturbed {
                *slot = Some(rng.random_range(0.2..12.0));
            }
            let c = case(Some(rng.random_range(0.2..12.0)), perturbed);
            let p2 = two.predictive(&c).unwrap();
            let p3 = three.predictive(&c).unwrap();
            for _ in 0..20 {
                let x = rng.random_range(0.0..15.0);
                assert!((p2.pdf(x) - p3.pdf(x)).abs() < 1e-12);
                assert!((p2.cdf(x) - p3.cdf(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cdf_nondecreasing_and_pdf_normalized_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            // ranges keep every component shape ≥ 1, so the density is
            // bounded and a trapezoid normalization check is meaningful
            let link = LinkParams {
                b0: rng.random_range(0.3..0.8),
                b1: rng.random_range(0.6..1.4),
                c0: rng.random_range(0.2..0.5),
                c1: rng.random_range(0.0..0.1),
            };
            let omega = rng.random_range(0.0..1.0);
            let model = BmaModel::two_group(link, omega, window(), 1).unwrap();
            let mut perturbed = [None; 10];
            for slot in &mut perturbed {
                *slot = Some(rng.random_range(1.0..10.0));
            }
            let dist = model
                .predictive(&case(Some(rng.random_range(1.0..10.0)), perturbed))
                .unwrap();
            for (_, g) in dist.components() {
                assert!(g.shape() >= 1.0);
            }
            let upper = dist.quantile(1.0 - 1e-9).unwrap();
            let mut prev = 0.0;
            let mut mass = 0.0;
            let n = 4000;
            for i in 0..=n {
                let x = upper * i as f64 / n as f64;
                let c = dist.cdf(x);
                assert!(c >= prev - 1e-14);
                prev = c;
                // trapezoid accumulation for a coarse normalization check
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                mass += w * dist.pdf(x) * upper / n as f64;
            }
            assert!((mass - 1.0).abs() < 1e-3, "trapezoid mass {mass}");
            assert!(prev >= 1.0 - 2e-9);
        }
    }

    #[test]
    fn weight_constraints_are_enforced() {
        let link = spot_link();
        assert!(BmaModel::two_group(link, 1.3, window(), 1).is_err());
        assert!(BmaModel::two_group(link, -0.1, window(), 1).is_err());
        assert!(BmaModel::three_group(link, 0.5, 0.06, 0.05, window(), 1).is_err());
        let ok = BmaModel::three_group(link, 0.5, 0.06, 0.04, window(), 1).unwrap();
        let total: f64 = ok
            .group_weights()
            .iter()
            .zip(ok.scheme().group_sizes())
            .map(|(w, &s)| w * s as f64)
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_json_round_trips_with_exact_field_names() {
        let model = BmaModel::two_group(
            LinkParams {
                b0: 0.3,
                b1: 1.1,
                c0: 0.6,
                c1: 0.2,
            },
            0.4,
            window(),
            280,
        )
        .unwrap();
        let json = serde_json::to_string_pretty(&model).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["scheme"], "two-group");
        assert_eq!(value["b0"], 0.3);
        assert_eq!(value["weights"]["omega"], 0.4);
        assert_eq!(value["fit_window"]["start"], "2010-10-01");
        assert_eq!(value["fit_window"]["end"], "2010-10-28");
        assert_eq!(value["n_train_cases"], 280);
        let back: BmaModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);

        let model3 = BmaModel::three_group(*model.link(), 0.2, 0.1, 0.06, window(), 280).unwrap();
        let json3 = serde_json::to_string(&model3).unwrap();
        let value3: serde_json::Value = serde_json::from_str(&json3).unwrap();
        assert_eq!(value3["scheme"], "three-group");
        assert_eq!(value3["weights"]["omega_o"], 0.1);
        let back3: BmaModel = serde_json::from_str(&json3).unwrap();
        assert_eq!(back3, model3);
    }
}
