//! Gamma distribution primitives in the mean/standard-deviation
//! parameterization used by the mixture components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A gamma distribution in shape/scale form.
///
/// Mixture components are built through [`GammaLaw::from_mean_sd`], which
/// maps a component mean μ and standard deviation σ to
/// shape = μ²/σ², scale = σ²/μ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLaw {
    shape: f64,
    scale: f64,
}

impl GammaLaw {
    /// Construct from shape and scale. Both must be finite and positive.
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0) {
            return Err(Error::Domain {
                what: "shape",
                value: shape,
            });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain {
                what: "scale",
                value: scale,
            });
        }
        Ok(Self { shape, scale })
    }

    /// Construct from mean and standard deviation (both strictly positive).
    pub fn from_mean_sd(mean: f64, sd: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::Domain {
                what: "mean",
                value: mean,
            });
        }
        if !(sd.is_finite() && sd > 0.0) {
            return Err(Error::Domain {
                what: "sd",
                value: sd,
            });
        }
        Self::new(mean * mean / (sd * sd), sd * sd / mean)
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn sd(&self) -> f64 {
        self.shape.sqrt() * self.scale
    }

    /// Density at `x`. Zero for x < 0. At x = 0 the limit is 0 for
    /// shape > 1, the exponential rate 1/scale for shape = 1, and +∞ for
    /// shape < 1 (integrable singularity).
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            return if self.shape > 1.0 {
                0.0
            } else if self.shape == 1.0 {
                1.0 / self.scale
            } else {
                f64::INFINITY
            };
        }
        let t = x / self.scale;
        ((self.shape - 1.0) * t.ln() - t - ln_gamma(self.shape)).exp() / self.scale
    }

    /// Cumulative distribution function: the regularized lower incomplete
    /// gamma P(shape, x/scale). Zero for x ≤ 0.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        reg_lower_gamma(self.shape, x / self.scale)
    }

    /// Inverse CDF for p in (0,1), solved by bracketed Newton iteration
    /// with bisection fallback. The initial bracket [0, mean + 20·sd] is
    /// widened geometrically when it does not yet enclose p.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain {
                what: "p",
                value: p,
            });
        }
        let mean = self.mean();
        let sd = self.sd();

        let mut hi = mean + 20.0 * sd;
        while self.cdf(hi) < p && hi < 1e300 {
            hi *= 2.0;
        }
        let mut lo = 0.0_f64;

        let mut x = if self.shape >= 0.5 {
            // Wilson-Hilferty starting point
            let z = norm_quantile(p);
            let a = self.shape;
            let w = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * a.sqrt());
            let guess = a * self.scale * w * w * w;
            if guess.is_finite() && guess > 0.0 && guess < hi {
                guess
            } else {
                0.5 * hi.min(mean + sd)
            }
        } else {
            // Left-tail asymptotic P(a,t) ≈ t^a / Γ(a+1), inverted in log
            // space. A subnormal quantile cannot carry meaningful
            // precision, so it is flushed to zero (underflow marker).
            let u = (p.ln() + ln_gamma(self.shape + 1.0)) / self.shape;
            if u < -700.0 {
                let flushed = u.exp() * self.scale;
                return Ok(if flushed < f64::MIN_POSITIVE {
                    0.0
                } else {
                    flushed
                });
            }
            (u.exp() * self.scale).clamp(f64::MIN_POSITIVE, 0.5 * hi)
        };

        let mut best_x = x;
        let mut best_err = f64::INFINITY;
        for _ in 0..300 {
            let f = self.cdf(x) - p;
            if f.abs() < best_err {
                best_err = f.abs();
                best_x = x;
            }
            if f.abs() <= 1e-14 {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
            let slope = self.pdf(x);
            let newton = if slope.is_finite() && slope > 0.0 {
                x - f / slope
            } else {
                f64::NAN
            };
            x = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else if lo == 0.0 {
                // geometric descent: the target may be many orders of
                // magnitude below the bracket midpoint
                x * 0.125
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(if best_x < f64::MIN_POSITIVE {
            0.0
        } else {
            best_x
        })
    }
}

/// Natural log of the gamma function (Lanczos approximation, Pugh 2004
/// coefficients; ~16 significant digits).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const R: f64 = 10.900511;
    const DK: [f64; 11] = [
        2.485_740_891_387_535_5e-5,
        1.051_423_785_817_219_7,
        -3.456_870_972_220_162_5,
        4.512_277_094_668_948,
        -2.982_852_253_235_766_4,
        1.056_397_115_771_267,
        -1.954_287_731_916_458_7e-1,
        1.709_705_434_044_412e-2,
        -5.719_261_174_043_057e-4,
        4.633_994_733_599_057e-6,
        -2.719_949_084_886_077_2e-9,
    ];
    const LN_2_SQRT_E_OVER_PI: f64 =
        0.620782237635245222345518445781647212251852727902599468363868537;
    const LN_PI: f64 = 1.144729885849400174143427351353058711647294812915311571513623071;

    if x < 0.5 {
        let s = DK
            .iter()
            .enumerate()
            .skip(1)
            .fold(DK[0], |s, (i, &d)| s + d / (i as f64 - x));
        LN_PI
            - (std::f64::consts::PI * x).sin().ln()
            - s.ln()
            - LN_2_SQRT_E_OVER_PI
            - (0.5 - x) * ((0.5 - x + R) / std::f64::consts::E).ln()
    } else {
        let s = DK
            .iter()
            .enumerate()
            .skip(1)
            .fold(DK[0], |s, (i, &d)| s + d / (x + i as f64 - 1.0));
        s.ln() + LN_2_SQRT_E_OVER_PI + (x - 0.5) * ((x - 0.5 + R) / std::f64::consts::E).ln()
    }
}

/// Regularized lower incomplete gamma P(a, x): series expansion for
/// x < a + 1, continued fraction (modified Lentz) otherwise.
pub(crate) fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let ln_pre = a * x.ln() - x - ln_gamma(a);
    if ln_pre < -745.0 {
        // prefactor underflows: essentially all mass on one side
        return if x > a { 1.0 } else { 0.0 };
    }
    // both expansions converge in O(√a) terms when x ≈ a, so the budget
    // must grow with the shape
    let budget = (200.0 + 12.0 * a.sqrt()).min(2e5) as usize;
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..budget {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (ln_pre.exp() * sum).min(1.0)
    } else {
        const FPMIN: f64 = f64::MIN_POSITIVE / f64::EPSILON;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..budget.max(600) {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - ln_pre.exp() * h).clamp(0.0, 1.0)
    }
}

/// Inverse standard normal CDF (Acklam's rational approximation,
/// |relative error| < 1.2e-9). Used only to seed Newton iterations.
fn norm_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
