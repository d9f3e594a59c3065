//! Calibration of ensemble wind-speed forecasts by Bayesian model
//! averaging with gamma mixture components, plus the scoring and
//! diagnostic tools needed to verify the result.
//!
//! The crate is organized around the forecast workflow:
//!
//! - [`gamma`]: numerically robust gamma primitives in mean/sd form
//! - [`mixture`]: group schemes, fitted models, predictive mixtures
//! - [`estimate`]: bias regression and censored-likelihood EM fitting
//! - [`verify`]: CRPS, MAE/RMSE, rank and PIT histograms, KS test,
//!   interval coverage and width
//! - [`data`]: forecast archives, training windows, synthetic generators
//! - [`pipeline`]: rolling fit-and-score over a date range (data-parallel
//!   with the `parallel` feature, sequential otherwise)

pub mod data;
pub mod error;
pub mod estimate;
pub mod gamma;
pub mod mixture;
pub mod pipeline;
pub mod verify;

pub use data::{Archive, ForecastCase};
pub use error::{Error, Result};
pub use gamma::GammaLaw;
pub use mixture::{BmaModel, GroupScheme, LinkParams, PredictiveDist};
