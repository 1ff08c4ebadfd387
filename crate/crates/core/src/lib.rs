//! Numerical models for practical decoy-state quantum key distribution.
//!
//! The crate is organised bottom-up:
//!
//! * [`core_model`]: coherent-source channel and detection model, presets.
//! * [`pdc_model`]: triggering and entangled parametric down-conversion sources.
//! * [`estimators`]: single-photon yield and error bounds for every decoy method.
//! * [`keyrate`]: one-way key-rate formulas, upper bounds, time-shift analysis.
//! * [`twoway`]: Bell-diagonal algebra, B/P steps, recurrence residue.
//! * [`fluctuation`]: finite-size intervals and pulse-budget optimisation.
//! * [`optimize`]: optimal-intensity conditions, scalar maximisation, reach search.
//! * [`mc_oracle`]: pulse-level Monte Carlo used as an independent check.
//!
//! Every function is pure; values are immutable once built.

pub mod core_model;
pub mod error;
pub mod estimators;
pub mod fluctuation;
pub mod keyrate;
pub mod mc_oracle;
pub mod optimize;
pub mod pdc_model;
pub mod solver;
pub mod twoway;

pub use error::{Error, Result};
