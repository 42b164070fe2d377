//! Simulation toolkit for local-oscillator calibration attacks on
//! continuous-variable QKD with Gaussian modulation and homodyne detection.
//!
//! Eve reshapes the LO pulse so that Bob's power meter reads the nominal
//! value while the homodyne trigger fires late. The detector's integrator
//! has partly discharged, the shot noise drops below the lab calibration,
//! and Alice and Bob underestimate the excess noise added by an
//! intercept-resend attack.
//!
//! | module | contents |
//! |---|---|
//! | [`pulse`] | waveforms, power meter, triggers, detector gain, calibration lines |
//! | [`protocol`] | Alice/Bob sample generation with and without the attack |
//! | [`estimation`] | ML channel estimation and confidence intervals |
//! | [`countermeasure`] | real-time shot-noise monitoring |
//! | [`keyrate`] | asymptotic reverse-reconciliation key rates |
//! | [`scenario`] | config files and end-to-end runs |
//!
//! ```
//! use cvqkd_lo::pulse::{detector_gain, DetectorModel};
//!
//! let det = DetectorModel::reference(0.01);
//! let g = detector_gain(110.0, &det).unwrap();
//! assert!((1.0 / g - 1.5).abs() < 1e-12);
//! ```

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod countermeasure;
pub mod error;
pub mod estimation;
pub mod keyrate;
pub mod protocol;
pub mod pulse;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioReport, Verdict};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pulses.md")]
    mod pulses {}
    #[doc = include_str!("../../../book/src/detector.md")]
    mod detector {}
    #[doc = include_str!("../../../book/src/attack.md")]
    mod attack {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/countermeasures.md")]
    mod countermeasures {}
    #[doc = include_str!("../../../book/src/key-rates.md")]
    mod key_rates {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
