//! Modelling, synthesis and analysis of an electroacoustic absorber: a
//! closed-box loudspeaker whose coil current is computed from a front and a
//! rear microphone so that the diaphragm presents a chosen acoustic
//! impedance.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod csvio;
pub mod dsp;
pub mod error;
pub mod grid;
pub mod identify;
pub mod model;
pub mod poly;
pub mod rational;
pub mod synthesis;
pub mod vkundt;

pub use analysis::{
    absorption_coefficient, achieved_impedance, monte_carlo_absorption, reflection_coefficient,
    sensitivities, AchievedImpedance, MonteCarloConfig, ParameterEstimates, QuartileBand,
    SensitivityTriple,
};
pub use error::{Error, Result};
pub use model::{AirProperties, DriverModel};
pub use rational::RationalTransfer;
pub use synthesis::{
    stability_report, synthesize_controller, ControllerPair, FeedbackSpec, StabilityReport,
    TargetSpec,
};
