//! Discrete-time realization of the controller and sampled closed-loop
//! simulation.

pub mod biquad;
pub mod discretize;
pub mod sim;

pub use biquad::{sos_partition, BiquadSection, SosCascade};
pub use discretize::{bilinear_discretize, discretize, response_error, Warping};
pub use sim::{
    closed_loop_sim, measure_impedance_sine, measure_impedance_sweep, predicted_impedance, Controller,
    Hold, LoopConfig, SineMeasurement, TimeSeries,
};
