//! Virtual impedance tube with the two-microphone transfer-function method.
//!
//! Coordinates: `x` is the distance from the termination (the absorber)
//! towards the source. The plane-wave field is
//!
//! ```text
//! p(x) = A (e^{-jkx} + Γ e^{jkx})
//! ```
//!
//! microphone 1 sits at `x1` and microphone 2 at `x1 + Δx`, and `H12 = p2/p1`.
//! With this placement the reflection coefficient follows as
//!
//! ```text
//! Γ = (H12 - e^{-jkΔx}) / (e^{jkΔx} - H12) · e^{-2jk x1}
//! ```
//!
//! Duct losses are neglected.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::reflection_coefficient;
use crate::csvio;
use crate::error::{ensure_positive, Error, Result};
use crate::model::AirProperties;

/// Smallest `|e^{jkΔx} - H12|` accepted by the inversion.
pub const DENOMINATOR_TOL: f64 = 1e-12;
/// Smallest `|sin kΔx|` accepted before flagging a spacing resonance.
pub const SPACING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideGeometry {
    /// microphone spacing, m
    pub delta_x: f64,
    /// termination to the nearer microphone, m
    pub x1: f64,
    /// tube length, m
    pub length: f64,
    /// inner diameter, m
    pub diameter: f64,
}

impl WaveguideGeometry {
    /// The tube used with the reference absorber.
    pub fn reference() -> Self {
        Self { delta_x: 0.1, x1: 0.42, length: 0.97, diameter: 0.072 }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("delta_x", self.delta_x)?;
        ensure_positive("x1", self.x1)?;
        ensure_positive("length", self.length)?;
        ensure_positive("diameter", self.diameter)?;
        if self.delta_x >= self.x1 {
            return Err(Error::invalid("delta_x", "must be smaller than x1"));
        }
        if self.x1 + self.delta_x > self.length {
            return Err(Error::invalid("x1", "second microphone would lie outside the tube"));
        }
        Ok(())
    }

    /// Cut-on of the first transverse mode of a circular duct,
    /// `1.841 c0 / (π d)`.
    pub fn plane_wave_limit_hz(&self, air: &AirProperties) -> f64 {
        1.841 * air.c0 / (PI * self.diameter)
    }

    fn check_band(&self, air: &AirProperties, freqs_hz: &[f64]) -> Result<()> {
        let limit = self.plane_wave_limit_hz(air);
        for &f in freqs_hz {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::invalid("freq_hz", format!("must be finite and positive, got {f}")));
            }
            if f >= limit {
                return Err(Error::AbovePlaneWaveLimit { freq_hz: f, limit_hz: limit });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoMicMeasurement {
    pub freqs_hz: Vec<f64>,
    pub h12: Vec<Complex64>,
}

pub const H12_COLUMNS: [&str; 3] = ["freq_hz", "re_h12", "im_h12"];

impl TwoMicMeasurement {
    pub fn new(freqs_hz: Vec<f64>, h12: Vec<Complex64>) -> Result<Self> {
        if freqs_hz.len() != h12.len() {
            return Err(Error::invalid("h12", "frequency and transfer lengths differ"));
        }
        if freqs_hz.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::invalid("freqs_hz", "frequencies must be finite and positive"));
        }
        Ok(Self { freqs_hz, h12 })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        csvio::write_table(
            out,
            &H12_COLUMNS,
            self.freqs_hz.iter().zip(&self.h12).map(|(f, h)| vec![*f, h.re, h.im]),
        )
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let cols = csvio::read_table(input, &H12_COLUMNS)?;
        let h = cols[1].iter().zip(&cols[2]).map(|(re, im)| Complex64::new(*re, *im)).collect();
        Self::new(cols[0].clone(), h).map_err(|e| Error::Format(e.to_string()))
    }
}

fn wavenumber(f_hz: f64, air: &AirProperties) -> f64 {
    2.0 * PI * f_hz / air.c0
}

/// Field shape `e^{-jkx} + Γ e^{jkx}` at unit incident amplitude.
fn field(k: f64, gamma: Complex64, x: f64) -> Complex64 {
    Complex64::from_polar(1.0, -k * x) + gamma * Complex64::from_polar(1.0, k * x)
}

/// Microphone pressures for one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicPressures {
    pub p1: Complex64,
    pub p2: Complex64,
}

/// `H12` for a termination impedance spectrum (`z_term[i]` at `freqs_hz[i]`).
/// An infinite impedance models a rigid wall.
pub fn simulate_two_mic(
    freqs_hz: &[f64],
    z_term: &[Complex64],
    geom: &WaveguideGeometry,
    air: &AirProperties,
) -> Result<TwoMicMeasurement> {
    Ok(simulate_two_mic_with_amplitude(freqs_hz, z_term, geom, air, Complex64::new(1.0, 0.0))?.0)
}

/// As [`simulate_two_mic`], also returning the microphone pressures for an
/// incident wave of complex amplitude `amplitude`. The transfer function is
/// formed from the unit-amplitude field, so it does not depend on
/// `amplitude` at all.
pub fn simulate_two_mic_with_amplitude(
    freqs_hz: &[f64],
    z_term: &[Complex64],
    geom: &WaveguideGeometry,
    air: &AirProperties,
    amplitude: Complex64,
) -> Result<(TwoMicMeasurement, Vec<MicPressures>)> {
    geom.validate()?;
    if freqs_hz.len() != z_term.len() {
        return Err(Error::invalid("z_term", "one impedance per frequency is required"));
    }
    geom.check_band(air, freqs_hz)?;
    let mut h12 = Vec::with_capacity(freqs_hz.len());
    let mut mics = Vec::with_capacity(freqs_hz.len());
    for (&f, &z) in freqs_hz.iter().zip(z_term) {
        let gamma = reflection_coefficient(z, air)?;
        let k = wavenumber(f, air);
        let u1 = field(k, gamma, geom.x1);
        let u2 = field(k, gamma, geom.x1 + geom.delta_x);
        h12.push(u2 / u1);
        mics.push(MicPressures { p1: amplitude * u1, p2: amplitude * u2 });
    }
    Ok((TwoMicMeasurement::new(freqs_hz.to_vec(), h12)?, mics))
}

/// Adds complex Gaussian noise of relative size `rel` to each `H12`
/// sample, standing in for the error of a spectral transfer estimate.
pub fn add_h12_noise(meas: &TwoMicMeasurement, rel: f64, seed: u64) -> TwoMicMeasurement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h12 = meas
        .h12
        .iter()
        .map(|&h| {
            let n1: f64 = StandardNormal.sample(&mut rng);
            let n2: f64 = StandardNormal.sample(&mut rng);
            h + Complex64::new(n1, n2) * (rel * h.norm() / 2f64.sqrt())
        })
        .collect();
    TwoMicMeasurement { freqs_hz: meas.freqs_hz.clone(), h12 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Singularity {
    /// `kΔx` is a multiple of π: both microphones see the same field
    SpacingResonance,
    /// `H12` coincides with `e^{jkΔx}`
    Denominator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveredSample {
    pub freq_hz: f64,
    /// `None` at flagged frequencies
    pub gamma: Option<Complex64>,
    /// `rho0 c0 (1 + Γ)/(1 - Γ)`; infinite real part for `Γ = 1`
    pub impedance: Option<Complex64>,
    pub flag: Option<Singularity>,
}

impl RecoveredSample {
    pub fn absorption(&self) -> Option<f64> {
        self.gamma.map(|g| 1.0 - g.norm_sqr())
    }
}

/// Impedance with reflection coefficient `gamma`.
pub fn impedance_from_reflection(gamma: Complex64, air: &AirProperties) -> Complex64 {
    let d = 1.0 - gamma;
    if d.norm() == 0.0 {
        return Complex64::new(f64::INFINITY, 0.0);
    }
    air.z0() * (1.0 + gamma) / d
}

pub fn recover_reflection(
    meas: &TwoMicMeasurement,
    geom: &WaveguideGeometry,
    air: &AirProperties,
) -> Result<Vec<RecoveredSample>> {
    geom.validate()?;
    Ok(meas
        .freqs_hz
        .iter()
        .zip(&meas.h12)
        .map(|(&f, &h)| {
            let k = wavenumber(f, air);
            let a = Complex64::from_polar(1.0, -k * geom.delta_x);
            let b = Complex64::from_polar(1.0, k * geom.delta_x);
            let flagged = |flag| RecoveredSample { freq_hz: f, gamma: None, impedance: None, flag: Some(flag) };
            if (k * geom.delta_x).sin().abs() < SPACING_TOL {
                return flagged(Singularity::SpacingResonance);
            }
            let den = b - h;
            if den.norm() < DENOMINATOR_TOL {
                return flagged(Singularity::Denominator);
            }
            let gamma = (h - a) / den * Complex64::from_polar(1.0, -2.0 * k * geom.x1);
            RecoveredSample {
                freq_hz: f,
                gamma: Some(gamma),
                impedance: Some(impedance_from_reflection(gamma, air)),
                flag: None,
            }
        })
        .collect())
}

/// `|∂Γ/∂H12|` at a given transfer value: `|b - a| / |b - H12|^2` with
/// `a = e^{-jkΔx}`, `b = e^{jkΔx}`.
pub fn noise_amplification(f_hz: f64, h12: Complex64, geom: &WaveguideGeometry, air: &AirProperties) -> f64 {
    let k = wavenumber(f_hz, air);
    let a = Complex64::from_polar(1.0, -k * geom.delta_x);
    let b = Complex64::from_polar(1.0, k * geom.delta_x);
    (b - a).norm() / (b - h12).norm_sqr()
}

/// Noise amplification of the inversion for an anechoic termination,
/// `1 / (2 |sin kΔx|)`. Diverges towards DC and at spacing resonances.
pub fn conditioning_report(geom: &WaveguideGeometry, air: &AirProperties, freqs_hz: &[f64]) -> Vec<f64> {
    freqs_hz
        .iter()
        .map(|&f| {
            let k = wavenumber(f, air);
            noise_amplification(f, Complex64::from_polar(1.0, -k * geom.delta_x), geom, air)
        })
        .collect()
}
