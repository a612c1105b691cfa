//! Parameter identification from impedance spectra.
//!
//! Three measurements are used: the passive impedance (`i = 0`), the
//! impedance with the proportional loop `i = K1 p_f`, and with `i = K2 p_b`.
//! The passive curve gives `M_ss`, `R_ss`, `K_sc` by linear least squares on
//! `Z = R_ss + j (ω M_ss - K_sc/ω)`; the two probed curves then give `F` and
//! `C_sb`.
//!
//! The estimators absorb the microphone sensitivities: with a front
//! microphone of gain `σ` the force factor comes out as `σ F`, which is what a
//! controller fed by the same microphone needs.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::error::{Error, Result};
use crate::grid;
use crate::model::{AirProperties, DriverModel};

/// Relative singular-value cutoff of the least-squares solve.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredSpectrum {
    omegas: Vec<f64>,
    z: Vec<Complex64>,
}

pub const SPECTRUM_COLUMNS: [&str; 3] = ["freq_hz", "re_z_norm", "im_z_norm"];

impl MeasuredSpectrum {
    pub fn new(omegas: Vec<f64>, z: Vec<Complex64>) -> Result<Self> {
        if omegas.len() != z.len() {
            return Err(Error::invalid("spectrum", "frequency and impedance lengths differ"));
        }
        if omegas.len() < 3 {
            return Err(Error::invalid("spectrum", "at least three samples are required"));
        }
        if !(omegas[0] > 0.0) || omegas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("spectrum", "frequencies must be positive and strictly increasing"));
        }
        if omegas.iter().any(|w| !w.is_finite()) || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("spectrum", "samples must be finite"));
        }
        Ok(Self { omegas, z })
    }

    pub fn from_hz(freqs_hz: &[f64], z: Vec<Complex64>) -> Result<Self> {
        Self::new(freqs_hz.iter().map(|f| 2.0 * PI * f).collect(), z)
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn freqs_hz(&self) -> Vec<f64> {
        self.omegas.iter().map(|w| w / (2.0 * PI)).collect()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        let same = self.len() == other.len()
            && self
                .omegas
                .iter()
                .zip(&other.omegas)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs());
        if same {
            Ok(())
        } else {
            Err(Error::invalid("spectrum", "spectra must share the same frequency grid"))
        }
    }

    /// CSV with impedances normalized by `rho0 c0`.
    pub fn write_csv<W: Write>(&self, out: W, air: &AirProperties) -> Result<()> {
        let z0 = air.z0();
        csvio::write_table(
            out,
            &SPECTRUM_COLUMNS,
            self.omegas
                .iter()
                .zip(&self.z)
                .map(|(w, z)| vec![w / (2.0 * PI), z.re / z0, z.im / z0]),
        )
    }

    pub fn read_csv<R: Read>(input: R, air: &AirProperties) -> Result<Self> {
        let cols = csvio::read_table(input, &SPECTRUM_COLUMNS)?;
        let z0 = air.z0();
        let z = cols[1].iter().zip(&cols[2]).map(|(re, im)| Complex64::new(re * z0, im * z0)).collect();
        Self::from_hz(&cols[0], z).map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeInput {
    /// `i = K p_f`
    Front,
    /// `i = K p_b`
    Rear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeGain {
    /// A/Pa
    pub k: f64,
    pub input: ProbeInput,
}

impl ProbeGain {
    pub fn new(k: f64, input: ProbeInput) -> Result<Self> {
        if !(k.is_finite() && k != 0.0) {
            return Err(Error::invalid("k", "probe gain must be finite and nonzero"));
        }
        Ok(Self { k, input })
    }

    /// `K1 = 0.2 / F`: the probed impedance is `1.25 Z_ss`.
    pub fn default_front(nominal: &DriverModel) -> Self {
        Self { k: 0.2 / nominal.f, input: ProbeInput::Front }
    }

    /// `K2 = R_ss w0 C_sb / F`: the added reactance equals `R_ss` at
    /// resonance, so `|Z2| = √2 |Z_ss|` there.
    pub fn default_rear(nominal: &DriverModel) -> Self {
        Self {
            k: nominal.rss * nominal.omega0 * nominal.csb / nominal.f,
            input: ProbeInput::Rear,
        }
    }

    fn expect(&self, input: ProbeInput) -> Result<()> {
        if self.input == input {
            Ok(())
        } else {
            Err(Error::invalid("probe", format!("expected a {input:?} probe gain")))
        }
    }
}

/// Whether the probe loop closed on `model` stays stable and passive.
///
/// The front loop scales the admittance by `1 - F K1`, which must stay
/// positive. The rear loop adds the stiffness `F K2 / C_sb`; the membrane
/// stays stable while `w0^2 + F K2 (w0/Q)/(R_ss C_sb) > 0`.
pub fn probe_is_stable(model: &DriverModel, probe: &ProbeGain) -> bool {
    match probe.input {
        ProbeInput::Front => 1.0 - model.f * probe.k > 0.0,
        ProbeInput::Rear => {
            let b = model.omega0 / model.qms;
            model.omega0 * model.omega0 + model.f * probe.k * b / (model.rss * model.csb) > 0.0
        }
    }
}

/// Impedance of `model` under `probe`, with the control microphone reading
/// `mic_gain` times the true pressure.
pub fn probed_impedance(model: &DriverModel, probe: &ProbeGain, mic_gain: f64, omega: f64) -> Complex64 {
    let zss = model.zss_at(omega);
    match probe.input {
        ProbeInput::Front => zss / (1.0 - model.f * probe.k * mic_gain),
        ProbeInput::Rear => zss + model.f * probe.k * mic_gain / (Complex64::new(0.0, omega) * model.csb),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassiveFit {
    /// kg/m^2
    pub mss: f64,
    /// Pa·s/m
    pub rss: f64,
    /// Pa/m
    pub ksc: f64,
    /// rad/s
    pub omega0: f64,
    pub qms: f64,
    /// rms of `|Z_fit - Z| / |Z|` over the samples
    pub rel_residual: f64,
}

/// Least-squares fit of `R_ss + j(ω M_ss - K_sc/ω)` to raw samples. Unlike
/// [`fit_passive_params`] this accepts any number of samples, so that
/// under-determined data is reported as an identification error.
pub fn fit_passive_samples(omegas: &[f64], z: &[Complex64]) -> Result<PassiveFit> {
    if omegas.len() != z.len() || omegas.is_empty() {
        return Err(Error::Identification("no samples to fit".into()));
    }
    let n = omegas.len();
    // unknowns [M_ss, R_ss, K_sc]; rows: real parts, then imaginary parts
    let mut a = DMatrix::<f64>::zeros(2 * n, 3);
    let mut b = DVector::<f64>::zeros(2 * n);
    for (i, (&w, v)) in omegas.iter().zip(z).enumerate() {
        a[(i, 1)] = 1.0;
        b[i] = v.re;
        a[(n + i, 0)] = w;
        a[(n + i, 2)] = -1.0 / w;
        b[n + i] = v.im;
    }
    let x = least_squares(a, b)?;
    let (mss, rss, ksc) = (x[0], x[1], x[2]);
    if !(mss > 0.0 && rss > 0.0 && ksc > 0.0) {
        return Err(Error::Identification(format!(
            "fitted parameters are not physical: M_ss = {mss}, R_ss = {rss}, K_sc = {ksc}"
        )));
    }
    let rel_residual = (omegas
        .iter()
        .zip(z)
        .map(|(&w, v)| {
            let fit = Complex64::new(rss, w * mss - ksc / w);
            ((fit - v) / v.norm()).norm_sqr()
        })
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(PassiveFit {
        mss,
        rss,
        ksc,
        omega0: (ksc / mss).sqrt(),
        qms: (mss * ksc).sqrt() / rss,
        rel_residual,
    })
}

pub fn fit_passive_params(passive: &MeasuredSpectrum) -> Result<PassiveFit> {
    fit_passive_samples(&passive.omegas, &passive.z)
}

/// Minimum-norm least squares through an SVD of the column-equilibrated
/// matrix; fails when the numerical rank is below the number of unknowns.
fn least_squares(mut a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let cols = a.ncols();
    let mut scale = vec![1.0; cols];
    for (j, s) in scale.iter_mut().enumerate() {
        let norm = a.column(j).norm();
        if norm > 0.0 {
            *s = 1.0 / norm;
            a.column_mut(j).scale_mut(*s);
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = RANK_TOL * smax;
    let rank = svd.rank(tol);
    if smax == 0.0 || rank < cols {
        return Err(Error::Identification(format!(
            "rank-deficient design matrix (rank {rank} of {cols})"
        )));
    }
    let y = svd
        .solve(&b, tol)
        .map_err(|e| Error::Identification(e.to_string()))?;
    Ok(DVector::from_iterator(cols, y.iter().zip(&scale).map(|(v, s)| v * s)))
}

/// An estimate taken as the real part of an averaged complex quotient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuotientEstimate {
    pub value: f64,
    /// imaginary part of the average, relative to its real part
    pub imag_residual: f64,
}

fn mean_quotient(terms: impl Iterator<Item = Complex64>, what: &str) -> Result<QuotientEstimate> {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut n = 0usize;
    for t in terms {
        if !t.is_finite() {
            return Err(Error::Identification(format!("{what}: zero denominator")));
        }
        sum += t;
        n += 1;
    }
    let mean = sum / n as f64;
    if !(mean.re > 0.0) {
        return Err(Error::Identification(format!("{what}: non-positive estimate {}", mean.re)));
    }
    Ok(QuotientEstimate { value: mean.re, imag_residual: mean.im / mean.re })
}

/// `F̂ = Re mean((1 - Z_ss/Z_1) / K1)`.
pub fn estimate_force_factor(
    passive: &MeasuredSpectrum,
    probed: &MeasuredSpectrum,
    k1: &ProbeGain,
) -> Result<QuotientEstimate> {
    k1.expect(ProbeInput::Front)?;
    passive.same_grid(probed)?;
    if probed.z.iter().any(|z| z.norm() == 0.0) {
        return Err(Error::Identification("probed impedance has a zero sample".into()));
    }
    mean_quotient(
        passive.z.iter().zip(&probed.z).map(|(zss, z1)| (1.0 - zss / z1) / k1.k),
        "force factor",
    )
}

/// `Ĉ_sb = Re mean((F̂ K2 / jω) / (Z_2 - Z_ss))`.
pub fn estimate_box_compliance(
    passive: &MeasuredSpectrum,
    probed: &MeasuredSpectrum,
    k2: &ProbeGain,
    f_hat: f64,
) -> Result<QuotientEstimate> {
    k2.expect(ProbeInput::Rear)?;
    passive.same_grid(probed)?;
    if passive.z.iter().zip(&probed.z).any(|(a, b)| a == b) {
        return Err(Error::Identification("probed and passive impedances coincide".into()));
    }
    mean_quotient(
        passive
            .omegas
            .iter()
            .zip(passive.z.iter().zip(&probed.z))
            .map(|(&w, (zss, z2))| (f_hat * k2.k / Complex64::new(0.0, w)) / (z2 - zss)),
        "box compliance",
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentificationReport {
    pub model: DriverModel,
    pub passive_fit: PassiveFit,
    pub force_factor: QuotientEstimate,
    pub box_compliance: QuotientEstimate,
}

/// Runs the three identification steps.
pub fn identify_model(
    passive: &MeasuredSpectrum,
    front: (&MeasuredSpectrum, &ProbeGain),
    rear: (&MeasuredSpectrum, &ProbeGain),
    air: AirProperties,
) -> Result<IdentificationReport> {
    let fit = fit_passive_params(passive)?;
    let force_factor = estimate_force_factor(passive, front.0, front.1)?;
    let box_compliance = estimate_box_compliance(passive, rear.0, rear.1, force_factor.value)?;
    let model = DriverModel::new(fit.rss, fit.omega0, fit.qms, force_factor.value, box_compliance.value, air)?;
    Ok(IdentificationReport { model, passive_fit: fit, force_factor, box_compliance })
}

/// Passive and probed spectra generated from a model.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraTriple {
    pub passive: MeasuredSpectrum,
    pub front: MeasuredSpectrum,
    pub rear: MeasuredSpectrum,
    pub k1: ProbeGain,
    pub k2: ProbeGain,
}

/// Noiseless spectra of `model` on `freqs_hz`, with perfect microphones.
pub fn synthesize_spectra(model: &DriverModel, freqs_hz: &[f64], k1: ProbeGain, k2: ProbeGain) -> Result<SpectraTriple> {
    synthesize_spectra_with_mics(model, freqs_hz, k1, k2, (1.0, 1.0))
}

/// As [`synthesize_spectra`], with control-microphone gains
/// `(front, rear)` applied inside the probe loops.
pub fn synthesize_spectra_with_mics(
    model: &DriverModel,
    freqs_hz: &[f64],
    k1: ProbeGain,
    k2: ProbeGain,
    mic_gains: (f64, f64),
) -> Result<SpectraTriple> {
    k1.expect(ProbeInput::Front)?;
    k2.expect(ProbeInput::Rear)?;
    for p in [&k1, &k2] {
        if !probe_is_stable(model, p) {
            return Err(Error::invalid("probe", format!("{:?} probe gain {} destabilizes the loop", p.input, p.k)));
        }
    }
    let omegas: Vec<f64> = freqs_hz.iter().map(|f| 2.0 * PI * f).collect();
    let sample = |f: &dyn Fn(f64) -> Complex64| MeasuredSpectrum::new(omegas.clone(), omegas.iter().map(|&w| f(w)).collect());
    Ok(SpectraTriple {
        passive: sample(&|w| model.zss_at(w))?,
        front: sample(&|w| probed_impedance(model, &k1, mic_gains.0, w))?,
        rear: sample(&|w| probed_impedance(model, &k2, mic_gains.1, w))?,
        k1,
        k2,
    })
}

/// Default identification band: 170 to 250 Hz in 1 Hz steps.
pub fn default_band_hz() -> Vec<f64> {
    grid::stepped(170.0, 250.0, 1.0)
}

/// Adds complex Gaussian noise of relative size `rel` to every sample:
/// `z + rel |z| (n1 + j n2)/√2` with standard normal `n1`, `n2`.
pub fn add_noise(spec: &MeasuredSpectrum, rel: f64, seed: u64) -> MeasuredSpectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = spec
        .z
        .iter()
        .map(|&z| {
            let n1: f64 = StandardNormal.sample(&mut rng);
            let n2: f64 = StandardNormal.sample(&mut rng);
            z + Complex64::new(n1, n2) * (rel * z.norm() / 2f64.sqrt())
        })
        .collect();
    MeasuredSpectrum { omegas: spec.omegas.clone(), z }
}
