//! Behaviour of the controlled absorber when the controller was designed
//! from imperfect parameter estimates.
//!
//! With `Ẑ_ss`, `F̂`, `Ĉ_sb` the controller's estimates and the unhatted
//! symbols the true plant, the impedance seen at the diaphragm is
//!
//! ```text
//! Z_sa = Z_st (G Ĉ_sb/C_sb + Z_ss F̂/F) / (G + Ẑ_ss + Z_st (F̂/F - 1))
//! ```

mod montecarlo;

pub use montecarlo::{
    monte_carlo_absorption, monte_carlo_absorption_with, quartile_type7, MonteCarloConfig,
    QuartileBand,
};

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;

use crate::csvio;
use crate::error::{ensure_positive, Error, Result};
use crate::model::{AirProperties, DriverModel};
use crate::synthesis::{FeedbackSpec, TargetSpec};

/// The controller's view of the five plant parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParameterEstimates {
    pub rss_hat: f64,
    pub omega0_hat: f64,
    pub qms_hat: f64,
    pub f_hat: f64,
    pub csb_hat: f64,
}

impl ParameterEstimates {
    pub fn exact(model: &DriverModel) -> Self {
        Self {
            rss_hat: model.rss,
            omega0_hat: model.omega0,
            qms_hat: model.qms,
            f_hat: model.f,
            csb_hat: model.csb,
        }
    }

    /// Multiplies each estimate by the matching factor, in the order
    /// `[rss, omega0, qms, f, csb]`.
    pub fn scaled(&self, factors: [f64; 5]) -> Self {
        Self {
            rss_hat: self.rss_hat * factors[0],
            omega0_hat: self.omega0_hat * factors[1],
            qms_hat: self.qms_hat * factors[2],
            f_hat: self.f_hat * factors[3],
            csb_hat: self.csb_hat * factors[4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("rss_hat", self.rss_hat)?;
        ensure_positive("omega0_hat", self.omega0_hat)?;
        ensure_positive("qms_hat", self.qms_hat)?;
        ensure_positive("f_hat", self.f_hat)?;
        ensure_positive("csb_hat", self.csb_hat)
    }

    /// The estimates as a plant model, e.g. to synthesize the controller.
    pub fn to_model(&self, air: AirProperties) -> Result<DriverModel> {
        DriverModel::new(self.rss_hat, self.omega0_hat, self.qms_hat, self.f_hat, self.csb_hat, air)
    }

    pub(crate) fn zss_hat_at(&self, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, omega);
        let b = self.omega0_hat / self.qms_hat;
        self.rss_hat * (s * s + s * b + self.omega0_hat * self.omega0_hat) / (s * b)
    }
}

/// Numerator and denominator of the achieved-impedance ratio at one
/// frequency, together with the pieces they are built from.
#[derive(Debug, Clone, Copy)]
struct Terms {
    zst: Complex64,
    zss_hat: Complex64,
    g: Complex64,
    f_ratio: f64,
    /// `G Ĉ/C + Z_ss F̂/F`
    num: Complex64,
    /// `G + Ẑ_ss + Z_st (F̂/F - 1)`
    den: Complex64,
}

/// Pointwise evaluator of the achieved impedance for one design.
#[derive(Debug, Clone)]
pub struct AchievedImpedance {
    truth: DriverModel,
    estimates: ParameterEstimates,
    target: TargetSpec,
    feedback: FeedbackSpec,
}

impl AchievedImpedance {
    pub fn new(
        truth: &DriverModel,
        estimates: &ParameterEstimates,
        target: &TargetSpec,
        feedback: &FeedbackSpec,
    ) -> Result<Self> {
        truth.validate()?;
        estimates.validate()?;
        feedback.validate()?;
        Ok(Self {
            truth: *truth,
            estimates: *estimates,
            target: target.clone(),
            feedback: *feedback,
        })
    }

    pub fn truth(&self) -> &DriverModel {
        &self.truth
    }

    pub fn estimates(&self) -> &ParameterEstimates {
        &self.estimates
    }

    fn terms(&self, omega: f64) -> Terms {
        let s = Complex64::new(0.0, omega);
        let z0 = self.truth.air.z0();
        let g = z0 * self.feedback.kg * self.feedback.omega_g / (s + self.feedback.omega_g);
        let zst = self.target.impedance_at(omega);
        let zss = self.truth.zss_at(omega);
        let zss_hat = self.estimates.zss_hat_at(omega);
        let f_ratio = self.estimates.f_hat / self.truth.f;
        let c_ratio = self.estimates.csb_hat / self.truth.csb;
        Terms {
            zst,
            zss_hat,
            g,
            f_ratio,
            num: g * c_ratio + zss * f_ratio,
            den: g + zss_hat + zst * (f_ratio - 1.0),
        }
    }

    fn check(&self, omega: f64, t: &Terms) -> Result<()> {
        let scale = t.g.norm() + t.zss_hat.norm() + t.zst.norm();
        if !(t.den.norm() > 1e-14 * scale) || !t.num.is_finite() {
            return Err(Error::SingularFrequency { omega, what: "achieved impedance denominator" });
        }
        Ok(())
    }

    /// `Z_sa(jω)`; a vanishing denominator is reported as
    /// [`Error::SingularFrequency`].
    pub fn eval(&self, omega: f64) -> Result<Complex64> {
        let t = self.terms(omega);
        self.check(omega, &t)?;
        Ok(t.zst * t.num / t.den)
    }

    /// Evaluates on a grid in Hz; singular frequencies come back as `None`.
    pub fn sweep(&self, freqs_hz: &[f64]) -> Vec<Option<Complex64>> {
        freqs_hz.iter().map(|&f| self.eval(2.0 * PI * f).ok()).collect()
    }

    /// Reflection coefficient of `Z_sa` against air, computed from the
    /// numerator and denominator so that a pole of `Z_sa` gives `Γ = 1`.
    pub fn reflection(&self, omega: f64) -> Result<Complex64> {
        let t = self.terms(omega);
        let z0 = self.truth.air.z0();
        let a = t.zst * t.num;
        let b = t.den * z0;
        let d = a + b;
        if !(d.norm() > 1e-300) {
            return Err(Error::SingularFrequency { omega, what: "reflection pole" });
        }
        Ok((a - b) / d)
    }

    pub fn absorption(&self, omega: f64) -> Result<f64> {
        Ok(1.0 - self.reflection(omega)?.norm_sqr())
    }

    /// Relative sensitivities of `Z_sa` to `Ẑ_ss`, `F̂` and `Ĉ_sb` at `jω`.
    pub fn sensitivities(&self, omega: f64) -> Result<SensitivityTriple> {
        let t = self.terms(omega);
        self.check(omega, &t)?;
        if !(t.num.norm() > 0.0) {
            return Err(Error::SingularFrequency { omega, what: "achieved impedance vanishes" });
        }
        let c_ratio = self.estimates.csb_hat / self.truth.csb;
        let zss = self.truth.zss_at(omega);
        Ok(SensitivityTriple {
            s_zss: -t.zss_hat / t.den,
            s_f: zss * t.f_ratio / t.num - t.zst * t.f_ratio / t.den,
            s_csb: t.g * c_ratio / t.num,
        })
    }
}

/// Achieved impedance for a design; see [`AchievedImpedance`].
pub fn achieved_impedance(
    truth: &DriverModel,
    estimates: &ParameterEstimates,
    target: &TargetSpec,
    feedback: &FeedbackSpec,
) -> Result<AchievedImpedance> {
    AchievedImpedance::new(truth, estimates, target, feedback)
}

/// Relative sensitivities `S_x = (∂Z_sa/∂x)(x/Z_sa)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityTriple {
    pub s_zss: Complex64,
    pub s_f: Complex64,
    pub s_csb: Complex64,
}

pub fn sensitivities(
    truth: &DriverModel,
    estimates: &ParameterEstimates,
    target: &TargetSpec,
    feedback: &FeedbackSpec,
    omega: f64,
) -> Result<SensitivityTriple> {
    AchievedImpedance::new(truth, estimates, target, feedback)?.sensitivities(omega)
}

/// One row per frequency; `None` marks a singular frequency.
pub fn sensitivity_sweep(za: &AchievedImpedance, freqs_hz: &[f64]) -> Vec<(f64, Option<SensitivityTriple>)> {
    freqs_hz
        .iter()
        .map(|&f| (f, za.sensitivities(2.0 * PI * f).ok()))
        .collect()
}

pub const SENSITIVITY_COLUMNS: [&str; 7] = [
    "freq_hz", "re_s_zss", "im_s_zss", "re_s_f", "im_s_f", "re_s_csb", "im_s_csb",
];

/// CSV export of a sensitivity sweep. Singular rows are written as NaN.
pub fn write_sensitivity_csv<W: Write>(out: W, rows: &[(f64, Option<SensitivityTriple>)]) -> Result<()> {
    csvio::write_table(
        out,
        &SENSITIVITY_COLUMNS,
        rows.iter().map(|(f, s)| match s {
            Some(s) => vec![*f, s.s_zss.re, s.s_zss.im, s.s_f.re, s.s_f.im, s.s_csb.re, s.s_csb.im],
            None => {
                let mut r = vec![f64::NAN; 7];
                r[0] = *f;
                r
            }
        }),
    )
}

/// Impedance of the loop `p_f = Z_ss v + F i`, `i = H1 p_f + H2 p_b`,
/// `p_b = v/(s C_sb)`, given the controller responses at `jω`.
pub fn closed_loop_impedance(truth: &DriverModel, h1: Complex64, h2: Complex64, omega: f64) -> Result<Complex64> {
    let s = Complex64::new(0.0, omega);
    let den = 1.0 - truth.f * h1;
    if !(den.norm() > 1e-14) {
        return Err(Error::SingularFrequency { omega, what: "1 - F H1" });
    }
    Ok((truth.zss_at(omega) + truth.f * h2 / (s * truth.csb)) / den)
}

/// `Γ = (z - rho0 c0)/(z + rho0 c0)`. An infinite `z` (rigid wall) gives 1.
pub fn reflection_coefficient(z: Complex64, air: &AirProperties) -> Result<Complex64> {
    if z.re.is_infinite() || z.im.is_infinite() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    if z.is_nan() {
        return Err(Error::invalid("z", "impedance is NaN"));
    }
    let z0 = air.z0();
    let d = z + z0;
    if !(d.norm() > 1e-15 * z0) {
        return Err(Error::SingularFrequency { omega: f64::NAN, what: "z = -rho0 c0" });
    }
    Ok((z - z0) / d)
}

/// Normal-incidence absorption `1 - |Γ|^2`. Negative for active
/// (non-passive) impedances, never above 1.
pub fn absorption_coefficient(z: Complex64, air: &AirProperties) -> Result<f64> {
    Ok(1.0 - reflection_coefficient(z, air)?.norm_sqr())
}

/// Reads a sensitivity CSV back (used for round-trip checks).
pub fn read_sensitivity_csv<R: Read>(input: R) -> Result<Vec<(f64, Option<SensitivityTriple>)>> {
    let cols = csvio::read_table(input, &SENSITIVITY_COLUMNS)?;
    Ok((0..cols[0].len())
        .map(|i| {
            let c = |k: usize| cols[k][i];
            let s = if c(1).is_nan() {
                None
            } else {
                Some(SensitivityTriple {
                    s_zss: Complex64::new(c(1), c(2)),
                    s_f: Complex64::new(c(3), c(4)),
                    s_csb: Complex64::new(c(5), c(6)),
                })
            };
            (c(0), s)
        })
        .collect())
}
