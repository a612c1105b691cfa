//! Target impedance, feedback filter and the two-input controller.
//!
//! The controller drives the coil with `i = H1 p_f + H2 p_b`. To present the
//! target impedance `Z_st` the pair must satisfy
//!
//! ```text
//! H1 + H2 / (s C_sb Z_st) = (1/F) (1 - Z_ss / Z_st)
//! ```
//!
//! The split used here puts a first-order low-pass velocity feedback
//! `G(s) = rho0 c0 k_g w_g / (s + w_g)` into `H2 = s C_sb G / F`, and the
//! remainder into `H1 = (1/F) (1 - (Z_ss + G) / Z_st)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::model::{passive_impedance, AirProperties, DriverModel};
use crate::poly;
use crate::rational::RationalTransfer;

/// One second-order branch of a parallel-resonator target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonator {
    /// Pa·s/m
    pub rst: f64,
    /// rad/s
    pub omega_t: f64,
    pub qt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    resonators: Vec<Resonator>,
}

impl TargetSpec {
    pub fn new(resonators: Vec<Resonator>) -> Result<Self> {
        if resonators.is_empty() {
            return Err(Error::invalid("resonators", "at least one resonator is required"));
        }
        for r in &resonators {
            ensure_positive("rst", r.rst)?;
            ensure_positive("omega_t", r.omega_t)?;
            ensure_positive("qt", r.qt)?;
        }
        Ok(Self { resonators })
    }

    /// Single resonator with `R_st = rst_norm * rho0 c0`.
    pub fn single(air: &AirProperties, rst_norm: f64, f_hz: f64, q: f64) -> Result<Self> {
        Self::from_normalized(air, &[(rst_norm, f_hz, q)])
    }

    /// Branches given as `(R_st / rho0 c0, f_t in Hz, Q_t)`.
    pub fn from_normalized(air: &AirProperties, branches: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(
            branches
                .iter()
                .map(|&(r, f, q)| Resonator { rst: r * air.z0(), omega_t: 2.0 * PI * f, qt: q })
                .collect(),
        )
    }

    pub fn resonators(&self) -> &[Resonator] {
        &self.resonators
    }

    /// `Z_st(jω)` by direct summation of the branch admittances.
    pub fn impedance_at(&self, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, omega);
        let y: Complex64 = self
            .resonators
            .iter()
            .map(|r| {
                let a = r.omega_t / r.qt;
                (s * a / (s * s + s * a + r.omega_t * r.omega_t)) / r.rst
            })
            .sum();
        1.0 / y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackSpec {
    /// dimensionless feedback gain
    pub kg: f64,
    /// low-pass cut-off, rad/s
    pub omega_g: f64,
}

impl FeedbackSpec {
    pub fn new(kg: f64, omega_g: f64) -> Result<Self> {
        let fb = Self { kg, omega_g };
        fb.validate()?;
        Ok(fb)
    }

    pub fn from_hz(kg: f64, fg_hz: f64) -> Result<Self> {
        Self::new(kg, 2.0 * PI * fg_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kg.is_finite() && self.kg >= 0.0) {
            return Err(Error::invalid("kg", format!("must be >= 0, got {}", self.kg)));
        }
        ensure_positive("omega_g", self.omega_g)
    }

    pub fn with_gain(&self, kg: f64) -> Self {
        Self { kg, ..*self }
    }
}

/// Target and feedback settings in their exchange form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpecJson {
    pub resonators: Vec<ResonatorJson>,
    pub kg: f64,
    pub fg_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorJson {
    /// `R_st / (rho0 c0)`
    pub rst_norm: f64,
    pub f_hz: f64,
    pub q: f64,
}

impl ControlSpecJson {
    pub fn to_specs(&self, air: &AirProperties) -> Result<(TargetSpec, FeedbackSpec)> {
        let branches: Vec<_> = self.resonators.iter().map(|r| (r.rst_norm, r.f_hz, r.q)).collect();
        Ok((
            TargetSpec::from_normalized(air, &branches)?,
            FeedbackSpec::from_hz(self.kg, self.fg_hz)?,
        ))
    }

    pub fn from_specs(target: &TargetSpec, fb: &FeedbackSpec, air: &AirProperties) -> Self {
        Self {
            resonators: target
                .resonators()
                .iter()
                .map(|r| ResonatorJson {
                    rst_norm: r.rst / air.z0(),
                    f_hz: r.omega_t / (2.0 * PI),
                    q: r.qt,
                })
                .collect(),
            kg: fb.kg,
            fg_hz: fb.omega_g / (2.0 * PI),
        }
    }
}

/// Target admittance `1/Z_st` as a sum of branch admittances.
pub fn target_admittance(spec: &TargetSpec) -> RationalTransfer {
    spec.resonators.iter().fold(RationalTransfer::zero(), |acc, r| {
        let a = r.omega_t / r.qt;
        let branch = RationalTransfer::new(vec![a / r.rst, 0.0], vec![1.0, a, r.omega_t * r.omega_t])
            .expect("validated resonator");
        acc.add(&branch)
    })
}

/// `Z_st(s)`, the parallel combination of the target resonators.
pub fn target_impedance(spec: &TargetSpec) -> RationalTransfer {
    target_admittance(spec)
        .recip()
        .expect("admittance of a nonempty target is nonzero")
}

/// `G(s) = rho0 c0 k_g w_g / (s + w_g)`.
pub fn feedback_filter(air: &AirProperties, fb: &FeedbackSpec) -> RationalTransfer {
    if fb.kg == 0.0 {
        return RationalTransfer::zero();
    }
    RationalTransfer::new(vec![air.z0() * fb.kg * fb.omega_g], vec![1.0, fb.omega_g])
        .expect("validated feedback spec")
}

/// Asymptotic behaviour of a candidate target impedance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    /// `C` such that `Z ~ 1/(sC)` as `s -> 0`, when the target has that form.
    pub low_frequency_compliance: Option<f64>,
    /// `M` such that `Z ~ sM` as `s -> oo`, when the target has that form.
    pub high_frequency_mass: Option<f64>,
    /// `lim F H1` at DC and at infinity for a feedforward controller; finite
    /// when the target is admissible.
    pub ff_gain_dc: Option<f64>,
    pub ff_gain_hf: Option<f64>,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.low_frequency_compliance.is_some() && self.high_frequency_mass.is_some()
    }

    /// Description of the first violated asymptote.
    pub fn violation(&self) -> Option<&'static str> {
        if self.low_frequency_compliance.is_none() {
            Some("low-frequency asymptote must be a compliance, Z ~ 1/(sC)")
        } else if self.high_frequency_mass.is_none() {
            Some("high-frequency asymptote must be a mass, Z ~ sM")
        } else {
            None
        }
    }
}

/// Checks that `target` behaves as a compliance at low and as a mass at high
/// frequency, the condition for `H1` to stay bounded at both ends.
pub fn check_target_admissibility(model: &DriverModel, target: &RationalTransfer) -> Admissibility {
    let num = target.num();
    let den = target.den();
    let mut out = Admissibility {
        low_frequency_compliance: None,
        high_frequency_mass: None,
        ff_gain_dc: None,
        ff_gain_hf: None,
    };
    if target.is_zero() {
        return out;
    }
    // order of the pole at the origin
    let zn = poly::zeros_at_origin(num);
    let zd = poly::zeros_at_origin(den);
    if zd == zn + 1 {
        let c = den[den.len() - 1 - zd] / num[num.len() - 1 - zn];
        if c > 0.0 {
            out.low_frequency_compliance = Some(c);
        }
    }
    if target.relative_degree() == Some(-1) {
        let m = num[0] / den[0];
        if m > 0.0 {
            out.high_frequency_mass = Some(m);
        }
    }
    // Z_ss ~ 1/(s C_ss) with C_ss = (w0/Q)/(Rss w0^2), and ~ s Mss
    let c_ss = 1.0 / (model.rss * model.qms * model.omega0);
    if let Some(c) = out.low_frequency_compliance {
        out.ff_gain_dc = Some(1.0 - c / c_ss);
    }
    if let Some(m) = out.high_frequency_mass {
        out.ff_gain_hf = Some(1.0 - model.mss() / m);
    }
    out
}

/// Low-frequency compliance and high-frequency mass of a parallel-resonator
/// target, computed from the branch parameters.
pub fn target_asymptotes(spec: &TargetSpec) -> (f64, f64) {
    let compliance = spec.resonators.iter().map(|r| 1.0 / (r.rst * r.omega_t * r.qt)).sum();
    let inv_mass: f64 = spec.resonators.iter().map(|r| r.omega_t / (r.qt * r.rst)).sum();
    (compliance, 1.0 / inv_mass)
}

#[derive(Debug, Clone)]
pub struct ControllerPair {
    /// A/Pa, applied to the front pressure
    pub h1: RationalTransfer,
    /// A/Pa, applied to the cavity pressure
    pub h2: RationalTransfer,
    pub model: DriverModel,
    pub target: TargetSpec,
    pub feedback: FeedbackSpec,
}

impl ControllerPair {
    /// Residual of the design relation at `jω`, relative to `1/F`.
    pub fn constraint_residual(&self, omega: f64) -> f64 {
        let s = Complex64::new(0.0, omega);
        let zst = self.target.impedance_at(omega);
        let zss = self.model.zss_at(omega);
        let lhs = self.h1.eval(omega) + self.h2.eval(omega) / (s * self.model.csb * zst);
        let rhs = (1.0 - zss / zst) / self.model.f;
        (lhs - rhs).norm() * self.model.f
    }
}

/// Builds `(H1, H2)` for `model`, which holds the controller's own estimate
/// of the plant.
pub fn synthesize_controller(
    model: &DriverModel,
    target: &TargetSpec,
    fb: &FeedbackSpec,
) -> Result<ControllerPair> {
    model.validate()?;
    fb.validate()?;
    let zst = target_impedance(target);
    let verdict = check_target_admissibility(model, &zst);
    if let Some(v) = verdict.violation() {
        return Err(Error::InadmissibleTarget(v.into()));
    }

    let g = feedback_filter(&model.air, fb);
    let loaded = passive_impedance(model).add(&g);
    let h1 = RationalTransfer::constant(1.0)
        .sub(&loaded.mul(&target_admittance(target)))
        .scale(1.0 / model.f);
    let h2 = RationalTransfer::s().mul(&g).scale(model.csb / model.f);

    debug_assert!(h1.is_proper() && h2.is_proper());
    if !h1.is_proper() || !h2.is_proper() {
        return Err(Error::InadmissibleTarget("synthesized controller is improper".into()));
    }
    Ok(ControllerPair { h1, h2, model: *model, target: target.clone(), feedback: *fb })
}

/// Closed-loop pole analysis of the velocity feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// coefficients of `s^3 + a s^2 + b s + c`
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// leading principal minors of the Hurwitz matrix
    pub minors: [f64; 3],
    pub poles: [Complex64; 3],
    pub stable: bool,
    /// largest real part among the poles, rad/s
    pub margin: f64,
    /// smallest `k_g` for which the loop stays stable (negative)
    pub kg_lower_bound: f64,
}

#[derive(Serialize)]
struct StabilityReportJson {
    a: f64,
    b: f64,
    c: f64,
    minors: [f64; 3],
    poles: [[f64; 2]; 3],
    stable: bool,
    margin: f64,
    kg_lower_bound: f64,
}

impl Serialize for StabilityReport {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        StabilityReportJson {
            a: self.a,
            b: self.b,
            c: self.c,
            minors: self.minors,
            poles: self.poles.map(|p| [p.re, p.im]),
            stable: self.stable,
            margin: self.margin,
            kg_lower_bound: self.kg_lower_bound,
        }
        .serialize(ser)
    }
}

/// Leading principal minors of the Hurwitz matrix of `s^3 + a s^2 + b s + c`.
pub fn hurwitz_minors(a: f64, b: f64, c: f64) -> [f64; 3] {
    // the 3x3 determinant expands to c (ab - c)
    let m2 = a * b - c;
    [a, m2, c * m2]
}

/// Roots of the monic cubic `s^3 + a s^2 + b s + c`.
pub fn cubic_roots(a: f64, b: f64, c: f64) -> Result<[Complex64; 3]> {
    let r = poly::roots(&[1.0, a, b, c])?;
    let mut out = [Complex64::default(); 3];
    out.copy_from_slice(&r);
    out.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(out)
}

pub fn stability_report(model: &DriverModel, fb: &FeedbackSpec) -> Result<StabilityReport> {
    model.validate()?;
    fb.validate()?;
    let w0 = model.omega0;
    let wg = fb.omega_g;
    let q = model.qms;
    let z0 = model.air.z0();

    let a = w0 / q + wg;
    let b = w0 * w0 + (w0 * wg / q) * (z0 * fb.kg / model.rss + 1.0);
    let c = w0 * w0 * wg;
    let minors = hurwitz_minors(a, b, c);
    let poles = cubic_roots(a, b, c)?;
    let margin = poles.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max);
    let ratio = w0 / wg;
    let kg_lower_bound = -(model.rss / z0) * (1.0 + q * ratio * ratio / (q + ratio));

    Ok(StabilityReport {
        a,
        b,
        c,
        minors,
        poles,
        stable: minors.iter().all(|&m| m > 0.0),
        margin,
        kg_lower_bound,
    })
}

/// Stability report for an arbitrary (possibly negative) feedback gain.
/// [`FeedbackSpec`] rejects `k_g < 0`; this entry point exists to probe the
/// stability boundary.
pub fn stability_report_for_gain(model: &DriverModel, kg: f64, omega_g: f64) -> Result<StabilityReport> {
    let probe = FeedbackSpec { kg: 0.0, omega_g };
    let base = stability_report(model, &probe)?;
    let w0 = model.omega0;
    let b = w0 * w0 + (w0 * omega_g / model.qms) * (model.air.z0() * kg / model.rss + 1.0);
    let minors = hurwitz_minors(base.a, b, base.c);
    let poles = cubic_roots(base.a, b, base.c)?;
    let margin = poles.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        b,
        minors,
        poles,
        stable: minors.iter().all(|&m| m > 0.0),
        margin,
        ..base
    })
}
