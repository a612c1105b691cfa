//! Current-driven loudspeaker on a sealed enclosure, in specific
//! (per unit area) quantities.
//!
//! The front pressure `p_f`, membrane velocity `v` and coil current `i` obey
//! `p_f = Z_ss(s) v + F i`, and the cavity pressure is `p_b = v / (s C_sb)`,
//! where
//!
//! ```text
//! Z_ss(s) = R_ss (s^2 + s w0/Q_ms + w0^2) / (s w0/Q_ms)
//! ```
//!
//! All impedances refer to one reference area. Any consistent choice works
//! (the piston area or the duct section); it only rescales `v`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::rational::RationalTransfer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirProperties {
    /// kg/m^3
    pub rho0: f64,
    /// m/s
    pub c0: f64,
}

impl Default for AirProperties {
    fn default() -> Self {
        Self { rho0: 1.2, c0: 343.0 }
    }
}

impl AirProperties {
    pub fn new(rho0: f64, c0: f64) -> Result<Self> {
        ensure_positive("rho0", rho0)?;
        ensure_positive("c0", c0)?;
        Ok(Self { rho0, c0 })
    }

    /// Characteristic impedance of air, `rho0 * c0` (Pa·s/m).
    pub fn z0(&self) -> f64 {
        self.rho0 * self.c0
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("rho0", self.rho0)?;
        ensure_positive("c0", self.c0)
    }
}

/// Conventional (mechanical) Thiele-Small data plus the enclosure volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawDriverParams {
    /// moving mass, kg
    pub mms: f64,
    /// suspension compliance, m/N
    pub cms: f64,
    /// mechanical resistance, N·s/m
    pub rms: f64,
    /// force factor, T·m
    pub bl: f64,
    /// effective piston area, m^2
    pub sd: f64,
    /// enclosure volume, m^3
    pub vb: f64,
}

impl RawDriverParams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("mms", self.mms)?;
        ensure_positive("cms", self.cms)?;
        ensure_positive("rms", self.rms)?;
        ensure_positive("bl", self.bl)?;
        ensure_positive("sd", self.sd)?;
        ensure_positive("vb", self.vb)
    }
}

/// The five specific parameters that fully describe the plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverModel {
    /// specific resistance, Pa·s/m
    pub rss: f64,
    /// natural angular frequency, rad/s
    pub omega0: f64,
    /// passive quality factor
    pub qms: f64,
    /// pressure factor Bl/Sd, Pa/A
    pub f: f64,
    /// box specific compliance, m/Pa
    pub csb: f64,
    pub air: AirProperties,
}

impl DriverModel {
    pub fn new(rss: f64, omega0: f64, qms: f64, f: f64, csb: f64, air: AirProperties) -> Result<Self> {
        let m = Self { rss, omega0, qms, f, csb, air };
        m.validate()?;
        Ok(m)
    }

    /// Measured parameters of the reference absorber (Monacor SPX-30M on its
    /// cabinet), with rho0 = 1.2 kg/m^3 and c0 = 343 m/s.
    pub fn reference() -> Self {
        let air = AirProperties::default();
        Self {
            rss: 0.6734 * air.z0(),
            omega0: 2.0 * PI * 205.5,
            qms: 5.466,
            f: 1.084e3,
            csb: 1.808e-6,
            air,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("rss", self.rss)?;
        ensure_positive("omega0", self.omega0)?;
        ensure_positive("qms", self.qms)?;
        ensure_positive("f", self.f)?;
        ensure_positive("csb", self.csb)?;
        self.air.validate()
    }

    pub fn f0_hz(&self) -> f64 {
        self.omega0 / (2.0 * PI)
    }

    /// Specific moving mass `M_ss = R_ss Q_ms / w0` (kg/m^2).
    pub fn mss(&self) -> f64 {
        self.rss * self.qms / self.omega0
    }

    /// Combined specific stiffness `K_sc = M_ss w0^2` (Pa/m).
    pub fn ksc(&self) -> f64 {
        self.mss() * self.omega0 * self.omega0
    }

    /// `Z_ss(jω)` evaluated directly.
    pub fn zss_at(&self, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, omega);
        let b = self.omega0 / self.qms;
        self.rss * (s * s + s * b + self.omega0 * self.omega0) / (s * b)
    }
}

/// JSON form with frequencies in Hz.
#[derive(Serialize, Deserialize)]
struct DriverModelJson {
    rss: f64,
    f0_hz: f64,
    qms: f64,
    f_pa_per_a: f64,
    csb_m_per_pa: f64,
    rho0: f64,
    c0: f64,
}

impl Serialize for DriverModel {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        DriverModelJson {
            rss: self.rss,
            f0_hz: self.f0_hz(),
            qms: self.qms,
            f_pa_per_a: self.f,
            csb_m_per_pa: self.csb,
            rho0: self.air.rho0,
            c0: self.air.c0,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DriverModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let j = DriverModelJson::deserialize(de)?;
        let air = AirProperties { rho0: j.rho0, c0: j.c0 };
        DriverModel::new(j.rss, 2.0 * PI * j.f0_hz, j.qms, j.f_pa_per_a, j.csb_m_per_pa, air)
            .map_err(serde::de::Error::custom)
    }
}

/// Specific model of a driver mounted on its enclosure.
///
/// `1/C_mc = 1/C_ms + S_d/C_sb` is the combined mechanical compliance of
/// suspension and cavity.
pub fn derive_specific_model(raw: &RawDriverParams, air: AirProperties) -> Result<DriverModel> {
    raw.validate()?;
    air.validate()?;
    let csb = raw.vb / (air.rho0 * air.c0 * air.c0 * raw.sd);
    let cmc = 1.0 / (1.0 / raw.cms + raw.sd / csb);
    let omega0 = 1.0 / (raw.mms * cmc).sqrt();
    let qms = (raw.mms / cmc).sqrt() / raw.rms;
    DriverModel::new(raw.rms / raw.sd, omega0, qms, raw.bl / raw.sd, csb, air)
}

/// `Z_ss(s)` as a rational transfer.
pub fn passive_impedance(model: &DriverModel) -> RationalTransfer {
    let b = model.omega0 / model.qms;
    let w2 = model.omega0 * model.omega0;
    RationalTransfer::new(
        vec![model.rss, model.rss * b, model.rss * w2],
        vec![b, 0.0],
    )
    .expect("validated model yields a finite transfer")
}

/// `p_b / v = 1 / (s C_sb)`.
pub fn rear_pressure_gain(model: &DriverModel) -> RationalTransfer {
    RationalTransfer::new(vec![1.0], vec![model.csb, 0.0])
        .expect("validated model yields a finite transfer")
}

/// Resistor network of the voltage-controlled current source (Howland type).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentSourceDesign {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    /// Load impedance, ohms. Zero when not given.
    #[serde(default)]
    pub zl: Complex64,
}

impl CurrentSourceDesign {
    /// Values of the prototype pump: R1 = R2 = 92 kΩ, R3 = R4 = 1.1 kΩ, R5 = 1.2 Ω.
    pub fn prototype() -> Self {
        Self {
            r1: 92e3,
            r2: 92e3,
            r3: 1.1e3,
            r4: 1.1e3,
            r5: 1.2,
            zl: Complex64::new(0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("r1", self.r1)?;
        ensure_positive("r2", self.r2)?;
        ensure_positive("r3", self.r3)?;
        ensure_positive("r4", self.r4)?;
        ensure_positive("r5", self.r5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurrentSourceGains {
    /// output current per input volt, A/V
    pub transconductance: f64,
    /// output current per volt across the load, A/V
    pub output_leakage: f64,
}

/// `i_out = g v_in + l v_out`.
pub fn current_source_gains(design: &CurrentSourceDesign) -> Result<CurrentSourceGains> {
    design.validate()?;
    let CurrentSourceDesign { r1, r2, r3, r4, r5, .. } = *design;
    let denom = (r1 + r4) * r2 * r5;
    let leak_num = r1 * r3 - r2 * (r4 + r5);
    Ok(CurrentSourceGains {
        transconductance: (r3 * r4 + r2 * (r4 + r5)) / denom,
        output_leakage: leak_num / denom,
    })
}

/// Current the operational amplifier must deliver for a given output current.
pub fn opamp_current(design: &CurrentSourceDesign, i_out: Complex64) -> Result<Complex64> {
    design.validate()?;
    let CurrentSourceDesign { r1, r3, r5, zl, .. } = *design;
    let d = r1 + r3 - r5;
    if d == 0.0 {
        return Err(Error::SingularDesign("R1 + R3 = R5".into()));
    }
    let ratio = (r3 - r5) / r3 * (r1 + r3 + r5) / d + 2.0 * zl / d;
    Ok(i_out * ratio)
}
