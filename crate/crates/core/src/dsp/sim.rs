//! Sampled controller driving the continuous plant.
//!
//! The front pressure is imposed by the excitation; the controller samples it
//! together with the rear pressure `ξ/Csb` and produces the coil current.
//! Between samples the current is held (first or zero order) while RK4
//! integrates `Mss v' = p_f - Rss v - Ksc ξ - F i`, `ξ' = v`.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::biquad::SosCascade;
use super::discretize::{discretize, Warping};
use crate::csvio;
use crate::error::{ensure_positive, Error, Result};
use crate::model::DriverModel;
use crate::synthesis::ControllerPair;

/// Discrete controller `i = D^L (H1 p_f + H2 p_b)` with an `L`-sample
/// output delay.
#[derive(Debug, Clone)]
pub struct Controller {
    pub h1: SosCascade,
    pub h2: SosCascade,
    latency: usize,
    delay: VecDeque<f64>,
}

impl Controller {
    pub fn new(h1: SosCascade, h2: SosCascade, latency: usize) -> Result<Self> {
        if h1.fs_hz != h2.fs_hz {
            return Err(Error::invalid("fs_hz", "H1 and H2 run at different rates"));
        }
        Ok(Self { h1, h2, latency, delay: VecDeque::from(vec![0.0; latency]) })
    }

    /// Discretizes a synthesized pair.
    pub fn from_pair(pair: &ControllerPair, fs_hz: f64, warping: Warping, latency: usize) -> Result<Self> {
        Self::new(discretize(&pair.h1, fs_hz, warping)?, discretize(&pair.h2, fs_hz, warping)?, latency)
    }

    /// No control current at all.
    pub fn open(fs_hz: f64) -> Self {
        Self { h1: SosCascade::zero(fs_hz), h2: SosCascade::zero(fs_hz), latency: 0, delay: VecDeque::new() }
    }

    pub fn fs_hz(&self) -> f64 {
        self.h1.fs_hz
    }

    pub fn latency(&self) -> usize {
        self.latency
    }

    /// Consumes one pair of pressure samples and returns the current for
    /// this sample instant.
    #[inline]
    pub fn step(&mut self, pf: f64, pb: f64) -> f64 {
        let y = self.h1.process(pf) + self.h2.process(pb);
        if self.latency == 0 {
            return y;
        }
        self.delay.push_back(y);
        self.delay.pop_front().unwrap_or(0.0)
    }

    /// Current that the next call to [`step`](Self::step) will return, when
    /// it does not depend on that call's inputs (latency ≥ 1).
    pub fn pending(&self) -> Option<f64> {
        self.delay.front().copied()
    }

    pub fn process_block(&mut self, pf: &[f64], pb: &[f64], out: &mut [f64]) {
        assert!(pf.len() == pb.len() && pb.len() == out.len(), "block lengths differ");
        for ((x1, x2), y) in pf.iter().zip(pb).zip(out) {
            *y = self.step(*x1, *x2);
        }
    }

    pub fn reset(&mut self) {
        self.h1.reset();
        self.h2.reset();
        self.delay.iter_mut().for_each(|d| *d = 0.0);
    }

    /// Frequency response of the whole controller path from `p_f` and `p_b`,
    /// including the delay and the hold.
    pub fn path_response(&self, f_hz: f64, hold: Hold) -> (Complex64, Complex64) {
        let d = hold_factor(hold, f_hz, self.fs_hz())
            * Complex64::from_polar(1.0, -2.0 * PI * f_hz * self.latency as f64 / self.fs_hz());
        (self.h1.response_hz(f_hz) * d, self.h2.response_hz(f_hz) * d)
    }
}

/// Interpolation of the current between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hold {
    /// linear ramp between consecutive outputs
    #[default]
    Foh,
    /// output held constant until the next sample
    Zoh,
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Baseband response of the hold relative to the sample instants.
pub fn hold_factor(hold: Hold, f_hz: f64, fs_hz: f64) -> Complex64 {
    let x = f_hz / fs_hz;
    match hold {
        Hold::Foh => Complex64::new(sinc(x).powi(2), 0.0),
        Hold::Zoh => Complex64::from_polar(sinc(x), -PI * x),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub fs_hz: f64,
    pub latency_samples: usize,
    pub hold: Hold,
    /// transient discarded before measuring
    pub settle_s: f64,
    /// approximate length of the measurement window
    pub window_s: f64,
    /// |v| above this (m/s) is reported as divergence
    pub divergence_limit: f64,
    #[serde(default = "default_warping")]
    pub warping: Warping,
}

fn default_warping() -> Warping {
    Warping::default()
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            fs_hz: 50_000.0,
            latency_samples: 1,
            hold: Hold::Foh,
            settle_s: 0.5,
            window_s: 0.2,
            divergence_limit: 1e3,
            warping: Warping::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("fs_hz", self.fs_hz)?;
        ensure_positive("window_s", self.window_s)?;
        ensure_positive("divergence_limit", self.divergence_limit)?;
        if !(self.settle_s >= 0.0 && self.settle_s.is_finite()) {
            return Err(Error::invalid("settle_s", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub t_s: Vec<f64>,
    pub pf: Vec<f64>,
    pub pb: Vec<f64>,
    pub i: Vec<f64>,
    pub v: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.t_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_s.is_empty()
    }

    fn push(&mut self, t: f64, pf: f64, pb: f64, i: f64, v: f64) {
        self.t_s.push(t);
        self.pf.push(pf);
        self.pb.push(pb);
        self.i.push(i);
        self.v.push(v);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = (0..self.len()).map(|k| vec![self.t_s[k], self.pf[k], self.pb[k], self.i[k], self.v[k]]);
        csvio::write_table(out, &["t_s", "pf_pa", "pb_pa", "i_a", "v_m_per_s"], rows)
    }
}

#[derive(Debug, Clone, Copy)]
struct Plant {
    mss: f64,
    rss: f64,
    ksc: f64,
    f: f64,
    csb: f64,
}

impl Plant {
    fn new(m: &DriverModel) -> Self {
        Self { mss: m.mss(), rss: m.rss, ksc: m.ksc(), f: m.f, csb: m.csb }
    }

    #[inline]
    fn deriv(&self, s: [f64; 2], pf: f64, i: f64) -> [f64; 2] {
        [(pf - self.rss * s[0] - self.ksc * s[1] - self.f * i) / self.mss, s[0]]
    }

    /// One RK4 step with front pressure samples at start, midpoint and end
    /// and a current ramping from `i0` to `i1`.
    #[inline]
    fn rk4(&self, s: [f64; 2], h: f64, pf: [f64; 3], i0: f64, i1: f64) -> [f64; 2] {
        let im = 0.5 * (i0 + i1);
        let k1 = self.deriv(s, pf[0], i0);
        let k2 = self.deriv([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]], pf[1], im);
        let k3 = self.deriv([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]], pf[1], im);
        let k4 = self.deriv([s[0] + h * k3[0], s[1] + h * k3[1]], pf[2], i1);
        [
            s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }
}

/// Runs the loop for `n_samples` sample periods from rest and returns the
/// sampled signals. The controller's latency must match `cfg` only in the
/// sense that its own delay line is used; `cfg.latency_samples` is not
/// applied again here.
pub fn closed_loop_sim<P>(
    model: &DriverModel,
    controller: &mut Controller,
    cfg: &LoopConfig,
    excitation: P,
    n_samples: usize,
) -> Result<TimeSeries>
where
    P: Fn(f64) -> f64,
{
    cfg.validate()?;
    model.validate()?;
    if controller.fs_hz() != cfg.fs_hz {
        return Err(Error::invalid("fs_hz", "controller rate differs from loop rate"));
    }
    let plant = Plant::new(model);
    let h = 1.0 / cfg.fs_hz;
    let implicit = cfg.hold == Hold::Foh && controller.latency() == 0;
    // response to a unit current ramp from rest, used to solve for the
    // current at the end of the step when it depends on that step's state
    let ramp = plant.rk4([0.0, 0.0], h, [0.0; 3], 0.0, 1.0);

    let mut ts = TimeSeries::default();
    let mut s = [0.0, 0.0];
    let mut pf0 = excitation(0.0);
    let mut out = controller.step(pf0, 0.0);
    ts.push(0.0, pf0, 0.0, out, 0.0);
    for k in 0..n_samples {
        let t0 = k as f64 * h;
        let t1 = (k + 1) as f64 * h;
        let pfm = excitation(t0 + 0.5 * h);
        let pf1 = excitation(t1);
        let next = match cfg.hold {
            Hold::Zoh => {
                s = plant.rk4(s, h, [pf0, pfm, pf1], out, out);
                None
            }
            Hold::Foh if !implicit => {
                let i1 = controller.pending().expect("latency >= 1 has a pending output");
                s = plant.rk4(s, h, [pf0, pfm, pf1], out, i1);
                None
            }
            Hold::Foh => {
                let free = plant.rk4(s, h, [pf0, pfm, pf1], out, 0.0);
                let (o1, g1) = controller.h1.peek();
                let (o2, g2) = controller.h2.peek();
                let u = (o1 + o2 + g1 * pf1 + g2 * free[1] / plant.csb) / (1.0 - g2 * ramp[1] / plant.csb);
                s = [free[0] + u * ramp[0], free[1] + u * ramp[1]];
                Some(u)
            }
        };
        if !(s[0].is_finite() && s[1].is_finite()) || s[0].abs() > cfg.divergence_limit {
            return Err(Error::Divergence { time_s: t1 });
        }
        let pb1 = s[1] / plant.csb;
        out = controller.step(pf1, pb1);
        debug_assert!(next.is_none_or(|u| (u - out).abs() <= 1e-9 * (1.0 + u.abs())));
        ts.push(t1, pf1, pb1, out, s[0]);
        pf0 = pf1;
    }
    Ok(ts)
}

/// Least-squares phasor of `x` at `omega` over samples `t`, with a constant
/// term to absorb any offset. `x(t) ≈ Re(X e^{jωt})`.
pub fn fit_phasor(t: &[f64], x: &[f64], omega: f64) -> Complex64 {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for (&tk, &xk) in t.iter().zip(x) {
        let r = Vector3::new((omega * tk).cos(), (omega * tk).sin(), 1.0);
        ata += r * r.transpose();
        atb += r * xk;
    }
    let sol = ata.lu().solve(&atb).unwrap_or_else(Vector3::zeros);
    Complex64::new(sol[0], -sol[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineMeasurement {
    pub freq_hz: f64,
    /// `P_f / V`, Pa·s/m
    pub impedance: Complex64,
    /// phasor of the rear pressure
    pub pb: Complex64,
    /// phasor of the coil current
    pub i: Complex64,
    pub pf: Complex64,
}

/// Drives the loop with a unit sine at `freq_hz`, discards `cfg.settle_s`
/// and fits the steady state over whole periods close to `cfg.window_s`.
pub fn measure_impedance_sine(
    model: &DriverModel,
    controller: &Controller,
    cfg: &LoopConfig,
    freq_hz: f64,
) -> Result<SineMeasurement> {
    ensure_positive("freq_hz", freq_hz)?;
    if freq_hz >= cfg.fs_hz / 10.0 {
        return Err(Error::invalid("freq_hz", "excitation must stay below fs/10"));
    }
    let omega = 2.0 * PI * freq_hz;
    let settle = (cfg.settle_s * cfg.fs_hz).round() as usize;
    let cycles = (cfg.window_s * freq_hz).ceil().max(1.0);
    let window = (cycles / freq_hz * cfg.fs_hz).round() as usize;
    let mut c = controller.clone();
    c.reset();
    let ts = closed_loop_sim(model, &mut c, cfg, |t| (omega * t).sin(), settle + window)?;
    let r = settle..ts.len();
    let t = &ts.t_s[r.clone()];
    let pf = fit_phasor(t, &ts.pf[r.clone()], omega);
    let v = fit_phasor(t, &ts.v[r.clone()], omega);
    Ok(SineMeasurement {
        freq_hz,
        impedance: pf / v,
        pb: fit_phasor(t, &ts.pb[r.clone()], omega),
        i: fit_phasor(t, &ts.i[r], omega),
        pf,
    })
}

/// [`measure_impedance_sine`] at each frequency, in parallel.
pub fn measure_impedance_sweep(
    model: &DriverModel,
    controller: &Controller,
    cfg: &LoopConfig,
    freqs_hz: &[f64],
) -> Result<Vec<SineMeasurement>> {
    freqs_hz.par_iter().map(|&f| measure_impedance_sine(model, controller, cfg, f)).collect()
}

/// Impedance the sampled loop should present, from the controller's
/// discrete responses with delay and hold.
pub fn predicted_impedance(model: &DriverModel, controller: &Controller, hold: Hold, freq_hz: f64) -> Complex64 {
    let omega = 2.0 * PI * freq_hz;
    let (h1, h2) = controller.path_response(freq_hz, hold);
    let s = Complex64::new(0.0, omega);
    (model.zss_at(omega) + model.f * h2 / (s * model.csb)) / (1.0 - model.f * h1)
}
