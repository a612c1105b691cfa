//! Continuous-to-discrete mapping of controller transfers.
//!
//! Every first-order factor `(s - r)` of the transfer is mapped with its own
//! bilinear substitution `s = K (z - 1)/(z + 1)`, `K = 2 fs c`, which sends
//! the root to `q = (K + r)/(K - r)`. With `c = 1` for all factors this is the
//! plain bilinear transform. [`Warping::BandFit`] instead picks one `c` per
//! real root or conjugate pair so that the discrete response matches the
//! continuous one over a band in the least-squares sense; the map still fixes
//! `s = 0` onto `z = 1` and keeps stable roots stable.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::biquad::{sos_partition, SosCascade};
use crate::error::{ensure_positive, Error, Result};
use crate::grid;
use crate::poly::{self, RootGroup};
use crate::rational::RationalTransfer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warping {
    /// plain bilinear transform
    None,
    /// per-factor constants fitted on `points` log-spaced frequencies
    BandFit { lo_hz: f64, hi_hz: f64, points: usize },
}

impl Default for Warping {
    fn default() -> Self {
        Warping::BandFit { lo_hz: 10.0, hi_hz: 1000.0, points: 256 }
    }
}

const MAX_ITER: usize = 50;

/// Bilinear transform `s = 2 fs (z - 1)/(z + 1)` without prewarping.
pub fn bilinear_discretize(ct: &RationalTransfer, fs_hz: f64) -> Result<SosCascade> {
    discretize(ct, fs_hz, Warping::None)
}

/// One group of roots sharing a warping constant.
struct Factor {
    roots: Vec<Complex64>,
    /// +1 for zeros, -1 for poles
    sign: f64,
}

pub fn discretize(ct: &RationalTransfer, fs_hz: f64, warping: Warping) -> Result<SosCascade> {
    ensure_positive("fs_hz", fs_hz)?;
    if !ct.is_proper() {
        return Err(Error::Discretization("transfer is improper".into()));
    }
    if ct.is_zero() {
        return Ok(SosCascade::zero(fs_hz));
    }
    let zeros = ct.zeros()?;
    let poles = ct.poles()?;
    let nyquist = PI * fs_hz;
    if poles.iter().chain(&zeros).any(|r| r.norm() >= nyquist) {
        return Err(Error::Discretization("a root lies beyond the Nyquist frequency".into()));
    }
    let factors: Vec<Factor> = poly::group_conjugates(&zeros)
        .into_iter()
        .map(|g| (g, 1.0))
        .chain(poly::group_conjugates(&poles).into_iter().map(|g| (g, -1.0)))
        .map(|(g, sign): (RootGroup, f64)| Factor { roots: g.members(), sign })
        .collect();

    let c = match warping {
        Warping::None => vec![1.0; factors.len()],
        Warping::BandFit { lo_hz, hi_hz, points } => {
            if !(lo_hz > 0.0 && hi_hz > lo_hz && hi_hz < fs_hz / 2.0 && points >= 2) {
                return Err(Error::invalid("warping", "band must satisfy 0 < lo < hi < fs/2"));
            }
            fit_warping(&factors, fs_hz, &grid::log_spaced(lo_hz, hi_hz, points))?
        }
    };

    let mut zq = Vec::with_capacity(poles.len());
    let mut pq = Vec::with_capacity(poles.len());
    for (f, &ci) in factors.iter().zip(&c) {
        let k = 2.0 * fs_hz * ci;
        for &r in &f.roots {
            let q = (k + r) / (k - r);
            if f.sign > 0.0 {
                zq.push(q);
            } else {
                pq.push(q);
            }
        }
    }
    let gain = ct.leading_gain() * gain_factor(&factors, &c, fs_hz);
    // excess poles become zeros at Nyquist
    zq.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), pq.len() - zq.len()));
    sos_partition(&pq, &zq, gain, fs_hz)
}

/// `Π_zeros (K - r) / Π_poles (K - r)`, real because roots come in
/// conjugate groups.
fn gain_factor(factors: &[Factor], c: &[f64], fs_hz: f64) -> f64 {
    let mut g = Complex64::new(1.0, 0.0);
    for (f, &ci) in factors.iter().zip(c) {
        let k = 2.0 * fs_hz * ci;
        for &r in &f.roots {
            if f.sign > 0.0 {
                g *= k - r;
            } else {
                g /= k - r;
            }
        }
    }
    g.re
}

/// Log-ratio of the discrete to the continuous response and its Jacobian
/// with respect to the warping constants, at one frequency.
fn residual(factors: &[Factor], c: &[f64], fs_hz: f64, omega: f64, jac: &mut [Complex64]) -> Complex64 {
    let t = (omega / (2.0 * fs_hz)).tan();
    let s = Complex64::new(0.0, omega);
    let mut e = Complex64::new(0.0, 0.0);
    for (i, (f, &ci)) in factors.iter().zip(c).enumerate() {
        let sd = Complex64::new(0.0, 2.0 * fs_hz * ci * t);
        let mut d = Complex64::new(0.0, 0.0);
        for &r in &f.roots {
            e += f.sign * ((sd - r) / (s - r)).ln();
            d += f.sign * Complex64::new(0.0, 2.0 * fs_hz * t) / (sd - r);
        }
        jac[i] = d;
    }
    e
}

/// Gauss-Newton fit of the warping constants on the grid `freqs_hz`.
fn fit_warping(factors: &[Factor], fs_hz: f64, freqs_hz: &[f64]) -> Result<Vec<f64>> {
    let n = factors.len();
    let m = freqs_hz.len();
    let mut c = vec![1.0; n];
    let mut jac = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..MAX_ITER {
        let mut a = DMatrix::<f64>::zeros(2 * m, n);
        let mut b = DVector::<f64>::zeros(2 * m);
        for (row, &f) in freqs_hz.iter().enumerate() {
            let e = residual(factors, &c, fs_hz, 2.0 * PI * f, &mut jac);
            b[row] = -e.re;
            b[m + row] = -e.im;
            for (col, d) in jac.iter().enumerate() {
                a[(row, col)] = d.re;
                a[(m + row, col)] = d.im;
            }
        }
        let svd = a.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let step = svd.solve(&b, tol).map_err(|e| Error::Discretization(e.to_string()))?;
        let mut biggest = 0.0f64;
        for (ci, d) in c.iter_mut().zip(step.iter()) {
            *ci += d;
            biggest = biggest.max(d.abs());
        }
        if c.iter().any(|&ci| !(ci.is_finite() && ci > 0.0)) {
            return Err(Error::Discretization("warping fit left the admissible region".into()));
        }
        if biggest < 1e-13 {
            break;
        }
    }
    Ok(c)
}

/// Largest relative magnitude error and phase error (degrees) of `d`
/// against `ct` on `freqs_hz`.
pub fn response_error(ct: &RationalTransfer, d: &SosCascade, freqs_hz: &[f64]) -> (f64, f64) {
    freqs_hz.iter().fold((0.0f64, 0.0f64), |(mag, ph), &f| {
        let hc = ct.eval(2.0 * PI * f);
        let hd = d.response_hz(f);
        if hc.norm() == 0.0 {
            return (mag.max(hd.norm()), ph);
        }
        let r = hd / hc;
        (mag.max((r.norm() - 1.0).abs()), ph.max(r.arg().to_degrees().abs()))
    })
}
