//! Monte-Carlo spread of the achieved absorption under random estimate
//! errors.
//!
//! Each draw multiplies the five estimates by independent `N(1, σ²)`
//! factors, redrawing any factor that comes out non-positive. Draw `k` uses
//! its own ChaCha8 stream (`seed`, stream `k`), so the result does not depend
//! on how the work is split across threads.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{absorption_coefficient, ParameterEstimates};
use crate::csvio;
use crate::error::{Error, Result};
use crate::grid;
use crate::model::DriverModel;
use crate::synthesis::{FeedbackSpec, TargetSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub n_draws: usize,
    pub rel_std: f64,
    pub seed: u64,
    pub freqs_hz: Vec<f64>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_draws: 100_000,
            rel_std: 0.05,
            seed: 0,
            freqs_hz: grid::stepped(10.0, 1000.0, 2.0),
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::invalid("n_draws", "must be at least 1"));
        }
        if !(self.rel_std >= 0.0 && self.rel_std < 0.2) {
            return Err(Error::invalid("rel_std", format!("must be in [0, 0.2), got {}", self.rel_std)));
        }
        if self.freqs_hz.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::invalid("freqs_hz", "frequencies must be finite and positive"));
        }
        Ok(())
    }
}

/// First and third quartiles of the achieved absorption per frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct QuartileBand {
    pub freqs_hz: Vec<f64>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
    /// absorption of the target itself
    pub nominal: Vec<f64>,
}

pub const QUARTILE_COLUMNS: [&str; 4] = ["freq_hz", "alpha_q1", "alpha_q3", "alpha_nominal"];

impl QuartileBand {
    pub fn width(&self, i: usize) -> f64 {
        self.q3[i] - self.q1[i]
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.freqs_hz.len()).map(|i| self.width(i)).collect()
    }

    /// Index of the grid point closest to `f_hz`.
    pub fn nearest(&self, f_hz: f64) -> Option<usize> {
        (0..self.freqs_hz.len()).min_by(|&a, &b| {
            (self.freqs_hz[a] - f_hz).abs().total_cmp(&(self.freqs_hz[b] - f_hz).abs())
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        csvio::write_table(
            out,
            &QUARTILE_COLUMNS,
            (0..self.freqs_hz.len()).map(|i| vec![self.freqs_hz[i], self.q1[i], self.q3[i], self.nominal[i]]),
        )
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut cols = csvio::read_table(input, &QUARTILE_COLUMNS)?.into_iter();
        let mut next = || cols.next().unwrap_or_default();
        Ok(Self { freqs_hz: next(), q1: next(), q3: next(), nominal: next() })
    }
}

/// Quantile by linear interpolation between order statistics
/// (Hyndman-Fan type 7). Reorders `xs`.
pub fn quartile_type7(xs: &mut [f64], p: f64) -> f64 {
    let n = xs.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let (_, &mut x_lo, upper) = xs.select_nth_unstable_by(lo, f64::total_cmp);
    if lo + 1 >= n {
        return x_lo;
    }
    let x_hi = upper.iter().copied().fold(f64::INFINITY, f64::min);
    x_lo + (h - lo as f64) * (x_hi - x_lo)
}

fn draw_factors<R: Rng>(rng: &mut R, normal: &Normal<f64>) -> [f64; 5] {
    let mut out = [1.0; 5];
    for x in &mut out {
        *x = loop {
            let v = normal.sample(rng);
            if v > 0.0 {
                break v;
            }
        };
    }
    out
}

/// Runs the study with ChaCha8 streams keyed by draw index.
pub fn monte_carlo_absorption(
    model: &DriverModel,
    target: &TargetSpec,
    fb: &FeedbackSpec,
    cfg: &MonteCarloConfig,
) -> Result<QuartileBand> {
    let seed = cfg.seed;
    monte_carlo_absorption_with(model, target, fb, cfg, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k);
        rng
    })
}

/// Same study with a caller-supplied generator per draw index.
pub fn monte_carlo_absorption_with<R, F>(
    model: &DriverModel,
    target: &TargetSpec,
    fb: &FeedbackSpec,
    cfg: &MonteCarloConfig,
    rng_for_draw: F,
) -> Result<QuartileBand>
where
    R: Rng,
    F: Fn(u64) -> R + Sync,
{
    cfg.validate()?;
    model.validate()?;
    fb.validate()?;

    let exact = ParameterEstimates::exact(model);
    let normal = Normal::new(1.0, cfg.rel_std).map_err(|e| Error::invalid("rel_std", e.to_string()))?;
    let draws: Vec<ParameterEstimates> = (0..cfg.n_draws as u64)
        .into_par_iter()
        .map(|k| exact.scaled(draw_factors(&mut rng_for_draw(k), &normal)))
        .collect();

    let z0 = model.air.z0();
    let rows: Vec<Result<(f64, f64, f64)>> = cfg
        .freqs_hz
        .par_iter()
        .map_init(
            || Vec::with_capacity(draws.len()),
            |alphas, &f_hz| {
                let omega = 2.0 * PI * f_hz;
                let s = Complex64::new(0.0, omega);
                let zst = target.impedance_at(omega);
                let zss = model.zss_at(omega);
                let g = z0 * fb.kg * fb.omega_g / (s + fb.omega_g);
                alphas.clear();
                for d in &draws {
                    let f_ratio = d.f_hat / model.f;
                    let num = g * (d.csb_hat / model.csb) + zss * f_ratio;
                    let den = g + d.zss_hat_at(omega) + zst * (f_ratio - 1.0);
                    let a = zst * num;
                    let b = den * z0;
                    alphas.push(1.0 - ((a - b) / (a + b)).norm_sqr());
                }
                if alphas.iter().any(|a| !a.is_finite()) {
                    return Err(Error::SingularFrequency { omega, what: "absorption of a Monte-Carlo draw" });
                }
                let q1 = quartile_type7(alphas, 0.25);
                let q3 = quartile_type7(alphas, 0.75);
                let nominal = absorption_coefficient(zst, &model.air)?;
                Ok((q1, q3, nominal))
            },
        )
        .collect();

    let mut band = QuartileBand {
        freqs_hz: cfg.freqs_hz.clone(),
        q1: Vec::with_capacity(rows.len()),
        q3: Vec::with_capacity(rows.len()),
        nominal: Vec::with_capacity(rows.len()),
    };
    for r in rows {
        let (q1, q3, nominal) = r?;
        band.q1.push(q1);
        band.q3.push(q3);
        band.nominal.push(nominal);
    }
    Ok(band)
}
