use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::poly::{self, RootGroup};

/// Second-order section in transposed direct form II,
/// `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiquadSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    #[serde(skip)]
    s1: f64,
    #[serde(skip)]
    s2: f64,
}

impl BiquadSection {
    pub fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Self { b0: b[0], b1: b[1], b2: b[2], a1: a[0], a2: a[1], s1: 0.0, s2: 0.0 }
    }

    pub fn passthrough() -> Self {
        Self::new([1.0, 0.0, 0.0], [0.0, 0.0])
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.s1;
        self.s1 = self.b1 * x - self.a1 * y + self.s2;
        self.s2 = self.b2 * x - self.a2 * y;
        y
    }

    pub fn reset(&mut self) {
        self.s1 = 0.0;
        self.s2 = 0.0;
    }

    pub fn state(&self) -> [f64; 2] {
        [self.s1, self.s2]
    }

    /// Response at a point `z` of the complex plane.
    pub fn response(&self, z: Complex64) -> Complex64 {
        let zi = 1.0 / z;
        (self.b0 + zi * (self.b1 + zi * self.b2)) / (1.0 + zi * (self.a1 + zi * self.a2))
    }

    /// Roots of `z^2 + a1 z + a2`, including any at the origin.
    pub fn poles(&self) -> Vec<Complex64> {
        quadratic_roots(self.a1, self.a2)
    }

    /// Largest pole modulus.
    pub fn pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

fn quadratic_roots(b: f64, c: f64) -> Vec<Complex64> {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        // numerically stable form
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return vec![Complex64::new(0.0, 0.0); 2];
        }
        vec![Complex64::new(q, 0.0), Complex64::new(c / q, 0.0)]
    } else {
        let im = (-disc).sqrt() / 2.0;
        vec![Complex64::new(-b / 2.0, im), Complex64::new(-b / 2.0, -im)]
    }
}

/// Chain of biquads with an overall gain applied at the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosCascade {
    pub fs_hz: f64,
    pub gain: f64,
    pub sections: Vec<BiquadSection>,
}

impl SosCascade {
    pub fn new(fs_hz: f64, gain: f64, sections: Vec<BiquadSection>) -> Result<Self> {
        ensure_positive("fs_hz", fs_hz)?;
        if !gain.is_finite() {
            return Err(Error::invalid("gain", "must be finite"));
        }
        Ok(Self { fs_hz, gain, sections })
    }

    /// The cascade whose output is identically zero.
    pub fn zero(fs_hz: f64) -> Self {
        Self { fs_hz, gain: 0.0, sections: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.gain == 0.0
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let mut y = self.gain * x;
        for s in &mut self.sections {
            y = s.process(y);
        }
        y
    }

    pub fn process_block(&mut self, input: &[f64], output: &mut [f64]) {
        assert_eq!(input.len(), output.len(), "block lengths differ");
        for (x, y) in input.iter().zip(output) {
            *y = self.process(*x);
        }
    }

    /// The next output as an affine function `offset + slope x` of the next
    /// input, without advancing the state.
    pub fn peek(&self) -> (f64, f64) {
        let mut offset = 0.0;
        let mut slope = self.gain;
        for s in &self.sections {
            offset = s.b0 * offset + s.s1;
            slope *= s.b0;
        }
        (offset, slope)
    }

    pub fn reset(&mut self) {
        for s in &mut self.sections {
            s.reset();
        }
    }

    pub fn is_at_rest(&self) -> bool {
        self.sections.iter().all(|s| s.state() == [0.0, 0.0])
    }

    pub fn response_z(&self, z: Complex64) -> Complex64 {
        self.sections.iter().fold(Complex64::new(self.gain, 0.0), |acc, s| acc * s.response(z))
    }

    /// Frequency response at `f_hz`.
    pub fn response_hz(&self, f_hz: f64) -> Complex64 {
        self.response_z(Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f_hz / self.fs_hz))
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(|s| s.pole_radius() < 1.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Unfactored response `k Π(1 - z_i/z) / Π(1 - p_i/z)`.
pub fn zpk_response(zeros: &[Complex64], poles: &[Complex64], gain: f64, z: Complex64) -> Complex64 {
    let zi = 1.0 / z;
    let num: Complex64 = zeros.iter().map(|q| 1.0 - q * zi).product();
    let den: Complex64 = poles.iter().map(|p| 1.0 - p * zi).product();
    gain * num / den
}

/// Polynomial `1 + c1 z^-1 + c2 z^-2` from up to two roots.
fn section_poly(roots: &[Complex64]) -> [f64; 3] {
    match roots {
        [] => [1.0, 0.0, 0.0],
        [r] => [1.0, -r.re, 0.0],
        [r, s] => [1.0, -(r + s).re, (r * s).re],
        _ => unreachable!("a section holds at most two roots"),
    }
}

/// Splits roots into section-sized chunks: conjugate pairs stay together,
/// real roots are paired in order of their modulus.
fn chunk_roots(roots: &[Complex64]) -> Vec<Vec<Complex64>> {
    let groups = poly::group_conjugates(roots);
    let mut out = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    for g in groups {
        match g {
            RootGroup::Pair(_) => out.push(g.members()),
            RootGroup::Real(r) => reals.push(r),
        }
    }
    reals.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    for c in reals.chunks(2) {
        out.push(c.iter().map(|&r| Complex64::new(r, 0.0)).collect());
    }
    out
}

fn chunk_radius(c: &[Complex64]) -> f64 {
    c.iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Distance from a pole chunk to a zero chunk: closest pole-zero pair.
fn chunk_distance(p: &[Complex64], z: &[Complex64]) -> f64 {
    p.iter()
        .flat_map(|a| z.iter().map(move |b| (a - b).norm()))
        .fold(f64::INFINITY, f64::min)
}

/// Factors a z-plane pole/zero/gain description into second-order sections.
///
/// Poles are grouped into sections (conjugate pairs together, real poles two
/// by two); then, starting from the poles closest to the unit circle, each
/// section takes the nearest remaining zero group. Sections are emitted in
/// ascending order of pole radius. Missing zeros are placed at the origin,
/// so the cascade equals `k Π(1 - z_i z^-1) / Π(1 - p_i z^-1)`.
pub fn sos_partition(poles: &[Complex64], zeros: &[Complex64], gain: f64, fs_hz: f64) -> Result<SosCascade> {
    if gain == 0.0 {
        return Ok(SosCascade::zero(fs_hz));
    }
    let mut pole_chunks = chunk_roots(poles);
    let mut zero_chunks = chunk_roots(zeros);
    // surplus zero groups get pole-free sections
    let extra = zero_chunks.len().saturating_sub(pole_chunks.len());
    pole_chunks.extend(std::iter::repeat_with(Vec::new).take(extra));

    pole_chunks.sort_by(|a, b| chunk_radius(b).total_cmp(&chunk_radius(a)));
    let mut sections: Vec<(f64, BiquadSection)> = Vec::with_capacity(pole_chunks.len());
    for pc in &pole_chunks {
        let zc = if zero_chunks.is_empty() {
            Vec::new()
        } else {
            let j = (0..zero_chunks.len())
                .min_by(|&a, &b| {
                    let da = if pc.is_empty() { chunk_radius(&zero_chunks[a]) } else { chunk_distance(pc, &zero_chunks[a]) };
                    let db = if pc.is_empty() { chunk_radius(&zero_chunks[b]) } else { chunk_distance(pc, &zero_chunks[b]) };
                    da.total_cmp(&db)
                })
                .expect("nonempty");
            zero_chunks.swap_remove(j)
        };
        let b = section_poly(&zc);
        let a = section_poly(pc);
        sections.push((chunk_radius(pc), BiquadSection::new(b, [a[1], a[2]])));
    }
    debug_assert!(zero_chunks.is_empty());
    sections.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut sections: Vec<BiquadSection> = sections.into_iter().map(|(_, s)| s).collect();
    if sections.is_empty() {
        sections.push(BiquadSection::passthrough());
    }
    SosCascade::new(fs_hz, gain, sections)
}
