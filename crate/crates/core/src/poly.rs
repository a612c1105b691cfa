//! Real polynomials stored as coefficient vectors in descending powers.
//!
//! The zero polynomial is the empty vector. All constructors in this module
//! return trimmed vectors: the leading coefficient is nonzero.

use nalgebra::{linalg::Schur, DMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative threshold below which a sum of coefficients is treated as an
/// exact cancellation.
pub const CANCELLATION_TOL: f64 = 1e-12;

pub fn degree(p: &[f64]) -> Option<usize> {
    if p.is_empty() {
        None
    } else {
        Some(p.len() - 1)
    }
}

pub fn trim(mut p: Vec<f64>) -> Vec<f64> {
    let lead = p.iter().position(|&c| c != 0.0).unwrap_or(p.len());
    p.drain(..lead);
    p
}

pub fn eval(p: &[f64], s: Complex64) -> Complex64 {
    p.iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub fn eval_real(p: &[f64], x: f64) -> f64 {
    p.iter().fold(0.0, |acc, &c| acc * x + c)
}

fn eval_with_derivative(p: &[Complex64], s: Complex64) -> (Complex64, Complex64) {
    let mut value = Complex64::new(0.0, 0.0);
    let mut deriv = Complex64::new(0.0, 0.0);
    for &c in p {
        deriv = deriv * s + value;
        value = value * s + c;
    }
    (value, deriv)
}

pub fn scale(p: &[f64], k: f64) -> Vec<f64> {
    if k == 0.0 {
        return Vec::new();
    }
    p.iter().map(|c| c * k).collect()
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim(out)
}

/// `a + sign * b`, aligned on the constant term. A result coefficient whose
/// magnitude is within [`CANCELLATION_TOL`] of the larger summand is set to
/// exactly zero.
fn combine(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (k, slot) in out.iter_mut().enumerate() {
        // k counts from the leading end of the longer polynomial
        let ia = (k + a.len()).checked_sub(n);
        let ib = (k + b.len()).checked_sub(n);
        let x = ia.map_or(0.0, |i| a[i]);
        let y = ib.map_or(0.0, |i| sign * b[i]);
        let r = x + y;
        let scale = x.abs().max(y.abs());
        *slot = if r.abs() <= CANCELLATION_TOL * scale { 0.0 } else { r };
    }
    trim(out)
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    combine(a, b, 1.0)
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    combine(a, b, -1.0)
}

/// Number of roots at the origin (trailing exact zeros).
pub fn zeros_at_origin(p: &[f64]) -> usize {
    p.iter().rev().take_while(|&&c| c == 0.0).count()
}

/// Monic polynomial with the given roots. Conjugate roots must be present
/// in pairs for the imaginary parts to cancel; the imaginary residue is dropped.
pub fn from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut acc = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
        for (i, &c) in acc.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        acc = next;
    }
    acc.into_iter().map(|c| c.re).collect()
}

/// Roots of a real polynomial.
///
/// Roots at the origin are split off exactly. The remaining polynomial is
/// rescaled to unit root magnitude on average, its companion matrix is
/// reduced with a real Schur decomposition, and each eigenvalue is polished
/// with a few Newton steps. Conjugate pairs are returned exactly conjugate.
pub fn roots(p: &[f64]) -> Result<Vec<Complex64>> {
    let p = trim(p.to_vec());
    if p.is_empty() {
        return Err(Error::RootFinding("zero polynomial has no finite root set".into()));
    }
    let origin = zeros_at_origin(&p);
    let q = &p[..p.len() - origin];
    let n = q.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); origin];
    if n == 0 {
        return Ok(out);
    }

    let lead = q[0];
    let omega = (q[n] / lead).abs().powf(1.0 / n as f64);
    // monic, frequency-scaled: u = s / omega
    let scaled: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(k, &c)| c / (lead * omega.powi(k as i32)))
        .collect();

    let mut companion = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        companion[(0, j)] = -scaled[j + 1];
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    let schur = Schur::try_new(companion, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::RootFinding("companion eigenvalue iteration did not converge".into()))?;
    let eig = schur.complex_eigenvalues();

    let cplx: Vec<Complex64> = scaled.iter().map(|&c| Complex64::new(c, 0.0)).collect();
    let mut found: Vec<Complex64> = eig
        .iter()
        .map(|&z0| polish(&cplx, Complex64::new(z0.re, z0.im)))
        .collect();
    symmetrize(&mut found);
    out.extend(found.into_iter().map(|u| u * omega));
    Ok(out)
}

fn polish(p: &[Complex64], mut z: Complex64) -> Complex64 {
    let (mut fz, _) = eval_with_derivative(p, z);
    for _ in 0..8 {
        let (f, d) = eval_with_derivative(p, z);
        if d.norm() == 0.0 || f.norm() == 0.0 {
            break;
        }
        let cand = z - f / d;
        let (fc, _) = eval_with_derivative(p, cand);
        if !(fc.norm() < fz.norm()) {
            break;
        }
        z = cand;
        fz = fc;
    }
    z
}

/// Forces near-real roots onto the real axis and makes complex roots come in
/// exactly conjugate pairs.
fn symmetrize(r: &mut [Complex64]) {
    let tol = 1e-9;
    let mut used = vec![false; r.len()];
    for i in 0..r.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let zi = r[i];
        if zi.im.abs() <= tol * zi.norm().max(f64::MIN_POSITIVE) {
            r[i] = Complex64::new(zi.re, 0.0);
            continue;
        }
        let partner = (0..r.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                (r[a] - zi.conj())
                    .norm()
                    .total_cmp(&(r[b] - zi.conj()).norm())
            });
        if let Some(j) = partner {
            used[j] = true;
            let re = 0.5 * (zi.re + r[j].re);
            let im = 0.5 * (zi.im.abs() + r[j].im.abs());
            r[i] = Complex64::new(re, im);
            r[j] = Complex64::new(re, -im);
        }
    }
}

/// A real root or a conjugate pair, the natural factors of a real polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootGroup {
    Real(f64),
    /// Stored with nonnegative imaginary part; the conjugate is implied.
    Pair(Complex64),
}

impl RootGroup {
    pub fn members(&self) -> Vec<Complex64> {
        match *self {
            RootGroup::Real(x) => vec![Complex64::new(x, 0.0)],
            RootGroup::Pair(z) => vec![z, z.conj()],
        }
    }

    pub fn magnitude(&self) -> f64 {
        match *self {
            RootGroup::Real(x) => x.abs(),
            RootGroup::Pair(z) => z.norm(),
        }
    }

    pub fn order(&self) -> usize {
        match self {
            RootGroup::Real(_) => 1,
            RootGroup::Pair(_) => 2,
        }
    }
}

/// Groups a conjugate-closed root set. Roots with `im == 0` are real; the
/// rest must appear with their exact conjugate (as produced by [`roots`]).
pub fn group_conjugates(r: &[Complex64]) -> Vec<RootGroup> {
    let mut out = Vec::new();
    let mut used = vec![false; r.len()];
    for i in 0..r.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let z = r[i];
        if z.im == 0.0 {
            out.push(RootGroup::Real(z.re));
            continue;
        }
        let partner = (0..r.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| (r[a] - z.conj()).norm().total_cmp(&(r[b] - z.conj()).norm()));
        match partner {
            Some(j) => {
                used[j] = true;
                out.push(RootGroup::Pair(Complex64::new(z.re, z.im.abs())));
            }
            // unmatched complex root: keep its real part
            None => out.push(RootGroup::Real(z.re)),
        }
    }
    out
}
