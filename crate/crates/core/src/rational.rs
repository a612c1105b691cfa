use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

/// A real rational function of the Laplace variable `s`.
///
/// Coefficients are stored in descending powers of `s`; the denominator is
/// monic. The zero function has an empty numerator and denominator `[1]`.
/// Common factors of `s` are removed from numerator and denominator on
/// construction; no other pole-zero cancellation is attempted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransfer", into = "RawTransfer")]
pub struct RationalTransfer {
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTransfer {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TryFrom<RawTransfer> for RationalTransfer {
    type Error = Error;
    fn try_from(raw: RawTransfer) -> Result<Self> {
        RationalTransfer::new(raw.num, raw.den)
    }
}

impl From<RationalTransfer> for RawTransfer {
    fn from(t: RationalTransfer) -> Self {
        RawTransfer { num: t.num, den: t.den }
    }
}

impl RationalTransfer {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::invalid("coefficients", "must be finite"));
        }
        let mut num = poly::trim(num);
        let mut den = poly::trim(den);
        if den.is_empty() {
            return Err(Error::invalid("denominator", "must be nonzero"));
        }
        if num.is_empty() {
            return Ok(Self::zero());
        }
        let common = poly::zeros_at_origin(&num).min(poly::zeros_at_origin(&den));
        num.truncate(num.len() - common);
        den.truncate(den.len() - common);
        let lead = den[0];
        Ok(Self {
            num: num.iter().map(|c| c / lead).collect(),
            den: den.iter().map(|c| c / lead).collect(),
        })
    }

    pub fn zero() -> Self {
        Self { num: Vec::new(), den: vec![1.0] }
    }

    pub fn constant(k: f64) -> Self {
        if k == 0.0 {
            Self::zero()
        } else {
            Self { num: vec![k], den: vec![1.0] }
        }
    }

    /// The Laplace variable itself, `s`.
    pub fn s() -> Self {
        Self { num: vec![1.0, 0.0], den: vec![1.0] }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_empty()
    }

    pub fn num_degree(&self) -> Option<usize> {
        poly::degree(&self.num)
    }

    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }

    /// Relative degree `deg(den) - deg(num)`; `None` for the zero function.
    pub fn relative_degree(&self) -> Option<isize> {
        self.num_degree()
            .map(|n| self.den_degree() as isize - n as isize)
    }

    pub fn is_proper(&self) -> bool {
        self.relative_degree().is_none_or(|r| r >= 0)
    }

    pub fn eval_s(&self, s: Complex64) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    /// Frequency response at `s = jω`.
    pub fn eval(&self, omega: f64) -> Complex64 {
        self.eval_s(Complex64::new(0.0, omega))
    }

    pub fn scale(&self, k: f64) -> Self {
        if k == 0.0 || self.is_zero() {
            return Self::zero();
        }
        Self { num: poly::scale(&self.num, k), den: self.den.clone() }
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let num = poly::add(
            &poly::mul(&self.num, &other.den),
            &poly::mul(&other.num, &self.den),
        );
        Self::assemble(num, poly::mul(&self.den, &other.den))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        Self::assemble(poly::mul(&self.num, &other.num), poly::mul(&self.den, &other.den))
    }

    pub fn recip(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::SingularDesign("reciprocal of the zero transfer".into()));
        }
        Self::new(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.recip()?))
    }

    fn assemble(num: Vec<f64>, den: Vec<f64>) -> Self {
        // operands are finite and nonzero, so construction cannot fail
        Self::new(num, den).unwrap_or_else(|_| Self::zero())
    }

    pub fn zeros(&self) -> Result<Vec<Complex64>> {
        if self.is_zero() {
            return Ok(Vec::new());
        }
        poly::roots(&self.num)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        poly::roots(&self.den)
    }

    /// Leading numerator coefficient (the gain in zero-pole-gain form, since
    /// the denominator is monic).
    pub fn leading_gain(&self) -> f64 {
        self.num.first().copied().unwrap_or(0.0)
    }
}
