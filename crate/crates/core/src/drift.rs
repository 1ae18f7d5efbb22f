//! Polynomial drift `g(U) = sum c_n U^n`, stored in dimensionless form.
//!
//! Physical coefficients `a_n` of `p(U) = sum a_n U^n` convert with
//! `c_n = l a_n / (2 d1)`.

use alloc::vec::Vec;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DriftPolynomial {
    /// `coeffs[n-1]` multiplies `U^n`; there is no constant term.
    coeffs: Vec<f64>,
}

impl DriftPolynomial {
    /// The drift that vanishes identically.
    pub fn zero() -> Self {
        DriftPolynomial { coeffs: alloc::vec![0.0] }
    }

    /// Builds `g` directly from dimensionless coefficients `c_1..c_k`.
    pub fn dimensionless(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("drift", "at least one coefficient is required"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("drift", "coefficients must be finite"));
        }
        Ok(DriftPolynomial { coeffs })
    }

    /// Converts physical coefficients `a_1..a_k` using `g = l p / (2 d1)`.
    pub fn from_physical(a: &[f64], ell: f64, d1: f64) -> Result<Self> {
        if !(ell > 0.0 && d1 > 0.0) {
            return Err(invalid("drift", "ell and d1 must be positive"));
        }
        let s = ell / (2.0 * d1);
        Self::dimensionless(a.iter().map(|v| v * s).collect())
    }

    /// Logistic drift `p(U) = -b U (1 - U)`.
    pub fn logistic(b: f64, ell: f64, d1: f64) -> Result<Self> {
        Self::from_physical(&[-b, b], ell, d1)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn eval(&self, u: f64) -> f64 {
        // Horner on u * (c1 + c2 u + ...)
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * u + c;
        }
        acc * u
    }

    pub fn derivative(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (n, c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * u + (n as f64 + 1.0) * c;
        }
        acc
    }

    /// Upper bound for `|g'|` on `[lo, hi]`: `sum n |c_n| R^(n-1)` with
    /// `R = max(|lo|, |hi|)`.
    pub fn max_abs_derivative(&self, lo: f64, hi: f64) -> f64 {
        let r = lo.abs().max(hi.abs());
        let mut acc = 0.0;
        for (n, c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * r + (n as f64 + 1.0) * c.abs();
        }
        acc
    }
}
