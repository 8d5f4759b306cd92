//! Sign/log-magnitude arithmetic and a few small numerical helpers.
//!
//! Integrands in this crate routinely reach `exp(N log 2)` for `N` in the
//! thousands, so values travel as `(sign, ln|value|)` pairs and are only
//! exponentiated once a ratio of comparable magnitudes has been formed.

use serde::Serialize;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A real number stored as `sign * exp(ln_abs)`.
///
/// `sign` is one of `-1.0`, `0.0`, `1.0`; zero is `(0, -inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignedLog {
    pub sign: f64,
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0.0,
        ln_abs: f64::NEG_INFINITY,
    };
    pub const ONE: SignedLog = SignedLog {
        sign: 1.0,
        ln_abs: 0.0,
    };

    pub fn new(sign: f64, ln_abs: f64) -> Self {
        if sign == 0.0 || ln_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            SignedLog {
                sign: sign.signum(),
                ln_abs,
            }
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            Self::ZERO
        } else {
            SignedLog {
                sign: v.signum(),
                ln_abs: v.abs().ln(),
            }
        }
    }

    /// `exp(ln)` as a positive number.
    pub fn from_ln(ln: f64) -> Self {
        Self::new(1.0, ln)
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0.0
    }

    pub fn to_f64(self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }

    pub fn abs(self) -> Self {
        Self::new(self.sign.abs(), self.ln_abs)
    }

    /// Integer power; `0^0 = 1`.
    pub fn powi(self, k: usize) -> Self {
        if k == 0 {
            return Self::ONE;
        }
        if self.is_zero() {
            return Self::ZERO;
        }
        let sign = if k % 2 == 1 { self.sign } else { 1.0 };
        SignedLog {
            sign,
            ln_abs: self.ln_abs * k as f64,
        }
    }

    pub fn scale_ln(self, ln_factor: f64) -> Self {
        Self::new(self.sign, self.ln_abs + ln_factor)
    }
}

impl Neg for SignedLog {
    type Output = SignedLog;
    fn neg(self) -> SignedLog {
        SignedLog {
            sign: -self.sign,
            ln_abs: self.ln_abs,
        }
    }
}

impl Mul for SignedLog {
    type Output = SignedLog;
    fn mul(self, rhs: SignedLog) -> SignedLog {
        SignedLog::new(self.sign * rhs.sign, self.ln_abs + rhs.ln_abs)
    }
}

impl Div for SignedLog {
    type Output = SignedLog;
    fn div(self, rhs: SignedLog) -> SignedLog {
        assert!(!rhs.is_zero(), "division of SignedLog by zero");
        SignedLog::new(self.sign * rhs.sign, self.ln_abs - rhs.ln_abs)
    }
}

impl Add for SignedLog {
    type Output = SignedLog;
    fn add(self, rhs: SignedLog) -> SignedLog {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.ln_abs >= rhs.ln_abs {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let r = (small.ln_abs - big.ln_abs).exp();
        if big.sign == small.sign {
            SignedLog::new(big.sign, big.ln_abs + r.ln_1p())
        } else if r == 1.0 {
            SignedLog::ZERO
        } else {
            SignedLog::new(big.sign, big.ln_abs + (-r).ln_1p())
        }
    }
}

impl Sub for SignedLog {
    type Output = SignedLog;
    fn sub(self, rhs: SignedLog) -> SignedLog {
        self + (-rhs)
    }
}

/// `ln(sum exp(v_i))`, robust to very large and very small entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut c = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    statrs::function::factorial::ln_binomial(n as u64, k as u64)
}

/// `C(n, k)` as a float, exact while the result stays below 2^53.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    if n <= 1000 {
        let mut acc = 1.0_f64;
        for i in 0..k {
            // multiply before dividing; every prefix is an integer
            acc = acc * (n - i) as f64 / (i + 1) as f64;
        }
        acc.round()
    } else {
        ln_binomial(n, k).exp()
    }
}

/// A residual together with the magnitude of the terms that produced it, so
/// that callers can judge it on an absolute or a relative scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub absolute: f64,
    pub scale: f64,
}

impl Residual {
    pub fn from_terms(terms: &[SignedLog]) -> Self {
        let mut max_ln = f64::NEG_INFINITY;
        for t in terms {
            if !t.is_zero() {
                max_ln = max_ln.max(t.ln_abs);
            }
        }
        if max_ln == f64::NEG_INFINITY {
            return Residual {
                absolute: 0.0,
                scale: 0.0,
            };
        }
        // sum in units of the largest term, then restore the magnitude
        let scaled = terms.iter().map(|t| t.scale_ln(-max_ln).to_f64());
        let sum = compensated_sum(scaled);
        let scale: f64 = terms.iter().map(|t| t.abs().scale_ln(-max_ln).to_f64()).sum();
        let unit = max_ln.exp();
        Residual {
            absolute: sum.abs() * unit,
            scale: scale * unit,
        }
    }

    /// `absolute / scale`, or 0 when every term vanished.
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.absolute / self.scale
        }
    }
}
