//! Krawtchouk polynomials, the eigenfunctions of the Ehrenfest generator.
//!
//! With `ρ = μ/ν`,
//!
//! ```text
//! K_n(x) = C(N,n)^{-1} Σ_ℓ (−1)^ℓ C(x,ℓ) C(N−x,n−ℓ) ρ^ℓ
//! Σ_n C(N,n) K_n(x) uⁿ = (1+u)^{N−x} (1−ρu)^x
//! ```
//!
//! and `Q K_n = −n K_n`, so `K_n(X(t)) e^{nt}` is a martingale.

use crate::error::{Error, Result};
use crate::model::{build_generator, ModelParams, ProcessKind};
use crate::numeric::{compensated_sum, ln_binomial, Residual, SignedLog};

/// Krawtchouk family for a given `N` and `ρ = μ/ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrawtchoukBasis {
    n_particles: usize,
    ratio: f64,
    ln_nu: f64,
    ln_mu: f64,
}

impl KrawtchoukBasis {
    pub fn new(p: &ModelParams) -> Self {
        KrawtchoukBasis {
            n_particles: p.n(),
            ratio: p.mu() / p.nu(),
            ln_nu: p.nu().ln(),
            ln_mu: p.mu().ln(),
        }
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    /// `ρ = μ/ν`.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    fn check(&self, what: &'static str, v: usize) -> Result<()> {
        if v > self.n_particles {
            Err(Error::out_of_range(what, v, format!("0..={}", self.n_particles)))
        } else {
            Ok(())
        }
    }

    /// The signed terms of `C(N,n) K_n(x)`.
    fn coefficient_terms(&self, n: usize, x: usize) -> Vec<SignedLog> {
        let big_n = self.n_particles;
        let ln_rho = self.ratio.ln();
        let lo = n.saturating_sub(big_n - x);
        let hi = n.min(x);
        (lo..=hi)
            .map(|l| {
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                let ln = ln_binomial(x, l) + ln_binomial(big_n - x, n - l) + l as f64 * ln_rho;
                SignedLog::new(sign, ln)
            })
            .collect()
    }

    /// `K_n(x)` by the compensated alternating sum.
    pub fn value(&self, n: usize, x: usize) -> Result<f64> {
        self.check("n", n)?;
        self.check("x", x)?;
        let scale = ln_binomial(self.n_particles, n);
        let terms = self.coefficient_terms(n, x);
        Ok(compensated_sum(terms.iter().map(|t| t.scale_ln(-scale).to_f64())))
    }

    /// `K_n(x)` by the three-term recurrence in `n` of the coefficients
    /// `c_n = C(N,n) K_n(x)`. Unstable for large `N`; kept as a cross-check.
    pub fn value_by_recurrence(&self, n: usize, x: usize) -> Result<f64> {
        self.check("n", n)?;
        self.check("x", x)?;
        let big_n = self.n_particles as f64;
        let (xf, rho) = (x as f64, self.ratio);
        let mut prev = 1.0;
        let mut cur = big_n - xf * (1.0 + rho);
        if n == 0 {
            return Ok(1.0);
        }
        for k in 1..n {
            let kf = k as f64;
            let next = ((big_n - xf * (1.0 + rho) - kf * (1.0 - rho)) * cur - rho * (big_n - kf + 1.0) * prev)
                / (kf + 1.0);
            prev = cur;
            cur = next;
        }
        Ok(cur / crate::numeric::binomial(self.n_particles, n))
    }

    /// `ln` of the binomial weight `C(N,x) ν^x μ^{N−x}`.
    pub fn log_weight(&self, x: usize) -> f64 {
        ln_binomial(self.n_particles, x) + x as f64 * self.ln_nu + (self.n_particles - x) as f64 * self.ln_mu
    }

    /// `Σ_x w(x) K_n(x)² = ρⁿ / C(N,n)`.
    pub fn norm_squared(&self, n: usize) -> f64 {
        (n as f64 * self.ratio.ln() - ln_binomial(self.n_particles, n)).exp()
    }

    /// `Σ_x w(x) K_m(x) K_n(x)` as a residual, normalized by the norms so that
    /// `relative()` is the cosine between `K_m` and `K_n`.
    pub fn inner_product(&self, m: usize, n: usize) -> Result<Residual> {
        self.check("m", m)?;
        self.check("n", n)?;
        let terms = (0..=self.n_particles)
            .map(|x| {
                let v = self.value(m, x)? * self.value(n, x)?;
                Ok(SignedLog::from_f64(v).scale_ln(self.log_weight(x)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Residual::from_terms(&terms))
    }
}

/// `K_n(x)` for the `N` and `ρ = μ/ν` of `p`.
pub fn krawtchouk(n: usize, x: usize, p: &ModelParams) -> Result<f64> {
    KrawtchoukBasis::new(p).value(n, x)
}

/// `|Σ_n C(N,n) K_n(x) uⁿ − (1+u)^{N−x}(1−ρu)^x|` with the magnitude of the terms.
pub fn generating_identity_residual(x: usize, u: f64, p: &ModelParams) -> Result<Residual> {
    if !(u.abs() <= 1.0) {
        return Err(Error::out_of_range("u", u, "[-1, 1]"));
    }
    let basis = KrawtchoukBasis::new(p);
    basis.check("x", x)?;
    let big_n = p.n();
    let ln_u = SignedLog::from_f64(u);
    let mut terms = Vec::with_capacity(big_n + 2);
    for n in 0..=big_n {
        let c = SignedLog::from_f64(basis.value(n, x)?).scale_ln(ln_binomial(big_n, n));
        terms.push(c * ln_u.powi(n));
    }
    let rhs = SignedLog::from_f64(1.0 + u).powi(big_n - x) * SignedLog::from_f64(1.0 - basis.ratio * u).powi(x);
    terms.push(-rhs);
    Ok(Residual::from_terms(&terms))
}

/// Space-time harmonicity residual `n K_n(x) + (Q K_n)(x)` of `K_n(x)e^{nt}`.
pub fn krawtchouk_martingale_residual(n: usize, p: &ModelParams, x: usize) -> Result<Residual> {
    if p.kind() != ProcessKind::Ehrenfest {
        return Err(Error::Unsupported(
            "Krawtchouk polynomials are eigenfunctions of the Ehrenfest generator only".into(),
        ));
    }
    let basis = KrawtchoukBasis::new(p);
    basis.check("n", n)?;
    basis.check("x", x)?;
    let rates = build_generator(p);
    let k = |y: usize| basis.value(n, y).map(SignedLog::from_f64);
    let kx = k(x)?;
    let mut terms = vec![kx.scale_ln((n as f64).ln())];
    if x < p.n() {
        let up = rates.up[x].ln();
        terms.push(k(x + 1)?.scale_ln(up));
        terms.push((-kx).scale_ln(up));
    }
    if x > 0 {
        let down = rates.down[x].ln();
        terms.push(k(x - 1)?.scale_ln(down));
        terms.push((-kx).scale_ln(down));
    }
    Ok(Residual::from_terms(&terms))
}
