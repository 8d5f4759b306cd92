//! The Ehrenfest process and its reflected version, the Engset process.
//!
//! Both are birth–death chains on `0..=C` with up-rate `ν(N−x)` and
//! down-rate `μx`; the Engset chain has no upward jump out of `C`.
//! Rates are normalized so that `ν + μ = 1`, which only rescales time.

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Default half-width `K` of the critical band `|C − νN| ≤ K√N`.
pub const DEFAULT_CRITICAL_BAND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Ehrenfest,
    Engset,
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessKind::Ehrenfest => f.write_str("ehrenfest"),
            ProcessKind::Engset => f.write_str("engset"),
        }
    }
}

/// Validated, normalized model parameters.
///
/// `time_scale` is the factor `ν_in + μ_in` removed by normalization: a
/// time `t` of the normalized chain is `t / time_scale` in the caller's units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    n_particles: usize,
    capacity: usize,
    nu: f64,
    mu: f64,
    kind: ProcessKind,
    time_scale: f64,
}

impl ModelParams {
    /// Builds parameters from raw rates, normalizing them to `ν + μ = 1`.
    pub fn new(kind: ProcessKind, n_particles: usize, capacity: usize, nu: f64, mu: f64) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::out_of_range("n", 0, "N >= 1"));
        }
        if capacity == 0 || capacity > n_particles {
            return Err(Error::out_of_range("c", capacity, format!("1 <= C <= N = {n_particles}")));
        }
        if kind == ProcessKind::Ehrenfest && capacity != n_particles {
            return Err(Error::InvalidParams(format!(
                "the Ehrenfest process has capacity N = {n_particles}, got C = {capacity}"
            )));
        }
        for (name, v) in [("nu", nu), ("mu", mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::out_of_range(name, v, "a finite rate > 0"));
            }
        }
        let s = nu + mu;
        let nu_n = nu / s;
        let mu_n = 1.0 - nu_n;
        if !(nu_n > 0.0 && mu_n > 0.0) {
            return Err(Error::InvalidParams(format!(
                "rates nu = {nu}, mu = {mu} are too unbalanced to normalize"
            )));
        }
        Ok(ModelParams {
            n_particles,
            capacity,
            nu: nu_n,
            mu: mu_n,
            kind,
            time_scale: s,
        })
    }

    /// Ehrenfest process with `μ = 1 − ν`.
    pub fn ehrenfest(n_particles: usize, nu: f64) -> Result<Self> {
        Self::check_unit_nu(nu)?;
        Self::new(ProcessKind::Ehrenfest, n_particles, n_particles, nu, 1.0 - nu)
    }

    /// Engset process with `μ = 1 − ν`.
    pub fn engset(n_particles: usize, capacity: usize, nu: f64) -> Result<Self> {
        Self::check_unit_nu(nu)?;
        Self::new(ProcessKind::Engset, n_particles, capacity, nu, 1.0 - nu)
    }

    fn check_unit_nu(nu: f64) -> Result<()> {
        if nu > 0.0 && nu < 1.0 {
            Ok(())
        } else {
            Err(Error::out_of_range("nu", nu, "(0, 1)"))
        }
    }

    /// Same process with a different (normalized) `ν`.
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::check_unit_nu(nu)?;
        Self::new(self.kind, self.n_particles, self.capacity, nu, 1.0 - nu)
    }

    pub fn n(&self) -> usize {
        self.n_particles
    }
    pub fn capacity(&self) -> usize {
        self.capacity
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn kind(&self) -> ProcessKind {
        self.kind
    }
    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// `η = C/N` at this `N`.
    pub fn eta(&self) -> f64 {
        self.capacity as f64 / self.n_particles as f64
    }

    /// True when the upper boundary actually reflects (Engset with `C < N`).
    pub fn is_reflected(&self) -> bool {
        self.capacity < self.n_particles
    }

    pub fn up_rate(&self, x: usize) -> f64 {
        if x < self.capacity {
            self.nu * (self.n_particles - x) as f64
        } else {
            0.0
        }
    }

    pub fn down_rate(&self, x: usize) -> f64 {
        self.mu * x as f64
    }

    pub(crate) fn check_state(&self, what: &'static str, x: usize) -> Result<()> {
        if x > self.capacity {
            Err(Error::out_of_range(what, x, format!("0..={}", self.capacity)))
        } else {
            Ok(())
        }
    }
}

/// Transition rates of the chain, indexed by state `0..=C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl RateTable {
    pub fn len(&self) -> usize {
        self.up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.up.is_empty()
    }

    /// Diagonal entry `q(x,x)`.
    pub fn diagonal(&self, x: usize) -> f64 {
        -(self.up[x] + self.down[x])
    }

    /// Dense generator, for small chains and tests.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut q = vec![vec![0.0; n]; n];
        for x in 0..n {
            if x + 1 < n {
                q[x][x + 1] = self.up[x];
            }
            if x > 0 {
                q[x][x - 1] = self.down[x];
            }
            q[x][x] = self.diagonal(x);
        }
        q
    }

    /// `(Qf)(x)` for a function `f` on the state space.
    pub fn apply(&self, f: &[f64], x: usize) -> f64 {
        let mut acc = 0.0;
        if self.up[x] > 0.0 {
            acc += self.up[x] * (f[x + 1] - f[x]);
        }
        if self.down[x] > 0.0 {
            acc += self.down[x] * (f[x - 1] - f[x]);
        }
        acc
    }
}

pub fn build_generator(p: &ModelParams) -> RateTable {
    let states = 0..=p.capacity();
    RateTable {
        up: states.clone().map(|x| p.up_rate(x)).collect(),
        down: states.map(|x| p.down_rate(x)).collect(),
    }
}

/// Natural logarithm of the stationary distribution.
pub fn log_stationary_distribution(p: &ModelParams) -> Vec<f64> {
    let n = p.n() as f64;
    let ln_ratio = (p.nu() / p.mu()).ln();
    let mut lw = Vec::with_capacity(p.capacity() + 1);
    let mut acc = 0.0;
    lw.push(acc);
    for x in 0..p.capacity() {
        acc += ((n - x as f64) / (x as f64 + 1.0)).ln() + ln_ratio;
        lw.push(acc);
    }
    let z = log_sum_exp(&lw);
    lw.iter_mut().for_each(|v| *v -= z);
    lw
}

/// Stationary distribution `π(x) ∝ C(N,x)(ν/μ)^x` on `0..=C`.
pub fn stationary_distribution(p: &ModelParams) -> Vec<f64> {
    log_stationary_distribution(p).into_iter().map(f64::exp).collect()
}

/// Fluid limit `min(η, ν + (x0 − ν)e^{−t})` of `X_N(t)/N`.
pub fn fluid_limit(p: &ModelParams, x0: f64, t: f64) -> Result<f64> {
    let eta = p.eta();
    if !(0.0..=eta).contains(&x0) {
        return Err(Error::out_of_range("x0", x0, format!("[0, eta = {eta}]")));
    }
    if !(t >= 0.0) {
        return Err(Error::out_of_range("t", t, "t >= 0"));
    }
    Ok(eta.min(p.nu() + (x0 - p.nu()) * (-t).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    SubCritical,
    SuperCritical,
    Critical,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::SubCritical => "SubCritical",
            Regime::SuperCritical => "SuperCritical",
            Regime::Critical => "Critical",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub eta: f64,
    pub regime: Regime,
    pub x0: f64,
    pub band: f64,
    pub t_star: Option<f64>,
    pub entropy_h: Option<f64>,
    pub limit_variance: Option<f64>,
    pub critical_delta: Option<f64>,
}

/// Relative entropy of Bernoulli(η) with respect to Bernoulli(ν).
pub fn bernoulli_entropy(eta: f64, nu: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(1.0 - eta, 1.0 - nu) + term(eta, nu)
}

/// `δ` such that `C = νN + δ√N`.
pub fn critical_delta(p: &ModelParams) -> f64 {
    let n = p.n() as f64;
    (p.capacity() as f64 - p.nu() * n) / n.sqrt()
}

/// Classifies with the default band `K = 1`.
pub fn classify_regime(p: &ModelParams, x0: f64) -> Result<RegimeReport> {
    classify_regime_with_band(p, x0, DEFAULT_CRITICAL_BAND)
}

pub fn classify_regime_with_band(p: &ModelParams, x0: f64, band: f64) -> Result<RegimeReport> {
    let eta = p.eta();
    let nu = p.nu();
    if !(0.0..=eta).contains(&x0) {
        return Err(Error::out_of_range("x0", x0, format!("[0, eta = {eta}]")));
    }
    if !(band >= 0.0 && band.is_finite()) {
        return Err(Error::out_of_range("band", band, "a finite K >= 0"));
    }
    let delta = critical_delta(p);
    let mut report = RegimeReport {
        eta,
        regime: Regime::Critical,
        x0,
        band,
        t_star: None,
        entropy_h: None,
        limit_variance: None,
        critical_delta: None,
    };
    if delta.abs() <= band {
        report.critical_delta = Some(delta);
    } else if nu > eta {
        report.regime = Regime::SuperCritical;
        report.t_star = Some(((nu - x0) / (nu - eta)).ln());
        report.limit_variance = Some(eta * (1.0 - eta) / (nu - eta).powi(2));
    } else {
        report.regime = Regime::SubCritical;
        report.entropy_h = Some(bernoulli_entropy(eta, nu));
    }
    Ok(report)
}

/// Limit of the Engset blocking probability `π(C)` in the super-critical regime.
///
/// The empty circuits form an M/M/1 queue with arrival rate `μη` and service
/// rate `ν(1−η)` (per `N`), whose idle probability is the returned value.
pub fn engset_blocking_limit(p: &ModelParams) -> Result<f64> {
    let (eta, nu) = (p.eta(), p.nu());
    if !(nu > eta) {
        return Err(Error::WrongRegime {
            expected: "SuperCritical (nu > eta)".into(),
            found: format!("nu = {nu}, eta = {eta}"),
        });
    }
    Ok(1.0 - eta * (1.0 - nu) / (nu * (1.0 - eta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalization_records_scale() {
        let p = ModelParams::new(ProcessKind::Engset, 10, 4, 2.0, 3.0).unwrap();
        assert!(close(p.nu(), 0.4, 1e-15));
        assert_eq!(p.nu() + p.mu(), 1.0);
        assert_eq!(p.time_scale(), 5.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::ehrenfest(0, 0.5).is_err());
        assert!(ModelParams::engset(5, 6, 0.5).is_err());
        assert!(ModelParams::engset(5, 0, 0.5).is_err());
        assert!(ModelParams::ehrenfest(5, 1.0).is_err());
        assert!(ModelParams::new(ProcessKind::Ehrenfest, 5, 4, 0.5, 0.5).is_err());
        assert!(ModelParams::new(ProcessKind::Engset, 5, 4, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn generator_examples() {
        let g = build_generator(&ModelParams::ehrenfest(1, 0.5).unwrap());
        assert_eq!(g.up, vec![0.5, 0.0]);
        assert_eq!(g.down, vec![0.0, 0.5]);

        let g = build_generator(&ModelParams::engset(3, 2, 0.4).unwrap());
        for (a, b) in g.up.iter().zip([1.2, 0.8, 0.0]) {
            assert!(close(*a, b, 1e-15));
        }
        for (a, b) in g.down.iter().zip([0.0, 0.6, 1.2]) {
            assert!(close(*a, b, 1e-15));
        }

        let q = build_generator(&ModelParams::ehrenfest(10, 0.37).unwrap()).to_matrix();
        for row in &q {
            assert!(row.iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&ModelParams::ehrenfest(2, 0.5).unwrap());
        for (a, b) in pi.iter().zip([0.25, 0.5, 0.25]) {
            assert!(close(*a, b, 1e-15));
        }
        let pi = stationary_distribution(&ModelParams::ehrenfest(1, 0.3).unwrap());
        assert!(close(pi[0], 0.7, 1e-15) && close(pi[1], 0.3, 1e-15));
    }

    #[test]
    fn stationary_is_invariant() {
        let p = ModelParams::engset(20, 12, 0.4).unwrap();
        let pi = stationary_distribution(&p);
        let q = build_generator(&p).to_matrix();
        for y in 0..pi.len() {
            let s: f64 = (0..pi.len()).map(|x| pi[x] * q[x][y]).sum();
            assert!(s.abs() < 1e-12, "column {y}: {s}");
        }
    }

    #[test]
    fn stationary_scales_to_large_n() {
        let p = ModelParams::ehrenfest(1_000_000, 0.3).unwrap();
        let pi = stationary_distribution(&p);
        let total: f64 = pi.iter().sum();
        assert!(close(total, 1.0, 1e-9));
        let mode = pi
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(mode.abs_diff(300_000) <= 1);
    }

    #[test]
    fn fluid_limit_examples() {
        let p = ModelParams::engset(10, 3, 0.6).unwrap();
        assert!(close(fluid_limit(&p, 0.1, 0.0).unwrap(), 0.1, 1e-15));
        assert!(close(fluid_limit(&p, 0.0, 2f64.ln()).unwrap(), 0.3, 1e-15));
        assert!(fluid_limit(&p, 0.5, 1.0).is_err());
        let sub = ModelParams::engset(10, 8, 0.3).unwrap();
        assert!(close(fluid_limit(&sub, 0.0, 60.0).unwrap(), 0.3, 1e-15));
    }

    #[test]
    fn regime_examples() {
        let r = classify_regime(&ModelParams::engset(400, 120, 0.6).unwrap(), 0.0).unwrap();
        assert_eq!(r.regime, Regime::SuperCritical);
        assert!(close(r.t_star.unwrap(), 2f64.ln(), 1e-14));
        assert!(close(r.limit_variance.unwrap(), 7.0 / 3.0, 1e-12));

        let r = classify_regime(&ModelParams::engset(400, 200, 0.3).unwrap(), 0.0).unwrap();
        assert_eq!(r.regime, Regime::SubCritical);
        let h = 0.5 * (0.5f64 / 0.7).ln() + 0.5 * (0.5f64 / 0.3).ln();
        assert!(close(r.entropy_h.unwrap(), h, 1e-15));
        assert!(close(h, 0.0871, 1e-4));

        let r = classify_regime(&ModelParams::engset(100, 50, 0.5).unwrap(), 0.0).unwrap();
        assert_eq!(r.regime, Regime::Critical);
        assert_eq!(r.critical_delta, Some(0.0));
    }

    #[test]
    fn regime_is_scale_consistent() {
        let a = classify_regime(&ModelParams::engset(400, 120, 0.6).unwrap(), 0.0).unwrap();
        let b = classify_regime(&ModelParams::engset(800, 240, 0.6).unwrap(), 0.0).unwrap();
        assert_eq!(a.regime, b.regime);
        assert_eq!(a.t_star, b.t_star);
        let a = classify_regime(&ModelParams::engset(400, 200, 0.3).unwrap(), 0.0).unwrap();
        let b = classify_regime(&ModelParams::engset(800, 400, 0.3).unwrap(), 0.0).unwrap();
        assert_eq!(a.entropy_h, b.entropy_h);
    }

    #[test]
    fn blocking_limit() {
        let p = ModelParams::engset(2000, 600, 0.6).unwrap();
        let limit = engset_blocking_limit(&p).unwrap();
        let pi = stationary_distribution(&p);
        assert!((pi[600] - limit).abs() <= 0.02, "{} vs {}", pi[600], limit);
        assert!(engset_blocking_limit(&ModelParams::engset(10, 8, 0.6).unwrap()).is_err());
        let near = ModelParams::engset(1000, 300, 0.3 * (1.0 + 1e-9)).unwrap();
        assert!(engset_blocking_limit(&near).unwrap() < 1e-8);
    }
}
