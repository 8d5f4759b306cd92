//! Deterministic invariant suites with pass/fail counts.
//!
//! Each suite is a set of parts; a part compares many measured errors with
//! one tolerance and keeps the worst error and the first failure.

use crate::asymptotics::{
    critical_lt_closed_form, critical_standard_log_density, LawFamily, LawKind, LawShape, LimitLaw,
};
use crate::error::{Error, Result};
use crate::laplace::{descent_coef, hitting_lt, integrate, resolvent_oracle, LaplaceQuery, QuadratureOptions};
use crate::martingale::{engset_residual, harmonicity_residual};
use crate::model::ModelParams;
use crate::numeric::{ln_binomial, SignedLog};
use crate::polys::{generating_identity_residual, krawtchouk_martingale_residual, KrawtchoukBasis};
use crate::sim::with_threads;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use std::time::Instant;

pub const SUITES: [&str; 6] = [
    "oracle",
    "closed-forms",
    "harmonicity",
    "krawtchouk",
    "subcritical-limits",
    "critical-limits",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartOutcome {
    pub label: String,
    pub checks: usize,
    pub failed: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub first_failure: Option<String>,
}

impl PartOutcome {
    fn new(label: &str, tolerance: f64) -> Self {
        PartOutcome {
            label: label.into(),
            checks: 0,
            failed: 0,
            worst: 0.0,
            tolerance,
            first_failure: None,
        }
    }

    /// Records one measured error; errors and NaN count as failures.
    fn record(&mut self, what: impl FnOnce() -> String, measured: Result<f64>) {
        self.checks += 1;
        let ok = match &measured {
            Ok(v) => {
                if v.is_nan() {
                    self.worst = f64::NAN;
                } else if !self.worst.is_nan() {
                    self.worst = self.worst.max(*v);
                }
                *v <= self.tolerance
            }
            Err(_) => false,
        };
        if !ok {
            self.failed += 1;
            if self.first_failure.is_none() {
                let detail = match measured {
                    Ok(v) => format!("{v:e}"),
                    Err(e) => e.to_string(),
                };
                self.first_failure = Some(format!("{}: {detail}", what()));
            }
        }
    }

    fn record_bool(&mut self, what: impl FnOnce() -> String, ok: bool) {
        self.record(what, Ok(if ok { 0.0 } else { f64::INFINITY }));
    }

    fn merge(&mut self, other: PartOutcome) {
        self.checks += other.checks;
        self.failed += other.failed;
        self.worst = if other.worst.is_nan() { f64::NAN } else { self.worst.max(other.worst) };
        if self.first_failure.is_none() {
            self.first_failure = other.first_failure;
        }
    }

    pub fn passed(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub parts: Vec<PartOutcome>,
    pub elapsed_secs: f64,
}

impl SuiteOutcome {
    pub fn checks(&self) -> usize {
        self.parts.iter().map(|p| p.checks).sum()
    }

    pub fn failed(&self) -> usize {
        self.parts.iter().map(|p| p.failed).sum()
    }

    pub fn passed(&self) -> bool {
        self.failed() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteOutcome>,
    pub checks: usize,
    pub failed: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failed == 0
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn lt(p: ModelParams, from: usize, to: usize, alpha: f64) -> Result<f64> {
    hitting_lt(&LaplaceQuery::new(p, from, to, alpha)?)
}

/// Every chain with `N ≤ 25`: Ehrenfest and Engset with every capacity.
fn small_chains() -> Result<Vec<ModelParams>> {
    let mut out = Vec::new();
    for n in 1..=25 {
        for nu in [0.3, 0.7] {
            out.push(ModelParams::ehrenfest(n, nu)?);
            for c in 1..n {
                out.push(ModelParams::engset(n, c, nu)?);
            }
        }
    }
    Ok(out)
}

/// Transform against the resolvent oracle for every pair of states.
pub fn oracle_suite() -> Result<Vec<PartOutcome>> {
    let chains = small_chains()?;
    let parts: Vec<PartOutcome> = chains
        .par_iter()
        .map(|p| {
            let mut part = PartOutcome::new("hitting_lt vs resolvent oracle, N <= 25", 1e-8);
            for from in 0..=p.capacity() {
                for to in 0..=p.capacity() {
                    for alpha in [0.1, 1.0, 10.0] {
                        let gap = LaplaceQuery::new(*p, from, to, alpha)
                            .and_then(|q| Ok(rel(hitting_lt(&q)?, resolvent_oracle(&q)?)));
                        part.record(|| format!("{} N={} C={} nu={} {from}->{to} a={alpha}", p.kind(), p.n(), p.capacity(), p.nu()), gap);
                    }
                }
            }
            part
        })
        .collect();
    let mut total = PartOutcome::new("hitting_lt vs resolvent oracle, N <= 25", 1e-8);
    for p in parts {
        total.merge(p);
    }
    Ok(vec![total])
}

/// `B_x(α) = Σ_k C(N−x,k) r^k Γ(x+1)Γ(α+k)/Γ(α+x+k+1)`.
pub fn descent_gamma_series(p: &ModelParams, x: usize, alpha: f64) -> f64 {
    let n = p.n();
    let ln_r = (p.nu() / p.mu()).ln();
    (0..=n - x)
        .map(|k| {
            let kf = k as f64;
            (ln_binomial(n - x, k) + kf * ln_r + ln_gamma(x as f64 + 1.0) + ln_gamma(alpha + kf)
                - ln_gamma(alpha + x as f64 + kf + 1.0))
            .exp()
        })
        .sum()
}

pub fn closed_form_suite() -> Result<Vec<PartOutcome>> {
    let mut single = PartOutcome::new("N = 1 transforms mu/(mu+a), nu/(nu+a)", 1e-12);
    for nu in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let p = ModelParams::ehrenfest(1, nu)?;
        for alpha in [0.01, 0.5, 1.0, 10.0, 100.0] {
            single.record(|| format!("down nu={nu} a={alpha}"), lt(p, 1, 0, alpha).map(|v| rel(v, p.mu() / (p.mu() + alpha))));
            single.record(|| format!("up nu={nu} a={alpha}"), lt(p, 0, 1, alpha).map(|v| rel(v, nu / (nu + alpha))));
        }
    }
    let mut series = PartOutcome::new("B_x against its Gamma series, N <= 20", 1e-10);
    for n in 1..=20 {
        for nu in [0.3, 0.5, 0.7] {
            let p = ModelParams::ehrenfest(n, nu)?;
            for x in 0..=n {
                for alpha in [0.3, 1.0, 2.5] {
                    let b = descent_coef(&p, x, alpha).map(|b| rel(b.to_f64(), descent_gamma_series(&p, x, alpha)));
                    series.record(|| format!("N={n} nu={nu} x={x} a={alpha}"), b);
                }
            }
        }
    }
    Ok(vec![single, series])
}

pub fn harmonicity_suite() -> Result<Vec<PartOutcome>> {
    let mut exp = PartOutcome::new("exponential martingale, relative residual", 1e-9);
    for n in [1usize, 2, 5, 10, 20, 30] {
        for nu in [0.3, 0.6] {
            let p = ModelParams::ehrenfest(n, nu)?;
            for t in [0.0, 0.5, 1.5, 3.0] {
                let beta_max = (-t as f64).exp() / p.mu();
                for frac in [-1.0, -0.5, 0.0, 0.25, 0.5, 1.0] {
                    let beta = frac * beta_max;
                    for x in 0..=n {
                        exp.record(
                            || format!("N={n} nu={nu} t={t} beta={beta} x={x}"),
                            harmonicity_residual(&p, beta, x, t).map(|r| r.relative()),
                        );
                    }
                }
            }
        }
    }
    let mut engset = PartOutcome::new("Engset combined function, states 1..=C", 1e-10);
    for n in [2usize, 3, 6, 10, 20, 30] {
        for nu in [0.3, 0.6] {
            for c in 1..n {
                let p = ModelParams::engset(n, c, nu)?;
                for alpha in [0.5, 1.0, 2.0] {
                    for x in 1..=c {
                        engset.record(
                            || format!("N={n} C={c} nu={nu} a={alpha} x={x}"),
                            engset_residual(&p, alpha, x).map(|r| r.relative()),
                        );
                    }
                }
            }
        }
    }
    let mut kraw = PartOutcome::new("Krawtchouk martingales, N <= 30", 1e-9);
    for n in 1..=30 {
        for nu in [0.3, 0.5, 0.7] {
            let p = ModelParams::ehrenfest(n, nu)?;
            for deg in 0..=n {
                for x in 0..=n {
                    kraw.record(
                        || format!("N={n} nu={nu} n={deg} x={x}"),
                        krawtchouk_martingale_residual(deg, &p, x).map(|r| r.relative()),
                    );
                }
            }
        }
    }
    Ok(vec![exp, engset, kraw])
}

pub fn krawtchouk_suite() -> Result<Vec<PartOutcome>> {
    let mut orth = PartOutcome::new("orthogonality m != n, N <= 30", 1e-10);
    let mut gen = PartOutcome::new("generating identity, u in [-0.9, 0.9], N <= 30", 1e-10);
    for n in 1..=30 {
        for nu in [0.3, 0.5, 0.7] {
            let p = ModelParams::ehrenfest(n, nu)?;
            let basis = KrawtchoukBasis::new(&p);
            for a in 0..=n {
                for b in 0..a {
                    orth.record(|| format!("N={n} nu={nu} <K_{a},K_{b}>"), basis.inner_product(a, b).map(|r| r.relative()));
                }
            }
            for x in 0..=n {
                for k in -9..=9 {
                    let u = k as f64 / 10.0;
                    gen.record(
                        || format!("N={n} nu={nu} x={x} u={u}"),
                        generating_identity_residual(x, u, &p).map(|r| r.relative()),
                    );
                }
            }
        }
    }
    Ok(vec![orth, gen])
}

/// The families and `N` values of the sub-critical convergence checks.
pub fn subcritical_families() -> [LawFamily; 3] {
    [
        LawFamily::new(LawKind::SubCritFullExp, 0.5, 1.0),
        LawFamily::new(LawKind::SubCritEntropyExp, 0.3, 0.5),
        LawFamily::new(LawKind::SubCritEmptyExp, 0.4, 0.6),
    ]
}

fn convergence_parts(family: &LawFamily, ns: &[usize], final_tol: Option<f64>) -> Result<Vec<PartOutcome>> {
    let name = family.kind.name();
    let mut decrease = PartOutcome::new(&format!("{name}: gap strictly decreases over N = {ns:?}"), 0.0);
    let mut last = final_tol.map(|tol| PartOutcome::new(&format!("{name}: gap at N = {}, alpha = 1", ns[ns.len() - 1]), tol));
    let table = crate::asymptotics::convergence_study(family, ns, &[0.5, 1.0, 2.0], None);
    match table {
        Ok(table) => {
            for alpha in [0.5, 1.0, 2.0] {
                let gaps = table.gaps(alpha);
                decrease.record_bool(|| format!("alpha={alpha} gaps {gaps:?}"), table.gaps_strictly_decrease(alpha));
                if alpha == 1.0 {
                    if let Some(part) = last.as_mut() {
                        let g = gaps.last().map(|&(_, g)| g).ok_or_else(|| Error::InvalidParams("empty table".into()));
                        part.record(|| format!("alpha=1 gaps {gaps:?}"), g);
                    }
                }
            }
        }
        Err(e) => {
            decrease.record(|| name.to_string(), Err(e.clone()));
            if let Some(part) = last.as_mut() {
                part.record(|| name.to_string(), Err(e));
            }
        }
    }
    Ok(std::iter::once(decrease).chain(last).collect())
}

pub fn subcritical_suite() -> Result<Vec<PartOutcome>> {
    let mut parts = Vec::new();
    for f in subcritical_families() {
        parts.extend(convergence_parts(&f, &[40, 80, 160], Some(5e-2))?);
    }
    Ok(parts)
}

pub fn critical_suite() -> Result<Vec<PartOutcome>> {
    let opts = QuadratureOptions::default();
    let mut density = PartOutcome::new("delta = 0 density integrates to 1", 1e-10);
    let f = |w: f64| SignedLog::from_ln(critical_standard_log_density(w));
    density.record(
        || "integral over [-6, 60]".into(),
        integrate(&f, -6.0, 60.0, SignedLog::ZERO, &opts).map(|r| (r.to_f64() - 1.0).abs()),
    );
    let mut closed = PartOutcome::new("Mellin quadrature vs duplication closed form", 1e-10);
    for nu in [0.2, 0.5, 0.8] {
        let law = LimitLaw::new(LawKind::CriticalSaturation, LawShape::CriticalMellin { delta: 0.0, nu })?;
        for alpha in [0.5, 1.0, 2.0] {
            closed.record(
                || format!("nu={nu} a={alpha}"),
                law.lt(alpha).map(|v| rel(v, critical_lt_closed_form(nu, alpha))),
            );
        }
    }
    let mut finite = PartOutcome::new("exact LT of T_C - log(N)/2 at N = 10^4, nu = 0.5 vs limit", 2e-2);
    let big = ModelParams::ehrenfest(10_000, 0.5)?;
    let law = LimitLaw::new(LawKind::CriticalSaturation, LawShape::CriticalMellin { delta: 0.0, nu: 0.5 })?;
    for alpha in [0.5, 1.0, 2.0] {
        let shift = 0.5 * (10_000f64).ln();
        let gap = LaplaceQuery::new(big, 0, 5000, alpha)
            .and_then(|q| crate::laplace::hitting_lt_log(&q))
            .and_then(|ln| Ok(rel((ln + alpha * shift).exp(), law.lt(alpha)?)));
        finite.record(|| format!("a={alpha}"), gap);
    }
    let mut parts = vec![density, closed, finite];
    parts.extend(convergence_parts(
        &LawFamily::critical(LawKind::CriticalEmptyExp, 0.5, 0.0),
        &[40, 80],
        None,
    )?);
    Ok(parts)
}

/// Runs one named suite.
pub fn run_suite(name: &str, threads: Option<usize>) -> Result<SuiteOutcome> {
    let start = Instant::now();
    let parts = with_threads(threads, || match name {
        "oracle" => oracle_suite(),
        "closed-forms" => closed_form_suite(),
        "harmonicity" => harmonicity_suite(),
        "krawtchouk" => krawtchouk_suite(),
        "subcritical-limits" => subcritical_suite(),
        "critical-limits" => critical_suite(),
        other => Err(Error::InvalidParams(format!(
            "unknown suite {other:?}; expected one of {}",
            SUITES.join(", ")
        ))),
    })??;
    Ok(SuiteOutcome {
        name: name.into(),
        parts,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn run_suites(names: &[&str], threads: Option<usize>) -> Result<VerifyReport> {
    let suites = names
        .iter()
        .map(|n| run_suite(n, threads))
        .collect::<Result<Vec<_>>>()?;
    let checks = suites.iter().map(SuiteOutcome::checks).sum();
    let failed = suites.iter().map(SuiteOutcome::failed).sum();
    Ok(VerifyReport { suites, checks, failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn part_bookkeeping() {
        let mut p = PartOutcome::new("x", 1e-3);
        p.record(|| "a".into(), Ok(1e-4));
        p.record(|| "b".into(), Ok(1e-2));
        p.record(|| "c".into(), Ok(f64::NAN));
        p.record(|| "d".into(), Err(Error::Unsupported("no".into())));
        assert_eq!((p.checks, p.failed), (4, 3));
        assert!(p.worst.is_nan());
        assert_eq!(p.first_failure.as_deref(), Some("b: 1e-2"));
    }

    #[test]
    fn unknown_suite() {
        assert!(run_suite("nope", None).is_err());
    }

    #[test]
    fn gamma_series_at_one_particle() {
        // B_0(α) = ∫ (1+ru) u^{α−1} = 1/α + r/(α+1)
        let p = ModelParams::ehrenfest(1, 0.6).unwrap();
        let r = 0.6 / 0.4;
        assert!((descent_gamma_series(&p, 0, 2.0) - (0.5 + r / 3.0)).abs() < 1e-15);
    }
}
