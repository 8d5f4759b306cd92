//! Limit laws of rescaled hitting times and their finite-`N` convergence.
//!
//! Every law describes `Y = scale · (T − shift)` for one hitting time `T`:
//!
//! | law | hit | scale | shift | limit |
//! |---|---|---|---|---|
//! | super-critical | `0 → C` | `√N` | `log(ν/(ν−η))` | `N(0, η(1−η)/(ν−η)²)` |
//! | full | `0 → N` | `Nν^N` | 0 | `Exp(1−ν)` |
//! | entropy | `0 → C` | `(η−ν)√N e^{−NH} / √(2πη(1−η))` | 0 | `Exp(1)` |
//! | empty | `C → 0` | `N(1−ν)^N` | 0 | `Exp(ν)` |
//! | critical saturation | `0 → C` | 1 | `log(N)/2` | `Z` |
//! | critical empty | `C → 0` | `N(1−ν)^N` | 0 | `Exp(2ν)` |
//!
//! `Z` has transform `Γ(α) / ∫₀^∞ exp(uδ/ν − u²(1−ν)/(2ν)) u^{α−1} du`.
//!
//! At criticality the process hitting 0 from `C` does not waste time on
//! excursions above `C` (it is pushed back by the reflection), so the empty
//! state is reached twice as fast as in the sub-critical case.

pub mod stats;

pub use stats::{chi_square_test, kolmogorov_q, ks_statistic, two_sample_ks, ChiSquareTest, KsTest};

use crate::error::{Error, Result};
use crate::laplace::quadrature::gaussian_mellin;
use crate::laplace::{hitting_lt_log, LaplaceQuery, QuadratureOptions};
use crate::model::{bernoulli_entropy, classify_regime, ModelParams, ProcessKind, Regime};
use crate::sim::{with_threads, HittingSampleSet};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{LN_2, PI, SQRT_2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LawKind {
    SuperCriticalNormal,
    SubCritFullExp,
    SubCritEntropyExp,
    SubCritEmptyExp,
    CriticalSaturation,
    CriticalEmptyExp,
}

impl LawKind {
    pub const ALL: [LawKind; 6] = [
        LawKind::SuperCriticalNormal,
        LawKind::SubCritFullExp,
        LawKind::SubCritEntropyExp,
        LawKind::SubCritEmptyExp,
        LawKind::CriticalSaturation,
        LawKind::CriticalEmptyExp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LawKind::SuperCriticalNormal => "supercritical",
            LawKind::SubCritFullExp => "subcritical-full",
            LawKind::SubCritEntropyExp => "subcritical-entropy",
            LawKind::SubCritEmptyExp => "subcritical-empty",
            LawKind::CriticalSaturation => "critical-saturation",
            LawKind::CriticalEmptyExp => "critical-empty",
        }
    }

    pub fn from_name(s: &str) -> Option<LawKind> {
        LawKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LawShape {
    Normal { variance: f64 },
    Exponential { rate: f64 },
    /// The critical limit `Z`, centred at `log(N)/2`.
    CriticalMellin { delta: f64, nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitLaw {
    pub kind: LawKind,
    pub shape: LawShape,
}

impl LimitLaw {
    pub fn new(kind: LawKind, shape: LawShape) -> Result<Self> {
        let ok = match shape {
            LawShape::Normal { variance } => variance > 0.0 && variance.is_finite(),
            LawShape::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            LawShape::CriticalMellin { delta, nu } => delta.is_finite() && nu > 0.0 && nu < 1.0,
        };
        if !ok {
            return Err(Error::InvalidParams(format!("invalid limit law parameters {shape:?}")));
        }
        Ok(LimitLaw { kind, shape })
    }

    pub fn has_density(&self) -> bool {
        !matches!(self.shape, LawShape::CriticalMellin { delta, .. } if delta != 0.0)
    }

    /// Distribution function, when available in closed form.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match self.shape {
            LawShape::Normal { variance } => Some(0.5 * erfc(-x / (SQRT_2 * variance.sqrt()))),
            LawShape::Exponential { rate } => Some(if x <= 0.0 { 0.0 } else { -(-rate * x).exp_m1() }),
            LawShape::CriticalMellin { delta, nu } if delta == 0.0 => {
                Some(critical_standard_cdf(x - critical_centre(nu)))
            }
            LawShape::CriticalMellin { .. } => None,
        }
    }

    pub fn log_density(&self, x: f64) -> Option<f64> {
        match self.shape {
            LawShape::Normal { variance } => Some(-x * x / (2.0 * variance) - 0.5 * (2.0 * PI * variance).ln()),
            LawShape::Exponential { rate } => Some(if x < 0.0 { f64::NEG_INFINITY } else { rate.ln() - rate * x }),
            LawShape::CriticalMellin { delta, nu } if delta == 0.0 => {
                Some(critical_standard_log_density(x - critical_centre(nu)))
            }
            LawShape::CriticalMellin { .. } => None,
        }
    }

    /// `E[exp(−αY)]` for `α ≥ 0`.
    pub fn lt(&self, alpha: f64) -> Result<f64> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::out_of_range("alpha", alpha, "alpha >= 0"));
        }
        if alpha == 0.0 {
            return Ok(1.0);
        }
        Ok(match self.shape {
            LawShape::Normal { variance } => (0.5 * variance * alpha * alpha).exp(),
            LawShape::Exponential { rate } => rate / (rate + alpha),
            LawShape::CriticalMellin { delta, nu } => {
                let m = gaussian_mellin(delta, nu, alpha, &QuadratureOptions::default())?;
                (ln_gamma(alpha) - m.log_value).exp()
            }
        })
    }

    pub fn mean(&self) -> Option<f64> {
        match self.shape {
            LawShape::Normal { .. } => Some(0.0),
            LawShape::Exponential { rate } => Some(1.0 / rate),
            LawShape::CriticalMellin { .. } => None,
        }
    }

    pub fn variance(&self) -> Option<f64> {
        match self.shape {
            LawShape::Normal { variance } => Some(variance),
            LawShape::Exponential { rate } => Some(1.0 / (rate * rate)),
            LawShape::CriticalMellin { .. } => None,
        }
    }
}

/// `log(ν/(1−ν))/2`, the offset between `Z` at `δ = 0` and the standard form.
pub fn critical_centre(nu: f64) -> f64 {
    0.5 * (nu / (1.0 - nu)).ln()
}

/// `ln` of `√(2/π) exp(−w − e^{−2w}/2)`.
pub fn critical_standard_log_density(w: f64) -> f64 {
    0.5 * (2.0 / PI).ln() - w - 0.5 * (-2.0 * w).exp()
}

pub fn critical_standard_cdf(w: f64) -> f64 {
    erfc((-w).exp() / SQRT_2)
}

/// Transform of `Z` at `δ = 0` through the duplication formula:
/// `((1−ν)/ν)^{α/2} 2^{α/2} Γ((α+1)/2) / √π`.
pub fn critical_lt_closed_form(nu: f64, alpha: f64) -> f64 {
    let ln = 0.5 * alpha * ((1.0 - nu) / nu).ln() + 0.5 * alpha * LN_2 + ln_gamma(0.5 * (alpha + 1.0)) - 0.5 * PI.ln();
    ln.exp()
}

/// `Y = scale · (T − shift)`, with the scale kept as a logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineScaling {
    pub ln_scale: f64,
    pub shift: f64,
}

impl AffineScaling {
    pub fn identity() -> Self {
        AffineScaling { ln_scale: 0.0, shift: 0.0 }
    }

    pub fn scale(&self) -> f64 {
        self.ln_scale.exp()
    }

    pub fn apply(&self, t: f64) -> f64 {
        self.scale() * (t - self.shift)
    }
}

/// A limit law together with the finite-`N` hitting time it approximates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaledLimit {
    pub law: LimitLaw,
    pub scaling: AffineScaling,
    pub params: ModelParams,
    pub from_state: usize,
    pub to_state: usize,
    /// `H` for the entropy law.
    pub entropy_h: Option<f64>,
}

impl ScaledLimit {
    /// `E[exp(−α · scale · (T − shift))]` from the exact transform.
    pub fn exact_lt(&self, alpha: f64) -> Result<f64> {
        if alpha == 0.0 {
            return Ok(1.0);
        }
        let a = alpha * self.scaling.scale();
        if !(a > 0.0) {
            return Err(Error::out_of_range("alpha * scale", a, "a positive normal number"));
        }
        let q = LaplaceQuery::new(self.params, self.from_state, self.to_state, a)?;
        Ok((hitting_lt_log(&q)? + a * self.scaling.shift).exp())
    }

    pub fn limit_lt(&self, alpha: f64) -> Result<f64> {
        self.law.lt(alpha)
    }

    pub fn gap(&self, alpha: f64) -> Result<f64> {
        Ok((self.exact_lt(alpha)? - self.limit_lt(alpha)?).abs())
    }
}

fn wrong_regime(expected: &str, p: &ModelParams) -> Error {
    Error::WrongRegime {
        expected: expected.into(),
        found: format!("N = {}, C = {}, nu = {}, eta = {}", p.n(), p.capacity(), p.nu(), p.eta()),
    }
}

fn ln_n(p: &ModelParams) -> f64 {
    (p.n() as f64).ln()
}

/// Normal limit of `√N (T_C − log(ν/(ν−η)))` from 0.
pub fn supercritical_law(p: &ModelParams) -> Result<ScaledLimit> {
    let (nu, eta) = (p.nu(), p.eta());
    if !(nu > eta) {
        return Err(wrong_regime("SuperCritical (nu > eta)", p));
    }
    let variance = eta * (1.0 - eta) / (nu - eta).powi(2);
    Ok(ScaledLimit {
        law: LimitLaw::new(LawKind::SuperCriticalNormal, LawShape::Normal { variance })?,
        scaling: AffineScaling {
            ln_scale: 0.5 * ln_n(p),
            shift: (nu / (nu - eta)).ln(),
        },
        params: *p,
        from_state: 0,
        to_state: p.capacity(),
        entropy_h: None,
    })
}

/// `Exp(1−ν)` limit of `Nν^N T_N` from 0 when `C = N`.
pub fn subcritical_full_law(p: &ModelParams) -> Result<ScaledLimit> {
    if p.capacity() != p.n() {
        return Err(wrong_regime("SubCritical with C = N", p));
    }
    let nu = p.nu();
    Ok(ScaledLimit {
        law: LimitLaw::new(LawKind::SubCritFullExp, LawShape::Exponential { rate: 1.0 - nu })?,
        scaling: AffineScaling {
            ln_scale: ln_n(p) + p.n() as f64 * nu.ln(),
            shift: 0.0,
        },
        params: *p,
        from_state: 0,
        to_state: p.n(),
        entropy_h: None,
    })
}

/// `Exp(1)` limit of the scaled `T_C` from 0 when `ν < η < 1`.
pub fn subcritical_entropy_law(p: &ModelParams) -> Result<ScaledLimit> {
    let (nu, eta) = (p.nu(), p.eta());
    if !(nu < eta && eta < 1.0) {
        return Err(wrong_regime("SubCritical (nu < eta < 1)", p));
    }
    let h = bernoulli_entropy(eta, nu);
    let n = p.n() as f64;
    let ln_scale = (eta - nu).ln() + 0.5 * n.ln() - n * h - 0.5 * (2.0 * PI * eta * (1.0 - eta)).ln();
    Ok(ScaledLimit {
        law: LimitLaw::new(LawKind::SubCritEntropyExp, LawShape::Exponential { rate: 1.0 })?,
        scaling: AffineScaling { ln_scale, shift: 0.0 },
        params: *p,
        from_state: 0,
        to_state: p.capacity(),
        entropy_h: Some(h),
    })
}

fn empty_scaling(p: &ModelParams) -> AffineScaling {
    AffineScaling {
        ln_scale: ln_n(p) + p.n() as f64 * (1.0 - p.nu()).ln(),
        shift: 0.0,
    }
}

/// `Exp(ν)` limit of `N(1−ν)^N T_0` from `C` when `ν < η`.
pub fn subcritical_empty_law(p: &ModelParams) -> Result<ScaledLimit> {
    if !(p.nu() < p.eta()) {
        return Err(wrong_regime("SubCritical (nu < eta)", p));
    }
    Ok(ScaledLimit {
        law: LimitLaw::new(LawKind::SubCritEmptyExp, LawShape::Exponential { rate: p.nu() })?,
        scaling: empty_scaling(p),
        params: *p,
        from_state: p.capacity(),
        to_state: 0,
        entropy_h: None,
    })
}

fn require_critical(p: &ModelParams) -> Result<()> {
    let report = classify_regime(p, 0.0)?;
    if report.regime != Regime::Critical {
        return Err(wrong_regime("Critical (|C - nu N| <= sqrt(N))", p));
    }
    Ok(())
}

/// Limit `Z` of `T_C − log(N)/2` from 0 when `C = νN + δ√N`.
pub fn critical_saturation_law(p: &ModelParams, delta: f64) -> Result<ScaledLimit> {
    require_critical(p)?;
    Ok(ScaledLimit {
        law: LimitLaw::new(LawKind::CriticalSaturation, LawShape::CriticalMellin { delta, nu: p.nu() })?,
        scaling: AffineScaling {
            ln_scale: 0.0,
            shift: 0.5 * ln_n(p),
        },
        params: *p,
        from_state: 0,
        to_state: p.capacity(),
        entropy_h: None,
    })
}

/// `Exp(2ν)` limit of `N(1−ν)^N T_0` from `C` when `C = νN + o(√N)`.
pub fn critical_empty_law(p: &ModelParams) -> Result<ScaledLimit> {
    require_critical(p)?;
    if p.capacity() == p.n() {
        return Err(wrong_regime("Critical with a reflecting capacity C < N", p));
    }
    Ok(ScaledLimit {
        law: LimitLaw::new(LawKind::CriticalEmptyExp, LawShape::Exponential { rate: 2.0 * p.nu() })?,
        scaling: empty_scaling(p),
        params: *p,
        from_state: p.capacity(),
        to_state: 0,
        entropy_h: None,
    })
}

/// Parameters of a law followed along a sequence of `N`.
///
/// `eta` fixes `C = round(ηN)` for the non-critical laws; `delta` fixes
/// `C = round(νN + δ√N)` for the critical ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LawFamily {
    pub kind: LawKind,
    pub nu: f64,
    pub eta: f64,
    pub delta: f64,
}

impl LawFamily {
    pub fn new(kind: LawKind, nu: f64, eta: f64) -> Self {
        LawFamily { kind, nu, eta, delta: 0.0 }
    }

    pub fn critical(kind: LawKind, nu: f64, delta: f64) -> Self {
        LawFamily { kind, nu, eta: nu, delta }
    }

    pub fn params_at(&self, n: usize) -> Result<ModelParams> {
        let nf = n as f64;
        let c = match self.kind {
            LawKind::SubCritFullExp => return ModelParams::ehrenfest(n, self.nu),
            LawKind::CriticalSaturation | LawKind::CriticalEmptyExp => {
                (self.nu * nf + self.delta * nf.sqrt()).round()
            }
            _ => (self.eta * nf).round(),
        };
        if !(c >= 0.0 && c <= nf) {
            return Err(Error::InvalidParams(format!("capacity {c} is not in 0..={n}")));
        }
        let c = c as usize;
        let kind = if c == n { ProcessKind::Ehrenfest } else { ProcessKind::Engset };
        ModelParams::new(kind, n, c, self.nu, 1.0 - self.nu)
    }

    pub fn limit_at(&self, n: usize) -> Result<ScaledLimit> {
        let p = self.params_at(n)?;
        match self.kind {
            LawKind::SuperCriticalNormal => supercritical_law(&p),
            LawKind::SubCritFullExp => subcritical_full_law(&p),
            LawKind::SubCritEntropyExp => subcritical_entropy_law(&p),
            LawKind::SubCritEmptyExp => subcritical_empty_law(&p),
            LawKind::CriticalSaturation => critical_saturation_law(&p, self.delta),
            LawKind::CriticalEmptyExp => critical_empty_law(&p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub alpha: f64,
    pub ln_scale: f64,
    pub shift: f64,
    pub exact_lt: f64,
    pub limit_lt: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub family: LawFamily,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Gaps at `alpha`, in increasing `N`.
    pub fn gaps(&self, alpha: f64) -> Vec<(usize, f64)> {
        let mut g: Vec<_> = self.rows.iter().filter(|r| r.alpha == alpha).map(|r| (r.n, r.gap)).collect();
        g.sort_by_key(|&(n, _)| n);
        g
    }

    pub fn gaps_strictly_decrease(&self, alpha: f64) -> bool {
        self.gaps(alpha).windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::InvalidParams(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParams(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidParams(e.to_string()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

/// Exact scaled transform against the limit for every `(N, α)` pair.
pub fn convergence_study(
    family: &LawFamily,
    ns: &[usize],
    alphas: &[f64],
    threads: Option<usize>,
) -> Result<ConvergenceTable> {
    let cells: Vec<(usize, f64)> = ns.iter().flat_map(|&n| alphas.iter().map(move |&a| (n, a))).collect();
    let rows = with_threads(threads, || {
        cells
            .par_iter()
            .map(|&(n, alpha)| {
                let lim = family.limit_at(n)?;
                let exact_lt = lim.exact_lt(alpha)?;
                let limit_lt = lim.limit_lt(alpha)?;
                Ok(ConvergenceRow {
                    n,
                    alpha,
                    ln_scale: lim.scaling.ln_scale,
                    shift: lim.scaling.shift,
                    exact_lt,
                    limit_lt,
                    gap: (exact_lt - limit_lt).abs(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ConvergenceTable { family: *family, rows })
}

/// Kolmogorov–Smirnov distance between `scaling`-transformed hitting times
/// and `law`.
pub fn ks_distance(samples: &HittingSampleSet, law: &LimitLaw, scaling: &AffineScaling) -> Result<f64> {
    if samples.censored_count() > 0 {
        return Err(Error::Censored {
            count: samples.censored_count(),
            total: samples.n_paths(),
        });
    }
    if law.cdf(0.0).is_none() {
        return Err(Error::Unsupported(format!("{:?} has no closed-form cdf", law.kind)));
    }
    let ys: Vec<f64> = samples.times.iter().map(|&t| scaling.apply(t)).collect();
    ks_statistic(&ys, |y| law.cdf(y).unwrap_or(f64::NAN))
}
