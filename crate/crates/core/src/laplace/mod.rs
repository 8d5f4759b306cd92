//! Hitting-time Laplace transforms of the Ehrenfest and Engset processes.
//!
//! With `r = ν/μ` the building blocks are
//!
//! ```text
//! B_x(α) = ∫₀¹ (1−u)^x (1+r u)^{N−x} u^{α−1} du
//! D_x(α) = ∫₀¹ (1−u)^{N−x} (1+u/r)^x u^{α−1} du
//! b_N(α) = ν ∫₀¹ (1−u)^C (1+r u)^{N−C−1} u^α du
//! d_N(α) = μ ∫₀¹ (1−u)^{N−C−1} (1+u/r)^C u^α du
//! G_x(α) = d_N(α) B_x(α) + b_N(α) D_x(α)
//! ```
//!
//! and `E_s[e^{−αT_t}] = F(s)/F(t)` with `F = D` for upward hits, `F = B` for
//! downward hits of the Ehrenfest process and `F = G` for downward hits of the
//! reflected Engset process.

pub mod quadrature;
pub mod resolvent;

pub use quadrature::{integrate, QuadratureOptions, QuadratureResult};
pub use resolvent::{resolvent_oracle, resolvent_oracle_with_cap, DEFAULT_ORACLE_CAP};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numeric::{log_sum_exp, SignedLog};
use quadrature::{ln_power_weight, power_integral};
use serde::Serialize;

/// One hitting-time transform `E_from[exp(−α T_to)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceQuery {
    params: ModelParams,
    from_state: usize,
    to_state: usize,
    alpha: f64,
}

impl LaplaceQuery {
    pub fn new(params: ModelParams, from_state: usize, to_state: usize, alpha: f64) -> Result<Self> {
        params.check_state("from", from_state)?;
        params.check_state("to", to_state)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::out_of_range("alpha", alpha, "alpha > 0"));
        }
        Ok(LaplaceQuery {
            params,
            from_state,
            to_state,
            alpha,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn from_state(&self) -> usize {
        self.from_state
    }
    pub fn to_state(&self) -> usize {
        self.to_state
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.params, self.from_state, self.to_state, alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range("alpha", alpha, "alpha > 0"))
    }
}

/// Exponents `(m, k, r)` of the integrand `(1−u)^m (1+r u)^k` of `B_x`.
fn b_shape(p: &ModelParams, x: usize) -> (f64, f64, f64) {
    (x as f64, (p.n() - x) as f64, p.nu() / p.mu())
}

/// Exponents `(m, k, r)` of the integrand of `D_x`.
fn d_shape(p: &ModelParams, x: usize) -> (f64, f64, f64) {
    ((p.n() - x) as f64, x as f64, p.mu() / p.nu())
}

fn check_full_state(p: &ModelParams, x: usize) -> Result<()> {
    if x > p.n() {
        Err(Error::out_of_range("x", x, format!("0..={}", p.n())))
    } else {
        Ok(())
    }
}

/// `B_x(α)`, the transform used for downward hits.
#[doc(alias = "B")]
pub fn descent_coef(p: &ModelParams, x: usize, alpha: f64) -> Result<QuadratureResult> {
    descent_coef_with(p, x, alpha, &QuadratureOptions::default())
}

pub fn descent_coef_with(p: &ModelParams, x: usize, alpha: f64, opts: &QuadratureOptions) -> Result<QuadratureResult> {
    check_full_state(p, x)?;
    check_alpha(alpha)?;
    let (m, k, r) = b_shape(p, x);
    power_integral(m, k, r, alpha, opts)
}

/// `D_x(α)`, the transform used for upward hits.
#[doc(alias = "D")]
pub fn ascent_coef(p: &ModelParams, x: usize, alpha: f64) -> Result<QuadratureResult> {
    ascent_coef_with(p, x, alpha, &QuadratureOptions::default())
}

pub fn ascent_coef_with(p: &ModelParams, x: usize, alpha: f64, opts: &QuadratureOptions) -> Result<QuadratureResult> {
    check_full_state(p, x)?;
    check_alpha(alpha)?;
    let (m, k, r) = d_shape(p, x);
    power_integral(m, k, r, alpha, opts)
}

/// The reflection coefficients `(b_N(α), d_N(α))` of the Engset process.
pub fn reflection_coefs(p: &ModelParams, alpha: f64) -> Result<(QuadratureResult, QuadratureResult)> {
    reflection_coefs_with(p, alpha, &QuadratureOptions::default())
}

pub fn reflection_coefs_with(
    p: &ModelParams,
    alpha: f64,
    opts: &QuadratureOptions,
) -> Result<(QuadratureResult, QuadratureResult)> {
    check_alpha(alpha)?;
    if !p.is_reflected() {
        return Err(Error::Unsupported(
            "reflection coefficients need C < N; with C = N use the Ehrenfest formulas (descent_coef/ascent_coef)"
                .into(),
        ));
    }
    let (n, c) = (p.n() as f64, p.capacity() as f64);
    let b = power_integral(c, n - c - 1.0, p.nu() / p.mu(), alpha + 1.0, opts)?.scale_ln(p.nu().ln());
    let d = power_integral(n - c - 1.0, c, p.mu() / p.nu(), alpha + 1.0, opts)?.scale_ln(p.mu().ln());
    Ok((b, d))
}

/// Which function's ratio gives a particular transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformFormula {
    Trivial,
    Ascent,
    Descent,
    ReflectedDescent,
}

/// A transform together with the two quadratures that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LtEvaluation {
    pub lt: f64,
    pub log_lt: f64,
    pub formula: TransformFormula,
    pub numerator: Option<QuadratureResult>,
    pub denominator: Option<QuadratureResult>,
}

impl LtEvaluation {
    /// Relative error bound inherited from the two quadratures.
    pub fn relative_error(&self) -> f64 {
        match (self.numerator, self.denominator) {
            (Some(a), Some(b)) => a.relative_error() + b.relative_error(),
            _ => 0.0,
        }
    }
}

fn formula_for(q: &LaplaceQuery) -> TransformFormula {
    let (s, t) = (q.from_state, q.to_state);
    if s == t {
        TransformFormula::Trivial
    } else if s < t {
        TransformFormula::Ascent
    } else if q.params.is_reflected() {
        TransformFormula::ReflectedDescent
    } else {
        TransformFormula::Descent
    }
}

/// `G_x(α) = d_N B_x + b_N D_x`.
fn reflected_coef(
    p: &ModelParams,
    x: usize,
    alpha: f64,
    bd: &(QuadratureResult, QuadratureResult),
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    let (b, d) = bd;
    let big_b = descent_coef_with(p, x, alpha, opts)?;
    let big_d = ascent_coef_with(p, x, alpha, opts)?;
    let left = big_b.scale_ln(d.log_value);
    let right = big_d.scale_ln(b.log_value);
    Ok(left.combine(&right))
}

pub fn hitting_lt_detailed(q: &LaplaceQuery) -> Result<LtEvaluation> {
    hitting_lt_detailed_with(q, &QuadratureOptions::default())
}

pub fn hitting_lt_detailed_with(q: &LaplaceQuery, opts: &QuadratureOptions) -> Result<LtEvaluation> {
    let p = &q.params;
    let (s, t, alpha) = (q.from_state, q.to_state, q.alpha);
    let formula = formula_for(q);
    let (num, den) = match formula {
        TransformFormula::Trivial => {
            return Ok(LtEvaluation {
                lt: 1.0,
                log_lt: 0.0,
                formula,
                numerator: None,
                denominator: None,
            })
        }
        TransformFormula::Ascent => (ascent_coef_with(p, s, alpha, opts)?, ascent_coef_with(p, t, alpha, opts)?),
        TransformFormula::Descent => (descent_coef_with(p, s, alpha, opts)?, descent_coef_with(p, t, alpha, opts)?),
        TransformFormula::ReflectedDescent => {
            let bd = reflection_coefs_with(p, alpha, opts)?;
            (reflected_coef(p, s, alpha, &bd, opts)?, reflected_coef(p, t, alpha, &bd, opts)?)
        }
    };
    // a transform of a hitting time never exceeds 1; clamp rounding overshoot
    let log_lt = (num.log_value - den.log_value).min(0.0);
    Ok(LtEvaluation {
        lt: log_lt.exp(),
        log_lt,
        formula,
        numerator: Some(num),
        denominator: Some(den),
    })
}

/// `E_from[exp(−α T_to)]`.
pub fn hitting_lt(q: &LaplaceQuery) -> Result<f64> {
    hitting_lt_detailed(q).map(|e| e.lt)
}

/// `ln E_from[exp(−α T_to)]`, usable when the transform underflows.
pub fn hitting_lt_log(q: &LaplaceQuery) -> Result<f64> {
    hitting_lt_detailed(q).map(|e| e.log_lt)
}

/// `1 − E_from[exp(−α T_to)]` without cancellation: the difference of the
/// two integrands is integrated directly, so small `α` keeps full precision.
pub fn hitting_lt_complement(q: &LaplaceQuery) -> Result<f64> {
    let opts = QuadratureOptions::default();
    let p = &q.params;
    let (s, t, alpha) = (q.from_state, q.to_state, q.alpha);
    let formula = formula_for(q);
    let kernel = move |u: f64| if alpha == 1.0 { 0.0 } else { (alpha - 1.0) * u.ln() };
    let ln_w = |shape: (f64, f64, f64), u: f64| ln_power_weight(shape.0, shape.1, shape.2, u);
    let (diff, den) = match formula {
        TransformFormula::Trivial => return Ok(0.0),
        TransformFormula::Ascent | TransformFormula::Descent => {
            let shape = if formula == TransformFormula::Ascent { d_shape } else { b_shape };
            let (ss, ts) = (shape(p, s), shape(p, t));
            let f = |u: f64| {
                if u == 0.0 {
                    return SignedLog::ZERO;
                }
                (SignedLog::from_ln(ln_w(ts, u)) - SignedLog::from_ln(ln_w(ss, u))).scale_ln(kernel(u))
            };
            let diff = integrate(&f, 0.0, 1.0, SignedLog::ZERO, &opts)?;
            let den = power_integral(ts.0, ts.1, ts.2, alpha, &opts)?;
            (diff, den)
        }
        TransformFormula::ReflectedDescent => {
            let (b, d) = reflection_coefs_with(p, alpha, &opts)?;
            let (bs, bt) = (b_shape(p, s), b_shape(p, t));
            let (ds, dt) = (d_shape(p, s), d_shape(p, t));
            let f = |u: f64| {
                if u == 0.0 {
                    return SignedLog::ZERO;
                }
                let g_t = SignedLog::from_ln(ln_w(bt, u) + d.log_value) + SignedLog::from_ln(ln_w(dt, u) + b.log_value);
                let g_s = SignedLog::from_ln(ln_w(bs, u) + d.log_value) + SignedLog::from_ln(ln_w(ds, u) + b.log_value);
                (g_t - g_s).scale_ln(kernel(u))
            };
            let diff = integrate(&f, 0.0, 1.0, SignedLog::ZERO, &opts)?;
            let den = reflected_coef(p, t, alpha, &(b, d), &opts)?;
            (diff, den)
        }
    };
    Ok((diff.value() / den.value()).to_f64())
}

fn check_pair(p: &ModelParams, from: usize, to: usize) -> Result<()> {
    p.check_state("from", from)?;
    p.check_state("to", to)
}

/// `ln E_from[T_to]` from the birth–death ladder formula.
pub fn mean_hitting_time_log(p: &ModelParams, from: usize, to: usize) -> Result<f64> {
    check_pair(p, from, to)?;
    if from == to {
        return Ok(f64::NEG_INFINITY);
    }
    let lp = crate::model::log_stationary_distribution(p);
    let top = p.capacity();
    let mut terms = Vec::with_capacity(from.abs_diff(to));
    if from < to {
        // time to climb from j to j+1: π([0, j]) / (π(j) ν(N−j))
        let mut cum = f64::NEG_INFINITY;
        for (j, &lpj) in lp.iter().enumerate().take(to) {
            cum = log_sum_exp(&[cum, lpj]);
            if j >= from {
                terms.push(cum - lpj - p.up_rate(j).ln());
            }
        }
    } else {
        // time to descend from j to j−1: π([j, C]) / (π(j) μ j)
        let mut cum = f64::NEG_INFINITY;
        for j in (to + 1..=top).rev() {
            cum = log_sum_exp(&[cum, lp[j]]);
            if j <= from {
                terms.push(cum - lp[j] - p.down_rate(j).ln());
            }
        }
    }
    Ok(log_sum_exp(&terms))
}

/// `E_from[T_to]` from the birth–death ladder formula.
pub fn mean_hitting_time(p: &ModelParams, from: usize, to: usize) -> Result<f64> {
    mean_hitting_time_log(p, from, to).map(f64::exp)
}

/// `E_from[T_to]` as `lim_{α→0} (1 − LT(α))/α`, by Richardson extrapolation.
/// An independent cross-check of [`mean_hitting_time`].
pub fn mean_hitting_time_richardson(p: &ModelParams, from: usize, to: usize) -> Result<f64> {
    check_pair(p, from, to)?;
    if from == to {
        return Ok(0.0);
    }
    let q = LaplaceQuery::new(*p, from, to, 1.0)?;
    let slope = |alpha: f64| -> Result<f64> { Ok(hitting_lt_complement(&q.with_alpha(alpha)?)? / alpha) };
    // two passes to find the time scale of T without using the ladder formula
    let mut scale = slope(1e-6)?;
    scale = slope(0.05 / scale)?;
    let h0 = 0.05 / scale;
    const LEVELS: usize = 6;
    let hs: Vec<f64> = (0..LEVELS).map(|k| h0 / 2f64.powi(k as i32)).collect();
    let mut table: Vec<f64> = hs.iter().map(|&h| slope(h)).collect::<Result<_>>()?;
    // Neville extrapolation to h = 0
    for level in 1..LEVELS {
        for i in 0..LEVELS - level {
            let (hi, hj) = (hs[i], hs[i + level]);
            table[i] = (hi * table[i + 1] - hj * table[i]) / (hi - hj);
        }
    }
    Ok(table[0])
}
