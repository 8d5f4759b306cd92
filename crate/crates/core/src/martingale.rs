//! The exponential martingale `h_β(x,t) = (1 − βμe^t)^x (1 + βνe^t)^{N−x}`
//! of the Ehrenfest process, its integrals over `β`, and the combination that
//! stays a martingale for the reflected Engset process.

use crate::error::{Error, Result};
use crate::laplace::quadrature::singular_kernel_integral;
use crate::laplace::{ascent_coef, descent_coef, reflection_coefs, QuadratureOptions, QuadratureResult};
use crate::model::{ModelParams, ProcessKind};
use crate::numeric::{Residual, SignedLog};

/// Free parameter `β` of the exponential martingale and exponent `α` of the
/// measure `β^{α−1}dβ` it is integrated against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleParam {
    pub beta: f64,
    pub alpha: f64,
}

impl MartingaleParam {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::out_of_range("beta", beta, "a finite real"));
        }
        check_alpha(alpha)?;
        Ok(MartingaleParam { beta, alpha })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range("alpha", alpha, "alpha > 0"))
    }
}

fn check_ehrenfest(p: &ModelParams, x: usize, t: f64) -> Result<()> {
    if p.kind() != ProcessKind::Ehrenfest {
        return Err(Error::Unsupported(
            "the exponential martingale is defined for the Ehrenfest process".into(),
        ));
    }
    p.check_state("x", x)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::out_of_range("t", t, "t >= 0"));
    }
    Ok(())
}

/// The two bases `(1 − βμe^t, 1 + βνe^t)`.
fn bases(p: &ModelParams, beta: f64, t: f64) -> (SignedLog, SignedLog) {
    let e = t.exp();
    (
        SignedLog::from_f64(1.0 - beta * p.mu() * e),
        SignedLog::from_f64(1.0 + beta * p.nu() * e),
    )
}

/// `h_β(x,t)` in sign/log form.
pub fn exp_martingale_value(p: &ModelParams, beta: f64, x: usize, t: f64) -> Result<SignedLog> {
    check_ehrenfest(p, x, t)?;
    let (a, b) = bases(p, beta, t);
    Ok(a.powi(x) * b.powi(p.n() - x))
}

/// `∂h/∂t + (Q h)(x)` with the analytic time derivative.
pub fn harmonicity_residual(p: &ModelParams, beta: f64, x: usize, t: f64) -> Result<Residual> {
    check_ehrenfest(p, x, t)?;
    let n = p.n();
    let (a, b) = bases(p, beta, t);
    let e = SignedLog::from_f64(beta * t.exp());
    let (nu, mu) = (SignedLog::from_f64(p.nu()), SignedLog::from_f64(p.mu()));
    let h = a.powi(x) * b.powi(n - x);
    let mut terms = Vec::with_capacity(6);
    if x > 0 {
        let xs = SignedLog::from_f64(x as f64);
        let lower = a.powi(x - 1) * b.powi(n - x);
        // ∂/∂t of a^x and the down-jump
        terms.push(-(xs * e * mu * lower));
        terms.push(mu * xs * lower * b);
        terms.push(-(mu * xs * h));
    }
    if x < n {
        let ys = SignedLog::from_f64((n - x) as f64);
        let upper = a.powi(x) * b.powi(n - x - 1);
        // ∂/∂t of b^{N−x} and the up-jump
        terms.push(ys * e * nu * upper);
        terms.push(nu * ys * upper * a);
        terms.push(-(nu * ys * h));
    }
    Ok(Residual::from_terms(&terms))
}

/// Same residual with a central finite difference in `t` (forward at `t = 0`).
pub fn harmonicity_residual_fd(p: &ModelParams, beta: f64, x: usize, t: f64, step: f64) -> Result<Residual> {
    check_ehrenfest(p, x, t)?;
    let h = |y: usize, s: f64| exp_martingale_value(p, beta, y, s);
    let dt = if t >= step {
        (h(x, t + step)? - h(x, t - step)?).scale_ln(-(2.0 * step).ln())
    } else {
        (h(x, t + step)? - h(x, t)?).scale_ln(-step.ln())
    };
    let hx = h(x, t)?;
    let mut terms = vec![dt];
    if x < p.n() {
        let up = SignedLog::from_f64(p.up_rate(x));
        terms.push(up * h(x + 1, t)?);
        terms.push(-(up * hx));
    }
    if x > 0 {
        let down = SignedLog::from_f64(p.down_rate(x));
        terms.push(down * h(x - 1, t)?);
        terms.push(-(down * hx));
    }
    Ok(Residual::from_terms(&terms))
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range("t", t, "t >= 0"))
    }
}

/// `I_α(x,t) = e^{−αt} B_x(α)`.
pub fn integrated_i(p: &ModelParams, alpha: f64, x: usize, t: f64) -> Result<QuadratureResult> {
    check_time(t)?;
    Ok(descent_coef(p, x, alpha)?.scale_ln(-alpha * t))
}

/// `J_α(x,t) = e^{−αt} D_x(α)`.
pub fn integrated_j(p: &ModelParams, alpha: f64, x: usize, t: f64) -> Result<QuadratureResult> {
    check_time(t)?;
    Ok(ascent_coef(p, x, alpha)?.scale_ln(-alpha * t))
}

/// `I_α(x,t)` by integrating `μ^α h_β(x,t) β^{α−1}` over `0 ≤ β ≤ e^{−t}/μ`
/// directly; an independent check of [`integrated_i`].
pub fn integrated_i_direct(p: &ModelParams, alpha: f64, x: usize, t: f64) -> Result<QuadratureResult> {
    check_ehrenfest(p, x, t)?;
    check_alpha(alpha)?;
    let top = (-t).exp() / p.mu();
    // β = top·v maps the range to [0, 1]; μ^α top^α = e^{−αt}
    let ln_h = |v: f64| match exp_martingale_value(p, top * v, x, t) {
        Ok(h) if h.sign > 0.0 => h.ln_abs,
        _ => f64::NEG_INFINITY,
    };
    let r = singular_kernel_integral(&ln_h, alpha, &QuadratureOptions::default())?;
    Ok(r.scale_ln(-alpha * t))
}

fn check_engset(p: &ModelParams, alpha: f64, x: usize) -> Result<()> {
    if p.kind() != ProcessKind::Engset {
        return Err(Error::Unsupported("K is defined for the Engset process".into()));
    }
    check_alpha(alpha)?;
    p.check_state("x", x)
}

/// `G_x(α) = d_N B_x + b_N D_x` for every state `0..=C`.
fn reflected_values(p: &ModelParams, alpha: f64) -> Result<Vec<SignedLog>> {
    let (b, d) = reflection_coefs(p, alpha)?;
    (0..=p.capacity())
        .map(|x| {
            let big_b = descent_coef(p, x, alpha)?.value();
            let big_d = ascent_coef(p, x, alpha)?.value();
            Ok(d.value() * big_b + b.value() * big_d)
        })
        .collect()
}

/// `K_α(x,t) = d_N(α) I_α(x,t) + b_N(α) J_α(x,t)` of the Engset process.
pub fn engset_k_value(p: &ModelParams, alpha: f64, x: usize, t: f64) -> Result<SignedLog> {
    check_engset(p, alpha, x)?;
    check_time(t)?;
    let (b, d) = reflection_coefs(p, alpha)?;
    let i = integrated_i(p, alpha, x, t)?.value();
    let j = integrated_j(p, alpha, x, t)?.value();
    Ok(d.value() * i + b.value() * j)
}

/// `∂K/∂t + (Q_X K)(x)` at a state `1 ≤ x ≤ C` of the Engset process.
/// At `x = C` this is the boundary cancellation that the coefficients
/// `b_N`, `d_N` are chosen for. The residual does not depend on `t`.
pub fn engset_residual(p: &ModelParams, alpha: f64, x: usize) -> Result<Residual> {
    check_engset(p, alpha, x)?;
    if x == 0 {
        return Err(Error::out_of_range("x", 0, format!("1..={}", p.capacity())));
    }
    let g = reflected_values(p, alpha)?;
    let mut terms = vec![-g[x].scale_ln(alpha.ln())];
    let up = p.up_rate(x);
    if up > 0.0 {
        terms.push(g[x + 1].scale_ln(up.ln()));
        terms.push(-g[x].scale_ln(up.ln()));
    }
    let down = p.down_rate(x).ln();
    terms.push(g[x - 1].scale_ln(down));
    terms.push(-g[x].scale_ln(down));
    Ok(Residual::from_terms(&terms))
}
