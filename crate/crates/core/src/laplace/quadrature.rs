//! Adaptive Gauss–Kronrod (10/21) quadrature for integrands that live far
//! outside the range of `f64`.
//!
//! Integrands are supplied as [`SignedLog`] values. The engine first locates
//! the peak of `ln|f|`, works in units of that peak, and places breakpoints
//! around it so that narrow bumps (width `1/√N` or `1/N`) are never missed by
//! the first Kronrod rule.

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, SignedLog};
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Outcome of a successful integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    /// `ln|I|`.
    pub log_value: f64,
    /// Sign of `I` (`0` when the integral vanishes).
    pub sign: f64,
    /// Estimated absolute error; may be `inf` or `0` when outside `f64` range.
    pub abs_error_estimate: f64,
    /// `ln` of the estimated absolute error.
    pub log_error: f64,
    /// Number of integrand evaluations.
    pub node_count: usize,
}

impl QuadratureResult {
    fn new(value: SignedLog, log_error: f64, node_count: usize) -> Self {
        QuadratureResult {
            log_value: value.ln_abs,
            sign: value.sign,
            abs_error_estimate: log_error.exp(),
            log_error,
            node_count,
        }
    }

    pub fn value(&self) -> SignedLog {
        SignedLog::new(self.sign, self.log_value)
    }

    pub fn to_f64(&self) -> f64 {
        self.value().to_f64()
    }

    /// Estimated relative error `|err| / |I|`.
    pub fn relative_error(&self) -> f64 {
        (self.log_error - self.log_value).exp()
    }

    /// Sum of two results; errors add.
    pub fn combine(&self, other: &QuadratureResult) -> QuadratureResult {
        let v = self.value() + other.value();
        let e = SignedLog::from_ln(self.log_error) + SignedLog::from_ln(other.log_error);
        QuadratureResult::new(v, e.ln_abs, self.node_count + other.node_count)
    }

    /// Multiplies the value (and error) by `exp(ln_factor)`.
    pub fn scale_ln(&self, ln_factor: f64) -> QuadratureResult {
        QuadratureResult::new(
            self.value().scale_ln(ln_factor),
            self.log_error + ln_factor,
            self.node_count,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureOptions {
    /// Absolute tolerance, in units of the integrand's peak magnitude.
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of integrand evaluations.
    pub max_nodes: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_nodes: 200_000,
        }
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_149_712_997,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod rule with the QUADPACK error heuristic.
/// Returns `None` if the scaled integrand overflowed.
fn kronrod21(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Option<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = WGK[10] * fc;
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut f1 = [0.0; 10];
    let mut f2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        f1[j] = f(center - dx);
        f2[j] = f(center + dx);
        let sum = f1[j] + f2[j];
        resk += WGK[j] * sum;
        resabs += WGK[j] * (f1[j].abs() + f2[j].abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * sum;
        }
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - reskh).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((f1[j] - reskh).abs() + (f2[j] - reskh).abs());
    }
    let result = resk * half;
    let dh = half.abs();
    resabs *= dh;
    resasc *= dh;
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    if result.is_finite() && err.is_finite() {
        Some((result, err))
    } else {
        None
    }
}

fn golden_max(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut g1 = g(x1);
    let mut g2 = g(x2);
    for _ in 0..80 {
        if g1 < g2 {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + INV_PHI * (hi - lo);
            g2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - INV_PHI * (hi - lo);
            g1 = g(x1);
        }
        if hi - lo <= 1e-10 * (1.0 + lo.abs()) {
            break;
        }
    }
    if g1 >= g2 {
        (x1, g1)
    } else {
        (x2, g2)
    }
}

/// Peak of `ln|f|` and breakpoints bracketing it on geometric scales.
fn shape(lnf: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, Vec<f64>) {
    let w = b - a;
    let mut ts: Vec<f64> = (0..=128).map(|i| i as f64 / 128.0).collect();
    for k in 1..=52 {
        let e = 0.5f64.powi(k);
        ts.push(e);
        ts.push(1.0 - e);
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let xs: Vec<f64> = ts.iter().map(|t| a + w * t).collect();
    let ls: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let v = lnf(x);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        })
        .collect();
    let (imax, &lmax) = ls
        .iter()
        .enumerate()
        .max_by(|p, q| p.1.total_cmp(q.1))
        .expect("non-empty probe grid");
    if lmax == f64::NEG_INFINITY {
        return (lmax, vec![a, b]);
    }
    let lo = xs[imax.saturating_sub(1)];
    let hi = xs[(imax + 1).min(xs.len() - 1)];
    let (xp, lp) = if hi > lo {
        let (x, l) = golden_max(lnf, lo, hi);
        if l > lmax {
            (x, l)
        } else {
            (xs[imax], lmax)
        }
    } else {
        (xs[imax], lmax)
    };
    let drop = lp - 3.0;
    let mut bps = vec![a, b];
    if xp > a && xp < b {
        bps.push(xp);
    }
    // distance from the peak at which ln|f| has fallen by 3, on each side
    let find_drop = |dir: f64| -> Option<f64> {
        let far = if dir < 0.0 { a } else { b };
        let outer = xs
            .iter()
            .zip(&ls)
            .filter(|(x, _)| (**x - xp) * dir > 0.0)
            .filter(|(_, l)| **l < drop)
            .map(|(x, _)| *x)
            .min_by(|p, q| (p - xp).abs().total_cmp(&(q - xp).abs()))
            .or_else(|| (lnf(far) < drop).then_some(far))?;
        let (mut inner, mut outer) = (xp, outer);
        for _ in 0..30 {
            let mid = 0.5 * (inner + outer);
            if lnf(mid) < drop {
                outer = mid;
            } else {
                inner = mid;
            }
        }
        Some((outer - xp).abs())
    };
    for dir in [-1.0, 1.0] {
        if let Some(d) = find_drop(dir) {
            if d <= 0.0 {
                continue;
            }
            let mut step = d / 4.0;
            loop {
                let x = xp + dir * step;
                if x <= a || x >= b {
                    break;
                }
                bps.push(x);
                step *= 2.0;
            }
        }
    }
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    (lp, bps)
}

fn adaptive(
    f: &dyn Fn(f64) -> SignedLog,
    bps: &[f64],
    shift: f64,
    offset_scaled: f64,
    opts: &QuadratureOptions,
) -> std::result::Result<(f64, f64, usize), Option<f64>> {
    use std::cell::Cell;
    let overflow = Cell::new(f64::NEG_INFINITY);
    let scaled = |x: f64| {
        let v = f(x);
        if v.ln_abs - shift > 600.0 {
            overflow.set(overflow.get().max(v.ln_abs));
        }
        v.scale_ln(-shift).to_f64()
    };
    let mut heap = BinaryHeap::new();
    let mut nodes = 0usize;
    for pair in bps.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b <= a {
            continue;
        }
        let Some((value, error)) = kronrod21(&scaled, a, b) else {
            return Err(Some(overflow.get()));
        };
        nodes += 21;
        heap.push(Segment { a, b, value, error });
    }
    if overflow.get() > f64::NEG_INFINITY {
        return Err(Some(overflow.get()));
    }
    loop {
        let total = compensated_sum(heap.iter().map(|s| s.value));
        let err: f64 = heap.iter().map(|s| s.error).sum();
        let tol = opts.abs_tol.max(opts.rel_tol * (offset_scaled + total).abs());
        if err <= tol {
            return Ok((total, err, nodes));
        }
        if nodes + 42 > opts.max_nodes {
            return Err(None);
        }
        // refine the worst segments until the error budget could be met
        let mut budget = err - 0.5 * tol;
        while budget > 0.0 && nodes + 42 <= opts.max_nodes {
            let Some(worst) = heap.pop() else { break };
            budget -= worst.error;
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b) {
                // cannot split further; keep the segment as is
                heap.push(worst);
                return Err(None);
            }
            for (a, b) in [(worst.a, mid), (mid, worst.b)] {
                let Some((value, error)) = kronrod21(&scaled, a, b) else {
                    return Err(Some(overflow.get()));
                };
                nodes += 21;
                heap.push(Segment { a, b, value, error });
            }
            if overflow.get() > f64::NEG_INFINITY {
                return Err(Some(overflow.get()));
            }
        }
    }
}

/// `offset + ∫_a^b f(x) dx` for an integrand given in sign/log form.
///
/// Convergence requires `err ≤ max(abs_tol·e^M, rel_tol·|result|)` where `e^M`
/// is the larger of the integrand's peak and `|offset|`.
pub fn integrate(
    f: &dyn Fn(f64) -> SignedLog,
    a: f64,
    b: f64,
    offset: SignedLog,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::InvalidParams(format!("bad integration interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadratureResult::new(offset, f64::NEG_INFINITY, 0));
    }
    let lnf = |x: f64| f(x).ln_abs;
    let (peak, bps) = shape(&lnf, a, b);
    let mut shift = peak.max(offset.ln_abs);
    if shift == f64::NEG_INFINITY {
        return Ok(QuadratureResult::new(SignedLog::ZERO, f64::NEG_INFINITY, 0));
    }
    for _ in 0..4 {
        let off = offset.scale_ln(-shift).to_f64();
        match adaptive(f, &bps, shift, off, opts) {
            Ok((total, err, nodes)) => {
                let value = offset + SignedLog::from_f64(total).scale_ln(shift);
                let log_err = if err > 0.0 { err.ln() + shift } else { f64::NEG_INFINITY };
                return Ok(QuadratureResult::new(value, log_err, nodes + 300));
            }
            Err(Some(bigger)) if bigger > shift => shift = bigger,
            Err(_) => {
                // report the best estimate we can still form cheaply
                let relaxed = QuadratureOptions {
                    abs_tol: f64::INFINITY,
                    ..*opts
                };
                let (best, err) = match adaptive(f, &bps, shift, off, &relaxed) {
                    Ok((t, e, _)) => (offset + SignedLog::from_f64(t).scale_ln(shift), e.ln() + shift),
                    Err(_) => (offset, f64::INFINITY),
                };
                return Err(Error::QuadratureFailure {
                    best_log_value: best.ln_abs,
                    best_sign: best.sign,
                    log_error: err,
                    nodes: opts.max_nodes,
                });
            }
        }
    }
    Err(Error::QuadratureFailure {
        best_log_value: f64::NAN,
        best_sign: 0.0,
        log_error: f64::INFINITY,
        nodes: 0,
    })
}

/// `(sign, ln|e^l − 1|)`.
fn ln_expm1_signed(l: f64) -> SignedLog {
    if l.abs() < 0.5 {
        SignedLog::from_f64(l.exp_m1())
    } else if l > 0.0 {
        SignedLog::new(1.0, l + (-(-l).exp()).ln_1p())
    } else {
        SignedLog::new(-1.0, (-l.exp()).ln_1p())
    }
}

const SUBSTITUTION_MIN_EXPONENT: f64 = 0.05;

/// `∫_0^1 g(u) u^{s−1} du` for a positive `g` with `g(0) = 1`, given as `ln g`.
///
/// For `0.05 ≤ s < 1` the substitution `u = v^{1/s}` removes the kernel. For
/// smaller `s` the kernel is removed by `1/s + ∫(g−1)u^{s−1}`, falling back
/// to the substitution when that sum cancels badly.
pub fn singular_kernel_integral(
    ln_g: &dyn Fn(f64) -> f64,
    s: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::out_of_range("alpha", s, "alpha > 0"));
    }
    if s >= 1.0 {
        let f = |u: f64| {
            let ku = if s == 1.0 { 0.0 } else { (s - 1.0) * u.ln() };
            SignedLog::from_ln(ln_g(u) + ku)
        };
        return integrate(&f, 0.0, 1.0, SignedLog::ZERO, opts);
    }
    let ln_s = s.ln();
    let substituted = || {
        let sub = |v: f64| {
            if v == 0.0 {
                return SignedLog::from_ln(ln_g(0.0));
            }
            let u = (v.ln() / s).exp();
            SignedLog::from_ln(ln_g(u))
        };
        integrate(&sub, 0.0, 1.0, SignedLog::ZERO, opts).map(|r| r.scale_ln(-ln_s))
    };
    // v^{1/s} stays smooth for moderate s; the split handles tiny s
    if s >= SUBSTITUTION_MIN_EXPONENT {
        return substituted();
    }
    let rem = |u: f64| {
        if u == 0.0 {
            return SignedLog::ZERO;
        }
        ln_expm1_signed(ln_g(u)).scale_ln((s - 1.0) * u.ln())
    };
    let split = integrate(&rem, 0.0, 1.0, SignedLog::from_ln(-ln_s), opts);
    match split {
        Ok(r) if r.sign > 0.0 && r.log_value + ln_s >= 0.1f64.ln() => Ok(r),
        _ => substituted(),
    }
}

/// `ln[(1−u)^m (1+r u)^k]`, with `0·ln 0 = 0`.
pub fn ln_power_weight(m: f64, k: f64, r: f64, u: f64) -> f64 {
    let a = if m == 0.0 { 0.0 } else { m * (-u).ln_1p() };
    let b = if k == 0.0 { 0.0 } else { k * (r * u).ln_1p() };
    a + b
}

/// `∫_0^1 (1−u)^m (1+r u)^k u^{s−1} du`.
pub fn power_integral(m: f64, k: f64, r: f64, s: f64, opts: &QuadratureOptions) -> Result<QuadratureResult> {
    let ln_g = |u: f64| ln_power_weight(m, k, r, u);
    singular_kernel_integral(&ln_g, s, opts)
}

/// `∫_0^∞ exp(uδ/ν − u²(1−ν)/(2ν)) u^{α−1} du`, truncated where the
/// integrand has fallen below `1e−30` of its peak.
pub fn gaussian_mellin(delta: f64, nu: f64, alpha: f64, opts: &QuadratureOptions) -> Result<QuadratureResult> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::out_of_range("nu", nu, "(0, 1)"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::out_of_range("alpha", alpha, "alpha > 0"));
    }
    let a = delta / nu;
    let c = (1.0 - nu) / (2.0 * nu);
    let phi = move |u: f64| a * u - c * u * u;
    let head = singular_kernel_integral(&phi, alpha, opts)?;
    let ln_h = move |u: f64| phi(u) + (alpha - 1.0) * u.ln();
    // peak of ln h on u > 0 solves 2c u² − a u − (α−1) = 0
    let disc = a * a + 8.0 * c * (alpha - 1.0);
    let u_peak = if disc >= 0.0 { ((a + disc.sqrt()) / (4.0 * c)).max(1.0) } else { 1.0 };
    let peak = ln_h(u_peak).max(head.log_value);
    let cutoff = peak - 30.0 * std::f64::consts::LN_10;
    let mut upper = u_peak.max(1.0) * 2.0;
    while ln_h(upper) > cutoff {
        upper *= 2.0;
    }
    let tail_f = move |u: f64| SignedLog::from_ln(ln_h(u));
    let tail = integrate(&tail_f, 1.0, upper, SignedLog::ZERO, opts)?;
    Ok(head.combine(&tail))
}
