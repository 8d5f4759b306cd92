//! Independent oracle: the hitting-time transform as the solution of the
//! resolvent equation `(α − Q̃)v = 0`, `v(target) = 1`, where `Q̃` is the
//! generator with the target made absorbing.
//!
//! The tridiagonal system is eliminated from the end opposite the target,
//! which leaves a product of ratios `v(x)/v(x∓1)`. All ratios lie in `(0,1)`
//! so the product is accumulated as a sum of logarithms.

use super::LaplaceQuery;
use crate::error::{Error, Result};
use crate::model::build_generator;

/// Default largest `N` accepted by [`resolvent_oracle`].
pub const DEFAULT_ORACLE_CAP: usize = 2000;

/// `ln E_from[e^{−αT_to}]` from the linear system.
pub fn resolvent_oracle_log(q: &LaplaceQuery, cap: usize) -> Result<f64> {
    let p = q.params();
    if p.n() > cap {
        return Err(Error::out_of_range("n", p.n(), format!("N <= oracle cap {cap}")));
    }
    let (from, to, alpha) = (q.from_state(), q.to_state(), q.alpha());
    if from == to {
        return Ok(0.0);
    }
    let rates = build_generator(p);
    let (up, down) = (&rates.up, &rates.down);
    let top = p.capacity();
    let mut ln_lt = 0.0;
    if from > to {
        // r_x = v(x)/v(x−1) for x = top..=to+1, eliminated from the top
        let mut r_next = 0.0;
        let mut ratios = vec![0.0; top + 1];
        for x in (to + 1..=top).rev() {
            let denom = alpha + up[x] + down[x] - up[x] * r_next;
            if !(denom > 0.0) {
                return Err(Error::SingularSystem { row: x });
            }
            r_next = down[x] / denom;
            ratios[x] = r_next;
        }
        for r in &ratios[to + 1..=from] {
            ln_lt += r.ln();
        }
    } else {
        // r_x = v(x)/v(x+1) for x = 0..=to−1, eliminated from the bottom
        let mut r_prev = 0.0;
        let mut ratios = vec![0.0; to];
        for x in 0..to {
            let denom = alpha + up[x] + down[x] - down[x] * r_prev;
            if !(denom > 0.0) {
                return Err(Error::SingularSystem { row: x });
            }
            r_prev = up[x] / denom;
            ratios[x] = r_prev;
        }
        for r in &ratios[from..to] {
            ln_lt += r.ln();
        }
    }
    Ok(ln_lt)
}

/// `E_from[e^{−αT_to}]` from the linear system, for `N ≤ cap`.
pub fn resolvent_oracle_with_cap(q: &LaplaceQuery, cap: usize) -> Result<f64> {
    resolvent_oracle_log(q, cap).map(f64::exp)
}

/// `E_from[e^{−αT_to}]` from the linear system, for `N ≤ 2000`.
pub fn resolvent_oracle(q: &LaplaceQuery) -> Result<f64> {
    resolvent_oracle_with_cap(q, DEFAULT_ORACLE_CAP)
}

/// Dense Gaussian elimination of the same system; only for cross-checking
/// the elimination order on small chains.
#[cfg(test)]
pub(crate) fn dense_oracle(q: &LaplaceQuery) -> f64 {
    let p = q.params();
    let rates = build_generator(p);
    let n = p.capacity() + 1;
    let mut a = vec![vec![0.0; n + 1]; n];
    for x in 0..n {
        if x == q.to_state() {
            a[x][x] = 1.0;
            a[x][n] = 1.0;
            continue;
        }
        a[x][x] = q.alpha() + rates.up[x] + rates.down[x];
        if x + 1 < n {
            a[x][x + 1] = -rates.up[x];
        }
        if x > 0 {
            a[x][x - 1] = -rates.down[x];
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for row in 0..n {
            if row != col {
                let factor = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= factor * a[col][k];
                }
            }
        }
    }
    a[q.from_state()][n] / a[q.from_state()][q.from_state()]
}
