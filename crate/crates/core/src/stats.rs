//! Summary statistics and the Wilcoxon signed-rank test.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const EXACT_MAX_N: usize = 25;

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (denominator `len − 1`); zero for a single value.
pub fn sample_std(v: &[f64]) -> f64 {
    match v.len() {
        0 => f64::NAN,
        1 => 0.0,
        n => {
            let mu = mean(v);
            libm::sqrt(v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64)
        }
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W−)`.
    pub w: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_two_sided: f64,
    /// Pairs left after discarding zero differences.
    pub n_used: usize,
    /// Whether `p` comes from the exact null distribution.
    pub exact: bool,
    /// All differences were zero; `p` is reported as 1.
    pub degenerate: bool,
}

/// Two-sided signed-rank test of `a − b`. Zero differences are discarded and
/// tied magnitudes share their average rank.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::dim("paired samples", a.len(), b.len()));
    }
    if a.len() < 5 {
        return Err(Error::domain("signed-rank test needs at least 5 pairs"));
    }
    let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("paired differences"));
    }
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            p_two_sided: 1.0,
            n_used: 0,
            exact: true,
            degenerate: true,
        });
    }
    d.sort_by(|x, y| libm::fabs(*x).total_cmp(&libm::fabs(*y)));

    // Doubled ranks stay integral under averaging.
    let mut ranks2 = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && libm::fabs(d[j + 1]) == libm::fabs(d[i]) {
            j += 1;
        }
        let r2 = (i + 1 + j + 1) as u64;
        ranks2[i..=j].iter_mut().for_each(|r| *r = r2);
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w_plus2: u64 = d.iter().zip(&ranks2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total2: u64 = ranks2.iter().sum();
    let w_minus2 = total2 - w_plus2;
    let w2 = w_plus2.min(w_minus2);

    let (p, exact) = if n <= EXACT_MAX_N {
        (exact_p(&ranks2, w2), true)
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (libm::fabs(w2 as f64 / 2.0 - mu) - 0.5).max(0.0) / libm::sqrt(var);
        (libm::erfc(z / core::f64::consts::SQRT_2), false)
    };
    Ok(WilcoxonResult {
        w: w2 as f64 / 2.0,
        w_plus: w_plus2 as f64 / 2.0,
        w_minus: w_minus2 as f64 / 2.0,
        p_two_sided: p.min(1.0),
        n_used: n,
        exact,
        degenerate: false,
    })
}

/// `2 P(T ≤ w)` under the null, `T` the (doubled) positive rank sum.
fn exact_p(ranks2: &[u64], w2: u64) -> f64 {
    let total: usize = ranks2.iter().sum::<u64>() as usize;
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = libm::pow(2.0, ranks2.len() as f64);
    let tail: f64 = counts[..=w2 as usize].iter().sum();
    2.0 * tail / all
}
