//! Chance baselines and exact binomial calculations.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// `1/K` for `K` distinct labels.
pub fn chance_level<S: AsRef<str>>(labels: &[S]) -> Result<f64> {
    let k = distinct(labels).len();
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 classes, found {k}")));
    }
    Ok(1.0 / k as f64)
}

/// Share of the most frequent label.
pub fn majority_baseline<S: AsRef<str>>(labels: &[S]) -> Option<f64> {
    let counts = distinct(labels);
    let max = counts.values().copied().max()?;
    Some(max as f64 / labels.len() as f64)
}

fn distinct<S: AsRef<str>>(labels: &[S]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for l in labels {
        *m.entry(l.as_ref()).or_insert(0) += 1;
    }
    m
}

fn ln_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Binomial(n, p) probability mass for every `0..=n`.
fn pmf_table(n: u64, p: f64) -> Vec<f64> {
    let lf = ln_factorials(n);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=n)
        .map(|k| {
            let ln = lf[n as usize] - lf[k as usize] - lf[(n - k) as usize] + k as f64 * lp + (n - k) as f64 * lq;
            ln.exp()
        })
        .collect()
}

/// `P[X >= k]` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let pmf = pmf_table(n, p);
    // Sum from the far tail inward for accuracy.
    pmf[k as usize..].iter().rev().sum::<f64>().min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChanceTest {
    pub significant: bool,
    pub p_value: f64,
}

/// One-sided exact binomial test of `accuracy` on `n_test` rows against a
/// chance rate `p0`.
pub fn exceeds_chance(accuracy: f64, n_test: u64, p0: f64, alpha: f64) -> Result<ChanceTest> {
    if !(0.0..=1.0).contains(&accuracy) || n_test == 0 || !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::InvalidInput(format!(
            "bad chance test inputs: accuracy={accuracy}, n={n_test}, p0={p0}"
        )));
    }
    let k = (accuracy * n_test as f64).round() as u64;
    let p_value = binomial_upper_tail(n_test, k, p0);
    Ok(ChanceTest {
        significant: p_value < alpha,
        p_value,
    })
}

/// Central `confidence` interval of `Binomial(n_test, 1/K) / n_test`.
///
/// The bounds are the `(1-c)/2` and `(1+c)/2` quantiles, each the smallest
/// count whose CDF reaches the target.
pub fn null_band(k: usize, n_test: u64, confidence: f64) -> Result<(f64, f64)> {
    if k < 2 || n_test == 0 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidInput(format!(
            "bad null band inputs: K={k}, n={n_test}, confidence={confidence}"
        )));
    }
    let pmf = pmf_table(n_test, 1.0 / k as f64);
    let tail = (1.0 - confidence) / 2.0;
    let quantile = |target: f64| -> u64 {
        let mut cdf = 0.0;
        for (i, p) in pmf.iter().enumerate() {
            cdf += p;
            if cdf >= target - 1e-12 {
                return i as u64;
            }
        }
        n_test
    };
    let lo = quantile(tail);
    let hi = quantile(1.0 - tail);
    Ok((lo as f64 / n_test as f64, hi as f64 / n_test as f64))
}
