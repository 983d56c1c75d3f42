//! Estimators and fits shared by the experiments.
//!
//! Binomial cells use Wilson score intervals because most cells of interest
//! sit near probability 0 or 1. Cells with zero successes are kept as
//! one-sided intervals and are excluded from log-slope fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};

/// Binomial proportion with a Wilson score interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomialEstimate {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub confidence: f64,
}

impl BinomialEstimate {
    /// Standard error of the point estimate, `sqrt(p(1-p)/n)`.
    pub fn std_error(&self) -> f64 {
        (self.estimate * (1.0 - self.estimate) / self.trials as f64).sqrt()
    }

    /// Whether two intervals intersect.
    pub fn overlaps(&self, other: &Self) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Two-sided normal quantile for the given confidence level.
pub fn z_for_confidence(confidence: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(0.5 + confidence / 2.0)
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<BinomialEstimate> {
    if trials == 0 {
        return invalid("wilson_interval needs at least one trial");
    }
    if successes > trials {
        return invalid(format!("successes {successes} exceed trials {trials}"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return invalid(format!("confidence {confidence} outside (0,1)"));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = z_for_confidence(confidence);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let mut lo = (centre - half).max(0.0);
    let mut hi = (centre + half).min(1.0);
    if successes == 0 {
        lo = 0.0;
    }
    if successes == trials {
        hi = 1.0;
    }
    Ok(BinomialEstimate { successes, trials, estimate: p, lo: lo.min(p), hi: hi.max(p), confidence })
}

/// Least-squares fit of `log p` against `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    pub points: usize,
}

/// Ordinary least squares on `(t, ln p)`.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Result<LogSlopeFit> {
    if points.len() < 3 {
        return invalid(format!("fit_log_slope needs at least 3 points, got {}", points.len()));
    }
    if let Some(&(_, p)) = points.iter().find(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
        return invalid(format!("fit_log_slope needs p in (0,1], got {p}"));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(t, _)| t).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, p)| p.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return invalid("fit_log_slope needs at least two distinct abscissae");
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(LogSlopeFit { slope, intercept, residual: (ss / n).sqrt(), points: points.len() })
}

/// Mean and unbiased sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Empirical quantile by the nearest-rank rule on a sorted copy.
pub fn quantile(xs: &[f64], level: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((level * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Kolmogorov–Smirnov statistic of a sample against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic 5% critical value of the KS statistic for sample sizes `n`, `m`
/// (`m = None` for the one-sample test).
pub fn ks_critical_5pct(n: usize, m: Option<usize>) -> f64 {
    let c = 1.358;
    match m {
        None => c / (n as f64).sqrt(),
        Some(m) => c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt(),
    }
}
