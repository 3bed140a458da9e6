//! Estimators and tests shared by the Monte Carlo checks.

use crate::error::{Error, Result};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// Whether `value` lies within `k` standard errors of the estimate.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Mean and standard error of independent observations.
pub fn mean_se(samples: &[f64]) -> MeanEstimate {
    let n = samples.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            stderr: f64::NAN,
            n,
        };
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return MeanEstimate {
            mean,
            stderr: f64::INFINITY,
            n,
        };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    }
}

/// Batch-means estimate for a serially correlated (time-ordered) series:
/// the series is cut into `batches` contiguous blocks and the standard error
/// is taken over block means.
pub fn batch_means(series: &[f64], batches: usize) -> Result<MeanEstimate> {
    if batches < 2 || series.len() < batches {
        return Err(Error::config(
            "batches",
            format!(
                "need 2 ≤ batches ≤ samples, got {batches} batches for {} samples",
                series.len()
            ),
        ));
    }
    let len = series.len() / batches;
    let block_means: Vec<f64> = series
        .chunks_exact(len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    let est = mean_se(&block_means);
    Ok(MeanEstimate {
        mean: series.iter().sum::<f64>() / series.len() as f64,
        stderr: est.stderr,
        n: series.len(),
    })
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n − F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for `n` samples, with
/// Stephens' finite-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsResult {
    let statistic = ks_statistic(samples, cdf);
    KsResult {
        statistic,
        p_value: ks_pvalue(statistic, samples.len()),
        n: samples.len(),
    }
}

/// Weighted least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the weights (treated as inverse variances).
    pub slope_stderr: f64,
}

pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::config("fit", "x, y and weights must have equal length"));
    }
    if x.len() < 2 {
        return Err(Error::config("fit", "need at least two points"));
    }
    if w.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::numeric("regression weights must be positive and finite"));
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::numeric("regression abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        slope_stderr: (1.0 / sxx).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let e = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(e.covers(2.0, 1.0));
    }

    #[test]
    fn batch_means_of_constant_blocks() {
        let series: Vec<f64> = (0..100).map(|i| if i < 50 { 1.0 } else { 3.0 }).collect();
        let e = batch_means(&series, 2).unwrap();
        assert_eq!(e.mean, 2.0);
        assert!((e.stderr - 1.0).abs() < 1e-12);
        assert!(batch_means(&series, 1).is_err());
    }

    #[test]
    fn ks_pvalue_reference_points() {
        // Critical value of the Kolmogorov distribution at α = 0.05 is 1.3581.
        let n = 1_000_000;
        let d = 1.358_1 / (n as f64).sqrt();
        assert!((ks_pvalue(d, n) - 0.05).abs() < 1e-3);
        assert!(ks_pvalue(0.0, 10) == 1.0);
        assert!(ks_pvalue(0.5, 1000) < 1e-10);
    }

    #[test]
    fn ks_statistic_of_uniform_grid() {
        let samples: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        let d = ks_statistic(&samples, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.05).abs() < 1e-12);
    }

    #[test]
    fn exact_line_fit() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|x| 2.0 - 0.5 * x).collect();
        let fit = weighted_linear_fit(&x, &y, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 2.0).abs() < 1e-14);
    }
}
