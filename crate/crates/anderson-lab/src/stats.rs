//! Small statistics helpers used across modules.

/// Arithmetic mean. Returns 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance. Returns 0 for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    std_dev(xs) / (xs.len() as f64).sqrt()
}

/// Median (averages the two central order statistics for even lengths).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of empty slice");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Interquartile range via linear-interpolation quantiles.
pub fn iqr(xs: &[f64]) -> f64 {
    quantile(xs, 0.75) - quantile(xs, 0.25)
}

/// Quantile `q` in [0, 1] with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty slice");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

/// log(sum(exp(xs))) with the running-max guard.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "log_sum_exp of empty slice");
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Effective sample size `(sum w)^2 / sum w^2` from log-weights.
pub fn effective_sample_size(log_w: &[f64]) -> f64 {
    if log_w.is_empty() {
        return 0.0;
    }
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &lw in log_w {
        let w = (lw - m).exp();
        s1 += w;
        s2 += w * w;
    }
    s1 * s1 / s2
}

/// Summary of the `(1/M) sum exp(x_i)` estimator on the log scale.
#[derive(Debug, Clone, Copy)]
pub struct LogMeanExp {
    /// `log((1/M) sum exp(x_i))`.
    pub log_mean: f64,
    /// Delta-method standard error of `log_mean`.
    pub std_error: f64,
    /// Effective sample size of the exponential weights.
    pub ess: f64,
}

/// Mean of exponentials computed in the log domain, with a delta-method
/// standard error (`sd(w)/(mean(w) sqrt(M))` on the shifted weights).
pub fn log_mean_exp(xs: &[f64]) -> LogMeanExp {
    assert!(!xs.is_empty());
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let mw = mean(&shifted);
    let sd = std_dev(&shifted);
    LogMeanExp {
        log_mean: m + mw.ln(),
        std_error: if mw > 0.0 {
            sd / (mw * (xs.len() as f64).sqrt())
        } else {
            f64::INFINITY
        },
        ess: effective_sample_size(xs),
    }
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Residual sum of squares.
    pub rss: f64,
}

/// Least-squares line through `(x, y)` pairs. Panics on length mismatch or
/// fewer than two points.
pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need at least two points for a line");
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    assert!(sxx > 0.0, "degenerate abscissae");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum();
    LineFit {
        intercept,
        slope,
        rss,
    }
}

/// Least-squares coefficient for the one-parameter model `y = c * g(x)`.
pub fn fit_scalar_model(g: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(g.len(), y.len());
    let num: f64 = g.iter().zip(y).map(|(&gi, &yi)| gi * yi).sum();
    let den: f64 = g.iter().map(|&gi| gi * gi).sum();
    assert!(den > 0.0);
    let c = num / den;
    let rss = g
        .iter()
        .zip(y)
        .map(|(&gi, &yi)| {
            let r = yi - c * gi;
            r * r
        })
        .sum();
    LineFit {
        intercept: 0.0,
        slope: c,
        rss,
    }
}

/// Two-sided percentile interval of a bootstrap sample.
pub fn percentile_interval(samples: &[f64], level: f64) -> (f64, f64) {
    let alpha = (1.0 - level) / 2.0;
    (quantile(samples, alpha), quantile(samples, 1.0 - alpha))
}
