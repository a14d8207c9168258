//! Power-law fits of the leading eigenvalue against `log t`.
//!
//! The regular-phase model removes the mollification prefactor and fits
//! `ln Lambda_1 + (d/2) ln eps = ln C + b ln log t`; the limit predicts
//! slope `1/2` and prefactor `sqrt(2 d R(0))`. The singular-phase model
//! fits `ln Lambda_1 = ln C + b ln log t`; the limit predicts slope
//! `2/(4-d)` and the variational prefactor. Points are per-`t` medians;
//! uncertainty comes from a stratified bootstrap that resamples replicas
//! within each `t`.

use rand::Rng;

use super::SweepRecord;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::stats::{fit_line, median, percentile_interval};

/// Which eigenvalue scaling law to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingModel {
    /// `Lambda_1 ~ C eps^(-d/2) (log t)^b`.
    Regular,
    /// `Lambda_1 ~ C (log t)^b`.
    Singular,
}

/// Stratified bootstrap settings.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub seed: u64,
    /// Central coverage of the reported intervals.
    pub level: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { resamples: 400, seed: 0xB0075, level: 0.95 }
    }
}

impl BootstrapOptions {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.resamples < 50 {
            return Err(Error::InvalidConfig(format!(
                "bootstrap needs at least 50 resamples, got {}",
                self.resamples
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "bootstrap level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Fitted power law with bootstrap intervals.
#[derive(Debug, Clone)]
pub struct ScalingFit {
    pub model: ScalingModel,
    pub prefactor: f64,
    pub exponent: f64,
    pub prefactor_interval: (f64, f64),
    pub exponent_interval: (f64, f64),
    pub grid_points: usize,
    /// Smallest replica count over the grid.
    pub min_replicas: usize,
    /// Residual sum of squares of the median fit in log coordinates.
    pub rss: f64,
}

fn adjusted_log(record: &SweepRecord, model: ScalingModel) -> f64 {
    let base = record.lambdas[0].ln();
    match model {
        ScalingModel::Regular => base + record.dim as f64 / 2.0 * record.eps.ln(),
        ScalingModel::Singular => base,
    }
}

/// Fit the scaling model to sweep records.
///
/// Needs at least four distinct `t` values with at least ten replicas
/// each, and positive leading eigenvalues throughout.
pub fn fit_scaling(
    records: &[SweepRecord],
    model: ScalingModel,
    boot: &BootstrapOptions,
) -> Result<ScalingFit> {
    boot.validate()?;
    let dim = match records.first() {
        Some(r) => r.dim,
        None => return Err(Error::InvalidConfig("no records to fit".into())),
    };
    let mut groups: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    for record in records {
        if record.dim != dim {
            return Err(Error::InvalidConfig("records mix dimensions".into()));
        }
        if !(record.lambdas[0] > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "leading eigenvalue {} at t={} is not positive; the log-scale fit needs \
                 eigenvalues above zero",
                record.lambdas[0], record.t
            )));
        }
        groups.entry(record.t.to_bits()).or_default().push(adjusted_log(record, model));
    }
    if groups.len() < 4 {
        return Err(Error::InvalidConfig(format!(
            "scaling fit needs at least 4 distinct t values, got {}",
            groups.len()
        )));
    }
    let min_replicas = groups.values().map(Vec::len).min().unwrap();
    if min_replicas < 10 {
        return Err(Error::InvalidConfig(format!(
            "scaling fit needs at least 10 replicas per t value, got {min_replicas}"
        )));
    }

    let xs: Vec<f64> = groups.keys().map(|&bits| f64::from_bits(bits).ln().ln()).collect();
    let sx: f64 = xs.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx - sx * sx / xs.len() as f64 <= 0.0 {
        return Err(Error::InvalidConfig(
            "degenerate regression abscissae: grid t values too close in log log t".into(),
        ));
    }

    let ys: Vec<f64> = groups.values().map(|g| median(g)).collect();
    let point = fit_line(&xs, &ys);

    let mut slopes = Vec::with_capacity(boot.resamples);
    let mut intercepts = Vec::with_capacity(boot.resamples);
    for b in 0..boot.resamples {
        let mut rng = stream(boot.seed, Purpose::Bootstrap, b as u64);
        let resampled: Vec<f64> = groups
            .values()
            .map(|g| {
                let draw: Vec<f64> =
                    (0..g.len()).map(|_| g[rng.random_range(0..g.len())]).collect();
                median(&draw)
            })
            .collect();
        let fit = fit_line(&xs, &resampled);
        slopes.push(fit.slope);
        intercepts.push(fit.intercept);
    }
    let exponent_interval = percentile_interval(&slopes, boot.level);
    let (ilo, ihi) = percentile_interval(&intercepts, boot.level);

    Ok(ScalingFit {
        model,
        prefactor: point.intercept.exp(),
        exponent: point.slope,
        prefactor_interval: (ilo.exp(), ihi.exp()),
        exponent_interval,
        grid_points: groups.len(),
        min_replicas,
        rss: point.rss,
    })
}
