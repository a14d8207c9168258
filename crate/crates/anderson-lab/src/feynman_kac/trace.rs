//! Heat-trace identity: spectral sum against a bridge Monte-Carlo integral.
//!
//! The trace of the killed semigroup equals both the sum of `exp(t Lambda_k)`
//! over the spectrum and the integral over the box of the diagonal heat
//! kernel, which Brownian bridges estimate as `G_t(0) E^{x,x}[exp(Int V) *
//! 1{stay}]`. Sites are visited in stratified rounds of a seeded permutation
//! so every site gets the same number of bridges.

use super::{log_bridge_survival, PathConfig};
use crate::error::{Error, Result};
use crate::grid::{Cube, MAX_DIM};
use crate::operator::{DiscreteOperator, SpectralResult};
use crate::rng::{stream, Purpose};
use crate::stats;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Outcome of one spectral-versus-bridge trace comparison.
#[derive(Debug, Clone)]
pub struct TraceReport {
    /// Truncated spectral sum `sum_k exp(t Lambda_k)`.
    pub spectral_trace: f64,
    /// Bridge Monte-Carlo estimate of the same trace.
    pub bridge_trace: f64,
    /// Standard error of the bridge estimate (linear scale).
    pub bridge_std_error: f64,
    /// `(bridge - spectral) / spectral`.
    pub rel_gap: f64,
    /// Gap measured in bridge standard errors.
    pub sigma_gap: f64,
    /// Rigorous relative bound on the discarded spectral tail.
    pub truncation_tail: f64,
    /// Share of the spectral sum carried by the top eigenvalue.
    pub leading_fraction: f64,
    pub sites: usize,
    pub bridges: usize,
}

/// Truncated spectral trace and the share of its leading term.
///
/// Returns `(sum_k exp(t lambda_k), exp(t lambda_1) / sum)`, computed with
/// a running shift so large `t lambda_1` cannot overflow.
pub fn spectral_trace(lambdas: &[f64], t: f64) -> (f64, f64) {
    assert!(!lambdas.is_empty());
    let top = lambdas[0];
    let s: f64 = lambdas.iter().map(|&l| (t * (l - top)).exp()).sum();
    ((t * top).exp() * s, 1.0 / s)
}

/// Compare the spectral trace against the bridge Monte-Carlo estimate.
///
/// `spectral` must hold enough eigenpairs that the discarded tail is
/// provably below `1e-6` of the sum; the bound charges every missing
/// eigenvalue with the last kept one.
pub fn trace_check(
    op: &DiscreteOperator,
    spectral: &SpectralResult,
    t: f64,
    cfg: &PathConfig,
) -> Result<TraceReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidConfig(format!("horizon {t} must be positive")));
    }
    if (cfg.t - t).abs() > 1e-12 {
        return Err(Error::InvalidConfig(
            "path plan horizon differs from the trace horizon".into(),
        ));
    }
    let k = spectral.lambdas.len();
    let n = op.len();
    let lam1 = spectral.lambdas[0];
    let lam_last = spectral.lambdas[k - 1];
    let tail = (n - k) as f64 * (t * (lam_last - lam1)).exp();
    let need = 1e-6;
    if k < n && tail >= need {
        return Err(Error::TruncationInsufficient { k, tail, need });
    }
    let (spec_sum, leading_fraction) = spectral_trace(&spectral.lambdas, t);

    let steps = cfg.steps();
    if steps > 512 {
        return Err(Error::InvalidConfig(format!(
            "bridge grid of {steps} steps exceeds the supported 512"
        )));
    }
    let dte = cfg.effective_dt();
    let cube = &op.cube;
    let sites: Vec<usize> = {
        let mut idx: Vec<usize> = (0..n).collect();
        // Permutation stream: top of the bridge index namespace.
        let mut rng = stream(cfg.seed, Purpose::Bridge, (1u64 << 40) - 1);
        idx.shuffle(&mut rng);
        idx
    };
    let rounds = cfg.paths.div_ceil(n).max(1);
    let total = rounds * n;
    let gauss = (2.0 * std::f64::consts::PI * t).powf(-(op.dim as f64) / 2.0);
    let scale = gauss * op.dx.powi(op.dim as i32) * n as f64;

    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|j| {
            let site = sites[j % n];
            let x0 = op.position(site);
            let mut rng = stream(cfg.seed, Purpose::Bridge, j as u64);
            bridge_weight(op, cube, &x0, t, steps, dte, &mut rng)
        })
        .collect();
    let mean = stats::mean(&values);
    let se = stats::std_error(&values);
    let bridge = scale * mean;
    let bridge_se = scale * se;
    let gap = bridge - spec_sum;
    Ok(TraceReport {
        spectral_trace: spec_sum,
        bridge_trace: bridge,
        bridge_std_error: bridge_se,
        rel_gap: gap / spec_sum,
        sigma_gap: if bridge_se > 0.0 { gap.abs() / bridge_se } else { f64::INFINITY },
        truncation_tail: tail,
        leading_fraction,
        sites: n,
        bridges: total,
    })
}

/// One pinned bridge at `x0`: `exp(trapezoid of the potential)` times the
/// stay-inside indicator and sub-step survival corrections; `0` if killed.
fn bridge_weight(
    op: &DiscreteOperator,
    cube: &Cube,
    x0: &[f64; MAX_DIM],
    t: f64,
    steps: usize,
    dte: f64,
    rng: &mut impl Rng,
) -> f64 {
    let dim = op.dim;
    let sdt = dte.sqrt();
    // Free-path skeleton W on the grid; the bridge subtracts (s/t) W(t).
    let mut w = [[0.0f64; MAX_DIM]; 1 + 512];
    debug_assert!(steps <= 512, "bridge grid too fine for the scratch buffer");
    for i in 1..=steps {
        for a in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            w[i][a] = w[i - 1][a] + sdt * z;
        }
    }
    let wt = w[steps];
    let pos = |i: usize| -> [f64; MAX_DIM] {
        let s = i as f64 * dte;
        let mut x = [0.0; MAX_DIM];
        for a in 0..dim {
            x[a] = x0[a] + w[i][a] - (s / t) * wt[a];
        }
        x
    };
    let mut prev_x = pos(0);
    let mut prev_v = op.potential_at(&prev_x[..dim]);
    let mut acc = 0.0;
    let mut log_surv = 0.0;
    for i in 1..=steps {
        let x = pos(i);
        if !cube.contains(&x[..dim]) {
            return 0.0;
        }
        log_surv += log_bridge_survival(cube, &prev_x, &x, dte);
        let v = op.potential_at(&x[..dim]);
        acc += 0.5 * (prev_v + v) * dte;
        prev_v = v;
        prev_x = x;
    }
    (acc + log_surv).exp()
}
