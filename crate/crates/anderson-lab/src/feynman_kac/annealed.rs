//! Annealed moments of the total mass by direct tuple sampling.
//!
//! Averaging the field first turns the p-th moment into an expectation
//! over p independent Brownian paths of `exp(S)` where `S` sums pairwise
//! covariance integrals along the tuple. The estimator samples tuples,
//! evaluates `S` by a tensorized trapezoid rule over the covariance table,
//! and averages in log space. An optional importance-sampling variant
//! draws half of the tuples from a mutually attracted proposal to tame
//! the weight spread once the pair integrals dominate.

use crate::error::{Error, Result};
use crate::noise::DiscreteKernel;
use crate::rng::{stream, Purpose};
use crate::grid::MAX_DIM;
use crate::stats::log_mean_exp;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::PathConfig;

const MAX_MOMENT: usize = 3;
const ESS_FLOOR: f64 = 10.0;

/// Monte-Carlo estimate of an annealed moment `E[U^p]`.
#[derive(Debug, Clone)]
pub struct AnnealedEstimate {
    /// Log of the estimated moment.
    pub log_mean: f64,
    /// Standard error of the log estimate via the delta method.
    pub std_error: f64,
    /// Effective sample size of the tuple weights.
    pub ess: f64,
    /// Number of sampled path tuples.
    pub tuples: usize,
    pub p: usize,
    /// Deterministic upper bound `p^2 t^2 R(0) / 2` for `log E[U^p]`.
    pub sure_log_bound: f64,
    /// Largest log weight seen, for diagnosing concentration.
    pub max_log_weight: f64,
}

/// Estimate `log E[U^p]` for the free-space mass by plain tuple sampling.
pub fn annealed_moment(
    kernel: &DiscreteKernel,
    t: f64,
    p: usize,
    cfg: &PathConfig,
) -> Result<AnnealedEstimate> {
    annealed_impl(kernel, t, p, cfg, None)
}

/// Same estimate with a mutually attracted proposal mixed in.
///
/// `attraction` is the drift rate pulling each path toward the mean of
/// the others (toward the origin when `p` is one); the balance-heuristic
/// weight keeps every tuple weight within twice the plain one.
pub fn annealed_moment_importance(
    kernel: &DiscreteKernel,
    t: f64,
    p: usize,
    cfg: &PathConfig,
    attraction: f64,
) -> Result<AnnealedEstimate> {
    if !(attraction > 0.0) || !attraction.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "attraction must be positive and finite, got {attraction}"
        )));
    }
    annealed_impl(kernel, t, p, cfg, Some(attraction))
}

fn annealed_impl(
    kernel: &DiscreteKernel,
    t: f64,
    p: usize,
    cfg: &PathConfig,
    attraction: Option<f64>,
) -> Result<AnnealedEstimate> {
    if p == 0 || p > MAX_MOMENT {
        return Err(Error::InvalidConfig(format!(
            "moment order must be in 1..={MAX_MOMENT}, got {p}"
        )));
    }
    cfg.validate(kernel.eps)?;
    if (cfg.t - t).abs() > 1e-12 * t.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "path config horizon {} does not match t {}",
            cfg.t, t
        )));
    }
    let steps = cfg.steps();
    let dt = cfg.effective_dt();
    let dim = kernel.spec.dim;
    let logs: Vec<f64> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| tuple_log_weight(kernel, p, steps, dt, dim, cfg.seed, i as u64, attraction))
        .collect();
    let summary = log_mean_exp(&logs);
    if summary.ess < ESS_FLOOR {
        return Err(Error::WeightDegeneracy {
            ess: summary.ess,
            floor: ESS_FLOOR,
            paths: cfg.paths,
        });
    }
    let max_log_weight = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(AnnealedEstimate {
        log_mean: summary.log_mean,
        std_error: summary.std_error,
        ess: summary.ess,
        tuples: cfg.paths,
        p,
        sure_log_bound: 0.5 * (p * p) as f64 * t * t * kernel.r0(),
        max_log_weight,
    })
}

/// Log weight of one sampled tuple: the pairwise covariance sum `S` plus
/// the log of the importance correction (zero under plain sampling).
fn tuple_log_weight(
    kernel: &DiscreteKernel,
    p: usize,
    steps: usize,
    dt: f64,
    dim: usize,
    seed: u64,
    index: u64,
    attraction: Option<f64>,
) -> f64 {
    let mut rng = stream(seed, Purpose::Tuple, index);
    let nodes = steps + 1;
    let mut paths = vec![[0.0f64; MAX_DIM]; p * nodes];
    let sdt = dt.sqrt();
    let mut log_ratio = 0.0;
    match attraction {
        None => {
            for i in 0..p {
                for s in 0..steps {
                    let prev = paths[i * nodes + s];
                    let mut next = prev;
                    for a in 0..dim {
                        let g: f64 = rng.sample(StandardNormal);
                        next[a] = prev[a] + sdt * g;
                    }
                    paths[i * nodes + s + 1] = next;
                }
            }
        }
        Some(lambda) => {
            // One coin picks the mixture component for the whole tuple;
            // the two components consume the generator identically, and
            // the drift at each step is the same function of the realized
            // history under either component, so both path densities can
            // be read off along the sampled trajectory.
            let attracted = rng.random::<f64>() < 0.5;
            let mut log_plain = 0.0;
            let mut log_drifted = 0.0;
            for s in 0..steps {
                let mut centroid = [0.0f64; MAX_DIM];
                if p > 1 {
                    for i in 0..p {
                        let x = paths[i * nodes + s];
                        for a in 0..dim {
                            centroid[a] += x[a];
                        }
                    }
                    for a in 0..dim {
                        centroid[a] /= p as f64;
                    }
                }
                for i in 0..p {
                    let prev = paths[i * nodes + s];
                    let mut anchor = [0.0f64; MAX_DIM];
                    if p > 1 {
                        for a in 0..dim {
                            anchor[a] = (centroid[a] * p as f64 - prev[a]) / (p - 1) as f64;
                        }
                    }
                    let mut next = prev;
                    for a in 0..dim {
                        let g: f64 = rng.sample(StandardNormal);
                        let drift = lambda * (anchor[a] - prev[a]) * dt;
                        let step = if attracted { drift + sdt * g } else { sdt * g };
                        next[a] = prev[a] + step;
                        let z0 = step / sdt;
                        let z1 = (step - drift) / sdt;
                        log_plain += -0.5 * z0 * z0;
                        log_drifted += -0.5 * z1 * z1;
                    }
                    paths[i * nodes + s + 1] = next;
                }
            }
            // Balance weight on whole-tuple densities; the shared Gaussian
            // normalization cancels. Bounded by log 2 by construction.
            let half = -std::f64::consts::LN_2;
            log_ratio = log_plain - log_add(log_plain + half, log_drifted + half);
        }
    }
    let mut s_sum = 0.0;
    for i in 0..p {
        let xi = &paths[i * nodes..(i + 1) * nodes];
        s_sum += 0.5 * pair_integral(kernel, xi, xi, dt, dim);
        for j in (i + 1)..p {
            let xj = &paths[j * nodes..(j + 1) * nodes];
            s_sum += pair_integral(kernel, xi, xj, dt, dim);
        }
    }
    s_sum + log_ratio
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Trapezoid-squared approximation of the double time integral of the
/// covariance along two paths.
fn pair_integral(
    kernel: &DiscreteKernel,
    xs: &[[f64; MAX_DIM]],
    ys: &[[f64; MAX_DIM]],
    dt: f64,
    dim: usize,
) -> f64 {
    let n = xs.len();
    let mut acc = 0.0;
    for (u, x) in xs.iter().enumerate() {
        let wu = if u == 0 || u == n - 1 { 0.5 } else { 1.0 };
        let mut row = 0.0;
        for (v, y) in ys.iter().enumerate() {
            let wv = if v == 0 || v == n - 1 { 0.5 } else { 1.0 };
            let mut diff = [0.0f64; MAX_DIM];
            for a in 0..dim {
                diff[a] = x[a] - y[a];
            }
            row += wv * kernel.r_at(&diff[..dim]);
        }
        acc += wu * row;
    }
    acc * dt * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feynman_kac::total_mass;
    use crate::noise::{build_kernel, sample_field, CovarianceSpec, KernelFamily};

    fn kernel1(eps: f64, dx: f64) -> DiscreteKernel {
        let spec = CovarianceSpec::new(KernelFamily::TriangularTensor, 1.0, 1).unwrap();
        build_kernel(&spec, eps, dx).unwrap()
    }

    #[test]
    fn vanishing_covariance_gives_exactly_one() {
        let kernel = DiscreteKernel::vanishing(1);
        let cfg = PathConfig::standard(1.0, 1.0, 200, 7);
        let est = annealed_moment(&kernel, 1.0, 2, &cfg).unwrap();
        assert_eq!(est.log_mean, 0.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.sure_log_bound, 0.0);
    }

    #[test]
    fn moment_order_is_capped_and_positive() {
        let kernel = kernel1(1.0, 0.0625);
        let cfg = PathConfig::standard(1.0, 1.0, 200, 7);
        assert!(annealed_moment(&kernel, 1.0, 0, &cfg).unwrap_err().is_config());
        assert!(annealed_moment(&kernel, 1.0, 4, &cfg).unwrap_err().is_config());
    }

    #[test]
    fn sure_bound_dominates_every_estimate() {
        let kernel = kernel1(1.0, 0.0625);
        for p in 1..=3usize {
            let cfg = PathConfig::standard(0.75, 1.0, 800, 100 + p as u64);
            let est = annealed_moment(&kernel, 0.75, p, &cfg).unwrap();
            assert!(
                est.log_mean <= est.sure_log_bound + 3.0 * est.std_error,
                "p={p}: {} > {}",
                est.log_mean,
                est.sure_log_bound
            );
            assert!(est.max_log_weight <= est.sure_log_bound + 1e-9);
        }
    }

    #[test]
    fn first_moment_matches_averaging_the_quenched_mass() {
        // Two-stage oracle: sample fields, average the quenched mass over
        // field replicas, and compare with the direct tuple estimate.
        // Both stages share the horizon, step grid and trapezoid weights,
        // so the residual gap is statistical plus the field interpolation
        // error of order dx.
        let eps = 1.0;
        let dx = 0.0625;
        let t = 0.5;
        let kernel = kernel1(eps, dx);
        let cfg = PathConfig::standard(t, eps, 4000, 11);
        let direct = annealed_moment(&kernel, t, 1, &cfg).unwrap();

        let spec = CovarianceSpec::new(KernelFamily::TriangularTensor, 1.0, 1).unwrap();
        let replicas = 60usize;
        let per_field = 400usize;
        let mut field_means = Vec::with_capacity(replicas);
        for rep in 0..replicas {
            let f = sample_field(&spec, eps, 1.0, 6.0, dx, 700 + rep as u64).unwrap();
            let fcfg = PathConfig::standard(t, eps, per_field, 2000 + rep as u64);
            let est = total_mass(&f, 1.0, &fcfg).unwrap();
            field_means.push(est.log_mean.exp());
        }
        let mean: f64 = field_means.iter().sum::<f64>() / replicas as f64;
        let var: f64 = field_means
            .iter()
            .map(|m| (m - mean) * (m - mean))
            .sum::<f64>()
            / (replicas as f64 - 1.0);
        let two_stage_log = mean.ln();
        let two_stage_se = (var / replicas as f64).sqrt() / mean;
        let tol = 3.0 * (direct.std_error.powi(2) + two_stage_se.powi(2)).sqrt() + 0.02;
        assert!(
            (direct.log_mean - two_stage_log).abs() < tol,
            "direct {} vs two-stage {} (tol {tol})",
            direct.log_mean,
            two_stage_log
        );
    }

    #[test]
    fn second_moment_rate_meets_the_pair_limit_at_short_horizons() {
        // Frozen paths make the pairwise sum approach p^2 R(0) t^2 / 2
        // surely as t -> 0, so the normalized rate converges up to the
        // pair limit at the short end and falls away from it with t.
        let kernel = kernel1(1.0, 0.0625);
        let limit = 2.0 * kernel.r0();
        let mut devs = Vec::new();
        for (i, &t) in [0.25, 0.5, 1.0].iter().enumerate() {
            let cfg = PathConfig::standard(t, 1.0, 6000, 21 + i as u64);
            let est = annealed_moment(&kernel, t, 2, &cfg).unwrap();
            let rate = est.log_mean / (t * t);
            assert!(rate < limit, "t {t}: rate {rate} above the limit {limit}");
            devs.push((limit - rate) / limit);
        }
        assert!(
            devs[0] < devs[1] && devs[1] < devs[2],
            "deviation not shrinking toward small t: {devs:?}"
        );
        assert!(devs[0] < 0.2, "short-horizon deviation {} too wide", devs[0]);
    }

    #[test]
    fn importance_mixture_agrees_with_plain_sampling() {
        let kernel = kernel1(1.0, 0.0625);
        let t = 0.75;
        let cfg_a = PathConfig::standard(t, 1.0, 4000, 31);
        let plain = annealed_moment(&kernel, t, 2, &cfg_a).unwrap();
        let cfg_b = PathConfig::standard(t, 1.0, 4000, 32);
        let mixed = annealed_moment_importance(&kernel, t, 2, &cfg_b, 0.8).unwrap();
        let tol = 3.0 * (plain.std_error.powi(2) + mixed.std_error.powi(2)).sqrt() + 1e-3;
        assert!(
            (plain.log_mean - mixed.log_mean).abs() < tol,
            "plain {} vs mixed {} (tol {tol})",
            plain.log_mean,
            mixed.log_mean
        );
    }

    #[test]
    fn importance_needs_a_positive_attraction() {
        let kernel = kernel1(1.0, 0.0625);
        let cfg = PathConfig::standard(0.5, 1.0, 200, 33);
        assert!(annealed_moment_importance(&kernel, 0.5, 2, &cfg, 0.0)
            .unwrap_err()
            .is_config());
    }
}
