//! Monte-Carlo path estimators for the exponential functional of the field.
//!
//! The total mass is `E^0[exp(sigma Int_0^t xi(B(s)) ds)]` over Brownian
//! paths started at the origin; the Dirichlet variant multiplies in the
//! probability of staying inside a box, including the sub-step
//! bridge-crossing correction for each wall. All aggregation happens in the
//! log domain with running-max shifts; estimates carry a delta-method
//! standard error and an effective sample size.

mod annealed;
mod growth;
mod trace;

pub use annealed::{annealed_moment, annealed_moment_importance, AnnealedEstimate};
pub use growth::{quenched_growth_statistic, GrowthBasis, GrowthPoint};
pub use trace::{spectral_trace, trace_check, TraceReport};

use crate::error::{Error, Result};
use crate::grid::{Cube, MAX_DIM};
use crate::noise::{field_covered, FieldSample};
use crate::rng::{stream, Purpose};
use crate::stats;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// How the field is read along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpMode {
    /// Multilinear interpolation of the lattice values (default).
    Multilinear,
    /// Nearest-lattice-point lookup (diagnostic mode).
    NearestLattice,
}

impl InterpMode {
    /// Parse a config string.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "multilinear" => Ok(InterpMode::Multilinear),
            "nearest" | "nearest-lattice" => Ok(InterpMode::NearestLattice),
            other => Err(Error::InvalidConfig(format!(
                "unknown interpolation mode '{other}' (multilinear | nearest)"
            ))),
        }
    }

    /// Canonical config name.
    pub fn name(self) -> &'static str {
        match self {
            InterpMode::Multilinear => "multilinear",
            InterpMode::NearestLattice => "nearest",
        }
    }
}

/// Discretization and sampling plan for path estimators.
#[derive(Debug, Clone)]
pub struct PathConfig {
    /// Time horizon.
    pub t: f64,
    /// Requested step; the grid uses `t / ceil(t/dt)` so it ends exactly at `t`.
    pub dt: f64,
    /// Number of Monte-Carlo paths.
    pub paths: usize,
    pub seed: u64,
    pub interpolation: InterpMode,
}

impl PathConfig {
    /// Standard plan: step `eps^2/4` (capped by `t`), multilinear reads.
    pub fn standard(t: f64, eps: f64, paths: usize, seed: u64) -> Self {
        PathConfig {
            t,
            dt: (eps * eps / 4.0).min(t),
            paths,
            seed,
            interpolation: InterpMode::Multilinear,
        }
    }

    /// Check the plan against the field scale `eps`.
    pub fn validate(&self, eps: f64) -> Result<()> {
        if !(self.t > 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon {} and step {} must be positive",
                self.t, self.dt
            )));
        }
        if self.dt > eps * eps / 4.0 + 1e-15 {
            return Err(Error::InvalidConfig(format!(
                "step {} too coarse for field scale {eps}: need dt <= eps^2/4 = {}",
                self.dt,
                eps * eps / 4.0
            )));
        }
        if self.paths < 100 {
            return Err(Error::InvalidConfig(format!(
                "{} paths requested; need at least 100",
                self.paths
            )));
        }
        Ok(())
    }

    /// Number of uniform steps.
    pub fn steps(&self) -> usize {
        ((self.t / self.dt).ceil() as usize).max(1)
    }

    /// Actual step used: `t / steps`.
    pub fn effective_dt(&self) -> f64 {
        self.t / self.steps() as f64
    }
}

/// Log-domain Monte-Carlo estimate with its sampling diagnostics.
#[derive(Debug, Clone)]
pub struct FKEstimate {
    /// `log( (1/M) sum exp(weight) )`.
    pub log_mean: f64,
    /// Delta-method standard error of `log_mean`.
    pub std_error: f64,
    pub paths: usize,
    /// Effective sample size of the exponential weights.
    pub ess: f64,
    /// Fraction of paths killed at a wall (Dirichlet variant; zero for free).
    pub exit_fraction: f64,
    /// Fraction of free paths that ever hit the sampled-region clamp.
    pub clamped_fraction: f64,
}

/// Effective-sample-size floor below which estimates are refused.
pub const ESS_FLOOR: f64 = 10.0;
/// Largest tolerated fraction of clamped free paths.
pub const CLAMP_LIMIT: f64 = 1e-2;
/// Largest tolerated a-priori probability of leaving the sampled region.
pub const EXIT_PROB_LIMIT: f64 = 1e-3;

/// Free-space total mass `E^0[exp(sigma Int_0^t xi(B(s)) ds)]`.
///
/// Paths that wander outside the sampled region are clamped to it; the
/// sampled box must be large enough that this is a sub-1e-3-probability
/// event, which is checked a priori through a Gaussian tail bound and
/// a posteriori through the realized clamp fraction.
pub fn total_mass(sample: &FieldSample, sigma: f64, cfg: &PathConfig) -> Result<FKEstimate> {
    cfg.validate(sample.eps)?;
    let dim = sample.spec.dim;
    let ext = sample.lattice.extent();
    let exit_bound = 2.0 * dim as f64 * (-ext * ext / (2.0 * cfg.t)).exp();
    if exit_bound > EXIT_PROB_LIMIT {
        return Err(Error::ExitBudgetExceeded {
            fraction: exit_bound,
            limit: EXIT_PROB_LIMIT,
        });
    }
    let weights: Vec<(f64, bool)> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| free_path_logweight(sample, sigma, cfg, i as u64))
        .collect();
    let clamped = weights.iter().filter(|(_, c)| *c).count();
    let clamped_fraction = clamped as f64 / cfg.paths as f64;
    if clamped_fraction > CLAMP_LIMIT {
        return Err(Error::ExitBudgetExceeded {
            fraction: clamped_fraction,
            limit: CLAMP_LIMIT,
        });
    }
    let logs: Vec<f64> = weights.into_iter().map(|(w, _)| w).collect();
    finish_estimate(&logs, 0.0, clamped_fraction)
}

/// Dirichlet total mass: paths are killed on leaving `cube`, with the
/// per-step bridge-crossing correction applied at every wall.
pub fn dirichlet_total_mass(
    sample: &FieldSample,
    sigma: f64,
    cube: &Cube,
    cfg: &PathConfig,
) -> Result<FKEstimate> {
    cfg.validate(sample.eps)?;
    field_covered(sample, cube)?;
    let origin = [0.0; MAX_DIM];
    if !cube.contains(&origin[..cube.dim]) {
        return Err(Error::InvalidConfig(
            "paths start at the origin, which lies outside the box".into(),
        ));
    }
    let weights: Vec<f64> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| dirichlet_path_logweight(sample, sigma, cube, cfg, i as u64))
        .collect();
    let killed = weights.iter().filter(|w| w.is_infinite()).count();
    if killed == cfg.paths {
        return Err(Error::AllPathsExited {
            paths: cfg.paths,
            t: cfg.t,
        });
    }
    finish_estimate(&weights, killed as f64 / cfg.paths as f64, 0.0)
}

fn finish_estimate(logs: &[f64], exit_fraction: f64, clamped_fraction: f64) -> Result<FKEstimate> {
    let agg = stats::log_mean_exp(logs);
    if agg.ess < ESS_FLOOR {
        return Err(Error::WeightDegeneracy {
            ess: agg.ess,
            floor: ESS_FLOOR,
            paths: logs.len(),
        });
    }
    Ok(FKEstimate {
        log_mean: agg.log_mean,
        std_error: agg.std_error,
        paths: logs.len(),
        ess: agg.ess,
        exit_fraction,
        clamped_fraction,
    })
}

fn field_value(sample: &FieldSample, mode: InterpMode, x: &[f64]) -> f64 {
    match mode {
        InterpMode::Multilinear => sample.interpolate(x),
        InterpMode::NearestLattice => sample.nearest(x),
    }
}

/// Trapezoid log-weight of one free path; the flag records whether the path
/// ever hit the sampled-region clamp.
pub(crate) fn free_path_logweight(
    sample: &FieldSample,
    sigma: f64,
    cfg: &PathConfig,
    index: u64,
) -> (f64, bool) {
    let dim = sample.spec.dim;
    let ext = sample.lattice.extent();
    let n = cfg.steps();
    let dte = cfg.effective_dt();
    let sdt = dte.sqrt();
    let mut rng = stream(cfg.seed, Purpose::Path, index);
    let mut x = [0.0f64; MAX_DIM];
    let mut clamped = false;
    let mut prev = sigma * field_value(sample, cfg.interpolation, &x[..dim]);
    let mut acc = 0.0;
    for _ in 0..n {
        for x_a in x.iter_mut().take(dim) {
            let z: f64 = rng.sample(StandardNormal);
            *x_a += sdt * z;
            if x_a.abs() > ext {
                *x_a = x_a.clamp(-ext, ext);
                clamped = true;
            }
        }
        let cur = sigma * field_value(sample, cfg.interpolation, &x[..dim]);
        acc += 0.5 * (prev + cur) * dte;
        prev = cur;
    }
    (acc, clamped)
}

/// Trapezoid log-weight of one path killed at the walls of `cube`;
/// `-inf` marks a killed path. Surviving paths carry the product of
/// per-step bridge survival probabilities as an exact multiplicative weight.
pub(crate) fn dirichlet_path_logweight(
    sample: &FieldSample,
    sigma: f64,
    cube: &Cube,
    cfg: &PathConfig,
    index: u64,
) -> f64 {
    let dim = sample.spec.dim;
    let n = cfg.steps();
    let dte = cfg.effective_dt();
    let sdt = dte.sqrt();
    let mut rng = stream(cfg.seed, Purpose::Path, index);
    let mut x = [0.0f64; MAX_DIM];
    let mut prev = sigma * field_value(sample, cfg.interpolation, &x[..dim]);
    let mut acc = 0.0;
    let mut log_survival = 0.0;
    for _ in 0..n {
        let old = x;
        for x_a in x.iter_mut().take(dim) {
            let z: f64 = rng.sample(StandardNormal);
            *x_a += sdt * z;
        }
        if !cube.contains(&x[..dim]) {
            return f64::NEG_INFINITY;
        }
        log_survival += log_bridge_survival(cube, &old, &x, dte);
        let cur = sigma * field_value(sample, cfg.interpolation, &x[..dim]);
        acc += 0.5 * (prev + cur) * dte;
        prev = cur;
    }
    acc + log_survival
}

/// Log-probability that the Brownian bridge between two interior points
/// (duration `dt`) stays inside the cube: per axis and wall, the crossing
/// probability is `exp(-2 d0 d1 / dt)` with `d0`, `d1` the wall distances.
pub(crate) fn log_bridge_survival(cube: &Cube, x0: &[f64; MAX_DIM], x1: &[f64; MAX_DIM], dt: f64) -> f64 {
    let mut acc = 0.0;
    for a in 0..cube.dim {
        let lo = cube.lo(a);
        let hi = cube.hi(a);
        let cross_lo = (-2.0 * (x0[a] - lo) * (x1[a] - lo) / dt).exp();
        let cross_hi = (-2.0 * (hi - x0[a]) * (hi - x1[a]) / dt).exp();
        acc += (1.0 - cross_lo).ln() + (1.0 - cross_hi).ln();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{constant_field, sample_field, CovarianceSpec, KernelFamily};

    fn spec1() -> CovarianceSpec {
        CovarianceSpec::new(KernelFamily::TriangularTensor, 1.0, 1).unwrap()
    }

    #[test]
    fn zero_potential_mass_is_exactly_one() {
        let f = constant_field(1, 8.0, 0.125, 0.0);
        let cfg = PathConfig::standard(1.0, 1.0, 200, 5);
        let est = total_mass(&f, 1.0, &cfg).unwrap();
        assert_eq!(est.log_mean, 0.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.ess, 200.0);
    }

    #[test]
    fn constant_potential_mass_is_exponential_in_t() {
        let c = 0.63;
        let f = constant_field(1, 10.0, 0.125, c);
        let sigma = 1.7;
        for t in [0.5, 2.0] {
            let cfg = PathConfig::standard(t, 1.0, 150, 6);
            let est = total_mass(&f, sigma, &cfg).unwrap();
            assert!(
                (est.log_mean - sigma * c * t).abs() < 1e-12,
                "t {t}: {} vs {}",
                est.log_mean,
                sigma * c * t
            );
            // Interpolating a constant field is exact only to the last
            // ulp, so the weights may spread by rounding noise.
            assert!(est.std_error < 1e-14);
        }
    }

    #[test]
    fn step_refinement_changes_nothing_within_error() {
        let f = sample_field(&spec1(), 1.0, 1.0, 10.0, 0.125, 31).unwrap();
        let coarse = PathConfig {
            t: 1.0,
            dt: 0.25,
            paths: 4000,
            seed: 71,
            interpolation: InterpMode::Multilinear,
        };
        let fine = PathConfig {
            dt: 0.25 / 16.0,
            seed: 72,
            ..coarse.clone()
        };
        let a = total_mass(&f, 1.0, &coarse).unwrap();
        let b = total_mass(&f, 1.0, &fine).unwrap();
        let combined = (a.std_error * a.std_error + b.std_error * b.std_error).sqrt();
        assert!(
            (a.log_mean - b.log_mean).abs() < 3.0 * combined,
            "coarse {} fine {} (3se {})",
            a.log_mean,
            b.log_mean,
            3.0 * combined
        );
    }

    #[test]
    fn too_small_a_sampled_box_is_refused_up_front() {
        let f = sample_field(&spec1(), 1.0, 1.0, 2.0, 0.125, 32).unwrap();
        let cfg = PathConfig::standard(4.0, 1.0, 200, 7);
        let err = total_mass(&f, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::ExitBudgetExceeded { .. }));
    }

    #[test]
    fn config_preconditions_are_enforced() {
        let f = sample_field(&spec1(), 0.5, 1.0, 4.0, 0.0625, 33).unwrap();
        let coarse_dt = PathConfig {
            t: 1.0,
            dt: 0.2,
            paths: 200,
            seed: 1,
            interpolation: InterpMode::Multilinear,
        };
        assert!(total_mass(&f, 1.0, &coarse_dt).unwrap_err().is_config());
        let few_paths = PathConfig {
            dt: 0.05,
            paths: 50,
            ..coarse_dt
        };
        assert!(total_mass(&f, 1.0, &few_paths).unwrap_err().is_config());
    }

    #[test]
    fn dirichlet_mass_matches_the_heat_kernel_series() {
        // Zero potential on (-1, 1): the killed mass from the origin is
        // sum over odd modes of exp(t lambda_k) <1, psi_k> psi_k(0).
        let f = constant_field(1, 2.0, 1.0 / 64.0, 0.0);
        let t = 2.0;
        let cfg = PathConfig {
            t,
            dt: 0.005,
            paths: 60_000,
            seed: 9,
            interpolation: InterpMode::Multilinear,
        };
        let est = dirichlet_total_mass(&f, 1.0, &Cube::centered(1, 1.0), &cfg).unwrap();
        let pi = std::f64::consts::PI;
        let mut want = 0.0;
        for k in (1..100).step_by(2) {
            let kf = k as f64;
            want += (-t * (kf * pi) * (kf * pi) / 8.0).exp() * (4.0 / (kf * pi))
                * (kf * pi / 2.0).sin();
        }
        let u = est.log_mean.exp();
        // Delta-method error on the linear scale.
        let se = u * est.std_error;
        assert!(
            (u - want).abs() < 3.0 * se,
            "estimate {u} vs series {want} (3se {})",
            3.0 * se
        );
        assert!(est.exit_fraction > 0.5, "exit fraction {}", est.exit_fraction);
    }

    #[test]
    fn huge_box_reproduces_the_free_estimate_bitwise() {
        let f = sample_field(&spec1(), 1.0, 1.0, 40.0, 0.25, 34).unwrap();
        let cfg = PathConfig::standard(1.0, 1.0, 300, 11);
        let free = total_mass(&f, 1.0, &cfg).unwrap();
        let killed = dirichlet_total_mass(&f, 1.0, &Cube::centered(1, 39.0), &cfg).unwrap();
        assert_eq!(free.log_mean, killed.log_mean);
        assert_eq!(killed.exit_fraction, 0.0);
    }

    #[test]
    fn vanishing_horizon_mass_tends_to_one() {
        let f = sample_field(&spec1(), 1.0, 1.0, 6.0, 0.125, 35).unwrap();
        let cfg = PathConfig {
            t: 1e-3,
            dt: 1e-3,
            paths: 500,
            seed: 12,
            interpolation: InterpMode::Multilinear,
        };
        let est = dirichlet_total_mass(&f, 1.0, &Cube::centered(1, 2.0), &cfg).unwrap();
        // The truth itself is 1 + O(t), so allow a few |xi(0)| t on top
        // of the Monte-Carlo band.
        assert!(
            est.log_mean.abs() < 3.0 * est.std_error + 5e-3,
            "log mass {} se {}",
            est.log_mean,
            est.std_error
        );
        assert_eq!(est.exit_fraction, 0.0);
    }

    #[test]
    fn killing_never_raises_a_path_weight() {
        let f = sample_field(&spec1(), 0.7, 1.0, 12.0, 0.0625, 36).unwrap();
        let cube = Cube::centered(1, 2.0);
        let cfg = PathConfig::standard(1.5, 0.7, 400, 13);
        for i in 0..400 {
            let (free, _) = free_path_logweight(&f, 1.0, &cfg, i);
            let killed = dirichlet_path_logweight(&f, 1.0, &cube, &cfg, i);
            assert!(killed <= free + 1e-12, "path {i}: {killed} > {free}");
        }
    }

    #[test]
    fn absolute_field_mass_grows_with_coupling() {
        let f = sample_field(&spec1(), 0.7, 1.0, 10.0, 0.0625, 37)
            .unwrap()
            .map_values(f64::abs);
        let cfg = PathConfig::standard(1.0, 0.7, 500, 14);
        let lo = total_mass(&f, 0.5, &cfg).unwrap();
        let hi = total_mass(&f, 1.0, &cfg).unwrap();
        assert!(
            hi.log_mean > lo.log_mean,
            "sigma 1.0 gave {} vs sigma 0.5 {}",
            hi.log_mean,
            lo.log_mean
        );
    }

    #[test]
    fn sign_flipped_fields_agree_in_distribution() {
        let cfg = PathConfig::standard(0.75, 1.0, 400, 15);
        let mut plain = Vec::new();
        let mut flipped = Vec::new();
        for rep in 0..24 {
            let f = sample_field(&spec1(), 1.0, 1.0, 8.0, 0.125, 900 + rep).unwrap();
            let g = f.map_values(|v| -v);
            plain.push(total_mass(&f, 1.0, &cfg).unwrap().log_mean);
            flipped.push(total_mass(&g, 1.0, &cfg).unwrap().log_mean);
        }
        let gap = (stats::mean(&plain) - stats::mean(&flipped)).abs();
        let se = (stats::std_error(&plain).powi(2) + stats::std_error(&flipped).powi(2)).sqrt();
        assert!(gap < 3.0 * se + 0.05, "means differ by {gap} (3se {})", 3.0 * se);
    }
}
