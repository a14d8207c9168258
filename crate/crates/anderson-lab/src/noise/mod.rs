//! Mollifier kernels and their lattice covariance tables.
//!
//! A covariance is specified by an even, compactly supported probability
//! density `rbar` (the mollifier); the field covariance is the
//! self-convolution `R = rbar * rbar`. All shipped families are tensor
//! products of a one-axis profile supported on `[-rho, rho]`, so the lattice
//! tables store the axis profile and d-dimensional values are products of
//! axis entries. Scaled kernels use `rbar_eps(x) = eps^-d rbar(x/eps)`.

mod field;

pub use field::{
    constant_field, field_covered, max_field_statistic, sample_field, sample_field_with,
    view_at_scale, FieldSample, MaxFieldStat, SampleOptions,
};

use crate::error::{Error, Result};

/// Shipped mollifier families (axis profiles on `[-rho, rho]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `(1 - |u|/rho)/rho`, Lipschitz with a corner at the origin.
    TriangularTensor,
    /// `(1 + cos(pi u/rho))/(2 rho)`, C^1 up to the support edge.
    CosineBump,
    /// `(15/16)(1 - (u/rho)^2)^2 / rho`, the biweight profile.
    QuarticSpline,
}

impl KernelFamily {
    /// Parse the config-file spelling.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "triangular" | "triangular-tensor" => Ok(KernelFamily::TriangularTensor),
            "cosine" | "cosine-bump" => Ok(KernelFamily::CosineBump),
            "quartic" | "quartic-spline" => Ok(KernelFamily::QuarticSpline),
            other => Err(Error::InvalidConfig(format!("unknown kernel family '{other}'"))),
        }
    }

    /// Config-file spelling.
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::TriangularTensor => "triangular",
            KernelFamily::CosineBump => "cosine",
            KernelFamily::QuarticSpline => "quartic",
        }
    }
}

/// Full description of a covariance: family, support radius, Holder data
/// and spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    pub family: KernelFamily,
    /// Axis support radius `rho` of the unscaled mollifier.
    pub support_radius: f64,
    /// Holder exponent of the mollifier (1 for every shipped family).
    pub holder_h: f64,
    /// Spatial dimension, 1 to 3.
    pub dim: usize,
}

impl CovarianceSpec {
    /// Spec for a shipped family with its natural Holder exponent.
    pub fn new(family: KernelFamily, support_radius: f64, dim: usize) -> Result<Self> {
        if !(1..=crate::grid::MAX_DIM).contains(&dim) {
            return Err(Error::InvalidConfig(format!("dimension {dim} outside 1..=3")));
        }
        if !(support_radius > 0.0) {
            return Err(Error::InvalidConfig("support_radius must be positive".into()));
        }
        Ok(CovarianceSpec {
            family,
            support_radius,
            holder_h: 1.0,
            dim,
        })
    }

    /// Axis profile of the unscaled mollifier.
    pub fn axis_profile(&self, u: f64) -> f64 {
        let rho = self.support_radius;
        let a = u.abs();
        if a >= rho {
            return 0.0;
        }
        match self.family {
            KernelFamily::TriangularTensor => (1.0 - a / rho) / rho,
            KernelFamily::CosineBump => (1.0 + (std::f64::consts::PI * u / rho).cos()) / (2.0 * rho),
            KernelFamily::QuarticSpline => {
                let s = 1.0 - (u / rho) * (u / rho);
                (15.0 / 16.0) * s * s / rho
            }
        }
    }

    /// Closed-form axis value of `R(0) = int rbar^2` for the unscaled kernel.
    pub fn axis_r0_continuum(&self) -> f64 {
        let rho = self.support_radius;
        match self.family {
            KernelFamily::TriangularTensor => 2.0 / (3.0 * rho),
            KernelFamily::CosineBump => 3.0 / (4.0 * rho),
            KernelFamily::QuarticSpline => 5.0 / (7.0 * rho),
        }
    }

    /// Closed-form `R(0)` of the unscaled d-dimensional kernel.
    pub fn r0_continuum(&self) -> f64 {
        self.axis_r0_continuum().powi(self.dim as i32)
    }

    /// Peak of the axis profile.
    pub fn axis_peak(&self) -> f64 {
        let rho = self.support_radius;
        match self.family {
            KernelFamily::TriangularTensor | KernelFamily::CosineBump => 1.0 / rho,
            KernelFamily::QuarticSpline => 15.0 / (16.0 * rho),
        }
    }

    /// Bound on the axis profile derivative.
    pub fn axis_slope_bound(&self) -> f64 {
        let rho = self.support_radius;
        match self.family {
            KernelFamily::TriangularTensor => 1.0 / (rho * rho),
            KernelFamily::CosineBump => std::f64::consts::PI / (2.0 * rho * rho),
            // max of |d/du (15/16)(1-u^2)^2| = (15/16) * 8/(3 sqrt 3) at u = 1/sqrt 3.
            KernelFamily::QuarticSpline => (15.0 / 16.0) * 8.0 / (3.0 * 3f64.sqrt()) / (rho * rho),
        }
    }

    /// Lipschitz constant of the unscaled d-dimensional mollifier
    /// (`|rbar(x) - rbar(y)| <= C |x - y|_2`), derived from the axis bounds.
    pub fn lipschitz_constant(&self) -> f64 {
        let d = self.dim as f64;
        d.sqrt() * self.axis_slope_bound() * self.axis_peak().powi(self.dim as i32 - 1)
    }

    /// Lipschitz constant of the `eps`-scaled mollifier (`h = 1` scaling:
    /// `C_eps = C * eps^-(d+1)`).
    pub fn scaled_lipschitz_constant(&self, eps: f64) -> f64 {
        self.lipschitz_constant() * eps.powi(-(self.dim as i32) - 1)
    }
}

/// Lattice tables of an `eps`-scaled kernel at a given spacing.
///
/// `axis_rbar[j]` holds the renormalized mollifier at `j * dx` (offset by
/// `half`), `axis_r[k]` the discrete axis covariance at lag `k * dx`
/// (offset by `2 * half`). d-dimensional values are products of axis values.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    pub spec: CovarianceSpec,
    pub eps: f64,
    pub dx: f64,
    /// Lattice steps from the center to the support edge.
    pub half: i64,
    axis_rbar: Vec<f64>,
    axis_r: Vec<f64>,
}

/// Build the lattice tables for the `eps`-scaled kernel.
///
/// Errors if the spacing cannot resolve the scaled support
/// (`dx > eps * rho / 4`). The mollifier table is renormalized so that its
/// discrete axis mass `sum * dx` is exactly one.
pub fn build_kernel(spec: &CovarianceSpec, eps: f64, dx: f64) -> Result<DiscreteKernel> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig("eps must be positive".into()));
    }
    if !(dx > 0.0) {
        return Err(Error::InvalidConfig("spacing must be positive".into()));
    }
    let support = eps * spec.support_radius;
    let limit = support / 4.0;
    if dx > limit * (1.0 + 1e-12) {
        return Err(Error::KernelUnresolvable { spacing: dx, limit });
    }
    let half = (support / dx + 1e-9).floor() as i64;
    let mut axis_rbar: Vec<f64> = (-half..=half)
        .map(|j| spec.axis_profile(j as f64 * dx / eps) / eps)
        .collect();
    let mass: f64 = axis_rbar.iter().sum::<f64>() * dx;
    for v in &mut axis_rbar {
        *v /= mass;
    }
    let axis_r = self_correlation(&axis_rbar, dx);
    Ok(DiscreteKernel {
        spec: *spec,
        eps,
        dx,
        half,
        axis_rbar,
        axis_r,
    })
}

/// Discrete axis covariance `r[k] = sum_j f[j] f[j-k] dx`.
fn self_correlation(f: &[f64], dx: f64) -> Vec<f64> {
    let m = f.len() as i64;
    let lags = 2 * m - 1;
    let mut out = vec![0.0; lags as usize];
    for k in -(m - 1)..=(m - 1) {
        let mut acc = 0.0;
        for j in 0..m {
            let jj = j - k;
            if jj >= 0 && jj < m {
                acc += f[j as usize] * f[jj as usize];
            }
        }
        out[(k + m - 1) as usize] = acc * dx;
    }
    out
}

impl DiscreteKernel {
    /// Kernel whose covariance is identically zero (diagnostic hook for
    /// moment estimators).
    pub fn vanishing(dim: usize) -> Self {
        let spec = CovarianceSpec::new(KernelFamily::TriangularTensor, 1.0, dim).unwrap();
        DiscreteKernel {
            spec,
            eps: 1.0,
            dx: 0.25,
            half: 4,
            axis_rbar: vec![0.0; 9],
            axis_r: vec![0.0; 17],
        }
    }

    /// Mollifier table entry at lattice offset `j` (zero outside support).
    pub fn axis_rbar_at(&self, j: i64) -> f64 {
        if j.abs() > self.half {
            0.0
        } else {
            self.axis_rbar[(j + self.half) as usize]
        }
    }

    /// Discrete axis covariance at lattice lag `k` (zero outside support).
    pub fn axis_r_lag(&self, k: i64) -> f64 {
        let m = self.axis_rbar.len() as i64 - 1;
        if k.abs() > m {
            0.0
        } else {
            self.axis_r[(k + m) as usize]
        }
    }

    /// Pointwise lattice variance `R_eps(0)` implied by the tables.
    pub fn r0(&self) -> f64 {
        self.axis_r_lag(0).powi(self.spec.dim as i32)
    }

    /// Continuum `R_eps(0) = eps^-d R(0)`.
    pub fn r0_continuum(&self) -> f64 {
        self.spec.r0_continuum() * self.eps.powi(-(self.spec.dim as i32))
    }

    /// Relative gap between the lattice variance and its continuum limit,
    /// reported as a mesh diagnostic.
    pub fn variance_mesh_gap(&self) -> f64 {
        let c = self.r0_continuum();
        (self.r0() - c) / c
    }

    /// Axis covariance at physical lag `x` by linear interpolation of the
    /// lag table (zero outside `[-2 eps rho, 2 eps rho]`).
    pub fn axis_r_at(&self, x: f64) -> f64 {
        let u = x / self.dx;
        let m = self.axis_rbar.len() as i64 - 1;
        if u.abs() >= m as f64 {
            return 0.0;
        }
        let lo = u.floor();
        let frac = u - lo;
        let k = lo as i64;
        (1.0 - frac) * self.axis_r_lag(k) + frac * self.axis_r_lag(k + 1)
    }

    /// d-dimensional covariance at physical lag `x`.
    pub fn r_at(&self, x: &[f64]) -> f64 {
        let mut acc = 1.0;
        for a in 0..self.spec.dim {
            acc *= self.axis_r_at(x[a]);
            if acc == 0.0 {
                return 0.0;
            }
        }
        acc
    }

    /// Discrete axis mass `sum rbar * dx` (exactly one after renormalization,
    /// exposed for invariant tests).
    pub fn axis_mass(&self) -> f64 {
        self.axis_rbar.iter().sum::<f64>() * self.dx
    }

    /// Minimum of the axis spectral density over a frequency grid; the table
    /// is a discrete self-convolution so this is nonnegative up to roundoff.
    pub fn spectral_density_min(&self) -> f64 {
        let m = self.axis_rbar.len() as i64 - 1;
        let grid = 512;
        let mut min = f64::INFINITY;
        for g in 0..=grid {
            let theta = std::f64::consts::PI * g as f64 / grid as f64;
            let mut s = self.axis_r_lag(0);
            for k in 1..=m {
                s += 2.0 * self.axis_r_lag(k) * (k as f64 * theta).cos();
            }
            min = min.min(s * self.dx);
        }
        min
    }

    /// Worst ratio `|rbar[i] - rbar[j]| / |i - j| dx` over all axis pairs,
    /// for comparison against the declared Lipschitz constant.
    pub fn axis_lipschitz_observed(&self) -> f64 {
        let n = self.axis_rbar.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = (self.axis_rbar[i] - self.axis_rbar[j]).abs();
                let dist = (j - i) as f64 * self.dx;
                worst = worst.max(gap / dist.powf(self.spec.holder_h));
            }
        }
        worst
    }

    /// Second derivative of the axis covariance at the origin by the centered
    /// difference at lag `k`, `2 (r[k] - r[0]) / (k dx)^2`.
    pub fn axis_r_second_derivative(&self, k: i64) -> f64 {
        assert!(k >= 1);
        let h = k as f64 * self.dx;
        2.0 * (self.axis_r_lag(k) - self.axis_r_lag(0)) / (h * h)
    }

    /// Trace of `(-Hessian R_eps(0))^(1/2)` for the tensor kernel: the
    /// Hessian is diagonal with entries `r''(0) r(0)^(d-1)`.
    pub fn hessian_root_trace(&self, k: i64) -> f64 {
        let d = self.spec.dim as i32;
        let diag = -self.axis_r_second_derivative(k) * self.axis_r_lag(0).powi(d - 1);
        self.spec.dim as f64 * diag.max(0.0).sqrt()
    }
}
