//! Lattice sampling of the mollified Gaussian field.
//!
//! A field sample holds `xi_eps` on the lattice points of a centered box.
//! Values are produced by direct convolution of i.i.d. standard normals on
//! a padded lattice with the scaled mollifier table, scaled by `dx^(d/2)`,
//! which makes the lattice covariance exactly the discrete covariance table
//! of the kernel.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{build_kernel, CovarianceSpec, DiscreteKernel};
use crate::error::{Error, Result};
use crate::grid::{Cube, Lattice, MAX_DIM};
use crate::rng::{self, Purpose};

/// One realization of the mollified field on a centered cubic lattice.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub spec: CovarianceSpec,
    /// Mollification scale of the stored values.
    pub eps: f64,
    /// Coupling multiplier consumed by operator assembly and path weights.
    pub sigma: f64,
    /// Seed the white noise was drawn from.
    pub seed: u64,
    /// Output lattice over `[-halfwidth, halfwidth]^d`.
    pub lattice: Lattice,
    /// Field values, row-major on `lattice`.
    pub values: Vec<f64>,
    /// Pointwise lattice variance implied by the kernel tables.
    pub discrete_variance: f64,
    /// Continuum pointwise variance `eps^-d R(0)`.
    pub continuum_variance: f64,
}

impl FieldSample {
    /// Field value at a lattice multi-index.
    pub fn at(&self, i: &[i64; MAX_DIM]) -> f64 {
        self.values[self.lattice.flat(i)]
    }

    /// Multilinear interpolation at a physical point.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.lattice.interpolate(&self.values, x)
    }

    /// Nearest-lattice value at a physical point (diagnostic mode).
    pub fn nearest(&self, x: &[f64]) -> f64 {
        self.lattice.nearest(&self.values, x)
    }

    /// Relative gap between lattice and continuum pointwise variance,
    /// reported as a mesh diagnostic.
    pub fn variance_mesh_gap(&self) -> f64 {
        (self.discrete_variance - self.continuum_variance) / self.continuum_variance
    }

    /// Copy with every value mapped through `f` (diagnostic hook, e.g.
    /// `|v| v.abs()` for coupling-monotonicity checks).
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> FieldSample {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = f(*v);
        }
        out
    }

    /// Copy with a different coupling multiplier.
    pub fn with_sigma(&self, sigma: f64) -> FieldSample {
        let mut out = self.clone();
        out.sigma = sigma;
        out
    }
}

/// Knobs for [`sample_field_with`].
#[derive(Debug, Clone, Copy)]
pub struct SampleOptions {
    /// Negate the white noise before convolving (sign-symmetry hook).
    pub negate_noise: bool,
    /// Reject fields whose buffers would exceed this many bytes.
    pub memory_cap_bytes: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            negate_noise: false,
            memory_cap_bytes: 4 << 30,
        }
    }
}

/// `eps^(-d/2)` composed from exactly rounded operations, so rescaling by
/// powers of four commutes with the arithmetic bit-for-bit.
fn scale_pow(eps: f64, dim: usize) -> f64 {
    match dim {
        1 => 1.0 / eps.sqrt(),
        2 => 1.0 / eps,
        _ => 1.0 / (eps * eps.sqrt()),
    }
}

/// Sample `xi_eps` on `[-halfwidth, halfwidth]^d` with default options.
pub fn sample_field(
    spec: &CovarianceSpec,
    eps: f64,
    sigma: f64,
    halfwidth: f64,
    dx: f64,
    seed: u64,
) -> Result<FieldSample> {
    sample_field_with(spec, eps, sigma, halfwidth, dx, seed, SampleOptions::default())
}

/// Sample `xi_eps` on `[-halfwidth, halfwidth]^d`.
///
/// The white-noise lattice pads the output box by the kernel support, so
/// every output point sees the full mollifier stencil and no periodic wrap
/// occurs. Draws come from the `(seed, Field, 0)` stream.
pub fn sample_field_with(
    spec: &CovarianceSpec,
    eps: f64,
    sigma: f64,
    halfwidth: f64,
    dx: f64,
    seed: u64,
    opts: SampleOptions,
) -> Result<FieldSample> {
    let kernel = build_kernel(spec, eps, dx)?;
    let dim = spec.dim;
    let out = Lattice::new(dim, halfwidth, dx);
    let noise = Lattice::new(dim, out.extent() + kernel.half as f64 * dx, dx);
    let bytes = 8 * (noise.len() as u64 + out.len() as u64);
    if bytes > opts.memory_cap_bytes {
        return Err(Error::MemoryCap {
            points: noise.len() + out.len(),
            required_bytes: bytes,
            cap_bytes: opts.memory_cap_bytes,
        });
    }

    let mut rng = rng::stream(seed, Purpose::Field, 0);
    let flip = if opts.negate_noise { -1.0 } else { 1.0 };
    let eta: Vec<f64> = (0..noise.len())
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            flip * g
        })
        .collect();

    let amp = {
        let mut a = 1.0;
        for _ in 0..dim {
            a *= dx.sqrt();
        }
        a
    };
    let values = convolve(&kernel, &noise, &eta, &out, amp);

    Ok(FieldSample {
        spec: *spec,
        eps,
        sigma,
        seed,
        lattice: out,
        values,
        discrete_variance: kernel.r0(),
        continuum_variance: kernel.r0_continuum(),
    })
}

/// Direct lattice convolution `amp * sum_j eta[i+j] * prod_a rbar[j_a]`.
fn convolve(
    kernel: &DiscreteKernel,
    noise: &Lattice,
    eta: &[f64],
    out: &Lattice,
    amp: f64,
) -> Vec<f64> {
    let dim = out.dim;
    let h = kernel.half;
    let one_point = |flat: usize| -> f64 {
        let mi = out.unflat(flat);
        let mut acc = 0.0;
        match dim {
            1 => {
                for j in -h..=h {
                    let w = kernel.axis_rbar_at(j);
                    acc += w * eta[noise.flat(&[mi[0] + j, 0, 0])];
                }
            }
            2 => {
                for j0 in -h..=h {
                    let w0 = kernel.axis_rbar_at(j0);
                    for j1 in -h..=h {
                        let w = w0 * kernel.axis_rbar_at(j1);
                        acc += w * eta[noise.flat(&[mi[0] + j0, mi[1] + j1, 0])];
                    }
                }
            }
            _ => {
                for j0 in -h..=h {
                    let w0 = kernel.axis_rbar_at(j0);
                    for j1 in -h..=h {
                        let w1 = w0 * kernel.axis_rbar_at(j1);
                        for j2 in -h..=h {
                            let w = w1 * kernel.axis_rbar_at(j2);
                            acc += w * eta[noise.flat(&[mi[0] + j0, mi[1] + j1, mi[2] + j2])];
                        }
                    }
                }
            }
        }
        amp * acc
    };
    if out.len() >= 1 << 14 {
        (0..out.len()).into_par_iter().map(one_point).collect()
    } else {
        (0..out.len()).map(one_point).collect()
    }
}

/// Field of constant value (diagnostic hook for path estimators).
pub fn constant_field(dim: usize, halfwidth: f64, dx: f64, value: f64) -> FieldSample {
    let spec = CovarianceSpec::new(super::KernelFamily::TriangularTensor, 1.0, dim).unwrap();
    let lattice = Lattice::new(dim, halfwidth, dx);
    let values = vec![value; lattice.len()];
    FieldSample {
        spec,
        eps: 1.0,
        sigma: 1.0,
        seed: 0,
        lattice,
        values,
        discrete_variance: 0.0,
        continuum_variance: f64::MIN_POSITIVE,
    }
}

/// View of a unit-scale realization at mollification scale `eps`:
/// `xi_eps(x) = eps^(-d/2) xi_1(x/eps)` with `xi_1` read from `base` by
/// multilinear interpolation. Holding `base` fixed while varying `eps`
/// couples all scales to one underlying realization.
pub fn view_at_scale(
    base: &FieldSample,
    eps: f64,
    halfwidth: f64,
    dx: f64,
) -> Result<FieldSample> {
    if (base.eps - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidConfig(
            "scale view requires a unit-scale base field".into(),
        ));
    }
    let dim = base.spec.dim;
    let needed = halfwidth / eps;
    if needed > base.lattice.extent() * (1.0 + 1e-12) {
        return Err(Error::BoxNotCovered {
            axis: 0,
            lo: -needed,
            hi: needed,
            sampled: base.lattice.extent(),
        });
    }
    let out = Lattice::new(dim, halfwidth, dx);
    let scale = scale_pow(eps, dim);
    let mut values = Vec::with_capacity(out.len());
    for flat in 0..out.len() {
        let x = out.position(&out.unflat(flat));
        let mut arg = [0.0; MAX_DIM];
        for a in 0..dim {
            arg[a] = x[a] / eps;
        }
        values.push(scale * base.interpolate(&arg[..dim]));
    }
    let scale2 = scale * scale;
    Ok(FieldSample {
        spec: base.spec,
        eps,
        sigma: base.sigma,
        seed: base.seed,
        lattice: out,
        values,
        discrete_variance: base.discrete_variance * scale2,
        continuum_variance: base.continuum_variance * scale2,
    })
}

/// Supremum statistic of a sampled field.
#[derive(Debug, Clone, Copy)]
pub struct MaxFieldStat {
    /// Largest field value.
    pub max: f64,
    /// Physical location of the maximum.
    pub argmax: [f64; MAX_DIM],
    /// Box halfwidth the supremum was taken over.
    pub halfwidth: f64,
    /// `max / sqrt(log halfwidth)`.
    pub ratio: f64,
    /// Gaussian-maximum prediction `sqrt(2 d Var)` for the same ratio.
    pub predicted_ratio: f64,
}

/// Supremum of the field over its box, with the `sqrt(log r)` normalization
/// that the Gaussian-maximum law concentrates under. Requires `r > 1`.
pub fn max_field_statistic(sample: &FieldSample) -> Result<MaxFieldStat> {
    let r = sample.lattice.extent();
    if r <= 1.0 {
        return Err(Error::InvalidConfig(
            "max statistic needs a box with halfwidth > 1".into(),
        ));
    }
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0usize);
    for (i, &v) in sample.values.iter().enumerate() {
        if v > best {
            best = v;
            arg = i;
        }
    }
    let denom = r.ln().sqrt();
    Ok(MaxFieldStat {
        max: best,
        argmax: sample.lattice.position(&sample.lattice.unflat(arg)),
        halfwidth: r,
        ratio: best / denom,
        predicted_ratio: (2.0 * sample.spec.dim as f64 * sample.discrete_variance).sqrt(),
    })
}

/// Check that the sampled region covers a cube.
pub fn field_covered(sample: &FieldSample, cube: &Cube) -> Result<()> {
    let e = sample.lattice.extent();
    for a in 0..cube.dim {
        if cube.lo(a) < -e - 1e-9 || cube.hi(a) > e + 1e-9 {
            return Err(Error::BoxNotCovered {
                axis: a,
                lo: cube.lo(a),
                hi: cube.hi(a),
                sampled: e,
            });
        }
    }
    Ok(())
}
