//! Finite-difference Schrodinger operators with Dirichlet walls.
//!
//! `A = (1/2) Delta_h + sigma xi` on the interior lattice points of a box:
//! off-diagonal entries `1/(2 dx^2)` between nearest neighbors, diagonal
//! `-d/dx^2 + sigma xi(z)`, and Dirichlet conditions imposed by deleting
//! exterior unknowns. The quadratic form identity
//! `<phi, A phi> = sigma <xi, phi^2> - (1/2) E(phi)` holds exactly on the
//! lattice with the forward-difference energy `E`.

mod eigen;
mod localization;
mod rescale;

pub use eigen::{top_eigenpairs, EigenOptions, SolverKind, SpectralResult};
pub use localization::{
    localization_lower_bound_check, localization_upper_bound_scan, LowerBoundCheck,
    UpperBoundScanPoint,
};
pub use rescale::{rescaled_eigenvalue_view, RescaledView};

use crate::error::{Error, Result};
use crate::grid::{Cube, MAX_DIM};
use crate::noise::FieldSample;

/// Symmetric nearest-neighbor stencil operator on the interior of a box.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub dim: usize,
    pub dx: f64,
    /// Coupling multiplier the potential was scaled by.
    pub sigma: f64,
    /// Interior points per axis.
    pub n_axis: [usize; MAX_DIM],
    /// `sigma * xi` at the interior points, row-major.
    pub potential: Vec<f64>,
    /// Physical coordinates of the interior point with multi-index 0.
    pub origin: [f64; MAX_DIM],
    /// The box the operator was restricted to.
    pub cube: Cube,
}

/// Restrict the field to the interior of `cube` and build the operator.
///
/// The cube must be covered by the sampled region and contain at least one
/// interior lattice point per axis. `sigma` multiplies the stored field.
pub fn assemble(sample: &FieldSample, cube: &Cube, sigma: f64) -> Result<DiscreteOperator> {
    crate::noise::field_covered(sample, cube)?;
    let dim = sample.spec.dim;
    if cube.dim != dim {
        return Err(Error::InvalidConfig(format!(
            "cube dimension {} does not match field dimension {dim}",
            cube.dim
        )));
    }
    let lat = &sample.lattice;
    let mut lo = [0i64; MAX_DIM];
    let mut n_axis = [1usize; MAX_DIM];
    let mut origin = [0.0; MAX_DIM];
    for a in 0..dim {
        let (il, ih) = lat.interior_range(cube.lo(a), cube.hi(a));
        if il > ih {
            return Err(Error::InvalidConfig(format!(
                "box [{}, {}] on axis {a} has no interior lattice point",
                cube.lo(a),
                cube.hi(a)
            )));
        }
        lo[a] = il;
        n_axis[a] = (ih - il + 1) as usize;
        origin[a] = il as f64 * lat.dx;
    }
    let total: usize = n_axis[..dim].iter().product();
    let mut potential = Vec::with_capacity(total);
    let mut mi = [0i64; MAX_DIM];
    for flat in 0..total {
        let mut rem = flat;
        for a in (0..dim).rev() {
            mi[a] = lo[a] + (rem % n_axis[a]) as i64;
            rem /= n_axis[a];
        }
        potential.push(sigma * sample.values[lat.flat(&mi)]);
    }
    Ok(DiscreteOperator {
        dim,
        dx: lat.dx,
        sigma,
        n_axis,
        potential,
        origin,
        cube: *cube,
    })
}

impl DiscreteOperator {
    /// Number of unknowns.
    pub fn len(&self) -> usize {
        self.n_axis[..self.dim].iter().product()
    }

    /// Whether the operator has no unknowns (never true by construction).
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Off-diagonal stencil weight.
    pub fn off_diagonal(&self) -> f64 {
        1.0 / (2.0 * self.dx * self.dx)
    }

    /// Diagonal entry at flat index `i`.
    pub fn diagonal(&self, i: usize) -> f64 {
        -(self.dim as f64) / (self.dx * self.dx) + self.potential[i]
    }

    /// Largest potential entry (an upper bound for the top eigenvalue,
    /// since the Dirichlet Laplacian half is negative semidefinite).
    pub fn max_potential(&self) -> f64 {
        self.potential.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.len());
        debug_assert_eq!(y.len(), self.len());
        let off = self.off_diagonal();
        let diag0 = -(self.dim as f64) / (self.dx * self.dx);
        match self.dim {
            1 => {
                let n = self.n_axis[0];
                for i in 0..n {
                    let mut acc = (diag0 + self.potential[i]) * x[i];
                    if i > 0 {
                        acc += off * x[i - 1];
                    }
                    if i + 1 < n {
                        acc += off * x[i + 1];
                    }
                    y[i] = acc;
                }
            }
            2 => {
                let (n0, n1) = (self.n_axis[0], self.n_axis[1]);
                for i0 in 0..n0 {
                    let row = i0 * n1;
                    for i1 in 0..n1 {
                        let idx = row + i1;
                        let mut acc = (diag0 + self.potential[idx]) * x[idx];
                        if i1 > 0 {
                            acc += off * x[idx - 1];
                        }
                        if i1 + 1 < n1 {
                            acc += off * x[idx + 1];
                        }
                        if i0 > 0 {
                            acc += off * x[idx - n1];
                        }
                        if i0 + 1 < n0 {
                            acc += off * x[idx + n1];
                        }
                        y[idx] = acc;
                    }
                }
            }
            _ => {
                let (n0, n1, n2) = (self.n_axis[0], self.n_axis[1], self.n_axis[2]);
                let s0 = n1 * n2;
                for i0 in 0..n0 {
                    for i1 in 0..n1 {
                        let row = i0 * s0 + i1 * n2;
                        for i2 in 0..n2 {
                            let idx = row + i2;
                            let mut acc = (diag0 + self.potential[idx]) * x[idx];
                            if i2 > 0 {
                                acc += off * x[idx - 1];
                            }
                            if i2 + 1 < n2 {
                                acc += off * x[idx + 1];
                            }
                            if i1 > 0 {
                                acc += off * x[idx - n2];
                            }
                            if i1 + 1 < n1 {
                                acc += off * x[idx + n2];
                            }
                            if i0 > 0 {
                                acc += off * x[idx - s0];
                            }
                            if i0 + 1 < n0 {
                                acc += off * x[idx + s0];
                            }
                            y[idx] = acc;
                        }
                    }
                }
            }
        }
    }

    /// Forward-difference Dirichlet energy `E(phi) = sum |grad phi|^2 dx^d`,
    /// including the edges to the zero boundary layer.
    pub fn dirichlet_energy(&self, phi: &[f64]) -> f64 {
        debug_assert_eq!(phi.len(), self.len());
        let meas = self.dx.powi(self.dim as i32);
        let inv2 = 1.0 / (self.dx * self.dx);
        let mut acc = 0.0;
        let n = self.len();
        for idx in 0..n {
            let mi = self.unflat(idx);
            for a in 0..self.dim {
                // Edge from this point toward +a, and the boundary edge
                // behind the first point of each line.
                let here = phi[idx];
                let next = if mi[a] + 1 < self.n_axis[a] {
                    phi[self.shift(idx, a, 1)]
                } else {
                    0.0
                };
                let d = next - here;
                acc += d * d * inv2;
                if mi[a] == 0 {
                    acc += here * here * inv2;
                }
            }
        }
        acc * meas
    }

    /// `<phi, A phi>` in the lattice measure `dx^d`.
    pub fn quadratic_form(&self, phi: &[f64]) -> f64 {
        let mut y = vec![0.0; self.len()];
        self.apply(phi, &mut y);
        let meas = self.dx.powi(self.dim as i32);
        phi.iter().zip(&y).map(|(&p, &q)| p * q).sum::<f64>() * meas
    }

    /// `<potential, phi^2>` in the lattice measure.
    pub fn potential_form(&self, phi: &[f64]) -> f64 {
        let meas = self.dx.powi(self.dim as i32);
        self.potential
            .iter()
            .zip(phi)
            .map(|(&v, &p)| v * p * p)
            .sum::<f64>()
            * meas
    }

    /// Dense copy of the operator (for oracle solves on small grids).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let off = self.off_diagonal();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diagonal(i);
            let mi = self.unflat(i);
            for a in 0..self.dim {
                if mi[a] + 1 < self.n_axis[a] {
                    let j = self.shift(i, a, 1);
                    m[(i, j)] = off;
                    m[(j, i)] = off;
                }
            }
        }
        m
    }

    /// Multi-index of a flat interior index.
    pub fn unflat(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0usize; MAX_DIM];
        for a in (0..self.dim).rev() {
            out[a] = idx % self.n_axis[a];
            idx /= self.n_axis[a];
        }
        out
    }

    /// Flat index shifted by `step` along `axis` (caller checks bounds).
    fn shift(&self, idx: usize, axis: usize, step: i64) -> usize {
        let mut stride = 1usize;
        for a in (axis + 1)..self.dim {
            stride *= self.n_axis[a];
        }
        (idx as i64 + step * stride as i64) as usize
    }

    /// Potential at a physical point by multilinear interpolation of the
    /// interior-grid values (clamped to the grid near the walls).
    pub fn potential_at(&self, x: &[f64]) -> f64 {
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for a in 0..self.dim {
            let u = (x[a] - self.origin[a]) / self.dx;
            let u = u.clamp(0.0, (self.n_axis[a] - 1) as f64);
            let mut i0 = u.floor() as usize;
            if i0 + 1 >= self.n_axis[a] {
                i0 = self.n_axis[a].saturating_sub(2);
            }
            base[a] = i0;
            frac[a] = if self.n_axis[a] > 1 { u - i0 as f64 } else { 0.0 };
        }
        let corners = 1usize << self.dim;
        let mut acc = 0.0;
        for c in 0..corners {
            let mut w = 1.0;
            let mut idx = 0usize;
            for a in 0..self.dim {
                let hi = (c >> a) & 1 == 1;
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
                let off = base[a] + usize::from(hi && self.n_axis[a] > 1);
                idx = idx * self.n_axis[a] + off.min(self.n_axis[a] - 1);
            }
            if w != 0.0 {
                acc += w * self.potential[idx];
            }
        }
        acc
    }

    /// Physical position of a flat interior index.
    pub fn position(&self, idx: usize) -> [f64; MAX_DIM] {
        let mi = self.unflat(idx);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.origin[a] + mi[a] as f64 * self.dx;
        }
        x
    }

    /// Analytic Dirichlet spectrum of the zero-potential continuum operator
    /// on a centered cube of halfwidth `r`: `-(sum k_a^2) pi^2 / (8 r^2)`,
    /// largest first.
    pub fn analytic_zero_potential_spectrum(dim: usize, r: f64, count: usize) -> Vec<f64> {
        let mut vals = Vec::new();
        let kmax = (count + 2) * 2 + 4;
        let mut modes = vec![[0usize; MAX_DIM]];
        for _ in 0..dim {
            let mut next = Vec::new();
            for m in &modes {
                for k in 1..=kmax {
                    let mut mm = *m;
                    for a in 0..MAX_DIM {
                        if mm[a] == 0 {
                            mm[a] = k;
                            break;
                        }
                    }
                    next.push(mm);
                }
            }
            modes = next;
        }
        for m in modes {
            let s: usize = m[..dim].iter().map(|&k| k * k).sum();
            vals.push(-(s as f64) * std::f64::consts::PI.powi(2) / (8.0 * r * r));
        }
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        vals.truncate(count);
        vals
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cube;
    use crate::noise::{constant_field, sample_field, CovarianceSpec, KernelFamily};

    fn field_1d(seed: u64) -> FieldSample {
        let spec = CovarianceSpec::new(KernelFamily::TriangularTensor, 1.0, 1).unwrap();
        sample_field(&spec, 0.5, 1.0, 4.0, 0.0625, seed).unwrap()
    }

    fn field_2d(seed: u64) -> FieldSample {
        let spec = CovarianceSpec::new(KernelFamily::TriangularTensor, 1.0, 2).unwrap();
        sample_field(&spec, 0.5, 1.0, 2.0, 0.125, seed).unwrap()
    }

    #[test]
    fn stencil_entries_match_the_contract() {
        let f = field_1d(1);
        let op = assemble(&f, &Cube::centered(1, 2.0), 0.7).unwrap();
        let dense = op.to_dense();
        let n = op.len();
        let off = 1.0 / (2.0 * op.dx * op.dx);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j {
                    -1.0 / (op.dx * op.dx) + op.potential[i]
                } else if i.abs_diff(j) == 1 {
                    off
                } else {
                    0.0
                };
                assert_eq!(dense[(i, j)], want, "entry ({i},{j})");
            }
        }
        // Potential really is sigma * xi at the interior points.
        let mi0 = f.lattice.interior_range(-2.0, 2.0).0;
        assert_eq!(op.potential[0], 0.7 * f.at(&[mi0, 0, 0]));
    }

    #[test]
    fn dense_and_stencil_apply_agree() {
        let f = field_2d(3);
        let op = assemble(&f, &Cube::centered(2, 1.5), 1.0).unwrap();
        let n = op.len();
        let dense = op.to_dense();
        let x: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 101) as f64 / 50.0 - 1.0).collect();
        let mut y = vec![0.0; n];
        op.apply(&x, &mut y);
        let xv = nalgebra::DVector::from_vec(x.clone());
        let yd = &dense * &xv;
        for i in 0..n {
            assert!((y[i] - yd[i]).abs() < 1e-10);
        }
        // Symmetry of the dense form.
        assert!((&dense - dense.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn quadratic_form_splits_into_potential_and_energy() {
        for (f, cube) in [
            (field_1d(5), Cube::centered(1, 2.0)),
            (field_2d(6), Cube::centered(2, 1.5)),
        ] {
            let op = assemble(&f, &cube, 1.3).unwrap();
            let n = op.len();
            let phi: Vec<f64> = (0..n)
                .map(|i| (0.1 + (i as f64 * 0.7).sin()) / (n as f64).sqrt())
                .collect();
            let lhs = op.quadratic_form(&phi);
            let rhs = op.potential_form(&phi) - 0.5 * op.dirichlet_energy(&phi);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs() + 1.0),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn shifting_the_potential_shifts_the_form() {
        let f = field_1d(9);
        let g = f.map_values(|v| v + 0.37);
        let cube = Cube::centered(1, 2.0);
        let a = assemble(&f, &cube, 1.0).unwrap();
        let b = assemble(&g, &cube, 1.0).unwrap();
        let n = a.len();
        let phi: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).sqrt()).collect();
        let norm2: f64 = phi.iter().map(|p| p * p).sum::<f64>() * a.dx;
        let qa = a.quadratic_form(&phi);
        let qb = b.quadratic_form(&phi);
        assert!((qb - qa - 0.37 * norm2).abs() < 1e-10);
    }

    #[test]
    fn zero_potential_form_is_pure_energy() {
        let f = constant_field(1, 2.0, 0.0625, 0.0);
        let op = assemble(&f, &Cube::centered(1, 2.0), 1.0).unwrap();
        let n = op.len();
        let phi: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64 * 3.0).cos()).collect();
        assert!((op.quadratic_form(&phi) + 0.5 * op.dirichlet_energy(&phi)).abs() < 1e-12);
    }

    #[test]
    fn potential_interpolation_hits_nodes_and_midpoints() {
        let f = field_1d(12);
        let op = assemble(&f, &Cube::centered(1, 2.0), 1.0).unwrap();
        for idx in [0usize, 3, op.len() - 1] {
            let x = op.position(idx);
            assert!((op.potential_at(&x[..1]) - op.potential[idx]).abs() < 1e-13);
        }
        let mid = [op.origin[0] + 2.5 * op.dx];
        let want = 0.5 * (op.potential[2] + op.potential[3]);
        assert!((op.potential_at(&mid) - want).abs() < 1e-13);
    }

    #[test]
    fn analytic_spectrum_enumerator_orders_modes() {
        let d1 = DiscreteOperator::analytic_zero_potential_spectrum(1, 1.0, 4);
        let pi2 = std::f64::consts::PI.powi(2);
        for (k, v) in d1.iter().enumerate() {
            let want = -(((k + 1) * (k + 1)) as f64) * pi2 / 8.0;
            assert!((v - want).abs() < 1e-12);
        }
        let d2 = DiscreteOperator::analytic_zero_potential_spectrum(2, 1.0, 4);
        let want2 = [-2.0, -5.0, -5.0, -8.0].map(|s: f64| s * pi2 / 8.0);
        for (v, w) in d2.iter().zip(want2) {
            assert!((v - w).abs() < 1e-12);
        }
    }
}
