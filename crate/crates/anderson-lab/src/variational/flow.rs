//! Sphere-constrained ascent shared by the variational solvers.
//!
//! All three constant computations reduce to maximizing a smooth
//! functional over the unit L2 sphere of a Dirichlet lattice cube. The
//! optimizer is projected gradient ascent with a Barzilai-Borwein step
//! guess and monotone backtracking, so the objective history never
//! decreases beyond roundoff.

use crate::error::{Error, Result};
use crate::grid::MAX_DIM;
use crate::rng::{stream, Purpose};
use rand::Rng;

/// Cubic Dirichlet lattice for the variational profiles.
///
/// Sites sit at `k dx` for `|k| <= m` on each axis with walls one spacing
/// beyond the last site, so the zero extension is implicit.
#[derive(Debug, Clone)]
pub struct FlowGrid {
    pub dim: usize,
    pub dx: f64,
    /// Sites per axis (odd, center included).
    pub n: usize,
    strides: [usize; MAX_DIM],
}

impl FlowGrid {
    pub fn new(dim: usize, halfwidth: f64, dx: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "dimension must be 1..={MAX_DIM}, got {dim}"
            )));
        }
        if !(dx > 0.0) || !(halfwidth > 2.0 * dx) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < 2 dx < halfwidth, got dx {dx}, halfwidth {halfwidth}"
            )));
        }
        let m = (halfwidth / dx - 1.0 + 1e-9).floor() as usize;
        let n = 2 * m + 1;
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1usize;
        for a in 0..dim {
            strides[a] = s;
            s = s.checked_mul(n).ok_or_else(|| Error::InvalidConfig(
                "variational grid does not fit in memory".into(),
            ))?;
        }
        Ok(FlowGrid { dim, dx, n, strides })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Lattice measure `dx^d`.
    pub fn meas(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }

    /// Half the box width (wall position).
    pub fn halfwidth(&self) -> f64 {
        (self.n as f64 + 1.0) / 2.0 * self.dx
    }

    /// Physical coordinates of a flat index.
    pub fn position(&self, idx: usize) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        let mut rest = idx;
        let m = (self.n - 1) / 2;
        for a in 0..self.dim {
            let k = rest % self.n;
            rest /= self.n;
            x[a] = (k as i64 - m as i64) as f64 * self.dx;
        }
        x
    }

    pub fn norm2_sq(&self, phi: &[f64]) -> f64 {
        phi.iter().map(|v| v * v).sum::<f64>() * self.meas()
    }

    pub fn norm4_pow4(&self, phi: &[f64]) -> f64 {
        phi.iter().map(|v| v * v * v * v).sum::<f64>() * self.meas()
    }

    /// Dirichlet energy by forward differences, wall edges included.
    pub fn energy(&self, phi: &[f64]) -> f64 {
        let scale = self.dx.powi(self.dim as i32 - 2);
        let mut acc = 0.0;
        for a in 0..self.dim {
            let stride = self.strides[a];
            for (i, &v) in phi.iter().enumerate() {
                let k = (i / stride) % self.n;
                let fwd = if k + 1 < self.n { phi[i + stride] } else { 0.0 };
                let d = fwd - v;
                acc += d * d;
                if k == 0 {
                    acc += v * v;
                }
            }
        }
        acc * scale
    }

    /// Accumulate `coeff * grad energy` into `out`.
    pub fn add_energy_grad(&self, phi: &[f64], coeff: f64, out: &mut [f64]) {
        let scale = 2.0 * coeff * self.dx.powi(self.dim as i32 - 2);
        for a in 0..self.dim {
            let stride = self.strides[a];
            for i in 0..phi.len() {
                let k = (i / stride) % self.n;
                let prev = if k > 0 { phi[i - stride] } else { 0.0 };
                let next = if k + 1 < self.n { phi[i + stride] } else { 0.0 };
                out[i] += scale * (2.0 * phi[i] - prev - next);
            }
        }
    }

    /// Mass fraction sitting on the outermost site layer.
    pub fn boundary_mass_fraction(&self, phi: &[f64]) -> f64 {
        let mut edge = 0.0;
        let mut total = 0.0;
        for (i, &v) in phi.iter().enumerate() {
            let sq = v * v;
            total += sq;
            for a in 0..self.dim {
                let k = (i / self.strides[a]) % self.n;
                if k == 0 || k + 1 == self.n {
                    edge += sq;
                    break;
                }
            }
        }
        if total > 0.0 { edge / total } else { 0.0 }
    }

    /// Centered Gaussian bump of the given base width, jittered in width
    /// and center by the seed stream so multi-start runs explore
    /// distinct basins. Start zero is the unjittered centered bump.
    pub fn gaussian_init(&self, base_width: f64, seed: u64, start: u64) -> Vec<f64> {
        let mut rng = stream(seed, Purpose::Restart, start);
        let width: f64 = if start == 0 {
            base_width
        } else {
            base_width * (0.5 + 1.5 * rng.random::<f64>())
        };
        let mut center = [0.0f64; MAX_DIM];
        if start != 0 {
            for c in center.iter_mut().take(self.dim) {
                *c = (rng.random::<f64>() - 0.5) * base_width.min(self.halfwidth() / 4.0);
            }
        }
        (0..self.len())
            .map(|i| {
                let x = self.position(i);
                let mut q = 0.0;
                for a in 0..self.dim {
                    let d = x[a] - center[a];
                    q += d * d;
                }
                (-q / (2.0 * width * width)).exp()
            })
            .collect()
    }
}

/// Result of one sphere ascent.
#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub value: f64,
    pub phi: Vec<f64>,
    pub iterations: usize,
    /// Objective after every accepted step.
    pub history: Vec<f64>,
    /// Euclidean norm of the projected gradient at the last step.
    pub residual: f64,
}

const SETTLE_STEPS: usize = 5;
const MIN_STEP: f64 = 1e-18;
const MAX_STEP: f64 = 1e6;

/// Maximize `obj` over the unit L2 sphere of the grid.
///
/// `obj` returns the objective and fills the Euclidean gradient with
/// respect to the site values. Convergence means the relative objective
/// change stays below `tol` for a few consecutive accepted steps.
pub fn maximize_on_sphere<F>(
    grid: &FlowGrid,
    init: &[f64],
    mut obj: F,
    tol: f64,
    max_iters: usize,
) -> Result<FlowOutcome>
where
    F: FnMut(&FlowGrid, &[f64], &mut [f64]) -> f64,
{
    assert_eq!(init.len(), grid.len());
    let meas = grid.meas();
    let mut phi = init.to_vec();
    normalize(&mut phi, meas);
    let mut grad = vec![0.0; phi.len()];
    let mut value = obj(grid, &phi, &mut grad);
    let mut tangent = project_tangent(&phi, &grad);
    let mut history = vec![value];
    let mut step = 1e-2f64;
    let mut settled = 0usize;
    let mut last_change = f64::INFINITY;
    let mut prev_phi: Vec<f64> = Vec::new();
    let mut prev_tangent: Vec<f64> = Vec::new();
    let mut trial_grad = vec![0.0; phi.len()];
    for it in 0..max_iters {
        let gnorm = tangent.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            return Ok(FlowOutcome { value, phi, iterations: it, history, residual: 0.0 });
        }
        let mut s = step.clamp(MIN_STEP, MAX_STEP);
        let mut accepted = false;
        while s >= MIN_STEP {
            let mut trial: Vec<f64> = phi
                .iter()
                .zip(tangent.iter())
                .map(|(p, g)| p + s * g)
                .collect();
            normalize(&mut trial, meas);
            for g in trial_grad.iter_mut() {
                *g = 0.0;
            }
            let trial_value = obj(grid, &trial, &mut trial_grad);
            if trial_value >= value - 1e-12 * (value.abs() + 1.0) {
                last_change = (trial_value - value).abs() / (value.abs() + 1.0);
                prev_phi = std::mem::take(&mut phi);
                prev_tangent = std::mem::take(&mut tangent);
                phi = trial;
                value = trial_value;
                tangent = project_tangent(&phi, &trial_grad);
                history.push(value);
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            return Ok(FlowOutcome {
                value,
                phi,
                iterations: it,
                history,
                residual: gnorm,
            });
        }
        // Flat directions make the curvature estimate explode, so the
        // step may grow by at most a fixed factor per accepted move.
        step = bb_step(&phi, &prev_phi, &tangent, &prev_tangent)
            .unwrap_or(s * 2.0)
            .min(s * 8.0)
            .clamp(MIN_STEP, MAX_STEP);
        if last_change < tol {
            settled += 1;
            if settled >= SETTLE_STEPS {
                let residual = tangent.iter().map(|g| g * g).sum::<f64>().sqrt();
                return Ok(FlowOutcome { value, phi, iterations: it + 1, history, residual });
            }
        } else {
            settled = 0;
        }
    }
    Err(Error::FlowNoConvergence {
        iterations: max_iters,
        change: last_change,
    })
}

fn normalize(phi: &mut [f64], meas: f64) {
    let norm = (phi.iter().map(|v| v * v).sum::<f64>() * meas).sqrt();
    assert!(norm > 0.0, "cannot normalize the zero profile");
    for v in phi.iter_mut() {
        *v /= norm;
    }
}

/// Remove the radial component so steps stay tangent to the sphere.
fn project_tangent(phi: &[f64], grad: &[f64]) -> Vec<f64> {
    let dot: f64 = phi.iter().zip(grad).map(|(p, g)| p * g).sum();
    let pp: f64 = phi.iter().map(|p| p * p).sum();
    let c = dot / pp;
    phi.iter().zip(grad).map(|(p, g)| g - c * p).collect()
}

/// Barzilai-Borwein step from successive iterates and gradients.
fn bb_step(phi: &[f64], prev_phi: &[f64], g: &[f64], prev_g: &[f64]) -> Option<f64> {
    if prev_phi.is_empty() || prev_g.is_empty() {
        return None;
    }
    let mut ss = 0.0;
    let mut sy = 0.0;
    for i in 0..phi.len() {
        let s = phi[i] - prev_phi[i];
        let y = prev_g[i] - g[i];
        ss += s * s;
        sy += s * y;
    }
    if sy > 0.0 && ss > 0.0 {
        Some((ss / sy).clamp(MIN_STEP, MAX_STEP))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn energy_objective(grid: &FlowGrid, phi: &[f64], grad: &mut [f64]) -> f64 {
        grid.add_energy_grad(phi, -1.0, grad);
        -grid.energy(phi)
    }

    #[test]
    fn grid_energy_matches_hand_sum() {
        let grid = FlowGrid::new(1, 1.0, 0.25).unwrap();
        assert_eq!(grid.n, 7);
        let phi: Vec<f64> = (0..7).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut byhand = phi[0] * phi[0] + phi[6] * phi[6];
        for i in 0..6 {
            byhand += (phi[i + 1] - phi[i]) * (phi[i + 1] - phi[i]);
        }
        byhand /= 0.25;
        assert!((grid.energy(&phi) - byhand).abs() < 1e-12);
    }

    #[test]
    fn energy_gradient_matches_finite_differences() {
        let grid = FlowGrid::new(2, 1.6, 0.4).unwrap();
        let phi: Vec<f64> = (0..grid.len()).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect();
        let mut grad = vec![0.0; phi.len()];
        grid.add_energy_grad(&phi, 1.0, &mut grad);
        let h = 1e-6;
        for probe in [0usize, 5, grid.len() / 2, grid.len() - 1] {
            let mut plus = phi.clone();
            plus[probe] += h;
            let mut minus = phi.clone();
            minus[probe] -= h;
            let fd = (grid.energy(&plus) - grid.energy(&minus)) / (2.0 * h);
            assert!(
                (grad[probe] - fd).abs() < 1e-5 * (fd.abs() + 1.0),
                "site {probe}: {} vs {fd}",
                grad[probe]
            );
        }
    }

    #[test]
    fn minimal_energy_on_the_sphere_is_the_ground_mode() {
        let dx = 0.05;
        let r = 1.0;
        let grid = FlowGrid::new(1, r, dx).unwrap();
        let init = grid.gaussian_init(1.0, 3, 0);
        let out = maximize_on_sphere(&grid, &init, energy_objective, 1e-12, 20_000).unwrap();
        let walls = grid.halfwidth();
        let expected = -(4.0 / (dx * dx)) * (PI * dx / (4.0 * walls)).sin().powi(2);
        assert!(
            (out.value - expected).abs() < 1e-8 * expected.abs(),
            "{} vs {expected}",
            out.value
        );
    }

    #[test]
    fn objective_history_never_decreases() {
        let grid = FlowGrid::new(2, 4.0, 0.25).unwrap();
        let init = grid.gaussian_init(1.0, 9, 2);
        let out = maximize_on_sphere(
            &grid,
            &init,
            |g, phi, grad| {
                let l4sq = g.norm4_pow4(phi).sqrt();
                for (o, p) in grad.iter_mut().zip(phi) {
                    *o += 2.0 * p * p * p * g.meas() / l4sq;
                }
                g.add_energy_grad(phi, -0.5, grad);
                l4sq - 0.5 * g.energy(phi)
            },
            1e-10,
            20_000,
        )
        .unwrap();
        for w in out.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * (w[0].abs() + 1.0));
        }
        assert!(out.iterations > 0);
    }

    #[test]
    fn impossible_iteration_budget_reports_no_convergence() {
        let grid = FlowGrid::new(1, 6.0, 0.125).unwrap();
        let init = grid.gaussian_init(1.0, 4, 1);
        let err = maximize_on_sphere(&grid, &init, energy_objective, 1e-14, 2).unwrap_err();
        match err {
            Error::FlowNoConvergence { iterations, .. } => assert_eq!(iterations, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn boundary_mass_sees_only_the_outer_layer() {
        let grid = FlowGrid::new(1, 2.0, 0.5).unwrap();
        let mut phi = vec![0.0; grid.len()];
        phi[grid.len() / 2] = 1.0;
        assert_eq!(grid.boundary_mass_fraction(&phi), 0.0);
        phi[0] = 0.5;
        let f = grid.boundary_mass_fraction(&phi);
        assert!((f - 0.2).abs() < 1e-12, "{f}");
    }
}
