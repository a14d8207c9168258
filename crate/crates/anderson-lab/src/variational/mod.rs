//! Variational constants of the quartic interaction functional.
//!
//! Three quantities are computed on a Dirichlet lattice cube: the sharp
//! Gagliardo-Nirenberg-Sobolev ratio, the supremum of the penalized
//! quartic functional over the unit L2 sphere, and the supremum of the
//! quartic norm over the shell where L2 mass plus half the Dirichlet
//! energy is one. Closed-form identities connect all three to a single
//! growth constant, so each one doubles as a cross-check on the others.
//!
//! The ground-state ascent always targets the penalized functional
//! `c ||phi||_4^2 - E(phi)/2`, never the ratio itself: the discrete
//! ratio is maximized by single-site spikes whose continuum limit
//! vanishes, while the penalized functional is bounded and attained by
//! a smooth profile in every supported dimension. The ratio is then
//! read off at the converged profile, where both agree.

mod flow;

pub use flow::{maximize_on_sphere, FlowGrid, FlowOutcome};

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Controls for one variational solve.
#[derive(Debug, Clone)]
pub struct VariationalOptions {
    pub dim: usize,
    pub dx: f64,
    /// Initial box half width; grown by half again whenever the
    /// extremal leaves too much mass on the edge layer.
    pub halfwidth: f64,
    /// Relative objective change that counts as settled.
    pub tol: f64,
    pub max_iters: usize,
    /// Number of randomized restarts; the best objective wins.
    pub starts: u64,
    pub seed: u64,
    /// Base width of the Gaussian initial bump.
    pub init_width: f64,
    /// Largest tolerable mass fraction on the outermost site layer.
    pub boundary_tol: f64,
    /// How often the box may be enlarged before giving up.
    pub max_expand: usize,
    /// Quartic coefficient used for the ground-state ascent. The
    /// interpolation ratio does not depend on it, and the
    /// unit-coefficient supremum is recovered through the exact zoom
    /// law, so it only sets the extremal's width on the lattice.
    pub coefficient_scale: f64,
}

impl VariationalOptions {
    pub fn for_dim(dim: usize) -> Result<Self> {
        // The unit-coefficient soliton is a few units wide in d=1,2 but
        // roughly eleven units wide in d=3, so the d=3 defaults solve at
        // a larger coefficient where the extremal fits a desk lattice.
        let (dx, halfwidth, starts, boundary_tol, coefficient_scale, init_width) = match dim {
            1 => (0.0625, 12.0, 5, 1e-8, 1.0, 1.5),
            2 => (0.125, 12.0, 5, 1e-8, 1.0, 1.5),
            3 => (0.1, 7.0, 2, 1e-5, 4.0, 0.7),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "variational solves support dimensions 1..=3, got {dim}"
                )))
            }
        };
        // Off-center starts keep sliding home along a translation mode
        // whose restoring force decays exponentially in the box size, so
        // the space solves stop at a coarser settle tolerance; the
        // extracted constants do not depend on the profile's position.
        let tol = if dim == 3 { 1e-9 } else { 1e-11 };
        Ok(VariationalOptions {
            dim,
            dx,
            halfwidth,
            tol,
            max_iters: 60_000,
            starts,
            seed: 0x5EED,
            init_width,
            boundary_tol,
            max_expand: 4,
            coefficient_scale,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "flow tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.starts == 0 {
            return Err(Error::InvalidConfig("need at least one start".into()));
        }
        if !(self.init_width > 0.0) || !self.init_width.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "initial bump width must be positive, got {}",
                self.init_width
            )));
        }
        if !(self.coefficient_scale > 0.0) || !self.coefficient_scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "coefficient scale must be positive, got {}",
                self.coefficient_scale
            )));
        }
        Ok(())
    }
}

/// Converged profile of a multi-start sphere ascent plus diagnostics.
#[derive(Debug, Clone)]
pub struct SphereExtremal {
    pub grid: FlowGrid,
    pub phi: Vec<f64>,
    pub objective: f64,
    /// Final objective reached from each restart.
    pub start_values: Vec<f64>,
    /// Objective after every accepted step of the winning restart.
    pub history: Vec<f64>,
    /// Projected gradient norm at the last step of the winning restart.
    pub residual: f64,
    pub iterations: usize,
    pub boundary_mass: f64,
    /// Times the box was enlarged before the edge mass fell under
    /// tolerance.
    pub expansions: usize,
}

struct MultiStartRun {
    grid: FlowGrid,
    outcomes: Vec<FlowOutcome>,
    best: usize,
    boundary_mass: f64,
    expansions: usize,
}

impl MultiStartRun {
    fn into_extremal(mut self) -> SphereExtremal {
        let start_values: Vec<f64> = self.outcomes.iter().map(|o| o.value).collect();
        let win = self.outcomes.swap_remove(self.best);
        SphereExtremal {
            grid: self.grid,
            phi: win.phi,
            objective: win.value,
            start_values,
            history: win.history,
            residual: win.residual,
            iterations: win.iterations,
            boundary_mass: self.boundary_mass,
            expansions: self.expansions,
        }
    }
}

fn ascend_all<F>(opts: &VariationalOptions, obj: &F) -> Result<MultiStartRun>
where
    F: Fn(&FlowGrid, &[f64], &mut [f64]) -> f64 + Sync,
{
    opts.validate()?;
    let mut halfwidth = opts.halfwidth;
    let mut expansions = 0usize;
    loop {
        let grid = FlowGrid::new(opts.dim, halfwidth, opts.dx)?;
        let runs: Vec<Result<FlowOutcome>> = (0..opts.starts)
            .into_par_iter()
            .map(|start| {
                let init = grid.gaussian_init(opts.init_width, opts.seed, start);
                maximize_on_sphere(&grid, &init, |g, p, o| obj(g, p, o), opts.tol, opts.max_iters)
            })
            .collect();
        let mut outcomes = Vec::with_capacity(runs.len());
        for run in runs {
            outcomes.push(run?);
        }
        let best = outcomes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
            .map(|(i, _)| i)
            .expect("at least one start");
        let boundary_mass = grid.boundary_mass_fraction(&outcomes[best].phi);
        if boundary_mass <= opts.boundary_tol {
            return Ok(MultiStartRun { grid, outcomes, best, boundary_mass, expansions });
        }
        if expansions >= opts.max_expand {
            return Err(Error::InvalidConfig(format!(
                "extremal keeps {boundary_mass:.2e} of its mass on the box edge \
                 after {expansions} expansions to halfwidth {halfwidth}; start wider"
            )));
        }
        halfwidth *= 1.5;
        expansions += 1;
    }
}

/// Objective `c ||phi||_4^2 - E(phi)/2` with its Euclidean gradient.
fn quartic_energy_objective(c: f64) -> impl Fn(&FlowGrid, &[f64], &mut [f64]) -> f64 + Sync {
    move |g, phi, grad| {
        let l4sq = g.norm4_pow4(phi).sqrt();
        if l4sq > 0.0 {
            let w = 2.0 * c * g.meas() / l4sq;
            for (o, p) in grad.iter_mut().zip(phi) {
                *o += w * p * p * p;
            }
        }
        g.add_energy_grad(phi, -0.5, grad);
        c * l4sq - 0.5 * g.energy(phi)
    }
}

/// Objective `||phi||_4^4 / (1 + E(phi)/2)^2` with its gradient. On the
/// unit sphere this equals the quartic norm of the same profile scaled
/// onto the shell `||psi||_2^2 + E(psi)/2 = 1`.
fn shell_objective() -> impl Fn(&FlowGrid, &[f64], &mut [f64]) -> f64 + Sync {
    |g, phi, grad| {
        let n4 = g.norm4_pow4(phi);
        let denom = 1.0 + 0.5 * g.energy(phi);
        let c1 = 4.0 * g.meas() / (denom * denom);
        for (o, p) in grad.iter_mut().zip(phi) {
            *o += c1 * p * p * p;
        }
        g.add_energy_grad(phi, -n4 / (denom * denom * denom), grad);
        n4 / (denom * denom)
    }
}

/// Scale-invariant interpolation ratio
/// `||phi||_4^4 / (E(phi)^{d/2} ||phi||_2^{4-d})`.
pub fn gns_ratio(grid: &FlowGrid, phi: &[f64]) -> f64 {
    let d = grid.dim as f64;
    let n2 = grid.norm2_sq(phi);
    let n4 = grid.norm4_pow4(phi);
    let e = grid.energy(phi);
    n4 / (e.powf(d / 2.0) * n2.powf((4.0 - d) / 2.0))
}

/// Sharp interpolation constant and the profile attaining it.
#[derive(Debug, Clone)]
pub struct GnsOutcome {
    pub ratio: f64,
    /// Ratio evaluated at each restart's own converged profile.
    pub start_ratios: Vec<f64>,
    pub extremal: SphereExtremal,
}

/// Best constant in the quartic interpolation inequality, found by
/// ground-state ascent of the penalized functional and evaluated as the
/// ratio at the converged profile.
pub fn gns_constant(opts: &VariationalOptions) -> Result<GnsOutcome> {
    let run = ascend_all(opts, &quartic_energy_objective(opts.coefficient_scale))?;
    let start_ratios: Vec<f64> =
        run.outcomes.iter().map(|o| gns_ratio(&run.grid, &o.phi)).collect();
    let extremal = run.into_extremal();
    let ratio = gns_ratio(&extremal.grid, &extremal.phi);
    Ok(GnsOutcome { ratio, start_ratios, extremal })
}

/// Supremum of a penalized quartic functional over the unit sphere.
#[derive(Debug, Clone)]
pub struct SupOutcome {
    pub sup: f64,
    pub extremal: SphereExtremal,
}

/// Supremum of `c ||phi||_4^2 - E(phi)/2` over the unit L2 sphere.
pub fn s_variational_sup(c: f64, opts: &VariationalOptions) -> Result<SupOutcome> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "quartic coefficient must be positive and finite, got {c}"
        )));
    }
    let run = ascend_all(opts, &quartic_energy_objective(c))?;
    let extremal = run.into_extremal();
    Ok(SupOutcome { sup: extremal.objective, extremal })
}

/// Supremum of the quartic norm over the unit shell of mass plus half
/// energy, with the feasible maximizer.
#[derive(Debug, Clone)]
pub struct ShellSupOutcome {
    pub s_sup: f64,
    /// Maximizer scaled exactly onto the shell.
    pub psi: Vec<f64>,
    pub constraint_residual: f64,
    pub extremal: SphereExtremal,
}

/// Supremum of `||psi||_4^4` over profiles with
/// `||psi||_2^2 + E(psi)/2 = 1`.
pub fn w_space_sup(opts: &VariationalOptions) -> Result<ShellSupOutcome> {
    let run = ascend_all(opts, &shell_objective())?;
    let extremal = run.into_extremal();
    let grid = &extremal.grid;
    let scale = (grid.norm2_sq(&extremal.phi) + 0.5 * grid.energy(&extremal.phi))
        .sqrt()
        .recip();
    let psi: Vec<f64> = extremal.phi.iter().map(|v| v * scale).collect();
    let s_sup = grid.norm4_pow4(&psi);
    let constraint_residual = (grid.norm2_sq(&psi) + 0.5 * grid.energy(&psi) - 1.0).abs();
    Ok(ShellSupOutcome { s_sup, psi, constraint_residual, extremal })
}

/// Growth constant from the sharp interpolation ratio.
pub fn lyapunov_from_gns(dim: usize, g: f64) -> f64 {
    let d = dim as f64;
    ((4.0 - d) / 4.0) * (d / 2.0).powf(d / (4.0 - d)) * (2.0 * d * g).powf(2.0 / (4.0 - d))
}

/// Growth constant from the unit-coefficient sphere supremum.
pub fn lyapunov_from_quartic_sup(dim: usize, sup: f64) -> f64 {
    let d = dim as f64;
    (2.0 * d).powf(2.0 / (4.0 - d)) * sup
}

/// Growth constant from the shell supremum.
pub fn lyapunov_from_shell_sup(dim: usize, s: f64) -> f64 {
    let d = dim as f64;
    (2.0 * d * s).powf(2.0 / (4.0 - d))
}

/// Shell supremum predicted from the interpolation ratio.
pub fn shell_sup_from_gns(dim: usize, g: f64) -> f64 {
    let d = dim as f64;
    ((4.0 - d) / 4.0).powf((4.0 - d) / 2.0) * (d / 2.0).powf(d / 2.0) * g
}

/// All variational constants of one dimension with cross-route checks.
#[derive(Debug, Clone)]
pub struct VariationalResult {
    pub dim: usize,
    /// Sharp interpolation ratio.
    pub g_d: f64,
    /// Growth constant derived from `g_d`.
    pub l_d: f64,
    /// Shell supremum of the quartic norm.
    pub s_sup: f64,
    /// Growth constant recomputed from each route: the ratio, the
    /// sphere supremum, and the shell supremum.
    pub l_routes: [f64; 3],
    pub extremal: SphereExtremal,
    pub shell_constraint_residual: f64,
}

/// Run all three solvers of a dimension and assemble the constants.
pub fn variational_constants(opts: &VariationalOptions) -> Result<VariationalResult> {
    let d = opts.dim as f64;
    let gns = gns_constant(opts)?;
    let sup = s_variational_sup(opts.coefficient_scale, opts)?;
    let unit_sup = sup.sup * opts.coefficient_scale.powf(-4.0 / (4.0 - d));
    // The plane shell extremal has a core three times narrower and a
    // far-field decay rate three times slower than the unit-coefficient
    // soliton, so it gets a finer lattice in a wider box up front
    // instead of discovering the box through expansions.
    let mut shell_opts = opts.clone();
    if opts.dim == 2 {
        shell_opts.dx = opts.dx / 2.0;
        shell_opts.halfwidth = opts.halfwidth * 2.25;
    }
    let shell = w_space_sup(&shell_opts)?;
    let l_d = lyapunov_from_gns(opts.dim, gns.ratio);
    Ok(VariationalResult {
        dim: opts.dim,
        g_d: gns.ratio,
        l_d,
        s_sup: shell.s_sup,
        l_routes: [
            l_d,
            lyapunov_from_quartic_sup(opts.dim, unit_sup),
            lyapunov_from_shell_sup(opts.dim, shell.s_sup),
        ],
        extremal: gns.extremal,
        shell_constraint_residual: shell.constraint_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sech_quadrature_ratio(width: f64) -> f64 {
        let h = 0.005;
        let half = 40.0;
        let steps = (2.0 * half / h) as usize;
        let (mut n2, mut n4, mut e) = (0.0, 0.0, 0.0);
        for i in 0..=steps {
            let x = -half + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let s = (x / width).cosh().recip();
            let t = (x / width).tanh();
            let dphi = -s * t / width;
            n2 += w * s * s;
            n4 += w * s.powi(4);
            e += w * dphi * dphi;
        }
        (n4 * h) / ((e * h).sqrt() * (n2 * h).powf(1.5))
    }

    #[test]
    fn sech_quadrature_fixes_the_line_constant() {
        let target = 3f64.sqrt().recip();
        for width in [0.9, 1.0, 1.1] {
            let q = sech_quadrature_ratio(width);
            assert!((q - target).abs() < 1e-10, "width {width}: {q} vs {target}");
        }
    }

    #[test]
    fn line_flow_reaches_the_sech_ratio() {
        let opts = VariationalOptions::for_dim(1).unwrap();
        let out = gns_constant(&opts).unwrap();
        let target = sech_quadrature_ratio(1.0);
        assert!(
            (out.ratio - target).abs() < 1e-3 * target,
            "{} vs {target}",
            out.ratio
        );
        assert_eq!(out.extremal.expansions, 0);
        assert!(out.extremal.boundary_mass <= opts.boundary_tol);
    }

    #[test]
    fn lattice_ratio_is_invariant_under_profile_zoom() {
        let opts = VariationalOptions::for_dim(1).unwrap();
        let fine = |dx: f64| {
            let grid = FlowGrid::new(1, opts.halfwidth, dx).unwrap();
            let ratio_at = |eta: f64| {
                let phi: Vec<f64> = (0..grid.len())
                    .map(|i| {
                        let x = grid.position(i)[0];
                        eta.sqrt() * (-(eta * x) * (eta * x) / 2.0).exp()
                    })
                    .collect();
                gns_ratio(&grid, &phi)
            };
            let base = ratio_at(1.0);
            [
                (ratio_at(0.5) - base).abs() / base,
                (ratio_at(2.0) - base).abs() / base,
            ]
        };
        let coarse = fine(opts.dx);
        let halved = fine(opts.dx / 2.0);
        assert!(coarse[0] < 2e-3, "wide zoom drift {}", coarse[0]);
        assert!(coarse[1] < 4e-3, "narrow zoom drift {}", coarse[1]);
        for (c, h) in coarse.iter().zip(halved) {
            assert!(h < 0.35 * c, "halving dx should quarter the drift: {c} vs {h}");
        }
    }

    #[test]
    fn plane_restarts_land_on_one_ratio() {
        let opts = VariationalOptions::for_dim(2).unwrap();
        let out = gns_constant(&opts).unwrap();
        assert_eq!(out.start_ratios.len(), 5);
        for r in &out.start_ratios {
            assert!(
                (r - out.ratio).abs() < 1e-4 * out.ratio,
                "restart ratio {r} vs {}",
                out.ratio
            );
        }
        assert!(out.ratio > 0.0 && out.ratio < 1.0, "{}", out.ratio);
    }

    #[test]
    fn sphere_sup_matches_the_ratio_identity() {
        let opts = VariationalOptions::for_dim(1).unwrap();
        let g = gns_constant(&opts).unwrap().ratio;
        let sup = s_variational_sup(1.0, &opts).unwrap().sup;
        let predicted = 0.75 * 0.5f64.powf(1.0 / 3.0) * g.powf(2.0 / 3.0);
        assert!(
            (sup - predicted).abs() < 1e-3 * predicted,
            "{sup} vs {predicted}"
        );
    }

    #[test]
    fn sup_obeys_the_zoom_law() {
        let opts = VariationalOptions::for_dim(1).unwrap();
        let base = s_variational_sup(1.0, &opts).unwrap().sup;
        for eta in [0.5f64, 2.0] {
            let scaled_c = eta.powf(-1.5);
            let mut scaled_opts = opts.clone();
            scaled_opts.init_width = opts.init_width / eta;
            let scaled = s_variational_sup(scaled_c, &scaled_opts).unwrap().sup;
            let predicted = eta * eta * scaled;
            assert!(
                (base - predicted).abs() < 1e-3 * base,
                "eta {eta}: {base} vs {predicted}"
            );
        }
    }

    #[test]
    fn tiny_coefficient_follows_the_power_law() {
        let mut pts = Vec::new();
        for c in [1e-3, 4e-3, 1.6e-2] {
            let width = 1.32 * (c as f64).powf(-2.0 / 3.0);
            let opts = VariationalOptions {
                dim: 1,
                dx: 0.25,
                halfwidth: 8.0 * width,
                tol: 1e-12,
                max_iters: 200_000,
                starts: 2,
                seed: 7,
                init_width: width,
                boundary_tol: 1e-8,
                max_expand: 2,
                coefficient_scale: 1.0,
            };
            let sup = s_variational_sup(c, &opts).unwrap().sup;
            assert!(sup > 0.0, "c {c}: sup {sup}");
            pts.push((c.ln(), sup.ln()));
        }
        assert!(pts[2].1 < 0.02, "sup should vanish with c");
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
        let expected = 4.0 / 3.0;
        assert!(
            (slope - expected).abs() < 0.05 * expected,
            "fitted exponent {slope} vs {expected}"
        );
    }

    #[test]
    fn shell_sup_closes_the_identity_loop() {
        let opts = VariationalOptions::for_dim(1).unwrap();
        let g = gns_constant(&opts).unwrap().ratio;
        let shell = w_space_sup(&opts).unwrap();
        assert!(shell.constraint_residual <= 1e-8, "{}", shell.constraint_residual);
        let predicted = shell_sup_from_gns(1, g);
        assert!(
            (shell.s_sup - predicted).abs() < 1e-2 * predicted,
            "{} vs {predicted}",
            shell.s_sup
        );
    }

    #[test]
    fn feasible_bumps_stay_below_the_shell_sup() {
        let opts = VariationalOptions::for_dim(1).unwrap();
        let shell = w_space_sup(&opts).unwrap();
        let grid = &shell.extremal.grid;
        for width in [0.7, 2.5] {
            let raw: Vec<f64> = (0..grid.len())
                .map(|i| {
                    let x = grid.position(i)[0];
                    (-x * x / (2.0 * width * width)).exp()
                })
                .collect();
            let scale = (grid.norm2_sq(&raw) + 0.5 * grid.energy(&raw)).sqrt().recip();
            let psi: Vec<f64> = raw.iter().map(|v| v * scale).collect();
            let value = grid.norm4_pow4(&psi);
            assert!(
                value <= shell.s_sup * (1.0 + 1e-9),
                "width {width}: member {value} above sup {}",
                shell.s_sup
            );
        }
    }

    #[test]
    fn three_routes_agree_on_the_line() {
        let opts = VariationalOptions::for_dim(1).unwrap();
        let res = variational_constants(&opts).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let gap = (res.l_routes[i] - res.l_routes[j]).abs();
                assert!(
                    gap < 1e-2 * res.l_d,
                    "routes {i} and {j}: {} vs {}",
                    res.l_routes[i],
                    res.l_routes[j]
                );
            }
        }
        let sech_based = lyapunov_from_gns(1, 3f64.sqrt().recip());
        assert!(
            (res.l_d - sech_based).abs() < 1e-3 * sech_based,
            "{} vs {sech_based}",
            res.l_d
        );
    }

    #[test]
    fn result_recomputes_its_own_formulas() {
        let opts = VariationalOptions::for_dim(1).unwrap();
        let res = variational_constants(&opts).unwrap();
        let formula = lyapunov_from_gns(res.dim, res.g_d);
        assert!((res.l_d - formula).abs() <= 1e-10 * formula);
        assert_eq!(res.l_routes[0], res.l_d);
        let s_formula = shell_sup_from_gns(res.dim, res.g_d);
        assert!(
            (res.s_sup - s_formula).abs() < 1e-2 * s_formula,
            "{} vs {s_formula}",
            res.s_sup
        );
    }

    #[test]
    fn refinement_converges_at_second_order() {
        let ratios: Vec<f64> = [0.25, 0.125, 0.0625]
            .iter()
            .map(|&dx| {
                let mut opts = VariationalOptions::for_dim(1).unwrap();
                opts.dx = dx;
                opts.starts = 1;
                gns_constant(&opts).unwrap().ratio
            })
            .collect();
        let first = (ratios[0] - ratios[1]).abs();
        let second = (ratios[1] - ratios[2]).abs();
        let order = first / second;
        assert!(
            (2.5..6.5).contains(&order),
            "halving gains {order} ({ratios:?})"
        );
    }

    #[test]
    fn plane_extremal_is_symmetric_about_its_peak() {
        let opts = VariationalOptions::for_dim(2).unwrap();
        let grid = FlowGrid::new(2, opts.halfwidth, opts.dx).unwrap();
        let init = grid.gaussian_init(opts.init_width, opts.seed, 0);
        let out = maximize_on_sphere(
            &grid,
            &init,
            quartic_energy_objective(1.0),
            opts.tol,
            opts.max_iters,
        )
        .unwrap();
        let peak = (0..out.phi.len())
            .max_by(|&a, &b| out.phi[a].abs().total_cmp(&out.phi[b].abs()))
            .unwrap();
        let n = grid.n;
        let (pi, pj) = (peak % n, peak / n);
        let top = out.phi[peak].abs();
        let reach = (pi.min(n - 1 - pi)).min(pj.min(n - 1 - pj));
        assert!(reach >= n / 4, "peak too close to the wall: {pi}, {pj}");
        for di in 0..=reach {
            for dj in 0..=reach {
                let probe = [
                    out.phi[(pi + di) + (pj + dj) * n],
                    out.phi[(pi - di) + (pj + dj) * n],
                    out.phi[(pi + di) + (pj - dj) * n],
                    out.phi[(pi - di) + (pj - dj) * n],
                    out.phi[(pi + dj) + (pj + di) * n],
                ];
                for v in &probe[1..] {
                    assert!(
                        (v - probe[0]).abs() < 1e-3 * top,
                        "asymmetry at offset ({di},{dj}): {probe:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_bad_coefficients_and_dimensions() {
        let opts = VariationalOptions::for_dim(1).unwrap();
        for bad in [0.0, -1.0, f64::NAN] {
            assert!(s_variational_sup(bad, &opts).unwrap_err().is_config());
        }
        assert!(VariationalOptions::for_dim(4).unwrap_err().is_config());
        let mut zero_starts = opts.clone();
        zero_starts.starts = 0;
        assert!(gns_constant(&zero_starts).unwrap_err().is_config());
        let mut bad_scale = opts.clone();
        bad_scale.coefficient_scale = -2.0;
        assert!(gns_constant(&bad_scale).unwrap_err().is_config());
    }

    #[test]
    fn coarse_space_smoke_stays_consistent() {
        let mut opts = VariationalOptions::for_dim(3).unwrap();
        opts.dx = 0.18;
        opts.halfwidth = 4.5;
        opts.boundary_tol = 1e-3;
        opts.starts = 1;
        let res = variational_constants(&opts).unwrap();
        assert!(res.g_d > 0.03 && res.g_d < 0.055, "{}", res.g_d);
        assert!(res.l_d.is_finite() && res.l_d > 0.0);
        assert!(res.s_sup.is_finite() && res.s_sup > 0.0);
        let ab = (res.l_routes[0] - res.l_routes[1]).abs();
        assert!(ab < 2e-2 * res.l_d, "{} vs {}", res.l_routes[0], res.l_routes[1]);
        // The shell extremal is barely two sites wide at this spacing,
        // so its route only gets a coarse agreement band.
        for i in 0..2 {
            let gap = (res.l_routes[i] - res.l_routes[2]).abs();
            assert!(
                gap < 0.3 * res.l_d,
                "routes {i} and 2: {} vs {}",
                res.l_routes[i],
                res.l_routes[2]
            );
        }
    }

    #[test]
    fn cramped_box_expands_until_the_tail_fits() {
        let mut opts = VariationalOptions::for_dim(1).unwrap();
        opts.halfwidth = 3.0;
        opts.starts = 1;
        let out = gns_constant(&opts).unwrap();
        assert!(out.extremal.expansions > 0, "expected at least one expansion");
        assert!(out.extremal.boundary_mass <= opts.boundary_tol);
        let target = sech_quadrature_ratio(1.0);
        assert!((out.ratio - target).abs() < 2e-3 * target, "{}", out.ratio);
    }
}
