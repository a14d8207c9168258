//! Eigenvalue sweeps over a `(t, replica)` grid under a mollification
//! schedule.
//!
//! Each grid point draws a fresh field at the scheduled radius, assembles
//! the operator on the centered box of halfwidth `t` and solves for the
//! top eigenpairs. Records carry the raw and normalized eigenvalues, the
//! characteristic scales and a participation-ratio localization length.
//! The total-mass growth statistic is reported through its eigenvalue
//! proxy `t * Lambda_1`, which shares the normalized limit at these box
//! sizes while staying computable.

use rand::Rng;
use rayon::prelude::*;

use super::{
    eigen_normalizer, kernel_curvature, scale_diagnostics, EpsSchedule, Phase, ScaleDiagnostics,
};
use crate::error::{Error, Result};
use crate::grid::Cube;
use crate::noise::{sample_field, CovarianceSpec};
use crate::operator::{assemble, top_eigenpairs, EigenOptions};
use crate::rng::{stream, Purpose};

/// Explicit mesh for one grid point, overriding the default rule.
#[derive(Debug, Clone, Copy)]
pub struct MeshOverride {
    pub dx: f64,
    /// Halfwidth of the sampled field, at least the box halfwidth plus a
    /// step of margin.
    pub field_halfwidth: f64,
}

/// Sweep request: schedule, kernel, grid and budgets.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub schedule: EpsSchedule,
    pub spec: CovarianceSpec,
    /// Coupling multiplying the sampled field in the potential.
    pub sigma: f64,
    /// Values of `log t`, strictly increasing and positive.
    pub log_t_grid: Vec<f64>,
    pub replicas: u64,
    /// Eigenpairs per solve.
    pub k: usize,
    pub seed: u64,
    /// Mesh rule divisor: `dx = min(eps, width scale) / mesh_divisor`.
    pub mesh_divisor: f64,
    /// Per-solve site budget; grid points that would exceed it are
    /// dropped and flagged instead of solved.
    pub budget_sites: usize,
    /// Optional per-grid-point mesh overrides (one per grid point).
    pub mesh_overrides: Option<Vec<MeshOverride>>,
}

impl SweepPlan {
    pub fn new(
        schedule: EpsSchedule,
        spec: CovarianceSpec,
        log_t_grid: Vec<f64>,
        replicas: u64,
        seed: u64,
    ) -> Self {
        SweepPlan {
            schedule,
            spec,
            sigma: 1.0,
            log_t_grid,
            replicas,
            k: 4,
            seed,
            mesh_divisor: 8.0,
            budget_sites: 2_000_000,
            mesh_overrides: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.dim != self.spec.dim {
            return Err(Error::InvalidConfig(format!(
                "schedule dimension {} does not match kernel dimension {}",
                self.schedule.dim, self.spec.dim
            )));
        }
        if self.log_t_grid.is_empty() {
            return Err(Error::InvalidConfig("empty sweep grid".into()));
        }
        let mut prev = 0.0;
        for &l in &self.log_t_grid {
            if !(l > prev) || !l.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "sweep grid must be positive and strictly increasing, got {l} after {prev}"
                )));
            }
            prev = l;
        }
        if self.replicas == 0 {
            return Err(Error::InvalidConfig("sweep needs at least one replica".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("sweep needs at least one eigenpair".into()));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "coupling must be nonnegative, got {}",
                self.sigma
            )));
        }
        let min_divisor = 4.0 / self.spec.support_radius;
        if !(self.mesh_divisor >= min_divisor) {
            return Err(Error::InvalidConfig(format!(
                "mesh divisor {} too coarse to resolve the kernel; need at least {min_divisor}",
                self.mesh_divisor
            )));
        }
        if let Some(overrides) = &self.mesh_overrides {
            if overrides.len() != self.log_t_grid.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} mesh overrides for {} grid points",
                    overrides.len(),
                    self.log_t_grid.len()
                )));
            }
        }
        Ok(())
    }
}

/// Default mesh rule: an eighth (or the requested divisor) of the finer
/// of the mollification radius and the localization width.
pub fn default_mesh(dim: usize, t: f64, eps: f64, r0: f64, divisor: f64) -> f64 {
    let width = eps.powf((dim as f64 - 2.0) / 2.0) / (2.0 * dim as f64 * r0 * t.ln()).sqrt();
    eps.min(width) / divisor
}

/// Marker left when the site budget cut the sweep short.
#[derive(Debug, Clone, Copy)]
pub struct TruncationMarker {
    /// First grid index that was dropped.
    pub grid_index: usize,
    pub log_t: f64,
    /// Sites the dropped solve would have needed.
    pub sites: usize,
    pub budget: usize,
}

/// One `(t, replica)` solve.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub t: f64,
    pub log_t: f64,
    pub eps: f64,
    pub dim: usize,
    /// Seed the field (and solver start vector) was drawn from.
    pub seed: u64,
    pub replica: u64,
    pub grid_index: usize,
    /// Top eigenvalues, largest first.
    pub lambdas: Vec<f64>,
    /// Eigenvalues divided by the schedule's phase normalizer.
    pub normalized_eigs: Vec<f64>,
    /// Growth statistic `t * Lambda_1` of the total mass.
    pub log_mass_proxy: f64,
    /// Growth statistic divided by `t` times the phase normalizer.
    pub normalized_mass: f64,
    pub phase: Phase,
    pub scales: ScaleDiagnostics,
    /// Participation-ratio localization length of the top eigenfunction.
    pub localization_length: f64,
    pub dx: f64,
    pub sites: usize,
}

/// Sweep results, possibly truncated by the site budget.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// Records sorted by grid index, then replica.
    pub records: Vec<SweepRecord>,
    pub truncation: Option<TruncationMarker>,
}

struct PointSetup {
    grid_index: usize,
    t: f64,
    log_t: f64,
    eps: f64,
    dx: f64,
    field_halfwidth: f64,
    sites: usize,
    scales: ScaleDiagnostics,
}

fn interior_sites(dim: usize, t: f64, dx: f64) -> usize {
    let per_axis = 2 * (t / dx).ceil() as usize - 1;
    per_axis.pow(dim as u32)
}

/// Run the sweep: one field draw and eigensolve per `(t, replica)` pair,
/// deterministically seeded, merged in grid order.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepOutput> {
    plan.validate()?;
    let curvature = kernel_curvature(&plan.spec)?;
    let dim = plan.schedule.dim;
    let phase = plan.schedule.predicted_phase();

    let mut points = Vec::new();
    let mut truncation = None;
    for (i, &log_t) in plan.log_t_grid.iter().enumerate() {
        let t = log_t.exp();
        let eps = plan.schedule.eps_at(t);
        let (dx, field_halfwidth) = match plan.mesh_overrides.as_ref().map(|o| o[i]) {
            Some(o) => (o.dx, o.field_halfwidth),
            None => {
                let dx = default_mesh(dim, t, eps, curvature.r0, plan.mesh_divisor);
                (dx, t + 2.0 * dx)
            }
        };
        let sites = interior_sites(dim, t, dx);
        if sites > plan.budget_sites {
            truncation = Some(TruncationMarker {
                grid_index: i,
                log_t,
                sites,
                budget: plan.budget_sites,
            });
            break;
        }
        points.push(PointSetup {
            grid_index: i,
            t,
            log_t,
            eps,
            dx,
            field_halfwidth,
            sites,
            scales: scale_diagnostics(dim, t, eps, &curvature)?,
        });
    }

    let tasks: Vec<(usize, u64)> = points
        .iter()
        .enumerate()
        .flat_map(|(pi, _)| (0..plan.replicas).map(move |r| (pi, r)))
        .collect();

    let records: Vec<Result<SweepRecord>> = tasks
        .par_iter()
        .map(|&(pi, replica)| {
            let point = &points[pi];
            let task_index = point.grid_index as u64 * plan.replicas + replica;
            let task_seed: u64 = stream(plan.seed, Purpose::Replica, task_index).random();
            solve_point(plan, point, phase, replica, task_seed)
        })
        .collect();

    let mut merged = Vec::with_capacity(records.len());
    for record in records {
        merged.push(record?);
    }
    Ok(SweepOutput { records: merged, truncation })
}

fn solve_point(
    plan: &SweepPlan,
    point: &PointSetup,
    phase: Phase,
    replica: u64,
    task_seed: u64,
) -> Result<SweepRecord> {
    let dim = plan.schedule.dim;
    let field = sample_field(
        &plan.spec,
        point.eps,
        plan.sigma,
        point.field_halfwidth,
        point.dx,
        task_seed,
    )?;
    let cube = Cube::centered(dim, point.t);
    let op = assemble(&field, &cube, plan.sigma)?;
    let opts = EigenOptions { k: plan.k, seed: task_seed, ..EigenOptions::default() };
    let eigs = top_eigenpairs(&op, &opts)?;
    let norm = eigen_normalizer(phase, dim, point.t, point.eps);
    let normalized_eigs: Vec<f64> = eigs.lambdas.iter().map(|l| l / norm).collect();
    let log_mass_proxy = point.t * eigs.lambdas[0];
    Ok(SweepRecord {
        t: point.t,
        log_t: point.log_t,
        eps: point.eps,
        dim,
        seed: task_seed,
        replica,
        grid_index: point.grid_index,
        normalized_mass: normalized_eigs[0],
        lambdas: eigs.lambdas.clone(),
        normalized_eigs,
        log_mass_proxy,
        phase,
        scales: point.scales,
        localization_length: eigs.localization_length(0),
        dx: point.dx,
        sites: point.sites,
    })
}
