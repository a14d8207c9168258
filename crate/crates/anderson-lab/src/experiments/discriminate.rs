//! Two-normalizer discrimination between mollification regimes.
//!
//! Two arms sweep the same `log t` grid: one schedule decaying slower
//! than the critical rate and one faster. Each arm's leading eigenvalue
//! is normalized two ways (field-maximum and universal normalizer) and
//! the slope of the median log statistic against `log log t` fills a
//! 2x2 matrix indexed by arm and normalizer.
//!
//! At reachable box sizes every cell still climbs toward its plateau,
//! so absolute flatness or decay of a single cell is not testable. Two
//! structural signals remain. Within each row the universal-minus-
//! field-max slope tilt equals the exact normalizer gap
//! `gamma*d/2 + 1/2 - 2/(4-d)`, negative below the critical rate and
//! positive above it, so the rows tilt in opposite directions exactly
//! when the exponents straddle the critical rate. Between the rows,
//! the slow-minus-fast slope separation vanishes under the field-max
//! normalizer if both arms follow one regular law, and vanishes under
//! the universal normalizer if both arms follow one saturated law;
//! one-sided paired bootstrap tests reject those nulls. By default the
//! arms share one white-noise draw per task (the mollified fields
//! differ only through the kernel radius), which cancels field noise
//! from the arm contrasts.

use rand::Rng;

use super::{
    default_mesh, eigen_normalizer, kernel_curvature, run_sweep, BootstrapOptions, EpsSchedule,
    MeshOverride, Phase, SweepPlan, SweepRecord, TruncationMarker,
};
use crate::error::{Error, Result};
use crate::noise::{build_kernel, CovarianceSpec};
use crate::rng::{stream, Purpose};
use crate::stats::{fit_line, median, percentile_interval};

/// Significance level for the discrimination verdict.
pub const DISCRIMINATION_ALPHA: f64 = 0.05;

/// Discrimination request: kernel, the two decay exponents, grid and
/// bootstrap settings.
#[derive(Debug, Clone)]
pub struct DiscriminationPlan {
    pub spec: CovarianceSpec,
    /// Decay exponent of the slow arm, below the critical rate.
    pub gamma_regular: f64,
    /// Decay exponent of the fast arm. Equal exponents give a control
    /// run with both arms on the slow schedule.
    pub gamma_singular: f64,
    pub log_t_grid: Vec<f64>,
    pub replicas: u64,
    /// Eigenpairs per solve (the matrix only uses the first).
    pub k: usize,
    pub seed: u64,
    pub sigma: f64,
    pub budget_sites: usize,
    pub bootstrap: BootstrapOptions,
    /// Admit fast-arm exponents outside the supported window.
    pub beyond_window: bool,
    /// Share one white-noise draw per task between the arms.
    pub common_noise: bool,
    pub mesh_divisor: f64,
}

impl DiscriminationPlan {
    pub fn new(
        spec: CovarianceSpec,
        gamma_regular: f64,
        gamma_singular: f64,
        log_t_grid: Vec<f64>,
        replicas: u64,
        seed: u64,
    ) -> Self {
        DiscriminationPlan {
            spec,
            gamma_regular,
            gamma_singular,
            log_t_grid,
            replicas,
            k: 4,
            seed,
            sigma: 1.0,
            budget_sites: 2_000_000,
            bootstrap: BootstrapOptions::default(),
            beyond_window: false,
            common_noise: true,
            mesh_divisor: 8.0,
        }
    }

    fn schedules(&self) -> Result<(EpsSchedule, EpsSchedule)> {
        let dim = self.spec.dim;
        let regular = EpsSchedule::regular(dim, self.gamma_regular)?;
        let singular = if self.gamma_singular == self.gamma_regular {
            regular.clone()
        } else if self.beyond_window {
            EpsSchedule::singular_beyond_window(dim, self.gamma_singular, self.spec.holder_h)?
        } else {
            EpsSchedule::singular(dim, self.gamma_singular, self.spec.holder_h)?
        };
        Ok((regular, singular))
    }
}

/// One matrix entry: slope of the median log statistic with its
/// bootstrap interval.
#[derive(Debug, Clone, Copy)]
pub struct DiscriminationCell {
    pub slope: f64,
    pub interval: (f64, f64),
}

/// Discrimination outcome.
#[derive(Debug, Clone)]
pub struct DiscriminationReport {
    pub dim: usize,
    pub gamma_regular: f64,
    pub gamma_singular: f64,
    /// Grid actually analyzed (the site budget may trim the tail).
    pub used_log_t: Vec<f64>,
    /// Slopes indexed `[arm][normalizer]`: arm 0 is the slow schedule,
    /// normalizer 0 the field-maximum form.
    pub matrix: [[DiscriminationCell; 2]; 2],
    /// Per normalizer: slow-arm slope minus fast-arm slope. The
    /// field-max entry vanishes when both arms follow one regular law
    /// and the universal entry vanishes when both follow one saturated
    /// law, so positive and negative values respectively reject those
    /// nulls.
    pub separation: [f64; 2],
    /// Per arm: universal slope minus field-max slope. Equal to the
    /// exact normalizer gap, this changes sign at the critical rate.
    pub tilt: [f64; 2],
    /// Bootstrap probability that the field-max separation is
    /// nonpositive (the shared-regular-law direction).
    pub p_common_regular: f64,
    /// Bootstrap probability that the universal separation is
    /// nonnegative (the shared-saturated-law direction).
    pub p_common_singular: f64,
    /// Row tilts straddle zero and the separations point away from
    /// both shared-law nulls.
    pub sign_pattern_ok: bool,
    /// Sign pattern holds and the shared-regular-law direction is
    /// rejected at the significance level.
    pub discriminates: bool,
    pub regular_records: Vec<SweepRecord>,
    pub singular_records: Vec<SweepRecord>,
    pub truncation: Option<TruncationMarker>,
}

impl DiscriminationReport {
    /// Plain-text rendering for report files.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "phase discrimination: d={} slow gamma={} fast gamma={}\n",
            self.dim, self.gamma_regular, self.gamma_singular
        ));
        out.push_str(&format!(
            "grid log t: {:?}  (slopes of median log statistic vs log log t)\n",
            self.used_log_t
        ));
        let arm_names = ["slow arm   ", "fast arm   "];
        out.push_str("arm         field-max normalizer      universal normalizer\n");
        for (a, name) in arm_names.iter().enumerate() {
            let row = &self.matrix[a];
            out.push_str(&format!(
                "{name} {:+.3} [{:+.3}, {:+.3}]   {:+.3} [{:+.3}, {:+.3}]\n",
                row[0].slope,
                row[0].interval.0,
                row[0].interval.1,
                row[1].slope,
                row[1].interval.0,
                row[1].interval.1
            ));
        }
        out.push_str(&format!(
            "row tilt, universal minus field-max (exact): slow {:+.4}, fast {:+.4}\n",
            self.tilt[0], self.tilt[1]
        ));
        out.push_str(&format!(
            "arm separation, slow minus fast: field-max {:+.4}, universal {:+.4}\n",
            self.separation[0], self.separation[1]
        ));
        out.push_str(&format!(
            "shared-law rejections: regular p {:.4}, saturated p {:.4} (the saturated side \
             carries a small effect at these horizons)\n",
            self.p_common_regular, self.p_common_singular
        ));
        out.push_str(&format!(
            "sign pattern (tilts straddle zero, separations reject both shared laws): {}\n\
             verdict: {}\n",
            if self.sign_pattern_ok { "ok" } else { "violated" },
            if self.discriminates { "discriminates" } else { "no discrimination" }
        ));
        if let Some(marker) = &self.truncation {
            out.push_str(&format!(
                "site budget trimmed the grid at log t = {} ({} sites over {})\n",
                marker.log_t, marker.sites, marker.budget
            ));
        }
        out
    }
}

fn coupled_overrides(
    plan: &DiscriminationPlan,
    schedules: (&EpsSchedule, &EpsSchedule),
) -> Result<(Vec<MeshOverride>, Vec<MeshOverride>)> {
    let curvature = kernel_curvature(&plan.spec)?;
    let dim = plan.spec.dim;
    let mut slow = Vec::new();
    let mut fast = Vec::new();
    for &log_t in &plan.log_t_grid {
        let t = log_t.exp();
        let eps_a = schedules.0.eps_at(t);
        let eps_b = schedules.1.eps_at(t);
        let dx = default_mesh(dim, t, eps_a, curvature.r0, plan.mesh_divisor)
            .min(default_mesh(dim, t, eps_b, curvature.r0, plan.mesh_divisor));
        let half_a = build_kernel(&plan.spec, eps_a, dx)?.half as usize;
        let half_b = build_kernel(&plan.spec, eps_b, dx)?.half as usize;
        let half_max = half_a.max(half_b);
        let base_n = (t / dx).ceil() as usize + 2;
        // Padding each arm's field so both noise lattices span
        // (base_n + half_max) steps makes the arms read the same
        // white-noise sequence.
        slow.push(MeshOverride {
            dx,
            field_halfwidth: (base_n + half_max - half_a) as f64 * dx,
        });
        fast.push(MeshOverride {
            dx,
            field_halfwidth: (base_n + half_max - half_b) as f64 * dx,
        });
    }
    Ok((slow, fast))
}

fn arm_plan(
    plan: &DiscriminationPlan,
    schedule: EpsSchedule,
    seed: u64,
    overrides: Option<Vec<MeshOverride>>,
) -> SweepPlan {
    SweepPlan {
        sigma: plan.sigma,
        k: plan.k,
        mesh_divisor: plan.mesh_divisor,
        budget_sites: plan.budget_sites,
        mesh_overrides: overrides,
        ..SweepPlan::new(schedule, plan.spec.clone(), plan.log_t_grid.clone(), plan.replicas, seed)
    }
}

/// Run both arms and assemble the slope matrix with its paired
/// bootstrap verdict.
pub fn phase_discrimination(plan: &DiscriminationPlan) -> Result<DiscriminationReport> {
    if plan.log_t_grid.len() < 2 {
        return Err(Error::InvalidConfig(
            "discrimination needs at least two grid points for slopes".into(),
        ));
    }
    if plan.replicas < 2 {
        return Err(Error::InvalidConfig(
            "discrimination needs at least two replicas per grid point".into(),
        ));
    }
    plan.bootstrap.validate()?;
    let (sched_slow, sched_fast) = plan.schedules()?;
    let (overrides, seeds) = if plan.common_noise {
        let (a, b) = coupled_overrides(plan, (&sched_slow, &sched_fast))?;
        ((Some(a), Some(b)), (plan.seed, plan.seed))
    } else {
        ((None, None), (plan.seed, plan.seed.wrapping_add(0x5EED_0FF5)))
    };
    let out_slow = run_sweep(&arm_plan(plan, sched_slow.clone(), seeds.0, overrides.0))?;
    let out_fast = run_sweep(&arm_plan(plan, sched_fast.clone(), seeds.1, overrides.1))?;

    let kept_slow = out_slow.records.iter().map(|r| r.grid_index + 1).max().unwrap_or(0);
    let kept_fast = out_fast.records.iter().map(|r| r.grid_index + 1).max().unwrap_or(0);
    let used = kept_slow.min(kept_fast);
    if used < 2 {
        return Err(Error::InvalidConfig(format!(
            "site budget {} leaves fewer than two analyzable grid points",
            plan.budget_sites
        )));
    }
    let truncation = [out_slow.truncation, out_fast.truncation]
        .into_iter()
        .flatten()
        .min_by_key(|m| m.grid_index);
    let used_log_t: Vec<f64> = plan.log_t_grid[..used].to_vec();
    let xs: Vec<f64> = used_log_t.iter().map(|l| l.ln()).collect();

    let arms = [(&out_slow, &sched_slow), (&out_fast, &sched_fast)];
    // Per arm and grid point: log eigenvalues in replica order, plus the
    // log normalizer for each of the two statistics.
    let mut logs: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut norms: [Vec<[f64; 2]>; 2] = [Vec::new(), Vec::new()];
    for (a, (out, sched)) in arms.iter().enumerate() {
        for gi in 0..used {
            let recs: Vec<&SweepRecord> =
                out.records.iter().filter(|r| r.grid_index == gi).collect();
            if recs.len() != plan.replicas as usize {
                return Err(Error::InvalidConfig(format!(
                    "grid point {gi} holds {} records for {} replicas",
                    recs.len(),
                    plan.replicas
                )));
            }
            let mut point_logs = Vec::with_capacity(recs.len());
            for rec in &recs {
                if !(rec.lambdas[0] > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "leading eigenvalue {} at log t = {} is not positive; slopes of the \
                         log statistic need eigenvalues above zero",
                        rec.lambdas[0], rec.log_t
                    )));
                }
                point_logs.push(rec.lambdas[0].ln());
            }
            logs[a].push(point_logs);
            let t = used_log_t[gi].exp();
            let eps = sched.eps_at(t);
            norms[a].push([
                eigen_normalizer(Phase::Regular, plan.spec.dim, t, eps).ln(),
                eigen_normalizer(Phase::Singular, plan.spec.dim, t, eps).ln(),
            ]);
        }
    }

    let slope_of = |arm: usize, norm: usize, medians: &[f64]| -> f64 {
        let ys: Vec<f64> =
            medians.iter().zip(&norms[arm]).map(|(m, n)| m - n[norm]).collect();
        fit_line(&xs, &ys).slope
    };
    let point_medians: [Vec<f64>; 2] = [
        logs[0].iter().map(|g| median(g)).collect(),
        logs[1].iter().map(|g| median(g)).collect(),
    ];
    let mut point_slopes = [[0.0f64; 2]; 2];
    for a in 0..2 {
        for n in 0..2 {
            point_slopes[a][n] = slope_of(a, n, &point_medians[a]);
        }
    }

    let b_total = plan.bootstrap.resamples;
    let mut boot_slopes = [[Vec::with_capacity(b_total), Vec::with_capacity(b_total)],
        [Vec::with_capacity(b_total), Vec::with_capacity(b_total)]];
    let mut common_regular_bad = 0usize;
    let mut common_singular_bad = 0usize;
    for b in 0..b_total {
        let mut rng = stream(plan.bootstrap.seed, Purpose::Bootstrap, b as u64);
        // One index draw per grid point, shared by both arms, keeps the
        // bootstrap paired under common noise.
        let mut medians = [Vec::with_capacity(used), Vec::with_capacity(used)];
        for gi in 0..used {
            let n_rep = logs[0][gi].len();
            let idx: Vec<usize> = (0..n_rep).map(|_| rng.random_range(0..n_rep)).collect();
            for a in 0..2 {
                let draw: Vec<f64> = idx.iter().map(|&j| logs[a][gi][j]).collect();
                medians[a].push(median(&draw));
            }
        }
        let mut slopes = [[0.0f64; 2]; 2];
        for a in 0..2 {
            for n in 0..2 {
                slopes[a][n] = slope_of(a, n, &medians[a]);
                boot_slopes[a][n].push(slopes[a][n]);
            }
        }
        if slopes[0][0] - slopes[1][0] <= 0.0 {
            common_regular_bad += 1;
        }
        if slopes[0][1] - slopes[1][1] >= 0.0 {
            common_singular_bad += 1;
        }
    }

    let cell = |a: usize, n: usize| DiscriminationCell {
        slope: point_slopes[a][n],
        interval: percentile_interval(&boot_slopes[a][n], plan.bootstrap.level),
    };
    let matrix = [[cell(0, 0), cell(0, 1)], [cell(1, 0), cell(1, 1)]];
    let p = |bad: usize| (1 + bad) as f64 / (1 + b_total) as f64;
    let separation = [
        point_slopes[0][0] - point_slopes[1][0],
        point_slopes[0][1] - point_slopes[1][1],
    ];
    let tilt = [
        point_slopes[0][1] - point_slopes[0][0],
        point_slopes[1][1] - point_slopes[1][0],
    ];
    let p_common_regular = p(common_regular_bad);
    let p_common_singular = p(common_singular_bad);
    let sign_pattern_ok =
        tilt[0] < 0.0 && tilt[1] > 0.0 && separation[0] > 0.0 && separation[1] < 0.0;
    let discriminates = sign_pattern_ok && p_common_regular < DISCRIMINATION_ALPHA;

    Ok(DiscriminationReport {
        dim: plan.spec.dim,
        gamma_regular: plan.gamma_regular,
        gamma_singular: plan.gamma_singular,
        used_log_t,
        matrix,
        separation,
        tilt,
        p_common_regular,
        p_common_singular,
        sign_pattern_ok,
        discriminates,
        regular_records: out_slow.records,
        singular_records: out_fast.records,
        truncation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::KernelFamily;

    fn triangular(dim: usize) -> CovarianceSpec {
        CovarianceSpec::new(KernelFamily::TriangularTensor, 1.0, dim).unwrap()
    }

    #[test]
    fn plans_reject_degenerate_grids() {
        let plan = DiscriminationPlan::new(triangular(1), 0.2, 0.4, vec![2.0], 4, 1);
        assert!(phase_discrimination(&plan).unwrap_err().is_config());
        let plan = DiscriminationPlan::new(triangular(1), 0.2, 0.4, vec![2.0, 2.5], 1, 1);
        assert!(phase_discrimination(&plan).unwrap_err().is_config());
        // Fast-arm exponent outside the window needs the explicit marker.
        let plan = DiscriminationPlan::new(triangular(1), 0.2, 0.9, vec![2.0, 2.5], 2, 1);
        assert!(phase_discrimination(&plan).unwrap_err().is_config());
    }

    #[test]
    fn control_arms_with_equal_exponents_do_not_discriminate() {
        let mut plan =
            DiscriminationPlan::new(triangular(1), 0.2, 0.2, vec![2.6, 3.0, 3.4], 4, 0xC0DE);
        plan.k = 1;
        plan.bootstrap.resamples = 100;
        let report = phase_discrimination(&plan).unwrap();
        // Shared noise plus equal schedules make the arms bit-identical.
        assert_eq!(report.regular_records.len(), report.singular_records.len());
        for (a, b) in report.regular_records.iter().zip(&report.singular_records) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.lambdas, b.lambdas);
        }
        for n in 0..2 {
            assert_eq!(report.matrix[0][n].slope, report.matrix[1][n].slope);
            assert_eq!(report.separation[n], 0.0);
        }
        assert_eq!(report.tilt[0], report.tilt[1]);
        assert!(report.p_common_regular > 0.5);
        assert!(!report.sign_pattern_ok);
        assert!(!report.discriminates);
        assert!(report.render().contains("no discrimination"));
    }

    fn normalizer_gap(dim: usize, gamma: f64) -> f64 {
        gamma * dim as f64 / 2.0 + 0.5 - 2.0 / (4.0 - dim as f64)
    }

    #[test]
    fn straddling_exponents_tilt_the_rows_apart_and_separate_the_arms() {
        let mut plan =
            DiscriminationPlan::new(triangular(1), 0.2, 0.4, vec![2.0, 4.0, 6.0], 8, 0x7A57);
        plan.bootstrap.resamples = 200;
        let report = phase_discrimination(&plan).unwrap();
        assert!(
            (report.tilt[0] - normalizer_gap(1, 0.2)).abs() < 1e-9,
            "slow tilt {}",
            report.tilt[0]
        );
        assert!(
            (report.tilt[1] - normalizer_gap(1, 0.4)).abs() < 1e-9,
            "fast tilt {}",
            report.tilt[1]
        );
        assert!(
            report.separation[0] > 0.0 && report.separation[1] < 0.0,
            "separations {:?}",
            report.separation
        );
        assert!(report.p_common_regular < DISCRIMINATION_ALPHA);
        assert!(report.sign_pattern_ok);
        assert!(report.discriminates);
        assert!(report.render().contains("verdict: discriminates"));
    }

    #[test]
    fn planar_variant_shows_the_same_pattern_at_a_coarse_mesh() {
        let mut plan = DiscriminationPlan::new(
            triangular(2),
            0.3,
            7.0 / 12.0,
            vec![1.2, 1.6, 2.0],
            3,
            0xD2,
        );
        plan.k = 1;
        plan.bootstrap.resamples = 200;
        let report = phase_discrimination(&plan).unwrap();
        assert!((report.tilt[0] - normalizer_gap(2, 0.3)).abs() < 1e-9);
        assert!((report.tilt[1] - normalizer_gap(2, 7.0 / 12.0)).abs() < 1e-9);
        assert!(report.sign_pattern_ok, "separations {:?}", report.separation);
    }

    #[test]
    fn coupled_arms_share_mesh_and_seeds() {
        let mut plan =
            DiscriminationPlan::new(triangular(1), 0.2, 0.4, vec![2.6, 3.0], 2, 0xBEEF);
        plan.k = 1;
        plan.bootstrap.resamples = 50;
        let report = phase_discrimination(&plan).unwrap();
        for (a, b) in report.regular_records.iter().zip(&report.singular_records) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.dx, b.dx);
            assert_eq!(a.sites, b.sites);
            assert!(a.eps > b.eps);
            assert_ne!(a.lambdas[0], b.lambdas[0]);
        }
    }
}
