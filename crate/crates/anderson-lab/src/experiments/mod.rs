//! Sweep orchestration: mollification schedules, characteristic scales,
//! normalized eigenvalue statistics, scaling fits and the two-normalizer
//! discrimination experiment.
//!
//! A schedule prescribes how the mollification radius `eps(t)` shrinks as
//! the box `Q_t` grows. Schedules that keep `eps(t)` above the critical
//! rate `(log t)^(-1/(4-d))` leave the top of the spectrum governed by the
//! field maximum (statistic `Lambda_1 / (eps^(-d/2) sqrt(log t))` with a
//! kernel-dependent limit); schedules below it drive the spectrum into a
//! universal regime (statistic `Lambda_1 / (log t)^(2/(4-d))` with a limit
//! given by the variational constants). Desk-size boxes sit far from both
//! limits, so every downstream check is a trend or discrimination test,
//! never an absolute comparison against the limiting constants.

mod annealed_scan;
mod discriminate;
mod fit;
mod sweep;

pub use annealed_scan::{
    annealed_sweep, select_growth_law, AnnealedPlan, AnnealedPoint, AnnealedReport, ArmKind,
    GrowthLawChoice, ModelSelection, PDependence, SlowTrend,
};
pub use discriminate::{
    phase_discrimination, DiscriminationCell, DiscriminationPlan, DiscriminationReport,
    DISCRIMINATION_ALPHA,
};
pub use fit::{fit_scaling, BootstrapOptions, ScalingFit, ScalingModel};
pub use sweep::{
    default_mesh, run_sweep, MeshOverride, SweepOutput, SweepPlan, SweepRecord, TruncationMarker,
};

use crate::error::{Error, Result};
use crate::noise::{build_kernel, CovarianceSpec};

/// Spectral regime a schedule is headed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// `eps(t)` above the critical rate: field-maximum asymptotics.
    Regular,
    /// `eps(t)` below the critical rate: universal variational asymptotics.
    Singular,
    /// `eps(t)` exactly at the critical rate: neither family of
    /// asymptotics dominates.
    Critical,
}

impl Phase {
    /// Report spelling.
    pub fn name(self) -> &'static str {
        match self {
            Phase::Regular => "regular",
            Phase::Singular => "singular",
            Phase::Critical => "critical",
        }
    }
}

/// Decay-law family of a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Fixed `eps`.
    Constant,
    /// `eps(t) = (log t)^(-gamma)` with `gamma` below the critical rate.
    Regular,
    /// `eps(t) = (log t)^(-gamma)` with `gamma` inside the singular window.
    Singular,
    /// `eps(t) = (log t)^(-1/(4-d))`.
    Critical,
}

/// Critical decay exponent `1/(4-d)` separating the two regimes.
pub fn critical_gamma(dim: usize) -> f64 {
    1.0 / (4 - dim) as f64
}

/// Width `h/(d(d+h))` of the supported window above the critical
/// exponent, set by the Holder exponent `h` of the mollifier.
pub fn singular_margin(dim: usize, holder_h: f64) -> f64 {
    let d = dim as f64;
    holder_h / (d * (d + holder_h))
}

/// Mollification schedule `t -> eps(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsSchedule {
    pub kind: ScheduleKind,
    /// Decay exponent (zero for constant schedules).
    pub gamma: f64,
    /// Fixed value for constant schedules (one otherwise).
    pub value: f64,
    pub dim: usize,
    /// Holder exponent of the mollifier, entering the singular window.
    pub holder_h: f64,
    /// Set when the decay exponent lies outside the supported singular
    /// window and was admitted anyway.
    pub unsupported: bool,
}

fn check_dim(dim: usize) -> Result<()> {
    if !(1..=crate::grid::MAX_DIM).contains(&dim) {
        return Err(Error::InvalidConfig(format!("dimension {dim} outside 1..=3")));
    }
    Ok(())
}

fn check_holder(dim: usize, holder_h: f64) -> Result<()> {
    if !(holder_h > 0.0) || !holder_h.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "Holder exponent must be positive and finite, got {holder_h}"
        )));
    }
    if dim >= 2 && holder_h <= dim as f64 / 4.0 {
        return Err(Error::InvalidConfig(format!(
            "singular schedules in dimension {dim} need Holder exponent > {}, got {holder_h}",
            dim as f64 / 4.0
        )));
    }
    Ok(())
}

impl EpsSchedule {
    /// Fixed mollification radius in `(0, 1]`.
    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "constant schedule needs eps in (0, 1], got {value}"
            )));
        }
        Ok(EpsSchedule {
            kind: ScheduleKind::Constant,
            gamma: 0.0,
            value,
            dim,
            holder_h: 1.0,
            unsupported: false,
        })
    }

    /// Decay slower than critical: `0 <= gamma < 1/(4-d)`.
    pub fn regular(dim: usize, gamma: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(gamma >= 0.0) || gamma >= critical_gamma(dim) {
            return Err(Error::InvalidConfig(format!(
                "regular schedule needs gamma in [0, {}), got {gamma}",
                critical_gamma(dim)
            )));
        }
        Ok(EpsSchedule {
            kind: ScheduleKind::Regular,
            gamma,
            value: 1.0,
            dim,
            holder_h: 1.0,
            unsupported: false,
        })
    }

    /// Decay inside the supported singular window
    /// `(1/(4-d), 1/(4-d) + h/(d(d+h)))`.
    pub fn singular(dim: usize, gamma: f64, holder_h: f64) -> Result<Self> {
        check_dim(dim)?;
        check_holder(dim, holder_h)?;
        let lo = critical_gamma(dim);
        let hi = lo + singular_margin(dim, holder_h);
        if !(gamma > lo && gamma < hi) {
            return Err(Error::InvalidConfig(format!(
                "singular schedule needs gamma in ({lo}, {hi}), got {gamma}"
            )));
        }
        Ok(EpsSchedule {
            kind: ScheduleKind::Singular,
            gamma,
            value: 1.0,
            dim,
            holder_h,
            unsupported: false,
        })
    }

    /// Decay faster than critical but outside the supported window,
    /// admitted under an explicit unsupported-regime marker.
    pub fn singular_beyond_window(dim: usize, gamma: f64, holder_h: f64) -> Result<Self> {
        check_dim(dim)?;
        check_holder(dim, holder_h)?;
        if !(gamma > critical_gamma(dim)) || !gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "beyond-window schedule still needs gamma > {}, got {gamma}",
                critical_gamma(dim)
            )));
        }
        let inside = gamma < critical_gamma(dim) + singular_margin(dim, holder_h);
        Ok(EpsSchedule {
            kind: ScheduleKind::Singular,
            gamma,
            value: 1.0,
            dim,
            holder_h,
            unsupported: !inside,
        })
    }

    /// Decay at exactly the critical rate.
    pub fn critical(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(EpsSchedule {
            kind: ScheduleKind::Critical,
            gamma: critical_gamma(dim),
            value: 1.0,
            dim,
            holder_h: 1.0,
            unsupported: false,
        })
    }

    /// Mollification radius at time `t > 1`, capped at one so early times
    /// stay at the unit radius.
    pub fn eps_at(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.value,
            _ => {
                assert!(t > 1.0, "powered schedules need t > 1, got {t}");
                t.ln().powf(-self.gamma).min(1.0)
            }
        }
    }

    /// Regime the schedule's decay exponent puts it in.
    pub fn predicted_phase(&self) -> Phase {
        match self.kind {
            ScheduleKind::Constant | ScheduleKind::Regular => Phase::Regular,
            ScheduleKind::Singular => Phase::Singular,
            ScheduleKind::Critical => Phase::Critical,
        }
    }

    /// One-line description for reports.
    pub fn describe(&self) -> String {
        match self.kind {
            ScheduleKind::Constant => format!("constant eps={}", self.value),
            ScheduleKind::Regular => format!("regular gamma={}", self.gamma),
            ScheduleKind::Singular => {
                if self.unsupported {
                    format!("singular gamma={} (beyond supported window)", self.gamma)
                } else {
                    format!("singular gamma={}", self.gamma)
                }
            }
            ScheduleKind::Critical => format!("critical gamma={}", self.gamma),
        }
    }
}

/// Largest relative drift between curvature stencils before the
/// second derivative at the origin is declared unavailable.
pub const CURVATURE_DRIFT_LIMIT: f64 = 0.05;

/// Variance and curvature of the unscaled covariance at the origin,
/// read off the lattice kernel table.
#[derive(Debug, Clone, Copy)]
pub struct KernelCurvature {
    /// `R(0)` of the unscaled kernel (closed form).
    pub r0: f64,
    /// `Tr[(-R''(0))^(1/2)]` by finite differences of the covariance
    /// table at the origin; absent when the stencil probe is unstable.
    pub hessian_root_trace: Option<f64>,
    /// Relative drift between the two probe stencils.
    pub probe_drift: f64,
}

/// Probe the covariance table of the unscaled kernel for its curvature
/// at the origin.
///
/// Two centered-difference stencils (one and two lattice steps wide) must
/// agree within `CURVATURE_DRIFT_LIMIT` and report negative curvature;
/// otherwise the trace is reported unavailable and downstream diagnostics
/// omit the second-order scale.
pub fn kernel_curvature(spec: &CovarianceSpec) -> Result<KernelCurvature> {
    let dx = spec.support_radius / 64.0;
    let kernel = build_kernel(spec, 1.0, dx)?;
    let narrow = kernel.axis_r_second_derivative(1);
    let wide = kernel.axis_r_second_derivative(2);
    let probe_drift = if narrow == 0.0 {
        f64::INFINITY
    } else {
        ((wide - narrow) / narrow).abs()
    };
    let stable = narrow < 0.0 && probe_drift < CURVATURE_DRIFT_LIMIT;
    Ok(KernelCurvature {
        r0: spec.r0_continuum(),
        hessian_root_trace: stable.then(|| kernel.hessian_root_trace(1)),
        probe_drift,
    })
}

/// Characteristic scales of the top of the spectrum at one `(t, eps)`.
#[derive(Debug, Clone, Copy)]
pub struct ScaleDiagnostics {
    pub t: f64,
    pub eps: f64,
    /// Field-maximum scale `eps^((4-d)/2) sqrt(2 d R(0) log t)`; times
    /// `eps^-2` it sizes the leading eigenvalue.
    pub leading: f64,
    /// Second-order deficit scale
    /// `eps^((4-d)/4) (Tr[(-R''(0))^(1/2)]/2) ((2d/R(0)) log t)^(1/4)`;
    /// absent when the curvature probe failed.
    pub deficit: Option<f64>,
    /// Localization width `eps^((d-2)/2) (2 d R(0) log t)^(-1/2)` of the
    /// leading eigenfunction.
    pub width: f64,
    /// `deficit / leading`; the schedule is headed for the regular regime
    /// exactly when this ratio decays.
    pub ratio: Option<f64>,
}

/// Compute the characteristic scales at one `(t, eps)` point.
pub fn scale_diagnostics(
    dim: usize,
    t: f64,
    eps: f64,
    curvature: &KernelCurvature,
) -> Result<ScaleDiagnostics> {
    check_dim(dim)?;
    if !(t > 1.0) || !t.is_finite() {
        return Err(Error::InvalidConfig(format!("scales need t > 1, got {t}")));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidConfig(format!("scales need eps > 0, got {eps}")));
    }
    let l = t.ln();
    let d = dim as f64;
    let co = 4.0 - d;
    let base = 2.0 * d * curvature.r0 * l;
    let leading = eps.powf(co / 2.0) * base.sqrt();
    let deficit = curvature
        .hessian_root_trace
        .map(|tr| eps.powf(co / 4.0) * 0.5 * tr * (2.0 * d / curvature.r0 * l).powf(0.25));
    let width = eps.powf((d - 2.0) / 2.0) / base.sqrt();
    Ok(ScaleDiagnostics {
        t,
        eps,
        leading,
        deficit,
        width,
        ratio: deficit.map(|s| s / leading),
    })
}

/// Band of local exponents treated as neither decaying nor growing when
/// classifying the deficit ratio trend.
pub const CRITICAL_TREND_BAND: f64 = 0.02;

/// Classify the regime from the deficit ratio at two consecutive grid
/// points: a decaying ratio predicts the regular regime, a growing one
/// the singular regime, and a flat one the critical rate.
pub fn classify_ratio_trend(a: &ScaleDiagnostics, b: &ScaleDiagnostics) -> Result<Phase> {
    if !(b.t > a.t) {
        return Err(Error::InvalidConfig(format!(
            "trend classification needs increasing t, got {} then {}",
            a.t, b.t
        )));
    }
    let (ra, rb) = match (a.ratio, b.ratio) {
        (Some(ra), Some(rb)) => (ra, rb),
        _ => {
            return Err(Error::InvalidConfig(
                "trend classification needs the deficit ratio on both points".into(),
            ))
        }
    };
    let exponent = (rb / ra).ln() / (b.t.ln().ln() - a.t.ln().ln());
    Ok(if exponent < -CRITICAL_TREND_BAND {
        Phase::Regular
    } else if exponent > CRITICAL_TREND_BAND {
        Phase::Singular
    } else {
        Phase::Critical
    })
}

/// Normalizer dividing `Lambda_k` in the statistic appropriate for the
/// phase: `eps^(-d/2) sqrt(log t)` in the regular regime and
/// `(log t)^(2/(4-d))` in the singular one. The two coincide at the
/// critical rate, where the regular form is used.
pub fn eigen_normalizer(phase: Phase, dim: usize, t: f64, eps: f64) -> f64 {
    let l = t.ln();
    match phase {
        Phase::Regular | Phase::Critical => eps.powf(-(dim as f64) / 2.0) * l.sqrt(),
        Phase::Singular => l.powf(2.0 / (4.0 - dim as f64)),
    }
}

/// Limit of the regular-phase normalized statistic, `sqrt(2 d R(0))`.
pub fn regular_limit(dim: usize, r0: f64) -> f64 {
    (2.0 * dim as f64 * r0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::KernelFamily;
    use proptest::prelude::*;

    fn triangular(dim: usize) -> CovarianceSpec {
        CovarianceSpec::new(KernelFamily::TriangularTensor, 1.0, dim).unwrap()
    }

    #[test]
    fn schedule_windows_are_enforced() {
        assert!(EpsSchedule::regular(1, 0.2).is_ok());
        assert!(EpsSchedule::regular(1, 1.0 / 3.0).unwrap_err().is_config());
        assert!(EpsSchedule::regular(1, -0.1).unwrap_err().is_config());
        assert!(EpsSchedule::singular(1, 0.4, 1.0).is_ok());
        assert!(EpsSchedule::singular(1, 0.3, 1.0).unwrap_err().is_config());
        assert!(EpsSchedule::singular(1, 0.9, 1.0).unwrap_err().is_config());
        let wide = EpsSchedule::singular_beyond_window(1, 0.9, 1.0).unwrap();
        assert!(wide.unsupported);
        let inside = EpsSchedule::singular_beyond_window(1, 0.4, 1.0).unwrap();
        assert!(!inside.unsupported);
        assert!(EpsSchedule::singular_beyond_window(1, 0.3, 1.0)
            .unwrap_err()
            .is_config());
        assert!(EpsSchedule::singular(2, 0.55, 0.4).unwrap_err().is_config());
        assert!(EpsSchedule::singular(2, 7.0 / 12.0, 1.0).is_ok());
        assert!(EpsSchedule::singular(2, 0.7, 1.0).unwrap_err().is_config());
        assert!(EpsSchedule::constant(1, 0.0).unwrap_err().is_config());
        assert!(EpsSchedule::constant(1, 1.5).unwrap_err().is_config());
        assert!(EpsSchedule::constant(4, 0.5).unwrap_err().is_config());
        assert_eq!(EpsSchedule::critical(2).unwrap().gamma, 0.5);
    }

    #[test]
    fn schedule_values_follow_the_decay_law() {
        let s = EpsSchedule::critical(2).unwrap();
        let t = std::f64::consts::E.powi(4);
        assert!((s.eps_at(t) - 0.5).abs() < 1e-12);
        // Early times are capped at the unit radius.
        assert_eq!(s.eps_at(std::f64::consts::E.sqrt()), 1.0);
        let c = EpsSchedule::constant(1, 0.7).unwrap();
        assert_eq!(c.eps_at(2.0), 0.7);
        assert_eq!(c.eps_at(100.0), 0.7);
    }

    #[test]
    fn curvature_probe_matches_the_hand_values() {
        // Triangular axis profile: R''(0) = -2 per axis, so the trace is
        // d * sqrt(2 * (2/3)^(d-1)).
        let c1 = kernel_curvature(&triangular(1)).unwrap();
        assert!((c1.r0 - 2.0 / 3.0).abs() < 1e-15);
        let tr1 = c1.hessian_root_trace.expect("stable probe");
        assert!((tr1 - 2f64.sqrt()).abs() < 1e-6, "got {tr1}");
        let c2 = kernel_curvature(&triangular(2)).unwrap();
        let tr2 = c2.hessian_root_trace.expect("stable probe");
        let want2 = 2.0 * (2.0f64 * (2.0 / 3.0)).sqrt();
        assert!((tr2 - want2).abs() / want2 < 1e-3, "got {tr2} want {want2}");
        // Cosine profile: the squared slope integrates to pi^2/4, so the
        // one-dimensional trace is pi/2.
        let cos = CovarianceSpec::new(KernelFamily::CosineBump, 1.0, 1).unwrap();
        let cc = kernel_curvature(&cos).unwrap();
        let trc = cc.hessian_root_trace.expect("stable probe");
        assert!(
            (trc - std::f64::consts::FRAC_PI_2).abs() < 1e-3,
            "got {trc} want pi/2"
        );
    }

    #[test]
    fn scales_reduce_to_the_unit_radius_forms() {
        let curv = kernel_curvature(&triangular(1)).unwrap();
        let t = std::f64::consts::E.powi(4);
        let s = scale_diagnostics(1, t, 1.0, &curv).unwrap();
        let want_leading = (2.0f64 * (2.0 / 3.0) * 4.0).sqrt();
        assert!((s.leading - want_leading).abs() < 1e-12);
        let tr = curv.hessian_root_trace.unwrap();
        let want_deficit = 0.5 * tr * (2.0f64 / (2.0 / 3.0) * 4.0).powf(0.25);
        assert!((s.deficit.unwrap() - want_deficit).abs() < 1e-12);
        assert!((s.width - 1.0 / want_leading).abs() < 1e-12);
        assert!((s.ratio.unwrap() - want_deficit / want_leading).abs() < 1e-12);
        assert!(scale_diagnostics(1, 0.5, 1.0, &curv).unwrap_err().is_config());
        assert!(scale_diagnostics(1, t, 0.0, &curv).unwrap_err().is_config());
    }

    #[test]
    fn ratio_trend_separates_the_regimes() {
        let curv = kernel_curvature(&triangular(1)).unwrap();
        let points = |sched: &EpsSchedule| {
            let (ta, tb) = (3f64.exp(), 5f64.exp());
            (
                scale_diagnostics(1, ta, sched.eps_at(ta), &curv).unwrap(),
                scale_diagnostics(1, tb, sched.eps_at(tb), &curv).unwrap(),
            )
        };
        let reg = EpsSchedule::regular(1, 0.2).unwrap();
        let (a, b) = points(&reg);
        assert_eq!(classify_ratio_trend(&a, &b).unwrap(), Phase::Regular);
        let sing = EpsSchedule::singular(1, 0.4, 1.0).unwrap();
        let (a, b) = points(&sing);
        assert_eq!(classify_ratio_trend(&a, &b).unwrap(), Phase::Singular);
        let crit = EpsSchedule::critical(1).unwrap();
        let (a, b) = points(&crit);
        assert_eq!(classify_ratio_trend(&a, &b).unwrap(), Phase::Critical);
        assert!(classify_ratio_trend(&b, &a).unwrap_err().is_config());
    }

    #[test]
    fn normalizers_coincide_at_the_critical_rate() {
        for dim in 1..=2usize {
            let sched = EpsSchedule::critical(dim).unwrap();
            let t = 5f64.exp();
            let eps = sched.eps_at(t);
            let reg = eigen_normalizer(Phase::Regular, dim, t, eps);
            let sing = eigen_normalizer(Phase::Singular, dim, t, eps);
            assert!(
                ((reg - sing) / sing).abs() < 1e-12,
                "dim {dim}: {reg} vs {sing}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn schedules_stay_in_range_and_shrink(
            dim in 1usize..=3,
            gamma_frac in 0.05f64..0.95,
            la in 1.05f64..6.0,
            gap in 0.1f64..2.0,
        ) {
            let gamma = gamma_frac * critical_gamma(dim);
            let sched = EpsSchedule::regular(dim, gamma).unwrap();
            let (ta, tb) = (la.exp(), (la + gap).exp());
            let (ea, eb) = (sched.eps_at(ta), sched.eps_at(tb));
            prop_assert!(ea > 0.0 && ea <= 1.0);
            prop_assert!(eb <= ea);
            let norm_a = eigen_normalizer(sched.predicted_phase(), dim, ta, ea);
            let norm_b = eigen_normalizer(sched.predicted_phase(), dim, tb, eb);
            prop_assert!(norm_a > 0.0 && norm_b > norm_a);
        }
    }
}
