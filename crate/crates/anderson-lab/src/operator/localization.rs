//! Domain-splitting bounds on the top Dirichlet eigenvalue.
//!
//! Restricting to a subdomain can only lower the top eigenvalue, so the best
//! sub-box gives a lower bound on the full-box value. Scanning a lattice of
//! overlapping sub-boxes gives the complementary upper-bound picture: the gap
//! between the full value and the best local value shrinks as the sub-box
//! size grows.

use super::{assemble, top_eigenpairs, EigenOptions};
use crate::error::{Error, Result};
use crate::grid::{Cube, MAX_DIM};
use crate::noise::FieldSample;

/// Full-box eigenvalue against the best over a family of sub-boxes.
#[derive(Debug, Clone)]
pub struct LowerBoundCheck {
    pub lambda_full: f64,
    pub sub_lambdas: Vec<f64>,
    /// `lambda_full - max(sub_lambdas)`; nonnegative up to roundoff.
    pub margin: f64,
}

/// Verify that every sub-box eigenvalue sits below the full-box one.
pub fn localization_lower_bound_check(
    sample: &FieldSample,
    cube: &Cube,
    subcubes: &[Cube],
    sigma: f64,
    opts: &EigenOptions,
) -> Result<LowerBoundCheck> {
    if subcubes.is_empty() {
        return Err(Error::InvalidConfig("no sub-boxes supplied".into()));
    }
    for (i, sub) in subcubes.iter().enumerate() {
        for a in 0..cube.dim {
            if sub.lo(a) < cube.lo(a) - 1e-12 || sub.hi(a) > cube.hi(a) + 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "sub-box {i} leaves the full box on axis {a}"
                )));
            }
        }
    }
    let one = EigenOptions { k: 1, ..opts.clone() };
    let full = top_eigenpairs(&assemble(sample, cube, sigma)?, &one)?;
    let mut sub_lambdas = Vec::with_capacity(subcubes.len());
    for sub in subcubes {
        let r = top_eigenpairs(&assemble(sample, sub, sigma)?, &one)?;
        sub_lambdas.push(r.lambdas[0]);
    }
    let best = sub_lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(LowerBoundCheck {
        lambda_full: full.lambdas[0],
        sub_lambdas,
        margin: full.lambdas[0] - best,
    })
}

/// One scan scale: the gap between the full eigenvalue and the best local one.
#[derive(Debug, Clone)]
pub struct UpperBoundScanPoint {
    pub kappa: f64,
    pub lambda_full: f64,
    /// Best eigenvalue over sub-boxes of halfwidth `kappa + 1` centered on
    /// the `2 kappa`-spaced lattice inside the box.
    pub lambda_local: f64,
    pub gap: f64,
    /// Center of the winning sub-box.
    pub best_center: [f64; MAX_DIM],
    /// Number of sub-boxes visited.
    pub boxes: usize,
}

/// Scan overlapping sub-boxes of growing size and record the gap at each.
///
/// Sub-box centers run over `2 kappa`-spaced lattice points inside the
/// halfwidth-`r` box; each sub-box has halfwidth `kappa + 1`, so the sample
/// must cover halfwidth `r + kappa + 1` for the largest `kappa`.
pub fn localization_upper_bound_scan(
    sample: &FieldSample,
    r: f64,
    kappas: &[f64],
    sigma: f64,
    opts: &EigenOptions,
) -> Result<Vec<UpperBoundScanPoint>> {
    if kappas.is_empty() {
        return Err(Error::InvalidConfig("no scan scales supplied".into()));
    }
    let dim = sample.spec.dim;
    let one = EigenOptions { k: 1, ..opts.clone() };
    let full = top_eigenpairs(&assemble(sample, &Cube::centered(dim, r), sigma)?, &one)?;
    let lambda_full = full.lambdas[0];
    let mut out = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        if kappa <= 0.0 {
            return Err(Error::InvalidConfig(format!("scan scale {kappa} must be positive")));
        }
        if kappa >= r {
            return Err(Error::InvalidConfig(format!(
                "scan scale {kappa} must stay below the box halfwidth {r}"
            )));
        }
        let per_axis: Vec<i64> = {
            let mut idx = Vec::new();
            let mut i = 0i64;
            loop {
                let z = i as f64 * 2.0 * kappa;
                if z > r + 1e-12 {
                    break;
                }
                idx.push(i);
                if i > 0 {
                    idx.push(-i);
                }
                i += 1;
            }
            idx.sort_unstable();
            idx
        };
        let mut best = f64::NEG_INFINITY;
        let mut best_center = [0.0; MAX_DIM];
        let mut boxes = 0usize;
        let mut centers = vec![[0.0f64; MAX_DIM]];
        for a in 0..dim {
            let mut next = Vec::with_capacity(centers.len() * per_axis.len());
            for c in &centers {
                for &i in &per_axis {
                    let mut cc = *c;
                    cc[a] = i as f64 * 2.0 * kappa;
                    next.push(cc);
                }
            }
            centers = next;
        }
        for c in centers {
            let sub = Cube::at(dim, c, kappa + 1.0);
            let res = top_eigenpairs(&assemble(sample, &sub, sigma)?, &one)?;
            boxes += 1;
            if res.lambdas[0] > best {
                best = res.lambdas[0];
                best_center = c;
            }
        }
        out.push(UpperBoundScanPoint {
            kappa,
            lambda_full,
            lambda_local: best,
            gap: lambda_full - best,
            best_center,
            boxes,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_field, CovarianceSpec, KernelFamily};

    fn field(seed: u64, half: f64) -> FieldSample {
        let spec = CovarianceSpec::new(KernelFamily::TriangularTensor, 1.0, 1).unwrap();
        sample_field(&spec, 0.5, 1.0, half, 1.0 / 16.0, seed).unwrap()
    }

    #[test]
    fn sub_boxes_never_beat_the_full_box() {
        let f = field(41, 6.0);
        let cube = Cube::centered(1, 6.0);
        let subs: Vec<Cube> = (-2..=2)
            .map(|i| Cube::at(1, [i as f64 * 2.0, 0.0, 0.0], 2.0))
            .collect();
        let chk =
            localization_lower_bound_check(&f, &cube, &subs, 1.0, &EigenOptions::default()).unwrap();
        assert!(chk.margin >= -1e-12 * (chk.lambda_full.abs() + 1.0), "margin {}", chk.margin);
        assert_eq!(chk.sub_lambdas.len(), 5);
    }

    #[test]
    fn sub_box_outside_the_domain_is_rejected() {
        let f = field(42, 4.0);
        let cube = Cube::centered(1, 3.0);
        let subs = vec![Cube::at(1, [2.5, 0.0, 0.0], 1.0)];
        let err = localization_lower_bound_check(&f, &cube, &subs, 1.0, &EigenOptions::default())
            .unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn zero_potential_scan_gap_is_analytic_and_decaying() {
        let f = crate::noise::constant_field(1, 11.0, 1.0 / 16.0, 0.0);
        let r = 6.0;
        let pts =
            localization_upper_bound_scan(&f, r, &[2.0, 3.0], 1.0, &EigenOptions::default())
                .unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        for p in &pts {
            let want = pi2 / 8.0 * (1.0 / ((p.kappa + 1.0) * (p.kappa + 1.0)) - 1.0 / (r * r));
            assert!((p.gap - want).abs() < 1e-3, "kappa {}: {} vs {want}", p.kappa, p.gap);
            assert!(p.gap > 0.0);
        }
        assert!(pts[1].gap < pts[0].gap);
    }

    #[test]
    fn scan_reports_every_scale_and_covers_the_box() {
        let f = field(43, 10.0);
        let pts = localization_upper_bound_scan(
            &f,
            6.0,
            &[1.5, 3.0],
            1.0,
            &EigenOptions::default(),
        )
        .unwrap();
        assert_eq!(pts.len(), 2);
        // 2 kappa spacing: 5 centers at kappa = 1.5, 3 at kappa = 3.
        assert_eq!(pts[0].boxes, 5);
        assert_eq!(pts[1].boxes, 3);
        for p in &pts {
            assert_eq!(p.lambda_full, pts[0].lambda_full);
            assert!(p.lambda_local.is_finite());
            assert!(p.gap.is_finite());
            // The winning center is one of the scanned lattice points.
            let ratio = p.best_center[0] / (2.0 * p.kappa);
            assert!((ratio - ratio.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn scan_scale_must_stay_below_the_halfwidth() {
        let f = field(44, 10.0);
        let err = localization_upper_bound_scan(&f, 3.0, &[3.0], 1.0, &EigenOptions::default())
            .unwrap_err();
        assert!(err.is_config());
    }
}
