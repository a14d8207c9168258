use std::time::Instant;

use anderson_lab::experiments::{
    phase_discrimination, run_sweep, DiscriminationPlan, EpsSchedule, SweepPlan, SweepRecord,
};
use anderson_lab::feynman_kac::{annealed_moment, InterpMode, PathConfig};
use anderson_lab::noise::{build_kernel, CovarianceSpec, KernelFamily};
use anderson_lab::stats::{fit_line, median};

fn tri(dim: usize) -> CovarianceSpec {
    CovarianceSpec::new(KernelFamily::TriangularTensor, 1.0, dim).unwrap()
}

fn probe_annealed() {
    let spec = tri(1);
    for &eps in &[0.7f64, 1.0] {
        let kernel = build_kernel(&spec, eps, eps / 8.0).unwrap();
        for &div in &[4.0f64, 8.0, 16.0] {
            for p in 1..=2usize {
                let limit = p as f64 * p as f64 * (2.0 / 3.0) / 2.0;
                let mut line = format!("eps={eps} div={div} p={p}: dev(t) =");
                for (i, &t) in [0.25f64, 0.5, 1.0, 2.0].iter().enumerate() {
                    let cfg = PathConfig {
                        t,
                        dt: (eps * eps / div).min(t),
                        paths: 4000,
                        seed: 900 + i as u64,
                        interpolation: InterpMode::Multilinear,
                    };
                    let start = Instant::now();
                    let est = annealed_moment(&kernel, t, p, &cfg).unwrap();
                    let rate = est.log_mean / (t * t / eps);
                    let dev = (limit - rate) / limit;
                    line.push_str(&format!(
                        " {dev:.3}(se {:.4}, ess {:.0}, {:.1}s)",
                        est.std_error / (t * t / eps) / limit,
                        est.ess,
                        start.elapsed().as_secs_f64()
                    ));
                }
                println!("{line}");
            }
        }
    }
}

fn probe_fast(tuples: usize) {
    let spec = tri(1);
    for &t in &[0.25f64, 0.5, 1.0, 2.0] {
        let eps = 0.2 * t.powf(-1.5);
        let kernel = build_kernel(&spec, eps, eps / 8.0).unwrap();
        for p in 1..=3usize {
            let start = Instant::now();
            let cfg = PathConfig::standard(t, eps, tuples, (t * 1000.0) as u64 + p as u64);
            match annealed_moment(&kernel, t, p, &cfg) {
                Err(e) => println!("t={t} p={p} eps={eps:.4}: ERROR {e}"),
                Ok(est) => println!(
                    "t={t} p={p} eps={eps:.4}: logm={:.4} se={:.4} ess={:.0} cubic_rate={:.4} quad_rate={:.4} ({:.1}s)",
                    est.log_mean,
                    est.std_error,
                    est.ess,
                    est.log_mean / t.powi(3),
                    est.log_mean / (t * t / eps),
                    start.elapsed().as_secs_f64()
                ),
            }
        }
    }
}

fn probe_sweep_gap() {
    let sched = EpsSchedule::constant(1, 1.0).unwrap();
    let mut plan = SweepPlan::new(sched, tri(1), vec![2.0, 3.0, 4.0, 5.0], 10, 0xA11CE);
    plan.k = 4;
    let start = Instant::now();
    let out = run_sweep(&plan).unwrap();
    println!("sweep took {:.1}s", start.elapsed().as_secs_f64());
    let limit = (4.0f64 / 3.0).sqrt();
    let mut gaps = Vec::new();
    for gi in 0..plan.log_t_grid.len() {
        let recs: Vec<&SweepRecord> = out.records.iter().filter(|r| r.grid_index == gi).collect();
        let stats: Vec<f64> = recs.iter().map(|r| r.normalized_eigs[0]).collect();
        let med = median(&stats);
        let spread: Vec<f64> =
            recs.iter().map(|r| r.normalized_eigs[0] - r.normalized_eigs[3]).collect();
        println!(
            "L={} med={med:.4} gap={:.4} spread={:.4} sites={} dx={:.4}",
            plan.log_t_grid[gi],
            limit - med,
            median(&spread),
            recs[0].sites,
            recs[0].dx
        );
        gaps.push(limit - med);
    }
    let x: Vec<f64> = plan.log_t_grid.iter().map(|l| l.ln()).collect();
    let y: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    println!("gap decay exponent {:.3}", fit_line(&x, &y).slope);
}

fn probe_disc(dim: usize, gammas: (f64, f64), grid: Vec<f64>, replicas: u64, seed: u64) {
    let start = Instant::now();
    let mut plan = DiscriminationPlan::new(tri(dim), gammas.0, gammas.1, grid.clone(), replicas, seed);
    plan.k = if dim == 1 { 4 } else { 1 };
    plan.bootstrap.resamples = 200;
    match phase_discrimination(&plan) {
        Err(e) => println!("d={dim} {gammas:?} {grid:?}: ERROR {e}"),
        Ok(rep) => {
            let min_lam = rep
                .regular_records
                .iter()
                .chain(&rep.singular_records)
                .map(|r| r.lambdas[0])
                .fold(f64::INFINITY, f64::min);
            let max_sites =
                rep.regular_records.iter().map(|r| r.sites).max().unwrap_or(0);
            println!(
                "d={dim} gammas={gammas:?} grid={grid:?} reps={replicas}: {:.0}s  min_lambda={min_lam:.3} max_sites={max_sites}",
                start.elapsed().as_secs_f64()
            );
            println!("{}", rep.render());
        }
    }
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "annealed" => probe_annealed(),
        "fast" => {
            let tuples = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(1000);
            probe_fast(tuples);
        }
        "gap" => probe_sweep_gap(),
        "control" => {
            probe_disc(1, (0.2, 0.2), vec![2.6, 3.0, 3.4], 4, 0xC0DE);
            probe_disc(1, (0.2, 0.2), vec![3.0, 3.5, 4.0], 4, 0xC0DE);
        }
        "headline" => {
            probe_disc(1, (0.2, 0.4), vec![2.6, 3.0, 3.4], 6, 0xBEEF);
            probe_disc(1, (0.2, 0.4), vec![3.0, 3.5, 4.0], 6, 0xBEEF);
        }
        "d2" => {
            probe_disc(2, (0.3, 7.0 / 12.0), vec![1.2, 1.6, 2.0], 3, 0xD2);
        }
        "lite" => {
            probe_disc(1, (0.2, 0.4), vec![2.0, 4.0, 6.0], 8, 0x11E);
            probe_disc(1, (0.2, 0.4), vec![2.0, 4.0, 6.0], 8, 0x7A57);
        }
        "slowarm" => {
            let reps: u64 = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(40);
            let start = Instant::now();
            let sched = EpsSchedule::regular(1, 0.2).unwrap();
            let grid = vec![2.0, 3.0, 4.0, 5.0, 6.0];
            let mut plan = SweepPlan::new(sched, tri(1), grid.clone(), reps, 0x7A57);
            plan.k = 4;
            let out = run_sweep(&plan).unwrap();
            println!("slow-arm sweep {reps} reps took {:.0}s", start.elapsed().as_secs_f64());
            for gi in 0..grid.len() {
                let recs: Vec<&SweepRecord> =
                    out.records.iter().filter(|r| r.grid_index == gi).collect();
                let stat: Vec<f64> = recs.iter().map(|r| r.normalized_eigs[0]).collect();
                let spread: Vec<f64> = recs
                    .iter()
                    .map(|r| r.normalized_eigs[0] - r.normalized_eigs[3])
                    .collect();
                println!(
                    "L={} med_stat={:.4} med_spread={:.4}",
                    grid[gi],
                    median(&stat),
                    median(&spread)
                );
            }
        }
        "full" => {
            let grid: Vec<f64> = {
                let rest: Vec<f64> =
                    std::env::args().skip(2).filter_map(|s| s.parse().ok()).collect();
                if rest.is_empty() { vec![2.0, 3.0, 4.0, 5.0, 6.0] } else { rest }
            };
            let start = Instant::now();
            let mut plan = DiscriminationPlan::new(tri(1), 0.2, 0.4, grid, 20, 0x7A57);
            plan.bootstrap.resamples = 400;
            let rep = phase_discrimination(&plan).unwrap();
            println!("full probe took {:.0}s", start.elapsed().as_secs_f64());
            println!("{}", rep.render());
            for (name, records) in
                [("slow", &rep.regular_records), ("fast", &rep.singular_records)]
            {
                for gi in 0..plan.log_t_grid.len() {
                    let recs: Vec<&SweepRecord> =
                        records.iter().filter(|r| r.grid_index == gi).collect();
                    let lams: Vec<f64> = recs.iter().map(|r| r.lambdas[0]).collect();
                    let stat: Vec<f64> = recs.iter().map(|r| r.normalized_eigs[0]).collect();
                    let spread: Vec<f64> = recs
                        .iter()
                        .map(|r| r.normalized_eigs[0] - r.normalized_eigs[3])
                        .collect();
                    println!(
                        "{name} L={} eps={:.3} med_lambda={:.4} med_stat={:.4} med_spread={:.4} sites={} ({:.3}s/solve est)",
                        plan.log_t_grid[gi],
                        recs[0].eps,
                        median(&lams),
                        median(&stat),
                        median(&spread),
                        recs[0].sites,
                        0.0
                    );
                }
            }
        }
        other => eprintln!("unknown probe {other}"),
    }
}
