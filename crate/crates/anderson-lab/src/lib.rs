//! anderson-lab: a lattice laboratory for Schrodinger operators with
//! mollified Gaussian potentials.
//!
//! The crate samples smoothed white-noise potentials at a tunable
//! correlation scale, assembles the corresponding finite-difference
//! operators with Dirichlet walls, extracts their top eigenpairs, estimates
//! path-integral growth statistics, computes the variational constants that
//! govern the small-scale regime, and runs the scaling sweeps that separate
//! the two growth phases.
//!
//! Start from the runnable examples, one per capability:
//!
//! ```text
//! cargo run --release -p anderson-lab --example sample_field
//! cargo run --release -p anderson-lab --example spectrum
//! cargo run --release -p anderson-lab --example localization
//! cargo run --release -p anderson-lab --example rescaling_view
//! cargo run --release -p anderson-lab --example total_mass
//! cargo run --release -p anderson-lab --example trace_identity
//! cargo run --release -p anderson-lab --example gns_flow
//! cargo run --release -p anderson-lab --example phase_sweep
//! cargo run --release -p anderson-lab --example annealed
//! ```
//!
//! The same functionality is reachable through the thin `anderson-lab`
//! binary (`sample | eigs | fk | gns | sweep | report`); see the README.

pub mod error;
pub mod experiments;
pub mod feynman_kac;
pub mod grid;
pub mod noise;
pub mod operator;
pub mod rng;
pub mod stats;
pub mod variational;

pub use error::{Error, Result};
