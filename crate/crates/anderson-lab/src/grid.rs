//! Cubic lattice geometry shared by all modules.
//!
//! Everything in the crate lives on an axis-aligned lattice `{ i * dx }`
//! anchored at the origin, in dimension 1, 2 or 3. A [`Lattice`] describes
//! the sampled window `[-extent, extent]^d`; a [`Cube`] is an axis-aligned
//! box used for Dirichlet restrictions and localization scans.

/// Maximum supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Axis-aligned cube `{ |x_a - center_a| < halfwidth }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cube {
    pub dim: usize,
    pub center: [f64; MAX_DIM],
    pub halfwidth: f64,
}

impl Cube {
    /// Cube of the given halfwidth centered at the origin.
    pub fn centered(dim: usize, halfwidth: f64) -> Self {
        Cube {
            dim,
            center: [0.0; MAX_DIM],
            halfwidth,
        }
    }

    /// Cube of the given halfwidth centered at `center`.
    pub fn at(dim: usize, center: [f64; MAX_DIM], halfwidth: f64) -> Self {
        Cube {
            dim,
            center,
            halfwidth,
        }
    }

    /// Lower corner on the given axis.
    pub fn lo(&self, axis: usize) -> f64 {
        self.center[axis] - self.halfwidth
    }

    /// Upper corner on the given axis.
    pub fn hi(&self, axis: usize) -> f64 {
        self.center[axis] + self.halfwidth
    }

    /// Whether `x` lies strictly inside the open cube.
    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|a| x[a] > self.lo(a) && x[a] < self.hi(a))
    }
}

/// Regular cubic lattice over `[-extent, extent]^d` with spacing `dx`.
///
/// Points are `i * dx` for `i in [-n, n]` per axis with `n = extent / dx`
/// (the constructor snaps `extent` to a lattice multiple). Values attached
/// to the lattice are stored row-major with the first axis slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub dim: usize,
    pub dx: f64,
    /// Index bound: axis indices run over `-n ..= n`.
    pub n: i64,
}

impl Lattice {
    /// Lattice covering `[-extent, extent]^d`; `extent` is rounded to the
    /// nearest multiple of `dx`.
    pub fn new(dim: usize, extent: f64, dx: f64) -> Self {
        assert!(dim >= 1 && dim <= MAX_DIM, "dimension must be 1..=3");
        assert!(dx > 0.0 && extent > 0.0);
        let n = (extent / dx).round() as i64;
        assert!(n >= 1, "extent shorter than one spacing");
        Lattice { dim, dx, n }
    }

    /// Physical extent actually covered (snapped halfwidth).
    pub fn extent(&self) -> f64 {
        self.n as f64 * self.dx
    }

    /// Points per axis.
    pub fn points_per_axis(&self) -> usize {
        (2 * self.n + 1) as usize
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.dim as u32)
    }

    /// Whether the lattice holds no points (never true by construction).
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of the multi-index `i` (entries in `-n ..= n`).
    pub fn flat(&self, i: &[i64; MAX_DIM]) -> usize {
        let p = self.points_per_axis();
        let mut idx = 0usize;
        for a in 0..self.dim {
            debug_assert!(i[a].abs() <= self.n);
            idx = idx * p + (i[a] + self.n) as usize;
        }
        idx
    }

    /// Multi-index of a flat index.
    pub fn unflat(&self, mut idx: usize) -> [i64; MAX_DIM] {
        let p = self.points_per_axis();
        let mut out = [0i64; MAX_DIM];
        for a in (0..self.dim).rev() {
            out[a] = (idx % p) as i64 - self.n;
            idx /= p;
        }
        out
    }

    /// Physical coordinates of a multi-index.
    pub fn position(&self, i: &[i64; MAX_DIM]) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = i[a] as f64 * self.dx;
        }
        x
    }

    /// Whether physical point `x` lies inside the covered window.
    pub fn covers(&self, x: &[f64]) -> bool {
        let e = self.extent();
        (0..self.dim).all(|a| x[a] >= -e && x[a] <= e)
    }

    /// Value at `x` by multilinear interpolation of `values` (row-major on
    /// this lattice). Coordinates are clamped to the covered window.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let p = self.points_per_axis();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for a in 0..self.dim {
            let u = x[a] / self.dx + self.n as f64;
            let u = u.clamp(0.0, (p - 1) as f64);
            let mut i0 = u.floor() as usize;
            if i0 >= p - 1 {
                i0 = p - 2;
            }
            base[a] = i0;
            frac[a] = u - i0 as f64;
        }
        let corners = 1usize << self.dim;
        let mut acc = 0.0;
        for c in 0..corners {
            let mut w = 1.0;
            let mut idx = 0usize;
            for a in 0..self.dim {
                let hi = (c >> a) & 1 == 1;
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
                idx = idx * p + base[a] + usize::from(hi);
            }
            if w != 0.0 {
                acc += w * values[idx];
            }
        }
        acc
    }

    /// Value at `x` by nearest-lattice-point lookup (diagnostic mode).
    pub fn nearest(&self, values: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let p = self.points_per_axis();
        let mut idx = 0usize;
        for a in 0..self.dim {
            let u = (x[a] / self.dx + self.n as f64).round();
            let u = u.clamp(0.0, (p - 1) as f64) as usize;
            idx = idx * p + u;
        }
        values[idx]
    }

    /// Inclusive index range of lattice points strictly inside `(lo, hi)`
    /// on one axis. Points within `1e-7 * dx` of a wall count as boundary.
    pub fn interior_range(&self, lo: f64, hi: f64) -> (i64, i64) {
        let tol = 1e-7 * self.dx;
        let mut a = ((lo + tol) / self.dx).floor() as i64 + 1;
        let mut b = ((hi - tol) / self.dx).ceil() as i64 - 1;
        a = a.max(-self.n);
        b = b.min(self.n);
        (a, b)
    }
}
