//! Product-space norms and inner products for first-order states
//! `V = (v1, v2, v3)` with `N`, `N`, `3N` components.
//!
//! The product norm uses the squared cutoff (`gamma = 2`) in every block
//! and shifts the weight by one on the derivative blocks. The weighted
//! inner products insert a symmetric positive definite matrix acting on
//! the third block.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid3, ScalarField};
use crate::spectral::{lambda_s_scaled_unchecked, LAMBDA_SUPPORT_MARGIN};

use super::norms::{masked, NormParams};
use super::partition::DyadicPartition;

/// Vector-valued state `(v1, v2, v3)` with component counts `N, N, 3N`.
/// The third block is axis-major: `v3[a * N + i]` holds the `a`-axis
/// derivative slot of component `i`.
#[derive(Debug, Clone)]
pub struct ProductState {
    pub v1: Vec<ScalarField>,
    pub v2: Vec<ScalarField>,
    pub v3: Vec<ScalarField>,
}

impl ProductState {
    pub fn new(v1: Vec<ScalarField>, v2: Vec<ScalarField>, v3: Vec<ScalarField>) -> Result<Self> {
        let n = v1.len();
        if n == 0 {
            return Err(Error::Shape("product state needs at least one component".into()));
        }
        if v2.len() != n || v3.len() != 3 * n {
            return Err(Error::Shape(format!(
                "component counts must be (N, N, 3N); got ({}, {}, {})",
                v1.len(),
                v2.len(),
                v3.len()
            )));
        }
        let grid = v1[0].grid();
        for f in v1.iter().chain(&v2).chain(&v3) {
            f.grid().same_grid(&grid)?;
        }
        Ok(Self { v1, v2, v3 })
    }

    pub fn n_components(&self) -> usize {
        self.v1.len()
    }

    pub fn grid(&self) -> Grid3 {
        self.v1[0].grid()
    }

    pub fn zeros(grid: Grid3, n: usize) -> Self {
        Self {
            v1: (0..n).map(|_| ScalarField::zeros(grid)).collect(),
            v2: (0..n).map(|_| ScalarField::zeros(grid)).collect(),
            v3: (0..3 * n).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.v1
            .iter()
            .chain(&self.v2)
            .chain(&self.v3)
            .map(|f| f.max_abs())
            .fold(0.0, f64::max)
    }

    fn require_support_margin(&self, cells: usize) -> Result<()> {
        for f in self.v1.iter().chain(&self.v2).chain(&self.v3) {
            f.require_support_margin(cells)?;
        }
        Ok(())
    }
}

/// Pointwise symmetric 3x3 matrix field acting on the third block as
/// `M (x) identity_N` (entries stored xx, xy, xz, yy, yz, zz).
#[derive(Debug, Clone)]
pub struct SymMat3Field {
    grid: Grid3,
    entries: [Vec<f64>; 6],
}

pub const SYM3_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

#[inline]
pub fn sym3_index(a: usize, b: usize) -> usize {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    match (lo, hi) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        (2, 2) => 5,
        _ => unreachable!(),
    }
}

impl SymMat3Field {
    pub fn identity(grid: Grid3) -> Self {
        let mut entries: [Vec<f64>; 6] = Default::default();
        for (slot, (a, b)) in SYM3_PAIRS.iter().enumerate() {
            entries[slot] = vec![if a == b { 1.0 } else { 0.0 }; grid.len()];
        }
        Self { grid, entries }
    }

    pub fn from_entries(grid: Grid3, entries: [Vec<f64>; 6]) -> Result<Self> {
        for e in &entries {
            if e.len() != grid.len() {
                return Err(Error::Shape("matrix entry buffer size mismatch".into()));
            }
        }
        Ok(Self { grid, entries })
    }

    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    #[inline]
    pub fn at(&self, flat: usize) -> [f64; 6] {
        [
            self.entries[0][flat],
            self.entries[1][flat],
            self.entries[2][flat],
            self.entries[3][flat],
            self.entries[4][flat],
            self.entries[5][flat],
        ]
    }

    pub fn entry(&self, a: usize, b: usize) -> &[f64] {
        &self.entries[sym3_index(a, b)]
    }

    pub fn entry_mut(&mut self, a: usize, b: usize) -> &mut [f64] {
        &mut self.entries[sym3_index(a, b)]
    }

    /// Eigenvalue range over all grid points (symmetric 3x3 per point).
    pub fn eigen_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for flat in 0..self.grid.len() {
            let m = self.at(flat);
            let mat = nalgebra::Matrix3::new(m[0], m[1], m[2], m[1], m[3], m[4], m[2], m[4], m[5]);
            let eig = mat.symmetric_eigenvalues();
            for e in eig.iter() {
                lo = lo.min(*e);
                hi = hi.max(*e);
            }
        }
        (lo, hi)
    }

    /// Tightest `c0 >= 1` with spectrum in `[1/c0, c0]` at every point;
    /// errors if any eigenvalue is not strictly positive.
    pub fn c0(&self) -> Result<f64> {
        let (lo, hi) = self.eigen_range();
        if lo <= 0.0 {
            // locate the first offending point for the report
            for flat in 0..self.grid.len() {
                let m = self.at(flat);
                let mat =
                    nalgebra::Matrix3::new(m[0], m[1], m[2], m[1], m[3], m[4], m[2], m[4], m[5]);
                let eig = mat.symmetric_eigenvalues();
                let emin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
                if emin <= 0.0 {
                    let (ix, iy, iz) = self.grid.point(flat);
                    return Err(Error::NotPositiveDefinite {
                        point: crate::error::PointIndex { ix, iy, iz },
                        eig: emin,
                    });
                }
            }
            unreachable!("eigen_range reported a non-positive eigenvalue");
        }
        Ok(hi.max(1.0 / lo).max(1.0))
    }

}

fn l2_pair(a: &ScalarField, b: &ScalarField) -> f64 {
    let dv = a.grid().cell_volume();
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * dv
}

/// Product-space norm (squared cutoffs, shifted weights on the
/// derivative blocks):
/// `||V||^2 = ||v1||^2_{s,delta,2} + ||v2||^2_{s,delta+1,2} + ||v3||^2_{s,delta+1,2}`.
pub fn norm_x(v: &ProductState, p: &DyadicPartition, s: f64, delta: f64) -> Result<f64> {
    v.grid().same_grid(&p.grid())?;
    v.require_support_margin(LAMBDA_SUPPORT_MARGIN)?;
    Ok(norm_x_unchecked(v, p, s, delta))
}

pub fn norm_x_unchecked(v: &ProductState, p: &DyadicPartition, s: f64, delta: f64) -> f64 {
    use super::norms::hsd_term_sq;
    let js: Vec<u32> = p.js().collect();
    let mut tasks: Vec<(&ScalarField, f64)> = Vec::new();
    for f in &v.v1 {
        tasks.push((f, delta));
    }
    for f in v.v2.iter().chain(&v.v3) {
        tasks.push((f, delta + 1.0));
    }
    let total: f64 = tasks
        .par_iter()
        .map(|(f, d)| {
            js.iter()
                .map(|&j| hsd_term_sq(f, p, j, s, *d, 2.0))
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total.sqrt()
}

/// Inner product on the product space weighted by a symmetric positive
/// definite block `a33` acting on the third component:
///
/// ```text
/// <V, Phi> = sum_j 2^((3/2+delta)2j)   <L^s (psi_j^2 v1)_j, L^s (psi_j^2 phi1)_j>
///          + sum_j 2^((3/2+delta+1)2j) [ <L^s (psi_j^2 v2)_j, L^s (psi_j^2 phi2)_j>
///                                      + <L^s (psi_j^2 v3)_j, a33_j L^s (psi_j^2 phi3)_j> ]
/// ```
///
/// where `(.)_j` is dilation by `2^j`, realized on the fixed grid with
/// scaled multipliers and the `2^-3j` volume factor.
pub fn inner_x_a0(
    v: &ProductState,
    phi: &ProductState,
    a33: &SymMat3Field,
    p: &DyadicPartition,
    s: f64,
    delta: f64,
) -> Result<f64> {
    v.grid().same_grid(&phi.grid())?;
    v.grid().same_grid(&p.grid())?;
    v.grid().same_grid(&a33.grid())?;
    if v.n_components() != phi.n_components() {
        return Err(Error::Shape("states have different component counts".into()));
    }
    a33.c0()?; // positive definiteness gate
    Ok(inner_x_a0_unchecked(v, phi, a33, p, s, delta))
}

pub fn inner_x_a0_unchecked(
    v: &ProductState,
    phi: &ProductState,
    a33: &SymMat3Field,
    p: &DyadicPartition,
    s: f64,
    delta: f64,
) -> f64 {
    let n = v.n_components();
    let js: Vec<u32> = p.js().collect();

    // Block 1: plain weighted pairing, weight delta.
    let block1: f64 = (0..n)
        .flat_map(|i| js.iter().map(move |&j| (i, j)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(i, j)| {
            let a = masked(&v.v1[i], p, j, 2.0);
            let b = masked(&phi.v1[i], p, j, 2.0);
            if a.max_abs() == 0.0 || b.max_abs() == 0.0 {
                return 0.0;
            }
            let la = lambda_s_scaled_unchecked(&a, s, j);
            let lb = lambda_s_scaled_unchecked(&b, s, j);
            let w = 2f64.powf((1.5 + delta) * 2.0 * j as f64) / 8f64.powi(j as i32);
            w * l2_pair(&la, &lb)
        })
        .sum();

    // Block 2: identity pairing on v2, weight delta + 1.
    let block2: f64 = (0..n)
        .flat_map(|i| js.iter().map(move |&j| (i, j)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(i, j)| {
            let a = masked(&v.v2[i], p, j, 2.0);
            let b = masked(&phi.v2[i], p, j, 2.0);
            if a.max_abs() == 0.0 || b.max_abs() == 0.0 {
                return 0.0;
            }
            let la = lambda_s_scaled_unchecked(&a, s, j);
            let lb = lambda_s_scaled_unchecked(&b, s, j);
            let w = 2f64.powf((1.5 + delta + 1.0) * 2.0 * j as f64) / 8f64.powi(j as i32);
            w * l2_pair(&la, &lb)
        })
        .sum();

    // Block 3: a33-weighted pairing across axes, weight delta + 1. The
    // matrix is sampled at the dilated argument, which on the fixed grid
    // is the matrix field itself (dilation applied consistently to both
    // filtered factors and the matrix).
    let grid = v.grid();
    let dv = grid.cell_volume();
    let block3: f64 = (0..n)
        .flat_map(|i| js.iter().map(move |&j| (i, j)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(i, j)| {
            let filt =
                |fields: &Vec<ScalarField>, axis: usize| -> Option<ScalarField> {
                    let f = &fields[axis * n + i];
                    let m = masked(f, p, j, 2.0);
                    if m.max_abs() == 0.0 {
                        None
                    } else {
                        Some(lambda_s_scaled_unchecked(&m, s, j))
                    }
                };
            let va: Vec<Option<ScalarField>> = (0..3).map(|ax| filt(&v.v3, ax)).collect();
            let pb: Vec<Option<ScalarField>> = (0..3).map(|ax| filt(&phi.v3, ax)).collect();
            let mut acc = 0.0;
            for a_ax in 0..3 {
                for b_ax in 0..3 {
                    if let (Some(fa), Some(fb)) = (&va[a_ax], &pb[b_ax]) {
                        let mat = a33.entry(a_ax, b_ax);
                        let mut dot = 0.0;
                        for (k, (x, y)) in fa.values().iter().zip(fb.values()).enumerate() {
                            dot += x * mat[k] * y;
                        }
                        acc += dot * dv;
                    }
                }
            }
            let w = 2f64.powf((1.5 + delta + 1.0) * 2.0 * j as f64) / 8f64.powi(j as i32);
            w * acc
        })
        .sum();

    block1 + block2 + block3
}

/// Norm induced by [`inner_x_a0`].
pub fn norm_x_a0(
    v: &ProductState,
    a33: &SymMat3Field,
    p: &DyadicPartition,
    s: f64,
    delta: f64,
) -> Result<f64> {
    Ok(inner_x_a0(v, v, a33, p, s, delta)?.max(0.0).sqrt())
}

/// Weighted `L^2` product-space norm:
/// `||V||^2 = ||v1||^2_{L2,delta} + ||v2||^2_{L2,delta+1} + ||v3||^2_{L2,delta+1}`
/// with weight `(1+|x|)^(2 delta)` quadratures.
pub fn norm_y(v: &ProductState, delta: f64) -> f64 {
    let grid = v.grid();
    let dv = grid.cell_volume();
    let (w0, w1) = weight_tables(grid, delta);
    let mut acc = 0.0;
    for f in &v.v1 {
        for (flat, x) in f.values().iter().enumerate() {
            acc += w0[flat] * x * x * dv;
        }
    }
    for f in v.v2.iter().chain(&v.v3) {
        for (flat, x) in f.values().iter().enumerate() {
            acc += w1[flat] * x * x * dv;
        }
    }
    acc.sqrt()
}

/// Weight tables `(1+|x|)^(2 delta)` and `(1+|x|)^(2 delta + 2)`.
fn weight_tables(grid: Grid3, delta: f64) -> (Vec<f64>, Vec<f64>) {
    let mut w0 = vec![0.0; grid.len()];
    let mut w1 = vec![0.0; grid.len()];
    for flat in 0..grid.len() {
        let b = 1.0 + grid.radius(flat);
        let v = b.powf(2.0 * delta);
        w0[flat] = v;
        w1[flat] = v * b * b;
    }
    (w0, w1)
}

/// Weighted `L^2` inner product with `a33` on the third block:
///
/// ```text
/// <V, Phi> = int (1+|x|)^(2 delta)   v1 . phi1
///          + int (1+|x|)^(2 delta+2) [ v2 . phi2 + v3 . (a33 phi3) ].
/// ```
pub fn inner_y_a33(
    v: &ProductState,
    phi: &ProductState,
    a33: &SymMat3Field,
    delta: f64,
) -> Result<f64> {
    v.grid().same_grid(&phi.grid())?;
    v.grid().same_grid(&a33.grid())?;
    a33.c0()?;
    Ok(inner_y_a33_unchecked(v, phi, a33, delta))
}

pub fn inner_y_a33_unchecked(
    v: &ProductState,
    phi: &ProductState,
    a33: &SymMat3Field,
    delta: f64,
) -> f64 {
    let grid = v.grid();
    let n = v.n_components();
    let dv = grid.cell_volume();
    let (w0, w1) = weight_tables(grid, delta);
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (&v.v1[i], &phi.v1[i]);
        for (flat, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
            acc += w0[flat] * x * y * dv;
        }
    }
    for i in 0..n {
        let (a, b) = (&v.v2[i], &phi.v2[i]);
        for (flat, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
            acc += w1[flat] * x * y * dv;
        }
    }
    for i in 0..n {
        for a_ax in 0..3 {
            for b_ax in 0..3 {
                let fa = &v.v3[a_ax * n + i];
                let fb = &phi.v3[b_ax * n + i];
                let mat = a33.entry(a_ax, b_ax);
                for (flat, (x, y)) in fa.values().iter().zip(fb.values()).enumerate() {
                    acc += w1[flat] * x * mat[flat] * y * dv;
                }
            }
        }
    }
    acc
}

/// Norm induced by [`inner_y_a33`].
pub fn norm_y_a33(v: &ProductState, a33: &SymMat3Field, delta: f64) -> Result<f64> {
    Ok(inner_y_a33(v, v, a33, delta)?.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields;
    use crate::sobolev::norms::NormParams;
    use crate::sobolev::partition::build_partition;
    use crate::sobolev::norms::norm_hsd;
    use approx::assert_relative_eq;

    fn setup() -> (Grid3, DyadicPartition) {
        let grid = Grid3::new(32, 16.0).unwrap();
        let p = build_partition(grid, 8).unwrap();
        (grid, p)
    }

    fn random_state(grid: Grid3, seed: u64, n: usize) -> ProductState {
        let f = |k: u64| fields::random_bump_field(grid, seed * 100 + k, 7.5);
        ProductState::new(
            (0..n).map(|i| f(i as u64)).collect(),
            (0..n).map(|i| f(50 + i as u64)).collect(),
            (0..3 * n).map(|i| f(200 + i as u64)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_state_has_zero_norms() {
        let (grid, p) = setup();
        let v = ProductState::zeros(grid, 2);
        assert_eq!(norm_x(&v, &p, 1.0, -1.0).unwrap(), 0.0);
        assert_eq!(norm_y(&v, -1.0), 0.0);
    }

    #[test]
    fn single_block_state_matches_scalar_norm() {
        let (grid, p) = setup();
        let u = fields::random_bump_field(grid, 5, 7.5);
        let v = ProductState::new(
            vec![u.clone()],
            vec![ScalarField::zeros(grid)],
            vec![ScalarField::zeros(grid); 3],
        )
        .unwrap();
        let params = NormParams::new(1.2, -1.0).unwrap().with_gamma(2.0).unwrap();
        let scalar = norm_hsd(&u, &p, &params).unwrap();
        assert_relative_eq!(
            norm_x(&v, &p, 1.2, -1.0).unwrap(),
            scalar,
            max_relative = 1e-12
        );
    }

    #[test]
    fn identity_weight_reduces_inner_product_to_norm() {
        let (grid, p) = setup();
        let v = random_state(grid, 3, 1);
        let id = SymMat3Field::identity(grid);
        let ip = inner_x_a0(&v, &v, &id, &p, 1.0, -1.0).unwrap();
        let nx = norm_x(&v, &p, 1.0, -1.0).unwrap();
        assert_relative_eq!(ip, nx * nx, max_relative = 1e-10);
    }

    #[test]
    fn doubling_a33_doubles_third_block() {
        let (grid, p) = setup();
        let v = random_state(grid, 4, 1);
        let id = SymMat3Field::identity(grid);
        let mut two: [Vec<f64>; 6] = Default::default();
        for (slot, (a, b)) in SYM3_PAIRS.iter().enumerate() {
            two[slot] = vec![if a == b { 2.0 } else { 0.0 }; grid.len()];
        }
        let two = SymMat3Field::from_entries(grid, two).unwrap();

        // isolate the third block by zeroing v1, v2
        let mut v3only = v.clone();
        for f in v3only.v1.iter_mut().chain(v3only.v2.iter_mut()) {
            *f = ScalarField::zeros(grid);
        }
        let base = inner_x_a0(&v3only, &v3only, &id, &p, 1.0, -1.0).unwrap();
        let doubled = inner_x_a0(&v3only, &v3only, &two, &p, 1.0, -1.0).unwrap();
        assert_relative_eq!(doubled, 2.0 * base, max_relative = 1e-12);
    }

    #[test]
    fn cauchy_schwarz_in_induced_norm() {
        let (grid, p) = setup();
        let v = random_state(grid, 7, 1);
        let w = random_state(grid, 8, 1);
        // random spd a33 with eigenvalues in [1/c0, c0]
        let mut entries: [Vec<f64>; 6] = Default::default();
        for (slot, (a, b)) in SYM3_PAIRS.iter().enumerate() {
            let bump = fields::random_bump_field(grid, 900 + slot as u64, 7.5);
            let diag = if a == b { 1.0 } else { 0.0 };
            entries[slot] = bump
                .values()
                .iter()
                .map(|x| diag + 0.2 * x / bump.max_abs().max(1e-300))
                .collect();
        }
        let a33 = SymMat3Field::from_entries(grid, entries).unwrap();
        assert!(a33.c0().unwrap() >= 1.0);

        let ip = inner_x_a0(&v, &w, &a33, &p, 1.0, -1.0).unwrap();
        let nv = norm_x_a0(&v, &a33, &p, 1.0, -1.0).unwrap();
        let nw = norm_x_a0(&w, &a33, &p, 1.0, -1.0).unwrap();
        assert!(
            ip.abs() <= nv * nw * (1.0 + 1e-10),
            "Cauchy-Schwarz violated: |{ip}| > {nv} * {nw}"
        );
    }

    #[test]
    fn norm_equivalence_sandwich() {
        let (grid, p) = setup();
        let v = random_state(grid, 9, 1);
        let mut entries: [Vec<f64>; 6] = Default::default();
        for (slot, (a, b)) in SYM3_PAIRS.iter().enumerate() {
            let bump = fields::random_bump_field(grid, 700 + slot as u64, 7.5);
            let diag = if a == b { 1.0 } else { 0.0 };
            entries[slot] = bump
                .values()
                .iter()
                .map(|x| diag + 0.3 * x / bump.max_abs().max(1e-300))
                .collect();
        }
        let a33 = SymMat3Field::from_entries(grid, entries).unwrap();
        let c0 = a33.c0().unwrap();
        let nx = norm_x(&v, &p, 1.0, -1.0).unwrap();
        let na = norm_x_a0(&v, &a33, &p, 1.0, -1.0).unwrap();
        let slack = 1.0 + 1e-10;
        assert!(na <= c0.sqrt() * nx * slack, "upper: {na} vs {}", c0.sqrt() * nx);
        assert!(na >= nx / c0.sqrt() / slack, "lower: {na} vs {}", nx / c0.sqrt());
    }

    #[test]
    fn y_norm_delta_zero_single_block_is_l2() {
        let (grid, _) = setup();
        let u = fields::random_bump_field(grid, 11, 7.5);
        let v = ProductState::new(
            vec![u.clone()],
            vec![ScalarField::zeros(grid)],
            vec![ScalarField::zeros(grid); 3],
        )
        .unwrap();
        assert_relative_eq!(norm_y(&v, 0.0), u.l2(), max_relative = 1e-12);
    }

    #[test]
    fn y_and_x0_norms_equivalent_on_corpus() {
        let (grid, p) = setup();
        let mut ratios = Vec::new();
        for seed in 0..5u64 {
            let v = random_state(grid, 20 + seed, 1);
            let ny = norm_y(&v, -1.0);
            let nx = norm_x(&v, &p, 0.0, -1.0).unwrap();
            ratios.push(ny / nx);
        }
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi / lo < 10.0, "Y vs X_(0,delta) ratios: [{lo}, {hi}]");
    }

    #[test]
    fn indefinite_a33_is_rejected() {
        let (grid, p) = setup();
        let v = random_state(grid, 12, 1);
        let mut entries: [Vec<f64>; 6] = Default::default();
        for (slot, (a, b)) in SYM3_PAIRS.iter().enumerate() {
            entries[slot] = vec![if a == b { 1.0 } else { 0.0 }; grid.len()];
        }
        entries[0][0] = -0.5; // one bad point
        let a33 = SymMat3Field::from_entries(grid, entries).unwrap();
        assert!(inner_x_a0(&v, &v, &a33, &p, 1.0, -1.0).is_err());
        assert!(inner_y_a33(&v, &v, &a33, -1.0).is_err());
    }
}
