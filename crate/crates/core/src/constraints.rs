//! Einstein constraint machinery on the initial slice: Hamiltonian and
//! momentum residuals of ADM data, the conformally-flat Lichnerowicz
//! solve, and assembly of harmonic-gauge Cauchy data.
//!
//! Constraint residuals use 2nd-order centered stencils throughout: they
//! act as independent monitors whose truncation level is the reference
//! scale for the propagation tests.

use rayon::prelude::*;

use crate::error::{Error, PointIndex, Result};
use crate::geometry::{p4, MetricField, MINKOWSKI};
use crate::grid::{derivative_axis, second_derivative, Grid3, ScalarField};

/// Symmetric 3x3 pairs in storage order (11, 12, 13, 22, 23, 33),
/// spatial indices 0..3.
pub const P3: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

const P3_LOOKUP: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

#[inline]
pub fn p3(a: usize, b: usize) -> usize {
    P3_LOOKUP[a][b]
}

/// Identity 3-metric in component order.
pub const E3: [f64; 6] = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0];

/// Riemannian 3-metric and extrinsic curvature on the slice.
#[derive(Debug, Clone)]
pub struct ADMData {
    pub grid: Grid3,
    pub h: [Vec<f64>; 6],
    pub k: [Vec<f64>; 6],
}

impl ADMData {
    pub fn flat(grid: Grid3) -> Self {
        Self {
            grid,
            h: std::array::from_fn(|c| vec![E3[c]; grid.len()]),
            k: std::array::from_fn(|_| vec![0.0; grid.len()]),
        }
    }

    /// Flat metric with constant extrinsic curvature `k * e` (hand-value
    /// test data; not asymptotically flat).
    pub fn constant_k(grid: Grid3, k: f64) -> Self {
        let mut d = Self::flat(grid);
        for (slot, &(a, b)) in P3.iter().enumerate() {
            if a == b {
                d.k[slot] = vec![k; grid.len()];
            }
        }
        d
    }

    #[inline]
    pub fn h_at(&self, flat: usize) -> [f64; 6] {
        std::array::from_fn(|c| self.h[c][flat])
    }

    #[inline]
    pub fn k_at(&self, flat: usize) -> [f64; 6] {
        std::array::from_fn(|c| self.k[c][flat])
    }

    /// Positive definiteness of `h` at every point (leading minors).
    pub fn validate(&self) -> Result<()> {
        for flat in 0..self.grid.len() {
            let h = self.h_at(flat);
            let d1 = h[0];
            let d2 = h[0] * h[3] - h[1] * h[1];
            let d3 = h[0] * (h[3] * h[5] - h[4] * h[4]) - h[1] * (h[1] * h[5] - h[4] * h[2])
                + h[2] * (h[1] * h[4] - h[3] * h[2]);
            if d1 <= 0.0 || d2 <= 0.0 || d3 <= 0.0 {
                let (ix, iy, iz) = self.grid.point(flat);
                return Err(Error::Precondition(format!(
                    "3-metric not positive definite at ({ix}, {iy}, {iz}): minors {d1:.3e}, {d2:.3e}, {d3:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// Support radius of the deviation `(h - e, K)`.
    pub fn deviation_support_radius(&self) -> f64 {
        let mut r = 0.0f64;
        for (slot, buf) in self.h.iter().enumerate() {
            let dev: Vec<f64> = buf.iter().map(|v| v - E3[slot]).collect();
            let f = ScalarField::from_values(self.grid, dev).unwrap();
            r = r.max(f.support_radius());
        }
        for buf in &self.k {
            let f = ScalarField::from_values(self.grid, buf.clone()).unwrap();
            r = r.max(f.support_radius());
        }
        r
    }
}

#[inline]
fn inv3(h: &[f64; 6]) -> [f64; 6] {
    let det = h[0] * (h[3] * h[5] - h[4] * h[4]) - h[1] * (h[1] * h[5] - h[4] * h[2])
        + h[2] * (h[1] * h[4] - h[3] * h[2]);
    let inv_det = 1.0 / det;
    [
        (h[3] * h[5] - h[4] * h[4]) * inv_det,
        (h[2] * h[4] - h[1] * h[5]) * inv_det,
        (h[1] * h[4] - h[2] * h[3]) * inv_det,
        (h[0] * h[5] - h[2] * h[2]) * inv_det,
        (h[1] * h[2] - h[0] * h[4]) * inv_det,
        (h[0] * h[3] - h[1] * h[1]) * inv_det,
    ]
}

/// Order of the constraint-monitor stencils.
pub const CONSTRAINT_STENCIL_ORDER: usize = 2;

struct SliceDerivs {
    /// `d1[a][pair] = d_a h_(pair)`
    d1: [[Vec<f64>; 6]; 3],
    /// `d2[p3(a,b)][pair] = d_a d_b h_(pair)`
    d2: [[Vec<f64>; 6]; 6],
}

fn slice_derivs(grid: Grid3, h: &[Vec<f64>; 6]) -> SliceDerivs {
    let fields: Vec<ScalarField> = h
        .iter()
        .map(|buf| ScalarField::from_values(grid, buf.clone()).unwrap())
        .collect();
    let d1: [[Vec<f64>; 6]; 3] = std::array::from_fn(|a| {
        std::array::from_fn(|c| {
            derivative_axis(&fields[c], a, CONSTRAINT_STENCIL_ORDER).into_values()
        })
    });
    let d2: [[Vec<f64>; 6]; 6] = std::array::from_fn(|slot| {
        let (a, b) = P3[slot];
        std::array::from_fn(|c| {
            second_derivative(&fields[c], a, b, CONSTRAINT_STENCIL_ORDER).into_values()
        })
    });
    SliceDerivs { d1, d2 }
}

/// Christoffel symbols of the first kind at a point:
/// `[c][pair(a,b)] = (d_a h_cb + d_b h_ca - d_c h_ab) / 2`.
fn christoffel3_first(h1: &[[f64; 6]; 3]) -> [[f64; 6]; 3] {
    let mut out = [[0.0; 6]; 3];
    for c in 0..3 {
        for (slot, &(a, b)) in P3.iter().enumerate() {
            out[c][slot] = 0.5 * (h1[a][p3(c, b)] + h1[b][p3(c, a)] - h1[c][p3(a, b)]);
        }
    }
    out
}

/// Pointwise Hamiltonian and momentum residual kernels share these
/// intermediates.
struct PointGeom {
    hinv: [f64; 6],
    gamma_up: [[f64; 6]; 3],
    ricci_scalar: f64,
}

fn point_geom(h: &[f64; 6], h1: &[[f64; 6]; 3], h2: &[[f64; 6]; 6]) -> PointGeom {
    let hinv = inv3(h);
    let first = christoffel3_first(h1);
    let mut gamma_up = [[0.0; 6]; 3];
    for c in 0..3 {
        for slot in 0..6 {
            let mut acc = 0.0;
            for d in 0..3 {
                acc += hinv[p3(c, d)] * first[d][slot];
            }
            gamma_up[c][slot] = acc;
        }
    }
    // derivatives of the inverse: d_a h^(cd) = -h^(ce) h^(df) d_a h_ef
    let mut dinv = [[0.0; 6]; 3];
    for a in 0..3 {
        for (slot, &(c, d)) in P3.iter().enumerate() {
            let mut acc = 0.0;
            for e in 0..3 {
                for f in 0..3 {
                    acc -= hinv[p3(c, e)] * hinv[p3(d, f)] * h1[a][p3(e, f)];
                }
            }
            dinv[a][slot] = acc;
        }
    }
    let mut tr = [0.0; 3];
    let mut dv = [0.0; 3];
    for m in 0..3 {
        for n in 0..3 {
            tr[m] += gamma_up[n][p3(n, m)];
            dv[m] += dinv[n][p3(n, m)];
        }
    }
    // Ricci tensor of h, explicit second-derivative form
    let mut ricci = [0.0; 6];
    for (slot, &(g, d)) in P3.iter().enumerate() {
        let mut s = 0.0;
        for n in 0..3 {
            for m in 0..3 {
                s += 0.5
                    * hinv[p3(n, m)]
                    * (h2[p3(n, g)][p3(m, d)] + h2[p3(n, d)][p3(m, g)]
                        - h2[p3(n, m)][p3(g, d)]
                        - h2[p3(g, d)][p3(m, n)]);
            }
        }
        for m in 0..3 {
            s += dv[m] * first_kind(h1, m, slot);
            s += tr[m] * gamma_up[m][slot];
        }
        for n in 0..3 {
            for m in 0..3 {
                s -= 0.5 * dinv[d][p3(n, m)] * h1[g][p3(m, n)];
                s -= gamma_up[n][p3(d, m)] * gamma_up[m][p3(g, n)];
            }
        }
        ricci[slot] = s;
    }
    let mut scalar = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            scalar += hinv[p3(a, b)] * ricci[p3(a, b)];
        }
    }
    PointGeom {
        hinv,
        gamma_up,
        ricci_scalar: scalar,
    }
}

#[inline]
fn first_kind(h1: &[[f64; 6]; 3], c: usize, slot: usize) -> f64 {
    let (a, b) = P3[slot];
    0.5 * (h1[a][p3(c, b)] + h1[b][p3(c, a)] - h1[c][p3(a, b)])
}

/// Hamiltonian constraint residual `R(h) - |K|^2 + (tr K)^2` pointwise.
pub fn hamiltonian_residual(data: &ADMData) -> Result<ScalarField> {
    data.validate()?;
    let grid = data.grid;
    let sd = slice_derivs(grid, &data.h);
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let h = data.h_at(flat);
            let k = data.k_at(flat);
            let h1: [[f64; 6]; 3] = std::array::from_fn(|a| std::array::from_fn(|c| sd.d1[a][c][flat]));
            let h2: [[f64; 6]; 6] = std::array::from_fn(|s| std::array::from_fn(|c| sd.d2[s][c][flat]));
            let geom = point_geom(&h, &h1, &h2);
            let mut k_sq = 0.0;
            let mut tr_k = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    tr_k += geom.hinv[p3(a, b)] * k[p3(a, b)];
                    for c in 0..3 {
                        for d in 0..3 {
                            k_sq += geom.hinv[p3(a, c)]
                                * geom.hinv[p3(b, d)]
                                * k[p3(a, b)]
                                * k[p3(c, d)];
                        }
                    }
                }
            }
            geom.ricci_scalar - k_sq + tr_k * tr_k
        })
        .collect();
    ScalarField::from_values(grid, values)
}

/// Momentum constraint residual `D_a K^a_b - D_b (tr K)`, three fields.
pub fn momentum_residual(data: &ADMData) -> Result<[ScalarField; 3]> {
    data.validate()?;
    let grid = data.grid;
    let len = grid.len();
    let sd = slice_derivs(grid, &data.h);

    // mixed components K^a_b and trace, as fields
    let mut mixed: [[Vec<f64>; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; len]));
    let mut trace = vec![0.0; len];
    for flat in 0..len {
        let h = data.h_at(flat);
        let k = data.k_at(flat);
        let hinv = inv3(&h);
        for a in 0..3 {
            for b in 0..3 {
                let mut acc = 0.0;
                for c in 0..3 {
                    acc += hinv[p3(a, c)] * k[p3(c, b)];
                }
                mixed[a][b][flat] = acc;
            }
        }
        for a in 0..3 {
            trace[flat] += mixed[a][a][flat];
        }
    }
    // derivatives of mixed components and trace
    let dmixed: [[Vec<f64>; 3]; 3] = std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            let f = ScalarField::from_values(grid, mixed[a][b].clone()).unwrap();
            derivative_axis(&f, a, CONSTRAINT_STENCIL_ORDER).into_values()
        })
    });
    let trace_f = ScalarField::from_values(grid, trace).unwrap();
    let dtrace: [Vec<f64>; 3] = std::array::from_fn(|b| {
        derivative_axis(&trace_f, b, CONSTRAINT_STENCIL_ORDER).into_values()
    });

    let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; len]);
    for flat in 0..len {
        let h = data.h_at(flat);
        let h1: [[f64; 6]; 3] = std::array::from_fn(|a| std::array::from_fn(|c| sd.d1[a][c][flat]));
        let hinv = inv3(&h);
        let first = christoffel3_first(&h1);
        let mut gamma_up = [[0.0; 6]; 3];
        for c in 0..3 {
            for slot in 0..6 {
                let mut acc = 0.0;
                for d in 0..3 {
                    acc += hinv[p3(c, d)] * first[d][slot];
                }
                gamma_up[c][slot] = acc;
            }
        }
        let m_at = |a: usize, b: usize| mixed[a][b][flat];
        for b in 0..3 {
            let mut div = 0.0;
            for a in 0..3 {
                div += dmixed[a][b][flat];
                for c in 0..3 {
                    div += gamma_up[a][p3(a, c)] * m_at(c, b);
                    div -= gamma_up[c][p3(a, b)] * m_at(a, c);
                }
            }
            out[b][flat] = div - dtrace[b][flat];
        }
    }
    Ok([
        ScalarField::from_values(grid, out[0].clone())?,
        ScalarField::from_values(grid, out[1].clone())?,
        ScalarField::from_values(grid, out[2].clone())?,
    ])
}

/// Max of `|field|` over points at least `ring` cells from every face
/// and (optionally) outside radius `r_min`.
pub fn interior_max(field: &ScalarField, ring: usize, r_min: f64, r_max: f64) -> f64 {
    let grid = field.grid();
    let n = grid.n();
    let mut m = 0.0f64;
    for (flat, v) in field.values().iter().enumerate() {
        let (ix, iy, iz) = grid.point(flat);
        if [ix, iy, iz].iter().any(|&i| i < ring || i >= n - ring) {
            continue;
        }
        let r = grid.radius(flat);
        if r < r_min || r > r_max {
            continue;
        }
        m = m.max(v.abs());
    }
    m
}

/// Volume-weighted RMS of `|field|` over the same window as
/// [`interior_max`]; the measure used for self-convergence ratios (the
/// pointwise max sits at the inner annulus edge where the resolution is
/// marginal and the asymptotic rate is not yet visible).
pub fn interior_rms(field: &ScalarField, ring: usize, r_min: f64, r_max: f64) -> f64 {
    let grid = field.grid();
    let n = grid.n();
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for (flat, v) in field.values().iter().enumerate() {
        let (ix, iy, iz) = grid.point(flat);
        if [ix, iy, iz].iter().any(|&i| i < ring || i >= n - ring) {
            continue;
        }
        let r = grid.radius(flat);
        if r < r_min || r > r_max {
            continue;
        }
        acc += v * v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        (acc / count as f64).sqrt()
    }
}

// ---------------------------------------------------------------------
// Transverse-traceless seed package
// ---------------------------------------------------------------------

const LEVI: [[[f64; 3]; 3]; 3] = {
    let mut e = [[[0.0; 3]; 3]; 3];
    e[0][1][2] = 1.0;
    e[1][2][0] = 1.0;
    e[2][0][1] = 1.0;
    e[0][2][1] = -1.0;
    e[2][1][0] = -1.0;
    e[1][0][2] = -1.0;
    e
};

/// Order of the stencils used to build (and check) the seed package.
const SEED_STENCIL_ORDER: usize = 4;

/// Trace-free divergence-free extrinsic-curvature seed built as a double
/// curl of a windowed Gaussian tensor potential. Both identities hold to
/// round-off with respect to the same centered stencils because the
/// antisymmetric contractions cancel exactly for commuting difference
/// operators.
pub fn gaussian_tt_seed(grid: Grid3, amplitude: f64, sigma: f64, center: [f64; 3]) -> [Vec<f64>; 6] {
    // tensor potential M: two diagonal Gaussian slots
    let g1 = crate::fields::gaussian_bump(grid, center, sigma, 1.0);
    let g2 = crate::fields::gaussian_bump(
        grid,
        [center[0], center[1], center[2]],
        sigma * 1.3,
        -0.7,
    );
    let zero = ScalarField::zeros(grid);
    let m: [[&ScalarField; 3]; 3] = [[&g1, &zero, &zero], [&zero, &g2, &zero], [&zero, &zero, &zero]];

    // S_qs = eps_qab D_a M_bs + eps_sab D_a M_bq
    let dm: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|a| {
            (0..9)
                .map(|bs| {
                    let (b, s) = (bs / 3, bs % 3);
                    derivative_axis(m[b][s], a, SEED_STENCIL_ORDER).into_values()
                })
                .collect()
        })
        .collect();
    let len = grid.len();
    let mut s_full: Vec<Vec<f64>> = vec![vec![0.0; len]; 9];
    for q in 0..3 {
        for s in 0..3 {
            let dst = &mut s_full[q * 3 + s];
            for a in 0..3 {
                for b in 0..3 {
                    let e1 = LEVI[q][a][b];
                    let e2 = LEVI[s][a][b];
                    if e1 != 0.0 {
                        for (d, v) in dst.iter_mut().zip(&dm[a][b * 3 + s]) {
                            *d += e1 * v;
                        }
                    }
                    if e2 != 0.0 {
                        for (d, v) in dst.iter_mut().zip(&dm[a][b * 3 + q]) {
                            *d += e2 * v;
                        }
                    }
                }
            }
        }
    }
    // T[r][qs] = D_r S_qs
    let dt: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|r| {
            (0..9)
                .map(|qs| {
                    let f = ScalarField::from_values(grid, s_full[qs].clone()).unwrap();
                    derivative_axis(&f, r, SEED_STENCIL_ORDER).into_values()
                })
                .collect()
        })
        .collect();
    // K_ij = eps_ipq eps_jrs D_p T[r][qs]
    let mut k: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; len]);
    for (slot, &(i, j)) in P3.iter().enumerate() {
        for p in 0..3 {
            for q in 0..3 {
                let e1 = LEVI[i][p][q];
                if e1 == 0.0 {
                    continue;
                }
                for r in 0..3 {
                    for s in 0..3 {
                        let e2 = LEVI[j][r][s];
                        if e2 == 0.0 {
                            continue;
                        }
                        let f = ScalarField::from_values(grid, dt[r][q * 3 + s].clone()).unwrap();
                        let d = derivative_axis(&f, p, SEED_STENCIL_ORDER).into_values();
                        for (dst, v) in k[slot].iter_mut().zip(&d) {
                            *dst += e1 * e2 * v;
                        }
                    }
                }
            }
        }
    }
    // normalize to the requested amplitude
    let mut max = 0.0f64;
    for buf in &k {
        for v in buf {
            max = max.max(v.abs());
        }
    }
    if max > 0.0 {
        let scale = amplitude / max;
        for buf in &mut k {
            for v in buf.iter_mut() {
                *v *= scale;
            }
        }
    }
    k
}

/// Max trace and divergence of a seed, measured with the construction
/// stencils.
pub fn tt_seed_residuals(grid: Grid3, k: &[Vec<f64>; 6]) -> (f64, f64) {
    let mut trace_max = 0.0f64;
    for flat in 0..grid.len() {
        trace_max = trace_max.max((k[p3(0, 0)][flat] + k[p3(1, 1)][flat] + k[p3(2, 2)][flat]).abs());
    }
    let mut div_max = 0.0f64;
    for b in 0..3 {
        let mut div = vec![0.0; grid.len()];
        for a in 0..3 {
            let f = ScalarField::from_values(grid, k[p3(a, b)].clone()).unwrap();
            let d = derivative_axis(&f, a, SEED_STENCIL_ORDER).into_values();
            for (dst, v) in div.iter_mut().zip(&d) {
                *dst += v;
            }
        }
        for v in &div {
            div_max = div_max.max(v.abs());
        }
    }
    (trace_max, div_max)
}

// ---------------------------------------------------------------------
// Lichnerowicz solve
// ---------------------------------------------------------------------

/// Outer boundary closure for the elliptic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterBc {
    /// `phi = 1` on the box faces.
    Dirichlet,
    /// Radial decay closure `d phi/d n + (phi - 1) x_n / r^2 = 0`,
    /// exact for the `1 + c/r` far field.
    Robin,
}

/// Free data and solve parameters of the conformally-flat, maximal
/// conformal problem.
#[derive(Debug, Clone)]
pub struct ConformalSeed {
    pub grid: Grid3,
    /// Trace-free divergence-free free data, flat indices.
    pub kbar: [Vec<f64>; 6],
    /// Excision mass; with `excision_radius > 0` the excised ball gets
    /// the closed-form boundary values `phi = 1 + M/(2r)`.
    pub mass: f64,
    pub excision_radius: f64,
    pub outer_bc: OuterBc,
}

impl ConformalSeed {
    pub fn zero(grid: Grid3) -> Self {
        Self {
            grid,
            kbar: std::array::from_fn(|_| vec![0.0; grid.len()]),
            mass: 0.0,
            excision_radius: 0.0,
            outer_bc: OuterBc::Dirichlet,
        }
    }

    pub fn excision(grid: Grid3, mass: f64, excision_radius: f64) -> Self {
        Self {
            grid,
            kbar: std::array::from_fn(|_| vec![0.0; grid.len()]),
            mass,
            excision_radius,
            outer_bc: OuterBc::Robin,
        }
    }

    pub fn gaussian(grid: Grid3, amplitude: f64, sigma: f64, center: [f64; 3]) -> Self {
        Self {
            grid,
            kbar: gaussian_tt_seed(grid, amplitude, sigma, center),
            mass: 0.0,
            excision_radius: 0.0,
            outer_bc: OuterBc::Robin,
        }
    }

    fn validate(&self) -> Result<()> {
        let (trace, div) = tt_seed_residuals(self.grid, &self.kbar);
        let scale = self
            .kbar
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-10 * scale.max(1e-300);
        if trace > tol {
            return Err(Error::Precondition(format!(
                "free data not trace-free: max trace {trace:.3e} (scale {scale:.3e})"
            )));
        }
        if div > 1e-8 * scale.max(1e-300) {
            return Err(Error::Precondition(format!(
                "free data not divergence-free: max divergence {div:.3e} (scale {scale:.3e})"
            )));
        }
        if self.excision_radius > 0.0 && self.excision_radius < 2.0 * self.grid.dx() {
            return Err(Error::Precondition(
                "excision radius must span at least two cells".into(),
            ));
        }
        Ok(())
    }
}

/// Solve diagnostics.
#[derive(Debug, Clone)]
pub struct LichnerowiczReport {
    pub phi: ScalarField,
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum RowKind {
    Interior,
    Excised,
    /// (axis, +1 high face / -1 low face)
    Outer(usize, i64),
}

struct EllipticProblem {
    grid: Grid3,
    kind: Vec<RowKind>,
    /// `|Kbar|^2 / 8` source coefficient
    source: Vec<f64>,
    /// Dirichlet values on excised points
    excised_value: Vec<f64>,
    outer_bc: OuterBc,
}

impl EllipticProblem {
    fn new(seed: &ConformalSeed) -> Self {
        let grid = seed.grid;
        let n = grid.n();
        let len = grid.len();
        let mut kind = vec![RowKind::Interior; len];
        let mut excised_value = vec![0.0; len];
        let mut source = vec![0.0; len];
        for flat in 0..len {
            let (ix, iy, iz) = grid.point(flat);
            let pos = grid.position(flat);
            let r = grid.radius(flat);
            if seed.excision_radius > 0.0 && r <= seed.excision_radius {
                kind[flat] = RowKind::Excised;
                excised_value[flat] = seed.mass / (2.0 * r.max(0.5 * seed.excision_radius));
                continue;
            }
            let on_face = [
                (0usize, ix == 0, ix == n - 1),
                (1, iy == 0, iy == n - 1),
                (2, iz == 0, iz == n - 1),
            ];
            let mut face: Option<(usize, i64)> = None;
            let mut best = -1.0f64;
            for (axis, lo, hi) in on_face {
                if lo || hi {
                    let mag = pos[axis].abs();
                    if mag > best {
                        best = mag;
                        face = Some((axis, if hi { 1 } else { -1 }));
                    }
                }
            }
            if let Some((axis, side)) = face {
                kind[flat] = RowKind::Outer(axis, side);
            } else {
                let mut ksq = 0.0;
                for (slot, &(a, b)) in P3.iter().enumerate() {
                    let mult = if a == b { 1.0 } else { 2.0 };
                    ksq += mult * seed.kbar[slot][flat] * seed.kbar[slot][flat];
                }
                source[flat] = ksq / 8.0;
            }
        }
        Self {
            grid,
            kind,
            source,
            excised_value,
            outer_bc: seed.outer_bc,
        }
    }

    /// Nonlinear residual `F(u)` with `phi = 1 + u`.
    fn residual(&self, u: &[f64]) -> Vec<f64> {
        self.apply_rows(u, |flat, lap, uv| {
            let phi = 1.0 + uv;
            lap + self.source[flat] * phi.powi(-7)
        })
    }

    /// Jacobian action `J(u) v`.
    fn jacobian_apply(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let coef: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(flat, uv)| -7.0 * self.source[flat] * (1.0 + uv).powi(-8))
            .collect();
        self.apply_rows(v, |flat, lap, vv| lap + coef[flat] * vv)
    }

    /// Diagonal of the Jacobian, used as the Jacobi preconditioner (the
    /// row families have very different scales and signs).
    fn jacobian_diag(&self, u: &[f64]) -> Vec<f64> {
        let grid = self.grid;
        let dx = grid.dx();
        let dx2 = dx * dx;
        (0..grid.len())
            .map(|flat| match self.kind[flat] {
                RowKind::Excised => 1.0,
                RowKind::Interior => {
                    -6.0 / dx2 - 7.0 * self.source[flat] * (1.0 + u[flat]).powi(-8)
                }
                RowKind::Outer(axis, side) => match self.outer_bc {
                    OuterBc::Dirichlet => 1.0,
                    OuterBc::Robin => {
                        let pos = grid.position(flat);
                        let r2 = pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2];
                        side as f64 * 3.0 / (2.0 * dx) + pos[axis] / r2
                    }
                },
            })
            .collect()
    }

    fn apply_rows(&self, u: &[f64], interior: impl Fn(usize, f64, f64) -> f64 + Sync) -> Vec<f64> {
        let grid = self.grid;
        let dx = grid.dx();
        let dx2 = dx * dx;
        (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                match self.kind[flat] {
                    RowKind::Excised => u[flat] - self.excised_value[flat],
                    RowKind::Interior => {
                        let (ix, iy, iz) = grid.point(flat);
                        let lap = (u[grid.idx(ix + 1, iy, iz)]
                            + u[grid.idx(ix - 1, iy, iz)]
                            + u[grid.idx(ix, iy + 1, iz)]
                            + u[grid.idx(ix, iy - 1, iz)]
                            + u[grid.idx(ix, iy, iz + 1)]
                            + u[grid.idx(ix, iy, iz - 1)]
                            - 6.0 * u[flat])
                            / dx2;
                        interior(flat, lap, u[flat])
                    }
                    RowKind::Outer(axis, side) => match self.outer_bc {
                        OuterBc::Dirichlet => u[flat],
                        OuterBc::Robin => {
                            let (ix, iy, iz) = grid.point(flat);
                            let mut idx = [ix as i64, iy as i64, iz as i64];
                            let step = -side; // one-sided into the domain
                            let get = |ids: [i64; 3]| {
                                u[grid.idx(ids[0] as usize, ids[1] as usize, ids[2] as usize)]
                            };
                            let u0 = u[flat];
                            idx[axis] += step;
                            let u1 = get(idx);
                            idx[axis] += step;
                            let u2 = get(idx);
                            // one-sided 2nd-order d/dx_axis at the face:
                            // forward stencil on the low face, mirrored
                            // on the high face
                            let deriv =
                                -(side as f64) * (-3.0 * u0 + 4.0 * u1 - u2) / (2.0 * dx);
                            let pos = grid.position(flat);
                            let r2 = pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2];
                            deriv + u0 * pos[axis] / r2
                        }
                    },
                }
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGStab for the (non-symmetric) Jacobian
/// systems; `diag` is the row diagonal the system is scaled by.
fn bicgstab(
    raw_apply: impl Fn(&[f64]) -> Vec<f64>,
    diag: &[f64],
    b_raw: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|d| if d.abs() > 1e-300 { 1.0 / d } else { 1.0 })
        .collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = raw_apply(v);
        for (o, s) in out.iter_mut().zip(&inv_diag) {
            *o *= s;
        }
        out
    };
    let b: Vec<f64> = b_raw.iter().zip(&inv_diag).map(|(v, s)| v * s).collect();
    let b = &b[..];
    let nn = b.len();
    let mut x = vec![0.0; nn];
    let mut r: Vec<f64> = b.to_vec();
    let r_hat = r.clone();
    let bnorm = norm2(b).max(1e-300);
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; nn];
    let mut p = vec![0.0; nn];
    for _ in 0..max_iter {
        if norm2(&r) / bnorm < tol {
            return Ok(x);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            return Err(Error::NonConvergence("BiCGStab breakdown (rho)".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..nn {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = apply(&p);
        let denom = dot(&r_hat, &v);
        if denom.abs() < 1e-300 {
            return Err(Error::NonConvergence("BiCGStab breakdown (alpha)".into()));
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) / bnorm < tol {
            for i in 0..nn {
                x[i] += alpha * p[i];
            }
            return Ok(x);
        }
        let t = apply(&s);
        let tt = dot(&t, &t);
        if tt.abs() < 1e-300 {
            return Err(Error::NonConvergence("BiCGStab breakdown (omega)".into()));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..nn {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    Err(Error::NonConvergence(format!(
        "BiCGStab did not reach tolerance {tol} in {max_iter} iterations (residual {:.3e})",
        norm2(&r) / bnorm
    )))
}

/// Newton iterations on the flat-space Lichnerowicz equation
/// `Delta phi = -|Kbar|^2 phi^-7 / 8` (vacuum, maximal slice), with up
/// to five step halvings on residual increase. Returns the conformally
/// scaled physical data `h = phi^4 e`, `K = phi^-2 Kbar`.
pub fn lichnerowicz_solve(seed: &ConformalSeed) -> Result<(ADMData, LichnerowiczReport)> {
    seed.validate()?;
    let problem = EllipticProblem::new(seed);
    let grid = seed.grid;
    let len = grid.len();

    let mut u = vec![0.0; len];
    // excised rows start at their boundary values
    for flat in 0..len {
        if problem.kind[flat] == RowKind::Excised {
            u[flat] = problem.excised_value[flat];
        }
    }
    let mut res = problem.residual(&u);
    let mut res_norm = norm2(&res);
    let scale = {
        let src = problem.source.iter().cloned().fold(0.0f64, f64::max);
        (src * (len as f64).sqrt()).max(1.0)
    };
    let tol = 1e-11 * scale;

    let mut iterations = 0;
    while res_norm > tol {
        if iterations >= 50 {
            return Err(Error::NonConvergence(format!(
                "Newton did not converge in 50 iterations (residual {res_norm:.3e})"
            )));
        }
        iterations += 1;
        let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        let diag = problem.jacobian_diag(&u);
        let du = bicgstab(|v| problem.jacobian_apply(&u, v), &diag, &rhs, 1e-12, 40000)?;
        // damped update: halve on residual increase, up to 5 times
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=5 {
            let trial: Vec<f64> = u
                .iter()
                .zip(&du)
                .map(|(ui, di)| ui + lambda * di)
                .collect();
            if trial.iter().any(|&ui| 1.0 + ui <= 0.0) {
                lambda *= 0.5;
                continue;
            }
            let trial_res = problem.residual(&trial);
            let trial_norm = norm2(&trial_res);
            if trial_norm <= res_norm || trial_norm <= tol {
                u = trial;
                res = trial_res;
                res_norm = trial_norm;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence(
                "Newton step rejected after 5 halvings".into(),
            ));
        }
    }

    let phi: Vec<f64> = u.iter().map(|ui| 1.0 + ui).collect();
    let phi_min = phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let phi_max = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if phi_min <= 0.0 {
        return Err(Error::Numeric(format!(
            "conformal factor lost positivity: min {phi_min:.3e}"
        )));
    }

    let mut h: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; len]);
    let mut k: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; len]);
    for flat in 0..len {
        let p4v = phi[flat].powi(4);
        let pm2 = phi[flat].powi(-2);
        for (slot, &(a, b)) in P3.iter().enumerate() {
            h[slot][flat] = if a == b { p4v } else { 0.0 };
            k[slot][flat] = pm2 * seed.kbar[slot][flat];
        }
    }
    let data = ADMData { grid, h, k };
    let report = LichnerowiczReport {
        phi: ScalarField::from_values(grid, phi)?,
        newton_iterations: iterations,
        final_residual: res_norm,
        phi_min,
        phi_max,
    };
    Ok((data, report))
}

// ---------------------------------------------------------------------
// Cauchy data assembly
// ---------------------------------------------------------------------

/// Stencil order used by the gauge-zeroing algebra (matches the interior
/// operators so the assembled data zeroes the same discrete functional).
pub const ASSEMBLY_STENCIL_ORDER: usize = 4;

/// Populate the metric and its time derivative on the initial slice:
/// `g_00 = -1`, `g_0a = 0`, `g_ab = h_ab`, `d_t g_ab = -2 K_ab`, and the
/// remaining slots `d_t g_00`, `d_t g_0a` chosen pointwise so the
/// harmonic functional vanishes on the slice:
///
/// ```text
/// d_t g_00 = 2 tr_h K,
/// d_t g_0c = h^(ab) d_a h_cb - h^(ab) d_c h_ab / 2.
/// ```
pub fn assemble_cauchy_data(data: &ADMData) -> Result<(MetricField, [Vec<f64>; 10])> {
    data.validate()?;
    let grid = data.grid;
    let len = grid.len();

    let mut comps: [Vec<f64>; 10] = std::array::from_fn(|_| vec![0.0; len]);
    comps[p4(0, 0)] = vec![-1.0; len];
    for a in 0..3 {
        for b in a..3 {
            comps[p4(a + 1, b + 1)] = data.h[p3(a, b)].clone();
        }
    }
    let metric = MetricField::new(grid, comps)?;

    let dh: [[Vec<f64>; 6]; 3] = std::array::from_fn(|a| {
        std::array::from_fn(|c| {
            let f = ScalarField::from_values(grid, data.h[c].clone()).unwrap();
            derivative_axis(&f, a, ASSEMBLY_STENCIL_ORDER).into_values()
        })
    });

    let mut gt: [Vec<f64>; 10] = std::array::from_fn(|_| vec![0.0; len]);
    for flat in 0..len {
        let h = data.h_at(flat);
        let k = data.k_at(flat);
        let hinv = inv3(&h);
        let mut tr_k = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                tr_k += hinv[p3(a, b)] * k[p3(a, b)];
            }
        }
        gt[p4(0, 0)][flat] = 2.0 * tr_k;
        for c in 0..3 {
            let mut v = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    v += hinv[p3(a, b)] * (dh[a][p3(c, b)][flat] - 0.5 * dh[c][p3(a, b)][flat]);
                }
            }
            gt[p4(0, c + 1)][flat] = v;
        }
        for a in 0..3 {
            for b in a..3 {
                gt[p4(a + 1, b + 1)][flat] = -2.0 * k[p3(a, b)];
            }
        }
    }
    Ok((metric, gt))
}
