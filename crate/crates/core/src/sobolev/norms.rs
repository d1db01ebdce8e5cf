//! Weighted Sobolev norms: dyadic fractional, weighted integer-order,
//! and weighted sup norms.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{multi_derivative, ScalarField};
use crate::spectral::{norm_hs_dilated_sq, norm_hs_unchecked, LAMBDA_SUPPORT_MARGIN};

use super::partition::DyadicPartition;

/// Parameters of the norm family.
#[derive(Debug, Clone, Copy)]
pub struct NormParams {
    /// Regularity order `s >= 0`.
    pub s: f64,
    /// Weight exponent `delta`.
    pub delta: f64,
    /// Power of the cutoff inside the dyadic sum (default 1).
    pub gamma: f64,
    /// Integer order for the weighted integer norm.
    pub m: usize,
    /// Weight exponent for the weighted sup norm.
    pub beta: f64,
}

impl NormParams {
    pub fn new(s: f64, delta: f64) -> Result<Self> {
        if !(s >= 0.0) {
            return Err(Error::Precondition(format!("norm order s must be >= 0, got {s}")));
        }
        Ok(Self {
            s,
            delta,
            gamma: 1.0,
            m: 0,
            beta: 0.0,
        })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Precondition(format!(
                "cutoff power gamma must be positive, got {gamma}"
            )));
        }
        self.gamma = gamma;
        Ok(self)
    }
}

/// Report which theorem hypothesis windows a pair `(s, delta)` falls in.
/// Nothing is enforced; evolution and constraint routines accept any
/// `delta` and leave interpretation to the caller.
pub fn hypothesis_windows(s: f64, delta: f64) -> Vec<String> {
    let mut lines = Vec::new();
    lines.push(format!(
        "s = {s}: {} the evolution requirement s > 3/2",
        if s > 1.5 { "satisfies" } else { "violates" }
    ));
    lines.push(format!(
        "delta = {delta}: {} the energy-estimate window delta >= -3/2",
        if delta >= -1.5 { "inside" } else { "outside" }
    ));
    lines.push(format!(
        "delta = {delta}: {} the constraint-solve window -3/2 < delta < -1/2",
        if delta > -1.5 && delta < -0.5 {
            "inside"
        } else {
            "outside"
        }
    ));
    lines
}

/// Mask a field by `psi_j^gamma`.
pub(crate) fn masked(u: &ScalarField, p: &DyadicPartition, j: u32, gamma: f64) -> ScalarField {
    let psi = p.psi(j);
    let values = u
        .values()
        .iter()
        .zip(psi.values())
        .map(|(a, b)| {
            if *b == 0.0 {
                0.0
            } else if gamma == 1.0 {
                a * b
            } else if gamma == 2.0 {
                a * b * b
            } else {
                a * b.powf(gamma)
            }
        })
        .collect();
    ScalarField::from_values(u.grid(), values).expect("same grid")
}

/// Squared contribution of annulus `j` to the dyadic norm:
/// `2^((3/2+delta) 2j) || (psi_j^gamma u)(2^j .) ||_{H^s}^2`, evaluated
/// on the fixed grid through the exact Fourier scaling identity.
pub fn hsd_term_sq(
    u: &ScalarField,
    p: &DyadicPartition,
    j: u32,
    s: f64,
    delta: f64,
    gamma: f64,
) -> f64 {
    let m = masked(u, p, j, gamma);
    if m.max_abs() == 0.0 {
        return 0.0;
    }
    let weight = 2f64.powf((1.5 + delta) * 2.0 * j as f64);
    weight * norm_hs_dilated_sq(&m, s, j)
}

/// Weighted fractional Sobolev norm
/// `( sum_j 2^((3/2+delta)2j) || (psi_j^gamma u)(2^j .) ||_{H^s}^2 )^(1/2)`.
///
/// The sum runs over the partition's annuli; the field must be compactly
/// supported inside the box and within the radius the partition covers
/// exactly.
pub fn norm_hsd(u: &ScalarField, p: &DyadicPartition, params: &NormParams) -> Result<f64> {
    u.grid().same_grid(&p.grid())?;
    u.require_support_margin(LAMBDA_SUPPORT_MARGIN)?;
    p.require_covers(u)?;
    Ok(norm_hsd_unchecked(u, p, params))
}

/// As [`norm_hsd`] without the support preconditions (monitoring paths
/// that tolerate boundary wrap use this and flag the sample instead).
pub fn norm_hsd_unchecked(u: &ScalarField, p: &DyadicPartition, params: &NormParams) -> f64 {
    let terms: Vec<f64> = p
        .js()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&j| hsd_term_sq(u, p, j, params.s, params.delta, params.gamma))
        .collect();
    terms.iter().sum::<f64>().sqrt()
}

/// All spatial multi-indices with `|alpha| <= m`.
pub fn multi_indices(m: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for total in 0..=m {
        for a in 0..=total {
            for b in 0..=(total - a) {
                out.push([a, b, total - a - b]);
            }
        }
    }
    out
}

/// Weighted integer-order Sobolev norm
/// `( sum_{|alpha| <= m} || (1+|x|)^(delta+|alpha|) d^alpha u ||_L2^2 )^(1/2)`
/// with 4th-order centered differences and midpoint quadrature.
pub fn norm_weighted_integer(u: &ScalarField, m: usize, delta: f64) -> Result<f64> {
    u.assert_finite()?;
    let grid = u.grid();
    let dv = grid.cell_volume();
    let mut acc = 0.0;
    for alpha in multi_indices(m) {
        let order: usize = alpha.iter().sum();
        let d = multi_derivative(u, alpha, 4);
        let exponent = delta + order as f64;
        let mut term = 0.0;
        for (flat, v) in d.values().iter().enumerate() {
            let w = (1.0 + grid.radius(flat)).powf(exponent);
            term += (w * v) * (w * v);
        }
        acc += term * dv;
    }
    Ok(acc.sqrt())
}

/// Weighted sup norm
/// `sum_{|alpha| <= m} sup (1+|x|)^(beta+|alpha|) |d^alpha u|`
/// over grid points, 4th-order centered differences.
pub fn norm_cmb(u: &ScalarField, m: usize, beta: f64) -> Result<f64> {
    u.assert_finite()?;
    let grid = u.grid();
    let mut acc = 0.0;
    for alpha in multi_indices(m) {
        let order: usize = alpha.iter().sum();
        let d = multi_derivative(u, alpha, 4);
        let exponent = beta + order as f64;
        let mut sup = 0.0f64;
        for (flat, v) in d.values().iter().enumerate() {
            let w = (1.0 + grid.radius(flat)).powf(exponent);
            sup = sup.max((w * v).abs());
        }
        acc += sup;
    }
    Ok(acc)
}

/// Plain Bessel-potential norm `||u||_{H^s}` with the support check.
pub fn norm_hs(u: &ScalarField, s: f64) -> Result<f64> {
    u.require_support_margin(LAMBDA_SUPPORT_MARGIN)?;
    Ok(norm_hs_unchecked(u, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields;
    use crate::grid::Grid3;
    use crate::sobolev::partition::build_partition;
    use approx::assert_relative_eq;

    fn setup() -> (Grid3, DyadicPartition) {
        let grid = Grid3::new(64, 16.0).unwrap();
        let p = build_partition(grid, 8).unwrap();
        (grid, p)
    }

    fn bump(grid: Grid3, center: [f64; 3], sigma: f64) -> ScalarField {
        fields::gaussian_bump(grid, center, sigma, 1.0)
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let (grid, p) = setup();
        let z = ScalarField::zeros(grid);
        let params = NormParams::new(1.0, -1.0).unwrap();
        assert_eq!(norm_hsd(&z, &p, &params).unwrap(), 0.0);
        assert_eq!(norm_weighted_integer(&z, 2, 0.0).unwrap(), 0.0);
        assert_eq!(norm_cmb(&z, 1, 0.0).unwrap(), 0.0);
        assert_eq!(norm_hs(&z, 1.3).unwrap(), 0.0);
    }

    #[test]
    fn l2_norm_matches_quadrature_oracle() {
        let (grid, _) = setup();
        let u = bump(grid, [1.0, -2.0, 0.5], 1.2);
        // independent midpoint quadrature of integral |u|^2
        let direct = u.l2();
        assert_relative_eq!(norm_hs(&u, 0.0).unwrap(), direct, max_relative = 1e-10);
        // m = 0, delta = 0 weighted integer norm degenerates to plain L2
        assert_relative_eq!(
            norm_weighted_integer(&u, 0, 0.0).unwrap(),
            direct,
            max_relative = 1e-12
        );
    }

    #[test]
    fn annulus_supported_field_contributes_in_window_only() {
        let (grid, p) = setup();
        // field supported in the annulus [2^(j-1), 2^j] for j = 4: [8, 16]
        let j0 = 4u32;
        let u = ScalarField::from_fn(grid, |pt| {
            let r = (pt[0] * pt[0] + pt[1] * pt[1] + pt[2] * pt[2]).sqrt();
            let (lo, hi) = (8.0, 12.0); // keep inside the box with margin
            if r > lo && r < hi {
                let t = (r - lo) / (hi - lo);
                (t * (1.0 - t)).powi(4) * 1e3
            } else {
                0.0
            }
        });
        for j in p.js() {
            let t = hsd_term_sq(&u, &p, j, 1.0, -1.0, 1.0);
            let dist = (j as i64 - j0 as i64).abs();
            if dist > 4 {
                assert_eq!(t, 0.0, "term j={j} should vanish by support disjointness");
            }
        }
        // the window is not empty
        let t = hsd_term_sq(&u, &p, j0, 1.0, -1.0, 1.0);
        assert!(t > 0.0);
    }

    #[test]
    fn gamma_one_vs_two_ratio_is_bounded() {
        let (grid, p) = setup();
        let mut ratios = Vec::new();
        for i in 0..20 {
            let u = fields::random_bump_field(grid, 1000 + i, 11.0);
            let n1 = norm_hsd(&u, &p, &NormParams::new(1.0, -1.0).unwrap()).unwrap();
            let n2 = norm_hsd(
                &u,
                &p,
                &NormParams::new(1.0, -1.0).unwrap().with_gamma(2.0).unwrap(),
            )
            .unwrap();
            ratios.push(n1 / n2);
        }
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi / lo < 10.0, "gamma equivalence ratios spread: [{lo}, {hi}]");
    }

    #[test]
    fn integer_order_equivalence_ratio_bounded() {
        let (grid, p) = setup();
        for m in 0..=2usize {
            let mut ratios = Vec::new();
            for i in 0..6 {
                let u = fields::random_bump_field(grid, 7 * (m as u64 + 1) + i, 11.0);
                let hsd = norm_hsd(&u, &p, &NormParams::new(m as f64, -1.0).unwrap()).unwrap();
                let int = norm_weighted_integer(&u, m, -1.0).unwrap();
                ratios.push(hsd / int);
            }
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
            assert!(
                hi / lo < 50.0,
                "m={m}: equivalence ratios spread too wide: [{lo}, {hi}]"
            );
        }
    }

    #[test]
    fn cmb_of_constant_on_support() {
        let (grid, _) = setup();
        let u = ScalarField::from_fn(grid, |pt| {
            let r = (pt[0] * pt[0] + pt[1] * pt[1] + pt[2] * pt[2]).sqrt();
            if r < 4.0 {
                -3.5
            } else {
                0.0
            }
        });
        let n = norm_cmb(&u, 0, 0.0).unwrap();
        // weight (1+|x|)^0 = 1, so the sup over the support is |c|
        assert!(n >= 3.5);
    }

    #[test]
    fn norm_rejects_uncovered_support() {
        let grid = Grid3::new(64, 16.0).unwrap();
        let p = build_partition(grid, 4).unwrap(); // exact only up to 2^(5-4) = 2
        let u = bump(grid, [6.0, 0.0, 0.0], 1.0);
        let params = NormParams::new(1.0, -1.0).unwrap();
        assert!(norm_hsd(&u, &p, &params).is_err());
    }
}
