//! Uniform periodic 3D grid and sampled scalar fields.
//!
//! Every field in a computation shares one `Grid3`. The box is
//! `[-L, L)^3` with `n` points per axis and spacing `dx = 2L/n`, periodic
//! topology. Norm computations that approximate integrals over all of
//! space require the field to be compactly supported strictly inside the
//! box; `ScalarField::support_margin_cells` measures that.

use crate::error::{Error, Result};

/// Uniform periodic grid on `[-L, L)^3`, `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    n: usize,
    half_width: f64,
}

impl Grid3 {
    /// `n` must be a power of two (spectral transforms), `half_width > 0`.
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid n must be a power of two >= 4, got {n}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::Config(format!(
                "grid half-width must be positive and finite, got {half_width}"
            )));
        }
        Ok(Self { n, half_width })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical coordinate of axis index `i`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    #[inline]
    pub fn point(&self, flat: usize) -> (usize, usize, usize) {
        let iz = flat % self.n;
        let iy = (flat / self.n) % self.n;
        let ix = flat / (self.n * self.n);
        (ix, iy, iz)
    }

    /// Position vector of a flat index.
    #[inline]
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let (ix, iy, iz) = self.point(flat);
        [self.coord(ix), self.coord(iy), self.coord(iz)]
    }

    #[inline]
    pub fn radius(&self, flat: usize) -> f64 {
        let p = self.position(flat);
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    /// Volume element of the midpoint quadrature.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        let dx = self.dx();
        dx * dx * dx
    }

    pub fn same_grid(&self, other: &Grid3) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!(
                "grids differ: (n={}, L={}) vs (n={}, L={})",
                self.n, self.half_width, other.n, other.half_width
            )));
        }
        Ok(())
    }
}

/// Real scalar field sampled on a `Grid3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid3,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid3) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "value buffer length {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Sample a function of position.
    pub fn from_fn(grid: Grid3, f: impl Fn([f64; 3]) -> f64 + Sync) -> Self {
        let mut values = vec![0.0; grid.len()];
        for (flat, v) in values.iter_mut().enumerate() {
            *v = f(grid.position(flat));
        }
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.grid.idx(ix, iy, iz)]
    }

    pub fn assert_finite(&self) -> Result<()> {
        for (flat, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                let (ix, iy, iz) = self.grid.point(flat);
                return Err(Error::Numeric(format!(
                    "non-finite value {v} at ({ix}, {iy}, {iz})"
                )));
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Midpoint quadrature of `|u|^2` over the box.
    pub fn l2_sq(&self) -> f64 {
        let dv = self.grid.cell_volume();
        self.values.iter().map(|v| v * v).sum::<f64>() * dv
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn add_scaled(&mut self, other: &ScalarField, a: f64) {
        debug_assert_eq!(self.grid, other.grid);
        for (v, w) in self.values.iter_mut().zip(&other.values) {
            *v += a * w;
        }
    }

    /// Pointwise product `self * other` into a new field.
    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    /// Smallest distance (in cells) from the box faces to the support of
    /// the field, measured per axis. Values with magnitude below
    /// `1e-13 * max_abs` count as zero. Returns `n/2` for the zero field.
    pub fn support_margin_cells(&self) -> usize {
        let n = self.grid.n();
        let tol = 1e-13 * self.max_abs();
        if self.max_abs() == 0.0 {
            return n / 2;
        }
        // per axis: track the min index-distance to a face over supported points
        let mut margin = n / 2;
        for (flat, v) in self.values.iter().enumerate() {
            if v.abs() > tol {
                let (ix, iy, iz) = self.grid.point(flat);
                for i in [ix, iy, iz] {
                    let d = i.min(n - 1 - i);
                    margin = margin.min(d);
                }
            }
        }
        margin
    }

    /// Largest radius at which the field is supported (same threshold as
    /// `support_margin_cells`).
    pub fn support_radius(&self) -> f64 {
        let tol = 1e-13 * self.max_abs();
        if self.max_abs() == 0.0 {
            return 0.0;
        }
        let mut r = 0.0f64;
        for (flat, v) in self.values.iter().enumerate() {
            if v.abs() > tol {
                r = r.max(self.grid.radius(flat));
            }
        }
        r
    }

    pub fn require_support_margin(&self, cells: usize) -> Result<()> {
        let m = self.support_margin_cells();
        if m < cells {
            return Err(Error::Precondition(format!(
                "field support margin is {m} cells, need at least {cells} \
                 (field must be compactly supported strictly inside the box)"
            )));
        }
        Ok(())
    }
}

/// Centered finite-difference derivative along one axis, periodic wrap.
///
/// `order` is the accuracy order: 2 (3-point) or 4 (5-point).
pub fn derivative_axis(field: &ScalarField, axis: usize, order: usize) -> ScalarField {
    let grid = field.grid();
    let n = grid.n();
    let dx = grid.dx();
    let mut out = vec![0.0; grid.len()];
    let v = field.values();

    let stride = match axis {
        0 => n * n,
        1 => n,
        2 => 1,
        _ => panic!("axis out of range"),
    };
    let wrap = |i: isize| -> usize { i.rem_euclid(n as isize) as usize };

    for flat in 0..grid.len() {
        let (ix, iy, iz) = grid.point(flat);
        let i = [ix, iy, iz][axis] as isize;
        let base = flat - [ix, iy, iz][axis] * stride;
        let s = |k: isize| v[base + wrap(i + k) * stride];
        out[flat] = match order {
            2 => (s(1) - s(-1)) / (2.0 * dx),
            4 => (8.0 * (s(1) - s(-1)) - (s(2) - s(-2))) / (12.0 * dx),
            _ => panic!("unsupported stencil order {order}"),
        };
    }
    ScalarField {
        grid,
        values: out,
    }
}

/// Second derivative along one axis (centered, periodic).
pub fn second_derivative_axis(field: &ScalarField, axis: usize, order: usize) -> ScalarField {
    let grid = field.grid();
    let n = grid.n();
    let dx2 = grid.dx() * grid.dx();
    let mut out = vec![0.0; grid.len()];
    let v = field.values();

    let stride = match axis {
        0 => n * n,
        1 => n,
        2 => 1,
        _ => panic!("axis out of range"),
    };
    let wrap = |i: isize| -> usize { i.rem_euclid(n as isize) as usize };

    for flat in 0..grid.len() {
        let (ix, iy, iz) = grid.point(flat);
        let i = [ix, iy, iz][axis] as isize;
        let base = flat - [ix, iy, iz][axis] * stride;
        let s = |k: isize| v[base + wrap(i + k) * stride];
        out[flat] = match order {
            2 => (s(1) - 2.0 * s(0) + s(-1)) / dx2,
            4 => (-(s(2) + s(-2)) + 16.0 * (s(1) + s(-1)) - 30.0 * s(0)) / (12.0 * dx2),
            _ => panic!("unsupported stencil order {order}"),
        };
    }
    ScalarField {
        grid,
        values: out,
    }
}

/// Mixed or repeated second partial `d_a d_b u`.
pub fn second_derivative(field: &ScalarField, a: usize, b: usize, order: usize) -> ScalarField {
    if a == b {
        second_derivative_axis(field, a, order)
    } else {
        derivative_axis(&derivative_axis(field, a, order), b, order)
    }
}

/// Partial derivative for a general spatial multi-index (orders of each axis).
pub fn multi_derivative(field: &ScalarField, alpha: [usize; 3], order: usize) -> ScalarField {
    let mut f = field.clone();
    for (axis, &k) in alpha.iter().enumerate() {
        for _ in 0..k {
            f = derivative_axis(&f, axis, order);
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Grid3 {
        Grid3::new(32, 8.0).unwrap()
    }

    #[test]
    fn grid_rejects_non_power_of_two() {
        assert!(Grid3::new(31, 8.0).is_err());
        assert!(Grid3::new(0, 8.0).is_err());
        assert!(Grid3::new(32, -1.0).is_err());
    }

    #[test]
    fn coords_cover_box() {
        let g = grid();
        assert_relative_eq!(g.coord(0), -8.0);
        assert_relative_eq!(g.coord(16), 0.0);
        assert_relative_eq!(g.dx(), 0.5);
    }

    #[test]
    fn derivative_of_plane_wave_is_spectral_order() {
        let g = grid();
        let k = std::f64::consts::PI / g.half_width(); // one box mode
        let u = ScalarField::from_fn(g, |p| (k * p[0]).sin());
        let du = derivative_axis(&u, 0, 4);
        let exact = ScalarField::from_fn(g, |p| k * (k * p[0]).cos());
        let mut err = 0.0f64;
        for (a, b) in du.values().iter().zip(exact.values()) {
            err = err.max((a - b).abs());
        }
        // 4th-order stencil: (k dx)^4/30 * k relative scale
        let bound = k * (k * g.dx()).powi(4) / 30.0 * 1.5;
        assert!(err < bound, "err={err}, bound={bound}");
    }

    #[test]
    fn mixed_partials_commute() {
        let g = grid();
        let u = ScalarField::from_fn(g, |p| {
            (-0.5 * (p[0] * p[0] + 2.0 * p[1] * p[1] + p[2] * p[2])).exp()
        });
        let dxy = second_derivative(&u, 0, 1, 4);
        let dyx = second_derivative(&u, 1, 0, 4);
        for (a, b) in dxy.values().iter().zip(dyx.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn support_margin_detects_interior_bump() {
        let g = grid();
        let u = ScalarField::from_fn(g, |p| {
            let r2 = p.iter().map(|x| x * x).sum::<f64>();
            if r2 < 4.0 {
                (4.0 - r2).powi(4)
            } else {
                0.0
            }
        });
        // support radius 2 inside box of 8, dx = 0.5 -> margin >= 12 cells
        assert!(u.support_margin_cells() >= 12);
        assert!(u.support_radius() <= 2.0 + 1e-12);
        assert!(u.require_support_margin(8).is_ok());

        let w = ScalarField::from_fn(g, |p| p[0]);
        assert!(w.require_support_margin(8).is_err());
    }
}
