//! Fourier-side operators on the periodic box.
//!
//! The Bessel potential `lambda_s` is the multiplier `(1 + |xi|^2)^(s/2)`
//! in the box wave-numbers `xi = (pi/L) * k`, `k` a signed integer mode.
//! The scaled variant with `lambda = 2^j` realizes the `H^s` norm of a
//! dilated field `f(2^j x)` without leaving the grid, through the exact
//! identity
//!
//! ```text
//! || f(lambda .) ||_{H^s}^2
//!     = lambda^-3 * integral (1 + lambda^2 |xi|^2)^s |fhat(xi)|^2 dxi.
//! ```

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::Result;
use crate::grid::{Grid3, ScalarField};

/// Minimum support margin (in cells) required before applying a Fourier
/// multiplier; controls wrap-around aliasing of non-periodic data.
pub const LAMBDA_SUPPORT_MARGIN: usize = 8;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

static PLAN_CACHE: Mutex<Option<HashMap<usize, Arc<Plans>>>> = Mutex::new(None);

fn plans_for(n: usize) -> Arc<Plans> {
    let mut guard = PLAN_CACHE.lock().unwrap();
    let map = guard.get_or_insert_with(HashMap::new);
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// Complex 3D buffer in the same layout as `ScalarField`.
pub struct SpectralField {
    pub grid: Grid3,
    pub data: Vec<Complex64>,
}

fn transform_axes(grid: Grid3, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let plans = plans_for(n);
    let fft = if inverse {
        plans.inverse.clone()
    } else {
        plans.forward.clone()
    };
    let mut line = vec![Complex64::new(0.0, 0.0); n];

    // axis 2 (contiguous)
    for chunk in data.chunks_mut(n) {
        fft.process(chunk);
    }
    // axis 1
    for ix in 0..n {
        for iz in 0..n {
            for iy in 0..n {
                line[iy] = data[grid.idx(ix, iy, iz)];
            }
            fft.process(&mut line);
            for iy in 0..n {
                data[grid.idx(ix, iy, iz)] = line[iy];
            }
        }
    }
    // axis 0
    for iy in 0..n {
        for iz in 0..n {
            for ix in 0..n {
                line[ix] = data[grid.idx(ix, iy, iz)];
            }
            fft.process(&mut line);
            for ix in 0..n {
                data[grid.idx(ix, iy, iz)] = line[ix];
            }
        }
    }
    if inverse {
        let scale = 1.0 / (n * n * n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

pub fn forward(field: &ScalarField) -> SpectralField {
    let grid = field.grid();
    let mut data: Vec<Complex64> = field
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    transform_axes(grid, &mut data, false);
    SpectralField { grid, data }
}

pub fn inverse_real(mut spec: SpectralField) -> ScalarField {
    transform_axes(spec.grid, &mut spec.data, true);
    let values = spec.data.iter().map(|c| c.re).collect();
    ScalarField::from_values(spec.grid, values).expect("shape preserved")
}

/// Signed integer mode for index `i` on an axis of length `n`.
#[inline]
pub fn signed_mode(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Physical wave-number of mode index `i`: `xi = (pi / L) * k_signed`.
#[inline]
pub fn wave_number(i: usize, grid: &Grid3) -> f64 {
    std::f64::consts::PI / grid.half_width() * signed_mode(i, grid.n()) as f64
}

/// `|xi|^2` of a spectral grid point.
#[inline]
pub fn xi_sq(grid: &Grid3, ix: usize, iy: usize, iz: usize) -> f64 {
    let kx = wave_number(ix, grid);
    let ky = wave_number(iy, grid);
    let kz = wave_number(iz, grid);
    kx * kx + ky * ky + kz * kz
}

/// Apply the multiplier `(1 + scale^2 |xi|^2)^(s/2)` in place.
fn apply_bessel_multiplier(spec: &mut SpectralField, s: f64, scale: f64) {
    let grid = spec.grid;
    let n = grid.n();
    let s2 = scale * scale;
    for ix in 0..n {
        for iy in 0..n {
            for iz in 0..n {
                let m = (1.0 + s2 * xi_sq(&grid, ix, iy, iz)).powf(0.5 * s);
                spec.data[grid.idx(ix, iy, iz)] *= m;
            }
        }
    }
}

/// Bessel potential `(1 - Delta)^(s/2) u` via the Fourier multiplier
/// `(1 + |xi|^2)^(s/2)`. Requires compact support inside the box with a
/// margin of at least [`LAMBDA_SUPPORT_MARGIN`] cells.
pub fn lambda_s(u: &ScalarField, s: f64) -> Result<ScalarField> {
    u.require_support_margin(LAMBDA_SUPPORT_MARGIN)?;
    Ok(lambda_s_unchecked(u, s))
}

/// As [`lambda_s`] but without the support precondition; used internally
/// where the caller has already validated or explicitly waived it.
pub fn lambda_s_unchecked(u: &ScalarField, s: f64) -> ScalarField {
    if s == 0.0 {
        return u.clone();
    }
    let mut spec = forward(u);
    apply_bessel_multiplier(&mut spec, s, 1.0);
    inverse_real(spec)
}

/// `H^s` norm: `|| (1 + |xi|^2)^(s/2) uhat ||_L2` by Parseval.
pub fn norm_hs_unchecked(u: &ScalarField, s: f64) -> f64 {
    let grid = u.grid();
    let spec = forward(u);
    let dv = grid.cell_volume() / grid.len() as f64;
    let n = grid.n();
    let mut acc = 0.0;
    for ix in 0..n {
        for iy in 0..n {
            for iz in 0..n {
                let w = (1.0 + xi_sq(&grid, ix, iy, iz)).powf(s);
                acc += w * spec.data[grid.idx(ix, iy, iz)].norm_sqr();
            }
        }
    }
    (acc * dv).sqrt()
}

/// Squared `H^s` norm of the dilated field `u(2^j x)` computed on the
/// fixed grid through the exact Fourier scaling identity.
pub fn norm_hs_dilated_sq(u: &ScalarField, s: f64, j: u32) -> f64 {
    let grid = u.grid();
    let spec = forward(u);
    let lambda = (1u64 << j) as f64;
    let l2 = lambda * lambda;
    let dv = grid.cell_volume() / grid.len() as f64;
    let n = grid.n();
    let mut acc = 0.0;
    for ix in 0..n {
        for iy in 0..n {
            for iz in 0..n {
                let w = (1.0 + l2 * xi_sq(&grid, ix, iy, iz)).powf(s);
                acc += w * spec.data[grid.idx(ix, iy, iz)].norm_sqr();
            }
        }
    }
    acc * dv / (lambda * lambda * lambda)
}

/// Apply the scaled Bessel multiplier `(1 + 4^j |xi|^2)^(s/2)`; together
/// with the `2^(-3j)` volume factor this realizes `Lambda^s` acting on
/// the dilated field, expressed back on the fixed grid.
pub fn lambda_s_scaled_unchecked(u: &ScalarField, s: f64, j: u32) -> ScalarField {
    let mut spec = forward(u);
    apply_bessel_multiplier(&mut spec, s, (1u64 << j) as f64);
    inverse_real(spec)
}

/// A box-periodic plane wave `amp * cos(k . x + phase)` with integer mode
/// numbers, an exact eigenfunction of `lambda_s`.
pub fn plane_wave(grid: Grid3, modes: [i64; 3], amp: f64, phase: f64) -> ScalarField {
    let k: Vec<f64> = modes
        .iter()
        .map(|&m| std::f64::consts::PI / grid.half_width() * m as f64)
        .collect();
    ScalarField::from_fn(grid, |p| {
        amp * (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).cos()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{second_derivative_axis, Grid3, ScalarField};
    use approx::assert_relative_eq;

    fn grid() -> Grid3 {
        Grid3::new(32, 8.0).unwrap()
    }

    fn bump(grid: Grid3) -> ScalarField {
        ScalarField::from_fn(grid, |p| {
            let r2 = p.iter().map(|x| x * x).sum::<f64>();
            (-r2 / 2.0).exp() * (1.0 + 0.3 * p[0])
        })
    }

    #[test]
    fn fft_round_trip() {
        let u = bump(grid());
        let back = inverse_real(forward(&u));
        for (a, b) in u.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_zero_is_identity() {
        let u = bump(grid());
        let v = lambda_s_unchecked(&u, 0.0);
        assert_eq!(u.values(), v.values());
    }

    #[test]
    fn plane_wave_is_eigenfunction() {
        let g = grid();
        let modes = [2i64, -1, 3];
        let u = plane_wave(g, modes, 0.7, 0.3);
        let k2: f64 = modes
            .iter()
            .map(|&m| {
                let k = std::f64::consts::PI / g.half_width() * m as f64;
                k * k
            })
            .sum();
        for s in [0.5, 1.7, 2.0] {
            let v = lambda_s_unchecked(&u, s);
            let factor = (1.0 + k2).powf(0.5 * s);
            let mut err = 0.0f64;
            for (a, b) in v.values().iter().zip(u.values()) {
                err = err.max((a - factor * b).abs());
            }
            assert!(err < 1e-10, "s={s}: eigenfunction error {err}");
        }
    }

    #[test]
    fn lambda_composes_additively() {
        let u = bump(grid());
        let a = lambda_s_unchecked(&lambda_s_unchecked(&u, 0.9), 1.3);
        let b = lambda_s_unchecked(&u, 2.2);
        let mut err = 0.0f64;
        for (x, y) in a.values().iter().zip(b.values()) {
            err = err.max((x - y).abs());
        }
        assert!(err < 1e-10, "composition error {err}");
    }

    #[test]
    fn lambda_two_matches_one_minus_laplacian() {
        // 4th-order finite-difference oracle for (1 - Delta) u; the
        // disagreement is the stencil truncation, so it must drop ~16x
        // under refinement
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let g = Grid3::new(n, 8.0).unwrap();
            let u = ScalarField::from_fn(g, |p| {
                let r2 = p.iter().map(|x| x * x).sum::<f64>();
                (-r2 / 1.5).exp()
            });
            let v = lambda_s_unchecked(&u, 2.0);
            let mut lap = ScalarField::zeros(g);
            for axis in 0..3 {
                lap.add_scaled(&second_derivative_axis(&u, axis, 4), 1.0);
            }
            let mut err = 0.0f64;
            for ((a, b), l) in v.values().iter().zip(u.values()).zip(lap.values()) {
                err = err.max((a - (b - l)).abs());
            }
            errs.push(err);
        }
        let ratio = errs[0] / errs[1];
        assert!(
            ratio > 10.0 && errs[1] < 1e-2,
            "oracle errors {errs:?}, ratio {ratio:.2}"
        );
    }

    #[test]
    fn lambda_requires_support_margin() {
        let g = grid();
        let u = ScalarField::from_fn(g, |p| p[0]); // supported up to the boundary
        assert!(lambda_s(&u, 1.0).is_err());
    }

    #[test]
    fn plane_wave_hs_norm_matches_parseval() {
        let g = grid();
        let amp = 1.3;
        let u = plane_wave(g, [1, 0, 0], amp, 0.0);
        let k = std::f64::consts::PI / g.half_width();
        let vol = (2.0 * g.half_width()).powi(3);
        // cos has mean-square 1/2 over the box
        let expect = amp * (1.0 + k * k).sqrt() * (vol / 2.0).sqrt();
        assert_relative_eq!(norm_hs_unchecked(&u, 1.0), expect, max_relative = 1e-12);
    }

    #[test]
    fn dilated_norm_matches_direct_scaling_for_s0() {
        // s = 0: ||f(2^j .)||_L2^2 = 2^(-3j) ||f||_L2^2 exactly
        let u = bump(grid());
        for j in 0..4u32 {
            let got = norm_hs_dilated_sq(&u, 0.0, j);
            let expect = u.l2_sq() / 8f64.powi(j as i32);
            assert_relative_eq!(got, expect, max_relative = 1e-12);
        }
    }
}
