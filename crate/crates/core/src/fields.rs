//! Deterministic test-field generators: smooth compactly supported bumps
//! and seeded random corpora used by property tests and the verification
//! suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Grid3, ScalarField};

/// Smooth compact window: 1 at r = 0, exactly 0 for r >= radius.
pub fn window(r: f64, radius: f64) -> f64 {
    if r >= radius {
        0.0
    } else {
        let t = r / radius;
        // C^3 taper
        let s = 1.0 - t * t;
        s * s * s * s
    }
}

/// Gaussian bump windowed to exact compact support within `4 sigma`.
pub fn gaussian_bump(grid: Grid3, center: [f64; 3], sigma: f64, amp: f64) -> ScalarField {
    ScalarField::from_fn(grid, |p| {
        let dx = p[0] - center[0];
        let dy = p[1] - center[1];
        let dz = p[2] - center[2];
        let r2 = dx * dx + dy * dy + dz * dz;
        let r = r2.sqrt();
        amp * (-r2 / (2.0 * sigma * sigma)).exp() * window(r, 4.0 * sigma)
    })
}

/// Sum of a few random smooth bumps, supported within `max_radius` of the
/// origin (compact, strictly inside the box). Deterministic in `seed`.
pub fn random_bump_field(grid: Grid3, seed: u64, max_radius: f64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bumps = rng.gen_range(2..=4);
    let mut parts = Vec::new();
    for _ in 0..n_bumps {
        let sigma = rng.gen_range(1.0..2.0);
        let reach = max_radius - 4.0 * sigma;
        let c = if reach > 0.0 {
            let dir: [f64; 3] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2])
                .sqrt()
                .max(1e-9);
            let r = rng.gen_range(0.0..reach);
            [dir[0] / norm * r, dir[1] / norm * r, dir[2] / norm * r]
        } else {
            [0.0; 3]
        };
        let amp = rng.gen_range(-1.0..1.0);
        parts.push((c, sigma, amp));
    }
    let mut out = ScalarField::zeros(grid);
    for (c, sigma, amp) in parts {
        out.add_scaled(&gaussian_bump(grid, c, sigma, amp), 1.0);
    }
    out
}

/// A corpus of `count` random fields with distinct seeds.
pub fn corpus(grid: Grid3, base_seed: u64, count: usize, max_radius: f64) -> Vec<ScalarField> {
    (0..count)
        .map(|i| random_bump_field(grid, base_seed + i as u64, max_radius))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bumps_are_compact_and_deterministic() {
        let grid = Grid3::new(32, 16.0).unwrap();
        let a = random_bump_field(grid, 42, 10.0);
        let b = random_bump_field(grid, 42, 10.0);
        assert_eq!(a.values(), b.values());
        assert!(a.support_radius() <= 10.0 + 1e-9);
        assert!(a.max_abs() > 0.0);
    }
}
