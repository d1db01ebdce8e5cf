//! Closed-form metrics with exact derivatives, used as oracles: a family
//! of Gaussian perturbations of Minkowski (all 4D partials in closed
//! form) and the static Schwarzschild metric in isotropic coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::{p4, Deriv2Point, DerivPoint, MetricField, FirstDerivs, SecondDerivs, MINKOWSKI, P4};
use crate::grid::Grid3;

/// One separable 4D Gaussian `amp * prod_mu exp(-(p_mu - c_mu)^2 / (2 s_mu^2))`.
#[derive(Debug, Clone, Copy)]
pub struct Bump4 {
    pub amp: f64,
    pub center: [f64; 4],
    pub sigma: [f64; 4],
}

impl Bump4 {
    fn value(&self, p: [f64; 4]) -> f64 {
        let mut v = self.amp;
        for mu in 0..4 {
            let z = (p[mu] - self.center[mu]) / self.sigma[mu];
            v *= (-0.5 * z * z).exp();
        }
        v
    }

    fn d1(&self, p: [f64; 4], mu: usize) -> f64 {
        let z = (p[mu] - self.center[mu]) / (self.sigma[mu] * self.sigma[mu]);
        -z * self.value(p)
    }

    fn d2(&self, p: [f64; 4], mu: usize, nu: usize) -> f64 {
        let zmu = (p[mu] - self.center[mu]) / (self.sigma[mu] * self.sigma[mu]);
        let znu = (p[nu] - self.center[nu]) / (self.sigma[nu] * self.sigma[nu]);
        let kron = if mu == nu {
            1.0 / (self.sigma[mu] * self.sigma[mu])
        } else {
            0.0
        };
        (zmu * znu - kron) * self.value(p)
    }
}

/// Minkowski plus Gaussian bumps in selected components.
#[derive(Debug, Clone)]
pub struct AnalyticMetric {
    pub bumps: Vec<(usize, Bump4)>,
}

impl AnalyticMetric {
    /// Deterministic random perturbation of total amplitude about `eps`.
    pub fn random_perturbation(seed: u64, eps: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bumps = Vec::new();
        let n = rng.gen_range(3..=6);
        for _ in 0..n {
            let slot = rng.gen_range(0..10);
            let amp = rng.gen_range(-1.0..1.0) * eps;
            let center = [
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ];
            let sigma = [
                rng.gen_range(1.0..2.0),
                rng.gen_range(1.0..2.5),
                rng.gen_range(1.0..2.5),
                rng.gen_range(1.0..2.5),
            ];
            bumps.push((slot, Bump4 { amp, center, sigma }));
        }
        Self { bumps }
    }

    /// Metric components at a spacetime point `p = (t, x, y, z)`.
    pub fn value_at(&self, p: [f64; 4]) -> [f64; 10] {
        let mut g = MINKOWSKI;
        for (slot, b) in &self.bumps {
            g[*slot] += b.value(p);
        }
        g
    }

    pub fn d1_at(&self, p: [f64; 4]) -> DerivPoint {
        let mut h = [[0.0; 10]; 4];
        for (slot, b) in &self.bumps {
            for mu in 0..4 {
                h[mu][*slot] += b.d1(p, mu);
            }
        }
        h
    }

    pub fn d2_at(&self, p: [f64; 4]) -> Deriv2Point {
        let mut dd = [[0.0; 10]; 10];
        for (slot, b) in &self.bumps {
            for (ps, &(mu, nu)) in P4.iter().enumerate() {
                dd[ps][*slot] += b.d2(p, mu, nu);
            }
        }
        dd
    }

    /// Sample the metric on a grid at time `t`.
    pub fn metric_on(&self, grid: Grid3, t: f64) -> Result<MetricField> {
        let mut comps: [Vec<f64>; 10] = std::array::from_fn(|_| vec![0.0; grid.len()]);
        for flat in 0..grid.len() {
            let x = grid.position(flat);
            let g = self.value_at([t, x[0], x[1], x[2]]);
            for c in 0..10 {
                comps[c][flat] = g[c];
            }
        }
        MetricField::new(grid, comps)
    }

    /// Exact first-derivative bundle on a grid at time `t`.
    pub fn first_derivs_on(&self, grid: Grid3, t: f64) -> FirstDerivs {
        let mut d: [[Vec<f64>; 10]; 4] =
            std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; grid.len()]));
        for flat in 0..grid.len() {
            let x = grid.position(flat);
            let h = self.d1_at([t, x[0], x[1], x[2]]);
            for mu in 0..4 {
                for c in 0..10 {
                    d[mu][c][flat] = h[mu][c];
                }
            }
        }
        FirstDerivs { grid, d }
    }

    /// Exact second-derivative bundle on a grid at time `t`.
    pub fn second_derivs_on(&self, grid: Grid3, t: f64) -> SecondDerivs {
        let mut d: Vec<[Vec<f64>; 10]> = (0..10)
            .map(|_| std::array::from_fn(|_| vec![0.0; grid.len()]))
            .collect();
        for flat in 0..grid.len() {
            let x = grid.position(flat);
            let dd = self.d2_at([t, x[0], x[1], x[2]]);
            for s in 0..10 {
                for c in 0..10 {
                    d[s][c][flat] = dd[s][c];
                }
            }
        }
        SecondDerivs { grid, d }
    }

    /// Time derivative of the components on a grid (for first-order data).
    pub fn dt_on(&self, grid: Grid3, t: f64) -> [Vec<f64>; 10] {
        let mut out: [Vec<f64>; 10] = std::array::from_fn(|_| vec![0.0; grid.len()]);
        for flat in 0..grid.len() {
            let x = grid.position(flat);
            let h = self.d1_at([t, x[0], x[1], x[2]]);
            for c in 0..10 {
                out[c][flat] = h[0][c];
            }
        }
        out
    }
}

/// Static Schwarzschild metric in isotropic coordinates:
/// `g = diag(-alpha^2, phi^4, phi^4, phi^4)` with `phi = 1 + M/(2r)` and
/// `alpha = (1 - M/(2r)) / (1 + M/(2r))`; an exact vacuum solution.
///
/// For grid sampling the radius is floored at `R_FLOOR` so the central
/// point stays regular; tests only read interior annuli well outside the
/// floored region.
#[derive(Debug, Clone, Copy)]
pub struct SchwarzschildIsotropic {
    pub mass: f64,
}

pub const R_FLOOR: f64 = 0.25;

impl SchwarzschildIsotropic {
    fn radial(&self, r: f64) -> (f64, f64, f64, f64, f64, f64) {
        // (psi, psi', psi'', f, f', f'') with psi = phi^4, f = -alpha^2
        let m = self.mass;
        let phi = 1.0 + m / (2.0 * r);
        let dphi = -m / (2.0 * r * r);
        let ddphi = m / (r * r * r);
        let psi = phi.powi(4);
        let dpsi = 4.0 * phi.powi(3) * dphi;
        let ddpsi = 12.0 * phi.powi(2) * dphi * dphi + 4.0 * phi.powi(3) * ddphi;
        let alpha = (2.0 * r - m) / (2.0 * r + m);
        let dalpha = 4.0 * m / ((2.0 * r + m) * (2.0 * r + m));
        let ddalpha = -16.0 * m / (2.0 * r + m).powi(3);
        let f = -alpha * alpha;
        let df = -2.0 * alpha * dalpha;
        let ddf = -2.0 * (dalpha * dalpha + alpha * ddalpha);
        (psi, dpsi, ddpsi, f, df, ddf)
    }

    pub fn conformal_factor(&self, r: f64) -> f64 {
        1.0 + self.mass / (2.0 * r.max(R_FLOOR))
    }

    pub fn value_at(&self, p: [f64; 4]) -> [f64; 10] {
        let r = (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt().max(R_FLOOR);
        let (psi, _, _, f, _, _) = self.radial(r);
        let mut g = [0.0; 10];
        g[p4(0, 0)] = f;
        g[p4(1, 1)] = psi;
        g[p4(2, 2)] = psi;
        g[p4(3, 3)] = psi;
        g
    }

    pub fn d1_at(&self, p: [f64; 4]) -> DerivPoint {
        let r = (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt().max(R_FLOOR);
        let (_, dpsi, _, _, df, _) = self.radial(r);
        let mut h = [[0.0; 10]; 4];
        for a in 1..4 {
            let xa_over_r = p[a] / r;
            h[a][p4(0, 0)] = df * xa_over_r;
            for d in 1..4 {
                h[a][p4(d, d)] = dpsi * xa_over_r;
            }
        }
        h
    }

    pub fn d2_at(&self, p: [f64; 4]) -> Deriv2Point {
        let r = (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt().max(R_FLOOR);
        let (_, dpsi, ddpsi, _, df, ddf) = self.radial(r);
        let mut dd = [[0.0; 10]; 10];
        for (slot, &(mu, nu)) in P4.iter().enumerate() {
            if mu == 0 || nu == 0 {
                continue;
            }
            let xa = p[mu] / r;
            let xb = p[nu] / r;
            let kron = if mu == nu { 1.0 } else { 0.0 };
            // d_a d_b F(r) = F'' xa xb + F' (kron - xa xb) / r
            let second = |d1: f64, d2v: f64| d2v * xa * xb + d1 * (kron - xa * xb) / r;
            dd[slot][p4(0, 0)] = second(df, ddf);
            for d in 1..4 {
                dd[slot][p4(d, d)] = second(dpsi, ddpsi);
            }
        }
        dd
    }

    pub fn metric_on(&self, grid: Grid3) -> Result<MetricField> {
        let mut comps: [Vec<f64>; 10] = std::array::from_fn(|_| vec![0.0; grid.len()]);
        for flat in 0..grid.len() {
            let x = grid.position(flat);
            let g = self.value_at([0.0, x[0], x[1], x[2]]);
            for c in 0..10 {
                comps[c][flat] = g[c];
            }
        }
        MetricField::new(grid, comps)
    }
}
