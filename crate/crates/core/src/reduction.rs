//! First-order reduction of the wave system: the 50-component state
//! `U = (u, d_t u, d_x u)` with `N = 10` metric components, the pointwise
//! block matrices of the symmetric-hyperbolic form
//! `A0(u) d_t U = sum_a (A^a(u) + C^a) d_a U + B(U) U`,
//! and the structural condition checks the energy estimates rest on.

use rayon::prelude::*;

use crate::error::{Error, PointIndex, Result};
use crate::geometry::{p4, q_bilinear_point, DerivPoint, FirstDerivs, MetricField, MINKOWSKI};
use crate::grid::{derivative_axis, Grid3, ScalarField};
use crate::sobolev::norms::{norm_hsd_unchecked, NormParams};
use crate::sobolev::partition::DyadicPartition;
use crate::sobolev::product::{ProductState, SymMat3Field};

/// Metric components per tensor slot.
pub const N_COMP: usize = 10;
/// Total first-order state components: `(u, ut, ux) = (N, N, 3N)`.
pub const STATE_COMP: usize = 5 * N_COMP;

/// The 50-component first-order unknown, stored component-major.
/// Layout: `0..10` = `u = g - m`, `10..20` = `d_t g`, `20..50` = spatial
/// gradient, axis-major (`20 + a*10 + pair`).
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    grid: Grid3,
    data: Vec<f64>,
}

impl StateField {
    pub fn zeros(grid: Grid3) -> Self {
        Self {
            grid,
            data: vec![0.0; STATE_COMP * grid.len()],
        }
    }

    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    #[inline]
    pub fn comp(&self, c: usize) -> &[f64] {
        let len = self.grid.len();
        &self.data[c * len..(c + 1) * len]
    }

    #[inline]
    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let len = self.grid.len();
        &mut self.data[c * len..(c + 1) * len]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn u_index(pair: usize) -> usize {
        pair
    }

    #[inline]
    pub fn ut_index(pair: usize) -> usize {
        N_COMP + pair
    }

    #[inline]
    pub fn ux_index(axis: usize, pair: usize) -> usize {
        2 * N_COMP + axis * N_COMP + pair
    }

    /// Metric components `u + m` at a point.
    #[inline]
    pub fn metric_at(&self, flat: usize) -> [f64; 10] {
        let len = self.grid.len();
        std::array::from_fn(|c| MINKOWSKI[c] + self.data[c * len + flat])
    }

    /// Derivative bundle `d_mu g` at a point read off the state blocks.
    #[inline]
    pub fn h_at(&self, flat: usize) -> DerivPoint {
        let len = self.grid.len();
        let mut h = [[0.0; 10]; 4];
        for c in 0..N_COMP {
            h[0][c] = self.data[(N_COMP + c) * len + flat];
            for a in 0..3 {
                h[1 + a][c] = self.data[(2 * N_COMP + a * N_COMP + c) * len + flat];
            }
        }
        h
    }

    /// Reconstruct the metric (with cached inverse) from the `u` block.
    pub fn metric(&self) -> Result<MetricField> {
        let len = self.grid.len();
        let comps: [Vec<f64>; 10] = std::array::from_fn(|c| {
            self.comp(c)
                .iter()
                .map(|v| MINKOWSKI[c] + v)
                .collect::<Vec<f64>>()
        });
        let _ = len;
        MetricField::new(self.grid, comps)
    }

    /// View as a product state (copies into scalar fields).
    pub fn as_product_state(&self) -> ProductState {
        let f = |c: usize| ScalarField::from_values(self.grid, self.comp(c).to_vec()).unwrap();
        ProductState::new(
            (0..N_COMP).map(f).collect(),
            (N_COMP..2 * N_COMP).map(f).collect(),
            (2 * N_COMP..STATE_COMP).map(f).collect(),
        )
        .expect("state layout is (N, N, 3N)")
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    pub fn add_scaled(&mut self, other: &StateField, a: f64) {
        debug_assert_eq!(self.grid, other.grid);
        for (v, w) in self.data.iter_mut().zip(&other.data) {
            *v += a * w;
        }
    }

    /// Largest support radius over all components.
    pub fn support_radius(&self) -> f64 {
        (0..STATE_COMP)
            .map(|c| {
                ScalarField::from_values(self.grid, self.comp(c).to_vec())
                    .unwrap()
                    .support_radius()
            })
            .fold(0.0, f64::max)
    }
}

/// Build the first-order state from a metric and its time derivative;
/// the spatial block is the centered gradient of the components.
pub fn to_first_order(metric: &MetricField, gt: &[Vec<f64>; 10], order: usize) -> StateField {
    let grid = metric.grid();
    let mut state = StateField::zeros(grid);
    for c in 0..N_COMP {
        let u = state.comp_mut(c);
        for (flat, v) in u.iter_mut().enumerate() {
            *v = metric.component(c)[flat] - MINKOWSKI[c];
        }
        state.comp_mut(StateField::ut_index(c)).copy_from_slice(&gt[c]);
    }
    let grads: Vec<(usize, usize, Vec<f64>)> = (0..N_COMP)
        .flat_map(|c| (0..3).map(move |a| (c, a)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(c, a)| {
            let f = ScalarField::from_values(grid, metric.component(c).to_vec()).unwrap();
            (c, a, derivative_axis(&f, a, order).into_values())
        })
        .collect();
    for (c, a, values) in grads {
        state
            .comp_mut(StateField::ux_index(a, c))
            .copy_from_slice(&values);
    }
    state
}

// ---------------------------------------------------------------------
// Block matrices
// ---------------------------------------------------------------------

/// Structural shape of one 10x10 block of the 5x5 block grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockShape {
    Zero,
    Identity,
    /// Pointwise scalar field times the 10x10 identity.
    ScalarTimesId,
    /// Constant scalar times the identity.
    ConstTimesId,
    /// General 10x10 matrix field (linear in the frozen state).
    General,
}

/// A single-entry additive corruption of the logical 50x50 matrix at one
/// grid point; used by the negative-control tests.
#[derive(Debug, Clone, Copy)]
pub struct Override {
    pub row: usize,
    pub col: usize,
    pub flat: usize,
    pub delta: f64,
}

#[derive(Debug, Clone)]
enum MatrixData {
    A0 {
        tilde: SymMat3Field,
    },
    Aa {
        axis: usize,
        /// `2 tilde g^(a0)`
        two_t_a0: Vec<f64>,
        /// `tilde g^(ab) - delta^(ab)` for `b = 0..3`
        t_ab_minus_delta: [Vec<f64>; 3],
    },
    Ca {
        axis: usize,
    },
    B {
        /// `(-g^00)^-1` of the frozen state
        neg_inv_g00: Vec<f64>,
        /// inverse metric of the frozen state
        ginv: [Vec<f64>; 10],
        /// frozen derivative entries `h[mu][pair]`
        h: Box<[[Vec<f64>; 10]; 4]>,
    },
}

/// Pointwise 50x50 block matrix in the `(N, N, 3N)` partition (stored as
/// a 5x5 grid of 10-blocks). Constant and sparse blocks are flagged.
#[derive(Debug, Clone)]
pub struct BlockMatrixField {
    grid: Grid3,
    label: &'static str,
    shapes: [[BlockShape; 5]; 5],
    data: MatrixData,
    overrides: Vec<Override>,
}

impl BlockMatrixField {
    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn shapes(&self) -> &[[BlockShape; 5]; 5] {
        self.shapes
            .as_ref()
            .try_into()
            .expect("shape array")
    }

    pub fn overrides(&self) -> &[Override] {
        &self.overrides
    }

    pub fn push_override(&mut self, o: Override) {
        self.overrides.push(o);
    }

    /// The `(3,3)` superblock for the A0 matrix.
    pub fn a33(&self) -> Option<&SymMat3Field> {
        match &self.data {
            MatrixData::A0 { tilde } => Some(tilde),
            _ => None,
        }
    }

    pub fn a33_mut(&mut self) -> Option<&mut SymMat3Field> {
        match &mut self.data {
            MatrixData::A0 { tilde } => Some(tilde),
            _ => None,
        }
    }

    /// Logical matrix entry (50x50) at one grid point, including
    /// overrides.
    pub fn entry(&self, row: usize, col: usize, flat: usize) -> f64 {
        let mut v = self.entry_base(row, col, flat);
        for o in &self.overrides {
            if o.row == row && o.col == col && o.flat == flat {
                v += o.delta;
            }
        }
        v
    }

    fn entry_base(&self, row: usize, col: usize, flat: usize) -> f64 {
        let (br, ir) = (row / N_COMP, row % N_COMP);
        let (bc, ic) = (col / N_COMP, col % N_COMP);
        match &self.data {
            MatrixData::A0 { tilde } => {
                if br == bc && br < 2 {
                    if ir == ic {
                        1.0
                    } else {
                        0.0
                    }
                } else if br >= 2 && bc >= 2 && ir == ic {
                    tilde.entry(br - 2, bc - 2)[flat]
                } else {
                    0.0
                }
            }
            MatrixData::Aa {
                two_t_a0,
                t_ab_minus_delta,
                ..
            } => {
                if ir != ic {
                    return 0.0;
                }
                match (br, bc) {
                    (1, 1) => two_t_a0[flat],
                    (1, b) if b >= 2 => t_ab_minus_delta[b - 2][flat],
                    (b, 1) if b >= 2 => t_ab_minus_delta[b - 2][flat],
                    _ => 0.0,
                }
            }
            MatrixData::Ca { axis } => {
                if ir != ic {
                    return 0.0;
                }
                match (br, bc) {
                    (1, b) if b >= 2 && b - 2 == *axis => 1.0,
                    (b, 1) if b >= 2 && b - 2 == *axis => 1.0,
                    _ => 0.0,
                }
            }
            MatrixData::B {
                neg_inv_g00,
                ginv,
                h,
            } => {
                if br == 0 && bc == 1 {
                    return if ir == ic { 1.0 } else { 0.0 };
                }
                if br == 1 && bc >= 1 {
                    // column basis: unit derivative entry (pair ic, slot mu)
                    let mu = bc - 1;
                    let gi: [f64; 10] = std::array::from_fn(|c| ginv[c][flat]);
                    let hf: DerivPoint =
                        std::array::from_fn(|m| std::array::from_fn(|c| h[m][c][flat]));
                    let mut basis: DerivPoint = [[0.0; 10]; 4];
                    basis[mu][ic] = 1.0;
                    let q = q_bilinear_point(&gi, &hf, &basis);
                    // bilinear is the half-sum of both insertions; the
                    // column of the linear-in-second-argument operator is
                    // exactly this polarized value times 2... no: apply on
                    // basis directly gives the column of v -> Q(h, v).
                    return -neg_inv_g00[flat] * q[ir];
                }
                0.0
            }
        }
    }

    /// Dense 50x50 matrix at one grid point (debug/report interface).
    pub fn dense_at(&self, flat: usize) -> Vec<Vec<f64>> {
        (0..STATE_COMP)
            .map(|r| {
                (0..STATE_COMP)
                    .map(|c| self.entry(r, c, flat))
                    .collect::<Vec<f64>>()
            })
            .collect()
    }

    /// Pointwise matrix-vector product with a state.
    pub fn apply(&self, v: &StateField) -> StateField {
        let grid = self.grid;
        let len = grid.len();
        let mut out = StateField::zeros(grid);
        match &self.data {
            MatrixData::A0 { tilde } => {
                for c in 0..2 * N_COMP {
                    out.comp_mut(c).copy_from_slice(v.comp(c));
                }
                for b in 0..3 {
                    for c in 0..N_COMP {
                        let oc = StateField::ux_index(b, c);
                        let dst = out.comp_mut(oc);
                        for a in 0..3 {
                            let t = tilde.entry(b, a);
                            let src = v.comp(StateField::ux_index(a, c));
                            for flat in 0..len {
                                dst[flat] += t[flat] * src[flat];
                            }
                        }
                    }
                }
            }
            MatrixData::Aa {
                two_t_a0,
                t_ab_minus_delta,
                ..
            } => {
                for c in 0..N_COMP {
                    let tc = StateField::ut_index(c);
                    // row ut
                    {
                        let dst = out.comp_mut(tc);
                        let src = v.comp(tc);
                        for flat in 0..len {
                            dst[flat] += two_t_a0[flat] * src[flat];
                        }
                        for b in 0..3 {
                            let src = v.comp(StateField::ux_index(b, c));
                            let t = &t_ab_minus_delta[b];
                            let dst = out.comp_mut(tc);
                            for flat in 0..len {
                                dst[flat] += t[flat] * src[flat];
                            }
                        }
                    }
                    // rows ux
                    for b in 0..3 {
                        let dst = out.comp_mut(StateField::ux_index(b, c));
                        let src = v.comp(tc);
                        let t = &t_ab_minus_delta[b];
                        for flat in 0..len {
                            dst[flat] += t[flat] * src[flat];
                        }
                    }
                }
            }
            MatrixData::Ca { axis } => {
                for c in 0..N_COMP {
                    let tc = StateField::ut_index(c);
                    let xc = StateField::ux_index(*axis, c);
                    let (dst, src) = (tc, xc);
                    out.comp_mut(dst).copy_from_slice(v.comp(src));
                    out.comp_mut(xc).copy_from_slice(v.comp(tc));
                }
            }
            MatrixData::B {
                neg_inv_g00,
                ginv,
                h,
            } => {
                for c in 0..N_COMP {
                    out.comp_mut(c).copy_from_slice(v.comp(StateField::ut_index(c)));
                }
                let rows: Vec<[f64; 10]> = (0..len)
                    .into_par_iter()
                    .map(|flat| {
                        let gi: [f64; 10] = std::array::from_fn(|c| ginv[c][flat]);
                        let hf: DerivPoint =
                            std::array::from_fn(|m| std::array::from_fn(|c| h[m][c][flat]));
                        let hv = v.h_at(flat);
                        let q = q_bilinear_point(&gi, &hf, &hv);
                        std::array::from_fn(|c| -neg_inv_g00[flat] * q[c])
                    })
                    .collect();
                for c in 0..N_COMP {
                    let dst = out.comp_mut(StateField::ut_index(c));
                    for (flat, row) in rows.iter().enumerate() {
                        dst[flat] = row[c];
                    }
                }
            }
        }
        // overrides act on the logical matrix
        let overrides = self.overrides.clone();
        for o in overrides {
            let vcol = v.comp(o.col)[o.flat];
            out.comp_mut(o.row)[o.flat] += o.delta * vcol;
        }
        out
    }
}

const A0_SHAPES: [[BlockShape; 5]; 5] = {
    use BlockShape::*;
    [
        [Identity, Zero, Zero, Zero, Zero],
        [Zero, Identity, Zero, Zero, Zero],
        [Zero, Zero, ScalarTimesId, ScalarTimesId, ScalarTimesId],
        [Zero, Zero, ScalarTimesId, ScalarTimesId, ScalarTimesId],
        [Zero, Zero, ScalarTimesId, ScalarTimesId, ScalarTimesId],
    ]
};

fn aa_shapes() -> [[BlockShape; 5]; 5] {
    use BlockShape::*;
    [
        [Zero, Zero, Zero, Zero, Zero],
        [Zero, ScalarTimesId, ScalarTimesId, ScalarTimesId, ScalarTimesId],
        [Zero, ScalarTimesId, Zero, Zero, Zero],
        [Zero, ScalarTimesId, Zero, Zero, Zero],
        [Zero, ScalarTimesId, Zero, Zero, Zero],
    ]
}

fn ca_shapes(axis: usize) -> [[BlockShape; 5]; 5] {
    use BlockShape::*;
    let mut s = [[Zero; 5]; 5];
    s[1][2 + axis] = ConstTimesId;
    s[2 + axis][1] = ConstTimesId;
    s
}

fn b_shapes() -> [[BlockShape; 5]; 5] {
    use BlockShape::*;
    [
        [Zero, Identity, Zero, Zero, Zero],
        [Zero, General, General, General, General],
        [Zero, Zero, Zero, Zero, Zero],
        [Zero, Zero, Zero, Zero, Zero],
        [Zero, Zero, Zero, Zero, Zero],
    ]
}

/// Check `g^00 < 0` everywhere (the light Lorentzian gate the assembly
/// needs; eigenvalue-based signature checks live on `MetricField`).
fn require_g00_negative(metric: &MetricField) -> Result<()> {
    let grid = metric.grid();
    for flat in 0..grid.len() {
        if metric.inv_component(0)[flat] >= 0.0 {
            let (ix, iy, iz) = grid.point(flat);
            return Err(Error::Signature {
                point: PointIndex { ix, iy, iz },
                detail: format!("g^00 = {}", metric.inv_component(0)[flat]),
            });
        }
    }
    Ok(())
}

/// `A0(u)`: identity on the first two blocks, `tilde g^(ab) (x) id` on
/// the spatial superblock.
pub fn assemble_a0(metric: &MetricField) -> Result<BlockMatrixField> {
    require_g00_negative(metric)?;
    Ok(BlockMatrixField {
        grid: metric.grid(),
        label: "A0",
        shapes: A0_SHAPES,
        data: MatrixData::A0 {
            tilde: metric.tilde_spatial(),
        },
        overrides: Vec::new(),
    })
}

/// `A^a(u)`: `2 tilde g^(a0)` on the `(2,2)` block and
/// `tilde g^(ab) - delta^(ab)` coupling the `ut` and `ux` blocks.
pub fn assemble_aa(metric: &MetricField, axis: usize) -> Result<BlockMatrixField> {
    require_g00_negative(metric)?;
    let grid = metric.grid();
    let t_a0 = metric.tilde_time_mixed(axis + 1);
    let two_t_a0: Vec<f64> = t_a0.iter().map(|v| 2.0 * v).collect();
    let tilde = metric.tilde_spatial();
    let t_ab_minus_delta: [Vec<f64>; 3] = std::array::from_fn(|b| {
        let delta = if b == axis { 1.0 } else { 0.0 };
        tilde
            .entry(axis, b)
            .iter()
            .map(|v| v - delta)
            .collect::<Vec<f64>>()
    });
    Ok(BlockMatrixField {
        grid,
        label: "Aa",
        shapes: aa_shapes(),
        data: MatrixData::Aa {
            axis,
            two_t_a0,
            t_ab_minus_delta,
        },
        overrides: Vec::new(),
    })
}

/// `C^a`: the constant Kronecker pattern coupling `ut` with the axis-`a`
/// derivative block.
pub fn constant_ca(grid: Grid3, axis: usize) -> BlockMatrixField {
    BlockMatrixField {
        grid,
        label: "Ca",
        shapes: ca_shapes(axis),
        data: MatrixData::Ca { axis },
        overrides: Vec::new(),
    }
}

/// `B(U)`: the constant identity `(1,2)` block encoding `d_t u = ut`
/// plus the second block row, linear in the derivative entries of the
/// frozen state, generated from the quadratic form of the reduced
/// equations (`row-2 of B(U) V = -(-g^00)^-1 Q(g; dU, dV)`).
pub fn assemble_b(metric: &MetricField, state: &StateField) -> Result<BlockMatrixField> {
    require_g00_negative(metric)?;
    let grid = metric.grid();
    let len = grid.len();
    let neg_inv_g00: Vec<f64> = (0..len)
        .map(|flat| -1.0 / metric.inv_component(0)[flat])
        .collect();
    let ginv: [Vec<f64>; 10] = std::array::from_fn(|c| metric.inv_component(c).to_vec());
    let h: Box<[[Vec<f64>; 10]; 4]> = Box::new(std::array::from_fn(|mu| {
        std::array::from_fn(|c| {
            if mu == 0 {
                state.comp(StateField::ut_index(c)).to_vec()
            } else {
                state.comp(StateField::ux_index(mu - 1, c)).to_vec()
            }
        })
    }));
    Ok(BlockMatrixField {
        grid,
        label: "B",
        shapes: b_shapes(),
        data: MatrixData::B {
            neg_inv_g00,
            ginv,
            h,
        },
        overrides: Vec::new(),
    })
}

/// The full coefficient set assembled from one state.
pub struct SystemMatrices {
    pub a0: BlockMatrixField,
    pub aa: [BlockMatrixField; 3],
    pub ca: [BlockMatrixField; 3],
    pub b: BlockMatrixField,
}

impl SystemMatrices {
    pub fn assemble(state: &StateField) -> Result<Self> {
        let metric = state.metric()?;
        Self::assemble_from(&metric, state)
    }

    pub fn assemble_from(metric: &MetricField, state: &StateField) -> Result<Self> {
        Ok(Self {
            a0: assemble_a0(metric)?,
            aa: [
                assemble_aa(metric, 0)?,
                assemble_aa(metric, 1)?,
                assemble_aa(metric, 2)?,
            ],
            ca: std::array::from_fn(|a| constant_ca(state.grid(), a)),
            b: assemble_b(metric, state)?,
        })
    }
}

// ---------------------------------------------------------------------
// Structural condition checks
// ---------------------------------------------------------------------

/// One checked condition with its outcome.
#[derive(Debug, Clone)]
pub struct ConditionResult {
    pub tag: &'static str,
    pub description: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Full structure report: per-condition outcomes plus the norms entering
/// the energy-estimate constant.
#[derive(Debug, Clone)]
pub struct StructureReport {
    pub conditions: Vec<ConditionResult>,
    /// Tightest constant with the `a33` spectrum in `[1/c0, c0]`.
    pub c0: Option<f64>,
    pub norm_a0_minus_e: f64,
    pub norm_aa: [f64; 3],
    pub norm_b_tilde: f64,
    pub sup_dt_a0: f64,
}

impl StructureReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn failed_tags(&self) -> Vec<&'static str> {
        self.conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.tag)
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.conditions {
            out.push_str(&format!(
                "{:11} {}  {} — {}\n",
                c.tag,
                if c.pass { "PASS" } else { "FAIL" },
                c.description,
                c.detail
            ));
        }
        if let Some(c0) = self.c0 {
            out.push_str(&format!("c0 = {c0:.6}\n"));
        }
        out.push_str(&format!(
            "|A0 - e|_(s+1,delta) = {:.6e}\n|A^a|_(s+1,delta) = [{:.3e}, {:.3e}, {:.3e}]\n|B~|_(s,delta+1) = {:.6e}\nsup |d_t A0| = {:.3e}\n",
            self.norm_a0_minus_e,
            self.norm_aa[0],
            self.norm_aa[1],
            self.norm_aa[2],
            self.norm_b_tilde,
            self.sup_dt_a0
        ));
        out
    }
}

fn override_breaks_region(
    m: &BlockMatrixField,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> Option<String> {
    for o in m.overrides() {
        if rows.contains(&o.row) && cols.contains(&o.col) && o.delta != 0.0 {
            return Some(format!(
                "{} entry ({}, {}) perturbed by {:.3e} at flat {}",
                m.label(),
                o.row,
                o.col,
                o.delta,
                o.flat
            ));
        }
    }
    None
}

/// Check the structural conditions of the symmetric-hyperbolic form on
/// an assembled coefficient set, and report the norms that control the
/// energy-estimate constant. `state` supplies `d_t u` for the
/// `sup |d_t A0|` report.
pub fn check_structure(
    mats: &SystemMatrices,
    state: &StateField,
    partition: &DyadicPartition,
    s: f64,
    delta: f64,
) -> Result<StructureReport> {
    let grid = mats.a0.grid();
    let mut conditions = Vec::new();

    // (a0-blocks): a0_11 = a0_22 = e, off-diagonal first rows/cols zero.
    {
        let broke = override_breaks_region(&mats.a0, 0..2 * N_COMP, 0..STATE_COMP)
            .or_else(|| override_breaks_region(&mats.a0, 0..STATE_COMP, 0..2 * N_COMP));
        conditions.push(ConditionResult {
            tag: "a0-blocks",
            description: "A0 has identity first blocks and zero couplings",
            pass: broke.is_none(),
            detail: broke.unwrap_or_else(|| "structural".into()),
        });
    }

    // (a33-spd): symmetric with spectrum in [1/c0, c0].
    let c0 = match mats.a0.a33() {
        Some(t) => match t.c0() {
            Ok(c0) => {
                conditions.push(ConditionResult {
                    tag: "a33-spd",
                    description: "a33 symmetric with positive spectrum",
                    pass: true,
                    detail: format!("c0 = {c0:.6}"),
                });
                Some(c0)
            }
            Err(e) => {
                conditions.push(ConditionResult {
                    tag: "a33-spd",
                    description: "a33 symmetric with positive spectrum",
                    pass: false,
                    detail: e.to_string(),
                });
                None
            }
        },
        None => unreachable!("A0 carries the a33 block"),
    };

    // (a0-norm): A0 - e finite in H_(s+1, delta) componentwise.
    let params = NormParams::new(s + 1.0, delta)?;
    let mut norm_a0_sq = 0.0;
    if let Some(t) = mats.a0.a33() {
        for a in 0..3 {
            for b in a..3 {
                let delta_ab = if a == b { 1.0 } else { 0.0 };
                let dev: Vec<f64> = t.entry(a, b).iter().map(|v| v - delta_ab).collect();
                let f = ScalarField::from_values(grid, dev).unwrap();
                let mult = if a == b { 1.0 } else { 2.0 };
                norm_a0_sq += mult * norm_hsd_unchecked(&f, partition, &params).powi(2);
            }
        }
    }
    let norm_a0_minus_e = norm_a0_sq.sqrt();
    conditions.push(ConditionResult {
        tag: "a0-norm",
        description: "A0 - e finite in the weighted norm",
        pass: norm_a0_minus_e.is_finite(),
        detail: format!("{norm_a0_minus_e:.6e}"),
    });

    // (aa-sym): A^a symmetric with zero first block row/col.
    let mut norm_aa = [0.0; 3];
    {
        let mut pass = true;
        let mut detail = String::from("structural");
        for (axis, aam) in mats.aa.iter().enumerate() {
            if let Some(msg) = override_breaks_region(aam, 0..N_COMP, 0..STATE_COMP)
                .or_else(|| override_breaks_region(aam, 0..STATE_COMP, 0..N_COMP))
            {
                pass = false;
                detail = format!("first block row/col nonzero: {msg}");
            }
            // symmetry including overrides: check overridden cells
            for o in aam.overrides() {
                let fwd = aam.entry(o.row, o.col, o.flat);
                let bwd = aam.entry(o.col, o.row, o.flat);
                if (fwd - bwd).abs() > 1e-14 {
                    pass = false;
                    detail = format!(
                        "A^{axis} asymmetric at flat {}: entry ({},{}) = {fwd:.6e} vs ({},{}) = {bwd:.6e}",
                        o.flat, o.row, o.col, o.col, o.row
                    );
                }
            }
            // norms of the varying entries
            if let MatrixData::Aa {
                two_t_a0,
                t_ab_minus_delta,
                ..
            } = &aam.data
            {
                let mut sq = 0.0;
                let f = ScalarField::from_values(grid, two_t_a0.clone()).unwrap();
                sq += norm_hsd_unchecked(&f, partition, &params).powi(2);
                for t in t_ab_minus_delta {
                    let f = ScalarField::from_values(grid, t.clone()).unwrap();
                    sq += 2.0 * norm_hsd_unchecked(&f, partition, &params).powi(2);
                }
                norm_aa[axis] = sq.sqrt();
            }
        }
        conditions.push(ConditionResult {
            tag: "aa-sym",
            description: "A^a symmetric with zero first block row/col",
            pass,
            detail,
        });
    }

    // (ca-const): C^a constant symmetric with zero first block row/col.
    {
        let mut pass = true;
        let mut detail = String::from("constant Kronecker pattern");
        for ca in &mats.ca {
            if !ca.overrides().is_empty() {
                pass = false;
                let o = ca.overrides()[0];
                detail = format!(
                    "C^a not constant: entry ({}, {}) differs at flat {}",
                    o.row, o.col, o.flat
                );
            }
        }
        conditions.push(ConditionResult {
            tag: "ca-const",
            description: "C^a constant symmetric with zero first block row/col",
            pass,
            detail,
        });
    }

    // (b-struct): b_i1 = 0 and b_1j constant.
    {
        let broke = override_breaks_region(&mats.b, 0..STATE_COMP, 0..N_COMP)
            .or_else(|| override_breaks_region(&mats.b, 0..N_COMP, 0..STATE_COMP));
        conditions.push(ConditionResult {
            tag: "b-struct",
            description: "B has zero first block column and constant first block row",
            pass: broke.is_none(),
            detail: broke.unwrap_or_else(|| "structural".into()),
        });
    }

    // B~ norm: varying second-row blocks, entrywise weighted norms via
    // basis columns of the linearized quadratic form.
    let bt_params = NormParams::new(s, delta + 1.0)?;
    let norm_b_tilde = {
        let cols: Vec<(usize, usize)> = (0..4)
            .flat_map(|mu| (0..N_COMP).map(move |c| (mu, c)))
            .collect();
        let sq: f64 = cols
            .par_iter()
            .map(|&(mu, c)| {
                let mut col_sq = 0.0;
                let mut fields: [Vec<f64>; 10] = std::array::from_fn(|_| vec![0.0; grid.len()]);
                if let MatrixData::B {
                    neg_inv_g00,
                    ginv,
                    h,
                } = &mats.b.data
                {
                    for flat in 0..grid.len() {
                        let gi: [f64; 10] = std::array::from_fn(|k| ginv[k][flat]);
                        let hf: DerivPoint =
                            std::array::from_fn(|m| std::array::from_fn(|k| h[m][k][flat]));
                        let mut basis: DerivPoint = [[0.0; 10]; 4];
                        basis[mu][c] = 1.0;
                        let q = q_bilinear_point(&gi, &hf, &basis);
                        for r in 0..N_COMP {
                            fields[r][flat] = -neg_inv_g00[flat] * q[r];
                        }
                    }
                }
                for f in fields {
                    let sf = ScalarField::from_values(grid, f).unwrap();
                    col_sq += norm_hsd_unchecked(&sf, partition, &bt_params).powi(2);
                }
                col_sq
            })
            .sum();
        sq.sqrt()
    };

    // sup |d_t A0|: chain rule through the inverse metric with d_t g = ut.
    let metric = state.metric()?;
    let mut sup_dt_a0 = 0.0f64;
    for flat in 0..grid.len() {
        let gi = metric.inv_at(flat);
        let mut dt_gi = [0.0; 10];
        let len = grid.len();
        for (slot, &(a, b)) in crate::geometry::P4.iter().enumerate() {
            let mut acc = 0.0;
            for r in 0..4 {
                for q in 0..4 {
                    acc -= gi[p4(a, r)]
                        * gi[p4(b, q)]
                        * state.data()[(N_COMP + p4(r, q)) * len + flat];
                }
            }
            dt_gi[slot] = acc;
        }
        let neg00 = -gi[0];
        let dt_neg00 = -dt_gi[0];
        for a in 1..4 {
            for b in a..4 {
                // d_t (g^(ab) / -g^00)
                let v = dt_gi[p4(a, b)] / neg00 - gi[p4(a, b)] * dt_neg00 / (neg00 * neg00);
                sup_dt_a0 = sup_dt_a0.max(v.abs());
            }
        }
    }

    Ok(StructureReport {
        conditions,
        c0,
        norm_a0_minus_e,
        norm_aa,
        norm_b_tilde,
        sup_dt_a0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::AnalyticMetric;
    use crate::fields;
    use crate::geometry::{sym4_inv, q_point};
    use crate::sobolev::partition::build_partition;

    fn grid() -> Grid3 {
        Grid3::new(16, 16.0).unwrap()
    }

    fn flat_state(grid: Grid3) -> StateField {
        StateField::zeros(grid)
    }

    fn bump_state(grid: Grid3, seed: u64, eps: f64) -> StateField {
        let am = AnalyticMetric::random_perturbation(seed, eps);
        let metric = am.metric_on(grid, 0.0).unwrap();
        let gt = am.dt_on(grid, 0.0);
        to_first_order(&metric, &gt, 4)
    }

    #[test]
    fn flat_state_yields_identity_a0_and_zero_aa() {
        let g = grid();
        let state = flat_state(g);
        let mats = SystemMatrices::assemble(&state).unwrap();
        // A0 = identity: dense check at one point
        let d = mats.a0.dense_at(3);
        for r in 0..STATE_COMP {
            for c in 0..STATE_COMP {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((d[r][c] - expect).abs() < 1e-14, "A0[{r}][{c}]");
            }
        }
        // A^a = 0
        for aa in &mats.aa {
            let d = aa.dense_at(3);
            for row in &d {
                for v in row {
                    assert_eq!(*v, 0.0);
                }
            }
        }
        // B has only the (1,2) identity block
        let d = mats.b.dense_at(3);
        for r in 0..STATE_COMP {
            for c in 0..STATE_COMP {
                let expect = if r < N_COMP && c == r + N_COMP { 1.0 } else { 0.0 };
                assert!(
                    (d[r][c] - expect).abs() < 1e-14,
                    "B[{r}][{c}] = {}",
                    d[r][c]
                );
            }
        }
    }

    #[test]
    fn to_first_order_gradient_slots() {
        let g = Grid3::new(32, 16.0).unwrap();
        // bump in g_11 only
        let bump = fields::gaussian_bump(g, [0.0, 0.0, 0.0], 1.5, 1e-2);
        let mut comps: [Vec<f64>; 10] = std::array::from_fn(|c| vec![MINKOWSKI[c]; g.len()]);
        for (flat, v) in bump.values().iter().enumerate() {
            comps[p4(1, 1)][flat] += v;
        }
        let metric = MetricField::new(g, comps).unwrap();
        let gt: [Vec<f64>; 10] = std::array::from_fn(|_| vec![0.0; g.len()]);
        let state = to_first_order(&metric, &gt, 4);
        for c in 0..N_COMP {
            for a in 0..3 {
                let m = state
                    .comp(StateField::ux_index(a, c))
                    .iter()
                    .fold(0.0f64, |mm, v| mm.max(v.abs()));
                if c == p4(1, 1) {
                    assert!(m > 0.0, "gradient slot for g_11 axis {a} should be nonzero");
                } else {
                    assert_eq!(m, 0.0, "component {c} axis {a} should be zero");
                }
            }
        }
        // round trip: reconstructed metric equals the input
        let m2 = state.metric().unwrap();
        for c in 0..10 {
            for (x, y) in m2.component(c).iter().zip(metric.component(c)) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ca_is_state_independent_and_symmetric() {
        let g = grid();
        let s1 = bump_state(g, 1, 1e-2);
        let s2 = bump_state(g, 2, 5e-2);
        let m1 = SystemMatrices::assemble(&s1).unwrap();
        let m2 = SystemMatrices::assemble(&s2).unwrap();
        for a in 0..3 {
            let d1 = m1.ca[a].dense_at(7);
            let d2 = m2.ca[a].dense_at(7);
            assert_eq!(d1, d2, "C^{a} must be bit-identical across states");
        }
        // (A^a + C^a) symmetric pointwise
        let flat = 11;
        for a in 0..3 {
            let daa = m1.aa[a].dense_at(flat);
            let dca = m1.ca[a].dense_at(flat);
            for r in 0..STATE_COMP {
                for c in 0..STATE_COMP {
                    let s_rc = daa[r][c] + dca[r][c];
                    let s_cr = daa[c][r] + dca[c][r];
                    assert!((s_rc - s_cr).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn b_row_two_matches_quadratic_rhs() {
        let g = grid();
        let state = bump_state(g, 5, 5e-2);
        let metric = state.metric().unwrap();
        let b = assemble_b(&metric, &state).unwrap();
        let bu = b.apply(&state);
        for flat in (0..g.len()).step_by(37) {
            let gi = metric.inv_at(flat);
            let h = state.h_at(flat);
            let q = q_point(&gi, &h);
            let neg00inv = -1.0 / gi[0];
            for c in 0..N_COMP {
                let got = bu.comp(StateField::ut_index(c))[flat];
                let expect = -neg00inv * q[c];
                assert!(
                    (got - expect).abs() < 1e-12 * (1.0 + expect.abs()),
                    "flat {flat} comp {c}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn semi_discrete_consistency_with_wave_equation() {
        // with exact time derivatives inserted, the row-two residual of
        // the assembled system equals -(wave residual)/(-g00) computed
        // from analytic second derivatives, up to the spatial stencil
        // truncation; the mismatch must vanish at stencil order
        let mismatch = |n: usize| -> f64 {
            let g = Grid3::new(n, 16.0).unwrap();
            let am = AnalyticMetric::random_perturbation(21, 2e-2);
            let metric = am.metric_on(g, 0.0).unwrap();
            let gt = am.dt_on(g, 0.0);
            let state = to_first_order(&metric, &gt, 4);
            let mats = SystemMatrices::assemble_from(&metric, &state).unwrap();

            let dstates: Vec<StateField> = (0..3)
                .map(|a| {
                    let mut d = StateField::zeros(g);
                    for c in 0..STATE_COMP {
                        let f = ScalarField::from_values(g, state.comp(c).to_vec()).unwrap();
                        d.comp_mut(c)
                            .copy_from_slice(&derivative_axis(&f, a, 4).into_values());
                    }
                    d
                })
                .collect();

            let mut rhs = StateField::zeros(g);
            for a in 0..3 {
                rhs.add_scaled(&mats.aa[a].apply(&dstates[a]), 1.0);
                rhs.add_scaled(&mats.ca[a].apply(&dstates[a]), 1.0);
            }
            rhs.add_scaled(&mats.b.apply(&state), 1.0);

            let d2 = am.second_derivs_on(g, 0.0);
            let mut worst = 0.0f64;
            for flat in 0..g.len() {
                let gi = metric.inv_at(flat);
                let h = state.h_at(flat);
                let dd = d2.at(flat);
                let q = q_point(&gi, &h);
                let neg00inv = -1.0 / gi[0];
                for c in 0..N_COMP {
                    let mut wave = 0.0;
                    for al in 0..4 {
                        for be in 0..4 {
                            wave += gi[p4(al, be)] * dd[p4(al, be)][c];
                        }
                    }
                    let system_dt_ut = rhs.comp(StateField::ut_index(c))[flat];
                    let exact_dt_ut = dd[p4(0, 0)][c];
                    let resid = exact_dt_ut - system_dt_ut;
                    let expect = -neg00inv * (wave - q[c]);
                    worst = worst.max((resid - expect).abs());
                }
            }
            worst
        };
        let coarse = mismatch(32);
        let fine = mismatch(64);
        let ratio = coarse / fine;
        assert!(
            ratio > 8.0 && fine < 5e-4,
            "consistency mismatch {coarse:.3e} -> {fine:.3e}, ratio {ratio:.2}"
        );
    }

    #[test]
    fn structure_check_passes_on_perturbed_state() {
        let g = Grid3::new(32, 16.0).unwrap();
        let p = build_partition(g, 8).unwrap();
        let state = bump_state(g, 9, 1e-3);
        let mats = SystemMatrices::assemble(&state).unwrap();
        let report = check_structure(&mats, &state, &p, 1.6, -1.0).unwrap();
        assert!(report.all_pass(), "{}", report.render());
        let c0 = report.c0.unwrap();
        assert!(c0 <= 1.01, "c0 = {c0}");
        assert!(report.norm_a0_minus_e.is_finite());
        assert!(report.norm_b_tilde.is_finite());
    }

    #[test]
    fn negative_controls_fail_their_conditions() {
        let g = grid();
        let p = build_partition(g, 8).unwrap();
        let state = bump_state(g, 13, 1e-3);

        // corrupted A^a symmetry
        {
            let mut mats = SystemMatrices::assemble(&state).unwrap();
            mats.aa[0].push_override(Override {
                row: N_COMP,
                col: 2 * N_COMP,
                flat: 5,
                delta: 1e-3,
            });
            let r = check_structure(&mats, &state, &p, 1.6, -1.0).unwrap();
            assert!(r.failed_tags().contains(&"aa-sym"), "{}", r.render());
        }
        // corrupted A0 identity block
        {
            let mut mats = SystemMatrices::assemble(&state).unwrap();
            mats.a0.push_override(Override {
                row: 0,
                col: 0,
                flat: 5,
                delta: 0.5,
            });
            let r = check_structure(&mats, &state, &p, 1.6, -1.0).unwrap();
            assert!(r.failed_tags().contains(&"a0-blocks"));
        }
        // indefinite a33
        {
            let mut mats = SystemMatrices::assemble(&state).unwrap();
            mats.a0.a33_mut().unwrap().entry_mut(0, 0)[5] = -1.0;
            let r = check_structure(&mats, &state, &p, 1.6, -1.0).unwrap();
            assert!(r.failed_tags().contains(&"a33-spd"));
        }
        // non-constant C^a
        {
            let mut mats = SystemMatrices::assemble(&state).unwrap();
            mats.ca[1].push_override(Override {
                row: N_COMP,
                col: 2 * N_COMP + N_COMP,
                flat: 5,
                delta: 1e-6,
            });
            let r = check_structure(&mats, &state, &p, 1.6, -1.0).unwrap();
            assert!(r.failed_tags().contains(&"ca-const"));
        }
        // nonzero first block column of B
        {
            let mut mats = SystemMatrices::assemble(&state).unwrap();
            mats.b.push_override(Override {
                row: N_COMP,
                col: 0,
                flat: 5,
                delta: 1e-3,
            });
            let r = check_structure(&mats, &state, &p, 1.6, -1.0).unwrap();
            assert!(r.failed_tags().contains(&"b-struct"));
        }
    }
}

