//! Partition function and moments on tensor Gauss-Legendre grids.
//!
//! The log-density is shifted by its global maximum over the grid, so the
//! accumulation never overflows; slices along the first axis are processed in
//! fixed-size blocks and combined in order with compensated summation, which
//! keeps results bit-identical for any thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::{build_grid, GridSummary, QuadratureGrid, Refinement, MAX_GRID_DIM};
use super::ParamVector;
use crate::error::{Error, Result};
use crate::polybasis::{CompiledPoly, PolyCoeffs};

/// Largest change in `log Z` tolerated when the points per axis are doubled.
pub const GRID_TOLERANCE: f64 = 1e-8;
const BLOCK: usize = 8;
/// Below this, `exp` returns exactly zero in double precision.
const UNDERFLOW: f64 = -746.0;

/// Running sum with Neumaier compensation.
#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Maps `f` over `0..len` in parallel blocks and folds results strictly in index order.
pub(crate) fn ordered_fold<T, F, G>(len: usize, map: F, mut fold: G)
where
    T: Send,
    F: Fn(usize) -> T + Sync,
    G: FnMut(usize, T),
{
    let mut start = 0;
    while start < len {
        let end = (start + BLOCK).min(len);
        let parts: Vec<T> = (start..end).into_par_iter().map(&map).collect();
        for (off, part) in parts.into_iter().enumerate() {
            fold(start + off, part);
        }
        start = end;
    }
}

/// One padded axis: the real grid axis, or a single node at 0 with weight 1.
struct Axis<'a> {
    nodes: &'a [f64],
    weights: &'a [f64],
}

const ORIGIN: [f64; 1] = [0.0];
const UNIT: [f64; 1] = [1.0];

fn padded_axes(grid: &QuadratureGrid) -> [Axis<'_>; 3] {
    let real = || Axis {
        nodes: grid.nodes(),
        weights: grid.weights(),
    };
    let dummy = || Axis {
        nodes: &ORIGIN,
        weights: &UNIT,
    };
    match grid.n() {
        1 => [dummy(), dummy(), real()],
        2 => [dummy(), real(), real()],
        _ => [real(), real(), real()],
    }
}

#[inline]
fn half(x: f64) -> usize {
    usize::from(x >= 0.0)
}

/// The log-density regrouped for slice evaluation: for every power `e2` of the
/// last axis and `e1` of the middle axis, the terms `(e0, coeff)`.
struct SlicedPoly {
    deg: usize,
    groups: Vec<Vec<Vec<(usize, f64)>>>,
}

impl SlicedPoly {
    fn new(poly: &CompiledPoly) -> Self {
        let n = poly.n();
        let deg = poly.max_degree();
        let mut groups = vec![vec![Vec::new(); deg + 1]; deg + 1];
        for (e, c) in poly.terms() {
            let mut padded = [0usize; 3];
            for (slot, &ei) in padded[3 - n..].iter_mut().zip(e) {
                *slot = ei as usize;
            }
            groups[padded[2]][padded[1]].push((padded[0], c));
        }
        Self { deg, groups }
    }

    /// Coefficients `a[e2][e1]` after fixing `x0`.
    fn fix_first(&self, x0: f64) -> Vec<Vec<f64>> {
        let pw: Vec<f64> = (0..=self.deg).map(|k| x0.powi(k as i32)).collect();
        self.groups
            .iter()
            .map(|row| {
                row.iter()
                    .map(|terms| terms.iter().map(|&(e0, c)| c * pw[e0]).sum())
                    .collect()
            })
            .collect()
    }

    /// Last-axis coefficients after fixing `x1`.
    fn fix_second(a: &[Vec<f64>], x1: f64, out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(a) {
            *o = row.iter().rev().fold(0.0, |acc, &c| acc * x1 + c);
        }
    }
}

#[inline]
fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Sign-split power sums `sum w exp(l - shift) x0^a0 x1^a1 x2^a2` over the grid,
/// for every exponent up to `k` on each (padded) axis.
#[derive(Clone, Debug)]
pub struct MomentTable {
    n: usize,
    k: usize,
    log_shift: f64,
    table: Vec<f64>,
    total: f64,
}

impl MomentTable {
    pub fn build(p: &ParamVector, grid: &QuadratureGrid, k: usize) -> Result<Self> {
        Self::from_log_density(&p.log_density_poly(), grid, k)
    }

    /// Works for any log-density polynomial that decays on the grid.
    pub fn from_log_density(poly: &PolyCoeffs, grid: &QuadratureGrid, k: usize) -> Result<Self> {
        if poly.n() != grid.n() {
            return Err(Error::DimensionMismatch {
                expected: grid.n(),
                got: poly.n(),
            });
        }
        let compiled = CompiledPoly::new(poly);
        let sliced = SlicedPoly::new(&compiled);
        let axes = padded_axes(grid);
        let deg = sliced.deg;

        // pass 1: global maximum of the log-density over the nodes
        let maxima: Vec<f64> = (0..axes[0].nodes.len())
            .into_par_iter()
            .map(|i| {
                let a = sliced.fix_first(axes[0].nodes[i]);
                let mut c = vec![0.0; deg + 1];
                let mut m = f64::NEG_INFINITY;
                for &x1 in axes[1].nodes {
                    SlicedPoly::fix_second(&a, x1, &mut c);
                    for &x2 in axes[2].nodes {
                        m = m.max(horner(&c, x2));
                    }
                }
                m
            })
            .collect();
        let shift = maxima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::Quadrature("log-density is not finite on the grid".into()));
        }

        // pass 2: power sums
        let stride = k + 1;
        let q = 2 * stride;
        let mut acc = vec![Compensated::default(); q * q * q];
        ordered_fold(
            axes[0].nodes.len(),
            |i| {
                // every exp() on this slice underflows to exactly 0
                if maxima[i] - shift < UNDERFLOW {
                    return Vec::new();
                }
                let a = sliced.fix_first(axes[0].nodes[i]);
                let mut c = vec![0.0; deg + 1];
                let mut inner = vec![0.0; q * q];
                let mut v = vec![0.0; q];
                for (&x1, &w1) in axes[1].nodes.iter().zip(axes[1].weights) {
                    SlicedPoly::fix_second(&a, x1, &mut c);
                    v.iter_mut().for_each(|s| *s = 0.0);
                    let mut any = false;
                    for (&x2, &w2) in axes[2].nodes.iter().zip(axes[2].weights) {
                        let e = w2 * (horner(&c, x2) - shift).exp();
                        if e == 0.0 {
                            continue;
                        }
                        any = true;
                        let base = half(x2) * stride;
                        let mut pw = e;
                        for slot in &mut v[base..base + stride] {
                            *slot += pw;
                            pw *= x2;
                        }
                    }
                    if !any {
                        continue;
                    }
                    let row0 = half(x1) * stride;
                    let mut f = w1;
                    for a1 in 0..stride {
                        let row = &mut inner[(row0 + a1) * q..(row0 + a1 + 1) * q];
                        for (r, &vv) in row.iter_mut().zip(&v) {
                            *r += f * vv;
                        }
                        f *= x1;
                    }
                }
                inner
            },
            |i, inner| {
                if inner.is_empty() {
                    return;
                }
                let x0 = axes[0].nodes[i];
                let row0 = half(x0) * stride;
                let mut f = axes[0].weights[i];
                for a0 in 0..stride {
                    let block = &mut acc[(row0 + a0) * q * q..(row0 + a0 + 1) * q * q];
                    for (slot, &val) in block.iter_mut().zip(&inner) {
                        slot.add(f * val);
                    }
                    f *= x0;
                }
            },
        );
        let table: Vec<f64> = acc.iter().map(Compensated::value).collect();
        let mut out = Self {
            n: grid.n(),
            k,
            log_shift: shift,
            table,
            total: 0.0,
        };
        out.total = out.raw_sum(&[0; 3], None);
        if !(out.total > 0.0 && out.total.is_finite()) {
            return Err(Error::Quadrature("integrand underflows on every node".into()));
        }
        Ok(out)
    }

    fn pad<T: Copy + Default>(&self, v: &[T]) -> [T; 3] {
        let mut out = [T::default(); 3];
        out[3 - self.n..].copy_from_slice(v);
        out
    }

    /// Sum over the halves allowed by `signs` (`None` sums both halves per axis).
    fn raw_sum(&self, exps: &[usize; 3], signs: Option<[usize; 3]>) -> f64 {
        let stride = self.k + 1;
        let q = 2 * stride;
        let mut s = 0.0;
        for h0 in 0..2 {
            for h1 in 0..2 {
                for h2 in 0..2 {
                    let h = [h0, h1, h2];
                    if let Some(sg) = signs {
                        if h != sg {
                            continue;
                        }
                    }
                    let i0 = h0 * stride + exps[0];
                    let i1 = h1 * stride + exps[1];
                    let i2 = h2 * stride + exps[2];
                    s += self.table[(i0 * q + i1) * q + i2];
                }
            }
        }
        s
    }

    pub fn max_power(&self) -> usize {
        self.k
    }

    /// `log` of the quadrature sum of `exp(log-density)`.
    pub fn log_partition(&self) -> f64 {
        self.log_shift + self.total.ln()
    }

    /// `E[x^gamma]`; every entry of `gamma` must be at most the table's max power.
    pub fn moment(&self, gamma: &[u8]) -> f64 {
        assert_eq!(gamma.len(), self.n);
        let g: Vec<usize> = gamma.iter().map(|&e| e as usize).collect();
        assert!(g.iter().all(|&e| e <= self.k), "moment order beyond table");
        let exps = self.pad(&g);
        // absent axes contribute only their power 0
        self.raw_sum(&exps, None) / self.total
    }

    /// Mass of the orthant `{x : sign(x_i) = signs[i]}` (`true` for nonnegative).
    pub fn orthant_mass(&self, signs: &[bool]) -> f64 {
        assert_eq!(signs.len(), self.n);
        let mut h = [1usize; 3];
        for (slot, &s) in h[3 - self.n..].iter_mut().zip(signs) {
            *slot = usize::from(s);
        }
        self.raw_sum(&[0; 3], Some(h)) / self.total
    }
}

/// Quadrature moments of `T` under `p_theta`.
#[derive(Clone, Debug)]
pub struct Moments {
    pub log_z: f64,
    pub mean_t: DVector<f64>,
    pub second_t: DMatrix<f64>,
}

impl Moments {
    /// `Cov(T) = E[T T^T] - E[T] E[T]^T`, symmetrized.
    pub fn covariance(&self) -> DMatrix<f64> {
        let c = &self.second_t - &self.mean_t * self.mean_t.transpose();
        (&c + c.transpose()) * 0.5
    }
}

fn check_grid(p: &ParamVector, grid: &QuadratureGrid) -> Result<()> {
    if grid.n() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: grid.n(),
        });
    }
    Ok(())
}

pub fn log_partition(p: &ParamVector, grid: &QuadratureGrid) -> Result<f64> {
    check_grid(p, grid)?;
    Ok(MomentTable::build(p, grid, 0)?.log_partition())
}

/// `E[T]` and `E[T T^T]` from one table with powers up to `2d`.
pub fn moments(p: &ParamVector, grid: &QuadratureGrid) -> Result<Moments> {
    check_grid(p, grid)?;
    let d = p.d() as usize;
    let table = MomentTable::build(p, grid, 2 * d)?;
    let idx = p.basis().indices();
    let m = idx.len();
    let mean_t = DVector::from_iterator(m, idx.iter().map(|a| table.moment(a.degrees())));
    let mut second_t = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = table.moment(idx[i].plus(&idx[j]).degrees());
            second_t[(i, j)] = v;
            second_t[(j, i)] = v;
        }
    }
    Ok(Moments {
        log_z: table.log_partition(),
        mean_t,
        second_t,
    })
}

/// `E[f(x)]` for a vector-valued `f` of length `dim`, by direct evaluation at every node.
/// `log_z` must be the log-partition on the same grid.
pub fn expectation<F>(p: &ParamVector, grid: &QuadratureGrid, log_z: f64, dim: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    check_grid(p, grid)?;
    let n = p.n();
    let compiled = p.compiled();
    let nodes = grid.nodes();
    let weights = grid.weights();
    let per = nodes.len();
    let inner_count = per.pow(n as u32 - 1);
    let mut acc = vec![Compensated::default(); dim];
    ordered_fold(
        per,
        |i| {
            let mut local = vec![0.0; dim];
            let mut val = vec![0.0; dim];
            let mut x = vec![0.0; n];
            let mut pow = compiled.power_table();
            x[0] = nodes[i];
            for rest in 0..inner_count {
                let mut r = rest;
                let mut w = weights[i];
                for slot in (1..n).rev() {
                    let j = r % per;
                    r /= per;
                    x[slot] = nodes[j];
                    w *= weights[j];
                }
                pow.fill(&x);
                let e = w * (compiled.eval_with(&pow) - log_z).exp();
                if e == 0.0 {
                    continue;
                }
                f(&x, &mut val);
                for (l, v) in local.iter_mut().zip(&val) {
                    *l += e * v;
                }
            }
            local
        },
        |_, local| {
            for (a, v) in acc.iter_mut().zip(local) {
                a.add(v);
            }
        },
    );
    Ok(acc.iter().map(Compensated::value).collect())
}

/// How to lay out the quadrature grid; unset fields take automatic defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub radius: Option<f64>,
    pub points_per_axis: Option<usize>,
    pub refine: Option<Refinement>,
}

/// Grid for `p`: radius from [`super::auto_radius`] unless given.
pub fn grid_for(p: &ParamVector, spec: &GridSpec) -> Result<QuadratureGrid> {
    if p.n() > MAX_GRID_DIM {
        return Err(Error::Precondition(format!(
            "quadrature oracle supports n <= {MAX_GRID_DIM}, got n={}",
            p.n()
        )));
    }
    let radius = match spec.radius {
        Some(r) => r,
        None => super::auto_radius(p),
    };
    build_grid(p.n(), radius, spec.points_per_axis, spec.refine.as_ref())
}

/// `log Z` with the grid convergence gate applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub value: f64,
    pub grid: GridSummary,
    pub converged: bool,
    pub delta: f64,
    pub tolerance: f64,
}

impl PartitionReport {
    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::GridNotConverged {
                delta: self.delta,
                tol: self.tolerance,
            })
        }
    }
}

/// Evaluates `log Z` on `grid` and on the grid with doubled points per axis.
pub fn checked_log_partition(p: &ParamVector, grid: &QuadratureGrid) -> Result<PartitionReport> {
    let value = log_partition(p, grid)?;
    let fine = log_partition(p, &grid.doubled()?)?;
    let delta = (fine - value).abs();
    Ok(PartitionReport {
        value,
        grid: grid.summary(),
        converged: delta < GRID_TOLERANCE,
        delta,
        tolerance: GRID_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::{tail_radius, ParamVector};
    use crate::polybasis::enumerate_basis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::sync::Arc;

    fn zero(n: usize, d: u32) -> ParamVector {
        ParamVector::zeros(Arc::new(enumerate_basis(n, d).unwrap()), 1.0).unwrap()
    }

    #[test]
    fn gaussian_partition() {
        let p = zero(1, 1);
        let g = grid_for(&p, &GridSpec::default()).unwrap();
        let lz = log_partition(&p, &g).unwrap();
        assert!((lz - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
        let m = moments(&p, &g).unwrap();
        assert!(m.mean_t[0].abs() < 1e-14);
        // the radius certifies mass only; the x^2 tail beyond it is a few 1e-11
        assert!((m.second_t[(0, 0)] - 0.5).abs() < 1e-10, "{}", m.second_t);
    }

    #[test]
    fn quartic_partition() {
        // int exp(-x^4) = 2 Gamma(5/4)
        let p = zero(1, 3);
        let g = grid_for(&p, &GridSpec::default()).unwrap();
        let lz = log_partition(&p, &g).unwrap();
        assert!((lz - (2.0 * 0.906_402_477_055_477_f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn product_structure() {
        let one = zero(1, 1);
        let two = zero(2, 1);
        let three = zero(3, 1);
        let l1 = log_partition(&one, &grid_for(&one, &GridSpec::default()).unwrap()).unwrap();
        let l2 = log_partition(&two, &grid_for(&two, &GridSpec::default()).unwrap()).unwrap();
        let spec = GridSpec {
            radius: Some(6.0),
            points_per_axis: Some(96),
            refine: None,
        };
        let l3 = log_partition(&three, &grid_for(&three, &spec).unwrap()).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-8);
        assert!((l3 - 3.0 * l1).abs() < 1e-8);
        let t = MomentTable::build(&three, &grid_for(&three, &spec).unwrap(), 2).unwrap();
        for s in 0..8u8 {
            let signs = [s & 1 != 0, s & 2 != 0, s & 4 != 0];
            assert!((t.orthant_mass(&signs) - 0.125).abs() < 1e-12);
        }
        assert!((t.moment(&[2, 0, 2]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mean_is_gradient_of_log_partition() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let basis = Arc::new(enumerate_basis(2, 3).unwrap());
        let theta: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = ParamVector::new(basis, theta.clone(), 1.0).unwrap();
        let spec = GridSpec {
            radius: Some(4.0),
            ..Default::default()
        };
        let g = grid_for(&p, &spec).unwrap();
        let m = moments(&p, &g).unwrap();
        for a in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[a] += h;
            tm[a] -= h;
            let lp = log_partition(&p.with_theta(tp).unwrap(), &g).unwrap();
            let lm = log_partition(&p.with_theta(tm).unwrap(), &g).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - m.mean_t[a]).abs() <= 1e-5 * m.mean_t[a].abs().max(1.0));
        }
    }

    #[test]
    fn closure_expectation_agrees_with_table() {
        let basis = Arc::new(enumerate_basis(2, 3).unwrap());
        let theta = vec![0.3, -0.2, 0.1, 0.4, -0.5, 0.2, 0.0, -0.1, 0.3];
        let p = ParamVector::new(basis, theta, 1.0).unwrap();
        let g = grid_for(&p, &GridSpec::default()).unwrap();
        let m = moments(&p, &g).unwrap();
        let e = expectation(&p, &g, m.log_z, 2, |x, out| {
            out[0] = 1.0;
            out[1] = x[0] * x[1] * x[1];
        })
        .unwrap();
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - m.mean_t[7]).abs() < 1e-12, "{e:?} {}", m.mean_t);
    }

    #[test]
    fn tail_mass_beyond_tail_radius() {
        let p = zero(1, 1);
        let r = tail_radius(1, 1, 1.0);
        let g = build_grid(1, 2.0 * r, None, None).unwrap();
        let lz = log_partition(&p, &g).unwrap();
        let outside = expectation(&p, &g, lz, 1, |x, o| o[0] = f64::from(u8::from(x[0].abs() > r))).unwrap();
        assert!(outside[0] < 1e-10);
    }

    #[test]
    fn convergence_gate_passes_at_default_resolution() {
        let basis = Arc::new(enumerate_basis(2, 3).unwrap());
        let p = ParamVector::new(basis, vec![1.0, -1.0, 0.5, 0.5, -0.5, 1.0, -1.0, 0.5, 0.25], 1.0).unwrap();
        let g = grid_for(&p, &GridSpec::default()).unwrap();
        let r = checked_log_partition(&p, &g).unwrap();
        assert!(r.converged, "delta {}", r.delta);
        let coarse = build_grid(2, g.radius(), Some(g.num_panels()), None).unwrap();
        assert!(!checked_log_partition(&p, &coarse).unwrap().converged);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let basis = Arc::new(enumerate_basis(2, 3).unwrap());
        let p = ParamVector::new(basis, vec![0.5; 9], 1.0).unwrap();
        let g = grid_for(&p, &GridSpec::default()).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| moments(&p, &g).unwrap());
        let b = three.install(|| moments(&p, &g).unwrap());
        assert_eq!(a.log_z.to_bits(), b.log_z.to_bits());
        assert_eq!(a.second_t, b.second_t);
    }
}
