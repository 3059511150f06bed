//! Multi-indices, the graded-lex monomial basis `T(x)`, sparse polynomials and
//! the tensorized Legendre change of basis.

mod legendre;
mod poly;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use legendre::{check_mon_l2_bound, legendre_1d, normalized_legendre_1d, to_legendre, LegendreExpansion};
pub(crate) use poly::ordered_terms;
pub use poly::{l2_cube_norm, monomial_norm, CompiledPoly, PolyCoeffs, PolyJson};

/// A degree function `d: [n] -> N`, identifying the monomial `prod_i x_i^d(i)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    degrees: Box<[u8]>,
    total: u32,
}

impl MultiIndex {
    pub fn new(degrees: impl Into<Vec<u8>>) -> Self {
        let degrees = degrees.into().into_boxed_slice();
        let total = degrees.iter().map(|&e| u32::from(e)).sum();
        Self { degrees, total }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(vec![0u8; n])
    }

    /// The index of the linear monomial `x_i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut degrees = vec![0u8; n];
        degrees[i] = 1;
        Self::new(degrees)
    }

    /// The index of the pure power `x_i^k`.
    pub fn power(n: usize, i: usize, k: u8) -> Self {
        let mut degrees = vec![0u8; n];
        degrees[i] = k;
        Self::new(degrees)
    }

    #[inline]
    pub fn degrees(&self) -> &[u8] {
        &self.degrees
    }

    #[inline]
    pub fn total(&self) -> u32 {
        self.total
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    #[inline]
    pub fn degree(&self, i: usize) -> u8 {
        self.degrees[i]
    }

    /// Number of coordinates with a nonzero exponent.
    pub fn support_len(&self) -> usize {
        self.degrees.iter().filter(|&&e| e > 0).count()
    }

    pub fn is_constant(&self) -> bool {
        self.total == 0
    }

    /// `x_d = prod_i x_i^d(i)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.degrees
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&e, &xi)| acc * xi.powi(i32::from(e)))
    }

    /// `d - k{i}`, or `None` if `d(i) < k`.
    pub fn lowered(&self, i: usize, k: u8) -> Option<MultiIndex> {
        if self.degrees[i] < k {
            return None;
        }
        let mut degrees = self.degrees.to_vec();
        degrees[i] -= k;
        Some(Self::new(degrees))
    }

    /// Componentwise sum, the index of the product monomial.
    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.n(), other.n());
        let degrees: Vec<u8> = self
            .degrees
            .iter()
            .zip(other.degrees.iter())
            .map(|(a, b)| a + b)
            .collect();
        Self::new(degrees)
    }

    /// Comma-joined exponent string, e.g. `"2,0,1"`.
    pub fn key(&self) -> String {
        let parts: Vec<String> = self.degrees.iter().map(|e| e.to_string()).collect();
        parts.join(",")
    }

    pub fn parse_key(key: &str) -> Result<Self> {
        let degrees = key
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u8>()
                    .map_err(|_| Error::Format(format!("bad degree string {key:?}")))
            })
            .collect::<Result<Vec<u8>>>()?;
        if degrees.is_empty() {
            return Err(Error::Format("empty degree string".into()));
        }
        Ok(Self::new(degrees))
    }
}

/// Graded-lexicographic: by total degree, then lexicographically with `x1 > x2 > ...`,
/// so that `x1, x2, x1^2, x1*x2, x2^2` is ascending.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total
            .cmp(&other.total)
            .then_with(|| other.degrees.cmp(&self.degrees))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.total == 0 {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.degrees.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        Ok(())
    }
}

/// Binomial coefficient as `u64`; saturates instead of overflowing.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    u64::try_from(acc).unwrap_or(u64::MAX)
}

/// `M = C(n + d, d)`, the number of monomials of degree at most `d` including the constant.
pub fn family_size(n: usize, d: u32) -> u64 {
    binomial(n as u64 + u64::from(d), u64::from(d))
}

/// All multi-indices in `n` variables with `lo <= |d| <= hi`, graded-lex ascending.
pub fn multi_indices(n: usize, lo: u32, hi: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut buf = vec![0u8; n];
    for total in lo..=hi {
        fill_exact(&mut buf, 0, total, &mut out);
    }
    out
}

fn fill_exact(buf: &mut [u8], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining as u8;
        out.push(MultiIndex::new(buf.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        buf[pos] = e as u8;
        fill_exact(buf, pos + 1, remaining - e, out);
    }
    buf[pos] = 0;
}

/// The ordered monomials `x_d` with `1 <= |d| <= d`; the coordinate system of `theta`.
#[derive(Debug)]
pub struct MonomialBasis {
    n: usize,
    d: u32,
    indices: Vec<MultiIndex>,
    position: OnceLock<HashMap<MultiIndex, usize>>,
}

impl Clone for MonomialBasis {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            d: self.d,
            indices: self.indices.clone(),
            position: OnceLock::new(),
        }
    }
}

impl PartialEq for MonomialBasis {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.d == other.d
    }
}

/// Enumerate the basis for `n` variables and odd maximum degree `d`.
pub fn enumerate_basis(n: usize, d: u32) -> Result<MonomialBasis> {
    if n == 0 {
        return Err(Error::InvalidFamily("dimension n must be at least 1".into()));
    }
    if d == 0 || d % 2 == 0 {
        return Err(Error::InvalidFamily(format!(
            "maximum degree d must be odd and positive, got {d}"
        )));
    }
    if d > 9 {
        return Err(Error::InvalidFamily(format!("maximum degree d={d} exceeds 9")));
    }
    Ok(MonomialBasis {
        n,
        d,
        indices: multi_indices(n, 1, d),
        position: OnceLock::new(),
    })
}

/// Reusable table of `x_i^k` for `k = 0..=max`, laid out row per coordinate.
#[derive(Clone, Debug, Default)]
pub struct PowerTable {
    stride: usize,
    values: Vec<f64>,
}

impl PowerTable {
    pub fn new(max_power: usize) -> Self {
        Self {
            stride: max_power + 1,
            values: Vec::new(),
        }
    }

    pub fn fill(&mut self, x: &[f64]) {
        self.values.resize(x.len() * self.stride, 0.0);
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut self.values[i * self.stride..(i + 1) * self.stride];
            let mut acc = 1.0;
            for slot in row.iter_mut() {
                *slot = acc;
                acc *= xi;
            }
        }
    }

    #[inline]
    pub fn get(&self, i: usize, k: u8) -> f64 {
        self.values[i * self.stride + k as usize]
    }

    #[inline]
    pub fn monomial(&self, degrees: &[u8]) -> f64 {
        let mut acc = 1.0;
        for (i, &e) in degrees.iter().enumerate() {
            if e > 0 {
                acc *= self.values[i * self.stride + e as usize];
            }
        }
        acc
    }
}

impl MonomialBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// `M - 1`, the length of `T(x)` and of `theta`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `M = C(n + d, d)`.
    pub fn family_size(&self) -> usize {
        self.indices.len() + 1
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index_of(&self, idx: &MultiIndex) -> Option<usize> {
        self.position
            .get_or_init(|| self.indices.iter().enumerate().map(|(k, m)| (m.clone(), k)).collect())
            .get(idx)
            .copied()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("point {x:?}")));
        }
        Ok(())
    }

    pub fn power_table(&self) -> PowerTable {
        PowerTable::new(self.d as usize)
    }

    /// `T(x)` from a filled power table.
    pub fn suffstats_into(&self, pow: &PowerTable, out: &mut [f64]) {
        for (slot, idx) in out.iter_mut().zip(&self.indices) {
            *slot = pow.monomial(idx.degrees());
        }
    }

    /// `(JT)_x` from a filled power table, row-major `(M-1) x n`.
    pub fn jacobian_into(&self, pow: &PowerTable, out: &mut [f64]) {
        let n = self.n;
        for (row, idx) in self.indices.iter().enumerate() {
            let degs = idx.degrees();
            for i in 0..n {
                let di = degs[i];
                out[row * n + i] = if di == 0 {
                    0.0
                } else {
                    let mut acc = f64::from(di);
                    for (j, &e) in degs.iter().enumerate() {
                        let e = if j == i { e - 1 } else { e };
                        if e > 0 {
                            acc *= pow.get(j, e);
                        }
                    }
                    acc
                };
            }
        }
    }

    /// `Delta T(x)` from a filled power table.
    pub fn laplacian_into(&self, pow: &PowerTable, out: &mut [f64]) {
        for (slot, idx) in out.iter_mut().zip(&self.indices) {
            let degs = idx.degrees();
            let mut total = 0.0;
            for k in 0..self.n {
                let dk = degs[k];
                if dk < 2 {
                    continue;
                }
                let mut term = f64::from(dk) * f64::from(dk - 1);
                for (j, &e) in degs.iter().enumerate() {
                    let e = if j == k { e - 2 } else { e };
                    if e > 0 {
                        term *= pow.get(j, e);
                    }
                }
                total += term;
            }
            *slot = total;
        }
    }
}

/// `T(x)`: the component for `d` is `prod_i x_i^d(i)`.
pub fn eval_suffstats(basis: &MonomialBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.check_point(x)?;
    let mut pow = basis.power_table();
    pow.fill(x);
    let mut out = vec![0.0; basis.len()];
    basis.suffstats_into(&pow, &mut out);
    Ok(out)
}

/// The `(M-1) x n` Jacobian of `T` at `x`.
pub fn eval_jacobian(basis: &MonomialBasis, x: &[f64]) -> Result<DMatrix<f64>> {
    basis.check_point(x)?;
    let mut pow = basis.power_table();
    pow.fill(x);
    let mut buf = vec![0.0; basis.len() * basis.n()];
    basis.jacobian_into(&pow, &mut buf);
    Ok(DMatrix::from_row_slice(basis.len(), basis.n(), &buf))
}

/// Coordinatewise Laplacian of `T` at `x`.
pub fn eval_laplacian(basis: &MonomialBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.check_point(x)?;
    let mut pow = basis.power_table();
    pow.fill(x);
    let mut out = vec![0.0; basis.len()];
    basis.laplacian_into(&pow, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_degree_rejected() {
        assert!(matches!(enumerate_basis(2, 2), Err(Error::InvalidFamily(_))));
        assert!(enumerate_basis(2, 0).is_err());
        assert!(enumerate_basis(0, 1).is_err());
    }

    #[test]
    fn small_bases() {
        let b = enumerate_basis(2, 1).unwrap();
        let names: Vec<String> = b.indices().iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["x1", "x2"]);
        assert_eq!(enumerate_basis(2, 3).unwrap().len(), 9);
    }

    #[test]
    fn basis_counts_match_binomial() {
        for n in 1..=6 {
            for d in [1u32, 3, 5, 7] {
                let b = enumerate_basis(n, d).unwrap();
                assert_eq!(b.len() as u64, family_size(n, d) - 1, "n={n} d={d}");
                let mut sorted = b.indices().to_vec();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted.len(), b.len());
                assert_eq!(sorted, b.indices());
                assert!(b.indices().iter().all(|m| m.total() >= 1 && m.total() <= d));
            }
        }
    }

    #[test]
    fn suffstats_examples() {
        let b = enumerate_basis(2, 1).unwrap();
        assert_eq!(eval_suffstats(&b, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        let b = enumerate_basis(1, 3).unwrap();
        assert_eq!(eval_suffstats(&b, &[2.0]).unwrap(), vec![2.0, 4.0, 8.0]);
        let two = multi_indices(2, 1, 2);
        let vals: Vec<f64> = two.iter().map(|m| m.eval(&[1.0, -1.0])).collect();
        assert_eq!(vals, vec![1.0, -1.0, 1.0, -1.0, 1.0]);
        assert!(eval_suffstats(&b, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let b = enumerate_basis(2, 3).unwrap();
        let j = eval_jacobian(&b, &[3.0, 4.0]).unwrap();
        let row = b.index_of(&MultiIndex::new(vec![1, 1])).unwrap();
        assert_eq!((j[(row, 0)], j[(row, 1)]), (4.0, 3.0));
        let j = eval_jacobian(&b, &[2.0, 0.0]).unwrap();
        let row = b.index_of(&MultiIndex::new(vec![3, 0])).unwrap();
        assert_eq!((j[(row, 0)], j[(row, 1)]), (12.0, 0.0));
        let b1 = enumerate_basis(1, 1).unwrap();
        for x in [-3.0, 0.0, 7.5] {
            assert_eq!(eval_jacobian(&b1, &[x]).unwrap()[(0, 0)], 1.0);
        }
    }

    #[test]
    fn laplacian_examples() {
        let b = enumerate_basis(2, 3).unwrap();
        let lap = eval_laplacian(&b, &[2.0, 5.0]).unwrap();
        assert_eq!(lap[b.index_of(&MultiIndex::new(vec![3, 0])).unwrap()], 12.0);
        assert_eq!(lap[b.index_of(&MultiIndex::new(vec![1, 1])).unwrap()], 0.0);
        let b = enumerate_basis(4, 1).unwrap();
        assert!(eval_laplacian(&b, &[1.0, 2.0, 3.0, 4.0])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn key_round_trip() {
        let m = MultiIndex::new(vec![2, 0, 1]);
        assert_eq!(m.key(), "2,0,1");
        assert_eq!(MultiIndex::parse_key("2,0,1").unwrap(), m);
        assert!(MultiIndex::parse_key("2,a").is_err());
        assert_eq!(m.to_string(), "x1^2*x3");
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn jacobian_matches_finite_differences(
            n in 1usize..=3, d in prop::sample::select(vec![1u32, 3, 5]),
            x in prop::collection::vec(-1.5f64..1.5, 3),
        ) {
            let b = enumerate_basis(n, d).unwrap();
            let x = &x[..n];
            let jac = eval_jacobian(&b, x).unwrap();
            for (row, idx) in b.indices().iter().enumerate() {
                for i in 0..n {
                    let fd = central_diff(|y| idx.eval(y), x, i, 1e-5);
                    let exact = jac[(row, i)];
                    prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                        "{idx} d/dx{i}: fd={fd} exact={exact}");
                }
            }
        }

        #[test]
        fn laplacian_matches_numerical_hessian_trace(
            n in 1usize..=3, d in prop::sample::select(vec![1u32, 3, 5]),
            x in prop::collection::vec(-1.5f64..1.5, 3),
        ) {
            let b = enumerate_basis(n, d).unwrap();
            let x = &x[..n];
            let lap = eval_laplacian(&b, x).unwrap();
            let h = 1e-3;
            for (row, idx) in b.indices().iter().enumerate() {
                let mut trace = 0.0;
                for i in 0..n {
                    let mut xp = x.to_vec();
                    let mut xm = x.to_vec();
                    xp[i] += h;
                    xm[i] -= h;
                    trace += (idx.eval(&xp) - 2.0 * idx.eval(x) + idx.eval(&xm)) / (h * h);
                }
                prop_assert!((trace - lap[row]).abs() <= 1e-5 * lap[row].abs().max(1.0),
                    "{idx}: fd={trace} exact={}", lap[row]);
            }
        }

        #[test]
        fn monomials_are_lipschitz_on_boxes(
            r in prop::sample::select(vec![1.0f64, 2.0, 10.0]),
            d in 1u32..=5,
            u in prop::collection::vec(-1.0f64..1.0, 3),
            v in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let u: Vec<f64> = u.iter().map(|t| t * r).collect();
            let v: Vec<f64> = v.iter().map(|t| t * r).collect();
            let dist = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let bound = f64::from(d) * r.powi(d as i32 - 1) * dist;
            for idx in multi_indices(3, 0, d) {
                let gap = (idx.eval(&u) - idx.eval(&v)).abs();
                prop_assert!(gap <= bound * (1.0 + 1e-12) + 1e-12, "{idx}: {gap} > {bound}");
            }
        }
    }
}
