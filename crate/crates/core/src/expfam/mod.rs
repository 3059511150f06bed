//! The density `p_theta`, its score, quadrature-backed partition function and
//! moments, and the closed-form tail and moment bounds.

mod integrals;
mod partition;
mod quadrature;
mod radius;
pub mod univariate;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polybasis::{family_size, CompiledPoly, MonomialBasis, MultiIndex, PolyCoeffs, PolyJson, PowerTable};

pub use integrals::{check_1d_moment_bound, verify_int_concentration, IntConcentrationReport, LOG_INTEGRAL_SLACK};
pub use partition::{
    checked_log_partition, expectation, grid_for, log_partition, moments, GridSpec, MomentTable, Moments,
    PartitionReport, GRID_TOLERANCE,
};
pub use quadrature::{
    build_grid, gauss_legendre, GridSummary, QuadratureGrid, Refinement, DEFAULT_POINTS_PER_PANEL, MAX_GRID_DIM,
};
pub use radius::{auto_radius, TAIL_MASS_TARGET};

/// `theta` in the monomial coordinates of `basis`, with the box radius `B`.
#[derive(Clone, Debug)]
pub struct ParamVector {
    basis: Arc<MonomialBasis>,
    theta: Vec<f64>,
    bound: f64,
}

impl PartialEq for ParamVector {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis && self.theta == other.theta && self.bound == other.bound
    }
}

impl ParamVector {
    /// Checks `len(theta) = M - 1`, finiteness, `B >= 1` and `||theta||_inf <= B`.
    pub fn new(basis: Arc<MonomialBasis>, theta: Vec<f64>, bound: f64) -> Result<Self> {
        if theta.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: theta.len(),
            });
        }
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("theta[{i}]")));
        }
        if !(bound >= 1.0 && bound.is_finite()) {
            return Err(Error::InvalidFamily(format!(
                "box radius B must be finite and >= 1, got {bound}"
            )));
        }
        let sup = sup_norm(&theta);
        if sup > bound {
            return Err(Error::InvalidFamily(format!(
                "||theta||_inf = {sup} exceeds B = {bound}"
            )));
        }
        Ok(Self { basis, theta, bound })
    }

    /// `B` set to the smallest admissible value `max(1, ||theta||_inf)`.
    pub fn relaxed(basis: Arc<MonomialBasis>, theta: Vec<f64>) -> Result<Self> {
        let bound = sup_norm(&theta).max(1.0);
        Self::new(basis, theta, bound)
    }

    pub fn zeros(basis: Arc<MonomialBasis>, bound: f64) -> Result<Self> {
        let len = basis.len();
        Self::new(basis, vec![0.0; len], bound)
    }

    /// Same basis, new coordinates, `B` relaxed if needed.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        let bound = sup_norm(&theta).max(self.bound);
        Self::new(self.basis.clone(), theta, bound)
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn d(&self) -> u32 {
        self.basis.d()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `<theta, T(x)>` as a polynomial.
    pub fn theta_poly(&self) -> PolyCoeffs {
        let terms = self.basis.indices().iter().cloned().zip(self.theta.iter().copied());
        PolyCoeffs::from_terms(self.n(), terms).expect("basis indices match n")
    }

    /// `-sum_i x_i^(d+1) + <theta, T(x)>`.
    pub fn log_density_poly(&self) -> PolyCoeffs {
        let mut p = self.theta_poly();
        let top = (self.d() + 1) as u8;
        for i in 0..self.n() {
            p.add_term(MultiIndex::power(self.n(), i, top), -1.0);
        }
        p
    }

    pub fn compiled(&self) -> CompiledPoly {
        CompiledPoly::new(&self.log_density_poly())
    }

    /// The first nonzero monomial coupling two or more coordinates, if any.
    pub fn first_coupling(&self) -> Option<&MultiIndex> {
        self.basis
            .indices()
            .iter()
            .zip(&self.theta)
            .find(|(idx, &t)| t != 0.0 && idx.support_len() > 1)
            .map(|(idx, _)| idx)
    }

    pub fn to_json(&self) -> ParamJson {
        let poly = self.theta_poly().to_json(self.d());
        ParamJson {
            n: poly.n,
            d: poly.d,
            bound: Some(self.bound),
            terms: poly.terms,
        }
    }

    /// Reads a parameter file; `B` defaults to `max(1, ||theta||_inf)` when absent.
    pub fn from_json(json: &ParamJson) -> Result<Self> {
        let basis = Arc::new(crate::polybasis::enumerate_basis(json.n, json.d)?);
        let poly = PolyCoeffs::from_json(&PolyJson {
            n: json.n,
            d: json.d,
            terms: json.terms.clone(),
        })?;
        let mut theta = vec![0.0; basis.len()];
        for (idx, c) in poly.terms() {
            match basis.index_of(idx) {
                Some(pos) => theta[pos] = c,
                None if idx.is_constant() => {}
                None => {
                    return Err(Error::DegreeOverflow {
                        degree: idx.total(),
                        max: json.d,
                    })
                }
            }
        }
        match json.bound {
            Some(b) => Self::new(basis, theta, b),
            None => Self::relaxed(basis, theta),
        }
    }
}

/// File form of a parameter vector: `{"n", "d", "B", "terms": {"1,0": c, ...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamJson {
    pub n: usize,
    pub d: u32,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(with = "crate::polybasis::ordered_terms")]
    pub terms: Vec<(String, f64)>,
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn check_point(p: &ParamVector, x: &[f64]) -> Result<()> {
    if x.len() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("x[{i}]")));
    }
    Ok(())
}

/// `-sum_i x_i^(d+1) + <theta, T(x)>`, without `log Z`.
pub fn log_unnormalized_density(p: &ParamVector, x: &[f64]) -> Result<f64> {
    check_point(p, x)?;
    let basis = p.basis();
    let mut pow = PowerTable::new(p.d() as usize + 1);
    pow.fill(x);
    let mut t = vec![0.0; basis.len()];
    basis.suffstats_into(&pow, &mut t);
    let top = (p.d() + 1) as u8;
    let base: f64 = (0..p.n()).map(|i| pow.get(i, top)).sum();
    Ok(-base + t.iter().zip(p.theta()).map(|(a, b)| a * b).sum::<f64>())
}

/// `grad log h + (JT)^T theta`; free of `Z`.
pub fn score(p: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    check_point(p, x)?;
    let mut out = vec![0.0; p.n()];
    score_into(p, x, &mut out);
    Ok(out)
}

pub(crate) fn score_into(p: &ParamVector, x: &[f64], out: &mut [f64]) {
    let n = p.n();
    let d = p.d() as i32;
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = -f64::from(d + 1) * xi.powi(d);
    }
    for (idx, &t) in p.basis().indices().iter().zip(p.theta()) {
        if t == 0.0 {
            continue;
        }
        for i in 0..n {
            let e = idx.degree(i);
            if e == 0 {
                continue;
            }
            let mut v = t * f64::from(e);
            for (j, &xj) in x.iter().enumerate() {
                let ej = if j == i { e - 1 } else { idx.degree(j) };
                if ej > 0 {
                    v *= xj.powi(i32::from(ej));
                }
            }
            out[i] += v;
        }
    }
}

/// `2^(d+3) n B M`, the radius outside which at most half the mass can lie.
pub fn tail_radius(n: usize, d: u32, bound: f64) -> f64 {
    2f64.powi(d as i32 + 3) * n as f64 * bound * family_size(n, d) as f64
}

/// `max(2 l^l, B^l M^l 2^(l(d+1)+1))`, an upper bound on `E x_i^l` over the family.
pub fn moment_bound(l: u32, n: usize, d: u32, bound: f64) -> f64 {
    let l_f = f64::from(l);
    let m = family_size(n, d) as f64;
    let a = 2.0 * l_f.powf(l_f);
    let b = bound.powf(l_f) * m.powf(l_f) * 2f64.powf(l_f * f64::from(d + 1) + 1.0);
    a.max(b)
}
