use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MultiIndex, PowerTable};
use crate::error::{Error, Result};

/// A sparse real polynomial in `n` variables. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyCoeffs {
    n: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl PolyCoeffs {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(MultiIndex::zero(n), c);
        p
    }

    /// The polynomial `x_i` (0-based `i`).
    pub fn variable(n: usize, i: usize) -> Self {
        let mut p = Self::zero(n);
        p.add_term(MultiIndex::unit(n, i), 1.0);
        p
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Result<Self> {
        let mut p = Self::zero(n);
        for (idx, c) in terms {
            if idx.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: idx.n(),
                });
            }
            p.add_term(idx, c);
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Adds `c * x_idx`, dropping the entry if the result is zero.
    pub fn add_term(&mut self, idx: MultiIndex, c: f64) {
        debug_assert_eq!(idx.n(), self.n);
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(idx);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = *o.get() + c;
                if sum == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn coefficient(&self, idx: &MultiIndex) -> f64 {
        self.terms.get(idx).copied().unwrap_or(0.0)
    }

    /// Terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum stored total degree; zero for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::total).max().unwrap_or(0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&MultiIndex::zero(self.n))
    }

    pub fn without_constant(&self) -> Self {
        let mut p = self.clone();
        p.terms.remove(&MultiIndex::zero(self.n));
        p
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut p = Self::zero(self.n);
        for (idx, c) in self.terms() {
            p.add_term(idx.clone(), c * s);
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "polynomials in different dimensions");
        let mut p = self.clone();
        for (idx, c) in other.terms() {
            p.add_term(idx.clone(), c);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "polynomials in different dimensions");
        let mut p = Self::zero(self.n);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                p.add_term(a.plus(b), ca * cb);
            }
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms().map(|(idx, c)| c * idx.eval(x)).sum()
    }

    /// The JSON form `{"n":..,"d":..,"terms":{"2,0,1":c,..}}` with `d` recorded as metadata.
    pub fn to_json(&self, d: u32) -> PolyJson {
        PolyJson {
            n: self.n,
            d,
            terms: self.terms().map(|(k, c)| (k.key(), c)).collect(),
        }
    }

    pub fn from_json(json: &PolyJson) -> Result<Self> {
        let mut p = Self::zero(json.n);
        for (key, c) in json.terms.iter().map(|(k, c)| (k, *c)) {
            let idx = MultiIndex::parse_key(key)?;
            if idx.n() != json.n {
                return Err(Error::Format(format!(
                    "degree string {key:?} has {} entries, expected n={}",
                    idx.n(),
                    json.n
                )));
            }
            if !c.is_finite() {
                return Err(Error::NonFinite(format!("coefficient of {key}")));
            }
            p.add_term(idx, c);
        }
        Ok(p)
    }
}

/// Serialized polynomial: a map from comma-joined degree strings to coefficients,
/// with the basis metadata `{n, d}` alongside. Terms are written in graded-lex order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyJson {
    pub n: usize,
    pub d: u32,
    #[serde(with = "ordered_terms")]
    pub terms: Vec<(String, f64)>,
}

pub(crate) mod ordered_terms {
    use serde::ser::SerializeMap;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(terms: &[(String, f64)], s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(terms.len()))?;
        for (k, v) in terms {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(String, f64)>, D::Error> {
        struct V;
        impl<'de> serde::de::Visitor<'de> for V {
            type Value = Vec<(String, f64)>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map of degree strings to coefficients")
            }
            fn visit_map<A: serde::de::MapAccess<'de>>(self, mut a: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = a.next_entry::<String, f64>()? {
                    out.push((k, v));
                }
                Ok(out)
            }
        }
        d.deserialize_map(V)
    }
}

/// `(sum_d a_d^2)^(1/2)` over every stored term, including the constant.
pub fn monomial_norm(f: &PolyCoeffs) -> f64 {
    f.terms().map(|(_, c)| c * c).sum::<f64>().sqrt()
}

/// `E_{x ~ Unif[-1,1]^n} f(x)^2` raised to 1/2, exactly from the moments
/// `E x^k = 1/(k+1)` (k even), 0 (k odd).
pub fn l2_cube_norm(f: &PolyCoeffs) -> f64 {
    let terms: Vec<(&MultiIndex, f64)> = f.terms().collect();
    let mut total = 0.0;
    for (a, ca) in &terms {
        for (b, cb) in &terms {
            let mut moment = 1.0;
            for (&ea, &eb) in a.degrees().iter().zip(b.degrees()) {
                let k = u32::from(ea) + u32::from(eb);
                if k % 2 == 1 {
                    moment = 0.0;
                    break;
                }
                moment /= f64::from(k + 1);
            }
            total += ca * cb * moment;
        }
    }
    total.max(0.0).sqrt()
}

/// A polynomial flattened for repeated evaluation, gradient and Laplacian.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    n: usize,
    max_degree: usize,
    exponents: Vec<u8>,
    coeffs: Vec<f64>,
}

impl CompiledPoly {
    pub fn new(p: &PolyCoeffs) -> Self {
        let n = p.n();
        let mut exponents = Vec::with_capacity(p.len() * n);
        let mut coeffs = Vec::with_capacity(p.len());
        let mut max_degree = 0usize;
        for (idx, c) in p.terms() {
            exponents.extend_from_slice(idx.degrees());
            coeffs.push(c);
            max_degree = max_degree.max(idx.degrees().iter().copied().max().unwrap_or(0) as usize);
        }
        Self {
            n,
            max_degree,
            exponents,
            coeffs,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    /// Iterates `(exponents, coefficient)`.
    pub fn terms(&self) -> impl Iterator<Item = (&[u8], f64)> {
        self.exponents
            .chunks_exact(self.n.max(1))
            .zip(self.coeffs.iter().copied())
    }

    pub fn power_table(&self) -> PowerTable {
        PowerTable::new(self.max_degree)
    }

    pub fn eval_with(&self, pow: &PowerTable) -> f64 {
        self.terms().map(|(e, c)| c * pow.monomial(e)).sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut pow = self.power_table();
        pow.fill(x);
        self.eval_with(&pow)
    }

    pub fn gradient_with(&self, pow: &PowerTable, out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for (e, c) in self.terms() {
            for i in 0..self.n {
                if e[i] == 0 {
                    continue;
                }
                let mut term = c * f64::from(e[i]);
                for (j, &ej) in e.iter().enumerate() {
                    let ej = if j == i { ej - 1 } else { ej };
                    if ej > 0 {
                        term *= pow.get(j, ej);
                    }
                }
                out[i] += term;
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut pow = self.power_table();
        pow.fill(x);
        let mut out = vec![0.0; self.n];
        self.gradient_with(&pow, &mut out);
        out
    }

    pub fn laplacian_with(&self, pow: &PowerTable) -> f64 {
        let mut total = 0.0;
        for (e, c) in self.terms() {
            for k in 0..self.n {
                if e[k] < 2 {
                    continue;
                }
                let mut term = c * f64::from(e[k]) * f64::from(e[k] - 1);
                for (j, &ej) in e.iter().enumerate() {
                    let ej = if j == k { ej - 2 } else { ej };
                    if ej > 0 {
                        term *= pow.get(j, ej);
                    }
                }
                total += term;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(d: &[u8]) -> MultiIndex {
        MultiIndex::new(d.to_vec())
    }

    #[test]
    fn monomial_norm_examples() {
        let f = PolyCoeffs::from_terms(2, [(idx(&[1, 0]), 3.0), (idx(&[0, 1]), 4.0)]).unwrap();
        assert_eq!(monomial_norm(&f), 5.0);
        assert_eq!(monomial_norm(&PolyCoeffs::zero(2)), 0.0);
        let f = PolyCoeffs::from_terms(2, [(idx(&[2, 1]), 1.0), (idx(&[0, 1]), -1.0)]).unwrap();
        assert!((monomial_norm(&f) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn l2_cube_norm_examples() {
        // integral of x^2 / 2 over [-1, 1] is 1/3
        assert!((l2_cube_norm(&PolyCoeffs::variable(1, 0)) - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(l2_cube_norm(&PolyCoeffs::constant(3, 1.0)), 1.0);
        let f = PolyCoeffs::from_terms(2, [(idx(&[1, 1]), 1.0)]).unwrap();
        assert!((l2_cube_norm(&f) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn l2_cube_norm_matches_tensor_gauss_legendre() {
        // 8-point Gauss-Legendre is exact for degree <= 15 per axis
        let (nodes, weights) = crate::expfam::gauss_legendre(8);
        let f = PolyCoeffs::from_terms(
            2,
            [
                (idx(&[0, 0]), 0.5),
                (idx(&[3, 1]), -1.25),
                (idx(&[1, 2]), 2.0),
                (idx(&[0, 5]), 0.75),
            ],
        )
        .unwrap();
        let mut acc = 0.0;
        for (a, wa) in nodes.iter().zip(&weights) {
            for (b, wb) in nodes.iter().zip(&weights) {
                acc += wa * wb * f.eval(&[*a, *b]).powi(2) / 4.0;
            }
        }
        assert!((l2_cube_norm(&f) - acc.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn zero_coefficients_not_stored() {
        let mut p = PolyCoeffs::variable(2, 0);
        p.add_term(idx(&[1, 0]), -1.0);
        assert!(p.is_zero());
        p.add_term(idx(&[0, 2]), 0.0);
        assert!(p.is_zero());
        assert_eq!(p.degree(), 0);
    }

    #[test]
    fn product_expansion() {
        // (x1 - 1)^2 = x1^2 - 2 x1 + 1
        let f = PolyCoeffs::variable(1, 0).add(&PolyCoeffs::constant(1, -1.0));
        let sq = f.mul(&f);
        assert_eq!(sq.coefficient(&idx(&[2])), 1.0);
        assert_eq!(sq.coefficient(&idx(&[1])), -2.0);
        assert_eq!(sq.coefficient(&idx(&[0])), 1.0);
        assert_eq!(sq.degree(), 2);
    }

    #[test]
    fn json_preserves_graded_lex_order() {
        let f = PolyCoeffs::from_terms(2, [(idx(&[0, 2]), 1.0), (idx(&[1, 0]), 2.0), (idx(&[1, 1]), -3.0)]).unwrap();
        let text = serde_json::to_string(&f.to_json(3)).unwrap();
        assert_eq!(text, r#"{"n":2,"d":3,"terms":{"1,0":2.0,"1,1":-3.0,"0,2":1.0}}"#);
        let back: PolyJson = serde_json::from_str(&text).unwrap();
        assert_eq!(PolyCoeffs::from_json(&back).unwrap(), f);
        let bad: PolyJson = serde_json::from_str(r#"{"n":2,"d":3,"terms":{"1":1.0}}"#).unwrap();
        assert!(PolyCoeffs::from_json(&bad).is_err());
    }

    #[test]
    fn compiled_matches_direct() {
        let f = PolyCoeffs::from_terms(
            3,
            [(idx(&[2, 1, 0]), 1.5), (idx(&[0, 0, 3]), -2.0), (idx(&[1, 1, 1]), 0.25)],
        )
        .unwrap();
        let c = CompiledPoly::new(&f);
        let x = [0.3, -1.2, 2.0];
        assert!((c.eval(&x) - f.eval(&x)).abs() < 1e-14);
        let g = c.gradient(&x);
        let expect0 = 2.0 * 1.5 * 0.3 * -1.2 + 0.25 * -1.2 * 2.0;
        assert!((g[0] - expect0).abs() < 1e-14);
    }
}
