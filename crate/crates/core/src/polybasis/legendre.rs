use std::collections::BTreeMap;

use super::{binomial, family_size, monomial_norm, MultiIndex, PolyCoeffs};
use crate::error::{Error, Result};
use crate::report::Check;

/// `L_k(x) = 2^-k sum_j C(k,j)^2 (x-1)^(k-j) (x+1)^j`, expanded in monomials.
pub fn legendre_1d(k: u32) -> PolyCoeffs {
    let xm1 = PolyCoeffs::variable(1, 0).add(&PolyCoeffs::constant(1, -1.0));
    let xp1 = PolyCoeffs::variable(1, 0).add(&PolyCoeffs::constant(1, 1.0));
    let mut total = PolyCoeffs::zero(1);
    for j in 0..=k {
        let c = binomial(u64::from(k), u64::from(j)) as f64;
        let mut term = PolyCoeffs::constant(1, c * c);
        for _ in 0..k - j {
            term = term.mul(&xm1);
        }
        for _ in 0..j {
            term = term.mul(&xp1);
        }
        total = total.add(&term);
    }
    total.scaled(0.5f64.powi(k as i32))
}

/// `sqrt(2k+1) L_k`, unit norm under the uniform distribution on `[-1, 1]`.
pub fn normalized_legendre_1d(k: u32) -> PolyCoeffs {
    legendre_1d(k).scaled(f64::from(2 * k + 1).sqrt())
}

/// Dense `(d+1) x (d+1)` tables for the normalized univariate basis:
/// `forward[k][j]` is the `x^j` coefficient of `L^_k`, and `inverse[j][k]`
/// expresses `x^j = sum_k inverse[j][k] L^_k`.
struct Tables {
    forward: Vec<Vec<f64>>,
    inverse: Vec<Vec<f64>>,
}

fn tables(d: u32) -> Tables {
    let size = d as usize + 1;
    let mut forward = vec![vec![0.0; size]; size];
    for k in 0..size {
        let p = normalized_legendre_1d(k as u32);
        for (idx, c) in p.terms() {
            forward[k][idx.degree(0) as usize] = c;
        }
    }
    // forward is lower triangular; solve forward^T-style by substitution:
    // x^j = (L^_j - sum_{i<j} forward[j][i] x^i) / forward[j][j]
    let mut inverse = vec![vec![0.0; size]; size];
    for j in 0..size {
        let lead = forward[j][j];
        inverse[j][j] = 1.0 / lead;
        for i in 0..j {
            let a = forward[j][i];
            if a == 0.0 {
                continue;
            }
            for k in 0..=i {
                inverse[j][k] -= a * inverse[i][k] / lead;
            }
        }
    }
    Tables { forward, inverse }
}

/// Coefficients of a polynomial over the tensorized normalized Legendre basis
/// `L^_d(x) = prod_i L^_{d(i)}(x_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LegendreExpansion {
    n: usize,
    d: u32,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl LegendreExpansion {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn coefficient(&self, idx: &MultiIndex) -> f64 {
        self.coeffs.get(idx).copied().unwrap_or(0.0)
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.coeffs.iter().map(|(k, &v)| (k, v))
    }

    /// `sum b_d^2`; equals the squared uniform L2 norm by orthonormality.
    pub fn sum_squares(&self) -> f64 {
        self.coeffs.values().map(|b| b * b).sum()
    }

    /// Expands back into the monomial basis.
    pub fn to_monomial(&self) -> PolyCoeffs {
        let t = tables(self.d);
        let mut out = PolyCoeffs::zero(self.n);
        for (idx, &b) in &self.coeffs {
            tensor_expand(idx.degrees(), b, &t.forward, |deg, c| {
                out.add_term(MultiIndex::new(deg), c)
            });
        }
        out
    }
}

/// For the index `degrees`, calls `emit(target, coeff * prod_i table[degrees[i]][target[i]])`
/// over every `target` with nonzero table entries.
fn tensor_expand(degrees: &[u8], coeff: f64, table: &[Vec<f64>], mut emit: impl FnMut(Vec<u8>, f64)) {
    let n = degrees.len();
    let mut target = vec![0u8; n];
    fn rec(
        pos: usize,
        acc: f64,
        degrees: &[u8],
        table: &[Vec<f64>],
        target: &mut Vec<u8>,
        emit: &mut dyn FnMut(Vec<u8>, f64),
    ) {
        if pos == degrees.len() {
            emit(target.clone(), acc);
            return;
        }
        let row = &table[degrees[pos] as usize];
        for (k, &c) in row.iter().enumerate().take(degrees[pos] as usize + 1) {
            if c == 0.0 {
                continue;
            }
            target[pos] = k as u8;
            rec(pos + 1, acc * c, degrees, table, target, emit);
        }
        target[pos] = 0;
    }
    rec(0, coeff, degrees, table, &mut target, &mut emit);
}

/// Change of basis from monomials to tensorized normalized Legendre polynomials.
pub fn to_legendre(f: &PolyCoeffs, d: u32) -> Result<LegendreExpansion> {
    if f.degree() > d {
        return Err(Error::DegreeOverflow {
            degree: f.degree(),
            max: d,
        });
    }
    let t = tables(d);
    let mut coeffs: BTreeMap<MultiIndex, f64> = BTreeMap::new();
    for (idx, a) in f.terms() {
        tensor_expand(idx.degrees(), a, &t.inverse, |deg, c| {
            *coeffs.entry(MultiIndex::new(deg)).or_insert(0.0) += c;
        });
    }
    coeffs.retain(|_, v| *v != 0.0);
    Ok(LegendreExpansion { n: f.n(), d, coeffs })
}

/// `||f||_m^2 <= C(n+d, d) (4e)^d ||f||_{L2([-1,1]^n)}^2`.
pub fn check_mon_l2_bound(f: &PolyCoeffs, n: usize, d: u32) -> Result<Check> {
    if f.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f.n(),
        });
    }
    if f.degree() > d {
        return Err(Error::DegreeOverflow {
            degree: f.degree(),
            max: d,
        });
    }
    let lhs = monomial_norm(f).powi(2);
    let l2 = super::l2_cube_norm(f);
    let rhs = family_size(n, d) as f64 * (4.0 * std::f64::consts::E).powi(d as i32) * l2 * l2;
    Ok(Check::le("mon_l2", lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::{l2_cube_norm, multi_indices};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_poly(rng: &mut ChaCha20Rng, n: usize, d: u32) -> PolyCoeffs {
        let terms = multi_indices(n, 0, d)
            .into_iter()
            .map(|idx| (idx, rng.random_range(-1.0..1.0)));
        PolyCoeffs::from_terms(n, terms).unwrap()
    }

    #[test]
    fn low_order_expansions() {
        let l0 = legendre_1d(0);
        assert_eq!(l0, PolyCoeffs::constant(1, 1.0));
        assert_eq!(legendre_1d(1), PolyCoeffs::variable(1, 0));
        let l2 = legendre_1d(2);
        assert!((l2.coefficient(&MultiIndex::new(vec![2])) - 1.5).abs() < 1e-15);
        assert!((l2.coefficient(&MultiIndex::new(vec![0])) + 0.5).abs() < 1e-15);
        assert_eq!(l2.coefficient(&MultiIndex::new(vec![1])), 0.0);
        // Bonnet recurrence oracle for k = 3: (5x^3 - 3x)/2
        let l3 = legendre_1d(3);
        assert!((l3.coefficient(&MultiIndex::new(vec![3])) - 2.5).abs() < 1e-15);
        assert!((l3.coefficient(&MultiIndex::new(vec![1])) + 1.5).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_under_uniform() {
        for j in 0..=7 {
            for k in 0..=7 {
                let prod = normalized_legendre_1d(j).mul(&normalized_legendre_1d(k));
                // E[prod] under Unif[-1,1] from exact moments
                let e: f64 = prod
                    .terms()
                    .map(|(idx, c)| {
                        let p = idx.degree(0);
                        if p % 2 == 1 {
                            0.0
                        } else {
                            c / f64::from(p + 1)
                        }
                    })
                    .sum();
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((e - want).abs() < 1e-10, "j={j} k={k} e={e}");
            }
        }
    }

    #[test]
    fn expansion_examples() {
        let one = to_legendre(&PolyCoeffs::constant(1, 1.0), 3).unwrap();
        assert_eq!(one.coefficients().count(), 1);
        assert!((one.coefficient(&MultiIndex::new(vec![0])) - 1.0).abs() < 1e-15);

        let x = to_legendre(&PolyCoeffs::variable(1, 0), 1).unwrap();
        assert!((x.coefficient(&MultiIndex::new(vec![1])) - 1.0 / 3f64.sqrt()).abs() < 1e-15);

        assert!(matches!(
            to_legendre(&legendre_1d(5), 3),
            Err(Error::DegreeOverflow { degree: 5, max: 3 })
        ));
    }

    #[test]
    fn parseval_and_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..50 {
            let f = random_poly(&mut rng, 2, 3);
            let b = to_legendre(&f, 3).unwrap();
            let l2 = l2_cube_norm(&f);
            assert!((b.sum_squares() - l2 * l2).abs() < 1e-10);
            let back = b.to_monomial();
            for idx in multi_indices(2, 0, 3) {
                assert!((back.coefficient(&idx) - f.coefficient(&idx)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mon_l2_examples() {
        let c = check_mon_l2_bound(&PolyCoeffs::variable(1, 0), 1, 1).unwrap();
        assert_eq!(c.lhs, 1.0);
        assert!((c.rhs - 2.0 * 4.0 * std::f64::consts::E / 3.0).abs() < 1e-12);
        assert!(c.holds);
        let z = check_mon_l2_bound(&PolyCoeffs::zero(2), 2, 3).unwrap();
        assert_eq!((z.lhs, z.rhs, z.holds), (0.0, 0.0, true));
    }

    #[test]
    fn mon_l2_random() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for trial in 0..300 {
            let n = 1 + trial % 3;
            let d = [1u32, 3, 5][(trial / 3) % 3];
            let f = random_poly(&mut rng, n, d);
            assert!(check_mon_l2_bound(&f, n, d).unwrap().holds);
        }
    }
}
