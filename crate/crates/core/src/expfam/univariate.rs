//! One-dimensional log-polynomial densities: critical points, mass intervals and
//! adaptive Gauss-Legendre rules for `int exp(P(t)) dt`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Schur};

use super::quadrature::gauss_legendre;

/// Log-space drop below the maximum beyond which the integrand is treated as zero.
const NEGLIGIBLE_DROP: f64 = 800.0;
const PANEL_ORDER: usize = 16;
const MAX_DEPTH: u32 = 24;

/// A real polynomial in one variable, coefficients in ascending powers.
#[derive(Clone, Debug, PartialEq)]
pub struct Univariate {
    coeffs: Vec<f64>,
}

impl Univariate {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::new(vec![0.0]);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// `t -> P(-t)`.
    pub fn reflected(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| if k % 2 == 1 { -c } else { c })
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let get = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        Self::new((0..len).map(|k| get(&self.coeffs, k) + get(&other.coeffs, k)).collect())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Real roots, sorted, from companion-matrix eigenvalues polished by Newton.
    /// Nearly-real conjugate pairs are kept; spurious extras only add breakpoints.
    pub fn real_roots(&self) -> Vec<f64> {
        let deg = self.degree();
        if deg == 0 {
            return Vec::new();
        }
        let lead = self.leading();
        let mut roots = Vec::new();
        if deg == 1 {
            roots.push(-self.coeffs[0] / lead);
        } else {
            // rescale t = s u so the monic coefficients are O(1); keeps QR well-conditioned
            let s = (0..deg)
                .map(|i| (self.coeffs[i] / lead).abs().powf(1.0 / (deg - i) as f64))
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
            let mut comp = DMatrix::<f64>::zeros(deg, deg);
            for i in 1..deg {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..deg {
                comp[(i, deg - 1)] = -self.coeffs[i] / lead / s.powi((deg - i) as i32);
            }
            match Schur::try_new(comp, f64::EPSILON, 100 * deg * deg) {
                Some(schur) => {
                    for z in schur.complex_eigenvalues().iter() {
                        if z.im.abs() <= 1e-3 * z.re.abs().max(1.0) && z.re.is_finite() {
                            roots.push(z.re * s);
                        }
                    }
                }
                None => roots = self.sign_changes(2.0 * s),
            }
        }
        let dp = self.derivative();
        for r in roots.iter_mut() {
            let mut x = *r;
            for _ in 0..50 {
                let d = dp.eval(x);
                if d == 0.0 {
                    break;
                }
                let step = self.eval(x) / d;
                if !step.is_finite() {
                    break;
                }
                x -= step;
                if step.abs() <= 1e-15 * x.abs().max(1e-300) {
                    break;
                }
            }
            if x.is_finite() && (x - *r).abs() <= 1e-2 * r.abs().max(1.0) {
                *r = x;
            }
        }
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * a.abs().max(1.0));
        roots
    }

    /// Fallback root bracketing on a dense grid over `[-bound, bound]`.
    fn sign_changes(&self, bound: f64) -> Vec<f64> {
        const STEPS: usize = 1 << 16;
        let h = 2.0 * bound / STEPS as f64;
        let mut out = Vec::new();
        let mut prev = self.eval(-bound);
        for k in 1..=STEPS {
            let x = -bound + k as f64 * h;
            let v = self.eval(x);
            if prev == 0.0 || prev.signum() != v.signum() {
                let (mut lo, mut hi) = (x - h, x);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if self.eval(lo).signum() == self.eval(mid).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
            prev = v;
        }
        out
    }

    pub fn critical_points(&self) -> Vec<f64> {
        self.derivative().real_roots()
    }
}

/// A positive-weight rule approximating `int_a^b g(t) exp(P(t)) dt` as
/// `exp(shift) * sum_k weights[k] g(nodes[k])`.
#[derive(Clone, Debug)]
pub struct WeightedRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub shift: f64,
}

impl WeightedRule {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `log int_a^b exp(P)`.
    pub fn log_integral(&self) -> f64 {
        let t = self.total();
        if t > 0.0 {
            self.shift + t.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `int g exp(P) / int exp(P)`.
    pub fn mean_of(&self, g: impl Fn(f64) -> f64) -> f64 {
        let num: f64 = self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * g(t)).sum();
        num / self.total()
    }
}

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

fn panel_sum(p: &Univariate, shift: f64, a: f64, b: f64, out: Option<(&mut Vec<f64>, &mut Vec<f64>)>) -> f64 {
    let (x, w) = panel_rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    match out {
        Some((nodes, weights)) => {
            for (xi, wi) in x.iter().zip(w) {
                let t = mid + half * xi;
                let v = wi * half * (p.eval(t) - shift).exp();
                nodes.push(t);
                weights.push(v);
                s += v;
            }
        }
        None => {
            for (xi, wi) in x.iter().zip(w) {
                let t = mid + half * xi;
                s += wi * half * (p.eval(t) - shift).exp();
            }
        }
    }
    s
}

/// Finds the point beyond `from` (moving in direction `dir`) where the decreasing
/// tail of `p` falls to `level`. Requires `p` monotone decreasing in that direction.
fn tail_cut(p: &Univariate, from: f64, dir: f64, level: f64) -> f64 {
    let mut step = from.abs().max(1.0);
    let mut lo = from;
    let mut hi = from + dir * step;
    let mut guard = 0;
    while p.eval(hi) > level {
        lo = hi;
        step *= 2.0;
        hi = from + dir * step;
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            return hi;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if p.eval(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Adaptive rule for `int_a^b exp(P)`; `b` may be `+inf` when `P -> -inf`.
/// Breakpoints sit at every critical point so each segment is monotone, and
/// segments are graded geometrically towards their high end.
pub fn weighted_rule(p: &Univariate, a: f64, b: f64) -> WeightedRule {
    assert!(a < b, "empty interval");
    let crit: Vec<f64> = p.critical_points().into_iter().filter(|&c| c > a && c < b).collect();
    let mut peak = p.eval(a);
    for &c in &crit {
        peak = peak.max(p.eval(c));
    }
    let mut b_eff = b;
    if b.is_infinite() {
        assert!(p.leading() < 0.0 && p.degree() >= 1, "integrand does not decay");
        let last = crit.last().copied().unwrap_or(a).max(a);
        peak = peak.max(p.eval(last));
        b_eff = tail_cut(p, last, 1.0, peak - NEGLIGIBLE_DROP);
    } else {
        peak = peak.max(p.eval(b));
    }
    let mut breaks = vec![a];
    breaks.extend(crit.iter().copied().filter(|&c| c < b_eff));
    breaks.push(b_eff);
    breaks.dedup_by(|x, y| x == y);

    // panels graded towards the high end of each monotone segment
    let mut panels: Vec<(f64, f64)> = Vec::new();
    for seg in breaks.windows(2) {
        let (l, r) = (seg[0], seg[1]);
        let high_left = p.eval(l) >= p.eval(r);
        let len = r - l;
        let mut edges = vec![0.0];
        let mut w = len * 2f64.powi(-30);
        let mut pos = 0.0;
        while pos + w < len {
            pos += w;
            edges.push(pos);
            w *= 2.0;
        }
        edges.push(len);
        for e in edges.windows(2) {
            if high_left {
                panels.push((l + e[0], l + e[1]));
            } else {
                panels.push((r - e[1], r - e[0]));
            }
        }
    }
    panels.sort_by(|x, y| x.0.total_cmp(&y.0));

    let estimate: f64 = panels.iter().map(|&(l, r)| panel_sum(p, peak, l, r, None)).sum();
    let tol = 1e-14 * estimate.max(f64::MIN_POSITIVE);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for &(l, r) in &panels {
        refine(p, peak, l, r, tol, 0, &mut nodes, &mut weights);
    }
    WeightedRule {
        nodes,
        weights,
        shift: peak,
    }
}

#[allow(clippy::too_many_arguments)]
fn refine(
    p: &Univariate,
    shift: f64,
    l: f64,
    r: f64,
    tol: f64,
    depth: u32,
    nodes: &mut Vec<f64>,
    weights: &mut Vec<f64>,
) {
    let whole = panel_sum(p, shift, l, r, None);
    let m = 0.5 * (l + r);
    let halves = panel_sum(p, shift, l, m, None) + panel_sum(p, shift, m, r, None);
    if (whole - halves).abs() <= tol || depth >= MAX_DEPTH {
        panel_sum(p, shift, l, m, Some((nodes, weights)));
        panel_sum(p, shift, m, r, Some((nodes, weights)));
    } else {
        refine(p, shift, l, m, tol, depth + 1, nodes, weights);
        refine(p, shift, m, r, tol, depth + 1, nodes, weights);
    }
}

/// `log int_a^b exp(P)`.
pub fn log_integral(p: &Univariate, a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    weighted_rule(p, a, b).log_integral()
}

/// The smallest interval `[lo, hi]` outside which `P < max P - drop`.
pub fn mass_interval(p: &Univariate, drop: f64) -> (f64, f64) {
    assert!(p.leading() < 0.0 && p.degree() >= 2, "integrand does not decay");
    let crit = p.critical_points();
    let peak = crit.iter().map(|&c| p.eval(c)).fold(f64::NEG_INFINITY, f64::max);
    let level = peak - drop;
    // outermost critical points that are still above the cut
    let lo = crit.iter().copied().find(|&c| p.eval(c) > level).unwrap_or(0.0);
    let hi = crit.iter().rev().copied().find(|&c| p.eval(c) > level).unwrap_or(0.0);
    (tail_cut(p, lo, -1.0, level), tail_cut(p, hi, 1.0, level))
}
