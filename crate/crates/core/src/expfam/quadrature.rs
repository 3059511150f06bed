//! Composite Gauss-Legendre tensor rules on `[-R, R]^n`.

use std::collections::HashMap;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum dimension for tensor rules.
pub const MAX_GRID_DIM: usize = 3;
/// Points per panel when `points_per_axis` is not given.
pub const DEFAULT_POINTS_PER_PANEL: usize = 16;

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let m = NonZeroUsize::new(m).expect("rule needs at least one node");
    let rule = GaussLegendre::new(m);
    let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Extra resolution around abscissae where the density concentrates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub centers: Vec<f64>,
    /// Central panel width; `min(1, 1/sqrt(beta))` for a `beta`-sharp peak.
    pub width: f64,
}

impl Refinement {
    pub fn for_beta(centers: Vec<f64>, beta: f64) -> Self {
        let width = if beta > 1.0 { 1.0 / beta.sqrt() } else { 1.0 };
        Self { centers, width }
    }
}

/// The same composite rule on every axis of `[-R, R]^n`.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    n: usize,
    radius: f64,
    breakpoints: Vec<f64>,
    panel_points: Vec<usize>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    refinement: Option<Refinement>,
}

/// Grid summary for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    #[serde(rename = "R")]
    pub radius: f64,
    pub points: usize,
    pub panels: usize,
}

impl QuadratureGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn points_per_axis(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_nodes(&self) -> usize {
        self.nodes.len().pow(self.n as u32)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn num_panels(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn panel_points(&self) -> &[usize] {
        &self.panel_points
    }

    /// Per-axis nodes, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn refinement(&self) -> Option<&Refinement> {
        self.refinement.as_ref()
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary {
            radius: self.radius,
            points: self.points_per_axis(),
            panels: self.num_panels(),
        }
    }

    /// Same panels, twice the points per axis.
    pub fn doubled(&self) -> Result<Self> {
        build_grid(
            self.n,
            self.radius,
            Some(2 * self.points_per_axis()),
            self.refinement.as_ref(),
        )
    }
}

fn base_breakpoints(radius: f64) -> Vec<f64> {
    let k = radius.ceil().max(1.0) as usize;
    let h = radius / k as f64;
    let mut out: Vec<f64> = (0..=2 * k).map(|i| -radius + h * i as f64).collect();
    out[k] = 0.0;
    out
}

/// Breakpoints of the panels around one center: widths `w, 2w, 4w, ...` below 1 on each side.
fn graded_breakpoints(center: f64, width: f64) -> (Vec<f64>, f64) {
    let mut out = vec![center - 0.5 * width, center + 0.5 * width];
    let mut reach = 0.5 * width;
    let mut w = width;
    while w < 1.0 {
        reach += w;
        out.push(center - reach);
        out.push(center + reach);
        w *= 2.0;
    }
    (out, reach)
}

/// Composite rule on `[-R, R]^n`. Zero is always a breakpoint, so no node sits
/// on a coordinate hyperplane and sign-orthant sums are exact partitions.
pub fn build_grid(
    n: usize,
    radius: f64,
    points_per_axis: Option<usize>,
    refine: Option<&Refinement>,
) -> Result<QuadratureGrid> {
    if n == 0 || n > MAX_GRID_DIM {
        return Err(Error::Precondition(format!(
            "tensor quadrature supports 1 <= n <= {MAX_GRID_DIM}, got n={n}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Precondition(format!(
            "grid radius must be positive, got {radius}"
        )));
    }
    let mut breaks = base_breakpoints(radius);
    if let Some(r) = refine {
        if !(r.width > 0.0 && r.width <= 1.0) {
            return Err(Error::Precondition(format!(
                "refinement width {} not in (0, 1]",
                r.width
            )));
        }
        let mut zones = Vec::new();
        let mut extra = Vec::new();
        for &c in &r.centers {
            if c.abs() >= radius {
                continue;
            }
            let (pts, reach) = graded_breakpoints(c, r.width);
            zones.push((c - reach, c + reach));
            extra.extend(pts);
        }
        breaks.retain(|&b| b == 0.0 || b.abs() == radius || !zones.iter().any(|&(lo, hi)| b > lo && b < hi));
        breaks.extend(extra.into_iter().filter(|b| b.abs() < radius));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * radius);

    let panels = breaks.len() - 1;
    let total = points_per_axis.unwrap_or(panels * DEFAULT_POINTS_PER_PANEL);
    if total < panels {
        return Err(Error::Precondition(format!(
            "points_per_axis={total} is below the panel count {panels}"
        )));
    }
    // even split, remainder to the panels nearest the origin
    let mut panel_points = vec![total / panels; panels];
    let mut order: Vec<usize> = (0..panels).collect();
    order.sort_by(|&a, &b| {
        let ma = (0.5 * (breaks[a] + breaks[a + 1])).abs();
        let mb = (0.5 * (breaks[b] + breaks[b + 1])).abs();
        ma.total_cmp(&mb).then(a.cmp(&b))
    });
    for &i in order.iter().take(total % panels) {
        panel_points[i] += 1;
    }

    let mut rules: HashMap<usize, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for (i, &q) in panel_points.iter().enumerate() {
        let (x, w) = rules.entry(q).or_insert_with(|| gauss_legendre(q));
        let (a, b) = (breaks[i], breaks[i + 1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xi, wi) in x.iter().zip(w.iter()) {
            nodes.push(mid + half * xi);
            weights.push(half * wi);
        }
    }
    Ok(QuadratureGrid {
        n,
        radius,
        breakpoints: breaks,
        panel_points,
        nodes,
        weights,
        refinement: refine.cloned(),
    })
}
