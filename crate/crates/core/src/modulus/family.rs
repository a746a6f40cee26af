use serde::{Deserialize, Serialize};

use super::complex::{CellComplex, ComplexGeometry};
use crate::error::{Error, Result};
use crate::linalg::distance;
use crate::staircase::QuadMesh;

/// A curve as the length it spends in each cell it visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub cells: Vec<usize>,
    pub ds: Vec<f64>,
}

impl Curve {
    pub fn new(cells: Vec<usize>, ds: Vec<f64>) -> Result<Self> {
        if cells.is_empty() || cells.len() != ds.len() {
            return Err(Error::InvalidFamily("curve needs matching, nonempty cells and lengths".into()));
        }
        if ds.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidFamily("curve lengths must be finite and nonnegative".into()));
        }
        Ok(Curve { cells, ds })
    }

    pub fn rho_length(&self, rho: &[f64]) -> f64 {
        self.cells.iter().zip(&self.ds).map(|(&c, d)| rho[c] * d).sum()
    }

    pub fn euclidean_length(&self) -> f64 {
        self.ds.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Curves joining the left edge to the right edge.
    LeftRight,
    /// Curves joining the bottom edge to the top edge.
    BottomTop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveFamily {
    Explicit { tag: String, curves: Vec<Curve> },
    /// Every monotone lattice path through cell centres across a grid: steps
    /// advance one cell or move sideways, never backwards.
    GridCrossing { side: Side },
    /// Every path from the inner to the outer boundary of a polar grid that
    /// steps outward or around a ring.
    RadialCrossing,
}

impl CurveFamily {
    pub fn tag(&self) -> String {
        match self {
            CurveFamily::Explicit { tag, .. } => tag.clone(),
            CurveFamily::GridCrossing { side: Side::LeftRight } => "grid_crossing:left_right".into(),
            CurveFamily::GridCrossing { side: Side::BottomTop } => "grid_crossing:bottom_top".into(),
            CurveFamily::RadialCrossing => "radial_crossing".into(),
        }
    }

    pub fn validate(&self, complex: &CellComplex) -> Result<()> {
        match (self, &complex.geometry) {
            (CurveFamily::Explicit { curves, .. }, _) => {
                if curves.is_empty() {
                    return Err(Error::InvalidFamily("family has no curves".into()));
                }
                for c in curves {
                    if c.cells.is_empty() || c.cells.len() != c.ds.len() {
                        return Err(Error::InvalidFamily("malformed curve".into()));
                    }
                    if c.cells.iter().any(|&i| i >= complex.len()) {
                        return Err(Error::InvalidFamily("curve visits a cell outside the complex".into()));
                    }
                    if c.ds.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                        return Err(Error::InvalidFamily("curve lengths must be finite and nonnegative".into()));
                    }
                    if c.euclidean_length() <= 0.0 {
                        return Err(Error::InvalidFamily("curve has zero length".into()));
                    }
                }
                Ok(())
            }
            (CurveFamily::GridCrossing { .. }, ComplexGeometry::Grid { .. }) => Ok(()),
            (CurveFamily::RadialCrossing, ComplexGeometry::Polar { .. }) => Ok(()),
            _ => Err(Error::InvalidFamily(format!(
                "family {} does not fit this complex",
                self.tag()
            ))),
        }
    }

    pub fn explicit_len(&self) -> Option<usize> {
        match self {
            CurveFamily::Explicit { curves, .. } => Some(curves.len()),
            _ => None,
        }
    }

    /// Keeps the curves selected by `keep`; implicit families are returned whole.
    pub fn subfamily(&self, keep: impl Fn(usize) -> bool) -> CurveFamily {
        match self {
            CurveFamily::Explicit { tag, curves } => CurveFamily::Explicit {
                tag: format!("{tag}:sub"),
                curves: curves
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| keep(*i))
                    .map(|(_, c)| c.clone())
                    .collect(),
            },
            other => other.clone(),
        }
    }
}

/// Straight crossings of a grid, one per row (or column), each followed by
/// `k` staircase perturbations that shift by one cell partway across.
pub fn family_rectangle(complex: &CellComplex, side: Side, k: usize) -> Result<CurveFamily> {
    let ComplexGeometry::Grid { nx, ny, width, height } = complex.geometry else {
        return Err(Error::InvalidFamily("rectangle family needs a grid complex".into()));
    };
    let (dx, dy) = (width / nx as f64, height / ny as f64);
    let (lanes, steps, along, across) = match side {
        Side::LeftRight => (ny, nx, dx, dy),
        Side::BottomTop => (nx, ny, dy, dx),
    };
    let cell = |lane: usize, step: usize| match side {
        Side::LeftRight => lane * nx + step,
        Side::BottomTop => step * nx + lane,
    };
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidFamily(format!("rectangle family needs a grid of at least 2x2, got {nx}x{ny}")));
    }
    let mut curves = Vec::with_capacity(lanes * (1 + k));
    for lane in 0..lanes {
        let cells = (0..steps).map(|s| cell(lane, s)).collect();
        curves.push(Curve::new(cells, vec![along; steps])?);
        let other = if lane + 1 < lanes { lane + 1 } else { lane - 1 };
        for j in 1..=k {
            let at = (j * steps / (k + 1)).min(steps - 1);
            let mut cells = Vec::with_capacity(steps + 1);
            let mut ds = Vec::with_capacity(steps + 1);
            for s in 0..at {
                cells.push(cell(lane, s));
                ds.push(along);
            }
            cells.push(cell(lane, at));
            ds.push(0.5 * (along + across));
            cells.push(cell(other, at));
            ds.push(0.5 * (along + across));
            for s in at + 1..steps {
                cells.push(cell(other, s));
                ds.push(along);
            }
            curves.push(Curve::new(cells, ds)?);
        }
    }
    let tag = match side {
        Side::LeftRight => format!("rectangle:left_right:{k}"),
        Side::BottomTop => format!("rectangle:bottom_top:{k}"),
    };
    Ok(CurveFamily::Explicit { tag, curves })
}

/// Radial rays of a polar grid, one per sector.
pub fn family_polar_rays(complex: &CellComplex) -> Result<CurveFamily> {
    let ComplexGeometry::Polar { r_edges, n_theta, .. } = &complex.geometry else {
        return Err(Error::InvalidFamily("ray family needs a polar complex".into()));
    };
    let rings = r_edges.len() - 1;
    let ds: Vec<f64> = r_edges.windows(2).map(|w| w[1] - w[0]).collect();
    let curves = (0..*n_theta)
        .map(|j| Curve::new((0..rings).map(|i| i * n_theta + j).collect(), ds.clone()))
        .collect::<Result<_>>()?;
    Ok(CurveFamily::Explicit {
        tag: "polar_rays".into(),
        curves,
    })
}

/// Lifted rays of a staircase mesh: the midline of quad column
/// `⌊s·(n_along − 1)⌋` for each parameter `s ∈ [0, 1]` along the base
/// segment, followed upward through every patch.
///
/// With `cutoff = Some((dist, r))`, each ray stops before the first quad
/// with a corner farther than `r` from the seed.
pub fn family_lifted_rays(mesh: &QuadMesh, rays: &[f64], cutoff: Option<(&[f64], f64)>) -> Result<CurveFamily> {
    if rays.is_empty() {
        return Err(Error::InvalidFamily("no rays requested".into()));
    }
    if let Some(s) = rays.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidFamily(format!("ray parameter {s} lies outside [0, 1]")));
    }
    if let Some((dist, _)) = cutoff {
        if dist.len() != mesh.vertices.len() {
            return Err(Error::InvalidFamily("distance field does not match the mesh".into()));
        }
    }
    let columns = mesh.quad_origin.iter().map(|q| q.2).max().map_or(0, |c| c + 1);
    if columns == 0 {
        return Err(Error::InvalidFamily("mesh has no quads".into()));
    }
    let mut curves = Vec::with_capacity(rays.len());
    for &s in rays {
        let col = ((s * columns as f64).floor() as usize).min(columns - 1);
        let mut cells = vec![];
        let mut ds = vec![];
        let mut prev_top: Option<Vec<f64>> = None;
        for (q, origin) in mesh.quad_origin.iter().enumerate() {
            if origin.2 != col {
                continue;
            }
            let [a, b, c, d] = mesh.quads[q];
            if let Some((dist, r)) = cutoff {
                if [a, b, c, d].iter().any(|&v| dist[v] > r) {
                    break;
                }
            }
            let v = &mesh.vertices;
            let mid = |x: usize, y: usize| -> Vec<f64> { v[x].iter().zip(&v[y]).map(|(p, q)| 0.5 * (p + q)).collect() };
            let (bottom, top) = (mid(a, b), mid(d, c));
            let gap = prev_top.as_ref().map_or(0.0, |p| distance(p, &bottom));
            cells.push(q);
            ds.push(distance(&bottom, &top) + gap);
            prev_top = Some(top);
        }
        if cells.is_empty() {
            return Err(Error::InvalidFamily(format!("ray at {s} is empty after truncation")));
        }
        curves.push(Curve::new(cells, ds)?);
    }
    Ok(CurveFamily::Explicit {
        tag: "lifted_rays".into(),
        curves,
    })
}
