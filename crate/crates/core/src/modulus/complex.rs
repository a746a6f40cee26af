use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::staircase::QuadMesh;

/// Rotationally symmetric metric `dr² + g(r)² dθ²` on a polar grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialMetric {
    /// `g(r) = r`.
    Flat,
    /// Constant curvature `−κ²`: `g(r) = sinh(κr)/κ`.
    Hyperbolic { kappa: f64 },
}

impl RadialMetric {
    pub fn circumference_factor(&self, r: f64) -> f64 {
        match *self {
            RadialMetric::Flat => r,
            RadialMetric::Hyperbolic { kappa } => (kappa * r).sinh() / kappa,
        }
    }

    /// `∫_{r₁}^{r₂} g(r) dr`.
    pub fn ring_integral(&self, r1: f64, r2: f64) -> f64 {
        match *self {
            RadialMetric::Flat => 0.5 * (r2 * r2 - r1 * r1),
            RadialMetric::Hyperbolic { kappa } => {
                ((kappa * r2).cosh() - (kappa * r1).cosh()) / (kappa * kappa)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComplexGeometry {
    /// `nx × ny` cells over `[0, width] × [0, height]`; cell `(i, j)` has
    /// index `j·nx + i`.
    Grid {
        nx: usize,
        ny: usize,
        width: f64,
        height: f64,
    },
    /// Polar cells between the radii `r_edges`, `n_theta` sectors each; cell
    /// `(ring, sector)` has index `ring·n_theta + sector`.
    Polar {
        r_edges: Vec<f64>,
        n_theta: usize,
        metric: RadialMetric,
    },
    /// Quads of a staircase mesh, in mesh order.
    Mesh,
}

/// Cells carrying a piecewise-constant density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComplex {
    pub areas: Vec<f64>,
    pub geometry: ComplexGeometry,
}

impl CellComplex {
    pub fn grid(nx: usize, ny: usize, width: f64, height: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || !(width > 0.0 && height > 0.0) {
            return Err(Error::InvalidComplex(format!(
                "grid needs positive counts and sides, got {nx}x{ny} over {width}x{height}"
            )));
        }
        let a = width * height / (nx * ny) as f64;
        Ok(CellComplex {
            areas: vec![a; nx * ny],
            geometry: ComplexGeometry::Grid { nx, ny, width, height },
        })
    }

    pub fn polar(r_edges: Vec<f64>, n_theta: usize, metric: RadialMetric) -> Result<Self> {
        if r_edges.len() < 2 || n_theta < 2 || r_edges[0] < 0.0 || r_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidComplex(
                "polar grid needs increasing radii and at least two sectors".into(),
            ));
        }
        if let RadialMetric::Hyperbolic { kappa } = metric {
            if !(kappa > 0.0) {
                return Err(Error::InvalidComplex("curvature scale must be positive".into()));
            }
        }
        let dth = std::f64::consts::TAU / n_theta as f64;
        let mut areas = Vec::with_capacity((r_edges.len() - 1) * n_theta);
        for w in r_edges.windows(2) {
            let a = metric.ring_integral(w[0], w[1]) * dth;
            areas.extend(std::iter::repeat_n(a, n_theta));
        }
        let c = CellComplex {
            areas,
            geometry: ComplexGeometry::Polar {
                r_edges,
                n_theta,
                metric,
            },
        };
        c.check()?;
        Ok(c)
    }

    /// Annulus `r_in < r < r_out` with `n_r` equal rings.
    pub fn annulus(r_in: f64, r_out: f64, n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r == 0 {
            return Err(Error::InvalidComplex("annulus needs at least one ring".into()));
        }
        let edges = (0..=n_r)
            .map(|i| r_in + (r_out - r_in) * i as f64 / n_r as f64)
            .collect();
        CellComplex::polar(edges, n_theta, RadialMetric::Flat)
    }

    /// Rings whose widths grow geometrically from `r_in` to `r_out`, so far
    /// cells are coarse.
    pub fn log_polar(r_in: f64, r_out: f64, n_r: usize, n_theta: usize, metric: RadialMetric) -> Result<Self> {
        if !(r_in > 0.0 && r_out > r_in) || n_r == 0 {
            return Err(Error::InvalidComplex("log-polar grid needs 0 < r_in < r_out".into()));
        }
        let q = (r_out / r_in).ln() / n_r as f64;
        let mut edges: Vec<f64> = (0..=n_r).map(|i| r_in * (q * i as f64).exp()).collect();
        edges[n_r] = r_out;
        CellComplex::polar(edges, n_theta, metric)
    }

    pub fn from_mesh(mesh: &QuadMesh) -> Result<Self> {
        let c = CellComplex {
            areas: (0..mesh.quads.len()).map(|q| mesh.quad_area(q)).collect(),
            geometry: ComplexGeometry::Mesh,
        };
        c.check()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.areas.is_empty() {
            return Err(Error::InvalidComplex("no cells".into()));
        }
        if let Some(a) = self.areas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidComplex(format!("cell area {a} is not positive and finite")));
        }
        Ok(())
    }

    /// Uniform scaling of lengths by `s` (areas by `s²`).
    pub fn scaled(&self, s: f64) -> CellComplex {
        let geometry = match &self.geometry {
            ComplexGeometry::Grid { nx, ny, width, height } => ComplexGeometry::Grid {
                nx: *nx,
                ny: *ny,
                width: width * s,
                height: height * s,
            },
            other => other.clone(),
        };
        CellComplex {
            areas: self.areas.iter().map(|a| a * s * s).collect(),
            geometry,
        }
    }
}
