use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::complex::{CellComplex, ComplexGeometry, RadialMetric};
use super::family::{family_lifted_rays, Curve, CurveFamily};
use crate::error::{Error, Result};
use crate::staircase::{GrowthSeed, QuadMesh};

/// A complex with a distance-from-seed radius on every cell and a family of
/// outward curves starting at the seed. Radii are offset so the seed sits at
/// `r = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSetup {
    pub label: String,
    pub complex: CellComplex,
    pub cell_radius: Vec<f64>,
    pub curves: Vec<Curve>,
    /// Largest radius fully covered by the complex.
    pub extent: f64,
}

impl RadialSetup {
    /// Polar grid whose inner circle is the seed; sector rays are the curves.
    pub fn from_polar(label: &str, complex: CellComplex) -> Result<Self> {
        let ComplexGeometry::Polar { r_edges, n_theta, .. } = &complex.geometry else {
            return Err(Error::InvalidComplex("expected a polar complex".into()));
        };
        let r0 = r_edges[0];
        let cell_radius: Vec<f64> = r_edges
            .windows(2)
            .flat_map(|w| std::iter::repeat_n(1.0 + 0.5 * (w[0] + w[1]) - r0, *n_theta))
            .collect();
        let CurveFamily::Explicit { curves, .. } = super::family::family_polar_rays(&complex)? else {
            unreachable!("polar rays are explicit")
        };
        let extent = 1.0 + r_edges[r_edges.len() - 1] - r0;
        Ok(RadialSetup {
            label: label.to_string(),
            complex,
            cell_radius,
            curves,
            extent,
        })
    }

    /// Staircase mesh with radii measured by mesh geodesics from `seed` and
    /// lifted rays at the parameters `rays` as curves.
    pub fn from_mesh(label: &str, mesh: &QuadMesh, seed: &GrowthSeed, rays: &[f64]) -> Result<Self> {
        let sources = mesh.seed_vertices(seed)?;
        let dist = mesh.distances(&sources);
        let complex = CellComplex::from_mesh(mesh)?;
        let cell_radius = mesh
            .quads
            .iter()
            .map(|q| 1.0 + 0.25 * q.iter().map(|&v| dist[v]).sum::<f64>())
            .collect();
        let CurveFamily::Explicit { curves, .. } = family_lifted_rays(mesh, rays, None)? else {
            unreachable!("lifted rays are explicit")
        };
        Ok(RadialSetup {
            label: label.to_string(),
            complex,
            cell_radius,
            curves,
            extent: 1.0 + mesh.extent(&dist),
        })
    }
}

/// Flat plane outside the unit disk, rings widening geometrically up to `r_out`.
pub fn flat_fixture(r_out: f64, n_r: usize, n_theta: usize) -> Result<RadialSetup> {
    let c = CellComplex::log_polar(1.0, r_out, n_r, n_theta, RadialMetric::Flat)?;
    RadialSetup::from_polar("flat", c)
}

/// Constant curvature `−κ²` outside the geodesic disk of radius 1.
pub fn hyperbolic_fixture(kappa: f64, r_out: f64, n_r: usize, n_theta: usize) -> Result<RadialSetup> {
    let c = CellComplex::log_polar(1.0, r_out, n_r, n_theta, RadialMetric::Hyperbolic { kappa })?;
    RadialSetup::from_polar(&format!("hyperbolic:{kappa}"), c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ParabolicIndicated,
    HyperbolicIndicated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicityRow {
    pub cutoff: f64,
    pub alpha: f64,
    /// Shortest `ρ`-length of a truncated curve.
    pub min_length: f64,
    pub admissible: bool,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSummary {
    pub cutoff: f64,
    /// `1 / ln(ln R / ln r₀)`.
    pub alpha_min: f64,
    /// Smallest `α` whose density is admissible on this complex.
    pub alpha_certified: f64,
    /// Energy at `alpha_min`, or at `alpha_certified` when `alpha_min` is not admissible.
    pub m_upper: f64,
    /// Energy at `alpha_certified`.
    pub m_certified: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicityReport {
    pub label: String,
    pub r0: f64,
    /// Radius below which the density is held constant.
    pub r_cap: f64,
    pub rows: Vec<ParabolicityRow>,
    pub summary: Vec<CutoffSummary>,
    pub verdict: Verdict,
}

const PARABOLIC_LEVEL: f64 = 0.1;
const HYPERBOLIC_LEVEL: f64 = 0.2;

/// Upper bounds for the modulus of curves leaving the seed and reaching
/// radius `R`, from the densities `ρ = α / (r ln r)` truncated at `R` and
/// held at `ρ(r_c)` inside `r_c = max(r₀, e)`.
///
/// Each cutoff also reports `α_min(R) = 1 / ln(ln R / ln r₀)` and the
/// smallest admissible `α` measured on the complex. The verdict reads the
/// sequence of `m_upper`: strictly decreasing below 0.1 indicates a
/// parabolic end, never decreasing and bounded below by 0.2 indicates a
/// hyperbolic one.
pub fn parabolicity_bound(setup: &RadialSetup, alphas: &[f64], cutoffs: &[f64], r0: f64) -> Result<ParabolicityReport> {
    setup.complex.check()?;
    if setup.cell_radius.len() != setup.complex.len() || setup.curves.is_empty() {
        return Err(Error::InvalidComplex("radial setup is inconsistent".into()));
    }
    if !(r0 > 1.0 && r0.is_finite()) {
        return Err(Error::InvalidInput(format!("base radius r0 = {r0} must exceed 1")));
    }
    if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::InvalidInput(format!("alpha = {a} must be positive")));
    }
    if cutoffs.is_empty() {
        return Err(Error::InvalidInput("no cutoff radii".into()));
    }
    let r_cap = r0.max(std::f64::consts::E);
    for &r in cutoffs {
        if !(r > r_cap) {
            return Err(Error::InvalidInput(format!("cutoff {r} must exceed {r_cap}")));
        }
        if r > setup.extent {
            return Err(Error::OutOfExtent(r, setup.extent));
        }
    }
    let unit = |r: f64| {
        let r = r.max(r_cap);
        1.0 / (r * r.ln())
    };
    let rho1: Vec<f64> = setup.cell_radius.iter().map(|&r| unit(r)).collect();

    let per_cutoff: Vec<(f64, f64)> = cutoffs
        .par_iter()
        .map(|&big_r| {
            let len = setup
                .curves
                .iter()
                .map(|c| {
                    c.cells
                        .iter()
                        .zip(&c.ds)
                        .take_while(|(&i, _)| setup.cell_radius[i] <= big_r)
                        .map(|(&i, d)| rho1[i] * d)
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            let e: f64 = setup
                .cell_radius
                .iter()
                .zip(&setup.complex.areas)
                .zip(&rho1)
                .filter(|((r, _), _)| **r <= big_r)
                .map(|((_, a), p)| a * p * p)
                .sum();
            (len, e)
        })
        .collect();

    let mut rows = vec![];
    let mut summary = vec![];
    for (&big_r, &(len1, e1)) in cutoffs.iter().zip(&per_cutoff) {
        let alpha_min = 1.0 / (big_r.ln() / r0.ln()).ln();
        let alpha_certified = 1.0 / len1;
        let row = |alpha: f64| ParabolicityRow {
            cutoff: big_r,
            alpha,
            min_length: alpha * len1,
            admissible: alpha * len1 >= 1.0 - 1e-12,
            energy: alpha * alpha * e1,
        };
        for &a in alphas {
            rows.push(row(a));
        }
        let at_min = row(alpha_min);
        let m_certified = alpha_certified * alpha_certified * e1;
        summary.push(CutoffSummary {
            cutoff: big_r,
            alpha_min,
            alpha_certified,
            m_upper: if at_min.admissible { at_min.energy } else { m_certified },
            m_certified,
        });
        rows.push(at_min);
    }

    let m: Vec<f64> = summary.iter().map(|s| s.m_upper).collect();
    let decreasing = m.windows(2).all(|w| w[1] < w[0]);
    let last = *m.last().expect("at least one cutoff");
    let lowest = m.iter().copied().fold(f64::INFINITY, f64::min);
    let verdict = if decreasing && last < PARABOLIC_LEVEL {
        Verdict::ParabolicIndicated
    } else if !decreasing && lowest >= HYPERBOLIC_LEVEL {
        Verdict::HyperbolicIndicated
    } else {
        Verdict::Inconclusive
    };
    Ok(ParabolicityReport {
        label: setup.label.clone(),
        r0,
        r_cap,
        rows,
        summary,
        verdict,
    })
}
