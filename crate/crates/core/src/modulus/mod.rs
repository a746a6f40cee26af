//! Extremal length of curve families on cell complexes.
//!
//! A density `ρ ≥ 0` is constant on each cell. The modulus of a family is
//! the infimum of `Σ aᵢ ρᵢ^p` over densities giving every curve `ρ`-length at
//! least one. The solver maximises the shortest `ρ`-length on the unit
//! energy sphere and reports the energy of the rescaled maximiser, so the
//! returned value always comes with an admissible density.

mod complex;
mod family;
mod lattice;
mod parabolic;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use complex::{CellComplex, ComplexGeometry, RadialMetric};
pub use family::{family_lifted_rays, family_polar_rays, family_rectangle, Curve, CurveFamily, Side};
pub use parabolic::{
    flat_fixture, hyperbolic_fixture, parabolicity_bound, CutoffSummary, ParabolicityReport, ParabolicityRow, RadialSetup,
    Verdict,
};

use crate::error::{Error, Result};
use lattice::Lattice;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModulusOptions {
    pub max_iter: usize,
    /// Relative gain of the best length over `window` iterations below which
    /// the run counts as converged.
    pub tol: f64,
    pub window: usize,
    /// Curves within this relative distance of the shortest share the
    /// ascent direction.
    pub tie_tol: f64,
}

impl Default for ModulusOptions {
    fn default() -> Self {
        ModulusOptions {
            max_iter: 5000,
            tol: 1e-5,
            window: 50,
            tie_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// The iteration converged: the value approximates the modulus.
    ApproxInfimum,
    /// The iteration stopped early: the value is only an upper bound.
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub family: String,
    pub value: f64,
    pub p: f64,
    pub bound: BoundKind,
    pub iterations: usize,
    /// `max(0, 1 − min ρ-length)` for the returned density.
    pub final_constraint_violation: f64,
    pub min_length: f64,
    pub rho: Vec<f64>,
}

/// Shortest `ρ`-length and the averaged length profile of the near-shortest curves.
struct Evaluation {
    min_length: f64,
    direction: Vec<f64>,
}

enum Engine<'a> {
    Explicit(&'a [Curve]),
    Lattice(Lattice),
}

impl Engine<'_> {
    fn evaluate(&self, rho: &[f64], tie_tol: f64) -> Evaluation {
        match self {
            Engine::Explicit(curves) => {
                let lengths: Vec<f64> = curves.par_iter().map(|c| c.rho_length(rho)).collect();
                let min_length = lengths.iter().copied().fold(f64::INFINITY, f64::min);
                let cut = min_length + tie_tol * min_length.abs().max(f64::MIN_POSITIVE);
                let mut direction = vec![0.0; rho.len()];
                let mut count = 0usize;
                for (c, &l) in curves.iter().zip(&lengths) {
                    if l <= cut {
                        count += 1;
                        for (&i, d) in c.cells.iter().zip(&c.ds) {
                            direction[i] += d;
                        }
                    }
                }
                direction.iter_mut().for_each(|d| *d /= count as f64);
                Evaluation { min_length, direction }
            }
            Engine::Lattice(lat) => lat.evaluate(rho, tie_tol),
        }
    }

    fn min_length(&self, rho: &[f64]) -> f64 {
        match self {
            Engine::Explicit(curves) => curves
                .par_iter()
                .map(|c| c.rho_length(rho))
                .reduce(|| f64::INFINITY, f64::min),
            Engine::Lattice(lat) => lat.shortest(rho),
        }
    }
}

fn energy(areas: &[f64], rho: &[f64], p: f64) -> f64 {
    areas.iter().zip(rho).map(|(a, r)| a * r.powf(p)).sum()
}

fn normalize(areas: &[f64], rho: &mut [f64], p: f64) {
    let e = energy(areas, rho, p);
    if e > 0.0 {
        let s = e.powf(-1.0 / p);
        rho.iter_mut().for_each(|r| *r *= s);
    }
}

/// `p`-modulus of `family` on `complex`.
///
/// Projected supergradient ascent of the shortest `ρ`-length on the unit
/// energy sphere, with Polyak steps aimed slightly above the best length
/// found so far. The direction is the average length profile of all
/// near-shortest curves, scaled cellwise by `1/area`.
pub fn modulus(complex: &CellComplex, family: &CurveFamily, p: f64, opts: &ModulusOptions) -> Result<ModulusEstimate> {
    complex.check()?;
    family.validate(complex)?;
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidInput(format!("exponent p = {p} must be at least 1")));
    }
    if opts.max_iter == 0 || opts.window == 0 || !(opts.tol > 0.0) || !(opts.tie_tol >= 0.0) {
        return Err(Error::InvalidInput("solver options must be positive".into()));
    }
    let engine = match family {
        CurveFamily::Explicit { curves, .. } => Engine::Explicit(curves),
        CurveFamily::GridCrossing { side } => Engine::Lattice(Lattice::grid(complex, *side)?),
        CurveFamily::RadialCrossing => Engine::Lattice(Lattice::radial(complex)?),
    };
    let areas = &complex.areas;
    let n = areas.len();

    let euclid = vec![1.0; n];
    let start_len = match family {
        CurveFamily::Explicit { curves, .. } => {
            curves.iter().map(Curve::euclidean_length).sum::<f64>() / curves.len() as f64
        }
        _ => engine.min_length(&euclid),
    };
    let mut rho = vec![1.0 / start_len; n];
    normalize(areas, &mut rho, p);

    let mut best_rho = rho.clone();
    let mut best = f64::NEG_INFINITY;
    let mut history: Vec<f64> = Vec::with_capacity(opts.max_iter.min(1 << 16));
    let mut overshoot = 0.1;
    let mut stale = 0usize;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let eval = engine.evaluate(&rho, opts.tie_tol);
        if eval.min_length > best {
            if eval.min_length > best * (1.0 + 1e-12) {
                stale = 0;
            }
            best = eval.min_length;
            best_rho.copy_from_slice(&rho);
        } else {
            stale += 1;
        }
        history.push(best);
        if it >= opts.window {
            let past = history[it - opts.window];
            if best > 0.0 && (best - past) <= opts.tol * best {
                converged = true;
                break;
            }
        }
        if stale >= 10 {
            overshoot *= 0.5;
            stale = 0;
        }
        let step_dir: Vec<f64> = eval.direction.iter().zip(areas).map(|(g, a)| g / a).collect();
        let q: f64 = eval.direction.iter().zip(&step_dir).map(|(g, d)| g * d).sum();
        if q <= 0.0 || overshoot < 1e-15 {
            converged = true;
            break;
        }
        let t = (best.max(0.0) * (1.0 + overshoot) - eval.min_length) / q;
        for (r, d) in rho.iter_mut().zip(&step_dir) {
            *r = (*r + t * d).max(0.0);
        }
        normalize(areas, &mut rho, p);
    }

    let l = engine.min_length(&best_rho);
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidFamily("no density gives every curve positive length".into()));
    }
    best_rho.iter_mut().for_each(|r| *r /= l);
    let min_length = engine.min_length(&best_rho);
    Ok(ModulusEstimate {
        family: family.tag(),
        value: energy(areas, &best_rho, p),
        p,
        bound: if converged {
            BoundKind::ApproxInfimum
        } else {
            BoundKind::UpperBound
        },
        iterations,
        final_constraint_violation: (1.0 - min_length).max(0.0),
        min_length,
        rho: best_rho,
    })
}

/// `ρ`-length of the shortest curve in `family`.
pub fn shortest_length(complex: &CellComplex, family: &CurveFamily, rho: &[f64]) -> Result<f64> {
    family.validate(complex)?;
    if rho.len() != complex.len() {
        return Err(Error::DimensionError("density must have one value per cell".into()));
    }
    Ok(match family {
        CurveFamily::Explicit { curves, .. } => Engine::Explicit(curves).min_length(rho),
        CurveFamily::GridCrossing { side } => Lattice::grid(complex, *side)?.shortest(rho),
        CurveFamily::RadialCrossing => Lattice::radial(complex)?.shortest(rho),
    })
}

#[cfg(test)]
mod tests;
