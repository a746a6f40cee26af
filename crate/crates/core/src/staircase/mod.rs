//! Staircase surfaces: lifted vertical-ray sweeps over a base segment,
//! stacked in adaptive height steps and joined by a lifted railing ray.

mod mesh;

pub use mesh::{growth_profile, growth_profile_mesh, GrowthProfile, GrowthSeed, QuadMesh};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{frame_at, lift_path, subspace_angle, BasePath, LiftOptions, LiftStatus};
use crate::error::{Error, Result};
use crate::linalg::{axpy, distance, dot, norm, scaled, sub, svd, Matrix};
use crate::maps::MapSpec;
use crate::qc::RANK_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaircaseConfig {
    /// Endpoints `a`, `b` of the base segment `I` in the image plane.
    pub segment: [[f64; 2]; 2],
    /// Lift of `a`.
    pub start: Vec<f64>,
    /// Image-plane direction of the swept rays.
    pub direction: [f64; 2],
    pub k_factor: f64,
    pub angle_tol: f64,
    pub max_height: f64,
    pub n_along: usize,
    pub n_up: usize,
    /// First step height tried; defaults to a quarter of `max_height`.
    pub initial_height: Option<f64>,
    pub max_step_height: Option<f64>,
    pub min_height: f64,
    pub lift: LiftOptions,
}

impl Default for StaircaseConfig {
    fn default() -> Self {
        StaircaseConfig {
            segment: [[0.0, 0.0], [1.0, 0.0]],
            start: vec![0.0, 0.0, 0.0],
            direction: [0.0, 1.0],
            k_factor: 2.0,
            angle_tol: 0.1,
            max_height: 1.0,
            n_along: 11,
            n_up: 4,
            initial_height: None,
            max_step_height: None,
            min_height: 1e-6,
            lift: LiftOptions {
                step: 0.25,
                ..LiftOptions::default()
            },
        }
    }
}

impl StaircaseConfig {
    fn validate(&self, f: &MapSpec) -> Result<()> {
        if f.n() != 2 {
            return Err(Error::Unsupported(format!(
                "staircases need a map onto the plane, {} maps to R^{}",
                f.name(),
                f.n()
            )));
        }
        if self.start.len() != f.m() {
            return Err(Error::DimensionError(format!("start must lie in R^{}", f.m())));
        }
        if !(self.k_factor > 1.0) {
            return Err(Error::InvalidInput("k_factor must exceed 1".into()));
        }
        if self.n_along < 2 || self.n_up < 2 {
            return Err(Error::InvalidInput("grid counts must be at least 2".into()));
        }
        if !(self.max_height > 0.0 && self.min_height > 0.0 && self.angle_tol > 0.0) {
            return Err(Error::InvalidInput(
                "max_height, min_height and angle_tol must be positive".into(),
            ));
        }
        if norm(&self.direction) == 0.0 || distance(&self.segment[0], &self.segment[1]) == 0.0 {
            return Err(Error::InvalidInput("degenerate segment or direction".into()));
        }
        Ok(())
    }

    fn unit_direction(&self) -> [f64; 2] {
        let n = norm(&self.direction);
        [self.direction[0] / n, self.direction[1] / n]
    }

    /// Image of column `c` of the segment translated by `tau` along the rays.
    fn image_point(&self, c: usize, tau: f64) -> [f64; 2] {
        let s = c as f64 / (self.n_along - 1) as f64;
        let d = self.unit_direction();
        let [a, b] = self.segment;
        [
            a[0] + s * (b[0] - a[0]) + tau * d[0],
            a[1] + s * (b[1] - a[1]) + tau * d[1],
        ]
    }
}

/// One swept step `S̃ᵢ`: an `(n_up + 1) × n_along` grid of lifted points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    /// Height of the base row above `I`.
    pub tau: f64,
    pub height: f64,
    pub n_along: usize,
    pub n_up: usize,
    /// Row-major; row 0 is the lift of the translated segment, column 0 is
    /// the railing.
    pub vertices: Vec<Vec<f64>>,
    pub image: Vec<[f64; 2]>,
    pub k_f_max: f64,
    pub k_restriction_max: f64,
    pub max_deviation: f64,
}

impl Patch {
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_along + col
    }

    pub fn vertex(&self, row: usize, col: usize) -> &[f64] {
        &self.vertices[self.index(row, col)]
    }

    pub fn top_row(&self) -> &[Vec<f64>] {
        &self.vertices[self.n_up * self.n_along..]
    }

    pub fn base_row(&self) -> &[Vec<f64>] {
        &self.vertices[..self.n_along]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StaircaseStatus {
    Completed,
    /// Every admissible height down to `min_height` ran some ray into a
    /// singular point or to infinity.
    SingularFront { height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RailingNode {
    pub height: f64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseSurface {
    pub map: String,
    pub config: StaircaseConfig,
    pub patches: Vec<Patch>,
    pub railing: Vec<RailingNode>,
    /// Cumulative heights `h₀ = 0 < h₁ < …` of the step tops.
    pub heights: Vec<f64>,
    /// Image points where ray lifts were abandoned.
    pub singular_front: Vec<[f64; 2]>,
    /// Columns whose rays failed at the final height (empty when completed).
    pub front_columns: Vec<usize>,
    /// Lift of the segment at the final height, from the railing.
    pub top_lift: Vec<Vec<f64>>,
    pub status: StaircaseStatus,
    /// Distance between each patch's top row and the next patch's base row,
    /// per column.
    pub gaps: Vec<Vec<f64>>,
}

impl StaircaseSurface {
    pub fn reached_height(&self) -> f64 {
        *self.heights.last().expect("heights start at 0")
    }

    pub fn vertex_count(&self) -> usize {
        self.patches.iter().map(|p| p.vertices.len()).sum()
    }

    /// `sup ‖F(v) − image(v)‖` over all patch vertices.
    pub fn mesh_audit(&self, f: &MapSpec) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for p in &self.patches {
            for (v, y) in p.vertices.iter().zip(&p.image) {
                worst = worst.max(norm(&f.image_residual(&f.eval(v)?, y)));
            }
        }
        Ok(worst)
    }
}

struct Chain {
    points: Vec<Vec<f64>>,
    /// `(segment index, image point)` where lifting stopped.
    failure: Option<(usize, [f64; 2])>,
}

/// Lifts the polyline through `nodes` piece by piece so every node gets an
/// exact lifted counterpart.
fn lift_chain(f: &MapSpec, nodes: &[[f64; 2]], start: &[f64], opts: &LiftOptions) -> Result<Chain> {
    let mut points = vec![start.to_vec()];
    for (k, w) in nodes.windows(2).enumerate() {
        let base = BasePath::segment(w[0].to_vec(), w[1].to_vec());
        let lp = lift_path(f, &base, points.last().expect("nonempty"), opts)?;
        match lp.status {
            LiftStatus::Completed => points.push(lp.end().to_vec()),
            LiftStatus::Escaped { t_star: t, .. }
            | LiftStatus::HitSingular { t }
            | LiftStatus::StepCollapse { t } => {
                let y = base.point(t);
                return Ok(Chain {
                    points,
                    failure: Some((k, [y[0], y[1]])),
                });
            }
        }
    }
    Ok(Chain { points, failure: None })
}

struct VertexData {
    jac: Matrix,
    plane: Vec<Vec<f64>>,
    k: f64,
}

fn vertex_data(f: &MapSpec, x: &[f64]) -> Result<VertexData> {
    let jac = f.jacobian(x)?;
    let s = svd(&jac)?;
    if s.rank(RANK_TOL) < 2 {
        return Err(Error::SingularPoint(x.to_vec()));
    }
    let plane = frame_at(f, x)?.plane;
    Ok(VertexData {
        jac,
        plane,
        k: s.singular_values[0] / s.singular_values[1],
    })
}

/// Orthonormal basis of the discrete tangent plane of a quad, or `None`
/// when the quad is degenerate.
fn quad_tangent(p00: &[f64], p10: &[f64], p01: &[f64], p11: &[f64]) -> Option<[Vec<f64>; 2]> {
    let eu = scaled(&axpy(&sub(p10, p00), 1.0, &sub(p11, p01)), 0.5);
    let ev = scaled(&axpy(&sub(p01, p00), 1.0, &sub(p11, p10)), 0.5);
    let nu = norm(&eu);
    if nu == 0.0 {
        return None;
    }
    let q1 = scaled(&eu, 1.0 / nu);
    let w = axpy(&ev, -dot(&ev, &q1), &q1);
    let nw = norm(&w);
    if nw <= 1e-12 * norm(&ev).max(nu) {
        return None;
    }
    Some([q1, scaled(&w, 1.0 / nw)])
}

/// Eccentricity of `F′(x)` restricted to span `q` (a 2-plane), and the
/// largest principal angle between span `q` and the distribution plane.
fn restricted(v: &VertexData, q: &[Vec<f64>; 2]) -> (f64, f64) {
    let a = v.jac.mul_vec(&q[0]);
    let b = v.jac.mul_vec(&q[1]);
    let m = Matrix::from_columns(&[a, b]);
    let s = svd(&m).expect("2x2");
    let k = if s.singular_values[1] > 0.0 {
        s.singular_values[0] / s.singular_values[1]
    } else {
        f64::INFINITY
    };
    (k, subspace_angle(q, &v.plane))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadStats {
    pub k_restriction: f64,
    pub deviation: f64,
}

fn quad_stats(
    grid: &[Vec<f64>],
    data: &[VertexData],
    n_along: usize,
    row: usize,
    col: usize,
) -> Option<QuadStats> {
    let id = |r: usize, c: usize| r * n_along + c;
    let corners = [id(row, col), id(row, col + 1), id(row + 1, col), id(row + 1, col + 1)];
    let q = quad_tangent(
        &grid[corners[0]],
        &grid[corners[1]],
        &grid[corners[2]],
        &grid[corners[3]],
    )?;
    let mut out = QuadStats {
        k_restriction: 0.0,
        deviation: 0.0,
    };
    for &c in &corners {
        let (k, dev) = restricted(&data[c], &q);
        out.k_restriction = out.k_restriction.max(k);
        out.deviation = out.deviation.max(dev);
    }
    Some(out)
}

enum Attempt {
    Accepted(Patch),
    RaysFailed(Vec<(usize, [f64; 2])>),
    Eccentric { image: [f64; 2], k: f64, deviation: f64 },
}

fn attempt_step(
    f: &MapSpec,
    cfg: &StaircaseConfig,
    base_row: &[Vec<f64>],
    tau: f64,
    h: f64,
) -> Result<Attempt> {
    let (na, nu) = (cfg.n_along, cfg.n_up);
    let rays: Vec<Chain> = (0..na)
        .into_par_iter()
        .map(|c| {
            let nodes: Vec<[f64; 2]> = (0..=nu)
                .map(|k| cfg.image_point(c, tau + h * k as f64 / nu as f64))
                .collect();
            lift_chain(f, &nodes, &base_row[c], &cfg.lift)
        })
        .collect::<Result<_>>()?;
    let failed: Vec<(usize, [f64; 2])> = rays
        .iter()
        .enumerate()
        .filter_map(|(c, r)| r.failure.map(|(_, y)| (c, y)))
        .collect();
    if !failed.is_empty() {
        return Ok(Attempt::RaysFailed(failed));
    }
    let mut vertices = Vec::with_capacity((nu + 1) * na);
    let mut image = Vec::with_capacity((nu + 1) * na);
    for k in 0..=nu {
        for (c, ray) in rays.iter().enumerate() {
            vertices.push(ray.points[k].clone());
            image.push(cfg.image_point(c, tau + h * k as f64 / nu as f64));
        }
    }
    let data: Vec<Result<VertexData>> = vertices.par_iter().map(|v| vertex_data(f, v)).collect();
    let mut singular = vec![];
    for (i, d) in data.iter().enumerate() {
        match d {
            Ok(_) => {}
            Err(Error::SingularPoint(_)) | Err(Error::DomainViolation(_)) => {
                singular.push((i % na, image[i]));
            }
            Err(e) => return Err(e.clone()),
        }
    }
    if !singular.is_empty() {
        return Ok(Attempt::RaysFailed(singular));
    }
    let data: Vec<VertexData> = data.into_iter().map(|d| d.expect("checked")).collect();
    let k_f_max = data.iter().map(|d| d.k).fold(0.0, f64::max);
    let quads: Vec<(usize, usize)> = (0..nu).flat_map(|r| (0..na - 1).map(move |c| (r, c))).collect();
    let stats: Vec<Option<QuadStats>> = quads
        .par_iter()
        .map(|&(r, c)| quad_stats(&vertices, &data, na, r, c))
        .collect();
    let mut k_max: f64 = 0.0;
    let mut dev_max: f64 = 0.0;
    for (&(r, c), s) in quads.iter().zip(&stats) {
        let Some(s) = s else { continue };
        if s.k_restriction > cfg.k_factor * k_f_max || s.deviation >= cfg.angle_tol {
            return Ok(Attempt::Eccentric {
                image: image[r * na + c],
                k: s.k_restriction,
                deviation: s.deviation,
            });
        }
        k_max = k_max.max(s.k_restriction);
        dev_max = dev_max.max(s.deviation);
    }
    Ok(Attempt::Accepted(Patch {
        tau,
        height: h,
        n_along: na,
        n_up: nu,
        vertices,
        image,
        k_f_max,
        k_restriction_max: k_max,
        max_deviation: dev_max,
    }))
}

fn segment_nodes(cfg: &StaircaseConfig, tau: f64) -> Vec<[f64; 2]> {
    (0..cfg.n_along).map(|c| cfg.image_point(c, tau)).collect()
}

/// Sweeps lifted rays over `I` in adaptive height steps.
///
/// Each step lifts the current top segment from the railing, then lifts the
/// rays above each of its `n_along` nodes. A candidate height is accepted when
/// no ray fails and every quad has restricted eccentricity at most
/// `k_factor` times the largest eccentricity of `F` on the patch and tangent
/// planes within `angle_tol` of the distribution. Rejected heights are halved;
/// a height accepted at first try is offered one doubling.
pub fn build_staircase(f: &MapSpec, cfg: &StaircaseConfig) -> Result<StaircaseSurface> {
    cfg.validate(f)?;
    let a = cfg.image_point(0, 0.0);
    let r0 = norm(&f.image_residual(&f.eval(&cfg.start)?, &a));
    if r0 > cfg.lift.lift_tol {
        return Err(Error::BadStart(r0));
    }
    let first = lift_chain(f, &segment_nodes(cfg, 0.0), &cfg.start, &cfg.lift)?;
    if first.failure.is_some() {
        return Err(Error::BadStart(f64::INFINITY));
    }
    let cap = cfg.max_step_height.unwrap_or(cfg.max_height).min(cfg.max_height);
    let mut h = cfg.initial_height.unwrap_or(0.25 * cfg.max_height).min(cap);
    let mut surface = StaircaseSurface {
        map: f.name().to_string(),
        config: cfg.clone(),
        patches: vec![],
        railing: vec![RailingNode {
            height: 0.0,
            point: cfg.start.clone(),
        }],
        heights: vec![0.0],
        singular_front: vec![],
        front_columns: vec![],
        top_lift: first.points,
        status: StaircaseStatus::Completed,
        gaps: vec![],
    };
    let mut tau = 0.0;
    while cfg.max_height - tau > 1e-12 * cfg.max_height {
        let remaining = cfg.max_height - tau;
        h = h.min(remaining).min(cap);
        let mut halved = false;
        let patch = loop {
            match attempt_step(f, cfg, &surface.top_lift, tau, h)? {
                Attempt::Accepted(p) => break Some(p),
                Attempt::RaysFailed(failures) => {
                    h *= 0.5;
                    halved = true;
                    if h < cfg.min_height {
                        surface.front_columns = failures.iter().map(|(c, _)| *c).collect();
                        surface.front_columns.dedup();
                        surface.singular_front = failures.into_iter().map(|(_, y)| y).collect();
                        break None;
                    }
                }
                Attempt::Eccentric { image, k, deviation } => {
                    h *= 0.5;
                    halved = true;
                    if h < cfg.min_height {
                        return Err(Error::StepCollapse(format!(
                            "image point ({}, {}), height {tau}: restricted K = {k}, plane deviation {deviation} rad",
                            image[0], image[1]
                        )));
                    }
                }
            }
        };
        let Some(mut patch) = patch else {
            surface.status = StaircaseStatus::SingularFront { height: tau };
            return Ok(surface);
        };
        if !halved && 2.0 * h <= remaining.min(cap) * (1.0 + 1e-12) {
            if let Attempt::Accepted(p) = attempt_step(f, cfg, &surface.top_lift, tau, 2.0 * h)? {
                patch = p;
                h *= 2.0;
            }
        }
        tau = if remaining - h <= 1e-12 * cfg.max_height {
            cfg.max_height
        } else {
            tau + h
        };
        let rail_top = patch.vertex(cfg.n_up, 0).to_vec();
        surface.railing.push(RailingNode {
            height: tau,
            point: rail_top.clone(),
        });
        surface.heights.push(tau);
        let next = lift_chain(f, &segment_nodes(cfg, tau), &rail_top, &cfg.lift)?;
        let gaps: Vec<f64> = patch
            .top_row()
            .iter()
            .zip(&next.points)
            .map(|(a, b)| distance(a, b))
            .collect();
        surface.patches.push(patch);
        let lifted = next.points.len();
        surface.top_lift = next.points;
        if let Some((_, y)) = next.failure {
            surface.singular_front.push(y);
            surface.front_columns = (lifted..cfg.n_along).collect();
            surface.status = StaircaseStatus::SingularFront { height: tau };
            return Ok(surface);
        }
        surface.gaps.push(gaps);
    }
    Ok(surface)
}

/// Restarts the construction from the longest run of top-segment columns
/// whose rays did not fail, as long as height budget remains.
pub fn continue_through_front(f: &MapSpec, s: &StaircaseSurface) -> Result<Option<StaircaseSurface>> {
    let tau = s.reached_height();
    let cfg = &s.config;
    if s.status == StaircaseStatus::Completed || cfg.max_height - tau <= 1e-12 * cfg.max_height {
        return Ok(None);
    }
    let usable = s.top_lift.len();
    let mut best: Option<(usize, usize)> = None;
    let mut c = 0;
    while c < usable {
        if s.front_columns.contains(&c) {
            c += 1;
            continue;
        }
        let start = c;
        while c < usable && !s.front_columns.contains(&c) {
            c += 1;
        }
        if c - start >= 2 && best.is_none_or(|(a, b)| c - start > b - a) {
            best = Some((start, c));
        }
    }
    let Some((c0, c1)) = best else {
        return Ok(None);
    };
    let sub = StaircaseConfig {
        segment: [cfg.image_point(c0, tau), cfg.image_point(c1 - 1, tau)],
        start: s.top_lift[c0].clone(),
        n_along: c1 - c0,
        max_height: cfg.max_height - tau,
        initial_height: cfg.initial_height.map(|h| h.min(cfg.max_height - tau)),
        ..cfg.clone()
    };
    build_staircase(f, &sub).map(Some)
}

/// Largest distance between base-row vertices of two surfaces that share an
/// image point, or `None` when the base segments do not overlap.
pub fn overlap_agreement(a: &StaircaseSurface, b: &StaircaseSurface) -> Option<f64> {
    let (pa, pb) = (a.patches.first()?, b.patches.first()?);
    let mut worst: Option<f64> = None;
    for (va, ya) in pa.base_row().iter().zip(&pa.image) {
        for (vb, yb) in pb.base_row().iter().zip(&pb.image) {
            if distance(ya, yb) <= 1e-9 {
                let d = distance(va, vb);
                worst = Some(worst.map_or(d, |w| w.max(d)));
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchEccentricity {
    pub patch: usize,
    pub k_max: f64,
    pub k_mean: f64,
    /// Largest eccentricity of `F` itself at the patch vertices.
    pub k_f_max: f64,
    pub sampled: usize,
    pub degenerate: usize,
}

/// Eccentricity of `F′` restricted to the discrete tangent planes of every
/// `stride`-th quad (in both directions) of each patch.
pub fn restriction_eccentricity(
    f: &MapSpec,
    s: &StaircaseSurface,
    stride: usize,
) -> Result<Vec<PatchEccentricity>> {
    let stride = stride.max(1);
    s.patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let data: Vec<VertexData> = p
                .vertices
                .par_iter()
                .map(|v| vertex_data(f, v))
                .collect::<Result<_>>()?;
            let quads: Vec<(usize, usize)> = (0..p.n_up)
                .step_by(stride)
                .flat_map(|r| (0..p.n_along - 1).step_by(stride).map(move |c| (r, c)))
                .collect();
            let stats: Vec<Option<QuadStats>> = quads
                .par_iter()
                .map(|&(r, c)| quad_stats(&p.vertices, &data, p.n_along, r, c))
                .collect();
            let ks: Vec<f64> = stats.iter().flatten().map(|q| q.k_restriction).collect();
            Ok(PatchEccentricity {
                patch: i,
                k_max: ks.iter().copied().fold(0.0, f64::max),
                k_mean: if ks.is_empty() { f64::NAN } else { ks.iter().sum::<f64>() / ks.len() as f64 },
                k_f_max: data.iter().map(|d| d.k).fold(0.0, f64::max),
                sampled: ks.len(),
                degenerate: stats.len() - ks.len(),
            })
        })
        .collect()
}
