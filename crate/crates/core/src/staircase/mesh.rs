use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StaircaseSurface;
use crate::error::{Error, Result};
use crate::linalg::{axpy, distance, dot, norm, sub};

/// Where geodesic distances are measured from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthSeed {
    /// The lifted base segment `Ĩ` (row 0 of the first patch).
    BaseRow,
    /// All vertices whose image lies within `tol` of the segment `[a, b]`.
    ImageSegment { a: [f64; 2], b: [f64; 2], tol: f64 },
}

/// A staircase surface flattened into one vertex/quad list.
///
/// Consecutive patches share the railing exactly; other seam vertices are
/// merged when they coincide and joined by bridge edges otherwise.
#[derive(Debug, Clone)]
pub struct QuadMesh {
    pub vertices: Vec<Vec<f64>>,
    pub image: Vec<[f64; 2]>,
    /// Corners in the order `(r, c), (r, c+1), (r+1, c+1), (r+1, c)`.
    pub quads: Vec<[usize; 4]>,
    /// `(patch, row, col)` of each quad.
    pub quad_origin: Vec<(usize, usize, usize)>,
    /// Per patch, the global id of each local vertex.
    pub vertex_ids: Vec<Vec<usize>>,
    /// Vertices on the outer rim: first base row, last top row, both side columns.
    pub rim: Vec<usize>,
    pub bridges: usize,
    adjacency: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl QuadMesh {
    pub fn from_surface(s: &StaircaseSurface) -> Result<Self> {
        if s.patches.is_empty() {
            return Err(Error::InvalidSurface("surface has no patches".into()));
        }
        let mut vertices: Vec<Vec<f64>> = vec![];
        let mut image: Vec<[f64; 2]> = vec![];
        let mut vertex_ids: Vec<Vec<usize>> = vec![];
        let mut bridge_pairs: Vec<(usize, usize)> = vec![];
        for (i, p) in s.patches.iter().enumerate() {
            if p.vertices.len() != (p.n_up + 1) * p.n_along || p.image.len() != p.vertices.len() {
                return Err(Error::InvalidSurface(format!("patch {i} has a malformed grid")));
            }
            let mut ids = Vec::with_capacity(p.vertices.len());
            for (k, v) in p.vertices.iter().enumerate() {
                let (row, col) = (k / p.n_along, k % p.n_along);
                if row == 0 && i > 0 {
                    let prev = &s.patches[i - 1];
                    if prev.n_along != p.n_along {
                        return Err(Error::InvalidSurface("patches differ in width".into()));
                    }
                    let below = vertex_ids[i - 1][prev.index(prev.n_up, col)];
                    let weld = 1e-9 * (1.0 + norm(v));
                    if distance(&vertices[below], v) <= weld {
                        ids.push(below);
                        continue;
                    }
                    bridge_pairs.push((below, vertices.len()));
                }
                ids.push(vertices.len());
                vertices.push(v.clone());
                image.push(p.image[k]);
            }
            vertex_ids.push(ids);
        }
        let mut adjacency = vec![vec![]; vertices.len()];
        let mut link = |a: usize, b: usize, verts: &[Vec<f64>]| {
            let w = distance(&verts[a], &verts[b]);
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        };
        let mut quads = vec![];
        let mut quad_origin = vec![];
        for (i, p) in s.patches.iter().enumerate() {
            let id = |r: usize, c: usize| vertex_ids[i][p.index(r, c)];
            for r in 0..=p.n_up {
                for c in 0..p.n_along {
                    if c + 1 < p.n_along {
                        link(id(r, c), id(r, c + 1), &vertices);
                    }
                    if r < p.n_up {
                        link(id(r, c), id(r + 1, c), &vertices);
                    }
                    if r < p.n_up && c + 1 < p.n_along {
                        link(id(r, c), id(r + 1, c + 1), &vertices);
                        link(id(r, c + 1), id(r + 1, c), &vertices);
                        quads.push([id(r, c), id(r, c + 1), id(r + 1, c + 1), id(r + 1, c)]);
                        quad_origin.push((i, r, c));
                    }
                }
            }
        }
        for &(a, b) in &bridge_pairs {
            link(a, b, &vertices);
        }
        let mut rim = vec![];
        let last = s.patches.len() - 1;
        for (i, p) in s.patches.iter().enumerate() {
            for r in 0..=p.n_up {
                rim.push(vertex_ids[i][p.index(r, 0)]);
                rim.push(vertex_ids[i][p.index(r, p.n_along - 1)]);
            }
            for c in 0..p.n_along {
                if i == 0 {
                    rim.push(vertex_ids[i][p.index(0, c)]);
                }
                if i == last {
                    rim.push(vertex_ids[i][p.index(p.n_up, c)]);
                }
            }
        }
        rim.sort_unstable();
        rim.dedup();
        Ok(QuadMesh {
            vertices,
            image,
            quads,
            quad_origin,
            vertex_ids,
            rim,
            bridges: bridge_pairs.len(),
            adjacency,
        })
    }

    pub fn seed_vertices(&self, seed: &GrowthSeed) -> Result<Vec<usize>> {
        let ids: Vec<usize> = match seed {
            GrowthSeed::BaseRow => {
                let n = self.vertex_ids[0].len();
                let width = self.quad_origin.iter().filter(|q| q.0 == 0 && q.1 == 0).count() + 1;
                self.vertex_ids[0][..width.min(n)].to_vec()
            }
            GrowthSeed::ImageSegment { a, b, tol } => (0..self.vertices.len())
                .filter(|&v| point_segment_distance(&self.image[v], a, b) <= *tol)
                .collect(),
        };
        if ids.is_empty() {
            return Err(Error::InvalidInput("growth seed matches no mesh vertex".into()));
        }
        Ok(ids)
    }

    /// Multi-source Dijkstra over quad edges, both quad diagonals and bridges,
    /// with an additional planar-wavefront update across every triangle that
    /// has two settled corners. The triangle update keeps the gradient of the
    /// distance field close to 1 where pure graph distances overshoot.
    pub fn distances(&self, sources: &[usize]) -> Vec<f64> {
        let nv = self.vertices.len();
        let mut incident: Vec<Vec<u32>> = vec![vec![]; nv];
        let tris: Vec<[usize; 3]> = self
            .quads
            .iter()
            .flat_map(|q| {
                [
                    [q[0], q[1], q[2]],
                    [q[0], q[2], q[3]],
                    [q[0], q[1], q[3]],
                    [q[1], q[2], q[3]],
                ]
            })
            .collect();
        for (t, tri) in tris.iter().enumerate() {
            for &v in tri {
                incident[v].push(t as u32);
            }
        }
        let mut d = vec![f64::INFINITY; nv];
        let mut done = vec![false; nv];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            d[s] = 0.0;
            heap.push(Entry(0.0, s));
        }
        while let Some(Entry(dv, v)) = heap.pop() {
            if done[v] || dv > d[v] {
                continue;
            }
            done[v] = true;
            for &(w, len) in &self.adjacency[v] {
                let nd = dv + len;
                if nd < d[w] {
                    d[w] = nd;
                    heap.push(Entry(nd, w));
                }
            }
            for &t in &incident[v] {
                let tri = tris[t as usize];
                let others: Vec<usize> = tri.iter().copied().filter(|&x| x != v).collect();
                let (a, c) = match (done[others[0]], done[others[1]]) {
                    (true, false) => (others[0], others[1]),
                    (false, true) => (others[1], others[0]),
                    _ => continue,
                };
                if let Some(nd) = wavefront_update(&self.vertices, v, a, c, d[v], d[a]) {
                    if nd < d[c] {
                        d[c] = nd;
                        heap.push(Entry(nd, c));
                    }
                }
            }
        }
        d
    }

    /// The two triangles each quad is split into.
    pub fn triangles(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
    }

    pub fn quad_area(&self, q: usize) -> f64 {
        let [a, b, c, d] = self.quads[q];
        let v = &self.vertices;
        triangle_area(&v[a], &v[b], &v[c]) + triangle_area(&v[a], &v[c], &v[d])
    }

    /// Geodesic distance from the seed to the nearest rim vertex: the
    /// largest radius whose geodesic ball stays inside the mesh.
    pub fn extent(&self, dist: &[f64]) -> f64 {
        self.rim
            .iter()
            .map(|&v| dist[v])
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Distance at `c` of the planar wave through `a` and `b` with unit speed
/// that reaches `a` at time `da` and `b` at time `db`, provided the
/// characteristic through `c` crosses the segment `ab`.
fn wavefront_update(v: &[Vec<f64>], a: usize, b: usize, c: usize, da: f64, db: f64) -> Option<f64> {
    let e = sub(&v[b], &v[a]);
    let l = norm(&e);
    let ac = sub(&v[c], &v[a]);
    if l == 0.0 {
        return None;
    }
    let u = (db - da) / l;
    if u.abs() >= 1.0 {
        return None;
    }
    let cx = dot(&ac, &e) / l;
    let cy = (dot(&ac, &ac) - cx * cx).max(0.0).sqrt();
    if cy <= 1e-12 * l {
        return None;
    }
    let (nx, ny) = (u, (1.0 - u * u).sqrt());
    let foot = (cx - cy / ny * nx) / l;
    if !(0.0..=1.0).contains(&foot) {
        return None;
    }
    Some(da + nx * cx + ny * cy)
}

fn point_segment_distance(p: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let ab = sub(b, a);
    let l2 = dot(&ab, &ab);
    let t = if l2 == 0.0 {
        0.0
    } else {
        (dot(&sub(p, a), &ab) / l2).clamp(0.0, 1.0)
    };
    distance(p, &axpy(a, t, &ab))
}

pub(crate) fn triangle_area(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let u = sub(b, a);
    let v = sub(c, a);
    let uv = dot(&u, &v);
    0.5 * (dot(&u, &u) * dot(&v, &v) - uv * uv).max(0.0).sqrt()
}

fn lerp_at(p: &[f64], q: &[f64], dp: f64, dq: f64, r: f64) -> Vec<f64> {
    let s = (r - dp) / (dq - dp);
    axpy(p, s, &sub(q, p))
}

/// Area of `{d ≤ r}` and length of `{d = r}` inside a triangle on which `d`
/// is the linear interpolant of its vertex values.
fn clip_triangle(p: [&[f64]; 3], d: [f64; 3], r: f64) -> (f64, f64) {
    let below: Vec<usize> = (0..3).filter(|&i| d[i] <= r).collect();
    match below.len() {
        0 => (0.0, 0.0),
        3 => (triangle_area(p[0], p[1], p[2]), 0.0),
        1 => {
            let i = below[0];
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let pij = lerp_at(p[i], p[j], d[i], d[j], r);
            let pik = lerp_at(p[i], p[k], d[i], d[k], r);
            (triangle_area(p[i], &pij, &pik), distance(&pij, &pik))
        }
        _ => {
            let k = (0..3).find(|i| !below.contains(i)).expect("one vertex above");
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let pki = lerp_at(p[i], p[k], d[i], d[k], r);
            let pkj = lerp_at(p[j], p[k], d[j], d[k], r);
            (
                triangle_area(p[0], p[1], p[2]) - triangle_area(p[k], &pki, &pkj),
                distance(&pki, &pkj),
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub radii: Vec<f64>,
    /// Length of the geodesic circle `{d = r}`.
    pub lengths: Vec<f64>,
    /// Area of the geodesic ball `{d ≤ r}`.
    pub areas: Vec<f64>,
    /// `A(r₁) + ∫ L dr` by the trapezoid rule over the given radii.
    pub area_from_lengths: Vec<f64>,
    pub area_exponent: f64,
    pub length_exponent: f64,
    pub extent: f64,
    pub seed_vertices: usize,
}

/// Least-squares slope of `ln y` against `ln x`.
pub(crate) fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Geodesic-ball areas and geodesic-circle lengths on the surface, with
/// growth exponents fitted over the upper half of `radii`.
pub fn growth_profile(s: &StaircaseSurface, radii: &[f64], seed: &GrowthSeed) -> Result<GrowthProfile> {
    let mesh = QuadMesh::from_surface(s)?;
    growth_profile_mesh(&mesh, radii, seed)
}

pub fn growth_profile_mesh(mesh: &QuadMesh, radii: &[f64], seed: &GrowthSeed) -> Result<GrowthProfile> {
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidInput("radii must be positive and finite".into()));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("radii must be strictly increasing".into()));
    }
    let sources = mesh.seed_vertices(seed)?;
    let dist = mesh.distances(&sources);
    if dist.iter().any(|d| d.is_infinite()) {
        return Err(Error::InvalidSurface("mesh graph is disconnected".into()));
    }
    let extent = mesh.extent(&dist);
    let r_last = *radii.last().expect("nonempty");
    if r_last > extent {
        return Err(Error::OutOfExtent(r_last, extent));
    }
    let tris: Vec<[usize; 3]> = mesh.triangles().collect();
    let (areas, lengths): (Vec<f64>, Vec<f64>) = radii
        .par_iter()
        .map(|&r| {
            tris.iter().fold((0.0, 0.0), |(a, l), t| {
                let p = [
                    mesh.vertices[t[0]].as_slice(),
                    mesh.vertices[t[1]].as_slice(),
                    mesh.vertices[t[2]].as_slice(),
                ];
                let (da, dl) = clip_triangle(p, [dist[t[0]], dist[t[1]], dist[t[2]]], r);
                (a + da, l + dl)
            })
        })
        .unzip();
    let mut area_from_lengths = vec![areas[0]];
    for k in 1..radii.len() {
        let step = 0.5 * (lengths[k] + lengths[k - 1]) * (radii[k] - radii[k - 1]);
        area_from_lengths.push(area_from_lengths[k - 1] + step);
    }
    let half = radii.len() / 2;
    Ok(GrowthProfile {
        area_exponent: loglog_slope(&radii[half..], &areas[half..]),
        length_exponent: loglog_slope(&radii[half..], &lengths[half..]),
        radii: radii.to_vec(),
        lengths,
        areas,
        area_from_lengths,
        extent,
        seed_vertices: sources.len(),
    })
}
