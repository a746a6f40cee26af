use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::complex::{CellComplex, ComplexGeometry};
use super::family::Side;
use super::Evaluation;
use crate::error::{Error, Result};

/// Directed cell graph for implicit families. A path enters a cell at an
/// entry, walks centre to centre, and leaves through an exit; every move
/// splits its length between the two cells it touches.
pub(super) struct Lattice {
    entry: Vec<(usize, f64)>,
    exit: Vec<(usize, f64)>,
    /// `(next, length in this cell, length in next)`.
    moves: Vec<Vec<(usize, f64, f64)>>,
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Lattice {
    pub(super) fn grid(complex: &CellComplex, side: Side) -> Result<Self> {
        let ComplexGeometry::Grid { nx, ny, width, height } = complex.geometry else {
            return Err(Error::InvalidFamily("grid crossings need a grid complex".into()));
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
        let mut moves = vec![vec![]; nx * ny];
        for lane in 0..lanes {
            for step in 0..steps {
                let here = cell(lane, step);
                if step + 1 < steps {
                    moves[here].push((cell(lane, step + 1), 0.5 * along, 0.5 * along));
                }
                if lane + 1 < lanes {
                    moves[here].push((cell(lane + 1, step), 0.5 * across, 0.5 * across));
                }
                if lane > 0 {
                    moves[here].push((cell(lane - 1, step), 0.5 * across, 0.5 * across));
                }
            }
        }
        Ok(Lattice {
            entry: (0..lanes).map(|l| (cell(l, 0), 0.5 * along)).collect(),
            exit: (0..lanes).map(|l| (cell(l, steps - 1), 0.5 * along)).collect(),
            moves,
        })
    }

    pub(super) fn radial(complex: &CellComplex) -> Result<Self> {
        let ComplexGeometry::Polar { r_edges, n_theta, metric } = &complex.geometry else {
            return Err(Error::InvalidFamily("radial crossings need a polar complex".into()));
        };
        let nt = *n_theta;
        let rings = r_edges.len() - 1;
        let dth = std::f64::consts::TAU / nt as f64;
        let mut moves = vec![vec![]; rings * nt];
        for i in 0..rings {
            let dr = r_edges[i + 1] - r_edges[i];
            let arc = metric.circumference_factor(0.5 * (r_edges[i] + r_edges[i + 1])) * dth;
            for j in 0..nt {
                let here = i * nt + j;
                if i + 1 < rings {
                    let dr_next = r_edges[i + 2] - r_edges[i + 1];
                    moves[here].push(((i + 1) * nt + j, 0.5 * dr, 0.5 * dr_next));
                }
                moves[here].push((i * nt + (j + 1) % nt, 0.5 * arc, 0.5 * arc));
                moves[here].push((i * nt + (j + nt - 1) % nt, 0.5 * arc, 0.5 * arc));
            }
        }
        let first = r_edges[1] - r_edges[0];
        let last = r_edges[rings] - r_edges[rings - 1];
        Ok(Lattice {
            entry: (0..nt).map(|j| (j, 0.5 * first)).collect(),
            exit: (0..nt).map(|j| ((rings - 1) * nt + j, 0.5 * last)).collect(),
            moves,
        })
    }

    /// Dijkstra from every entry; returns distances to cell centres and predecessors.
    fn sweep(&self, rho: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let n = self.moves.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        for &(c, h) in &self.entry {
            let d = rho[c] * h;
            if d < dist[c] {
                dist[c] = d;
                heap.push(Item(d, c));
            }
        }
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, hu, hv) in &self.moves[u] {
                let nd = d + rho[u] * hu + rho[v] * hv;
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = u;
                    heap.push(Item(nd, v));
                }
            }
        }
        (dist, pred)
    }

    pub(super) fn shortest(&self, rho: &[f64]) -> f64 {
        let (dist, _) = self.sweep(rho);
        self.exit
            .iter()
            .map(|&(c, h)| dist[c] + rho[c] * h)
            .fold(f64::INFINITY, f64::min)
    }

    /// Shortest length plus the averaged cell profile of the shortest-path
    /// tree branches reaching every exit within `tie_tol` of the minimum.
    pub(super) fn evaluate(&self, rho: &[f64], tie_tol: f64) -> Evaluation {
        let (dist, pred) = self.sweep(rho);
        let totals: Vec<f64> = self.exit.iter().map(|&(c, h)| dist[c] + rho[c] * h).collect();
        let min_length = totals.iter().copied().fold(f64::INFINITY, f64::min);
        let cut = min_length + tie_tol * min_length.abs().max(f64::MIN_POSITIVE);
        let entry_half: std::collections::HashMap<usize, f64> = self.entry.iter().copied().collect();
        let mut direction = vec![0.0; rho.len()];
        let mut count = 0usize;
        for (&(exit, h), &total) in self.exit.iter().zip(&totals) {
            if total > cut {
                continue;
            }
            count += 1;
            direction[exit] += h;
            let mut v = exit;
            while pred[v] != usize::MAX {
                let u = pred[v];
                let &(_, hu, hv) = self.moves[u]
                    .iter()
                    .find(|m| m.0 == v)
                    .expect("predecessor edge exists");
                direction[v] += hv;
                direction[u] += hu;
                v = u;
            }
            direction[v] += entry_half.get(&v).copied().unwrap_or(0.0);
        }
        if count > 0 {
            direction.iter_mut().for_each(|d| *d /= count as f64);
        }
        Evaluation { min_length, direction }
    }
}
