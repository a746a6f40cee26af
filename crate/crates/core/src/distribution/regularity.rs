use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{frame_at, subspace_angle};
use crate::error::{Error, Result};
use crate::linalg::{distance, norm, scaled};
use crate::maps::MapSpec;
use crate::qc::{random_unit, Extended};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityRow {
    pub radius: f64,
    /// Smallest distance between probes whose planes deviate by more than
    /// `eps_angle`; infinite when no pair does.
    pub delta: Extended,
    pub probes: usize,
    pub deviating_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityTable {
    pub map: String,
    pub center: Vec<f64>,
    pub eps_angle: f64,
    pub rows: Vec<RegularityRow>,
}

/// Empirical modulus of continuity of the distribution in balls about `center`.
///
/// Every radius contributes `probe_count` uniform points of its own ball to a
/// shared pool, and the ball of radius `r` uses all pooled points inside it.
/// Balls are therefore nested sample sets and `δ(r)` is nonincreasing in `r`.
/// Planes are compared through the largest principal angle between fibers.
pub fn angle_regularity(
    f: &MapSpec,
    center: &[f64],
    radii: &[f64],
    probe_count: usize,
    eps_angle: f64,
    seed: u64,
) -> Result<RegularityTable> {
    let m = f.m();
    if center.len() != m {
        return Err(Error::DimensionError(format!("center must lie in R^{m}")));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || !(eps_angle > 0.0) {
        return Err(Error::InvalidInput("radii and eps_angle must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(radii.len() * probe_count);
    for &r in radii {
        for _ in 0..probe_count {
            let u = random_unit(&mut rng, m);
            let rad = r * rng.gen::<f64>().powf(1.0 / m as f64);
            raw.push(crate::linalg::axpy(center, 1.0, &scaled(&u, rad)));
        }
    }
    let pool: Vec<(Vec<f64>, Vec<Vec<f64>>)> = raw
        .into_par_iter()
        .filter_map(|x| frame_at(f, &x).ok().map(|fr| (x, fr.fiber)))
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let ball: Vec<&(Vec<f64>, Vec<Vec<f64>>)> = pool
            .iter()
            .filter(|(x, _)| norm(&crate::linalg::sub(x, center)) <= r)
            .collect();
        if ball.len() < 2 {
            return Err(Error::EmptySample);
        }
        let (delta, count) = (0..ball.len())
            .into_par_iter()
            .map(|i| {
                let mut best = f64::INFINITY;
                let mut count = 0usize;
                for j in i + 1..ball.len() {
                    if subspace_angle(&ball[i].1, &ball[j].1) > eps_angle {
                        count += 1;
                        best = best.min(distance(&ball[i].0, &ball[j].0));
                    }
                }
                (best, count)
            })
            .reduce(|| (f64::INFINITY, 0), |a, b| (a.0.min(b.0), a.1 + b.1));
        rows.push(RegularityRow {
            radius: r,
            delta: Extended::from_f64(delta),
            probes: ball.len(),
            deviating_pairs: count,
        });
    }
    Ok(RegularityTable {
        map: f.name().to_string(),
        center: center.to_vec(),
        eps_angle,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{builtin, contact_map};

    #[test]
    fn flat_distribution_never_deviates() {
        let f = builtin("ortho_proj:3,2").unwrap();
        let t = angle_regularity(&f, &[0.0; 3], &[1.0, 10.0], 100, 0.1, 1).unwrap();
        for row in &t.rows {
            assert_eq!(row.delta, Extended::Infinite);
            assert_eq!(row.deviating_pairs, 0);
        }
    }

    #[test]
    fn contact_delta_is_finite_and_decreasing() {
        // Normals ∝ (0, εx, 1): the angle between two probes is
        // |atan(εx₁) − atan(εx₂)|, which exceeds 0.1 only when |x₁ − x₂| ≳ 1.
        let f = contact_map(0.1);
        let t = angle_regularity(&f, &[0.0; 3], &[2.0, 5.0, 10.0], 150, 0.1, 3).unwrap();
        let d: Vec<f64> = t.rows.iter().map(|r| r.delta.value()).collect();
        assert!(d.iter().all(|v| v.is_finite()));
        assert!(d[0] >= d[1] && d[1] >= d[2], "{d:?}");
        assert!(d[2] >= 1.0, "{d:?}");
    }

    #[test]
    fn hopf_delta_monotone() {
        let f = builtin("hopf_derived").unwrap();
        let t = angle_regularity(&f, &[0.0; 3], &[1.0, 5.0, 10.0], 150, 0.1, 5).unwrap();
        let d: Vec<f64> = t.rows.iter().map(|r| r.delta.value()).collect();
        assert!(d[0] >= d[1] && d[1] >= d[2], "{d:?}");
    }

    #[test]
    fn all_probes_singular() {
        let f = builtin("torus_fold").unwrap();
        assert!(matches!(
            angle_regularity(&f, &[0.0; 3], &[1.0], 20, 0.1, 0),
            Err(Error::EmptySample)
        ));
    }
}
