//! The plane field induced by a map of maximal rank, and horizontal lifting.
//!
//! For `F: ℝᵐ → ℝⁿ` of rank `n` at `x`, the fiber through `x` is tangent to
//! `ker F′(x)` and the distribution plane is its orthogonal complement.
//! `F′(x)` maps that plane isomorphically onto `ℝⁿ`, which is what lets
//! vectors and paths in the image be lifted uniquely.

mod coframe;
mod lift;
mod path;
mod regularity;

pub use coframe::{frobenius_residual, CoframeField};
pub use lift::{
    holonomy_defect, lift_path, lift_path_coframe, HolonomyReport, LiftOptions, LiftSample,
    LiftStatus, LiftedPath,
};
pub use path::BasePath;
pub use regularity::{angle_regularity, RegularityRow, RegularityTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, svd, Matrix, SvdResult};
use crate::maps::MapSpec;
use crate::qc::RANK_TOL;

/// Either a map (plane = `(ker F′)^⊥`) or a 1-form in ℝ³ (plane = `ker ω`).
#[derive(Debug, Clone, Copy)]
pub enum DistributionSource<'a> {
    Map(&'a MapSpec),
    Coframe(&'a CoframeField),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFrame {
    pub point: Vec<f64>,
    /// `n` orthonormal vectors spanning `(ker F′)^⊥`.
    pub plane: Vec<Vec<f64>>,
    /// `m − n` orthonormal vectors spanning `ker F′`.
    pub fiber: Vec<Vec<f64>>,
}

fn full_rank_svd(f: &MapSpec, x: &[f64]) -> Result<(Matrix, SvdResult)> {
    let j = f.jacobian(x)?;
    let s = svd(&j)?;
    if f.n() > f.m() || s.rank(RANK_TOL) < f.n() {
        return Err(Error::SingularPoint(x.to_vec()));
    }
    Ok((j, s))
}

pub fn frame_at(f: &MapSpec, x: &[f64]) -> Result<DistributionFrame> {
    let (_, s) = full_rank_svd(f, x)?;
    let n = f.n();
    let cols: Vec<Vec<f64>> = (0..f.m()).map(|j| s.right_vector(j)).collect();
    Ok(DistributionFrame {
        point: x.to_vec(),
        plane: cols[..n].to_vec(),
        fiber: cols[n..].to_vec(),
    })
}

/// Minimum-norm solution of `J ṽ = v` from an SVD of `J`; it lies in the
/// row space of `J`, i.e. in the distribution plane.
fn pseudo_solve(s: &SvdResult, n: usize, v: &[f64]) -> Vec<f64> {
    let m = s.right_frame.rows();
    let mut out = vec![0.0; m];
    for i in 0..n {
        let c = dot(&s.left_frame.column(i), v) / s.singular_values[i];
        for (k, o) in out.iter_mut().enumerate() {
            *o += c * s.right_frame[(k, i)];
        }
    }
    out
}

/// The unique vector of the distribution plane at `x` that `F′(x)` sends to `v`.
pub fn lift_vector(f: &MapSpec, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != f.n() {
        return Err(Error::DimensionError(format!(
            "lift_vector: expected a vector of R^{}, got length {}",
            f.n(),
            v.len()
        )));
    }
    let (_, s) = full_rank_svd(f, x)?;
    Ok(pseudo_solve(&s, f.n(), v))
}

/// Largest principal angle between two subspaces given by orthonormal bases.
pub(crate) fn subspace_angle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let k = a.len();
    let mut c = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            c[(i, j)] = dot(&a[i], &b[j]);
        }
    }
    let s = svd(&c).expect("finite small matrix");
    s.singular_values[k - 1].clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use crate::maps::{builtin, contact_map};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_frame() {
        let f = builtin("ortho_proj:3,2").unwrap();
        let fr = frame_at(&f, &[3.0, 1.0, -7.0]).unwrap();
        assert_eq!(fr.plane, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert_eq!(fr.fiber, vec![vec![0.0, 0.0, 1.0]]);
    }

    #[test]
    fn helical_fiber_is_helix_tangent() {
        let p = 1.0;
        let f = builtin("helical_proj:1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            if x[0].hypot(x[1]) < 0.1 {
                continue;
            }
            let fr = frame_at(&f, &x).unwrap();
            let helix = [-x[1], x[0], p / (2.0 * std::f64::consts::PI)];
            let h = norm(&helix);
            let cosang = dot(&fr.fiber[0], &helix).abs() / h;
            assert!((cosang - 1.0).abs() < 1e-12);
            let j = f.jacobian(&x).unwrap();
            assert!(norm(&j.mul_vec(&helix)) < 1e-12);
            for v in &fr.plane {
                assert!(dot(v, &fr.fiber[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hopf_fiber_is_a_level_curve() {
        // Integrate along the fiber direction and check F stays constant.
        let f = builtin("hopf_derived").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut done = 0;
        while done < 10 {
            let x0: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            if !f.contains(&x0) || (x0[0].hypot(x0[1]) - 1.0).hypot(x0[2]) < 0.3 {
                continue;
            }
            let y0 = f.eval(&x0).unwrap();
            let mut x = x0.clone();
            let mut prev = frame_at(&f, &x).unwrap().fiber[0].clone();
            let dt = 1e-3;
            for _ in 0..200 {
                let field = |_: f64, p: &[f64]| -> crate::Result<Vec<f64>> {
                    let mut v = frame_at(&f, p)?.fiber[0].clone();
                    if dot(&v, &prev) < 0.0 {
                        v.iter_mut().for_each(|c| *c = -*c);
                    }
                    Ok(v)
                };
                x = crate::linalg::rk4_step(field, 0.0, &x, dt).unwrap();
                prev = {
                    let mut v = frame_at(&f, &x).unwrap().fiber[0].clone();
                    if dot(&v, &prev) < 0.0 {
                        v.iter_mut().for_each(|c| *c = -*c);
                    }
                    v
                };
            }
            let drift = norm(&crate::linalg::sub(&f.eval(&x).unwrap(), &y0));
            assert!(drift < 1e-5, "drift {drift}");
            done += 1;
        }
    }

    #[test]
    fn lift_vector_projection_and_pushforward() {
        let f = builtin("ortho_proj:3,2").unwrap();
        assert_eq!(lift_vector(&f, &[0.0, 0.0, 4.0], &[1.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);

        let g = builtin("hopf_derived").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if !g.contains(&x) {
                continue;
            }
            let v = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let lifted = lift_vector(&g, &x, &v).unwrap();
            let pushed = g.jacobian(&x).unwrap().mul_vec(&lifted);
            assert!(norm(&crate::linalg::sub(&pushed, &v)) < 1e-10);
            let fiber = &frame_at(&g, &x).unwrap().fiber[0];
            assert!(dot(&lifted, fiber).abs() < 1e-10 * norm(&lifted).max(1.0));
        }
    }

    #[test]
    fn contact_lift_slope() {
        // In ker(dz + εx dy), a lift of ∂/∂y satisfies dz/dy = −εx₀.
        let eps = 0.1;
        let f = contact_map(eps);
        for x0 in [-3.0, 0.0, 0.5, 2.0] {
            let v = lift_vector(&f, &[x0, 1.0, 0.0], &[0.0, 1.0]).unwrap();
            assert!(v[0].abs() < 1e-14);
            assert!((v[2] / v[1] + eps * x0).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_points() {
        let f = builtin("torus_fold").unwrap();
        assert!(matches!(frame_at(&f, &[0.0, 0.0, 0.0]), Err(Error::SingularPoint(_))));
        assert!(matches!(
            lift_vector(&f, &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::SingularPoint(_))
        ));
    }
}
