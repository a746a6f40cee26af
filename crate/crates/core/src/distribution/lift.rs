use serde::{Deserialize, Serialize};

use super::{full_rank_svd, pseudo_solve, BasePath, CoframeField, DistributionSource};
use crate::error::{Error, Result};
use crate::linalg::{norm, rk4_step, sub};
use crate::maps::MapSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiftOptions {
    /// Nominal step as a fraction of the base path's length.
    pub step: f64,
    pub lift_tol: f64,
    pub r_max: f64,
    /// Smallest step fraction tried before giving up on a piece.
    pub min_step: f64,
    pub newton_iters: usize,
    /// Apply the Newton correction back onto `F⁻¹(γ(t))` after each step.
    pub project: bool,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions {
            step: 1e-2,
            lift_tol: 1e-8,
            r_max: 1e6,
            min_step: 1e-10,
            newton_iters: 8,
            project: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LiftStatus {
    Completed,
    /// `‖x̃‖` crossed `r_max` at parameter `t_star`.
    Escaped { t_star: f64, r_max: f64 },
    /// The lift reached a rank-deficient point or the domain boundary.
    HitSingular { t: f64 },
    /// No step size down to the minimum kept the lift on the preimage.
    StepCollapse { t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftSample {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedPath {
    pub samples: Vec<LiftSample>,
    pub base_path: BasePath,
    pub status: LiftStatus,
    /// `sup ‖F(x̃(t)) − γ(t)‖` over the samples.
    pub max_residual: f64,
}

impl LiftedPath {
    pub fn start(&self) -> &[f64] {
        &self.samples[0].x
    }

    pub fn end(&self) -> &[f64] {
        &self.samples.last().expect("a lift has a start sample").x
    }

    pub fn is_completed(&self) -> bool {
        self.status == LiftStatus::Completed
    }

    /// Parameter reached by the last sample.
    pub fn t_end(&self) -> f64 {
        self.samples.last().expect("nonempty").t
    }
}

enum StepFailure {
    Singular,
    Collapse,
}

fn classify(e: Error) -> Result<StepFailure> {
    match e {
        Error::SingularPoint(_) | Error::DomainViolation(_) => Ok(StepFailure::Singular),
        Error::StepCollapse(_) => Ok(StepFailure::Collapse),
        other => Err(other),
    }
}

/// Shared driver: walks the pieces of `base`, calling `advance(x, t_a, t_b, t, h)`
/// to produce `(x(t + h), residual)`, halving `h` on failure.
fn drive<A>(base: &BasePath, x0: Vec<f64>, opts: &LiftOptions, mut advance: A) -> Result<LiftedPath>
where
    A: FnMut(&[f64], f64, f64, f64, f64) -> Result<(Vec<f64>, f64)>,
{
    if !(opts.step > 0.0 && opts.step <= 1.0) || !(opts.min_step > 0.0) {
        return Err(Error::InvalidInput("lift step must lie in (0, 1]".into()));
    }
    let mut samples = vec![LiftSample { t: 0.0, x: x0 }];
    let mut max_residual: f64 = 0.0;
    let bps = base.breakpoints();
    for w in bps.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let n_steps = ((tb - ta) / opts.step).ceil().max(1.0);
        let h_nominal = (tb - ta) / n_steps;
        let mut h = h_nominal;
        let mut t = ta;
        while t < tb {
            let h_try = h.min(tb - t);
            let x = &samples.last().expect("nonempty").x;
            let t_next = if h_try >= tb - t { tb } else { t + h_try };
            match advance(x, ta, tb, t, t_next - t) {
                Ok((x_new, residual)) => {
                    let r_new = norm(&x_new);
                    if r_new > opts.r_max || !r_new.is_finite() {
                        if t_next - t > 1e-4 * h_nominal {
                            h = 0.5 * (t_next - t);
                            continue;
                        }
                        let r_old = norm(x);
                        let frac = if r_new.is_finite() && r_new > r_old {
                            ((opts.r_max - r_old) / (r_new - r_old)).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        return Ok(LiftedPath {
                            samples,
                            base_path: base.clone(),
                            status: LiftStatus::Escaped {
                                t_star: t + frac * (t_next - t),
                                r_max: opts.r_max,
                            },
                            max_residual,
                        });
                    }
                    max_residual = max_residual.max(residual);
                    samples.push(LiftSample { t: t_next, x: x_new });
                    t = t_next;
                    h = (2.0 * h).min(h_nominal);
                }
                Err(e) => {
                    let failure = classify(e)?;
                    h *= 0.5;
                    if h < opts.min_step {
                        let status = match failure {
                            StepFailure::Singular => LiftStatus::HitSingular { t },
                            StepFailure::Collapse => LiftStatus::StepCollapse { t },
                        };
                        return Ok(LiftedPath {
                            samples,
                            base_path: base.clone(),
                            status,
                            max_residual,
                        });
                    }
                }
            }
        }
    }
    Ok(LiftedPath {
        samples,
        base_path: base.clone(),
        status: LiftStatus::Completed,
        max_residual,
    })
}

/// Newton iterations `x ← x − F′(x)⁺ (F(x) − y)`; each correction lies in the
/// distribution plane.
fn project(f: &MapSpec, x: Vec<f64>, target: &[f64], opts: &LiftOptions) -> Result<(Vec<f64>, f64)> {
    let mut x = x;
    let mut r = f.image_residual(&f.eval(&x)?, target);
    let mut rn = norm(&r);
    if !opts.project {
        return Ok((x, rn));
    }
    for _ in 0..opts.newton_iters {
        if rn <= 1e-3 * opts.lift_tol {
            break;
        }
        let (_, s) = full_rank_svd(f, &x)?;
        let dx = pseudo_solve(&s, f.n(), &r);
        x = sub(&x, &dx);
        r = f.image_residual(&f.eval(&x)?, target);
        rn = norm(&r);
    }
    if rn > opts.lift_tol {
        return Err(Error::StepCollapse(format!("projection residual {rn:e}")));
    }
    Ok((x, rn))
}

/// Horizontal lift of `base` through `start`: integrates
/// `x̃′ = lift_vector(F, x̃, γ′(t))` by RK4 and projects back onto the
/// preimage of `γ` after every step.
pub fn lift_path(f: &MapSpec, base: &BasePath, start: &[f64], opts: &LiftOptions) -> Result<LiftedPath> {
    base.validate()?;
    if base.dim() != f.n() || start.len() != f.m() {
        return Err(Error::DimensionError(format!(
            "{} maps R^{} -> R^{}; got a start in R^{} and a path in R^{}",
            f.name(),
            f.m(),
            f.n(),
            start.len(),
            base.dim()
        )));
    }
    let r0 = norm(&f.image_residual(&f.eval(start)?, &base.point(0.0)));
    if r0 > opts.lift_tol {
        return Err(Error::BadStart(r0));
    }
    drive(base, start.to_vec(), opts, |x, ta, tb, t, h| {
        let field = |tt: f64, p: &[f64]| -> Result<Vec<f64>> {
            let v = base.velocity_on(ta, tb, tt);
            let (_, s) = full_rank_svd(f, p)?;
            Ok(pseudo_solve(&s, f.n(), &v))
        };
        let x_new = rk4_step(field, t, x, h)?;
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularPoint(x.to_vec()));
        }
        project(f, x_new, &base.point_on(ta, tb, t + h), opts)
    })
}

/// Lift of a path in the `(x, y)` plane to `ker ω` in ℝ³: the first two
/// coordinates follow `γ` exactly and `z′ = −(ω₁ ẋ + ω₂ ẏ)/ω₃`.
pub fn lift_path_coframe(
    cf: &CoframeField,
    base: &BasePath,
    start: &[f64],
    opts: &LiftOptions,
) -> Result<LiftedPath> {
    base.validate()?;
    if base.dim() != 2 || start.len() != 3 {
        return Err(Error::DimensionError(
            "coframe lifts take a path in the (x, y) plane and a start in R^3".into(),
        ));
    }
    let p0 = base.point(0.0);
    let r0 = (start[0] - p0[0]).hypot(start[1] - p0[1]);
    if r0 > opts.lift_tol {
        return Err(Error::BadStart(r0));
    }
    let mut x0 = start.to_vec();
    x0[0] = p0[0];
    x0[1] = p0[1];
    drive(base, x0, opts, |x, ta, tb, t, h| {
        let field = |tt: f64, z: &[f64]| -> Result<Vec<f64>> {
            let g = base.point_on(ta, tb, tt);
            let v = base.velocity_on(ta, tb, tt);
            let p = [g[0], g[1], z[0]];
            let w = cf.omega(&p)?;
            if w[2].abs() <= 1e-12 * norm(&w) {
                return Err(Error::SingularPoint(p.to_vec()));
            }
            Ok(vec![-(w[0] * v[0] + w[1] * v[1]) / w[2]])
        };
        let z = rk4_step(field, t, &x[2..], h)?;
        let g = base.point_on(ta, tb, t + h);
        Ok((vec![g[0], g[1], z[0]], 0.0))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolonomyReport {
    pub source: String,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// `x̃(end) − x̃(start)`.
    pub defect: Vec<f64>,
    pub defect_norm: f64,
    pub status: LiftStatus,
    pub max_residual: f64,
}

/// Lifts a closed loop and reports how far the lift fails to close.
pub fn holonomy_defect(
    source: DistributionSource<'_>,
    loop_path: &BasePath,
    start: &[f64],
    opts: &LiftOptions,
) -> Result<HolonomyReport> {
    if !loop_path.is_closed(1e-12) {
        return Err(Error::InvalidInput("holonomy needs a closed loop (within 1e-12)".into()));
    }
    let (name, lifted) = match source {
        DistributionSource::Map(f) => (f.name().to_string(), lift_path(f, loop_path, start, opts)?),
        DistributionSource::Coframe(c) => {
            (c.name().to_string(), lift_path_coframe(c, loop_path, start, opts)?)
        }
    };
    let defect = sub(lifted.end(), lifted.start());
    Ok(HolonomyReport {
        source: name,
        start: lifted.start().to_vec(),
        end: lifted.end().to_vec(),
        defect_norm: norm(&defect),
        defect,
        status: lifted.status.clone(),
        max_residual: lifted.max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::frame_at;
    use crate::linalg::{distance, dot};
    use crate::maps::{builtin, contact_map};
    use std::f64::consts::TAU;

    fn roundtrip_ok(f: &MapSpec, lp: &LiftedPath, tol: f64) {
        for s in &lp.samples {
            let y = f.eval(&s.x).unwrap();
            let r = norm(&f.image_residual(&y, &lp.base_path.point(s.t)));
            assert!(r <= tol, "residual {r} at t = {}", s.t);
        }
    }

    #[test]
    fn flat_lift_is_straight() {
        let f = builtin("ortho_proj:3,2").unwrap();
        let base = BasePath::segment(vec![0.0, 0.0], vec![1.0, 0.0]);
        let lp = lift_path(&f, &base, &[0.0, 0.0, 2.5], &LiftOptions::default()).unwrap();
        assert!(lp.is_completed());
        assert_eq!(lp.samples.len(), 101);
        for s in &lp.samples {
            assert!((s.x[0] - s.t).abs() < 1e-14 && s.x[1] == 0.0 && s.x[2] == 2.5);
        }
        assert_eq!(lp.end(), &[1.0, 0.0, 2.5]);
    }

    #[test]
    fn bad_start_rejected() {
        let f = builtin("ortho_proj:3,2").unwrap();
        let base = BasePath::segment(vec![0.0, 0.0], vec![1.0, 0.0]);
        let err = lift_path(&f, &base, &[0.1, 0.0, 0.0], &LiftOptions::default()).unwrap_err();
        assert!(matches!(err, Error::BadStart(r) if (r - 0.1).abs() < 1e-15));
    }

    #[test]
    fn punctured_ray_stays_bounded() {
        let f = builtin("punctured_proj").unwrap();
        let opts = LiftOptions::default();
        let short = BasePath::ray(vec![1.0, 0.0], &[-1.0, 0.0], 0.999);
        let lp = lift_path(&f, &short, &[1.0, 0.0, 0.0], &opts).unwrap();
        assert!(lp.is_completed());
        roundtrip_ok(&f, &lp, opts.lift_tol);
        assert!(distance(lp.end(), &[1e-3, 0.0, 0.0]) < 1e-12);

        // Running into the removed line: the lift stops there instead of escaping.
        let full = BasePath::ray(vec![1.0, 0.0], &[-1.0, 0.0], 1.0);
        let lp = lift_path(&f, &full, &[1.0, 0.0, 0.0], &opts).unwrap();
        match lp.status {
            LiftStatus::HitSingular { t } => assert!(t > 0.99),
            ref s => panic!("unexpected status {s:?}"),
        }
        assert!(lp.samples.iter().all(|s| norm(&s.x) <= 1.0 + 1e-12));
    }

    #[test]
    fn escape_is_detected() {
        // arctan has bounded image; lifting a path toward π/2 sends x̃ to infinity.
        let f = builtin("arctan1d").unwrap();
        let base = BasePath::segment(vec![0.0], vec![1.6]);
        let opts = LiftOptions {
            r_max: 1e3,
            ..LiftOptions::default()
        };
        let lp = lift_path(&f, &base, &[0.0], &opts).unwrap();
        match lp.status {
            LiftStatus::Escaped { t_star, r_max } => {
                let expected = 1e3f64.atan() / 1.6;
                assert_eq!(r_max, 1e3);
                assert!((t_star - expected).abs() < 1e-3, "{t_star} vs {expected}");
            }
            ref s => panic!("unexpected status {s:?}"),
        }
        roundtrip_ok(&f, &lp, opts.lift_tol);
    }

    #[test]
    fn hopf_lift_roundtrip_and_horizontality() {
        let f = builtin("hopf_derived").unwrap();
        let x0 = [0.3, -0.2, 0.5];
        let y0 = f.eval(&x0).unwrap();
        let base = BasePath::circle([y0[0] - 0.2, y0[1]], 0.2);
        let opts = LiftOptions::default();
        let lp = lift_path(&f, &base, &x0, &opts).unwrap();
        assert!(lp.is_completed());
        roundtrip_ok(&f, &lp, opts.lift_tol);
        // Chords between consecutive samples are nearly horizontal.
        for w in lp.samples.windows(2) {
            let chord = sub(&w[1].x, &w[0].x);
            let fr = frame_at(&f, &w[0].x).unwrap();
            let c = dot(&chord, &fr.fiber[0]).abs() / norm(&chord);
            assert!(c < 0.05, "chord leaves the plane: {c}");
        }
    }

    fn endpoint(f: &MapSpec, base: &BasePath, x0: &[f64], step: f64) -> Vec<f64> {
        let opts = LiftOptions {
            step,
            ..LiftOptions::default()
        };
        lift_path(f, base, x0, &opts).unwrap().end().to_vec()
    }

    #[test]
    fn step_halving_converges_at_high_order() {
        let f = builtin("hopf_derived").unwrap();
        let x0 = [0.3, -0.2, 0.5];
        let y0 = f.eval(&x0).unwrap();
        let base = BasePath::circle([y0[0] - 0.3, y0[1]], 0.3);
        let reference = endpoint(&f, &base, &x0, 1.0 / 1600.0);
        let e1 = distance(&endpoint(&f, &base, &x0, 1.0 / 50.0), &reference);
        let e2 = distance(&endpoint(&f, &base, &x0, 1.0 / 100.0), &reference);
        let order = (e1 / e2).log2();
        assert!(order >= 2.0, "observed order {order} ({e1:e} -> {e2:e})");
    }

    #[test]
    fn coframe_step_halving_order() {
        let cf = CoframeField::contact(0.1);
        let base = BasePath::circle([1.0, 0.5], 1.5);
        let exact = -0.1 * std::f64::consts::PI * 1.5 * 1.5;
        let err = |step: f64| {
            let opts = LiftOptions {
                step,
                ..LiftOptions::default()
            };
            let lp = lift_path_coframe(&cf, &base, &[2.5, 0.5, 0.0], &opts).unwrap();
            (lp.end()[2] - exact).abs()
        };
        let (e1, e2) = (err(1.0 / 8.0), err(1.0 / 16.0));
        assert!((e1 / e2).log2() >= 2.0, "{e1:e} -> {e2:e}");
    }

    #[test]
    fn contact_rectangle_holonomy() {
        let eps = 0.1;
        let cf = CoframeField::contact(eps);
        let opts = LiftOptions::default();
        for (x0, y0, a, b) in [(0.0, 0.0, 2.0, 3.0), (-1.0, 4.0, 0.5, 0.25), (3.0, -2.0, 1.0, 1.0)] {
            let rect = BasePath::rect(x0, y0, a, b);
            let start = [x0, y0, 0.7];
            let h = holonomy_defect(DistributionSource::Coframe(&cf), &rect, &start, &opts).unwrap();
            assert_eq!(h.status, LiftStatus::Completed);
            assert!((h.defect[2] + eps * a * b).abs() <= 1e-4 * a * b, "{:?}", h.defect);
            assert!(h.defect[0].abs() < 1e-12 && h.defect[1].abs() < 1e-12);

            let back =
                holonomy_defect(DistributionSource::Coframe(&cf), &rect.reversed(), &start, &opts).unwrap();
            assert!((back.defect[2] + h.defect[2]).abs() < 1e-8);
        }
    }

    #[test]
    fn dz_holonomy_vanishes() {
        let cf = CoframeField::dz();
        let f = builtin("ortho_proj:3,2").unwrap();
        let opts = LiftOptions::default();
        for path in [BasePath::rect(0.0, 0.0, 2.0, 3.0), BasePath::circle([1.0, 1.0], 4.0)] {
            let start = {
                let p = path.point(0.0);
                [p[0], p[1], -1.0]
            };
            let h = holonomy_defect(DistributionSource::Coframe(&cf), &path, &start, &opts).unwrap();
            assert!(h.defect_norm <= 1e-8);
            let h = holonomy_defect(DistributionSource::Map(&f), &path, &start, &opts).unwrap();
            assert!(h.defect_norm <= 1e-8);
        }
    }

    #[test]
    fn open_loop_rejected() {
        let cf = CoframeField::dz();
        let seg = BasePath::segment(vec![0.0, 0.0], vec![1.0, 0.0]);
        assert!(matches!(
            holonomy_defect(DistributionSource::Coframe(&cf), &seg, &[0.0, 0.0, 0.0], &LiftOptions::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn defect_scaling_with_area() {
        // Integrable: defect is o(area). Contact: defect/area tends to −ε.
        let opts = LiftOptions::default();
        let dz = CoframeField::dz();
        let ct = CoframeField::contact(0.1);
        for s in [1.0, 0.1, 0.01] {
            let rect = BasePath::rect(0.5, 0.5, s, s);
            let start = [0.5, 0.5, 0.0];
            let h0 = holonomy_defect(DistributionSource::Coframe(&dz), &rect, &start, &opts).unwrap();
            assert!(h0.defect_norm / (s * s) < 1e-8);
            let h1 = holonomy_defect(DistributionSource::Coframe(&ct), &rect, &start, &opts).unwrap();
            assert!((h1.defect[2] / (s * s) + 0.1).abs() < 1e-6);
        }
        // The same holds for the map realization, whose lifts go through Newton projection.
        let f = contact_map(0.1);
        let mut ratios = vec![];
        for s in [0.2, 0.1, 0.05] {
            let rect = BasePath::rect(0.5, 0.5, s, s);
            let start = [0.5, 0.5, 0.0];
            let h = holonomy_defect(DistributionSource::Map(&f), &rect, &start, &opts).unwrap();
            assert_eq!(h.status, LiftStatus::Completed);
            ratios.push(h.defect_norm / (s * s));
        }
        for r in &ratios {
            assert!(*r > 0.05, "{ratios:?}");
        }
    }

    #[test]
    fn helical_circle_holonomy_matches_green() {
        // With c = p/2π, horizontality reads ρ²θ′ + c z′ = 0 and s = z − cθ, so
        // θ′ = −c s′/(ρ² + c²). Around a counter-clockwise loop, Green's theorem
        // gives Δθ = ∬ 2cρ/(ρ² + c²)² dρ ds and Δz = c Δθ.
        let p = 1.0;
        let c = p / TAU;
        let f = builtin("helical_proj:1").unwrap();
        let (rc, r) = (5.0, 1.0);
        let base = BasePath::circle([rc, 0.0], r);
        let x0 = [rc + r, 0.0, 0.0];
        let opts = LiftOptions::default();
        let lp = lift_path(&f, &base, &x0, &opts).unwrap();
        assert!(lp.is_completed());
        roundtrip_ok(&f, &lp, opts.lift_tol);

        let n = 2000;
        let mut dtheta = 0.0;
        for i in 0..n {
            let rho = rc - r + (i as f64 + 0.5) * 2.0 * r / n as f64;
            let chord = 2.0 * (r * r - (rho - rc).powi(2)).sqrt();
            dtheta += 2.0 * c * rho / (rho * rho + c * c).powi(2) * chord * 2.0 * r / n as f64;
        }
        let e = lp.end();
        let got_theta = e[1].atan2(e[0]);
        assert!((got_theta - dtheta).abs() < 1e-6, "{got_theta} vs {dtheta}");
        assert!((e[2] - c * dtheta).abs() < 1e-6);
        assert!((e[0].hypot(e[1]) - x0[0]).abs() < 1e-8);

        let h = holonomy_defect(DistributionSource::Map(&f), &base, &x0, &opts).unwrap();
        assert!(distance(&h.defect, &sub(e, &x0)) < 1e-15);
    }
}
