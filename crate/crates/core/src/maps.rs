//! Catalog of smooth maps ℝᵐ → ℝⁿ with evaluators, Jacobians and domains.
//!
//! Registry entries are addressed with a `name:param,param` micro-syntax,
//! e.g. `ortho_proj:3,2` or `helical_proj:1`. Compositions are written
//! `outer@inner` and associate to the right, so `a@b@c` is `a ∘ (b ∘ c)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fd_jacobian, Matrix};

pub type EvalFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;
pub type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A smooth map `F: ℝᵐ → ℝⁿ` restricted to an open domain.
#[derive(Clone)]
pub struct MapSpec {
    name: String,
    m: usize,
    n: usize,
    eval: EvalFn,
    jacobian: Option<JacobianFn>,
    domain: DomainFn,
    domain_description: String,
    image_bound: Option<f64>,
    image_period: Option<(usize, f64)>,
}

impl fmt::Debug for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapSpec")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("n", &self.n)
            .field("domain", &self.domain_description)
            .field("image_bound", &self.image_bound)
            .finish()
    }
}

/// Serializable summary of a registry entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapInfo {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub domain: String,
    pub image_bound: Option<f64>,
    pub analytic_jacobian: bool,
}

impl MapSpec {
    /// A map defined everywhere on ℝᵐ, with finite-difference Jacobians
    /// until [`MapSpec::with_jacobian`] supplies an analytic one.
    pub fn new<F>(name: impl Into<String>, m: usize, n: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        MapSpec {
            name: name.into(),
            m,
            n,
            eval: Arc::new(eval),
            jacobian: None,
            domain: Arc::new(|_| true),
            domain_description: "all of R^m".into(),
            image_bound: None,
            image_period: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_domain<D>(mut self, description: impl Into<String>, pred: D) -> Self
    where
        D: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.domain = Arc::new(pred);
        self.domain_description = description.into();
        self
    }

    pub fn with_image_bound(mut self, bound: f64) -> Self {
        self.image_bound = Some(bound);
        self
    }

    /// Declares image coordinate `index` to be defined modulo `period`
    /// (a multivalued angle-like coordinate evaluated on a principal branch).
    pub fn with_image_period(mut self, index: usize, period: f64) -> Self {
        self.image_period = Some((index, period));
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Source dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Target dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn image_bound(&self) -> Option<f64> {
        self.image_bound
    }

    pub fn image_period(&self) -> Option<(usize, f64)> {
        self.image_period
    }

    pub fn domain_description(&self) -> &str {
        &self.domain_description
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn info(&self) -> MapInfo {
        MapInfo {
            name: self.name.clone(),
            m: self.m,
            n: self.n,
            domain: self.domain_description.clone(),
            image_bound: self.image_bound,
            analytic_jacobian: self.has_analytic_jacobian(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.m && x.iter().all(|v| v.is_finite()) && (self.domain)(x)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m {
            return Err(Error::DimensionError(format!(
                "{} expects points of R^{}, got length {}",
                self.name,
                self.m,
                x.len()
            )));
        }
        if !self.contains(x) {
            return Err(Error::DomainViolation(format!(
                "{}: {:?} not in domain ({})",
                self.name, x, self.domain_description
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let y = (self.eval)(x);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainViolation(format!(
                "{}: non-finite value at {:?}",
                self.name, x
            )));
        }
        Ok(y)
    }

    /// Analytic Jacobian when available, otherwise central differences.
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.check_point(x)?;
        match &self.jacobian {
            Some(j) => {
                let jx = j(x);
                if !jx.is_finite() {
                    return Err(Error::DomainViolation(format!(
                        "{}: non-finite Jacobian at {:?}",
                        self.name, x
                    )));
                }
                Ok(jx)
            }
            None => self.fd_jacobian(x),
        }
    }

    /// Central-difference Jacobian regardless of any analytic provider.
    pub fn fd_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.check_point(x)?;
        let j = fd_jacobian(|p| self.eval(p), x, None)?;
        Ok(self.unwrap_fd_period(j, x))
    }

    // A principal-branch jump inside the difference stencil shows up as a
    // ±period/(2h) entry; fold it back.
    fn unwrap_fd_period(&self, mut j: Matrix, x: &[f64]) -> Matrix {
        if let Some((idx, period)) = self.image_period {
            let h = crate::linalg::default_fd_step(x);
            for c in 0..j.cols() {
                let v = j[(idx, c)] * 2.0 * h;
                let wrapped = v - period * (v / period).round();
                j[(idx, c)] = wrapped / (2.0 * h);
            }
        }
        j
    }

    /// `value - target`, folding periodic image coordinates into
    /// `(-period/2, period/2]`.
    pub fn image_residual(&self, value: &[f64], target: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = value.iter().zip(target).map(|(a, b)| a - b).collect();
        if let Some((idx, period)) = self.image_period {
            r[idx] -= period * (r[idx] / period).round();
        }
        r
    }
}

// ---------------------------------------------------------------------------
// Builtins

/// Orthogonal projection ℝᵐ → ℝᵏ onto the first `k` coordinates.
pub fn ortho_proj(m: usize, k: usize) -> Result<MapSpec> {
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!(
            "ortho_proj needs 1 <= k <= m, got m={m}, k={k}"
        )));
    }
    Ok(MapSpec::new(format!("ortho_proj:{m},{k}"), m, k, move |x| x[..k].to_vec())
        .with_jacobian(move |_| {
            let mut j = Matrix::zeros(k, m);
            for i in 0..k {
                j[(i, i)] = 1.0;
            }
            j
        }))
}

pub fn arctan1d() -> MapSpec {
    MapSpec::new("arctan1d", 1, 1, |x| vec![x[0].atan()])
        .with_jacobian(|x| Matrix::from_rows(&[[1.0 / (1.0 + x[0] * x[0])]]))
        .with_image_bound(PI / 2.0)
}

/// `x ↦ a·x + b` on the line.
pub fn affine1d(a: f64, b: f64) -> MapSpec {
    MapSpec::new(format!("affine1d:{a},{b}"), 1, 1, move |x| vec![a * x[0] + b])
        .with_jacobian(move |_| Matrix::from_rows(&[[a]]))
}

/// Project ℝ³ to the (x, y) plane, roll the plane into a cylinder along x
/// and wrap the cylinder onto a torus with radii `big_r > small_r > 0`.
pub fn torus_fold(big_r: f64, small_r: f64) -> Result<MapSpec> {
    if !(big_r > small_r && small_r > 0.0) {
        return Err(Error::InvalidInput(format!(
            "torus_fold needs R0 > r0 > 0, got R0={big_r}, r0={small_r}"
        )));
    }
    Ok(MapSpec::new(
        format!("torus_fold:{big_r},{small_r}"),
        3,
        3,
        move |p| {
            let (x, y) = (p[0], p[1]);
            let w = big_r + small_r * y.cos();
            vec![w * x.cos(), w * x.sin(), small_r * y.sin()]
        },
    )
    .with_jacobian(move |p| {
        let (x, y) = (p[0], p[1]);
        let w = big_r + small_r * y.cos();
        Matrix::from_rows(&[
            [-w * x.sin(), -small_r * y.sin() * x.cos(), 0.0],
            [w * x.cos(), -small_r * y.sin() * x.sin(), 0.0],
            [0.0, small_r * y.cos(), 0.0],
        ])
    })
    .with_image_bound(big_r + small_r))
}

/// `(z₁, z₂) ↦ z₁ z₂` on ℂ² ≅ ℝ⁴ with coordinates `(Re z₁, Im z₁, Re z₂, Im z₂)`.
pub fn holo_product() -> MapSpec {
    MapSpec::new("holo_product", 4, 2, |p| {
        let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
        vec![a * c - b * d, a * d + b * c]
    })
    .with_jacobian(|p| {
        let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
        Matrix::from_rows(&[[c, -d, a, -b], [d, c, b, a]])
    })
}

/// Inverse stereographic projection ℝ³ → S³ ⊂ ℝ⁴ from the pole (0,0,0,1).
fn inverse_stereographic3() -> MapSpec {
    MapSpec::new("inv_stereo3", 3, 4, |x| {
        let s = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let d = s + 1.0;
        vec![2.0 * x[0] / d, 2.0 * x[1] / d, 2.0 * x[2] / d, (s - 1.0) / d]
    })
    .with_jacobian(|x| {
        let s = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let d = s + 1.0;
        let mut j = Matrix::zeros(4, 3);
        for i in 0..3 {
            for k in 0..3 {
                let delta = if i == k { 1.0 } else { 0.0 };
                j[(i, k)] = 2.0 * delta / d - 4.0 * x[i] * x[k] / (d * d);
            }
        }
        for k in 0..3 {
            j[(3, k)] = 4.0 * x[k] / (d * d);
        }
        j
    })
}

/// `(z₁, z₂) ↦ (2 z₁ z̄₂, |z₁|² − |z₂|²)` as a polynomial map ℝ⁴ → ℝ³.
fn hopf_polynomial() -> MapSpec {
    MapSpec::new("hopf", 4, 3, |p| {
        let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
        vec![
            2.0 * (a * c + b * d),
            2.0 * (b * c - a * d),
            a * a + b * b - c * c - d * d,
        ]
    })
    .with_jacobian(|p| {
        let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
        Matrix::from_rows(&[
            [2.0 * c, 2.0 * d, 2.0 * a, 2.0 * b],
            [-2.0 * d, 2.0 * c, 2.0 * b, -2.0 * a],
            [2.0 * a, 2.0 * b, -2.0 * c, -2.0 * d],
        ])
    })
}

/// Stereographic projection S² → ℝ² from the pole (0,0,1), extended to ℝ³
/// off the plane `c = 1`.
fn stereographic2() -> MapSpec {
    MapSpec::new("stereo2", 3, 2, |p| {
        let k = 1.0 / (1.0 - p[2]);
        vec![p[0] * k, p[1] * k]
    })
    .with_jacobian(|p| {
        let k = 1.0 / (1.0 - p[2]);
        Matrix::from_rows(&[[k, 0.0, p[0] * k * k], [0.0, k, p[1] * k * k]])
    })
    .with_domain("pole c = 1 removed", |p| 1.0 - p[2] > 1e-12)
}

/// Hopf fibration transported to ℝ³ → ℝ² through stereographic charts.
///
/// The points sent to the pole of S² form the unit circle in the plane
/// `z = 0`; they are outside the domain.
pub fn hopf_derived() -> MapSpec {
    let inner = compose(&hopf_polynomial(), &inverse_stereographic3()).expect("dims match");
    compose(&stereographic2(), &inner)
        .expect("dims match")
        .renamed("hopf_derived")
        .with_domain_description("unit circle {z = 0, x^2 + y^2 = 1} removed")
}

impl MapSpec {
    fn with_domain_description(mut self, d: impl Into<String>) -> Self {
        self.domain_description = d.into();
        self
    }
}

/// Projection of ℝ³ ∖ Z-axis along helices of pitch `pitch` onto the
/// half-plane `{(ρ, s): ρ > 0}`: `(ρ, θ, z) ↦ (ρ, z − pitch·θ/2π)`.
///
/// θ is evaluated on its principal branch, so the `s` coordinate is defined
/// modulo `pitch`; the map declares that period.
pub fn helical_proj(pitch: f64) -> Result<MapSpec> {
    if !(pitch > 0.0) || !pitch.is_finite() {
        return Err(Error::InvalidInput(format!("helix pitch must be > 0, got {pitch}")));
    }
    let c = pitch / (2.0 * PI);
    Ok(MapSpec::new(format!("helical_proj:{pitch}"), 3, 2, move |p| {
        let rho = p[0].hypot(p[1]);
        let theta = p[1].atan2(p[0]);
        vec![rho, p[2] - c * theta]
    })
    .with_jacobian(move |p| {
        let (x, y) = (p[0], p[1]);
        let r2 = x * x + y * y;
        let rho = r2.sqrt();
        Matrix::from_rows(&[[x / rho, y / rho, 0.0], [c * y / r2, -c * x / r2, 1.0]])
    })
    .with_domain("Z-axis removed", |p| p[0].hypot(p[1]) > 1e-12)
    .with_image_period(1, pitch))
}

/// Orthogonal projection ℝ³ ∖ Z-axis → ℝ² ∖ {0}.
pub fn punctured_proj() -> MapSpec {
    MapSpec::new("punctured_proj", 3, 2, |p| vec![p[0], p[1]])
        .with_jacobian(|_| Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        .with_domain("Z-axis removed", |p| p[0].hypot(p[1]) > 1e-12)
}

/// `(x, y, z) ↦ (x, y − ε x z)`, whose fibers are tangent to `(0, εx, 1)`,
/// so the induced plane field is `ker(dz + ε x dy)`.
pub fn contact_map(eps: f64) -> MapSpec {
    MapSpec::new(format!("contact:{eps}"), 3, 2, move |p| {
        vec![p[0], p[1] - eps * p[0] * p[2]]
    })
    .with_jacobian(move |p| {
        Matrix::from_rows(&[[1.0, 0.0, 0.0], [-eps * p[2], 1.0, -eps * p[0]]])
    })
}

/// `outer ∘ inner`. The Jacobian is the chain rule of the two providers.
pub fn compose(outer: &MapSpec, inner: &MapSpec) -> Result<MapSpec> {
    if inner.n != outer.m {
        return Err(Error::DimensionError(format!(
            "cannot compose {} (R^{} -> R^{}) after {} (R^{} -> R^{})",
            outer.name, outer.m, outer.n, inner.name, inner.m, inner.n
        )));
    }
    let (o1, i1) = (outer.clone(), inner.clone());
    let (o2, i2) = (outer.clone(), inner.clone());
    let (o3, i3) = (outer.clone(), inner.clone());
    let mut spec = MapSpec::new(
        format!("{}@{}", outer.name, inner.name),
        inner.m,
        outer.n,
        move |x| (o1.eval)(&(i1.eval)(x)),
    )
    .with_domain(
        format!(
            "{}; image under {} in {}",
            inner.domain_description, inner.name, outer.domain_description
        ),
        move |x| {
            if !(i3.domain)(x) {
                return false;
            }
            let y = (i3.eval)(x);
            y.iter().all(|v| v.is_finite()) && (o3.domain)(&y)
        },
    );
    spec = spec.with_jacobian(move |x| {
        let y = (i2.eval)(x);
        let jo = o2.jacobian(&y).unwrap_or_else(|_| nan_matrix(o2.n, o2.m));
        let ji = i2.jacobian(x).unwrap_or_else(|_| nan_matrix(i2.n, i2.m));
        jo.matmul(&ji)
    });
    spec.image_bound = outer.image_bound;
    spec.image_period = outer.image_period;
    Ok(spec)
}

fn nan_matrix(r: usize, c: usize) -> Matrix {
    let mut m = Matrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            m[(i, j)] = f64::NAN;
        }
    }
    m
}

fn parse_params(name: &str, raw: Option<&str>) -> Result<Vec<f64>> {
    match raw {
        None => Ok(Vec::new()),
        Some(s) if s.trim().is_empty() => Ok(Vec::new()),
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad parameter `{t}` for {name}")))
            })
            .collect(),
    }
}

fn expect_params(name: &str, p: &[f64], allowed: &[usize]) -> Result<()> {
    if allowed.contains(&p.len()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} takes {allowed:?} parameters, got {}",
            p.len()
        )))
    }
}

fn as_dim(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= crate::linalg::MAX_DIM as f64 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidInput(format!("{name}: bad dimension {v}")))
    }
}

/// Looks up a registry entry or composition by its micro-syntax name.
pub fn builtin(spec: &str) -> Result<MapSpec> {
    let spec = spec.trim();
    if let Some((outer, inner)) = spec.split_once('@') {
        return compose(&builtin(outer)?, &builtin(inner)?);
    }
    let (name, raw) = match spec.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (spec, None),
    };
    let p = parse_params(name, raw)?;
    match name {
        "ortho_proj" => {
            expect_params(name, &p, &[0, 2])?;
            if p.is_empty() {
                ortho_proj(3, 2)
            } else {
                ortho_proj(as_dim(name, p[0])?, as_dim(name, p[1])?)
            }
        }
        "arctan1d" => {
            expect_params(name, &p, &[0])?;
            Ok(arctan1d())
        }
        "affine1d" => {
            expect_params(name, &p, &[0, 2])?;
            Ok(if p.is_empty() { affine1d(1.0, 0.0) } else { affine1d(p[0], p[1]) })
        }
        "torus_fold" => {
            expect_params(name, &p, &[0, 2])?;
            if p.is_empty() {
                torus_fold(2.0, 1.0)
            } else {
                torus_fold(p[0], p[1])
            }
        }
        "holo_product" => {
            expect_params(name, &p, &[0])?;
            Ok(holo_product())
        }
        "hopf_derived" => {
            expect_params(name, &p, &[0])?;
            Ok(hopf_derived())
        }
        "helical_proj" => {
            expect_params(name, &p, &[0, 1])?;
            helical_proj(p.first().copied().unwrap_or(1.0))
        }
        "punctured_proj" => {
            expect_params(name, &p, &[0])?;
            Ok(punctured_proj())
        }
        "contact" => {
            expect_params(name, &p, &[0, 1])?;
            Ok(contact_map(p.first().copied().unwrap_or(0.1)))
        }
        _ => Err(Error::NotFound(spec.to_string())),
    }
}

/// Default instances of every registry entry.
pub fn registry() -> Vec<MapSpec> {
    [
        "ortho_proj:3,2",
        "arctan1d",
        "affine1d:1,0",
        "torus_fold:2,1",
        "holo_product",
        "hopf_derived",
        "helical_proj:1",
        "punctured_proj",
        "contact:0.1",
    ]
    .iter()
    .map(|s| builtin(s).expect("registry entries parse"))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, m: usize, half: f64) -> Vec<f64> {
        (0..m).map(|_| rng.gen_range(-half..half)).collect()
    }

    #[test]
    fn ortho_proj_evaluates() {
        let f = builtin("ortho_proj:3,2").unwrap();
        assert_eq!(f.eval(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn torus_fold_at_axis_point() {
        let f = builtin("torus_fold").unwrap();
        let y = f.eval(&[0.0, 0.0, 5.0]).unwrap();
        assert_eq!(y, vec![3.0, 0.0, 0.0]);
    }

    #[test]
    fn holo_product_multiplies() {
        // z1 = 1, z2 = i  =>  z1 z2 = i
        let f = holo_product();
        assert_eq!(f.eval(&[1.0, 0.0, 0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        let (z1, z2) = ((0.3, -1.2), (2.0, 0.5));
        let expect = (z1.0 * z2.0 - z1.1 * z2.1, z1.0 * z2.1 + z1.1 * z2.0);
        let got = f.eval(&[z1.0, z1.1, z2.0, z2.1]).unwrap();
        assert!((got[0] - expect.0).abs() < 1e-15 && (got[1] - expect.1).abs() < 1e-15);
    }

    #[test]
    fn compositions() {
        let a = compose(&ortho_proj(2, 1).unwrap(), &ortho_proj(3, 2).unwrap()).unwrap();
        assert_eq!(a.eval(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0]);
        let b = builtin("arctan1d@ortho_proj:3,1").unwrap();
        assert_eq!(b.eval(&[0.0, 5.0, 5.0]).unwrap(), vec![0.0]);
        let bad = compose(&ortho_proj(3, 2).unwrap(), &ortho_proj(3, 2).unwrap());
        assert!(matches!(bad, Err(Error::DimensionError(_))));
    }

    #[test]
    fn composed_jacobian_is_chain_rule() {
        // ℝ³ → ℝ² → ℝ¹
        let inner = builtin("helical_proj:1").unwrap();
        let g = compose(&builtin("ortho_proj:2,1").unwrap(), &inner).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 50 {
            let x = random_point(&mut rng, 3, 3.0);
            if !g.contains(&x) || x[1].abs() < 0.1 {
                continue;
            }
            let chain = g.jacobian(&x).unwrap();
            let product = builtin("ortho_proj:2,1")
                .unwrap()
                .jacobian(&inner.eval(&x).unwrap())
                .unwrap()
                .matmul(&inner.jacobian(&x).unwrap());
            let fd = g.fd_jacobian(&x).unwrap();
            for (a, b) in chain.as_slice().iter().zip(product.as_slice()) {
                assert!((a - b).abs() < 1e-8);
            }
            for (a, b) in chain.as_slice().iter().zip(fd.as_slice()) {
                assert!((a - b).abs() < 1e-8);
            }
            checked += 1;
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(builtin("nope"), Err(Error::NotFound(_))));
        assert!(matches!(builtin("ortho_proj:2,3"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in registry() {
            let mut checked = 0;
            let mut tries = 0;
            while checked < 100 {
                tries += 1;
                assert!(tries < 100_000, "{} sampling stalled", f.name());
                let x = random_point(&mut rng, f.m(), 2.0);
                if !f.contains(&x) {
                    continue;
                }
                // Keep finite differences away from the excluded sets.
                if f.name() == "hopf_derived" {
                    let r = x[0].hypot(x[1]);
                    if (r - 1.0).hypot(x[2]) < 0.2 {
                        continue;
                    }
                }
                if f.name().starts_with("helical") || f.name() == "punctured_proj" {
                    if x[0].hypot(x[1]) < 0.2 {
                        continue;
                    }
                }
                let ja = f.jacobian(&x).unwrap();
                let jf = f.fd_jacobian(&x).unwrap();
                let diff: Vec<f64> = ja.as_slice().iter().zip(jf.as_slice()).map(|(a, b)| a - b).collect();
                let rel = norm(&diff) / ja.frobenius_norm().max(1e-12);
                assert!(rel < 1e-6, "{} at {:?}: rel err {rel}", f.name(), x);
                checked += 1;
            }
        }
    }

    #[test]
    fn torus_fold_image_is_bounded() {
        let f = builtin("torus_fold").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = random_point(&mut rng, 3, 100.0);
            assert!(norm(&f.eval(&x).unwrap()) <= 3.0 + 1e-12);
        }
    }

    #[test]
    fn helical_proj_constant_along_helices() {
        let p = 1.0;
        let f = helical_proj(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let rho = rng.gen_range(0.1..10.0);
            let theta = rng.gen_range(-3.0..3.0);
            let z = rng.gen_range(-5.0..5.0);
            let at = |t: f64| {
                let th = theta + t;
                vec![rho * th.cos(), rho * th.sin(), z + p * t / (2.0 * PI)]
            };
            let base = f.eval(&at(0.0)).unwrap();
            for k in 1..8 {
                let t = k as f64 * 0.9;
                let y = f.eval(&at(t)).unwrap();
                let r = f.image_residual(&y, &base);
                assert!(norm(&r) < 1e-9, "{r:?}");
            }
        }
    }

    #[test]
    fn hopf_domain_excludes_circle() {
        let f = hopf_derived();
        assert!(!f.contains(&[1.0, 0.0, 0.0]));
        assert!(!f.contains(&[0.0, -1.0, 0.0]));
        assert!(f.contains(&[0.0, 0.0, 0.0]));
        assert_eq!(f.eval(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(f.eval(&[1.0, 0.0, 0.0]), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn registry_listing() {
        let names: Vec<String> = registry().iter().map(|m| m.info().name).collect();
        assert!(names.contains(&"hopf_derived".to_string()));
        assert_eq!(registry().len(), 9);
    }
}
