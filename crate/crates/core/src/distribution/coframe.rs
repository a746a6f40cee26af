use std::fmt;
use std::sync::Arc;

use super::DistributionSource;
use crate::error::{Error, Result};
use crate::linalg::{cross3, default_fd_step, dot, norm, Matrix};
use crate::maps::MapSpec;

type OmegaFn = Arc<dyn Fn(&[f64]) -> Result<[f64; 3]> + Send + Sync>;

/// A nowhere-vanishing 1-form on (part of) ℝ³, stored by its components
/// `ω = a dx + b dy + c dz`. Its kernel is a plane field.
#[derive(Clone)]
pub struct CoframeField {
    name: String,
    omega: OmegaFn,
}

impl fmt::Debug for CoframeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoframeField").field("name", &self.name).finish()
    }
}

impl CoframeField {
    pub fn new<W>(name: impl Into<String>, omega: W) -> Self
    where
        W: Fn(&[f64]) -> Result<[f64; 3]> + Send + Sync + 'static,
    {
        CoframeField {
            name: name.into(),
            omega: Arc::new(omega),
        }
    }

    /// `dz`: horizontal planes, integrable.
    pub fn dz() -> Self {
        CoframeField::new("dz", |_| Ok([0.0, 0.0, 1.0]))
    }

    /// `dz + ε x dy`: completely nonintegrable for `ε ≠ 0`.
    pub fn contact(eps: f64) -> Self {
        CoframeField::new(format!("contact:{eps}"), move |p| Ok([0.0, eps * p[0], 1.0]))
    }

    /// The annihilator of the plane field of a map ℝ³ → ℝ², i.e. the fiber
    /// direction `∇F₁ × ∇F₂`.
    pub fn from_map(f: &MapSpec) -> Result<Self> {
        if f.m() != 3 || f.n() != 2 {
            return Err(Error::Unsupported(format!(
                "coframe of {} (R^{} -> R^{}): only maps R^3 -> R^2 are supported",
                f.name(),
                f.m(),
                f.n()
            )));
        }
        let g = f.clone();
        Ok(CoframeField::new(format!("coframe({})", f.name()), move |p| {
            let j = g.jacobian(p)?;
            let w = cross3(j.row(0), j.row(1));
            if norm(&w) == 0.0 {
                return Err(Error::SingularPoint(p.to_vec()));
            }
            Ok(w)
        }))
    }

    /// `dz` or `contact:ε`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec.split_once(':') {
            None if spec == "dz" => Ok(CoframeField::dz()),
            None if spec == "contact" => Ok(CoframeField::contact(0.1)),
            Some(("contact", p)) => p
                .trim()
                .parse::<f64>()
                .map(CoframeField::contact)
                .map_err(|_| Error::InvalidInput(format!("bad contact parameter `{p}`"))),
            _ => Err(Error::NotFound(spec.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn omega(&self, x: &[f64]) -> Result<[f64; 3]> {
        if x.len() != 3 {
            return Err(Error::DimensionError("coframes live on R^3".into()));
        }
        let w = (self.omega)(x)?;
        if w.iter().any(|v| !v.is_finite()) || norm(&w) == 0.0 {
            return Err(Error::SingularPoint(x.to_vec()));
        }
        Ok(w)
    }

    pub fn unit_omega(&self, x: &[f64]) -> Result<[f64; 3]> {
        let w = self.omega(x)?;
        let n = norm(&w);
        Ok([w[0] / n, w[1] / n, w[2] / n])
    }
}

/// `|(ω ∧ dω)(e₁, e₂, e₃)| = |ω · curl ω|` for the unit-normalized coframe,
/// with the curl taken by central differences. Zero exactly when the plane
/// field is integrable at `x`.
pub fn frobenius_residual(source: DistributionSource<'_>, x: &[f64]) -> Result<f64> {
    let owned;
    let cf = match source {
        DistributionSource::Coframe(c) => c,
        DistributionSource::Map(f) => {
            owned = CoframeField::from_map(f)?;
            if !f.contains(x) {
                return Err(Error::DomainViolation(format!("{}: {:?}", f.name(), x)));
            }
            &owned
        }
    };
    if x.len() != 3 {
        return Err(Error::Unsupported("Frobenius test needs points of R^3".into()));
    }
    let w0 = cf.unit_omega(x)?;
    let h = default_fd_step(x);
    // d[i][j] = ∂ω_i/∂x_j; keep each probe's orientation consistent with w0.
    let mut d = Matrix::zeros(3, 3);
    let mut probe = x.to_vec();
    for j in 0..3 {
        probe[j] = x[j] + h;
        let wp = oriented(cf.unit_omega(&probe)?, &w0);
        probe[j] = x[j] - h;
        let wm = oriented(cf.unit_omega(&probe)?, &w0);
        probe[j] = x[j];
        for i in 0..3 {
            d[(i, j)] = (wp[i] - wm[i]) / (2.0 * h);
        }
    }
    let curl = [
        d[(2, 1)] - d[(1, 2)],
        d[(0, 2)] - d[(2, 0)],
        d[(1, 0)] - d[(0, 1)],
    ];
    Ok(dot(&w0, &curl).abs())
}

fn oriented(w: [f64; 3], reference: &[f64; 3]) -> [f64; 3] {
    if dot(&w, reference) < 0.0 {
        [-w[0], -w[1], -w[2]]
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{builtin, contact_map};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dz_is_integrable() {
        let cf = CoframeField::dz();
        let f = builtin("ortho_proj:3,2").unwrap();
        for x in [[0.0, 0.0, 0.0], [3.0, -2.0, 7.5]] {
            assert_eq!(frobenius_residual(DistributionSource::Coframe(&cf), &x).unwrap(), 0.0);
            assert!(frobenius_residual(DistributionSource::Map(&f), &x).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn contact_residual_matches_closed_form() {
        // For W = (0, εx, 1): W · curl W = ε and |W|² = 1 + ε²x², so the
        // normalized form has residual ε / (1 + ε²x²).
        let eps = 0.1;
        let cf = CoframeField::contact(eps);
        let map = contact_map(eps);
        for x0 in [0.0, 1.0, -4.0, 12.0] {
            let expected = eps / (1.0 + eps * eps * x0 * x0);
            let p = [x0, 0.7, -2.0];
            let r = frobenius_residual(DistributionSource::Coframe(&cf), &p).unwrap();
            assert!((r - expected).abs() < 1e-6, "{r} vs {expected}");
            let r = frobenius_residual(DistributionSource::Map(&map), &p).unwrap();
            assert!((r - expected).abs() < 1e-6, "{r} vs {expected}");
        }
    }

    #[test]
    fn hopf_distribution_is_nonintegrable() {
        // The pulled-back contact structure of S³ gives residual 4/(1+|x|²).
        let f = builtin("hopf_derived").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut n = 0;
        while n < 100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            if !f.contains(&x) || (x[0].hypot(x[1]) - 1.0).hypot(x[2]) < 1e-2 {
                continue;
            }
            let r = frobenius_residual(DistributionSource::Map(&f), &x).unwrap();
            let s = dot(&x, &x);
            assert!(r > 1e-3);
            assert!((r - 4.0 / (1.0 + s)).abs() < 1e-5 * r.max(1.0), "{r} at {x:?}");
            n += 1;
        }
    }

    #[test]
    fn unsupported_dimensions() {
        let f = builtin("holo_product").unwrap();
        assert!(matches!(
            frobenius_residual(DistributionSource::Map(&f), &[0.0, 0.0, 0.0]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn parse_coframes() {
        assert_eq!(CoframeField::parse("dz").unwrap().name(), "dz");
        assert_eq!(CoframeField::parse("contact:0.25").unwrap().name(), "contact:0.25");
        assert!(CoframeField::parse("contact:x").is_err());
        assert!(matches!(CoframeField::parse("weird"), Err(Error::NotFound(_))));
    }
}
