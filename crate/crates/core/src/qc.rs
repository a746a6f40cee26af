//! Pointwise and sampled Gromov (quasi)conformality.
//!
//! At a point `x` the tangent map `F′(x)` is restricted to the orthogonal
//! complement of its kernel. The map sends infinitesimal balls to
//! infinitesimal ellipsoids whose axes are the restricted singular values;
//! their ratio `K = σ₁/σₙ` is the eccentricity. `K = 1` everywhere means
//! Gromov-conformal, a uniform bound on `K` means
//! quasiconformal, and rank loss means neither.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::svd;
use crate::maps::MapSpec;

/// Singular values at or below `RANK_TOL · σ₁` count as zero.
pub const RANK_TOL: f64 = 1e-9;

/// A non-negative quantity that may be `+∞` (eccentricities, the sampled
/// `h`, regularity radii). Serializes as a number, or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            Extended::Finite(v)
        } else {
            Extended::Infinite
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Extended::Finite(v) => *v,
            Extended::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => s.serialize_f64(*v),
            Extended::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Extended::Finite(v)),
            Raw::Str(s) if s == "inf" => Ok(Extended::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EccentricitySpectrum {
    pub point: Vec<f64>,
    pub rank: usize,
    /// Top `n` singular values of `F′(x)`, descending, padded with zeros
    /// when `m < n`.
    pub restricted_singular_values: Vec<f64>,
    pub eccentricity: Extended,
}

impl EccentricitySpectrum {
    pub fn is_full_rank(&self) -> bool {
        self.eccentricity.is_finite()
    }
}

/// Eccentricity of the tangent map restricted to `(ker F′)^⊥`.
pub fn eccentricity_at(f: &MapSpec, x: &[f64]) -> Result<EccentricitySpectrum> {
    let j = f.jacobian(x)?;
    let s = svd(&j)?;
    let n = f.n();
    let rank = s.rank(RANK_TOL);
    let mut sv: Vec<f64> = s.singular_values.iter().copied().take(n).collect();
    sv.resize(n, 0.0);
    let eccentricity = if rank == n && sv[n - 1] > 0.0 {
        Extended::Finite(sv[0] / sv[n - 1])
    } else {
        Extended::Infinite
    };
    Ok(EccentricitySpectrum {
        point: x.to_vec(),
        rank,
        restricted_singular_values: sv,
        eccentricity,
    })
}

/// Where to sample a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SamplingPlan {
    /// Uniform in the box `∏ [lo_i, hi_i]`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64>, count: usize },
    /// Radius uniform in `[r_inner, r_outer]`, direction uniform on the sphere.
    AnnularShell {
        center: Vec<f64>,
        r_inner: f64,
        r_outer: f64,
        count: usize,
    },
    Points(Vec<Vec<f64>>),
}

impl SamplingPlan {
    /// The cube `[a, b]^dim`.
    pub fn cube(a: f64, b: f64, dim: usize, count: usize) -> Self {
        SamplingPlan::UniformBox {
            lo: vec![a; dim],
            hi: vec![b; dim],
            count,
        }
    }

    pub fn points(&self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            SamplingPlan::UniformBox { lo, hi, count } => (0..*count)
                .map(|_| {
                    lo.iter()
                        .zip(hi)
                        .map(|(a, b)| if a < b { rng.gen_range(*a..*b) } else { *a })
                        .collect()
                })
                .collect(),
            SamplingPlan::AnnularShell {
                center,
                r_inner,
                r_outer,
                count,
            } => (0..*count)
                .map(|_| {
                    let dir = random_unit(&mut rng, center.len());
                    let r = if r_inner < r_outer {
                        rng.gen_range(*r_inner..*r_outer)
                    } else {
                        *r_inner
                    };
                    center.iter().zip(&dir).map(|(c, d)| c + r * d).collect()
                })
                .collect(),
            SamplingPlan::Points(p) => p.clone(),
        }
    }
}

pub(crate) fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = crate::linalg::norm(&v);
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub k: Extended,
}

/// Sampled eccentricity summary. `k_max` is a lower bound for the true
/// quasiconformality coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcProfile {
    pub map: String,
    #[serde(rename = "K_max")]
    pub k_max: Extended,
    pub quantiles: Vec<Quantile>,
    pub rank_deficient_count: usize,
    pub samples: usize,
}

pub const PROFILE_LEVELS: [f64; 5] = [0.0, 0.5, 0.9, 0.99, 1.0];

pub fn global_qc_profile(f: &MapSpec, plan: &SamplingPlan, seed: u64) -> Result<QcProfile> {
    let pts: Vec<Vec<f64>> = plan
        .points(seed)
        .into_iter()
        .filter(|p| f.contains(p))
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptySample);
    }
    let spectra: Vec<EccentricitySpectrum> = pts
        .par_iter()
        .map(|p| eccentricity_at(f, p))
        .collect::<Result<_>>()?;
    let mut ks: Vec<f64> = spectra.iter().map(|s| s.eccentricity.value()).collect();
    ks.sort_by(f64::total_cmp);
    let rank_deficient_count = spectra.iter().filter(|s| !s.is_full_rank()).count();
    let quantiles = PROFILE_LEVELS
        .iter()
        .map(|&level| {
            let idx = ((level * ks.len() as f64).ceil() as usize).clamp(1, ks.len()) - 1;
            Quantile {
                level,
                k: Extended::from_f64(ks[idx]),
            }
        })
        .collect();
    Ok(QcProfile {
        map: f.name().to_string(),
        k_max: Extended::from_f64(*ks.last().unwrap()),
        quantiles,
        rank_deficient_count,
        samples: pts.len(),
    })
}

/// Equally spaced triples `(a, a + t, a + 2t)` for the h-condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TripleSampler {
    /// `(a, t)` pairs.
    Explicit(Vec<(f64, f64)>),
    /// Random `a ∈ [lo, hi]`, `t ∈ (0, max_step]`, both on the lattice
    /// `2⁻¹⁰ ℤ` so that `b` and `c` are exact in floating point.
    Dyadic {
        lo: f64,
        hi: f64,
        max_step: f64,
        count: usize,
    },
}

impl TripleSampler {
    pub fn triples(&self, seed: u64) -> Vec<[f64; 3]> {
        match self {
            TripleSampler::Explicit(v) => v.iter().map(|&(a, t)| [a, a + t, a + 2.0 * t]).collect(),
            TripleSampler::Dyadic {
                lo,
                hi,
                max_step,
                count,
            } => {
                const Q: f64 = 1024.0;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (alo, ahi) = ((lo * Q).ceil() as i64, (hi * Q).floor() as i64);
                let tmax = ((max_step * Q).floor() as i64).max(1);
                (0..*count)
                    .map(|_| {
                        let a = rng.gen_range(alo..=ahi.max(alo)) as f64 / Q;
                        let t = rng.gen_range(1..=tmax) as f64 / Q;
                        [a, a + t, a + 2.0 * t]
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HConditionReport {
    pub map: String,
    pub h_estimate: Extended,
    pub worst_triple: [f64; 3],
    pub unbounded_flag: bool,
    pub triples: usize,
    pub cap: f64,
}

/// Default cap above which the sampled `h` is reported as unbounded.
pub const H_CAP: f64 = 1e3;

/// Sup over the sampled triples of `max(q, 1/q)` with
/// `q = |f(a) − f(b)| / |f(b) − f(c)|`.
pub fn h_condition_test(
    f: &MapSpec,
    sampler: &TripleSampler,
    seed: u64,
    cap: f64,
) -> Result<HConditionReport> {
    if f.m() != 1 || f.n() != 1 {
        return Err(Error::DimensionError(format!(
            "h-condition needs a map R -> R, {} is R^{} -> R^{}",
            f.name(),
            f.m(),
            f.n()
        )));
    }
    let triples = sampler.triples(seed);
    if triples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut worst = (1.0_f64, triples[0]);
    let mut direction = 0.0_f64;
    for tr in &triples {
        let [fa, fb, fc] = [
            f.eval(&[tr[0]])?[0],
            f.eval(&[tr[1]])?[0],
            f.eval(&[tr[2]])?[0],
        ];
        let (d1, d2) = (fb - fa, fc - fb);
        for d in [d1, d2] {
            if d != 0.0 {
                if direction == 0.0 {
                    direction = d.signum();
                } else if d.signum() != direction {
                    return Err(Error::InvalidInput(format!(
                        "{} is not monotone on the sampled range (triple {tr:?})",
                        f.name()
                    )));
                }
            }
        }
        let h = if d1 == 0.0 || d2 == 0.0 {
            f64::INFINITY
        } else {
            let q = d1.abs() / d2.abs();
            q.max(1.0 / q)
        };
        if h > worst.0 {
            worst = (h, *tr);
        }
    }
    let h_estimate = Extended::from_f64(worst.0);
    Ok(HConditionReport {
        map: f.name().to_string(),
        unbounded_flag: !h_estimate.is_finite() || worst.0 > cap,
        h_estimate,
        worst_triple: worst.1,
        triples: triples.len(),
        cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::maps::{affine1d, arctan1d, builtin, MapSpec};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn projection_is_conformal() {
        let f = builtin("ortho_proj:3,2").unwrap();
        let e = eccentricity_at(&f, &[4.0, -1.0, 2.0]).unwrap();
        assert_eq!(e.restricted_singular_values, vec![1.0, 1.0]);
        assert_eq!(e.eccentricity, Extended::Finite(1.0));
        assert_eq!(e.rank, 2);
    }

    #[test]
    fn holomorphic_product_is_conformal() {
        let f = builtin("holo_product").unwrap();
        let e = eccentricity_at(&f, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((e.eccentricity.value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn torus_fold_is_rank_deficient() {
        let f = builtin("torus_fold").unwrap();
        let e = eccentricity_at(&f, &[0.3, 1.1, -2.0]).unwrap();
        assert_eq!(e.rank, 2);
        assert_eq!(e.eccentricity, Extended::Infinite);
    }

    #[test]
    fn zero_jacobian_has_rank_zero() {
        let f = MapSpec::new("const", 3, 2, |_| vec![1.0, 2.0])
            .with_jacobian(|_| Matrix::zeros(2, 3));
        let e = eccentricity_at(&f, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(e.rank, 0);
        assert_eq!(e.eccentricity, Extended::Infinite);
    }

    #[test]
    fn outside_domain_is_rejected() {
        let f = builtin("punctured_proj").unwrap();
        assert!(matches!(
            eccentricity_at(&f, &[0.0, 0.0, 1.0]),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn projection_profile() {
        let f = builtin("ortho_proj:3,2").unwrap();
        let p = global_qc_profile(&f, &SamplingPlan::cube(-10.0, 10.0, 3, 1000), 3).unwrap();
        assert_eq!(p.samples, 1000);
        assert!((p.k_max.value() - 1.0).abs() < 1e-9);
        assert_eq!(p.rank_deficient_count, 0);
    }

    #[test]
    fn helical_eccentricity_decreases_with_radius() {
        let f = builtin("helical_proj:1").unwrap();
        let k_at = |rho: f64| {
            let plan = SamplingPlan::Points(vec![vec![rho, 0.0, 0.3], vec![0.0, rho, -1.0]]);
            global_qc_profile(&f, &plan, 0).unwrap().k_max.value()
        };
        let (k01, k1, k10) = (k_at(0.1), k_at(1.0), k_at(10.0));
        assert!(k01 > k1 && k1 > k10, "{k01} {k1} {k10}");
        // K(ρ) = sqrt(1 + (p/2πρ)²)
        let c = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((k1 - (1.0 + c * c).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hopf_profile_is_conformal() {
        let f = builtin("hopf_derived").unwrap();
        let p = global_qc_profile(&f, &SamplingPlan::cube(-3.0, 3.0, 3, 1000), 17).unwrap();
        assert!(p.samples > 990);
        assert!((p.k_max.value() - 1.0).abs() < 1e-5, "{:?}", p.k_max);
    }

    #[test]
    fn empty_sample() {
        let f = builtin("punctured_proj").unwrap();
        let plan = SamplingPlan::Points(vec![vec![0.0, 0.0, 1.0]]);
        assert_eq!(global_qc_profile(&f, &plan, 0), Err(Error::EmptySample));
    }

    #[test]
    fn annular_shell_radii() {
        let plan = SamplingPlan::AnnularShell {
            center: vec![1.0, 1.0, 1.0],
            r_inner: 2.0,
            r_outer: 3.0,
            count: 200,
        };
        for p in plan.points(4) {
            let r = crate::linalg::distance(&p, &[1.0, 1.0, 1.0]);
            assert!((2.0..=3.0).contains(&r));
        }
    }

    #[test]
    fn dilatation_serializes_infinite_as_string() {
        let s = serde_json::to_string(&Extended::Infinite).unwrap();
        assert_eq!(s, "\"inf\"");
        let back: Extended = serde_json::from_str(&s).unwrap();
        assert_eq!(back, Extended::Infinite);
        let back: Extended = serde_json::from_str("2.5").unwrap();
        assert_eq!(back, Extended::Finite(2.5));
    }

    #[test]
    fn h_condition_identity_and_affine() {
        let sampler = TripleSampler::Dyadic {
            lo: -100.0,
            hi: 100.0,
            max_step: 50.0,
            count: 500,
        };
        let r = h_condition_test(&affine1d(1.0, 0.0), &sampler, 1, H_CAP).unwrap();
        assert_eq!(r.h_estimate, Extended::Finite(1.0));
        assert!(!r.unbounded_flag);
        let r = h_condition_test(&affine1d(2.0, 7.0), &sampler, 1, H_CAP).unwrap();
        assert_eq!(r.h_estimate, Extended::Finite(1.0));
    }

    #[test]
    fn h_condition_arctan_blows_up() {
        let t = 1e3;
        let r = h_condition_test(&arctan1d(), &TripleSampler::Explicit(vec![(0.0, t)]), 0, H_CAP)
            .unwrap();
        let h = r.h_estimate.value();
        assert!(h > 1e3);
        // arctan T / (arctan 2T − arctan T) ≈ (π/2)·2T for large T.
        assert!((h / (std::f64::consts::PI * t) - 1.0).abs() < 1e-2, "{h}");
        assert!(r.unbounded_flag);
        assert_eq!(r.worst_triple, [0.0, t, 2.0 * t]);
    }

    #[test]
    fn h_condition_flat_triple_is_unbounded() {
        let f = MapSpec::new("clamp", 1, 1, |x| vec![x[0].min(1.0)]);
        let r = h_condition_test(&f, &TripleSampler::Explicit(vec![(0.0, 1.0)]), 0, H_CAP).unwrap();
        assert_eq!(r.h_estimate, Extended::Infinite);
        assert!(r.unbounded_flag);
    }

    #[test]
    fn h_condition_rejects_non_monotone_and_wrong_dims() {
        let f = MapSpec::new("square", 1, 1, |x| vec![x[0] * x[0]]);
        let r = h_condition_test(&f, &TripleSampler::Explicit(vec![(-1.0, 1.0)]), 0, H_CAP);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        let g = builtin("ortho_proj:3,2").unwrap();
        assert!(matches!(
            h_condition_test(&g, &TripleSampler::Explicit(vec![(0.0, 1.0)]), 0, H_CAP),
            Err(Error::DimensionError(_))
        ));
    }

    fn random_rotation(dim: usize, seed: u64) -> Matrix {
        use crate::linalg::{orthonormal_complement, scaled};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_unit(&mut rng, dim);
        let mut cols = vec![v.clone()];
        cols.extend(orthonormal_complement(&[v], dim).unwrap());
        // Mix the complement with a random planar rotation for variety.
        if dim >= 3 {
            let a: f64 = rng.gen_range(0.0..6.28);
            let (c1, c2) = (cols[1].clone(), cols[2].clone());
            cols[1] = crate::linalg::add(&scaled(&c1, a.cos()), &scaled(&c2, a.sin()));
            cols[2] = crate::linalg::add(&scaled(&c1, -a.sin()), &scaled(&c2, a.cos()));
        }
        Matrix::from_columns(&cols)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eccentricity_invariant_under_similarities(
            seed in any::<u64>(),
            s in 0.1f64..10.0,
            t in 0.1f64..10.0,
            x in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let f = builtin("helical_proj:1").unwrap();
            prop_assume!(x[0].hypot(x[1]) > 0.2);
            let q = random_rotation(3, seed);
            let r = random_rotation(2, seed ^ 0x9e37);
            let (q2, r2, f2) = (q.clone(), r.clone(), f.clone());
            // G(y) = t·R·F(s·Q·y), evaluated at y with s·Q·y = x.
            let g = MapSpec::new("similar", 3, 2, move |y| {
                let z = q2.mul_vec(y).iter().map(|v| v * s).collect::<Vec<_>>();
                r2.mul_vec(&f2.eval(&z).unwrap())
                    .iter().map(|v| v * t).collect()
            });
            let (q3, r3, f3) = (q.clone(), r.clone(), f.clone());
            let g = g.with_jacobian(move |y| {
                let z = q3.mul_vec(y).iter().map(|v| v * s).collect::<Vec<_>>();
                r3.matmul(&f3.jacobian(&z).unwrap()).matmul(&q3).scale(s * t)
            });
            let y = q.transpose().mul_vec(&x).iter().map(|v| v / s).collect::<Vec<_>>();
            let k_f = eccentricity_at(&f, &x).unwrap().eccentricity.value();
            let k_g = eccentricity_at(&g, &y).unwrap().eccentricity.value();
            prop_assert!((k_f - k_g).abs() < 1e-9 * k_f, "{} vs {}", k_f, k_g);
        }

        #[test]
        fn square_maps_use_classical_dilatation(entries in proptest::collection::vec(-3.0f64..3.0, 9)) {
            let a = Matrix::from_rows(&[&entries[0..3], &entries[3..6], &entries[6..9]]);
            prop_assume!(crate::linalg::determinant(&a).abs() > 1e-2);
            let a2 = a.clone();
            let a3 = a.clone();
            let f = MapSpec::new("linear", 3, 3, move |x| a2.mul_vec(x)).with_jacobian(move |_| a3.clone());
            let k = eccentricity_at(&f, &[0.0, 0.0, 0.0]).unwrap().eccentricity.value();
            let s = svd(&a).unwrap().singular_values;
            prop_assert!((k - s[0] / s[2]).abs() <= 1e-12 * k);
        }

        #[test]
        fn h_condition_invariant_under_affine_post_composition(
            k in -6i32..6,
            sign in prop_oneof![Just(1.0f64), Just(-1.0f64)],
            c in -1000i64..1000,
            seed in any::<u64>(),
        ) {
            // Powers of two and dyadic offsets keep every step exact.
            let lambda = sign * 2f64.powi(k);
            let shift = c as f64 / 8.0;
            let cube = MapSpec::new("cube", 1, 1, |x| vec![x[0] * x[0] * x[0]]);
            let scaled_cube = MapSpec::new("cube2", 1, 1, move |x| vec![lambda * x[0] * x[0] * x[0] + shift]);
            let sampler = TripleSampler::Dyadic { lo: 0.5, hi: 4.0, max_step: 2.0, count: 50 };
            let a = h_condition_test(&cube, &sampler, seed, H_CAP).unwrap();
            let b = h_condition_test(&scaled_cube, &sampler, seed, H_CAP).unwrap();
            prop_assert_eq!(a.h_estimate, b.h_estimate);

            let general = 3.7 * sign;
            let at = MapSpec::new("atan2", 1, 1, move |x| vec![general * x[0].atan() - 2.1]);
            let sampler = TripleSampler::Dyadic { lo: -5.0, hi: 5.0, max_step: 3.0, count: 50 };
            let a = h_condition_test(&arctan1d(), &sampler, seed, H_CAP).unwrap().h_estimate.value();
            let b = h_condition_test(&at, &sampler, seed, H_CAP).unwrap().h_estimate.value();
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }
    }
}
