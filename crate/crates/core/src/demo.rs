//! End-to-end run of the no-bounded-image argument on a registry map.
//!
//! The pipeline screens the map (full rank, bounded image), builds a
//! staircase over a square window of the image, measures its growth, and
//! compares the modulus of the image ray family with upper bounds for the
//! lifted family truncated at increasing geodesic radii. A bounded image
//! together with a positive image modulus and lifted bounds decaying to zero
//! would be the contradiction; the report records which ingredients hold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::maps::{builtin, MapSpec};
use crate::modulus::{family_lifted_rays, family_rectangle, modulus, CellComplex, ModulusOptions, Side};
use crate::qc::{global_qc_profile, Extended, SamplingPlan};
use crate::staircase::{
    build_staircase, growth_profile_mesh, GrowthSeed, QuadMesh, StaircaseConfig, StaircaseStatus,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoOptions {
    /// Side of the square image window; required when the image is unbounded.
    pub window: Option<f64>,
    /// Source point lifted first.
    pub start: Vec<f64>,
    /// Half-widths of the cubes sampled for the image-size test.
    pub sample_boxes: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Columns across the window.
    pub resolution: usize,
    /// Truncation radii as fractions of the window side.
    pub radius_fractions: Vec<f64>,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            window: None,
            start: vec![0.0, 0.0, 0.0],
            sample_boxes: vec![1.0, 10.0, 100.0],
            samples: 2000,
            seed: 0,
            resolution: 24,
            radius_fractions: vec![0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoStatus {
    Completed,
    RejectedRankDeficient,
    RejectedDimensions,
    HypothesisUnmet,
    ConstructionHalted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSample {
    pub box_half_width: f64,
    pub sup_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedModulus {
    pub radius: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    pub m_image_positive: bool,
    pub m_lifted_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleReport {
    pub map: String,
    pub status: DemoStatus,
    pub diagnostic: String,
    #[serde(rename = "K_max")]
    pub k_max: Option<Extended>,
    pub rank_deficient_samples: usize,
    pub image_samples: Vec<ImageSample>,
    pub image_bounded: Option<bool>,
    pub window: Option<f64>,
    pub staircase_status: Option<StaircaseStatus>,
    pub reached_height: Option<f64>,
    pub area_exponent: Option<f64>,
    pub length_exponent: Option<f64>,
    pub m_image: Option<f64>,
    pub m_lifted: Vec<LiftedModulus>,
    pub indicators: Indicators,
    pub contradiction_expected: bool,
}

impl LiouvilleReport {
    fn new(map: &str) -> Self {
        LiouvilleReport {
            map: map.to_string(),
            status: DemoStatus::Completed,
            diagnostic: String::new(),
            k_max: None,
            rank_deficient_samples: 0,
            image_samples: vec![],
            image_bounded: None,
            window: None,
            staircase_status: None,
            reached_height: None,
            area_exponent: None,
            length_exponent: None,
            m_image: None,
            m_lifted: vec![],
            indicators: Indicators {
                m_image_positive: false,
                m_lifted_decreasing: false,
            },
            contradiction_expected: false,
        }
    }

    fn stop(mut self, status: DemoStatus, diagnostic: String) -> Self {
        self.status = status;
        self.diagnostic = diagnostic;
        self
    }
}

/// Hill climb on `|F|` inside the cube `[-b, b]^m`, starting at `x`.
fn ascend(f: &MapSpec, x: &[f64], b: f64) -> f64 {
    let mut x = x.to_vec();
    let mut v = match f.eval(&x) {
        Ok(y) => norm(&y),
        Err(_) => return 0.0,
    };
    let mut step = 0.1 * b;
    for _ in 0..ASCENT_ITERS {
        let (Ok(y), Ok(j)) = (f.eval(&x), f.jacobian(&x)) else { break };
        let g = j.transpose().mul_vec(&y);
        let gn = norm(&g);
        if !(gn > 0.0 && gn.is_finite()) {
            break;
        }
        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| (xi + step * gi / gn).clamp(-b, b)).collect();
        match f.contains(&trial).then(|| f.eval(&trial)) {
            Some(Ok(yt)) if norm(&yt).is_finite() && norm(&yt) > v => {
                v = norm(&yt);
                x = trial;
                step = (2.0 * step).min(b);
            }
            _ => step *= 0.5,
        }
        if step < 1e-15 * b {
            break;
        }
    }
    v
}

const ASCENT_ITERS: usize = 200;
const ASCENT_STARTS: usize = 8;
/// Sup over median above which `|F|` is taken to blow up at finite points.
const BLOW_UP_RATIO: f64 = 1e6;

/// Sup of `|F|` over growing cubes, from random samples refined by a short
/// hill climb from the best few. Returns why the image looks unbounded: the
/// sup more than doubles from the smallest to the largest cube, or it
/// exceeds the median sampled value by a factor `1e6`. A declared bound
/// overrides both.
fn image_size(f: &MapSpec, opts: &DemoOptions) -> (Vec<ImageSample>, Option<&'static str>) {
    let m = f.m();
    let mut blow_up = false;
    let samples: Vec<ImageSample> = opts
        .sample_boxes
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
            let pts: Vec<Vec<f64>> = (0..opts.samples)
                .map(|_| (0..m).map(|_| rng.gen_range(-b..=b)).collect())
                .collect();
            let mut valued: Vec<(f64, Vec<f64>)> = pts
                .into_par_iter()
                .filter(|p| f.contains(p))
                .filter_map(|p| f.eval(&p).ok().map(|v| (norm(&v), p)))
                .filter(|(v, _)| v.is_finite())
                .collect();
            valued.sort_by(|a, b| b.0.total_cmp(&a.0));
            let median = valued.get(valued.len() / 2).map_or(0.0, |v| v.0);
            let sup = valued
                .par_iter()
                .take(ASCENT_STARTS)
                .map(|(v, p)| v.max(ascend(f, p, b)))
                .reduce(|| 0.0, f64::max);
            if sup > BLOW_UP_RATIO * median.max(f64::MIN_POSITIVE) {
                blow_up = true;
            }
            ImageSample {
                box_half_width: b,
                sup_norm: sup,
            }
        })
        .collect();
    let grows = match (samples.first(), samples.last()) {
        (Some(a), Some(z)) => z.sup_norm > 2.0 * a.sup_norm,
        _ => false,
    };
    let reason = if f.image_bound().is_some() {
        None
    } else if blow_up {
        Some("sampled |F| blows up near finite points")
    } else if grows {
        Some("sampled sup |F| grows with the sample box")
    } else {
        None
    };
    (samples, reason)
}

/// Runs the pipeline on the registry map `map`.
pub fn demo_liouville(map: &str, opts: &DemoOptions) -> Result<LiouvilleReport> {
    let f = builtin(map)?;
    if opts.sample_boxes.is_empty() || opts.samples == 0 || opts.resolution < 2 || opts.radius_fractions.is_empty() {
        return Err(Error::InvalidInput("demo needs sample boxes, samples, a resolution ≥ 2 and radii".into()));
    }
    if let Some(w) = opts.window {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidInput(format!("window side {w} must be positive")));
        }
    }
    let mut report = LiouvilleReport::new(f.name());

    let plan = SamplingPlan::cube(-1.0, 1.0, f.m(), opts.samples.min(1000));
    let profile = global_qc_profile(&f, &plan, opts.seed)?;
    report.k_max = Some(profile.k_max);
    report.rank_deficient_samples = profile.rank_deficient_count;
    if profile.rank_deficient_count > 0 {
        let msg = format!(
            "rank-deficient at {} of {} samples: not Gromov-quasiconformal",
            profile.rank_deficient_count, profile.samples
        );
        return Ok(report.stop(DemoStatus::RejectedRankDeficient, msg));
    }
    if f.m() != 3 || f.n() != 2 {
        let msg = format!("the staircase needs a map R^3 -> R^2, got R^{} -> R^{}", f.m(), f.n());
        return Ok(report.stop(DemoStatus::RejectedDimensions, msg));
    }

    let (samples, unbounded_because) = image_size(&f, opts);
    let bounded = unbounded_because.is_none();
    report.image_samples = samples;
    report.image_bounded = Some(bounded);
    let window = match (bounded, opts.window) {
        (_, Some(w)) => w,
        (true, None) => 2.0 * f.image_bound().unwrap_or(report.image_samples.last().map_or(1.0, |s| s.sup_norm)),
        (false, None) => {
            let msg = format!("{}: bounded-image hypothesis unmet", unbounded_because.unwrap_or_default());
            return Ok(report.stop(DemoStatus::HypothesisUnmet, msg));
        }
    };
    report.window = Some(window);
    report.contradiction_expected = bounded;

    if opts.start.len() != 3 {
        return Err(Error::DimensionError("demo start point must lie in R^3".into()));
    }
    let a = f.eval(&opts.start)?;
    let n = opts.resolution;
    let step = window / 4.0;
    let cfg = StaircaseConfig {
        segment: [[a[0], a[1]], [a[0] + window, a[1]]],
        start: opts.start.clone(),
        direction: [0.0, 1.0],
        max_height: window,
        n_along: n + 1,
        n_up: (n / 4).max(2),
        initial_height: Some(step),
        max_step_height: Some(step),
        lift: crate::distribution::LiftOptions {
            step: (window / n as f64).min(0.25),
            ..Default::default()
        },
        ..StaircaseConfig::default()
    };
    let surface = match build_staircase(&f, &cfg) {
        Ok(s) => s,
        Err(e) => return Ok(report.stop(DemoStatus::ConstructionHalted, format!("staircase failed: {e}"))),
    };
    report.staircase_status = Some(surface.status.clone());
    report.reached_height = Some(surface.reached_height());
    if surface.status != StaircaseStatus::Completed {
        let msg = format!("staircase stopped at height {}", surface.reached_height());
        return Ok(report.stop(DemoStatus::ConstructionHalted, msg));
    }
    let mesh = QuadMesh::from_surface(&surface)?;

    let centre = [a[0] + 0.5 * window, a[1] + 0.5 * window];
    let seed = GrowthSeed::ImageSegment {
        a: [centre[0] - 0.05 * window, centre[1]],
        b: [centre[0] + 0.05 * window, centre[1]],
        tol: 1e-6 * window,
    };
    let radii: Vec<f64> = (0..6).map(|i| window * (0.1 + 0.05 * i as f64)).collect();
    if let Ok(g) = growth_profile_mesh(&mesh, &radii, &seed) {
        report.area_exponent = Some(g.area_exponent);
        report.length_exponent = Some(g.length_exponent);
    }

    let mopts = ModulusOptions::default();
    let plane = CellComplex::grid(n, n, window, window)?;
    let m_image = modulus(&plane, &family_rectangle(&plane, Side::BottomTop, 0)?, 2.0, &mopts)?.value;
    report.m_image = Some(m_image);

    let complex = CellComplex::from_mesh(&mesh)?;
    let dist = mesh.distances(&mesh.seed_vertices(&GrowthSeed::BaseRow)?);
    let rays: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    for &q in &opts.radius_fractions {
        let r = q * window * (1.0 + 1e-9);
        let fam = family_lifted_rays(&mesh, &rays, Some((&dist, r)))?;
        let value = modulus(&complex, &fam, 2.0, &mopts)?.value;
        report.m_lifted.push(LiftedModulus { radius: q * window, value });
    }
    report.indicators = Indicators {
        m_image_positive: m_image > 0.0,
        m_lifted_decreasing: report.m_lifted.windows(2).all(|w| w[1].value < w[0].value),
    };
    report.diagnostic = if bounded {
        "bounded image: positive image modulus against decaying lifted bounds".into()
    } else {
        "image unbounded, window imposed by hand: no contradiction expected".into()
    };
    Ok(report)
}
