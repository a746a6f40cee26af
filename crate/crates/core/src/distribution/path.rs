use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, distance, scaled, sub};

/// A piecewise-C¹ path in the image space, parametrized by `t ∈ [0, 1]`.
///
/// Polylines are parametrized proportionally to arc length, so each piece
/// occupies a `t`-interval matching its share of the total length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasePath {
    Polyline { points: Vec<Vec<f64>> },
    Circle {
        center: [f64; 2],
        radius: f64,
        #[serde(default)]
        clockwise: bool,
    },
}

impl BasePath {
    pub fn segment(a: Vec<f64>, b: Vec<f64>) -> Self {
        BasePath::Polyline { points: vec![a, b] }
    }

    pub fn ray(origin: Vec<f64>, direction: &[f64], length: f64) -> Self {
        let n = crate::linalg::norm(direction);
        let end = axpy(&origin, length / n, direction);
        BasePath::segment(origin, end)
    }

    /// Counter-clockwise boundary of `[x0, x0 + a] × [y0, y0 + b]`.
    pub fn rect(x0: f64, y0: f64, a: f64, b: f64) -> Self {
        BasePath::Polyline {
            points: vec![
                vec![x0, y0],
                vec![x0 + a, y0],
                vec![x0 + a, y0 + b],
                vec![x0, y0 + b],
                vec![x0, y0],
            ],
        }
    }

    /// Counter-clockwise circle starting at `center + (radius, 0)`.
    pub fn circle(center: [f64; 2], radius: f64) -> Self {
        BasePath::Circle {
            center,
            radius,
            clockwise: false,
        }
    }

    /// Parses `segment:a₁,…,aₙ,b₁,…,bₙ`, `ray:o₁,…,oₙ,d₁,…,dₙ,len`,
    /// `polyline:p₁;p₂;…` (points separated by `;`), `rect:x0,y0,a,b` and
    /// `circle:cx,cy,r` for paths in ℝⁿ.
    pub fn parse(spec: &str, n: usize) -> Result<Self> {
        let (kind, args) = spec
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("path `{spec}`: expected kind:args")))?;
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("path `{spec}`: bad number `{v}`")))
                })
                .collect()
        };
        let want = |v: &[f64], k: usize| -> Result<()> {
            if v.len() == k {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "path `{spec}`: expected {k} numbers, got {}",
                    v.len()
                )))
            }
        };
        let path = match kind.trim() {
            "segment" => {
                let v = nums(args)?;
                want(&v, 2 * n)?;
                BasePath::segment(v[..n].to_vec(), v[n..].to_vec())
            }
            "ray" => {
                let v = nums(args)?;
                want(&v, 2 * n + 1)?;
                BasePath::ray(v[..n].to_vec(), &v[n..2 * n], v[2 * n])
            }
            "polyline" => {
                let points = args.split(';').map(nums).collect::<Result<Vec<_>>>()?;
                for p in &points {
                    want(p, n)?;
                }
                BasePath::Polyline { points }
            }
            "rect" | "circle" if n != 2 => {
                return Err(Error::DimensionError(format!(
                    "path `{spec}` lives in R^2, the map's image is R^{n}"
                )))
            }
            "rect" => {
                let v = nums(args)?;
                want(&v, 4)?;
                BasePath::rect(v[0], v[1], v[2], v[3])
            }
            "circle" => {
                let v = nums(args)?;
                want(&v, 3)?;
                BasePath::circle([v[0], v[1]], v[2])
            }
            other => return Err(Error::InvalidInput(format!("unknown path kind `{other}`"))),
        };
        path.validate()?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BasePath::Polyline { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidInput("a polyline needs at least two points".into()));
                }
                let n = points[0].len();
                if n == 0 || points.iter().any(|p| p.len() != n) {
                    return Err(Error::DimensionError("polyline points differ in dimension".into()));
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("non-finite polyline point".into()));
                }
                if self.length() == 0.0 {
                    return Err(Error::InvalidInput("path has zero length".into()));
                }
            }
            BasePath::Circle { center, radius, .. } => {
                if !(radius.is_finite() && *radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput("circle needs a finite radius > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            BasePath::Polyline { points } => points[0].len(),
            BasePath::Circle { .. } => 2,
        }
    }

    pub fn length(&self) -> f64 {
        match self {
            BasePath::Polyline { points } => points.windows(2).map(|w| distance(&w[0], &w[1])).sum(),
            BasePath::Circle { radius, .. } => TAU * radius,
        }
    }

    /// Parameter values at which the path may fail to be C¹, including 0 and 1.
    /// Zero-length polyline pieces are dropped.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            BasePath::Polyline { points } => {
                let total = self.length();
                let mut acc = 0.0;
                let mut out = vec![0.0];
                for w in points.windows(2) {
                    let l = distance(&w[0], &w[1]);
                    if l == 0.0 {
                        continue;
                    }
                    acc += l;
                    out.push((acc / total).min(1.0));
                }
                *out.last_mut().expect("nonempty") = 1.0;
                out
            }
            BasePath::Circle { .. } => vec![0.0, 1.0],
        }
    }

    /// Locates the polyline piece containing `t`, returning its endpoints
    /// and the `t`-interval it occupies.
    fn piece(&self, t: f64) -> (&[f64], &[f64], f64, f64) {
        let BasePath::Polyline { points } = self else {
            unreachable!("piece() is only used for polylines")
        };
        let total = self.length();
        let mut acc = 0.0;
        let mut last = None;
        for w in points.windows(2) {
            let l = distance(&w[0], &w[1]);
            if l == 0.0 {
                continue;
            }
            let (t0, t1) = (acc / total, (acc + l) / total);
            last = Some((w[0].as_slice(), w[1].as_slice(), t0, t1));
            if t <= t1 {
                break;
            }
            acc += l;
        }
        let (a, b, t0, t1) = last.expect("validated path has positive length");
        (a, b, t0, t1.max(t0 + f64::MIN_POSITIVE))
    }

    pub fn point(&self, t: f64) -> Vec<f64> {
        match self {
            BasePath::Polyline { points } => {
                if t >= 1.0 {
                    return points.last().expect("nonempty").clone();
                }
                let (a, b, t0, t1) = self.piece(t);
                let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                axpy(a, s, &sub(b, a))
            }
            BasePath::Circle {
                center,
                radius,
                clockwise,
            } => {
                let th = if *clockwise { -TAU * t } else { TAU * t };
                vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            }
        }
    }

    /// `dγ/dt`; at a polyline corner this is the velocity of the piece ending there.
    pub fn velocity(&self, t: f64) -> Vec<f64> {
        match self {
            BasePath::Polyline { .. } => {
                let (a, b, t0, t1) = self.piece(t);
                scaled(&sub(b, a), 1.0 / (t1 - t0))
            }
            BasePath::Circle {
                radius, clockwise, ..
            } => {
                let w = if *clockwise { -TAU } else { TAU };
                let th = w * t;
                vec![-w * radius * th.sin(), w * radius * th.cos()]
            }
        }
    }

    /// Velocity on the piece `[t_start, t_end]`, so that interior evaluations
    /// never pick up a neighbouring piece by rounding.
    pub(crate) fn velocity_on(&self, t_start: f64, t_end: f64, t: f64) -> Vec<f64> {
        match self {
            BasePath::Polyline { .. } => self.velocity(0.5 * (t_start + t_end)),
            BasePath::Circle { .. } => self.velocity(t),
        }
    }

    pub(crate) fn point_on(&self, t_start: f64, t_end: f64, t: f64) -> Vec<f64> {
        match self {
            BasePath::Polyline { .. } => {
                let a = self.point(t_start);
                let b = self.point(t_end);
                let s = ((t - t_start) / (t_end - t_start)).clamp(0.0, 1.0);
                axpy(&a, s, &sub(&b, &a))
            }
            BasePath::Circle { .. } => self.point(t),
        }
    }

    pub fn reversed(&self) -> Self {
        match self {
            BasePath::Polyline { points } => BasePath::Polyline {
                points: points.iter().rev().cloned().collect(),
            },
            BasePath::Circle {
                center,
                radius,
                clockwise,
            } => BasePath::Circle {
                center: *center,
                radius: *radius,
                clockwise: !clockwise,
            },
        }
    }

    pub fn is_closed(&self, tol: f64) -> bool {
        distance(&self.point(0.0), &self.point(1.0)) <= tol
    }
}
