use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use confkit::demo::{demo_liouville, DemoOptions};
use confkit::distribution::{
    angle_regularity, frobenius_residual, holonomy_defect, lift_path, lift_path_coframe, BasePath, CoframeField,
    DistributionSource, LiftOptions, LiftedPath,
};
use confkit::maps::{builtin, registry, MapSpec};
use confkit::modulus::{
    family_lifted_rays, family_polar_rays, family_rectangle, flat_fixture, hyperbolic_fixture, modulus,
    parabolicity_bound, CellComplex, CurveFamily, ModulusOptions, RadialSetup, Side,
};
use confkit::qc::{global_qc_profile, h_condition_test, SamplingPlan, TripleSampler};
use confkit::staircase::{
    build_staircase, growth_profile_mesh, GrowthSeed, QuadMesh, StaircaseConfig, StaircaseSurface,
};
use rand::{Rng, SeedableRng};

use crate::output::sig;
use crate::{Command, Failure, OutputArgs, Table};

/// Comma-separated floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Floats(pub Vec<f64>);

fn floats(s: &str) -> Result<Floats, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number")))
        .collect::<Result<Vec<_>, _>>()
        .map(Floats)
}

fn exactly<const N: usize>(v: &Floats, what: &str) -> Result<[f64; N], Failure> {
    v.0.as_slice()
        .try_into()
        .map_err(|_| Failure::Usage(format!("{what} needs {N} numbers, got {}", v.0.len())))
}

/// Either a registry map or a coframe.
#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Registry map, e.g. `hopf_derived` or `ortho_proj:3,2`.
    #[arg(long, conflicts_with = "coframe", required_unless_present = "coframe")]
    pub map: Option<String>,
    /// Coframe on R^3: `dz` or `contact:EPS`.
    #[arg(long)]
    pub coframe: Option<String>,
}

enum Source {
    Map(MapSpec),
    Coframe(CoframeField),
}

impl Source {
    fn load(a: &SourceArgs) -> Result<Source, Failure> {
        match (&a.map, &a.coframe) {
            (Some(m), _) => Ok(Source::Map(builtin(m)?)),
            (None, Some(c)) => Ok(Source::Coframe(CoframeField::parse(c)?)),
            (None, None) => Err(Failure::Usage("give --map or --coframe".into())),
        }
    }

    fn as_dist(&self) -> DistributionSource<'_> {
        match self {
            Source::Map(f) => DistributionSource::Map(f),
            Source::Coframe(c) => DistributionSource::Coframe(c),
        }
    }

    fn name(&self) -> &str {
        match self {
            Source::Map(f) => f.name(),
            Source::Coframe(c) => c.name(),
        }
    }

    /// Image of `x` in the base: `F(x)` for a map, `(x, y)` for a coframe.
    fn image(&self, x: &[f64]) -> Result<Vec<f64>, Failure> {
        match self {
            Source::Map(f) => Ok(f.eval(x)?),
            Source::Coframe(_) => Ok(x.iter().take(2).copied().collect()),
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            Source::Map(f) => (f.m(), f.n()),
            Source::Coframe(_) => (3, 2),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LiftArgs {
    /// Integration step as a fraction of the path parameter.
    #[arg(long, default_value_t = 1e-2)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub lift_tol: f64,
    /// Escape radius.
    #[arg(long, default_value_t = 1e6)]
    pub r_max: f64,
    /// Skip the Newton projection back onto the fiber.
    #[arg(long)]
    pub no_project: bool,
}

impl LiftArgs {
    fn options(&self) -> LiftOptions {
        LiftOptions {
            step: self.step,
            lift_tol: self.lift_tol,
            r_max: self.r_max,
            project: !self.no_project,
            ..LiftOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ListMaps {
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeMap {
    #[arg(long)]
    pub map: String,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Sample cube `[a, b]^m`, given as `a,b`.
    #[arg(long = "box", value_parser = floats, default_value = "-1,1", allow_hyphen_values = true)]
    pub cube: Floats,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct HCondition {
    #[arg(long)]
    pub map: String,
    /// Explicit triples `a:t;a:t;...` giving `(a, a+t, a+2t)`.
    #[arg(long, allow_hyphen_values = true)]
    pub triples: Option<String>,
    /// Range of random left points `lo,hi`.
    #[arg(long, value_parser = floats, default_value = "-1000,1000", allow_hyphen_values = true)]
    pub range: Floats,
    #[arg(long, default_value_t = 1000.0)]
    pub max_step: f64,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Ratios above this are reported as unbounded.
    #[arg(long, default_value_t = confkit::qc::H_CAP)]
    pub cap: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CheckIntegrability {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long = "box", value_parser = floats, default_value = "-1,1", allow_hyphen_values = true)]
    pub cube: Floats,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct LiftPath {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Base path: `segment:..`, `ray:..`, `polyline:..;..`, `rect:x,y,a,b` or `circle:x,y,r`.
    #[arg(long, allow_hyphen_values = true)]
    pub path: String,
    /// Start point in the source space; defaults to the origin.
    #[arg(long, value_parser = floats, allow_hyphen_values = true)]
    pub start: Option<Floats>,
    /// Translate the path so that it begins at the image of the start point.
    #[arg(long)]
    pub from_start: bool,
    #[command(flatten)]
    pub lift: LiftArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Holonomy {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Closed base loop, e.g. `rect:0,0,2,3` or `circle:0,0,1`.
    #[arg(long = "loop", allow_hyphen_values = true)]
    pub loop_path: String,
    #[arg(long, value_parser = floats, allow_hyphen_values = true)]
    pub start: Option<Floats>,
    /// Translate the loop so that it begins at the image of the start point.
    #[arg(long)]
    pub from_start: bool,
    #[command(flatten)]
    pub lift: LiftArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Regularity {
    #[arg(long)]
    pub map: String,
    #[arg(long, value_parser = floats, allow_hyphen_values = true)]
    pub center: Option<Floats>,
    #[arg(long, value_parser = floats, default_value = "1,2,5,10")]
    pub radii: Floats,
    #[arg(long, default_value_t = 200)]
    pub probes: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps_angle: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BuildStaircase {
    #[arg(long)]
    pub map: String,
    /// Base segment `x0,y0,x1,y1` in the image plane; defaults to the unit
    /// segment along x starting at the image of the start point.
    #[arg(long, value_parser = floats, allow_hyphen_values = true)]
    pub segment: Option<Floats>,
    /// Source point over the first segment end; defaults to the origin.
    #[arg(long, value_parser = floats, allow_hyphen_values = true)]
    pub start: Option<Floats>,
    /// Sweep direction `dx,dy`.
    #[arg(long, value_parser = floats, default_value = "0,1", allow_hyphen_values = true)]
    pub direction: Floats,
    #[arg(long, default_value_t = 1.0)]
    pub max_height: f64,
    #[arg(long, default_value_t = 11)]
    pub n_along: usize,
    #[arg(long, default_value_t = 4)]
    pub n_up: usize,
    #[arg(long, default_value_t = 2.0)]
    pub k_factor: f64,
    #[arg(long, default_value_t = 0.1)]
    pub angle_tol: f64,
    #[arg(long)]
    pub initial_height: Option<f64>,
    #[arg(long)]
    pub max_step_height: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub min_height: f64,
    /// Lift step as a fraction of each lifted piece.
    #[arg(long, default_value_t = 0.25)]
    pub lift_step: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Where growth and radial curves start.
#[derive(Debug, Clone, Args)]
pub struct SeedArgs {
    /// Image segment `x0,y0,x1,y1` whose mesh vertices form the seed;
    /// defaults to the base row of the first patch.
    #[arg(long, value_parser = floats, allow_hyphen_values = true)]
    pub seed_segment: Option<Floats>,
    #[arg(long, default_value_t = 1e-9)]
    pub seed_tol: f64,
}

impl SeedArgs {
    fn seed(&self) -> Result<GrowthSeed, Failure> {
        match &self.seed_segment {
            None => Ok(GrowthSeed::BaseRow),
            Some(v) => {
                let [x0, y0, x1, y1] = exactly::<4>(v, "--seed-segment")?;
                Ok(GrowthSeed::ImageSegment {
                    a: [x0, y0],
                    b: [x1, y1],
                    tol: self.seed_tol,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AreaGrowth {
    /// Surface written by `build-staircase`.
    #[arg(long)]
    pub surface: PathBuf,
    #[arg(long, value_parser = floats)]
    pub radii: Floats,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateModulus {
    /// `grid:NX,NY,W,H`, `annulus:R_IN,R_OUT,NR,NTHETA` or a surface JSON file.
    #[arg(long)]
    pub complex: String,
    /// `rect[:K]`, `lattice`, `annulus`, `rays` or `lifted`.
    #[arg(long, default_value = "lattice")]
    pub family: String,
    /// Which sides the grid families join: `lr` or `bt`.
    #[arg(long, default_value = "lr")]
    pub side: String,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Lifted rays: number of evenly spaced rays; defaults to one per quad column.
    #[arg(long)]
    pub rays: Option<usize>,
    /// Lifted rays: stop each ray at this geodesic distance from the base row.
    #[arg(long)]
    pub truncate: Option<f64>,
    #[arg(long, default_value_t = ModulusOptions::default().max_iter)]
    pub max_iter: usize,
    #[arg(long, default_value_t = ModulusOptions::default().tol)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Parabolicity {
    /// Surface written by `build-staircase`.
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    pub surface: Option<PathBuf>,
    /// Synthetic complex: `flat` or `hyperbolic[:KAPPA]`.
    #[arg(long)]
    pub fixture: Option<String>,
    /// Outer radius of the fixture.
    #[arg(long, default_value_t = 1e4)]
    pub r_out: f64,
    #[arg(long, default_value_t = 400)]
    pub rings: usize,
    #[arg(long, default_value_t = 64)]
    pub sectors: usize,
    /// Surface rays, evenly spaced along the base segment.
    #[arg(long, default_value_t = 16)]
    pub rays: usize,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[arg(long, value_parser = floats, default_value = "1")]
    pub alphas: Floats,
    #[arg(long, value_parser = floats)]
    pub cutoffs: Floats,
    #[arg(long, default_value_t = std::f64::consts::E)]
    pub r0: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Demo {
    #[arg(long)]
    pub map: String,
    /// Side of the square image window.
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long, default_value_t = DemoOptions::default().samples)]
    pub samples: usize,
    #[arg(long, default_value_t = DemoOptions::default().resolution)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// TOML file with `command = "..."` and the flags of that command as keys.
    #[arg(long)]
    pub config: PathBuf,
}

impl RunConfig {
    /// Turns the file into an argument vector: `key = value` becomes
    /// `--key value`, arrays are comma-joined and `true` becomes a bare flag.
    pub fn to_argv(&self) -> Result<Vec<String>, Failure> {
        let text = std::fs::read_to_string(&self.config)
            .map_err(|e| Failure::Io(format!("{}: {e}", self.config.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Failure::Usage(format!("{}: {e}", self.config.display())))?;
        let command = table
            .get("command")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Failure::Usage("config needs a string `command`".into()))?;
        let mut argv = vec!["confkit".to_string(), command.to_string()];
        for (key, value) in &table {
            if key == "command" {
                continue;
            }
            let flag = format!("--{}", key.replace('_', "-"));
            let scalar = |v: &toml::Value| -> Result<String, Failure> {
                match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    other => Err(Failure::Usage(format!("config key `{key}` has unsupported value {other}"))),
                }
            };
            match value {
                toml::Value::Boolean(true) => argv.push(flag),
                toml::Value::Boolean(false) => {}
                toml::Value::Array(items) => {
                    let joined = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?.join(",");
                    argv.push(format!("{flag}={joined}"));
                }
                v => argv.push(format!("{flag}={}", scalar(v)?)),
            }
        }
        Ok(argv)
    }
}

pub fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::ListMaps(a) => list_maps(a),
        Command::AnalyzeMap(a) => analyze_map(a),
        Command::HCondition(a) => h_condition(a),
        Command::CheckIntegrability(a) => check_integrability(a),
        Command::LiftPath(a) => lift(a),
        Command::Holonomy(a) => holonomy(a),
        Command::Regularity(a) => regularity(a),
        Command::BuildStaircase(a) => staircase(a),
        Command::AreaGrowth(a) => area_growth(a),
        Command::EstimateModulus(a) => estimate_modulus(a),
        Command::Parabolicity(a) => parabolicity(a),
        Command::Demo(a) => demo(a),
        Command::Run(_) => Err(Failure::Usage("nested run".into())),
    }
}

fn list_maps(a: ListMaps) -> Result<(), Failure> {
    let infos: Vec<_> = registry().iter().map(MapSpec::info).collect();
    let mut t = Table::new(["name", "m", "n", "domain", "image_bound", "analytic_jacobian"]);
    for i in &infos {
        t.rows.push(vec![
            i.name.clone(),
            i.m.to_string(),
            i.n.to_string(),
            i.domain.clone(),
            i.image_bound.map(sig).unwrap_or_default(),
            i.analytic_jacobian.to_string(),
        ]);
    }
    a.output.emit(&infos, Some(t), &format!("list-maps: {} maps", infos.len()))
}

fn analyze_map(a: AnalyzeMap) -> Result<(), Failure> {
    let f = builtin(&a.map)?;
    let [lo, hi] = exactly::<2>(&a.cube, "--box")?;
    let profile = global_qc_profile(&f, &SamplingPlan::cube(lo, hi, f.m(), a.samples), a.seed)?;
    let mut t = Table::new(["level", "K"]);
    for q in &profile.quantiles {
        t.push_floats([q.level, q.k.value()]);
    }
    let summary = format!(
        "analyze-map {}: K_max = {} over {} samples, {} rank-deficient",
        profile.map,
        sig(profile.k_max.value()),
        profile.samples,
        profile.rank_deficient_count
    );
    a.output.emit(&profile, Some(t), &summary)
}

fn h_condition(a: HCondition) -> Result<(), Failure> {
    let f = builtin(&a.map)?;
    let sampler = match &a.triples {
        Some(spec) => TripleSampler::Explicit(
            spec.split(';')
                .map(|p| {
                    let v = floats(&p.replace(':', ",")).map_err(Failure::Usage)?;
                    let [x, t] = exactly::<2>(&v, "triple a:t")?;
                    Ok((x, t))
                })
                .collect::<Result<_, Failure>>()?,
        ),
        None => {
            let [lo, hi] = exactly::<2>(&a.range, "--range")?;
            TripleSampler::Dyadic {
                lo,
                hi,
                max_step: a.max_step,
                count: a.samples,
            }
        }
    };
    let r = h_condition_test(&f, &sampler, a.seed, a.cap)?;
    let summary = format!(
        "h-condition {}: h = {} over {} triples{}",
        r.map,
        sig(r.h_estimate.value()),
        r.triples,
        if r.unbounded_flag { ", unbounded" } else { "" }
    );
    a.output.emit(&r, None, &summary)
}

#[derive(Serialize)]
struct ResidualPoint {
    x: Vec<f64>,
    residual: f64,
}

#[derive(Serialize)]
struct IntegrabilityReport {
    source: String,
    samples: usize,
    skipped: usize,
    max_residual: f64,
    min_residual: f64,
    points: Vec<ResidualPoint>,
}

fn check_integrability(a: CheckIntegrability) -> Result<(), Failure> {
    let src = Source::load(&a.source)?;
    let (m, _) = src.dims();
    let [lo, hi] = exactly::<2>(&a.cube, "--box")?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let pts: Vec<Vec<f64>> = (0..a.samples)
        .map(|_| (0..m).map(|_| if lo < hi { rng.gen_range(lo..hi) } else { lo }).collect())
        .collect();
    let mut points = vec![];
    let mut skipped = 0;
    for x in pts {
        match frobenius_residual(src.as_dist(), &x) {
            Ok(residual) => points.push(ResidualPoint { x, residual }),
            Err(confkit::Error::SingularPoint(_)) | Err(confkit::Error::DomainViolation(_)) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if points.is_empty() {
        return Err(confkit::Error::EmptySample.into());
    }
    let res = points.iter().map(|p| p.residual);
    let report = IntegrabilityReport {
        source: src.name().to_string(),
        samples: points.len(),
        skipped,
        max_residual: res.clone().fold(0.0, f64::max),
        min_residual: res.fold(f64::INFINITY, f64::min),
        points,
    };
    let mut t = Table::new((1..=m).map(|i| format!("x{i}")).chain(["residual".to_string()]));
    for p in &report.points {
        t.push_floats(p.x.iter().copied().chain([p.residual]));
    }
    let summary = format!(
        "check-integrability {}: residual in [{}, {}] at {} points",
        report.source,
        sig(report.min_residual),
        sig(report.max_residual),
        report.samples
    );
    a.output.emit(&report, Some(t), &summary)
}

fn shifted(path: BasePath, to: &[f64]) -> BasePath {
    let from = path.point(0.0);
    let d: Vec<f64> = to.iter().zip(&from).map(|(a, b)| a - b).collect();
    let mv = |p: &[f64]| -> Vec<f64> { p.iter().zip(&d).map(|(x, dx)| x + dx).collect() };
    match path {
        BasePath::Polyline { points } => BasePath::Polyline {
            points: points.iter().map(|p| mv(p)).collect(),
        },
        BasePath::Circle {
            center,
            radius,
            clockwise,
        } => BasePath::Circle {
            center: [center[0] + d[0], center[1] + d[1]],
            radius,
            clockwise,
        },
    }
}

fn start_point(start: &Option<Floats>, m: usize) -> Vec<f64> {
    start.as_ref().map_or_else(|| vec![0.0; m], |s| s.0.clone())
}

fn path_table(p: &LiftedPath) -> Table {
    let m = p.samples.first().map_or(0, |s| s.x.len());
    let mut t = Table::new(["t".to_string()].into_iter().chain((1..=m).map(|i| format!("x{i}"))));
    for s in &p.samples {
        t.push_floats([s.t].into_iter().chain(s.x.iter().copied()));
    }
    t
}

fn lift(a: LiftPath) -> Result<(), Failure> {
    let src = Source::load(&a.source)?;
    let (m, n) = src.dims();
    let start = start_point(&a.start, m);
    let mut base = BasePath::parse(&a.path, n)?;
    if a.from_start {
        base = shifted(base, &src.image(&start)?);
    }
    let opts = a.lift.options();
    let lifted = match &src {
        Source::Map(f) => lift_path(f, &base, &start, &opts)?,
        Source::Coframe(c) => lift_path_coframe(c, &base, &start, &opts)?,
    };
    let summary = format!(
        "lift-path {}: {} samples, status {:?}, max residual {}",
        src.name(),
        lifted.samples.len(),
        lifted.status,
        sig(lifted.max_residual)
    );
    a.output.emit(&lifted, Some(path_table(&lifted)), &summary)
}

fn holonomy(a: Holonomy) -> Result<(), Failure> {
    let src = Source::load(&a.source)?;
    let (m, n) = src.dims();
    let start = start_point(&a.start, m);
    let mut base = BasePath::parse(&a.loop_path, n)?;
    if a.from_start {
        base = shifted(base, &src.image(&start)?);
    }
    let r = holonomy_defect(src.as_dist(), &base, &start, &a.lift.options())?;
    let summary = format!(
        "holonomy {}: defect [{}]",
        r.source,
        r.defect.iter().map(|v| sig(*v)).collect::<Vec<_>>().join(", ")
    );
    a.output.emit(&r, None, &summary)
}

fn regularity(a: Regularity) -> Result<(), Failure> {
    let f = builtin(&a.map)?;
    let center = start_point(&a.center, f.m());
    let t = angle_regularity(&f, &center, &a.radii.0, a.probes, a.eps_angle, a.seed)?;
    let mut table = Table::new(["radius", "delta", "probes", "deviating_pairs"]);
    for r in &t.rows {
        table.rows.push(vec![
            sig(r.radius),
            sig(r.delta.value()),
            r.probes.to_string(),
            r.deviating_pairs.to_string(),
        ]);
    }
    let summary = format!("regularity {}: {} radii", t.map, t.rows.len());
    a.output.emit(&t, Some(table), &summary)
}

/// Mesh view written next to the surface.
#[derive(Serialize, Deserialize)]
struct MeshExport {
    vertices: Vec<Vec<f64>>,
    image: Vec<[f64; 2]>,
    quads: Vec<[usize; 4]>,
}

#[derive(Serialize)]
struct SurfaceDocument<'a> {
    surface: &'a StaircaseSurface,
    mesh: MeshExport,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SurfaceFile {
    Document { surface: Box<StaircaseSurface> },
    Bare(Box<StaircaseSurface>),
}

fn read_surface(path: &PathBuf) -> Result<StaircaseSurface, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let file: SurfaceFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Io(format!("{}: not a staircase surface: {e}", path.display())))?;
    Ok(match file {
        SurfaceFile::Document { surface } | SurfaceFile::Bare(surface) => *surface,
    })
}

fn staircase(a: BuildStaircase) -> Result<(), Failure> {
    let f = builtin(&a.map)?;
    let start = start_point(&a.start, f.m());
    let [x0, y0, x1, y1] = match &a.segment {
        Some(v) => exactly::<4>(v, "--segment")?,
        None => {
            let y = f.eval(&start)?;
            if y.len() != 2 {
                return Err(confkit::Error::Unsupported(format!("{} does not map to the plane", f.name())).into());
            }
            [y[0], y[1], y[0] + 1.0, y[1]]
        }
    };
    let direction = exactly::<2>(&a.direction, "--direction")?;
    let cfg = StaircaseConfig {
        segment: [[x0, y0], [x1, y1]],
        start,
        direction,
        k_factor: a.k_factor,
        angle_tol: a.angle_tol,
        max_height: a.max_height,
        n_along: a.n_along,
        n_up: a.n_up,
        initial_height: a.initial_height,
        max_step_height: a.max_step_height,
        min_height: a.min_height,
        lift: LiftOptions {
            step: a.lift_step,
            ..LiftOptions::default()
        },
    };
    let s = build_staircase(&f, &cfg)?;
    let mesh = QuadMesh::from_surface(&s)?;
    let doc = SurfaceDocument {
        surface: &s,
        mesh: MeshExport {
            vertices: mesh.vertices.clone(),
            image: mesh.image.clone(),
            quads: mesh.quads.clone(),
        },
    };
    let summary = format!(
        "build-staircase {}: {} patches, height {} of {}, status {:?}",
        s.map,
        s.patches.len(),
        sig(s.reached_height()),
        sig(cfg.max_height),
        s.status
    );
    a.output.emit(&doc, None, &summary)
}

fn area_growth(a: AreaGrowth) -> Result<(), Failure> {
    let s = read_surface(&a.surface)?;
    let mesh = QuadMesh::from_surface(&s)?;
    let g = growth_profile_mesh(&mesh, &a.radii.0, &a.seed.seed()?)?;
    let mut t = Table::new(["r", "L", "A", "A_from_L"]);
    for i in 0..g.radii.len() {
        t.push_floats([g.radii[i], g.lengths[i], g.areas[i], g.area_from_lengths[i]]);
    }
    let summary = format!(
        "area-growth {}: area exponent {}, length exponent {}",
        s.map,
        sig(g.area_exponent),
        sig(g.length_exponent)
    );
    a.output.emit(&g, Some(t), &summary)
}

fn side(s: &str) -> Result<Side, Failure> {
    match s {
        "lr" | "left-right" => Ok(Side::LeftRight),
        "bt" | "bottom-top" => Ok(Side::BottomTop),
        _ => Err(Failure::Usage(format!("--side must be lr or bt, got `{s}`"))),
    }
}

fn estimate_modulus(a: EstimateModulus) -> Result<(), Failure> {
    let spec = |prefix: &str| a.complex.strip_prefix(prefix).map(|r| floats(r).map_err(Failure::Usage));
    let mut mesh = None;
    let complex = if let Some(v) = spec("grid:") {
        let [nx, ny, w, h] = exactly::<4>(&v?, "grid")?;
        CellComplex::grid(nx as usize, ny as usize, w, h)?
    } else if let Some(v) = spec("annulus:") {
        let [r_in, r_out, nr, nt] = exactly::<4>(&v?, "annulus")?;
        CellComplex::annulus(r_in, r_out, nr as usize, nt as usize)?
    } else {
        let s = read_surface(&PathBuf::from(&a.complex))?;
        let m = QuadMesh::from_surface(&s)?;
        let c = CellComplex::from_mesh(&m)?;
        mesh = Some(m);
        c
    };
    let (kind, arg) = a.family.split_once(':').unwrap_or((a.family.as_str(), ""));
    let family = match kind {
        "rect" => {
            let k = if arg.is_empty() {
                4
            } else {
                arg.parse()
                    .map_err(|_| Failure::Usage(format!("bad perturbation count `{arg}`")))?
            };
            family_rectangle(&complex, side(&a.side)?, k)?
        }
        "lattice" => CurveFamily::GridCrossing { side: side(&a.side)? },
        "annulus" => CurveFamily::RadialCrossing,
        "rays" => family_polar_rays(&complex)?,
        "lifted" => {
            let mesh = mesh
                .as_ref()
                .ok_or_else(|| Failure::Usage("lifted rays need a surface complex".into()))?;
            let columns = mesh.quad_origin.iter().map(|q| q.2).max().map_or(1, |c| c + 1);
            let count = a.rays.unwrap_or(columns).max(1);
            let rays: Vec<f64> = (0..count).map(|i| (i as f64 + 0.5) / count as f64).collect();
            let dist;
            let cutoff = match a.truncate {
                Some(r) => {
                    dist = mesh.distances(&mesh.seed_vertices(&GrowthSeed::BaseRow)?);
                    Some((dist.as_slice(), r))
                }
                None => None,
            };
            family_lifted_rays(mesh, &rays, cutoff)?
        }
        _ => return Err(Failure::Usage(format!("unknown family `{}`", a.family))),
    };
    let opts = ModulusOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        ..ModulusOptions::default()
    };
    let est = modulus(&complex, &family, a.p, &opts)?;
    let summary = format!(
        "estimate-modulus {}: M_{} = {} ({:?}, {} iterations)",
        est.family,
        a.p,
        sig(est.value),
        est.bound,
        est.iterations
    );
    a.output.emit(&est, None, &summary)
}

fn parabolicity(a: Parabolicity) -> Result<(), Failure> {
    let setup = match (&a.surface, &a.fixture) {
        (Some(path), _) => {
            let s = read_surface(path)?;
            let mesh = QuadMesh::from_surface(&s)?;
            let n = a.rays.max(1);
            let rays: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
            RadialSetup::from_mesh(&s.map, &mesh, &a.seed.seed()?, &rays)?
        }
        (None, Some(fx)) => match fx.split_once(':') {
            None if fx == "flat" => flat_fixture(a.r_out, a.rings, a.sectors)?,
            None if fx == "hyperbolic" => hyperbolic_fixture(0.01, a.r_out, a.rings, a.sectors)?,
            Some(("hyperbolic", k)) => {
                let kappa = k
                    .parse()
                    .map_err(|_| Failure::Usage(format!("bad curvature `{k}`")))?;
                hyperbolic_fixture(kappa, a.r_out, a.rings, a.sectors)?
            }
            _ => return Err(Failure::Usage(format!("unknown fixture `{fx}`"))),
        },
        (None, None) => return Err(Failure::Usage("give --surface or --fixture".into())),
    };
    let rep = parabolicity_bound(&setup, &a.alphas.0, &a.cutoffs.0, a.r0)?;
    let mut t = Table::new(["cutoff", "alpha", "min_length", "admissible", "energy"]);
    for r in &rep.rows {
        t.rows.push(vec![
            sig(r.cutoff),
            sig(r.alpha),
            sig(r.min_length),
            r.admissible.to_string(),
            sig(r.energy),
        ]);
    }
    let summary = format!(
        "parabolicity {}: M_upper = [{}], verdict {:?}",
        rep.label,
        rep.summary.iter().map(|s| sig(s.m_upper)).collect::<Vec<_>>().join(", "),
        rep.verdict
    );
    a.output.emit(&rep, Some(t), &summary)
}

fn demo(a: Demo) -> Result<(), Failure> {
    let opts = DemoOptions {
        window: a.window,
        samples: a.samples,
        resolution: a.resolution,
        seed: a.seed,
        ..DemoOptions::default()
    };
    let r = demo_liouville(&a.map, &opts)?;
    let summary = format!("demo {}: {:?}: {}", r.map, r.status, r.diagnostic);
    a.output.emit(&r, None, &summary)
}
