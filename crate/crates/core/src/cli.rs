//! Command-line entry point: parse a run configuration, dispatch one of
//! the subcommands, and emit machine-readable CSV/JSON artifacts.
//!
//! Every JSON artifact embeds the sha-256 of the configuration text and
//! the crate version, and all randomness is seeded, so identical inputs
//! produce byte-identical outputs.

use crate::boxcount::{box_count_dimension, cross_check, log_spaced_scales, CrossCheck};
use crate::conditions::{
    ahlfors_suite, attractor_dimension, tail_dimension, verify_all, ConditionReport,
    DimensionResult, TheoremRoute,
};
use crate::config::{Params, RunConfig, SystemConfig};
use crate::error::{NifsError, Result};
use crate::geom::Point;
use crate::ifs::SystemDescriptor;
use crate::perturb::{build_perturbed, check_separation, perturbation_diagnostics};
use crate::pressure::{bowen_for_system, pressure_curve, BetaSchedule, BowenResult, SumMode};
use crate::targets::{
    build_moran_tree, frostman_scaling, moran_schedule, sample_target_points, FrostmanFit,
    GrowthRules, MoranConstants, MoranSchedule, MoranTree, MoranVariant, TargetSetup,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "nifs", version, about = "Shrinking-target laboratory for non-autonomous IFS")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Rayon thread count (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Horizon override.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Tolerance override (Bowen bisection).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RouteArg {
    Bounded,
    Unbounded,
}

impl From<RouteArg> for TheoremRoute {
    fn from(r: RouteArg) -> Self {
        match r {
            RouteArg::Bounded => TheoremRoute::Bounded,
            RouteArg::Unbounded => TheoremRoute::Unbounded,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Emit the finite-horizon pressure table over the t grid as CSV.
    Pressure,
    /// Solve for the Bowen parameter and emit a JSON record.
    Bowen,
    /// Verify every hypothesis condition; nonzero exit if the selected
    /// theorem route fails.
    Verify {
        #[arg(long, value_enum, default_value_t = RouteArg::Bounded)]
        route: RouteArg,
    },
    /// Generate the Moran horizon schedule with certificates.
    Moran,
    /// Build the Moran tree and emit sampled support points as CSV.
    Sample,
    /// Box-count a point CSV and emit the fitted dimension.
    Boxcount {
        /// Points CSV (as produced by `sample`).
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        scale_lo: Option<f64>,
        #[arg(long)]
        scale_hi: Option<f64>,
        #[arg(long, default_value_t = 16)]
        scales: usize,
    },
    /// Materialize the perturbed system and its diagnostics.
    Perturb,
    /// Full pipeline: verify → bowen → moran → sample → boxcount →
    /// cross-check, bundled into one JSON.
    Report {
        #[arg(long, value_enum, default_value_t = RouteArg::Bounded)]
        route: RouteArg,
    },
}

#[derive(Serialize)]
struct Envelope<T: Serialize> {
    tool_version: String,
    config_sha256: String,
    #[serde(flatten)]
    payload: T,
}

fn envelope<T: Serialize>(hash: &str, payload: T) -> Envelope<T> {
    Envelope {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: hash.to_string(),
        payload,
    }
}

struct Ctx {
    system: SystemDescriptor,
    beta: BetaSchedule,
    config: RunConfig,
    config_sha256: String,
    params: Params,
    out: PathBuf,
}

impl Ctx {
    fn load(cli: &Cli) -> Result<Ctx> {
        let path = cli.config.as_ref().ok_or_else(|| {
            NifsError::Config("this subcommand needs --config <file.toml>".into())
        })?;
        let (config, text) = RunConfig::from_path(path)?;
        let system = config.system.build()?;
        let beta = config.beta.build()?;
        let mut params = config.params.clone();
        if let Some(s) = cli.seed {
            params.seed = s;
        }
        if let Some(h) = cli.horizon {
            params.horizon = h;
        }
        if let Some(t) = cli.tol {
            params.tol = t;
        }
        let config_sha256 = format!("{:x}", Sha256::digest(text.as_bytes()));
        std::fs::create_dir_all(&cli.out)?;
        Ok(Ctx { system, beta, config, config_sha256, params, out: cli.out.clone() })
    }

    fn write_json<T: Serialize>(&self, name: &str, payload: T) -> Result<PathBuf> {
        let path = self.out.join(name);
        let body = serde_json::to_string_pretty(&envelope(&self.config_sha256, payload))
            .map_err(|e| NifsError::Config(format!("json encode: {e}")))?;
        std::fs::write(&path, body + "\n")?;
        Ok(path)
    }

    fn t_max(&self) -> f64 {
        self.params.t_max.unwrap_or(self.system.dimension as f64)
    }
}

/// 17 significant digits, enough to round-trip an f64.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn run(cli: Cli) -> Result<i32> {
    if cli.threads > 0 {
        // ignore the error when a pool already exists (tests, repeat calls)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match &cli.command {
        Command::Pressure => cmd_pressure(&Ctx::load(&cli)?),
        Command::Bowen => cmd_bowen(&Ctx::load(&cli)?).map(|_| 0),
        Command::Verify { route } => cmd_verify(&Ctx::load(&cli)?, (*route).into()),
        Command::Moran => cmd_moran(&Ctx::load(&cli)?),
        Command::Sample => cmd_sample(&Ctx::load(&cli)?).map(|_| 0),
        Command::Boxcount { points, scale_lo, scale_hi, scales } => {
            cmd_boxcount(&cli, points, *scale_lo, *scale_hi, *scales)
        }
        Command::Perturb => cmd_perturb(&Ctx::load(&cli)?),
        Command::Report { route } => cmd_report(&Ctx::load(&cli)?, (*route).into()),
    }
}

fn cmd_pressure(ctx: &Ctx) -> Result<i32> {
    let grid = ctx.params.resolve_t_grid(ctx.system.dimension);
    let path = ctx.out.join("pressure.csv");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "t,n,log_sum,over_n,window_hi,window_lo")?;
    for &t in &grid {
        let curve = pressure_curve(
            &ctx.system,
            &ctx.beta,
            t,
            ctx.params.n_min,
            ctx.params.horizon,
            SumMode::Exact,
        )?;
        for e in &curve.entries {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                fmt(t),
                e.n,
                fmt(e.log_sum),
                fmt(e.over_n),
                fmt(curve.upper),
                fmt(curve.lower)
            )?;
        }
    }
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_bowen(ctx: &Ctx) -> Result<BowenResult> {
    let r = bowen_for_system(
        &ctx.system,
        &ctx.beta,
        ctx.params.horizon,
        ctx.t_max(),
        ctx.params.tol,
        SumMode::Exact,
    )?;
    let path = ctx.write_json("bowen.json", &r)?;
    println!("b = {:.9}  ({})", r.b, path.display());
    Ok(r)
}

#[derive(Serialize)]
struct VerifyOut {
    route: String,
    route_passes: bool,
    route_failures: Vec<String>,
    conditions: ConditionReport,
    attractor: DimensionResult,
}

fn run_verify(ctx: &Ctx) -> Result<(ConditionReport, DimensionResult)> {
    let dim = attractor_dimension(&ctx.system, ctx.params.tol.min(1e-9), ctx.params.horizon)?;
    // the Ahlfors question is asymptotic: use the block-neutral exponent,
    // which the finite-horizon estimate approaches at rate O(1/horizon)
    let h = tail_dimension(&ctx.system)?;
    let grid = ctx.params.resolve_t_grid(ctx.system.dimension);
    let report = verify_all(
        &ctx.system,
        &ctx.beta,
        ctx.params.horizon.min(ctx.params.ahlfors_horizon.max(8)),
        &grid,
        Some(h),
        ctx.params.ahlfors_horizon,
        ctx.params.seed,
    )?;
    Ok((report, dim))
}

fn cmd_verify(ctx: &Ctx, route: TheoremRoute) -> Result<i32> {
    let (report, dim) = run_verify(ctx)?;
    let failures = report.route_failures(route);
    let passes = failures.is_empty();
    let out = VerifyOut {
        route: format!("{route:?}").to_lowercase(),
        route_passes: passes,
        route_failures: failures.clone(),
        conditions: report,
        attractor: dim,
    };
    let path = ctx.write_json("verify.json", &out)?;
    println!("wrote {}", path.display());
    if passes {
        Ok(0)
    } else {
        for f in &failures {
            eprintln!("condition failed: {f}");
        }
        Ok(1)
    }
}

/// Schedule constants measured from the system itself.
fn measured_constants(ctx: &Ctx) -> Result<(MoranConstants, DimensionResult)> {
    let contraction = crate::conditions::verify_contraction(&ctx.system, ctx.params.horizon.max(2))?;
    let grid = ctx.params.resolve_t_grid(ctx.system.dimension);
    let targets =
        crate::conditions::verify_targets(&ctx.system, &ctx.beta, ctx.params.horizon.max(2), &grid)?;
    if !targets.esc.passed() {
        return Err(NifsError::Precondition(format!(
            "schedule constants need ESC: {}",
            targets.esc.witness
        )));
    }
    let dim = attractor_dimension(&ctx.system, ctx.params.tol.min(1e-9), ctx.params.horizon)?;
    let h = tail_dimension(&ctx.system)?;
    let ahl = ahlfors_suite(
        &ctx.system,
        h,
        ctx.params.ahlfors_horizon,
        ctx.params.ball_centers,
        ctx.params.ball_radii,
        ctx.params.seed,
    )?;
    Ok((
        MoranConstants {
            theta: contraction.theta,
            alpha_lo: targets.alpha_lo,
            alpha_hi: targets.alpha_hi,
            ahlfors_c: ahl.empirical_c,
            h,
            pressure_at_t: None,
            growth_const: 1.0,
        },
        dim,
    ))
}

fn build_schedule(ctx: &Ctx) -> Result<MoranSchedule> {
    let (constants, _) = measured_constants(ctx)?;
    let (n1, l_max, supplied) = match &ctx.params.moran_supplied {
        Some(ns) => (ns[0], ns.len(), Some(ns.clone())),
        None => (ctx.params.moran_n1, ctx.params.moran_levels, None),
    };
    moran_schedule(
        constants,
        MoranVariant::GrowthChecked {
            n1,
            rules: GrowthRules::dichotomy_and_nonempty(),
            supplied,
        },
        l_max,
    )
}

fn cmd_moran(ctx: &Ctx) -> Result<i32> {
    let schedule = build_schedule(ctx)?;
    let path = ctx.write_json("moran.json", &schedule)?;
    println!("schedule {:?}  ({})", schedule.levels, path.display());
    Ok(0)
}

fn build_tree(ctx: &Ctx) -> Result<(MoranTree, TargetSetup<'_>)> {
    let schedule = build_schedule(ctx)?;
    let n_max = *schedule.levels.last().unwrap();
    let setup = TargetSetup::prepare(&ctx.system, &ctx.beta, n_max)?;
    let tree = build_moran_tree(&setup, schedule, ctx.params.per_parent_cap, ctx.params.seed)?;
    Ok((tree, setup))
}

fn write_points_csv(ctx: &Ctx, tree: &MoranTree, points: &[Point]) -> Result<PathBuf> {
    let dim = ctx.system.dimension;
    let path = ctx.out.join("points.csv");
    let mut f = std::fs::File::create(&path)?;
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.push("word".into());
    header.push("mass".into());
    writeln!(f, "{}", header.join(","))?;
    // leaf lookup by center for word/mass annotation
    let leaves = tree.leaves();
    for p in points {
        let leaf = leaves
            .iter()
            .find(|l| l.center == *p)
            .expect("sampled point is a leaf center");
        let coords: Vec<String> = p.iter().map(|&x| fmt(x)).collect();
        let word: Vec<String> = leaf.word.symbols.iter().map(|s| s.to_string()).collect();
        writeln!(f, "{},{},{}", coords.join(","), word.join("-"), fmt(leaf.mass))?;
    }
    Ok(path)
}

fn cmd_sample(ctx: &Ctx) -> Result<(MoranTree, Vec<Point>, PathBuf)> {
    let (tree, _setup) = build_tree(ctx)?;
    let points = sample_target_points(&tree, ctx.params.sample_count, ctx.params.seed);
    let path = write_points_csv(ctx, &tree, &points)?;
    println!("wrote {}", path.display());
    Ok((tree, points, path))
}

fn cmd_boxcount(
    cli: &Cli,
    points_path: &Path,
    scale_lo: Option<f64>,
    scale_hi: Option<f64>,
    scales: usize,
) -> Result<i32> {
    let text = std::fs::read_to_string(points_path)?;
    let points = parse_points_csv(&text)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in &points {
        for &x in p {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    let diam = (hi - lo).max(1e-12);
    let s_hi = scale_hi.unwrap_or(diam / 2.0);
    let s_lo = scale_lo.unwrap_or(s_hi * 1e-3);
    let grid = log_spaced_scales(s_lo, s_hi, scales.max(6));
    let fit = box_count_dimension(&points, &grid)?;
    let out_dir = &cli.out;
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("boxcount.json");
    let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
    let body = serde_json::to_string_pretty(&envelope(&hash, &fit))
        .map_err(|e| NifsError::Config(format!("json encode: {e}")))?;
    std::fs::write(&path, body + "\n")?;
    println!("slope = {:.6}  ({})", fit.slope, path.display());
    Ok(0)
}

pub fn parse_points_csv(text: &str) -> Result<Vec<Point>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| NifsError::Config("empty points CSV".into()))?;
    let dim = header.split(',').take_while(|c| c.starts_with('x')).count();
    if dim == 0 {
        return Err(NifsError::Config("points CSV needs x0.. coordinate columns".into()));
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut p = Vec::with_capacity(dim);
        for (j, field) in line.split(',').take(dim).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                NifsError::Config(format!(
                    "points CSV line {} field {}: cannot parse {field:?}",
                    i + 2,
                    j + 1
                ))
            })?;
            p.push(v);
        }
        if p.len() != dim {
            return Err(NifsError::Config(format!("points CSV line {} too short", i + 2)));
        }
        points.push(p);
    }
    Ok(points)
}

#[derive(Serialize)]
struct PerturbOut {
    diagnostics: crate::perturb::PerturbDiagnostics,
    separation: crate::perturb::SeparationReport,
    perturbed_config: String,
}

fn cmd_perturb(ctx: &Ctx) -> Result<i32> {
    let gamma_cfg = ctx.config.gamma.as_ref().ok_or_else(|| {
        NifsError::Config("perturb needs a [gamma] section in the config".into())
    })?;
    let gammas = gamma_cfg.build()?;
    let perturbed = build_perturbed(&ctx.system, &gammas, gamma_cfg.taper)?;
    let diagnostics =
        perturbation_diagnostics(&gammas, ctx.system.alphabet_bound(), ctx.params.horizon)?;
    let separation = check_separation(&ctx.system, &gammas, ctx.params.horizon)?;

    let out_cfg = RunConfig {
        system: SystemConfig::from_system(&perturbed),
        beta: ctx.config.beta.clone(),
        gamma: None,
        params: ctx.params.clone(),
    };
    let cfg_path = ctx.out.join("perturbed.toml");
    std::fs::write(&cfg_path, out_cfg.to_toml()?)?;
    let out = PerturbOut {
        diagnostics,
        separation,
        perturbed_config: cfg_path.display().to_string(),
    };
    let path = ctx.write_json("perturb.json", &out)?;
    println!("wrote {} and {}", cfg_path.display(), path.display());
    Ok(0)
}

#[derive(Serialize)]
struct TreeLevelSummary {
    n: usize,
    nodes: usize,
    mass: f64,
    sampled: bool,
}

#[derive(Serialize)]
struct ReportBundle {
    route: String,
    route_passes: bool,
    route_failures: Vec<String>,
    conditions: ConditionReport,
    attractor: DimensionResult,
    bowen: BowenResult,
    moran: MoranSchedule,
    tree: Vec<TreeLevelSummary>,
    frostman: Option<FrostmanFit>,
    cross_check: CrossCheck,
    points_csv: String,
}

fn cmd_report(ctx: &Ctx, route: TheoremRoute) -> Result<i32> {
    let (conditions, attractor) = run_verify(ctx)?;
    let failures = conditions.route_failures(route);
    let bowen = bowen_for_system(
        &ctx.system,
        &ctx.beta,
        ctx.params.horizon,
        ctx.t_max(),
        ctx.params.tol,
        SumMode::Exact,
    )?;
    let (tree, _setup) = build_tree(ctx)?;
    let points = sample_target_points(&tree, ctx.params.sample_count, ctx.params.seed);
    let points_path = write_points_csv(ctx, &tree, &points)?;

    let leaf_depth = *tree.schedule.levels.last().unwrap();
    let root_depth = tree.schedule.levels[0];
    let kb = ctx.system.kappa_bounds(leaf_depth, 0)?;
    let diam = ctx.system.domain.diameter();
    let scale_lo = kb.log_hi(leaf_depth).exp() * diam;
    let scale_hi = kb.log_hi(root_depth).exp() * diam;
    let cross = cross_check(&tree, scale_lo, scale_hi, bowen.b, &points)?;

    let frostman = if tree.levels.len() >= 3 {
        let r_hi = tree.levels[0]
            .nodes
            .iter()
            .map(|n| n.log_radius)
            .fold(f64::NEG_INFINITY, f64::max)
            .exp();
        let r_lo = tree.levels[tree.levels.len() - 2]
            .nodes
            .iter()
            .map(|n| n.log_radius)
            .fold(f64::NEG_INFINITY, f64::max)
            .exp();
        let radii = log_spaced_scales(r_lo, r_hi, 12);
        frostman_scaling(&tree, &radii).ok()
    } else {
        None
    };

    let bundle = ReportBundle {
        route: format!("{route:?}").to_lowercase(),
        route_passes: failures.is_empty(),
        route_failures: failures,
        conditions,
        attractor,
        bowen,
        moran: tree.schedule.clone(),
        tree: tree
            .levels
            .iter()
            .map(|l| TreeLevelSummary {
                n: l.n,
                nodes: l.nodes.len(),
                mass: l.nodes.iter().map(|n| n.mass).sum(),
                sampled: l.sampled,
            })
            .collect(),
        frostman,
        cross_check: cross,
        points_csv: points_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let passes = bundle.route_passes;
    let path = ctx.write_json("report.json", &bundle)?;
    println!("wrote {}", path.display());
    Ok(if passes { 0 } else { 1 })
}
