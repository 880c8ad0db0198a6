//! Command dispatch and artifact writing.

use crate::config::{config_hash, ConfigError, RunConfig};
use kperim_core::closedform1d::{build_profile, perimeter_curve_report};
use kperim_core::extension::{extend, BoxDomain, ExtendOptions};
use kperim_core::functional::{
    curvature, divergence_probe, interaction_energy, perimeter, seminorm, Domain, EnergyMethod, EnergyReport, EpsSchedule,
    ProbeSchedule,
};
use kperim_core::grid::{rasterize, Grid, GridFunction, GridSet, Shape};
use kperim_core::isoperimetry::{
    ball_curve, optimize, poincare_constant, relative_isoperimetric_suite, sobolev_assumption_check, two_ball_counterexample,
    AnnealSchedule, OptimizeMode, OptimizeOptions, PoincareMode, PoincareOptions, SobolevOptions, TwoBallSetup,
};
use kperim_core::kernels::{certify, kernel_integral, Hypothesis, KernelSpec, Region, SamplingConfig, Weight};
use kperim_core::numeric::IntegralStatus;
use kperim_core::report::{csv_num, encode};
use kperim_core::{Error, Kernel, Norm, Verdict};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::from(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::Inconclusive(_)) => 3,
            _ => 1,
        }
    }
}

pub fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Holds => 0,
        Verdict::Fails => 2,
        Verdict::Inconclusive => 3,
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(CliError::Usage(msg.into()))
}

/// Result of a command: the verdict and the one-line summary.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub verdict: Verdict,
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

struct Ctx {
    cfg: RunConfig,
    kernel: Kernel,
    hash: String,
    artifacts: Vec<PathBuf>,
}

impl Ctx {
    fn header(&self) -> String {
        format!("# config_hash={} seed={}", self.hash, self.cfg.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn write(&mut self, name: &str, body: &str) -> Res<()> {
        let p = self.path(name);
        std::fs::write(&p, body)?;
        self.artifacts.push(p);
        Ok(())
    }

    fn json<R: Serialize>(&mut self, name: &str, verdict: Verdict, report: &R) -> Res<()> {
        let report = serde_json::to_value(report).map_err(|e| CliError::Core(Error::Io(e.to_string())))?;
        self.json_value(name, verdict, report)
    }

    fn json_value(&mut self, name: &str, verdict: Verdict, report: Value) -> Res<()> {
        let doc = json!({
            "command": self.cfg.command,
            "config_hash": self.hash,
            "seed": self.cfg.seed,
            "verdict": verdict,
            "report": report,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Core(Error::Io(e.to_string())))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// `body` is a CSV produced by a `to_csv(header)` call.
    fn csv(&mut self, name: &str, body: &str) -> Res<()> {
        self.write(name, body)
    }

    fn grid_file(&mut self, name: &str, f: &GridFunction) -> Res<()> {
        let mut buf = format!("{}\n", self.header()).into_bytes();
        match self.param_str("grid_format").unwrap_or("text") {
            "text" => f.write_text(&mut buf)?,
            "binary" => f.write_binary(&mut buf)?,
            other => return usage(format!("parameter `grid_format`: expected text or binary, got `{other}`")),
        }
        let p = self.path(name);
        std::fs::write(&p, buf)?;
        self.artifacts.push(p);
        Ok(())
    }

    /// Rejects parameters the command does not read.
    fn allow(&self, keys: &[&str]) -> Res<()> {
        for k in self.cfg.params.keys() {
            if k != "grid_format" && !keys.contains(&k.as_str()) {
                return usage(format!(
                    "`{}` does not take parameter `{k}` (accepted: {})",
                    self.cfg.command,
                    if keys.is_empty() { "none".to_string() } else { keys.join(", ") }
                ));
            }
        }
        Ok(())
    }

    fn param_str(&self, key: &str) -> Option<&str> {
        self.cfg.params.get(key).map(|s| s.as_str())
    }

    fn f64_or(&self, key: &str, default: f64) -> Res<f64> {
        match self.param_str(key) {
            None => Ok(default),
            Some(v) => parse_f64(key, v),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Res<usize> {
        match self.param_str(key) {
            None => Ok(default),
            Some(v) => v.parse().or_else(|_| usage(format!("parameter `{key}`: expected a non-negative integer, got `{v}`"))),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Res<bool> {
        match self.param_str(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => usage(format!("parameter `{key}`: expected true or false, got `{v}`")),
        }
    }

    fn list(&self, key: &str) -> Res<Option<Vec<f64>>> {
        self.param_str(key).map(|v| parse_list(key, v)).transpose()
    }

    fn required(&self, key: &str) -> Res<&str> {
        match self.param_str(key) {
            Some(v) => Ok(v),
            None => usage(format!("`{}` requires parameter `{key}`", self.cfg.command)),
        }
    }

    fn h_or(&self, default: f64) -> f64 {
        self.cfg.h.unwrap_or(default)
    }

    fn grid(&self) -> Res<Grid> {
        Ok(Grid::centered(self.kernel.dim(), self.h_or(1.0 / 64.0), self.cfg.half_width.unwrap_or(2.0))?)
    }

    fn set(&self, key: &str) -> Res<Option<GridSet>> {
        match self.param_str(key) {
            None => Ok(None),
            Some(v) => parse_set(key, v, || self.grid()).map(Some),
        }
    }

    fn function(&self, key: &str) -> Res<GridFunction> {
        let v = self.required(key)?;
        parse_function(key, v, || self.grid())
    }

    fn boxes(&self, key: &str) -> Res<Vec<(Vec<f64>, Vec<f64>)>> {
        parse_boxes(key, self.required(key)?, self.kernel.dim())
    }

    fn scheme(&self) -> kperim_core::QuadratureScheme {
        self.cfg.scheme()
    }

    fn finish(self, verdict: Verdict, summary: String) -> Outcome {
        Outcome { verdict, summary, artifacts: self.artifacts }
    }
}

fn parse_f64(key: &str, v: &str) -> Res<f64> {
    match v.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        t => t.parse::<f64>().ok().filter(|x| !x.is_nan()).map_or_else(
            || usage(format!("parameter `{key}`: expected a number, got `{v}`")),
            Ok,
        ),
    }
}

/// `a,b,c`, `linspace:a:b:n` or `geomspace:a:b:n`.
fn parse_list(key: &str, v: &str) -> Res<Vec<f64>> {
    let spaced = |rest: &str, geometric: bool| -> Res<Vec<f64>> {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return usage(format!("parameter `{key}`: expected `{}:a:b:n`", if geometric { "geomspace" } else { "linspace" }));
        }
        let a = parse_f64(key, parts[0])?;
        let b = parse_f64(key, parts[1])?;
        let n: usize = parts[2].parse().or_else(|_| usage(format!("parameter `{key}`: bad count `{}`", parts[2])))?;
        if n < 2 || (geometric && !(a > 0.0 && b > 0.0)) {
            return usage(format!("parameter `{key}`: need n ≥ 2 (and positive ends for geomspace)"));
        }
        Ok((0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if geometric {
                    a * (b / a).powf(t)
                } else {
                    a + (b - a) * t
                }
            })
            .collect())
    };
    if let Some(rest) = v.strip_prefix("linspace:") {
        return spaced(rest, false);
    }
    if let Some(rest) = v.strip_prefix("geomspace:") {
        return spaced(rest, true);
    }
    v.split(',').map(|t| parse_f64(key, t)).collect()
}

/// `lo1,..,lod:hi1,..,hid` boxes separated by `;`.
fn parse_boxes(key: &str, v: &str, d: usize) -> Res<Vec<(Vec<f64>, Vec<f64>)>> {
    v.split(';')
        .map(|b| {
            let (lo, hi) = b
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("parameter `{key}`: expected `lo1,..:hi1,..` boxes separated by `;`")))?;
            let lo = parse_list(key, lo)?;
            let hi = parse_list(key, hi)?;
            if lo.len() != d || hi.len() != d {
                return usage(format!("parameter `{key}`: box corners need {d} coordinates"));
            }
            Ok((lo, hi))
        })
        .collect()
}

fn read_file(path: &str) -> Res<std::fs::File> {
    std::fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot open `{path}`: {e}")))
}

/// Set description: `+`-separated terms `ball:R[@c1,..]` and
/// `box:lo1,..:hi1,..` rasterized on the configured grid, or the path of a
/// set file.
fn parse_set(key: &str, v: &str, grid: impl Fn() -> Res<Grid>) -> Res<GridSet> {
    if !(v.starts_with("ball:") || v.starts_with("box:")) {
        return Ok(GridSet::read(read_file(v)?)?);
    }
    let g = grid()?;
    let d = g.dim();
    let mut acc = GridSet::empty(&g);
    for term in v.split('+') {
        let shape = if let Some(rest) = term.strip_prefix("ball:") {
            let (r, c) = match rest.split_once('@') {
                Some((r, c)) => (r, parse_list(key, c)?),
                None => (rest, vec![0.0; d]),
            };
            if c.len() != d {
                return usage(format!("parameter `{key}`: ball center needs {d} coordinates"));
            }
            Shape::ball(c, parse_f64(key, r)?)
        } else if let Some(rest) = term.strip_prefix("box:") {
            let (lo, hi) = parse_boxes(key, rest, d)?.remove(0);
            Shape::Box { lo, hi }
        } else {
            return usage(format!("parameter `{key}`: unknown shape `{term}`"));
        };
        acc = acc.union(&rasterize(&g, &shape)?)?;
    }
    Ok(acc)
}

/// Function description: `bump:R[@c1,..]` for `(1 − |x − c|²/R²)₊²`,
/// `indicator:<set>`, or the path of a grid file.
fn parse_function(key: &str, v: &str, grid: impl Fn() -> Res<Grid>) -> Res<GridFunction> {
    if let Some(rest) = v.strip_prefix("indicator:") {
        return Ok(parse_set(key, rest, grid)?.indicator());
    }
    let Some(rest) = v.strip_prefix("bump:") else {
        return Ok(GridFunction::read(read_file(v)?)?);
    };
    let g = grid()?;
    let d = g.dim();
    let (r, c) = match rest.split_once('@') {
        Some((r, c)) => (parse_f64(key, r)?, parse_list(key, c)?),
        None => (parse_f64(key, rest)?, vec![0.0; d]),
    };
    if c.len() != d || !(r > 0.0) {
        return usage(format!("parameter `{key}`: bump needs a positive radius and {d} center coordinates"));
    }
    Ok(GridFunction::from_fn(&g, |x| {
        let q: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (r * r);
        if q < 1.0 {
            (1.0 - q) * (1.0 - q)
        } else {
            0.0
        }
    }))
}

fn energy_verdict(r: &EnergyReport) -> Verdict {
    if r.inconclusive {
        Verdict::Inconclusive
    } else {
        Verdict::Holds
    }
}

fn combine(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
    let vs: Vec<Verdict> = vs.into_iter().collect();
    if vs.contains(&Verdict::Fails) {
        Verdict::Fails
    } else if vs.contains(&Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Holds
    }
}

fn load_kernel(path: Option<&Path>) -> Res<(Kernel, String)> {
    let Some(path) = path else {
        return usage("a kernel spec is required (`kernel = <path>` or --kernel)");
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read kernel spec `{}`: {e}", path.display())))?;
    let spec = KernelSpec::parse(&text)?;
    let k = spec.build()?;
    Ok((k, spec.to_text()))
}

/// Runs the configured command, writing `config.txt` and the command's
/// artifacts into the output directory.
pub fn run(cfg: RunConfig) -> Res<Outcome> {
    if cfg.command.is_empty() {
        return usage("no command given");
    }
    let (kernel, kernel_text) = load_kernel(cfg.kernel.as_deref())?;
    let hash = config_hash(&cfg, &kernel_text);
    std::fs::create_dir_all(&cfg.out)?;
    let mut ctx = Ctx { cfg, kernel, hash, artifacts: Vec::new() };
    let echo = format!("{}\n{}", ctx.header(), ctx.cfg.to_text());
    ctx.write("config.txt", &echo)?;
    match ctx.cfg.command.clone().as_str() {
        "certify" => run_certify(ctx),
        "integral" => run_integral(ctx),
        "seminorm" => run_seminorm(ctx),
        "perimeter" => run_perimeter(ctx),
        "energy" => run_energy(ctx),
        "curvature" => run_curvature(ctx),
        "closedform" => run_closedform(ctx),
        "extend" => run_extend(ctx),
        "ballcurve" => run_ballcurve(ctx),
        "optimize" => run_optimize(ctx),
        "counterexample" => run_counterexample(ctx),
        "poincare" => run_poincare(ctx),
        "sobolev-check" => run_sobolev(ctx),
        "rel-iso" => run_rel_iso(ctx),
        "probe" => run_probe(ctx),
        other => usage(format!("unknown command `{other}`")),
    }
}

/// Without `hypotheses` every hypothesis is reported and the run passes;
/// with an explicit list the verdict combines the listed ones.
fn run_certify(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["hypotheses", "samples", "box_radius"])?;
    let norm = match &ctx.cfg.norm {
        Some(n) => Norm::parse(n)?,
        None => ctx.kernel.norm().clone(),
    };
    let defaults = SamplingConfig::default();
    let sc = SamplingConfig {
        seed: ctx.cfg.seed,
        samples: ctx.usize_or("samples", defaults.samples)?,
        box_radius: ctx.f64_or("box_radius", defaults.box_radius)?,
        ..defaults
    };
    let explicit = ctx.param_str("hypotheses").is_some();
    let hyps = match ctx.param_str("hypotheses") {
        Some(v) => v.split(',').map(Hypothesis::parse).collect::<kperim_core::Result<Vec<_>>>()?,
        None => Hypothesis::all(),
    };
    let reports = hyps.iter().map(|h| certify(&ctx.kernel, *h, &norm, &sc)).collect::<kperim_core::Result<Vec<_>>>()?;
    let verdict = if explicit { combine(reports.iter().map(|r| r.verdict)) } else { Verdict::Holds };
    let summary = reports.iter().map(|r| format!("{}={}", r.hypothesis, r.verdict.label())).collect::<Vec<_>>().join(" ");
    ctx.json("certify.json", verdict, &reports)?;
    Ok(ctx.finish(verdict, format!("certify: {summary}")))
}

fn parse_region(v: &str) -> Res<Region> {
    let bad = || CliError::Usage(format!("parameter `region`: unknown region `{v}`"));
    if v == "all" {
        return Ok(Region::All);
    }
    let (name, args) = v.split_once(':').ok_or_else(bad)?;
    let a = parse_list("region", args)?;
    Ok(match (name, a.as_slice()) {
        ("ball", [r]) => Region::Ball(*r),
        ("tail", [r]) => Region::Tail(*r),
        ("annulus", [r0, r1]) => Region::Annulus(*r0, *r1),
        ("cube_exterior", [r]) => Region::CubeExterior(*r),
        _ => return Err(bad()),
    })
}

/// Converged integrals pass, divergent ones fail.
fn run_integral(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["region", "weight"])?;
    let region = parse_region(ctx.param_str("region").unwrap_or("all"))?;
    let weight = match ctx.param_str("weight").unwrap_or("one") {
        "one" => Weight::One,
        w => match w.strip_prefix("min_one_pow:") {
            Some(p) => Weight::MinOnePow(parse_f64("weight", p)?),
            None => return usage(format!("parameter `weight`: expected one or min_one_pow:<p>, got `{w}`")),
        },
    };
    let i = kernel_integral(&ctx.kernel, region, weight)?;
    let verdict = match i.status {
        IntegralStatus::Converged => Verdict::Holds,
        IntegralStatus::Divergent => Verdict::Fails,
        IntegralStatus::Inconclusive => Verdict::Inconclusive,
    };
    let report = json!({
        "region": region,
        "weight": weight,
        "value": encode(i.value),
        "error": encode(i.error),
        "status": i.status,
    });
    ctx.json_value("integral.json", verdict, report)?;
    Ok(ctx.finish(verdict, format!("integral: {} ± {} ({:?})", i.value, i.error, i.status)))
}

fn run_seminorm(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["function", "p", "omega"])?;
    let u = ctx.function("function")?;
    let p = ctx.f64_or("p", 1.0)?;
    let omega = ctx.set("omega")?;
    let domain = omega.as_ref().map_or(Domain::WholeSpace, Domain::Set);
    let r = seminorm(&u, &ctx.kernel, p, domain, &ctx.scheme())?;
    let verdict = energy_verdict(&r);
    ctx.json("seminorm.json", verdict, &r)?;
    Ok(ctx.finish(verdict, format!("seminorm: [u]^p = {} ± {}", r.value, r.error)))
}

fn run_perimeter(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["set", "omega"])?;
    let e = ctx.set("set")?.ok_or_else(|| CliError::Usage("`perimeter` requires parameter `set`".into()))?;
    let omega = ctx.set("omega")?;
    let domain = omega.as_ref().map_or(Domain::WholeSpace, Domain::Set);
    let r = perimeter(&e, &ctx.kernel, domain, &ctx.scheme())?;
    let verdict = energy_verdict(&r);
    ctx.json("perimeter.json", verdict, &r)?;
    Ok(ctx.finish(verdict, format!("perimeter: P = {} ± {}", r.value, r.error)))
}

fn run_energy(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["set", "method"])?;
    let e = ctx.set("set")?.ok_or_else(|| CliError::Usage("`energy` requires parameter `set`".into()))?;
    let method = match ctx.param_str("method").unwrap_or("fft") {
        "fft" => EnergyMethod::Fft,
        "direct" => EnergyMethod::Direct,
        m => return usage(format!("parameter `method`: expected fft or direct, got `{m}`")),
    };
    let r = interaction_energy(&e, &ctx.kernel, method, &ctx.scheme())?;
    let verdict = energy_verdict(&r);
    ctx.json("energy.json", verdict, &r)?;
    Ok(ctx.finish(verdict, format!("energy: V = {} ± {}", r.value, r.error)))
}

fn run_curvature(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["set", "point", "eps0", "directions"])?;
    let e = ctx.set("set")?.ok_or_else(|| CliError::Usage("`curvature` requires parameter `set`".into()))?;
    let x = parse_list("point", ctx.required("point")?)?;
    let defaults = EpsSchedule::default();
    let schedule = EpsSchedule {
        eps0: ctx.f64_or("eps0", defaults.eps0)?,
        directions: ctx.usize_or("directions", defaults.directions)?,
        ..defaults
    };
    let r = curvature(&e, &x, &ctx.kernel, &schedule)?;
    ctx.json("curvature.json", r.converged, &r)?;
    Ok(ctx.finish(r.converged, format!("curvature: H = {} ± {}", r.value, r.error)))
}

/// CSV columns r, perimeter. With three or more radii the JSON also carries
/// the monotonicity, concavity and C¹ verdicts of the curve.
fn run_closedform(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["radii"])?;
    if ctx.kernel.dim() != 1 {
        return Err(Error::Dimension("the closed form is one-dimensional".into()).into());
    }
    let radii = parse_list("radii", ctx.required("radii")?)?;
    let profile = build_profile(&ctx.kernel)?;
    let values = radii
        .iter()
        .map(|r| kperim_core::closedform1d::interval_perimeter(&profile, *r))
        .collect::<kperim_core::Result<Vec<_>>>()?;
    let curve = if radii.len() >= 3 { Some(perimeter_curve_report(&profile, &radii)?) } else { None };
    let verdict = curve.as_ref().map_or(Verdict::Holds, |c| c.verdict());
    let mut csv = format!("{}\nr,perimeter\n", ctx.header());
    for (r, p) in radii.iter().zip(&values) {
        csv.push_str(&format!("{},{}\n", csv_num(*r), csv_num(*p)));
    }
    ctx.csv("closedform.csv", &csv)?;
    let report = json!({
        "provenance": profile.provenance(),
        "g_inf": encode(profile.g_inf()),
        "h_zero": encode(profile.h_zero()),
        "radii": radii.iter().map(|v| encode(*v)).collect::<Vec<_>>(),
        "perimeters": values.iter().map(|v| encode(*v)).collect::<Vec<_>>(),
        "curve": curve,
    });
    ctx.json_value("closedform.json", verdict, report)?;
    let first = values.first().copied().unwrap_or(f64::NAN);
    Ok(ctx.finish(verdict, format!("closedform: P((-r, r)) = {first} at r = {}", radii[0])))
}

fn run_extend(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["function", "boxes", "rho", "p", "certified"])?;
    let u = ctx.function("function")?;
    let boxes = ctx.boxes("boxes")?;
    let rho = ctx.f64_or("rho", 4.0 * u.grid().h())?;
    let domain = BoxDomain::new(u.grid(), &boxes, rho)?;
    let opts = ExtendOptions { p: ctx.f64_or("p", 1.0)?, certified: ctx.bool_or("certified", false)?, scheme: ctx.scheme() };
    let (ext, report) = extend(&u, &domain, &ctx.kernel, &opts)?;
    let verdict = Verdict::from_bool(report.ratio.is_finite());
    ctx.grid_file("extended.grid", &ext)?;
    ctx.json("extend.json", verdict, &report)?;
    Ok(ctx.finish(verdict, format!("extend: norm ratio {}", report.ratio)))
}

fn run_ballcurve(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["radii"])?;
    let radii = parse_list("radii", ctx.required("radii")?)?;
    let c = ball_curve(&ctx.kernel, &radii, ctx.h_or(1.0 / 32.0), &ctx.scheme())?;
    let csv = c.to_csv(&ctx.header());
    ctx.csv("ballcurve.csv", &csv)?;
    ctx.json("ballcurve.json", c.verdict, &c)?;
    Ok(ctx.finish(c.verdict, format!("ballcurve: {} radii, worst violation {}", radii.len(), c.worst_violation)))
}

/// Passes when the optimizer converged; an unconverged run is inconclusive.
fn run_optimize(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["set", "mode", "max_moves", "t0", "cooling", "moves_per_level", "polish"])?;
    let init = match ctx.set("set")? {
        Some(s) => s,
        None => parse_set("set", "ball:0.5", || ctx.grid())?,
    };
    let mode = match ctx.param_str("mode").unwrap_or("greedy") {
        "greedy" => OptimizeMode::Greedy,
        "anneal" => {
            let d = AnnealSchedule::default();
            OptimizeMode::Anneal(AnnealSchedule {
                t0: ctx.param_str("t0").map(|v| parse_f64("t0", v)).transpose()?,
                cooling: ctx.f64_or("cooling", d.cooling)?,
                moves_per_level: ctx.param_str("moves_per_level").map(|_| ctx.usize_or("moves_per_level", 0)).transpose()?,
                polish: ctx.bool_or("polish", d.polish)?,
            })
        }
        m => return usage(format!("parameter `mode`: expected greedy or anneal, got `{m}`")),
    };
    let opts = OptimizeOptions { mode, max_moves: ctx.usize_or("max_moves", 10_000)?, seed: ctx.cfg.seed };
    let r = optimize(&ctx.kernel, &init, init.volume(), &opts, &ctx.scheme())?;
    let verdict = if r.converged { Verdict::Holds } else { Verdict::Inconclusive };
    ctx.grid_file("best.grid", &r.best.indicator())?;
    let csv = r.to_csv(&ctx.header());
    ctx.csv("trace.csv", &csv)?;
    ctx.json("optimize.json", verdict, &r)?;
    Ok(ctx.finish(verdict, format!("optimize: P {} -> {} after {} moves", r.initial_perimeter, r.profile_estimate, r.accepted)))
}

fn run_counterexample(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["delta", "r", "x0"])?;
    let d = ctx.kernel.dim();
    let mut x0 = vec![0.0; d];
    x0[0] = 2.0;
    let setup = TwoBallSetup {
        delta: ctx.f64_or("delta", 1.0)?,
        r: ctx.f64_or("r", 0.25)?,
        x0: ctx.list("x0")?.unwrap_or(x0),
        h: ctx.h_or(1.0 / 128.0),
    };
    let r = two_ball_counterexample(&ctx.kernel, &setup, &ctx.scheme())?;
    let v = r.inequality.verdict;
    ctx.json("counterexample.json", v, &r)?;
    Ok(ctx.finish(
        v,
        format!("counterexample: P(two balls) = {} vs P(ball) = {} (margin {})", r.two_ball_perimeter, r.ball_perimeter, r.margin),
    ))
}

fn run_poincare(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["omega", "p", "mode", "restarts", "sweeps", "max_cells"])?;
    let omega = ctx.set("omega")?.ok_or_else(|| CliError::Usage("`poincare` requires parameter `omega`".into()))?;
    let d = PoincareOptions::default();
    let opts = PoincareOptions {
        p: ctx.f64_or("p", d.p)?,
        mode: match ctx.param_str("mode").unwrap_or("rayleigh-min") {
            "rayleigh-min" => PoincareMode::RayleighMin,
            "remark-bound" => PoincareMode::RemarkBound,
            m => return usage(format!("parameter `mode`: expected rayleigh-min or remark-bound, got `{m}`")),
        },
        seed: ctx.cfg.seed,
        restarts: ctx.usize_or("restarts", d.restarts)?,
        sweeps: ctx.usize_or("sweeps", d.sweeps)?,
        max_cells: ctx.usize_or("max_cells", d.max_cells)?,
    };
    let r = poincare_constant(&omega, &ctx.kernel, &opts, &ctx.scheme())?;
    let v = r.inequality.verdict;
    ctx.grid_file("witness.grid", &r.witness)?;
    ctx.json("poincare.json", v, &r)?;
    Ok(ctx.finish(v, format!("poincare: C = {} (quotient {})", r.inequality.constant, r.quotient)))
}

fn run_sobolev(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["q", "masses", "sample_half_width", "sample_h", "slope_tol"])?;
    let q = parse_f64("q", ctx.required("q")?)?;
    let masses = parse_list("masses", ctx.required("masses")?)?;
    let d = SobolevOptions::default();
    let opts = SobolevOptions {
        h: ctx.h_or(d.h),
        sample_half_width: ctx.f64_or("sample_half_width", d.sample_half_width)?,
        sample_h: ctx.f64_or("sample_h", d.sample_h)?,
        slope_tol: ctx.f64_or("slope_tol", d.slope_tol)?,
        scheme: ctx.scheme(),
    };
    let r = sobolev_assumption_check(&ctx.kernel, q, &masses, &opts)?;
    let v = r.inequality.verdict;
    let csv = r.to_csv(&ctx.header());
    ctx.csv("sobolev.csv", &csv)?;
    ctx.json("sobolev.json", v, &r)?;
    Ok(ctx.finish(v, format!("sobolev-check: q = {q}, end slopes {} / {}", r.slope_small, r.slope_large)))
}

fn run_rel_iso(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["boxes", "q", "count"])?;
    let boxes = ctx.boxes("boxes")?;
    let q = parse_f64("q", ctx.required("q")?)?;
    let count = ctx.usize_or("count", 20)?;
    let r = relative_isoperimetric_suite(&boxes, &ctx.kernel, q, ctx.h_or(1.0 / 32.0), count, ctx.cfg.seed, &ctx.scheme())?;
    ctx.json("rel_iso.json", r.verdict, &r)?;
    Ok(ctx.finish(r.verdict, format!("rel-iso: implied constants in [{}, {}]", r.min_implied, r.max_implied)))
}

/// CSV columns shell, param (interaction radius or exclusion half-width),
/// partial_seminorm.
fn run_probe(mut ctx: Ctx) -> Res<Outcome> {
    ctx.allow(&["function", "p", "levels", "singular_radius"])?;
    let u = ctx.function("function")?;
    let p = ctx.f64_or("p", 1.0)?;
    let schedule = match ctx.param_str("singular_radius") {
        Some(v) => ProbeSchedule::Shrinking { radius: parse_f64("singular_radius", v)?, levels: ctx.usize_or("levels", 20)? },
        None => ProbeSchedule::Expanding { levels: ctx.usize_or("levels", 40)? },
    };
    let c = divergence_probe(&u, &ctx.kernel, p, &schedule)?;
    let v = c.verdict();
    let mut csv = format!("{}\nshell,param,partial_seminorm\n", ctx.header());
    for (i, (a, b)) in c.param.iter().zip(&c.values).enumerate() {
        csv.push_str(&format!("{i},{},{}\n", csv_num(*a), csv_num(*b)));
    }
    ctx.csv("probe.csv", &csv)?;
    let report = json!({
        "schedule": schedule,
        "curve": c,
        "growth_ratio": encode(c.growth_ratio()),
        "tail_change": encode(c.tail_change()),
    });
    ctx.json_value("probe.json", v, report)?;
    Ok(ctx.finish(v, format!("probe: growth ratio {}, tail change {}", c.growth_ratio(), c.tail_change())))
}
