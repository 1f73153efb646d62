//! Command-line front end. Every parameter can come from a flag or from a
//! TOML file (`--config`); flags win. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | invalid input |
//! | 3 | numerical failure |
//! | 4 | the divergence condition holds, so no blow-up is certified |
//! | 5 | the direction is not a distinguished geodesic |
//!
//! Failures print one JSON line on stderr.

use crate::blowup::{certify_blowup, PlanSearch};
use crate::coeffs::{hill_potential, PeriodicCoefficient};
use crate::error::Error;
use crate::floquet::{self, StabilityScan};
use crate::geometry::{self, MetricChart, PolyPower};
use crate::io::{fmt_f64, to_json, write_atomic};
use crate::pdesim::{self, GridSpec, Termination};
use crate::transform::{build_transform, Holds, ScalarFn, TransformPair, DEFAULT_MARGIN, DEFAULT_S_MAX};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

/// Overrides the worker thread count.
pub const THREADS_ENV: &str = "CYCLIC_WAVEMAP_THREADS";

/// Residual above which a direction is rejected as a distinguished line.
pub const SELF_COHERENCE_LIMIT: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "cyclic-wavemap", version, about = "Floquet charts, distinguished geodesics and blow-up certificates")]
struct Cli {
    /// TOML file with one table per command, e.g. `[stability-chart]`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trace of the monodromy over a λ grid and the instability intervals.
    #[command(allow_negative_numbers = true)]
    StabilityChart(ChartArgs),
    /// Integrate a geodesic of a target metric.
    #[command(allow_negative_numbers = true)]
    Geodesic(GeodesicArgs),
    /// Classify the improper integrals of `exp(∫f)`.
    #[command(allow_negative_numbers = true)]
    Noc(NocArgs),
    /// Distinguished line, transform, certificate and optional simulation.
    #[command(allow_negative_numbers = true)]
    BlowupDemo(DemoArgs),
    /// Evolve the linear, nonlinear or spatially uniform equation.
    #[command(allow_negative_numbers = true)]
    Simulate(SimArgs),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(rename = "stability-chart")]
    stability_chart: Option<ChartArgs>,
    geodesic: Option<GeodesicArgs>,
    noc: Option<NocArgs>,
    #[serde(rename = "blowup-demo")]
    blowup_demo: Option<DemoArgs>,
    simulate: Option<SimArgs>,
}

/// Fill unset flags from the config file.
macro_rules! merge_fields {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            fn merge(self, file: Option<$ty>) -> $ty {
                match file {
                    None => self,
                    Some(f) => $ty { $($field: self.$field.or(f.$field)),* },
                }
            }
        }
    };
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ChartArgs {
    /// `b = √(1 + ε sin 2πt)`.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Constant coefficient `b ≡ c` instead.
    #[arg(long)]
    constant: Option<f64>,
    /// Tabulated coefficient: file of `b(j/N)` samples, one per line.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// CSV chart; the intervals go to `<stem>.intervals.json` beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}
merge_fields!(ChartArgs { epsilon, constant, table, n, lambda_min, lambda_max, grid, tol, out });

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct GeodesicArgs {
    /// `family:key=value,...` (conformal, half-plane, quartic, skew, perturbed, flat).
    #[arg(long)]
    metric: Option<String>,
    /// Starting point, comma separated (default: origin).
    #[arg(long)]
    start: Option<String>,
    /// Initial direction, rescaled to unit speed (default: diagonal).
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}
merge_fields!(GeodesicArgs { metric, start, direction, s_max, tol, out });

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct NocArgs {
    /// Named `f`: example1, example2, example3-u, example3-v, example4, power-tail, zero.
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    /// Derive `f` from a metric and `--direction` instead of `--f`.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}
merge_fields!(NocArgs { f, alpha, ell, m, p, metric, direction, s_max, margin, out });

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct DemoArgs {
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    constant: Option<f64>,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    delta: Option<f64>,
    /// `yes` to run the torus simulation of the certified scenario.
    #[arg(long)]
    simulate: Option<String>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    m_max: Option<u32>,
    /// Decay exponent `S` (default `2n + 1`).
    #[arg(long)]
    s_exp: Option<f64>,
    /// Torus points for the simulation.
    #[arg(long)]
    points: Option<usize>,
    /// Certificate JSON; a simulation adds `<stem>.run.json` and `<stem>.final.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}
merge_fields!(DemoArgs {
    metric, direction, epsilon, constant, table, n, delta, simulate, lambda_min, lambda_max, grid, tol, m_max,
    s_exp, points, out
});

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct SimArgs {
    /// linear, nonlinear or uniform.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    constant: Option<f64>,
    #[arg(long)]
    table: Option<PathBuf>,
    /// Exponent `n` of the damping term.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Time step (default: 0.8 of the CFL limit).
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    snapshots: Option<usize>,
    /// Data `u₀ = u0 + u0-amp·cos(2πk x₁/L)`, `u₁` likewise.
    #[arg(long)]
    u0: Option<f64>,
    #[arg(long)]
    u0_amp: Option<f64>,
    #[arg(long)]
    u1: Option<f64>,
    #[arg(long)]
    u1_amp: Option<f64>,
    #[arg(long)]
    wavenumber: Option<u32>,
    /// Output times for the uniform mode.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}
merge_fields!(SimArgs {
    mode, epsilon, constant, table, n, f, alpha, ell, m, p, dim, length, points, dt, t_end, snapshots, u0, u0_amp,
    u1, u1_amp, wavenumber, samples, tol, out
});

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Lib(Error),
    Holds(String),
    NotDistinguished(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Io(_) => 2,
            Failure::Lib(Error::NotApplicable(_)) => 4,
            Failure::Lib(e) if e.is_validation() => 2,
            Failure::Lib(_) => 3,
            Failure::Holds(_) => 4,
            Failure::NotDistinguished(_) => 5,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Io(_) => "io",
            Failure::Lib(Error::NotApplicable(_)) | Failure::Holds(_) => "no_blowup_certified",
            Failure::Lib(e) if e.is_validation() => "validation",
            Failure::Lib(_) => "numerical",
            Failure::NotDistinguished(_) => "not_distinguished",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Holds(m) | Failure::NotDistinguished(m) => m.clone(),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

type Outcome = std::result::Result<serde_json::Value, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn required<T>(v: Option<T>, name: &str) -> std::result::Result<T, Failure> {
    v.ok_or_else(|| usage(format!("missing required parameter --{name}")))
}

fn write(path: &Path, contents: &str) -> std::result::Result<(), Failure> {
    write_atomic(path, contents.as_bytes()).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn parse_list(s: &str, name: &str) -> std::result::Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| usage(format!("--{name}: cannot parse {x:?} as a number"))))
        .collect()
}

fn coefficient(
    epsilon: Option<f64>,
    constant: Option<f64>,
    table: Option<&Path>,
) -> std::result::Result<PeriodicCoefficient, Failure> {
    match (epsilon, constant, table) {
        (Some(e), None, None) => Ok(PeriodicCoefficient::sqrt_sin(e)?),
        (None, Some(c), None) => Ok(PeriodicCoefficient::constant(c)?),
        (None, None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
            let samples = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.parse::<f64>().map_err(|_| usage(format!("table entry {l:?} is not a number"))))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(PeriodicCoefficient::tabulated(samples)?)
        }
        (None, None, None) => Err(usage("give the coefficient as --epsilon, --constant or --table")),
        _ => Err(usage("--epsilon, --constant and --table are mutually exclusive")),
    }
}

/// `family:key=value,...`.
fn parse_metric(spec: &str) -> std::result::Result<MetricChart, Failure> {
    let (family, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut alpha = None;
    let mut ell = None;
    let mut kappa = None;
    let mut m = None;
    for kv in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("metric parameter {kv:?} is not key=value")))?;
        let x: f64 = v.trim().parse().map_err(|_| usage(format!("metric parameter {kv:?} is not numeric")))?;
        match k.trim() {
            "alpha" => alpha = Some(x),
            "ell" => ell = Some(x),
            "kappa" => kappa = Some(x),
            "m" if x >= 1.0 && x.fract() == 0.0 => m = Some(x as usize),
            "m" => return Err(usage(format!("metric dimension m must be a positive integer (got {v})"))),
            other => return Err(usage(format!("unknown metric parameter {other:?}"))),
        }
    }
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| usage(format!("metric {family} needs {name}=...")));
    let chart = match family {
        "conformal" => MetricChart::conformal(PolyPower::radial(m.unwrap_or(2), need(alpha, "alpha")?)),
        "half-plane" => MetricChart::example2(need(ell, "ell")?),
        "quartic" => MetricChart::example3(need(alpha, "alpha")?),
        "skew" => MetricChart::skew(need(alpha, "alpha")?),
        "perturbed" => MetricChart::diagonal_perturbed(
            PolyPower::radial(m.unwrap_or(2), need(alpha, "alpha")?),
            kappa.unwrap_or(0.5),
        )?,
        "flat" => MetricChart::flat(m.unwrap_or(2)),
        other => return Err(usage(format!("unknown metric family {other:?}"))),
    };
    Ok(chart)
}

fn named_f(
    name: &str,
    alpha: Option<f64>,
    ell: Option<f64>,
    m: Option<usize>,
    p: Option<f64>,
) -> std::result::Result<ScalarFn, Failure> {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| usage(format!("--f {name} needs --{flag}")));
    Ok(match name {
        "example1" => ScalarFn::example1(need(alpha, "alpha")?),
        "example2" => {
            let ell = need(ell, "ell")?;
            if !(ell > 0.0) {
                return Err(usage(format!("--ell must be positive (got {ell})")));
            }
            ScalarFn::example2(ell)
        }
        "example3-u" => ScalarFn::example3_u(need(alpha, "alpha")?),
        "example3-v" => ScalarFn::example3_v(need(alpha, "alpha")?),
        "example4" => {
            let m = m.ok_or_else(|| usage("--f example4 needs --m"))?;
            if m == 0 {
                return Err(usage("--m must be positive"));
            }
            ScalarFn::example4(m, need(alpha, "alpha")?)
        }
        "power-tail" => ScalarFn::power_tail(need(p, "p")?),
        "zero" => ScalarFn::zero(),
        other => return Err(usage(format!("unknown function family {other:?}"))),
    })
}

fn direction_for(chart: &MetricChart, direction: Option<&str>) -> std::result::Result<Vec<f64>, Failure> {
    let a = match direction {
        Some(s) => parse_list(s, "direction")?,
        None => vec![1.0; chart.dim()],
    };
    if a.len() != chart.dim() {
        return Err(usage(format!("direction has {} components, the metric needs {}", a.len(), chart.dim())));
    }
    Ok(a)
}

fn positive(v: f64, name: &str) -> std::result::Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("--{name} must be positive (got {v})")))
    }
}

fn stability_chart(a: ChartArgs) -> Outcome {
    let b = coefficient(a.epsilon, a.constant, a.table.as_deref())?;
    let n = a.n.unwrap_or(3);
    let range = (a.lambda_min.unwrap_or(0.1), a.lambda_max.unwrap_or(60.0));
    let grid = a.grid.unwrap_or(4000);
    let tol = a.tol.unwrap_or(1e-10);
    let out = required(a.out, "out")?;
    let pot = hill_potential(&b, n)?;
    let StabilityScan { rows, intervals } = floquet::scan(&pot, range, grid, tol)?;
    let mut csv = String::from("lambda,trace,abs_trace,class\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(r.lambda),
            fmt_f64(r.trace),
            fmt_f64(r.abs_trace),
            r.class.as_str()
        ));
    }
    let sidecar = sibling(&out, ".intervals.json");
    let meta = json!({
        "coefficient": b.describe(),
        "n": n,
        "lambda_range": [range.0, range.1],
        "grid": grid,
        "tol": tol,
        "intervals": intervals,
    });
    write(&out, &csv)?;
    write(&sidecar, &to_json(&meta))?;
    Ok(json!({"chart": out, "intervals_file": sidecar, "intervals": intervals.len()}))
}

fn geodesic(a: GeodesicArgs) -> Outcome {
    let chart = parse_metric(&required(a.metric, "metric")?)?;
    let dir = direction_for(&chart, a.direction.as_deref())?;
    let start = match a.start.as_deref() {
        Some(s) => parse_list(s, "start")?,
        None => vec![0.0; chart.dim()],
    };
    if start.len() != chart.dim() {
        return Err(usage("start point has the wrong number of components"));
    }
    let s_max = positive(a.s_max.unwrap_or(3.0), "s-max")?;
    let tol = a.tol.unwrap_or(1e-11);
    let out = required(a.out, "out")?;
    let xi = geometry::unit_speed_factor(&chart, &start, &dir)?;
    let v0: Vec<f64> = dir.iter().map(|x| x * xi).collect();
    let path = geometry::geodesic_full(&chart, &start, &v0, s_max, tol)?;
    write(&out, &geometry::path_csv(&path))?;
    Ok(json!({
        "out": out,
        "speed": path.speed,
        "max_speed_drift": path.max_speed_drift,
        "truncated_at": path.truncated_at,
    }))
}

/// The reduced function of a distinguished line, after checking the line.
fn line_f(chart: &MetricChart, a: &[f64]) -> std::result::Result<(ScalarFn, f64), Failure> {
    let f = geometry::line_function(chart, a)?;
    let (lo, hi) = f.domain();
    let range = ((0.9 * lo).max(-3.0), (0.9 * hi).min(3.0));
    let line = geometry::check_self_coherence(chart, a, range, 64)?;
    if line.max_residual > SELF_COHERENCE_LIMIT {
        return Err(Failure::NotDistinguished(format!(
            "direction {a:?} is not a distinguished geodesic (residual {:e} > {SELF_COHERENCE_LIMIT:e})",
            line.max_residual
        )));
    }
    Ok((f, line.max_residual))
}

fn noc(a: NocArgs) -> Outcome {
    let f = match (a.f.as_deref(), a.metric.as_deref()) {
        (Some(name), None) => named_f(name, a.alpha, a.ell, a.m, a.p)?,
        (None, Some(metric)) => {
            let chart = parse_metric(metric)?;
            let dir = direction_for(&chart, a.direction.as_deref())?;
            line_f(&chart, &dir)?.0
        }
        (None, None) => return Err(usage("give either --f or --metric")),
        _ => return Err(usage("--f and --metric are mutually exclusive")),
    };
    let s_max = positive(a.s_max.unwrap_or(DEFAULT_S_MAX), "s-max")?;
    let margin = a.margin.unwrap_or(DEFAULT_MARGIN);
    let tp = build_transform(f.clone(), 1e-12)?;
    let verdict = tp.noc(s_max, margin)?;
    let report = json!({
        "f": f.label(),
        "verdict": verdict.to_json(),
        "a_G": tp.a_g(),
        "b_G": tp.b_g(),
    });
    if let Some(out) = a.out {
        write(&out, &to_json(&report))?;
    }
    Ok(report)
}

fn certify_scan(
    b: &PeriodicCoefficient,
    n: u32,
    range: (f64, f64),
    grid: usize,
    tol: f64,
) -> std::result::Result<Vec<f64>, Failure> {
    let pot = hill_potential(b, n)?;
    let intervals = floquet::scan_instability(&pot, range, grid, tol)?;
    if intervals.is_empty() {
        return Err(Failure::Lib(Error::Exhausted(format!(
            "no instability interval in lambda range ({}, {})",
            range.0, range.1
        ))));
    }
    Ok(intervals.iter().map(|i| i.witness_lambda).collect())
}

fn blowup_demo(a: DemoArgs) -> Outcome {
    let chart = parse_metric(&required(a.metric, "metric")?)?;
    let dir = direction_for(&chart, a.direction.as_deref())?;
    let b = coefficient(a.epsilon, a.constant, a.table.as_deref())?;
    let n = a.n.unwrap_or(3);
    let delta = positive(required(a.delta, "delta")?, "delta")?;
    let simulate = match a.simulate.as_deref().unwrap_or("no") {
        "yes" => true,
        "no" => false,
        other => return Err(usage(format!("--simulate takes yes or no (got {other:?})"))),
    };
    let range = (a.lambda_min.unwrap_or(0.1), a.lambda_max.unwrap_or(60.0));
    let grid = a.grid.unwrap_or(4000);
    let tol = a.tol.unwrap_or(1e-11);
    let points = a.points.unwrap_or(1024);
    let out = required(a.out, "out")?;
    if n == 0 {
        return Err(usage("--n must be positive"));
    }
    let mut search = PlanSearch::new(n, Vec::new());
    if let Some(s) = a.s_exp {
        search.s_exp = s;
    }
    if let Some(m) = a.m_max {
        search.m_max = m;
    }
    search.tol = tol;

    let (f, residual) = line_f(&chart, &dir)?;
    let tp: TransformPair = build_transform(f, 1e-12)?;
    let verdict = tp.noc(DEFAULT_S_MAX, DEFAULT_MARGIN)?;
    match verdict.holds {
        Holds::Yes => {
            return Err(Failure::Holds(
                "both integrals of exp(∫f) diverge along this line; no blow-up certified".into(),
            ))
        }
        Holds::Inconclusive => {
            return Err(Failure::Holds(
                "divergence test inconclusive along this line; no blow-up certified".into(),
            ))
        }
        Holds::No => {}
    }
    search.lambdas = certify_scan(&b, n, range, grid, tol)?;
    let cert = certify_blowup(&search, &tp, &b, n, delta)?;
    let mut doc = cert.to_json();
    doc["direction"] = json!(dir);
    doc["self_coherence_residual"] = json!(residual);
    write(&out, &to_json(&doc))?;
    let mut summary = json!({
        "certificate": out,
        "M": cert.plan.m,
        "lambda": cert.plan.lambda,
        "t_star": cert.t_star,
    });
    if simulate {
        let scenario = pdesim::torus_scenario(&cert, &tp, &b, points)?;
        let run = pdesim::evolve_nonlinear(&b, n, tp.f(), &scenario.grid, &scenario.u0, &scenario.u1, Some(&tp))?;
        let manifest = sibling(&out, ".run.json");
        let last = sibling(&out, ".final.csv");
        write(&manifest, &to_json(&run.manifest()))?;
        write(&last, &pdesim::snapshot_csv(&scenario.grid, run.last()))?;
        summary["termination"] = json!(run.termination);
        summary["t_final"] = json!(run.t_final);
        summary["manifest"] = json!(manifest);
    }
    Ok(summary)
}

fn simulate(a: SimArgs) -> Outcome {
    let mode = required(a.mode, "mode")?;
    let b = coefficient(a.epsilon, a.constant, a.table.as_deref())?;
    let n = a.n.unwrap_or(3);
    let out = required(a.out, "out")?;
    let f = match a.f.as_deref() {
        Some(name) => named_f(name, a.alpha, a.ell, a.m, a.p)?,
        None => ScalarFn::zero(),
    };
    let (c0, a0, c1, a1) = (a.u0.unwrap_or(0.0), a.u0_amp.unwrap_or(0.0), a.u1.unwrap_or(0.0), a.u1_amp.unwrap_or(0.0));
    let t_end = positive(required(a.t_end, "t-end")?, "t-end")?;
    std::fs::create_dir_all(&out).map_err(|e| Failure::Io(format!("cannot create {}: {e}", out.display())))?;
    match mode.as_str() {
        "uniform" => {
            let samples = a.samples.unwrap_or(100);
            let tol = a.tol.unwrap_or(1e-12);
            let run = pdesim::evolve_uniform(&b, n, &f, c0, c1, t_end, samples, tol)?;
            let tp = build_transform(f, 1e-12)?;
            let mut csv = String::from("t,u,u_t,v\n");
            for &(t, u, ut) in &run.samples {
                let v = tp.g(u).unwrap_or(f64::NAN);
                csv.push_str(&format!("{},{},{},{}\n", fmt_f64(t), fmt_f64(u), fmt_f64(ut), fmt_f64(v)));
            }
            let path = out.join("uniform.csv");
            write(&path, &csv)?;
            Ok(json!({"out": path, "truncated_at": run.truncated_at}))
        }
        "linear" | "nonlinear" => {
            let points = a.points.unwrap_or(256);
            let mut grid = GridSpec {
                dim: a.dim.unwrap_or(1),
                length: a.length.unwrap_or(1.0),
                points,
                dt: 1.0,
                t_end,
                snapshots: a.snapshots.unwrap_or(10),
            };
            grid.dt = a.dt.unwrap_or_else(|| 0.8 * grid.cfl_limit(&b));
            let manifest_path = out.join("manifest.json");
            if let Err(e) = grid.validate(&b) {
                if let Error::Cfl { .. } = e {
                    let res = pdesim::SimResult::cfl_violation(grid, &e);
                    write(&manifest_path, &to_json(&res.manifest()))?;
                }
                return Err(e.into());
            }
            let k = a.wavenumber.unwrap_or(1) as f64;
            let y = 2.0 * std::f64::consts::PI * k / grid.length;
            let torus = grid.torus();
            let u0 = torus.sample(|x| c0 + a0 * (y * x[0]).cos());
            let u1 = torus.sample(|x| c1 + a1 * (y * x[0]).cos());
            let res = if mode == "linear" {
                pdesim::evolve_linear(&b, n, &grid, &u0, &u1)?
            } else {
                let tp = build_transform(f.clone(), 1e-12)?;
                pdesim::evolve_nonlinear(&b, n, &f, &grid, &u0, &u1, Some(&tp))?
            };
            for (j, snap) in res.snapshots.iter().enumerate() {
                write(&out.join(format!("snapshot_{j:04}.csv")), &pdesim::snapshot_csv(&grid, snap))?;
            }
            write(&manifest_path, &to_json(&res.manifest()))?;
            Ok(json!({
                "manifest": manifest_path,
                "termination": res.termination,
                "t_final": res.t_final,
                "blowup": res.termination == Termination::BlowupDetected,
            }))
        }
        other => Err(usage(format!("--mode takes linear, nonlinear or uniform (got {other:?})"))),
    }
}

fn configure_threads() -> std::result::Result<(), Failure> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer (got {v:?})")))?;
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    configure_threads()?;
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<ConfigFile>(&text)
                .map_err(|e| usage(format!("config {}: {}", path.display(), e.message())))?
        }
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::StabilityChart(a) => stability_chart(a.merge(file.stability_chart)),
        Command::Geodesic(a) => geodesic(a.merge(file.geodesic)),
        Command::Noc(a) => noc(a.merge(file.noc)),
        Command::BlowupDemo(a) => blowup_demo(a.merge(file.blowup_demo)),
        Command::Simulate(a) => simulate(a.merge(file.simulate)),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Run with the given arguments (including the program name) and return the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = json!({"error": "usage", "code": 2, "message": one_line(&e.to_string())});
            eprintln!("{}", to_json(&err));
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            println!("{}", to_json(&summary));
            0
        }
        Err(f) => {
            let err = json!({"error": f.kind(), "code": f.code(), "message": one_line(&f.message())});
            eprintln!("{}", to_json(&err));
            f.code()
        }
    }
}
