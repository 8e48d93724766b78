//! `gdm`: command-line access to the graph-directed measure engines.
//!
//! Every report is JSON with `"schema": 1`; tables are CSV. Outputs are
//! written atomically, and all randomness comes from `--seed`.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use num_rational::BigRational;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use gdm_core::conditions::{check_a, check_b, check_sb, check_wa, search_box_condition, ConditionSettings};
use gdm_core::config::{build_system, builtin_kinds, load_config, override_initial, SystemConfig};
use gdm_core::derham::{is_ac_with_bernoulli, minkowski_system, singularity_witness, DeRhamSystem};
use gdm_core::dimension::{dim_entropy_exact, dim_entropy_mc, dim_hata, dim_kinney, dim_linear, per_path_csv};
use gdm_core::measure::{distribution_csv, distribution_function, nadic_grid};
use gdm_core::rational::{parse_rational, rat, to_f64};
use gdm_core::singularity::{certify_singular, classify_derham, hellinger_csv, hellinger_test, HellingerSettings, Verdict};
use gdm_core::systems::{DrivenSystem, SystemMeta};
use gdm_core::transfer::{density_csv, dim_fanlau, solve_density, TransferSettings};
use gdm_core::{Error, Result};

use output::{Output, RunManifest};

#[derive(Parser)]
#[command(name = "gdm", version, about = "Graph-directed measures on N-ary trees")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "GDM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in system kinds.
    Systems(SystemsArgs),
    /// Tabulate the distribution function t ↦ μ_y([0, t]).
    Eval(EvalArgs),
    /// Estimate the Hausdorff dimension of μ_y.
    Dim(DimArgs),
    /// Check the orbit conditions A, wA, B and sB.
    Check(CheckArgs),
    /// Compare μ_y with a Bernoulli measure.
    Singularity(SingularityArgs),
}

#[derive(Args)]
struct Common {
    /// Write the main output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a run manifest (parameters and output digests) here.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SystemsArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvalArgs {
    /// System config (JSON).
    #[arg(long)]
    system: PathBuf,
    /// `dyadic:k` for j/2^k, `nadic:k` for j/N^k, or a comma-separated list of rationals.
    #[arg(long, default_value = "dyadic:4")]
    points: String,
    /// Digit budget for points without a finite N-adic expansion.
    #[arg(long, default_value_t = 64)]
    depth: usize,
    /// Initial state override.
    #[arg(long)]
    y: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Mc,
    Exact,
    Closed,
    Kinney,
    Fanlau,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Exact => "exact",
            Method::Closed => "closed",
            Method::Kinney => "kinney",
            Method::Fanlau => "fanlau",
        }
    }
}

#[derive(Args)]
struct DimArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long, value_enum, default_value = "mc")]
    method: Method,
    /// Path length (mc, default 2000) or tree depth (exact, default 12).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 200)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples for the Kinney estimator.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Grid size for the transfer-operator solver.
    #[arg(long, default_value_t = 2049)]
    grid: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Orbit depth for the (wA) check attached to mc reports.
    #[arg(long, default_value_t = 10)]
    depth: usize,
    #[arg(long)]
    y: Option<String>,
    /// CSV of per-path entropy averages (mc).
    #[arg(long)]
    per_path_out: Option<PathBuf>,
    /// CSV of the solved density (fanlau).
    #[arg(long)]
    density_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    system: PathBuf,
    /// Comma-separated subset of A, wA, B, sB.
    #[arg(long, default_value = "A,wA,B,sB")]
    conditions: String,
    #[arg(long)]
    y: Option<String>,
    #[arg(long, default_value_t = 12)]
    depth: usize,
    /// Box radius for B and sB; searched over a default grid when absent.
    #[arg(long)]
    eps0: Option<f64>,
    /// Word length for B and sB; 1, 2 and 3 are tried when absent.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, default_value_t = 1024)]
    chain: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SingularityArgs {
    #[arg(long)]
    system: PathBuf,
    /// Comparison weights `p0,p1,...`; uniform when absent.
    #[arg(long)]
    bernoulli: Option<String>,
    /// Horizon of the Hellinger partial sums.
    #[arg(long = "T", default_value_t = 10_000)]
    horizon: usize,
    #[arg(long, default_value_t = 50)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Longest word tried by the box certifier.
    #[arg(long, default_value_t = 3)]
    max_word: usize,
    #[arg(long)]
    y: Option<String>,
    /// CSV of the partial-sum trajectory.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", json!({"schema": 1, "error": {"code": "threads", "message": e.to_string()}}));
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"schema": 1, "error": {"code": e.code(), "message": e.to_string()}}));
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Systems(a) => cmd_systems(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Dim(a) => cmd_dim(a),
        Command::Check(a) => cmd_check(a),
        Command::Singularity(a) => cmd_singularity(a),
    }
}

fn load_system(path: &Path, y: Option<&str>) -> Result<(SystemConfig, DrivenSystem)> {
    let cfg = load_config(path)?;
    let system = build_system(&cfg)?;
    let system = match y {
        Some(y) => override_initial(&system, y)?,
        None => system,
    };
    Ok((cfg, system))
}

fn report_json(body: Value) -> Vec<u8> {
    let mut v = json!({"schema": 1});
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    let mut bytes = serde_json::to_vec_pretty(&v).expect("reports serialize");
    bytes.push(b'\n');
    bytes
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn cmd_systems(a: SystemsArgs) -> Result<()> {
    let kinds = builtin_kinds();
    let body = report_json(json!({"count": kinds.len(), "kinds": to_value(&kinds)}));
    let manifest = RunManifest::new("systems", None, None, json!({}))?;
    Output::new(a.common.manifest, manifest).main(a.common.out, body).finish()
}

fn parse_points(text: &str, n: usize) -> Result<Vec<BigRational>> {
    let depth = |k: &str| -> Result<u32> {
        let k: u32 = k.parse().map_err(|_| Error::Config(format!("bad grid depth `{k}`")))?;
        if (n as f64).powi(k as i32) > 1e6 {
            return Err(Error::Config("grid above 10^6 points".into()));
        }
        Ok(k)
    };
    if let Some(k) = text.strip_prefix("dyadic:") {
        let k = depth(k)?;
        return Ok((0..=(1i64 << k)).map(|j| rat(j, 1i64 << k)).collect());
    }
    if let Some(k) = text.strip_prefix("nadic:") {
        return Ok(nadic_grid(n, depth(k)? as usize));
    }
    let list = text.strip_prefix("list:").unwrap_or(text);
    let mut pts = list.split(',').map(|s| parse_rational(s.trim())).collect::<Result<Vec<_>>>()?;
    pts.sort();
    Ok(pts)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (cfg, system) = load_system(&a.system, a.y.as_deref())?;
    if matches!(system.meta, SystemMeta::Hata { .. }) {
        return Err(Error::Inapplicable {
            method: "eval".into(),
            reason: "the Hata tree branches are not N-adic intervals".into(),
        });
    }
    let points = parse_points(&a.points, system.alphabet_size())?;
    let rows = distribution_function(&system, &points, a.depth)?;
    let body = distribution_csv(&rows)?;
    let manifest = RunManifest::new(
        "eval",
        Some(&a.system),
        None,
        json!({"config": cfg, "points": a.points, "depth": a.depth, "y": a.y}),
    )?;
    Output::new(a.common.manifest, manifest).main(a.common.out, body).finish()
}

fn derham_of(system: &DrivenSystem) -> Option<Arc<DeRhamSystem>> {
    match &system.meta {
        SystemMeta::DeRham(d) => Some(d.clone()),
        _ => None,
    }
}

fn cmd_dim(a: DimArgs) -> Result<()> {
    let (cfg, system) = load_system(&a.system, a.y.as_deref())?;
    let inapplicable = |reason: &str| Error::Inapplicable { method: a.method.name().into(), reason: reason.into() };
    let mut extra: Vec<(Option<PathBuf>, Vec<u8>, &str)> = Vec::new();
    let report = match a.method {
        Method::Mc => {
            if matches!(system.meta, SystemMeta::Hata { .. }) {
                return Err(inapplicable("the Hata tree has non-uniform contraction ratios; use closed"));
            }
            let (report, avg) = dim_entropy_mc(&system, a.n.unwrap_or(2000), a.paths, a.seed)?;
            let wa = check_wa(&system, &ConditionSettings { depth: a.depth, ..Default::default() })?;
            if a.per_path_out.is_some() {
                extra.push((a.per_path_out.clone(), per_path_csv(&avg.per_path)?, "per_path"));
            }
            report.with_wa(&wa, &system.geometry)
        }
        Method::Exact => {
            if matches!(system.meta, SystemMeta::Hata { .. }) {
                return Err(inapplicable("the Hata tree has non-uniform contraction ratios; use closed"));
            }
            dim_entropy_exact(&system, a.n.unwrap_or(12))?
        }
        Method::Closed => match &system.meta {
            SystemMeta::Linear(w) => dim_linear(w)?,
            SystemMeta::Hata { h_modulus_sq, alpha_modulus_sq } => dim_hata(*h_modulus_sq, *alpha_modulus_sq)?,
            SystemMeta::DeRham(d) => match is_ac_with_bernoulli(d) {
                Some(p) => {
                    let w: Vec<f64> = p.iter().map(to_f64).collect();
                    let mut r = dim_linear(&w)?;
                    r.upper_bound.iter_mut().chain(r.lower_bound.iter_mut()).for_each(|b| {
                        b.provenance = "equivalent Bernoulli measure, s_N(p)/log N".into();
                    });
                    r
                }
                None => return Err(inapplicable("no closed form: not equivalent to a Bernoulli measure")),
            },
            _ => return Err(inapplicable("no closed form for this kind")),
        },
        Method::Kinney => {
            let is_minkowski = derham_of(&system).is_some_and(|d| d.matrices == minkowski_system().matrices);
            if !is_minkowski {
                return Err(inapplicable("the Kinney formula applies to the Minkowski system only"));
            }
            dim_kinney(a.samples, a.seed)?
        }
        Method::Fanlau => {
            let d = derham_of(&system).ok_or_else(|| inapplicable("needs a de Rham system"))?;
            let grid = solve_density(&d, &TransferSettings { m: a.grid, tol: a.tol, ..Default::default() })?;
            if a.density_out.is_some() {
                extra.push((a.density_out.clone(), density_csv(&grid)?, "density"));
            }
            dim_fanlau(&d, &grid)?
        }
    };
    let body = report_json(json!({"system": system.label, "report": to_value(&report)}));
    let manifest = RunManifest::new(
        "dim",
        Some(&a.system),
        Some(a.seed),
        json!({
            "config": cfg, "method": a.method.name(), "n": a.n, "paths": a.paths, "samples": a.samples,
            "grid": a.grid, "tol": a.tol, "depth": a.depth, "y": a.y,
        }),
    )?;
    let mut out = Output::new(a.common.manifest, manifest).main(a.common.out, body);
    for (path, bytes, role) in extra {
        out = out.extra(path, bytes, role);
    }
    out.finish()
}

fn cmd_check(a: CheckArgs) -> Result<()> {
    let (cfg, system) = load_system(&a.system, a.y.as_deref())?;
    let settings = ConditionSettings { depth: a.depth, chain_length: a.chain, ..Default::default() };
    let ls: Vec<usize> = a.l.map(|l| vec![l]).unwrap_or_else(|| vec![1, 2, 3]);
    let mut verdicts = Vec::new();
    for name in a.conditions.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v = match name {
            "A" => check_a(&system, &settings)?,
            "wA" => check_wa(&system, &settings)?,
            "B" | "sB" => {
                let strong = name == "sB";
                match (a.eps0, a.l) {
                    (Some(e), Some(l)) if strong => check_sb(&system, e, l, &settings)?,
                    (Some(e), Some(l)) => check_b(&system, e, l, &settings)?,
                    _ => search_box_condition(&system, strong, a.eps0, &ls, &settings)?,
                }
            }
            other => return Err(Error::Config(format!("unknown condition `{other}` (expected A, wA, B or sB)"))),
        };
        verdicts.push(v);
    }
    let body = report_json(json!({"system": system.label, "verdicts": to_value(&verdicts)}));
    let manifest = RunManifest::new(
        "check",
        Some(&a.system),
        None,
        json!({
            "config": cfg, "conditions": a.conditions, "depth": a.depth, "eps0": a.eps0, "l": a.l,
            "chain": a.chain, "y": a.y,
        }),
    )?;
    Output::new(a.common.manifest, manifest).main(a.common.out, body).finish()
}

fn cmd_singularity(a: SingularityArgs) -> Result<()> {
    let (cfg, system) = load_system(&a.system, a.y.as_deref())?;
    let n = system.alphabet_size();
    let exact_p = match &a.bernoulli {
        Some(s) => s.split(',').map(|x| parse_rational(x.trim())).collect::<Result<Vec<_>>>()?,
        None => vec![rat(1, n as i64); n],
    };
    if exact_p.len() != n {
        return Err(Error::Config(format!("--bernoulli needs {n} weights, found {}", exact_p.len())));
    }
    let p: Vec<f64> = exact_p.iter().map(to_f64).collect();
    let hs = HellingerSettings { horizon: a.horizon, paths: a.paths, seed: a.seed, ..Default::default() };
    let hellinger = hellinger_test(&system, &p, &hs)?;

    let mut verdict = hellinger.verdict;
    let mut derham = Value::Null;
    let mut exact_evidence = Value::Null;
    let mut ac_certified = false;
    if let Some(d) = derham_of(&system) {
        derham = to_value(&classify_derham(&d, &ConditionSettings::default())?);
        if is_ac_with_bernoulli(&d).as_deref() == Some(&exact_p[..]) {
            verdict = Verdict::AcCertified;
            ac_certified = true;
            exact_evidence = json!({"kind": "bernoulli_identity"});
        } else if let Some(w) = singularity_witness(&d, &exact_p)? {
            verdict = Verdict::SingularCertified;
            exact_evidence = to_value(&w);
        }
    }
    let certificate = if ac_certified {
        Value::Null
    } else {
        let c = certify_singular(&system, &p, a.max_word, &ConditionSettings::default())?;
        if c.verdict == Verdict::SingularCertified {
            verdict = Verdict::SingularCertified;
        }
        to_value(&c)
    };
    let body = report_json(json!({
        "system": system.label,
        "comparison": p,
        "verdict": verdict,
        "exact_evidence": exact_evidence,
        "certificate": certificate,
        "hellinger": to_value(&hellinger),
        "derham": derham,
    }));
    let manifest = RunManifest::new(
        "singularity",
        Some(&a.system),
        Some(a.seed),
        json!({
            "config": cfg, "bernoulli": a.bernoulli, "T": a.horizon, "paths": a.paths, "max_word": a.max_word,
            "y": a.y,
        }),
    )?;
    let mut out = Output::new(a.common.manifest, manifest).main(a.common.out, body);
    if a.csv_out.is_some() {
        out = out.extra(a.csv_out, hellinger_csv(&hellinger)?, "partial_sums");
    }
    out.finish()
}
