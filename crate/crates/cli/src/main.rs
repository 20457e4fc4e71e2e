use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use rigidity_core::closure::{
    derive_to_epsilon, verify_certificate, BarOracle, Bound, Certificate, ClosureContext, ClosureError, DeriveOptions,
    Regularity, Scalar, ScalarError, Strategy, DEFAULT_STEP_BUDGET, FRAC_SEARCH_LIMIT,
};
use rigidity_core::counterexamples::{
    audit_distance, build_example, example4_demo, ExampleId, ExampleParams, DEFAULT_HEX_DIAMETER,
};
use rigidity_core::intersect::{classify_intersection, intersect_predicate, intersect_witness, witness_hypothesis, WITNESS_TOL};
use rigidity_core::lens::{lens_profile, rbar, DEFAULT_LENS_BUDGET};
use rigidity_core::manifold::{GeometryError, Model, Point};
use rigidity_core::suite::verify_suite;

const SCHEMA: &str = "rigidity-lab/v1";

const EXIT_RUNTIME: u8 = 1;
const EXIT_PRECONDITION: u8 = 2;
const EXIT_REFUTED: u8 = 3;
const EXIT_USAGE: u8 = 64;

const AFTER_HELP: &str = "\
Exit codes: 0 success, 1 numerical or budget failure, 2 precondition error,
3 refuted verification, 64 usage error.

Models: e<n>, s<n>[:r=<radius>], h<n>[:k=<curvature>], t<n> (unit flat torus).
Scalars: p/q, decimals (1e-6), sqrt<k>, pi, and sums/products such as 5*sqrt2-7 or sqrt2/8.";

#[derive(Parser)]
#[command(name = "rigidity-lab", version, about = "Sphere intersections, lens diameters and preserved-distance closure", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Intersection predicate and constructive witness for two metric spheres.
    Intersect(PairArgs),
    /// Empty / single point / continuum classification (radii below conv).
    Classify(PairArgs),
    /// Lens diameter g(t) along a geodesic. CSV columns: t,g_estimate,error_bound.
    LensProfile(ProfileArgs),
    /// Bracket of the center distance at which the lens diameter equals r.
    Rbar(RbarArgs),
    /// Derive and verify certificates of small preserved distances.
    #[command(subcommand)]
    Closure(ClosureCommand),
    /// Audits of the example maps.
    #[command(subcommand)]
    Counterexample(CounterexampleCommand),
    /// Pass/fail table of the invariant suites for one model.
    VerifySuite(SuiteArgs),
}

#[derive(Args, Serialize)]
struct PairArgs {
    #[arg(long, default_value = "e2")]
    model: String,
    /// First center (ambient coordinates, comma separated); default: the model origin.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x1: Option<Vec<f64>>,
    /// Second center; alternatively give --distance.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "distance")]
    x2: Option<Vec<f64>>,
    /// Place the second center at this distance from the first along the reference direction.
    #[arg(long)]
    distance: Option<f64>,
    #[arg(long)]
    r1: f64,
    #[arg(long)]
    r2: f64,
    #[arg(long, default_value_t = WITNESS_TOL)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ProfileFormat {
    Json,
    Csv,
    Svg,
}

#[derive(Args, Serialize)]
struct ProfileArgs {
    #[arg(long, default_value = "s2")]
    model: String,
    /// Ball radius; default 0.6 conv (1 when conv is infinite).
    #[arg(long)]
    r: Option<f64>,
    /// Interior sample count (t = 0 and t = 2r are always added).
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_LENS_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ProfileFormat::Json)]
    format: ProfileFormat,
}

#[derive(Args, Serialize)]
struct RbarArgs {
    #[arg(long, default_value = "e2")]
    model: String,
    #[arg(long)]
    r: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_LENS_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ClosureCommand {
    /// Derive a certificate for a preserved distance below eps.
    Derive(DeriveArgs),
    /// Replay a certificate (or the JSON printed by derive).
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RegularityArg {
    Surjective,
    Continuous,
}

#[derive(Args, Serialize)]
struct DeriveArgs {
    /// Seed distances, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<String>,
    /// Model supplying conv, inj and the r-bar oracle; --conv/--inj override.
    #[arg(long)]
    model: Option<String>,
    /// Convexity radius (scalar or inf); default from --model, else inf.
    #[arg(long)]
    conv: Option<String>,
    /// Injectivity radius; default from --model, else 2 conv.
    #[arg(long)]
    inj: Option<String>,
    /// A, B, C or exhaustive.
    #[arg(long, default_value = "A")]
    strategy: String,
    #[arg(long)]
    eps: String,
    /// Every geodesic is closed of length one (enables FRAC).
    #[arg(long)]
    periodic: bool,
    #[arg(long, value_enum, default_value_t = RegularityArg::Surjective)]
    regularity: RegularityArg,
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = FRAC_SEARCH_LIMIT)]
    frac_limit: u64,
    /// Also write the bare certificate to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    certificate: PathBuf,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CounterexampleCommand {
    /// Audit one example map (ex1, ex2, ex3) or run the ex4 grid.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ReportFormat {
    Json,
}

#[derive(Args, Serialize)]
struct RunArgs {
    /// ex1, ex2, ex3 or ex4.
    #[arg(long)]
    id: String,
    /// Distance to audit; default 1/2 (ex1), pi/2 (ex2), 1 (ex3).
    #[arg(long)]
    r: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_HEX_DIAMETER)]
    hex_diameter: f64,
    /// Grid size of ex4.
    #[arg(long, default_value_t = 10)]
    grid: usize,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    report: ReportFormat,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SuiteFormat {
    Table,
    Json,
}

#[derive(Args, Serialize)]
struct SuiteArgs {
    #[arg(long, default_value = "s2")]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SuiteFormat::Table)]
    format: SuiteFormat,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
    /// Structured output still worth printing (partial certificates).
    output: Option<Value>,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
            output: None,
        }
    }
}

impl From<GeometryError> for Failure {
    fn from(e: GeometryError) -> Self {
        let code = match e {
            GeometryError::Convergence { .. } | GeometryError::Diagnostics(_) | GeometryError::Internal(_) => EXIT_RUNTIME,
            _ => EXIT_PRECONDITION,
        };
        Failure {
            code,
            message: e.to_string(),
            output: None,
        }
    }
}

impl From<ScalarError> for Failure {
    fn from(e: ScalarError) -> Self {
        let code = match e {
            ScalarError::Parse { .. } => EXIT_USAGE,
            ScalarError::Undecided { .. } => EXIT_RUNTIME,
            _ => EXIT_PRECONDITION,
        };
        Failure {
            code,
            message: e.to_string(),
            output: None,
        }
    }
}

impl From<ClosureError> for Failure {
    fn from(e: ClosureError) -> Self {
        match e {
            ClosureError::Scalar(s) => s.into(),
            ClosureError::Geometry(g) => g.into(),
            other => Failure {
                code: match other {
                    ClosureError::Context(_) | ClosureError::Strategy(_) => EXIT_PRECONDITION,
                    _ => EXIT_RUNTIME,
                },
                message: other.to_string(),
                output: None,
            },
        }
    }
}

type Outcome = Result<Output, Failure>;

enum Output {
    Json { result: Value, code: u8 },
    Text { text: String, code: u8 },
}

fn parse_model(id: &str) -> Result<Model, Failure> {
    id.parse().map_err(|e: GeometryError| Failure::usage(e.to_string()))
}

fn parse_scalar(s: &str) -> Result<Scalar, Failure> {
    s.parse().map_err(|e: ScalarError| Failure::usage(e.to_string()))
}

fn parse_bound(s: &str) -> Result<Bound, Failure> {
    s.parse().map_err(|e: ScalarError| Failure::usage(e.to_string()))
}

fn centers(m: &Model, a: &PairArgs) -> Result<(Point, Point), Failure> {
    let x1 = match &a.x1 {
        Some(c) => m.point(c.clone())?,
        None => m.origin(),
    };
    let x2 = match (&a.x2, a.distance) {
        (Some(c), _) => m.point(c.clone())?,
        (None, Some(t)) => {
            let dir = m.reference_direction(&x1)?;
            m.exp_map(&x1, &dir, t)?
        }
        (None, None) => return Err(Failure::usage("give --x2 or --distance")),
    };
    Ok((x1, x2))
}

fn intersect(a: &PairArgs) -> Outcome {
    let m = parse_model(&a.model)?;
    let (x1, x2) = centers(&m, a)?;
    let d = m.distance(&x1, &x2)?;
    let predicate = intersect_predicate(&m, &x1, a.r1, &x2, a.r2);
    let witness = intersect_witness(&m, &x1, a.r1, &x2, a.r2, a.tol)?;
    let residuals = match &witness {
        Some(z) => Some([(m.distance(&x1, z)? - a.r1).abs(), (m.distance(&x2, z)? - a.r2).abs()]),
        None => None,
    };
    Ok(Output::Json {
        result: json!({
            "x1": x1,
            "x2": x2,
            "center_distance": d,
            "predicate": predicate.as_ref().ok(),
            "predicate_error": predicate.as_ref().err().map(|e| e.to_string()),
            "hypothesis": witness_hypothesis(&m, a.r1, a.r2),
            "witness": witness,
            "residuals": residuals,
        }),
        code: 0,
    })
}

fn classify(a: &PairArgs) -> Outcome {
    let m = parse_model(&a.model)?;
    let (x1, x2) = centers(&m, a)?;
    let class = classify_intersection(&m, &x1, a.r1, &x2, a.r2)?;
    Ok(Output::Json {
        result: json!({
            "center_distance": m.distance(&x1, &x2)?,
            "classification": class.name(),
            "detail": class,
        }),
        code: 0,
    })
}

fn profile(a: &ProfileArgs, config: &Value) -> Outcome {
    let m = parse_model(&a.model)?;
    let r = a.r.unwrap_or_else(|| m.conv().finite().map_or(1.0, |c| 0.6 * c));
    let p = lens_profile(&m, r, a.samples, a.budget, a.seed)?;
    let echo = serde_json::to_string(config).expect("config is serializable");
    match a.format {
        ProfileFormat::Json => Ok(Output::Json {
            result: json!({
                "r": r,
                "profile": p,
                "violations": p.violations(),
            }),
            code: 0,
        }),
        ProfileFormat::Csv => Ok(Output::Text {
            text: format!("# {SCHEMA} {echo}\n{}", p.to_csv()),
            code: 0,
        }),
        ProfileFormat::Svg => {
            let svg = p.to_svg();
            let comment = format!("<!-- {SCHEMA} {} -->\n", echo.replace("--", "- -"));
            let text = match svg.find("?>") {
                Some(i) => format!("{}\n{comment}{}", &svg[..i + 2], svg[i + 2..].trim_start()),
                None => format!("{comment}{svg}"),
            };
            Ok(Output::Text { text, code: 0 })
        }
    }
}

fn rbar_cmd(a: &RbarArgs) -> Outcome {
    let m = parse_model(&a.model)?;
    let res = rbar(&m, a.r, a.tol, a.budget, a.seed)?;
    Ok(Output::Json {
        result: json!({
            "interval": [res.lo, res.hi],
            "width": res.width(),
            "iterations": res.iterations,
            "ratio_to_r": [res.lo / a.r, res.hi / a.r],
        }),
        code: 0,
    })
}

fn closure_context(a: &DeriveArgs) -> Result<ClosureContext, Failure> {
    let regularity = match a.regularity {
        RegularityArg::Surjective => Regularity::Surjective,
        RegularityArg::Continuous => Regularity::Continuous,
    };
    let mut ctx = match &a.model {
        Some(id) => ClosureContext::for_model(&parse_model(id)?, regularity),
        None => ClosureContext::new(Bound::Infinite, Bound::Infinite, regularity),
    };
    if let Some(c) = &a.conv {
        ctx.conv = parse_bound(c)?;
        if a.inj.is_none() {
            ctx.inj = ctx.conv.scale(&Scalar::integer(2))?;
        }
    }
    if let Some(i) = &a.inj {
        ctx.inj = parse_bound(i)?;
    }
    ctx.periodic_period_one |= a.periodic;
    if ctx.two_point_homogeneous && ctx.bar_oracle.is_none() {
        ctx.bar_oracle = a.model.as_deref().map(parse_model).transpose()?.map(BarOracle::new);
    }
    Ok(ctx)
}

fn derive(a: &DeriveArgs) -> Outcome {
    let seeds = a.seeds.iter().map(|s| parse_scalar(s)).collect::<Result<Vec<_>, _>>()?;
    let eps = parse_scalar(&a.eps)?;
    let strategy: Strategy = a.strategy.parse().map_err(Failure::usage)?;
    let ctx = closure_context(a)?;
    let options = DeriveOptions {
        strategy,
        budget: a.budget,
        frac_search_limit: a.frac_limit,
    };
    match derive_to_epsilon(&seeds, &ctx, &eps, options) {
        Ok(cert) => {
            if let Some(path) = &a.out {
                let text = serde_json::to_string_pretty(&cert).expect("certificate is serializable");
                fs::write(path, text + "\n")
                    .map_err(|e| Failure { code: EXIT_RUNTIME, message: format!("{}: {e}", path.display()), output: None })?;
            }
            Ok(Output::Json {
                result: json!({
                    "outcome": "certificate",
                    "steps": cert.steps.len(),
                    "achieved_approx": cert.achieved.approx(),
                    "certificate": cert,
                }),
                code: 0,
            })
        }
        Err(ClosureError::Rational(report)) => Ok(Output::Json {
            result: json!({ "outcome": "rational", "report": report }),
            code: 0,
        }),
        Err(e @ (ClosureError::Budget { .. } | ClosureError::Stalled { .. })) => {
            let outcome = if matches!(e, ClosureError::Budget { .. }) { "budget-exhausted" } else { "stalled" };
            let output = json!({ "outcome": outcome, "reason": e.to_string(), "partial": e.partial() });
            Err(Failure {
                code: EXIT_RUNTIME,
                message: e.to_string(),
                output: Some(output),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn verify(a: &VerifyArgs) -> Outcome {
    let text = fs::read_to_string(&a.certificate).map_err(|e| Failure {
        code: EXIT_PRECONDITION,
        message: format!("{}: {e}", a.certificate.display()),
        output: None,
    })?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure { code: EXIT_PRECONDITION, message: format!("not JSON: {e}"), output: None })?;
    let body = value.pointer("/result/certificate").cloned().unwrap_or(value);
    let cert: Certificate = serde_json::from_value(body)
        .map_err(|e| Failure { code: EXIT_PRECONDITION, message: format!("not a certificate: {e}"), output: None })?;
    let report = verify_certificate(&cert, &cert.context);
    let code = if report.valid { 0 } else { EXIT_REFUTED };
    Ok(Output::Json {
        result: json!({ "valid": report.valid, "report": report }),
        code,
    })
}

fn counterexample(a: &RunArgs) -> Outcome {
    if a.id == "ex4" {
        let rep = example4_demo(a.grid)?;
        return Ok(Output::Json {
            result: serde_json::to_value(rep).expect("report is serializable"),
            code: 0,
        });
    }
    let id: ExampleId = a.id.parse().map_err(Failure::usage)?;
    let (params, default_r) = match id {
        ExampleId::Ex1 => (ExampleParams::None, "1/2"),
        ExampleId::Ex2 => (ExampleParams::None, "pi/2"),
        ExampleId::Ex3 => (ExampleParams::HexDiameter(a.hex_diameter), "1"),
    };
    let map = build_example(id, params)?;
    let r = parse_scalar(a.r.as_deref().unwrap_or(default_r))?;
    let report = audit_distance(&map, &r, a.pairs, a.seed)?;
    Ok(Output::Json {
        result: json!({ "consistent": report.consistent(), "audit": report }),
        code: 0,
    })
}

fn suite(a: &SuiteArgs) -> Outcome {
    let m = parse_model(&a.model)?;
    let results = verify_suite(&m, a.seed)?;
    let code = if results.iter().all(|r| r.passed) { 0 } else { EXIT_REFUTED };
    match a.format {
        SuiteFormat::Json => Ok(Output::Json {
            result: json!({ "model": m.id(), "suites": results }),
            code,
        }),
        SuiteFormat::Table => {
            let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
            let mut text = format!("verify-suite {} (seed {})\n", m.id(), a.seed);
            for r in &results {
                let mark = if r.passed { "PASS" } else { "FAIL" };
                text += &format!("{mark}  {:width$}  {}\n", r.name, r.detail);
            }
            let passed = results.iter().filter(|r| r.passed).count();
            text += &format!("{passed}/{} suites passed\n", results.len());
            Ok(Output::Text { text, code })
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Intersect(_) => "intersect",
        Command::Classify(_) => "classify",
        Command::LensProfile(_) => "lens-profile",
        Command::Rbar(_) => "rbar",
        Command::Closure(ClosureCommand::Derive(_)) => "closure derive",
        Command::Closure(ClosureCommand::Verify(_)) => "closure verify",
        Command::Counterexample(_) => "counterexample run",
        Command::VerifySuite(_) => "verify-suite",
    }
}

fn envelope(command: &str, config: &Value, result: Value) -> Value {
    json!({ "schema": SCHEMA, "command": command, "config": config, "result": result })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let name = command_name(&cli.command);
    let config = serde_json::to_value(&cli.command).expect("arguments are serializable");
    // The echoed config is the argument struct without its enum wrapper.
    let config = config.as_object().and_then(|o| o.values().next().cloned()).unwrap_or(config);
    let config = match config.as_object().filter(|o| o.len() == 1 && name.starts_with("closure") || name.starts_with("counterexample")) {
        Some(o) => o.values().next().cloned().unwrap_or(Value::Null),
        None => config,
    };
    let outcome = match &cli.command {
        Command::Intersect(a) => intersect(a),
        Command::Classify(a) => classify(a),
        Command::LensProfile(a) => profile(a, &config),
        Command::Rbar(a) => rbar_cmd(a),
        Command::Closure(ClosureCommand::Derive(a)) => derive(a),
        Command::Closure(ClosureCommand::Verify(a)) => verify(a),
        Command::Counterexample(CounterexampleCommand::Run(a)) => counterexample(a),
        Command::VerifySuite(a) => suite(a),
    };
    let mut stdout = std::io::stdout().lock();
    let code = match outcome {
        Ok(Output::Json { result, code }) => {
            let text = serde_json::to_string_pretty(&envelope(name, &config, result)).expect("output is serializable");
            let _ = writeln!(stdout, "{text}");
            code
        }
        Ok(Output::Text { text, code }) => {
            let _ = write!(stdout, "{text}");
            code
        }
        Err(f) => {
            if let Some(out) = f.output {
                let text = serde_json::to_string_pretty(&envelope(name, &config, out)).expect("output is serializable");
                let _ = writeln!(stdout, "{text}");
            }
            eprintln!("error: {}", f.message);
            f.code
        }
    };
    ExitCode::from(code)
}
