// SPDX-License-Identifier: Apache-2.0

//! The `berkz` command line: argument parsing, dispatch and output.

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use berkz_core::adelic::{archimedean_boundary, dynamical_divisors};
use berkz_core::arith::{format_rational, parse_rational};
use berkz_core::spectrum::{parse_t, QuadraturePlan};
use berkz_core::{
    boundary_norm, build_skeleton, check_no_common_zero, fiber_integral, global_ma_integrate, green_eval,
    integrate_mu, invariance_residual, invariant_metric_sequence, is_interior, ma_at, mu, nondegeneracy_check,
    poly_seminorm, pullback, reduction, residue_class, restrict_to_fiber, total_mass_check, verify_cauchy, Error,
    Form, GlobalConfig, GlobalTropFSMetric, MaConfig, MuQuadratureConfig, NormConfig, NormRegime, OpenSubscheme,
    Place, PolyMap, ProjQ, Reduction, Residue, ResidueClass, SeminormValue, SpectrumPoint, TestFunction, UPoly,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

pub mod codec;

use codec::real;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_UNSUPPORTED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable holding the default prime cutoff.
pub const CUTOFF_ENV: &str = "BERKZ_CUTOFF";

#[derive(Parser, Debug)]
#[command(name = "berkz", version, about = "Metrics and Monge-Ampere measures on the analytic line over Spec Z")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Points of the spectrum of Z and the measure mu.
    #[command(subcommand)]
    Spectrum(SpectrumCmd),
    /// Points of the fibers.
    #[command(subcommand)]
    Fiber(FiberCmd),
    /// Global tropical Fubini-Study metrics.
    #[command(subcommand)]
    Metric(MetricCmd),
    /// Monge-Ampere measures.
    #[command(subcommand)]
    Ma(MaCmd),
    /// Boundary norms and Cauchy sequences of adelic divisors.
    #[command(subcommand)]
    Adelic(AdelicCmd),
    /// Invariant metrics of polynomial endomorphisms.
    #[command(subcommand)]
    Dynamics(DynamicsCmd),
}

#[derive(Args, Debug)]
struct BaseArgs {
    /// `inf` or a prime.
    #[arg(long)]
    place: String,
    /// Branch parameter in [0, 1], as a rational or decimal.
    #[arg(long)]
    t: String,
}

impl BaseArgs {
    fn point(&self) -> CmdResult<SpectrumPoint> {
        Ok(SpectrumPoint::new(self.place.parse()?, parse_t(&self.t)?)?)
    }
}

#[derive(Args, Debug)]
struct CutoffArg {
    /// Primes up to this bound are treated individually.
    #[arg(long, env = CUTOFF_ENV, default_value_t = 10_000)]
    cutoff: u64,
}

#[derive(Args, Debug)]
struct QuadArgs {
    #[command(flatten)]
    cutoff: CutoffArg,
    /// Midpoint nodes per branch (even).
    #[arg(long, default_value_t = 256)]
    nodes: usize,
}

impl QuadArgs {
    fn config(&self) -> MuQuadratureConfig {
        MuQuadratureConfig { cutoff: self.cutoff.cutoff, nodes: self.nodes }
    }
}

#[derive(Args, Debug)]
struct MapArgs {
    /// First component of the endomorphism, a form in X, Y.
    #[arg(long)]
    fx: String,
    /// Second component.
    #[arg(long)]
    fy: String,
}

impl MapArgs {
    fn map(&self) -> CmdResult<PolyMap> {
        Ok(PolyMap::new(Form::parse(&self.fx)?, Form::parse(&self.fy)?)?)
    }
}

#[derive(Args, Debug)]
struct NormArgs {
    /// Radial samples per chart for the Archimedean supremum.
    #[arg(long, default_value_t = 48)]
    radii: usize,
    /// Angular samples (even).
    #[arg(long, default_value_t = 96)]
    angles: usize,
    /// Round sampled suprema up to a multiple of 2^-BITS.
    #[arg(long)]
    dyadic_bits: Option<u32>,
}

impl NormArgs {
    fn config(&self) -> NormConfig {
        NormConfig { radii: self.radii, angles: self.angles, dyadic_bits: self.dyadic_bits, ..NormConfig::default() }
    }
}

#[derive(Subcommand, Debug)]
enum SpectrumCmd {
    /// Evaluate the seminorm of an integer at a point.
    Eval {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long, allow_hyphen_values = true)]
        n: String,
    },
    /// Residue field class of a point.
    Class {
        #[command(flatten)]
        base: BaseArgs,
    },
    /// Measure of a branch set.
    Mu {
        /// BranchSet JSON file.
        #[arg(long)]
        set: String,
        #[command(flatten)]
        cutoff: CutoffArg,
    },
    /// Integrate a built-in function against mu.
    Integrate {
        /// `one`, `t`, `eps`, `indicator:PLACE` or `t-on:PLACE`.
        #[arg(long)]
        expr: String,
        #[command(flatten)]
        quad: QuadArgs,
    },
}

#[derive(Subcommand, Debug)]
enum FiberCmd {
    /// Seminorm of a polynomial in T at a point.
    Seminorm {
        #[command(flatten)]
        base: BaseArgs,
        /// `gauss`, a rational, `inf`, `disc:CENTER:RADIUS_VAL`, `z:RE:IM` or JSON.
        #[arg(long)]
        point: String,
        #[arg(long)]
        poly: String,
    },
    /// Reduction of a point on the model and interiority in an open subscheme.
    Reduce {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long)]
        point: String,
        /// Comma-separated forms removed from the model.
        #[arg(long, value_delimiter = ',')]
        remove_forms: Vec<String>,
        /// Comma-separated primes whose fibers are removed.
        #[arg(long, value_delimiter = ',')]
        remove_primes: Vec<u64>,
    },
    /// Skeleton spanned by the Gauss point and marked rational points.
    Skeleton {
        #[command(flatten)]
        base: BaseArgs,
        /// Comma-separated rationals or `inf`.
        #[arg(long, value_delimiter = ',')]
        marked: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
enum MetricCmd {
    /// Metric potential, or Green function with `--green`, at a point.
    Eval {
        /// Metric JSON file; with `--green` it may carry a `reference` divisor.
        #[arg(long)]
        metric: String,
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long)]
        point: String,
        #[arg(long)]
        green: bool,
    },
    /// Search the sections for common zeros on P^1_Z.
    Check {
        #[arg(long)]
        metric: String,
    },
    /// Pull back along an endomorphism, normalized to the same degree.
    Pullback {
        #[arg(long)]
        metric: String,
        #[command(flatten)]
        map: MapArgs,
    },
}

#[derive(Subcommand, Debug)]
enum MaCmd {
    /// Monge-Ampere measure on one fiber.
    Fiber {
        #[arg(long)]
        metric: String,
        #[command(flatten)]
        base: BaseArgs,
        /// Archimedean grid cells per unit length (power of two).
        #[arg(long, default_value_t = 256)]
        resolution: usize,
    },
    /// Total masses on sample fibers.
    Masscheck {
        #[arg(long)]
        metric: String,
        /// Comma-separated `PLACE:T` pairs.
        #[arg(long, value_delimiter = ',', default_value = "2:1/2,3:1/3,7:9/10,inf:1")]
        points: Vec<String>,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        /// Allowed deviation on Archimedean fibers.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Mass over the trivial point of the spectrum.
    Nondegenerate {
        #[arg(long)]
        metric: String,
    },
    /// Integral of a test function against the global measure.
    Global {
        #[arg(long)]
        metric: String,
        /// A constant, `green:FILE` or `boundary:FILE`.
        #[arg(long, allow_hyphen_values = true)]
        f: String,
        /// Cap applied to Green-function test functions.
        #[arg(long, default_value_t = 1.0)]
        cap: f64,
        #[command(flatten)]
        quad: QuadArgs,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        /// With `--format csv`, per-node fiber integrals on these branches.
        #[arg(long, value_delimiter = ',', default_value = "inf,2,3,5")]
        profile_places: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
enum AdelicCmd {
    /// Boundary norm of a model adelic divisor.
    Norm {
        /// Divisor JSON file.
        #[arg(long)]
        divisor: String,
        /// Boundary divisor JSON file.
        #[arg(long)]
        boundary: String,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Cauchy witness for a sequence of divisors.
    Cauchy {
        /// JSON array of divisors; alternatively use `--fx/--fy/--steps`.
        #[arg(long)]
        sequence: Option<String>,
        #[arg(long, requires = "fy")]
        fx: Option<String>,
        #[arg(long, requires = "fx")]
        fy: Option<String>,
        #[arg(long, default_value_t = 6)]
        steps: usize,
        /// Boundary divisor JSON file; defaults to the fiber at infinity.
        #[arg(long)]
        boundary: Option<String>,
        #[arg(long, default_value_t = 0.6)]
        rate: f64,
        #[command(flatten)]
        norm: NormArgs,
    },
}

#[derive(Subcommand, Debug)]
enum DynamicsCmd {
    /// Successive differences of the invariant metric sequence.
    Iterate {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 512)]
        degree_cap: u64,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Failure of a metric to be invariant under an endomorphism.
    Residual {
        #[command(flatten)]
        map: MapArgs,
        /// Metric JSON file; defaults to the `--steps`-th iterate.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(long, default_value_t = 512)]
        degree_cap: u64,
        #[command(flatten)]
        norm: NormArgs,
    },
}

/// A failed command with its exit code.
#[derive(Debug)]
struct CmdError {
    code: i32,
    message: String,
}

impl From<Error> for CmdError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Unsupported(_) => EXIT_UNSUPPORTED,
            Error::Input(_) | Error::WrongFiber(_) | Error::Evaluation(_) => EXIT_INPUT,
        };
        CmdError { code, message: e.to_string() }
    }
}

fn input_error(msg: impl Into<String>) -> CmdError {
    CmdError { code: EXIT_INPUT, message: msg.into() }
}

type CmdResult<T> = std::result::Result<T, CmdError>;

/// Command output: a JSON document and, for tabular results, CSV rows.
struct Output {
    json: Value,
    table: Option<Table>,
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Output {
    fn json(json: Value) -> Self {
        Output { json, table: None }
    }
}

fn cell(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(_) | Value::Bool(_) => Some(v.to_string()),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

fn render(out: &Output, format: Format) -> CmdResult<String> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&out.json).expect("JSON values serialize");
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| input_error(format!("CSV output failed: {e}"));
            match &out.table {
                Some(t) => {
                    w.write_record(&t.header).map_err(csv_err)?;
                    for r in &t.rows {
                        w.write_record(r).map_err(csv_err)?;
                    }
                }
                None => {
                    let obj = out.json.as_object().ok_or_else(|| input_error("no CSV form for this output"))?;
                    let values: Option<Vec<String>> = obj.values().map(cell).collect();
                    let values = values.ok_or_else(|| input_error("no CSV form for this output; use --format json"))?;
                    w.write_record(obj.keys()).map_err(csv_err)?;
                    w.write_record(values).map_err(csv_err)?;
                }
            }
            let bytes = w.into_inner().map_err(|e| input_error(format!("CSV output failed: {e}")))?;
            Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields is UTF-8"))
        }
    }
}

fn read_json(path: &str) -> CmdResult<Value> {
    let text = std::fs::read_to_string(Path::new(path)).map_err(|e| input_error(format!("cannot read {path}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| input_error(format!("{path} is not valid JSON: {e}")))
}

fn read_metric(path: &str) -> CmdResult<GlobalTropFSMetric> {
    Ok(codec::parse_metric(&read_json(path)?)?)
}

fn parse_integer(s: &str) -> CmdResult<berkz_core::Q> {
    let q = parse_rational(s)?;
    if !q.is_integer() {
        return Err(input_error(format!("{s:?} is not an integer")));
    }
    Ok(q)
}

fn parse_sample_point(s: &str) -> CmdResult<SpectrumPoint> {
    let (pl, t) = s.split_once(':').ok_or_else(|| input_error(format!("expected PLACE:T, found {s:?}")))?;
    Ok(SpectrumPoint::new(pl.parse()?, parse_t(t)?)?)
}

fn spectrum(cmd: &SpectrumCmd) -> CmdResult<Output> {
    match cmd {
        SpectrumCmd::Eval { base, n } => {
            let x = base.point()?;
            let n = parse_integer(n)?;
            Ok(Output::json(json!({"value": real(x.seminorm(n.numer()))})))
        }
        SpectrumCmd::Class { base } => {
            let x = base.point()?;
            let mut obj = Map::new();
            match residue_class(&x) {
                ResidueClass::TrivialQ => {
                    obj.insert("class".into(), json!("trivial_q"));
                }
                ResidueClass::ArchimedeanReal { eps } => {
                    obj.insert("class".into(), json!("archimedean_real"));
                    obj.insert("eps".into(), real(eps));
                }
                ResidueClass::PAdic { p, eps } => {
                    obj.insert("class".into(), json!("p_adic"));
                    obj.insert("p".into(), json!(p));
                    obj.insert("eps".into(), real(eps));
                }
                ResidueClass::TrivialFp { p } => {
                    obj.insert("class".into(), json!("trivial_fp"));
                    obj.insert("p".into(), json!(p));
                }
            }
            obj.insert("zariski_dense".into(), json!(x.is_zariski_dense()));
            Ok(Output::json(Value::Object(obj)))
        }
        SpectrumCmd::Mu { set, cutoff } => {
            let set = codec::parse_branch_set(&read_json(set)?)?;
            let e = mu(&set, cutoff.cutoff)?;
            Ok(Output::json(json!({
                "value": real(e.mid),
                "radius": real(e.radius),
                "lo": real(e.lo()),
                "hi": real(e.hi()),
            })))
        }
        SpectrumCmd::Integrate { expr, quad } => {
            let h = builtin(expr)?;
            let est = integrate_mu(h, quad.config())?;
            Ok(Output::json(json!({
                "value": real(est.value),
                "tail_err": real(est.tail_err),
                "quad_err": real(est.quad_err),
            })))
        }
    }
}

type Builtin = Box<dyn Fn(&SpectrumPoint) -> f64 + Sync>;

fn builtin(expr: &str) -> CmdResult<Builtin> {
    let expr = expr.trim();
    if let Some(pl) = expr.strip_prefix("indicator:") {
        let pl: Place = pl.parse()?;
        return Ok(Box::new(move |x| if x.place() == pl && !x.is_trivial() { 1.0 } else { 0.0 }));
    }
    if let Some(pl) = expr.strip_prefix("t-on:") {
        let pl: Place = pl.parse()?;
        return Ok(Box::new(move |x| if x.place() == pl { x.t() } else { 0.0 }));
    }
    match expr {
        "one" => Ok(Box::new(|_| 1.0)),
        "t" => Ok(Box::new(|x| x.t())),
        "eps" => Ok(Box::new(|x| x.epsilon())),
        _ => Err(input_error(format!("unknown built-in {expr:?}; expected one, t, eps, indicator:P or t-on:P"))),
    }
}

fn reduction_json(r: &Reduction) -> Value {
    let residue = |res: &Residue| match res {
        Residue::Finite(a) => json!(a),
        Residue::Infinity => json!("inf"),
    };
    match r {
        Reduction::GenericFiber => json!({"kind": "generic_fiber"}),
        Reduction::RationalPoint(a) => json!({"kind": "rational_point", "coord": codec::proj(a)}),
        Reduction::GenericOfSpecialFiber(p) => json!({"kind": "generic_of_special_fiber", "p": p}),
        Reduction::SpecialPoint(p, res) => json!({"kind": "special_point", "p": p, "residue": residue(res)}),
    }
}

fn fiber(cmd: &FiberCmd) -> CmdResult<Output> {
    match cmd {
        FiberCmd::Seminorm { base, point, poly } => {
            let x = codec::parse_point_spec(base.point()?, point)?;
            let f = UPoly::parse(poly)?;
            let v = poly_seminorm(&x, &f)?;
            let mut obj = Map::new();
            obj.insert("value".into(), real(v.value()));
            obj.insert("log_value".into(), real(v.ln()));
            if let SeminormValue::NonArch { val, unit } = &v {
                let val = match val {
                    Some(q) => codec::rational(q),
                    None => json!("inf"),
                };
                obj.insert("val".into(), val);
                obj.insert("unit".into(), real(*unit));
            }
            Ok(Output::json(Value::Object(obj)))
        }
        FiberCmd::Reduce { base, point, remove_forms, remove_primes } => {
            let x = codec::parse_point_spec(base.point()?, point)?;
            let forms = remove_forms.iter().map(|f| Form::parse(f)).collect::<berkz_core::Result<Vec<_>>>()?;
            let u = OpenSubscheme::new(forms, remove_primes.iter().copied())?;
            Ok(Output::json(json!({
                "reduction": reduction_json(&reduction(&x)),
                "interior": is_interior(&x, &u),
            })))
        }
        FiberCmd::Skeleton { base, marked } => {
            let marked = marked.iter().map(|m| ProjQ::parse(m)).collect::<berkz_core::Result<Vec<_>>>()?;
            let sk = build_skeleton(base.point()?, &marked)?;
            let length = |l: &berkz_core::tree::EdgeLength| match l {
                berkz_core::tree::EdgeLength::Finite(q) => codec::rational(q),
                berkz_core::tree::EdgeLength::Infinite => json!("inf"),
            };
            let edges: Vec<Value> =
                sk.edges.iter().map(|(p, c, l)| json!({"parent": p, "child": c, "length": length(l)})).collect();
            let rows = sk
                .edges
                .iter()
                .map(|(p, c, l)| vec![p.to_string(), c.to_string(), cell(&length(l)).unwrap()])
                .collect();
            Ok(Output {
                json: json!({
                    "root": codec::fiber_point(&sk.root),
                    "vertices": sk.vertices.iter().map(codec::fiber_point).collect::<Vec<_>>(),
                    "edges": edges,
                }),
                table: Some(Table { header: vec!["parent", "child", "length"], rows }),
            })
        }
    }
}

fn metric(cmd: &MetricCmd) -> CmdResult<Output> {
    match cmd {
        MetricCmd::Eval { metric, base, point, green } => {
            let x = codec::parse_point_spec(base.point()?, point)?;
            let v = if *green {
                green_eval(&codec::parse_green(&read_json(metric)?)?, &x)?
            } else {
                restrict_to_fiber(&Arc::new(read_metric(metric)?), *x.base()).eval(&x)?
            };
            Ok(Output::json(codec::green_value(&v)))
        }
        MetricCmd::Check { metric } => {
            let r = check_no_common_zero(&read_metric(metric)?)?;
            Ok(Output {
                json: json!({
                    "ok": r.ok,
                    "bad_generic": r.bad_generic,
                    "bad_primes": r.bad_primes.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                }),
                table: None,
            })
        }
        MetricCmd::Pullback { metric, map } => {
            Ok(Output::json(codec::metric(&pullback(&read_metric(metric)?, &map.map()?)?)))
        }
    }
}

fn chart_label(c: berkz_core::Chart) -> &'static str {
    match c {
        berkz_core::Chart::A => "A",
        berkz_core::Chart::B => "B",
    }
}

fn ma(cmd: &MaCmd, format: Format) -> CmdResult<Output> {
    match cmd {
        MaCmd::Fiber { metric, base, resolution } => {
            let phi = read_metric(metric)?;
            let m = ma_at(&phi, base.point()?, &MaConfig { resolution: *resolution })?;
            let table = match &m.grid {
                Some(g) => Table {
                    header: vec!["chart", "ix", "iy", "mass"],
                    rows: g
                        .cells
                        .iter()
                        .map(|c| {
                            vec![chart_label(c.chart).into(), c.ix.to_string(), c.iy.to_string(), real(c.mass).to_string()]
                        })
                        .collect(),
                },
                None => Table {
                    header: vec!["point", "mass"],
                    rows: m
                        .atoms
                        .iter()
                        .map(|a| vec![codec::fiber_point(&a.point).to_string(), format_rational(&a.mass)])
                        .collect(),
                },
            };
            Ok(Output { json: codec::measure(&m), table: Some(table) })
        }
        MaCmd::Masscheck { metric, points, resolution, tolerance } => {
            let phi = read_metric(metric)?;
            let sample = points.iter().map(|p| parse_sample_point(p)).collect::<CmdResult<Vec<_>>>()?;
            let r = total_mass_check(&phi, &sample, &MaConfig { resolution: *resolution }, *tolerance)?;
            let mass = |m: &berkz_core::Mass| match m {
                berkz_core::Mass::Exact(q) => codec::rational(q),
                berkz_core::Mass::Approx(x) => real(*x),
            };
            let entries: Vec<Value> = r
                .entries
                .iter()
                .map(|e| {
                    json!({
                        "base": codec::spectrum_point(&e.base),
                        "mass": mass(&e.mass),
                        "deviation": real(e.deviation),
                        "flagged": e.flagged,
                    })
                })
                .collect();
            let rows = r
                .entries
                .iter()
                .map(|e| {
                    vec![
                        e.base.place().to_string(),
                        real(e.base.t()).to_string(),
                        cell(&mass(&e.mass)).unwrap(),
                        real(e.deviation).to_string(),
                        e.flagged.to_string(),
                    ]
                })
                .collect();
            Ok(Output {
                json: json!({"entries": entries, "max_deviation": real(r.max_deviation), "flagged": r.flagged}),
                table: Some(Table { header: vec!["place", "t", "mass", "deviation", "flagged"], rows }),
            })
        }
        MaCmd::Nondegenerate { metric } => {
            let r = nondegeneracy_check(&read_metric(metric)?)?;
            Ok(Output::json(json!({
                "nondegenerate": r.nondegenerate,
                "mass": codec::rational(&r.mass),
                "measure": codec::measure(&r.measure),
            })))
        }
        MaCmd::Global { metric, f, cap, quad, resolution, profile_places } => {
            let phi = read_metric(metric)?;
            let f = test_function(f, *cap)?;
            let cfg = GlobalConfig { quadrature: quad.config(), resolution: *resolution };
            let r = global_ma_integrate(&phi, &f, &cfg)?;
            let json = json!({
                "value": real(r.value),
                "mu_tail": real(r.mu_tail),
                "quad_err": real(r.quad_err),
                "arch_err": real(r.arch_err),
            });
            let mut rows = Vec::new();
            let profiled: &[String] = if format == Format::Csv { profile_places } else { &[] };
            for pl in profiled {
                let pl: Place = pl.parse()?;
                for t in QuadraturePlan::nodes(quad.nodes) {
                    let x = SpectrumPoint::new(pl, t)?;
                    let v = fiber_integral(&phi, &f, x, *resolution)?;
                    rows.push(vec![pl.to_string(), real(t).to_string(), real(v).to_string()]);
                }
            }
            Ok(Output { json, table: Some(Table { header: vec!["place", "t", "fiber_integral"], rows }) })
        }
    }
}

fn test_function(spec: &str, cap: f64) -> CmdResult<TestFunction> {
    if let Some(path) = spec.strip_prefix("green:") {
        return Ok(TestFunction::GreenCapped { green: codec::parse_green(&read_json(path)?)?, cap });
    }
    if let Some(path) = spec.strip_prefix("boundary:") {
        return Ok(TestFunction::BoundaryCapped { boundary: codec::parse_boundary(&read_json(path)?)?, cap });
    }
    let c = parse_t_like(spec)?;
    Ok(TestFunction::Constant(c))
}

fn parse_t_like(s: &str) -> CmdResult<f64> {
    let q = parse_rational(s)?;
    Ok(berkz_core::arith::q_to_f64(&q))
}

fn regime_name(r: NormRegime) -> &'static str {
    match r {
        NormRegime::Proportional => "proportional",
        NormRegime::Model => "model",
        NormRegime::TreeVertices => "tree_vertices",
        NormRegime::Sampled => "sampled",
        NormRegime::Unbounded => "unbounded",
    }
}

fn adelic(cmd: &AdelicCmd) -> CmdResult<Output> {
    match cmd {
        AdelicCmd::Norm { divisor, boundary, norm } => {
            let e = codec::parse_divisor(&read_json(divisor)?)?;
            let d0 = codec::parse_boundary(&read_json(boundary)?)?;
            let r = boundary_norm(&e, &d0, &norm.config())?;
            Ok(Output::json(json!({
                "value": codec::ext_q(&r.value),
                "approx": real(r.value.to_f64()),
                "regime": regime_name(r.regime),
                "exact": r.exact,
            })))
        }
        AdelicCmd::Cauchy { sequence, fx, fy, steps, boundary, rate, norm } => {
            let seq = match (sequence, fx, fy) {
                (Some(path), None, None) => {
                    let v = read_json(path)?;
                    let items = v.as_array().ok_or_else(|| input_error(format!("{path} must hold a JSON array")))?;
                    items.iter().map(codec::parse_divisor).collect::<berkz_core::Result<Vec<_>>>()?
                }
                (None, Some(fx), Some(fy)) => {
                    let map = MapArgs { fx: fx.clone(), fy: fy.clone() };
                    let q = map.map()?.degree() as u64;
                    let cap = q.checked_pow(*steps as u32).unwrap_or(u64::MAX);
                    dynamical_divisors(&invariant_metric_sequence(&map.map()?, *steps, cap)?)?
                }
                _ => return Err(input_error("give either --sequence or both --fx and --fy")),
            };
            let d0 = match boundary {
                Some(path) => codec::parse_boundary(&read_json(path)?)?,
                None => archimedean_boundary()?,
            };
            let w = verify_cauchy(&seq, &d0, *rate, &norm.config())?;
            let ratio = |r: &Option<f64>| r.map_or(Value::Null, real);
            let rows = w
                .epsilons
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let r = w.ratios.get(i).map_or(Value::Null, ratio);
                    vec![i.to_string(), cell(&codec::ext_q(e)).unwrap(), cell(&r).unwrap()]
                })
                .collect();
            Ok(Output {
                json: json!({
                    "epsilons": w.epsilons.iter().map(codec::ext_q).collect::<Vec<_>>(),
                    "ratios": w.ratios.iter().map(ratio).collect::<Vec<_>>(),
                    "verified_through": w.verified_through,
                    "first_failure": w.first_failure,
                    "ok": w.ok(),
                }),
                table: Some(Table { header: vec!["i", "epsilon", "ratio"], rows }),
            })
        }
    }
}

fn dynamics(cmd: &DynamicsCmd) -> CmdResult<Output> {
    match cmd {
        DynamicsCmd::Iterate { map, steps, degree_cap, norm } => {
            if *steps == 0 {
                return Err(input_error("--steps must be positive"));
            }
            let seq = invariant_metric_sequence(&map.map()?, *steps, *degree_cap)?;
            let divs = dynamical_divisors(&seq)?;
            let d0 = archimedean_boundary()?;
            let cfg = norm.config();
            let mut table = Vec::new();
            let mut rows = Vec::new();
            let mut prev: Option<f64> = None;
            for i in 1..divs.len() {
                let diff = boundary_norm(&divs[i].sub(&divs[i - 1])?, &d0, &cfg)?;
                let v = diff.value.to_f64();
                let ratio = prev.filter(|p| *p > 0.0).map(|p| v / p);
                table.push(json!({
                    "step": i,
                    "degree": seq[i].m(),
                    "sup_diff": codec::ext_q(&diff.value),
                    "sup_diff_approx": real(v),
                    "ratio": ratio.map_or(Value::Null, real),
                }));
                rows.push(vec![
                    i.to_string(),
                    seq[i].m().to_string(),
                    real(v).to_string(),
                    ratio.map_or(String::new(), |r| real(r).to_string()),
                ]);
                prev = Some(v);
            }
            Ok(Output {
                json: json!({"steps": table}),
                table: Some(Table { header: vec!["step", "degree", "sup_diff", "ratio"], rows }),
            })
        }
        DynamicsCmd::Residual { map, metric, steps, degree_cap, norm } => {
            let f = map.map()?;
            let phi = match metric {
                Some(path) => read_metric(path)?,
                None => invariant_metric_sequence(&f, *steps, *degree_cap)?.pop().expect("sequence is nonempty"),
            };
            let r = invariance_residual(&phi, &f, &norm.config())?;
            Ok(Output::json(json!({"residual": real(r)})))
        }
    }
}

fn dispatch(cli: &Cli) -> CmdResult<Output> {
    match &cli.cmd {
        Cmd::Spectrum(c) => spectrum(c),
        Cmd::Fiber(c) => fiber(c),
        Cmd::Metric(c) => metric(c),
        Cmd::Ma(c) => ma(c, cli.format),
        Cmd::Adelic(c) => adelic(c),
        Cmd::Dynamics(c) => dynamics(c),
    }
}

/// Runs one command and returns its exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use clap::error::ErrorKind;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return EXIT_OK;
                }
                ErrorKind::InvalidSubcommand
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_INPUT,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match dispatch(&cli).and_then(|o| render(&o, cli.format)) {
        Ok(s) => {
            let _ = out.write_all(s.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "berkz: {}", e.message);
            e.code
        }
    }
}
