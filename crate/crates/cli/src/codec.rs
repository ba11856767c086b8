// SPDX-License-Identifier: Apache-2.0

//! JSON encodings of the core types. Rationals travel as `"a/b"` strings,
//! reals as shortest round-trip decimals, non-finite reals as strings.

use std::sync::Arc;

use berkz_core::arith::{format_rational, parse_rational};
use berkz_core::monge_ampere::{ArchCell, ArchGrid, Atom};
use berkz_core::spectrum::{DefaultFill, Interval};
use berkz_core::{
    ArchCoord, BoundaryDivisor, BranchSet, Chart, Error, ExtQ, FiberMeasure, FiberPoint, Form, GlobalTropFSMetric,
    GreenFunction, GreenValue, Mass, ModelAdelicDivisor, OpenSubscheme, Place, PointKind, ProjQ, Result,
    SpectrumPoint, Term, Q,
};
use num_complex::Complex64;
use serde_json::{json, Map, Value};

fn bad(what: &str, v: &Value) -> Error {
    Error::input(format!("expected {what}, found {v}"))
}

fn field<'a>(obj: &'a Value, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::input(format!("missing field {key:?} in {obj}")))
}

fn array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| bad(what, v))
}

pub fn rational(x: &Q) -> Value {
    Value::String(format_rational(x))
}

pub fn parse_q(v: &Value) -> Result<Q> {
    match v {
        Value::String(s) => parse_rational(s),
        Value::Number(n) => parse_rational(&n.to_string()),
        _ => Err(bad("a rational", v)),
    }
}

pub fn real(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn parse_real(v: &Value) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| bad("a real", v)),
        Value::String(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            _ => s.parse().map_err(|_| bad("a real", v)),
        },
        _ => Err(bad("a real", v)),
    }
}

pub fn ext_q(x: &ExtQ) -> Value {
    match x {
        ExtQ::Finite(q) => rational(q),
        ExtQ::Infinite => json!("inf"),
    }
}

pub fn place(p: Place) -> Value {
    match p {
        Place::Infinity => json!("inf"),
        Place::Prime(p) => json!(p),
    }
}

pub fn parse_place(v: &Value) -> Result<Place> {
    match v {
        Value::String(s) => s.parse(),
        Value::Number(n) => n.as_u64().ok_or_else(|| bad("a place", v)).and_then(Place::prime),
        _ => Err(bad("a place", v)),
    }
}

pub fn spectrum_point(x: &SpectrumPoint) -> Value {
    json!({"place": place(x.place()), "t": real(x.t())})
}

pub fn parse_spectrum_point(v: &Value) -> Result<SpectrumPoint> {
    SpectrumPoint::new(parse_place(field(v, "place")?)?, parse_real(field(v, "t")?)?)
}

pub fn proj(a: &ProjQ) -> Value {
    match a {
        ProjQ::Finite(q) => rational(q),
        ProjQ::Infinity => json!("inf"),
    }
}

fn parse_proj(v: &Value) -> Result<ProjQ> {
    match v {
        Value::String(s) => ProjQ::parse(s),
        Value::Number(_) => Ok(ProjQ::Finite(parse_q(v)?)),
        _ => Err(bad("a point of P^1(Q)", v)),
    }
}

fn complex(z: Complex64) -> Value {
    json!([real(z.re), real(z.im)])
}

fn parse_complex(v: &Value) -> Result<Complex64> {
    match array(v, "[re, im]")?.as_slice() {
        [re, im] => Ok(Complex64::new(parse_real(re)?, parse_real(im)?)),
        _ => Err(bad("[re, im]", v)),
    }
}

pub fn fiber_point(x: &FiberPoint) -> Value {
    let base = spectrum_point(x.base());
    match x.kind() {
        PointKind::Type1(a) => json!({"base": base, "kind": "type1", "coord": proj(a)}),
        PointKind::Disc { center, radius_val } => {
            json!({"base": base, "kind": "disc", "center": rational(center), "radius_val": rational(radius_val)})
        }
        PointKind::Arch(ArchCoord::Finite(z)) => json!({"base": base, "kind": "arch", "z": complex(*z)}),
        PointKind::Arch(ArchCoord::Infinity) => json!({"base": base, "kind": "arch", "z": "inf"}),
    }
}

pub fn parse_fiber_point(v: &Value) -> Result<FiberPoint> {
    let base = parse_spectrum_point(field(v, "base")?)?;
    let kind = match field(v, "kind")?.as_str() {
        Some("type1") => PointKind::Type1(parse_proj(field(v, "coord")?)?),
        Some("disc") => PointKind::Disc {
            center: parse_q(field(v, "center")?)?,
            radius_val: parse_q(field(v, "radius_val")?)?,
        },
        Some("arch") => match field(v, "z")? {
            Value::String(s) if s == "inf" => PointKind::Arch(ArchCoord::Infinity),
            z => PointKind::Arch(ArchCoord::Finite(parse_complex(z)?)),
        },
        _ => return Err(bad("kind type1|disc|arch", v)),
    };
    FiberPoint::new(base, kind)
}

/// Compact point syntax for the command line: `gauss`, `a/b`, `inf`,
/// `disc:CENTER:RADIUS_VAL`, `z:RE:IM`, or inline JSON.
pub fn parse_point_spec(base: SpectrumPoint, s: &str) -> Result<FiberPoint> {
    let s = s.trim();
    if s.starts_with('{') {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::input(format!("bad point JSON: {e}")))?;
        return parse_fiber_point(&v);
    }
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["gauss"] => FiberPoint::gauss(base),
        ["disc", c, r] => FiberPoint::disc(base, parse_rational(c)?, parse_rational(r)?),
        ["z", "inf"] => FiberPoint::new(base, PointKind::Arch(ArchCoord::Infinity)),
        ["z", re, im] => {
            let re: f64 = re.parse().map_err(|_| Error::input(format!("bad real part {re:?}")))?;
            let im: f64 = im.parse().map_err(|_| Error::input(format!("bad imaginary part {im:?}")))?;
            FiberPoint::arch(base, Complex64::new(re, im))
        }
        [a] => FiberPoint::type1(base, ProjQ::parse(a)?),
        _ => Err(Error::input(format!("bad point {s:?}"))),
    }
}

pub fn green_value(g: &GreenValue) -> Value {
    match g {
        GreenValue::PlusInfinity => json!({"value": "inf"}),
        GreenValue::MinusInfinity => json!({"value": "-inf"}),
        GreenValue::Exact { units, constant, unit } => json!({
            "value": real(g.to_f64()),
            "units": rational(units),
            "constant": rational(constant),
            "unit": real(*unit),
        }),
        GreenValue::Real(x) => json!({"value": real(*x)}),
    }
}

pub fn metric(phi: &GlobalTropFSMetric) -> Value {
    let terms: Vec<Value> = phi
        .terms()
        .iter()
        .map(|t| json!({"s": t.section.to_string(), "lambda": rational(&t.lambda)}))
        .collect();
    json!({"d": rational(phi.d()), "m": phi.m(), "terms": terms, "pure": phi.is_pure()})
}

pub fn parse_metric(v: &Value) -> Result<GlobalTropFSMetric> {
    let d = parse_q(field(v, "d")?)?;
    let m = field(v, "m")?.as_u64().ok_or_else(|| bad("a positive integer m", v))?;
    let mut terms = Vec::new();
    for t in array(field(v, "terms")?, "a list of terms")? {
        let s = field(t, "s")?.as_str().ok_or_else(|| bad("a form string", t))?;
        let lambda = match t.get("lambda") {
            Some(l) => parse_q(l)?,
            None => Q::from_integer(0.into()),
        };
        terms.push(Term { section: Form::parse(s)?, lambda });
    }
    let phi = GlobalTropFSMetric::new(d, m, terms)?;
    if let Some(p) = v.get("pure") {
        if p.as_bool() != Some(phi.is_pure()) {
            return Err(Error::input("the \"pure\" flag disagrees with the lambdas"));
        }
    }
    Ok(phi)
}

fn weighted_forms(items: &[(Form, Q)]) -> Value {
    items.iter().map(|(f, a)| json!({"form": f.to_string(), "coeff": rational(a)})).collect()
}

fn parse_weighted_forms(v: Option<&Value>) -> Result<Vec<(Form, Q)>> {
    let Some(v) = v else { return Ok(Vec::new()) };
    array(v, "a list of {form, coeff}")?
        .iter()
        .map(|e| {
            let s = field(e, "form")?.as_str().ok_or_else(|| bad("a form string", e))?;
            Ok((Form::parse(s)?, parse_q(field(e, "coeff")?)?))
        })
        .collect()
}

fn verticals<'a>(items: impl Iterator<Item = (&'a Place, &'a Q)>) -> Value {
    items.map(|(p, a)| json!({"prime": place(*p), "coeff": rational(a)})).collect()
}

fn parse_verticals(v: Option<&Value>) -> Result<Vec<(Place, Q)>> {
    let Some(v) = v else { return Ok(Vec::new()) };
    array(v, "a list of {prime, coeff}")?
        .iter()
        .map(|e| Ok((parse_place(field(e, "prime")?)?, parse_q(field(e, "coeff")?)?)))
        .collect()
}

/// Green function file: a metric plus its reference divisor. Without a
/// reference, `d` must be an integer and the reference is `d*[Y]`.
pub fn parse_green(v: &Value) -> Result<GreenFunction> {
    let phi = parse_metric(v)?;
    let reference = match v.get("reference") {
        Some(r) => parse_weighted_forms(Some(r))?,
        None => vec![(Form::parse("Y")?, phi.d().clone())],
    };
    GreenFunction::new(Arc::new(phi), reference)
}

pub fn boundary(d0: &BoundaryDivisor) -> Value {
    json!({
        "horizontal": weighted_forms(&d0.horizontal),
        "vertical": verticals(d0.vertical.iter().map(|(p, a)| (p, a))),
        "metric": metric(&d0.green.metric),
    })
}

/// Boundary divisor; the metric defaults to the standard one of matching degree.
pub fn parse_boundary(v: &Value) -> Result<BoundaryDivisor> {
    let h = parse_weighted_forms(v.get("horizontal"))?;
    let vt = parse_verticals(v.get("vertical"))?;
    match v.get("metric") {
        Some(m) => BoundaryDivisor::new(h, vt, parse_metric(m)?),
        None => BoundaryDivisor::with_standard_metric(h, vt),
    }
}

pub fn divisor(e: &ModelAdelicDivisor) -> Value {
    let h: Vec<(Form, Q)> = e.horizontal.iter().map(|(f, a)| (f.clone(), a.clone())).collect();
    let metrics: Vec<Value> = e.metrics.iter().map(|(c, m)| json!({"coeff": rational(c), "metric": metric(m)})).collect();
    let forms: Vec<Value> = e.open.removed_forms.iter().map(|f| json!(f.to_string())).collect();
    json!({
        "horizontal": weighted_forms(&h),
        "vertical": verticals(e.vertical.iter()),
        "metrics": metrics,
        "removed_forms": forms,
        "removed_primes": e.open.removed_primes.iter().collect::<Vec<_>>(),
    })
}

/// Model adelic divisor. A top-level metric (`d`, `m`, `terms`) stands for
/// the metric with coefficient 1.
pub fn parse_divisor(v: &Value) -> Result<ModelAdelicDivisor> {
    let h = parse_weighted_forms(v.get("horizontal"))?;
    let vt = parse_verticals(v.get("vertical"))?;
    let mut metrics = Vec::new();
    if let Some(ms) = v.get("metrics") {
        for e in array(ms, "a list of {coeff, metric}")? {
            metrics.push((parse_q(field(e, "coeff")?)?, Arc::new(parse_metric(field(e, "metric")?)?)));
        }
    } else if v.get("terms").is_some() {
        metrics.push((Q::from_integer(1.into()), Arc::new(parse_metric(v)?)));
    }
    let forms = match v.get("removed_forms") {
        None => Vec::new(),
        Some(fs) => array(fs, "a list of forms")?
            .iter()
            .map(|f| f.as_str().ok_or_else(|| bad("a form string", f)).and_then(Form::parse))
            .collect::<Result<_>>()?,
    };
    let primes = match v.get("removed_primes") {
        None => Vec::new(),
        Some(ps) => array(ps, "a list of primes")?
            .iter()
            .map(|p| p.as_u64().ok_or_else(|| bad("a prime", p)))
            .collect::<Result<_>>()?,
    };
    ModelAdelicDivisor::new(h, vt, metrics, OpenSubscheme::new(forms, primes)?)
}

fn chart_name(c: Chart) -> &'static str {
    match c {
        Chart::A => "A",
        Chart::B => "B",
    }
}

fn mass(m: &Mass) -> Value {
    match m {
        Mass::Exact(q) => rational(q),
        Mass::Approx(x) => real(*x),
    }
}

/// Exact masses are strings; approximate ones are numbers.
fn parse_mass(v: &Value) -> Result<Mass> {
    match v {
        Value::String(_) => Ok(Mass::Exact(parse_q(v)?)),
        _ => Ok(Mass::Approx(parse_real(v)?)),
    }
}

pub fn measure(m: &FiberMeasure) -> Value {
    let atoms: Vec<Value> =
        m.atoms.iter().map(|a| json!({"point": fiber_point(&a.point), "mass": rational(&a.mass)})).collect();
    let grid = match &m.grid {
        None => Value::Null,
        Some(g) => {
            let cells: Vec<Value> = g
                .cells
                .iter()
                .map(|c| {
                    json!({"chart": chart_name(c.chart), "ix": c.ix, "iy": c.iy, "z": complex(c.z), "mass": real(c.mass)})
                })
                .collect();
            json!({"resolution": g.resolution, "negative_dust": real(g.negative_dust), "cells": cells})
        }
    };
    json!({"base": spectrum_point(&m.base), "total_mass": mass(&m.total_mass), "atoms": atoms, "grid": grid})
}

pub fn parse_measure(v: &Value) -> Result<FiberMeasure> {
    let base = parse_spectrum_point(field(v, "base")?)?;
    let mut atoms = Vec::new();
    for a in array(field(v, "atoms")?, "a list of atoms")? {
        atoms.push(Atom { point: parse_fiber_point(field(a, "point")?)?, mass: parse_q(field(a, "mass")?)? });
    }
    let grid = match field(v, "grid")? {
        Value::Null => None,
        g => {
            let mut cells = Vec::new();
            for c in array(field(g, "cells")?, "a list of cells")? {
                let chart = match field(c, "chart")?.as_str() {
                    Some("A") => Chart::A,
                    Some("B") => Chart::B,
                    _ => return Err(bad("chart A|B", c)),
                };
                let index = |k: &str| -> Result<u32> {
                    field(c, k)?.as_u64().and_then(|i| u32::try_from(i).ok()).ok_or_else(|| bad("a grid index", c))
                };
                cells.push(ArchCell {
                    chart,
                    ix: index("ix")?,
                    iy: index("iy")?,
                    z: parse_complex(field(c, "z")?)?,
                    mass: parse_real(field(c, "mass")?)?,
                });
            }
            let resolution = field(g, "resolution")?.as_u64().ok_or_else(|| bad("a resolution", g))? as usize;
            Some(ArchGrid { resolution, cells, negative_dust: parse_real(field(g, "negative_dust")?)? })
        }
    };
    Ok(FiberMeasure { base, atoms, grid, total_mass: parse_mass(field(v, "total_mass")?)? })
}

pub fn parse_branch_set(v: &Value) -> Result<BranchSet> {
    let mut set = match field(v, "default")?.as_str() {
        Some("empty") => BranchSet::empty(),
        Some("full") => BranchSet::full(),
        _ => return Err(bad("default empty|full", v)),
    };
    for b in array(v.get("branches").unwrap_or(&Value::Array(Vec::new())), "a list of branches")? {
        let pl = parse_place(field(b, "place")?)?;
        let mut ivs = Vec::new();
        for iv in array(field(b, "intervals")?, "a list of intervals")? {
            match array(iv, "[a, b]")?.as_slice() {
                [a, b] => ivs.push(Interval::closed(parse_q(a)?, parse_q(b)?)?),
                _ => return Err(bad("[a, b]", iv)),
            }
        }
        set = set.with_branch(pl, ivs);
    }
    Ok(set)
}

pub fn branch_set(s: &BranchSet) -> Value {
    let default = match s.default {
        DefaultFill::Empty => "empty",
        DefaultFill::Full => "full",
    };
    let branches: Vec<Value> = s
        .branches
        .iter()
        .map(|(p, ivs)| {
            let ivs: Vec<Value> = ivs.iter().map(|iv| json!([rational(&iv.lo), rational(&iv.hi)])).collect();
            json!({"place": place(*p), "intervals": ivs})
        })
        .collect();
    let mut out = Map::new();
    out.insert("default".into(), json!(default));
    out.insert("branches".into(), Value::Array(branches));
    Value::Object(out)
}
