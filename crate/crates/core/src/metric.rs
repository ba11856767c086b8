// SPDX-License-Identifier: Apache-2.0

//! Global tropical Fubini-Study metrics `phi = m^-1 max_j (log|s_j| + lambda_j)`
//! on `O(d)` over `P^1_Z`, and Green functions relative to a reference divisor.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith::{self, prime_factors, q_to_f64, Q};
use crate::error::{Error, Result};
use crate::fiber::{na_val, ArchCoord, FiberPoint, NaField, PointKind, ProjQ, Val};
use crate::poly::{form_resultant, gcd_degree_mod_p, integer_coeffs, FloatForm, Form};
use crate::spectrum::SpectrumPoint;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub section: Form,
    /// Additive constant inside the max, in natural-log units.
    pub lambda: Q,
}

impl Term {
    pub fn pure(section: Form) -> Term {
        Term { section, lambda: Q::zero() }
    }
}

/// Archimedean evaluation through a base set of sections and a chain of
/// maps, avoiding the expanded high-degree polynomials.
#[derive(Debug)]
struct Plan {
    base: Vec<FloatForm>,
    /// Applied to the input vector first to last.
    maps: Vec<(FloatForm, FloatForm)>,
}

impl Plan {
    fn log_abs(&self, x: Complex64, y: Complex64, out: &mut [f64]) {
        self.log_abs_from(0, x, y, out)
    }

    fn log_abs_from(&self, skip: usize, x: Complex64, y: Complex64, out: &mut [f64]) {
        let (mut x, mut y) = (x, y);
        let mut scale = 0.0f64;
        let n = x.norm().max(y.norm());
        if n > 0.0 && n.is_finite() {
            x /= n;
            y /= n;
            scale = n.ln();
        }
        for (f0, f1) in &self.maps[skip..] {
            let q = f0.degree() as f64;
            let (a, b) = (f0.eval(x, y), f1.eval(x, y));
            let n = a.norm().max(b.norm());
            scale = q * scale + n.ln();
            x = a / n;
            y = b / n;
        }
        for (o, s) in out.iter_mut().zip(&self.base) {
            *o = s.degree() as f64 * scale + s.log_abs(x, y);
        }
    }
}

#[derive(Clone)]
pub struct GlobalTropFSMetric {
    d: Q,
    m: u64,
    terms: Vec<Term>,
    floats: Vec<FloatForm>,
    plan: Option<Arc<Plan>>,
    /// Set when the construction guarantees no common zeros.
    certified: bool,
}

impl fmt::Debug for GlobalTropFSMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GlobalTropFSMetric")
            .field("d", &arith::format_rational(&self.d))
            .field("m", &self.m)
            .field("terms", &self.terms.iter().map(|t| format!("{} + {}", t.section, t.lambda)).collect::<Vec<_>>())
            .finish()
    }
}

impl PartialEq for GlobalTropFSMetric {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.m == other.m && self.terms == other.terms
    }
}

impl GlobalTropFSMetric {
    pub fn new(d: Q, m: u64, terms: Vec<Term>) -> Result<Self> {
        if m == 0 {
            return Err(Error::input("multiplier m must be positive"));
        }
        if d.is_negative() {
            return Err(Error::input("degree d must be nonnegative"));
        }
        let md = &d * Q::from_integer(m.into());
        if !md.is_integer() {
            return Err(Error::input("m * d must be an integer"));
        }
        if terms.is_empty() {
            return Err(Error::input("a metric needs at least one section"));
        }
        let deg = md.to_integer().to_usize().ok_or_else(|| Error::input("degree too large"))?;
        for t in &terms {
            if t.section.is_zero() {
                return Err(Error::input("sections must be nonzero"));
            }
            if t.section.degree() != deg {
                return Err(Error::input(format!(
                    "section {} has degree {}, expected m*d = {deg}",
                    t.section,
                    t.section.degree()
                )));
            }
        }
        let floats = terms.iter().map(|t| t.section.to_float()).collect();
        Ok(GlobalTropFSMetric { d, m, terms, floats, plan: None, certified: false })
    }

    /// `max(log|X|, log|Y|)` on `O(1)`.
    pub fn standard() -> Self {
        let mut m = GlobalTropFSMetric::new(Q::one(), 1, vec![Term::pure(Form::x()), Term::pure(Form::y())]).unwrap();
        m.certified = true;
        m
    }

    /// `k` times the standard metric, as `max(log|X^k|, log|Y^k|)`.
    pub fn standard_multiple(k: usize) -> Self {
        if k == 0 {
            return GlobalTropFSMetric::trivial();
        }
        let mut m = GlobalTropFSMetric::new(
            Q::from_integer(k.into()),
            1,
            vec![Term::pure(Form::x().pow(k)), Term::pure(Form::y().pow(k))],
        )
        .unwrap();
        m.certified = true;
        m
    }

    /// The zero metric on `O(0)`.
    pub fn trivial() -> Self {
        let mut m = GlobalTropFSMetric::new(Q::zero(), 1, vec![Term::pure(Form::constant(BigInt::one()))]).unwrap();
        m.certified = true;
        m
    }

    pub fn d(&self) -> &Q {
        &self.d
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn section_degree(&self) -> usize {
        self.terms[0].section.degree()
    }

    pub fn is_pure(&self) -> bool {
        self.terms.iter().all(|t| t.lambda.is_zero())
    }

    /// Whether all `lambda_j` agree, so the metric is a pure one shifted by
    /// a constant.
    pub fn has_uniform_lambda(&self) -> bool {
        self.terms.iter().all(|t| t.lambda == self.terms[0].lambda)
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    fn m_q(&self) -> Q {
        Q::from_integer(self.m.into())
    }

    /// `ln |s_j(x, y)|` for every section.
    pub fn section_log_abs(&self, x: Complex64, y: Complex64) -> Vec<f64> {
        let mut out = vec![0.0; self.terms.len()];
        match &self.plan {
            Some(plan) => plan.log_abs(x, y, &mut out),
            None => {
                for (o, f) in out.iter_mut().zip(&self.floats) {
                    *o = f.log_abs(x, y);
                }
            }
        }
        out
    }

    /// `m^-1 max_j (eps ln|s_j(x, y)| + lambda_j)` at a complex vector.
    pub fn arch_potential(&self, x: Complex64, y: Complex64, eps: f64) -> f64 {
        let logs = self.section_log_abs(x, y);
        let mut best = f64::NEG_INFINITY;
        for (l, t) in logs.iter().zip(&self.terms) {
            let v = eps * l + q_to_f64(&t.lambda);
            if v > best {
                best = v;
            }
        }
        best / self.m as f64
    }

    /// Maps applied before the base sections in Archimedean evaluation.
    pub fn plan_maps(&self) -> &[(FloatForm, FloatForm)] {
        self.plan.as_ref().map_or(&[], |p| &p.maps)
    }

    /// Potential of `psi` where `phi = deg(G)^-1 G^* psi` and `G` is the
    /// composite of the first `skip` plan maps.
    pub fn arch_potential_after(&self, skip: usize, x: Complex64, y: Complex64, eps: f64) -> f64 {
        let maps = self.plan_maps();
        assert!(skip <= maps.len());
        let q: f64 = maps[..skip].iter().map(|(f, _)| f.degree() as f64).product();
        let mut logs = vec![0.0; self.terms.len()];
        match &self.plan {
            Some(plan) => plan.log_abs_from(skip, x, y, &mut logs),
            None => {
                for (o, f) in logs.iter_mut().zip(&self.floats) {
                    *o = f.log_abs(x, y);
                }
            }
        }
        let mut best = f64::NEG_INFINITY;
        for (l, t) in logs.iter().zip(&self.terms) {
            best = best.max(eps * l + q_to_f64(&t.lambda));
        }
        best * q / self.m as f64
    }

    /// Same as [`arch_potential`] but for `n` chart points at once.
    pub fn arch_potential_chart(&self, pts: &[Complex64], chart: Chart) -> Vec<f64> {
        let one = Complex64::new(1.0, 0.0);
        pts.iter()
            .map(|&z| match chart {
                Chart::A => self.arch_potential(z, one, 1.0),
                Chart::B => self.arch_potential(one, z, 1.0),
            })
            .collect()
    }

    /// Exact potential at a non-Archimedean point, relative to the chart's
    /// representative vector.
    fn na_potential(&self, field: &NaField, kind: &PointKind, chart: Chart) -> Result<NaPot> {
        let mut best: Option<(Q, Q, f64)> = None;
        let unit = field.unit();
        let m = self.m_q();
        for t in &self.terms {
            let poly = match chart {
                Chart::A => t.section.dehom_t(),
                Chart::B => t.section.dehom_w(),
            };
            let Some(v) = na_val(field, kind, &poly)? else {
                continue;
            };
            let units = -v / &m;
            let cst = &t.lambda / &m;
            let real = q_to_f64(&units) * unit + q_to_f64(&cst);
            let better = match &best {
                None => true,
                Some((bu, bc, br)) => {
                    if field.is_trivially_valued() || cst == *bc {
                        // exact comparison
                        &units + &cst > bu + bc
                    } else {
                        real > *br
                    }
                }
            };
            if better {
                best = Some((units, cst, real));
            }
        }
        Ok(match best {
            None => NaPot::MinusInfinity,
            Some((u, c, _)) => NaPot::Finite(u, c),
        })
    }
}

enum NaPot {
    MinusInfinity,
    Finite(Q, Q),
}

/// Affine chart on `P^1`: `A` uses `(T, 1)`, `B` uses `(1, w)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chart {
    A,
    B,
}

/// Value of a Green function or metric potential.
#[derive(Clone, Debug, PartialEq)]
pub enum GreenValue {
    PlusInfinity,
    MinusInfinity,
    /// `units * unit + constant`, with exact coefficients.
    Exact { units: Q, constant: Q, unit: f64 },
    Real(f64),
}

impl GreenValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            GreenValue::PlusInfinity => f64::INFINITY,
            GreenValue::MinusInfinity => f64::NEG_INFINITY,
            GreenValue::Exact { units, constant, unit } => q_to_f64(units) * unit + q_to_f64(constant),
            GreenValue::Real(x) => *x,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, GreenValue::Exact { .. } | GreenValue::Real(_))
    }

    /// Exact rational value on trivially valued fibers.
    pub fn exact_rational(&self) -> Option<Q> {
        match self {
            GreenValue::Exact { units, constant, unit } if *unit == 1.0 => Some(units + constant),
            GreenValue::Exact { units, constant, .. } if units.is_zero() => Some(constant.clone()),
            _ => None,
        }
    }

    pub fn sub(&self, other: &GreenValue) -> GreenValue {
        use GreenValue::*;
        match (self, other) {
            (Exact { units: a, constant: b, unit }, Exact { units: c, constant: d, .. }) => {
                Exact { units: a - c, constant: b - d, unit: *unit }
            }
            (PlusInfinity, MinusInfinity | Exact { .. } | Real(_)) => PlusInfinity,
            (MinusInfinity, PlusInfinity | Exact { .. } | Real(_)) => MinusInfinity,
            (Exact { .. } | Real(_), PlusInfinity) => MinusInfinity,
            (Exact { .. } | Real(_), MinusInfinity) => PlusInfinity,
            _ => Real(self.to_f64() - other.to_f64()),
        }
    }

    pub fn scale(&self, c: &Q) -> GreenValue {
        use GreenValue::*;
        match self {
            Exact { units, constant, unit } => Exact { units: units * c, constant: constant * c, unit: *unit },
            Real(x) => Real(x * q_to_f64(c)),
            PlusInfinity | MinusInfinity if c.is_zero() => Exact { units: Q::zero(), constant: Q::zero(), unit: 1.0 },
            PlusInfinity => if c.is_positive() { PlusInfinity } else { MinusInfinity },
            MinusInfinity => if c.is_positive() { MinusInfinity } else { PlusInfinity },
        }
    }

    pub fn add(&self, other: &GreenValue) -> GreenValue {
        self.sub(&other.scale(&-Q::one()))
    }
}

/// Chart in which a point is evaluated by default.
pub fn default_chart(x: &FiberPoint) -> Chart {
    match x.kind() {
        PointKind::Type1(ProjQ::Infinity) | PointKind::Arch(ArchCoord::Infinity) => Chart::B,
        PointKind::Arch(ArchCoord::Finite(z)) if z.norm() > 1.0 => Chart::B,
        _ => Chart::A,
    }
}

/// Logarithms of `|f|` at the chart representative of `x`; Archimedean
/// values are raw `ln|f(z)|` before raising to the base exponent.
enum FormLog {
    Na(Val),
    Real(f64),
}

fn chart_point(x: &FiberPoint, chart: Chart) -> FiberPoint {
    match chart {
        Chart::A => x.clone(),
        Chart::B => x.invert(),
    }
}

fn arch_rep(x: &FiberPoint, chart: Chart) -> Result<(Complex64, Complex64)> {
    let one = Complex64::new(1.0, 0.0);
    let p = chart_point(x, chart);
    match p.kind() {
        PointKind::Arch(ArchCoord::Finite(z)) => Ok(match chart {
            Chart::A => (*z, one),
            Chart::B => (one, *z),
        }),
        _ => Err(Error::Evaluation(format!("{x} is not finite in chart {chart:?}"))),
    }
}

fn form_log(field: Option<&NaField>, x: &FiberPoint, f: &Form, chart: Chart) -> Result<FormLog> {
    let p = chart_point(x, chart);
    match field {
        Some(field) => {
            let poly = match chart {
                Chart::A => f.dehom_t(),
                Chart::B => f.dehom_w(),
            };
            Ok(FormLog::Na(na_val(field, p.kind(), &poly)?))
        }
        None => {
            let (a, b) = arch_rep(x, chart)?;
            Ok(FormLog::Real(f.to_float().log_abs(a, b)))
        }
    }
}

/// Potential of `phi` at `x`, relative to the chart representative.
pub fn potential(phi: &GlobalTropFSMetric, x: &FiberPoint, chart: Chart) -> Result<GreenValue> {
    match x.field() {
        Some(field) => {
            let p = chart_point(x, chart);
            Ok(match phi.na_potential(&field, p.kind(), chart)? {
                NaPot::MinusInfinity => GreenValue::MinusInfinity,
                NaPot::Finite(u, c) => GreenValue::Exact { units: u, constant: c, unit: field.unit() },
            })
        }
        None => {
            let (a, b) = arch_rep(x, chart)?;
            let v = phi.arch_potential(a, b, x.base().t());
            Ok(if v == f64::NEG_INFINITY { GreenValue::MinusInfinity } else { GreenValue::Real(v) })
        }
    }
}

/// `phi(x) - d log max(|X|, |Y|)`: the metric as a function on the fiber.
pub fn relative_potential(phi: &GlobalTropFSMetric, x: &FiberPoint) -> Result<GreenValue> {
    let chart = default_chart(x);
    let pot = potential(phi, x, chart)?;
    let std = potential(&GlobalTropFSMetric::standard(), x, chart)?;
    Ok(pot.sub(&std.scale(phi.d())))
}

/// Difference of two metrics on the same line bundle, as a function.
pub fn metric_difference(a: &GlobalTropFSMetric, b: &GlobalTropFSMetric, x: &FiberPoint) -> Result<GreenValue> {
    if a.d() != b.d() {
        return Err(Error::input("metrics live on different line bundles"));
    }
    let chart = default_chart(x);
    Ok(potential(a, x, chart)?.sub(&potential(b, x, chart)?))
}

/// `g = phi - log|s_D|` for a reference divisor `D = sum a_h div(f_h)`.
#[derive(Clone, Debug)]
pub struct GreenFunction {
    pub metric: Arc<GlobalTropFSMetric>,
    pub reference: Vec<(Form, Q)>,
}

impl GreenFunction {
    pub fn new(metric: Arc<GlobalTropFSMetric>, reference: Vec<(Form, Q)>) -> Result<Self> {
        let deg: Q = reference.iter().map(|(f, a)| a * Q::from_integer(f.degree().into())).sum();
        if &deg != metric.d() {
            return Err(Error::input(format!(
                "reference divisor has degree {}, metric has degree {}",
                arith::format_rational(&deg),
                arith::format_rational(metric.d())
            )));
        }
        for (f, _) in &reference {
            if f.is_zero() || f.degree() == 0 {
                return Err(Error::input("reference components must be forms of positive degree"));
            }
        }
        Ok(GreenFunction { metric, reference })
    }
}

/// Green function value; `+inf` on the support of the (effective part of
/// the) reference divisor.
pub fn green_eval(g: &GreenFunction, x: &FiberPoint) -> Result<GreenValue> {
    green_eval_in_chart(g, x, default_chart(x))
}

pub fn green_eval_in_chart(g: &GreenFunction, x: &FiberPoint, chart: Chart) -> Result<GreenValue> {
    let field = x.field();
    let mut acc = potential(&g.metric, x, chart)?;
    for (f, a) in &g.reference {
        let l = match form_log(field.as_ref(), x, f, chart)? {
            FormLog::Na(None) => GreenValue::MinusInfinity,
            FormLog::Na(Some(v)) => GreenValue::Exact { units: -v, constant: Q::zero(), unit: field.unwrap().unit() },
            FormLog::Real(r) => {
                let r = r * x.base().t();
                if r == f64::NEG_INFINITY {
                    GreenValue::MinusInfinity
                } else {
                    GreenValue::Real(r)
                }
            }
        };
        acc = acc.sub(&l.scale(a));
    }
    Ok(acc)
}

/// The restriction of a global metric to one fiber.
#[derive(Clone, Debug)]
pub struct FiberMetric {
    pub metric: Arc<GlobalTropFSMetric>,
    pub base: SpectrumPoint,
}

impl FiberMetric {
    /// `phi - d log max(|X|, |Y|)` at a point of this fiber.
    pub fn eval(&self, x: &FiberPoint) -> Result<GreenValue> {
        if x.base() != &self.base {
            return Err(Error::WrongFiber(format!("{x} is not over {}", self.base)));
        }
        relative_potential(&self.metric, x)
    }
}

pub fn restrict_to_fiber(phi: &Arc<GlobalTropFSMetric>, base: SpectrumPoint) -> FiberMetric {
    FiberMetric { metric: phi.clone(), base }
}

/// Outcome of the search for common zeros of the sections on `P^1_Z`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommonZeroReport {
    pub ok: bool,
    /// Common zero on the generic fiber.
    pub bad_generic: bool,
    pub bad_primes: Vec<BigInt>,
}

fn mixing_coefficients(n: usize, attempt: usize, salt: usize) -> Vec<BigInt> {
    // Small deterministic integers, varied across attempts.
    (0..n)
        .map(|j| {
            let v = (attempt * 7 + j * j * 3 + salt * (j + 1) * 5 + 1) % 13;
            BigInt::from(v as i64 + 1)
        })
        .collect()
}

fn combine(forms: &[&Form], coeffs: &[BigInt]) -> Form {
    let mut acc = Form::new(vec![BigInt::zero(); forms[0].degree() + 1]);
    for (f, c) in forms.iter().zip(coeffs) {
        acc = acc.add(&f.scale(c)).unwrap();
    }
    acc
}

/// Whether the sections have a common zero on `P^1_Q` or on some `P^1_{F_p}`.
pub fn common_zeros(forms: &[&Form]) -> Result<CommonZeroReport> {
    let n = forms[0].degree();
    if n == 0 {
        // Constants vanish on a whole fiber exactly when p divides all.
        let g = forms.iter().fold(BigInt::zero(), |g, f| g.gcd(&f.coeffs()[0]));
        let bad = if g.is_one() { Vec::new() } else { prime_factors(&g)? };
        return Ok(CommonZeroReport { ok: bad.is_empty(), bad_generic: false, bad_primes: bad });
    }
    let at_infinity = forms.iter().all(|f| f.x_lead().is_zero());
    let g = forms.iter().map(|f| f.dehom_t()).fold(crate::poly::UPoly::zero(), |g, f| g.gcd(&f));
    if at_infinity || g.degree().is_some_and(|d| d > 0) {
        return Ok(CommonZeroReport { ok: false, bad_generic: true, bad_primes: Vec::new() });
    }
    // A prime with a common zero divides the resultant of any two integer
    // combinations.
    let mut res = BigInt::zero();
    for attempt in 0..64 {
        let a = combine(forms, &mixing_coefficients(forms.len(), attempt, 0));
        let b = combine(forms, &mixing_coefficients(forms.len(), attempt, 1));
        if a.x_lead().is_zero() {
            continue;
        }
        res = form_resultant(&a, &b);
        if !res.is_zero() {
            break;
        }
    }
    if res.is_zero() {
        return Err(Error::Evaluation("no nonvanishing resultant found".into()));
    }
    let polys: Vec<Vec<BigInt>> = forms.iter().map(|f| integer_coeffs(&f.dehom_t()).unwrap_or_default()).collect();
    let mut bad = Vec::new();
    for p in prime_factors(&res)? {
        let inf = forms.iter().all(|f| f.x_lead().mod_floor(&p).is_zero());
        let common = match gcd_degree_mod_p(&polys, &p) {
            None => true,
            Some(d) => d > 0,
        };
        if inf || common {
            bad.push(p);
        }
    }
    Ok(CommonZeroReport { ok: bad.is_empty(), bad_generic: false, bad_primes: bad })
}

pub fn check_no_common_zero(phi: &GlobalTropFSMetric) -> Result<CommonZeroReport> {
    if phi.certified {
        return Ok(CommonZeroReport { ok: true, bad_generic: false, bad_primes: Vec::new() });
    }
    let forms: Vec<&Form> = phi.terms.iter().map(|t| &t.section).collect();
    common_zeros(&forms)
}

/// A polynomial endomorphism `[F0 : F1]` of `P^1_Z`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyMap {
    pub f0: Form,
    pub f1: Form,
}

impl PolyMap {
    pub fn new(f0: Form, f1: Form) -> Result<PolyMap> {
        if f0.degree() != f1.degree() || f0.degree() == 0 {
            return Err(Error::input("map components must share a positive degree"));
        }
        Ok(PolyMap { f0, f1 })
    }

    pub fn degree(&self) -> usize {
        self.f0.degree()
    }

    /// Fails when the map is undefined somewhere on `P^1_Z`.
    pub fn check(&self) -> Result<()> {
        let r = common_zeros(&[&self.f0, &self.f1])?;
        if r.ok {
            Ok(())
        } else if r.bad_generic {
            Err(Error::input("map components share a zero over Q"))
        } else {
            let ps: Vec<String> = r.bad_primes.iter().map(|p| p.to_string()).collect();
            Err(Error::input(format!("map has bad reduction at {}", ps.join(", "))))
        }
    }

    /// `self o other`.
    pub fn compose(&self, other: &PolyMap) -> Result<PolyMap> {
        PolyMap::new(self.f0.compose(&other.f0, &other.f1)?, self.f1.compose(&other.f0, &other.f1)?)
    }

    fn floats(&self) -> (FloatForm, FloatForm) {
        (self.f0.to_float(), self.f1.to_float())
    }
}

fn plan_of(phi: &GlobalTropFSMetric) -> Plan {
    match &phi.plan {
        Some(p) => Plan { base: p.base.clone(), maps: p.maps.clone() },
        None => Plan { base: phi.floats.clone(), maps: Vec::new() },
    }
}

/// `q^-1 F^* phi`: sections `s_j(F0, F1)` with multiplier `m q`.
pub fn pullback(phi: &GlobalTropFSMetric, f: &PolyMap) -> Result<GlobalTropFSMetric> {
    f.check()?;
    let terms = phi
        .terms
        .iter()
        .map(|t| Ok(Term { section: t.section.compose(&f.f0, &f.f1)?, lambda: t.lambda.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let mut out = GlobalTropFSMetric::new(phi.d.clone(), phi.m * f.degree() as u64, terms)?;
    let mut plan = plan_of(phi);
    plan.maps.insert(0, f.floats());
    out.plan = Some(Arc::new(plan));
    out.certified = phi.certified;
    Ok(out)
}

/// `phi_i = q^-i (F^i)^* phi_std` for `i = 0..=i_max`.
pub fn invariant_metric_sequence(f: &PolyMap, i_max: usize, degree_cap: u64) -> Result<Vec<GlobalTropFSMetric>> {
    f.check()?;
    let q = f.degree() as u64;
    let top = q.checked_pow(i_max as u32).filter(|&v| v <= degree_cap);
    if top.is_none() {
        return Err(Error::unsupported(format!(
            "degree {q}^{i_max} exceeds the cap {degree_cap}"
        )));
    }
    let mut out = vec![GlobalTropFSMetric::standard()];
    let mut iterate: Option<PolyMap> = None;
    let fl = f.floats();
    for i in 1..=i_max {
        let it = match &iterate {
            None => f.clone(),
            Some(g) => f.compose(g)?,
        };
        let mut phi = GlobalTropFSMetric::new(
            Q::one(),
            q.pow(i as u32),
            vec![Term::pure(it.f0.clone()), Term::pure(it.f1.clone())],
        )?;
        phi.plan = Some(Arc::new(Plan {
            base: vec![Form::x().to_float(), Form::y().to_float()],
            maps: vec![fl.clone(); i],
        }));
        phi.certified = true;
        out.push(phi);
        iterate = Some(it);
    }
    Ok(out)
}

/// Whether two metrics are the same function, by a polynomial identity:
/// after raising to multiplier `lcm(m, m')` their nondominated terms agree
/// up to sign.
pub fn same_metric(a: &GlobalTropFSMetric, b: &GlobalTropFSMetric) -> bool {
    if a.d != b.d {
        return false;
    }
    // Cheap rejection before raising sections to common powers.
    for k in 0..4 {
        let z = Complex64::from_polar(0.5 + 0.4 * k as f64, 0.7 + 1.3 * k as f64);
        let one = Complex64::new(1.0, 0.0);
        let (u, v) = (a.arch_potential(z, one, 1.0), b.arch_potential(z, one, 1.0));
        if (u - v).abs() > 1e-9 * (1.0 + u.abs()) {
            return false;
        }
    }
    let mm = a.m.lcm(&b.m);
    let normalize = |phi: &GlobalTropFSMetric| {
        let k = (mm / phi.m) as usize;
        let kq = Q::from_integer(k.into());
        let mut v: Vec<(Form, Q)> = phi
            .terms
            .iter()
            .map(|t| {
                let s = t.section.pow(k);
                let s = if s.coeffs().iter().rev().find(|c| !c.is_zero()).unwrap().is_negative() {
                    s.scale(&-BigInt::one())
                } else {
                    s
                };
                (s, &t.lambda * &kq)
            })
            .collect();
        v.sort();
        v.dedup();
        v
    };
    normalize(a) == normalize(b)
}
