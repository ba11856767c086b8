// SPDX-License-Identifier: Apache-2.0

//! Boundary divisors, model adelic divisors on an open `U` in `P^1_Z`, the
//! boundary norm and Cauchy sequences for it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith::{self, is_prime_u64, prime_factors, q_to_f64, Q};
use crate::error::{Error, Result};
use crate::fiber::{is_interior, ArchCoord, FiberPoint, NaField, OpenSubscheme, PointKind, ProjQ};
use crate::metric::{
    check_no_common_zero, default_chart, same_metric, green_eval, green_eval_in_chart, potential, GlobalTropFSMetric, GreenFunction,
    GreenValue, PolyMap, Term,
};
use crate::monge_ampere::ma_nonarch;
use crate::poly::Form;
use crate::spectrum::{BaseKind, Place, SpectrumPoint};
use crate::tree::{DiscTree, KDisc, Radius};

/// `m^-1 max(log|X^{md}|, log|Y^{md}|)`, i.e. `d` times the standard metric.
pub fn standard_metric_of_degree(d: &Q) -> Result<GlobalTropFSMetric> {
    if d.is_negative() {
        return Err(Error::input("degree must be nonnegative"));
    }
    if d.is_zero() {
        return Ok(GlobalTropFSMetric::trivial());
    }
    let m = d.denom().to_u64().ok_or_else(|| Error::input("degree denominator too large"))?;
    let n = d.numer().to_usize().ok_or_else(|| Error::input("degree too large"))?;
    if m == 1 {
        return Ok(GlobalTropFSMetric::standard_multiple(n));
    }
    GlobalTropFSMetric::new(d.clone(), m, vec![Term::pure(Form::x().pow(n)), Term::pure(Form::y().pow(n))])
}

/// An effective divisor supported on the complement of `U`, with a
/// Green function that vanishes exactly on the interior of `U`'s analytic
/// space and is positive on every Archimedean fiber.
#[derive(Clone, Debug)]
pub struct BoundaryDivisor {
    pub horizontal: Vec<(Form, Q)>,
    pub vertical: Vec<(Place, Q)>,
    pub green: GreenFunction,
}

impl BoundaryDivisor {
    pub fn new(horizontal: Vec<(Form, Q)>, vertical: Vec<(Place, Q)>, metric: GlobalTropFSMetric) -> Result<Self> {
        let mut hz = Vec::new();
        for (f, a) in horizontal {
            if !a.is_positive() {
                return Err(Error::input("boundary coefficients must be positive"));
            }
            if f.degree() == 0 {
                return Err(Error::input("horizontal components need positive degree"));
            }
            hz.push((f.primitive().1, a));
        }
        for (pl, a) in &vertical {
            if !a.is_positive() {
                return Err(Error::input("boundary coefficients must be positive"));
            }
            if let Place::Prime(p) = pl {
                if !is_prime_u64(*p) {
                    return Err(Error::input(format!("{p} is not prime")));
                }
            }
        }
        let green = GreenFunction::new(Arc::new(metric), hz.clone())?;
        let d0 = BoundaryDivisor { horizontal: hz, vertical, green };
        d0.validate()?;
        Ok(d0)
    }

    /// Boundary divisor whose horizontal part carries the standard metric.
    pub fn with_standard_metric(horizontal: Vec<(Form, Q)>, vertical: Vec<(Place, Q)>) -> Result<Self> {
        let deg: Q = horizontal.iter().map(|(f, a)| a * Q::from_integer(f.degree().into())).sum();
        BoundaryDivisor::new(horizontal, vertical, standard_metric_of_degree(&deg)?)
    }

    pub fn open_subscheme(&self) -> OpenSubscheme {
        OpenSubscheme {
            removed_forms: self.horizontal.iter().map(|(f, _)| f.clone()).collect(),
            removed_primes: self
                .vertical
                .iter()
                .filter_map(|(pl, _)| match pl {
                    Place::Prime(p) => Some(*p),
                    Place::Infinity => None,
                })
                .collect(),
        }
    }

    pub fn coefficient_of_form(&self, f: &Form) -> Option<&Q> {
        self.horizontal.iter().find(|(g, _)| g == f).map(|(_, a)| a)
    }

    pub fn coefficient_of_place(&self, pl: Place) -> Option<&Q> {
        self.vertical.iter().find(|(q, _)| *q == pl).map(|(_, a)| a)
    }

    /// The same data viewed as a model adelic divisor.
    pub fn as_divisor(&self) -> ModelAdelicDivisor {
        ModelAdelicDivisor {
            horizontal: self.horizontal.iter().cloned().collect(),
            vertical: self.vertical.iter().cloned().collect(),
            metrics: vec![(Q::one(), self.green.metric.clone())],
            open: self.open_subscheme(),
        }
        .canonical()
    }

    fn validate(&self) -> Result<()> {
        // Positivity on the complex fiber at eps = 1 over a polar sample.
        let base = SpectrumPoint::archimedean(1.0)?;
        for z in arch_sample(&NormConfig { radii: 12, angles: 24, ..NormConfig::default() }) {
            for x in [FiberPoint::arch(base, z)?, FiberPoint::arch(base, z)?.invert()] {
                let g = analytic_boundary_green(self, &x)?;
                if matches!(g, GreenValue::PlusInfinity) {
                    continue;
                }
                if g.to_f64() <= 0.0 {
                    return Err(Error::input(format!(
                        "boundary Green function is not positive at {x}; add a component at infinity"
                    )));
                }
            }
        }
        // Nonnegativity at the Gauss point of the trivial fiber.
        let g = analytic_boundary_green(self, &FiberPoint::gauss(SpectrumPoint::trivial())?)?;
        if g.to_f64() < 0.0 {
            return Err(Error::input("boundary Green function is negative at the Gauss point"));
        }
        Ok(())
    }
}

/// Vertical contribution of a place with coefficient `c` at `x`.
fn vertical_term(pl: Place, c: &Q, x: &FiberPoint) -> GreenValue {
    let zero = GreenValue::Exact { units: Q::zero(), constant: Q::zero(), unit: x.field().map_or(1.0, |f| f.unit()) };
    match (pl, x.base().kind()) {
        (Place::Prime(p), BaseKind::PAdic { p: q, .. }) if p == q => {
            GreenValue::Exact { units: c.clone(), constant: Q::zero(), unit: x.field().unwrap().unit() }
        }
        (Place::Prime(p), BaseKind::Residue { p: q }) if p == q => GreenValue::PlusInfinity,
        (Place::Infinity, BaseKind::Archimedean { eps }) => GreenValue::Real(q_to_f64(c) * eps),
        _ => zero,
    }
}

/// `g~ = g_{D0} + sum_v c_v log(1/|v|)` on the whole analytification.
pub fn analytic_boundary_green(d0: &BoundaryDivisor, x: &FiberPoint) -> Result<GreenValue> {
    let mut g = green_eval(&d0.green, x)?;
    for (pl, c) in &d0.vertical {
        g = g.add(&vertical_term(*pl, c, x));
    }
    Ok(g)
}

/// Whether `x` is interior for `U = P^1_Z - |D0|`.
pub fn boundary_interior(d0: &BoundaryDivisor, x: &FiberPoint) -> bool {
    is_interior(x, &d0.open_subscheme())
}

/// Membership in the set cut out by `g~ = 1`, or by `g~` attaining its
/// maximum over the norm-equivalence class of `x` with that maximum `<= 1`.
pub fn delta_membership(d0: &BoundaryDivisor, x: &FiberPoint) -> Result<bool> {
    const TOL: f64 = 1e-12;
    let g = analytic_boundary_green(d0, x)?;
    let gx = g.to_f64();
    if !boundary_interior(d0, x) && (gx - 1.0).abs() <= TOL {
        return Ok(true);
    }
    let ray_max = ray_maximum(d0, x)?;
    Ok(ray_max <= 1.0 + TOL && (gx - ray_max).abs() <= TOL)
}

/// `sup g~(y)` over points `y` with `|.|_y = |.|_x^s`, `s > 0`.
fn ray_maximum(d0: &BoundaryDivisor, x: &FiberPoint) -> Result<f64> {
    let pure = d0.green.metric.is_pure();
    let g = analytic_boundary_green(d0, x)?.to_f64();
    match x.base().kind() {
        BaseKind::Archimedean { eps } => {
            if pure {
                // g~ is linear in eps on the ray, and eps <= 1.
                Ok(g / eps)
            } else {
                let mut best = f64::NEG_INFINITY;
                for k in 1..=256 {
                    let e = k as f64 / 256.0;
                    let y = x.rebased(SpectrumPoint::archimedean(e)?)?;
                    best = best.max(analytic_boundary_green(d0, &y)?.to_f64());
                }
                Ok(best)
            }
        }
        BaseKind::PAdic { .. } | BaseKind::Trivial | BaseKind::Residue { .. } => {
            let scales = matches!(x.base().kind(), BaseKind::PAdic { .. })
                || matches!(x.kind(), PointKind::Disc { radius_val, .. } if !radius_val.is_zero());
            if !scales || g == 0.0 {
                Ok(g)
            } else {
                Ok(f64::INFINITY)
            }
        }
    }
}

/// Arithmetic divisor on `P^1_Z` restricted to `U`: a rational part with
/// horizontal, vertical and metric data.
///
/// Its Green function is `sum c_k phi_k - sum e_h log|f_h| + sum e_v log(1/|v|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelAdelicDivisor {
    pub horizontal: BTreeMap<Form, Q>,
    pub vertical: BTreeMap<Place, Q>,
    pub metrics: Vec<(Q, Arc<GlobalTropFSMetric>)>,
    pub open: OpenSubscheme,
}

impl ModelAdelicDivisor {
    pub fn new(
        horizontal: Vec<(Form, Q)>,
        vertical: Vec<(Place, Q)>,
        metrics: Vec<(Q, Arc<GlobalTropFSMetric>)>,
        open: OpenSubscheme,
    ) -> Result<Self> {
        let mut hz = BTreeMap::new();
        for (f, a) in horizontal {
            if f.degree() == 0 {
                return Err(Error::input("horizontal components need positive degree"));
            }
            *hz.entry(f.primitive().1).or_insert_with(Q::zero) += a;
        }
        let mut vt = BTreeMap::new();
        for (pl, a) in vertical {
            *vt.entry(pl).or_insert_with(Q::zero) += a;
        }
        let e = ModelAdelicDivisor { horizontal: hz, vertical: vt, metrics, open }.canonical();
        let deg_h: Q = e.horizontal.iter().map(|(f, a)| a * Q::from_integer(f.degree().into())).sum();
        let deg_m: Q = e.metrics.iter().map(|(c, m)| c * m.d()).sum();
        if deg_h != deg_m {
            return Err(Error::input(format!(
                "metric degree {} does not match divisor degree {}",
                arith::format_rational(&deg_m),
                arith::format_rational(&deg_h)
            )));
        }
        for (_, c) in e.integral_part() {
            if !c.is_integer() {
                return Err(Error::input("coefficients of components meeting U must be integers"));
            }
        }
        Ok(e)
    }

    /// Merged, zero-free, deterministically ordered form.
    fn canonical(mut self) -> Self {
        self.horizontal.retain(|_, a| !a.is_zero());
        self.vertical.retain(|_, a| !a.is_zero());
        let mut merged: Vec<(Q, Arc<GlobalTropFSMetric>)> = Vec::new();
        for (c, m) in self.metrics {
            match merged.iter_mut().find(|(_, n)| **n == *m || same_metric(n, &m)) {
                Some(entry) => entry.0 += c,
                None => merged.push((c, m)),
            }
        }
        merged.retain(|(c, _)| !c.is_zero());
        merged.sort_by_cached_key(|(_, m)| format!("{m:?}"));
        self.metrics = merged;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.horizontal.is_empty() && self.vertical.is_empty() && self.metrics.is_empty()
    }

    /// Components meeting `U`, which must carry integral coefficients.
    pub fn integral_part(&self) -> Vec<(String, Q)> {
        let mut out = Vec::new();
        for (f, a) in &self.horizontal {
            if !self.open.removed_forms.contains(f) {
                out.push((f.to_string(), a.clone()));
            }
        }
        for (pl, a) in &self.vertical {
            if let Place::Prime(p) = pl {
                if !self.open.removed_primes.contains(p) {
                    out.push((format!("fiber over {p}"), a.clone()));
                }
            }
        }
        out
    }

    pub fn scale(&self, s: &Q) -> Self {
        ModelAdelicDivisor {
            horizontal: self.horizontal.iter().map(|(f, a)| (f.clone(), a * s)).collect(),
            vertical: self.vertical.iter().map(|(p, a)| (*p, a * s)).collect(),
            metrics: self.metrics.iter().map(|(c, m)| (c * s, m.clone())).collect(),
            open: self.open.clone(),
        }
        .canonical()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.open != other.open {
            return Err(Error::input("divisors live on different open subschemes"));
        }
        let mut out = self.clone();
        for (f, a) in &other.horizontal {
            *out.horizontal.entry(f.clone()).or_insert_with(Q::zero) += a;
        }
        for (p, a) in &other.vertical {
            *out.vertical.entry(*p).or_insert_with(Q::zero) += a;
        }
        out.metrics.extend(other.metrics.iter().cloned());
        Ok(out.canonical())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-Q::one()))
    }

    /// First nonzero coefficient in canonical order.
    fn leading_coefficient(&self) -> Option<Q> {
        self.horizontal
            .values()
            .chain(self.vertical.values())
            .chain(self.metrics.iter().map(|(c, _)| c))
            .next()
            .cloned()
    }

    /// Green function value at `x`.
    pub fn green(&self, x: &FiberPoint) -> Result<GreenValue> {
        let chart = default_chart(x);
        // Zero metric with the horizontal part as reference gives -log|s_D|.
        let reference = GreenFunction {
            metric: Arc::new(GlobalTropFSMetric::trivial()),
            reference: self.horizontal.iter().map(|(f, a)| (f.clone(), a.clone())).collect(),
        };
        let mut acc = green_eval_in_chart(&reference, x, chart)?;
        for (c, m) in &self.metrics {
            acc = acc.add(&potential(m, x, chart)?.scale(c));
        }
        for (pl, c) in &self.vertical {
            acc = acc.add(&vertical_term(*pl, c, x));
        }
        Ok(acc)
    }
}

/// Extended nonnegative rational.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtQ {
    Finite(Q),
    Infinite,
}

impl ExtQ {
    pub fn to_f64(&self) -> f64 {
        match self {
            ExtQ::Finite(q) => q_to_f64(q),
            ExtQ::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for ExtQ {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtQ::Finite(q) => write!(f, "{}", arith::format_rational(q)),
            ExtQ::Infinite => write!(f, "inf"),
        }
    }
}

/// How the non-Archimedean part of the norm was certified.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormRegime {
    /// Proportional to the boundary divisor: exact.
    Proportional,
    /// All metrics are pure without common zeros, hence equal to multiples
    /// of the standard metric at every non-Archimedean point.
    Model,
    /// Exact evaluation at tree vertices and rays on representative fibers.
    TreeVertices,
    /// Evaluation at sample points only.
    Sampled,
    /// The integral part is nonzero or a component is not in the boundary.
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormReport {
    pub value: ExtQ,
    pub regime: NormRegime,
    /// The Archimedean supremum is taken over a sample grid; `false` when it
    /// determined the value.
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormConfig {
    /// Polar sample on `|z| <= 1` in each chart at `eps = 1`.
    pub radii: usize,
    /// Even, so that `z = +-1` is sampled.
    pub angles: usize,
    /// Additional exponents for metrics that are not pure.
    pub eps_samples: Vec<f64>,
    /// Round sampled suprema up to this dyadic precision. `None` keeps the
    /// exact rational supremum over the sample, which is exactly homogeneous
    /// and subadditive.
    pub dyadic_bits: Option<u32>,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig { radii: 48, angles: 96, eps_samples: vec![0.5, 0.25, 0.125], dyadic_bits: None }
    }
}

fn arch_sample(cfg: &NormConfig) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0)];
    for i in 1..=cfg.radii {
        let r = i as f64 / cfg.radii as f64;
        // Upper half plane suffices: points are taken up to conjugation.
        for k in 0..=cfg.angles / 2 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / cfg.angles as f64;
            let z = if k == 0 {
                Complex64::new(r, 0.0)
            } else if 2 * k == cfg.angles {
                Complex64::new(-r, 0.0)
            } else {
                Complex64::from_polar(r, th)
            };
            out.push(z);
        }
    }
    out
}

#[derive(Clone, Debug)]
enum Bound {
    /// Certified at an exactly evaluated point.
    Exact(Q),
    /// Exact rational arithmetic on sampled floating-point values.
    Sampled(Q),
    Infinite,
}

fn ratio(ge: &GreenValue, g0: &GreenValue) -> Option<Bound> {
    use GreenValue::*;
    match (ge, g0) {
        (_, PlusInfinity) => None,
        (PlusInfinity | MinusInfinity, _) => Some(Bound::Infinite),
        (Exact { units: ue, constant: ce, .. }, Exact { units: u0, constant: c0, .. })
            if ce.is_zero() && c0.is_zero() =>
        {
            if u0.is_zero() {
                if ue.is_zero() {
                    None
                } else {
                    Some(Bound::Infinite)
                }
            } else {
                Some(Bound::Exact(ue.abs() / u0))
            }
        }
        _ => sampled_ratio(exact_value(ge), g0),
    }
}

/// `units * unit + constant` as a rational, with `unit` taken exactly.
fn exact_value(g: &GreenValue) -> Option<Q> {
    match g {
        GreenValue::Exact { units, constant, unit } => Some(units * Q::from_float(*unit)? + constant),
        GreenValue::Real(v) => Q::from_float(*v),
        GreenValue::PlusInfinity | GreenValue::MinusInfinity => None,
    }
}

fn sampled_ratio(ge: Option<Q>, g0: &GreenValue) -> Option<Bound> {
    if matches!(g0, GreenValue::PlusInfinity) {
        return None;
    }
    let Some(ge) = ge else {
        return Some(Bound::Infinite);
    };
    let g0 = exact_value(g0)?;
    if !g0.is_positive() {
        return if ge.is_zero() { None } else { Some(Bound::Infinite) };
    }
    Some(Bound::Sampled(ge.abs() / g0))
}

/// Upper dyadic endpoint at the configured precision.
fn round_up(x: &Q, bits: Option<u32>) -> Q {
    match bits {
        None => x.clone(),
        Some(bits) => {
            let den = BigInt::one() << bits;
            Q::new((x * Q::from_integer(den.clone())).ceil().to_integer(), den)
        }
    }
}

struct Sup {
    exact: Option<Q>,
    sampled: Option<Q>,
    infinite: bool,
}

impl Sup {
    fn new() -> Self {
        Sup { exact: None, sampled: None, infinite: false }
    }

    fn push(&mut self, b: Option<Bound>) {
        let slot = match &b {
            None => return,
            Some(Bound::Infinite) => {
                self.infinite = true;
                return;
            }
            Some(Bound::Exact(_)) => &mut self.exact,
            Some(Bound::Sampled(_)) => &mut self.sampled,
        };
        let (Some(Bound::Exact(q)) | Some(Bound::Sampled(q))) = b else { unreachable!() };
        if slot.as_ref().is_none_or(|e| q > *e) {
            *slot = Some(q);
        }
    }
}

fn all_metrics<'a>(e: &'a ModelAdelicDivisor, d0: &'a BoundaryDivisor) -> Vec<&'a GlobalTropFSMetric> {
    let mut v: Vec<&GlobalTropFSMetric> = e.metrics.iter().map(|(_, m)| m.as_ref()).collect();
    v.push(d0.green.metric.as_ref());
    v
}

fn model_regime(e: &ModelAdelicDivisor, d0: &BoundaryDivisor) -> Result<bool> {
    for m in all_metrics(e, d0) {
        if !m.is_pure() || !check_no_common_zero(m)?.ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Primes where the tree data on a fiber may differ from the trivial one.
fn bad_primes(e: &ModelAdelicDivisor, d0: &BoundaryDivisor) -> Result<Option<BTreeSet<u64>>> {
    let mut ints: Vec<BigInt> = Vec::new();
    let mut roots: Vec<Q> = Vec::new();
    let mut forms: Vec<Form> = e.horizontal.keys().cloned().collect();
    forms.extend(d0.horizontal.iter().map(|(f, _)| f.clone()));
    for m in all_metrics(e, d0) {
        forms.extend(m.terms().iter().map(|t| t.section.clone()));
    }
    for f in &forms {
        let fac = match f.linear_factors() {
            Ok(fac) => fac,
            Err(Error::Unsupported(_)) => return Ok(None),
            Err(err) => return Err(err),
        };
        ints.push(fac.content.clone());
        for (lf, _) in &fac.factors {
            ints.push(lf.a.clone());
            ints.push(lf.b.clone());
            if let Some(r) = lf.root() {
                roots.push(r);
            }
        }
    }
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            let d = &roots[i] - &roots[j];
            ints.push(d.numer().clone());
            ints.push(d.denom().clone());
        }
    }
    let mut out = BTreeSet::new();
    for n in ints {
        if n.is_zero() || n.abs().is_one() {
            continue;
        }
        for p in prime_factors(&n)? {
            match p.to_u64() {
                Some(p) => {
                    out.insert(p);
                }
                None => return Ok(None),
            }
        }
    }
    for pl in e.vertical.keys().chain(d0.vertical.iter().map(|(p, _)| p)) {
        if let Place::Prime(p) = pl {
            out.insert(*p);
        }
    }
    Ok(Some(out))
}

fn kdisc_of(x: &FiberPoint, field: &NaField) -> Option<KDisc> {
    match x.kind() {
        PointKind::Type1(ProjQ::Finite(a)) => Some(KDisc::point(field, a)),
        PointKind::Disc { center, radius_val } => Some(KDisc::disc(field, center, radius_val.clone())),
        _ => None,
    }
}

/// Vertex and ray constraints on one non-Archimedean fiber.
fn tree_constraints(e: &ModelAdelicDivisor, d0: &BoundaryDivisor, base: SpectrumPoint, sup: &mut Sup) -> Result<()> {
    let field = NaField::of(&base).unwrap();
    let mut leaves = vec![KDisc::gauss()];
    for m in all_metrics(e, d0) {
        for atom in ma_nonarch(m, base)?.atoms {
            if let Some(k) = kdisc_of(&atom.point, &field) {
                leaves.push(k);
            }
        }
    }
    let mut forms: Vec<Form> = e.horizontal.keys().cloned().collect();
    forms.extend(d0.horizontal.iter().map(|(f, _)| f.clone()));
    for f in &forms {
        for (lf, _) in f.linear_factors()?.factors {
            if let Some(r) = lf.root() {
                if let ProjQ::Finite(r) = field.normalize_coord(&ProjQ::Finite(r)) {
                    leaves.push(KDisc::point(&field, &r));
                }
            }
        }
    }
    let tree = DiscTree::span(field, &leaves);
    let eval = |k: &KDisc| -> Result<(GreenValue, GreenValue)> {
        let x = k.to_point(base)?;
        Ok((e.green(&x)?, analytic_boundary_green(d0, &x)?))
    };
    let ray = |center: &Q, r1: Q, r2: Q, sup: &mut Sup| -> Result<()> {
        let (e1, g1) = eval(&KDisc::disc(&field, center, r1))?;
        let (e2, g2) = eval(&KDisc::disc(&field, center, r2))?;
        sup.push(ratio(&e1, &g1));
        // g is affine along the ray, so slopes bound the tail.
        sup.push(ratio(&e2.sub(&e1), &g2.sub(&g1)));
        Ok(())
    };
    for (i, k) in tree.nodes.iter().enumerate() {
        match &k.radius {
            Radius::Finite(_) => {
                let (ge, g0) = eval(k)?;
                sup.push(ratio(&ge, &g0));
            }
            Radius::Infinite => {
                let rp = tree.nodes[tree.parent[i].unwrap()].finite_radius().unwrap().clone();
                ray(&k.center, &rp + Q::one(), &rp + Q::from_integer(2.into()), sup)?;
            }
        }
    }
    let root = &tree.nodes[tree.root()];
    let rr = root.finite_radius().unwrap().clone();
    ray(&root.center, &rr - Q::one(), &rr - Q::from_integer(2.into()), sup)?;
    Ok(())
}

fn sampled_constraints(e: &ModelAdelicDivisor, d0: &BoundaryDivisor, bases: &[SpectrumPoint], sup: &mut Sup) -> Result<()> {
    let coords = [0i64, 1, -1, 2, 3];
    for &base in bases {
        let mut pts = vec![FiberPoint::gauss(base)?, FiberPoint::type1(base, ProjQ::Infinity)?];
        for &a in &coords {
            pts.push(FiberPoint::type1(base, ProjQ::Finite(Q::from_integer(a.into())))?);
            for r in [-2i64, -1, 1, 2] {
                pts.push(FiberPoint::disc(base, Q::from_integer(a.into()), Q::from_integer(r.into()))?);
            }
        }
        for x in pts {
            sup.push(ratio(&e.green(&x)?, &analytic_boundary_green(d0, &x)?));
        }
    }
    Ok(())
}

/// Number of plan maps shared by every metric of `e`, when the boundary
/// Green function is constant on complex fibers and `e` has no horizontal
/// part; the Archimedean supremum can then be taken after the common map,
/// which is surjective.
fn common_prefix(e: &ModelAdelicDivisor, d0: &BoundaryDivisor) -> usize {
    let g0_constant = d0.horizontal.is_empty() && d0.green.metric.d().is_zero();
    if !g0_constant || !e.horizontal.is_empty() || e.metrics.is_empty() {
        return 0;
    }
    let first = e.metrics[0].1.plan_maps();
    let mut n = first.len();
    for (_, m) in &e.metrics[1..] {
        let maps = m.plan_maps();
        n = n.min(maps.iter().zip(first).take_while(|(a, b)| a == b).count());
    }
    n
}

fn arch_constraints_reduced(
    e: &ModelAdelicDivisor,
    d0: &BoundaryDivisor,
    skip: usize,
    cfg: &NormConfig,
    sup: &mut Sup,
) -> Result<()> {
    let maps = e.metrics[0].1.plan_maps();
    let q: f64 = maps[..skip].iter().map(|(f, _)| f.degree() as f64).product();
    let one = Complex64::new(1.0, 0.0);
    let pure = all_metrics(e, d0).iter().all(|m| m.is_pure());
    let mut eps = vec![1.0];
    if !pure {
        eps.extend(cfg.eps_samples.iter().copied());
    }
    for &ep in &eps {
        let base = SpectrumPoint::archimedean(ep)?;
        let probe = FiberPoint::arch(base, Complex64::new(0.0, 0.0))?;
        let vertical = e.vertical.iter().map(|(pl, c)| vertical_q(*pl, c, &probe)).sum::<Q>();
        let g0 = analytic_boundary_green(d0, &probe)?;
        for z in arch_sample(cfg) {
            for (x, y) in [(z, one), (one, z)] {
                let mut g = Some(vertical.clone());
                for (c, m) in &e.metrics {
                    let v = Q::from_float(m.arch_potential_after(skip, x, y, ep) / q);
                    g = g.zip(v).map(|(g, v)| g + c * v);
                }
                sup.push(sampled_ratio(g, &g0));
            }
        }
    }
    Ok(())
}

fn arch_constraints(e: &ModelAdelicDivisor, d0: &BoundaryDivisor, cfg: &NormConfig, sup: &mut Sup) -> Result<()> {
    let skip = common_prefix(e, d0);
    if skip > 0 {
        return arch_constraints_reduced(e, d0, skip, cfg, sup);
    }
    let pure = all_metrics(e, d0).iter().all(|m| m.is_pure());
    let mut eps = vec![1.0];
    if !pure {
        eps.extend(cfg.eps_samples.iter().copied());
    }
    let sample = arch_sample(cfg);
    for &ep in &eps {
        let base = SpectrumPoint::archimedean(ep)?;
        for &z in &sample {
            let x = FiberPoint::arch(base, z)?;
            for y in [x.clone(), x.invert()] {
                if matches!(y.kind(), PointKind::Arch(ArchCoord::Infinity)) {
                    continue;
                }
                sup.push(sampled_ratio(arch_value(e, &y)?, &analytic_boundary_green(d0, &y)?));
            }
        }
    }
    Ok(())
}

/// Vertical contribution on a complex fiber, exactly in `eps`.
fn vertical_q(pl: Place, c: &Q, x: &FiberPoint) -> Q {
    match (pl, x.base().kind()) {
        (Place::Infinity, BaseKind::Archimedean { eps }) => c * Q::from_float(eps).unwrap(),
        _ => Q::zero(),
    }
}

/// Green function of `e` at a complex point as an exact combination of the
/// floating-point values of its components, so that the result is exactly
/// linear in the coefficients of `e`. `None` on the polar locus.
fn arch_value(e: &ModelAdelicDivisor, x: &FiberPoint) -> Result<Option<Q>> {
    let chart = default_chart(x);
    let mut acc = e.vertical.iter().map(|(pl, c)| vertical_q(*pl, c, x)).sum::<Q>();
    let trivial = Arc::new(GlobalTropFSMetric::trivial());
    for (f, a) in &e.horizontal {
        let g = GreenFunction { metric: trivial.clone(), reference: vec![(f.clone(), Q::one())] };
        match exact_value(&green_eval_in_chart(&g, x, chart)?) {
            Some(v) => acc += a * v,
            None => return Ok(None),
        }
    }
    for (c, m) in &e.metrics {
        match exact_value(&potential(m, x, chart)?) {
            Some(v) => acc += c * v,
            None => return Ok(None),
        }
    }
    Ok(Some(acc))
}

/// `inf { eps >= 0 : -eps D0 <= E <= eps D0 }`, with the supremum over the
/// complex fiber taken on a sample grid and rounded up to a dyadic.
pub fn boundary_norm(e: &ModelAdelicDivisor, d0: &BoundaryDivisor, cfg: &NormConfig) -> Result<NormReport> {
    if e.open != d0.open_subscheme() {
        return Err(Error::input("divisor and boundary divisor live on different models"));
    }
    let unbounded = NormReport { value: ExtQ::Infinite, regime: NormRegime::Unbounded, exact: true };
    if e.integral_part().iter().any(|(_, c)| !c.is_zero()) {
        return Ok(unbounded);
    }
    let Some(s) = e.leading_coefficient() else {
        return Ok(NormReport { value: ExtQ::Finite(Q::zero()), regime: NormRegime::Proportional, exact: true });
    };
    // Factor E = s B so that the norm is exactly homogeneous.
    let b = e.scale(&s.recip());
    let scale = s.abs();
    if b == d0.as_divisor() {
        return Ok(NormReport { value: ExtQ::Finite(scale), regime: NormRegime::Proportional, exact: true });
    }
    let mut sup = Sup::new();
    // Coefficient conditions on boundary components.
    for (f, a) in &b.horizontal {
        match d0.coefficient_of_form(f) {
            Some(a0) => sup.push(Some(Bound::Exact(a.abs() / a0))),
            None => return Ok(unbounded),
        }
    }
    for (pl, a) in &b.vertical {
        match d0.coefficient_of_place(*pl) {
            Some(a0) => sup.push(Some(Bound::Exact(a.abs() / a0))),
            None => return Ok(unbounded),
        }
    }
    let regime = if model_regime(&b, d0)? {
        NormRegime::Model
    } else {
        let pure = all_metrics(&b, d0).iter().all(|m| m.is_pure());
        match bad_primes(&b, d0)? {
            Some(bad) if pure => {
                let good = (2u64..).find(|p| is_prime_u64(*p) && !bad.contains(p)).unwrap();
                let mut bases = vec![SpectrumPoint::trivial()];
                for &p in bad.iter().chain(std::iter::once(&good)) {
                    bases.push(SpectrumPoint::p_adic(p, 1.0 / p as f64)?);
                    bases.push(SpectrumPoint::p_adic(p, 0.0)?);
                }
                for base in bases {
                    tree_constraints(&b, d0, base, &mut sup)?;
                }
                NormRegime::TreeVertices
            }
            _ => {
                let mut bases = vec![SpectrumPoint::trivial()];
                for p in [2u64, 3, 5, 7, 11, 13] {
                    bases.push(SpectrumPoint::p_adic(p, 1.0 / p as f64)?);
                    bases.push(SpectrumPoint::p_adic(p, 0.0)?);
                }
                sampled_constraints(&b, d0, &bases, &mut sup)?;
                NormRegime::Sampled
            }
        }
    };
    arch_constraints(&b, d0, cfg, &mut sup)?;
    if sup.infinite {
        return Ok(NormReport { value: ExtQ::Infinite, regime, exact: false });
    }
    let exact_part = sup.exact.unwrap_or_else(Q::zero);
    let (value, exact) = match sup.sampled {
        Some(f) if f > exact_part => (round_up(&f, cfg.dyadic_bits), false),
        _ => (exact_part, regime != NormRegime::Sampled),
    };
    Ok(NormReport { value: ExtQ::Finite(value * scale), regime, exact })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CauchyWitness {
    /// `eps_i = max_{j > i} ||E_j - E_i||`.
    pub epsilons: Vec<ExtQ>,
    pub ratios: Vec<Option<f64>>,
    /// Last index through which the rate bound holds.
    pub verified_through: usize,
    pub first_failure: Option<usize>,
}

impl CauchyWitness {
    pub fn ok(&self) -> bool {
        self.first_failure.is_none()
    }
}

/// Checks `eps_i` is nonincreasing and `eps_i <= rate * eps_{i-1}`.
pub fn verify_cauchy(
    seq: &[ModelAdelicDivisor],
    d0: &BoundaryDivisor,
    rate: f64,
    cfg: &NormConfig,
) -> Result<CauchyWitness> {
    if seq.len() < 2 {
        return Err(Error::input("a Cauchy check needs at least two divisors"));
    }
    let n = seq.len();
    let mut norms = vec![vec![ExtQ::Finite(Q::zero()); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            norms[i][j] = boundary_norm(&seq[j].sub(&seq[i])?, d0, cfg)?.value;
        }
    }
    let mut epsilons = Vec::with_capacity(n - 1);
    for row in norms.iter().take(n - 1) {
        let mut best = ExtQ::Finite(Q::zero());
        for v in row.iter() {
            best = match (&best, v) {
                (ExtQ::Infinite, _) | (_, ExtQ::Infinite) => ExtQ::Infinite,
                (ExtQ::Finite(a), ExtQ::Finite(b)) => ExtQ::Finite(a.max(b).clone()),
            };
        }
        epsilons.push(best);
    }
    let mut ratios = vec![None];
    let mut first_failure = None;
    for i in 1..epsilons.len() {
        let (prev, cur) = (epsilons[i - 1].to_f64(), epsilons[i].to_f64());
        let r = if prev > 0.0 && prev.is_finite() { Some(cur / prev) } else { None };
        ratios.push(r);
        let fails = match (prev, cur) {
            (p, _) if p.is_infinite() => true,
            (p, c) if p == 0.0 => c != 0.0,
            (p, c) => c > rate * p,
        };
        if fails && first_failure.is_none() {
            first_failure = Some(i);
        }
    }
    if epsilons[0] == ExtQ::Infinite {
        first_failure = Some(0);
    }
    let verified_through = first_failure.map_or(epsilons.len() - 1, |f| f.saturating_sub(1));
    Ok(CauchyWitness { epsilons, ratios, verified_through, first_failure })
}

/// `E_i = (div(Y), phi_i)` on `U = P^1_Z` for the invariant sequence.
pub fn dynamical_divisors(seq: &[GlobalTropFSMetric]) -> Result<Vec<ModelAdelicDivisor>> {
    seq.iter()
        .map(|phi| {
            ModelAdelicDivisor::new(
                vec![(Form::y(), phi.d().clone())],
                Vec::new(),
                vec![(Q::one(), Arc::new(phi.clone()))],
                OpenSubscheme::whole(),
            )
        })
        .collect()
}

/// The boundary divisor `[inf]` with zero metric on `U = P^1_Z`.
pub fn archimedean_boundary() -> Result<BoundaryDivisor> {
    BoundaryDivisor::new(Vec::new(), vec![(Place::Infinity, Q::one())], GlobalTropFSMetric::trivial())
}

/// `sup |q^-1 F^* phi - phi|` over the complex sample grid. For pure
/// metrics without common zeros the non-Archimedean part vanishes
/// identically; otherwise it is evaluated exactly on sample fibers.
pub fn invariance_residual(phi: &GlobalTropFSMetric, f: &PolyMap, cfg: &NormConfig) -> Result<f64> {
    f.check()?;
    let pulled = crate::metric::pullback(phi, f)?;
    if same_metric(&pulled, phi) {
        // An exact fixed point: the defect is zero as a polynomial identity.
        return Ok(0.0);
    }
    let q = f.degree() as f64;
    let d = q_to_f64(phi.d());
    let (f0, f1) = (f.f0.to_float(), f.f1.to_float());
    let one = Complex64::new(1.0, 0.0);
    let mut best: f64 = 0.0;
    for z in arch_sample(cfg) {
        for (x, y) in [(z, one), (one, z)] {
            let n0 = x.norm().max(y.norm());
            let (x, y) = (x / n0, y / n0);
            let (a, b) = (f0.eval(x, y), f1.eval(x, y));
            let n = a.norm().max(b.norm());
            let pulled = (phi.arch_potential(a / n, b / n, 1.0) + d * n.ln()) / q;
            let here = phi.arch_potential(x, y, 1.0);
            best = best.max((pulled - here).abs());
        }
    }
    if !(phi.is_pure() && check_no_common_zero(phi)?.ok) {
        for p in [2u64, 3, 5] {
            for base in [SpectrumPoint::trivial(), SpectrumPoint::p_adic(p, 1.0 / p as f64)?] {
                for x in [FiberPoint::gauss(base)?, FiberPoint::disc(base, Q::zero(), Q::one())?] {
                    let v = crate::metric::metric_difference(&pulled, phi, &x)?;
                    best = best.max(v.to_f64().abs());
                }
            }
        }
    }
    Ok(best)
}

/// Parses a place coefficient pair like `("inf", "1/2")`.
pub fn parse_place_coeff(place: &str, coeff: &str) -> Result<(Place, Q)> {
    Ok((place.parse()?, arith::parse_rational(coeff)?))
}
