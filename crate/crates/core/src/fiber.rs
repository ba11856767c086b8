// SPDX-License-Identifier: Apache-2.0

//! Points of the fibers of the analytic projective line over Spec Z, their
//! seminorms and reductions.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::arith::{self, ceil_q, rational_mod, Q};
use crate::error::{Error, Result};
use crate::poly::{Form, UPoly};
use crate::spectrum::{BaseKind, SpectrumPoint};

/// A valuation value; `None` is `+infinity`.
pub type Val = Option<Q>;

pub fn val_min(a: &Val, b: &Val) -> Val {
    match (a, b) {
        (None, x) | (x, None) => x.clone(),
        (Some(x), Some(y)) => Some(x.min(y).clone()),
    }
}

pub fn val_ge(a: &Val, b: &Q) -> bool {
    match a {
        None => true,
        Some(x) => x >= b,
    }
}

pub fn val_add(a: &Val, b: &Val) -> Val {
    match (a, b) {
        (Some(x), Some(y)) => Some(x + y),
        _ => None,
    }
}

/// The non-Archimedean valued field over a base point, in valuation
/// coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NaField {
    /// `Q` with `|.|_p^eps`; `unit = ln(1/t)` converts valuations to logs.
    PAdic { p: u64, unit: f64 },
    TrivialQ,
    TrivialFp { p: u64 },
}

impl NaField {
    pub fn of(base: &SpectrumPoint) -> Option<NaField> {
        match base.kind() {
            BaseKind::Trivial => Some(NaField::TrivialQ),
            BaseKind::PAdic { p, t } => Some(NaField::PAdic { p, unit: -t.ln() }),
            BaseKind::Residue { p } => Some(NaField::TrivialFp { p }),
            BaseKind::Archimedean { .. } => None,
        }
    }

    /// `-ln |x|` per unit of valuation. Trivially valued fields use 1,
    /// so a disc of valuation radius `r` has radius `e^-r`.
    pub fn unit(&self) -> f64 {
        match self {
            NaField::PAdic { unit, .. } => *unit,
            _ => 1.0,
        }
    }

    pub fn residue_char(&self) -> Option<u64> {
        match self {
            NaField::PAdic { p, .. } | NaField::TrivialFp { p } => Some(*p),
            NaField::TrivialQ => None,
        }
    }

    pub fn is_trivially_valued(&self) -> bool {
        !matches!(self, NaField::PAdic { .. })
    }

    pub fn val(&self, x: &Q) -> Val {
        if x.is_zero() {
            return None;
        }
        match self {
            NaField::PAdic { p, .. } => arith::vp(x, *p).map(|v| Q::from_integer(v.into())),
            NaField::TrivialQ => Some(Q::zero()),
            NaField::TrivialFp { p } => {
                if arith::vp(x, *p).unwrap() > 0 {
                    None
                } else {
                    Some(Q::zero())
                }
            }
        }
    }

    /// Canonical representative of an element or coordinate of the field.
    pub fn normalize_coord(&self, a: &ProjQ) -> ProjQ {
        match (self, a) {
            (NaField::TrivialFp { p }, ProjQ::Finite(x)) => {
                let bp = BigInt::from(*p);
                match rational_mod(x, &bp) {
                    Some(r) => ProjQ::Finite(Q::from_integer(r)),
                    None => ProjQ::Infinity,
                }
            }
            _ => a.clone(),
        }
    }

    /// Canonical center of the disc `{x : val(x - a) >= rho}`.
    pub fn canonical_center(&self, a: &Q, rho: &Q) -> Q {
        match self {
            NaField::PAdic { p, .. } => {
                let n = ceil_q(rho);
                let Some(v) = self.val(a) else {
                    return Q::zero();
                };
                let v = v.to_integer();
                if v >= n {
                    return Q::zero();
                }
                // a = p^v u, keep u modulo p^(n - v).
                let bp = BigInt::from(*p);
                let pv = pow_q(&bp, &v);
                let u = a / &pv;
                let k = (&n - &v).try_into().unwrap_or(u32::MAX);
                let modulus = num_traits::pow(bp, k as usize);
                let r = rational_mod(&u, &modulus).expect("unit is p-integral");
                pv * Q::from_integer(r)
            }
            NaField::TrivialQ => {
                if rho.is_positive() {
                    a.clone()
                } else {
                    Q::zero()
                }
            }
            NaField::TrivialFp { p } => {
                if rho.is_positive() {
                    match self.normalize_coord(&ProjQ::Finite(a.clone())) {
                        ProjQ::Finite(r) => r,
                        ProjQ::Infinity => panic!("disc center {a} is not {p}-integral"),
                    }
                } else {
                    Q::zero()
                }
            }
        }
    }

    /// `1 / a` as a field element, for `a` nonzero.
    pub fn inverse(&self, a: &Q) -> Q {
        match self {
            NaField::TrivialFp { p } => {
                let bp = BigInt::from(*p);
                Q::from_integer(rational_mod(&a.recip(), &bp).expect("unit"))
            }
            _ => a.recip(),
        }
    }

    /// Valuation of `f` on the disc `D(a, rho)` (the Gauss norm).
    pub fn disc_val(&self, f: &UPoly, a: &Q, rho: &Q) -> Val {
        let shifted = f.taylor_shift(a);
        let mut best: Val = None;
        for (i, c) in shifted.coeffs().iter().enumerate() {
            if let Some(v) = self.val(c) {
                let cand = Some(v + rho * Q::from_integer(BigInt::from(i)));
                best = val_min(&best, &cand);
            }
        }
        best
    }
}

fn pow_q(p: &BigInt, e: &BigInt) -> Q {
    let k: i64 = e.try_into().expect("exponent fits");
    if k >= 0 {
        Q::from_integer(num_traits::pow(p.clone(), k as usize))
    } else {
        Q::new(BigInt::one(), num_traits::pow(p.clone(), (-k) as usize))
    }
}

/// A point of the projective line over Q: finite or infinity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProjQ {
    Finite(Q),
    Infinity,
}

impl fmt::Display for ProjQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjQ::Finite(x) => write!(f, "{}", arith::format_rational(x)),
            ProjQ::Infinity => write!(f, "inf"),
        }
    }
}

impl ProjQ {
    pub fn parse(s: &str) -> Result<ProjQ> {
        if s.trim().eq_ignore_ascii_case("inf") {
            Ok(ProjQ::Infinity)
        } else {
            Ok(ProjQ::Finite(arith::parse_rational(s)?))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArchCoord {
    Finite(Complex64),
    Infinity,
}

/// Position of a point inside its fiber.
#[derive(Clone, Debug, PartialEq)]
pub enum PointKind {
    /// A classical point with coordinate in the base field.
    Type1(ProjQ),
    /// The sup seminorm on `{val(T - center) >= radius_val}`. Negative radii
    /// describe discs larger than the unit disc.
    Disc { center: Q, radius_val: Q },
    /// A complex point, taken up to conjugation (`Im >= 0`).
    Arch(ArchCoord),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberPoint {
    base: SpectrumPoint,
    kind: PointKind,
}

impl FiberPoint {
    pub fn new(base: SpectrumPoint, kind: PointKind) -> Result<FiberPoint> {
        let kind = match (NaField::of(&base), kind) {
            (None, PointKind::Arch(ArchCoord::Finite(z))) => {
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::input("complex coordinate must be finite"));
                }
                PointKind::Arch(ArchCoord::Finite(if z.im < 0.0 { z.conj() } else { z }))
            }
            (None, k @ PointKind::Arch(ArchCoord::Infinity)) => k,
            (None, _) => {
                return Err(Error::WrongFiber(format!(
                    "base {base} is Archimedean; only complex points lie over it"
                )))
            }
            (Some(_), PointKind::Arch(_)) => {
                return Err(Error::WrongFiber(format!("base {base} is non-Archimedean")))
            }
            (Some(field), PointKind::Type1(a)) => PointKind::Type1(field.normalize_coord(&a)),
            (Some(field), PointKind::Disc { center, radius_val }) => {
                let center = match field.normalize_coord(&ProjQ::Finite(center)) {
                    ProjQ::Finite(c) => c,
                    ProjQ::Infinity => {
                        return Err(Error::input(format!("disc center must be {}-integral", base.place())))
                    }
                };
                PointKind::Disc { center: field.canonical_center(&center, &radius_val), radius_val }
            }
        };
        Ok(FiberPoint { base, kind })
    }

    /// The Gauss point of a non-Archimedean fiber.
    pub fn gauss(base: SpectrumPoint) -> Result<FiberPoint> {
        FiberPoint::new(base, PointKind::Disc { center: Q::zero(), radius_val: Q::zero() })
    }

    pub fn type1(base: SpectrumPoint, a: ProjQ) -> Result<FiberPoint> {
        FiberPoint::new(base, PointKind::Type1(a))
    }

    pub fn disc(base: SpectrumPoint, center: Q, radius_val: Q) -> Result<FiberPoint> {
        FiberPoint::new(base, PointKind::Disc { center, radius_val })
    }

    pub fn arch(base: SpectrumPoint, z: Complex64) -> Result<FiberPoint> {
        FiberPoint::new(base, PointKind::Arch(ArchCoord::Finite(z)))
    }

    pub fn base(&self) -> &SpectrumPoint {
        &self.base
    }

    pub fn kind(&self) -> &PointKind {
        &self.kind
    }

    pub fn field(&self) -> Option<NaField> {
        NaField::of(&self.base)
    }

    pub fn is_archimedean(&self) -> bool {
        matches!(self.kind, PointKind::Arch(_))
    }

    pub fn is_gauss(&self) -> bool {
        matches!(&self.kind, PointKind::Disc { center, radius_val } if center.is_zero() && radius_val.is_zero())
    }

    /// The same seminorm on a different base point of the same kind.
    pub fn rebased(&self, base: SpectrumPoint) -> Result<FiberPoint> {
        FiberPoint::new(base, self.kind.clone())
    }

    /// Image under the chart swap `T -> 1/T`.
    pub fn invert(&self) -> FiberPoint {
        let kind = match (&self.kind, self.field()) {
            (PointKind::Arch(ArchCoord::Infinity), _) => PointKind::Arch(ArchCoord::Finite(Complex64::new(0.0, 0.0))),
            (PointKind::Arch(ArchCoord::Finite(z)), _) => {
                if z.norm() == 0.0 {
                    PointKind::Arch(ArchCoord::Infinity)
                } else {
                    let w = z.inv();
                    PointKind::Arch(ArchCoord::Finite(if w.im < 0.0 { w.conj() } else { w }))
                }
            }
            (PointKind::Type1(ProjQ::Infinity), _) => PointKind::Type1(ProjQ::Finite(Q::zero())),
            (PointKind::Type1(ProjQ::Finite(a)), Some(field)) => {
                if a.is_zero() {
                    PointKind::Type1(ProjQ::Infinity)
                } else {
                    PointKind::Type1(ProjQ::Finite(field.inverse(a)))
                }
            }
            (PointKind::Disc { center, radius_val }, Some(field)) => {
                let va = field.val(center);
                if val_ge(&va, radius_val) {
                    PointKind::Disc { center: Q::zero(), radius_val: -radius_val.clone() }
                } else {
                    let v = va.unwrap();
                    let c = field.inverse(center);
                    let r = radius_val - Q::from_integer(2.into()) * v;
                    PointKind::Disc { center: field.canonical_center(&c, &r), radius_val: r }
                }
            }
            (_, None) => unreachable!("non-Archimedean kinds have a field"),
        };
        FiberPoint { base: self.base, kind }
    }
}

impl fmt::Display for FiberPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PointKind::Type1(a) => write!(f, "Type1({a}) over {}", self.base),
            PointKind::Disc { center, radius_val } => write!(
                f,
                "Disc({}, {}) over {}",
                arith::format_rational(center),
                arith::format_rational(radius_val),
                self.base
            ),
            PointKind::Arch(ArchCoord::Finite(z)) => write!(f, "Arch({}+{}i) over {}", z.re, z.im, self.base),
            PointKind::Arch(ArchCoord::Infinity) => write!(f, "Arch(inf) over {}", self.base),
        }
    }
}

/// `|f|_x` for a polynomial in the fiber coordinate.
#[derive(Clone, Debug, PartialEq)]
pub enum SeminormValue {
    /// `|f| = exp(-val * unit)`.
    NonArch { val: Val, unit: f64 },
    Arch { abs: f64 },
}

impl SeminormValue {
    pub fn value(&self) -> f64 {
        match self {
            SeminormValue::NonArch { val: None, .. } => 0.0,
            SeminormValue::NonArch { val: Some(v), unit } => (-arith::q_to_f64(v) * unit).exp(),
            SeminormValue::Arch { abs } => *abs,
        }
    }

    pub fn ln(&self) -> f64 {
        match self {
            SeminormValue::NonArch { val: None, .. } => f64::NEG_INFINITY,
            SeminormValue::NonArch { val: Some(v), unit } => -arith::q_to_f64(v) * unit,
            SeminormValue::Arch { abs } => abs.ln(),
        }
    }
}

/// Valuation of `f` (in the coordinate of the chosen chart) at a
/// non-Archimedean point given in the same chart.
pub fn na_val(field: &NaField, kind: &PointKind, f: &UPoly) -> Result<Val> {
    match kind {
        PointKind::Disc { center, radius_val } => Ok(field.disc_val(f, center, radius_val)),
        PointKind::Type1(ProjQ::Finite(a)) => Ok(field.val(&f.eval(a))),
        PointKind::Type1(ProjQ::Infinity) => match f.degree() {
            None => Ok(None),
            Some(0) => Ok(field.val(&f.coeffs()[0])),
            _ => Err(Error::Evaluation("a nonconstant polynomial has a pole at infinity".into())),
        },
        PointKind::Arch(_) => Err(Error::WrongFiber("complex point on a non-Archimedean fiber".into())),
    }
}

pub fn poly_seminorm(x: &FiberPoint, f: &UPoly) -> Result<SeminormValue> {
    match x.field() {
        Some(field) => Ok(SeminormValue::NonArch { val: na_val(&field, &x.kind, f)?, unit: field.unit() }),
        None => {
            let eps = x.base.t();
            match x.kind {
                PointKind::Arch(ArchCoord::Finite(z)) => Ok(SeminormValue::Arch { abs: f.eval_complex(z).norm().powf(eps) }),
                PointKind::Arch(ArchCoord::Infinity) => match f.degree() {
                    None => Ok(SeminormValue::Arch { abs: 0.0 }),
                    Some(0) => Ok(SeminormValue::Arch { abs: arith::q_to_f64(&f.coeffs()[0]).abs().powf(eps) }),
                    _ => Err(Error::Evaluation("a nonconstant polynomial has a pole at infinity".into())),
                },
                _ => unreachable!("validated at construction"),
            }
        }
    }
}

/// A point of `P^1(F_p)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Residue {
    Finite(u64),
    Infinity,
}

/// Where a point of the analytification reduces on the model `P^1_Z`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reduction {
    /// The generic point of `P^1_Z`.
    GenericFiber,
    /// A closed point of the generic fiber `P^1_Q`.
    RationalPoint(ProjQ),
    /// The generic point of the fiber over `p`.
    GenericOfSpecialFiber(u64),
    SpecialPoint(u64, Residue),
}

fn residue_of(a: &Q, p: u64) -> Residue {
    match rational_mod(a, &BigInt::from(p)) {
        Some(r) => Residue::Finite(r.try_into().expect("residue below p")),
        None => Residue::Infinity,
    }
}

pub fn reduction(x: &FiberPoint) -> Reduction {
    let Some(field) = x.field() else {
        return Reduction::GenericFiber;
    };
    match (field, &x.kind) {
        (NaField::TrivialQ, PointKind::Type1(a)) => Reduction::RationalPoint(a.clone()),
        (NaField::TrivialQ, PointKind::Disc { center, radius_val }) => {
            if radius_val.is_zero() {
                Reduction::GenericFiber
            } else if radius_val.is_positive() {
                Reduction::RationalPoint(ProjQ::Finite(center.clone()))
            } else {
                Reduction::RationalPoint(ProjQ::Infinity)
            }
        }
        (NaField::PAdic { p, .. } | NaField::TrivialFp { p }, kind) => {
            let integral = |a: &Q| val_ge(&field.val(a), &Q::zero());
            match kind {
                PointKind::Type1(ProjQ::Infinity) => Reduction::SpecialPoint(p, Residue::Infinity),
                PointKind::Type1(ProjQ::Finite(a)) => {
                    if integral(a) {
                        Reduction::SpecialPoint(p, residue_of(a, p))
                    } else {
                        Reduction::SpecialPoint(p, Residue::Infinity)
                    }
                }
                PointKind::Disc { center, radius_val } => {
                    if !integral(center) || radius_val.is_negative() {
                        Reduction::SpecialPoint(p, Residue::Infinity)
                    } else if radius_val.is_zero() {
                        Reduction::GenericOfSpecialFiber(p)
                    } else {
                        Reduction::SpecialPoint(p, residue_of(center, p))
                    }
                }
                PointKind::Arch(_) => unreachable!(),
            }
        }
        (_, PointKind::Arch(_)) => unreachable!(),
    }
}

/// `P^1_Z` minus finitely many horizontal prime divisors (primitive
/// irreducible forms) and finitely many vertical fibers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpenSubscheme {
    pub removed_forms: BTreeSet<Form>,
    pub removed_primes: BTreeSet<u64>,
}

impl OpenSubscheme {
    pub fn whole() -> Self {
        OpenSubscheme::default()
    }

    pub fn new(forms: impl IntoIterator<Item = Form>, primes: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut removed_forms = BTreeSet::new();
        for f in forms {
            if f.degree() == 0 {
                return Err(Error::input("a horizontal component needs positive degree"));
            }
            removed_forms.insert(f.primitive().1);
        }
        Ok(OpenSubscheme { removed_forms, removed_primes: primes.into_iter().collect() })
    }

    pub fn contains(&self, r: &Reduction) -> bool {
        match r {
            Reduction::GenericFiber => true,
            Reduction::RationalPoint(a) => self.removed_forms.iter().all(|f| !form_vanishes_q(f, a)),
            Reduction::GenericOfSpecialFiber(p) => !self.removed_primes.contains(p),
            Reduction::SpecialPoint(p, res) => {
                !self.removed_primes.contains(p) && self.removed_forms.iter().all(|f| !form_vanishes_mod_p(f, *p, res))
            }
        }
    }
}

fn form_vanishes_q(f: &Form, a: &ProjQ) -> bool {
    match a {
        ProjQ::Infinity => f.x_lead().is_zero(),
        ProjQ::Finite(x) => f.eval_q(x, &Q::one()).is_zero(),
    }
}

fn form_vanishes_mod_p(f: &Form, p: u64, r: &Residue) -> bool {
    let bp = BigInt::from(p);
    match r {
        Residue::Infinity => f.x_lead().mod_floor(&bp).is_zero(),
        Residue::Finite(x) => {
            let x = BigInt::from(*x);
            let mut acc = BigInt::zero();
            for c in f.coeffs().iter().rev() {
                acc = (acc * &x + c).mod_floor(&bp);
            }
            acc.is_zero()
        }
    }
}

/// Whether `x` is a non-Archimedean point reducing into `U`.
pub fn is_interior(x: &FiberPoint, u: &OpenSubscheme) -> bool {
    !x.is_archimedean() && u.contains(&reduction(x))
}
