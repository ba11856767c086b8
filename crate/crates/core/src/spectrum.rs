// SPDX-License-Identifier: Apache-2.0

//! The Berkovich spectrum of Z as a tree of branches, its measure and
//! quadrature on it.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::arith::{self, is_prime_u64, next_prime_after, primes_up_to, Q};
use crate::error::{Error, Result};

/// Cutoff below which the prime sum is evaluated by direct summation.
pub const SIEVE_FLOOR: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Place {
    Infinity,
    Prime(u64),
}

impl Place {
    pub fn prime(p: u64) -> Result<Place> {
        if is_prime_u64(p) {
            Ok(Place::Prime(p))
        } else {
            Err(Error::input(format!("{p} is not prime")))
        }
    }

    /// `v log v` with the convention `e` at infinity.
    pub fn weight_denominator(&self) -> f64 {
        match self {
            Place::Infinity => std::f64::consts::E,
            Place::Prime(p) => (*p as f64) * (*p as f64).ln(),
        }
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Infinity => write!(f, "inf"),
            Place::Prime(p) => write!(f, "{p}"),
        }
    }
}

impl std::str::FromStr for Place {
    type Err = Error;

    fn from_str(s: &str) -> Result<Place> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s == "∞" {
            return Ok(Place::Infinity);
        }
        let p: u64 = s.parse().map_err(|_| Error::input(format!("bad place {s:?}")))?;
        Place::prime(p)
    }
}

/// What kind of valued field sits over a point of the spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaseKind {
    /// The trivial norm on Q.
    Trivial,
    /// `|.|_inf^eps` with `eps` in `(0, 1]`.
    Archimedean { eps: f64 },
    /// `|.|_p^eps` with `t = p^-eps` in `(0, 1)`.
    PAdic { p: u64, t: f64 },
    /// The trivial norm on F_p pulled back to Z.
    Residue { p: u64 },
}

/// The completed residue field at a point, keyed by the exponent `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResidueClass {
    TrivialQ,
    ArchimedeanReal { eps: f64 },
    PAdic { p: u64, eps: f64 },
    TrivialFp { p: u64 },
}

pub fn residue_class(x: &SpectrumPoint) -> ResidueClass {
    match x.kind() {
        BaseKind::Trivial => ResidueClass::TrivialQ,
        BaseKind::Archimedean { eps } => ResidueClass::ArchimedeanReal { eps },
        BaseKind::PAdic { p, .. } => ResidueClass::PAdic { p, eps: x.epsilon() },
        BaseKind::Residue { p } => ResidueClass::TrivialFp { p },
    }
}

/// A point of the spectrum: a branch and its parameter `t` in `[0, 1]`.
///
/// On a prime branch `t = |p|`; on the Archimedean branch `t` is the
/// exponent. The trivial end of every branch is the trivial norm.
#[derive(Clone, Copy, Debug)]
pub struct SpectrumPoint {
    place: Place,
    t: f64,
}

impl PartialEq for SpectrumPoint {
    fn eq(&self, other: &Self) -> bool {
        (self.is_trivial() && other.is_trivial()) || (self.place == other.place && self.t == other.t)
    }
}

impl SpectrumPoint {
    pub fn new(place: Place, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::input(format!("branch parameter {t} outside [0, 1]")));
        }
        if let Place::Prime(p) = place {
            if !is_prime_u64(p) {
                return Err(Error::input(format!("{p} is not prime")));
            }
        }
        Ok(SpectrumPoint { place, t })
    }

    pub fn trivial() -> Self {
        SpectrumPoint { place: Place::Infinity, t: 0.0 }
    }

    pub fn archimedean(eps: f64) -> Result<Self> {
        SpectrumPoint::new(Place::Infinity, eps)
    }

    pub fn p_adic(p: u64, t: f64) -> Result<Self> {
        SpectrumPoint::new(Place::prime(p)?, t)
    }

    pub fn place(&self) -> Place {
        self.place
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn is_trivial(&self) -> bool {
        match self.place {
            Place::Infinity => self.t == 0.0,
            Place::Prime(_) => self.t == 1.0,
        }
    }

    pub fn kind(&self) -> BaseKind {
        if self.is_trivial() {
            return BaseKind::Trivial;
        }
        match self.place {
            Place::Infinity => BaseKind::Archimedean { eps: self.t },
            Place::Prime(p) if self.t == 0.0 => BaseKind::Residue { p },
            Place::Prime(p) => BaseKind::PAdic { p, t: self.t },
        }
    }

    /// Branch parameter in exponent form. Infinite at `x_{p,inf}`.
    pub fn epsilon(&self) -> f64 {
        match self.place {
            Place::Infinity => self.t,
            Place::Prime(p) => {
                if self.t == 0.0 {
                    f64::INFINITY
                } else {
                    -self.t.ln() / (p as f64).ln()
                }
            }
        }
    }

    /// Everything except the points `x_{p,inf}` has Zariski-dense image.
    pub fn is_zariski_dense(&self) -> bool {
        !matches!(self.kind(), BaseKind::Residue { .. })
    }

    pub fn seminorm(&self, n: &BigInt) -> f64 {
        match self.kind() {
            BaseKind::Trivial => {
                if n.is_zero() {
                    0.0
                } else {
                    1.0
                }
            }
            BaseKind::Archimedean { eps } => {
                let a = crate::poly::bigint_to_f64(&n.abs());
                if a == 0.0 {
                    0.0
                } else {
                    a.powf(eps)
                }
            }
            BaseKind::PAdic { p, t } => {
                if n.is_zero() {
                    0.0
                } else {
                    t.powi(arith::vp_int(n, p) as i32)
                }
            }
            BaseKind::Residue { p } => {
                if (n % BigInt::from(p)).is_zero() {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

impl fmt::Display for SpectrumPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, t={})", self.place, self.t)
    }
}

/// Subinterval of a branch parameter range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interval {
    pub lo: Q,
    pub hi: Q,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn closed(lo: Q, hi: Q) -> Result<Interval> {
        Interval::new(lo, hi, true, true)
    }

    pub fn new(lo: Q, hi: Q, lo_closed: bool, hi_closed: bool) -> Result<Interval> {
        if lo > hi || lo.is_negative() || hi > Q::one() {
            return Err(Error::input(format!(
                "interval [{}, {}] is not a subinterval of [0, 1]",
                arith::format_rational(&lo),
                arith::format_rational(&hi)
            )));
        }
        Ok(Interval { lo, hi, lo_closed, hi_closed })
    }

    pub fn contains(&self, t: f64) -> bool {
        let lo = arith::q_to_f64(&self.lo);
        let hi = arith::q_to_f64(&self.hi);
        (t > lo || (self.lo_closed && t == lo)) && (t < hi || (self.hi_closed && t == hi))
    }
}

/// Everything on unlisted branches is either absent or present.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DefaultFill {
    Empty,
    Full,
}

/// A finite union of branch intervals, with a cofinite default.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchSet {
    pub default: DefaultFill,
    pub branches: BTreeMap<Place, Vec<Interval>>,
}

impl BranchSet {
    pub fn empty() -> Self {
        BranchSet { default: DefaultFill::Empty, branches: BTreeMap::new() }
    }

    pub fn full() -> Self {
        BranchSet { default: DefaultFill::Full, branches: BTreeMap::new() }
    }

    pub fn with_branch(mut self, place: Place, intervals: Vec<Interval>) -> Self {
        self.branches.insert(place, intervals);
        self
    }

    /// Exact length of the union of intervals on a branch.
    pub fn branch_length(&self, place: Place) -> Q {
        match self.branches.get(&place) {
            None => match self.default {
                DefaultFill::Empty => Q::zero(),
                DefaultFill::Full => Q::one(),
            },
            Some(ivs) => union_length(ivs),
        }
    }

    pub fn contains(&self, x: &SpectrumPoint) -> bool {
        let on = |place: Place, t: f64| match self.branches.get(&place) {
            None => self.default == DefaultFill::Full,
            Some(ivs) => ivs.iter().any(|iv| iv.contains(t)),
        };
        if x.is_trivial() {
            // The trivial point is the common end: t = 0 on infinity, t = 1 on primes.
            return on(Place::Infinity, 0.0);
        }
        on(x.place(), x.t())
    }

    /// Complement; branch lengths complement exactly.
    pub fn complement(&self) -> BranchSet {
        let default = match self.default {
            DefaultFill::Empty => DefaultFill::Full,
            DefaultFill::Full => DefaultFill::Empty,
        };
        let branches = self
            .branches
            .iter()
            .map(|(pl, ivs)| (*pl, complement_intervals(ivs)))
            .collect();
        BranchSet { default, branches }
    }
}

fn merged(ivs: &[Interval]) -> Vec<(Q, Q)> {
    let mut v: Vec<(Q, Q)> = ivs.iter().map(|iv| (iv.lo.clone(), iv.hi.clone())).collect();
    v.sort();
    let mut out: Vec<(Q, Q)> = Vec::new();
    for (lo, hi) in v {
        if let Some(last) = out.last_mut() {
            if lo <= last.1 {
                if hi > last.1 {
                    last.1 = hi;
                }
                continue;
            }
        }
        out.push((lo, hi));
    }
    out
}

fn union_length(ivs: &[Interval]) -> Q {
    merged(ivs).into_iter().map(|(lo, hi)| hi - lo).sum()
}

fn complement_intervals(ivs: &[Interval]) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut cur = Q::zero();
    for (lo, hi) in merged(ivs) {
        if lo > cur {
            out.push(Interval { lo: cur.clone(), hi: lo.clone(), lo_closed: true, hi_closed: false });
        }
        cur = hi;
    }
    if cur < Q::one() {
        out.push(Interval { lo: cur, hi: Q::one(), lo_closed: false, hi_closed: true });
    }
    out
}

/// A real number known to lie in `[mid - radius, mid + radius]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Enclosure {
    pub mid: f64,
    pub radius: f64,
}

impl Enclosure {
    pub fn exact(x: f64) -> Self {
        Enclosure { mid: x, radius: 0.0 }
    }

    pub fn from_bounds(lo: f64, hi: f64) -> Self {
        Enclosure { mid: 0.5 * (lo + hi), radius: 0.5 * (hi - lo) }
    }

    pub fn lo(&self) -> f64 {
        self.mid - self.radius
    }

    pub fn hi(&self) -> f64 {
        self.mid + self.radius
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.mid).abs() <= self.radius
    }
}

/// `mu'` as an exact combination of `1/e` and `1/(p ln p)` plus possibly the
/// full weight of every unlisted prime.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicMass {
    /// Coefficient of `1/e`.
    pub inf: Q,
    /// Coefficients of `1/(p ln p)`.
    pub primes: BTreeMap<u64, Q>,
    /// Whether all unlisted primes contribute their full branch.
    pub cofinite: bool,
}

impl SymbolicMass {
    /// Value of the finitely supported part.
    pub fn finite_value(&self) -> f64 {
        let mut acc = arith::q_to_f64(&self.inf) / std::f64::consts::E;
        for (p, c) in &self.primes {
            acc += arith::q_to_f64(c) / Place::Prime(*p).weight_denominator();
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuPrime {
    pub symbolic: SymbolicMass,
    pub value: Enclosure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuTotal {
    pub cutoff: u64,
    /// `1/e + sum_{p <= cutoff} 1/(p ln p)`.
    pub partial: f64,
    /// Enclosure for `sum_{p > cutoff} 1/(p ln p)`.
    pub tail: Enclosure,
    pub value: Enclosure,
}

impl MuTotal {
    pub fn tail_radius(&self) -> f64 {
        self.value.radius
    }
}

/// Compensated summation with a running bound on rounding error.
#[derive(Default)]
struct Accumulator {
    sum: f64,
    comp: f64,
    terms: usize,
}

impl Accumulator {
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
        self.terms += 1;
    }

    fn error_bound(&self) -> f64 {
        // Generous: the compensated sum is accurate to a few ulps.
        4.0 * f64::EPSILON * self.sum.abs() + self.terms as f64 * 1e-3 * f64::EPSILON * self.sum.abs()
    }
}

fn prime_weight(p: u64) -> f64 {
    1.0 / ((p as f64) * (p as f64).ln())
}

/// Enclosure for `sum_{p > x} 1/(p ln p)` for `x >= 355991`, given `pi(x)`.
///
/// Abel summation with `f(x) = 1/(x ln x)` gives
/// `-pi(x) f(x) + int_x^inf pi(y) |f'(y)| dy`; the integral is bracketed
/// with explicit bounds for `pi`:
/// `y/L (1 + 1/L) <= pi(y) <= y/L (1 + 1/L + 2.51/L^2)` for `y >= 355991`.
fn analytic_tail(x: f64, pi_x: f64) -> Enclosure {
    let l = x.ln();
    let boundary = pi_x / (x * l);
    let lower = 1.0 / l + 1.0 / (l * l) + 1.0 / (3.0 * l.powi(3));
    let upper = 1.0 / l + 1.0 / (l * l) + 3.51 / (3.0 * l.powi(3)) + 2.51 / (4.0 * l.powi(4));
    let lo = lower - boundary;
    let hi = upper - boundary;
    let pad = 64.0 * f64::EPSILON * hi.abs();
    Enclosure::from_bounds(lo - pad, hi + pad)
}

/// Enclosure for `sum_{p > cutoff} 1/(p ln p)`, and the primes up to the
/// cutoff.
fn tail_and_primes(cutoff: u64) -> (Enclosure, Vec<u64>) {
    let sieve_to = cutoff.max(SIEVE_FLOOR);
    let primes = primes_up_to(sieve_to);
    let split = primes.partition_point(|&p| p <= cutoff);
    let mut mid = Accumulator::default();
    for &p in primes[split..].iter().rev() {
        mid.add(prime_weight(p));
    }
    let analytic = analytic_tail(sieve_to as f64, primes.len() as f64);
    let mut primes = primes;
    primes.truncate(split);
    let tail = Enclosure {
        mid: mid.sum + analytic.mid,
        radius: analytic.radius + mid.error_bound(),
    };
    (tail, primes)
}

/// Total mass `mu'(M(Z))` with direct summation through `cutoff`.
pub fn mu_total(cutoff: u64) -> Result<MuTotal> {
    if cutoff < 2 {
        return Err(Error::input("cutoff must be at least 2"));
    }
    let (tail, primes) = tail_and_primes(cutoff);
    Ok(total_from(cutoff, tail, &primes))
}

fn total_from(cutoff: u64, tail: Enclosure, primes: &[u64]) -> MuTotal {
    let mut acc = Accumulator::default();
    for &p in primes.iter().rev() {
        acc.add(prime_weight(p));
    }
    acc.add(1.0 / std::f64::consts::E);
    let partial = acc.sum;
    let value = Enclosure { mid: partial + tail.mid, radius: tail.radius + acc.error_bound() };
    MuTotal { cutoff, partial, tail, value }
}

/// `mu'(E)` for a branch set.
pub fn mu_prime(set: &BranchSet, cutoff: u64) -> Result<MuPrime> {
    if cutoff < 2 {
        return Err(Error::input("cutoff must be at least 2"));
    }
    let mut symbolic = SymbolicMass {
        inf: set.branch_length(Place::Infinity),
        primes: BTreeMap::new(),
        cofinite: set.default == DefaultFill::Full,
    };
    for place in set.branches.keys() {
        if let Place::Prime(p) = place {
            let len = set.branch_length(*place);
            if !len.is_zero() {
                symbolic.primes.insert(*p, len);
            }
        }
    }
    let finite = symbolic.finite_value();
    let value = if symbolic.cofinite {
        let total = mu_total(cutoff)?;
        // Full weight of every prime, minus the listed ones.
        let listed: f64 = set
            .branches
            .keys()
            .filter_map(|pl| match pl {
                Place::Prime(p) => Some(prime_weight(*p)),
                Place::Infinity => None,
            })
            .sum();
        let all_primes = total.partial - 1.0 / std::f64::consts::E + total.tail.mid;
        Enclosure {
            mid: finite + all_primes - listed,
            radius: total.value.radius + 8.0 * f64::EPSILON * (finite + all_primes),
        }
    } else {
        Enclosure { mid: finite, radius: 4.0 * f64::EPSILON * finite }
    };
    Ok(MuPrime { symbolic, value })
}

/// Normalized measure `mu(E) = mu'(E) / mu'(M(Z))`.
pub fn mu(set: &BranchSet, cutoff: u64) -> Result<Enclosure> {
    let a = mu_prime(set, cutoff)?;
    let b = mu_prime(&set.complement(), cutoff)?;
    // mu = A / (A + B) is increasing in A and decreasing in B.
    let f = |a: f64, b: f64| if a + b == 0.0 { 0.0 } else { a / (a + b) };
    if b.value.mid == 0.0 && b.value.radius == 0.0 {
        return Ok(Enclosure::exact(1.0));
    }
    if a.value.mid == 0.0 && a.value.radius == 0.0 {
        return Ok(Enclosure::exact(0.0));
    }
    let lo = f(a.value.lo().max(0.0), b.value.hi());
    let hi = f(a.value.hi(), b.value.lo().max(0.0));
    Ok(Enclosure::from_bounds(lo, hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MuQuadratureConfig {
    pub cutoff: u64,
    /// Midpoint nodes per branch; must be even.
    pub nodes: usize,
}

impl Default for MuQuadratureConfig {
    fn default() -> Self {
        MuQuadratureConfig { cutoff: 10_000, nodes: 256 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegralEstimate {
    pub value: f64,
    pub tail_err: f64,
    pub quad_err: f64,
}

impl IntegralEstimate {
    pub fn total_err(&self) -> f64 {
        self.tail_err + self.quad_err
    }
}

/// Branches, weights and nodes of the midpoint rule on the spectrum.
///
/// Primes above the cutoff are represented by the next prime, weighted by
/// the tail mass.
#[derive(Clone, Debug)]
pub struct QuadraturePlan {
    pub config: MuQuadratureConfig,
    /// Evaluated branches: infinity, primes through the cutoff, then the tail
    /// representative.
    pub branches: Vec<Place>,
    pub weights: Vec<f64>,
    pub total: MuTotal,
}

impl QuadraturePlan {
    pub fn new(config: MuQuadratureConfig) -> Result<Self> {
        if config.nodes < 2 || config.nodes % 2 != 0 {
            return Err(Error::input("quadrature needs an even number of nodes, at least 2"));
        }
        if config.cutoff < 2 {
            return Err(Error::input("cutoff must be at least 2"));
        }
        let (tail, primes) = tail_and_primes(config.cutoff);
        let total = total_from(config.cutoff, tail, &primes);
        let mut branches = vec![Place::Infinity];
        let mut weights = vec![1.0 / std::f64::consts::E];
        for &p in &primes {
            branches.push(Place::Prime(p));
            weights.push(prime_weight(p));
        }
        branches.push(Place::Prime(next_prime_after(config.cutoff)));
        weights.push(tail.mid);
        Ok(QuadraturePlan { config, branches, weights, total })
    }

    /// Midpoint nodes `(k + 1/2) / n`.
    pub fn nodes(n: usize) -> Vec<f64> {
        (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect()
    }

    /// Combines per-branch averages at `nodes` and `nodes / 2` points.
    pub fn combine(&self, fine: &[f64], coarse: &[f64]) -> IntegralEstimate {
        assert_eq!(fine.len(), self.branches.len());
        assert_eq!(coarse.len(), self.branches.len());
        let total = self.total.partial + self.total.tail.mid;
        let dot = |avgs: &[f64]| {
            let mut acc = Accumulator::default();
            for (w, a) in self.weights.iter().zip(avgs) {
                acc.add(w * a);
            }
            acc.sum / total
        };
        let value = dot(fine);
        let coarse_value = dot(coarse);
        let n = fine.len();
        let rep = fine[n - 1];
        let last = if n >= 3 { fine[n - 2] } else { rep };
        // The result moves by (rep - value) / total per unit of tail mass,
        // and by tail / total per unit of change in the tail average.
        let tail_err =
            (self.total.value.radius * (rep - value).abs() + self.total.tail.mid * (rep - last).abs()) / total;
        let quad_err = (value - coarse_value).abs() / 3.0;
        IntegralEstimate { value, tail_err, quad_err }
    }
}

/// `int h dmu` by the midpoint rule on every branch through the cutoff.
pub fn integrate_mu<H>(h: H, config: MuQuadratureConfig) -> Result<IntegralEstimate>
where
    H: Fn(&SpectrumPoint) -> f64 + Sync,
{
    let plan = QuadraturePlan::new(config)?;
    let fine_nodes = QuadraturePlan::nodes(config.nodes);
    let coarse_nodes = QuadraturePlan::nodes(config.nodes / 2);
    let avg = |place: Place, nodes: &[f64]| -> Result<f64> {
        let mut acc = 0.0;
        for &t in nodes {
            let x = SpectrumPoint { place, t };
            let v = h(&x);
            if !v.is_finite() {
                return Err(Error::Evaluation(format!("integrand is not finite at {x}")));
            }
            acc += v;
        }
        Ok(acc / nodes.len() as f64)
    };
    let pairs: Vec<Result<(f64, f64)>> = plan
        .branches
        .par_iter()
        .map(|&pl| Ok((avg(pl, &fine_nodes)?, avg(pl, &coarse_nodes)?)))
        .collect();
    let mut fine = Vec::with_capacity(pairs.len());
    let mut coarse = Vec::with_capacity(pairs.len());
    for r in pairs {
        let (f, c) = r?;
        fine.push(f);
        coarse.push(c);
    }
    Ok(plan.combine(&fine, &coarse))
}

/// Parses a branch parameter given as a rational or decimal.
pub fn parse_t(s: &str) -> Result<f64> {
    let v = arith::parse_rational(s)?;
    v.to_f64().ok_or_else(|| Error::input(format!("bad parameter {s:?}")))
}
