// SPDX-License-Identifier: Apache-2.0

//! Homogeneous binary forms over Z and univariate polynomials over Q and F_p.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith::{divisors, mod_inverse, Q};
use crate::error::{Error, Result};

/// Homogeneous form `sum c_i X^i Y^(n-i)` with integer coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Form {
    coeffs: Vec<BigInt>,
}

impl Form {
    /// `coeffs[i]` multiplies `X^i Y^(n-i)`; the degree is `len - 1`.
    pub fn new(coeffs: Vec<BigInt>) -> Self {
        assert!(!coeffs.is_empty(), "a form needs at least one coefficient");
        Form { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Form::new(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn constant(c: BigInt) -> Self {
        Form { coeffs: vec![c] }
    }

    pub fn x() -> Self {
        Form::from_i64(&[0, 1])
    }

    pub fn y() -> Self {
        Form::from_i64(&[1, 0])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    /// Coefficient of `X^n`, i.e. the value at `(1, 0)`.
    pub fn x_lead(&self) -> &BigInt {
        &self.coeffs[self.degree()]
    }

    pub fn mul(&self, other: &Form) -> Form {
        let mut out = vec![BigInt::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Form { coeffs: out }
    }

    pub fn pow(&self, k: usize) -> Form {
        let mut acc = Form::constant(BigInt::one());
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    pub fn add(&self, other: &Form) -> Result<Form> {
        if self.degree() != other.degree() {
            return Err(Error::input("cannot add forms of different degrees"));
        }
        Ok(Form {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scale(&self, c: &BigInt) -> Form {
        Form {
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    /// Nonnegative gcd of the coefficients.
    pub fn content(&self) -> BigInt {
        self.coeffs.iter().fold(BigInt::zero(), |g, c| g.gcd(c))
    }

    /// Content sign-normalized so that the first nonzero coefficient of the
    /// primitive part (from the top) is positive.
    pub fn primitive(&self) -> (BigInt, Form) {
        let mut c = self.content();
        if c.is_zero() {
            return (c, self.clone());
        }
        let top = self.coeffs.iter().rev().find(|a| !a.is_zero()).unwrap();
        if top.is_negative() {
            c = -c;
        }
        (c.clone(), Form { coeffs: self.coeffs.iter().map(|a| a / &c).collect() })
    }

    pub fn is_primitive(&self) -> bool {
        self.content().is_one() && self.primitive().0.is_positive()
    }

    /// `s(T, 1)`.
    pub fn dehom_t(&self) -> UPoly {
        UPoly::new(self.coeffs.iter().map(|c| Q::from_integer(c.clone())).collect())
    }

    /// `s(1, w)`.
    pub fn dehom_w(&self) -> UPoly {
        UPoly::new(self.coeffs.iter().rev().map(|c| Q::from_integer(c.clone())).collect())
    }

    /// `s(F0, F1)` for forms `F0, F1` of a common degree.
    pub fn compose(&self, f0: &Form, f1: &Form) -> Result<Form> {
        if f0.degree() != f1.degree() {
            return Err(Error::input("map components must have equal degree"));
        }
        let n = self.degree();
        let q = f0.degree();
        let mut p0 = vec![Form::constant(BigInt::one())];
        let mut p1 = vec![Form::constant(BigInt::one())];
        for i in 0..n {
            p0.push(p0[i].mul(f0));
            p1.push(p1[i].mul(f1));
        }
        let mut acc = Form::new(vec![BigInt::zero(); n * q + 1]);
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            acc = acc.add(&p0[i].mul(&p1[n - i]).scale(c))?;
        }
        Ok(acc)
    }

    pub fn eval_q(&self, x: &Q, y: &Q) -> Q {
        let n = self.degree();
        let mut xp = vec![Q::one()];
        let mut yp = vec![Q::one()];
        for i in 0..n {
            xp.push(&xp[i] * x);
            yp.push(&yp[i] * y);
        }
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| Q::from_integer(c.clone()) * &xp[i] * &yp[n - i])
            .sum()
    }

    pub fn to_float(&self) -> FloatForm {
        FloatForm {
            coeffs: self.coeffs.iter().map(|c| crate::arith::q_to_f64(&Q::from_integer(c.clone()))).collect(),
        }
    }

    /// Parses an integer polynomial in `X`, `Y`; it must be homogeneous.
    pub fn parse(s: &str) -> Result<Form> {
        let terms = parse_poly(s, &['X', 'Y'])?;
        let nonzero: Vec<_> = terms.iter().filter(|(_, c)| !c.is_zero()).collect();
        if nonzero.is_empty() {
            return Err(Error::input(format!("zero polynomial {s:?}")));
        }
        let deg = nonzero[0].0[0] + nonzero[0].0[1];
        if nonzero.iter().any(|(e, _)| e[0] + e[1] != deg) {
            return Err(Error::input(format!("polynomial {s:?} is not homogeneous")));
        }
        let mut coeffs = vec![BigInt::zero(); deg as usize + 1];
        for (e, c) in nonzero {
            coeffs[e[0] as usize] += c;
        }
        Ok(Form { coeffs })
    }

    /// Factors over Q into integer linear forms, if possible.
    pub fn linear_factors(&self) -> Result<LinearFactorization> {
        linear_factorization(self)
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.degree();
        let mut first = true;
        for i in (0..=n).rev() {
            let c = &self.coeffs[i];
            if c.is_zero() {
                continue;
            }
            let mut mono = Vec::new();
            let j = n - i;
            match i {
                0 => {}
                1 => mono.push("X".to_string()),
                _ => mono.push(format!("X^{i}")),
            }
            match j {
                0 => {}
                1 => mono.push("Y".to_string()),
                _ => mono.push(format!("Y^{j}")),
            }
            let abs = c.abs();
            let neg = c.is_negative();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { "-" } else { "+" })?;
            }
            first = false;
            if mono.is_empty() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{abs}*{}", mono.join("*"))?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Floating-point copy of a form for Archimedean evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatForm {
    coeffs: Vec<f64>,
}

impl FloatForm {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Value at `(x, y)`.
    pub fn eval(&self, x: Complex64, y: Complex64) -> Complex64 {
        let n = self.degree();
        if x.norm() >= y.norm() {
            let w = y / x;
            let mut acc = Complex64::new(0.0, 0.0);
            for c in &self.coeffs {
                acc = acc * w + c;
            }
            acc * x.powu(n as u32)
        } else {
            let t = x / y;
            let mut acc = Complex64::new(0.0, 0.0);
            for c in self.coeffs.iter().rev() {
                acc = acc * t + c;
            }
            acc * y.powu(n as u32)
        }
    }

    /// `ln |s(x, y)|` computed without forming large powers.
    pub fn log_abs(&self, x: Complex64, y: Complex64) -> f64 {
        let n = self.degree() as f64;
        let (ax, ay) = (x.norm(), y.norm());
        if ax >= ay {
            if ax == 0.0 {
                return if n == 0.0 { self.coeffs[0].abs().ln() } else { f64::NEG_INFINITY };
            }
            let w = y / x;
            let mut acc = Complex64::new(0.0, 0.0);
            for c in &self.coeffs {
                acc = acc * w + c;
            }
            n * ax.ln() + acc.norm().ln()
        } else {
            let t = x / y;
            let mut acc = Complex64::new(0.0, 0.0);
            for c in self.coeffs.iter().rev() {
                acc = acc * t + c;
            }
            n * ay.ln() + acc.norm().ln()
        }
    }
}

/// Dense univariate polynomial over Q, lowest degree first, no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UPoly {
    coeffs: Vec<Q>,
}

impl UPoly {
    pub fn new(mut coeffs: Vec<Q>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        UPoly { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        UPoly::new(coeffs.iter().map(|&c| Q::from_integer(c.into())).collect())
    }

    pub fn zero() -> Self {
        UPoly { coeffs: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.coeffs
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn lead(&self) -> Option<&Q> {
        self.coeffs.last()
    }

    pub fn eval(&self, x: &Q) -> Q {
        let mut acc = Q::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * z + crate::arith::q_to_f64(c);
        }
        acc
    }

    /// Coefficients of `f(T + a)`.
    pub fn taylor_shift(&self, a: &Q) -> UPoly {
        let mut c = self.coeffs.clone();
        let n = c.len();
        if a.is_zero() {
            return self.clone();
        }
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                let t = &c[j + 1] * a;
                c[j] += t;
            }
        }
        UPoly::new(c)
    }

    pub fn sub(&self, other: &UPoly) -> UPoly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![Q::zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] -= c;
        }
        UPoly::new(out)
    }

    pub fn mul(&self, other: &UPoly) -> UPoly {
        if self.is_zero() || other.is_zero() {
            return UPoly::zero();
        }
        let mut out = vec![Q::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        UPoly::new(out)
    }

    pub fn div_rem(&self, d: &UPoly) -> (UPoly, UPoly) {
        let dd = d.degree().expect("division by zero polynomial");
        let lead = d.lead().unwrap().clone();
        let mut r = self.coeffs.clone();
        if r.len() <= dd {
            return (UPoly::zero(), self.clone());
        }
        let mut quo = vec![Q::zero(); r.len() - dd];
        for k in (0..quo.len()).rev() {
            let c = &r[k + dd] / &lead;
            if !c.is_zero() {
                for (j, dc) in d.coeffs.iter().enumerate() {
                    r[k + j] -= &c * dc;
                }
            }
            quo[k] = c;
        }
        r.truncate(dd);
        (UPoly::new(quo), UPoly::new(r))
    }

    pub fn monic(&self) -> UPoly {
        match self.lead() {
            None => UPoly::zero(),
            Some(l) => {
                let l = l.clone();
                UPoly::new(self.coeffs.iter().map(|c| c / &l).collect())
            }
        }
    }

    pub fn gcd(&self, other: &UPoly) -> UPoly {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.div_rem(&b).1;
            a = b;
            b = r;
        }
        a.monic()
    }

    /// Order of vanishing at `a`.
    pub fn order_at(&self, a: &Q) -> Option<usize> {
        let shifted = self.taylor_shift(a);
        shifted.coeffs.iter().position(|c| !c.is_zero())
    }

    /// Resultant of two nonzero polynomials.
    pub fn resultant(&self, other: &UPoly) -> Q {
        resultant_rec(self, other)
    }

    /// Parses an integer polynomial in `T`.
    pub fn parse(s: &str) -> Result<UPoly> {
        let terms = parse_poly(s, &['T'])?;
        let deg = terms.keys().map(|e| e[0]).max().unwrap_or(0) as usize;
        let mut coeffs = vec![Q::zero(); deg + 1];
        for (e, c) in terms {
            coeffs[e[0] as usize] += Q::from_integer(c);
        }
        Ok(UPoly::new(coeffs))
    }
}

impl fmt::Display for UPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let neg = c.is_negative();
            let abs = c.abs();
            let cs = crate::arith::format_rational(&abs);
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { "-" } else { "+" })?;
            }
            first = false;
            let mono = match i {
                0 => String::new(),
                1 => "T".into(),
                _ => format!("T^{i}"),
            };
            if mono.is_empty() {
                write!(f, "{cs}")?;
            } else if abs.is_one() {
                write!(f, "{mono}")?;
            } else {
                write!(f, "{cs}*{mono}")?;
            }
        }
        Ok(())
    }
}

fn resultant_rec(f: &UPoly, g: &UPoly) -> Q {
    let (Some(df), Some(dg)) = (f.degree(), g.degree()) else {
        return Q::zero();
    };
    if dg == 0 {
        return num_traits::pow(g.lead().unwrap().clone(), df);
    }
    if df == 0 {
        return num_traits::pow(f.lead().unwrap().clone(), dg);
    }
    let sign = if (df * dg) % 2 == 1 { -Q::one() } else { Q::one() };
    if df < dg {
        return sign * resultant_rec(g, f);
    }
    let r = f.div_rem(g).1;
    let Some(dr) = r.degree() else {
        return Q::zero();
    };
    sign * num_traits::pow(g.lead().unwrap().clone(), df - dr) * resultant_rec(g, &r)
}

/// Resultant `Res_{n,n}` of two forms of degree `n`; `a` must have a nonzero
/// `X^n` coefficient.
pub fn form_resultant(a: &Form, b: &Form) -> BigInt {
    assert!(!a.x_lead().is_zero());
    let n = a.degree();
    let fa = a.dehom_t();
    let fb = b.dehom_t();
    let Some(db) = fb.degree() else {
        return BigInt::zero();
    };
    let r = num_traits::pow(Q::from_integer(a.x_lead().clone()), n - db) * fa.resultant(&fb);
    debug_assert!(r.is_integer());
    r.to_integer()
}

fn trim_mod(v: &mut Vec<BigInt>) {
    while v.last().is_some_and(Zero::is_zero) {
        v.pop();
    }
}

/// Degree of the gcd over F_p of the reductions of `polys` (integer
/// coefficients, lowest first). Polynomials vanishing mod p are ignored;
/// returns `None` if every one does.
pub fn gcd_degree_mod_p(polys: &[Vec<BigInt>], p: &BigInt) -> Option<usize> {
    let mut g: Vec<BigInt> = Vec::new();
    for poly in polys {
        let mut b: Vec<BigInt> = poly.iter().map(|c| c.mod_floor(p)).collect();
        trim_mod(&mut b);
        if b.is_empty() {
            continue;
        }
        if g.is_empty() {
            g = b;
            continue;
        }
        let mut a = std::mem::take(&mut g);
        while !b.is_empty() {
            let r = rem_mod(&a, &b, p);
            a = b;
            b = r;
        }
        g = a;
        if g.len() == 1 {
            return Some(0);
        }
    }
    if g.is_empty() {
        None
    } else {
        Some(g.len() - 1)
    }
}

fn rem_mod(a: &[BigInt], b: &[BigInt], p: &BigInt) -> Vec<BigInt> {
    let mut r: Vec<BigInt> = a.to_vec();
    let db = b.len() - 1;
    let inv = mod_inverse(&b[db], p).expect("leading coefficient must be a unit");
    while r.len() > db {
        let k = r.len() - 1 - db;
        let c = (&r[r.len() - 1] * &inv).mod_floor(p);
        for (j, bc) in b.iter().enumerate() {
            r[k + j] = (&r[k + j] - &c * bc).mod_floor(p);
        }
        trim_mod(&mut r);
    }
    r
}

/// Primitive integer linear form `a X + b Y` with `a > 0`, or `a = 0, b = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinearForm {
    pub a: BigInt,
    pub b: BigInt,
}

impl LinearForm {
    /// Root `T = -b / a` in the chart `Y = 1`, `None` for the root at infinity.
    pub fn root(&self) -> Option<Q> {
        if self.a.is_zero() {
            None
        } else {
            Some(Q::new(-self.b.clone(), self.a.clone()))
        }
    }

    pub fn to_form(&self) -> Form {
        Form::new(vec![self.b.clone(), self.a.clone()])
    }
}

/// `s = content * prod factor^mult`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearFactorization {
    pub content: BigInt,
    pub factors: Vec<(LinearForm, usize)>,
}

const DIVISOR_CAP: usize = 20_000;

fn linear_factorization(s: &Form) -> Result<LinearFactorization> {
    if s.is_zero() {
        return Err(Error::input("cannot factor the zero form"));
    }
    let n = s.degree();
    let (content, prim) = s.primitive();
    let mut factors = Vec::new();
    let mut coeffs: Vec<BigInt> = prim.coeffs.clone();
    trim_mod(&mut coeffs);
    let deg_t = coeffs.len() - 1;
    if n > deg_t {
        factors.push((LinearForm { a: BigInt::zero(), b: BigInt::one() }, n - deg_t));
    }
    let zeros = coeffs.iter().position(|c| !c.is_zero()).unwrap();
    if zeros > 0 {
        factors.push((LinearForm { a: BigInt::one(), b: BigInt::zero() }, zeros));
        coeffs.drain(..zeros);
    }
    // coeffs is now a primitive integer polynomial with nonzero constant term.
    let mut sign = BigInt::one();
    if coeffs.len() > 1 {
        let lead_divs = divisors(coeffs.last().unwrap(), DIVISOR_CAP)?;
        let const_divs = divisors(&coeffs[0], DIVISOR_CAP)?;
        let (Some(lead_divs), Some(const_divs)) = (lead_divs, const_divs) else {
            return Err(Error::unsupported("rational-root search exceeds its divisor budget"));
        };
        'search: for b in &lead_divs {
            for a in &const_divs {
                if !a.gcd(b).is_one() {
                    continue;
                }
                for num in [a.clone(), -a.clone()] {
                    let mut mult = 0;
                    while coeffs.len() > 1 && eval_scaled(&coeffs, &num, b).is_zero() {
                        coeffs = divide_linear(&coeffs, &num, b);
                        mult += 1;
                    }
                    if mult > 0 {
                        // root num/b corresponds to the factor b X - num Y.
                        factors.push((LinearForm { a: b.clone(), b: -num.clone() }, mult));
                    }
                    if coeffs.len() == 1 {
                        break 'search;
                    }
                }
            }
        }
        if coeffs.len() > 1 {
            return Err(Error::unsupported(format!(
                "section {s} does not split into linear factors over Q"
            )));
        }
    }
    sign *= &coeffs[0];
    factors.sort();
    Ok(LinearFactorization { content: content * sign, factors })
}

/// `b^d f(a/b)`.
fn eval_scaled(coeffs: &[BigInt], a: &BigInt, b: &BigInt) -> BigInt {
    let mut acc = BigInt::zero();
    let mut bpow = BigInt::one();
    for c in coeffs.iter().rev() {
        acc = acc * a + c * &bpow;
        bpow *= b;
    }
    acc
}

/// Exact quotient of `f` by `b T - a`.
fn divide_linear(coeffs: &[BigInt], a: &BigInt, b: &BigInt) -> Vec<BigInt> {
    let d = coeffs.len() - 1;
    let mut rem: Vec<BigInt> = coeffs.to_vec();
    let mut quo = vec![BigInt::zero(); d];
    for k in (0..d).rev() {
        let c = &rem[k + 1] / b;
        debug_assert!((&rem[k + 1] % b).is_zero());
        rem[k] += &c * a;
        rem[k + 1] = BigInt::zero();
        quo[k] = c;
    }
    quo
}

/// Sparse polynomial parser over the given variables. Grammar:
/// sums of products of integers, variables, parentheses and `^k` powers.
pub fn parse_poly(s: &str, vars: &[char]) -> Result<BTreeMap<Vec<u32>, BigInt>> {
    let mut p = Parser { chars: s.chars().filter(|c| !c.is_whitespace()).collect(), pos: 0, vars, src: s };
    let out = p.expr()?;
    if p.pos != p.chars.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(out.into_iter().filter(|(_, c)| !c.is_zero()).collect())
}

type Sparse = BTreeMap<Vec<u32>, BigInt>;

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    vars: &'a [char],
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::input(format!("cannot parse polynomial {:?} at offset {}: {msg}", self.src, self.pos))
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Sparse> {
        let mut acc = Sparse::new();
        let mut sign = BigInt::one();
        if let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            if c == '-' {
                sign = -sign;
            }
        }
        loop {
            let t = self.term()?;
            for (e, c) in t {
                *acc.entry(e).or_insert_with(BigInt::zero) += c * &sign;
            }
            match self.peek() {
                Some('+') => sign = BigInt::one(),
                Some('-') => sign = -BigInt::one(),
                _ => return Ok(acc),
            }
            self.pos += 1;
        }
    }

    fn term(&mut self) -> Result<Sparse> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                }
                Some(c) if c == '(' || c.is_ascii_digit() || self.vars.contains(&c) => {}
                _ => return Ok(acc),
            }
            let rhs = self.power()?;
            acc = mul_sparse(&acc, &rhs);
        }
    }

    fn power(&mut self) -> Result<Sparse> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            let k: u32 = self.chars[start..self.pos]
                .iter()
                .collect::<String>()
                .parse()
                .map_err(|_| self.error("expected a nonnegative integer exponent"))?;
            if k > 4096 {
                return Err(self.error("exponent too large"));
            }
            let mut acc = Sparse::from([(vec![0; self.vars.len()], BigInt::one())]);
            for _ in 0..k {
                acc = mul_sparse(&acc, &base);
            }
            return Ok(acc);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Sparse> {
        let nv = self.vars.len();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some('-') => {
                self.pos += 1;
                let a = self.power()?;
                Ok(a.into_iter().map(|(e, c)| (e, -c)).collect())
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let n: BigInt = self.chars[start..self.pos].iter().collect::<String>().parse().unwrap();
                Ok(Sparse::from([(vec![0; nv], n)]))
            }
            Some(c) if self.vars.contains(&c) => {
                self.pos += 1;
                let mut e = vec![0; nv];
                e[self.vars.iter().position(|&v| v == c).unwrap()] = 1;
                Ok(Sparse::from([(e, BigInt::one())]))
            }
            _ => Err(self.error("expected a number, variable or '('")),
        }
    }
}

fn mul_sparse(a: &Sparse, b: &Sparse) -> Sparse {
    let mut out = Sparse::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert_with(BigInt::zero) += ca * cb;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

/// Integer interpretation of a Q-polynomial with integral coefficients.
pub fn integer_coeffs(p: &UPoly) -> Option<Vec<BigInt>> {
    p.coeffs().iter().map(|c| if c.is_integer() { Some(c.to_integer()) } else { None }).collect()
}

pub fn bigint_to_f64(x: &BigInt) -> f64 {
    x.to_f64().unwrap_or(if x.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}
