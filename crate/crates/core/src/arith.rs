// SPDX-License-Identifier: Apache-2.0

//! Integer and rational helpers: sieving, valuations, factorization, parsing.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Primes `<= n` by the sieve of Eratosthenes.
pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i.saturating_mul(i);
        while j <= n {
            composite[j] = true;
            j += i;
        }
    }
    out
}

pub fn is_prime_u64(n: u64) -> bool {
    is_probable_prime(&BigInt::from(n))
}

pub fn next_prime_after(n: u64) -> u64 {
    let mut k = n + 1;
    while !is_prime_u64(k) {
        k += 1;
    }
    k
}

/// p-adic valuation of a nonzero integer.
pub fn vp_int(n: &BigInt, p: u64) -> i64 {
    debug_assert!(!n.is_zero());
    let p = BigInt::from(p);
    let mut n = n.clone();
    let mut v = 0;
    loop {
        let (quo, rem) = n.div_rem(&p);
        if !rem.is_zero() {
            return v;
        }
        n = quo;
        v += 1;
    }
}

/// p-adic valuation of a rational, `None` for zero.
pub fn vp(x: &Q, p: u64) -> Option<i64> {
    if x.is_zero() {
        return None;
    }
    Some(vp_int(x.numer(), p) - vp_int(x.denom(), p))
}

pub fn mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let g = a.extended_gcd(m);
    if !g.gcd.is_one() && g.gcd != -BigInt::one() {
        return None;
    }
    let mut x = g.x * g.gcd.signum();
    x = x.mod_floor(m);
    Some(x)
}

/// Image of a p-integral rational in `Z / m`.
pub fn rational_mod(x: &Q, m: &BigInt) -> Option<BigInt> {
    let inv = mod_inverse(&x.denom().mod_floor(m), m)?;
    Some((x.numer() * inv).mod_floor(m))
}

pub fn ceil_q(x: &Q) -> BigInt {
    x.ceil().to_integer()
}

fn pow_mod(b: &BigInt, e: &BigInt, m: &BigInt) -> BigInt {
    b.modpow(e, m)
}

const SMALL_PRIMES: [u64; 15] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];

/// Miller-Rabin with fixed bases; deterministic below 3.3e24.
pub fn is_probable_prime(n: &BigInt) -> bool {
    if n < &BigInt::from(2) {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let bp = BigInt::from(p);
        if n == &bp {
            return true;
        }
        if (n % &bp).is_zero() {
            return false;
        }
    }
    let one = BigInt::one();
    let nm1 = n - &one;
    let mut d = nm1.clone();
    let mut s = 0u32;
    while d.is_even() {
        d >>= 1;
        s += 1;
    }
    'bases: for &a in &SMALL_PRIMES[..13] {
        let mut x = pow_mod(&BigInt::from(a), &d, n);
        if x == one || x == nm1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == nm1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

fn pollard_brent(n: &BigInt, c: u64) -> Option<BigInt> {
    let one = BigInt::one();
    let c = BigInt::from(c);
    let f = |x: &BigInt| (x * x + &c) % n;
    let mut y = BigInt::from(2);
    let mut r: u64 = 1;
    let mut qprod = one.clone();
    let mut g = one.clone();
    let mut x = y.clone();
    let mut ys = y.clone();
    let m = 64u64;
    while g.is_one() {
        x = y.clone();
        for _ in 0..r {
            y = f(&y);
        }
        let mut k = 0;
        while k < r && g.is_one() {
            ys = y.clone();
            for _ in 0..m.min(r - k) {
                y = f(&y);
                qprod = (qprod * (&x - &y).abs()) % n;
            }
            g = qprod.gcd(n);
            k += m;
        }
        r *= 2;
        if r > (1 << 26) {
            return None;
        }
    }
    if &g == n {
        loop {
            ys = f(&ys);
            g = (&x - &ys).abs().gcd(n);
            if !g.is_one() {
                break;
            }
        }
    }
    if &g == n {
        None
    } else {
        Some(g)
    }
}

fn factor_into(n: BigInt, out: &mut Vec<BigInt>) -> Result<()> {
    if n.is_one() {
        return Ok(());
    }
    if is_probable_prime(&n) {
        out.push(n);
        return Ok(());
    }
    for c in 1..64u64 {
        if let Some(d) = pollard_brent(&n, c) {
            let other = &n / &d;
            factor_into(d, out)?;
            factor_into(other, out)?;
            return Ok(());
        }
    }
    Err(Error::Evaluation(format!("could not factor {n}")))
}

/// Distinct prime factors of `|n|`, ascending. `n` must be nonzero.
pub fn prime_factors(n: &BigInt) -> Result<Vec<BigInt>> {
    if n.is_zero() {
        return Err(Error::input("cannot factor zero"));
    }
    let mut n = n.abs();
    let mut out = Vec::new();
    let mut d: u64 = 2;
    while d < 100_000 {
        let bd = BigInt::from(d);
        if &bd * &bd > n {
            break;
        }
        if (&n % &bd).is_zero() {
            out.push(bd.clone());
            while (&n % &bd).is_zero() {
                n /= &bd;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    factor_into(n, &mut out)?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// Positive divisors of `|n|`; `None` if there would be more than `cap`.
pub fn divisors(n: &BigInt, cap: usize) -> Result<Option<Vec<BigInt>>> {
    let n = n.abs();
    let mut divs = vec![BigInt::one()];
    for p in prime_factors(&n)? {
        let mut e = 0;
        let mut m = n.clone();
        while (&m % &p).is_zero() {
            m /= &p;
            e += 1;
        }
        let mut next = Vec::with_capacity(divs.len() * (e + 1));
        for d in &divs {
            let mut pk = d.clone();
            for _ in 0..=e {
                next.push(pk.clone());
                pk *= &p;
            }
        }
        if next.len() > cap {
            return Ok(None);
        }
        divs = next;
    }
    divs.sort();
    Ok(Some(divs))
}

/// Parses `a/b`, integers and decimals such as `-0.125` or `1e-3`.
pub fn parse_rational(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || Error::input(format!("not a rational number: {s:?}"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((a, b)) = s.split_once('/') {
        let n: BigInt = a.trim().parse().map_err(|_| bad())?;
        let d: BigInt = b.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::input(format!("zero denominator in {s:?}")));
        }
        return Ok(Q::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: BigInt = format!("0{int_part}{frac_part}").parse().map_err(|_| bad())?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut v = if scale >= 0 {
        Q::from_integer(all * num_traits::pow(ten, scale as usize))
    } else {
        Q::new(all, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        v = -v;
    }
    Ok(v)
}

pub fn format_rational(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn q_to_f64(x: &Q) -> f64 {
    if let (Some(n), Some(d)) = (x.numer().to_f64(), x.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Very large parts: keep the top bits of each.
    let nb = x.numer().bits().saturating_sub(60);
    let db = x.denom().bits().saturating_sub(60);
    let n = (x.numer() >> nb).to_f64().unwrap_or(0.0);
    let d = (x.denom() >> db).to_f64().unwrap_or(1.0);
    n / d * 2f64.powi(nb as i32 - db as i32)
}

/// Exact rational value of a finite double.
pub fn f64_to_q(x: f64) -> Result<Q> {
    Q::from_float(x).ok_or_else(|| Error::input(format!("not a finite number: {x}")))
}
