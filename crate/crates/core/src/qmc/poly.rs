//! Polynomials over the prime field `Z_b`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

/// Polynomial with coefficients in `{0, .., b-1}`, lowest degree first, no
/// trailing zeros.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PolyGF {
    base: u32,
    coeffs: Vec<u32>,
}

pub fn is_prime(b: u32) -> bool {
    b >= 2 && (2..).take_while(|d| d * d <= b).all(|d| b % d != 0)
}

impl PolyGF {
    pub fn new(base: u32, mut coeffs: Vec<u32>) -> Result<Self> {
        if !is_prime(base) {
            return Err(Error::Input(format!("base {base} is not prime")));
        }
        if let Some(c) = coeffs.iter().find(|&&c| c >= base) {
            return Err(Error::Input(format!("coefficient {c} not below base {base}")));
        }
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        Ok(PolyGF { base, coeffs })
    }

    fn raw(base: u32, mut coeffs: Vec<u32>) -> Self {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        PolyGF { base, coeffs }
    }

    pub fn zero(base: u32) -> Self {
        PolyGF { base, coeffs: Vec::new() }
    }

    pub fn one(base: u32) -> Self {
        PolyGF { base, coeffs: vec![1] }
    }

    /// `x^k`.
    pub fn monomial(base: u32, k: usize) -> Self {
        let mut coeffs = vec![0; k + 1];
        coeffs[k] = 1;
        PolyGF { base, coeffs }
    }

    /// The polynomial whose coefficients are the base-`b` digits of `n`,
    /// least significant digit as constant term.
    pub fn from_int(mut n: u64, base: u32) -> Result<Self> {
        if !is_prime(base) {
            return Err(Error::Input(format!("base {base} is not prime")));
        }
        let mut coeffs = Vec::new();
        while n > 0 {
            coeffs.push((n % base as u64) as u32);
            n /= base as u64;
        }
        Ok(PolyGF { base, coeffs })
    }

    /// Inverse of [`PolyGF::from_int`]; `None` on overflow.
    pub fn to_int(&self) -> Option<u64> {
        self.coeffs.iter().rev().try_fold(0u64, |acc, &c| {
            acc.checked_mul(self.base as u64)?.checked_add(c as u64)
        })
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn coeffs(&self) -> &[u32] {
        &self.coeffs
    }

    /// Coefficient of `x^k`.
    pub fn coeff(&self, k: usize) -> u32 {
        self.coeffs.get(k).copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    fn check_base(&self, other: &PolyGF) -> Result<()> {
        if self.base != other.base {
            return Err(Error::Input(format!(
                "base mismatch: {} vs {}",
                self.base, other.base
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &PolyGF) -> Result<PolyGF> {
        self.check_base(other)?;
        let b = self.base;
        let len = self.coeffs.len().max(other.coeffs.len());
        Ok(Self::raw(
            b,
            (0..len).map(|k| (self.coeff(k) + other.coeff(k)) % b).collect(),
        ))
    }

    pub fn mul(&self, other: &PolyGF) -> Result<PolyGF> {
        self.check_base(other)?;
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(self.base));
        }
        let b = self.base as u64;
        let mut out = vec![0u64; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &c) in other.coeffs.iter().enumerate() {
                out[i + j] = (out[i + j] + a as u64 * c as u64) % b;
            }
        }
        Ok(Self::raw(self.base, out.into_iter().map(|c| c as u32).collect()))
    }

    /// Remainder of division by a nonzero `modulus`.
    pub fn rem(&self, modulus: &PolyGF) -> Result<PolyGF> {
        self.check_base(modulus)?;
        let dm = modulus
            .degree()
            .ok_or_else(|| Error::Input("division by the zero polynomial".into()))?;
        let b = self.base;
        let inv_lead = inverse_mod(modulus.coeffs[dm], b);
        let mut r = self.coeffs.clone();
        while r.len() > dm {
            let top = r.len() - 1;
            let f = (r[top] as u64 * inv_lead as u64 % b as u64) as u32;
            if f != 0 {
                let shift = top - dm;
                for (k, &mc) in modulus.coeffs.iter().enumerate() {
                    let sub = (f as u64 * mc as u64 % b as u64) as u32;
                    r[shift + k] = (r[shift + k] + b - sub) % b;
                }
            }
            r.pop();
        }
        Ok(Self::raw(b, r))
    }
}

impl fmt::Debug for PolyGF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0 (mod {})", self.base);
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match (k, c) {
                (0, c) => write!(f, "{c}")?,
                (1, 1) => write!(f, "x")?,
                (1, c) => write!(f, "{c}x")?,
                (k, 1) => write!(f, "x^{k}")?,
                (k, c) => write!(f, "{c}x^{k}")?,
            }
        }
        write!(f, " (mod {})", self.base)
    }
}

fn inverse_mod(a: u32, b: u32) -> u32 {
    // Fermat: a^(b-2) mod b
    let (mut base, mut exp, mut acc) = (a as u64 % b as u64, b - 2, 1u64);
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % b as u64;
        }
        base = base * base % b as u64;
        exp >>= 1;
    }
    acc as u32
}

pub fn int_to_poly(n: u64, b: u32) -> Result<PolyGF> {
    PolyGF::from_int(n, b)
}

/// `(a g) mod p`.
pub fn poly_mul_mod(a: &PolyGF, g: &PolyGF, p: &PolyGF) -> Result<PolyGF> {
    a.mul(g)?.rem(p)
}

/// First `m` Laurent digits `t_1 .. t_m` of `a(x) / p(x)`, by `m` steps of
/// synthetic division. Requires `deg a < deg p`.
pub fn vm_digits(a: &PolyGF, p: &PolyGF, m: usize) -> Result<Vec<u32>> {
    a.check_base(p)?;
    let dp = p
        .degree()
        .ok_or_else(|| Error::Input("division by the zero polynomial".into()))?;
    if a.degree().is_some_and(|d| d >= dp) {
        return Err(Error::Input(format!(
            "numerator degree {} is not below the modulus degree {dp}",
            a.degree().unwrap_or(0)
        )));
    }
    let b = a.base as u64;
    let inv_lead = inverse_mod(p.coeffs[dp], a.base) as u64;
    // remainder padded to dp + 1 coefficients
    let mut r: Vec<u64> = (0..=dp).map(|k| a.coeff(k) as u64).collect();
    let mut digits = Vec::with_capacity(m);
    for _ in 0..m {
        r.rotate_right(1); // multiply by x; r[dp] was zero so r[0] becomes 0
        let t = r[dp] * inv_lead % b;
        if t != 0 {
            for (k, &pc) in p.coeffs.iter().enumerate() {
                r[k] = (r[k] + b - t * pc as u64 % b) % b;
            }
        }
        debug_assert_eq!(r[dp], 0);
        digits.push(t as u32);
    }
    Ok(digits)
}

/// `sum_l t_l b^-l`.
pub fn digits_value(digits: &[u32], b: u32) -> f64 {
    digits
        .iter()
        .rev()
        .fold(0.0, |acc, &t| (acc + t as f64) / b as f64)
}

/// Trial division by every monic polynomial of degree `1 ..= deg/2`.
pub fn is_irreducible(p: &PolyGF) -> bool {
    let Some(d) = p.degree() else { return false };
    if d == 0 {
        return false;
    }
    let b = p.base as u64;
    for k in 1..=d / 2 {
        // monic polynomials of degree k are b^k + r for 0 <= r < b^k
        let lo = b.pow(k as u32);
        for code in lo..2 * lo {
            let q = PolyGF::from_int(code, p.base).expect("base already validated");
            if p.rem(&q).map(|r| r.is_zero()).unwrap_or(false) {
                return false;
            }
        }
    }
    true
}

/// Smallest (by integer encoding) monic irreducible polynomial of degree `m`.
pub fn find_irreducible(b: u32, m: usize) -> Result<PolyGF> {
    static CACHE: OnceLock<Mutex<HashMap<(u32, usize), PolyGF>>> = OnceLock::new();
    if !is_prime(b) {
        return Err(Error::Input(format!("base {b} is not prime")));
    }
    if m == 0 {
        return Err(Error::Input("modulus degree must be positive".into()));
    }
    let cache = CACHE.get_or_init(Default::default);
    if let Some(p) = cache.lock().expect("cache poisoned").get(&(b, m)) {
        return Ok(p.clone());
    }
    let lo = (b as u64)
        .checked_pow(m as u32)
        .ok_or_else(|| Error::Input(format!("degree {m} too large for base {b}")))?;
    let p = (lo..2 * lo)
        .map(|code| PolyGF::from_int(code, b).expect("prime base"))
        .find(is_irreducible)
        .expect("irreducible polynomials exist in every degree");
    cache.lock().expect("cache poisoned").insert((b, m), p.clone());
    Ok(p)
}
