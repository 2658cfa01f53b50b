//! Exact scalar arithmetic over finite sums of rational multiples of
//! square roots of positive integers.
//!
//! Values are stored as maps `squarefree radicand -> rational coefficient`,
//! which is closed under addition and multiplication and has decidable
//! equality. Division is supported for the cases the library needs:
//! rational divisors, single-radical divisors, and Gaussian rationals.

use std::collections::BTreeMap;
use std::fmt;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

/// Parse a rational from `"p/q"` or `"p"` decimal-free notation.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                None
            } else {
                Some(Rat::new(p, q))
            }
        }
        None => {
            let p: BigInt = s.parse().ok()?;
            Some(Rat::from_integer(p))
        }
    }
}

pub fn rat_from(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// n = s * q^2 with s squarefree; returns (s, q). Trial division; the
/// radicands appearing here stay small (fiber counts and their products).
fn squarefree_decompose(n: u64) -> (u64, u64) {
    assert!(n > 0);
    let mut s = 1u64;
    let mut q = 1u64;
    let mut m = n;
    let mut d = 2u64;
    while d * d <= m {
        if m % d == 0 {
            let mut e = 0u32;
            while m % d == 0 {
                m /= d;
                e += 1;
            }
            q *= d.pow(e / 2);
            if e % 2 == 1 {
                s *= d;
            }
        }
        d += 1;
    }
    (s * m, q)
}

/// A finite sum  Σ c_s √s  with rational c_s and squarefree s ≥ 1.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct RadicalSum {
    terms: BTreeMap<u64, Rat>,
}

impl RadicalSum {
    pub fn zero() -> Self {
        RadicalSum::default()
    }

    pub fn one() -> Self {
        RadicalSum::from_rat(Rat::one())
    }

    pub fn from_rat(r: Rat) -> Self {
        let mut terms = BTreeMap::new();
        if !r.is_zero() {
            terms.insert(1, r);
        }
        RadicalSum { terms }
    }

    pub fn from_int(n: i64) -> Self {
        RadicalSum::from_rat(rat_int(n))
    }

    /// c·√s, normalized so the stored radicand is squarefree.
    pub fn radical(c: Rat, s: u64) -> Self {
        assert!(s > 0, "radicand must be positive");
        let (sf, q) = squarefree_decompose(s);
        let coeff = c * Rat::from_integer(BigInt::from(q));
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(sf, coeff);
        }
        RadicalSum { terms }
    }

    /// Exact √r for a nonnegative rational r: √(p/q) = √(pq)/q.
    pub fn sqrt_rat(r: &Rat) -> Self {
        assert!(!r.is_negative(), "sqrt of negative rational");
        if r.is_zero() {
            return RadicalSum::zero();
        }
        let p = r.numer().to_u64().expect("sqrt radicand too large");
        let q = r.denom().to_u64().expect("sqrt radicand too large");
        RadicalSum::radical(Rat::new(BigInt::one(), BigInt::from(q)), p * q)
    }

    pub fn sqrt_int(n: u64) -> Self {
        RadicalSum::radical(Rat::one(), n.max(1))
    }

    /// (radicand, coefficient) pairs, squarefree radicands ascending.
    pub fn terms(&self) -> impl Iterator<Item = (&u64, &Rat)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Some(r) when the value lies in ℚ.
    pub fn as_rat(&self) -> Option<Rat> {
        match self.terms.len() {
            0 => Some(Rat::zero()),
            1 => {
                let (s, c) = self.terms.iter().next().unwrap();
                if *s == 1 {
                    Some(c.clone())
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.terms
            .iter()
            .map(|(s, c)| rat_to_f64(c) * (*s as f64).sqrt())
            .sum()
    }

    pub fn neg(&self) -> Self {
        RadicalSum {
            terms: self.terms.iter().map(|(s, c)| (*s, -c.clone())).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (s, c) in &other.terms {
            let e = terms.entry(*s).or_insert_with(Rat::zero);
            *e += c.clone();
        }
        terms.retain(|_, c| !c.is_zero());
        RadicalSum { terms }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut acc = RadicalSum::zero();
        for (s1, c1) in &self.terms {
            for (s2, c2) in &other.terms {
                let t = RadicalSum::radical(c1 * c2, s1 * s2);
                acc = acc.add(&t);
            }
        }
        acc
    }

    pub fn scale(&self, r: &Rat) -> Self {
        if r.is_zero() {
            return RadicalSum::zero();
        }
        RadicalSum {
            terms: self.terms.iter().map(|(s, c)| (*s, c * r)).collect(),
        }
    }

    /// Multiplicative inverse for single-term values c√s: 1/(c√s) = √s/(c·s).
    pub fn recip_single(&self) -> Option<Self> {
        if self.terms.len() != 1 {
            return None;
        }
        let (s, c) = self.terms.iter().next().unwrap();
        let coeff = Rat::one() / (c * Rat::from_integer(BigInt::from(*s)));
        Some(RadicalSum::radical(coeff, *s))
    }

    /// Sign is well defined for single-term values; multi-term values fall
    /// back to the floating approximation.
    pub fn is_negative(&self) -> bool {
        if self.terms.len() <= 1 {
            self.terms.values().next().map_or(false, |c| c.is_negative())
        } else {
            self.to_f64() < 0.0
        }
    }
}

impl fmt::Display for RadicalSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (s, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if *s == 1 {
                write!(f, "{}", c)?;
            } else {
                write!(f, "{}*sqrt({})", c, s)?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for RadicalSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Complex number with `RadicalSum` real and imaginary parts.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct ExactComplex {
    pub re: RadicalSum,
    pub im: RadicalSum,
}

impl ExactComplex {
    pub fn zero() -> Self {
        ExactComplex::default()
    }

    pub fn one() -> Self {
        ExactComplex {
            re: RadicalSum::one(),
            im: RadicalSum::zero(),
        }
    }

    pub fn i() -> Self {
        ExactComplex {
            re: RadicalSum::zero(),
            im: RadicalSum::one(),
        }
    }

    pub fn real(r: RadicalSum) -> Self {
        ExactComplex {
            re: r,
            im: RadicalSum::zero(),
        }
    }

    pub fn from_rat(r: Rat) -> Self {
        ExactComplex::real(RadicalSum::from_rat(r))
    }

    pub fn from_int(n: i64) -> Self {
        ExactComplex::from_rat(rat_int(n))
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn add(&self, o: &Self) -> Self {
        ExactComplex {
            re: self.re.add(&o.re),
            im: self.im.add(&o.im),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        ExactComplex {
            re: self.re.sub(&o.re),
            im: self.im.sub(&o.im),
        }
    }

    pub fn neg(&self) -> Self {
        ExactComplex {
            re: self.re.neg(),
            im: self.im.neg(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        ExactComplex {
            re: self.re.mul(&o.re).sub(&self.im.mul(&o.im)),
            im: self.re.mul(&o.im).add(&self.im.mul(&o.re)),
        }
    }

    pub fn conj(&self) -> Self {
        ExactComplex {
            re: self.re.clone(),
            im: self.im.neg(),
        }
    }

    pub fn scale(&self, r: &Rat) -> Self {
        ExactComplex {
            re: self.re.scale(r),
            im: self.im.scale(r),
        }
    }

    pub fn mul_radical(&self, r: &RadicalSum) -> Self {
        ExactComplex {
            re: self.re.mul(r),
            im: self.im.mul(r),
        }
    }

    /// |z|² as an exact real.
    pub fn norm_sqr(&self) -> RadicalSum {
        self.re.mul(&self.re).add(&self.im.mul(&self.im))
    }

    /// Some(re) when the value is rational real.
    pub fn as_rat(&self) -> Option<Rat> {
        if !self.im.is_zero() {
            return None;
        }
        self.re.as_rat()
    }

    pub fn as_gauss(&self) -> Option<(Rat, Rat)> {
        Some((self.re.as_rat()?, self.im.as_rat()?))
    }

    /// Inverse of a Gaussian rational (both parts in ℚ).
    pub fn recip_gauss(&self) -> Option<Self> {
        let (a, b) = self.as_gauss()?;
        let n = &a * &a + &b * &b;
        if n.is_zero() {
            return None;
        }
        Some(ExactComplex {
            re: RadicalSum::from_rat(a / n.clone()),
            im: RadicalSum::from_rat(-b / n),
        })
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }

    pub fn abs_f64(&self) -> f64 {
        let (re, im) = self.to_f64();
        re.hypot(im)
    }

    /// |z| = 1 exactly? Decidable through |z|² ∈ ℚ.
    pub fn is_unimodular(&self) -> bool {
        self.norm_sqr().as_rat().map_or(false, |r| r.is_one())
    }
}

impl fmt::Debug for ExactComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", self.re)
        } else {
            write!(f, "({}) + ({})i", self.re, self.im)
        }
    }
}

impl fmt::Display for ExactComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squarefree() {
        assert_eq!(squarefree_decompose(1), (1, 1));
        assert_eq!(squarefree_decompose(4), (1, 2));
        assert_eq!(squarefree_decompose(12), (3, 2));
        assert_eq!(squarefree_decompose(18), (2, 3));
        assert_eq!(squarefree_decompose(7), (7, 1));
    }

    #[test]
    fn sqrt2_squared_is_two() {
        let s = RadicalSum::sqrt_int(2);
        assert_eq!(s.mul(&s).as_rat(), Some(rat_int(2)));
    }

    #[test]
    fn sqrt8_normalizes() {
        let s = RadicalSum::sqrt_int(8);
        assert_eq!(s, RadicalSum::radical(rat_int(2), 2));
    }

    #[test]
    fn mixed_radicands_multiply() {
        let a = RadicalSum::sqrt_int(2);
        let b = RadicalSum::sqrt_int(3);
        assert_eq!(a.mul(&b), RadicalSum::sqrt_int(6));
        // (√2 + √3)(√2 − √3) = −1
        let p = a.add(&b).mul(&a.sub(&b));
        assert_eq!(p.as_rat(), Some(rat_int(-1)));
    }

    #[test]
    fn sqrt_rat_half() {
        // √(1/2) = √2 / 2
        let s = RadicalSum::sqrt_rat(&rat_from(1, 2));
        assert_eq!(s, RadicalSum::radical(rat_from(1, 2), 2));
        assert_eq!(s.mul(&s).as_rat(), Some(rat_from(1, 2)));
    }

    #[test]
    fn recip_single_term() {
        let s = RadicalSum::radical(rat_from(3, 2), 2); // (3/2)√2
        let r = s.recip_single().unwrap();
        assert_eq!(s.mul(&r).as_rat(), Some(rat_int(1)));
        assert!(RadicalSum::zero().recip_single().is_none());
        let multi = RadicalSum::sqrt_int(2).add(&RadicalSum::one());
        assert!(multi.recip_single().is_none());
    }

    #[test]
    fn complex_norms() {
        let z = ExactComplex {
            re: RadicalSum::sqrt_int(2),
            im: RadicalSum::one(),
        };
        assert_eq!(z.norm_sqr().as_rat(), Some(rat_int(3)));
        let w = z.mul(&z.conj());
        assert_eq!(w.as_rat(), Some(rat_int(3)));
    }

    #[test]
    fn gauss_recip() {
        let z = ExactComplex {
            re: RadicalSum::from_rat(rat_int(3)),
            im: RadicalSum::from_rat(rat_int(4)),
        };
        let r = z.recip_gauss().unwrap();
        assert_eq!(z.mul(&r), ExactComplex::one());
    }

    #[test]
    fn parse_rationals() {
        assert_eq!(parse_rat("2/3"), Some(rat_from(2, 3)));
        assert_eq!(parse_rat("-5"), Some(rat_int(-5)));
        assert_eq!(parse_rat("1/0"), None);
    }
}
