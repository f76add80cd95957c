//! Truncated p-adic scalars with an explicit precision ledger.
//!
//! A [`PadicScalar`] is a residue modulo `p^M` together with the exponent `k`
//! up to which it is trusted. Residues are always stored reduced modulo `p^k`,
//! so two scalars with the same value and precision are structurally equal.

use std::fmt;

use crate::error::{Error, Result};

/// Largest supported modulus; products of two residues must fit in `u128`.
const MAX_MODULUS: u64 = 1 << 62;

/// Prime, working precision and dimension shared by every value in a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrimeConfig {
    pub p: u64,
    pub m: u32,
    pub n: usize,
}

impl PrimeConfig {
    pub fn new(p: u64, m: u32, n: usize) -> Result<Self> {
        if p < 3 || !is_prime(p) {
            return Err(Error::InvalidConfig(format!("p = {p} must be an odd prime")));
        }
        if m == 0 {
            return Err(Error::InvalidConfig("M must be at least 1".into()));
        }
        if !(2..=crate::MAX_N).contains(&n) {
            return Err(Error::InvalidConfig(format!("n = {n} must lie in 2..={}", crate::MAX_N)));
        }
        match checked_pow(p, m) {
            Some(q) if q <= MAX_MODULUS => Ok(Self { p, m, n }),
            _ => Err(Error::InvalidConfig(format!("p^M = {p}^{m} is too large"))),
        }
    }

    /// The desk-scale default: p = 3, M = 8, n = 2.
    pub fn desk() -> Self {
        Self { p: 3, m: 8, n: 2 }
    }

    pub fn modulus(&self) -> u64 {
        pow_u64(self.p, self.m)
    }

    pub fn scalar(&self, value: i64) -> PadicScalar {
        PadicScalar::new(self.p, self.m, value)
    }
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn checked_pow(p: u64, k: u32) -> Option<u64> {
    let mut acc: u64 = 1;
    for _ in 0..k {
        acc = acc.checked_mul(p)?;
    }
    Some(acc)
}

pub(crate) fn pow_u64(p: u64, k: u32) -> u64 {
    p.pow(k)
}

/// p-adic valuation of a nonzero integer.
pub fn int_valuation(p: u64, mut x: i128) -> u32 {
    assert!(x != 0, "valuation of zero integer");
    let p = p as i128;
    let mut v = 0;
    while x % p == 0 {
        x /= p;
        v += 1;
    }
    v
}

/// Extended natural number: a finite valuation or the zero-at-precision marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Valuation {
    Finite(u32),
    Infinite,
}

impl Valuation {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Valuation::Infinite)
    }

    pub fn finite(&self) -> Option<u32> {
        match self {
            Valuation::Finite(v) => Some(*v),
            Valuation::Infinite => None,
        }
    }

    /// `self >= k` in the extended order.
    pub fn at_least(&self, k: u32) -> bool {
        match self {
            Valuation::Finite(v) => *v >= k,
            Valuation::Infinite => true,
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => write!(f, "inf"),
        }
    }
}

/// An element of `Z/p^M` known modulo `p^prec`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PadicScalar {
    p: u64,
    m: u32,
    residue: u64,
    prec: u32,
}

impl PadicScalar {
    /// The integer `value` reduced modulo `p^M`, at full precision.
    pub fn new(p: u64, m: u32, value: i64) -> Self {
        let q = pow_u64(p, m) as i128;
        let r = (value as i128).rem_euclid(q) as u64;
        Self { p, m, residue: r, prec: m }
    }

    /// A residue trusted modulo `p^prec`; `prec` is clamped to `M`.
    pub fn with_precision(p: u64, m: u32, residue: u64, prec: u32) -> Self {
        let prec = prec.min(m);
        let q = pow_u64(p, prec);
        Self { p, m, residue: residue % q, prec }
    }

    pub fn from_i128(p: u64, m: u32, value: i128, prec: u32) -> Self {
        let prec = prec.min(m);
        let q = pow_u64(p, prec) as i128;
        Self { p, m, residue: value.rem_euclid(q) as u64, prec }
    }

    pub fn zero(p: u64, m: u32) -> Self {
        Self { p, m, residue: 0, prec: m }
    }

    pub fn one(p: u64, m: u32) -> Self {
        Self::new(p, m, 1)
    }

    /// Zero known only modulo `p^prec`.
    pub fn zero_at(p: u64, m: u32, prec: u32) -> Self {
        Self { p, m, residue: 0, prec: prec.min(m) }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn working_precision(&self) -> u32 {
        self.m
    }

    pub fn residue(&self) -> u64 {
        self.residue
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    /// Representative in `(-p^prec/2, p^prec/2]`, handy for display and tests.
    pub fn signed(&self) -> i128 {
        let q = pow_u64(self.p, self.prec) as i128;
        let r = self.residue as i128;
        if 2 * r > q {
            r - q
        } else {
            r
        }
    }

    pub fn is_zero_at_precision(&self) -> bool {
        self.residue == 0
    }

    /// True when the value is exactly zero at full working precision.
    pub fn is_exact_zero(&self) -> bool {
        self.residue == 0 && self.prec == self.m
    }

    pub fn valuation(&self) -> Valuation {
        if self.residue == 0 {
            return Valuation::Infinite;
        }
        Valuation::Finite(int_valuation(self.p, self.residue as i128))
    }

    /// Largest `w` with the value known to lie in `p^w Z_p`.
    pub fn val_bound(&self) -> u32 {
        match self.valuation() {
            Valuation::Finite(v) => v,
            Valuation::Infinite => self.prec,
        }
    }

    fn modulus_at(&self, k: u32) -> u64 {
        pow_u64(self.p, k)
    }

    pub fn add(&self, other: &Self) -> Self {
        let prec = self.prec.min(other.prec);
        let q = self.modulus_at(prec) as u128;
        let r = ((self.residue as u128 + other.residue as u128) % q) as u64;
        Self { p: self.p, m: self.m, residue: r, prec }
    }

    pub fn neg(&self) -> Self {
        let q = self.modulus_at(self.prec);
        let r = if self.residue == 0 { 0 } else { q - self.residue };
        Self { residue: r, ..*self }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Product; the error of each factor is scaled by the valuation of the other.
    pub fn mul(&self, other: &Self) -> Self {
        let prec = (self.prec + other.val_bound()).min(other.prec + self.val_bound()).min(self.m);
        let q = self.modulus_at(prec) as u128;
        let r = ((self.residue as u128 * other.residue as u128) % q) as u64;
        Self { p: self.p, m: self.m, residue: r, prec }
    }

    /// Multiplication by an exact integer.
    pub fn mul_int(&self, c: i64) -> Self {
        if c == 0 {
            return Self::zero(self.p, self.m);
        }
        self.mul(&Self::new(self.p, self.m, c))
    }

    /// Multiplication by `p^k`; raises the known precision by `k`.
    pub fn mul_p_power(&self, k: u32) -> Self {
        let prec = (self.prec + k).min(self.m);
        let q = self.modulus_at(prec) as u128;
        let f = self.modulus_at(k.min(self.m)) as u128;
        let r = ((self.residue as u128 * f) % q) as u64;
        Self { p: self.p, m: self.m, residue: r, prec }
    }

    /// Exact division by `p^k`; lowers the known precision by `k`.
    pub fn divide_exact(&self, k: u32) -> Result<Self> {
        if k == 0 {
            return Ok(*self);
        }
        match self.valuation() {
            Valuation::Finite(v) if v < k => Err(Error::NotDivisible { valuation: v, k }),
            Valuation::Finite(_) => {
                let r = self.residue / self.modulus_at(k);
                Ok(Self { p: self.p, m: self.m, residue: r, prec: self.prec - k })
            }
            Valuation::Infinite => Ok(Self::zero_at(self.p, self.m, self.prec.saturating_sub(k))),
        }
    }

    /// Multiplicative inverse modulo `p^prec`.
    pub fn invert(&self) -> Result<Self> {
        match self.valuation() {
            Valuation::Finite(0) => {}
            Valuation::Finite(v) => return Err(Error::NotAUnit { valuation: Some(v) }),
            Valuation::Infinite => return Err(Error::NotAUnit { valuation: None }),
        }
        let q = self.modulus_at(self.prec) as i128;
        let inv = mod_inverse(self.residue as i128, q).expect("unit has an inverse");
        Ok(Self { residue: inv as u64, ..*self })
    }

    /// Lower the known precision to `k` (no-op if already lower).
    pub fn truncate(&self, k: u32) -> Self {
        if k >= self.prec {
            return *self;
        }
        Self::with_precision(self.p, self.m, self.residue, k)
    }

    /// The same value read in `Z/p^m` for a working precision `m ≤ M`.
    pub fn reduce_to(&self, m: u32) -> Self {
        Self::with_precision(self.p, m, self.residue, self.prec)
    }

    /// Equality modulo the smaller of the two precisions.
    pub fn agrees(&self, other: &Self) -> bool {
        let k = self.prec.min(other.prec);
        let q = self.modulus_at(k);
        self.residue % q == other.residue % q
    }
}

fn mod_inverse(a: i128, q: i128) -> Option<i128> {
    let (mut old_r, mut r) = (a.rem_euclid(q), q);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let t = old_r / r;
        (old_r, r) = (r, old_r - t * r);
        (old_s, s) = (s, old_s - t * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(q))
}

impl fmt::Display for PadicScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + O({}^{})", self.signed(), self.p, self.prec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(m: u32, v: i64) -> PadicScalar {
        PadicScalar::new(3, m, v)
    }

    #[test]
    fn valuation_examples() {
        assert_eq!(s(8, 9).valuation(), Valuation::Finite(2));
        assert_eq!(s(8, 0).valuation(), Valuation::Infinite);
        assert_eq!(s(8, 6561).valuation(), Valuation::Infinite);
    }

    #[test]
    fn divide_exact_examples() {
        let q = s(8, 18).divide_exact(2).unwrap();
        assert_eq!((q.residue(), q.precision()), (2, 6));
        assert!(matches!(s(8, 5).divide_exact(1), Err(Error::NotDivisible { .. })));
        let z = s(8, 0).divide_exact(3).unwrap();
        assert!(z.is_zero_at_precision());
        assert_eq!(z.precision(), 5);
    }

    #[test]
    fn invert_examples() {
        assert_eq!(s(4, 2).invert().unwrap().residue(), 41);
        assert_eq!(s(8, 1).invert().unwrap().residue(), 1);
        assert!(matches!(s(8, 3).invert(), Err(Error::NotAUnit { .. })));
    }

    #[test]
    fn precision_grows_under_p_multiplication() {
        let x = PadicScalar::with_precision(3, 8, 5, 6);
        let y = x.mul(&s(8, 9));
        assert_eq!(y.precision(), 8);
        assert_eq!(y.residue(), 45);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(PrimeConfig::new(2, 8, 2).is_err());
        assert!(PrimeConfig::new(9, 8, 2).is_err());
        assert!(PrimeConfig::new(3, 0, 2).is_err());
        assert!(PrimeConfig::new(3, 8, 1).is_err());
        assert!(PrimeConfig::new(3, 8, 2).is_ok());
    }

    proptest! {
        #[test]
        fn double_inverse(a in 0i64..6561) {
            let x = s(8, a);
            prop_assume!(a % 3 != 0);
            let y = x.invert().unwrap().invert().unwrap();
            prop_assert_eq!(y, x);
        }

        #[test]
        fn valuation_of_product(a in 0i64..6561, b in 0i64..6561) {
            let (x, y) = (s(8, a), s(8, b));
            let lhs = x.mul(&y).valuation();
            let rhs = match (x.valuation(), y.valuation()) {
                (Valuation::Finite(u), Valuation::Finite(v)) if u + v < 8 => Valuation::Finite(u + v),
                _ => Valuation::Infinite,
            };
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn divide_after_scaling(a in 0i64..6561, k in 0u32..=8) {
            let x = s(8, a);
            let y = x.mul_int(3i64.pow(k)).divide_exact(k).unwrap();
            prop_assert_eq!(y.precision(), 8 - k);
            prop_assert!(y.agrees(&x));
        }
    }
}
