//! Membership in the overconvergent subrings, minimal levels, unit tests
//! and the `p^k u^{-L} · unit` factorization.

use std::fmt;

use crate::error::{Error, Result};
use crate::laurent::SeriesElement;
use crate::padic::{pow_u64, Valuation};

pub const DEFAULT_LEVEL_CAP: u32 = 12;

/// Ramification index of the uniformizer; `e = 1` is the unramified case.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RamificationConfig {
    pub e: u32,
}

impl RamificationConfig {
    pub const UNRAMIFIED: Self = Self { e: 1 };

    pub fn new(e: u32) -> Result<Self> {
        if e == 0 {
            return Err(Error::InvalidConfig("ramification index must be at least 1".into()));
        }
        Ok(Self { e })
    }
}

/// An exact non-negative or negative rational `num/den`, `den > 0`, reduced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rational {
    pub num: i128,
    pub den: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Rational {
    pub fn new(num: i128, den: i128) -> Self {
        assert!(den != 0);
        let s = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den).max(1);
        Self { num: s * num / g, den: s * den / g }
    }

    pub fn is_negative(&self) -> bool {
        self.num < 0
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverconvergenceReport {
    /// `None` when no level up to `cap` works.
    pub minimal_level: Option<u32>,
    /// Negative exponent with the least slack at the reported level.
    pub binding_exponent: Option<i64>,
    /// Slack `v(f_i) + i/((p-1) e p^{N-1})` at the binding exponent.
    pub margin: Option<Rational>,
    pub cap: u32,
}

/// `(p - 1) e p^{N - 1}`.
fn denominator(p: u64, n: u32, cfg: RamificationConfig) -> i128 {
    (p as i128 - 1) * cfg.e as i128 * pow_u64(p, n - 1) as i128
}

/// Negative exponents with finite coefficient valuation.
fn constraints(x: &SeriesElement) -> Vec<(i64, u32)> {
    x.coeffs().range(..0).filter_map(|(i, c)| c.valuation().finite().map(|v| (*i, v))).collect()
}

/// Least slack over the negative tail at level `n`, with its exponent.
pub fn slack(x: &SeriesElement, n: u32, cfg: RamificationConfig) -> Option<(i64, Rational)> {
    assert!(n >= 1, "levels start at 1");
    let d = denominator(x.ctx().p(), n, cfg);
    constraints(x)
        .into_iter()
        .map(|(i, v)| (i, Rational::new(v as i128 * d + i as i128, d)))
        .min_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
}

/// Does the level-`n` inequality hold (strictly if `strict`) at every stored `i < 0`?
pub fn satisfies(x: &SeriesElement, n: u32, cfg: RamificationConfig, strict: bool) -> bool {
    match slack(x, n, cfg) {
        None => true,
        Some((_, m)) if strict => m.num > 0,
        Some((_, m)) => m.num >= 0,
    }
}

/// Smallest level `N ≥ 1` at which `x` satisfies the growth inequality.
///
/// Only the stored exponents are checked; the limit condition at
/// `i → -∞` is vacuous for a finite window.
pub fn minimal_level(x: &SeriesElement, cfg: RamificationConfig, cap: u32) -> OverconvergenceReport {
    let found = (1..=cap).find(|&n| satisfies(x, n, cfg, false));
    let (binding_exponent, margin) = match found.and_then(|n| slack(x, n, cfg)) {
        Some((i, m)) => (Some(i), Some(m)),
        None => (None, None),
    };
    OverconvergenceReport { minimal_level: found, binding_exponent, margin, cap }
}

/// `v(f_0) = 0` and the strict inequality at level `n`.
pub fn invertibility_check(x: &SeriesElement, n: u32, cfg: RamificationConfig) -> bool {
    x.coeff(0).valuation() == Valuation::Finite(0) && satisfies(x, n, cfg, true)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PFactorization {
    pub k: u32,
    pub l: i64,
    pub unit: SeriesElement,
    pub level_increase: u32,
}

/// Write `x = p^k u^{-L} · unit`.
///
/// `k` is the Gauss valuation, `-L` the lowest exponent where it is
/// attained, and `unit` passes `invertibility_check` at level
/// `n + level_increase`.
pub fn factor_p_power(x: &SeriesElement, n: u32, cfg: RamificationConfig, cap: u32) -> Result<PFactorization> {
    let k = x.gauss_valuation().finite().ok_or(Error::ZeroInput)?;
    let i_min = x.coeffs().iter().find(|(_, c)| c.valuation() == Valuation::Finite(k)).map(|(i, _)| *i).ok_or(Error::ZeroInput)?;
    let l = -i_min;
    let unit = x.shift(l)?.divide_exact(k)?;
    let level = (n.max(1)..=cap).find(|&m| invertibility_check(&unit, m, cfg)).ok_or(Error::LevelCapExceeded { cap })?;
    Ok(PFactorization { k, l, unit, level_increase: level - n.max(1) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laurent::{texp, TMap, Var};
    use crate::Ctx;
    use proptest::prelude::*;

    const E1: RamificationConfig = RamificationConfig::UNRAMIFIED;

    fn s(terms: &[(i64, i64)]) -> SeriesElement {
        SeriesElement::from_ints(Ctx::desk(), Var::Pi, terms)
    }

    #[test]
    fn minimal_level_examples() {
        let r = minimal_level(&s(&[(0, 1), (-2, 3)]), E1, DEFAULT_LEVEL_CAP);
        assert_eq!(r.minimal_level, Some(1));
        assert_eq!(r.binding_exponent, Some(-2));
        assert_eq!(r.margin, Some(Rational::new(0, 1)));

        let r = minimal_level(&s(&[(-1, 1)]), E1, DEFAULT_LEVEL_CAP);
        assert_eq!(r.minimal_level, None);
        assert_eq!(r.cap, 12);

        let r = minimal_level(&s(&[(0, 5), (3, 1)]), E1, DEFAULT_LEVEL_CAP);
        assert_eq!(r.minimal_level, Some(1));
        assert_eq!(r.binding_exponent, None);
    }

    #[test]
    fn deeper_levels() {
        // v = 1, i = -5: level 1 gives 1 - 5/2 < 0, level 2 gives 1 - 5/6 > 0.
        let r = minimal_level(&s(&[(-5, 3)]), E1, DEFAULT_LEVEL_CAP);
        assert_eq!(r.minimal_level, Some(2));
        assert_eq!(r.margin, Some(Rational::new(1, 6)));
        // e = 2 halves the slope: level 1 gives 1 - 3/4.
        let r = minimal_level(&s(&[(-3, 3)]), RamificationConfig::new(2).unwrap(), DEFAULT_LEVEL_CAP);
        assert_eq!(r.minimal_level, Some(1));
        assert_eq!(r.margin, Some(Rational::new(1, 4)));
    }

    #[test]
    fn invertibility_examples() {
        assert!(invertibility_check(&s(&[(0, 2), (1, 1)]), 1, E1));
        assert!(!invertibility_check(&s(&[(0, 3), (1, 1)]), 1, E1));
        let x = s(&[(0, 1), (-2, 3)]);
        assert!(!invertibility_check(&x, 1, E1));
        assert!(invertibility_check(&x, 2, E1));
    }

    #[test]
    fn factorization_examples() {
        let f = factor_p_power(&s(&[(-3, 9), (1, 27)]), 1, E1, DEFAULT_LEVEL_CAP).unwrap();
        assert_eq!((f.k, f.l), (2, 3));
        assert!(f.unit.agrees(&s(&[(0, 1), (4, 3)])));
        assert_eq!(f.level_increase, 0);

        let f = factor_p_power(&s(&[(1, 1)]), 1, E1, DEFAULT_LEVEL_CAP).unwrap();
        assert_eq!((f.k, f.l), (0, -1));
        assert_eq!(f.unit, s(&[(0, 1)]));

        assert_eq!(factor_p_power(&s(&[]), 1, E1, 12), Err(Error::ZeroInput));
    }

    #[test]
    fn factorization_needs_higher_level() {
        // 3π^{-1} + π: k = 0, L = -1, unit = 1 + 3π^{-2} needs level 2.
        let f = factor_p_power(&s(&[(-1, 3), (1, 1)]), 1, E1, DEFAULT_LEVEL_CAP).unwrap();
        assert_eq!((f.k, f.l, f.level_increase), (0, -1, 1));
    }

    #[test]
    fn derivative_can_leave_level_one() {
        let x = s(&[(-2, 3)]);
        assert_eq!(minimal_level(&x, E1, DEFAULT_LEVEL_CAP).minimal_level, Some(1));
        assert!(!satisfies(&x.formal_derivative(), 1, E1, false));
        assert!(satisfies(&x.formal_derivative(), 2, E1, false));
    }

    fn arb_overconvergent() -> impl Strategy<Value = SeriesElement> {
        prop::collection::vec((-12i64..8, 0i64..2, -40i64..40), 1..8).prop_map(|ts| {
            let c = Ctx::desk();
            let terms = ts.into_iter().map(|(i, a, v)| {
                // Negative exponents get a p-power making them overconvergent.
                let scaled = if i < 0 { v * 3i64.pow((-i as u32).div_ceil(2)) } else { v };
                (i, texp(&[a]), c.scalar(scaled))
            });
            SeriesElement::from_terms(c, Var::Pi, 0, terms).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn level_is_monotone(x in arb_overconvergent()) {
            if let Some(n) = minimal_level(&x, E1, DEFAULT_LEVEL_CAP).minimal_level {
                prop_assert!(satisfies(&x, n + 1, E1, false));
                if n > 1 {
                    prop_assert!(!satisfies(&x, n - 1, E1, false));
                }
            }
        }

        #[test]
        fn derivative_keeps_level(x in arb_overconvergent()) {
            // Holds from level 2 on, where (p-1)p^{N-1} | i forces p | i.
            if let Some(n) = minimal_level(&x, E1, DEFAULT_LEVEL_CAP).minimal_level {
                let n = n.max(2);
                prop_assert!(satisfies(&x.formal_derivative(), n, E1, false));
            }
        }

        #[test]
        fn frobenius_raises_level_by_one(x in arb_overconvergent()) {
            let phi = s(&[(1, 3), (2, 3), (3, 1)]);
            if let Some(n) = minimal_level(&x, E1, DEFAULT_LEVEL_CAP).minimal_level {
                let y = x.substitute(&phi, TMap::frobenius(3)).unwrap();
                prop_assert!(satisfies(&y, n + 1, E1, false));
            }
        }

        #[test]
        fn factorization_round_trip(x in arb_overconvergent()) {
            prop_assume!(!x.is_zero_at_precision());
            let f = factor_p_power(&x, 1, E1, DEFAULT_LEVEL_CAP).unwrap();
            let back = f.unit.mul_p_power(f.k).shift(-f.l).unwrap();
            prop_assert!(back.agrees(&x));
        }

        #[test]
        fn invertible_units_invert(x in arb_overconvergent(), c in 1i64..40) {
            let x = x.mul_int(3).add(&s(&[(0, 3 * c + 1)])).unwrap();
            for n in 1..4 {
                if invertibility_check(&x, n, E1) {
                    let y = x.formal_inverse().unwrap();
                    prop_assert!(x.mul(&y).unwrap().agrees(&s(&[(0, 1)])));
                    prop_assert!(satisfies(&y, n + 1, E1, false));
                }
            }
        }
    }
}
