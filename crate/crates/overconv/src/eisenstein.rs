//! Ramified uniformizers: the expansion of π in π_K, the Frobenius lift
//! φ(π_K) by Newton iteration, and the shape `p π_K^I · unit` of its
//! derivative.

use std::collections::BTreeMap;

use crate::config::Ctx;
use crate::error::{Error, Result};
use crate::frobenius::{Frobenius, TMode};
use crate::laurent::{CoeffElement, SeriesElement, TMap, Var};
use crate::overconvergence::{factor_p_power, invertibility_check, RamificationConfig};
use crate::padic::Valuation;

/// Monic `f(X) = X^e + a_{e−1} X^{e−1} + … + a_0` with `a_i` power series in π.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EisensteinData {
    pub e: u32,
    /// `a_0, …, a_{e−1}`.
    pub coeffs: Vec<SeriesElement>,
}

impl EisensteinData {
    pub fn new(e: u32, coeffs: Vec<SeriesElement>) -> Result<Self> {
        let data = Self { e, coeffs };
        data.validate()?;
        Ok(data)
    }

    /// `X^e − π`.
    pub fn pure(ctx: Ctx, e: u32) -> Result<Self> {
        let mut coeffs = vec![SeriesElement::zero(ctx, Var::Pi); e as usize];
        coeffs[0] = SeriesElement::from_ints(ctx, Var::Pi, &[(1, -1)]);
        Self::new(e, coeffs)
    }

    pub fn ctx(&self) -> Ctx {
        self.coeffs[0].ctx()
    }

    fn validate(&self) -> Result<()> {
        if self.e == 0 || self.coeffs.len() != self.e as usize {
            return Err(Error::NotEisenstein(format!("expected {} coefficients", self.e)));
        }
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.variable() != Var::Pi {
                return Err(Error::NotEisenstein(format!("a_{i} must be a series in pi")));
            }
            if a.min_exponent().is_some_and(|k| k < 0) {
                return Err(Error::NotEisenstein(format!("a_{i} has negative pi-exponents")));
            }
            if a.coeff(0).val_bound() < 1 {
                return Err(Error::NotEisenstein(format!("a_{i} is not divisible by pi modulo p")));
            }
        }
        if !self.coeffs[0].coeff(1).is_unit() {
            return Err(Error::NotEisenstein("a_0 is not pi times a unit modulo p".into()));
        }
        let p = self.ctx().p();
        let separable = !(self.e as u64).is_multiple_of(p)
            || self
                .coeffs
                .iter()
                .enumerate()
                .any(|(i, a)| !(i as u64).is_multiple_of(p) && a.coeffs().values().any(|c| c.val_bound() == 0));
        if !separable {
            return Err(Error::NotEisenstein("reduction modulo p is inseparable".into()));
        }
        Ok(())
    }

    pub fn ramification(&self) -> RamificationConfig {
        RamificationConfig { e: self.e }
    }
}

/// `π = Σ_k b_k π_K^{e+k}`; `k` may be negative (e.g. `X² + 3X − π`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiExpansion {
    pub e: u32,
    /// π as a series in π_K.
    pub series: SeriesElement,
}

impl PiExpansion {
    pub fn b(&self, k: i64) -> CoeffElement {
        self.series.coeff(self.e as i64 + k)
    }
}

/// Solve `f(π_K) = 0` for π by successive substitution.
///
/// Writing `a_0 = a_{0,0} + π w(π)` with `w` a unit, the fixed point of
/// `π ↦ −(π_K^e + a_{0,0} + Σ_{i≥1} a_i(π) π_K^i) / w(π)` is π.
pub fn expand_pi(f: &EisensteinData) -> Result<PiExpansion> {
    let ctx = f.ctx();
    let a0 = &f.coeffs[0];
    let c00 = SeriesElement::constant(Var::PiK, a0.coeff(0));
    let w = a0.sub(&SeriesElement::constant(Var::Pi, a0.coeff(0)))?.shift(-1)?;
    let base = SeriesElement::monomial(Var::PiK, f.e as i64, CoeffElement::one(ctx)).add(&c00)?;
    let mut cur = SeriesElement::zero(ctx, Var::PiK);
    let limit = 4 * (ctx.window.pi_hi - ctx.window.pi_lo) as usize + 4 * ctx.m() as usize;
    for _ in 0..limit {
        let mut rhs = base.clone();
        for (i, a) in f.coeffs.iter().enumerate().skip(1) {
            let ai = a.substitute(&cur, TMap::IDENTITY)?;
            rhs = rhs.add(&ai.shift(i as i64)?)?;
        }
        let winv = w.substitute(&cur, TMap::IDENTITY)?.formal_inverse()?;
        let next = rhs.mul(&winv)?.neg();
        if next == cur {
            return Ok(PiExpansion { e: f.e, series: cur });
        }
        cur = next;
    }
    Err(Error::NotEisenstein("expansion of pi did not stabilize".into()))
}

/// `f(π_K)` with π replaced by the expansion; zero for a correct expansion.
pub fn expansion_residual(f: &EisensteinData, exp: &PiExpansion) -> Result<SeriesElement> {
    let ctx = f.ctx();
    let mut acc = SeriesElement::monomial(Var::PiK, f.e as i64, CoeffElement::one(ctx));
    for (i, a) in f.coeffs.iter().enumerate() {
        acc = acc.add(&a.substitute(&exp.series, TMap::IDENTITY)?.shift(i as i64)?)?;
    }
    Ok(acc)
}

/// `(1 + π(π_K))^p − 1` as a series in π_K.
fn frobenius_of_pi(exp: &PiExpansion) -> Result<SeriesElement> {
    let ctx = exp.series.ctx();
    Frobenius::unramified(ctx, TMode::Standard).pi_image().substitute(&exp.series, TMap::IDENTITY)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrobeniusLift {
    /// φ(π_K) as a series in π_K.
    pub image: SeriesElement,
    pub iterations: usize,
}

/// Solve `π(y) = (1 + π(π_K))^p − 1` for `y = φ(π_K)` by Newton's method
/// from `y = π_K^p`.
pub fn frobenius_lift(exp: &PiExpansion) -> Result<FrobeniusLift> {
    let ctx = exp.series.ctx();
    let target = frobenius_of_pi(exp)?;
    let deriv = exp.series.formal_derivative();
    let mut y = SeriesElement::monomial(Var::PiK, ctx.p() as i64, CoeffElement::one(ctx));
    let mut best = Valuation::Finite(0);
    let mut stalled = 0;
    let limit = 8 * ctx.m() as usize + 16;
    for it in 0..limit {
        let residual = exp.series.substitute(&y, TMap::IDENTITY)?.sub(&target)?;
        if residual.is_zero_at_precision() {
            return Ok(FrobeniusLift { image: y, iterations: it });
        }
        let v = Valuation::Finite(residual.coeffs().values().map(|c| c.val_bound()).min().unwrap_or(ctx.m()));
        if v > best {
            best = v;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 3 {
                return Err(Error::NewtonStall { iterations: it, residual: v.to_string() });
            }
        }
        let slope = deriv.substitute(&y, TMap::IDENTITY)?;
        y = y.sub(&residual.mul(&slope.formal_inverse()?)?)?;
    }
    Err(Error::NewtonStall { iterations: limit, residual: best.to_string() })
}

/// `f_π(φ(π_K)) − φ(π)`; zero at precision for a correct lift.
pub fn lift_residual(exp: &PiExpansion, lift: &FrobeniusLift) -> Result<SeriesElement> {
    exp.series.substitute(&lift.image, TMap::IDENTITY)?.sub(&frobenius_of_pi(exp)?)
}

/// Which hypothesis on `(p, e)` the derivative structure falls under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// `e = 1`: the base Frobenius, `I = 0`.
    Unramified,
    PDividesE,
    Coprime,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Unramified => "unramified",
            Regime::PDividesE => "p_divides_e",
            Regime::Coprime => "coprime",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivativeStructure {
    /// Exact power of p dividing `g = dφ(π_K)/dπ_K`.
    pub k: u32,
    /// `g = p^k π_K^I · unit`.
    pub i: i64,
    pub unit: SeriesElement,
    pub level_increase: u32,
    pub regime: Regime,
    pub p_divides_i: bool,
    pub unit_invertible: bool,
    /// Some `j ≤ −1`, `p ∤ j`, with `v(c_j) = 1` in φ(π_K).
    pub witness: Option<i64>,
}

/// Factor the derivative of the Frobenius lift, starting at level `n`.
pub fn derivative_structure(f: &EisensteinData, lift: &FrobeniusLift, n: u32, cap: u32) -> Result<DerivativeStructure> {
    let ctx = f.ctx();
    let p = ctx.p() as i64;
    let g = lift.image.formal_derivative();
    let fac = factor_p_power(&g, n, f.ramification(), cap)?;
    let regime = if f.e == 1 {
        Regime::Unramified
    } else if f.e as i64 % p == 0 {
        Regime::PDividesE
    } else {
        Regime::Coprime
    };
    let i = -fac.l;
    let witness = lift.image.coeffs().range(..0).rev().find(|(j, c)| *j % p != 0 && c.valuation() == Valuation::Finite(1)).map(|(j, _)| *j);
    let unit_invertible = invertibility_check(&fac.unit, n + fac.level_increase, f.ramification());
    Ok(DerivativeStructure {
        k: fac.k,
        i,
        unit: fac.unit,
        level_increase: fac.level_increase,
        regime,
        p_divides_i: i % p == 0,
        unit_invertible,
        witness,
    })
}

/// Rewrite a π-series as a π_K-series through the expansion.
pub fn to_pi_k(x: &SeriesElement, exp: &PiExpansion) -> Result<SeriesElement> {
    x.substitute(&exp.series, TMap::IDENTITY)
}

/// Scalar coefficients of φ(π_K) as `(exponent, signed residue, precision)`.
pub fn lift_table(lift: &FrobeniusLift) -> BTreeMap<i64, (i128, u32)> {
    lift.image
        .coeffs()
        .iter()
        .map(|(k, c)| {
            let s = c.constant_term();
            (*k, (s.signed(), s.precision()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overconvergence::DEFAULT_LEVEL_CAP;

    fn ctx() -> Ctx {
        Ctx::desk()
    }

    fn pk(terms: &[(i64, i64)]) -> SeriesElement {
        SeriesElement::from_ints(ctx(), Var::PiK, terms)
    }

    fn pi(terms: &[(i64, i64)]) -> SeriesElement {
        SeriesElement::from_ints(ctx(), Var::Pi, terms)
    }

    /// `num/den` as a scalar mod 3^8.
    fn q(num: i64, den: i64) -> crate::PadicScalar {
        ctx().scalar(num).mul(&ctx().scalar(den).invert().unwrap())
    }

    #[test]
    fn expansion_examples() {
        let f = EisensteinData::pure(ctx(), 2).unwrap();
        assert_eq!(expand_pi(&f).unwrap().series, pk(&[(2, 1)]));
        let f = EisensteinData::pure(ctx(), 1).unwrap();
        assert_eq!(expand_pi(&f).unwrap().series, pk(&[(1, 1)]));
        let f = EisensteinData::new(2, vec![pi(&[(1, -1)]), pi(&[(0, 3)])]).unwrap();
        let exp = expand_pi(&f).unwrap();
        assert_eq!(exp.series, pk(&[(2, 1), (1, 3)]));
        assert_eq!(exp.b(0).constant_term().residue(), 1);
        assert_eq!(exp.b(-1).constant_term().residue(), 3);
    }

    #[test]
    fn expansion_with_unit_correction() {
        // X^2 − π − 3π^2: π = π_K^2 − 3π^2 recursively.
        let f = EisensteinData::new(2, vec![pi(&[(1, -1), (2, -3)]), pi(&[])]).unwrap();
        let exp = expand_pi(&f).unwrap();
        assert!(expansion_residual(&f, &exp).unwrap().is_zero_at_precision());
        assert_eq!(exp.b(0).constant_term().residue(), 1);
    }

    #[test]
    fn rejects_non_eisenstein() {
        assert!(EisensteinData::new(2, vec![pi(&[(1, 3)]), pi(&[])]).is_err());
        assert!(EisensteinData::new(2, vec![pi(&[(1, -1)]), pi(&[(0, 1)])]).is_err());
        assert!(EisensteinData::new(2, vec![pi(&[(-1, 3), (1, -1)]), pi(&[])]).is_err());
    }

    #[test]
    fn unramified_lift_is_base_frobenius() {
        let f = EisensteinData::pure(ctx(), 1).unwrap();
        let lift = frobenius_lift(&expand_pi(&f).unwrap()).unwrap();
        assert_eq!(lift.image, pk(&[(1, 3), (2, 3), (3, 1)]));
        let ds = derivative_structure(&f, &lift, 1, DEFAULT_LEVEL_CAP).unwrap();
        assert_eq!((ds.k, ds.i, ds.regime), (1, 0, Regime::Unramified));
        assert!(ds.unit.agrees(&pk(&[(0, 1), (1, 2), (2, 1)])));
    }

    #[test]
    fn quadratic_lift_leading_terms() {
        let f = EisensteinData::pure(ctx(), 2).unwrap();
        let lift = frobenius_lift(&expand_pi(&f).unwrap()).unwrap();
        let y = &lift.image;
        // π_K^3 sqrt(1 + 3π_K^{-2} + 3π_K^{-4}), expanded by hand.
        assert!(y.scalar_coeff(3).agrees(&q(1, 1)));
        assert!(y.scalar_coeff(1).agrees(&q(3, 2)));
        assert!(y.scalar_coeff(-1).agrees(&q(3, 8)));
        assert!(y.scalar_coeff(-3).agrees(&q(-9, 16)));
        assert!(y.coeffs().keys().all(|k| k % 2 != 0));
        let y2 = y.mul(y).unwrap();
        assert!(y2.agrees(&pk(&[(2, 3), (4, 3), (6, 1)])));
    }

    #[test]
    fn quadratic_derivative_structure() {
        let f = EisensteinData::pure(ctx(), 2).unwrap();
        let lift = frobenius_lift(&expand_pi(&f).unwrap()).unwrap();
        let ds = derivative_structure(&f, &lift, 1, DEFAULT_LEVEL_CAP).unwrap();
        assert_eq!(ds.k, 1);
        assert_eq!(ds.i, -2);
        assert!(!ds.p_divides_i);
        assert_eq!(ds.regime, Regime::Coprime);
        assert!(ds.unit_invertible);
        // unit = g / (3 π_K^{-2}), constant term (−3/8)/3 = −1/8.
        assert!(ds.unit.scalar_coeff(0).agrees(&q(-1, 8)));
        assert_eq!(ds.witness, Some(-1));
        let back = ds.unit.mul_p_power(ds.k).shift(ds.i).unwrap();
        assert!(back.agrees(&lift.image.formal_derivative()));
    }

    #[test]
    fn lift_reduces_to_p_power() {
        for f in [
            EisensteinData::pure(ctx(), 2).unwrap(),
            // X^3 + πX − π: the πX term keeps the reduction separable.
            EisensteinData::new(3, vec![pi(&[(1, -1)]), pi(&[(1, 1)]), pi(&[])]).unwrap(),
            EisensteinData::new(2, vec![pi(&[(1, -1)]), pi(&[(0, 3)])]).unwrap(),
        ] {
            let lift = frobenius_lift(&expand_pi(&f).unwrap()).unwrap();
            let diff = lift.image.sub(&pk(&[(3, 1)])).unwrap();
            assert!(diff.coeffs().values().all(|c| c.val_bound() >= 1));
        }
    }

    #[test]
    fn lift_satisfies_frobenius_equation() {
        let f = EisensteinData::new(2, vec![pi(&[(1, -1), (2, -3)]), pi(&[])]).unwrap();
        let exp = expand_pi(&f).unwrap();
        let lift = frobenius_lift(&exp).unwrap();
        let lhs = exp.series.substitute(&lift.image, TMap::IDENTITY).unwrap();
        assert!(lhs.agrees(&frobenius_of_pi(&exp).unwrap()));
    }

    #[test]
    fn change_of_variable_round_trip() {
        // e = 1 with π_K = π + 3π^2.
        let f = EisensteinData::new(1, vec![pi(&[(1, -1), (2, -3)])]).unwrap();
        let exp = expand_pi(&f).unwrap();
        let back = pi(&[(1, 1), (2, 3)]).with_var(Var::PiK);
        let x = pi(&[(-2, 9), (0, 1), (1, 2), (3, -1)]);
        let y = to_pi_k(&x, &exp).unwrap();
        let z = y.substitute(&back.with_var(Var::Pi), TMap::IDENTITY).unwrap();
        assert!(z.agrees(&x));
    }
}
