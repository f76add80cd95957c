use std::collections::BTreeMap;
use std::fmt;

use crate::config::Ctx;
use crate::error::{Error, Result};
use crate::padic::{pow_u64, PadicScalar, Valuation};
use crate::MAX_N;

/// Exponent numerators of `T_1, …, T_{n-1}`; unused slots stay zero.
pub type TExp = [i64; MAX_N - 1];

pub fn texp(exps: &[i64]) -> TExp {
    let mut e = [0; MAX_N - 1];
    e[..exps.len()].copy_from_slice(exps);
    e
}

/// Monomial substitution on T-exponents: `a / p^l ↦ a·mul / p^(l + level_add)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TMap {
    pub mul: i64,
    pub level_add: u32,
}

impl TMap {
    pub const IDENTITY: TMap = TMap { mul: 1, level_add: 0 };

    /// `T ↦ T^p`.
    pub fn frobenius(p: u64) -> Self {
        Self { mul: p as i64, level_add: 0 }
    }

    /// `T ↦ T^(1/p^j)`.
    pub fn root(j: u32) -> Self {
        Self { mul: 1, level_add: j }
    }
}

/// A Laurent polynomial in the T-variables over `Z/p^M`, known modulo `p^prec`.
///
/// Exponents are numerators over the common denominator `p^level`. Monomials
/// that are not stored are zero modulo `p^prec`; stored terms may carry a
/// lower precision of their own.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoeffElement {
    ctx: Ctx,
    level: u32,
    terms: BTreeMap<TExp, PadicScalar>,
    prec: u32,
}

impl CoeffElement {
    pub fn zero(ctx: Ctx) -> Self {
        Self { ctx, level: 0, terms: BTreeMap::new(), prec: ctx.m() }
    }

    pub fn zero_at(ctx: Ctx, prec: u32) -> Self {
        Self { ctx, level: 0, terms: BTreeMap::new(), prec: prec.min(ctx.m()) }
    }

    pub fn one(ctx: Ctx) -> Self {
        Self::constant(ctx, ctx.scalar(1))
    }

    pub fn constant(ctx: Ctx, c: PadicScalar) -> Self {
        Self::monomial(ctx, 0, texp(&[]), c)
    }

    pub fn from_int(ctx: Ctx, c: i64) -> Self {
        Self::constant(ctx, ctx.scalar(c))
    }

    pub fn monomial(ctx: Ctx, level: u32, e: TExp, c: PadicScalar) -> Self {
        let mut out = Self { ctx, level, terms: BTreeMap::new(), prec: ctx.m() };
        out.terms.insert(e, c);
        out.normalize();
        out
    }

    pub fn from_terms<I>(ctx: Ctx, level: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (TExp, PadicScalar)>,
    {
        let mut out = Self { ctx, level, terms: BTreeMap::new(), prec: ctx.m() };
        for (e, c) in terms {
            out.add_term(e, c);
        }
        out.normalize();
        out.clip_window()?;
        Ok(out)
    }

    pub fn ctx(&self) -> Ctx {
        self.ctx
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Precision of the unstored monomials.
    pub fn precision(&self) -> u32 {
        self.prec
    }

    /// Smallest precision over the whole element.
    pub fn min_precision(&self) -> u32 {
        self.terms.values().map(|c| c.precision()).fold(self.prec, u32::min)
    }

    pub fn terms(&self) -> &BTreeMap<TExp, PadicScalar> {
        &self.terms
    }

    pub fn term(&self, e: &TExp) -> PadicScalar {
        self.terms.get(e).copied().unwrap_or_else(|| PadicScalar::zero_at(self.ctx.p(), self.ctx.m(), self.prec))
    }

    pub fn constant_term(&self) -> PadicScalar {
        self.term(&texp(&[]))
    }

    /// Reread in a context with the same prime and a lower working precision.
    pub fn reduce_to(&self, ctx: Ctx) -> Self {
        let m = ctx.m();
        let terms = self.terms.iter().map(|(e, c)| (*e, c.reduce_to(m))).collect();
        let mut out = Self { ctx, level: self.level, terms, prec: self.prec.min(m) };
        out.normalize();
        out
    }

    fn add_term(&mut self, e: TExp, c: PadicScalar) {
        match self.terms.get_mut(&e) {
            Some(t) => *t = t.add(&c),
            None => {
                self.terms.insert(e, c);
            }
        }
    }

    fn normalize(&mut self) {
        let prec = self.prec;
        for c in self.terms.values_mut() {
            *c = c.truncate(prec);
        }
        self.terms.retain(|_, c| !(c.is_zero_at_precision() && c.precision() == prec));
    }

    fn exp_bound(&self) -> i64 {
        self.ctx.window.t_max * pow_u64(self.ctx.p(), self.level) as i64
    }

    /// Drop monomials outside the T-window. A dropped term could re-enter
    /// the window in later products, so the whole element is then only
    /// trusted modulo the dropped terms' valuation.
    fn clip_window(&mut self) -> Result<()> {
        let bound = self.exp_bound();
        let nv = self.ctx.nvars();
        let mut dropped: Option<u32> = None;
        self.terms.retain(|e, c| {
            let inside = e[..nv].iter().all(|a| a.abs() <= bound) && e[nv..].iter().all(|a| *a == 0);
            if !inside && !c.is_zero_at_precision() {
                dropped = Some(dropped.map_or(c.val_bound(), |v| v.min(c.val_bound())));
            }
            inside
        });
        if let Some(v) = dropped {
            if self.ctx.strict {
                return Err(Error::WindowOverflow("T-exponent outside window".into()));
            }
            *self = self.cap(v);
        }
        Ok(())
    }

    /// Exactly zero at full working precision.
    pub fn is_exact_zero(&self) -> bool {
        self.terms.is_empty() && self.prec == self.ctx.m()
    }

    pub fn is_zero_at_precision(&self) -> bool {
        self.terms.values().all(|c| c.is_zero_at_precision())
    }

    /// Gauss valuation: the minimum valuation over all terms.
    pub fn valuation(&self) -> Valuation {
        self.terms.values().map(|c| c.valuation()).min().unwrap_or(Valuation::Infinite)
    }

    /// Largest `w` with the element known to lie in `p^w`.
    pub fn val_bound(&self) -> u32 {
        self.terms.values().map(|c| c.val_bound()).fold(self.prec, u32::min)
    }

    pub fn is_unit(&self) -> bool {
        self.valuation() == Valuation::Finite(0)
    }

    /// Rewrite over the denominator `p^level` (which must not be smaller).
    pub fn at_level(&self, level: u32) -> Self {
        assert!(level >= self.level, "cannot lower the level of a coefficient");
        if level == self.level {
            return self.clone();
        }
        let f = pow_u64(self.ctx.p(), level - self.level) as i64;
        let nv = self.ctx.nvars();
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut e2 = *e;
                for a in e2[..nv].iter_mut() {
                    *a *= f;
                }
                (e2, *c)
            })
            .collect();
        Self { ctx: self.ctx, level, terms, prec: self.prec }
    }

    fn aligned(&self, other: &Self) -> (Self, Self) {
        let l = self.level.max(other.level);
        (self.at_level(l), other.at_level(l))
    }

    pub fn add(&self, other: &Self) -> Self {
        let (mut a, b) = self.aligned(other);
        a.prec = a.prec.min(b.prec);
        for (e, c) in &b.terms {
            a.add_term(*e, *c);
        }
        a.normalize();
        a
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.neg();
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.aligned(other);
        let prec = (a.prec + b.val_bound()).min(b.prec + a.val_bound()).min(self.ctx.m());
        let mut out = Self { ctx: self.ctx, level: a.level, terms: BTreeMap::new(), prec };
        for (ea, ca) in &a.terms {
            for (eb, cb) in &b.terms {
                let mut e = *ea;
                for (x, y) in e.iter_mut().zip(eb.iter()) {
                    *x += *y;
                }
                out.add_term(e, ca.mul(cb));
            }
        }
        out.normalize();
        out.clip_window()?;
        Ok(out)
    }

    pub fn scale(&self, s: &PadicScalar) -> Self {
        let prec = (self.prec + s.val_bound()).min(self.ctx.m());
        let mut out = Self { ctx: self.ctx, level: self.level, terms: BTreeMap::new(), prec };
        for (e, c) in &self.terms {
            out.terms.insert(*e, c.mul(s));
        }
        out.normalize();
        out
    }

    pub fn mul_int(&self, k: i64) -> Self {
        self.scale(&self.ctx.scalar(k))
    }

    pub fn mul_p_power(&self, k: u32) -> Self {
        let prec = (self.prec + k).min(self.ctx.m());
        let mut out = Self { ctx: self.ctx, level: self.level, terms: BTreeMap::new(), prec };
        for (e, c) in &self.terms {
            out.terms.insert(*e, c.mul_p_power(k));
        }
        out.normalize();
        out
    }

    /// Divide every term by `p^k`, lowering precision by `k`.
    pub fn divide_exact(&self, k: u32) -> Result<Self> {
        let mut out = Self { ctx: self.ctx, level: self.level, terms: BTreeMap::new(), prec: self.prec.saturating_sub(k) };
        for (e, c) in &self.terms {
            out.terms.insert(*e, c.divide_exact(k)?);
        }
        out.normalize();
        Ok(out)
    }

    /// Lower the precision floor to `k`.
    pub fn cap(&self, k: u32) -> Self {
        if k >= self.prec {
            return self.clone();
        }
        let mut out = self.clone();
        out.prec = k;
        out.normalize();
        out
    }

    /// Apply a monomial substitution to the T-exponents.
    pub fn map_exps(&self, map: TMap) -> Result<Self> {
        let nv = self.ctx.nvars();
        let mut out = Self { ctx: self.ctx, level: self.level + map.level_add, terms: BTreeMap::new(), prec: self.prec };
        for (e, c) in &self.terms {
            let mut e2 = *e;
            for a in e2[..nv].iter_mut() {
                *a *= map.mul;
            }
            out.add_term(e2, *c);
        }
        out.normalize();
        out.clip_window()?;
        Ok(out)
    }

    /// `T_v ∂/∂T_v`, which multiplies `T^(a/p^l)` by `a/p^l`.
    pub fn t_theta(&self, v: usize) -> Result<Self> {
        let mut out = Self { ctx: self.ctx, level: self.level, terms: BTreeMap::new(), prec: self.prec.saturating_sub(self.level) };
        for (e, c) in &self.terms {
            let t = c.mul_int(e[v]).divide_exact(self.level)?;
            out.add_term(*e, t);
        }
        out.normalize();
        Ok(out)
    }

    /// Inverse of a coefficient of Gauss valuation 0.
    ///
    /// Factors out the lexicographically smallest unit monomial and sums the
    /// geometric series of the remainder. Remainder terms with unit
    /// coefficient are only T-adically small; their powers leave the window
    /// and the result is then unknown (precision 0), since such a series does
    /// not converge p-adically.
    pub fn inverse(&self) -> Result<Self> {
        let (lead_e, lead_c) = self
            .terms
            .iter()
            .find(|(_, c)| c.valuation() == Valuation::Finite(0))
            .map(|(e, c)| (*e, *c))
            .ok_or(Error::NotAUnit { valuation: self.valuation().finite() })?;
        let inv_c = lead_c.invert()?;
        let mut neg_e = lead_e;
        for a in neg_e.iter_mut() {
            *a = -*a;
        }
        let lead_inv = Self { ctx: self.ctx, level: self.level, terms: BTreeMap::from([(neg_e, inv_c)]), prec: self.ctx.m() };
        let normalized = self.mul(&lead_inv)?;
        let neg_h = Self::one(self.ctx).sub(&normalized);
        let mut sum = Self::one(self.ctx);
        let mut power = Self::one(self.ctx);
        let limit = 64 + 4 * (self.ctx.m() as i64 + 2 * self.exp_bound() + 1);
        for _ in 0..limit {
            power = power.mul(&neg_h)?;
            sum = sum.add(&power);
            if power.terms.is_empty() {
                return sum.mul(&lead_inv);
            }
        }
        Err(Error::NotInvertible("coefficient inverse did not terminate".into()))
    }

    /// Equality modulo the smaller precision at every monomial.
    pub fn agrees(&self, other: &Self) -> bool {
        let (a, b) = self.aligned(other);
        a.terms.keys().chain(b.terms.keys()).all(|e| a.term(e).agrees(&b.term(e)))
    }
}

impl fmt::Display for CoeffElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nv = self.ctx.nvars();
        if self.terms.is_empty() {
            return write!(f, "O({}^{})", self.ctx.p(), self.prec);
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{}", c.signed())?;
            for (v, a) in e[..nv].iter().enumerate() {
                if *a != 0 {
                    if self.level == 0 {
                        write!(f, "*T{}^{}", v + 1, a)?;
                    } else {
                        write!(f, "*T{}^({}/{}^{})", v + 1, a, self.ctx.p(), self.level)?;
                    }
                }
            }
        }
        if self.prec < self.ctx.m() {
            write!(f, " + O({}^{})", self.ctx.p(), self.prec)?;
        }
        Ok(())
    }
}
