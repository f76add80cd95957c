use std::collections::BTreeMap;
use std::fmt;

use super::coeff::{texp, CoeffElement, TExp, TMap};
use crate::config::Ctx;
use crate::error::{Error, Result};
use crate::padic::{PadicScalar, Valuation};

/// Which uniformizer the π-exponents refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    Pi,
    PiK,
}

impl Var {
    pub fn name(&self) -> &'static str {
        match self {
            Var::Pi => "pi",
            Var::PiK => "piK",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pi" => Ok(Var::Pi),
            "piK" => Ok(Var::PiK),
            other => Err(Error::Parse(format!("unknown variable {other:?}"))),
        }
    }
}

/// A Laurent series in one uniformizer with `CoeffElement` coefficients.
///
/// `trunc = None` means the series is exactly the stored finite sum.
/// `trunc = Some(h)` means the coefficients above exponent `h` are not
/// stored and are only known to be divisible by `p^tail_val`
/// (`tail_val = 0`: unknown integral). Exactly-zero coefficients are not
/// stored; coefficients that are zero modulo a lower power of p are kept to
/// record that precision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeriesElement {
    ctx: Ctx,
    var: Var,
    level: u32,
    coeffs: BTreeMap<i64, CoeffElement>,
    trunc: Option<i64>,
    tail_val: u32,
}

fn incompatible(a: &SeriesElement, b: &SeriesElement) -> Result<()> {
    if a.var != b.var {
        return Err(Error::Incompatible(format!("variables {} and {}", a.var.name(), b.var.name())));
    }
    if a.ctx.prime != b.ctx.prime {
        return Err(Error::Incompatible("different prime configurations".into()));
    }
    Ok(())
}

impl SeriesElement {
    fn raw(ctx: Ctx, var: Var, level: u32, coeffs: BTreeMap<i64, CoeffElement>) -> Self {
        Self { ctx, var, level, coeffs, trunc: None, tail_val: 0 }
    }

    pub fn zero(ctx: Ctx, var: Var) -> Self {
        Self::raw(ctx, var, 0, BTreeMap::new())
    }

    pub fn one(ctx: Ctx, var: Var) -> Self {
        Self::constant(var, CoeffElement::one(ctx))
    }

    pub fn constant(var: Var, c: CoeffElement) -> Self {
        Self::monomial(var, 0, c)
    }

    pub fn from_int(ctx: Ctx, var: Var, c: i64) -> Self {
        Self::constant(var, CoeffElement::from_int(ctx, c))
    }

    /// `c · u^i` where `u` is the uniformizer.
    pub fn monomial(var: Var, i: i64, c: CoeffElement) -> Self {
        let ctx = c.ctx();
        let level = c.level();
        let mut out = Self::raw(ctx, var, level, BTreeMap::from([(i, c)]));
        out.clean();
        out
    }

    /// The uniformizer itself.
    pub fn var(ctx: Ctx, var: Var) -> Self {
        Self::monomial(var, 1, CoeffElement::one(ctx))
    }

    /// `T_v^a` (v counted from 0).
    pub fn t_var(ctx: Ctx, var: Var, v: usize, a: i64) -> Self {
        let mut e = texp(&[]);
        e[v] = a;
        Self::monomial(var, 0, CoeffElement::monomial(ctx, 0, e, ctx.scalar(1)))
    }

    /// Polynomial with integer coefficients, given as `(exponent, coefficient)`.
    pub fn from_ints(ctx: Ctx, var: Var, terms: &[(i64, i64)]) -> Self {
        let mut map: BTreeMap<i64, CoeffElement> = BTreeMap::new();
        for &(i, c) in terms {
            let c = CoeffElement::from_int(ctx, c);
            let slot = map.entry(i).or_insert_with(|| CoeffElement::zero(ctx));
            *slot = slot.add(&c);
        }
        let mut out = Self::raw(ctx, var, 0, map);
        out.clean();
        out
    }

    /// Build from `(pi_exp, t_exps, coeff)` triples at a given level.
    pub fn from_terms<I>(ctx: Ctx, var: Var, level: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, TExp, PadicScalar)>,
    {
        let mut grouped: BTreeMap<i64, Vec<(TExp, PadicScalar)>> = BTreeMap::new();
        for (i, e, c) in terms {
            if i < ctx.window.pi_lo || i > ctx.window.pi_hi {
                return Err(Error::WindowOverflow(format!("pi-exponent {i} outside window")));
            }
            grouped.entry(i).or_default().push((e, c));
        }
        let mut coeffs = BTreeMap::new();
        for (i, ts) in grouped {
            coeffs.insert(i, CoeffElement::from_terms(ctx, level, ts)?);
        }
        let mut out = Self::raw(ctx, var, level, coeffs);
        out.clean();
        Ok(out)
    }

    /// Build from coefficients, with an optional tail `(h, tail_val)`.
    pub fn from_coeffs(ctx: Ctx, var: Var, coeffs: BTreeMap<i64, CoeffElement>, tail: Option<(i64, u32)>) -> Self {
        let level = coeffs.values().map(|c| c.level()).max().unwrap_or(0);
        let coeffs = coeffs.into_iter().map(|(i, c)| (i, c.at_level(level))).collect();
        let mut out = Self::raw(ctx, var, level, coeffs);
        if let Some((h, v)) = tail {
            out.absorb(h, v);
        }
        out.clean();
        out
    }

    pub fn ctx(&self) -> Ctx {
        self.ctx
    }

    pub fn variable(&self) -> Var {
        self.var
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn trunc(&self) -> Option<i64> {
        self.trunc
    }

    /// `(h, tail_val)` when truncated.
    pub fn tail(&self) -> Option<(i64, u32)> {
        self.trunc.map(|h| (h, self.tail_val))
    }

    pub fn is_exact(&self) -> bool {
        self.trunc.is_none()
    }

    pub fn coeffs(&self) -> &BTreeMap<i64, CoeffElement> {
        &self.coeffs
    }

    /// The coefficient of `u^i`; in the tail, zero to the tail precision.
    pub fn coeff(&self, i: i64) -> CoeffElement {
        if let Some(h) = self.trunc {
            if i > h {
                return CoeffElement::zero_at(self.ctx, self.tail_val);
            }
        }
        self.coeffs.get(&i).cloned().unwrap_or_else(|| CoeffElement::zero(self.ctx))
    }

    pub fn with_var(mut self, var: Var) -> Self {
        self.var = var;
        self
    }

    /// Declare everything above `h` unknown.
    pub fn truncate_above(&self, h: i64) -> Self {
        let mut out = self.clone();
        out.absorb(h, 0);
        out.clean();
        out
    }

    /// Lower every coefficient's precision (and the tail's) to at most `k`.
    pub fn cap_precision(&self, k: u32) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = c.cap(k);
        }
        out.tail_val = out.tail_val.min(k);
        out.clean();
        out
    }

    /// Add an unknown term `p^v · O(u^(h+1))`.
    ///
    /// The truncation point becomes `min(h, trunc)`; stored coefficients
    /// above it are folded into the tail bound.
    fn absorb(&mut self, h: i64, v: u32) {
        if v >= self.ctx.m() {
            return;
        }
        let (h0, v0) = match self.trunc {
            Some(h0) => (h0, self.tail_val),
            None => (i64::MAX, u32::MAX),
        };
        let hs = h0.min(h);
        let mut tv = v.min(v0);
        for c in self.coeffs.range(hs.saturating_add(1)..).map(|(_, c)| c) {
            tv = tv.min(c.val_bound());
        }
        self.trunc = Some(hs);
        self.tail_val = tv;
    }

    fn clean(&mut self) {
        if let Some(h) = self.trunc {
            self.coeffs.retain(|i, _| *i <= h);
            if self.tail_val >= self.ctx.m() {
                self.trunc = None;
            }
        }
        if self.trunc.is_none() {
            self.tail_val = 0;
        }
        self.coeffs.retain(|_, c| !c.is_exact_zero());
    }

    pub fn at_level(&self, level: u32) -> Self {
        if level == self.level {
            return self.clone();
        }
        let mut out = self.clone();
        out.level = level;
        for c in out.coeffs.values_mut() {
            *c = c.at_level(level);
        }
        out
    }

    fn aligned(&self, other: &Self) -> Result<(Self, Self)> {
        incompatible(self, other)?;
        let l = self.level.max(other.level);
        Ok((self.at_level(l), other.at_level(l)))
    }

    pub fn min_exponent(&self) -> Option<i64> {
        self.coeffs.keys().next().copied()
    }

    pub fn max_exponent(&self) -> Option<i64> {
        self.coeffs.keys().next_back().copied()
    }

    /// Smallest exponent whose coefficient is a unit.
    pub fn first_unit_exponent(&self) -> Option<i64> {
        self.coeffs.iter().find(|(_, c)| c.is_unit()).map(|(i, _)| *i)
    }

    /// Lowest valuation bound over stored coefficients and the tail.
    fn min_val_bound(&self) -> u32 {
        let stored = self.coeffs.values().map(|c| c.val_bound()).fold(self.ctx.m(), u32::min);
        match self.trunc {
            Some(_) => stored.min(self.tail_val),
            None => stored,
        }
    }

    /// First exponent at which `min_val_bound` is attained.
    fn first_minimal_exponent(&self) -> Option<i64> {
        let v = self.min_val_bound();
        self.coeffs
            .iter()
            .find(|(_, c)| c.val_bound() == v)
            .map(|(i, _)| *i)
            .or_else(|| self.trunc.filter(|_| self.tail_val == v).map(|h| h + 1))
    }

    pub fn is_exact_zero(&self) -> bool {
        self.coeffs.is_empty() && self.trunc.is_none()
    }

    pub fn is_zero_at_precision(&self) -> bool {
        self.coeffs.values().all(|c| c.is_zero_at_precision())
    }

    /// Minimum scalar valuation over all stored terms.
    pub fn gauss_valuation(&self) -> Valuation {
        self.coeffs.values().map(|c| c.valuation()).min().unwrap_or(Valuation::Infinite)
    }

    /// Smallest precision carried by any stored term.
    pub fn min_precision(&self) -> u32 {
        self.coeffs.values().map(|c| c.min_precision()).fold(self.ctx.m(), u32::min)
    }

    fn check_window_drop(&self, dropped: bool) -> Result<()> {
        if dropped && self.ctx.strict {
            return Err(Error::WindowOverflow("pi-exponent outside window".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let (mut a, b) = self.aligned(other)?;
        let b_tail = b.tail();
        for (i, c) in b.coeffs {
            match a.coeffs.get_mut(&i) {
                Some(slot) => *slot = slot.add(&c),
                None => {
                    a.coeffs.insert(i, c);
                }
            }
        }
        let a_tail = a.tail();
        a.trunc = None;
        if let Some((h, v)) = a_tail {
            a.absorb(h, v);
        }
        if let Some((h, v)) = b_tail {
            a.absorb(h, v);
        }
        a.clean();
        Ok(a)
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = c.neg();
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    /// Multiply every coefficient by `c`.
    pub fn scale(&self, c: &CoeffElement) -> Result<Self> {
        let l = self.level.max(c.level());
        let x = self.at_level(l);
        let c = c.at_level(l);
        let mut out = x.clone();
        for v in out.coeffs.values_mut() {
            *v = v.mul(&c)?;
        }
        out.tail_val = out.tail_val.saturating_add(c.val_bound());
        out.clean();
        Ok(out)
    }

    pub fn scale_scalar(&self, s: &PadicScalar) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v = v.scale(s);
        }
        out.tail_val = out.tail_val.saturating_add(s.val_bound());
        out.clean();
        out
    }

    pub fn mul_int(&self, k: i64) -> Self {
        self.scale_scalar(&self.ctx.scalar(k))
    }

    pub fn mul_p_power(&self, k: u32) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v = v.mul_p_power(k);
        }
        out.tail_val = out.tail_val.saturating_add(k);
        out.clean();
        out
    }

    pub fn divide_exact(&self, k: u32) -> Result<Self> {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v = v.divide_exact(k)?;
        }
        out.tail_val = out.tail_val.saturating_sub(k);
        out.clean();
        Ok(out)
    }

    /// Multiply by `u^k`.
    pub fn shift(&self, k: i64) -> Result<Self> {
        let w = self.ctx.window;
        let mut dropped_lo = false;
        let mut coeffs = BTreeMap::new();
        let mut above: Vec<u32> = Vec::new();
        for (i, c) in &self.coeffs {
            let j = i + k;
            if j < w.pi_lo {
                dropped_lo |= !c.is_zero_at_precision();
            } else if j > w.pi_hi {
                if !c.is_zero_at_precision() || c.val_bound() < self.ctx.m() {
                    above.push(c.val_bound());
                }
            } else {
                coeffs.insert(j, c.clone());
            }
        }
        self.check_window_drop(dropped_lo || above.iter().any(|v| *v < self.ctx.m()))?;
        let mut out = Self::raw(self.ctx, self.var, self.level, coeffs);
        if let Some((h, v)) = self.tail() {
            out.absorb((h + k).min(w.pi_hi), v);
        }
        for v in above {
            out.absorb(w.pi_hi, v);
        }
        out.clean();
        Ok(out)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let (x, y) = self.aligned(other)?;
        let w = self.ctx.window;
        let m = self.ctx.m();
        // Keep detail up to hz; beyond it the tails dominate.
        let mut hz = w.pi_hi;
        let mut tail_v = u32::MAX;
        for (a, b) in [(&x, &y), (&y, &x)] {
            if let Some((h, v)) = a.tail() {
                if let Some(j0) = b.first_minimal_exponent() {
                    hz = hz.min(h.saturating_add(j0));
                    tail_v = tail_v.min(v + b.min_val_bound());
                }
            }
        }
        let mut out: BTreeMap<i64, CoeffElement> = BTreeMap::new();
        let (mut dropped_lo, mut dropped_hi) = (false, u32::MAX);
        for (i, a) in &x.coeffs {
            for (j, b) in &y.coeffs {
                let k = i + j;
                if k > w.pi_hi {
                    if dropped_hi > 0 {
                        dropped_hi = dropped_hi.min(a.mul(b)?.val_bound());
                    }
                    continue;
                }
                if k < w.pi_lo {
                    // Below the window: lost silently unless strict.
                    if !dropped_lo {
                        dropped_lo = !a.mul(b)?.is_zero_at_precision();
                    }
                    continue;
                }
                let prod = a.mul(b)?;
                match out.get_mut(&k) {
                    Some(slot) => *slot = slot.add(&prod),
                    None => {
                        out.insert(k, prod);
                    }
                }
            }
        }
        self.check_window_drop(dropped_lo || dropped_hi < m)?;
        if let Some((h, v)) = x.tail() {
            apply_caps(self.ctx, &mut out, h, v, &y, hz);
        }
        if let Some((h, v)) = y.tail() {
            apply_caps(self.ctx, &mut out, h, v, &x, hz);
        }
        let mut res = Self::raw(self.ctx, self.var, x.level, out);
        if tail_v < u32::MAX {
            res.absorb(hz, tail_v.min(m));
        }
        if dropped_hi < m {
            res.absorb(w.pi_hi, dropped_hi);
        }
        res.clean();
        Ok(res)
    }

    /// `d/du`, exponent `i ↦ i·coeff` at `i − 1`.
    pub fn formal_derivative(&self) -> Self {
        let mut coeffs = BTreeMap::new();
        for (i, c) in &self.coeffs {
            if *i == 0 || *i - 1 < self.ctx.window.pi_lo {
                continue;
            }
            coeffs.insert(i - 1, c.mul_int(*i));
        }
        let mut out = Self::raw(self.ctx, self.var, self.level, coeffs);
        if let Some((h, v)) = self.tail() {
            out.absorb(h - 1, v);
        }
        out.clean();
        out
    }

    /// `T_v ∂/∂T_v` applied coefficient-wise.
    pub fn t_theta(&self, v: usize) -> Result<Self> {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = c.t_theta(v)?;
        }
        out.tail_val = out.tail_val.saturating_sub(self.level);
        out.clean();
        Ok(out)
    }

    /// Multiplicative inverse by factoring out a dominant monomial.
    ///
    /// With `d` the lowest exponent carrying a unit coefficient, every
    /// coefficient below `d` must be divisible by p; then
    /// `x = f_d u^d (1 + h)` and `1 + h` is inverted by its geometric series.
    pub fn formal_inverse(&self) -> Result<Self> {
        let d = self.first_unit_exponent().ok_or_else(|| Error::NotInvertible("no coefficient of valuation 0".into()))?;
        if let Some((i, _)) = self.coeffs.range(..d).find(|(_, c)| c.val_bound() < 1) {
            return Err(Error::NotInvertible(format!("coefficient at exponent {i} is not known to be divisible by p")));
        }
        let lead_inv = self.coeffs[&d].inverse()?;
        let normalized = self.shift(-d)?.scale(&lead_inv)?;
        let one = Self::one(self.ctx, self.var);
        let neg_h = one.sub(&normalized)?;
        let mut sum = one.clone();
        let mut power = one;
        let limit = 64 * (self.ctx.m() as usize + 1) + 4 * (self.ctx.window.pi_hi - self.ctx.window.pi_lo) as usize;
        for _ in 0..limit {
            power = power.mul(&neg_h)?;
            if power.is_zero_at_precision() {
                if !power.is_exact_zero() {
                    // Later powers stay under the bound carried by this one.
                    sum = sum.add(&decay_bound(&power, neg_slope(&neg_h, 0)))?;
                }
                return sum.scale(&lead_inv)?.shift(-d);
            }
            sum = sum.add(&power)?;
        }
        Err(Error::NotInvertible("geometric series did not terminate".into()))
    }

    /// Reread in a context with the same prime and a lower working precision.
    pub fn reduce_to(&self, ctx: Ctx) -> Self {
        let coeffs = self.coeffs.iter().map(|(i, c)| (*i, c.reduce_to(ctx))).collect();
        let mut out = Self { ctx, coeffs, ..self.clone() };
        out.tail_val = out.tail_val.min(ctx.m());
        out.clean();
        out
    }

    /// `self / den`.
    ///
    /// Exact Laurent-polynomial division is tried first, so that quotients
    /// such as `(1 + u)^3 / (1 + u)` stay finite; otherwise multiplies by
    /// `den.formal_inverse()`.
    pub fn divide(&self, den: &Self) -> Result<Self> {
        if let Some(q) = self.exact_quotient(den)? {
            return Ok(q);
        }
        self.mul(&den.formal_inverse()?)
    }

    fn exact_quotient(&self, den: &Self) -> Result<Option<Self>> {
        incompatible(self, den)?;
        if !self.is_exact() || !den.is_exact() {
            return Ok(None);
        }
        let (Some((&dtop, lead)), Some(dlo)) = (den.coeffs.iter().next_back(), den.min_exponent()) else {
            return Err(Error::NotInvertible("division by zero".into()));
        };
        let [(e, c)] = lead.terms().iter().collect::<Vec<_>>()[..] else {
            return Ok(None);
        };
        if c.valuation() != Valuation::Finite(0) {
            return Ok(None);
        }
        let mut neg_e = *e;
        for a in neg_e.iter_mut() {
            *a = -*a;
        }
        let lead_inv = CoeffElement::monomial(self.ctx, lead.level(), neg_e, c.invert()?);
        let Some(lo) = self.min_exponent() else {
            return Ok(Some(Self::zero(self.ctx, self.var)));
        };
        let qlo = lo - dlo;
        let mut rem = self.clone();
        let mut quot: BTreeMap<i64, CoeffElement> = BTreeMap::new();
        loop {
            let top = rem.coeffs.iter().rev().find(|(_, c)| !c.is_zero_at_precision()).map(|(i, _)| *i);
            let Some(top) = top else {
                break;
            };
            let k = top - dtop;
            if k < qlo {
                return Ok(None);
            }
            let qk = rem.coeffs[&top].mul(&lead_inv)?;
            rem = rem.sub(&den.shift(k)?.scale(&qk)?)?;
            quot.insert(k, qk);
        }
        // Precision left in the remainder bounds the quotient's precision.
        let floor = rem.coeffs.values().map(|c| c.min_precision()).fold(self.ctx.m(), u32::min);
        let q = Self::from_coeffs(self.ctx, self.var, quot, None).cap_precision(floor);
        Ok(Some(q))
    }

    /// `x′ / x`.
    pub fn dlog(&self) -> Result<Self> {
        self.formal_derivative().mul(&self.formal_inverse()?)
    }

    /// Compose: `u ↦ g` and T-exponents mapped by `tmap`.
    ///
    /// The result lives in `g`'s variable. A truncated `x` is only supported
    /// when `g` has positive unit order and is known past that order.
    pub fn substitute(&self, g: &Self, tmap: TMap) -> Result<Self> {
        if self.ctx.prime != g.ctx.prime {
            return Err(Error::Incompatible("different prime configurations".into()));
        }
        let mut mapped: BTreeMap<i64, CoeffElement> = BTreeMap::new();
        for (i, c) in &self.coeffs {
            mapped.insert(*i, c.map_exps(tmap)?);
        }
        let mut result = Self::zero(g.ctx, g.var);
        let max_e = self.max_exponent().unwrap_or(0).max(0);
        let min_e = self.min_exponent().unwrap_or(0).min(0);
        let mut power = Self::one(g.ctx, g.var);
        for e in 0..=max_e {
            if e > 0 {
                power = power.mul(g)?;
            }
            if let Some(c) = mapped.get(&e) {
                result = result.add(&power.scale(c)?)?;
            }
        }
        if min_e < 0 {
            let ginv = g.formal_inverse()?;
            let mut power = Self::one(g.ctx, g.var);
            for e in (min_e..0).rev() {
                power = power.mul(&ginv)?;
                if let Some(c) = mapped.get(&e) {
                    result = result.add(&power.scale(c)?)?;
                }
            }
        }
        if let Some((hx, v)) = self.tail() {
            result = result.add(&unknown_tail(g, hx, v)?)?;
        }
        Ok(result)
    }

    /// Equality of two series wherever both are known, each coefficient
    /// compared at the smaller precision.
    pub fn agrees(&self, other: &Self) -> bool {
        let Ok((a, b)) = self.aligned(other) else {
            return false;
        };
        a.coeffs.keys().chain(b.coeffs.keys()).all(|i| a.coeff(*i).agrees(&b.coeff(*i)))
    }

    /// Single-variable view: the scalar coefficient of `T^0` at each exponent.
    pub fn scalar_coeff(&self, i: i64) -> PadicScalar {
        self.coeff(i).constant_term()
    }

    /// Iterate over every `(pi_exp, t_exps, scalar)` term.
    pub fn terms(&self) -> impl Iterator<Item = (i64, TExp, PadicScalar)> + '_ {
        self.coeffs.iter().flat_map(|(i, c)| c.terms().iter().map(move |(e, s)| (*i, *e, *s)))
    }
}

/// Record at exponents in `(h + ord(other), hz]` the valuation bound coming
/// from `p^v O(u^(h+1)) · other`.
fn apply_caps(ctx: Ctx, out: &mut BTreeMap<i64, CoeffElement>, h: i64, v: u32, other: &SeriesElement, hz: i64) {
    let supp: Vec<(i64, u32)> = other.coeffs.iter().map(|(j, c)| (*j, c.val_bound())).collect();
    let Some(&(ord, _)) = supp.first() else {
        return;
    };
    let start = (h + ord + 1).max(ctx.window.pi_lo);
    let mut idx = 0;
    let mut cap = u32::MAX;
    for k in start..=hz {
        while idx < supp.len() && supp[idx].0 < k - h {
            cap = cap.min(supp[idx].1);
            idx += 1;
        }
        let c = cap.saturating_add(v);
        if c >= ctx.m() {
            continue;
        }
        let slot = out.entry(k).or_insert_with(|| CoeffElement::zero(ctx));
        *slot = slot.cap(c);
    }
}

/// Largest `λ = num/den` with `v(x_{pivot-t}) ≥ λ t` for all `t > 0`;
/// `None` when nothing is stored below `pivot`.
fn neg_slope(x: &SeriesElement, pivot: i64) -> Option<(u64, u64)> {
    let mut slope: Option<(u64, u64)> = None;
    for (j, c) in x.coeffs.range(..pivot) {
        let t = (pivot - j) as u64;
        let v = c.val_bound() as u64;
        slope = Some(match slope {
            Some((n, m)) if n * t <= v * m => (n, m),
            _ => (v, t),
        });
    }
    slope
}

/// The series `p^v O(u^top)` together with valuation bounds
/// `v + ⌈λ(top − k)⌉` at exponents `k < top`.
fn slope_tail(ctx: Ctx, var: Var, top: i64, v: u32, slope: Option<(u64, u64)>) -> SeriesElement {
    let hz = (top - 1).min(ctx.window.pi_hi);
    let room = ctx.m().saturating_sub(v) as u64;
    let lo = match slope {
        None => top,
        Some((0, _)) => ctx.window.pi_lo,
        Some((n, m)) => top - (room * m).div_ceil(n) as i64,
    }
    .max(ctx.window.pi_lo);
    let mut coeffs = BTreeMap::new();
    for k in lo..=hz {
        let cap = match slope {
            None => ctx.m(),
            Some((n, m)) => (v as u64 + ((top - k) as u64 * n).div_ceil(m)).min(ctx.m() as u64) as u32,
        };
        if cap < ctx.m() {
            coeffs.insert(k, CoeffElement::zero_at(ctx, cap));
        }
    }
    SeriesElement::from_coeffs(ctx, var, coeffs, Some((hz, v)))
}

/// Valuation bounds shared by `x · y` for every integral `y` whose negative
/// part decays with slope `λ`: at `t` the bound is
/// `min_k (vb(x_k) + λ·max(0, k − t))`, the tail included.
fn decay_bound(x: &SeriesElement, slope: Option<(u64, u64)>) -> SeriesElement {
    let ctx = x.ctx;
    let m = ctx.m();
    let stored: Vec<(i64, u32)> = x.coeffs.iter().map(|(k, c)| (*k, c.val_bound())).collect();
    let gain = |k: i64, t: i64| -> u32 {
        match slope {
            _ if k <= t => 0,
            None => m,
            Some((n, d)) => ((k - t) as u64 * n).div_ceil(d).min(m as u64) as u32,
        }
    };
    let hi = x.trunc.unwrap_or(ctx.window.pi_hi).min(ctx.window.pi_hi);
    let mut coeffs = BTreeMap::new();
    for t in ctx.window.pi_lo..=hi {
        let mut b = stored.iter().map(|(k, c)| c.saturating_add(gain(*k, t))).fold(m, u32::min);
        if let Some((h, tv)) = x.tail() {
            b = b.min(tv.saturating_add(gain(h + 1, t)));
        }
        if b < m {
            coeffs.insert(t, CoeffElement::zero_at(ctx, b));
        }
    }
    let tail = x.tail().map(|(h, tv)| (h.min(hi), stored.iter().map(|(_, c)| *c).fold(tv, u32::min)));
    SeriesElement::from_coeffs(ctx, x.var, coeffs, tail)
}

/// Bound for `Σ_{i>hx} c_i g^i` with `c_i ≡ 0 mod p^v`.
///
/// Writing `g = c u^d (1 + h)`, the negative part of `h` decays with slope
/// `λ`, so `g^i` for `i > hx` is bounded by `slope_tail` at `d(hx + 1)`.
fn unknown_tail(g: &SeriesElement, hx: i64, v: u32) -> Result<SeriesElement> {
    let d = g.first_unit_exponent().ok_or_else(|| Error::Unsupported("image has no unit coefficient".into()))?;
    if g.trunc.is_some_and(|hg| hg < d) {
        return Err(Error::Unsupported("image is not known up to its leading term".into()));
    }
    if d <= 0 || hx < 0 {
        return Err(Error::Unsupported("truncated substitution needs an image of positive order".into()));
    }
    Ok(slope_tail(g.ctx, g.var, d * (hx + 1), v, neg_slope(g, d)))
}

impl fmt::Display for SeriesElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let u = self.var.name();
        let mut first = true;
        for (i, c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})*{u}^{i}")?;
        }
        if first {
            write!(f, "0")?;
        }
        if let Some((h, v)) = self.tail() {
            write!(f, " + O({}^{v} {u}^{})", self.ctx.p(), h + 1)?;
        }
        Ok(())
    }
}
