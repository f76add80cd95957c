//! Milnor symbols, logarithmic forms and the trace/ψ operators on them.
//!
//! Top-degree forms are rank one. The computational basis is
//! `vol = dlog T_1 ∧ … ∧ dlog T_{n−1} ∧ dlog(u + 1)` ("plus"); the log basis
//! `dlog T_1 ∧ … ∧ dlog u` differs from it by the factor `(u + 1)/u`.
//! Degree `n − 1` forms have one component per omitted generator, with
//! generators ordered `T_1, …, T_{n−1}, u + 1`.

use std::fmt;

use crate::config::Ctx;
use crate::eisenstein::FrobeniusLift;
use crate::error::{Error, Result};
use crate::frobenius::{Frobenius, TMode};
use crate::laurent::{texp, SeriesElement, TExp, Var};
use crate::overconvergence::RamificationConfig;
use crate::padic::Valuation;

/// One slot of a Milnor symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Entry {
    Series(SeriesElement),
    /// The uniformizer.
    PiK,
    /// The prime; its dlog is zero.
    P,
}

impl Entry {
    /// The entry as a series in `var`.
    pub fn series(&self, ctx: Ctx, var: Var) -> SeriesElement {
        match self {
            Entry::Series(s) => s.clone(),
            Entry::PiK => SeriesElement::var(ctx, var),
            Entry::P => SeriesElement::from_int(ctx, var, ctx.p() as i64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MilnorSymbol {
    ctx: Ctx,
    var: Var,
    entries: Vec<Entry>,
}

impl MilnorSymbol {
    pub fn new(ctx: Ctx, var: Var, entries: Vec<Entry>) -> Result<Self> {
        if entries.len() != ctx.n() {
            return Err(Error::Incompatible(format!("symbol has {} entries, expected {}", entries.len(), ctx.n())));
        }
        for e in &entries {
            if let Entry::Series(s) = e {
                if s.variable() != var || s.ctx().prime != ctx.prime {
                    return Err(Error::Incompatible("symbol entry in another ring".into()));
                }
            }
        }
        Ok(Self { ctx, var, entries })
    }

    pub fn ctx(&self) -> Ctx {
        self.ctx
    }

    pub fn var(&self) -> Var {
        self.var
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// The same symbol with entries `i` and `j` exchanged.
    pub fn swapped(&self, i: usize, j: usize) -> Self {
        let mut out = self.clone();
        out.entries.swap(i, j);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolProduct {
    ctx: Ctx,
    var: Var,
    factors: Vec<(MilnorSymbol, i64)>,
}

impl SymbolProduct {
    /// The empty product.
    pub fn trivial(ctx: Ctx, var: Var) -> Self {
        Self { ctx, var, factors: Vec::new() }
    }

    pub fn new(ctx: Ctx, var: Var, factors: Vec<(MilnorSymbol, i64)>) -> Result<Self> {
        if factors.iter().any(|(s, _)| s.var != var || s.ctx.prime != ctx.prime) {
            return Err(Error::Incompatible("symbols from different rings".into()));
        }
        let factors = factors.into_iter().filter(|(_, e)| *e != 0).collect();
        Ok(Self { ctx, var, factors })
    }

    pub fn single(s: MilnorSymbol) -> Self {
        Self { ctx: s.ctx, var: s.var, factors: vec![(s, 1)] }
    }

    pub fn ctx(&self) -> Ctx {
        self.ctx
    }

    pub fn var(&self) -> Var {
        self.var
    }

    pub fn factors(&self) -> &[(MilnorSymbol, i64)] {
        &self.factors
    }

    /// Concatenation of factor lists.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Self::new(self.ctx, self.var, factors)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormBasis {
    /// `dlog T_1 ∧ … ∧ dlog(u + 1)`.
    Plus,
    /// `dlog T_1 ∧ … ∧ dlog u`.
    Log,
}

impl FormBasis {
    pub fn name(&self) -> &'static str {
        match self {
            FormBasis::Plus => "plus",
            FormBasis::Log => "log",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plus" => Ok(FormBasis::Plus),
            "log" => Ok(FormBasis::Log),
            other => Err(Error::Parse(format!("unknown form basis {other:?}"))),
        }
    }
}

/// A top-degree logarithmic form `coeff · basis`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogForm {
    pub coeff: SeriesElement,
    pub basis: FormBasis,
}

fn one_plus_u(ctx: Ctx, var: Var) -> SeriesElement {
    SeriesElement::from_ints(ctx, var, &[(0, 1), (1, 1)])
}

impl LogForm {
    pub fn new(coeff: SeriesElement, basis: FormBasis) -> Self {
        Self { coeff, basis }
    }

    pub fn zero(ctx: Ctx, var: Var) -> Self {
        Self::new(SeriesElement::zero(ctx, var), FormBasis::Plus)
    }

    /// `dlog T_1 ∧ … ∧ dlog(u + 1)`.
    pub fn vol(ctx: Ctx, var: Var) -> Self {
        Self::new(SeriesElement::one(ctx, var), FormBasis::Plus)
    }

    pub fn ctx(&self) -> Ctx {
        self.coeff.ctx()
    }

    pub fn var(&self) -> Var {
        self.coeff.variable()
    }

    /// Rewrite in the other basis.
    pub fn to_basis(&self, basis: FormBasis) -> Result<Self> {
        let (ctx, var) = (self.ctx(), self.var());
        let coeff = match (self.basis, basis) {
            (a, b) if a == b => self.coeff.clone(),
            // a · dlog u = a (u+1)/u · dlog(u+1)
            (FormBasis::Log, FormBasis::Plus) => self.coeff.mul(&one_plus_u(ctx, var))?.shift(-1)?,
            _ => self.coeff.shift(1)?.divide(&one_plus_u(ctx, var))?,
        };
        Ok(Self::new(coeff, basis))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let o = other.to_basis(self.basis)?;
        Ok(Self::new(self.coeff.add(&o.coeff)?, self.basis))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        Self::new(self.coeff.neg(), self.basis)
    }

    pub fn mul_int(&self, k: i64) -> Self {
        Self::new(self.coeff.mul_int(k), self.basis)
    }

    pub fn is_zero_at_precision(&self) -> bool {
        self.coeff.is_zero_at_precision()
    }

    pub fn gauss_valuation(&self) -> Valuation {
        self.coeff.gauss_valuation()
    }

    /// Equality where both coefficients are known, compared in `self`'s basis.
    pub fn agrees(&self, other: &Self) -> bool {
        match other.to_basis(self.basis) {
            Ok(o) => self.coeff.agrees(&o.coeff),
            Err(_) => false,
        }
    }
}

impl fmt::Display for LogForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]·{}", self.coeff, self.basis.name())
    }
}

/// A form of degree `n − 1`; component `i` multiplies the wedge of all
/// generators except the `i`-th.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LowerForm {
    pub components: Vec<SeriesElement>,
}

impl LowerForm {
    pub fn new(ctx: Ctx, components: Vec<SeriesElement>) -> Result<Self> {
        if components.len() != ctx.n() {
            return Err(Error::Incompatible(format!("expected {} components", ctx.n())));
        }
        Ok(Self { components })
    }

    /// `α` times the wedge omitting generator `i`.
    pub fn single(ctx: Ctx, i: usize, alpha: SeriesElement) -> Result<Self> {
        let var = alpha.variable();
        let mut components = vec![SeriesElement::zero(ctx, var); ctx.n()];
        *components.get_mut(i).ok_or_else(|| Error::Incompatible(format!("no generator {i}")))? = alpha;
        Self::new(ctx, components)
    }

    pub fn gauss_valuation(&self) -> Valuation {
        self.components.iter().map(|c| c.gauss_valuation()).min().unwrap_or(Valuation::Infinite)
    }

    pub fn is_zero_at_precision(&self) -> bool {
        self.components.iter().all(|c| c.is_zero_at_precision())
    }
}

/// Generators `T_1, …, T_{n−1}, u + 1` as symbol entries.
fn generators(ctx: Ctx, var: Var) -> Vec<Entry> {
    let mut g: Vec<Entry> = (0..ctx.nvars()).map(|v| Entry::Series(SeriesElement::t_var(ctx, var, v, 1))).collect();
    g.push(Entry::Series(one_plus_u(ctx, var)));
    g
}

/// Does some pair of entries sum to 1 at working precision?
pub fn check_steinberg(s: &MilnorSymbol) -> bool {
    let one = SeriesElement::one(s.ctx, s.var);
    let series: Vec<SeriesElement> = s.entries.iter().map(|e| e.series(s.ctx, s.var)).collect();
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            if let Ok(sum) = series[i].add(&series[j]) {
                if sum.agrees(&one) {
                    return true;
                }
            }
        }
    }
    false
}

/// Coordinates of `dlog a` in the generators' dlogs; `None` for `dlog p = 0`.
fn dlog_row(ctx: Ctx, var: Var, e: &Entry) -> Result<Option<Vec<SeriesElement>>> {
    let mut row = vec![SeriesElement::zero(ctx, var); ctx.n()];
    let last = ctx.nvars();
    match e {
        Entry::P => return Ok(None),
        Entry::PiK => row[last] = one_plus_u(ctx, var).shift(-1)?,
        Entry::Series(a) => {
            for (v, slot) in row.iter_mut().take(last).enumerate() {
                *slot = a.t_theta(v)?.divide(a)?;
            }
            let da = a.formal_derivative();
            row[last] = da.add(&da.shift(1)?)?.divide(a)?;
        }
    }
    Ok(Some(row))
}

/// Permutations of `0..n` with their signs.
fn permutations(n: usize) -> Vec<(Vec<usize>, i64)> {
    if n == 0 {
        return vec![(Vec::new(), 1)];
    }
    let mut out = Vec::new();
    for (perm, sign) in permutations(n - 1) {
        // Insert n−1 at position k: moves past n−1−k entries.
        for k in 0..n {
            let mut p = perm.clone();
            p.insert(k, n - 1);
            let s = if (n - 1 - k).is_multiple_of(2) { sign } else { -sign };
            out.push((p, s));
        }
    }
    out
}

pub(crate) fn determinant(ctx: Ctx, var: Var, rows: &[Vec<SeriesElement>]) -> Result<SeriesElement> {
    let mut acc = SeriesElement::zero(ctx, var);
    for (perm, sign) in permutations(rows.len()) {
        let mut term = SeriesElement::from_int(ctx, var, sign);
        for (r, &c) in perm.iter().enumerate() {
            term = term.mul(&rows[r][c])?;
            if term.is_exact_zero() {
                break;
            }
        }
        acc = acc.add(&term)?;
    }
    Ok(acc)
}

/// `dlog a_1 ∧ … ∧ dlog a_n` of one symbol, in the plus basis.
pub fn symbol_dlog_single(s: &MilnorSymbol) -> Result<LogForm> {
    let mut rows = Vec::with_capacity(s.entries.len());
    for e in &s.entries {
        match dlog_row(s.ctx, s.var, e)? {
            Some(r) => rows.push(r),
            None => return Ok(LogForm::zero(s.ctx, s.var)),
        }
    }
    Ok(LogForm::new(determinant(s.ctx, s.var, &rows)?, FormBasis::Plus))
}

/// The dlog image of a symbol product, in the plus basis.
pub fn symbol_dlog(x: &SymbolProduct) -> Result<LogForm> {
    let mut acc = LogForm::zero(x.ctx, x.var);
    for (s, e) in &x.factors {
        acc = acc.add(&symbol_dlog_single(s)?.mul_int(*e))?;
    }
    Ok(acc)
}

/// `dlog x = num/den · vol` with `den` free of T.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DlogFraction {
    pub num: SeriesElement,
    pub den: SeriesElement,
}

impl DlogFraction {
    pub fn to_form(&self) -> Result<LogForm> {
        Ok(LogForm::new(self.num.divide(&self.den)?, FormBasis::Plus))
    }
}

/// Split an exact level-0 series as `T^e · a_0` with `a_0` free of T.
fn split_t_monomial(a: &SeriesElement) -> Option<(TExp, SeriesElement)> {
    if !a.is_exact() || a.level() != 0 {
        return None;
    }
    let e = a.terms().next()?.1;
    if a.terms().any(|(_, t, _)| t != e) {
        return None;
    }
    let a0 = SeriesElement::from_terms(a.ctx(), a.variable(), 0, a.terms().map(|(i, _, c)| (i, texp(&[]), c))).ok()?;
    Some((e, a0))
}

/// A numerator row with its denominator.
type RowFraction = (Vec<SeriesElement>, SeriesElement);

/// Numerator row and denominator of `dlog a`; `None` inside for `dlog p`.
fn dlog_row_fraction(ctx: Ctx, var: Var, e: &Entry) -> Result<Option<Option<RowFraction>>> {
    let last = ctx.nvars();
    let mut row = vec![SeriesElement::zero(ctx, var); ctx.n()];
    match e {
        Entry::P => Ok(Some(None)),
        Entry::PiK => {
            row[last] = one_plus_u(ctx, var);
            Ok(Some(Some((row, SeriesElement::var(ctx, var)))))
        }
        Entry::Series(a) => {
            let Some((t, a0)) = split_t_monomial(a) else {
                return Ok(None);
            };
            for (v, slot) in row.iter_mut().take(last).enumerate() {
                *slot = a0.mul_int(t[v]);
            }
            let da = a0.formal_derivative();
            row[last] = da.add(&da.shift(1)?)?;
            Ok(Some(Some((row, a0))))
        }
    }
}

/// `dlog x` as an exact fraction, when every series entry is a T-monomial
/// times a T-free Laurent polynomial; `None` otherwise.
pub fn symbol_dlog_fraction(x: &SymbolProduct) -> Result<Option<DlogFraction>> {
    let (ctx, var) = (x.ctx, x.var);
    let mut num = SeriesElement::zero(ctx, var);
    let mut den = SeriesElement::one(ctx, var);
    for (s, k) in &x.factors {
        let mut rows = Vec::with_capacity(s.entries.len());
        let mut d = SeriesElement::one(ctx, var);
        let mut vanishes = false;
        for e in &s.entries {
            match dlog_row_fraction(ctx, var, e)? {
                None => return Ok(None),
                Some(None) => vanishes = true,
                Some(Some((row, de))) => {
                    rows.push(row);
                    d = d.mul(&de)?;
                }
            }
        }
        if vanishes {
            continue;
        }
        let top = determinant(ctx, var, &rows)?.mul_int(*k);
        num = num.mul(&d)?.add(&top.mul(&den)?)?;
        den = den.mul(&d)?;
    }
    Ok(Some(DlogFraction { num, den }))
}

/// `exp(p α)` for `α` without negative exponents.
///
/// The coefficient `p^k / k!` is formed as `p^{k − v(k!)}` times the inverse
/// of the prime-to-p part of `k!`; summation stops once
/// `k − v(k!) ≥ k(p−2)/(p−1)` guarantees every later term vanishes mod `p^M`.
pub fn exp_p(alpha: &SeriesElement) -> Result<SeriesElement> {
    if alpha.min_exponent().is_some_and(|k| k < 0) {
        return Err(Error::NotPlusPart("exp argument has negative exponents".into()));
    }
    let ctx = alpha.ctx();
    let (p, m) = (ctx.p(), ctx.m() as u64);
    let mut sum = SeriesElement::one(ctx, alpha.variable());
    let mut power = sum.clone();
    let mut unit_fact = ctx.scalar(1);
    let mut v_fact = 0u64;
    for k in 1u64.. {
        if (k * (p - 2) + 1).div_ceil(p - 1) >= m {
            break;
        }
        let mut j = k;
        while j % p == 0 {
            j /= p;
            v_fact += 1;
        }
        unit_fact = unit_fact.mul(&ctx.scalar(j as i64));
        power = power.mul(alpha)?;
        let e = k - v_fact;
        if e >= m {
            continue;
        }
        let c = unit_fact.invert()?.mul_p_power(e as u32);
        sum = sum.add(&power.scale_scalar(&c))?;
    }
    Ok(sum)
}

/// `exp_{p,n−1}(α · dlog β_1 ∧ …) = {exp(pα), β_1, …}`, one symbol per
/// nonzero component.
pub fn exp_map(form: &LowerForm) -> Result<SymbolProduct> {
    let first = form.components.first().ok_or_else(|| Error::Incompatible("empty form".into()))?;
    let (ctx, var) = (first.ctx(), first.variable());
    let gens = generators(ctx, var);
    let mut factors = Vec::new();
    for (i, alpha) in form.components.iter().enumerate() {
        if alpha.is_exact_zero() {
            continue;
        }
        let mut entries = vec![Entry::Series(exp_p(alpha)?)];
        entries.extend(gens.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, g)| g.clone()));
        factors.push((MilnorSymbol::new(ctx, var, entries)?, 1));
    }
    SymbolProduct::new(ctx, var, factors)
}

/// The Frobenius together with its correction factors `p·ω` and `p·ω̃`.
#[derive(Clone, Debug)]
pub struct FormContext {
    frob: Frobenius,
    p_omega: SeriesElement,
    p_omega_tilde: SeriesElement,
    ramification: RamificationConfig,
}

impl FormContext {
    /// The unramified case, where `p·ω = 1`.
    ///
    /// The correction factors are formed one digit higher, since `φ(u)′`
    /// is divided by p.
    pub fn unramified(ctx: Ctx) -> Result<Self> {
        let hi = Frobenius::unramified(ctx.with_precision(ctx.m() + 1)?, TMode::Standard);
        let (p_omega, p_omega_tilde) = Self::corrections(&hi)?;
        Ok(Self {
            frob: Frobenius::unramified(ctx, TMode::Standard),
            p_omega: p_omega.reduce_to(ctx),
            p_omega_tilde: p_omega_tilde.reduce_to(ctx),
            ramification: RamificationConfig::UNRAMIFIED,
        })
    }

    /// The ramified case, from a Frobenius lift on `π_K`.
    pub fn from_lift(lift: &FrobeniusLift, ramification: RamificationConfig) -> Result<Self> {
        let frob = Frobenius::with_image(lift.image.clone(), TMode::Standard)?;
        let (p_omega, p_omega_tilde) = Self::corrections(&frob)?;
        Ok(Self { frob, p_omega, p_omega_tilde, ramification })
    }

    /// `p·ω = (φ(u)+1)/(u+1) · (φ(u)′/p)^{-1}` and `p·ω̃ = p·ω · φ(u)/u`.
    fn corrections(frob: &Frobenius) -> Result<(SeriesElement, SeriesElement)> {
        let (ctx, var) = (frob.ctx(), frob.var());
        let phi_u = frob.pi_image();
        let one = SeriesElement::one(ctx, var);
        let g = phi_u.formal_derivative().divide_exact(1)?;
        let ratio = phi_u.add(&one)?.divide(&one_plus_u(ctx, var))?;
        let p_omega = ratio.divide(&g)?;
        let p_omega_tilde = p_omega.mul(&phi_u.shift(-1)?)?;
        Ok((p_omega, p_omega_tilde))
    }

    pub fn ctx(&self) -> Ctx {
        self.frob.ctx()
    }

    pub fn var(&self) -> Var {
        self.frob.var()
    }

    pub fn ramification(&self) -> RamificationConfig {
        self.ramification
    }

    pub fn frobenius(&self) -> &Frobenius {
        &self.frob
    }

    pub fn p_omega(&self) -> &SeriesElement {
        &self.p_omega
    }

    pub fn p_omega_tilde(&self) -> &SeriesElement {
        &self.p_omega_tilde
    }

    pub fn vol(&self) -> LogForm {
        LogForm::vol(self.ctx(), self.var())
    }

    /// Trace on top-degree forms: `b·vol ↦ p^{-n} Tr_φ(p b ω)·vol`.
    pub fn trace_form(&self, x: &LogForm) -> Result<LogForm> {
        let b = x.to_basis(FormBasis::Plus)?.coeff;
        let n = self.ctx().n() as u32;
        let out = self.frob.normalized_trace(&b.mul(&self.p_omega)?, n)?;
        LogForm::new(out, FormBasis::Plus).to_basis(x.basis)
    }

    /// ψ through the pole presentation: `(c/u)·vol ↦ p^{-n} Tr_φ(p c ω̃)/u · vol`.
    pub fn psi_form(&self, x: &LogForm) -> Result<LogForm> {
        let c = x.to_basis(FormBasis::Plus)?.coeff.shift(1)?;
        let n = self.ctx().n() as u32;
        let out = self.frob.normalized_trace(&c.mul(&self.p_omega_tilde)?, n)?.shift(-1)?;
        LogForm::new(out, FormBasis::Plus).to_basis(x.basis)
    }

    /// Trace on degree `n − 1` forms: components containing `dlog(u+1)` use
    /// `p^{-(n−1)} Tr_φ(p α ω)`, the pure-T component `p^{-(n−1)} Tr_φ(β)`.
    pub fn trace_lower(&self, x: &LowerForm) -> Result<LowerForm> {
        let ctx = self.ctx();
        let k = ctx.nvars() as u32;
        let mut out = Vec::with_capacity(x.components.len());
        for (i, c) in x.components.iter().enumerate() {
            let arg = if i < ctx.nvars() { c.mul(&self.p_omega)? } else { c.clone() };
            out.push(self.frob.normalized_trace(&arg, k)?);
        }
        LowerForm::new(ctx, out)
    }
}

/// A series entry from integer `(exponent, coefficient)` pairs.
pub fn int_entry(ctx: Ctx, var: Var, terms: &[(i64, i64)]) -> Entry {
    Entry::Series(SeriesElement::from_ints(ctx, var, terms))
}

/// `T_v` (counted from 0) as an entry.
pub fn t_entry(ctx: Ctx, var: Var, v: usize) -> Entry {
    Entry::Series(SeriesElement::t_var(ctx, var, v, 1))
}
