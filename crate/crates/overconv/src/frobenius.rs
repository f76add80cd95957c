//! Frobenius, decomposition over the basis `T^i (1+u)^j` of the ring as a
//! module over its Frobenius image, the trace `Tr_φ`, and its σ/τ factors.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use crate::config::Ctx;
use crate::error::{Error, Result};
use crate::laurent::{texp, CoeffElement, SeriesElement, TExp, TMap, Var};
use crate::padic::{pow_u64, PadicScalar};

/// Action of φ on the T-variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TMode {
    /// `T ↦ T^p`.
    Standard,
    /// `T ↦ T`; the T-variables then sit in the coefficients of the
    /// decomposition instead of the basis.
    Trivial,
}

/// One basis monomial `T^t (1+u)^j` with `0 ≤ t_k, j < p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisElem {
    pub t: TExp,
    pub u: u32,
}

impl BasisElem {
    pub fn series(&self, ctx: Ctx, var: Var) -> SeriesElement {
        let tpart = CoeffElement::monomial(ctx, 0, self.t, ctx.scalar(1));
        let ints: Vec<(i64, i64)> = (0..=self.u as i64).map(|s| (s, binomial_i64(self.u as i64, s))).collect();
        SeriesElement::from_ints(ctx, var, &ints).scale(&tpart).expect("basis monomial fits the window")
    }
}

fn binomial_i64(n: i64, k: i64) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) / (i + 1))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhiBasis {
    pub elements: Vec<BasisElem>,
}

impl PhiBasis {
    /// `p^n` elements in standard mode, `p` in trivial mode; `1` comes first.
    pub fn new(ctx: Ctx, mode: TMode) -> Self {
        let p = ctx.p() as i64;
        let tv = match mode {
            TMode::Standard => ctx.nvars(),
            TMode::Trivial => 0,
        };
        let count = p.pow(tv as u32 + 1);
        let elements = (0..count)
            .map(|mut idx| {
                let u = (idx % p) as u32;
                idx /= p;
                let mut t = texp(&[]);
                for slot in t.iter_mut().take(tv) {
                    *slot = idx % p;
                    idx /= p;
                }
                BasisElem { t, u }
            })
            .collect();
        Self { elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn index_of(&self, b: &BasisElem) -> Option<usize> {
        self.elements.iter().position(|e| e == b)
    }
}

/// `x = Σ_b φ(x_b) · b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhiDecomposition {
    pub basis: PhiBasis,
    pub components: Vec<SeriesElement>,
}

impl PhiDecomposition {
    pub fn component(&self, b: &BasisElem) -> Option<&SeriesElement> {
        self.basis.index_of(b).map(|i| &self.components[i])
    }
}

/// Frobenius on one uniformizer variable together with its decomposition
/// data. The unramified image `(1+π)^p − 1` uses a closed-form route;
/// any other image uses p-adic lifting.
#[derive(Debug)]
pub struct Frobenius {
    ctx: Ctx,
    var: Var,
    pi_image: SeriesElement,
    mode: TMode,
    unramified: bool,
    pieces: Mutex<HashMap<i64, Vec<SeriesElement>>>,
    traces: Mutex<Option<Vec<SeriesElement>>>,
    normalized: Mutex<HashMap<u32, Vec<SeriesElement>>>,
}

impl Clone for Frobenius {
    fn clone(&self) -> Self {
        Self {
            ctx: self.ctx,
            var: self.var,
            pi_image: self.pi_image.clone(),
            mode: self.mode,
            unramified: self.unramified,
            pieces: Mutex::new(self.pieces.lock().unwrap().clone()),
            traces: Mutex::new(self.traces.lock().unwrap().clone()),
            normalized: Mutex::new(self.normalized.lock().unwrap().clone()),
        }
    }
}

/// Table of binomial coefficients modulo `q` up to row `n`.
fn binomials(n: usize, q: u64) -> Vec<Vec<u64>> {
    let mut rows: Vec<Vec<u64>> = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut row = vec![1u64; i + 1];
        for k in 1..i {
            row[k] = (rows[i - 1][k - 1] + rows[i - 1][k]) % q;
        }
        rows.push(row);
    }
    rows
}

fn mod_scalar(ctx: Ctx, r: u64) -> PadicScalar {
    PadicScalar::with_precision(ctx.p(), ctx.m(), r, ctx.m())
}

/// Split a coefficient by T-exponent residues: `c = Σ_i τ(c_i) T^i`.
fn t_split(c: &CoeffElement, mode: TMode) -> Result<Vec<(TExp, CoeffElement)>> {
    let ctx = c.ctx();
    if mode == TMode::Trivial {
        return Ok(vec![(texp(&[]), c.clone())]);
    }
    if c.level() != 0 {
        return Err(Error::Unsupported("decomposition of fractional T-exponents".into()));
    }
    let p = ctx.p() as i64;
    let nv = ctx.nvars();
    let mut classes: BTreeMap<TExp, Vec<(TExp, PadicScalar)>> = BTreeMap::new();
    for (e, s) in c.terms() {
        let mut i = texp(&[]);
        let mut q = texp(&[]);
        for k in 0..nv {
            i[k] = e[k].rem_euclid(p);
            q[k] = e[k].div_euclid(p);
        }
        classes.entry(i).or_default().push((q, *s));
    }
    let mut out = Vec::new();
    for b in PhiBasis::new(ctx, TMode::Standard).elements.iter().filter(|b| b.u == 0) {
        let terms = classes.remove(&b.t).unwrap_or_default();
        let ci = CoeffElement::from_terms(ctx, 0, terms)?.cap(c.precision());
        if !ci.is_exact_zero() {
            out.push((b.t, ci));
        }
    }
    Ok(out)
}

impl Frobenius {
    /// `π ↦ (1+π)^p − 1` on the variable `π`.
    pub fn unramified(ctx: Ctx, mode: TMode) -> Self {
        let p = ctx.p() as i64;
        let ints: Vec<(i64, i64)> = (1..=p).map(|k| (k, binomial_i64(p, k))).collect();
        let pi_image = SeriesElement::from_ints(ctx, Var::Pi, &ints);
        Self::build(ctx, Var::Pi, pi_image, mode, true)
    }

    /// Frobenius with a prescribed image of the uniformizer, which must
    /// reduce to `u^p` modulo p.
    pub fn with_image(pi_image: SeriesElement, mode: TMode) -> Result<Self> {
        let ctx = pi_image.ctx();
        let var = pi_image.variable();
        let upow = SeriesElement::monomial(var, ctx.p() as i64, CoeffElement::one(ctx));
        let diff = pi_image.sub(&upow)?;
        if diff.coeffs().values().any(|c| c.val_bound() < 1) {
            return Err(Error::NotEisenstein("image of the uniformizer is not a lift of the p-th power".into()));
        }
        Ok(Self::build(ctx, var, pi_image, mode, false))
    }

    fn build(ctx: Ctx, var: Var, pi_image: SeriesElement, mode: TMode, unramified: bool) -> Self {
        Self {
            ctx,
            var,
            pi_image,
            mode,
            unramified,
            pieces: Mutex::new(HashMap::new()),
            traces: Mutex::new(None),
            normalized: Mutex::new(HashMap::new()),
        }
    }

    pub fn ctx(&self) -> Ctx {
        self.ctx
    }

    pub fn var(&self) -> Var {
        self.var
    }

    pub fn mode(&self) -> TMode {
        self.mode
    }

    pub fn is_unramified(&self) -> bool {
        self.unramified
    }

    pub fn pi_image(&self) -> &SeriesElement {
        &self.pi_image
    }

    pub fn tmap(&self) -> TMap {
        match self.mode {
            TMode::Standard => TMap::frobenius(self.ctx.p()),
            TMode::Trivial => TMap::IDENTITY,
        }
    }

    /// Rank of the free module: `p^n`, or `p` in trivial mode.
    pub fn rank(&self) -> u64 {
        self.basis().len() as u64
    }

    /// The same map with φ trivial on T (the σ factor).
    pub fn sigma(&self) -> Self {
        Self::build(self.ctx, self.var, self.pi_image.clone(), TMode::Trivial, self.unramified)
    }

    pub fn basis(&self) -> PhiBasis {
        PhiBasis::new(self.ctx, self.mode)
    }

    pub fn apply(&self, x: &SeriesElement) -> Result<SeriesElement> {
        x.substitute(&self.pi_image, self.tmap())
    }

    pub fn recompose(&self, d: &PhiDecomposition) -> Result<SeriesElement> {
        let mut out = SeriesElement::zero(self.ctx, self.var);
        for (b, c) in d.basis.elements.iter().zip(&d.components) {
            out = out.add(&self.apply(c)?.mul(&b.series(self.ctx, self.var))?)?;
        }
        Ok(out)
    }

    pub fn decompose(&self, x: &SeriesElement) -> Result<PhiDecomposition> {
        if self.unramified {
            self.decompose_closed_form(x)
        } else {
            self.decompose_lifting(x)
        }
    }

    /// Components of `u^k` over the `(1+u)^r`, `0 ≤ r < p`, unramified case.
    ///
    /// For `k ≥ 0` expand `(v − 1)^k` with `v = 1+π` and collect `v^{pq+r}`
    /// as `φ(v^q) v^r`. For `k = −L` use `π^{−L} = φ(π^{−L}) A^L` with
    /// `A = φ(π)/π = 1 + v + … + v^{p−1}`.
    fn unramified_pieces(&self, k: i64) -> Vec<SeriesElement> {
        if let Some(v) = self.pieces.lock().unwrap().get(&k) {
            return v.clone();
        }
        let ctx = self.ctx;
        let p = ctx.p() as usize;
        let q = ctx.prime.modulus();
        let poly: Vec<u64> = if k >= 0 {
            let row = binomials(k as usize, q).pop().unwrap();
            row.iter().enumerate().map(|(t, b)| if (k as usize - t).is_multiple_of(2) { *b } else { (q - b) % q }).collect()
        } else {
            let mut acc = vec![1u64];
            for _ in 0..(-k) {
                let mut next = vec![0u64; acc.len() + p - 1];
                for (i, a) in acc.iter().enumerate() {
                    for s in 0..p {
                        next[i + s] = (next[i + s] + a) % q;
                    }
                }
                acc = next;
            }
            acc
        };
        let qmax = poly.len() / p + 1;
        let binom = binomials(qmax, q);
        let shift = k.min(0);
        let out: Vec<SeriesElement> = (0..p)
            .map(|r| {
                let mut coeffs: BTreeMap<i64, CoeffElement> = BTreeMap::new();
                for (qq, a) in poly.iter().skip(r).step_by(p).enumerate() {
                    if *a == 0 {
                        continue;
                    }
                    for (s, b) in binom[qq].iter().enumerate() {
                        let v = ((*a as u128 * *b as u128) % q as u128) as u64;
                        let slot = coeffs.entry(s as i64 + shift).or_insert_with(|| CoeffElement::zero(ctx));
                        *slot = slot.add(&CoeffElement::constant(ctx, mod_scalar(ctx, v)));
                    }
                }
                SeriesElement::from_coeffs(ctx, self.var, coeffs, None)
            })
            .collect();
        self.pieces.lock().unwrap().insert(k, out.clone());
        out
    }

    /// Closed-form decomposition for the unramified Frobenius.
    pub fn decompose_closed_form(&self, x: &SeriesElement) -> Result<PhiDecomposition> {
        if !self.unramified {
            return Err(Error::Unsupported("closed-form decomposition needs the unramified Frobenius".into()));
        }
        let ctx = self.ctx;
        let p = ctx.p() as usize;
        let basis = self.basis();
        let mut comps = vec![SeriesElement::zero(ctx, self.var); basis.len()];
        let idx = |t: &TExp, r: usize| basis.index_of(&BasisElem { t: *t, u: r as u32 }).unwrap();
        for (k, c) in x.coeffs() {
            let pieces = self.unramified_pieces(*k);
            for (t, ct) in t_split(c, self.mode)? {
                for (r, piece) in pieces.iter().enumerate() {
                    let i = idx(&t, r);
                    comps[i] = comps[i].add(&piece.scale(&ct)?)?;
                }
            }
        }
        if let Some((h, tv)) = x.tail() {
            // p^tv O(u^{h+1}) = Σ_j φ(z_j) π^{h+1} (1+π)^j with unknown integral z_j.
            let mut caps: Vec<BTreeMap<i64, u32>> = vec![BTreeMap::new(); p];
            for j in 0..p as i64 {
                for s in 0..=j {
                    let pieces = self.unramified_pieces(h + 1 + s);
                    for (r, piece) in pieces.iter().enumerate() {
                        let w = binomial_i64(j, s);
                        for (t, c) in piece.coeffs() {
                            let v = c.mul_int(w).val_bound();
                            let e = caps[r].entry(*t).or_insert(u32::MAX);
                            *e = (*e).min(v);
                        }
                    }
                }
            }
            for (r, cap) in caps.iter().enumerate() {
                let tail = tail_from_caps(ctx, self.var, cap, tv);
                for b in basis.elements.iter().filter(|b| b.u as usize == r) {
                    let i = idx(&b.t, r);
                    comps[i] = comps[i].add(&tail)?;
                }
            }
        }
        Ok(PhiDecomposition { basis, components: comps })
    }

    /// Decomposition by successive approximation modulo p.
    ///
    /// Modulo p, Frobenius is the p-th power map, so digit-wise splitting of
    /// exponents gives `x ≡ Σ φ(z_{t,r}) T^t u^r`; the error is divisible by
    /// p and the step repeats on the quotient. The `u^r` basis is then
    /// rewritten in the `(1+u)^j` basis.
    pub fn decompose_lifting(&self, x: &SeriesElement) -> Result<PhiDecomposition> {
        if !x.is_exact() || !self.pi_image.is_exact() {
            return Err(Error::Unsupported("lifting decomposition of truncated series".into()));
        }
        let ctx = self.ctx;
        let p = ctx.p() as i64;
        let basis = self.basis();
        let n = basis.len();
        let mut comps = vec![SeriesElement::zero(ctx, self.var); n];
        let mut rem = x.clone();
        let idx = |t: &TExp, r: i64| basis.index_of(&BasisElem { t: *t, u: r as u32 }).unwrap();
        for round in 0..ctx.m() {
            if rem.is_zero_at_precision() {
                break;
            }
            let mut digits: Vec<BTreeMap<i64, CoeffElement>> = vec![BTreeMap::new(); n];
            for (k, c) in rem.coeffs() {
                let r = k.rem_euclid(p);
                let qk = k.div_euclid(p);
                let mut digit_terms = Vec::new();
                for (e, s) in c.terms() {
                    let d = s.residue() % ctx.p();
                    if d != 0 && s.precision() > 0 {
                        digit_terms.push((*e, ctx.scalar(d as i64)));
                    }
                }
                let digit = CoeffElement::from_terms(ctx, c.level(), digit_terms)?;
                for (t, ct) in t_split(&digit, self.mode)? {
                    let slot = digits[idx(&t, r)].entry(qk).or_insert_with(|| CoeffElement::zero(ctx));
                    *slot = slot.add(&ct);
                }
            }
            let mut recon = SeriesElement::zero(ctx, self.var);
            for (b, d) in basis.elements.iter().zip(digits) {
                if d.is_empty() {
                    continue;
                }
                let z = SeriesElement::from_coeffs(ctx, self.var, d, None);
                let tmon = SeriesElement::constant(self.var, CoeffElement::monomial(ctx, 0, b.t, ctx.scalar(1)));
                let mono = tmon.shift(b.u as i64)?;
                recon = recon.add(&self.apply(&z)?.mul(&mono)?)?;
                let i = idx(&b.t, b.u as i64);
                comps[i] = comps[i].add(&z.mul_p_power(round))?;
            }
            rem = rem.sub(&recon)?;
            if rem.coeffs().values().any(|c| c.val_bound() < 1) {
                return Err(Error::DecompositionOverflow("remainder not divisible by p".into()));
            }
            rem = rem.divide_exact(1)?;
        }
        // u^r = Σ_j C(r, j) (−1)^{r−j} (1+u)^j.
        let mut out = vec![SeriesElement::zero(ctx, self.var); n];
        for (bi, b) in basis.elements.iter().enumerate() {
            for j in 0..=b.u as i64 {
                let sign = if (b.u as i64 - j) % 2 == 0 { 1 } else { -1 };
                let w = sign * binomial_i64(b.u as i64, j);
                let target = idx(&b.t, j);
                out[target] = out[target].add(&comps[bi].mul_int(w))?;
            }
        }
        Ok(PhiDecomposition { basis, components: out })
    }

    /// `Tr_φ(b)` for each basis element, computed as the sum of the diagonal
    /// components of `b · b'` over the basis.
    pub fn basis_traces(&self) -> Result<Vec<SeriesElement>> {
        if let Some(t) = self.traces.lock().unwrap().as_ref() {
            return Ok(t.clone());
        }
        let basis = self.basis();
        let series: Vec<SeriesElement> = basis.elements.iter().map(|b| b.series(self.ctx, self.var)).collect();
        let mut out = Vec::with_capacity(basis.len());
        for sb in &series {
            let mut acc = SeriesElement::zero(self.ctx, self.var);
            for (j, sbp) in series.iter().enumerate() {
                let d = self.decompose(&sb.mul(sbp)?)?;
                acc = acc.add(&d.components[j])?;
            }
            out.push(acc);
        }
        *self.traces.lock().unwrap() = Some(out.clone());
        Ok(out)
    }

    /// `Tr_φ(x) = Σ_b x_b Tr_φ(b)`, with φ^{-1} already applied.
    pub fn trace(&self, x: &SeriesElement) -> Result<SeriesElement> {
        let d = self.decompose(x)?;
        let traces = self.basis_traces()?;
        let mut out = SeriesElement::zero(self.ctx, self.var);
        for (c, t) in d.components.iter().zip(&traces) {
            if t.is_exact_zero() {
                continue;
            }
            out = out.add(&c.mul(t)?)?;
        }
        Ok(out)
    }

    /// `p^{-k} Tr_φ(x)`.
    ///
    /// For the unramified map the basis traces are computed at precision
    /// `M + k` and divided there, so no digits of `x` are lost; otherwise the
    /// trace is divided with the usual precision loss.
    pub fn normalized_trace(&self, x: &SeriesElement, k: u32) -> Result<SeriesElement> {
        if !self.unramified {
            return self.trace(x)?.divide_exact(k);
        }
        let traces = self.normalized_basis_traces(k)?;
        let d = self.decompose(x)?;
        let mut out = SeriesElement::zero(self.ctx, self.var);
        for (c, t) in d.components.iter().zip(&traces) {
            if t.is_exact_zero() {
                continue;
            }
            out = out.add(&c.mul(t)?)?;
        }
        Ok(out)
    }

    fn normalized_basis_traces(&self, k: u32) -> Result<Vec<SeriesElement>> {
        if let Some(t) = self.normalized.lock().unwrap().get(&k) {
            return Ok(t.clone());
        }
        let hi = Frobenius::unramified(self.ctx.with_precision(self.ctx.m() + k)?, self.mode);
        let out = hi.basis_traces()?.iter().map(|t| Ok(t.divide_exact(k)?.reduce_to(self.ctx))).collect::<Result<Vec<_>>>()?;
        self.normalized.lock().unwrap().insert(k, out.clone());
        Ok(out)
    }

    /// Partial traces along `σ: u ↦ φ(u)` (rank p) and `τ: T ↦ T^p`
    /// (rank `p^{n−1}`).
    pub fn sigma_tau_split(&self, x: &SeriesElement) -> Result<(SeriesElement, SeriesElement)> {
        Ok((self.sigma().trace(x)?, self.trace_tau(x)?))
    }

    /// `Tr_τ(x) = p^{n−1} x_0` where `x = Σ_t τ(x_t) T^t`; τ^{-1} applied.
    pub fn trace_tau(&self, x: &SeriesElement) -> Result<SeriesElement> {
        let mut coeffs = BTreeMap::new();
        for (k, c) in x.coeffs() {
            if let Some((_, c0)) = t_split(c, TMode::Standard)?.into_iter().find(|(t, _)| *t == texp(&[])) {
                coeffs.insert(*k, c0.mul_p_power(self.ctx.nvars() as u32));
            }
        }
        let tail = x.tail().map(|(h, v)| (h, v + self.ctx.nvars() as u32));
        Ok(SeriesElement::from_coeffs(self.ctx, self.var, coeffs, tail))
    }

    /// The classical one-variable operator `p^{-1} Tr_σ`.
    pub(crate) fn psi_classical(&self, x: &SeriesElement) -> Result<SeriesElement> {
        self.sigma().normalized_trace(x, 1)
    }
}

/// Series `p^tv O(u^top)` with `tv + cap[k]` valuation bounds, where `top`
/// is the first exponent whose bound, running minimum from below, reaches 0.
fn tail_from_caps(ctx: Ctx, var: Var, caps: &BTreeMap<i64, u32>, tv: u32) -> SeriesElement {
    let mut coeffs = BTreeMap::new();
    let mut run = u32::MAX;
    let mut top = ctx.window.pi_hi + 1;
    let lo = caps.keys().next().copied().unwrap_or(top);
    for k in lo..=ctx.window.pi_hi {
        if let Some(v) = caps.get(&k) {
            run = run.min(*v);
        }
        if run == 0 {
            top = k;
            break;
        }
        let cap = run.saturating_add(tv);
        if cap < ctx.m() && k >= ctx.window.pi_lo {
            coeffs.insert(k, CoeffElement::zero_at(ctx, cap));
        }
    }
    SeriesElement::from_coeffs(ctx, var, coeffs, Some((top - 1, tv)))
}

pub fn binomial(n: i64, k: i64) -> i64 {
    binomial_i64(n, k)
}

/// Number of basis elements as a power of p, for the given mode.
pub fn rank_exponent(ctx: Ctx, mode: TMode) -> u32 {
    match mode {
        TMode::Standard => ctx.n() as u32,
        TMode::Trivial => 1,
    }
}

/// `p^{rank_exponent}` as a scalar.
pub fn rank_scalar(ctx: Ctx, mode: TMode) -> PadicScalar {
    ctx.scalar(pow_u64(ctx.p(), rank_exponent(ctx, mode)) as i64)
}
