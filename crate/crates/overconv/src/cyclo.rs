//! The cyclotomic layers `O_m = Z_p[x]/Φ_{p^m}(1+x)`, with `x = ζ_{p^m} − 1`,
//! over T-coefficients with exponents in `p^{-j} Z`; evaluation of series
//! `π ↦ x`, `T ↦ T^{1/p^j}`; field traces; and the dual exponential.

use std::fmt;
use std::sync::Arc;

use crate::config::Ctx;
use crate::error::{Error, Result};
use crate::frobenius::{Frobenius, TMode};
use crate::kforms::{FormBasis, FormContext, SymbolProduct};
use crate::laurent::{texp, CoeffElement, SeriesElement, TMap};
use crate::logderiv::{default_max_iters, log_derivative};
use crate::overconvergence::{satisfies, RamificationConfig, Rational};
use crate::padic::{pow_u64, PadicScalar, Valuation};

/// Largest supported layer degree `p^{m−1}(p−1)`.
pub const MAX_DEGREE: u64 = 120;

fn binomial_row(n: usize) -> Vec<i128> {
    let mut row = vec![1i128];
    for k in 1..=n {
        let prev = row[k - 1];
        row.push(prev * (n - k + 1) as i128 / k as i128);
    }
    row
}

/// `Φ_{p^m}(1 + x)` with exact integer coefficients, lowest degree first.
///
/// `m = 0` gives `x` (the base layer `Z_p`).
pub fn cyclotomic_modulus(p: u64, m: u32) -> Result<Vec<i128>> {
    if m == 0 {
        return Ok(vec![0, 1]);
    }
    let step = pow_u64(p, m - 1);
    let d = step * (p - 1);
    if d > MAX_DEGREE {
        return Err(Error::InvalidConfig(format!("layer degree {d} exceeds {MAX_DEGREE}")));
    }
    let mut out = vec![0i128; d as usize + 1];
    for k in 0..p {
        for (i, b) in binomial_row((k * step) as usize).into_iter().enumerate() {
            out[i] += b;
        }
    }
    Ok(out)
}

#[derive(Debug)]
struct RingData {
    ctx: Ctx,
    m: u32,
    t_level: u32,
    modulus: Vec<i128>,
    /// `c_0, …, c_{d−1}` reduced mod `p^M`.
    low: Vec<PadicScalar>,
    /// `ε^{-1}` where `x^d = p ε`; absent for the base layer.
    eps_inv: Option<Vec<CoeffElement>>,
}

/// The layer `O_m` with T-exponent denominator `p^{t_level}`.
#[derive(Clone, Debug)]
pub struct CyclotomicRing {
    data: Arc<RingData>,
}

impl PartialEq for CyclotomicRing {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = (&self.data, &other.data);
        a.ctx.prime == b.ctx.prime && a.m == b.m && a.t_level == b.t_level
    }
}

impl Eq for CyclotomicRing {}

impl CyclotomicRing {
    pub fn new(ctx: Ctx, m: u32, t_level: u32) -> Result<Self> {
        let modulus = cyclotomic_modulus(ctx.p(), m)?;
        let d = modulus.len() - 1;
        let low: Vec<PadicScalar> = modulus[..d].iter().map(|c| PadicScalar::from_i128(ctx.p(), ctx.m(), *c, ctx.m())).collect();
        let mut ring = Self { data: Arc::new(RingData { ctx, m, t_level, modulus, low, eps_inv: None }) };
        if m > 0 {
            let CycloElement { coeffs, .. } = ring.epsilon_inverse()?;
            Arc::get_mut(&mut ring.data).expect("fresh ring").eps_inv = Some(coeffs);
        }
        Ok(ring)
    }

    pub fn ctx(&self) -> Ctx {
        self.data.ctx
    }

    pub fn m(&self) -> u32 {
        self.data.m
    }

    pub fn t_level(&self) -> u32 {
        self.data.t_level
    }

    /// `[K_m : Q_p] = p^{m−1}(p − 1)`.
    pub fn degree(&self) -> usize {
        self.data.modulus.len() - 1
    }

    /// The monic modulus `Φ_{p^m}(1+x)`, lowest degree first.
    pub fn modulus(&self) -> &[i128] {
        &self.data.modulus
    }

    pub fn element(&self, coeffs: Vec<CoeffElement>) -> Result<CycloElement> {
        if coeffs.len() > self.degree() {
            return Err(Error::Incompatible(format!("{} coefficients for degree {}", coeffs.len(), self.degree())));
        }
        let mut out = self.zero();
        for (i, c) in coeffs.into_iter().enumerate() {
            if c.level() > self.t_level() {
                return Err(Error::Incompatible(format!("T-level {} above the ring's {}", c.level(), self.t_level())));
            }
            out.coeffs[i] = c.at_level(self.t_level());
        }
        Ok(out)
    }

    pub fn from_ints(&self, coeffs: &[i64]) -> Result<CycloElement> {
        self.element(coeffs.iter().map(|c| CoeffElement::from_int(self.ctx(), *c)).collect())
    }

    pub fn zero(&self) -> CycloElement {
        let z = CoeffElement::zero(self.ctx()).at_level(self.t_level());
        CycloElement { ring: self.clone(), coeffs: vec![z; self.degree()] }
    }

    pub fn constant(&self, c: CoeffElement) -> Result<CycloElement> {
        self.element(vec![c])
    }

    pub fn one(&self) -> CycloElement {
        self.from_ints(&[1]).expect("degree ≥ 1")
    }

    /// `x = ζ_{p^m} − 1`; zero in the base layer.
    pub fn uniformizer(&self) -> CycloElement {
        self.one().mul_x()
    }

    /// `ζ_{p^m} = 1 + x`.
    pub fn zeta(&self) -> CycloElement {
        self.one().add(&self.uniformizer())
    }

    /// `ε = x^d / p = −(1 + Σ_{i≥1} (c_i/p) x^i)`, inverted by its
    /// x-adic geometric series (`x^{dM} ≡ 0`).
    fn epsilon_inverse(&self) -> Result<CycloElement> {
        let ctx = self.ctx();
        let d = self.degree();
        let mut g = self.zero();
        for i in 1..d {
            let c = self.data.modulus[i];
            if c % ctx.p() as i128 != 0 {
                return Err(Error::NotEisenstein(format!("coefficient {c} of x^{i} not divisible by p")));
            }
            g.coeffs[i] = CoeffElement::constant(ctx, PadicScalar::from_i128(ctx.p(), ctx.m(), c / ctx.p() as i128, ctx.m()))
                .at_level(self.t_level());
        }
        // ε = −(1 + h) with h = Σ_{i≥1} (c_i/p) x^i; 1/(1+h) = Σ (−h)^k.
        let neg_h = g.neg();
        let mut sum = self.one();
        let mut power = self.one();
        for _ in 0..(d as u32 * ctx.m() + d as u32) {
            power = power.mul(&neg_h)?;
            if power.is_zero_at_precision() {
                break;
            }
            sum = sum.add(&power);
        }
        Ok(sum.neg())
    }

    fn eps_inv(&self) -> Option<CycloElement> {
        self.data.eps_inv.as_ref().map(|c| CycloElement { ring: self.clone(), coeffs: c.clone() })
    }

    /// `x^{-k}` scaled by `c`: with `k = qd − r`, `c x^{-k} = (c/p^q) x^r ε^{-q}`.
    fn negative_power(&self, k: u64, c: &CoeffElement) -> Result<CycloElement> {
        let eps_inv = self.eps_inv().ok_or_else(|| Error::EvaluationDiverges("negative power of 0 in the base layer".into()))?;
        let d = self.degree() as u64;
        let q = k.div_ceil(d);
        let r = q * d - k;
        let cq =
            c.divide_exact(q as u32).map_err(|_| Error::EvaluationDiverges(format!("coefficient of π^-{k} has valuation below {q}")))?;
        let mut out = self.constant(cq)?;
        for _ in 0..r {
            out = out.mul_x();
        }
        out.mul(&eps_inv.pow(q)?)
    }
}

/// `Σ_{s<d} a_s x^s` in a layer ring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycloElement {
    ring: CyclotomicRing,
    coeffs: Vec<CoeffElement>,
}

impl CycloElement {
    pub fn ring(&self) -> &CyclotomicRing {
        &self.ring
    }

    pub fn coeffs(&self) -> &[CoeffElement] {
        &self.coeffs
    }

    fn same_ring(&self, other: &Self) {
        assert!(self.ring == other.ring, "elements of different layer rings");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.same_ring(other);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.add(b)).collect();
        Self { ring: self.ring.clone(), coeffs }
    }

    pub fn neg(&self) -> Self {
        Self { ring: self.ring.clone(), coeffs: self.coeffs.iter().map(|c| c.neg()).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &CoeffElement) -> Result<Self> {
        let coeffs = self.coeffs.iter().map(|a| a.mul(c)).collect::<Result<Vec<_>>>()?;
        Ok(Self { ring: self.ring.clone(), coeffs })
    }

    pub fn mul_int(&self, k: i64) -> Self {
        Self { ring: self.ring.clone(), coeffs: self.coeffs.iter().map(|c| c.mul_int(k)).collect() }
    }

    pub fn mul_p_power(&self, k: u32) -> Self {
        Self { ring: self.ring.clone(), coeffs: self.coeffs.iter().map(|c| c.mul_p_power(k)).collect() }
    }

    pub fn divide_exact(&self, k: u32) -> Result<Self> {
        let coeffs = self.coeffs.iter().map(|c| c.divide_exact(k)).collect::<Result<Vec<_>>>()?;
        Ok(Self { ring: self.ring.clone(), coeffs })
    }

    /// Fold the coefficients of `x^k`, `k ≥ d`, back using the modulus.
    fn reduce(ring: &CyclotomicRing, mut wide: Vec<CoeffElement>) -> Self {
        let d = ring.degree();
        for k in (d..wide.len()).rev() {
            let t = std::mem::replace(&mut wide[k], CoeffElement::zero(ring.ctx()).at_level(ring.t_level()));
            if t.is_exact_zero() {
                continue;
            }
            for (i, c) in ring.data.low.iter().enumerate() {
                wide[k - d + i] = wide[k - d + i].sub(&t.scale(c));
            }
        }
        wide.truncate(d);
        Self { ring: ring.clone(), coeffs: wide }
    }

    fn mul_x(&self) -> Self {
        let mut wide = vec![CoeffElement::zero(self.ring.ctx()).at_level(self.ring.t_level())];
        wide.extend(self.coeffs.iter().cloned());
        Self::reduce(&self.ring, wide)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_ring(other);
        let d = self.ring.degree();
        let zero = CoeffElement::zero(self.ring.ctx()).at_level(self.ring.t_level());
        let mut wide = vec![zero; 2 * d - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_exact_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if b.is_exact_zero() {
                    continue;
                }
                wide[i + j] = wide[i + j].add(&a.mul(b)?);
            }
        }
        Ok(Self::reduce(&self.ring, wide))
    }

    pub fn pow(&self, mut k: u64) -> Result<Self> {
        let mut base = self.clone();
        let mut acc = self.ring.one();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(acc)
    }

    pub fn is_zero_at_precision(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero_at_precision())
    }

    pub fn min_precision(&self) -> u32 {
        self.coeffs.iter().map(|c| c.min_precision()).min().unwrap_or(self.ring.ctx().m())
    }

    pub fn agrees(&self, other: &Self) -> bool {
        self.ring == other.ring && self.coeffs.iter().zip(&other.coeffs).all(|(a, b)| a.agrees(b))
    }

    /// Valuation normalized by `v(p) = 1`: `min_s v(a_s) + s/d`, since the
    /// `x^s` have distinct valuations modulo `Z`. `None` if zero at precision.
    pub fn valuation(&self) -> Option<Rational> {
        let d = self.ring.degree() as i128;
        self.coeffs
            .iter()
            .enumerate()
            .filter_map(|(s, c)| match c.valuation() {
                Valuation::Finite(v) => Some(Rational::new(v as i128 * d + s as i128, d)),
                Valuation::Infinite => None,
            })
            .min()
    }

    /// Rewrite in the basis `y^t = (1+x)^t`.
    fn to_zeta_basis(&self) -> Vec<CoeffElement> {
        let d = self.ring.degree();
        let zero = CoeffElement::zero(self.ring.ctx()).at_level(self.ring.t_level());
        let mut out = vec![zero; d];
        // x^s = Σ_r C(s, r) (−1)^{s−r} y^r
        for (s, a) in self.coeffs.iter().enumerate() {
            if a.is_exact_zero() {
                continue;
            }
            for (r, b) in binomial_row(s).into_iter().enumerate() {
                let w = if (s - r) % 2 == 0 { b } else { -b };
                out[r] = out[r].add(&a.scale(&PadicScalar::from_i128(self.ring.ctx().p(), self.ring.ctx().m(), w, self.ring.ctx().m())));
            }
        }
        out
    }
}

impl fmt::Display for CycloElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (s, c) in self.coeffs.iter().enumerate() {
            if c.is_zero_at_precision() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})*x^{s}")?;
        }
        if first {
            write!(f, "O({}^{})", self.ring.ctx().p(), self.min_precision())?;
        }
        Ok(())
    }
}

/// `h^{(N)}_{i,j}`: `π ↦ ζ_{p^i} − 1`, `T ↦ T^{1/p^j}`, for series of level `N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvaluationMap {
    pub level: u32,
    pub i: u32,
    pub j: u32,
}

impl EvaluationMap {
    pub fn new(level: u32, i: u32, j: u32) -> Result<Self> {
        if level == 0 || i < j {
            return Err(Error::InvalidConfig(format!("evaluation map needs N ≥ 1 and i ≥ j (N = {level}, i = {i}, j = {j})")));
        }
        Ok(Self { level, i, j })
    }

    pub fn target(&self, ctx: Ctx) -> Result<CyclotomicRing> {
        CyclotomicRing::new(ctx, self.i, self.j)
    }
}

/// `h^{(N)}_{i,j}(x)`.
pub fn evaluate(x: &SeriesElement, map: &EvaluationMap) -> Result<CycloElement> {
    evaluate_in(x, &map.target(x.ctx())?, map.level)
}

/// Evaluate into a given layer ring; the ring's T-level is `j`.
pub fn evaluate_in(x: &SeriesElement, ring: &CyclotomicRing, level: u32) -> Result<CycloElement> {
    if x.level() != 0 {
        return Err(Error::Unsupported("evaluation of series with fractional T-exponents".into()));
    }
    if !satisfies(x, level, RamificationConfig::UNRAMIFIED, false) {
        return Err(Error::EvaluationDiverges(format!("series is not overconvergent at level {level}")));
    }
    let tmap = TMap::root(ring.t_level());
    let mut out = ring.zero();
    let mut power = ring.one();
    let mut at = 0i64;
    for (k, c) in x.coeffs() {
        let c = c.map_exps(tmap)?;
        if *k < 0 {
            out = out.add(&ring.negative_power(k.unsigned_abs(), &c)?);
            continue;
        }
        while at < *k {
            power = power.mul_x();
            at += 1;
        }
        out = out.add(&power.scale(&c)?);
    }
    if let Some((h, tv)) = x.tail() {
        // p^tv π^{h+1}(…) lands in p^{tv + ⌊(h+1)/d⌋} O.
        let d = ring.degree() as i64;
        let cap = tv as i64 + (h + 1).div_euclid(d).max(0);
        let cap = cap.clamp(0, ring.ctx().m() as i64) as u32;
        out.coeffs = out.coeffs.iter().map(|c| c.cap(cap)).collect();
    }
    Ok(out)
}

/// `Tr_{K_i/K_j}`, the trace of multiplication by `y`.
///
/// For `j ≥ 1` the basis is `(1+x_i)^r`, `r < p^{i−j}`, using
/// `(1+x_i)^{p^{i−j}} = 1 + x_j`; into the base layer it is the `Z_p`-basis
/// `x^s`, `s < p^{i−1}(p−1)`.
pub fn field_trace(y: &CycloElement, j: u32) -> Result<CycloElement> {
    let ring = y.ring();
    let i = ring.m();
    if j > i {
        return Err(Error::Incompatible(format!("trace from layer {i} to layer {j}")));
    }
    let target = CyclotomicRing::new(ring.ctx(), j, ring.t_level())?;
    if j == 0 {
        let mut acc = CoeffElement::zero(ring.ctx()).at_level(ring.t_level());
        let mut z = y.clone();
        for s in 0..ring.degree() {
            acc = acc.add(&z.coeffs[s]);
            z = z.mul_x();
        }
        return target.constant(acc);
    }
    let big_p = pow_u64(ring.ctx().p(), i - j) as usize;
    let d_j = target.degree();
    let zeta = ring.zeta();
    let zeta_j = target.zeta();
    let mut basis = ring.one();
    let mut out = target.zero();
    for r in 0..big_p {
        let z = y.mul(&basis)?.to_zeta_basis();
        // Coefficient of y^r: Σ_q z_{Pq + r} (1 + x_j)^q.
        let mut comp = target.zero();
        let mut zq = target.one();
        for q in 0..d_j {
            let c = &z[big_p * q + r];
            if !c.is_exact_zero() {
                comp = comp.add(&zq.scale(c)?);
            }
            zq = zq.mul(&zeta_j)?;
        }
        out = out.add(&comp);
        basis = basis.mul(&zeta)?;
    }
    Ok(out)
}

/// Trace from T-level `j + 1` down to `j`: `T^{a/p^{j+1}}` has trace
/// `p^{n−1} T^{(a/p)/p^j}` when p divides every numerator, else 0.
pub fn t_level_trace(y: &CycloElement) -> Result<CycloElement> {
    let ring = y.ring();
    let ctx = ring.ctx();
    let level = ring.t_level().checked_sub(1).ok_or_else(|| Error::Incompatible("T-level 0 has no lower level".into()))?;
    let target = CyclotomicRing::new(ctx, ring.m(), level)?;
    let p = ctx.p() as i64;
    let nv = ctx.nvars();
    let mut coeffs = Vec::with_capacity(y.coeffs.len());
    for c in &y.coeffs {
        let terms = c.terms().iter().filter(|(e, _)| e[..nv].iter().all(|a| a % p == 0)).map(|(e, s)| {
            let mut e2 = texp(&[]);
            for v in 0..nv {
                e2[v] = e[v] / p;
            }
            (e2, *s)
        });
        let base = CoeffElement::from_terms(ctx, level, terms)?.cap(c.precision());
        coeffs.push(base.mul_p_power(nv as u32));
    }
    target.element(coeffs)
}

/// `p^{i−m} Tr_{K_i/K_m}(O_i) ⊂ p^{i−m}… `: does `Tr(y)` lie in `p^{i−m} O_m`?
pub fn kato_bound_holds(y: &CycloElement, m: u32) -> Result<bool> {
    let i = y.ring().m();
    if m == 0 || m > i {
        return Err(Error::InvalidConfig(format!("integrality bound needs 1 ≤ m ≤ i (m = {m}, i = {i})")));
    }
    let t = field_trace(y, m)?;
    Ok(t.coeffs.iter().all(|c| c.is_zero_at_precision() || c.val_bound() >= i - m))
}

/// Which coefficient of the limit form `dual_exp` evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualExpReading {
    /// The coefficient `b` of `b · dlog T ∧ dlog(π_K + 1)`.
    Volume,
    /// `f` with `y = f · dlog T ∧ dπ_K`, i.e. `c/π_K` for the log-basis
    /// coefficient `c`.
    Pole,
}

impl DualExpReading {
    pub fn name(&self) -> &'static str {
        match self {
            DualExpReading::Volume => "volume",
            DualExpReading::Pole => "pole",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "volume" => Ok(DualExpReading::Volume),
            "pole" => Ok(DualExpReading::Pole),
            other => Err(Error::Parse(format!("unknown reading {other:?}"))),
        }
    }
}

/// `p^{-m} h · dlog T_1^{1/p^m} ∧ … ∧ dlog T_{n−1}^{1/p^m}` over layer `m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualExp {
    pub layer: u32,
    /// `h`, before division by `p^m`.
    pub numerator: CycloElement,
    /// The value is `numerator / p^{p_shift}`.
    pub p_shift: u32,
    /// Valuation of the value (may be negative); `None` for zero.
    pub valuation: Option<Rational>,
    pub reading: DualExpReading,
    pub iterations: usize,
}

/// `𝔡_m(x)`: the limit of `ψ^k dlog x`, evaluated at layer `m` and divided
/// by `p^m`.
pub fn dual_exp(fc: &FormContext, x: &SymbolProduct, m: u32, level: u32, reading: DualExpReading) -> Result<DualExp> {
    if fc.ramification().e != 1 {
        return Err(Error::Unsupported("evaluation needs the unramified tower".into()));
    }
    if m < level {
        return Err(Error::EvaluationDiverges(format!("layer {m} is below level {level}")));
    }
    let ledger = log_derivative(fc, x, default_max_iters(fc))?;
    let y = ledger.limit().ok_or_else(|| Error::Unsupported("logarithmic derivative did not converge".into()))?;
    let b = y.to_basis(FormBasis::Plus)?.coeff;
    let ring = EvaluationMap::new(level, m, m)?.target(fc.ctx())?;
    let mut h = evaluate_in(&b, &ring, level)?;
    if reading == DualExpReading::Pole {
        // 1/(1+u) ↦ ζ^{-1} = ζ^{p^m − 1}.
        let zeta_inv = ring.zeta().pow(pow_u64(fc.ctx().p(), m) - 1)?;
        h = h.mul(&zeta_inv)?;
    }
    let valuation = h.valuation().map(|v| Rational::new(v.num - m as i128 * v.den, v.den));
    Ok(DualExp { layer: m, numerator: h, p_shift: m, valuation, reading, iterations: ledger.steps() })
}

/// `p · h_m(ψ(f)) = Tr_{K_{m+1}/K_m}(h_{m+1}(f))` for plus-part `f`, with
/// the classical ψ on the π-variable.
pub fn diagram_check_trace_compat(f: &SeriesElement, m: u32) -> Result<bool> {
    if f.min_exponent().is_some_and(|k| k < 0) {
        return Err(Error::NotPlusPart("diagram check takes plus-part series".into()));
    }
    let ctx = f.ctx();
    let psi = Frobenius::unramified(ctx, TMode::Standard).psi_classical(f)?;
    let lhs = evaluate(&psi, &EvaluationMap::new(1, m, 0)?)?.mul_int(ctx.p() as i64);
    let rhs = field_trace(&evaluate(f, &EvaluationMap::new(1, m + 1, 0)?)?, m)?;
    Ok(lhs.agrees(&rhs))
}

/// `h_{m,j}(Tr_τ x) = Tr_T(h_{m,j+1}(x))`: the τ-trace against the trace
/// from `T^{1/p^{j+1}}` down to `T^{1/p^j}`.
pub fn diagram_check_tau_compat(x: &SeriesElement, m: u32, j: u32) -> Result<bool> {
    let ctx = x.ctx();
    let tr = Frobenius::unramified(ctx, TMode::Standard).trace_tau(x)?;
    let lhs = evaluate(&tr, &EvaluationMap::new(1, m, j)?)?;
    let rhs = t_level_trace(&evaluate(x, &EvaluationMap::new(1, m, j + 1)?)?)?;
    Ok(lhs.agrees(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kforms::{int_entry, t_entry, MilnorSymbol};
    use crate::laurent::Var;
    use proptest::prelude::*;

    fn ctx() -> Ctx {
        Ctx::desk()
    }

    fn s(terms: &[(i64, i64)]) -> SeriesElement {
        SeriesElement::from_ints(ctx(), Var::Pi, terms)
    }

    fn ring(m: u32) -> CyclotomicRing {
        CyclotomicRing::new(ctx(), m, 0).unwrap()
    }

    #[test]
    fn moduli() {
        assert_eq!(cyclotomic_modulus(3, 1).unwrap(), vec![3, 3, 1]);
        assert_eq!(cyclotomic_modulus(3, 2).unwrap(), vec![3, 9, 18, 21, 15, 6, 1]);
        for (p, m) in [(3, 1), (3, 2), (3, 3), (3, 4), (5, 1), (5, 2), (7, 2)] {
            let c = cyclotomic_modulus(p, m).unwrap();
            assert_eq!(c[0], p as i128);
            assert_eq!(c.len() as u64 - 1, pow_u64(p, m - 1) * (p - 1));
            // Φ_{p^m}(y) at y = 2, directly: (2^{p^m} − 1)/(2^{p^{m−1}} − 1).
            let at_one: i128 = c.iter().sum();
            let big = |e: u64| (0..e).fold(1i128, |a, _| a * 2);
            if pow_u64(p, m) < 100 {
                assert_eq!(at_one, (big(pow_u64(p, m)) - 1) / (big(pow_u64(p, m - 1)) - 1));
            }
        }
        assert!(cyclotomic_modulus(3, 6).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let r1 = ring(1);
        assert!(evaluate_in(&s(&[(0, 3), (1, 3), (2, 1)]), &r1, 1).unwrap().is_zero_at_precision());
        assert_eq!(evaluate_in(&s(&[(0, 1)]), &r1, 1).unwrap(), r1.one());
        let t = SeriesElement::t_var(ctx(), Var::Pi, 0, 1);
        let h = evaluate(&t, &EvaluationMap::new(1, 1, 1).unwrap()).unwrap();
        let mut e = texp(&[]);
        e[0] = 1;
        assert_eq!(h.coeffs()[0], CoeffElement::monomial(ctx(), 1, e, ctx().scalar(1)));
        assert_eq!(h.ring().t_level(), 1);
    }

    #[test]
    fn negative_powers() {
        let r1 = ring(1);
        // x^2 · h(3π^{-2}) = 3.
        let h = evaluate_in(&s(&[(-2, 3)]), &r1, 1).unwrap();
        assert_eq!(h.mul(&r1.uniformizer().pow(2).unwrap()).unwrap(), r1.from_ints(&[3]).unwrap());
        // 3π^{-3} needs v ≥ 3/2 at layer 1 but only 3/6 at layer 2.
        assert!(matches!(evaluate_in(&s(&[(-3, 3)]), &r1, 2), Err(Error::EvaluationDiverges(_))));
        let r2 = ring(2);
        let h = evaluate_in(&s(&[(-3, 3)]), &r2, 2).unwrap();
        assert_eq!(h.mul(&r2.uniformizer().pow(3).unwrap()).unwrap(), r2.from_ints(&[3]).unwrap());
        assert_eq!(h.valuation(), Some(Rational::new(1, 2)));
        // Level check: 3π^{-3} is not of level 1.
        assert!(matches!(evaluate_in(&s(&[(-3, 3)]), &r2, 1), Err(Error::EvaluationDiverges(_))));
        assert!(evaluate_in(&s(&[(-1, 1)]), &ring(0), 1).is_err());
    }

    #[test]
    fn trace_examples() {
        // Tr(ζ_3) = −1.
        let t = field_trace(&ring(1).zeta(), 0).unwrap();
        assert_eq!(t, ring(0).from_ints(&[-1]).unwrap());
        // [K_i : K_j] = p^{i−j} for j ≥ 1, p^{i−1}(p−1) for j = 0.
        for (i, j, deg) in [(1, 0, 2), (2, 0, 6), (2, 1, 3), (3, 1, 9), (3, 2, 3)] {
            let t = field_trace(&ring(i).one(), j).unwrap();
            assert_eq!(t, ring(j).from_ints(&[deg]).unwrap());
        }
        // Conjugate sum of x_2 = ζ_9 − 1 over ζ_3 ∈ {1, ζ_9^3, ζ_9^6}: −3.
        let r2 = ring(2);
        let z = r2.zeta();
        let conj: CycloElement = (0..3).map(|k| z.mul(&z.pow(3 * k).unwrap()).unwrap().sub(&r2.one())).fold(r2.zero(), |a, b| a.add(&b));
        assert_eq!(conj, r2.from_ints(&[-3]).unwrap());
        assert_eq!(field_trace(&r2.uniformizer(), 1).unwrap(), ring(1).from_ints(&[-3]).unwrap());
    }

    #[test]
    fn diagram_examples() {
        for m in [1, 2] {
            assert!(diagram_check_trace_compat(&s(&[(0, 1)]), m).unwrap());
            assert!(diagram_check_trace_compat(&s(&[(1, 1)]), m).unwrap());
            assert!(diagram_check_trace_compat(&s(&[(0, 1), (1, 1)]), m).unwrap());
            assert!(diagram_check_trace_compat(&s(&[(0, 1), (1, 2), (2, 1)]), m).unwrap());
        }
        // ψ(π) = −1, so both sides are −3.
        let psi = Frobenius::unramified(ctx(), TMode::Standard).psi_classical(&s(&[(1, 1)])).unwrap();
        assert_eq!(psi, s(&[(0, -1)]));
        assert!(diagram_check_trace_compat(&s(&[(-1, 1)]), 1).is_err());
        // A wrong ψ fails the check.
        let lhs = evaluate_in(&s(&[(0, 1)]), &ring(1), 1).unwrap().mul_int(3);
        let rhs = field_trace(&evaluate_in(&s(&[(1, 1)]), &ring(2), 1).unwrap(), 1).unwrap();
        assert!(!lhs.agrees(&rhs));
    }

    #[test]
    fn tau_examples() {
        let t = |a: i64| SeriesElement::t_var(ctx(), Var::Pi, 0, a);
        for a in [0, 1, 2, 3, -3, 6] {
            let x = t(a).mul(&s(&[(0, 1), (2, 5)])).unwrap();
            assert!(diagram_check_tau_compat(&x, 2, 0).unwrap(), "T^{a}");
            assert!(diagram_check_tau_compat(&x, 2, 1).unwrap(), "T^{a}");
        }
    }

    #[test]
    fn dual_exp_examples() {
        let fc = FormContext::unramified(ctx()).unwrap();
        let vol = SymbolProduct::single(
            MilnorSymbol::new(ctx(), Var::Pi, vec![t_entry(ctx(), Var::Pi, 0), int_entry(ctx(), Var::Pi, &[(0, 1), (1, 1)])]).unwrap(),
        );
        for m in [1, 2] {
            let d = dual_exp(&fc, &vol, m, 1, DualExpReading::Volume).unwrap();
            assert_eq!(d.numerator, ring(m).one().to_level(m));
            assert_eq!(d.valuation, Some(Rational::new(-(m as i128), 1)));
            let d = dual_exp(&fc, &vol, m, 1, DualExpReading::Pole).unwrap();
            assert_eq!(d.numerator.mul(&CyclotomicRing::new(ctx(), m, m).unwrap().zeta()).unwrap(), ring(m).one().to_level(m));
        }
        let d = dual_exp(&fc, &SymbolProduct::trivial(ctx(), Var::Pi), 1, 1, DualExpReading::Volume).unwrap();
        assert_eq!(d.valuation, None);
        assert!(dual_exp(&fc, &vol, 1, 2, DualExpReading::Volume).is_err());
        // Plus-part first entry: the limit vanishes.
        let x = SymbolProduct::single(
            MilnorSymbol::new(ctx(), Var::Pi, vec![int_entry(ctx(), Var::Pi, &[(0, 1), (1, 3)]), t_entry(ctx(), Var::Pi, 0)]).unwrap(),
        );
        assert!(dual_exp(&fc, &x, 1, 1, DualExpReading::Volume).unwrap().numerator.is_zero_at_precision());
    }

    impl CycloElement {
        fn to_level(&self, l: u32) -> Self {
            let r = CyclotomicRing::new(self.ring.ctx(), self.ring.m(), l).unwrap();
            r.element(self.coeffs.clone()).unwrap()
        }
    }

    fn arb_elem(m: u32) -> impl Strategy<Value = CycloElement> {
        let d = ring(m).degree();
        prop::collection::vec(-400i64..400, d).prop_map(move |c| ring(m).from_ints(&c).unwrap())
    }

    fn arb_plus() -> impl Strategy<Value = SeriesElement> {
        prop::collection::vec(-50i64..50, 1..8).prop_map(|c| {
            let terms: Vec<(i64, i64)> = c.iter().enumerate().map(|(i, c)| (i as i64, *c)).collect();
            s(&terms)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn evaluation_is_multiplicative(a in arb_plus(), b in arb_plus(), m in 1u32..3) {
            let r = ring(m);
            let ab = evaluate_in(&a.mul(&b).unwrap(), &r, 1).unwrap();
            let prod = evaluate_in(&a, &r, 1).unwrap().mul(&evaluate_in(&b, &r, 1).unwrap()).unwrap();
            prop_assert!(ab.agrees(&prod));
            let sum = evaluate_in(&a.add(&b).unwrap(), &r, 1).unwrap();
            prop_assert!(sum.agrees(&evaluate_in(&a, &r, 1).unwrap().add(&evaluate_in(&b, &r, 1).unwrap())));
        }

        #[test]
        fn trace_is_transitive(y in arb_elem(2)) {
            let direct = field_trace(&y, 0).unwrap();
            let stepwise = field_trace(&field_trace(&y, 1).unwrap(), 0).unwrap();
            prop_assert!(direct.agrees(&stepwise));
        }

        #[test]
        fn trace_is_linear_over_the_base(y in arb_elem(2), c in arb_elem(1)) {
            // Tr(c · y) = c · Tr(y) for c in the lower layer, embedded via ζ_3 = ζ_9^3.
            let up: CycloElement = c.to_zeta_basis().iter().enumerate().fold(ring(2).zero(), |acc, (t, a)| {
                acc.add(&ring(2).zeta().pow(3 * t as u64).unwrap().scale(a).unwrap())
            });
            let lhs = field_trace(&up.mul(&y).unwrap(), 1).unwrap();
            let rhs = c.mul(&field_trace(&y, 1).unwrap()).unwrap();
            prop_assert!(lhs.agrees(&rhs));
        }

        #[test]
        fn kato_bound(y in arb_elem(2)) {
            prop_assert!(kato_bound_holds(&y, 1).unwrap());
        }

        #[test]
        fn trace_diagram_commutes(f in arb_plus(), m in 1u32..3) {
            prop_assert!(diagram_check_trace_compat(&f, m).unwrap());
        }
    }
}
