//! Seeded randomized property suite. Every family draws from its own ChaCha
//! stream derived from the run seed, so families can run on separate threads
//! and the report is identical for identical `(config, seed, count)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Ctx, RunConfig};
use crate::cyclo::{
    cyclotomic_modulus, diagram_check_tau_compat, diagram_check_trace_compat, kato_bound_holds, CycloElement, CyclotomicRing,
};
use crate::eisenstein::{derivative_structure, expand_pi, frobenius_lift, lift_residual, EisensteinData};
use crate::error::Result;
use crate::frobenius::{Frobenius, TMode};
use crate::kforms::{check_steinberg, symbol_dlog_single, t_entry, Entry, FormContext, LogForm, LowerForm, MilnorSymbol, SymbolProduct};
use crate::laurent::{texp, SeriesElement, TExp, Var};
use crate::logderiv::{default_max_iters, log_derivative, overconvergence_of_limit};
use crate::overconvergence::{factor_p_power, invertibility_check, minimal_level, satisfies, RamificationConfig};
use crate::padic::Valuation;

const E1: RamificationConfig = RamificationConfig::UNRAMIFIED;

/// Random cases per family when the caller does not choose.
pub const DEFAULT_COUNT: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Trace,
    Overconvergence,
    Lift,
    Forms,
    LogDeriv,
    Cyclo,
}

impl Family {
    pub const ALL: [Family; 6] = [Family::Trace, Family::Overconvergence, Family::Lift, Family::Forms, Family::LogDeriv, Family::Cyclo];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Trace => "trace",
            Family::Overconvergence => "overconvergence",
            Family::Lift => "lift",
            Family::Forms => "forms",
            Family::LogDeriv => "logderiv",
            Family::Cyclo => "cyclo",
        }
    }

    /// The family's random stream for a run seed.
    pub fn rng(&self, seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(*self as u64 + 1);
        rng
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Case {
    pub id: String,
    pub ok: bool,
    pub detail: Option<String>,
}

impl Case {
    fn new(family: Family, label: impl std::fmt::Display, outcome: std::result::Result<(), String>) -> Self {
        let id = format!("{}/{label}", family.name());
        match outcome {
            Ok(()) => Self { id, ok: true, detail: None },
            Err(d) => Self { id, ok: false, detail: Some(d) },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuiteReport {
    pub seed: u64,
    pub count: usize,
    pub cases: Vec<Case>,
}

impl SuiteReport {
    pub fn passed(&self) -> usize {
        self.cases.iter().filter(|c| c.ok).count()
    }

    pub fn failed(&self) -> usize {
        self.cases.len() - self.passed()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Case> {
        self.cases.iter().filter(|c| !c.ok)
    }

    pub fn to_json(&self) -> Value {
        let mut families = serde_json::Map::new();
        for f in Family::ALL {
            let prefix = format!("{}/", f.name());
            let (ok, bad) =
                self.cases
                    .iter()
                    .filter(|c| c.id.starts_with(&prefix))
                    .fold((0, 0), |(o, b), c| if c.ok { (o + 1, b) } else { (o, b + 1) });
            families.insert(f.name().into(), json!({"passed": ok, "failed": bad}));
        }
        let cases: Vec<Value> = self.cases.iter().map(|c| json!({"id": c.id, "ok": c.ok, "detail": c.detail})).collect();
        json!({
            "passed": self.passed(),
            "failed": self.failed(),
            "seed": self.seed,
            "count": self.count,
            "families": families,
            "cases": cases,
        })
    }
}

/// Run every family with `count` random cases each.
pub fn run_suite(cfg: &RunConfig, count: usize) -> SuiteReport {
    let mut cases: Vec<Case> = std::thread::scope(|s| {
        let handles: Vec<_> = Family::ALL.iter().map(|f| s.spawn(move || run_family(*f, cfg, count))).collect();
        handles.into_iter().flat_map(|h| h.join().expect("suite family panicked")).collect()
    });
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    SuiteReport { seed: cfg.seed, count, cases }
}

pub fn run_family(family: Family, cfg: &RunConfig, count: usize) -> Vec<Case> {
    let ctx = cfg.ctx;
    let mut rng = family.rng(cfg.seed);
    let mut out = Vec::new();
    match family {
        Family::Trace => {
            let f = Frobenius::unramified(ctx, TMode::Standard);
            for i in 0..count {
                let (a, b) = (gen::series(&mut rng, ctx), gen::series(&mut rng, ctx));
                out.push(Case::new(family, format!("{i:04}"), check_trace(&f, &a, &b)));
            }
        }
        Family::Overconvergence => {
            for (name, terms) in FIXTURES {
                let x = SeriesElement::from_ints(ctx, Var::Pi, terms);
                out.push(Case::new(family, format!("fixture-{name}"), check_overconvergence_fixture(name, &x, cfg.level_cap)));
            }
            for i in 0..count {
                let x = gen::overconvergent(&mut rng, ctx);
                let c = rng.gen_range(1..40);
                out.push(Case::new(family, format!("{i:04}"), check_overconvergence(&x, c, cfg.level_cap)));
            }
        }
        Family::Lift => {
            let pure = EisensteinData::pure(ctx, 2);
            out.push(Case::new(
                family,
                "fixture-x2-minus-pi",
                pure.map_err(|e| e.to_string()).and_then(|f| check_lift(&f, cfg.level_cap, ctx.p() == 3)),
            ));
            if let Some(f) = &cfg.eisenstein {
                out.push(Case::new(family, "configured", check_lift(f, cfg.level_cap, false)));
            }
        }
        Family::Forms => {
            let fc = FormContext::unramified(ctx);
            out.push(Case::new(family, "fixture-psi-vol", fc.as_ref().map_err(|e| e.to_string()).and_then(check_psi_vol)));
            let Ok(fc) = fc else { return out };
            for i in 0..count {
                let (a, b) = (gen::admissible_unit(&mut rng, ctx), gen::admissible_unit(&mut rng, ctx));
                let lower: Vec<SeriesElement> = (0..ctx.n()).map(|_| gen::plus(&mut rng, ctx)).collect();
                out.push(Case::new(family, format!("{i:04}"), check_forms(&fc, &a, &b, lower)));
            }
        }
        Family::LogDeriv => match FormContext::unramified(ctx) {
            Ok(fc) => {
                for i in 0..count {
                    let x = gen::symbol(&mut rng, ctx);
                    out.push(Case::new(family, format!("{i:04}"), check_logderiv(&fc, &x, cfg.level_cap)));
                }
            }
            Err(e) => out.push(Case::new(family, "setup", Err(e.to_string()))),
        },
        Family::Cyclo => {
            // Layers m and m + 1 must both be constructible.
            let top = (1..=3).take_while(|&m| cyclotomic_modulus(ctx.p(), m).is_ok()).last().unwrap_or(0);
            let Ok(ring) = CyclotomicRing::new(ctx, top.min(2), 0) else {
                out.push(Case::new(family, "setup", Err(format!("no cyclotomic layers for p = {}", ctx.p()))));
                return out;
            };
            let layers: Vec<u32> = (1..top).take(2).collect();
            for i in 0..count {
                let f = gen::plus_pi(&mut rng, ctx);
                let m = if layers.is_empty() { None } else { Some(layers[rng.gen_range(0..layers.len())]) };
                let y = gen::cyclo_element(&mut rng, &ring);
                let a = rng.gen_range(-3..7);
                out.push(Case::new(family, format!("{i:04}"), check_cyclo(&f, m, &y, a)));
            }
        }
    }
    out
}

/// `(name, terms)` for the worked overconvergence fixtures.
const FIXTURES: [(&str, &[(i64, i64)]); 3] =
    [("one-plus-3pi-2", &[(0, 1), (-2, 3)]), ("pi-inverse", &[(-1, 1)]), ("9pi-3-plus-27pi", &[(-3, 9), (1, 27)])];

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn err<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

pub fn check_trace(f: &Frobenius, a: &SeriesElement, b: &SeriesElement) -> std::result::Result<(), String> {
    let ctx = f.ctx();
    let fa = err(f.apply(a))?;
    let lhs = err(f.trace(&err(fa.mul(b))?))?;
    let rhs = err(a.mul(&err(f.trace(b))?))?;
    ensure!(lhs.agrees(&rhs), "projection formula: {lhs} vs {rhs}");
    let pn = (ctx.p() as i64).pow(ctx.n() as u32);
    let t = err(f.trace(&fa))?;
    ensure!(t.agrees(&a.mul_int(pn)), "Tr(phi(a)) = {t}, expected {pn}·a");
    let d = err(f.decompose(a))?;
    ensure!(err(f.recompose(&d))?.agrees(a), "decomposition does not recompose");
    Ok(())
}

fn check_overconvergence_fixture(name: &str, x: &SeriesElement, cap: u32) -> std::result::Result<(), String> {
    let r = minimal_level(x, E1, cap);
    match name {
        "one-plus-3pi-2" => ensure!(r.minimal_level == Some(1), "minimal level {:?}", r.minimal_level),
        "pi-inverse" => ensure!(r.minimal_level.is_none(), "minimal level {:?}", r.minimal_level),
        _ => {
            let f = err(factor_p_power(x, 1, E1, cap))?;
            let unit = SeriesElement::from_ints(x.ctx(), Var::Pi, &[(0, 1), (4, 3)]);
            ensure!(f.k == 2 && f.l == 3 && f.unit.agrees(&unit), "factorization k={} l={} unit={}", f.k, f.l, f.unit);
        }
    }
    Ok(())
}

pub fn check_overconvergence(x: &SeriesElement, c: i64, cap: u32) -> std::result::Result<(), String> {
    let ctx = x.ctx();
    if let Some(n) = minimal_level(x, E1, cap).minimal_level {
        ensure!(satisfies(x, n, E1, false), "fails its own minimal level {n}");
        ensure!(n == 1 || !satisfies(x, n - 1, E1, false), "level {n} is not minimal");
        ensure!(satisfies(&x.formal_derivative(), n.max(2), E1, false), "derivative leaves level {}", n.max(2));
        let phi = err(Frobenius::unramified(ctx, TMode::Standard).apply(x))?;
        ensure!(satisfies(&phi, n + 1, E1, false), "Frobenius image misses level {}", n + 1);
    }
    if !x.is_zero_at_precision() {
        let f = err(factor_p_power(x, 1, E1, cap))?;
        let back = err(f.unit.mul_p_power(f.k).shift(-f.l))?;
        ensure!(back.agrees(x), "factor_p_power does not round-trip");
    }
    let p = ctx.p() as i64;
    let u = err(x.mul_int(p).add(&SeriesElement::from_int(ctx, Var::Pi, p * c + 1)))?;
    let one = SeriesElement::one(ctx, Var::Pi);
    for n in 1..4 {
        if invertibility_check(&u, n, E1) {
            let v = err(u.formal_inverse())?;
            ensure!(err(u.mul(&v))?.agrees(&one), "inverse at level {n} does not invert");
            ensure!(satisfies(&v, n + 1, E1, false), "inverse misses level {}", n + 1);
        }
    }
    Ok(())
}

/// The Eisenstein fixture checks; `pinned` adds the `X² − π`, `p = 3` structure.
pub fn check_lift(f: &EisensteinData, cap: u32, pinned: bool) -> std::result::Result<(), String> {
    let ctx = f.ctx();
    let exp = err(expand_pi(f))?;
    let lift = err(frobenius_lift(&exp))?;
    ensure!(err(lift_residual(&exp, &lift))?.is_zero_at_precision(), "Newton residual is not zero");
    let frob_mod_p = err(lift.image.sub(&SeriesElement::monomial(Var::PiK, ctx.p() as i64, crate::laurent::CoeffElement::one(ctx))))?;
    ensure!(frob_mod_p.coeffs().values().all(|c| c.val_bound() >= 1), "phi(pi_K) is not pi_K^p mod p");
    if pinned {
        let ds = err(derivative_structure(f, &lift, 1, cap))?;
        ensure!(
            ds.k == 1 && ds.i == -2 && !ds.p_divides_i && ds.unit_invertible,
            "derivative structure k={} I={} p|I={} invertible={}",
            ds.k,
            ds.i,
            ds.p_divides_i,
            ds.unit_invertible
        );
    }
    Ok(())
}

fn check_psi_vol(fc: &FormContext) -> std::result::Result<(), String> {
    let ctx = fc.ctx();
    let vol = fc.vol();
    let y = err(fc.psi_form(&vol))?;
    let m = ctx.m() - (ctx.n() as u32).min(ctx.m());
    ensure!(y.coeff.min_precision() >= m, "precision {} below M - n", y.coeff.min_precision());
    ensure!(y.coeff.cap_precision(m).agrees(&vol.coeff.cap_precision(m)), "psi(vol) = {}", y.coeff);
    Ok(())
}

fn padded(ctx: Ctx, mut entries: Vec<Entry>) -> Vec<Entry> {
    for v in 1..ctx.nvars() {
        entries.push(t_entry(ctx, Var::Pi, v));
    }
    entries
}

pub fn check_forms(fc: &FormContext, a: &SeriesElement, b: &SeriesElement, lower: Vec<SeriesElement>) -> std::result::Result<(), String> {
    let ctx = fc.ctx();
    let one = SeriesElement::one(ctx, Var::Pi);
    let st = err(MilnorSymbol::new(ctx, Var::Pi, padded(ctx, vec![Entry::Series(a.clone()), Entry::Series(err(one.sub(a))?)])))?;
    ensure!(check_steinberg(&st), "Steinberg relation rejected for {a}");
    ensure!(err(symbol_dlog_single(&st))?.is_zero_at_precision(), "dlog of a Steinberg symbol is not zero");
    let s = err(MilnorSymbol::new(ctx, Var::Pi, padded(ctx, vec![Entry::Series(a.clone()), Entry::Series(b.clone())])))?;
    let sum: LogForm = err(err(symbol_dlog_single(&s))?.add(&err(symbol_dlog_single(&s.swapped(0, 1)))?))?;
    ensure!(sum.is_zero_at_precision(), "dlog is not antisymmetric: {}", sum.coeff);
    let x = err(LowerForm::new(ctx, lower))?;
    let y = err(fc.trace_lower(&x))?;
    match x.gauss_valuation() {
        Valuation::Finite(v) => ensure!(y.gauss_valuation().at_least(v + 1), "trace valuation {} after {v}", y.gauss_valuation()),
        Valuation::Infinite => ensure!(y.gauss_valuation().is_infinite(), "trace of zero is nonzero"),
    }
    Ok(())
}

pub fn check_logderiv(fc: &FormContext, x: &SymbolProduct, cap: u32) -> std::result::Result<(), String> {
    let budget = default_max_iters(fc);
    let l = err(log_derivative(fc, x, budget))?;
    ensure!(l.converged(), "no convergence: {:?}", l.verdict);
    ensure!(l.steps() <= budget, "{} steps over budget {budget}", l.steps());
    for it in &l.iterates {
        ensure!(it.diff_valuation.at_least(it.k as u32), "step {} difference valuation {}", it.k, it.diff_valuation);
    }
    ensure!(l.psi_fixed, "limit is not psi-fixed");
    let r = err(overconvergence_of_limit(&l, cap))?;
    ensure!(r.minimal_level.is_some(), "limit is not overconvergent below level {cap}");
    Ok(())
}

pub fn check_cyclo(f: &SeriesElement, m: Option<u32>, y: &CycloElement, a: i64) -> std::result::Result<(), String> {
    if let Some(m) = m {
        ensure!(err(diagram_check_trace_compat(f, m))?, "trace diagram fails at m = {m} for {f}");
        let x = err(SeriesElement::t_var(f.ctx(), Var::Pi, 0, a).mul(f))?;
        ensure!(err(diagram_check_tau_compat(&x, m + 1, 0))?, "tau diagram fails for T^{a}·f");
    }
    for j in 1..=y.ring().m() {
        ensure!(err(kato_bound_holds(y, j))?, "Kato bound fails down to layer {j}");
    }
    Ok(())
}

/// Random inputs shared by the suite and the acceptance tests.
pub mod gen {
    use super::*;

    fn t_exps(rng: &mut ChaCha8Rng, ctx: Ctx, lo: i64, hi: i64) -> TExp {
        let v: Vec<i64> = (0..ctx.nvars()).map(|_| rng.gen_range(lo..hi)).collect();
        texp(&v)
    }

    fn build(ctx: Ctx, terms: Vec<(i64, TExp, i64)>) -> SeriesElement {
        SeriesElement::from_terms(ctx, Var::Pi, 0, terms.into_iter().map(|(i, e, c)| (i, e, ctx.scalar(c))))
            .expect("generated exponents lie in the window")
    }

    /// Mixed-sign series with p-divisible negative part.
    pub fn series(rng: &mut ChaCha8Rng, ctx: Ctx) -> SeriesElement {
        let p = ctx.p() as i64;
        let len = rng.gen_range(0..6);
        let terms = (0..len)
            .map(|_| {
                let i = rng.gen_range(-6..8);
                let c = rng.gen_range(-40..40);
                (i, t_exps(rng, ctx, -2, 4), if i < 0 { c * p } else { c })
            })
            .collect();
        build(ctx, terms)
    }

    /// Series at level 1: `π^{-i}` coefficients divisible by `p^{⌈i/(p−1)⌉}`.
    pub fn overconvergent(rng: &mut ChaCha8Rng, ctx: Ctx) -> SeriesElement {
        let p = ctx.p() as i64;
        let len = rng.gen_range(1..8);
        let terms = (0..len)
            .map(|_| {
                let i = rng.gen_range(-12..8);
                let c = rng.gen_range(-40..40);
                let k = if i < 0 { (-i + p - 2) / (p - 1) } else { 0 };
                (i, t_exps(rng, ctx, 0, 2), c * p.pow(k as u32))
            })
            .collect();
        build(ctx, terms)
    }

    /// Plus-part series with Laurent T-coefficients.
    pub fn plus(rng: &mut ChaCha8Rng, ctx: Ctx) -> SeriesElement {
        let len = rng.gen_range(0..6);
        let terms = (0..len).map(|_| (rng.gen_range(0..5), t_exps(rng, ctx, -2, 3), rng.gen_range(-40..40))).collect();
        build(ctx, terms)
    }

    /// Plus-part polynomial in π alone.
    pub fn plus_pi(rng: &mut ChaCha8Rng, ctx: Ctx) -> SeriesElement {
        let len = rng.gen_range(1..8);
        let terms: Vec<(i64, i64)> = (0..len).map(|i| (i, rng.gen_range(-50..50))).collect();
        SeriesElement::from_ints(ctx, Var::Pi, &terms)
    }

    /// Units `a` with `1 − a` also a unit.
    pub fn admissible_unit(rng: &mut ChaCha8Rng, ctx: Ctx) -> SeriesElement {
        let p = ctx.p() as i64;
        let mut terms = vec![(0, texp(&[]), p * rng.gen_range(-10..10) + 2)];
        for _ in 0..rng.gen_range(0..3) {
            terms.push((rng.gen_range(1..4), t_exps(rng, ctx, -1, 2), rng.gen_range(-9..9)));
        }
        for _ in 0..rng.gen_range(0..2) {
            terms.push((rng.gen_range(-2..0), t_exps(rng, ctx, 0, 2), p * rng.gen_range(-9..9)));
        }
        build(ctx, terms)
    }

    /// T-free units at level 1 whose constant term is a unit.
    pub fn t_free_unit(rng: &mut ChaCha8Rng, ctx: Ctx) -> SeriesElement {
        let p = ctx.p() as i64;
        let mut terms = vec![(0, rng.gen_range(1..p))];
        terms.extend((1..4).map(|i| (i, rng.gen_range(-4..5))));
        let e = rng.gen_range(-3..0i64);
        let k = (-e + p - 2) / (p - 1);
        terms.push((e, rng.gen_range(0..3) * p.pow(k as u32)));
        SeriesElement::from_ints(ctx, Var::Pi, &terms)
    }

    /// Products of `{a, T_1, …}`-type symbols with overconvergent unit entries,
    /// sometimes times `{T_1, …, π_K}`.
    pub fn symbol(rng: &mut ChaCha8Rng, ctx: Ctx) -> SymbolProduct {
        let ts: Vec<Entry> = (0..ctx.nvars()).map(|v| t_entry(ctx, Var::Pi, v)).collect();
        let mut factors = Vec::new();
        for _ in 0..rng.gen_range(1..3) {
            let mut entries = ts.clone();
            let at = rng.gen_range(0..=entries.len());
            entries.insert(at, Entry::Series(t_free_unit(rng, ctx)));
            let exp = [-1, 1, 2][rng.gen_range(0..3)];
            factors.push((MilnorSymbol::new(ctx, Var::Pi, entries).expect("n entries"), exp));
        }
        if rng.gen_bool(0.25) {
            let mut entries = ts;
            entries.push(Entry::PiK);
            factors.push((MilnorSymbol::new(ctx, Var::Pi, entries).expect("n entries"), 1));
        }
        SymbolProduct::new(ctx, Var::Pi, factors).expect("one variable throughout")
    }

    /// Integral element of a cyclotomic layer with coefficients in `[-400, 400)`.
    pub fn cyclo_element(rng: &mut ChaCha8Rng, ring: &CyclotomicRing) -> CycloElement {
        let c: Vec<i64> = (0..ring.degree()).map(|_| rng.gen_range(-400..400)).collect();
        ring.from_ints(&c).expect("degree-many coefficients")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_have_distinct_streams() {
        let a: u64 = Family::Trace.rng(5).gen();
        let b: u64 = Family::Forms.rng(5).gen();
        assert_ne!(a, b);
        assert_eq!(a, Family::Trace.rng(5).gen::<u64>());
    }

    #[test]
    fn small_suite_is_green_and_sorted() {
        let cfg = RunConfig { seed: 11, ..RunConfig::default() };
        let r = run_suite(&cfg, 3);
        let bad: Vec<_> = r.failures().collect();
        assert!(bad.is_empty(), "{bad:?}");
        assert!(r.cases.windows(2).all(|w| w[0].id < w[1].id));
        assert_eq!(r.to_json()["failed"], 0);
    }

    #[test]
    fn failures_are_reported() {
        let ctx = Ctx::desk();
        let f = Frobenius::unramified(ctx, TMode::Trivial);
        let a = SeriesElement::from_ints(ctx, Var::Pi, &[(0, 1)]);
        // In trivial mode the rank is p, not p^n.
        assert!(check_trace(&f, &a, &a).is_err());
    }
}
