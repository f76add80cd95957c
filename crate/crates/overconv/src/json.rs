//! JSON encoding of inputs and reports. Objects use serde_json's sorted map,
//! so output is key-ordered and byte-stable.
//!
//! Scalars are `{"value": signed residue, "prec": k}` (a bare integer is
//! read as exact). Series are
//! `{"var", "level", "terms": [{"pi_exp", "t_exps", "coeff"}], "caps", "tail"}`
//! where `caps` lists coefficients known only modulo `p^prec` and `tail`
//! is `null` or `{"above": h, "valuation": v}` for `p^v O(u^{h+1})`.
//! Infinite valuations are `null`.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::config::{Ctx, RunConfig, Window};
use crate::cyclo::{CycloElement, DualExp};
use crate::eisenstein::{DerivativeStructure, EisensteinData, FrobeniusLift, PiExpansion};
use crate::error::{Error, Result};
use crate::frobenius::PhiDecomposition;
use crate::kforms::{Entry, FormBasis, LogForm, MilnorSymbol, SymbolProduct};
use crate::laurent::{texp, CoeffElement, SeriesElement, TExp, Var};
use crate::logderiv::{ConvergenceLedger, Iterate, Verdict};
use crate::overconvergence::{OverconvergenceReport, PFactorization, Rational};
use crate::padic::{PadicScalar, PrimeConfig, Valuation};
use crate::MAX_N;

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| parse_err(format!("missing field {key:?}")))
}

fn as_i64(v: &Value, what: &str) -> Result<i64> {
    v.as_i64().ok_or_else(|| parse_err(format!("{what} must be an integer")))
}

fn as_u32(v: &Value, what: &str) -> Result<u32> {
    v.as_u64().and_then(|x| u32::try_from(x).ok()).ok_or_else(|| parse_err(format!("{what} must be a non-negative integer")))
}

fn as_array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| parse_err(format!("{what} must be an array")))
}

fn opt_u32(v: &Value, key: &str) -> Result<Option<u32>> {
    v.get(key).filter(|x| !x.is_null()).map(|x| as_u32(x, key)).transpose()
}

pub fn valuation(v: Valuation) -> Value {
    match v {
        Valuation::Finite(k) => json!(k),
        Valuation::Infinite => Value::Null,
    }
}

pub fn rational(r: &Rational) -> Value {
    json!({"num": r.num as i64, "den": r.den as i64})
}

pub fn scalar(s: &PadicScalar) -> Value {
    json!({"value": s.signed() as i64, "prec": s.precision()})
}

pub fn scalar_from(ctx: Ctx, v: &Value) -> Result<PadicScalar> {
    if let Some(x) = v.as_i64() {
        return Ok(ctx.scalar(x));
    }
    let value = as_i64(field(v, "value")?, "scalar value")?;
    let prec = opt_u32(v, "prec")?.unwrap_or(ctx.m()).min(ctx.m());
    Ok(ctx.scalar(value).truncate(prec))
}

fn t_exps(ctx: Ctx, e: &TExp) -> Value {
    json!(e[..ctx.nvars()].to_vec())
}

fn t_exps_from(ctx: Ctx, v: Option<&Value>) -> Result<TExp> {
    let Some(v) = v else {
        return Ok(texp(&[]));
    };
    let xs = as_array(v, "t_exps")?;
    if xs.len() > ctx.nvars() {
        return Err(parse_err(format!("{} T-exponents for {} variables", xs.len(), ctx.nvars())));
    }
    let vals = xs.iter().map(|x| as_i64(x, "T-exponent")).collect::<Result<Vec<_>>>()?;
    Ok(texp(&vals))
}

pub fn coeff(c: &CoeffElement) -> Value {
    let ctx = c.ctx();
    let terms: Vec<Value> = c.terms().iter().map(|(e, s)| json!({"t_exps": t_exps(ctx, e), "coeff": scalar(s)})).collect();
    json!({"level": c.level(), "prec": c.precision(), "terms": terms})
}

pub fn series(x: &SeriesElement) -> Value {
    let ctx = x.ctx();
    let mut terms = Vec::new();
    let mut caps = Vec::new();
    for (i, c) in x.coeffs() {
        for (e, s) in c.terms() {
            terms.push(json!({"pi_exp": i, "t_exps": t_exps(ctx, e), "coeff": scalar(s)}));
        }
        if c.precision() < ctx.m() {
            caps.push(json!({"pi_exp": i, "prec": c.precision()}));
        }
    }
    let tail = match x.tail() {
        Some((h, v)) => json!({"above": h, "valuation": v}),
        None => Value::Null,
    };
    json!({"var": x.variable().name(), "level": x.level(), "terms": terms, "caps": caps, "tail": tail})
}

pub fn series_from(ctx: Ctx, v: &Value) -> Result<SeriesElement> {
    let var = match v.get("var") {
        Some(s) => Var::parse(s.as_str().ok_or_else(|| parse_err("var must be a string"))?)?,
        None => Var::Pi,
    };
    let level = opt_u32(v, "level")?.unwrap_or(0);
    let mut grouped: BTreeMap<i64, Vec<(TExp, PadicScalar)>> = BTreeMap::new();
    for t in as_array(field(v, "terms")?, "terms")? {
        let i = as_i64(field(t, "pi_exp")?, "pi_exp")?;
        if i < ctx.window.pi_lo || i > ctx.window.pi_hi {
            return Err(Error::WindowOverflow(format!("pi-exponent {i} outside window")));
        }
        let e = t_exps_from(ctx, t.get("t_exps"))?;
        grouped.entry(i).or_default().push((e, scalar_from(ctx, field(t, "coeff")?)?));
    }
    let mut coeffs = BTreeMap::new();
    for (i, ts) in grouped {
        coeffs.insert(i, CoeffElement::from_terms(ctx, level, ts)?);
    }
    if let Some(caps) = v.get("caps").filter(|c| !c.is_null()) {
        for c in as_array(caps, "caps")? {
            let i = as_i64(field(c, "pi_exp")?, "pi_exp")?;
            let k = as_u32(field(c, "prec")?, "prec")?;
            let slot = coeffs.entry(i).or_insert_with(|| CoeffElement::zero(ctx).at_level(level));
            *slot = slot.cap(k);
        }
    }
    let tail = match v.get("tail").filter(|t| !t.is_null()) {
        Some(t) => Some((as_i64(field(t, "above")?, "tail.above")?, opt_u32(t, "valuation")?.unwrap_or(0))),
        None => None,
    };
    Ok(SeriesElement::from_coeffs(ctx, var, coeffs, tail))
}

pub fn form(f: &LogForm) -> Value {
    json!({"coeff": series(&f.coeff), "basis": f.basis.name()})
}

pub fn form_from(ctx: Ctx, v: &Value) -> Result<LogForm> {
    let basis = match v.get("basis") {
        Some(b) => FormBasis::parse(b.as_str().ok_or_else(|| parse_err("basis must be a string"))?)?,
        None => FormBasis::Plus,
    };
    Ok(LogForm::new(series_from(ctx, field(v, "coeff")?)?, basis))
}

fn entry(e: &Entry) -> Value {
    match e {
        Entry::Series(s) => series(s),
        Entry::PiK => json!("piK"),
        Entry::P => json!("p"),
    }
}

pub fn symbol(x: &SymbolProduct) -> Value {
    let factors: Vec<Value> =
        x.factors().iter().map(|(s, k)| json!({"entries": s.entries().iter().map(entry).collect::<Vec<_>>(), "exp": k})).collect();
    json!({"factors": factors})
}

pub fn symbol_from(ctx: Ctx, v: &Value) -> Result<SymbolProduct> {
    let mut parsed = Vec::new();
    let mut var = None;
    for f in as_array(field(v, "factors")?, "factors")? {
        let exp = as_i64(field(f, "exp")?, "exp")?;
        let mut entries = Vec::new();
        for e in as_array(field(f, "entries")?, "entries")? {
            let en = match e.as_str() {
                Some("piK") => Entry::PiK,
                Some("p") => Entry::P,
                Some(other) => return Err(parse_err(format!("unknown symbol entry {other:?}"))),
                None => {
                    let s = series_from(ctx, e)?;
                    var = Some(s.variable());
                    Entry::Series(s)
                }
            };
            entries.push(en);
        }
        parsed.push((entries, exp));
    }
    let var = var.unwrap_or(Var::Pi);
    let factors = parsed.into_iter().map(|(entries, exp)| Ok((MilnorSymbol::new(ctx, var, entries)?, exp))).collect::<Result<Vec<_>>>()?;
    SymbolProduct::new(ctx, var, factors)
}

pub fn eisenstein(f: &EisensteinData) -> Value {
    json!({"e": f.e, "coeffs": f.coeffs.iter().map(series).collect::<Vec<_>>()})
}

pub fn eisenstein_from(ctx: Ctx, v: &Value) -> Result<EisensteinData> {
    let e = as_u32(field(v, "e")?, "e")?;
    let coeffs = as_array(field(v, "coeffs")?, "coeffs")?.iter().map(|c| series_from(ctx, c)).collect::<Result<Vec<_>>>()?;
    EisensteinData::new(e, coeffs)
}

pub fn overconvergence_report(r: &OverconvergenceReport) -> Value {
    json!({
        "minimal_level": r.minimal_level,
        "binding_exponent": r.binding_exponent,
        "margin": r.margin.as_ref().map(rational),
        "cap": r.cap,
    })
}

pub fn p_factorization(f: &PFactorization) -> Value {
    json!({"k": f.k, "l": f.l, "unit": series(&f.unit), "level_increase": f.level_increase})
}

pub fn decomposition(d: &PhiDecomposition, ctx: Ctx) -> Value {
    let parts: Vec<Value> = d
        .basis
        .elements
        .iter()
        .zip(&d.components)
        .map(|(b, c)| json!({"basis": {"t_exps": t_exps(ctx, &b.t), "u": b.u}, "component": series(c)}))
        .collect();
    json!(parts)
}

pub fn expansion(e: &PiExpansion) -> Value {
    json!({"e": e.e, "pi": series(&e.series)})
}

pub fn frobenius_lift(l: &FrobeniusLift) -> Value {
    json!({"image": series(&l.image), "iterations": l.iterations})
}

pub fn derivative_structure(d: &DerivativeStructure) -> Value {
    json!({
        "k": d.k,
        "i": d.i,
        "unit": series(&d.unit),
        "level_increase": d.level_increase,
        "regime": d.regime.name(),
        "p_divides_i": d.p_divides_i,
        "unit_invertible": d.unit_invertible,
        "witness": d.witness,
    })
}

fn iterate(it: &Iterate) -> Value {
    let fraction = it.fraction.as_ref().map(|f| json!({"num": series(&f.num), "den": series(&f.den)}));
    json!({
        "k": it.k,
        "form": form(&it.form),
        "fraction": fraction,
        "diff_valuation": valuation(it.diff_valuation),
        "precision": it.precision,
    })
}

pub fn ledger(l: &ConvergenceLedger) -> Value {
    let (verdict, limit, reason) = match &l.verdict {
        Verdict::Converged(y) => ("converged", form(y), Value::Null),
        Verdict::Diverged(r) => ("diverged", Value::Null, json!(r)),
    };
    json!({
        "verdict": verdict,
        "limit": limit,
        "reason": reason,
        "route": l.route.name(),
        "psi_fixed": l.psi_fixed,
        "contraction_holds": l.contraction_holds(),
        "steps": l.steps(),
        "iterates": l.iterates.iter().map(iterate).collect::<Vec<_>>(),
    })
}

pub fn cyclo(x: &CycloElement) -> Value {
    json!({
        "layer": x.ring().m(),
        "t_level": x.ring().t_level(),
        "coeffs": x.coeffs().iter().map(coeff).collect::<Vec<_>>(),
        "valuation": x.valuation().as_ref().map(rational),
    })
}

pub fn dual_exp(d: &DualExp, ctx: Ctx) -> Value {
    let basis: Vec<String> = (1..=ctx.nvars()).map(|v| format!("dlog T{v}^(1/{}^{})", ctx.p(), d.layer)).collect();
    json!({
        "layer": d.layer,
        "numerator": cyclo(&d.numerator),
        "p_shift": d.p_shift,
        "valuation": d.valuation.as_ref().map(rational),
        "reading": d.reading.name(),
        "basis": basis.join(" ∧ "),
        "iterations": d.iterations,
    })
}

pub fn prime_config(c: &PrimeConfig) -> Value {
    json!({"p": c.p, "M": c.m, "n": c.n})
}

pub fn run_config(c: &RunConfig) -> Value {
    let w = c.ctx.window;
    json!({
        "prime": prime_config(&c.ctx.prime),
        "window": {"pi_lo": w.pi_lo, "pi_hi": w.pi_hi, "t_max": w.t_max},
        "strict_windows": c.ctx.strict,
        "e": c.e,
        "level_cap": c.level_cap,
        "seed": c.seed,
        "eisenstein": c.eisenstein.as_ref().map(eisenstein),
    })
}

/// Read a configuration; absent fields keep their defaults.
pub fn run_config_from(v: &Value) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if !v.is_object() {
        return Err(parse_err("configuration must be an object"));
    }
    let prime = v.get("prime").unwrap_or(v);
    let d = cfg.ctx.prime;
    let p = prime.get("p").map(|x| x.as_u64().ok_or_else(|| parse_err("p must be an integer"))).transpose()?.unwrap_or(d.p);
    let m = opt_u32(prime, "M")?.unwrap_or(d.m);
    let n = prime.get("n").map(|x| x.as_u64().ok_or_else(|| parse_err("n must be an integer"))).transpose()?.map_or(d.n, |x| x as usize);
    if n > MAX_N {
        return Err(Error::InvalidConfig(format!("n = {n} exceeds {MAX_N}")));
    }
    let mut window = Window::default();
    if let Some(w) = v.get("window") {
        if let Some(x) = w.get("pi_lo") {
            window.pi_lo = as_i64(x, "pi_lo")?;
        }
        if let Some(x) = w.get("pi_hi") {
            window.pi_hi = as_i64(x, "pi_hi")?;
        }
        if let Some(x) = w.get("t_max") {
            window.t_max = as_i64(x, "t_max")?;
        }
    }
    let strict = v
        .get("strict_windows")
        .map(|x| x.as_bool().ok_or_else(|| parse_err("strict_windows must be a boolean")))
        .transpose()?
        .unwrap_or(false);
    cfg.ctx = Ctx::new(PrimeConfig::new(p, m, n)?, window, strict)?;
    if let Some(e) = opt_u32(v, "e")? {
        cfg.e = e;
    }
    if let Some(c) = opt_u32(v, "level_cap")? {
        cfg.level_cap = c;
    }
    if let Some(s) = v.get("seed") {
        cfg.seed = s.as_u64().ok_or_else(|| parse_err("seed must be a non-negative integer"))?;
    }
    if let Some(f) = v.get("eisenstein").filter(|f| !f.is_null()) {
        let data = eisenstein_from(cfg.ctx, f)?;
        cfg.e = data.e;
        cfg.eisenstein = Some(data);
    }
    if cfg.e == 0 {
        return Err(Error::InvalidConfig("ramification index must be at least 1".into()));
    }
    if cfg.e > 1 && cfg.eisenstein.is_none() {
        return Err(Error::InvalidConfig("e > 1 needs Eisenstein data".into()));
    }
    Ok(cfg)
}

/// Serialize with sorted keys and a trailing newline.
pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Insert `key: value` into an object value.
pub fn with(mut v: Value, key: &str, value: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.insert(key.to_string(), value);
    }
    v
}

pub fn object() -> Value {
    Value::Object(Map::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kforms::{int_entry, t_entry};

    fn ctx() -> Ctx {
        Ctx::desk()
    }

    #[test]
    fn series_round_trip() {
        let x = SeriesElement::from_ints(ctx(), Var::Pi, &[(-2, 3), (0, 1), (5, -7)]);
        let t = SeriesElement::t_var(ctx(), Var::Pi, 0, -2).mul(&x).unwrap();
        let inv = SeriesElement::from_ints(ctx(), Var::Pi, &[(0, 1), (1, 3)]).formal_inverse().unwrap();
        let capped = x.cap_precision(5).truncate_above(3);
        for s in [x, t, inv, capped, SeriesElement::zero(ctx(), Var::PiK)] {
            let back = series_from(ctx(), &series(&s)).unwrap();
            assert_eq!(back, s, "{}", render(&series(&s)));
        }
    }

    #[test]
    fn scalar_forms() {
        assert_eq!(scalar_from(ctx(), &json!(-5)).unwrap(), ctx().scalar(-5));
        let s = scalar_from(ctx(), &json!({"value": 7, "prec": 2})).unwrap();
        assert_eq!((s.signed(), s.precision()), (-2, 2));
        assert_eq!(scalar(&ctx().scalar(-1)), json!({"value": -1, "prec": 8}));
    }

    #[test]
    fn symbol_round_trip() {
        let s = MilnorSymbol::new(ctx(), Var::Pi, vec![int_entry(ctx(), Var::Pi, &[(0, 1), (1, 3)]), t_entry(ctx(), Var::Pi, 0)]).unwrap();
        let t = MilnorSymbol::new(ctx(), Var::Pi, vec![Entry::P, Entry::PiK]).unwrap();
        let x = SymbolProduct::new(ctx(), Var::Pi, vec![(s, 2), (t, -1)]).unwrap();
        assert_eq!(symbol_from(ctx(), &symbol(&x)).unwrap(), x);
    }

    #[test]
    fn keys_are_sorted() {
        let out = render(&series(&SeriesElement::one(ctx(), Var::Pi)));
        let keys: Vec<usize> = ["\"caps\"", "\"level\"", "\"tail\"", "\"terms\"", "\"var\""].iter().map(|k| out.find(k).unwrap()).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "{out}");
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(series_from(ctx(), &json!({"terms": 3})), Err(Error::Parse(_))));
        assert!(matches!(series_from(ctx(), &json!({"terms": [{"pi_exp": 99, "coeff": 1}]})), Err(Error::WindowOverflow(_))));
        assert!(matches!(symbol_from(ctx(), &json!({"factors": [{"entries": ["q"], "exp": 1}]})), Err(Error::Parse(_))));
        assert!(matches!(run_config_from(&json!({"p": 2})), Err(Error::InvalidConfig(_))));
        assert!(matches!(run_config_from(&json!({"e": 2})), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn config_round_trip() {
        let cfg = RunConfig { seed: 17, ..RunConfig::default() };
        assert_eq!(run_config_from(&run_config(&cfg)).unwrap(), cfg);
        let v = json!({"p": 5, "M": 6, "n": 3, "window": {"pi_hi": 40}, "seed": 3});
        let c = run_config_from(&v).unwrap();
        assert_eq!((c.ctx.p(), c.ctx.m(), c.ctx.n(), c.ctx.window.pi_hi, c.seed), (5, 6, 3, 40, 3));
    }
}
