//! The logarithmic derivative of a symbol: the limit of `ψ^k(dlog x)`,
//! recorded step by step with a ψ-fixed-point certificate.
//!
//! When every entry is a T-monomial times a T-free Laurent polynomial, the
//! iterates are kept as exact fractions `num/den`: with `C` the product of
//! the σ-conjugates of `den` and `N(den)` its norm, `den · C = φ(N(den))`,
//! so `ψ(num/den) = ψ(num · C)/N(den)` and nothing is truncated. Otherwise
//! ψ acts on the truncated series coefficient directly.

use crate::error::{Error, Result};
use crate::frobenius::Frobenius;
use crate::kforms::{determinant, symbol_dlog, symbol_dlog_fraction, DlogFraction, FormBasis, FormContext, LogForm, SymbolProduct};
use crate::laurent::SeriesElement;
use crate::overconvergence::{minimal_level, OverconvergenceReport, RamificationConfig};
use crate::padic::Valuation;

/// One step: the iterate `ψ^k(dlog x)` and the valuation of `ψ^{k+1} − ψ^k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Iterate {
    pub k: usize,
    pub form: LogForm,
    /// The exact fraction behind `form`, on the fraction route.
    pub fraction: Option<DlogFraction>,
    pub diff_valuation: Valuation,
    /// Least coefficient precision of `form`.
    pub precision: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Converged(LogForm),
    Diverged(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Fraction,
    Series,
}

impl Route {
    pub fn name(&self) -> &'static str {
        match self {
            Route::Fraction => "fraction",
            Route::Series => "series",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvergenceLedger {
    pub iterates: Vec<Iterate>,
    pub verdict: Verdict,
    pub route: Route,
    /// `ψ(y) = y` for the limit `y`, on the route used and on the
    /// truncated series coefficient.
    pub psi_fixed: bool,
    pub ramification: RamificationConfig,
}

impl ConvergenceLedger {
    pub fn limit(&self) -> Option<&LogForm> {
        match &self.verdict {
            Verdict::Converged(y) => Some(y),
            Verdict::Diverged(_) => None,
        }
    }

    pub fn converged(&self) -> bool {
        self.limit().is_some()
    }

    /// Number of ψ applications after which the iterates stopped moving.
    pub fn steps(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    /// Does the `k`-th difference have valuation at least `k` for every step?
    pub fn contraction_holds(&self) -> bool {
        self.iterates.iter().all(|it| it.diff_valuation.at_least(it.k as u32))
    }
}

/// Default iteration budget: the working precision.
pub fn default_max_iters(fc: &FormContext) -> usize {
    fc.ctx().m() as usize
}

/// `C` and `N(d)` with `d · C = φ(N(d))`, from the matrix of
/// multiplication by `d` over the σ-basis and its adjugate's first column.
fn norm_data(sigma: &Frobenius, d: &SeriesElement) -> Result<(SeriesElement, SeriesElement)> {
    let (ctx, var) = (sigma.ctx(), sigma.var());
    let basis: Vec<SeriesElement> = sigma.basis().elements.iter().map(|b| b.series(ctx, var)).collect();
    let r = basis.len();
    // a[i][j]: component i of d · b_j.
    let mut a = vec![Vec::with_capacity(r); r];
    for b in &basis {
        let comps = sigma.decompose(&d.mul(b)?)?.components;
        for (i, c) in comps.into_iter().enumerate() {
            a[i].push(c);
        }
    }
    let norm = determinant(ctx, var, &a)?;
    let mut conj = SeriesElement::zero(ctx, var);
    for (j, b) in basis.iter().enumerate() {
        let minor: Vec<Vec<SeriesElement>> =
            a[1..].iter().map(|row| row.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, x)| x.clone()).collect()).collect();
        let mut cof = determinant(ctx, var, &minor)?;
        if j % 2 == 1 {
            cof = cof.neg();
        }
        conj = conj.add(&sigma.apply(&cof)?.mul(b)?)?;
    }
    Ok((conj, norm))
}

fn psi_fraction(fc: &FormContext, sigma: &Frobenius, y: &DlogFraction) -> Result<DlogFraction> {
    let (conj, norm) = norm_data(sigma, &y.den)?;
    let num = fc.psi_form(&LogForm::new(y.num.mul(&conj)?, FormBasis::Plus))?.coeff;
    Ok(DlogFraction { num, den: norm })
}

/// Gauss valuation of `a − b` and whether it vanishes at precision.
fn fraction_diff(a: &DlogFraction, b: &DlogFraction) -> Result<(Valuation, bool)> {
    let cross = a.num.mul(&b.den)?.sub(&b.num.mul(&a.den)?)?;
    let dv = |x: &SeriesElement| x.gauss_valuation().finite().unwrap_or(0);
    let v = match cross.gauss_valuation() {
        Valuation::Finite(c) => Valuation::Finite(c.saturating_sub(dv(&a.den) + dv(&b.den))),
        Valuation::Infinite => Valuation::Infinite,
    };
    Ok((v, cross.is_zero_at_precision()))
}

/// Iterate ψ on `dlog x` until successive iterates agree at precision.
///
/// Running out of budget or a broken contraction estimate give a `Diverged`
/// verdict with the full ledger, not an error; errors are arithmetic ones.
pub fn log_derivative(fc: &FormContext, x: &SymbolProduct, max_iters: usize) -> Result<ConvergenceLedger> {
    match symbol_dlog_fraction(x)? {
        Some(f) => fraction_route(fc, f, max_iters),
        None => series_route(fc, x, max_iters),
    }
}

fn fraction_route(fc: &FormContext, mut y: DlogFraction, max_iters: usize) -> Result<ConvergenceLedger> {
    let sigma = fc.frobenius().sigma();
    let mut iterates = Vec::new();
    let mut verdict = budget_exhausted(max_iters);
    for k in 0..max_iters {
        let next = psi_fraction(fc, &sigma, &y)?;
        let (diff_valuation, vanishes) = fraction_diff(&next, &y)?;
        let form = y.to_form()?;
        let precision = form.coeff.min_precision();
        iterates.push(Iterate { k, form: form.clone(), fraction: Some(y.clone()), diff_valuation, precision });
        if !diff_valuation.at_least(k as u32) {
            verdict = contraction_broken(k);
            break;
        }
        if vanishes {
            verdict = Verdict::Converged(form);
            break;
        }
        y = next;
    }
    let psi_fixed = match &verdict {
        Verdict::Converged(form) => fraction_diff(&psi_fraction(fc, &sigma, &y)?, &y)?.1 && is_psi_fixed(fc, form)?,
        Verdict::Diverged(_) => false,
    };
    Ok(ConvergenceLedger { iterates, verdict, route: Route::Fraction, psi_fixed, ramification: fc.ramification() })
}

fn series_route(fc: &FormContext, x: &SymbolProduct, max_iters: usize) -> Result<ConvergenceLedger> {
    let mut y = symbol_dlog(x)?.to_basis(FormBasis::Plus)?;
    let mut iterates = Vec::new();
    let mut verdict = budget_exhausted(max_iters);
    for k in 0..max_iters {
        let next = fc.psi_form(&y)?;
        let diff = next.sub(&y)?;
        let diff_valuation = diff.gauss_valuation();
        let precision = y.coeff.min_precision();
        iterates.push(Iterate { k, form: y.clone(), fraction: None, diff_valuation, precision });
        if !diff_valuation.at_least(k as u32) {
            verdict = contraction_broken(k);
            break;
        }
        if diff.is_zero_at_precision() {
            verdict = Verdict::Converged(y);
            break;
        }
        y = next;
    }
    let psi_fixed = match &verdict {
        Verdict::Converged(y) => is_psi_fixed(fc, y)?,
        Verdict::Diverged(_) => false,
    };
    Ok(ConvergenceLedger { iterates, verdict, route: Route::Series, psi_fixed, ramification: fc.ramification() })
}

fn budget_exhausted(max_iters: usize) -> Verdict {
    Verdict::Diverged(format!("no convergence within {max_iters} iterations"))
}

fn contraction_broken(k: usize) -> Verdict {
    Verdict::Diverged(format!("difference at step {k} has valuation below {k}"))
}

/// `ψ(y) = y` where both sides are known.
pub fn is_psi_fixed(fc: &FormContext, y: &LogForm) -> Result<bool> {
    Ok(fc.psi_form(y)?.agrees(y))
}

/// Overconvergence level of the limit's log-basis coefficient. The plus
/// basis would turn the log pole of `dlog π_K` into a `π^{-1}` term.
pub fn overconvergence_of_limit(ledger: &ConvergenceLedger, cap: u32) -> Result<OverconvergenceReport> {
    let y = ledger.limit().ok_or_else(|| Error::Unsupported("ledger did not converge".into()))?;
    let c = y.to_basis(FormBasis::Log)?.coeff;
    Ok(minimal_level(&c, ledger.ramification, cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kforms::{int_entry, t_entry, Entry, MilnorSymbol};
    use crate::laurent::{SeriesElement, Var};
    use crate::Ctx;
    use proptest::prelude::*;

    fn ctx() -> Ctx {
        Ctx::desk()
    }

    fn fc() -> FormContext {
        FormContext::unramified(ctx()).unwrap()
    }

    fn single(entries: Vec<Entry>) -> SymbolProduct {
        SymbolProduct::single(MilnorSymbol::new(ctx(), Var::Pi, entries).unwrap())
    }

    fn run(x: &SymbolProduct) -> ConvergenceLedger {
        log_derivative(&fc(), x, 8).unwrap()
    }

    #[test]
    fn conjugate_product_times_denominator_is_a_frobenius_image() {
        let sigma = fc().frobenius().sigma();
        for d in [&[(0, 1), (1, 1)][..], &[(-2, 3), (0, 2), (1, 1), (3, -4)], &[(-1, 9), (0, 1), (2, 5)]] {
            let d = SeriesElement::from_ints(ctx(), Var::Pi, d);
            let (conj, norm) = norm_data(&sigma, &d).unwrap();
            let lhs = d.mul(&conj).unwrap();
            assert!(lhs.is_exact() && norm.is_exact());
            assert_eq!(lhs, sigma.apply(&norm).unwrap());
        }
        // N(u) = u: the conjugates ζ(1+u) − 1 multiply to φ(u).
        let (_, n) = norm_data(&sigma, &SeriesElement::var(ctx(), Var::Pi)).unwrap();
        assert_eq!(n, SeriesElement::var(ctx(), Var::Pi));
    }

    #[test]
    fn volume_symbol_is_already_fixed() {
        let l = run(&single(vec![t_entry(ctx(), Var::Pi, 0), int_entry(ctx(), Var::Pi, &[(0, 1), (1, 1)])]));
        assert_eq!(l.steps(), 0);
        assert!(l.limit().unwrap().agrees(&LogForm::vol(ctx(), Var::Pi)));
        assert!(l.psi_fixed);
        let r = overconvergence_of_limit(&l, 12).unwrap();
        assert_eq!(r.minimal_level, Some(1));
    }

    #[test]
    fn trivial_symbol_has_zero_limit() {
        let l = run(&SymbolProduct::trivial(ctx(), Var::Pi));
        assert!(l.limit().unwrap().coeff.is_exact_zero());
        assert_eq!(overconvergence_of_limit(&l, 12).unwrap().minimal_level, Some(1));
    }

    #[test]
    fn exact_symbol_contracts_to_zero() {
        let l = run(&single(vec![int_entry(ctx(), Var::Pi, &[(0, 1), (1, 3)]), t_entry(ctx(), Var::Pi, 0)]));
        assert!(l.converged(), "{:?}", l.verdict);
        assert!(l.limit().unwrap().is_zero_at_precision());
        for it in &l.iterates {
            assert!(it.diff_valuation.at_least(it.k as u32 + 1), "step {}: {}", it.k, it.diff_valuation);
        }
        assert_eq!(l.iterates[0].form.gauss_valuation(), Valuation::Finite(1));
    }

    #[test]
    fn uniformizer_symbol_is_fixed() {
        // dlog T ∧ dlog u = (1 + u^{-1}) vol.
        let l = run(&single(vec![t_entry(ctx(), Var::Pi, 0), Entry::PiK]));
        assert_eq!(l.steps(), 0);
        let y = l.limit().unwrap().to_basis(FormBasis::Log).unwrap();
        assert!(y.coeff.agrees(&SeriesElement::one(ctx(), Var::Pi)));
    }

    #[test]
    fn prime_entry_gives_zero() {
        let l = run(&single(vec![t_entry(ctx(), Var::Pi, 0), Entry::P]));
        assert!(l.limit().unwrap().coeff.is_exact_zero());
    }

    #[test]
    fn budget_exhaustion_is_a_verdict() {
        let x = single(vec![int_entry(ctx(), Var::Pi, &[(0, 1), (1, 3)]), t_entry(ctx(), Var::Pi, 0)]);
        let l = log_derivative(&fc(), &x, 2).unwrap();
        assert!(matches!(l.verdict, Verdict::Diverged(_)));
        assert_eq!(l.iterates.len(), 2);
        assert!(overconvergence_of_limit(&l, 12).is_err());
    }

    fn arb_unit() -> impl Strategy<Value = SeriesElement> {
        (1i64..3, prop::collection::vec(-4i64..5, 3), -3i64..0, 0i64..3).prop_map(|(c0, pos, neg_e, neg_c)| {
            let mut terms = vec![(0, c0)];
            terms.extend(pos.iter().enumerate().map(|(i, c)| (i as i64 + 1, *c)));
            // level 1 at p = 3: v ≥ -i/2
            let v = (-neg_e + 1) / 2;
            terms.push((neg_e, neg_c * 3i64.pow(v as u32)));
            SeriesElement::from_ints(ctx(), Var::Pi, &terms)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn limits_are_additive(a in arb_unit(), b in arb_unit(), t in 0usize..2) {
            let s = |e: SeriesElement| {
                let mut entries = vec![Entry::Series(e), t_entry(ctx(), Var::Pi, 0)];
                if t == 1 {
                    entries.swap(0, 1);
                }
                single(entries)
            };
            let (x, y) = (s(a), s(b));
            let lx = run(&x);
            let ly = run(&y);
            let lxy = run(&x.product(&y).unwrap());
            prop_assert!(lx.converged() && ly.converged() && lxy.converged());
            prop_assert!(lx.psi_fixed && ly.psi_fixed && lxy.psi_fixed);
            prop_assert!(lx.contraction_holds());
            let sum = lx.limit().unwrap().add(ly.limit().unwrap()).unwrap();
            prop_assert!(lxy.limit().unwrap().agrees(&sum));
            // Over Q_p the limit has an integral log-basis coefficient.
            let c = lxy.limit().unwrap().coeff.shift(1).unwrap();
            prop_assert!(c.coeffs().range(..0).all(|(_, v)| v.is_zero_at_precision()), "{}", c);
        }
    }
}
