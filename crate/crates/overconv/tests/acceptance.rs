//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test --test acceptance -- --nocapture --test-threads 1` to see them.
//! Criteria are serialized so that the pinned timings measure one at a time.

mod common;

use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::{conjugate_sum, cyclotomic_oracle, poly_of};
use num_bigint::BigInt;
use overconv::cyclo::cyclotomic_modulus;
use overconv::eisenstein::{derivative_structure, expand_pi, frobenius_lift, lift_residual, EisensteinData};
use overconv::frobenius::{Frobenius, TMode};
use overconv::kforms::FormContext;
use overconv::laurent::CoeffElement;
use overconv::overconvergence::{invertibility_check, minimal_level, RamificationConfig, DEFAULT_LEVEL_CAP};
use overconv::suite::{check_overconvergence, gen, run_family, Case, Family};
use overconv::{Ctx, RunConfig, SeriesElement, Var};

static SERIAL: Mutex<()> = Mutex::new(());

const SEED: u64 = 20240607;
const TRACE_LIMIT: Duration = Duration::from_secs(10);
const LIFT_LIMIT: Duration = Duration::from_secs(5);
const CYCLO_LIMIT: Duration = Duration::from_secs(30);

fn cfg() -> RunConfig {
    RunConfig { seed: SEED, ..RunConfig::default() }
}

/// Run a criterion, print its line, and fail the test if it failed.
fn criterion(n: u32, name: &str, limit: Option<Duration>, body: impl FnOnce() -> Result<String, String>) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(_), Some(l)) if elapsed > l => Err(format!("took {:.2}s, limit {:.0}s", elapsed.as_secs_f64(), l.as_secs_f64())),
        (o, _) => o,
    };
    match &outcome {
        Ok(detail) => println!("criterion {n} ({name}): PASS; {detail}; {:.2}s", elapsed.as_secs_f64()),
        Err(detail) => println!("criterion {n} ({name}): FAIL; {detail}; {:.2}s", elapsed.as_secs_f64()),
    }
    if let Err(detail) = outcome {
        panic!("criterion {n} failed: {detail}");
    }
}

fn e<T>(r: overconv::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn all_pass(cases: &[Case]) -> Result<usize, String> {
    match cases.iter().find(|c| !c.ok) {
        Some(c) => Err(format!("{} failed: {}", c.id, c.detail.as_deref().unwrap_or(""))),
        None => Ok(cases.len()),
    }
}

#[test]
fn criterion_1_frobenius_trace_algebra() {
    criterion(1, "Frobenius/trace algebra", Some(TRACE_LIMIT), || {
        let cfg = cfg();
        let pairs = all_pass(&run_family(Family::Trace, &cfg, 200))?;
        let ctx = cfg.ctx;
        let f = Frobenius::unramified(ctx, TMode::Standard);
        let mut rng = Family::Trace.rng(SEED ^ 0xC0);
        for k in 0..100 {
            let x = gen::plus(&mut rng, ctx);
            let lhs = f.apply(&f.trace(&x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            if poly_of(&lhs, ctx.nvars()) != conjugate_sum(&poly_of(&x, ctx.nvars()), ctx.p(), ctx.m(), ctx.nvars()) {
                return Err(format!("conjugate-sum oracle disagrees on input {k}: {x}"));
            }
        }
        Ok(format!("{pairs} pairs (projection formula, Tr(phi(a)) = 9a), 100 oracle inputs"))
    });
}

#[test]
fn criterion_2_overconvergence_suite() {
    criterion(2, "overconvergence suite", None, || {
        let cfg = cfg();
        let n = all_pass(&run_family(Family::Overconvergence, &cfg, 200))?;
        // Derivative stability is checked at level max(N, 2); at N = 1 it is false in general.
        let mut rng = Family::Overconvergence.rng(SEED ^ 0xD1);
        let mut leveled = 0;
        while leveled < 100 {
            let x = gen::overconvergent(&mut rng, cfg.ctx);
            if minimal_level(&x, RamificationConfig::UNRAMIFIED, cfg.level_cap).minimal_level.is_none() {
                continue;
            }
            leveled += 1;
            check_overconvergence(&x, 1, cfg.level_cap)?;
        }
        Ok(format!("{n} cases including 3 fixtures; {leveled} level-N elements"))
    });
}

#[test]
fn criterion_3_eisenstein_fixture() {
    criterion(3, "Eisenstein X^2 - pi", Some(LIFT_LIMIT), || {
        let ctx = Ctx::desk();
        let f = e(EisensteinData::pure(ctx, 2))?;
        let exp = e(expand_pi(&f))?;
        let lift = e(frobenius_lift(&exp))?;
        if !e(lift_residual(&exp, &lift))?.is_zero_at_precision() {
            return Err("Newton residual not zero at precision 8".into());
        }
        let ds = e(derivative_structure(&f, &lift, 1, DEFAULT_LEVEL_CAP))?;
        if ds.k != 1 || ds.i != -2 || ds.p_divides_i {
            return Err(format!("derivative structure k = {}, I = {}, p | I = {}", ds.k, ds.i, ds.p_divides_i));
        }
        let ram = f.ramification();
        if !(1..=DEFAULT_LEVEL_CAP).any(|n| invertibility_check(&ds.unit, n, ram)) {
            return Err("unit cofactor fails invertibility_check".into());
        }
        let cube = SeriesElement::monomial(Var::PiK, 3, CoeffElement::one(ctx));
        let diff = e(lift.image.sub(&cube))?;
        if !diff.coeffs().values().all(|c| c.val_bound() >= 1) {
            return Err("phi(pi_K) is not pi_K^3 mod 3".into());
        }
        Ok(format!("k = 1, I = -2, 3 does not divide I, {} Newton steps", lift.iterations))
    });
}

#[test]
fn criterion_4_form_calculus() {
    criterion(4, "form calculus", None, || {
        let cfg = cfg();
        let n = all_pass(&run_family(Family::Forms, &cfg, 100))?;
        let ctx = cfg.ctx;
        let fc = FormContext::unramified(ctx).map_err(|e| e.to_string())?;
        let vol = fc.vol();
        let y = fc.psi_form(&vol).map_err(|e| e.to_string())?;
        let m = ctx.m() - ctx.n() as u32;
        if !(y.coeff.min_precision() >= m && y.coeff.cap_precision(m).agrees(&vol.coeff.cap_precision(m))) {
            return Err(format!("psi(vol) = {}", y.coeff));
        }
        Ok(format!(
            "{} symbols for Steinberg, antisymmetry and contraction; psi(vol) = vol at precision {}",
            n - 1,
            y.coeff.min_precision()
        ))
    });
}

#[test]
fn criterion_5_logarithmic_derivative() {
    criterion(5, "logarithmic derivative", None, || {
        let cases = run_family(Family::LogDeriv, &cfg(), 24);
        let n = all_pass(&cases)?;
        if n < 20 {
            return Err(format!("only {n} symbol products"));
        }
        Ok(format!("{n} symbol products converge within M steps with psi-fixed, overconvergent limits"))
    });
}

#[test]
fn criterion_6_cyclotomic_diagrams() {
    criterion(6, "cyclotomic diagrams", Some(CYCLO_LIMIT), || {
        let n = all_pass(&run_family(Family::Cyclo, &cfg(), 100))?;
        let phi9 = cyclotomic_modulus(3, 2).map_err(|e| e.to_string())?;
        // (1+x)^6 + (1+x)^3 + 1, expanded by hand.
        if phi9 != [3, 9, 18, 21, 15, 6, 1] {
            return Err(format!("Phi_9(1+x) = {phi9:?}"));
        }
        for (p, m) in [(3, 1), (3, 3), (5, 2)] {
            let ours: Vec<BigInt> = cyclotomic_modulus(p, m).map_err(|e| e.to_string())?.into_iter().map(BigInt::from).collect();
            if ours != cyclotomic_oracle(p, m) {
                return Err(format!("Phi_{{{p}^{m}}} disagrees with the division oracle"));
            }
        }
        Ok(format!("{n} cases (trace and tau diagrams, Kato bound); Phi_9(1+x) matches"))
    });
}

#[test]
fn criterion_7_determinism() {
    criterion(7, "determinism", None, || {
        let args = ["overconv", "suite", "--seed", "77"];
        let (c1, a) = overconv::cli::run(args);
        let (c2, b) = overconv::cli::run(args);
        if (c1, c2) != (0, 0) {
            return Err(format!("exit codes {c1}, {c2}"));
        }
        if a != b {
            return Err("in-process reports differ".into());
        }
        let bin = |_: ()| std::process::Command::new(env!("CARGO_BIN_EXE_overconv")).args(&args[1..]).output().map(|o| o.stdout);
        let (x, y) = (bin(()).map_err(|e| e.to_string())?, bin(()).map_err(|e| e.to_string())?);
        if x != y || x != a.as_bytes() {
            return Err("binary reports differ".into());
        }
        let v: serde_json::Value = serde_json::from_str(&a).map_err(|e| e.to_string())?;
        if v["failed"] != 0 || v["seed"] != 77 {
            return Err(format!("failed = {}, seed = {}", v["failed"], v["seed"]));
        }
        Ok(format!("{} bytes identical across 4 runs, {} passed", a.len(), v["passed"]))
    });
}
