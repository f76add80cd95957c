//! Batch driver behind the `overconv` binary. Input and output are JSON;
//! every report carries the run seed.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::cyclo::{dual_exp, DualExpReading};
use crate::eisenstein::{derivative_structure, expand_pi, frobenius_lift, lift_residual, EisensteinData};
use crate::error::{Error, Result};
use crate::frobenius::{Frobenius, TMode};
use crate::json;
use crate::kforms::FormContext;
use crate::logderiv::{default_max_iters, log_derivative, overconvergence_of_limit};
use crate::overconvergence::{invertibility_check, minimal_level, RamificationConfig};
use crate::suite::{run_family, run_suite, Case, Family, SuiteReport, DEFAULT_COUNT};

#[derive(Parser, Debug)]
#[command(
    name = "overconv",
    version,
    about = "Overconvergent series, Frobenius traces, logarithmic derivatives and cyclotomic evaluation over Z/p^M"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomized suites; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fail on window truncation instead of dropping terms.
    #[arg(long, global = true)]
    strict_windows: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimal overconvergence level of a series.
    Radius { input: PathBuf },
    /// Frobenius trace and decomposition of a series.
    Trace { input: PathBuf },
    /// Frobenius lift for Eisenstein data (default: the configured data).
    Lift { input: Option<PathBuf> },
    /// Iterated logarithmic derivative of a symbol product.
    Logderiv {
        input: PathBuf,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Dual exponential: `{"symbol", "m", "N", "reading"}`.
    Dualexp { input: PathBuf },
    /// Randomized cyclotomic compatibility checks.
    Diagram {
        #[arg(long, default_value_t = DEFAULT_COUNT)]
        count: usize,
    },
    /// Every randomized property family.
    Suite {
        #[arg(long, default_value_t = DEFAULT_COUNT)]
        count: usize,
    },
}

/// Run the CLI on `args` (including the program name); returns the exit
/// code and the text for standard output.
pub fn run<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    (0, e.to_string())
                }
                _ => (2, json::render(&json!({"error": "parse", "message": e.to_string().trim_end()}))),
            };
        }
    };
    match execute(&cli) {
        Ok(v) => (0, json::render(&v)),
        Err(e) => {
            let code = if matches!(e, Error::Parse(_)) { 2 } else { 1 };
            (code, json::render(&json!({"error": e.kind(), "message": e.to_string()})))
        }
    }
}

fn read_json(path: &PathBuf) -> Result<Value> {
    let text = if path.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin()).map_err(|e| Error::Parse(format!("stdin: {e}")))?
    } else {
        std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
    };
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => json::run_config_from(&read_json(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.strict_windows {
        cfg.ctx.strict = true;
    }
    Ok(cfg)
}

fn ramification(cfg: &RunConfig) -> Result<RamificationConfig> {
    RamificationConfig::new(cfg.e)
}

fn form_context(cfg: &RunConfig) -> Result<FormContext> {
    match &cfg.eisenstein {
        Some(f) if f.e > 1 => {
            let lift = frobenius_lift(&expand_pi(f)?)?;
            FormContext::from_lift(&lift, f.ramification())
        }
        _ => FormContext::unramified(cfg.ctx),
    }
}

fn opt_u32(v: &Value, key: &str) -> Result<Option<u32>> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(x) => x
            .as_u64()
            .and_then(|k| u32::try_from(k).ok())
            .map(Some)
            .ok_or_else(|| Error::Parse(format!("{key} must be a non-negative integer"))),
    }
}

fn family_json(cases: Vec<Case>, seed: u64, count: usize) -> Value {
    let mut cases = cases;
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    let r = SuiteReport { seed, count, cases };
    let mut v = r.to_json();
    if let Value::Object(m) = &mut v {
        m.remove("families");
    }
    v
}

fn execute(cli: &Cli) -> Result<Value> {
    let cfg = load_config(cli)?;
    let ctx = cfg.ctx;
    let out = match &cli.command {
        Command::Radius { input } => {
            let x = json::series_from(ctx, &read_json(input)?)?;
            let ram = ramification(&cfg)?;
            let r = minimal_level(&x, ram, cfg.level_cap);
            let invertible = r.minimal_level.map(|n| invertibility_check(&x, n, ram));
            json::with(json::overconvergence_report(&r), "invertible_at_minimal_level", json!(invertible))
        }
        Command::Trace { input } => {
            let x = json::series_from(ctx, &read_json(input)?)?;
            let f = Frobenius::unramified(ctx, TMode::Standard);
            let d = f.decompose(&x)?;
            json!({"trace": json::series(&f.trace(&x)?), "decomposition": json::decomposition(&d, ctx)})
        }
        Command::Lift { input } => {
            let f = match input {
                Some(p) => json::eisenstein_from(ctx, &read_json(p)?)?,
                None => match &cfg.eisenstein {
                    Some(f) => f.clone(),
                    None => EisensteinData::pure(ctx, 2)?,
                },
            };
            let exp = expand_pi(&f)?;
            let lift = frobenius_lift(&exp)?;
            let ds = derivative_structure(&f, &lift, 1, cfg.level_cap)?;
            json!({
                "eisenstein": json::eisenstein(&f),
                "expansion": json::expansion(&exp),
                "frobenius_lift": json::frobenius_lift(&lift),
                "residual_zero": lift_residual(&exp, &lift)?.is_zero_at_precision(),
                "derivative_structure": json::derivative_structure(&ds),
            })
        }
        Command::Logderiv { input, max_iters } => {
            let x = json::symbol_from(ctx, &read_json(input)?)?;
            let fc = form_context(&cfg)?;
            let l = log_derivative(&fc, &x, max_iters.unwrap_or_else(|| default_max_iters(&fc)))?;
            let oc = if l.converged() { Some(json::overconvergence_report(&overconvergence_of_limit(&l, cfg.level_cap)?)) } else { None };
            json::with(json::ledger(&l), "limit_overconvergence", json!(oc))
        }
        Command::Dualexp { input } => {
            let v = read_json(input)?;
            let x = json::symbol_from(ctx, v.get("symbol").ok_or_else(|| Error::Parse("missing field \"symbol\"".into()))?)?;
            let m = opt_u32(&v, "m")?.ok_or_else(|| Error::Parse("missing field \"m\"".into()))?;
            let level = opt_u32(&v, "N")?.unwrap_or(1);
            let reading = match v.get("reading").and_then(Value::as_str) {
                Some(r) => DualExpReading::parse(r)?,
                None => DualExpReading::Volume,
            };
            let d = dual_exp(&form_context(&cfg)?, &x, m, level, reading)?;
            json::with(json::dual_exp(&d, ctx), "N", json!(level))
        }
        Command::Diagram { count } => family_json(run_family(Family::Cyclo, &cfg, *count), cfg.seed, *count),
        Command::Suite { count } => run_suite(&cfg, *count).to_json(),
    };
    Ok(json::with(out, "seed", json!(cfg.seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(a: &[&str]) -> Vec<String> {
        std::iter::once("overconv").chain(a.iter().copied()).map(String::from).collect()
    }

    #[test]
    fn unknown_command_is_a_parse_error() {
        let (code, out) = run(args(&["frobnicate"]));
        assert_eq!(code, 2);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["error"], "parse");
    }

    #[test]
    fn help_is_not_an_error() {
        let (code, out) = run(args(&["--help"]));
        assert_eq!(code, 0);
        assert!(out.contains("radius"));
    }

    #[test]
    fn missing_file_is_a_parse_error() {
        let (code, _) = run(args(&["radius", "/nonexistent/x.json"]));
        assert_eq!(code, 2);
    }
}
