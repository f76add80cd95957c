use crate::eisenstein::EisensteinData;
use crate::error::{Error, Result};
use crate::padic::{PadicScalar, PrimeConfig};

/// Exponent windows: π-exponents in `[pi_lo, pi_hi]`, T-exponents in `[-t_max, t_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Window {
    pub pi_lo: i64,
    pub pi_hi: i64,
    pub t_max: i64,
}

impl Default for Window {
    fn default() -> Self {
        Self { pi_lo: -64, pi_hi: 64, t_max: 32 }
    }
}

/// Everything a series needs to know about its ambient ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Ctx {
    pub prime: PrimeConfig,
    pub window: Window,
    /// Turn silent window truncation into `WindowOverflow`.
    pub strict: bool,
}

impl Ctx {
    pub fn new(prime: PrimeConfig, window: Window, strict: bool) -> Result<Self> {
        if window.pi_lo > 0 || window.pi_hi < 0 || window.t_max < 0 {
            return Err(Error::InvalidConfig(format!("window must contain exponent 0: {window:?}")));
        }
        Ok(Self { prime, window, strict })
    }

    pub fn desk() -> Self {
        Self { prime: PrimeConfig::desk(), window: Window::default(), strict: false }
    }

    pub fn with_n(mut self, n: usize) -> Result<Self> {
        self.prime = PrimeConfig::new(self.prime.p, self.prime.m, n)?;
        Ok(self)
    }

    pub fn with_precision(mut self, m: u32) -> Result<Self> {
        self.prime = PrimeConfig::new(self.prime.p, m, self.prime.n)?;
        Ok(self)
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn p(&self) -> u64 {
        self.prime.p
    }

    pub fn m(&self) -> u32 {
        self.prime.m
    }

    pub fn n(&self) -> usize {
        self.prime.n
    }

    /// Number of T-variables.
    pub fn nvars(&self) -> usize {
        self.prime.n - 1
    }

    pub fn scalar(&self, v: i64) -> PadicScalar {
        PadicScalar::new(self.p(), self.m(), v)
    }

    pub fn zero_scalar(&self) -> PadicScalar {
        PadicScalar::zero(self.p(), self.m())
    }
}

/// Batch configuration for the CLI and the randomized suites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub ctx: Ctx,
    /// Ramification index of the uniformizer variable.
    pub e: u32,
    pub level_cap: u32,
    pub seed: u64,
    /// Uniformizer data when `e > 1`.
    pub eisenstein: Option<EisensteinData>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { ctx: Ctx::desk(), e: 1, level_cap: 12, seed: 0, eisenstein: None }
    }
}
