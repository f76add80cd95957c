//! Independent oracles for the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use overconv::laurent::{SeriesElement, TExp};

/// `Z/p^M[z]/Φ_p(z)`, elements as coefficient vectors of length `p − 1`.
#[derive(Clone, Copy, Debug)]
pub struct AuxRing {
    pub p: i128,
    pub q: i128,
}

impl AuxRing {
    pub fn new(p: u64, m: u32) -> Self {
        Self { p: p as i128, q: (p as i128).pow(m) }
    }

    fn d(&self) -> usize {
        (self.p - 1) as usize
    }

    pub fn constant(&self, c: i128) -> Vec<i128> {
        let mut v = vec![0; self.d()];
        v[0] = c.rem_euclid(self.q);
        v
    }

    pub fn z(&self) -> Vec<i128> {
        let mut v = vec![0; self.d()];
        if self.d() > 1 {
            v[1] = 1;
        } else {
            // p = 2 would make z = −1; the tests only use odd p.
            v[0] = self.q - 1;
        }
        v
    }

    pub fn add(&self, a: &[i128], b: &[i128]) -> Vec<i128> {
        a.iter().zip(b).map(|(x, y)| (x + y).rem_euclid(self.q)).collect()
    }

    pub fn mul(&self, a: &[i128], b: &[i128]) -> Vec<i128> {
        let d = self.d();
        let mut full = vec![0i128; 2 * d];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                full[i + j] = (full[i + j] + x * y).rem_euclid(self.q);
            }
        }
        // z^{p−1} = −(1 + z + … + z^{p−2}), top down.
        for k in (d..2 * d).rev() {
            let c = full[k];
            if c != 0 {
                full[k] = 0;
                for j in 0..d {
                    full[k - d + j] = (full[k - d + j] - c).rem_euclid(self.q);
                }
            }
        }
        full.truncate(d);
        full
    }

    pub fn pow(&self, a: &[i128], k: u64) -> Vec<i128> {
        let mut acc = self.constant(1);
        for _ in 0..k {
            acc = self.mul(&acc, a);
        }
        acc
    }

    /// Trace from `Q(ζ_p)` to `Q`: `Tr z^0 = p − 1`, `Tr z^k = −1` for `0 < k < p − 1`.
    pub fn trace(&self, a: &[i128]) -> i128 {
        let mut t = a[0] * (self.p - 1);
        for c in &a[1..] {
            t -= c;
        }
        t.rem_euclid(self.q)
    }

    /// `Σ_{ζ^p = 1} g(ζ)` for `g` given by its value at the generator.
    pub fn sum_over_roots(&self, g_at_one: i128, g: &[i128]) -> i128 {
        (g_at_one + self.trace(g)).rem_euclid(self.q)
    }
}

/// A polynomial in `π` with `T`-Laurent coefficients: `(π-exp, T-exps) ↦ c mod p^M`.
pub type Poly = BTreeMap<(i64, Vec<i64>), i128>;

pub fn poly_of(x: &SeriesElement, nvars: usize) -> Poly {
    let q = (x.ctx().p() as i128).pow(x.ctx().m());
    let mut out = Poly::new();
    for (i, e, c) in x.terms() {
        let v = (c.residue() as i128).rem_euclid(q);
        if v != 0 {
            out.insert((i, e[..nvars].to_vec()), v);
        }
    }
    out
}

/// `Σ_{ζ_0, ζ_1, …} x(ζ_0(1+π) − 1, ζ_1 T_1, …)` for a plus-part polynomial `x`,
/// which equals `φ(Tr_φ x)`.
pub fn conjugate_sum(x: &Poly, p: u64, m: u32, nvars: usize) -> Poly {
    let r = AuxRing::new(p, m);
    let q = r.q;
    // (z(1+π) − 1)^i as a polynomial in π over the aux ring; at ζ = 1 it is π^i.
    let mut cache: BTreeMap<i64, Vec<Vec<i128>>> = BTreeMap::new();
    let base = [r.add(&r.z(), &r.constant(-1)), r.z()];
    let mut out = Poly::new();
    for ((i, t), c) in x {
        assert!(*i >= 0, "conjugate sums need plus-part input");
        assert_eq!(t.len(), nvars);
        // Σ_ζ ζ^a over μ_p for every T-exponent.
        let mut t_factor = 1i128;
        for a in t {
            let za = r.pow(&r.z(), a.rem_euclid(p as i64) as u64);
            t_factor = t_factor * r.sum_over_roots(1, &za) % q;
        }
        if t_factor == 0 {
            continue;
        }
        let pw = cache.entry(*i).or_insert_with(|| {
            let mut acc = vec![r.constant(1)];
            for _ in 0..*i {
                let mut next = vec![vec![0; (p - 1) as usize]; acc.len() + 1];
                for (k, a) in acc.iter().enumerate() {
                    next[k] = r.add(&next[k], &r.mul(a, &base[0]));
                    next[k + 1] = r.add(&next[k + 1], &r.mul(a, &base[1]));
                }
                acc = next;
            }
            acc
        });
        for (k, coeff) in pw.iter().enumerate() {
            let at_one = if k as i64 == *i { 1 } else { 0 };
            let s = r.sum_over_roots(at_one, coeff);
            let v = s * t_factor % q * c % q;
            if v != 0 {
                let e = out.entry((k as i64, t.clone())).or_insert(0);
                *e = (*e + v).rem_euclid(q);
            }
        }
    }
    out.retain(|_, v| *v != 0);
    out
}

pub fn texp_vec(e: &TExp, nvars: usize) -> Vec<i64> {
    e[..nvars].to_vec()
}

/// `Φ_{p^m}(1+x)` with big integers, lowest degree first: divide
/// `y^{p^m} − 1` by `y^{p^{m−1}} − 1`, then shift `y = 1 + x` by Horner.
pub fn cyclotomic_oracle(p: u64, m: u32) -> Vec<num_bigint::BigInt> {
    use num_bigint::BigInt;
    let big = p.pow(m) as usize;
    let small = p.pow(m - 1) as usize;
    // Long division, highest degree first.
    let mut num: Vec<BigInt> = (0..=big)
        .map(|k| {
            BigInt::from(if k == 0 {
                1
            } else if k == big {
                -1
            } else {
                0
            })
        })
        .collect();
    let mut quot = vec![BigInt::from(0); big - small + 1];
    for k in 0..=big - small {
        let c = num[k].clone();
        quot[k] = c.clone();
        num[k] -= &c;
        num[k + small] += &c;
    }
    assert!(num.iter().all(|c| *c == BigInt::from(0)), "exact division");
    // Horner in y = 1 + x: acc ← acc·(1 + x) + c.
    let mut acc: Vec<BigInt> = Vec::new();
    for c in quot {
        let mut next = vec![BigInt::from(0); acc.len() + 1];
        for (i, a) in acc.iter().enumerate() {
            next[i] += a;
            next[i + 1] += a;
        }
        next[0] += c;
        acc = next;
    }
    while acc.len() > 1 && acc.last() == Some(&BigInt::from(0)) {
        acc.pop();
    }
    acc
}
