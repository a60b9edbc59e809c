//! Exact integer primitives: prime streams, Jacobi symbols, valuations,
//! arithmetic-progression prime indexing and the inequality solvers behind
//! the discriminant bounds.

use std::sync::{OnceLock, RwLock};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Jacobi symbol `(a / n)` for odd positive `n`. Returns 0 when `gcd(a, n) > 1`.
pub fn jacobi(a: i64, n: i64) -> Result<i32> {
    if n <= 0 || n % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "jacobi symbol needs an odd positive modulus, got {n}"
        )));
    }
    let mut a = a.rem_euclid(n);
    let mut n = n;
    let mut t = 1;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            let r = n % 8;
            if r == 3 || r == 5 {
                t = -t;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            t = -t;
        }
        a %= n;
    }
    Ok(if n == 1 { t } else { 0 })
}

/// Legendre symbol for an odd prime `p`; thin wrapper over [`jacobi`].
pub fn legendre(a: i64, p: u64) -> i32 {
    jacobi(a, p as i64).expect("odd prime modulus")
}

/// `p`-adic valuation of a nonzero integer. Returns `u32::MAX` for zero.
pub fn valuation(n: i128, p: u64) -> u32 {
    if n == 0 {
        return u32::MAX;
    }
    let p = p as i128;
    let mut n = n;
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    v
}

/// Splits `n = p^v * u` with `p ∤ u`.
pub fn split_valuation(n: i128, p: u64) -> (u32, i128) {
    let v = valuation(n, p);
    let mut u = n;
    for _ in 0..v {
        u /= p as i128;
    }
    (v, u)
}

pub fn gcd(a: i64, b: i64) -> i64 {
    a.gcd(&b)
}

pub fn gcd3(a: i64, b: i64, c: i64) -> i64 {
    a.gcd(&b).gcd(&c)
}

pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u64;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

pub fn is_square(n: i64) -> bool {
    n >= 0 && {
        let r = isqrt(n as u64);
        r * r == n as u64
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'outer: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Distinct prime divisors of `|n|` in increasing order (trial division).
pub fn prime_divisors(n: u64) -> Vec<u64> {
    let mut n = n;
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

pub fn odd_prime_divisors(n: u64) -> Vec<u64> {
    prime_divisors(n).into_iter().filter(|&p| p != 2).collect()
}

struct PrimeCache {
    limit: u64,
    primes: Vec<u64>,
    /// Primes split by residue mod 8, indexed by (eta - 1) / 2.
    by_eta: [Vec<u64>; 4],
}

impl PrimeCache {
    fn new() -> Self {
        let mut c = PrimeCache {
            limit: 1,
            primes: Vec::new(),
            by_eta: Default::default(),
        };
        c.extend_to(1 << 16);
        c
    }

    /// Segmented extension of the sieve from `self.limit` up to `new_limit`.
    fn extend_to(&mut self, new_limit: u64) {
        if new_limit <= self.limit {
            return;
        }
        let lo = self.limit + 1;
        let hi = new_limit;
        let root = isqrt(hi);
        let mut base: Vec<u64> = self.primes.iter().copied().take_while(|&p| p <= root).collect();
        if base.last().copied().unwrap_or(1) < root {
            // Cache does not yet reach sqrt(hi): bootstrap the base primes directly.
            base = simple_sieve(root);
        }
        const SEG: u64 = 1 << 18;
        let mut start = lo;
        while start <= hi {
            let end = (start + SEG - 1).min(hi);
            let mut composite = vec![false; (end - start + 1) as usize];
            for &p in &base {
                if p * p > end {
                    break;
                }
                let mut m = (start.div_ceil(p) * p).max(p * p);
                while m <= end {
                    composite[(m - start) as usize] = true;
                    m += p;
                }
            }
            for (i, &c) in composite.iter().enumerate() {
                let n = start + i as u64;
                if !c && n >= 2 {
                    self.primes.push(n);
                    if n % 2 == 1 {
                        self.by_eta[((n % 8) / 2) as usize].push(n);
                    }
                }
            }
            start = end + 1;
        }
        self.limit = hi;
    }
}

fn simple_sieve(n: u64) -> Vec<u64> {
    let n = n as usize;
    let mut is = vec![true; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if is[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                is[j] = false;
                j += i;
            }
        }
    }
    out
}

fn cache() -> &'static RwLock<PrimeCache> {
    static CACHE: OnceLock<RwLock<PrimeCache>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(PrimeCache::new()))
}

fn with_cache<T>(ready: impl Fn(&PrimeCache) -> Option<T>) -> T {
    {
        let c = cache().read().expect("prime cache poisoned");
        if let Some(t) = ready(&c) {
            return t;
        }
    }
    loop {
        let mut c = cache().write().expect("prime cache poisoned");
        if let Some(t) = ready(&c) {
            return t;
        }
        let next = c.limit.saturating_mul(2);
        c.extend_to(next);
    }
}

/// All primes `<= bound`.
pub fn primes_up_to(bound: u64) -> Vec<u64> {
    {
        let mut c = cache().write().expect("prime cache poisoned");
        if c.limit < bound {
            let target = bound.max(c.limit.saturating_mul(2));
            c.extend_to(target);
        }
    }
    let c = cache().read().expect("prime cache poisoned");
    let end = c.primes.partition_point(|&p| p <= bound);
    c.primes[..end].to_vec()
}

/// The `k`-th odd prime, 1-indexed: `q_1 = 3, q_2 = 5, ...`.
pub fn nth_odd_prime(k: usize) -> u64 {
    assert!(k >= 1, "odd primes are 1-indexed");
    with_cache(|c| c.primes.get(k).copied())
}

/// Residue class index of an odd prime mod 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrimeIndex {
    pub eta: u8,
    pub i: usize,
}

impl PrimeIndex {
    pub fn new(eta: u8, i: usize) -> Result<Self> {
        if !matches!(eta, 1 | 3 | 5 | 7) {
            return Err(Error::InvalidArgument(format!("eta must be odd in 1..=7, got {eta}")));
        }
        if i == 0 {
            return Err(Error::InvalidArgument("prime index is 1-based".into()));
        }
        Ok(PrimeIndex { eta, i })
    }
}

/// The `idx.i`-th prime congruent to `idx.eta` modulo 8.
pub fn ap_prime(idx: PrimeIndex) -> u64 {
    let slot = (idx.eta / 2) as usize;
    with_cache(|c| c.by_eta[slot].get(idx.i - 1).copied())
}

/// Convenience form of [`ap_prime`] for call sites with known-good arguments.
pub fn q_eta(eta: u8, i: usize) -> u64 {
    ap_prime(PrimeIndex::new(eta, i).expect("valid prime index"))
}

/// First `count` primes in `P(8, eta)`.
pub fn ap_primes(eta: u8, count: usize) -> Vec<u64> {
    if count == 0 {
        return Vec::new();
    }
    let slot = (eta / 2) as usize;
    with_cache(|c| {
        if c.by_eta[slot].len() >= count {
            Some(c.by_eta[slot][..count].to_vec())
        } else {
            None
        }
    })
}

/// An arithmetic progression `{u n + v}` normalised so that `u` is even and `v` odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct APClass {
    pub modulus: u64,
    pub residue: u64,
}

impl APClass {
    pub fn new(modulus: u64, residue: u64) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::InvalidArgument("modulus must be positive".into()));
        }
        if gcd(modulus as i64, residue as i64) != 1 {
            return Err(Error::InvalidArgument(format!(
                "gcd({modulus}, {residue}) != 1"
            )));
        }
        let (u, v) = match (modulus % 2, residue % 2) {
            (1, 1) => (2 * modulus, residue),
            (1, 0) => (2 * modulus, modulus + residue),
            _ => (modulus, residue),
        };
        Ok(APClass { modulus: u, residue: v })
    }

    pub fn contains(&self, n: u64) -> bool {
        n >= self.residue % self.modulus && n % self.modulus == self.residue % self.modulus
    }
}

/// Least `w > max(4, 2 delta)` with
/// `q_{2delta+1} ... q_w > n * ((w + 1) 2^(w + 1))^delta`, `q_k` the k-th odd prime.
pub fn smallest_w(n: &BigUint, delta: u32) -> usize {
    assert!(delta <= 3, "delta must be in 0..=3");
    let mut w = 4usize.max(2 * delta as usize) + 1;
    loop {
        if w_inequality_holds(n, delta, w) {
            return w;
        }
        w += 1;
    }
}

/// Whether `w` satisfies the product inequality used by [`smallest_w`].
pub fn w_inequality_holds(n: &BigUint, delta: u32, w: usize) -> bool {
    let lo = 2 * delta as usize + 1;
    let mut prod = BigUint::one();
    for k in lo..=w {
        prod *= nth_odd_prime(k);
    }
    let factor = BigUint::from((w + 1) as u64) << (w + 1);
    let rhs = n * num_traits::pow(factor, delta as usize);
    prod > rhs
}

/// Least `n >= 0` with `gcd(u n + v, p_1 ... p_s) = 1`.
pub fn coprime_shift(u: i64, v: i64, primes: &[u64]) -> Result<u64> {
    if primes.len() < 2 {
        return Err(Error::InvalidArgument("need at least two primes".into()));
    }
    if primes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("primes must be strictly increasing".into()));
    }
    for &p in primes {
        if p == 2 || !is_prime(p) {
            return Err(Error::InvalidArgument(format!("{p} is not an odd prime")));
        }
        if u.rem_euclid(p as i64) == 0 {
            return Err(Error::InvalidArgument(format!("{p} divides u = {u}")));
        }
    }
    let s = primes.len() as u32;
    let bound = (s as u64 + 2) << (s - 1);
    for n in 0..bound {
        let x = u as i128 * n as i128 + v as i128;
        if primes.iter().all(|&p| x.rem_euclid(p as i128) != 0) {
            return Ok(n);
        }
    }
    Err(Error::Internal(format!(
        "no coprime shift below {bound} for u={u}, v={v}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_jacobi_prime(a: i64, p: i64) -> i32 {
        let a = a.rem_euclid(p);
        if a == 0 {
            return 0;
        }
        if (1..p).any(|x| (x * x) % p == a) {
            1
        } else {
            -1
        }
    }

    #[test]
    fn jacobi_examples() {
        assert_eq!(jacobi(1, 5).unwrap(), 1);
        assert_eq!(jacobi(2, 7).unwrap(), 1);
        assert_eq!(jacobi(2, 3).unwrap(), -1);
        assert!(jacobi(3, 4).is_err());
        assert!(jacobi(3, -3).is_err());
        assert_eq!(jacobi(6, 9).unwrap(), 0);
    }

    #[test]
    fn jacobi_matches_euler_for_small_primes() {
        for p in [3i64, 5, 7, 11, 13, 17, 19, 23, 97] {
            for a in -50..50 {
                assert_eq!(jacobi(a, p).unwrap(), brute_jacobi_prime(a, p), "a={a} p={p}");
            }
        }
    }

    #[test]
    fn ap_prime_examples() {
        assert_eq!(q_eta(1, 1), 17);
        assert_eq!(q_eta(1, 2), 41);
        assert_eq!(q_eta(1, 3), 73);
        assert_eq!(q_eta(3, 1), 3);
        assert_eq!(q_eta(1, 8), 193);
        assert_eq!(q_eta(1, 16), 401);
        assert_eq!(q_eta(3, 22), 443);
        assert_eq!(q_eta(5, 13), 197);
        assert_eq!(q_eta(7, 12), 199);
        assert!(PrimeIndex::new(2, 1).is_err());
        assert!(PrimeIndex::new(1, 0).is_err());
    }

    #[test]
    fn ap_prime_stream_is_monotone() {
        for eta in [1u8, 3, 5, 7] {
            let ps = ap_primes(eta, 10_000);
            assert_eq!(ps.len(), 10_000);
            for w in ps.windows(2) {
                assert!(w[0] < w[1]);
            }
            for &p in &ps {
                assert_eq!(p % 8, eta as u64);
                assert!(is_prime(p));
            }
        }
    }

    #[test]
    fn odd_prime_indexing() {
        assert_eq!(nth_odd_prime(1), 3);
        assert_eq!(nth_odd_prime(6), 17);
        assert_eq!(nth_odd_prime(7), 19);
    }

    #[test]
    fn smallest_w_examples() {
        assert_eq!(smallest_w(&BigUint::from(1u32), 3), 21);
        assert_eq!(smallest_w(&BigUint::from(257u32), 1), 8);
        assert_eq!(smallest_w(&BigUint::from(193u32 * 401), 0), 6);
    }

    #[test]
    fn coprime_shift_examples() {
        assert_eq!(coprime_shift(1, 1, &[3, 5]).unwrap(), 0);
        assert_eq!(coprime_shift(2, 3, &[3, 5, 7]).unwrap(), 4);
        assert!(coprime_shift(3, 1, &[3, 5]).is_err());
        assert!(coprime_shift(1, 1, &[3]).is_err());
    }

    #[test]
    fn apclass_normalisation() {
        assert_eq!(APClass::new(3, 1).unwrap(), APClass { modulus: 6, residue: 1 });
        assert_eq!(APClass::new(3, 2).unwrap(), APClass { modulus: 6, residue: 5 });
        assert_eq!(APClass::new(8, 3).unwrap(), APClass { modulus: 8, residue: 3 });
        assert!(APClass::new(6, 3).is_err());
    }

    #[test]
    fn miller_rabin_agrees_with_sieve() {
        let ps = primes_up_to(100_000);
        let mut it = ps.iter().peekable();
        for n in 0..100_000u64 {
            let in_sieve = it.peek().map(|&&p| p == n).unwrap_or(false);
            if in_sieve {
                it.next();
            }
            assert_eq!(is_prime(n), in_sieve, "n={n}");
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn jacobi_multiplicative(a in -1000i64..1000, b in -1000i64..1000, k in 0i64..500) {
                let n = 2 * k + 1;
                prop_assert_eq!(
                    jacobi(a * b, n).unwrap(),
                    jacobi(a, n).unwrap() * jacobi(b, n).unwrap()
                );
                let sq = jacobi(a * a, n).unwrap();
                prop_assert!(sq == 0 || sq == 1);
            }

            #[test]
            fn coprime_shift_below_bound(
                u in 1i64..10_000,
                v in -10_000i64..10_000,
                picks in proptest::collection::btree_set(1usize..60, 2..=10),
            ) {
                let primes: Vec<u64> = picks.iter().map(|&k| nth_odd_prime(k))
                    .filter(|&p| u % p as i64 != 0).collect();
                prop_assume!(primes.len() >= 2);
                let s = primes.len() as u64;
                let n = coprime_shift(u, v, &primes).unwrap();
                prop_assert!(n < (s + 2) << (s - 1));
                let x = u as i128 * n as i128 + v as i128;
                for &p in &primes {
                    prop_assert!(x.rem_euclid(p as i128) != 0);
                }
            }

            #[test]
            fn smallest_w_is_least(n in 1u64..1_000_000_000, delta in 0u32..4) {
                let big = BigUint::from(n);
                let w = smallest_w(&big, delta);
                prop_assert!(w_inequality_holds(&big, delta, w));
                let floor = 4usize.max(2 * delta as usize);
                if w - 1 > floor {
                    prop_assert!(!w_inequality_holds(&big, delta, w - 1));
                }
            }
        }
    }
}
