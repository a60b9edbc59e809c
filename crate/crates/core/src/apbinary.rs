//! Primes in progressions mod 8 represented by diagonal binary forms.

use std::collections::BTreeMap;

use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{ap_primes, is_prime, jacobi, odd_prime_divisors, primes_up_to};
use crate::error::{Error, Result};
use crate::forms::BinaryForm;
use crate::localrep::binary_represents_locally;

fn check_eta(eta: u8) -> Result<()> {
    if matches!(eta, 1 | 3 | 5 | 7) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eta must be one of 1, 3, 5, 7; got {eta}")))
    }
}

/// Exhaustive search over the ellipse `B(x, y) ≤ n`.
pub fn binary_represents(f: &BinaryForm, n: i64) -> bool {
    if n < 0 {
        return false;
    }
    if n == 0 {
        return true;
    }
    let (a, b, c) = (f.a as i128, f.b as i128, f.c as i128);
    let d = -(f.discriminant() as i128);
    let n = n as i128;
    // 4a·B = (2ax + by)² + |D| y², so |D| y² ≤ 4an
    let ymax = crate::forms::isqrt_i128(4 * a * n / d);
    for y in -ymax..=ymax {
        // a x² + (b y) x + (c y² − n) = 0
        let disc = b * b * y * y - 4 * a * (c * y * y - n);
        if disc < 0 {
            continue;
        }
        let s = crate::forms::isqrt_i128(disc);
        if s * s != disc {
            continue;
        }
        for root in [-b * y + s, -b * y - s] {
            if root % (2 * a) == 0 {
                return true;
            }
        }
    }
    false
}

/// Reduced primitive positive definite forms of discriminant `d < 0`.
pub fn reduced_forms(d: i64) -> Vec<BinaryForm> {
    assert!(d < 0 && d.rem_euclid(4) <= 1, "not a negative discriminant: {d}");
    let mut out = Vec::new();
    let mut a = 1;
    while 3 * a * a <= -d {
        for b in -a + 1..=a {
            if (b - d).rem_euclid(2) != 0 {
                continue;
            }
            let num = b * b - d;
            if num % (4 * a) != 0 {
                continue;
            }
            let c = num / (4 * a);
            if c < a || (c == a && b < 0) {
                continue;
            }
            if a.gcd(&b).gcd(&c) != 1 {
                continue;
            }
            out.push(BinaryForm { a, b, c });
        }
        a += 1;
    }
    out
}

/// Smallest value of `f` prime to `m`.
fn unit_value(f: &BinaryForm, m: i64) -> i64 {
    let mut best = i64::MAX;
    for r in 1..64i64 {
        for x in -r..=r {
            for y in [-r, r] {
                for (x, y) in [(x, y), (y, x)] {
                    let v = f.value(x, y);
                    if v > 0 && v.gcd(&m) == 1 {
                        best = best.min(v);
                    }
                }
            }
        }
        if best != i64::MAX {
            return best;
        }
    }
    unreachable!("a primitive form takes values prime to any modulus")
}

/// Values of the assigned genus characters on `f`.
pub fn genus_characters(f: &BinaryForm) -> Vec<i32> {
    let d = f.discriminant();
    let m = unit_value(f, 2 * d.abs());
    let mut chars: Vec<i32> = odd_prime_divisors(d.unsigned_abs())
        .into_iter()
        .map(|p| jacobi(m, p as i64).expect("odd modulus"))
        .collect();
    if d.rem_euclid(4) == 0 {
        let delta = if m % 4 == 1 { 1 } else { -1 };
        let eps = if m.rem_euclid(8) == 1 || m.rem_euclid(8) == 7 { 1 } else { -1 };
        match (-d / 4).rem_euclid(8) {
            1 | 5 | 4 => chars.push(delta),
            2 => chars.push(delta * eps),
            6 => chars.push(eps),
            0 => {
                chars.push(delta);
                chars.push(eps);
            }
            _ => {}
        }
    }
    chars
}

/// Number of classes of primitive forms in the genus of `f`.
pub fn classes_in_genus(f: &BinaryForm) -> Result<usize> {
    if !f.is_primitive() {
        return Err(Error::NotPrimitive(f.encode()));
    }
    let target = genus_characters(f);
    Ok(reduced_forms(f.discriminant())
        .iter()
        .filter(|g| genus_characters(g) == target)
        .count())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum UniversalityVerdict {
    Universal,
    NotPrimitive,
    /// An odd prime divides the discriminant, so the modulus 8 misses it.
    OddPrimeInDiscriminant { prime: u64 },
    GenusHasSeveralClasses { classes: usize },
    LocalObstruction { prime: u64, residue: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversalityCertificate {
    pub form: BinaryForm,
    pub eta: u8,
    pub verdict: UniversalityVerdict,
    /// A prime in the class not represented by the form, when rejected and
    /// one was found below the search limit.
    pub missed_prime: Option<u64>,
}

impl UniversalityCertificate {
    pub fn is_universal(&self) -> bool {
        self.verdict == UniversalityVerdict::Universal
    }
}

const WITNESS_SEARCH_LIMIT: u64 = 1_000_000;

fn decide_p8(a: i64, b: i64, eta: u8) -> Result<UniversalityVerdict> {
    let f = BinaryForm::diagonal(a, b)?;
    if !f.is_primitive() {
        return Ok(UniversalityVerdict::NotPrimitive);
    }
    if let Some(&p) = odd_prime_divisors((a * b) as u64).first() {
        return Ok(UniversalityVerdict::OddPrimeInDiscriminant { prime: p });
    }
    let classes = classes_in_genus(&f)?;
    if classes > 1 {
        return Ok(UniversalityVerdict::GenusHasSeveralClasses { classes });
    }
    // one class in the genus: q is represented iff it is represented at 2
    // and at q itself; with a power-of-two discriminant both depend only on
    // q mod 8 (2-adically, on q mod 8·ab)
    let modulus = 8 * a * b;
    for r in (eta as i64..modulus).step_by(8) {
        if !binary_represents_locally(a, b, 2, r)? {
            return Ok(UniversalityVerdict::LocalObstruction { prime: 2, residue: r });
        }
    }
    let q = ap_primes(eta, 1)[0];
    if !binary_represents_locally(a, b, q, q as i64)? {
        return Ok(UniversalityVerdict::LocalObstruction { prime: q, residue: q as i64 });
    }
    Ok(UniversalityVerdict::Universal)
}

/// Exact decision of `P(8, η)`-universality for a diagonal form.
pub fn is_p8_universal(f: &BinaryForm, eta: u8) -> Result<UniversalityCertificate> {
    check_eta(eta)?;
    if !f.is_diagonal() {
        return Err(Error::InvalidArgument(format!("{} is not diagonal", f.encode())));
    }
    let verdict = decide_p8(f.a, f.c, eta)?;
    let missed_prime = if verdict == UniversalityVerdict::Universal {
        None
    } else {
        primes_up_to(WITNESS_SEARCH_LIMIT)
            .into_iter()
            .filter(|&q| q % 8 == eta as u64)
            .find(|&q| !binary_represents(f, q as i64))
    };
    Ok(UniversalityCertificate { form: *f, eta, verdict, missed_prime })
}

/// Fast membership test used inside the ψ scan.
fn in_universal_set(i: i64, j: i64, eta: u8) -> bool {
    matches!(decide_p8(i, j, eta), Ok(UniversalityVerdict::Universal))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversalitySet {
    pub eta: u8,
    pub members: Vec<BinaryForm>,
}

/// All `P(8, η)`-universal diagonal forms `⟨a, b⟩` with `ab ≤ disc_cap`.
pub fn universal_set(eta: u8, disc_cap: i64) -> Result<UniversalitySet> {
    check_eta(eta)?;
    let mut members = Vec::new();
    for a in 1..=disc_cap {
        for b in a..=disc_cap / a {
            if in_universal_set(a, b, eta) {
                members.push(BinaryForm::diagonal(a, b)?);
            }
        }
    }
    Ok(UniversalitySet { eta, members })
}

// ---------------------------------------------------------------------------

fn diagonal_represents(i: i64, j: i64, n: i64) -> bool {
    let mut y = 0;
    while j * y * y <= n {
        let r = n - j * y * y;
        if r % i == 0 && crate::arith::is_square(r / i) {
            return true;
        }
        y += 1;
    }
    false
}

/// `ξ_η(i, j; w)`: how many of the first `w` primes `≡ η (mod 8)` are
/// represented by `⟨i, j⟩`.
pub fn xi(eta: u8, i: i64, j: i64, w: usize) -> Result<usize> {
    check_eta(eta)?;
    Ok(ap_primes(eta, w).iter().filter(|&&q| diagonal_represents(i, j, q as i64)).count())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsiTable {
    pub eta: u8,
    pub u: i64,
    pub v: i64,
    pub w: usize,
    pub value: usize,
    /// First pair (in scan order) attaining the maximum.
    pub argmax: (i64, i64),
    /// `ξ` for every admissible pair, keyed by `(i, j)`.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub xi: BTreeMap<String, usize>,
}

/// `ψ_η(u, v; w)` together with the per-pair `ξ` values.
pub fn psi(eta: u8, u: i64, v: i64, w: usize) -> Result<PsiTable> {
    check_eta(eta)?;
    if u < 1 || u > v || w < 1 {
        return Err(Error::InvalidArgument(format!("psi needs 1 ≤ u ≤ v and w ≥ 1, got u={u} v={v} w={w}")));
    }
    let primes = ap_primes(eta, w);
    let rows: Vec<Vec<(i64, i64, usize)>> = (1..=u)
        .into_par_iter()
        .map(|i| {
            (i..=v)
                .filter(|&j| !in_universal_set(i, j, eta))
                .map(|j| {
                    let x = primes.iter().filter(|&&q| diagonal_represents(i, j, q as i64)).count();
                    (i, j, x)
                })
                .collect()
        })
        .collect();
    let mut value = 0;
    let mut argmax = (0, 0);
    let mut xi = BTreeMap::new();
    for (i, j, x) in rows.into_iter().flatten() {
        if x > value || argmax == (0, 0) {
            value = x;
            argmax = (i, j);
        }
        xi.insert(format!("{i},{j}"), x);
    }
    Ok(PsiTable { eta, u, v, w, value, argmax, xi })
}

impl PsiTable {
    pub fn summary(mut self) -> Self {
        self.xi.clear();
        self
    }
}

/// Whether `q` is a prime in `P(8, η)`.
pub fn in_p8(q: u64, eta: u8) -> bool {
    q % 8 == eta as u64 && is_prime(q)
}
