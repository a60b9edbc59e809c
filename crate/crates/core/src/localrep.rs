//! Representation over ℤ_p: Jordan data at odd primes, an exact recursive
//! Hensel solver (used at 2 and for witnesses), genus-level representability,
//! anisotropy, stability and the residue choice used in the bound lemmas.

use std::collections::HashMap;
use std::sync::Mutex;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith::{legendre, odd_prime_divisors, valuation};
use crate::error::{Error, Result};
use crate::forms::{DiagonalForm, GramLattice};

const MAX_DEPTH: usize = 96;

/// A quadratic polynomial `c + ℓ·w + ½ wᵀHw` in up to three variables with
/// `H` symmetric and even on the diagonal.
#[derive(Clone, Debug)]
struct QuadPoly {
    dim: usize,
    c: i128,
    lin: [i128; 3],
    h: [[i128; 3]; 3],
}

impl QuadPoly {
    fn eval(&self, w: &[i128; 3]) -> i128 {
        let mut s = self.c;
        for i in 0..self.dim {
            s += self.lin[i] * w[i] + (self.h[i][i] / 2) * w[i] * w[i];
            for j in i + 1..self.dim {
                s += self.h[i][j] * w[i] * w[j];
            }
        }
        s
    }

    fn grad(&self, w: &[i128; 3], i: usize) -> i128 {
        let mut s = self.lin[i];
        for j in 0..self.dim {
            s += self.h[i][j] * w[j];
        }
        s
    }

    /// Minimal valuation of the non-constant coefficients, `None` if all vanish.
    fn coeff_valuation(&self, p: u64) -> Option<u32> {
        let mut m: Option<u32> = None;
        let mut see = |x: i128| {
            if x != 0 {
                let v = valuation(x, p);
                m = Some(m.map_or(v, |m| m.min(v)));
            }
        };
        for i in 0..self.dim {
            see(self.lin[i]);
            see(self.h[i][i] / 2);
            for j in i + 1..self.dim {
                see(self.h[i][j]);
            }
        }
        m
    }

    fn divide(&mut self, d: i128) {
        self.c /= d;
        for i in 0..self.dim {
            self.lin[i] /= d;
            for j in 0..self.dim {
                self.h[i][j] /= d;
            }
        }
    }
}

/// A residue vector with `Q(x) ≡ n (mod p^exponent)` and
/// `exponent = 2·ord_p(Gx) + 1`, which suffices for Hensel lifting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<i128>,
    pub exponent: u32,
}

/// Position of the current subproblem inside the original coordinates:
/// `x = base + step · w`.
#[derive(Clone, Copy)]
struct Frame {
    base: [i128; 3],
    step: i128,
}

struct Solver<'a> {
    p: u64,
    gram: &'a [[i128; 3]; 3],
    dim: usize,
    target: i128,
    want_witness: bool,
}

enum Outcome {
    No,
    Yes(Option<Witness>),
}

impl Solver<'_> {
    fn solve(&self, mut f: QuadPoly, frame: Option<Frame>, depth: usize) -> Result<Outcome> {
        if depth > MAX_DEPTH {
            return Err(Error::Internal("p-adic solver exceeded depth guard".into()));
        }
        let p = self.p as i128;
        if f.c == 0 {
            let w = frame.and_then(|fr| self.finish(&fr.base));
            return Ok(Outcome::Yes(w));
        }
        let mu = match f.coeff_valuation(self.p) {
            None => return Ok(Outcome::No),
            Some(mu) => mu,
        };
        if valuation(f.c, self.p) < mu {
            return Ok(Outcome::No);
        }
        f.divide(p.pow(mu));

        let mut singular = Vec::new();
        for w0 in residues(self.p, self.dim) {
            if f.eval(&w0).rem_euclid(p) != 0 {
                continue;
            }
            if let Some(i) = (0..self.dim).find(|&i| f.grad(&w0, i).rem_euclid(p) != 0) {
                let w = frame.and_then(|fr| self.lift(&f, &fr, w0, i));
                return Ok(Outcome::Yes(w));
            }
            singular.push(w0);
        }
        for w0 in singular {
            let mut g = f.clone();
            g.c = f.eval(&w0);
            for i in 0..self.dim {
                g.lin[i] = p * f.grad(&w0, i);
                for j in 0..self.dim {
                    g.h[i][j] = p * p * f.h[i][j];
                }
            }
            let next = frame.and_then(|fr| {
                let mut base = fr.base;
                for i in 0..self.dim {
                    base[i] = base[i].checked_add(fr.step.checked_mul(w0[i])?)?;
                }
                Some(Frame { base, step: fr.step.checked_mul(p)? })
            });
            if let Outcome::Yes(w) = self.solve(g, next, depth + 1)? {
                return Ok(Outcome::Yes(w));
            }
        }
        Ok(Outcome::No)
    }

    /// Lifts a simple root along coordinate `i` until the Hensel exponent is met.
    fn lift(&self, f: &QuadPoly, fr: &Frame, w0: [i128; 3], i: usize) -> Option<Witness> {
        if !self.want_witness {
            return None;
        }
        let p = self.p as i128;
        let mut w = w0;
        let mut pj: i128 = p;
        for _ in 0..MAX_DEPTH {
            let mut x = fr.base;
            for k in 0..self.dim {
                x[k] = x[k].checked_add(fr.step.checked_mul(w[k])?)?;
            }
            if let Some(wit) = self.finish(&x) {
                return Some(wit);
            }
            // next p-adic digit of the root along coordinate i
            let mut found = false;
            for d in 0..p {
                let mut t = w;
                t[i] = t[i].checked_add(pj.checked_mul(d)?)?;
                if f.eval(&t).rem_euclid(pj.checked_mul(p)?) == 0 {
                    w = t;
                    found = true;
                    break;
                }
            }
            if !found {
                return None;
            }
            pj = pj.checked_mul(p)?;
        }
        None
    }

    /// Accepts `x` if it already satisfies the Hensel exponent.
    fn finish(&self, x: &[i128; 3]) -> Option<Witness> {
        if !self.want_witness {
            return None;
        }
        let mut gx_val = u32::MAX;
        let mut qx: i128 = 0;
        for i in 0..self.dim {
            let mut s: i128 = 0;
            for j in 0..self.dim {
                s = s.checked_add(self.gram[i][j].checked_mul(x[j])?)?;
            }
            gx_val = gx_val.min(valuation(s, self.p));
            qx = qx.checked_add(s.checked_mul(x[i])?)?;
        }
        qx /= 2;
        if self.target == 0 {
            return Some(Witness { x: vec![0; self.dim], exponent: 1 });
        }
        if gx_val == u32::MAX {
            return None;
        }
        let k = 2 * gx_val + 1;
        let modulus = (self.p as i128).checked_pow(k)?;
        if (qx - self.target).rem_euclid(modulus) == 0 {
            let x = x[..self.dim].iter().map(|&c| c.rem_euclid(modulus)).collect();
            Some(Witness { x, exponent: k })
        } else {
            None
        }
    }
}

fn residues(p: u64, dim: usize) -> impl Iterator<Item = [i128; 3]> {
    let p = p as i128;
    let total = p.pow(dim as u32);
    (0..total).map(move |mut idx| {
        let mut w = [0i128; 3];
        for slot in w.iter_mut().take(dim) {
            *slot = idx % p;
            idx /= p;
        }
        w
    })
}

/// Exact decision of `n ⟶ L_p` for a rank-2 or rank-3 doubled Gram matrix.
fn solve_local(gram: &[[i128; 3]; 3], dim: usize, p: u64, n: i128, want_witness: bool) -> Result<(bool, Option<Witness>)> {
    let solver = Solver { p, gram, dim, target: n, want_witness };
    let f = QuadPoly { dim, c: -n, lin: [0; 3], h: *gram };
    let frame = Some(Frame { base: [0; 3], step: 1 });
    match solver.solve(f, frame, 0)? {
        Outcome::No => Ok((false, None)),
        Outcome::Yes(w) => Ok((true, w)),
    }
}

fn widen(l: &GramLattice) -> [[i128; 3]; 3] {
    let g = l.gram();
    let mut out = [[0i128; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = g[i][j] as i128;
        }
    }
    out
}

// ---------------------------------------------------------------------------

/// One rank-one Jordan constituent `p^exponent · u` of `B = G/2` at an odd
/// prime, with `unit_class = (u / p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JordanEntry {
    pub exponent: u32,
    pub unit_class: i32,
}

fn ratio_valuation(r: &Ratio<i128>, p: u64) -> i64 {
    valuation(*r.numer(), p) as i64 - valuation(*r.denom(), p) as i64
}

fn ratio_unit_class(r: &Ratio<i128>, p: u64) -> i32 {
    let strip = |mut x: i128| {
        while x % p as i128 == 0 {
            x /= p as i128;
        }
        x
    };
    let u = strip(*r.numer()).rem_euclid(p as i128) * strip(*r.denom()).rem_euclid(p as i128);
    legendre((u % p as i128) as i64, p)
}

/// Diagonalisation of `B = G/2` over ℤ_p for odd `p`, sorted by exponent.
pub fn jordan_odd(gram: &[Vec<i64>], p: u64) -> Vec<JordanEntry> {
    assert!(p % 2 == 1, "odd primes only");
    let n = gram.len();
    let mut m: Vec<Vec<Ratio<i128>>> = gram
        .iter()
        .map(|row| row.iter().map(|&x| Ratio::from_integer(x as i128)).collect())
        .collect();
    let mut active: Vec<usize> = (0..n).collect();
    let two_class = legendre(2, p);
    let mut out = Vec::with_capacity(n);
    while !active.is_empty() {
        let val = |r: &Ratio<i128>| if r.is_zero() { i64::MAX } else { ratio_valuation(r, p) };
        let (mut di, mut dv) = (usize::MAX, i64::MAX);
        for &i in &active {
            if val(&m[i][i]) < dv {
                dv = val(&m[i][i]);
                di = i;
            }
        }
        let (mut oi, mut oj, mut ov) = (usize::MAX, usize::MAX, i64::MAX);
        for &i in &active {
            for &j in &active {
                if i < j && val(&m[i][j]) < ov {
                    ov = val(&m[i][j]);
                    oi = i;
                    oj = j;
                }
            }
        }
        let piv = if dv <= ov {
            di
        } else {
            // e_i <- e_i + e_j; the new diagonal has the off-diagonal valuation
            for k in 0..n {
                let t = m[oj][k];
                m[oi][k] += t;
            }
            for k in 0..n {
                let t = m[k][oj];
                m[k][oi] += t;
            }
            oi
        };
        let d = m[piv][piv];
        assert!(!d.is_zero(), "degenerate form in Jordan decomposition");
        active.retain(|&k| k != piv);
        for &k in &active {
            for &l in &active {
                let t = m[k][piv] * m[piv][l] / d;
                m[k][l] -= t;
            }
        }
        out.push(JordanEntry {
            exponent: ratio_valuation(&d, p) as u32,
            unit_class: ratio_unit_class(&d, p) * two_class,
        });
    }
    out.sort();
    out
}

fn gram_rows(l: &GramLattice) -> Vec<Vec<i64>> {
    l.gram().iter().map(|r| r.to_vec()).collect()
}

/// `n ⟶ L_p` for odd `p`, decided from Jordan data by peeling one power of
/// `p` at a time.
fn odd_represents(entries: &[JordanEntry], p: u64, n: i128) -> bool {
    if n == 0 {
        return true;
    }
    let (mut v, u) = {
        let v = valuation(n, p);
        (v, n / (p as i128).pow(v))
    };
    let n_class = legendre((u.rem_euclid(p as i128)) as i64, p);
    let minus_one = legendre(-1, p);
    let mut exps: Vec<(u32, i32)> = entries.iter().map(|e| (e.exponent, e.unit_class)).collect();
    loop {
        let units: Vec<i32> = exps.iter().filter(|e| e.0 == 0).map(|e| e.1).collect();
        if v == 0 {
            return units.len() >= 2 || (units.len() == 1 && units[0] == n_class);
        }
        if units.len() >= 3 || (units.len() == 2 && minus_one * units[0] * units[1] == 1) {
            return true;
        }
        for e in exps.iter_mut() {
            e.0 = if e.0 == 0 { 1 } else { e.0 - 1 };
        }
        v -= 1;
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalReport {
    pub prime: u64,
    pub target: i64,
    pub represented: bool,
    pub witness: Option<Witness>,
    pub obstruction: Option<String>,
}

/// Verdict of `n ⟶ L_p`, with a residue witness when `p` is small enough for
/// the residue search.
pub fn represents_locally(l: &GramLattice, p: u64, n: i64) -> Result<LocalReport> {
    if n < 0 {
        return Err(Error::InvalidArgument(format!("target must be nonnegative, got {n}")));
    }
    let g = widen(l);
    let (represented, witness) = if p == 2 || p <= 31 {
        solve_local(&g, 3, p, n as i128, true)?
    } else {
        (odd_represents(&jordan_odd(&gram_rows(l), p), p, n as i128), None)
    };
    let obstruction = (!represented).then(|| {
        format!("Q(x) = {n} has no solution over Z_{p}")
    });
    Ok(LocalReport { prime: p, target: n, represented, witness, obstruction })
}

/// Local representation by a binary form `⟨a, b⟩` over ℤ_p.
pub fn binary_represents_locally(a: i64, b: i64, p: u64, n: i64) -> Result<bool> {
    let mut g = [[0i128; 3]; 3];
    g[0][0] = 2 * a as i128;
    g[1][1] = 2 * b as i128;
    Ok(solve_local(&g, 2, p, n as i128, false)?.0)
}

/// Primes at which a rank-3 lattice can fail to be unimodular: 2 and the odd
/// primes dividing `det G`.
pub fn bad_primes(l: &GramLattice) -> Vec<u64> {
    let mut ps = vec![2];
    ps.extend(odd_prime_divisors(l.det_g().unsigned_abs() as u64));
    ps
}

/// Largest exponent `e` with `ord_p(Gy) ≤ e` for all primitive `y`: the
/// valuation of the top invariant factor of `G`.
pub fn top_invariant_valuation(l: &GramLattice, p: u64) -> u32 {
    let g = l.gram();
    let mut minors_gcd: i128 = 0;
    for (r0, r1) in [(0, 1), (0, 2), (1, 2)] {
        for (c0, c1) in [(0, 1), (0, 2), (1, 2)] {
            let m = g[r0][c0] as i128 * g[r1][c1] as i128 - g[r0][c1] as i128 * g[r1][c0] as i128;
            minors_gcd = minors_gcd.gcd(&m);
        }
    }
    valuation(l.det_g(), p) - valuation(minors_gcd, p)
}

enum PrimeOracle {
    Odd { p: u64, entries: Vec<JordanEntry> },
    Two { k: u32, cache: Mutex<HashMap<(u32, u64), bool>> },
}

/// Cached genus-level representability test for one lattice.
pub struct LocalOracle {
    lattice: GramLattice,
    gram: [[i128; 3]; 3],
    primes: Vec<PrimeOracle>,
}

impl LocalOracle {
    pub fn new(l: &GramLattice) -> Self {
        let mut primes = Vec::new();
        for p in bad_primes(l) {
            if p == 2 {
                let k = 2 * top_invariant_valuation(l, 2) + 1;
                primes.push(PrimeOracle::Two { k, cache: Mutex::new(HashMap::new()) });
            } else {
                primes.push(PrimeOracle::Odd { p, entries: jordan_odd(&gram_rows(l), p) });
            }
        }
        LocalOracle { lattice: *l, gram: widen(l), primes }
    }

    pub fn lattice(&self) -> &GramLattice {
        &self.lattice
    }

    /// `n ⟶ L_2`. Representability depends only on `ord_2(n)` (capped with
    /// its parity past `k`) and the odd part of `n` modulo `2^k`.
    pub fn represents_at_two(&self, n: i64) -> bool {
        let PrimeOracle::Two { k, cache } = &self.primes[0] else { unreachable!() };
        if n == 0 {
            return true;
        }
        let v = n.trailing_zeros();
        let u = (n >> v) as u64 & ((1u64 << k) - 1);
        let v_key = if v < *k { v } else { k + (v - k) % 2 };
        if let Some(&b) = cache.lock().expect("cache poisoned").get(&(v_key, u)) {
            return b;
        }
        let rep = (u as i128) << v_key;
        let b = solve_local(&self.gram, 3, 2, rep, false).map(|r| r.0).unwrap_or_else(|e| {
            panic!("2-adic solver failed for {}: {e}", self.lattice)
        });
        cache.lock().expect("cache poisoned").insert((v_key, u), b);
        b
    }

    pub fn represents_at(&self, p: u64, n: i64) -> bool {
        if p == 2 {
            return self.represents_at_two(n);
        }
        for po in &self.primes {
            if let PrimeOracle::Odd { p: q, entries } = po {
                if *q == p {
                    return odd_represents(entries, p, n as i128);
                }
            }
        }
        true
    }

    pub fn represents(&self, n: i64) -> bool {
        if n < 0 {
            return false;
        }
        self.primes.iter().all(|po| match po {
            PrimeOracle::Two { .. } => self.represents_at_two(n),
            PrimeOracle::Odd { p, entries } => odd_represents(entries, *p, n as i128),
        })
    }
}

/// `n ⟶ gen(L)`.
pub fn represents_genus(l: &GramLattice, n: i64) -> bool {
    LocalOracle::new(l).represents(n)
}

// ---------------------------------------------------------------------------

/// Whether `L ⊗ ℚ_p` is anisotropic at an odd prime.
pub fn is_anisotropic_at(l: &GramLattice, p: u64) -> bool {
    anisotropic_from_entries(&jordan_odd(&gram_rows(l), p), p)
}

fn anisotropic_from_entries(entries: &[JordanEntry], p: u64) -> bool {
    let (even, odd): (Vec<&JordanEntry>, Vec<&JordanEntry>) = entries.iter().partition(|e| e.exponent % 2 == 0);
    let pair = match (even.len(), odd.len()) {
        (2, 1) => [even[0].unit_class, even[1].unit_class],
        (1, 2) => [odd[0].unit_class, odd[1].unit_class],
        _ => return false,
    };
    legendre(-1, p) * pair[0] * pair[1] == -1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnisotropySet {
    pub primes: Vec<u64>,
}

impl AnisotropySet {
    pub fn t(&self) -> usize {
        self.primes.len()
    }

    pub fn of_class(&self, eta: u8) -> Vec<u64> {
        self.primes.iter().copied().filter(|p| p % 8 == eta as u64).collect()
    }

    pub fn t_eta(&self, eta: u8) -> usize {
        self.of_class(eta).len()
    }

    pub fn product(&self) -> u64 {
        self.primes.iter().product()
    }
}

pub fn anisotropic_primes(l: &GramLattice) -> AnisotropySet {
    let primes = odd_prime_divisors(l.det_g().unsigned_abs() as u64)
        .into_iter()
        .filter(|&p| is_anisotropic_at(l, p))
        .collect();
    AnisotropySet { primes }
}

/// Which clause of the stability definition holds at `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StableCase {
    /// The hyperbolic plane `⟨1, -1⟩` is represented.
    SplitsHyperbolic,
    /// `L_p ≅ ⟨1, -Δ_p⟩ ⊥ ⟨p ε⟩`.
    AnisotropicPlane,
    Both,
}

pub fn stability_case(l: &GramLattice, p: u64) -> Option<StableCase> {
    let entries = jordan_odd(&gram_rows(l), p);
    let units: Vec<i32> = entries.iter().filter(|e| e.exponent == 0).map(|e| e.unit_class).collect();
    match units.len() {
        3 => Some(StableCase::SplitsHyperbolic),
        2 => {
            let isotropic = legendre(-1, p) * units[0] * units[1] == 1;
            let third_is_p = entries[2].exponent == 1;
            match (isotropic, third_is_p) {
                (true, true) => Some(StableCase::Both),
                (true, false) => Some(StableCase::SplitsHyperbolic),
                (false, true) => Some(StableCase::AnisotropicPlane),
                (false, false) => None,
            }
        }
        _ => None,
    }
}

pub fn is_p_stable(l: &GramLattice, p: u64) -> bool {
    stability_case(l, p).is_some()
}

/// Stability at every odd prime (automatic away from the discriminant).
pub fn is_stable(l: &GramLattice) -> bool {
    odd_prime_divisors(l.det_g().unsigned_abs() as u64)
        .into_iter()
        .all(|p| is_p_stable(l, p))
}

/// First odd prime at which stability fails.
pub fn first_unstable_prime(l: &GramLattice) -> Option<u64> {
    odd_prime_divisors(l.det_g().unsigned_abs() as u64)
        .into_iter()
        .find(|&p| !is_p_stable(l, p))
}

/// The unimodular Jordan constituent at `p` is anisotropic (rank ≤ 1 counts,
/// rank 2 needs `-u1 u2` nonsquare).
pub fn unimodular_component_anisotropic(l: &GramLattice, p: u64) -> bool {
    let entries = jordan_odd(&gram_rows(l), p);
    let units: Vec<i32> = entries.iter().filter(|e| e.exponent == 0).map(|e| e.unit_class).collect();
    match units.len() {
        0 | 1 => true,
        2 => legendre(-1, p) * units[0] * units[1] == -1,
        _ => false,
    }
}

/// Residues `α ∈ {1,3,5,7}` with every `n ≡ α (mod 8)` represented over ℤ_2.
///
/// Odd integers in one class mod 8 share a 2-adic square class, so `α` is in
/// the profile iff `Q(x) ≡ α (mod 8)` for some `x mod 8`.
pub fn odd_profile(l: &GramLattice) -> Result<Vec<u8>> {
    let mut hit = [false; 8];
    for a in 0..8 {
        for b in 0..8 {
            for c in 0..8 {
                hit[l.q(&[a, b, c]).rem_euclid(8) as usize] = true;
            }
        }
    }
    let out: Vec<u8> = [1u8, 3, 5, 7].into_iter().filter(|&a| hit[a as usize]).collect();
    if out.is_empty() {
        return Err(Error::Internal(format!("no odd residue class is 2-adically represented by {l}")));
    }
    Ok(out)
}

/// The integer `g` with `0 ≤ g < p²` such that `8g + w` is represented by
/// `L_p` but not by the binary part, with `ord_p(8g + w) ≤ 1`.
pub fn lembound1_g(f: &DiagonalForm, w: i64, p: u64) -> Result<i64> {
    if w % 2 == 0 || p.is_multiple_of(2) {
        return Err(Error::InvalidArgument("w and p must be odd".into()));
    }
    let l = f.lattice();
    if !is_p_stable(&l, p) || !is_anisotropic_at(&l, p) {
        return Err(Error::InvalidArgument(format!("{f} must be {p}-stable and anisotropic at {p}")));
    }
    let pi = p as i64;
    let coeffs = f.coeffs();
    let k = coeffs
        .iter()
        .position(|&x| x % pi == 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{p} divides no coefficient of {f}")))?;
    let p2 = pi * pi;
    if k == 2 {
        // 8g + w ≡ c (mod p²)
        let inv8 = mod_inverse(8, p2).expect("p odd");
        return Ok(((coeffs[2] - w).rem_euclid(p2) * inv8).rem_euclid(p2));
    }
    let other = coeffs[1 - k];
    let want = -legendre(other, p);
    (0..pi)
        .find(|&g| legendre(8 * g + w, p) == want)
        .ok_or_else(|| Error::Internal("no residue of the required class".into()))
}

fn mod_inverse(a: i64, m: i64) -> Option<i64> {
    let e = a.extended_gcd(&m);
    (e.gcd == 1).then(|| e.x.rem_euclid(m))
}
