//! The classification: stable searches over bounded regions, ascents at
//! 3, 5 and 7, the assembled candidate list, exact certificates for the
//! non-regular candidates, and the finite checks that rule out other
//! missing primes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apbinary::{binary_represents, psi, universal_set};
use crate::arith::{gcd, gcd3, odd_prime_divisors, primes_up_to, q_eta, smallest_w};
use crate::error::Result;
use crate::forms::{BinaryForm, DiagonalForm, GramLattice};
use crate::genus::enumerate_genus;
use crate::localrep::{is_p_stable, is_stable, odd_profile, LocalOracle};
use crate::reference;
use crate::regproof::{
    check_trap, find_route, prec_transfers, verify_route, PrecCertificate, Route, TrapCertificate, Transfer,
};
use crate::sieve::{first_exception, Mode};
use crate::watson::{
    counting_gate, first_odd_exception, lambda_diagonal, missing_prime_scan, reduce_to_stable, CountingGate,
    ReductionChain, VariantKind,
};

pub const SEARCH_BOUND: u64 = 100_000;
pub const FINAL_BOUND: u64 = 1_000_000;
pub const DEFAULT_DISC_CAP: i64 = 100_000;
pub const ASCENT_PRIMES: [u64; 3] = [3, 5, 7];

/// Data directory: `ODDREG_DATA_DIR` if set, else the one shipped with the crate.
pub fn data_dir() -> PathBuf {
    match std::env::var_os("ODDREG_DATA_DIR") {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")),
    }
}

pub fn read_form_list(path: &Path) -> Result<Vec<DiagonalForm>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.parse())
        .collect()
}

pub fn write_form_list(path: &Path, header: &str, forms: &[DiagonalForm]) -> Result<()> {
    let mut out = format!("# {header}\n");
    for f in forms {
        let [a, b, c] = f.coeffs();
        out.push_str(&format!("{a},{b},{c}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// The regular diagonal forms shipped in `jones_pall.txt`.
pub fn load_regular_list(dir: &Path) -> Result<Vec<DiagonalForm>> {
    read_form_list(&dir.join("jones_pall.txt"))
}

// ---------------------------------------------------------------------------
// regions

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiddleRange {
    UpTo(i64),
    OneOf(Vec<i64>),
}

/// Sorted triples `a ≤ b ≤ c` within the bounds, minus `excluded_pairs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub alpha: u8,
    pub a_max: i64,
    pub b: MiddleRange,
    pub c_max: i64,
    pub excluded_pairs: Vec<(i64, i64)>,
}

impl SearchRegion {
    fn middles(&self, a: i64) -> Vec<i64> {
        match &self.b {
            MiddleRange::UpTo(m) => (a..=*m).collect(),
            MiddleRange::OneOf(v) => v.iter().copied().filter(|&b| b >= a).collect(),
        }
    }

    pub fn triples(&self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for a in 1..=self.a_max {
            for b in self.middles(a) {
                if self.excluded_pairs.contains(&(a, b)) {
                    continue;
                }
                for c in b..=self.c_max {
                    out.push([a, b, c]);
                }
            }
        }
        out
    }
}

pub fn terminal_regions() -> Vec<SearchRegion> {
    let r = |alpha, a_max, b, c_max, excluded_pairs| SearchRegion { alpha, a_max, b, c_max, excluded_pairs };
    vec![
        r(1, 1, MiddleRange::OneOf(vec![1, 2, 4, 8, 16]), 1633, vec![]),
        r(1, 1, MiddleRange::UpTo(73), 97, vec![]),
        r(3, 59, MiddleRange::UpTo(67), 179, vec![(1, 2)]),
        r(5, 53, MiddleRange::UpTo(61), 197, vec![(1, 1), (1, 4)]),
        r(7, 71, MiddleRange::UpTo(79), 199, vec![]),
    ]
}

// ---------------------------------------------------------------------------
// region replay

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Equal,
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub alpha: u8,
    pub claim: String,
    pub computed: i64,
    pub published: i64,
    pub relation: Relation,
}

impl ReplayStep {
    pub fn holds(&self) -> bool {
        match self.relation {
            Relation::Equal => self.computed == self.published,
            Relation::AtMost => self.computed <= self.published,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replay {
    pub steps: Vec<ReplayStep>,
    pub regions: Vec<SearchRegion>,
    /// Regions implied by a computed count above the published one; the
    /// terminal regions are sound only if these add no survivors.
    pub widened: Vec<SearchRegion>,
}

impl Replay {
    pub fn holds(&self) -> bool {
        self.steps.iter().all(ReplayStep::holds) && self.regions == terminal_regions()
    }

    pub fn failures(&self) -> Vec<&ReplayStep> {
        self.steps.iter().filter(|s| !s.holds()).collect()
    }
}

struct Audit {
    alpha: u8,
    steps: Vec<ReplayStep>,
}

impl Audit {
    fn record(&mut self, claim: String, computed: i64, published: i64, relation: Relation) -> i64 {
        self.steps.push(ReplayStep { alpha: self.alpha, claim, computed, published, relation });
        published
    }

    /// `t ≤ w − 1` for the least `w` satisfying the product inequality.
    fn t_bound(&mut self, factors: &[i64], delta: u32, published: i64) -> i64 {
        let n: BigUint = factors.iter().map(|&f| BigUint::from(f as u64)).product();
        let t = smallest_w(&n, delta) as i64 - 1;
        let shown: Vec<String> = factors.iter().map(|f| f.to_string()).collect();
        self.record(format!("t ≤ w({}, {delta}) − 1", shown.join("·")), t, published, Relation::Equal)
    }

    fn q(&mut self, label: &str, index: usize, published: i64) -> i64 {
        let q = q_eta(self.alpha, index) as i64;
        self.record(format!("{label} ≤ q({}, {index})", self.alpha), q, published, Relation::Equal)
    }

    /// Least `w` with `ψ(u, v; w) < w − t`, then `c ≤ q_w`.
    fn psi_cut(&mut self, u: i64, v: i64, t: i64, published_w: usize, published_psi: i64, published_c: i64) -> Result<i64> {
        let mut w = (t + 1) as usize;
        let value = loop {
            let value = psi(self.alpha, u, v, w)?.value as i64;
            if value < w as i64 - t {
                break value;
            }
            w += 1;
        };
        self.record(format!("least w with ψ({u}, {v}; w) < w − {t}"), w as i64, published_w as i64, Relation::Equal);
        self.record(format!("ψ({u}, {v}; {w})"), value, published_psi, Relation::Equal);
        Ok(self.q("c", published_w, published_c))
    }

    /// Largest number of distinct primes `≡ α (mod 8)` spread over the
    /// three coefficients, each prime dividing one coefficient only.
    fn prime_count(&mut self, bounds: [i64; 3], published: i64) -> (i64, i64) {
        let count = max_distinct_primes(self.alpha, bounds) as i64;
        let published = self.record(
            format!("distinct primes ≡ {} (mod 8) with a ≤ {}, b ≤ {}, c ≤ {}", self.alpha, bounds[0], bounds[1], bounds[2]),
            count,
            published,
            Relation::AtMost,
        );
        (published, count)
    }

    /// Region the computed count leads to: `a ≤ q_{t+1}`, `b ≤ q_{t+2}`,
    /// and `c ≤ q_w` for the least `w` with `ψ(a, b; w) < w − t`.
    fn widen(&self, t: i64, excluded_pairs: Vec<(i64, i64)>) -> Result<SearchRegion> {
        let eta = self.alpha;
        let a = q_eta(eta, t as usize + 1) as i64;
        let b = q_eta(eta, t as usize + 2) as i64;
        let mut w = (t + 1) as usize;
        while psi(eta, a, b, w)?.value as i64 >= w as i64 - t {
            w += 1;
        }
        Ok(SearchRegion { alpha: eta, a_max: a, b: MiddleRange::UpTo(b), c_max: q_eta(eta, w) as i64, excluded_pairs })
    }
}

pub fn max_distinct_primes(eta: u8, bounds: [i64; 3]) -> usize {
    let top = *bounds.iter().max().unwrap_or(&1);
    let primes: Vec<i64> =
        primes_up_to(top.max(2) as u64).into_iter().filter(|p| p % 8 == eta as u64).map(|p| p as i64).collect();
    fn dfs(primes: &[i64], room: [i64; 3]) -> usize {
        let Some((&p, rest)) = primes.split_first() else { return 0 };
        if room.iter().all(|&r| r < p) {
            return 0;
        }
        let mut best = dfs(rest, room);
        for k in 0..3 {
            if room[k] >= p {
                let mut next = room;
                next[k] /= p;
                best = best.max(1 + dfs(rest, next));
            }
        }
        best
    }
    dfs(&primes, bounds)
}

/// Witnesses bounding `c` when `b` is a power of two: pairwise coprime,
/// `≡ 1 (mod 8)`, and missed by every `⟨1, b⟩` of the branch.
pub fn coprime_witnesses_hold(witnesses: &[i64], bs: &[i64]) -> bool {
    let pairwise = witnesses.iter().enumerate().all(|(i, x)| witnesses[i + 1..].iter().all(|y| gcd(*x, *y) == 1));
    let missed = witnesses
        .iter()
        .all(|&e| e % 8 == 1 && bs.iter().all(|&b| !BinaryForm::diagonal(1, b).map(|f| binary_represents(&f, e)).unwrap_or(true)));
    pairwise && missed
}

/// Re-derives every terminal region from the staged bounds.
pub fn replay_regions() -> Result<Replay> {
    let mut steps = Vec::new();
    let mut regions = Vec::new();
    let mut widened = Vec::new();

    // α = 1: a = 1 throughout
    let mut au = Audit { alpha: 1, steps: vec![] };
    let t = au.t_bound(&[1], 2, 10);
    let b = au.q("b", t as usize + 1, 257);
    let t = au.t_bound(&[b], 1, 7);
    let b = au.q("b", t as usize + 1, 193);
    let c = au.psi_cut(1, b, t, 16, 8, 401)?;
    let t = au.t_bound(&[b, c], 0, 5);
    let b = au.q("b", t as usize + 1, 113);
    let (t1, _) = au.prime_count([1, b, c], 2);
    let b = au.q("b", t1 as usize + 1, 73);
    let c = au.psi_cut(1, b, t1, 5, 2, 97)?;
    let square = [1, 4, 16];
    let double = [2, 8];
    let t = au.t_bound(&[16], 1, 5);
    let ok_square = coprime_witnesses_hold(&reference::COPRIME_WITNESSES_SQUARE, &square)
        && reference::COPRIME_WITNESSES_SQUARE.len() as i64 > t;
    let ok_double = coprime_witnesses_hold(&reference::COPRIME_WITNESSES_DOUBLE, &double)
        && reference::COPRIME_WITNESSES_DOUBLE.len() as i64 > t;
    au.record("coprime witnesses for b ∈ {1, 4, 16} exceed t".into(), ok_square as i64, 1, Relation::Equal);
    au.record("coprime witnesses for b ∈ {2, 8} exceed t".into(), ok_double as i64, 1, Relation::Equal);
    let c_pow = *reference::COPRIME_WITNESSES_SQUARE.iter().chain(&reference::COPRIME_WITNESSES_DOUBLE).max().unwrap();
    let c_pow = au.record("c ≤ largest witness".into(), c_pow, 1633, Relation::Equal);
    regions.push(SearchRegion { alpha: 1, a_max: 1, b: MiddleRange::OneOf(vec![1, 2, 4, 8, 16]), c_max: c_pow, excluded_pairs: vec![] });
    regions.push(SearchRegion { alpha: 1, a_max: 1, b: MiddleRange::UpTo(b), c_max: c, excluded_pairs: vec![] });
    steps.append(&mut au.steps);

    // α ∈ {3, 5, 7}: shared opening, then per-class refinements
    struct Cut {
        count: i64,
        a: i64,
        b: i64,
        w: usize,
        psi: i64,
        c: i64,
    }
    struct Plan {
        alpha: u8,
        opening: [(i64, i64, i64); 3],
        first_psi: (usize, i64, i64),
        second_psi: Option<(usize, i64, i64)>,
        cuts: Vec<Cut>,
    }
    let cut = |count, a, b, w, psi, c| Cut { count, a, b, w, psi, c };
    let plans = [
        Plan {
            alpha: 3,
            opening: [(20, 419, 443), (9, 139, 163), (7, 107, 131)],
            first_psi: (22, 12, 443),
            second_psi: Some((20, 12, 379)),
            cuts: vec![cut(5, 67, 83, 15, 9, 251), cut(4, 59, 67, 12, 7, 179)],
        },
        Plan {
            alpha: 5,
            opening: [(20, 389, 397), (9, 157, 173), (7, 109, 149)],
            first_psi: (26, 16, 541),
            second_psi: None,
            cuts: vec![cut(4, 53, 61, 13, 8, 197)],
        },
        Plan {
            alpha: 7,
            opening: [(20, 431, 439), (9, 167, 191), (7, 127, 151)],
            first_psi: (21, 11, 431),
            second_psi: Some((17, 9, 311)),
            cuts: vec![cut(4, 71, 79, 12, 7, 199)],
        },
    ];
    for plan in plans {
        let eta = plan.alpha;
        let mut au = Audit { alpha: eta, steps: vec![] };
        let [first, second, third] = plan.opening;
        let t = au.t_bound(&[1], 3, first.0);
        let a = au.q("a", t as usize + 1, first.1);
        let b = au.q("b", t as usize + 2, first.2);
        let t = au.t_bound(&[a, b], 1, second.0);
        let a = au.q("a", t as usize + 1, second.1);
        let b = au.q("b", t as usize + 2, second.2);
        let (w, value, c_pub) = plan.first_psi;
        let mut c = au.psi_cut(a, b, t, w, value, c_pub)?;
        let t = au.t_bound(&[a, b, c], 0, third.0);
        let mut a = au.q("a", t as usize + 1, third.1);
        let mut b = au.q("b", t as usize + 2, third.2);
        if let Some((w, value, c_pub)) = plan.second_psi {
            c = au.psi_cut(a, b, t, w, value, c_pub)?;
        }
        // universal binaries ⟨1, j⟩ represent 1, so those pairs belong to α = 1
        let universal = universal_set(eta, 64)?;
        let excluded: Vec<(i64, i64)> = universal.members.iter().map(|f| (f.a, f.c)).collect();
        for step in plan.cuts {
            let (count, computed) = au.prime_count([a, b, c], step.count);
            if computed > count {
                widened.push(au.widen(computed, excluded.clone())?);
            }
            a = au.q("a", count as usize + 1, step.a);
            b = au.q("b", count as usize + 2, step.b);
            c = au.psi_cut(a, b, count, step.w, step.psi, step.c)?;
        }
        let represent_one = excluded.iter().filter(|(i, _)| *i == 1).count() as i64;
        au.record(format!("universal pairs for {eta} represent 1"), represent_one, excluded.len() as i64, Relation::Equal);
        regions.push(SearchRegion { alpha: eta, a_max: a, b: MiddleRange::UpTo(b), c_max: c, excluded_pairs: excluded });
        steps.append(&mut au.steps);
    }
    Ok(Replay { steps, regions, widened })
}

// ---------------------------------------------------------------------------
// searches

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    RegularKnown,
    StableOddRegular,
    NonstableVerified,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Search { alpha: u8 },
    Ascent { parent: DiagonalForm, prime: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub form: DiagonalForm,
    pub stable: bool,
    pub regular: bool,
    pub status: Status,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ReductionChain>,
    pub bound: u64,
    pub odd_exception: Option<u64>,
}

fn pairwise_odd_coprime(c: &[i64; 3]) -> bool {
    let ok = |x: i64, y: i64| {
        let mut g = gcd(x, y);
        while g % 2 == 0 && g > 0 {
            g /= 2;
        }
        g == 1
    };
    ok(c[0], c[1]) && ok(c[0], c[2]) && ok(c[1], c[2])
}

const QUICK_BOUND: i64 = 400;

/// Cheap rejection: an odd `n ≤ 400` the form misses but its genus hits.
fn quick_reject(f: &DiagonalForm, profile: &[u8]) -> bool {
    let [a, b, c] = f.coeffs();
    let mut hit = vec![false; QUICK_BOUND as usize + 1];
    let mut x = 0;
    while a * x * x <= QUICK_BOUND {
        let mut y = 0;
        while a * x * x + b * y * y <= QUICK_BOUND {
            let mut z = 0;
            while a * x * x + b * y * y + c * z * z <= QUICK_BOUND {
                hit[(a * x * x + b * y * y + c * z * z) as usize] = true;
                z += 1;
            }
            y += 1;
        }
        x += 1;
    }
    let bad = odd_prime_divisors((a * b * c) as u64);
    let mut oracle: Option<LocalOracle> = None;
    for n in (1..=QUICK_BOUND).step_by(2) {
        if hit[n as usize] || !profile.contains(&((n % 8) as u8)) {
            continue;
        }
        let o = oracle.get_or_insert_with(|| LocalOracle::new(&f.lattice()));
        if bad.iter().all(|&p| o.represents_at(p, n)) {
            return true;
        }
    }
    false
}

/// Smallest odd exception up to `bound`, after the cheap screen.
pub fn odd_exception(f: &DiagonalForm, bound: u64) -> Result<Option<u64>> {
    let profile = odd_profile(&f.lattice())?;
    if quick_reject(f, &profile) {
        return first_odd_exception(&f.lattice(), bound.min(QUICK_BOUND as u64));
    }
    first_odd_exception(&f.lattice(), bound)
}

pub fn is_regular(f: &DiagonalForm, bound: u64) -> Result<bool> {
    Ok(first_exception(&f.lattice(), Mode::Full, bound)?.is_none())
}

/// The form, with its smallest odd residue class, if it passes the cheap
/// filters for one of the `alphas` whose region contains it.
fn screen(t: &[i64; 3], alphas: &BTreeSet<u8>) -> Result<Option<(DiagonalForm, u8)>> {
    if gcd3(t[0], t[1], t[2]) != 1 || !pairwise_odd_coprime(t) {
        return Ok(None);
    }
    let f = DiagonalForm::new(t[0], t[1], t[2])?;
    let l = f.lattice();
    if !is_stable(&l) {
        return Ok(None);
    }
    let profile = odd_profile(&l)?;
    let Some(&alpha) = profile.first().filter(|a| alphas.contains(a)) else { return Ok(None) };
    if quick_reject(&f, &profile) {
        return Ok(None);
    }
    Ok(Some((f, alpha)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableSearch {
    pub bound: u64,
    pub examined: usize,
    pub survivors: Vec<CandidateRecord>,
}

impl StableSearch {
    pub fn forms(&self) -> Vec<DiagonalForm> {
        self.survivors.iter().map(|r| r.form).collect()
    }

    pub fn nonregular(&self) -> Vec<&CandidateRecord> {
        self.survivors.iter().filter(|r| !r.regular).collect()
    }

    pub fn regular(&self) -> Vec<&CandidateRecord> {
        self.survivors.iter().filter(|r| r.regular).collect()
    }
}

/// Stable odd-regular candidates in the given regions, checked to `bound`.
pub fn stable_search_in(regions: &[SearchRegion], bound: u64) -> Result<StableSearch> {
    let mut jobs: BTreeMap<[i64; 3], BTreeSet<u8>> = BTreeMap::new();
    for r in regions {
        for t in r.triples() {
            jobs.entry(t).or_default().insert(r.alpha);
        }
    }
    let jobs: Vec<([i64; 3], BTreeSet<u8>)> = jobs.into_iter().collect();
    let screened: Vec<(DiagonalForm, u8)> = jobs
        .par_iter()
        .map(|(t, alphas)| screen(t, alphas))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut survivors: Vec<CandidateRecord> = screened
        .par_iter()
        .map(|(f, alpha)| {
            if first_odd_exception(&f.lattice(), bound)?.is_some() {
                return Ok(None);
            }
            let regular = is_regular(f, bound)?;
            Ok(Some(CandidateRecord {
                form: *f,
                stable: true,
                regular,
                status: if regular { Status::RegularKnown } else { Status::StableOddRegular },
                provenance: Provenance::Search { alpha: *alpha },
                chain: None,
                bound,
                odd_exception: None,
            }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    survivors.sort_by_key(|r| r.form);
    Ok(StableSearch { bound, examined: jobs.len(), survivors })
}

pub fn stable_search(bound: u64) -> Result<StableSearch> {
    stable_search_in(&terminal_regions(), bound)
}

/// Forms mapped onto `parent` by `λ_p` that are not `p`-stable: the parent
/// with some coefficients multiplied by `p` or `p²`.
pub fn ascent_children(parent: &DiagonalForm, p: u64) -> Result<Vec<DiagonalForm>> {
    let pi = p as i64;
    let mut out = BTreeSet::new();
    let c = parent.coeffs();
    for code in 1..27 {
        let e = [code % 3, code / 3 % 3, code / 9];
        if e.iter().all(|&x| x > 0) {
            continue;
        }
        let m = |k: usize| c[k] * pi.pow(e[k] as u32);
        let child = DiagonalForm::normalized(m(0), m(1), m(2))?;
        let l = child.lattice();
        if !is_p_stable(&l, p) && lambda_diagonal(&child, p)? == *parent {
            out.insert(child);
        }
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AscentReport {
    pub disc_cap: i64,
    pub bound: u64,
    pub rounds: usize,
    pub found: Vec<CandidateRecord>,
    /// Odd-regular-looking children above the cap; empty means no truncation.
    pub boundary: Vec<DiagonalForm>,
}

pub fn ascent_search(stable: &[DiagonalForm], disc_cap: i64, bound: u64) -> Result<AscentReport> {
    let mut known: BTreeSet<DiagonalForm> = stable.iter().copied().collect();
    let mut frontier: Vec<DiagonalForm> = stable.to_vec();
    let mut found = Vec::new();
    let mut boundary = BTreeSet::new();
    let mut rounds = 0;
    while !frontier.is_empty() {
        rounds += 1;
        let mut children: BTreeMap<DiagonalForm, (DiagonalForm, u64)> = BTreeMap::new();
        for parent in &frontier {
            for p in ASCENT_PRIMES {
                for child in ascent_children(parent, p)? {
                    if !known.contains(&child) {
                        children.entry(child).or_insert((*parent, p));
                    }
                }
            }
        }
        let checked: Vec<(DiagonalForm, (DiagonalForm, u64), bool, bool)> = children
            .into_par_iter()
            .map(|(child, origin)| {
                let over = child.discriminant() > disc_cap;
                let check = if over { bound.min(10_000) } else { bound };
                Ok((child, origin, over, odd_exception(&child, check)?.is_none()))
            })
            .collect::<Result<Vec<_>>>()?;
        frontier.clear();
        for (child, (parent, prime), over, clean) in checked {
            if !clean {
                continue;
            }
            if over {
                boundary.insert(child);
                continue;
            }
            known.insert(child);
            frontier.push(child);
            let regular = is_regular(&child, bound)?;
            found.push(CandidateRecord {
                form: child,
                stable: false,
                regular,
                status: if regular { Status::RegularKnown } else { Status::Open },
                provenance: Provenance::Ascent { parent, prime },
                chain: Some(reduce_to_stable(&child)?),
                bound,
                odd_exception: None,
            });
        }
    }
    found.sort_by_key(|r| r.form);
    Ok(AscentReport { disc_cap, bound, rounds, found, boundary: boundary.into_iter().collect() })
}

// ---------------------------------------------------------------------------
// certification of non-regular candidates

/// Verified trap transfers loaded from `certs/trap_*.json`.
pub fn load_trap_transfers(dir: &Path) -> Result<Vec<Transfer>> {
    let mut out = Vec::new();
    let certs = dir.join("certs");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&certs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("trap_") && n.ends_with(".json")))
        .collect();
    paths.sort();
    for path in paths {
        let cert = TrapCertificate::load(&path)?;
        let verdict = check_trap(&cert)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trap");
        out.push(Transfer::from_trap(name, &cert, &verdict)?);
    }
    Ok(out)
}

/// `≺` certificates under `certs/prec/`, each re-verified.
pub fn load_prec_certificates(dir: &Path) -> Result<Vec<(PathBuf, PrecCertificate, bool)>> {
    let prec = dir.join("certs").join("prec");
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(&prec) {
        Ok(entries) => entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect(),
        Err(_) => return Ok(vec![]),
    };
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p)?;
            let cert: PrecCertificate = serde_json::from_str(&text)?;
            let holds = cert.verify()?.holds();
            Ok((p, cert, holds))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Sublattices of the mate embed into the form itself.
    Sublattice,
    Prec,
    Trap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MateCertificate {
    pub mate: GramLattice,
    pub method: Option<Method>,
    pub route: Option<Route>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormCertificate {
    pub form: DiagonalForm,
    pub class_number: usize,
    pub mates: Vec<MateCertificate>,
}

impl FormCertificate {
    pub fn certified(&self) -> bool {
        self.mates.iter().all(|m| m.route.is_some())
    }

    pub fn methods(&self) -> BTreeSet<Method> {
        self.mates.iter().filter_map(|m| m.method).collect()
    }
}

fn route_method(route: &Route) -> Method {
    let sources: Vec<&str> = route.pieces.iter().map(|p| p.transfer.source.as_str()).collect();
    if sources.iter().any(|s| s.starts_with("trap")) {
        Method::Trap
    } else if sources.iter().any(|s| s.starts_with("prec")) {
        Method::Prec
    } else {
        Method::Sublattice
    }
}

/// Tries, per genus mate: sublattices alone, then trap transfers, then `≺`
/// at 4 and 8, then `≺` at 3 and 24.
pub fn certify_mate(mate: &GramLattice, form: &GramLattice, traps: &[Transfer]) -> Result<MateCertificate> {
    let direct = vec![Transfer::direct(form)];
    let mut attempts: Vec<(Vec<Transfer>, Vec<u64>)> = vec![(direct.clone(), vec![2])];
    let usable: Vec<Transfer> = traps.iter().filter(|t| t.target == *form).cloned().collect();
    if !usable.is_empty() {
        let mut ts = direct.clone();
        ts.extend(usable);
        attempts.push((ts, vec![2, 6]));
    }
    let mut small = direct.clone();
    small.extend(prec_transfers(mate, form, &[4, 8])?);
    attempts.push((small.clone(), vec![2, 4]));
    let mut wide = small;
    wide.extend(prec_transfers(mate, form, &[3, 24])?);
    attempts.push((wide, vec![2, 6]));
    for (transfers, moduli) in attempts {
        if let Some(route) = find_route(mate, &transfers, &moduli) {
            if verify_route(&route).holds() {
                return Ok(MateCertificate { mate: *mate, method: Some(route_method(&route)), route: Some(route) });
            }
        }
    }
    Ok(MateCertificate { mate: *mate, method: None, route: None })
}

pub fn certify_form(form: &DiagonalForm, traps: &[Transfer]) -> Result<FormCertificate> {
    let l = form.lattice();
    let genus = enumerate_genus(&l)?;
    let mates = genus.mates().iter().map(|m| certify_mate(m, &l, traps)).collect::<Result<Vec<_>>>()?;
    Ok(FormCertificate { form: *form, class_number: genus.class_number, mates })
}

/// A printed `mate ≺_{l,r} form` instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecInstance {
    pub mate: GramLattice,
    pub form: DiagonalForm,
    pub l: u64,
    pub r: u64,
}

impl PrecInstance {
    /// File stem used under `certs/prec/`.
    pub fn stem(&self) -> String {
        let [a, b, c] = self.form.coeffs();
        format!("{a}-{b}-{c}_l{}_r{}", self.l, self.r)
    }
}

/// Every published `≺` instance, mates taken from the printed matrices where
/// given and from the genus otherwise.
pub fn published_prec_instances() -> Result<Vec<PrecInstance>> {
    let mut out = Vec::new();
    for (i, pairs) in reference::STABLE_PREC {
        let [a, b, c] = reference::STABLE_NONREGULAR[i - 1].1;
        let form = DiagonalForm::new(a, b, c)?;
        let mate = GramLattice::from_bilinear(reference::STABLE_MATES[i - 1])?;
        out.extend(pairs.iter().map(|&(l, r)| PrecInstance { mate, form, l, r }));
    }
    for (i, pairs) in reference::NONSTABLE_PREC {
        let [a, b, c] = reference::nonstable(i);
        let form = DiagonalForm::new(a, b, c)?;
        let mate = if i == 12 {
            GramLattice::from_bilinear(reference::MATE_12)?
        } else {
            let mates = enumerate_genus(&form.lattice())?.mates();
            *mates.first().ok_or_else(|| crate::error::Error::Internal(format!("{form} has class number one")))?
        };
        out.extend(pairs.iter().map(|&(l, r)| PrecInstance { mate, form, l, r }));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// the assembled list

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub stable: StableSearch,
    pub ascent: AscentReport,
    pub candidates: Vec<CandidateRecord>,
    pub certificates: Vec<FormCertificate>,
    pub regular_list_matches: Option<bool>,
    pub discrepancies: Vec<String>,
}

impl Classification {
    pub fn count(&self, status: Status) -> usize {
        self.candidates.iter().filter(|c| c.status == status).count()
    }

    pub fn regular_forms(&self) -> Vec<DiagonalForm> {
        self.candidates.iter().filter(|c| c.regular).map(|c| c.form).collect()
    }

    pub fn nonstable_nonregular(&self) -> Vec<&CandidateRecord> {
        self.candidates.iter().filter(|c| !c.stable && !c.regular).collect()
    }
}

/// Stable search, ascent, certification of every non-regular candidate,
/// and comparison with the shipped regular list when `regular_list` is given.
pub fn classify(
    bound: u64,
    disc_cap: i64,
    traps: &[Transfer],
    regular_list: Option<&[DiagonalForm]>,
) -> Result<Classification> {
    let stable = stable_search(bound)?;
    let ascent = ascent_search(&stable.forms(), disc_cap, bound)?;
    let mut candidates: Vec<CandidateRecord> = stable.survivors.iter().chain(&ascent.found).cloned().collect();
    candidates.sort_by_key(|c| c.form);
    let mut certificates = Vec::new();
    for c in candidates.iter_mut().filter(|c| !c.regular) {
        let cert = certify_form(&c.form, traps)?;
        if !c.stable {
            c.status = if cert.certified() { Status::NonstableVerified } else { Status::Open };
        }
        certificates.push(cert);
    }
    let mut discrepancies = Vec::new();
    if !ascent.boundary.is_empty() {
        discrepancies.push(format!("{} forms above the discriminant cap look odd-regular", ascent.boundary.len()));
    }
    for c in &candidates {
        let disc = c.form.discriminant() as u64;
        if odd_prime_divisors(disc).iter().any(|&p| p > 7) {
            discrepancies.push(format!("{} has a prime above 7 in its discriminant", c.form));
        }
    }
    let regular_list_matches = regular_list.map(|list| {
        let shipped: BTreeSet<DiagonalForm> = list.iter().copied().collect();
        let derived: BTreeSet<DiagonalForm> = candidates.iter().filter(|c| c.regular).map(|c| c.form).collect();
        for f in derived.symmetric_difference(&shipped) {
            discrepancies.push(format!("{f} is in only one of the derived and shipped regular lists"));
        }
        shipped == derived
    });
    Ok(Classification { stable, ascent, candidates, certificates, regular_list_matches, discrepancies })
}

// ---------------------------------------------------------------------------
// published non-stable list, one verdict per entry

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateVerdict {
    pub index: usize,
    pub form: DiagonalForm,
    pub certificate: FormCertificate,
    pub published_strategy: String,
    pub published_open: bool,
    pub chain: ReductionChain,
    pub bound: u64,
    pub odd_exception: Option<u64>,
    pub status: Status,
}

pub fn verify_nonstable_list(bound: u64, traps: &[Transfer]) -> Result<Vec<CandidateVerdict>> {
    reference::NONSTABLE_CANDIDATES
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let index = i + 1;
            let form = DiagonalForm::new(c[0], c[1], c[2])?;
            let certificate = certify_form(&form, traps)?;
            let odd_exception = first_odd_exception(&form.lattice(), bound)?;
            let status = if certificate.certified() { Status::NonstableVerified } else { Status::Open };
            Ok(CandidateVerdict {
                index,
                form,
                certificate,
                published_strategy: reference::published_strategy(index).to_string(),
                published_open: reference::is_open(index),
                chain: reduce_to_stable(&form)?,
                bound,
                odd_exception,
                status,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// missing primes above 7

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairWitness {
    pub eta: u8,
    pub pair: (i64, i64),
    /// An element of `E_η` the binary form misses.
    pub witness: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub kind: VariantKind,
    pub primes: Vec<u64>,
    pub variants: usize,
    /// Variants with no odd exception up to the bound.
    pub gaps: Vec<DiagonalForm>,
    pub largest_first_exception: u64,
    pub bound: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingPrimeReport {
    pub pairs: Vec<(i64, i64)>,
    pub pairs_match: bool,
    pub e_sets_valid: bool,
    pub witnesses: Vec<PairWitness>,
    pub type_one: ScanSummary,
    pub type_two: ScanSummary,
    pub gate: CountingGate,
    /// Smallest prime where the counting argument takes over.
    pub gate_start: u64,
}

impl MissingPrimeReport {
    pub fn holds(&self) -> bool {
        self.pairs_match
            && self.e_sets_valid
            && self.witnesses.iter().all(|w| w.witness.is_some())
            && self.type_one.gaps.is_empty()
            && self.type_two.gaps.is_empty()
            && self.gate.contradiction
    }
}

/// `(a, b)` with `a ≤ b` taken from two coefficients of some stable form.
pub fn coefficient_pairs(stable: &[DiagonalForm]) -> Vec<(i64, i64)> {
    let mut set = BTreeSet::new();
    for f in stable {
        let [a, b, c] = f.coeffs();
        set.insert((a, b));
        set.insert((a, c));
        set.insert((b, c));
    }
    set.into_iter().collect()
}

fn e_set_valid(eta: u8, set: &[i64; 3]) -> bool {
    set.iter().all(|&e| {
        let ps = odd_prime_divisors(e as u64);
        e % 8 == eta as i64 && ps.iter().all(|&p| p > 7 && p < 31)
    })
}

fn scan(bases: &[DiagonalForm], primes: Vec<u64>, kind: VariantKind, bound: u64) -> Result<ScanSummary> {
    let verdicts = missing_prime_scan(bases, &primes, kind, bound)?;
    Ok(ScanSummary {
        kind,
        variants: verdicts.len(),
        gaps: verdicts.iter().filter(|v| v.exception.is_none()).map(|v| v.variant).collect(),
        largest_first_exception: verdicts.iter().filter_map(|v| v.exception).max().unwrap_or(0),
        primes,
        bound,
    })
}

pub fn missing_prime_checks(stable: &[DiagonalForm], bound: u64) -> Result<MissingPrimeReport> {
    let pairs = coefficient_pairs(stable);
    let pairs_match = pairs == reference::coefficient_pairs();
    let e_sets_valid = reference::E_SETS.iter().all(|(eta, set)| e_set_valid(*eta, set));
    let mut witnesses = Vec::new();
    for (eta, set) in reference::E_SETS {
        for &(a, b) in &pairs {
            let f = BinaryForm::diagonal(a, b)?;
            let witness = set.iter().copied().find(|&e| !binary_represents(&f, e));
            witnesses.push(PairWitness { eta, pair: (a, b), witness });
        }
    }
    let odd = |lo: u64, hi: u64| primes_up_to(hi).into_iter().filter(|&p| p >= lo).collect::<Vec<_>>();
    let type_one = scan(stable, odd(11, 151), VariantKind::TypeOne, bound)?;
    let type_two = scan(stable, odd(11, 29), VariantKind::TypeTwo, bound)?;
    let gate_start = primes_up_to(1000).into_iter().find(|&p| p > 151).unwrap_or(157);
    let gate = counting_gate(gate_start);
    Ok(MissingPrimeReport { pairs, pairs_match, e_sets_valid, witnesses, type_one, type_two, gate, gate_start })
}

/// Smallest prime at which the counting contradiction appears, with every
/// larger prime up to `limit` also contradicting.
pub fn counting_gate_threshold(limit: u64) -> Option<u64> {
    let primes = primes_up_to(limit);
    let mut first = None;
    for &p in primes.iter().filter(|&&p| p >= 11) {
        match (counting_gate(p).contradiction, first) {
            (true, None) => first = Some(p),
            (false, Some(_)) => first = None,
            _ => {}
        }
    }
    first
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(a: i64, b: i64, c: i64) -> DiagonalForm {
        DiagonalForm::new(a, b, c).unwrap()
    }

    #[test]
    fn replay_reaches_the_terminal_regions() {
        let replay = replay_regions().unwrap();
        assert_eq!(replay.regions, terminal_regions());
        // the only step that does not hold is the five-prime count for α = 5
        let failures = replay.failures();
        assert_eq!(failures.len(), 1);
        assert_eq!((failures[0].alpha, failures[0].computed, failures[0].published), (5, 5, 4));
        assert_eq!(
            replay.widened,
            vec![SearchRegion { alpha: 5, a_max: 61, b: MiddleRange::UpTo(101), c_max: 277, excluded_pairs: vec![(1, 1), (1, 4)] }]
        );
        let claims: Vec<(u8, i64)> = replay.steps.iter().filter(|s| s.claim.starts_with("c ≤")).map(|s| (s.alpha, s.computed)).collect();
        for expected in [(1, 401), (1, 97), (3, 179), (5, 197), (7, 199)] {
            assert!(claims.contains(&expected), "{expected:?} missing from {claims:?}");
        }
    }

    // independent oracle: best count over explicit coprime triples
    fn brute_distinct(eta: u8, bounds: [i64; 3]) -> usize {
        let primes: Vec<i64> = primes_up_to(bounds[2] as u64).into_iter().map(|p| p as i64).filter(|p| p % 8 == eta as i64).collect();
        let count = |n: i64| primes.iter().filter(|&&p| n % p == 0).count();
        let mut best = 0;
        for a in 1..=bounds[0] {
            for b in 1..=bounds[1] {
                if gcd(a, b) != 1 {
                    continue;
                }
                for c in 1..=bounds[2] {
                    if gcd(a, c) == 1 && gcd(b, c) == 1 {
                        best = best.max(count(a) + count(b) + count(c));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn prime_count_matches_brute_force() {
        for (eta, bounds) in [(3, [20, 40, 130]), (5, [30, 70, 150]), (7, [25, 40, 170]), (1, [1, 20, 160])] {
            assert_eq!(max_distinct_primes(eta, bounds), brute_distinct(eta, bounds), "{eta} {bounds:?}");
        }
        // the quoted inequality 3·11·19 > 379 caps the c-coefficient at two primes
        assert_eq!(max_distinct_primes(3, [1, 1, 379]), 2);
    }

    #[test]
    fn coprime_witnesses() {
        assert!(coprime_witnesses_hold(&reference::COPRIME_WITNESSES_SQUARE, &[1, 4, 16]));
        assert!(coprime_witnesses_hold(&reference::COPRIME_WITNESSES_DOUBLE, &[2, 8]));
        // 9 = 3² + 0² is represented by ⟨1, 1⟩
        assert!(!coprime_witnesses_hold(&[9, 17], &[1]));
    }

    #[test]
    fn region_triples_are_sorted_and_respect_exclusions() {
        let r = &terminal_regions()[2];
        let t = r.triples();
        assert!(t.iter().all(|[a, b, c]| a <= b && b <= c && *c <= 179));
        assert!(!t.iter().any(|[a, b, _]| (*a, *b) == (1, 2)));
        let pow = &terminal_regions()[0];
        assert!(pow.triples().iter().all(|[a, b, _]| *a == 1 && [1, 2, 4, 8, 16].contains(b)));
    }

    #[test]
    fn small_stable_search() {
        let region = SearchRegion { alpha: 3, a_max: 5, b: MiddleRange::UpTo(8), c_max: 10, excluded_pairs: vec![(1, 2)] };
        let s = stable_search_in(&[region], 20_000).unwrap();
        let nonregular: Vec<DiagonalForm> = s.nonregular().iter().map(|r| r.form).collect();
        assert_eq!(nonregular, vec![d(3, 4, 7), d(5, 6, 8)]);
        assert!(s.survivors.iter().all(|r| r.provenance == Provenance::Search { alpha: 3 }));
    }

    #[test]
    fn ascent_children_from_one_four_five() {
        let kids = ascent_children(&d(1, 4, 5), 5).unwrap();
        assert!(kids.contains(&d(1, 5, 20)));
        assert!(ascent_children(&d(1, 5, 20), 5).unwrap().contains(&d(1, 5, 100)));
    }

    // independent oracle: every primitive diagonal form with a bounded
    // discriminant whose λ_p image is the parent
    #[test]
    fn ascent_children_match_exhaustive_preimages() {
        for (parent, p) in [(d(1, 4, 5), 5), (d(1, 1, 4), 3), (d(1, 2, 5), 7), (d(2, 3, 8), 3)] {
            let cap = parent.discriminant() * (p * p * p * p) as i64;
            let mut brute = Vec::new();
            for a in 1..=cap {
                for b in a..=cap / a {
                    for c in b..=cap / (a * b) {
                        if gcd3(a, b, c) != 1 || (a * b * c) % parent.discriminant() != 0 {
                            continue;
                        }
                        let f = d(a, b, c);
                        if !is_p_stable(&f.lattice(), p) && lambda_diagonal(&f, p).unwrap() == parent {
                            brute.push(f);
                        }
                    }
                }
            }
            assert_eq!(ascent_children(&parent, p).unwrap(), brute, "{parent} at {p}");
        }
    }

    #[test]
    fn e_sets_and_pair_witnesses() {
        for (eta, set) in reference::E_SETS {
            assert!(e_set_valid(eta, &set));
        }
        let f = BinaryForm::diagonal(1, 1).unwrap();
        let e3 = reference::E_SETS[1].1;
        assert_eq!(e3.iter().copied().find(|&e| !binary_represents(&f, e)), Some(11));
    }

    #[test]
    fn counting_gate_takes_over_by_157() {
        let start = counting_gate_threshold(5_000).unwrap();
        assert!(start <= 157, "{start}");
        assert!(counting_gate(157).contradiction);
    }

    #[test]
    fn shipped_regular_list() {
        let list = load_regular_list(&data_dir()).unwrap();
        assert_eq!(list.len(), reference::REGULAR_TOTAL);
        assert!(list.windows(2).all(|w| w[0] < w[1]));
        for f in [d(1, 1, 1), d(1, 1, 2), d(3, 40, 120)] {
            assert!(list.contains(&f));
        }
    }

    #[test]
    fn trap_data_files_verify() {
        let traps = load_trap_transfers(&data_dir()).unwrap();
        let excluded: Vec<Vec<i64>> = traps.iter().map(|t| t.exclusions.clone()).collect();
        assert_eq!(excluded, vec![vec![8], vec![45]]);
    }

    #[test]
    fn certification_of_two_published_cases() {
        let traps = load_trap_transfers(&data_dir()).unwrap();
        let c = certify_form(&d(1, 1, 36), &traps).unwrap();
        assert!(c.certified());
        assert_eq!(c.methods(), [Method::Trap].into_iter().collect());
        let c = certify_form(&d(1, 4, 9), &traps).unwrap();
        assert_eq!((c.class_number, c.methods()), (2, [Method::Sublattice].into_iter().collect()));
        let c = certify_form(&d(1, 3, 54), &traps).unwrap();
        assert!(!c.certified());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // a quick rejection always comes with a real exception below 400
        #[test]
        fn quick_reject_is_sound(a in 1i64..12, b in 1i64..20, c in 1i64..40) {
            prop_assume!(gcd3(a, b, c) == 1);
            let f = DiagonalForm::normalized(a, b, c).unwrap();
            let profile = odd_profile(&f.lattice()).unwrap();
            if quick_reject(&f, &profile) {
                prop_assert!(first_odd_exception(&f.lattice(), 400).unwrap().is_some());
            }
        }

        #[test]
        fn children_map_back(a in 1i64..10, b in 1i64..10, c in 1i64..10, pi in 0usize..3) {
            prop_assume!(gcd3(a, b, c) == 1);
            let parent = DiagonalForm::normalized(a, b, c).unwrap();
            let p = ASCENT_PRIMES[pi];
            for child in ascent_children(&parent, p).unwrap() {
                prop_assert_eq!(lambda_diagonal(&child, p).unwrap(), parent);
                prop_assert!(!is_p_stable(&child.lattice(), p));
            }
        }
    }
}
