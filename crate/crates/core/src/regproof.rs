//! Representation transfer between lattices.
//!
//! `N ≺_{l,r} K` holds when every class `v mod l` with `Q_N(v) ≡ r` is good:
//! some `T` with `TᵀG_K T = l²G_N` sends `v` into `lℤ³`. Then `Tv/l` is a
//! vector of `K` with the same norm. Trap certificates handle the bad classes
//! by an infinite-order self-map of `N` that eventually lands in a good class,
//! except along its eigenvectors. Routes glue such transfers together over the
//! sublattices of a genus mate.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arith::gcd;
use crate::error::{Error, Result};
use crate::forms::{adjugate, cross, det3, embeddings, mat_mul, mat_vec, GramLattice, Mat3, Vec3};
use crate::sieve::rep_set;

fn cube(l: u64) -> impl Iterator<Item = Vec3> {
    let l = l as i64;
    (0..l).flat_map(move |a| (0..l).flat_map(move |b| (0..l).map(move |c| [a, b, c])))
}

fn reduce(v: &Vec3, l: u64) -> Vec3 {
    let l = l as i64;
    [v[0].rem_euclid(l), v[1].rem_euclid(l), v[2].rem_euclid(l)]
}

fn divisible(v: &Vec3, l: u64) -> bool {
    v.iter().all(|x| x % l as i64 == 0)
}

fn lands(t: &Mat3, v: &Vec3, l: u64) -> bool {
    divisible(&mat_vec(t, v), l)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RSet {
    pub lattice: GramLattice,
    pub l: u64,
    pub r: u64,
    pub vectors: Vec<Vec3>,
}

/// `{v mod l : Q_N(v) ≡ r mod l}`.
pub fn r_set(n: &GramLattice, l: u64, r: u64) -> Result<RSet> {
    if l == 0 || r >= l {
        return Err(Error::InvalidArgument(format!("need 0 ≤ r < l, got l = {l}, r = {r}")));
    }
    let vectors = cube(l).filter(|v| n.q(v).rem_euclid(l as i64) as u64 == r).collect();
    Ok(RSet { lattice: *n, l, r, vectors })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformSet {
    pub target: GramLattice,
    pub source: GramLattice,
    pub l: u64,
    pub matrices: Vec<Mat3>,
}

impl TransformSet {
    pub fn witness(&self, v: &Vec3) -> Option<&Mat3> {
        self.matrices.iter().find(|t| lands(t, v, self.l))
    }
}

/// All integer `T` with `TᵀG_K T = l²G_N`.
pub fn transform_set(k: &GramLattice, n: &GramLattice, l: u64) -> TransformSet {
    let sq = (l * l) as i64;
    TransformSet { target: *k, source: *n, l, matrices: embeddings(n, k, sq, None) }
}

fn satisfies_identity(t: &Mat3, outer: &GramLattice, inner: &GramLattice, l: u64) -> bool {
    let lhs = mat_mul(&mat_mul(&transpose3(t), outer.gram()), t);
    let sq = (l * l) as i64;
    (0..3).all(|i| (0..3).all(|j| lhs[i][j] == sq * inner.gram()[i][j]))
}

fn transpose3(t: &Mat3) -> Mat3 {
    crate::forms::transpose(t)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecReport {
    pub source: GramLattice,
    pub target: GramLattice,
    pub l: u64,
    pub r: u64,
    pub r_set_size: usize,
    pub good: usize,
    /// Classes of the R-set with no witness.
    pub bad: Vec<Vec3>,
    /// A small set of transforms covering every good class.
    pub witnesses: Vec<Mat3>,
}

impl PrecReport {
    pub fn holds(&self) -> bool {
        self.bad.is_empty()
    }

    pub fn certificate(&self) -> PrecCertificate {
        PrecCertificate {
            n: self.source,
            k: self.target,
            l: self.l,
            r: self.r,
            transforms: self.witnesses.clone(),
        }
    }
}

/// Greedy cover of `vectors` by the matrices that send them into `lℤ³`.
fn greedy_witnesses(vectors: &[Vec3], mats: &[Mat3], l: u64) -> Vec<Mat3> {
    let mut open: Vec<Vec3> = vectors.to_vec();
    let mut chosen = Vec::new();
    while !open.is_empty() {
        let best = mats
            .iter()
            .map(|t| (open.iter().filter(|v| lands(t, v, l)).count(), t))
            .max_by_key(|(c, _)| *c);
        match best {
            Some((c, t)) if c > 0 => {
                open.retain(|v| !lands(t, v, l));
                chosen.push(*t);
            }
            _ => break,
        }
    }
    chosen
}

/// Decides `N ≺_{l,r} K`.
pub fn check_prec(n: &GramLattice, k: &GramLattice, l: u64, r: u64) -> Result<PrecReport> {
    check_prec_in(&transform_set(k, n, l), r)
}

/// [`check_prec`] against a precomputed transform set.
pub fn check_prec_in(ts: &TransformSet, r: u64) -> Result<PrecReport> {
    let l = ts.l;
    let rs = r_set(&ts.source, l, r)?;
    let (good, bad): (Vec<Vec3>, Vec<Vec3>) = rs.vectors.iter().partition(|v| ts.witness(v).is_some());
    Ok(PrecReport {
        source: ts.source,
        target: ts.target,
        l,
        r,
        r_set_size: rs.vectors.len(),
        good: good.len(),
        bad,
        witnesses: greedy_witnesses(&good, &ts.matrices, l),
    })
}

/// Stored form of `N ≺_{l,r} K`: the transforms alone, re-checked on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecCertificate {
    #[serde(rename = "N")]
    pub n: GramLattice,
    #[serde(rename = "K")]
    pub k: GramLattice,
    pub l: u64,
    pub r: u64,
    pub transforms: Vec<Mat3>,
}

impl PrecCertificate {
    pub fn verify(&self) -> Result<PrecReport> {
        for t in &self.transforms {
            if !satisfies_identity(t, &self.k, &self.n, self.l) {
                return Err(Error::Certificate(format!("{t:?} does not satisfy TᵀG_K T = l²G_N")));
            }
        }
        let rs = r_set(&self.n, self.l, self.r)?;
        let bad: Vec<Vec3> = rs
            .vectors
            .iter()
            .filter(|v| !self.transforms.iter().any(|t| lands(t, v, self.l)))
            .copied()
            .collect();
        Ok(PrecReport {
            source: self.n,
            target: self.k,
            l: self.l,
            r: self.r,
            r_set_size: rs.vectors.len(),
            good: rs.vectors.len() - bad.len(),
            bad,
            witnesses: self.transforms.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// trap certificates

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub vectors: Vec<Vec3>,
    #[serde(rename = "T")]
    pub transform: Mat3,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapCertificate {
    #[serde(rename = "N")]
    pub n: GramLattice,
    #[serde(rename = "K")]
    pub k: GramLattice,
    pub l: u64,
    pub r: u64,
    pub partitions: Vec<Partition>,
    #[serde(default)]
    pub tilde: Vec<Partition>,
    #[serde(default)]
    pub expected_exclusions: Vec<i64>,
}

impl TrapCertificate {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub partition: usize,
    /// Eigenvalue of the integer matrix, `l` times that of `T/l`.
    pub eigenvalue: i64,
    pub eigenvector: Vec3,
    pub g: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapVerdict {
    pub verified: bool,
    /// `R(N,l,r) − R_K(N,l,r)`.
    pub difference: Vec<Vec3>,
    pub exclusions: Vec<Exclusion>,
    pub failure: Option<String>,
}

impl TrapVerdict {
    pub fn excluded_values(&self) -> Vec<i64> {
        self.exclusions.iter().map(|e| e.g).collect::<BTreeSet<_>>().into_iter().collect()
    }
}

/// Integer characteristic polynomial `x³ + c2 x² + c1 x + c0` as `[c0, c1, c2]`.
pub fn char_poly(t: &Mat3) -> [i128; 3] {
    let m = |i: usize, j: usize| t[i][j] as i128;
    let tr = m(0, 0) + m(1, 1) + m(2, 2);
    let minors = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) + m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)
        + m(1, 1) * m(2, 2)
        - m(1, 2) * m(2, 1);
    [-det3(t), minors, -tr]
}

/// Whether `T/l` has finite order, from its characteristic polynomial.
///
/// Assumes `T/l` is an isometry of a positive definite form (so it is
/// diagonalizable with eigenvalues on the unit circle); finite order is then
/// the same as every factor being cyclotomic.
pub fn finite_order(t: &Mat3, l: u64) -> bool {
    // monic rational cyclotomic polynomials of degree ≤ 2, low coefficient first
    const LINEAR: [[i128; 2]; 2] = [[-1, 1], [1, 1]];
    const QUADRATIC: [[i128; 3]; 3] = [[1, 1, 1], [1, 0, 1], [1, -1, 1]];
    let mul = |a: &[i128], b: &[i128]| {
        let mut out = vec![0i128; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    };
    let mut products: Vec<Vec<i128>> = Vec::new();
    for a in &LINEAR {
        for q in &QUADRATIC {
            products.push(mul(a, q));
        }
        for b in &LINEAR {
            for c in &LINEAR {
                products.push(mul(&mul(a, b), c));
            }
        }
    }
    let [c0, c1, c2] = char_poly(t);
    let l = l as i128;
    // char poly of T is l³ p(x / l) for the char poly p of T/l
    products.iter().any(|p| c2 == p[2] * l && c1 == p[1] * l * l && c0 == p[0] * l * l * l)
}

/// `(T/l)¹² = I`; every finite order of a rational 3×3 matrix divides 12.
pub fn twelfth_power_is_identity(t: &Mat3, l: u64) -> bool {
    let mut acc = [[0i128; 3]; 3];
    for (i, row) in acc.iter_mut().enumerate() {
        row[i] = 1;
    }
    for _ in 0..12 {
        let mut next = [[0i128; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                next[i][j] = (0..3).map(|k| acc[i][k] * t[k][j] as i128).sum();
            }
        }
        acc = next;
    }
    let scale = (l as i128).pow(12);
    (0..3).all(|i| (0..3).all(|j| acc[i][j] == if i == j { scale } else { 0 }))
}

fn primitive(v: Vec3) -> Vec3 {
    let g = gcd(gcd(v[0], v[1]), v[2]).abs();
    let mut w = [v[0] / g, v[1] / g, v[2] / g];
    if w.iter().find(|x| **x != 0).is_some_and(|x| *x < 0) {
        w = [-w[0], -w[1], -w[2]];
    }
    w
}

/// Integer eigenvalues of `t` with a primitive generator of each eigenspace.
/// Errors when an eigenspace is not a line.
pub fn integer_eigenvectors(t: &Mat3) -> Result<Vec<(i64, Vec3)>> {
    let [c0, c1, c2] = char_poly(t);
    let eval = |x: i128| x * x * x + c2 * x * x + c1 * x + c0;
    let mut roots = BTreeSet::new();
    if c0 == 0 {
        roots.insert(0i128);
    } else {
        let a = c0.abs();
        let mut d = 1i128;
        while d * d <= a {
            if a % d == 0 {
                for x in [d, -d, a / d, -a / d] {
                    if eval(x) == 0 {
                        roots.insert(x);
                    }
                }
            }
            d += 1;
        }
    }
    let mut out = Vec::new();
    for mu in roots {
        let mu = mu as i64;
        let mut a = *t;
        for (i, row) in a.iter_mut().enumerate() {
            row[i] -= mu;
        }
        let kernel = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(i, j)| cross(&a[i], &a[j]))
            .find(|v| v.iter().any(|x| *x != 0));
        match kernel {
            Some(v) => out.push((mu, primitive(v))),
            None => {
                return Err(Error::Certificate(format!(
                    "eigenspace of {t:?} for eigenvalue {mu} has dimension above one"
                )))
            }
        }
    }
    Ok(out)
}

struct TrapContext {
    r_set: BTreeSet<Vec3>,
    good: BTreeSet<Vec3>,
}

fn closure_failure(
    cert: &TrapCertificate,
    part: &Partition,
    allowed: &dyn Fn(&Vec3) -> bool,
    label: &str,
) -> Option<String> {
    let l = cert.l;
    let members: BTreeSet<Vec3> = part.vectors.iter().map(|v| reduce(v, l)).collect();
    for v in cube(l * l) {
        if !members.contains(&reduce(&v, l)) {
            continue;
        }
        let w = mat_vec(&part.transform, &v);
        if !divisible(&w, l) {
            return Some(format!("{label}: T{v:?} = {w:?} is not divisible by {l}"));
        }
        let image = reduce(&[w[0] / l as i64, w[1] / l as i64, w[2] / l as i64], l);
        if !allowed(&image) {
            return Some(format!("{label}: T{v:?}/{l} ≡ {image:?} leaves the allowed classes"));
        }
    }
    None
}

/// Exhaustive check of a trap certificate; failures are reported in the verdict.
pub fn check_trap(cert: &TrapCertificate) -> Result<TrapVerdict> {
    let l = cert.l;
    let rs = r_set(&cert.n, l, cert.r)?;
    let ts = transform_set(&cert.k, &cert.n, l);
    let ctx = TrapContext {
        r_set: rs.vectors.iter().copied().collect(),
        good: rs.vectors.iter().filter(|v| ts.witness(v).is_some()).copied().collect(),
    };
    let difference: Vec<Vec3> = ctx.r_set.difference(&ctx.good).copied().collect();
    let mut verdict = TrapVerdict { verified: false, difference, exclusions: Vec::new(), failure: None };
    let fail = |mut v: TrapVerdict, why: String| {
        v.failure = Some(why);
        Ok(v)
    };

    if cert.partitions.is_empty() && !verdict.difference.is_empty() {
        return fail(verdict, "no partitions for a nonempty difference set".into());
    }
    for (i, p) in cert.partitions.iter().enumerate() {
        if !satisfies_identity(&p.transform, &cert.n, &cert.n, l) {
            return fail(verdict, format!("P{}: TᵀG_N T ≠ l²G_N", i + 1));
        }
        if finite_order(&p.transform, l) {
            return fail(verdict, format!("P{}: T/l has finite order", i + 1));
        }
        if twelfth_power_is_identity(&p.transform, l) {
            return Err(Error::Internal(format!("P{}: order tests disagree", i + 1)));
        }
        let eig = match integer_eigenvectors(&p.transform) {
            Ok(e) => e,
            Err(e) => return fail(verdict, format!("P{}: {e}", i + 1)),
        };
        for (mu, z) in eig {
            verdict.exclusions.push(Exclusion { partition: i, eigenvalue: mu, eigenvector: z, g: cert.n.q(&z) });
        }
    }
    for (j, p) in cert.tilde.iter().enumerate() {
        if !satisfies_identity(&p.transform, &cert.n, &cert.n, l) {
            return fail(verdict, format!("P̃{}: TᵀG_N T ≠ l²G_N", j + 1));
        }
    }

    // the partitions must tile the difference set
    let mut seen = BTreeSet::new();
    for p in cert.partitions.iter().chain(&cert.tilde) {
        for v in &p.vectors {
            let v = reduce(v, l);
            if !seen.insert(v) {
                return fail(verdict, format!("{v:?} appears in two partitions"));
            }
        }
    }
    let diff: BTreeSet<Vec3> = verdict.difference.iter().copied().collect();
    if seen != diff {
        let extra: Vec<_> = seen.symmetric_difference(&diff).collect();
        return fail(verdict, format!("partitions differ from R − R_K at {extra:?}"));
    }

    for (i, p) in cert.partitions.iter().enumerate() {
        let own: BTreeSet<Vec3> = p.vectors.iter().map(|v| reduce(v, l)).collect();
        let allowed = |u: &Vec3| own.contains(u) || ctx.good.contains(u);
        if let Some(why) = closure_failure(cert, p, &allowed, &format!("P{}", i + 1)) {
            return fail(verdict, why);
        }
    }
    let main: BTreeSet<Vec3> =
        cert.partitions.iter().flat_map(|p| p.vectors.iter().map(|v| reduce(v, l))).collect();
    for (j, p) in cert.tilde.iter().enumerate() {
        let allowed = |u: &Vec3| main.contains(u) || ctx.good.contains(u);
        if let Some(why) = closure_failure(cert, p, &allowed, &format!("P̃{}", j + 1)) {
            return fail(verdict, why);
        }
    }

    let got = verdict.excluded_values();
    if !cert.expected_exclusions.is_empty() {
        let want: Vec<i64> = cert.expected_exclusions.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if want != got {
            return fail(verdict, format!("exclusions {got:?} differ from the expected {want:?}"));
        }
    }
    verdict.verified = true;
    Ok(verdict)
}

// ---------------------------------------------------------------------------
// transfers

/// A verified inclusion `(S_{l,r} ∩ Q(lattice)) − ∪ g·squares ⊂ Q(target)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub source: String,
    pub lattice: GramLattice,
    pub target: GramLattice,
    pub l: u64,
    pub r: u64,
    pub exclusions: Vec<i64>,
}

impl Transfer {
    /// `Q(L) ⊂ Q(L)`.
    pub fn direct(target: &GramLattice) -> Self {
        Transfer { source: "direct".into(), lattice: *target, target: *target, l: 1, r: 0, exclusions: vec![] }
    }

    pub fn from_prec(report: &PrecReport) -> Result<Self> {
        if !report.holds() {
            return Err(Error::Certificate(format!(
                "{} ≺ {} fails at (l, r) = ({}, {})",
                report.source, report.target, report.l, report.r
            )));
        }
        Ok(Transfer {
            source: format!("prec({},{})", report.l, report.r),
            lattice: report.source,
            target: report.target,
            l: report.l,
            r: report.r,
            exclusions: vec![],
        })
    }

    pub fn from_trap(name: &str, cert: &TrapCertificate, verdict: &TrapVerdict) -> Result<Self> {
        if !verdict.verified {
            return Err(Error::Certificate(format!(
                "{name}: {}",
                verdict.failure.clone().unwrap_or_default()
            )));
        }
        Ok(Transfer {
            source: name.to_string(),
            lattice: cert.n,
            target: cert.k,
            l: cert.l,
            r: cert.r,
            exclusions: verdict.excluded_values(),
        })
    }

    fn is_excluded(&self, n: u64) -> bool {
        self.exclusions.iter().any(|&g| {
            let g = g as u64;
            g > 0 && n.is_multiple_of(g) && crate::arith::is_square((n / g) as i64)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferReport {
    pub transfer: Transfer,
    pub bound: u64,
    /// Members of `S_{l,r} ∩ Q(lattice)` examined, exclusions included.
    pub checked: u64,
    /// Excluded members that the target still represents.
    pub excluded_represented: Vec<u64>,
    /// Excluded members the target misses.
    pub excluded_missed: Vec<u64>,
    /// Whether the target represents each exclusion value (hence all its square multiples).
    pub exclusions_represented: Vec<(i64, bool)>,
}

/// Numeric cross-check of a verified transfer up to `bound`.
pub fn transfer_conclusion(t: &Transfer, bound: u64) -> Result<TransferReport> {
    let src = rep_set(&t.lattice, bound)?;
    let dst = rep_set(&t.target, bound)?;
    let mut report = TransferReport {
        transfer: t.clone(),
        bound,
        checked: 0,
        excluded_represented: vec![],
        excluded_missed: vec![],
        exclusions_represented: t.exclusions.iter().map(|&g| (g, t.target.represents(g))).collect(),
    };
    let mut n = t.r;
    while n <= bound {
        if n > 0 && src.contains(n) {
            report.checked += 1;
            let hit = dst.contains(n);
            if t.is_excluded(n) {
                if hit {
                    report.excluded_represented.push(n);
                } else {
                    report.excluded_missed.push(n);
                }
            } else if !hit {
                return Err(Error::Internal(format!(
                    "{}: {n} is in Q({}) and S_{{{},{}}} but not in Q({})",
                    t.source, t.lattice, t.l, t.r, t.target
                )));
            }
        }
        n += t.l;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// routes

/// Sublattice of `M` (columns of `basis`, in `M`-coordinates) mapped by `via`
/// into the source lattice of `transfer`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutePiece {
    pub basis: Mat3,
    pub via: Mat3,
    pub transfer: Transfer,
}

/// Odd values of `mate` handled piece by piece, read off classes mod `modulus`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub mate: GramLattice,
    pub target: GramLattice,
    pub modulus: u64,
    pub pieces: Vec<RoutePiece>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteReport {
    pub odd_classes: usize,
    pub uncovered: Vec<Vec3>,
    pub failure: Option<String>,
}

impl RouteReport {
    pub fn holds(&self) -> bool {
        self.failure.is_none() && self.uncovered.is_empty()
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a as i64, b as i64) as u64 * b
}

/// Membership test for a full-rank sublattice through its adjugate.
struct Membership {
    adj: Mat3,
    det: i64,
}

impl Membership {
    fn new(basis: &Mat3) -> Self {
        let det = det3(basis) as i64;
        let adj = adjugate(basis);
        if det < 0 {
            let neg = adj.map(|row| row.map(|x| -x));
            Membership { adj: neg, det: -det }
        } else {
            Membership { adj, det }
        }
    }

    fn contains(&self, v: &Vec3) -> bool {
        self.det != 0 && divisible(&mat_vec(&self.adj, v), self.det as u64)
    }

    fn contains_multiple(&self, m: u64) -> bool {
        (0..3).all(|i| {
            let mut e = [0; 3];
            e[i] = m as i64;
            self.contains(&e)
        })
    }
}

fn piece_index(piece: &RoutePiece) -> u64 {
    det3(&piece.basis).unsigned_abs() as u64
}

/// Smallest `m` with `m ℤ³ ⊂` the piece lattice.
fn piece_modulus(piece: &RoutePiece) -> Option<u64> {
    let mem = Membership::new(&piece.basis);
    let idx = piece_index(piece);
    (1..=idx).find(|&m| idx.is_multiple_of(m) && mem.contains_multiple(m))
}

fn odd_represented_exclusion(t: &Transfer) -> Option<i64> {
    t.exclusions.iter().copied().find(|g| g % 2 != 0 && !t.target.represents(*g))
}

pub fn verify_route(route: &Route) -> RouteReport {
    let mut report = RouteReport { odd_classes: 0, uncovered: vec![], failure: None };
    let m = route.modulus;
    if !m.is_multiple_of(2) {
        report.failure = Some(format!("modulus {m} does not determine parity"));
        return report;
    }
    let mut members = Vec::new();
    for (i, p) in route.pieces.iter().enumerate() {
        let why = |s: String| Some(format!("piece {}: {s}", i + 1));
        let mem = Membership::new(&p.basis);
        if mem.det == 0 {
            report.failure = why("singular basis".into());
            return report;
        }
        if !mem.contains_multiple(m) {
            report.failure = why(format!("does not contain {m}·M"));
            return report;
        }
        if !m.is_multiple_of(p.transfer.l) {
            report.failure = why(format!("progression modulus {} does not divide {m}", p.transfer.l));
            return report;
        }
        if !p.transfer.target.is_isometric(&route.target) {
            report.failure = why(format!("transfer lands in {}, not {}", p.transfer.target, route.target));
            return report;
        }
        let Ok(sub) = route.mate.transform(&p.basis) else {
            report.failure = why("degenerate sublattice".into());
            return report;
        };
        if p.transfer.lattice.transform(&p.via).ok().map(|x| *x.gram()) != Some(*sub.gram()) {
            report.failure = why(format!("via map is not an isometry onto a sublattice of {}", p.transfer.lattice));
            return report;
        }
        if let Some(g) = odd_represented_exclusion(&p.transfer) {
            report.failure = why(format!("odd exclusion {g} is not represented by {}", route.target));
            return report;
        }
        members.push(mem);
    }
    for c in cube(m) {
        let q = route.mate.q(&c);
        if q.rem_euclid(2) != 1 {
            continue;
        }
        report.odd_classes += 1;
        let hit = route.pieces.iter().zip(&members).any(|(p, mem)| {
            mem.contains(&c) && q.rem_euclid(p.transfer.l as i64) as u64 == p.transfer.r
        });
        if !hit {
            report.uncovered.push(c);
        }
    }
    report
}

/// Lattices between `mℤ³` and `ℤ³`, as upper triangular Hermite bases, by index.
pub fn sublattices_containing(m: u64) -> Vec<Mat3> {
    let divs: Vec<i64> = (1..=m as i64).filter(|d| m as i64 % d == 0).collect();
    let mut out = Vec::new();
    for &a in &divs {
        for &d in &divs {
            for &f in &divs {
                for b in 0..a {
                    for c in 0..a {
                        for e in 0..d {
                            let basis = [[a, b, c], [0, d, e], [0, 0, f]];
                            if Membership::new(&basis).contains_multiple(m) {
                                out.push(basis);
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort_by_key(|b| (det3(b), *b));
    out
}

fn class_bits(basis: &Mat3, m: u64, q: &dyn Fn(&Vec3) -> i64, t: &Transfer) -> Vec<bool> {
    let mem = Membership::new(basis);
    cube(m)
        .map(|c| {
            let v = q(&c);
            v.rem_euclid(2) == 1 && v.rem_euclid(t.l as i64) as u64 == t.r && mem.contains(&c)
        })
        .collect()
}

fn index_compatible(sub: &GramLattice, into: &GramLattice) -> bool {
    let (a, b) = (sub.det_g(), into.det_g());
    a % b == 0 && {
        let s = (a / b) as i64;
        crate::arith::is_square(s)
    }
}

/// Searches for a route from `mate` to the target of `transfers`, using
/// sublattices that contain `m·mate` for each `m` in `moduli` in turn.
pub fn find_route(mate: &GramLattice, transfers: &[Transfer], moduli: &[u64]) -> Option<Route> {
    let target = transfers.first()?.target;
    let mut pieces: Vec<RoutePiece> = Vec::new();
    let mut modulus = 2u64;
    for &m in moduli {
        let lift = transfers.iter().fold(lcm(2, m), |acc, t| lcm(acc, t.l));
        let trial = lcm(modulus, lift);
        let q = |v: &Vec3| mate.q(v);
        // per transfer, class sets already handled at this modulus
        let mut handled: Vec<Vec<bool>> = vec![vec![false; trial.pow(3) as usize]; transfers.len()];
        for p in &pieces {
            let k = transfers.iter().position(|t| *t == p.transfer).unwrap_or(0);
            for (h, b) in handled[k].iter_mut().zip(class_bits(&p.basis, trial, &q, &p.transfer)) {
                *h |= b;
            }
        }
        for basis in sublattices_containing(m) {
            let Ok(sub) = mate.transform(&basis) else { continue };
            for (k, t) in transfers.iter().enumerate() {
                if !trial.is_multiple_of(t.l) || !index_compatible(&sub, &t.lattice) {
                    continue;
                }
                let bits = class_bits(&basis, trial, &q, t);
                if !bits.iter().zip(&handled[k]).any(|(b, h)| *b && !*h) {
                    continue;
                }
                if let Some(via) = embeddings(&sub, &t.lattice, 1, Some(1)).first() {
                    for (h, b) in handled[k].iter_mut().zip(&bits) {
                        *h |= *b;
                    }
                    pieces.push(RoutePiece { basis, via: *via, transfer: t.clone() });
                }
            }
        }
        modulus = trial;
        let route = Route { mate: *mate, target, modulus, pieces: pieces.clone() };
        if verify_route(&route).holds() {
            return Some(prune(route));
        }
    }
    None
}

/// Drops pieces whose odd classes are covered by the others.
fn prune(mut route: Route) -> Route {
    let mut i = route.pieces.len();
    while i > 0 {
        i -= 1;
        let mut trial = route.clone();
        trial.pieces.remove(i);
        if verify_route(&trial).holds() {
            route = trial;
        }
    }
    if let Some(m) = route
        .pieces
        .iter()
        .map(|p| piece_modulus(p).map(|x| lcm(x, p.transfer.l)))
        .try_fold(2u64, |acc, x| x.map(|x| lcm(acc, x)))
    {
        let mut smaller = route.clone();
        smaller.modulus = m;
        if verify_route(&smaller).holds() {
            route = smaller;
        }
    }
    route
}

/// `≺` transfers from `mate` into `target` for every residue mod each `l`
/// that odd values of `mate` reach.
pub fn prec_transfers(mate: &GramLattice, target: &GramLattice, moduli: &[u64]) -> Result<Vec<Transfer>> {
    let mut out = Vec::new();
    for &l in moduli {
        let m = lcm(2, l);
        let residues: BTreeSet<u64> = cube(m)
            .map(|v| mate.q(&v))
            .filter(|q| q.rem_euclid(2) == 1)
            .map(|q| q.rem_euclid(l as i64) as u64)
            .collect();
        if residues.is_empty() {
            continue;
        }
        let ts = transform_set(target, mate, l);
        for r in residues {
            let rep = check_prec_in(&ts, r)?;
            if rep.holds() {
                out.push(Transfer::from_prec(&rep)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::DiagonalForm;
    use proptest::prelude::*;

    fn diag(a: i64, b: i64, c: i64) -> GramLattice {
        DiagonalForm::new(a, b, c).unwrap().lattice()
    }

    fn bil(b: Mat3) -> GramLattice {
        GramLattice::from_bilinear(b).unwrap()
    }

    fn n51() -> GramLattice {
        bil([[8, 0, 4], [0, 9, 0], [4, 0, 20]])
    }

    fn cert51() -> TrapCertificate {
        TrapCertificate {
            n: n51(),
            k: diag(1, 1, 36),
            l: 3,
            r: 2,
            partitions: vec![Partition { vectors: vec![[1, 0, 0], [2, 0, 0]], transform: [[3, 1, 2], [0, -1, 4], [0, -2, -1]] }],
            tilde: vec![],
            expected_exclusions: vec![8],
        }
    }

    fn cert53() -> TrapCertificate {
        TrapCertificate {
            n: diag(2, 3, 18),
            k: diag(2, 3, 72),
            l: 4,
            r: 1,
            partitions: vec![Partition {
                vectors: vec![[0, 1, 1], [0, 3, 3], [2, 1, 3], [2, 3, 1]],
                transform: [[1, 3, 9], [-2, -2, 6], [-1, 1, -1]],
            }],
            tilde: vec![Partition {
                vectors: vec![[0, 1, 3], [0, 3, 1], [2, 1, 1], [2, 3, 3]],
                transform: [[1, -3, 9], [-2, 2, 6], [-1, -1, -1]],
            }],
            expected_exclusions: vec![45],
        }
    }

    // independent oracle: T ranges over a box, identity checked directly
    fn brute_orthogonal(l: &GramLattice, bound: i64) -> usize {
        let range: Vec<i64> = (-bound..=bound).collect();
        let mut cols = Vec::new();
        for &a in &range {
            for &b in &range {
                for &c in &range {
                    cols.push([a, b, c]);
                }
            }
        }
        let mut count = 0;
        for x in &cols {
            if l.q(x) != l.gram()[0][0] / 2 {
                continue;
            }
            for y in &cols {
                if l.q(y) != l.gram()[1][1] / 2 || l.b2(x, y) != l.gram()[0][1] {
                    continue;
                }
                for z in &cols {
                    if l.q(z) == l.gram()[2][2] / 2 && l.b2(x, z) == l.gram()[0][2] && l.b2(y, z) == l.gram()[1][2] {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    #[test]
    fn cubic_lattice_has_48_automorphisms() {
        let one = diag(1, 1, 1);
        let ts = transform_set(&one, &one, 1);
        assert_eq!(ts.matrices.len(), 48);
        assert_eq!(brute_orthogonal(&one, 1), 48);
    }

    #[test]
    fn automorphism_counts_match_brute_force() {
        for l in [diag(1, 1, 2), diag(1, 2, 3), bil([[2, 1, 0], [1, 2, 0], [0, 0, 3]])] {
            assert_eq!(transform_set(&l, &l, 1).matrices.len(), brute_orthogonal(&l, 2), "{l}");
        }
    }

    #[test]
    fn degenerate_modulus() {
        let rs = r_set(&diag(1, 2, 3), 1, 0).unwrap();
        assert_eq!(rs.vectors, vec![[0, 0, 0]]);
        assert!(r_set(&diag(1, 2, 3), 3, 3).is_err());
    }

    #[test]
    fn difference_sets_of_the_two_traps() {
        let v51 = check_trap(&cert51()).unwrap();
        assert_eq!(v51.difference, vec![[1, 0, 0], [2, 0, 0]]);
        let v53 = check_trap(&cert53()).unwrap();
        let want: BTreeSet<Vec3> = [[0, 1, 1], [0, 1, 3], [2, 1, 1], [2, 1, 3]]
            .iter()
            .flat_map(|v| [*v, reduce(&v.map(|x| -x), 4)])
            .collect();
        assert_eq!(v53.difference.iter().copied().collect::<BTreeSet<_>>(), want);
        assert!(!transform_set(&diag(1, 1, 36), &n51(), 3).matrices.is_empty());
        assert!(!transform_set(&diag(2, 3, 72), &diag(2, 3, 18), 4).matrices.is_empty());
    }

    #[test]
    fn trap_certificates_verify_with_their_exclusions() {
        let v = check_trap(&cert51()).unwrap();
        assert!(v.verified, "{:?}", v.failure);
        assert_eq!(v.excluded_values(), vec![8]);
        assert_eq!(v.exclusions[0].eigenvector, [1, 0, 0]);
        let v = check_trap(&cert53()).unwrap();
        assert!(v.verified, "{:?}", v.failure);
        assert_eq!(v.excluded_values(), vec![45]);
        assert_eq!(v.exclusions[0].eigenvector, [0, 3, -1]);
        assert_eq!(v.exclusions[0].eigenvalue, -4);
    }

    #[test]
    fn identity_certificate_is_rejected() {
        let one = diag(1, 1, 1);
        let cert = TrapCertificate {
            n: one,
            k: one,
            l: 1,
            r: 0,
            partitions: vec![Partition { vectors: vec![[0, 0, 0]], transform: crate::forms::IDENTITY }],
            tilde: vec![],
            expected_exclusions: vec![],
        };
        let v = check_trap(&cert).unwrap();
        assert!(!v.verified);
        assert!(v.failure.unwrap().contains("finite order"));
    }

    #[test]
    fn tampered_certificates_are_rejected() {
        let mut c = cert53();
        c.tilde.clear();
        assert!(!check_trap(&c).unwrap().verified);
        let mut c = cert51();
        c.partitions[0].transform[0][1] = 2;
        assert!(!check_trap(&c).unwrap().verified);
        let mut c = cert51();
        c.expected_exclusions = vec![9];
        assert!(!check_trap(&c).unwrap().verified);
    }

    #[test]
    fn certificate_json_round_trip() {
        let c = cert53();
        let back: TrapCertificate = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn order_tests_agree_on_small_matrices() {
        let one = diag(1, 1, 1);
        for t in transform_set(&one, &one, 1).matrices {
            assert!(finite_order(&t, 1));
            assert!(twelfth_power_is_identity(&t, 1));
        }
        let n = n51();
        for t in transform_set(&n, &n, 3).matrices {
            assert_eq!(finite_order(&t, 3), twelfth_power_is_identity(&t, 3), "{t:?}");
        }
    }

    #[test]
    fn prec_examples() {
        let m3 = GramLattice::from_upper([4, 8, 14, 0, 0, 4]).unwrap();
        for r in [1, 3] {
            assert!(check_prec(&m3, &diag(1, 6, 8), 4, r).unwrap().holds());
        }
        let m4 = bil([[2, 0, 1], [0, 4, 2], [1, 2, 9]]);
        for (l, r) in [(4, 3), (8, 1), (8, 5)] {
            assert!(check_prec(&m4, &diag(1, 5, 12), l, r).unwrap().holds());
        }
        let m6 = bil([[2, 1, 1], [1, 7, 0], [1, 0, 7]]);
        for (l, r) in [(4, 1), (8, 3), (8, 7)] {
            assert!(check_prec(&m6, &diag(3, 4, 7), l, r).unwrap().holds());
        }
        let m12 = bil([[7, 2, 0], [2, 16, 0], [0, 0, 3]]);
        for (l, r) in [(3, 0), (24, 7), (24, 19)] {
            let rep = check_prec(&m12, &diag(3, 4, 27), l, r).unwrap();
            assert!(rep.holds(), "({l},{r})");
            assert!(rep.certificate().verify().unwrap().holds());
        }
    }

    #[test]
    fn prec_failure_is_reported() {
        // ⟨1,1,1⟩ reaches 7 while ⟨1,1,2⟩... both ok; ⟨1,1,36⟩ misses 3 mod 4 classes of ⟨1,4,9⟩
        let rep = check_prec(&diag(1, 4, 9), &diag(1, 1, 36), 4, 1).unwrap();
        assert!(!rep.holds());
        assert!(rep.bad.iter().all(|v| diag(1, 4, 9).q(v).rem_euclid(4) == 1));
    }

    #[test]
    fn transfers_cross_check_numerically() {
        let v = check_trap(&cert51()).unwrap();
        let t = Transfer::from_trap("trap-3-2", &cert51(), &v).unwrap();
        let rep = transfer_conclusion(&t, 20_000).unwrap();
        assert!(rep.checked > 0);
        assert_eq!(rep.exclusions_represented, vec![(8, true)]);
        let v = check_trap(&cert53()).unwrap();
        let t = Transfer::from_trap("trap-4-1", &cert53(), &v).unwrap();
        let rep = transfer_conclusion(&t, 20_000).unwrap();
        assert_eq!(rep.exclusions_represented, vec![(45, true)]);
        assert!(rep.excluded_missed.is_empty());
        let m3 = GramLattice::from_upper([4, 8, 14, 0, 0, 4]).unwrap();
        let p = check_prec(&m3, &diag(1, 6, 8), 4, 1).unwrap();
        transfer_conclusion(&Transfer::from_prec(&p).unwrap(), 10_000).unwrap();
    }

    #[test]
    fn sublattice_enumeration_counts() {
        // subgroups of (ℤ/2)³ and (ℤ/3)³
        assert_eq!(sublattices_containing(2).len(), 16);
        assert_eq!(sublattices_containing(3).len(), 28);
        assert_eq!(sublattices_containing(6).len(), 16 * 28);
    }

    #[test]
    fn parity_route_between_genus_mates() {
        let route = find_route(&diag(1, 1, 36), &[Transfer::direct(&diag(1, 4, 9))], &[2]).unwrap();
        assert!(verify_route(&route).holds());
        assert_eq!(route.modulus, 2);
    }

    #[test]
    fn routes_through_the_traps() {
        let c = cert51();
        let t = Transfer::from_trap("trap-3-2", &c, &check_trap(&c).unwrap()).unwrap();
        let l1 = diag(1, 1, 36);
        let route = find_route(&diag(1, 4, 9), &[Transfer::direct(&l1), t], &[2, 6]).unwrap();
        assert!(verify_route(&route).holds());
        assert!(find_route(&diag(1, 4, 9), &[Transfer::direct(&l1)], &[2, 6]).is_none());

        let c = cert53();
        let t = Transfer::from_trap("trap-4-1", &c, &check_trap(&c).unwrap()).unwrap();
        let route = find_route(&diag(3, 8, 18), &[Transfer::direct(&diag(2, 3, 72)), t], &[2]).unwrap();
        assert!(verify_route(&route).holds());
    }

    #[test]
    fn broken_routes_are_rejected() {
        let mut route = find_route(&diag(1, 1, 36), &[Transfer::direct(&diag(1, 4, 9))], &[2]).unwrap();
        route.pieces.pop();
        assert!(!verify_route(&route).holds());
        route.modulus = 3;
        assert!(verify_route(&route).failure.is_some());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn r_set_size_is_multiplicative(a in 1i64..6, b in 1i64..6, c in 1i64..6, r in 0u64..12) {
            let n = GramLattice::diagonal(a, b, c);
            let (l1, l2) = (3u64, 4u64);
            let whole = r_set(&n, 12, r).unwrap().vectors.len();
            let p1 = r_set(&n, l1, r % l1).unwrap().vectors.len();
            let p2 = r_set(&n, l2, r % l2).unwrap().vectors.len();
            prop_assert_eq!(whole, p1 * p2);
        }

        #[test]
        fn r_set_matches_definition(a in 1i64..5, b in 1i64..5, c in 1i64..5, l in 1u64..7) {
            let n = GramLattice::diagonal(a, b, c);
            let total: usize = (0..l).map(|r| r_set(&n, l, r).unwrap().vectors.len()).sum();
            prop_assert_eq!(total as u64, l * l * l);
            for r in 0..l {
                for v in r_set(&n, l, r).unwrap().vectors {
                    prop_assert_eq!((a * v[0] * v[0] + b * v[1] * v[1] + c * v[2] * v[2]).rem_euclid(l as i64) as u64, r);
                }
            }
        }

        #[test]
        fn transforms_satisfy_the_identity(a in 1i64..4, b in 1i64..4, c in 1i64..4, l in 1u64..4) {
            let k = GramLattice::diagonal(a, b, c);
            let ts = transform_set(&k, &k, l);
            for t in &ts.matrices {
                prop_assert!(satisfies_identity(t, &k, &k, l));
                prop_assert_eq!(det3(t).abs(), (l as i128).pow(3));
            }
        }

        #[test]
        fn prec_conclusion_holds_numerically(a in 1i64..6, b in 1i64..6, c in 1i64..8, l in 2u64..5, r in 0u64..5) {
            let r = r % l;
            let n = GramLattice::diagonal(a, b, c);
            let k = diag(1, 1, 1);
            let rep = check_prec(&n, &k, l, r).unwrap();
            if rep.holds() {
                transfer_conclusion(&Transfer::from_prec(&rep).unwrap(), 3000).unwrap();
            }
        }
    }
}
