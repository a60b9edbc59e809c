//! Diagonal ternary forms, ternary lattices stored by doubled Gram matrix,
//! and binary forms.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vec3 = [i64; 3];
pub type Mat3 = [[i64; 3]; 3];

pub const IDENTITY: Mat3 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

pub fn det3(m: &Mat3) -> i128 {
    let e = |i: usize, j: usize| m[i][j] as i128;
    e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1))
        - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0))
        + e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0))
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0i64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0i64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub fn mat_vec(a: &Mat3, x: &Vec3) -> Vec3 {
    [
        a[0][0] * x[0] + a[0][1] * x[1] + a[0][2] * x[2],
        a[1][0] * x[0] + a[1][1] * x[1] + a[1][2] * x[2],
        a[2][0] * x[0] + a[2][1] * x[1] + a[2][2] * x[2],
    ]
}

/// Matrix whose columns are `cols`.
pub fn from_columns(cols: &[Vec3; 3]) -> Mat3 {
    let mut m = [[0i64; 3]; 3];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..3 {
            m[i][j] = c[i];
        }
    }
    m
}

pub fn column(m: &Mat3, j: usize) -> Vec3 {
    [m[0][j], m[1][j], m[2][j]]
}

/// Adjugate, so that `m * adj(m) = det(m) I`.
pub fn adjugate(m: &Mat3) -> Mat3 {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ]
}

fn parse_ints(s: &str) -> Result<Vec<i64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<i64>().map_err(|e| Error::Parse {
                input: s.to_string(),
                reason: format!("`{t}`: {e}"),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------

/// Primitive positive diagonal form `a x² + b y² + c z²`, stored with `a ≤ b ≤ c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiagonalForm {
    pub a: i64,
    pub b: i64,
    pub c: i64,
}

impl DiagonalForm {
    pub fn new(a: i64, b: i64, c: i64) -> Result<Self> {
        if a <= 0 || b <= 0 || c <= 0 {
            return Err(Error::NotPositiveDefinite(format!("<{a},{b},{c}>")));
        }
        if a.gcd(&b).gcd(&c) != 1 {
            return Err(Error::NotPrimitive(format!("<{a},{b},{c}>")));
        }
        let mut v = [a, b, c];
        v.sort_unstable();
        Ok(DiagonalForm { a: v[0], b: v[1], c: v[2] })
    }

    /// Divides out the content and sorts.
    pub fn normalized(a: i64, b: i64, c: i64) -> Result<Self> {
        let g = a.gcd(&b).gcd(&c);
        if g == 0 {
            return Err(Error::NotPositiveDefinite("<0,0,0>".into()));
        }
        Self::new(a / g, b / g, c / g)
    }

    pub fn coeffs(&self) -> [i64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn discriminant(&self) -> i64 {
        self.a * self.b * self.c
    }

    pub fn value(&self, x: &Vec3) -> i64 {
        self.a * x[0] * x[0] + self.b * x[1] * x[1] + self.c * x[2] * x[2]
    }

    pub fn lattice(&self) -> GramLattice {
        GramLattice::diagonal(self.a, self.b, self.c)
    }

    pub fn encode(&self) -> String {
        format!("{},{},{}", self.a, self.b, self.c)
    }
}

impl fmt::Display for DiagonalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{},{}>", self.a, self.b, self.c)
    }
}

impl FromStr for DiagonalForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let v = parse_ints(s.trim_matches(|c| c == '<' || c == '>'))?;
        if v.len() != 3 {
            return Err(Error::Parse {
                input: s.into(),
                reason: format!("expected 3 coefficients, got {}", v.len()),
            });
        }
        DiagonalForm::new(v[0], v[1], v[2])
    }
}

impl Serialize for DiagonalForm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.encode())
    }
}

impl<'de> Deserialize<'de> for DiagonalForm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------

/// Positive definite ternary lattice given by its doubled Gram matrix `G`;
/// `Q(x) = xᵀGx / 2`. Primitivity is not enforced here (Watson sublattices
/// are generally imprimitive); see [`GramLattice::is_primitive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GramLattice {
    g: Mat3,
}

impl GramLattice {
    pub fn new(g: Mat3) -> Result<Self> {
        for i in 0..3 {
            for j in 0..3 {
                if g[i][j] != g[j][i] {
                    return Err(Error::InvalidArgument(format!("Gram matrix not symmetric: {g:?}")));
                }
            }
            if g[i][i] % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "doubled Gram matrix needs an even diagonal: {g:?}"
                )));
            }
        }
        let m1 = g[0][0] as i128;
        let m2 = g[0][0] as i128 * g[1][1] as i128 - g[0][1] as i128 * g[0][1] as i128;
        if m1 <= 0 || m2 <= 0 || det3(&g) <= 0 {
            return Err(Error::NotPositiveDefinite(format!("{g:?}")));
        }
        Ok(GramLattice { g })
    }

    /// From the six upper-triangle entries `g11,g22,g33,g12,g13,g23`.
    pub fn from_upper(e: [i64; 6]) -> Result<Self> {
        let [g11, g22, g33, g12, g13, g23] = e;
        Self::new([[g11, g12, g13], [g12, g22, g23], [g13, g23, g33]])
    }

    /// From an integral bilinear-form matrix `B`, so `G = 2B`.
    pub fn from_bilinear(b: Mat3) -> Result<Self> {
        let mut g = b;
        for row in g.iter_mut() {
            for e in row.iter_mut() {
                *e *= 2;
            }
        }
        Self::new(g)
    }

    pub fn diagonal(a: i64, b: i64, c: i64) -> Self {
        Self::new([[2 * a, 0, 0], [0, 2 * b, 0], [0, 0, 2 * c]]).expect("positive diagonal")
    }

    /// Orthogonal sum of a binary block (doubled Gram entries) and `⟨c⟩`.
    pub fn binary_plus(g11: i64, g12: i64, g22: i64, c: i64) -> Result<Self> {
        Self::new([[g11, g12, 0], [g12, g22, 0], [0, 0, 2 * c]])
    }

    pub fn gram(&self) -> &Mat3 {
        &self.g
    }

    pub fn upper(&self) -> [i64; 6] {
        let g = &self.g;
        [g[0][0], g[1][1], g[2][2], g[0][1], g[0][2], g[1][2]]
    }

    pub fn q(&self, x: &Vec3) -> i64 {
        let g = &self.g;
        (g[0][0] / 2) * x[0] * x[0]
            + (g[1][1] / 2) * x[1] * x[1]
            + (g[2][2] / 2) * x[2] * x[2]
            + g[0][1] * x[0] * x[1]
            + g[0][2] * x[0] * x[2]
            + g[1][2] * x[1] * x[2]
    }

    /// `2B(x, y) = xᵀGy`.
    pub fn b2(&self, x: &Vec3, y: &Vec3) -> i64 {
        let gy = mat_vec(&self.g, y);
        x[0] * gy[0] + x[1] * gy[1] + x[2] * gy[2]
    }

    pub fn det_g(&self) -> i128 {
        det3(&self.g)
    }

    /// `det(G/2)`, which may be a half-integer multiple for scale ½ℤ lattices.
    pub fn discriminant(&self) -> Ratio<i64> {
        Ratio::new(self.det_g() as i64, 8)
    }

    /// Generator of the norm ideal: gcd of `Q(e_i)` and `2B(e_i, e_j)`.
    pub fn norm_gcd(&self) -> i64 {
        let g = &self.g;
        [g[1][1] / 2, g[2][2] / 2, g[0][1], g[0][2], g[1][2]]
            .iter()
            .fold(g[0][0] / 2, |acc, &x| acc.gcd(&x))
    }

    pub fn is_primitive(&self) -> bool {
        self.norm_gcd() == 1
    }

    /// Whether `B(L, L) ⊆ ℤ`, as opposed to `½ℤ`.
    pub fn scale_is_integral(&self) -> bool {
        self.g[0][1] % 2 == 0 && self.g[0][2] % 2 == 0 && self.g[1][2] % 2 == 0
    }

    pub fn require_primitive(self) -> Result<Self> {
        if self.is_primitive() {
            Ok(self)
        } else {
            Err(Error::NotPrimitive(self.encode()))
        }
    }

    /// Lattice with Gram `G / k`; `k` must divide the norm generator.
    pub fn divided(&self, k: i64) -> Result<Self> {
        if k <= 0 || self.norm_gcd() % k != 0 {
            return Err(Error::InvalidArgument(format!("cannot divide {} by {k}", self.encode())));
        }
        let mut g = self.g;
        for row in g.iter_mut() {
            for e in row.iter_mut() {
                *e /= k;
            }
        }
        Self::new(g)
    }

    pub fn scaled(&self, k: i64) -> Self {
        let mut g = self.g;
        for row in g.iter_mut() {
            for e in row.iter_mut() {
                *e *= k;
            }
        }
        Self::new(g).expect("positive scaling preserves definiteness")
    }

    /// Gram of the sublattice spanned by the columns of `u`: `uᵀ G u`.
    pub fn transform(&self, u: &Mat3) -> Result<Self> {
        Self::new(mat_mul(&transpose(u), &mat_mul(&self.g, u)))
    }

    pub fn encode(&self) -> String {
        let u = self.upper();
        format!("{},{},{},{},{},{}", u[0], u[1], u[2], u[3], u[4], u[5])
    }

    /// Parses either `a,b,c` (diagonal, not necessarily primitive) or the six
    /// doubled-Gram entries `g11,g22,g33,g12,g13,g23`.
    pub fn parse(s: &str) -> Result<Self> {
        let v = parse_ints(s.trim_matches(|c| c == '<' || c == '>'))?;
        match v.len() {
            3 => {
                if v.iter().any(|&x| x <= 0) {
                    return Err(Error::NotPositiveDefinite(s.into()));
                }
                Ok(Self::diagonal(v[0], v[1], v[2]))
            }
            6 => Self::from_upper([v[0], v[1], v[2], v[3], v[4], v[5]]).map_err(|e| match e {
                Error::InvalidArgument(r) => Error::Parse { input: s.into(), reason: r },
                other => other,
            }),
            n => Err(Error::Parse {
                input: s.into(),
                reason: format!("expected 3 or 6 integers, got {n}"),
            }),
        }
    }

    /// Diagonal form isometric to this lattice, if the canonical Gram is diagonal.
    pub fn as_diagonal(&self) -> Option<DiagonalForm> {
        let c = self.canonical();
        let u = c.upper();
        if u[3] == 0 && u[4] == 0 && u[5] == 0 {
            DiagonalForm::new(u[0] / 2, u[1] / 2, u[2] / 2).ok()
        } else {
            None
        }
    }

    /// Canonical representative of the isometry class.
    ///
    /// The three successive minima of a ternary lattice are attained by a
    /// basis; among all such bases we take the Gram minimising
    /// `(g11, g22, g33, -g12, -g13, -g23)` lexicographically. The result is
    /// Minkowski reduced and equal for isometric inputs.
    pub fn canonical(&self) -> GramLattice {
        let (red, _) = pair_reduce(&self.g);
        let lat = GramLattice { g: red };
        let bound = red[0][0].max(red[1][1]).max(red[2][2]);
        let mut vecs = lat.short_vectors_raw(bound);
        vecs.sort_by_key(|(_, n)| *n);

        // successive minima
        let mut minima = [0i64; 3];
        let mut chosen: Vec<Vec3> = Vec::new();
        for (v, n) in &vecs {
            if chosen.len() == 3 {
                break;
            }
            let independent = match chosen.len() {
                0 => true,
                1 => cross(&chosen[0], v) != [0, 0, 0],
                _ => det3(&from_columns(&[chosen[0], chosen[1], *v])) != 0,
            };
            if independent {
                minima[chosen.len()] = *n;
                chosen.push(*v);
            }
        }
        debug_assert_eq!(chosen.len(), 3);

        let by_norm = |m: i64| -> Vec<Vec3> {
            vecs.iter().filter(|(_, n)| *n == m).map(|(v, _)| *v).collect()
        };
        let s1 = by_norm(minima[0]);
        let s2 = by_norm(minima[1]);
        let s3 = by_norm(minima[2]);

        let mut best: Option<[i64; 6]> = None;
        for v1 in &s1 {
            let gv1 = mat_vec(&red, v1);
            for v2 in &s2 {
                if cross(v1, v2) == [0, 0, 0] {
                    continue;
                }
                let g12 = dot(&gv1, v2);
                if let Some(b) = best {
                    if -g12 > b[3] {
                        continue;
                    }
                }
                let gv2 = mat_vec(&red, v2);
                for v3 in &s3 {
                    let d = det3(&from_columns(&[*v1, *v2, *v3]));
                    if d != 1 && d != -1 {
                        continue;
                    }
                    let key = [minima[0], minima[1], minima[2], -g12, -dot(&gv1, v3), -dot(&gv2, v3)];
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
            }
        }
        let k = best.expect("successive minima of a ternary lattice are attained by a basis");
        GramLattice::from_upper([k[0], k[1], k[2], -k[3], -k[4], -k[5]]).expect("isometric to input")
    }

    pub fn is_isometric(&self, other: &GramLattice) -> bool {
        self.det_g() == other.det_g() && self.canonical() == other.canonical()
    }

    /// All nonzero `x` with `xᵀGx ≤ bound2` (doubled values), paired with `xᵀGx`.
    pub fn short_vectors(&self, bound2: i64) -> Vec<(Vec3, i64)> {
        let (red, u) = pair_reduce(&self.g);
        GramLattice { g: red }
            .short_vectors_raw(bound2)
            .into_iter()
            .map(|(y, n)| (mat_vec(&u, &y), n))
            .collect()
    }

    /// All `x` with `Q(x) = n` exactly.
    pub fn vectors_of_norm(&self, n: i64) -> Vec<Vec3> {
        if n == 0 {
            return vec![[0, 0, 0]];
        }
        self.short_vectors(2 * n)
            .into_iter()
            .filter(|(_, m)| *m == 2 * n)
            .map(|(v, _)| v)
            .collect()
    }

    pub fn represents(&self, n: i64) -> bool {
        n == 0 || (n > 0 && !self.vectors_of_norm(n).is_empty())
    }

    /// Box enumeration in the given coordinates with an exact inner solve.
    fn short_vectors_raw(&self, bound2: i64) -> Vec<(Vec3, i64)> {
        let g = &self.g;
        let det = self.det_g();
        let adj = adjugate(g);
        let mut out = Vec::new();
        if bound2 <= 0 {
            return out;
        }
        // |x_i|² ≤ bound2 · (G⁻¹)_ii
        let lim = |i: usize| -> i64 {
            let num = bound2 as i128 * adj[i][i] as i128;
            isqrt_i128(num / det) as i64
        };
        let (l2, l3) = (lim(1), lim(2));
        let g11 = g[0][0] as i128;
        for x3 in -l3..=l3 {
            for x2 in -l2..=l2 {
                let lin = (g[0][1] as i128) * x2 as i128 + (g[0][2] as i128) * x3 as i128;
                let rest = (g[1][1] as i128) * (x2 * x2) as i128
                    + (g[2][2] as i128) * (x3 * x3) as i128
                    + 2 * (g[1][2] as i128) * (x2 * x3) as i128;
                // g11 x1² + 2 lin x1 + rest ≤ bound2
                let disc = lin * lin - g11 * (rest - bound2 as i128);
                if disc < 0 {
                    continue;
                }
                let s = isqrt_i128(disc);
                let lo = div_floor(-lin - s - 1, g11);
                let hi = div_floor(-lin + s + 1, g11) + 1;
                for x1 in lo..=hi {
                    let v = g11 * x1 * x1 + 2 * lin * x1 + rest;
                    if v <= bound2 as i128 && (x1 != 0 || x2 != 0 || x3 != 0) {
                        out.push(([x1 as i64, x2, x3], v as i64));
                    }
                }
            }
        }
        out
    }
}

/// All integer `X` with `Xᵀ G_into X = scale · G_sub`, in a deterministic
/// order; columns are images of the basis of `sub`. Stops after `limit`.
pub fn embeddings(sub: &GramLattice, into: &GramLattice, scale: i64, limit: Option<usize>) -> Vec<Mat3> {
    let gs = sub.gram();
    let target = |i: usize, j: usize| scale * gs[i][j];
    let top = (0..3).map(|i| target(i, i)).max().unwrap_or(0);
    let mut pool = into.short_vectors(top);
    pool.sort();
    let cands: Vec<Vec<Vec3>> = (0..3)
        .map(|i| pool.iter().filter(|(_, n)| *n == target(i, i)).map(|(v, _)| *v).collect())
        .collect();
    let mut out = Vec::new();
    for c0 in &cands[0] {
        let g0 = mat_vec(into.gram(), c0);
        for c1 in &cands[1] {
            if dot(&g0, c1) != target(0, 1) {
                continue;
            }
            let g1 = mat_vec(into.gram(), c1);
            for c2 in &cands[2] {
                if dot(&g0, c2) != target(0, 2) || dot(&g1, c2) != target(1, 2) {
                    continue;
                }
                out.push(from_columns(&[*c0, *c1, *c2]));
                if limit.is_some_and(|l| out.len() >= l) {
                    return out;
                }
            }
        }
    }
    out
}

fn div_floor(a: i128, b: i128) -> i128 {
    a.div_euclid(b)
}

pub fn isqrt_i128(n: i128) -> i128 {
    if n <= 0 {
        return 0;
    }
    let mut x = (n as f64).sqrt() as i128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot(a: &Vec3, b: &Vec3) -> i64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Greedy pairwise size reduction; returns the reduced Gram and the basis
/// change `u` with `reduced = uᵀ G u`.
fn pair_reduce(g: &Mat3) -> (Mat3, Mat3) {
    let mut g = *g;
    let mut u = IDENTITY;
    loop {
        let mut changed = false;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                // b_i -= k b_j with k = round(g_ij / g_jj)
                let k = round_div(g[i][j], g[j][j]);
                if k != 0 && k * k * g[j][j] - 2 * k * g[i][j] < 0 {
                    apply_shear(&mut g, &mut u, i, j, k);
                    changed = true;
                }
            }
        }
        // b_i ± b_j ± b_k for the remaining 3-term reductions
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            for (sj, sk) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let delta = g[j][j] + g[k][k] + 2 * sj * sk * g[j][k] + 2 * sj * g[i][j] + 2 * sk * g[i][k];
                if delta < 0 {
                    apply_shear(&mut g, &mut u, i, j, -sj);
                    apply_shear(&mut g, &mut u, i, k, -sk);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (g, u)
}

fn round_div(a: i64, b: i64) -> i64 {
    // nearest integer to a / b, b > 0
    (2 * a + b).div_euclid(2 * b)
}

/// Replaces basis vector `i` by `b_i - k b_j`.
fn apply_shear(g: &mut Mat3, u: &mut Mat3, i: usize, j: usize, k: i64) {
    for r in 0..3 {
        u[r][i] -= k * u[r][j];
    }
    for r in 0..3 {
        g[r][i] -= k * g[r][j];
    }
    for c in 0..3 {
        g[i][c] -= k * g[j][c];
    }
}

impl fmt::Display for GramLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

impl FromStr for GramLattice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GramLattice::parse(s)
    }
}

impl Serialize for GramLattice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.encode())
    }
}

impl<'de> Deserialize<'de> for GramLattice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        GramLattice::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl From<DiagonalForm> for GramLattice {
    fn from(f: DiagonalForm) -> Self {
        f.lattice()
    }
}

// ---------------------------------------------------------------------------

/// Positive definite binary form `a x² + b xy + c y²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinaryForm {
    pub a: i64,
    pub b: i64,
    pub c: i64,
}

impl BinaryForm {
    pub fn new(a: i64, b: i64, c: i64) -> Result<Self> {
        if a <= 0 || b * b - 4 * a * c >= 0 {
            return Err(Error::NotPositiveDefinite(format!("({a},{b},{c})")));
        }
        Ok(BinaryForm { a, b, c })
    }

    /// `⟨i, j⟩ = i x² + j y²`.
    pub fn diagonal(i: i64, j: i64) -> Result<Self> {
        Self::new(i.min(j), 0, i.max(j))
    }

    pub fn discriminant(&self) -> i64 {
        self.b * self.b - 4 * self.a * self.c
    }

    pub fn is_primitive(&self) -> bool {
        self.a.gcd(&self.b).gcd(&self.c) == 1
    }

    pub fn is_diagonal(&self) -> bool {
        self.b == 0
    }

    pub fn value(&self, x: i64, y: i64) -> i64 {
        self.a * x * x + self.b * x * y + self.c * y * y
    }

    pub fn is_reduced(&self) -> bool {
        let (a, b, c) = (self.a, self.b, self.c);
        b.abs() <= a && a <= c && !(b < 0 && (b.abs() == a || a == c))
    }

    /// Gauss reduction to the unique reduced form in the proper class.
    pub fn reduce(&self) -> BinaryForm {
        let (mut a, mut b, mut c) = (self.a, self.b, self.c);
        loop {
            // x -> x - k y brings b into (-a, a]
            let k = (b + a - 1).div_euclid(2 * a);
            c = c - k * b + k * k * a;
            b -= 2 * k * a;
            if a > c {
                std::mem::swap(&mut a, &mut c);
                b = -b;
                continue;
            }
            if a == c && b < 0 {
                b = -b;
            }
            return BinaryForm { a, b, c };
        }
    }

    pub fn encode(&self) -> String {
        if self.b == 0 {
            format!("<{},{}>", self.a, self.c)
        } else {
            format!("({},{},{})", self.a, self.b, self.c)
        }
    }
}

impl fmt::Display for BinaryForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unimodular(rng: &mut ChaCha8Rng, steps: usize) -> Mat3 {
        let mut u = IDENTITY;
        for _ in 0..steps {
            let i = rng.gen_range(0..3);
            let mut j = rng.gen_range(0..3);
            while j == i {
                j = rng.gen_range(0..3);
            }
            let k = rng.gen_range(-2..=2);
            for r in 0..3 {
                u[r][i] += k * u[r][j];
            }
            if rng.gen_bool(0.2) {
                for r in 0..3 {
                    u[r].swap(i, j);
                }
            }
        }
        u
    }

    #[test]
    fn discriminants() {
        assert_eq!(DiagonalForm::new(1, 1, 36).unwrap().discriminant(), 36);
        assert_eq!(DiagonalForm::new(3, 8, 216).unwrap().discriminant(), 5184);
        let m3 = GramLattice::from_bilinear([[2, 0, 0], [0, 4, 2], [0, 2, 7]]).unwrap();
        assert_eq!(m3.discriminant(), Ratio::from_integer(48));
        let half = GramLattice::from_upper([4, 2, 4, 0, 0, 1]).unwrap();
        assert_eq!(half.discriminant(), Ratio::new(7, 2));
        assert!(!half.scale_is_integral());
        assert!(half.is_primitive());
    }

    #[test]
    fn diagonal_validation() {
        assert!(matches!(DiagonalForm::new(2, 4, 6), Err(Error::NotPrimitive(_))));
        assert!(DiagonalForm::new(0, 1, 1).is_err());
        let f: DiagonalForm = "5,1,4".parse().unwrap();
        assert_eq!(f.coeffs(), [1, 4, 5]);
        assert!("1,2".parse::<DiagonalForm>().is_err());
        assert!("1,x,2".parse::<DiagonalForm>().is_err());
    }

    #[test]
    fn gram_validation() {
        assert!(GramLattice::from_upper([3, 2, 2, 0, 0, 0]).is_err());
        assert!(GramLattice::from_upper([2, 2, 2, 3, 0, 0]).is_err());
        assert!(GramLattice::parse("2,4,6,1,0,0").is_ok());
        assert!(GramLattice::parse("2,4,6,1").is_err());
    }

    #[test]
    fn canonical_of_permutation() {
        let l = GramLattice::diagonal(72, 2, 6);
        assert_eq!(l.canonical(), GramLattice::diagonal(2, 6, 72));
        let id = GramLattice::diagonal(1, 1, 1);
        assert_eq!(id.canonical(), id);
    }

    #[test]
    fn canonical_after_random_basis_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x1455);
        let base = GramLattice::diagonal(1, 4, 5);
        for _ in 0..50 {
            let u = random_unimodular(&mut rng, 8);
            let moved = base.transform(&u).unwrap();
            assert_eq!(moved.canonical(), base, "U = {u:?}");
            assert_eq!(moved.as_diagonal(), Some(DiagonalForm::new(1, 4, 5).unwrap()));
        }
    }

    #[test]
    fn isometry_examples() {
        let a = GramLattice::diagonal(1, 4, 5);
        let b = GramLattice::diagonal(4, 1, 5);
        assert!(a.is_isometric(&b));
        let c = GramLattice::diagonal(1, 4, 9);
        let d = GramLattice::diagonal(1, 1, 36);
        assert!(!c.is_isometric(&d));
    }

    #[test]
    fn nondiagonal_canonical_is_not_diagonal() {
        let m6 = GramLattice::from_bilinear([[2, 1, 1], [1, 7, 0], [1, 0, 7]]).unwrap();
        assert!(m6.as_diagonal().is_none());
        assert!(!m6.is_isometric(&GramLattice::diagonal(3, 4, 7)));
    }

    #[test]
    fn short_vectors_match_brute_force() {
        let l = GramLattice::from_bilinear([[2, 1, 1], [1, 7, 0], [1, 0, 7]]).unwrap();
        let mut fast: Vec<Vec3> = l.short_vectors(40).into_iter().map(|(v, _)| v).collect();
        fast.sort();
        let mut slow = Vec::new();
        for x in -10..=10 {
            for y in -10..=10 {
                for z in -10..=10 {
                    let v = [x, y, z];
                    if v != [0, 0, 0] && 2 * l.q(&v) <= 40 {
                        slow.push(v);
                    }
                }
            }
        }
        slow.sort();
        assert_eq!(fast, slow);
    }

    #[test]
    fn binary_reduction() {
        let f = BinaryForm::new(3, 8, 7).unwrap().reduce();
        assert!(f.is_reduced());
        assert_eq!(f.discriminant(), 64 - 84);
        assert_eq!(BinaryForm::new(1, 0, 1).unwrap().reduce(), BinaryForm::new(1, 0, 1).unwrap());
        assert!(BinaryForm::new(1, 3, 1).is_err());
    }

    fn arb_lattice() -> impl Strategy<Value = GramLattice> {
        (1i64..8, 1i64..8, 1i64..8, -4i64..=4, -4i64..=4, -4i64..=4).prop_filter_map(
            "positive definite",
            |(a, b, c, x, y, z)| GramLattice::from_upper([2 * a, 2 * b, 2 * c, x, y, z]).ok(),
        )
    }

    proptest! {
        #[test]
        fn canonical_is_idempotent_and_preserves_det(l in arb_lattice()) {
            let c = l.canonical();
            prop_assert_eq!(c.det_g(), l.det_g());
            prop_assert_eq!(c.canonical(), c);
        }

        #[test]
        fn canonical_is_basis_invariant(l in arb_lattice(), seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_unimodular(&mut rng, 6);
            let moved = l.transform(&u).unwrap();
            prop_assert!(moved.is_isometric(&l));
            prop_assert_eq!(moved.discriminant(), l.discriminant());
        }

        #[test]
        fn diagonal_round_trip(a in 1i64..50, b in 1i64..50, c in 1i64..50) {
            if let Ok(f) = DiagonalForm::new(a, b, c) {
                prop_assert_eq!(f.lattice().as_diagonal(), Some(f));
            }
        }

        #[test]
        fn binary_reduce_keeps_disc(a in 1i64..30, b in -30i64..30, c in 1i64..30) {
            if let Ok(f) = BinaryForm::new(a, b, c) {
                let r = f.reduce();
                prop_assert!(r.is_reduced());
                prop_assert_eq!(r.discriminant(), f.discriminant());
            }
        }
    }
}
