//! Genus membership and brute-force genus enumeration for ternary lattices.

use std::collections::BTreeSet;

use num_rational::Ratio;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{odd_prime_divisors, valuation};
use crate::error::{Error, Result};
use crate::forms::GramLattice;
use crate::localrep::jordan_odd;

/// Default cap on `disc` for [`enumerate_genus`].
pub const DEFAULT_DISC_CAP: i64 = 10_000;

fn rows(l: &GramLattice) -> Vec<Vec<i64>> {
    l.gram().iter().map(|r| r.to_vec()).collect()
}

/// `(exponent, rank, det class)` per Jordan constituent at an odd prime.
pub fn odd_jordan_invariants(l: &GramLattice, p: u64) -> Vec<(u32, usize, i32)> {
    let mut out: Vec<(u32, usize, i32)> = Vec::new();
    for e in jordan_odd(&rows(l), p) {
        match out.last_mut() {
            Some(last) if last.0 == e.exponent => {
                last.1 += 1;
                last.2 *= e.unit_class;
            }
            _ => out.push((e.exponent, 1, e.unit_class)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Block {
    One(Ratio<i128>),
    Two(Ratio<i128>, Ratio<i128>, Ratio<i128>),
}

fn val2(r: &Ratio<i128>) -> i64 {
    if r.is_zero() {
        i64::MAX
    } else {
        valuation(*r.numer(), 2) as i64 - valuation(*r.denom(), 2) as i64
    }
}

/// Block splitting of `G` over ℤ_2 using only transforms with odd
/// denominators, so the blocks are ℤ_2-equivalent to `L_2`.
fn two_adic_blocks(l: &GramLattice) -> Vec<Block> {
    let g = l.gram();
    let mut m: Vec<Vec<Ratio<i128>>> =
        (0..3).map(|i| (0..3).map(|j| Ratio::from_integer(g[i][j] as i128)).collect()).collect();
    let mut active: Vec<usize> = vec![0, 1, 2];
    let mut out = Vec::new();
    while !active.is_empty() {
        let diag = active.iter().copied().min_by_key(|&i| val2(&m[i][i])).unwrap();
        let mut off: Option<(usize, usize)> = None;
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                if off.is_none_or(|(a, b)| val2(&m[i][j]) < val2(&m[a][b])) {
                    off = Some((i, j));
                }
            }
        }
        let use_pair = matches!(off, Some((i, j)) if val2(&m[i][j]) < val2(&m[diag][diag]));
        if !use_pair {
            let i = diag;
            let pivot = m[i][i];
            let rest: Vec<usize> = active.iter().copied().filter(|&a| a != i).collect();
            for &a in &rest {
                for &b in &rest {
                    let t = m[a][i] * m[i][b] / pivot;
                    m[a][b] -= t;
                }
            }
            out.push(Block::One(pivot));
            active = rest;
        } else {
            let (i, j) = off.unwrap();
            let (p, q, r) = (m[i][i], m[i][j], m[j][j]);
            let det = p * r - q * q;
            let rest: Vec<usize> = active.iter().copied().filter(|&a| a != i && a != j).collect();
            for &a in &rest {
                for &b in &rest {
                    // [m_ai m_aj] A⁻¹ [m_ib m_jb]ᵀ
                    let t = (m[a][i] * (r * m[i][b] - q * m[j][b]) + m[a][j] * (p * m[j][b] - q * m[i][b])) / det;
                    m[a][b] -= t;
                }
            }
            out.push(Block::Two(p, q, r));
            active = rest;
        }
    }
    out
}

/// A 2-adic integer (odd denominator) reduced mod `2^k`.
fn mod_pow2(r: &Ratio<i128>, k: u32) -> u64 {
    let m = 1i128 << k;
    let den = r.denom().rem_euclid(m);
    // inverse of an odd number mod 2^k by Newton iteration
    let mut inv: i128 = 1;
    for _ in 0..7 {
        inv = (inv * (2 - den * inv)).rem_euclid(m);
    }
    (r.numer().rem_euclid(m) * inv).rem_euclid(m) as u64
}

fn half(r: &Ratio<i128>) -> Ratio<i128> {
    r / Ratio::from_integer(2)
}

fn block_counts(b: &Block, k: u32) -> Vec<u64> {
    let m = 1u64 << k;
    let mut out = vec![0u64; m as usize];
    match b {
        Block::One(g) => {
            let a = mod_pow2(&half(g), k);
            for x in 0..m {
                out[(a.wrapping_mul(x).wrapping_mul(x) % m) as usize] += 1;
            }
        }
        Block::Two(p, q, r) => {
            let a = mod_pow2(&half(p), k);
            let b = mod_pow2(q, k);
            let c = mod_pow2(&half(r), k);
            for x in 0..m {
                let ax2 = a.wrapping_mul(x * x % m) % m;
                let bx = b.wrapping_mul(x) % m;
                for y in 0..m {
                    let v = (ax2 + bx * y % m + c.wrapping_mul(y * y % m) % m) % m;
                    out[v as usize] += 1;
                }
            }
        }
    }
    out
}

fn convolve(a: &[u64], b: &[u64]) -> Vec<u64> {
    let m = a.len();
    let mut out = vec![0u64; m];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[(i + j) % m] += x * y;
        }
    }
    out
}

/// `#{x ∈ (ℤ/2^k)³ : Q(x) ≡ r}` for every residue `r`.
pub fn two_adic_counts(l: &GramLattice, k: u32) -> Vec<u64> {
    let blocks = two_adic_blocks(l);
    let mut acc = vec![0u64; 1 << k];
    acc[0] = 1;
    for b in &blocks {
        acc = convolve(&acc, &block_counts(b, k));
    }
    acc
}

/// Exponent used for the 2-adic comparison: `ord_2(32 · disc)`.
pub fn two_adic_precision(l: &GramLattice) -> u32 {
    2 + valuation(l.det_g(), 2)
}

pub fn same_genus(l: &GramLattice, m: &GramLattice) -> bool {
    if l.det_g() != m.det_g() {
        return false;
    }
    for p in odd_prime_divisors(l.det_g().unsigned_abs() as u64) {
        if odd_jordan_invariants(l, p) != odd_jordan_invariants(m, p) {
            return false;
        }
    }
    let k = two_adic_precision(l);
    two_adic_counts(l, k) == two_adic_counts(m, k)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenusDescriptor {
    pub representative: GramLattice,
    /// Canonical Grams, sorted.
    pub classes: Vec<GramLattice>,
    pub class_number: usize,
}

impl GenusDescriptor {
    /// Classes other than the representative's.
    pub fn mates(&self) -> Vec<GramLattice> {
        let rep = self.representative.canonical();
        self.classes.iter().filter(|c| **c != rep).copied().collect()
    }
}

/// Canonical Grams of every class with doubled-Gram determinant `det`,
/// from a superset of Minkowski-reduced Grams.
pub fn classes_with_det(det: i128) -> Vec<GramLattice> {
    let det = det as i64;
    let mut tops = Vec::new();
    let mut g11 = 2i64;
    while g11 * g11 * g11 <= 2 * det {
        let mut g22 = g11;
        while g11 * g22 * g22 <= 2 * det {
            tops.push((g11, g22));
            g22 += 2;
        }
        g11 += 2;
    }
    let found: BTreeSet<GramLattice> = tops
        .par_iter()
        .flat_map_iter(|&(g11, g22)| {
            let mut local = Vec::new();
            for g12 in 0..=g11 / 2 {
                let minor = g11 * g22 - g12 * g12;
                for g13 in 0..=g11 / 2 {
                    for g23 in -g22 / 2..=g22 / 2 {
                        let rest = 2 * g12 * g13 * g23 - g11 * g23 * g23 - g22 * g13 * g13;
                        let num = det - rest;
                        if num <= 0 || num % minor != 0 {
                            continue;
                        }
                        let g33 = num / minor;
                        if g33 % 2 != 0 || g33 < g22 || g11 * g22 * g33 > 2 * det {
                            continue;
                        }
                        if let Ok(l) = GramLattice::from_upper([g11, g22, g33, g12, g13, g23]) {
                            local.push(l.canonical());
                        }
                    }
                }
            }
            local
        })
        .collect();
    found.into_iter().collect()
}

pub fn enumerate_genus_with_cap(l: &GramLattice, disc_cap: i64) -> Result<GenusDescriptor> {
    let disc = l.discriminant();
    if disc > Ratio::from_integer(disc_cap) {
        return Err(Error::ResourceCap {
            what: format!("genus enumeration of {l}"),
            required: disc.ceil().to_integer() as u64,
            cap: disc_cap as u64,
        });
    }
    let classes: Vec<GramLattice> = classes_with_det(l.det_g())
        .into_par_iter()
        .filter(|c| same_genus(l, c))
        .collect();
    if !classes.contains(&l.canonical()) {
        return Err(Error::Internal(format!("{l} missing from its own genus enumeration")));
    }
    Ok(GenusDescriptor { representative: *l, class_number: classes.len(), classes })
}

pub fn enumerate_genus(l: &GramLattice) -> Result<GenusDescriptor> {
    enumerate_genus_with_cap(l, DEFAULT_DISC_CAP)
}

/// Residues mod `m` of values of `l` over a full period box.
pub fn residues_mod(l: &GramLattice, m: i64) -> Vec<bool> {
    let mut seen = vec![false; m as usize];
    for x in 0..m {
        for y in 0..m {
            for z in 0..m {
                seen[l.q(&[x, y, z]).rem_euclid(m) as usize] = true;
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::DiagonalForm;

    fn diag(a: i64, b: i64, c: i64) -> GramLattice {
        GramLattice::diagonal(a, b, c)
    }

    fn bil(b: [[i64; 3]; 3]) -> GramLattice {
        GramLattice::from_bilinear(b).unwrap()
    }

    // direct count over (ℤ/2^k)³
    fn brute_counts(l: &GramLattice, k: u32) -> Vec<u64> {
        let m = 1i64 << k;
        let mut out = vec![0u64; m as usize];
        for x in 0..m {
            for y in 0..m {
                for z in 0..m {
                    out[l.q(&[x, y, z]).rem_euclid(m) as usize] += 1;
                }
            }
        }
        out
    }

    #[test]
    fn block_counts_match_brute_force() {
        let cases = [
            diag(1, 1, 1),
            diag(1, 2, 24),
            GramLattice::from_upper([4, 2, 4, 0, 0, 1]).unwrap(),
            GramLattice::from_upper([2, 2, 2, 1, 1, 1]).unwrap(),
            GramLattice::from_upper([6, 10, 14, 2, 4, 6]).unwrap(),
            bil([[2, 1, 1], [1, 7, 0], [1, 0, 7]]),
        ];
        for l in cases {
            for k in 1..=5 {
                assert_eq!(two_adic_counts(&l, k), brute_counts(&l, k), "{l} k={k}");
            }
        }
    }

    #[test]
    fn same_genus_examples() {
        assert!(same_genus(&diag(1, 4, 9), &diag(1, 1, 36)));
        let m3 = GramLattice::from_upper([4, 8, 14, 0, 0, 4]).unwrap();
        assert!(same_genus(&diag(1, 6, 8), &m3));
        assert!(!same_genus(&diag(1, 1, 1), &diag(1, 1, 2)));
        // same determinant, different genus
        assert!(!same_genus(&diag(1, 1, 4), &diag(1, 2, 2)));
    }

    #[test]
    fn enumerate_examples() {
        let g = enumerate_genus(&diag(1, 4, 9)).unwrap();
        assert_eq!(g.class_number, 2);
        assert!(g.mates()[0].is_isometric(&diag(1, 1, 36)));

        let g = enumerate_genus(&diag(3, 4, 7)).unwrap();
        assert_eq!(g.class_number, 2);
        assert!(g.mates()[0].is_isometric(&bil([[2, 1, 1], [1, 7, 0], [1, 0, 7]])));

        assert_eq!(enumerate_genus(&diag(1, 1, 1)).unwrap().class_number, 1);
    }

    #[test]
    fn kaplansky_forms_have_class_number_one() {
        for (a, b, c) in [(1, 1, 2), (1, 2, 3), (1, 2, 4), (1, 1, 3)] {
            assert_eq!(enumerate_genus(&diag(a, b, c)).unwrap().class_number, 1, "<{a},{b},{c}>");
        }
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            enumerate_genus_with_cap(&diag(1, 100, 200), 1000),
            Err(Error::ResourceCap { .. })
        ));
    }

    #[test]
    fn classes_cover_all_small_diagonals() {
        // every diagonal form of small determinant appears among the classes
        for det in [8i128 * 12, 8 * 20, 8 * 36] {
            let classes = classes_with_det(det);
            for a in 1..=36i64 {
                for b in a..=36 {
                    for c in b..=36 {
                        if (8 * a * b * c) as i128 == det {
                            let l = diag(a, b, c).canonical();
                            assert!(classes.contains(&l), "{l}");
                        }
                    }
                }
            }
            for (i, x) in classes.iter().enumerate() {
                for y in &classes[i + 1..] {
                    assert!(!x.is_isometric(y));
                }
            }
        }
    }

    #[test]
    fn genus_relation_is_an_equivalence_on_a_corpus() {
        let det = 8 * 36;
        let classes = classes_with_det(det);
        for x in &classes {
            assert!(same_genus(x, x));
            for y in &classes {
                assert_eq!(same_genus(x, y), same_genus(y, x));
                if !same_genus(x, y) {
                    continue;
                }
                for z in &classes {
                    if same_genus(y, z) {
                        assert!(same_genus(x, z));
                    }
                }
            }
        }
    }

    #[test]
    fn genus_mates_share_residues() {
        for f in [DiagonalForm::new(1, 4, 9).unwrap(), DiagonalForm::new(3, 4, 7).unwrap()] {
            let g = enumerate_genus(&f.lattice()).unwrap();
            let m = 8 * f.discriminant();
            let base = residues_mod(&g.classes[0], m);
            for c in &g.classes[1..] {
                assert_eq!(residues_mod(c, m), base);
            }
        }
    }
}
