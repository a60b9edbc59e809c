//! Watson transformations and the descent to stable forms.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{is_prime, jacobi, valuation};
use crate::error::{Error, Result};
use crate::forms::{DiagonalForm, GramLattice, Mat3, Vec3};
use crate::localrep::{first_unstable_prime, is_stable, unimodular_component_anisotropic};
use crate::sieve::{first_exception, Mode};

/// Row-style Hermite normal form of the lattice generated by `gens`.
/// Returns basis vectors as the columns of the result.
pub fn hermite_basis(gens: &[Vec3]) -> Result<Mat3> {
    let mut rows: Vec<[i128; 3]> = gens.iter().map(|v| [v[0] as i128, v[1] as i128, v[2] as i128]).collect();
    let mut pivot = 0;
    for col in 0..3 {
        loop {
            let best = (pivot..rows.len())
                .filter(|&r| rows[r][col] != 0)
                .min_by_key(|&r| rows[r][col].abs());
            let Some(best) = best else { break };
            rows.swap(pivot, best);
            let mut clean = true;
            for r in pivot + 1..rows.len() {
                let q = rows[r][col].div_euclid(rows[pivot][col]);
                if q != 0 {
                    for k in 0..3 {
                        rows[r][k] -= q * rows[pivot][k];
                    }
                }
                if rows[r][col] != 0 {
                    clean = false;
                }
            }
            if clean {
                break;
            }
        }
        if pivot < rows.len() && rows[pivot][col] != 0 {
            if rows[pivot][col] < 0 {
                for k in 0..3 {
                    rows[pivot][k] = -rows[pivot][k];
                }
            }
            for r in 0..pivot {
                let q = rows[r][col].div_euclid(rows[pivot][col]);
                for k in 0..3 {
                    rows[r][k] -= q * rows[pivot][k];
                }
            }
            pivot += 1;
        }
        rows.retain(|r| r.iter().any(|&x| x != 0));
    }
    if pivot != 3 || rows.len() != 3 {
        return Err(Error::Internal("generators do not span a full-rank lattice".into()));
    }
    let mut basis = [[0i64; 3]; 3];
    for (j, row) in rows.iter().enumerate() {
        for i in 0..3 {
            basis[i][j] = i64::try_from(row[i]).map_err(|_| Error::Internal("HNF overflow".into()))?;
        }
    }
    Ok(basis)
}

fn check_modulus(m: u64) -> Result<()> {
    if m == 2 || (m > 2 && is_prime(m)) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("Watson transformation needs m = 2 or an odd prime, got {m}")))
    }
}

/// `Λ_m(L) = {x : Q(x) ≡ 0, 2B(x, L) ≡ 0 (mod m)}` as a (generally
/// imprimitive) Gram in Hermite basis coordinates.
pub fn big_lambda(l: &GramLattice, m: u64) -> Result<GramLattice> {
    check_modulus(m)?;
    let m = m as i64;
    let g = l.gram();
    let mut gens: Vec<Vec3> = vec![[m, 0, 0], [0, m, 0], [0, 0, m]];
    for x0 in 0..m {
        for x1 in 0..m {
            for x2 in 0..m {
                if x0 == 0 && x1 == 0 && x2 == 0 {
                    continue;
                }
                let x = [x0, x1, x2];
                let linear_ok = (0..3).all(|i| (0..3).map(|j| g[i][j] * x[j]).sum::<i64>().rem_euclid(m) == 0);
                if linear_ok && l.q(&x).rem_euclid(m) == 0 {
                    gens.push(x);
                }
            }
        }
    }
    let basis = hermite_basis(&gens)?;
    l.transform(&basis)
}

/// `λ_m(L)`: `Λ_m(L)` rescaled to norm ideal ℤ, in canonical form.
pub fn lambda(l: &GramLattice, m: u64) -> Result<GramLattice> {
    let big = big_lambda(l, m)?;
    Ok(big.divided(big.norm_gcd())?.canonical())
}

/// `λ_p` of a diagonal form at an odd prime, computed coordinatewise:
/// coefficients prime to `p` pick up `p²`, then the content is removed.
pub fn lambda_diagonal(f: &DiagonalForm, p: u64) -> Result<DiagonalForm> {
    check_modulus(p)?;
    if p == 2 {
        return Err(Error::InvalidArgument("lambda_diagonal is for odd primes".into()));
    }
    let p = p as i64;
    let [a, b, c] = f.coeffs().map(|x| if x % p == 0 { x } else { x * p * p });
    DiagonalForm::normalized(a, b, c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionChain {
    pub start: DiagonalForm,
    pub steps: Vec<(u64, DiagonalForm)>,
    pub terminal: DiagonalForm,
}

impl ReductionChain {
    /// Odd primes dividing the start's coefficients but not the terminal's.
    pub fn missing_primes(&self) -> Vec<u64> {
        let start = self.start.discriminant() as u64;
        let end = self.terminal.discriminant() as u64;
        crate::arith::odd_prime_divisors(start)
            .into_iter()
            .filter(|&p| !end.is_multiple_of(p))
            .collect()
    }
}

const MAX_REDUCTION_STEPS: usize = 64;

/// Applies `λ_p` at the smallest unstable odd prime until the form is stable.
pub fn reduce_to_stable(f: &DiagonalForm) -> Result<ReductionChain> {
    let mut cur = *f;
    let mut steps = Vec::new();
    while let Some(p) = first_unstable_prime(&cur.lattice()) {
        if !unimodular_component_anisotropic(&cur.lattice(), p) {
            return Err(Error::ReductionBlocked { prime: p, form: cur.to_string() });
        }
        cur = lambda_diagonal(&cur, p)?;
        steps.push((p, cur));
        if steps.len() > MAX_REDUCTION_STEPS {
            return Err(Error::Internal(format!("reduction of {f} does not terminate")));
        }
    }
    debug_assert!(is_stable(&cur.lattice()));
    Ok(ReductionChain { start: *f, steps, terminal: cur })
}

// ---------------------------------------------------------------------------
// missing primes

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    /// `⟨a, l²b, l²c⟩`
    TypeOne,
    /// `⟨a, b, l²c⟩` with `(-ab/l) = -1`
    TypeTwo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingPrimeVerdict {
    pub l: u64,
    pub base: DiagonalForm,
    pub kind: VariantKind,
    pub variant: DiagonalForm,
    pub bound: u64,
    /// Smallest odd exception found, `None` if clean up to `bound`.
    pub exception: Option<u64>,
}

/// All variants of the given kind built from `base` at `l`.
pub fn variants(base: &DiagonalForm, l: u64, kind: VariantKind) -> Result<Vec<DiagonalForm>> {
    let ll = (l * l) as i64;
    let c = base.coeffs();
    let mut out = Vec::new();
    for k in 0..3 {
        let others = [(k + 1) % 3, (k + 2) % 3];
        let v = match kind {
            VariantKind::TypeOne => DiagonalForm::new(c[k], ll * c[others[0]], ll * c[others[1]])?,
            VariantKind::TypeTwo => {
                if jacobi(-c[others[0]] * c[others[1]], l as i64)? != -1 {
                    continue;
                }
                DiagonalForm::new(c[others[0]], c[others[1]], ll * c[k])?
            }
        };
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Smallest odd exception up to `bound`, trying small bounds first.
/// Exceptions are stable under extension, so the first hit is exact.
pub fn first_odd_exception(l: &GramLattice, bound: u64) -> Result<Option<u64>> {
    let mut n = 2_000.min(bound);
    loop {
        if let Some(e) = first_exception(l, Mode::Odd, n)? {
            return Ok(Some(e));
        }
        if n == bound {
            return Ok(None);
        }
        n = (n * 10).min(bound);
    }
}

pub fn missing_prime_scan(
    bases: &[DiagonalForm],
    primes: &[u64],
    kind: VariantKind,
    bound: u64,
) -> Result<Vec<MissingPrimeVerdict>> {
    let mut jobs = Vec::new();
    for &l in primes {
        if l < 3 || !is_prime(l) {
            return Err(Error::InvalidArgument(format!("{l} is not an odd prime")));
        }
        for base in bases {
            if base.coeffs().iter().any(|&x| x % l as i64 == 0) {
                return Err(Error::InvalidArgument(format!("{l} divides a coefficient of {base}")));
            }
            for v in variants(base, l, kind)? {
                jobs.push((l, *base, v));
            }
        }
    }
    jobs.par_iter()
        .map(|&(l, base, variant)| {
            let exception = first_odd_exception(&variant.lattice(), bound)?;
            Ok(MissingPrimeVerdict { l, base, kind, variant, bound, exception })
        })
        .collect()
}

/// Bound on `#{0 ≤ n < l : 8n + α not represented over ℤ_p}` for a type-(i)
/// variant at `l`.
pub fn local_failure_bound(p: u64, l: u64) -> Ratio<i64> {
    let l = l as i64;
    if p as i64 == l {
        return Ratio::new(l + 1, 2);
    }
    let p = p as i64;
    let ceil = (l + p * p - 1) / (p * p);
    Ratio::from_integer((p + 1) / 2 * ceil)
}

/// The counting argument excluding large type-(i) missing primes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingGate {
    pub l: u64,
    /// `3l/25 + 3 > 4l/49 + 4`, so `{3, 5}` is the worst anisotropic set.
    pub worst_set_is_3_5: bool,
    /// `⌈l − (2l/9 + 2 + 3l/25 + 3 + (l+1)/2)⌉`
    pub genus_lower: i64,
    /// `[√(2l) + 1/2]`
    pub represented_upper: i64,
    pub contradiction: bool,
}

pub fn counting_gate(l: u64) -> CountingGate {
    let li = l as i64;
    let lr = Ratio::from_integer(li);
    let three_five = lr * Ratio::new(3, 25) + 3 > lr * Ratio::new(4, 49) + 4;
    let lost = Ratio::new(2, 9) * lr + 2 + Ratio::new(3, 25) * lr + 3 + Ratio::new(li + 1, 2);
    let genus_lower = (lr - lost).ceil().to_integer();
    // largest k with k − 1/2 ≤ √(2l), i.e. (2k − 1)² ≤ 8l
    let mut k = 0i64;
    while (2 * (k + 1) - 1).pow(2) <= 8 * li {
        k += 1;
    }
    CountingGate {
        l,
        worst_set_is_3_5: three_five,
        genus_lower,
        represented_upper: k,
        contradiction: three_five && genus_lower > k,
    }
}

/// `p`-adic valuation of the discriminant, used in ascent bookkeeping.
pub fn disc_valuation(f: &DiagonalForm, p: u64) -> u32 {
    valuation(f.discriminant() as i128, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localrep::LocalOracle;
    use proptest::prelude::*;

    fn d(a: i64, b: i64, c: i64) -> DiagonalForm {
        DiagonalForm::new(a, b, c).unwrap()
    }

    fn diag_lattice(a: i64, b: i64, c: i64) -> GramLattice {
        GramLattice::diagonal(a, b, c)
    }

    // independent oracle: membership in Λ_m straight from the definition
    // Q(x + z) ≡ Q(z) for all z mod m
    fn in_lambda(l: &GramLattice, m: i64, x: &Vec3) -> bool {
        for z0 in 0..m {
            for z1 in 0..m {
                for z2 in 0..m {
                    let z = [z0, z1, z2];
                    let s = [x[0] + z0, x[1] + z1, x[2] + z2];
                    if (l.q(&s) - l.q(&z)).rem_euclid(m) != 0 {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[test]
    fn big_lambda_examples() {
        let l = big_lambda(&diag_lattice(1, 1, 36), 3).unwrap();
        assert!(l.is_isometric(&diag_lattice(9, 9, 36)));
        let l = big_lambda(&diag_lattice(1, 5, 100), 5).unwrap();
        assert!(l.is_isometric(&diag_lattice(25, 5, 100)));
    }

    #[test]
    fn big_lambda_two_of_half_integral_example() {
        let l = GramLattice::from_upper([4, 2, 4, 0, 0, 1]).unwrap();
        let big = big_lambda(&l, 2).unwrap();
        // even-valued vectors form the sublattice with x2 ≡ x3 ≡ 0
        assert_eq!(big.det_g(), l.det_g() * 16);
        assert_eq!(big.norm_gcd(), 2);
        let lam = lambda(&l, 2).unwrap();
        assert!(lam.is_isometric(&GramLattice::from_upper([2, 4, 8, 0, 0, 2]).unwrap()));
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda(&diag_lattice(1, 5, 100), 5).unwrap().as_diagonal(), Some(d(1, 5, 20)));
        assert_eq!(lambda(&diag_lattice(1, 5, 20), 5).unwrap().as_diagonal(), Some(d(1, 4, 5)));
    }

    #[test]
    fn reduction_examples() {
        let chain = reduce_to_stable(&d(1, 5, 100)).unwrap();
        assert_eq!(chain.steps, vec![(5, d(1, 5, 20)), (5, d(1, 4, 5))]);
        assert_eq!(chain.terminal, d(1, 4, 5));
        assert_eq!(chain.missing_primes(), Vec::<u64>::new());
        assert!(reduce_to_stable(&d(1, 4, 5)).unwrap().steps.is_empty());
        assert_eq!(reduce_to_stable(&d(1, 9, 108)).unwrap().terminal, d(1, 1, 12));
    }

    #[test]
    fn diagonal_reductions_never_block() {
        // an unstable diagonal form has unimodular rank ≤ 1 or an anisotropic plane
        for a in 1..=12i64 {
            for b in a..=60 {
                for c in b..=400 {
                    let Ok(f) = DiagonalForm::new(a, b, c) else { continue };
                    let chain = reduce_to_stable(&f).unwrap();
                    assert!(is_stable(&chain.terminal.lattice()));
                }
            }
        }
    }

    #[test]
    fn rejects_composite_modulus() {
        assert!(big_lambda(&diag_lattice(1, 1, 1), 9).is_err());
    }

    #[test]
    fn counting_gate_values() {
        let g = counting_gate(157);
        assert!(g.worst_set_is_3_5);
        assert_eq!((g.genus_lower, g.represented_upper), (20, 18));
        assert!(g.contradiction);
        for l in crate::arith::primes_up_to(5000).into_iter().filter(|&l| l >= 157) {
            assert!(counting_gate(l).contradiction, "l = {l}");
        }
        assert!(!counting_gate(11).contradiction);
    }

    #[test]
    fn local_failure_bounds_hold_on_type_one_variants() {
        for base in [d(1, 1, 2), d(1, 4, 5), d(3, 4, 7), d(1, 2, 3)] {
            for l in [11u64, 13, 29, 31] {
                for v in variants(&base, l, VariantKind::TypeOne).unwrap() {
                    let lat = v.lattice();
                    let oracle = LocalOracle::new(&lat);
                    for alpha in (1..8).step_by(2) {
                        if !oracle.represents_at_two(alpha) {
                            continue;
                        }
                        for p in [3u64, 5, 7, l] {
                            let fails = (0..l as i64).filter(|n| !oracle.represents_at(p, 8 * n + alpha)).count();
                            assert!(
                                Ratio::from_integer(fails as i64) <= local_failure_bound(p, l),
                                "{v} α={alpha} p={p}: {fails}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn type_two_requires_nonresidue() {
        for base in [d(1, 1, 2), d(1, 2, 3), d(3, 4, 7)] {
            for l in [11u64, 13, 17, 19, 23, 29] {
                for v in variants(&base, l, VariantKind::TypeTwo).unwrap() {
                    let c = v.coeffs();
                    let ll = (l * l) as i64;
                    let (big, small): (Vec<i64>, Vec<i64>) = c.iter().partition(|&&x| x % ll == 0);
                    assert_eq!(big.len(), 1);
                    assert_eq!(jacobi(-small[0] * small[1], l as i64).unwrap(), -1);
                }
            }
        }
    }

    #[test]
    fn scan_finds_exception_for_small_example() {
        let out = missing_prime_scan(&[d(1, 1, 2)], &[11], VariantKind::TypeOne, 100_000).unwrap();
        assert!(!out.is_empty());
        assert!(out.iter().all(|v| v.exception.is_some()));
    }

    fn shapes(limit: i64) -> Vec<(DiagonalForm, u64)> {
        // ⟨a, b, p^s c⟩ with p ∤ abc, s ≥ 2, ⟨a, b⟩ anisotropic at p
        let mut out = Vec::new();
        for p in [3i64, 5, 7] {
            for a in 1..=limit {
                for b in a..=limit {
                    for c in 1..=limit {
                        if a % p == 0 || b % p == 0 || c % p == 0 {
                            continue;
                        }
                        if jacobi(-a * b, p).unwrap() != -1 {
                            continue;
                        }
                        let mut pc = p * p * c;
                        while a * b * pc <= 10_000 {
                            if let Ok(f) = DiagonalForm::new(a, b, pc) {
                                out.push((f, p as u64));
                            }
                            pc *= p;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn descent_identity_on_all_small_shapes() {
        let all = shapes(40);
        assert!(all.len() > 100);
        for (f, p) in all {
            let [a, b, c] = {
                let pi = p as i64;
                let mut co = f.coeffs().to_vec();
                let k = co.iter().position(|&x| x % (pi * pi) == 0).unwrap();
                let z = co.remove(k) / (pi * pi);
                [co[0], co[1], z]
            };
            let expect = DiagonalForm::new(a, b, c).unwrap();
            assert_eq!(lambda_diagonal(&f, p).unwrap(), expect, "{f} at {p}");
        }
    }

    #[test]
    fn generic_lambda_matches_diagonal_rule() {
        for (f, p) in shapes(12).into_iter().step_by(7) {
            let generic = lambda(&f.lattice(), p).unwrap();
            assert!(generic.is_isometric(&lambda_diagonal(&f, p).unwrap().lattice()), "{f} at {p}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn big_lambda_matches_definition(
            g11 in 1i64..6, g22 in 1i64..6, g33 in 1i64..6,
            g12 in -2i64..3, g13 in -2i64..3, g23 in -2i64..3,
            m in prop::sample::select(vec![2i64, 3, 5]),
        ) {
            let Ok(l) = GramLattice::from_upper([2 * g11, 2 * g22, 2 * g33, g12, g13, g23]) else {
                return Ok(());
            };
            let big = big_lambda(&l, m as u64).unwrap();
            // index from the definition
            let mut count = 0;
            for x0 in 0..m { for x1 in 0..m { for x2 in 0..m {
                if in_lambda(&l, m, &[x0, x1, x2]) { count += 1; }
            }}}
            let index = m * m * m / count;
            prop_assert_eq!(big.det_g(), l.det_g() * (index * index) as i128);
            prop_assert_eq!(lambda(&l, m as u64).unwrap().norm_gcd(), 1);
        }

        #[test]
        fn odd_lambdas_commute(
            a in 1i64..30, b in 1i64..30, c in 1i64..30,
            p in prop::sample::select(vec![3u64, 5, 7]),
            q in prop::sample::select(vec![3u64, 5, 7]),
        ) {
            let Ok(f) = DiagonalForm::normalized(a, b, c) else { return Ok(()); };
            let pq = lambda_diagonal(&lambda_diagonal(&f, p).unwrap(), q).unwrap();
            let qp = lambda_diagonal(&lambda_diagonal(&f, q).unwrap(), p).unwrap();
            prop_assert_eq!(pq, qp);
        }
    }

    #[test]
    fn lambdas_commute_on_small_discriminants() {
        let mut checked = 0;
        for a in 1..=22i64 {
            for b in a..=(10_000 / a).min(400) {
                for c in b..=(10_000 / (a * b)) {
                    let Ok(f) = DiagonalForm::new(a, b, c) else { continue };
                    for (p, q) in [(3, 5), (3, 7), (5, 7)] {
                        let pq = lambda_diagonal(&lambda_diagonal(&f, p).unwrap(), q).unwrap();
                        let qp = lambda_diagonal(&lambda_diagonal(&f, q).unwrap(), p).unwrap();
                        assert_eq!(pq, qp);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 1000);
    }
}
