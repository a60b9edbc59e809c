//! Published values the reproduction is compared against. Nothing here is
//! used as an input to a computation; every entry is recomputed and checked.

/// `(factors of N, δ, w)`: the least `w` for the product inequality.
pub const W_ROWS: [(&[u64], u32, usize); 11] = [
    (&[1], 3, 21),
    (&[1], 2, 11),
    (&[257], 1, 8),
    (&[193, 401], 0, 6),
    (&[16], 1, 6),
    (&[419, 443], 1, 10),
    (&[139, 163, 443], 0, 8),
    (&[389, 397], 1, 10),
    (&[157, 173, 541], 0, 8),
    (&[431, 439], 1, 10),
    (&[167, 191, 431], 0, 8),
];

/// `(η, u, v, w, ψ_η(u, v; w))`.
pub const PSI_ROWS: [(u8, i64, i64, usize, usize); 11] = [
    (1, 1, 193, 16, 8),
    (1, 1, 73, 5, 2),
    (3, 139, 163, 22, 12),
    (3, 107, 131, 20, 12),
    (3, 67, 83, 15, 9),
    (3, 59, 67, 12, 7),
    (5, 157, 173, 26, 16),
    (5, 53, 61, 13, 8),
    (7, 167, 191, 21, 11),
    (7, 127, 151, 17, 9),
    (7, 71, 79, 12, 7),
];

/// Diagonal binary forms `⟨i, j⟩` representing every prime `≡ η (mod 8)`.
pub const UNIVERSAL_BINARIES: [(u8, &[(i64, i64)]); 4] = [
    (1, &[(1, 1), (1, 2), (1, 4), (1, 8), (1, 16)]),
    (3, &[(1, 2)]),
    (5, &[(1, 1), (1, 4)]),
    (7, &[]),
];

/// Stable odd-regular forms that are not regular, with the odd residue
/// class `α` driving each search branch.
pub const STABLE_NONREGULAR: [(u8, [i64; 3]); 8] = [
    (1, [1, 4, 5]),
    (1, [1, 2, 24]),
    (1, [1, 6, 8]),
    (1, [1, 5, 12]),
    (1, [1, 4, 21]),
    (3, [3, 4, 7]),
    (5, [2, 5, 24]),
    (3, [5, 6, 8]),
];

/// The other class in the genus of each stable non-regular form, as a
/// symmetric matrix of the bilinear form (`G = 2B`).
pub const STABLE_MATES: [[[i64; 3]; 3]; 8] = [
    [[1, 0, 0], [0, 1, 0], [0, 0, 20]],
    [[3, 1, 0], [1, 3, 0], [0, 0, 6]],
    [[2, 0, 0], [0, 4, 2], [0, 2, 7]],
    [[2, 0, 1], [0, 4, 2], [1, 2, 9]],
    [[1, 0, 0], [0, 1, 0], [0, 0, 84]],
    [[2, 1, 1], [1, 7, 0], [1, 0, 7]],
    [[7, 3, 0], [3, 7, 0], [0, 0, 6]],
    [[11, 1, 0], [1, 11, 0], [0, 0, 2]],
];

/// `(l, r)` pairs with `mate ≺_{l,r} form` for the stable forms proved that way.
pub const STABLE_PREC: [(usize, &[(u64, u64)]); 3] = [
    (3, &[(4, 1), (4, 3)]),
    (4, &[(4, 3), (8, 1), (8, 5)]),
    (6, &[(4, 1), (8, 3), (8, 7)]),
];

/// Non-stable, non-regular candidates in their published order (1-based index
/// is the list position plus one).
pub const NONSTABLE_CANDIDATES: [[i64; 3]; 37] = [
    [1, 1, 36],
    [1, 4, 9],
    [1, 5, 20],
    [2, 3, 24],
    [3, 6, 8],
    [1, 3, 54],
    [3, 4, 15],
    [1, 12, 21],
    [3, 7, 12],
    [1, 5, 60],
    [1, 9, 36],
    [3, 4, 27],
    [1, 6, 72],
    [1, 18, 24],
    [2, 3, 72],
    [2, 9, 24],
    [6, 8, 9],
    [1, 5, 100],
    [1, 12, 45],
    [5, 9, 12],
    [1, 21, 28],
    [3, 7, 28],
    [2, 15, 24],
    [6, 8, 15],
    [3, 15, 20],
    [1, 9, 108],
    [1, 16, 72],
    [1, 10, 120],
    [1, 30, 40],
    [1, 21, 84],
    [3, 7, 84],
    [1, 45, 60],
    [5, 9, 60],
    [1, 24, 144],
    [3, 10, 120],
    [3, 30, 40],
    [3, 8, 216],
];

/// 1-based indices of the candidates whose odd-regularity is left open.
pub const OPEN_CANDIDATES: [usize; 6] = [6, 18, 26, 27, 34, 37];

/// Candidates proved through a printed `≺` family, with the pairs used.
pub const NONSTABLE_PREC: [(usize, &[(u64, u64)]); 7] = [
    (12, &[(3, 0), (24, 7), (24, 19)]),
    (13, &[(4, 1), (4, 3)]),
    (14, &[(4, 1), (4, 3)]),
    (16, &[(4, 1), (4, 3)]),
    (17, &[(4, 1), (4, 3)]),
    (19, &[(8, 1), (8, 5)]),
    (20, &[(8, 1), (8, 5)]),
];

/// Printed mate of candidate 12, bilinear matrix.
pub const MATE_12: [[i64; 3]; 3] = [[7, 2, 0], [2, 16, 0], [0, 0, 3]];

/// Proof strategy the published argument uses for each non-open candidate.
pub fn published_strategy(index: usize) -> &'static str {
    match index {
        2 | 11 => "parity",
        1 | 15 => "trap",
        12 | 13 | 14 | 16 | 17 | 19 | 20 => "prec",
        i if OPEN_CANDIDATES.contains(&i) => "open",
        _ => "descent",
    }
}

pub const CANDIDATE_TOTAL: usize = 147;
pub const REGULAR_TOTAL: usize = 102;
pub const STABLE_REGULAR_TOTAL: usize = 45;

/// `(a, b)` pairs of coefficients taken from stable odd-regular forms.
pub const COEFFICIENT_PAIRS: [(i64, &[i64]); 8] = [
    (1, &[1, 2, 3, 4, 5, 6, 8, 10, 12, 16, 21, 24, 32, 40, 48, 64]),
    (2, &[2, 3, 4, 5, 6, 8, 10, 16, 24, 32]),
    (3, &[4, 7, 8, 10]),
    (4, &[4, 5, 6, 7, 8, 12, 16, 21, 24]),
    (5, &[6, 8, 12, 24]),
    (6, &[8, 16]),
    (8, &[8, 16, 24, 32, 40, 64]),
    (16, &[16, 24, 48]),
];

/// Witness sets `E_η`: each element `≡ η (mod 8)` and free of the primes
/// `≤ 7` and `≥ 31`.
pub const E_SETS: [(u8, [i64; 3]); 4] = [
    (1, [1, 11 * 19, 13 * 29]),
    (3, [11, 11 * 17, 13 * 23]),
    (5, [13, 13 * 17, 11 * 23]),
    (7, [23, 11 * 13, 17 * 23]),
];

/// Pairwise coprime integers `≡ 1 (mod 8)` outside `Q(⟨1, b⟩)`, for the
/// `b ∈ {1, 4, 16}` and `b ∈ {2, 8}` branches.
pub const COPRIME_WITNESSES_SQUARE: [i64; 6] = [201, 553, 649, 817, 1457, 1633];
pub const COPRIME_WITNESSES_DOUBLE: [i64; 6] = [305, 553, 689, 1073, 1457, 1633];

/// Diagonal forms representing every odd positive integer.
pub const ALL_ODD_FORMS: [[i64; 3]; 3] = [[1, 1, 2], [1, 2, 3], [1, 2, 4]];

/// Largest discriminant among the non-stable candidates.
pub const LARGEST_CANDIDATE_DISC: i64 = 3 * 8 * 216;

pub fn nonstable(index: usize) -> [i64; 3] {
    NONSTABLE_CANDIDATES[index - 1]
}

pub fn is_open(index: usize) -> bool {
    OPEN_CANDIDATES.contains(&index)
}

pub fn coefficient_pairs() -> Vec<(i64, i64)> {
    COEFFICIENT_PAIRS.iter().flat_map(|(a, bs)| bs.iter().map(move |b| (*a, *b))).collect()
}
