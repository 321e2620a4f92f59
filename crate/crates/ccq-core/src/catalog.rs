//! Built-in desk-scale instances — Hamming and Johnson schemes, classical
//! point sets, small binary codes — plus the three text formats (point set,
//! code, relation partition) as string parsers and emitters. File IO lives
//! in the companion crate; everything here works on in-memory strings.
//!
//! Every built-in point set is certified on construction: its advertised
//! strength and angle set are recomputed and enforced, so a catalog object
//! in hand is already a verified instance.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::construct::{cluster_angles, derived_designs, spherical_strength, PointSet};
use crate::error::{CcqError, Result};
use crate::matlin::{fabs, sqrt, Tolerance};
use crate::scheme::{validate_scheme, RelationPartition, Scheme, MAX_POINTS};

// ---------------------------------------------------------------------------
// Codes
// ---------------------------------------------------------------------------

/// A subset of words over `{0..q-1}^n`, kept in ascending numeric order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Code {
    q: usize,
    n: usize,
    words: Vec<Vec<u8>>,
}

impl Code {
    /// Validates alphabet bounds and word lengths, sorts, and rejects
    /// duplicates.
    pub fn new(q: usize, n: usize, mut words: Vec<Vec<u8>>) -> Result<Self> {
        if q < 2 {
            return Err(CcqError::pre(format!("code alphabet must be >= 2, got {q}")));
        }
        if n == 0 {
            return Err(CcqError::pre("code length must be positive"));
        }
        if words.is_empty() {
            return Err(CcqError::pre("code has no words"));
        }
        for (k, w) in words.iter().enumerate() {
            if w.len() != n {
                return Err(CcqError::pre(format!(
                    "word {k} has length {}, expected {n}",
                    w.len()
                )));
            }
            if let Some(&bad) = w.iter().find(|&&s| s as usize >= q) {
                return Err(CcqError::pre(format!(
                    "word {k} contains symbol {bad}, alphabet is 0..{}",
                    q - 1
                )));
            }
        }
        words.sort();
        words.dedup();
        Ok(Code { q, n, words })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn words(&self) -> &[Vec<u8>] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Indices of the words inside the Hamming scheme's point order: a word
    /// is read as a base-`q` numeral, most significant digit first —
    /// matching [`hamming_partition`]'s enumeration.
    pub fn point_indices(&self) -> Vec<usize> {
        self.words
            .iter()
            .map(|w| w.iter().fold(0usize, |acc, &d| acc * self.q + d as usize))
            .collect()
    }
}

/// All even-weight words of `{0,1}^n`.
pub fn even_code(n: usize) -> Result<Code> {
    parity_code(n, 0)
}

/// All odd-weight words of `{0,1}^n`.
pub fn odd_code(n: usize) -> Result<Code> {
    parity_code(n, 1)
}

fn parity_code(n: usize, parity: u32) -> Result<Code> {
    if n == 0 || n > 12 {
        return Err(CcqError::pre(format!(
            "parity code needs 1 <= n <= 12, got {n}"
        )));
    }
    let words = (0..1usize << n)
        .filter(|x| x.count_ones() % 2 == parity)
        .map(|x| (0..n).map(|b| ((x >> (n - 1 - b)) & 1) as u8).collect())
        .collect();
    Code::new(2, n, words)
}

/// The seven weight-3 words of length 7 whose supports are the lines
/// `{i, i+1, i+3} mod 7`; any two intersect in exactly one coordinate.
pub fn fano_plane() -> Code {
    let mut words = Vec::new();
    for i in 0..7usize {
        let mut w = alloc::vec![0u8; 7];
        for off in [0usize, 1, 3] {
            w[(i + off) % 7] = 1;
        }
        words.push(w);
    }
    Code::new(2, 7, words).expect("valid by construction")
}

/// Complements of [`fano_plane`]: seven weight-4 words of length 7.
pub fn fano_complement() -> Code {
    let words = fano_plane()
        .words()
        .iter()
        .map(|w| w.iter().map(|&b| 1 - b).collect())
        .collect();
    Code::new(2, 7, words).expect("valid by construction")
}

/// The one-word code `{0^n}` over `{0,1}`.
pub fn singleton_code(n: usize) -> Result<Code> {
    if n == 0 || n > 12 {
        return Err(CcqError::pre(format!(
            "singleton code needs 1 <= n <= 12, got {n}"
        )));
    }
    Code::new(2, n, alloc::vec![alloc::vec![0u8; n]])
}

// ---------------------------------------------------------------------------
// Scheme generators
// ---------------------------------------------------------------------------

/// Relation partition of the Hamming scheme `H(n, q)`: points are the words
/// of `{0..q-1}^n` in ascending numeric order (most significant digit
/// first), and the relation of a pair is its Hamming distance.
pub fn hamming_partition(n: usize, q: usize) -> Result<RelationPartition> {
    if n == 0 || q < 2 {
        return Err(CcqError::pre(format!(
            "hamming needs n >= 1 and q >= 2, got n={n}, q={q}"
        )));
    }
    let mut size = 1usize;
    for _ in 0..n {
        size = size
            .checked_mul(q)
            .filter(|&s| s <= MAX_POINTS)
            .ok_or_else(|| {
                CcqError::pre(format!("hamming({n},{q}) exceeds {MAX_POINTS} points"))
            })?;
    }
    // Distances via digit decomposition; cache each point's digits.
    let digits: Vec<Vec<u8>> = (0..size)
        .map(|mut x| {
            let mut w = alloc::vec![0u8; n];
            for b in (0..n).rev() {
                w[b] = (x % q) as u8;
                x /= q;
            }
            w
        })
        .collect();
    let mut labels = alloc::vec![0u16; size * size];
    for x in 0..size {
        for y in 0..size {
            let dist = digits[x]
                .iter()
                .zip(&digits[y])
                .filter(|(a, b)| a != b)
                .count();
            labels[x * size + y] = dist as u16;
        }
    }
    RelationPartition::new(size, labels)
}

/// The Hamming scheme `H(n, q)`, validated.
pub fn hamming(n: usize, q: usize) -> Result<Scheme> {
    validate_scheme(&hamming_partition(n, q)?)
}

/// Relation partition of the Johnson scheme `J(v, k)`: points are the
/// `k`-subsets of `{0..v-1}` in lexicographic order, and the relation of a
/// pair `(S, T)` is `k - |S ∩ T|`.
pub fn johnson_partition(v: usize, k: usize) -> Result<RelationPartition> {
    if k == 0 || k >= v {
        return Err(CcqError::pre(format!(
            "johnson needs 0 < k < v, got v={v}, k={k}"
        )));
    }
    // Count C(v, k) through min(k, v-k) factors: those intermediates are
    // increasing, so the cap can be enforced without overflow.
    let mut count = 1usize;
    for i in 0..k.min(v - k) {
        count = count
            .checked_mul(v - i)
            .map(|c| c / (i + 1))
            .filter(|&c| c <= MAX_POINTS)
            .ok_or_else(|| {
                CcqError::pre(format!("johnson({v},{k}) exceeds {MAX_POINTS} points"))
            })?;
    }
    // Lexicographic k-subsets as sorted index vectors.
    let mut subsets: Vec<Vec<usize>> = Vec::with_capacity(count);
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        subsets.push(cur.clone());
        // Advance to the next combination.
        let mut i = k;
        while i > 0 {
            i -= 1;
            if cur[i] != i + v - k {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                let m = subsets.len();
                debug_assert_eq!(m, count);
                let mut labels = alloc::vec![0u16; m * m];
                for a in 0..m {
                    for b in 0..m {
                        let mut inter = 0usize;
                        let (mut p, mut r) = (0usize, 0usize);
                        while p < k && r < k {
                            match subsets[a][p].cmp(&subsets[b][r]) {
                                core::cmp::Ordering::Less => p += 1,
                                core::cmp::Ordering::Greater => r += 1,
                                core::cmp::Ordering::Equal => {
                                    inter += 1;
                                    p += 1;
                                    r += 1;
                                }
                            }
                        }
                        labels[a * m + b] = (k - inter) as u16;
                    }
                }
                return RelationPartition::new(m, labels);
            }
        }
    }
}

/// The Johnson scheme `J(v, k)`, validated.
pub fn johnson(v: usize, k: usize) -> Result<Scheme> {
    validate_scheme(&johnson_partition(v, k)?)
}

/// The grid scheme on `m x n` points: relations are identity, same row,
/// same column, and neither. Its spectrum admits no ordering making the
/// second eigenmatrix tridiagonal, which makes it the standard negative
/// witness for such searches.
pub fn rectangular_partition(m: usize, n: usize) -> Result<RelationPartition> {
    if m < 2 || n < 2 {
        return Err(CcqError::pre(format!(
            "rectangular needs both sides >= 2, got {m} x {n}"
        )));
    }
    let size = m
        .checked_mul(n)
        .filter(|&s| s <= MAX_POINTS)
        .ok_or_else(|| CcqError::pre(format!("rectangular({m},{n}) exceeds {MAX_POINTS} points")))?;
    let mut labels = alloc::vec![0u16; size * size];
    for a in 0..size {
        let (ra, ca) = (a / n, a % n);
        for b in 0..size {
            let (rb, cb) = (b / n, b % n);
            labels[a * size + b] = if a == b {
                0
            } else if ra == rb {
                1
            } else if ca == cb {
                2
            } else {
                3
            };
        }
    }
    RelationPartition::new(size, labels)
}

/// Distance partition of the `n`-cycle (`n >= 3`): the relation of a pair
/// is the circular distance `min(|x-y|, n-|x-y|)`.
pub fn cycle_partition(n: usize) -> Result<RelationPartition> {
    if n < 3 || n > MAX_POINTS {
        return Err(CcqError::pre(format!(
            "cycle needs 3 <= n <= {MAX_POINTS}, got {n}"
        )));
    }
    let mut labels = alloc::vec![0u16; n * n];
    for a in 0..n {
        for b in 0..n {
            let diff = a.abs_diff(b);
            labels[a * n + b] = diff.min(n - diff) as u16;
        }
    }
    RelationPartition::new(n, labels)
}

// ---------------------------------------------------------------------------
// Built-in point sets
// ---------------------------------------------------------------------------

/// Sorts points lexicographically by coordinates (deterministic builds).
fn sort_points(points: &mut [Vec<f64>]) {
    points.sort_by(|p, r| {
        for (a, b) in p.iter().zip(r) {
            match a.partial_cmp(b).expect("finite coordinates") {
                core::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        core::cmp::Ordering::Equal
    });
}

fn pentagon_s1() -> Result<PointSet> {
    let pts = (0..5)
        .map(|k| {
            let a = core::f64::consts::TAU * k as f64 / 5.0;
            alloc::vec![libm::cos(a), libm::sin(a)]
        })
        .collect();
    PointSet::new(2, pts, "pentagon_s1")
}

fn icosahedron() -> Result<PointSet> {
    let phi = (1.0 + sqrt(5.0)) / 2.0;
    let norm = sqrt(1.0 + phi * phi);
    let mut pts = Vec::with_capacity(12);
    // Cyclic coordinate placements of (0, ±1, ±phi), normalized.
    for axis in 0..3usize {
        for s1 in [1.0f64, -1.0] {
            for s2 in [1.0f64, -1.0] {
                let mut p = alloc::vec![0.0f64; 3];
                p[(axis + 1) % 3] = s1 / norm;
                p[(axis + 2) % 3] = s2 * phi / norm;
                pts.push(p);
            }
        }
    }
    sort_points(&mut pts);
    PointSet::new(3, pts, "icosahedron")
}

/// The 240 unit-normalized vectors: 112 with two entries `±1/sqrt(2)`, and
/// 128 with all entries `±1/(2 sqrt(2))` and an even number of minus signs;
/// lexicographic order.
fn e8_roots() -> Result<PointSet> {
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(240);
    let r = 1.0 / sqrt(2.0);
    for i in 0..8usize {
        for j in i + 1..8 {
            for si in [1.0f64, -1.0] {
                for sj in [1.0f64, -1.0] {
                    let mut p = alloc::vec![0.0f64; 8];
                    p[i] = si * r;
                    p[j] = sj * r;
                    pts.push(p);
                }
            }
        }
    }
    let h = r / 2.0;
    for mask in 0..256usize {
        if mask.count_ones() % 2 != 0 {
            continue;
        }
        pts.push(
            (0..8)
                .map(|b| if (mask >> b) & 1 == 1 { -h } else { h })
                .collect(),
        );
    }
    sort_points(&mut pts);
    PointSet::new(8, pts, "e8_roots")
}

/// Derived twice from [`e8_roots`]: first the slice at inner product `1/2`
/// with the first root (56 points), then that set's slice at `1/3` with its
/// own first point (27 points, angles `{1/4, -1/2}`).
fn schlafli_27() -> Result<PointSet> {
    let roots = e8_roots()?;
    let first = derived_designs(&roots, 0)?;
    let gosset = &first
        .first()
        .ok_or_else(|| CcqError::Synthesis("no slice at the top angle of e8_roots".into()))?
        .points;
    let second = derived_designs(gosset, 0)?;
    let slice = &second
        .first()
        .ok_or_else(|| CcqError::Synthesis("no slice at the top angle of the 56-point set".into()))?
        .points;
    PointSet::new(slice.dim(), slice.points().to_vec(), "schlafli_27")
}

/// The three pairwise-unbiased orthonormal bases of `R^4` behind
/// [`builtin_pointset`]`("mub_r4")`: the standard basis and two bases with
/// entries `±1/2`.
pub fn mub_r4_bases() -> Vec<Vec<Vec<f64>>> {
    let h = 0.5f64;
    let b0: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let b1 = alloc::vec![
        alloc::vec![h, h, h, h],
        alloc::vec![h, h, -h, -h],
        alloc::vec![h, -h, h, -h],
        alloc::vec![h, -h, -h, h],
    ];
    let b2 = alloc::vec![
        alloc::vec![h, h, h, -h],
        alloc::vec![h, h, -h, h],
        alloc::vec![h, -h, h, h],
        alloc::vec![-h, h, h, h],
    ];
    alloc::vec![b0, b1, b2]
}

/// All 24 signed basis vectors of [`mub_r4_bases`]: the positive vectors of
/// the three bases in order, then their negatives in the same order.
fn mub_r4() -> Result<PointSet> {
    let bases = mub_r4_bases();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(24);
    for basis in &bases {
        for v in basis {
            pts.push(v.clone());
        }
    }
    for basis in &bases {
        for v in basis {
            pts.push(v.iter().map(|&x| -x).collect());
        }
    }
    PointSet::new(4, pts, "mub_r4")
}

/// Checks that the off-diagonal angle set matches `expect` (within 1e-9)
/// and the strength is exactly `t`.
fn certify(ps: &PointSet, expect_angles: &[f64], expect_t: usize) -> Result<()> {
    let mut vals = Vec::new();
    for a in 0..ps.len() {
        for b in 0..ps.len() {
            if a != b {
                vals.push(ps.inner(a, b));
            }
        }
    }
    let centers = cluster_angles(&vals)?;
    if centers.len() != expect_angles.len()
        || centers
            .iter()
            .zip(expect_angles)
            .any(|(&c, &e)| fabs(c - e) > 1e-9)
    {
        return Err(CcqError::Synthesis(format!(
            "point set {:?} has angle set {centers:?}, expected {expect_angles:?}",
            ps.tag()
        )));
    }
    let t = spherical_strength(ps, Tolerance::default())?;
    if t != expect_t {
        return Err(CcqError::Synthesis(format!(
            "point set {:?} has strength {t}, expected {expect_t}",
            ps.tag()
        )));
    }
    Ok(())
}

/// Builds a named point set and certifies its advertised invariants
/// (count, angle set, strength; exact unbiasedness for `mub_r4`).
///
/// Known names: `icosahedron`, `e8_roots`, `schlafli_27`, `mub_r4`,
/// `pentagon_s1`.
pub fn builtin_pointset(name: &str) -> Result<PointSet> {
    let inv5 = 1.0 / sqrt(5.0);
    match name {
        "pentagon_s1" => {
            let ps = pentagon_s1()?;
            let c1 = libm::cos(core::f64::consts::TAU / 5.0);
            let c2 = libm::cos(2.0 * core::f64::consts::TAU / 5.0);
            certify(&ps, &[c1, c2], 4)?;
            Ok(ps)
        }
        "icosahedron" => {
            let ps = icosahedron()?;
            certify(&ps, &[inv5, -inv5, -1.0], 5)?;
            Ok(ps)
        }
        "e8_roots" => {
            let ps = e8_roots()?;
            certify(&ps, &[0.5, 0.0, -0.5, -1.0], 7)?;
            Ok(ps)
        }
        "schlafli_27" => {
            let ps = schlafli_27()?;
            certify(&ps, &[0.25, -0.5], 4)?;
            Ok(ps)
        }
        "mub_r4" => {
            let ps = mub_r4()?;
            // Unbiasedness is exact: every inner product is one of
            // 0, ±1/2, ±1 to the bit.
            for a in 0..ps.len() {
                for b in 0..ps.len() {
                    let ip = ps.inner(a, b);
                    if ip != 0.0 && fabs(ip) != 0.5 && fabs(ip) != 1.0 {
                        return Err(CcqError::Synthesis(format!(
                            "mub_r4: inner product {ip} of points {a},{b} is not \
                             in {{0, ±1/2, ±1}}"
                        )));
                    }
                }
            }
            Ok(ps)
        }
        other => Err(CcqError::pre(format!("unknown point set {other:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Name lookup
// ---------------------------------------------------------------------------

/// A catalog object: a relation partition, a point set, or a code.
#[derive(Clone, Debug)]
pub enum CatalogObject {
    Partition(RelationPartition),
    Points(PointSet),
    Code(Code),
}

/// One row of the catalog listing.
#[derive(Clone, Copy, Debug)]
pub struct CatalogEntry {
    /// Name or name pattern accepted by [`lookup`].
    pub name: &'static str,
    pub kind: &'static str,
    pub note: &'static str,
}

/// Everything [`lookup`] accepts.
pub fn entries() -> Vec<CatalogEntry> {
    alloc::vec![
        CatalogEntry {
            name: "hamming:<n>,<q>",
            kind: "partition",
            note: "Hamming scheme on q^n words (q^n <= 4096)",
        },
        CatalogEntry {
            name: "johnson:<v>,<k>",
            kind: "partition",
            note: "Johnson scheme on the k-subsets of a v-set (C(v,k) <= 4096)",
        },
        CatalogEntry {
            name: "rectangular:<m>,<n>",
            kind: "partition",
            note: "grid scheme on m*n points; no ordering passes the tridiagonal test",
        },
        CatalogEntry {
            name: "cycle:<n>",
            kind: "partition",
            note: "distance partition of the n-cycle",
        },
        CatalogEntry {
            name: "pentagon_s1",
            kind: "point_set",
            note: "regular pentagon on the circle; strength 4",
        },
        CatalogEntry {
            name: "icosahedron",
            kind: "point_set",
            note: "12 vertices in S^2; strength 5; angles {±1/sqrt(5), -1}",
        },
        CatalogEntry {
            name: "e8_roots",
            kind: "point_set",
            note: "240 unit roots in S^7; strength 7; angles {±1/2, 0, -1}",
        },
        CatalogEntry {
            name: "schlafli_27",
            kind: "point_set",
            note: "27 points in S^5; strength 4; angles {1/4, -1/2}",
        },
        CatalogEntry {
            name: "mub_r4",
            kind: "point_set",
            note: "24 signed vectors of three pairwise-unbiased bases of R^4",
        },
        CatalogEntry {
            name: "even:<n>",
            kind: "code",
            note: "even-weight words of {0,1}^n",
        },
        CatalogEntry {
            name: "odd:<n>",
            kind: "code",
            note: "odd-weight words of {0,1}^n",
        },
        CatalogEntry {
            name: "fano_plane",
            kind: "code",
            note: "the 7 lines {i, i+1, i+3} mod 7 as weight-3 words",
        },
        CatalogEntry {
            name: "fano_complement",
            kind: "code",
            note: "complements of fano_plane (weight-4 words)",
        },
        CatalogEntry {
            name: "singleton:<n>",
            kind: "code",
            note: "the single word 0^n",
        },
    ]
}

fn parse_args<const K: usize>(name: &str, args: Option<&str>) -> Result<[usize; K]> {
    let args = args.ok_or_else(|| {
        CcqError::pre(format!("{name} needs {K} parameter(s), e.g. \"{name}:...\""))
    })?;
    let parts: Vec<&str> = args.split(',').collect();
    if parts.len() != K {
        return Err(CcqError::pre(format!(
            "{name} takes {K} parameter(s), got {}",
            parts.len()
        )));
    }
    let mut out = [0usize; K];
    for (slot, raw) in out.iter_mut().zip(&parts) {
        *slot = raw.trim().parse().map_err(|_| {
            CcqError::pre(format!("{name}: {raw:?} is not a nonnegative integer"))
        })?;
    }
    Ok(out)
}

/// Resolves a catalog name of the form `"name"` or `"name:p1,p2"`.
pub fn lookup(spec: &str) -> Result<CatalogObject> {
    let (name, args) = match spec.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (spec.trim(), None),
    };
    match name {
        "hamming" => {
            let [n, q] = parse_args::<2>(name, args)?;
            Ok(CatalogObject::Partition(hamming_partition(n, q)?))
        }
        "johnson" => {
            let [v, k] = parse_args::<2>(name, args)?;
            Ok(CatalogObject::Partition(johnson_partition(v, k)?))
        }
        "rectangular" => {
            let [m, n] = parse_args::<2>(name, args)?;
            Ok(CatalogObject::Partition(rectangular_partition(m, n)?))
        }
        "cycle" => {
            let [n] = parse_args::<1>(name, args)?;
            Ok(CatalogObject::Partition(cycle_partition(n)?))
        }
        "even" => {
            let [n] = parse_args::<1>(name, args)?;
            Ok(CatalogObject::Code(even_code(n)?))
        }
        "odd" => {
            let [n] = parse_args::<1>(name, args)?;
            Ok(CatalogObject::Code(odd_code(n)?))
        }
        "singleton" => {
            let [n] = parse_args::<1>(name, args)?;
            Ok(CatalogObject::Code(singleton_code(n)?))
        }
        "fano_plane" => Ok(CatalogObject::Code(fano_plane())),
        "fano_complement" => Ok(CatalogObject::Code(fano_complement())),
        "pentagon_s1" | "icosahedron" | "e8_roots" | "schlafli_27" | "mub_r4" => {
            Ok(CatalogObject::Points(builtin_pointset(name)?))
        }
        other => Err(CcqError::pre(format!(
            "unknown catalog name {other:?}; see the catalog listing"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Text formats
// ---------------------------------------------------------------------------

/// Strips comments and blanks; yields `(1-based line number, content)`.
fn data_lines(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn line_err(line: usize, msg: impl core::fmt::Display) -> CcqError {
    CcqError::pre(format!("line {line}: {msg}"))
}

/// Parses the point-set format: a `dim D` header, then one point per line
/// as `D` whitespace-separated reals. `#` lines and blank lines are
/// ignored.
pub fn parse_pointset_str(src: &str, tag: &str) -> Result<PointSet> {
    let mut lines = data_lines(src);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| CcqError::pre("point-set input is empty"))?;
    let dim: usize = header
        .strip_prefix("dim")
        .map(str::trim)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| line_err(hline, format!("expected \"dim D\", got {header:?}")))?;
    let mut points = Vec::new();
    for (ln, l) in lines {
        let mut p = Vec::with_capacity(dim);
        for tok in l.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| line_err(ln, format!("{tok:?} is not a real number")))?;
            p.push(v);
        }
        if p.len() != dim {
            return Err(line_err(
                ln,
                format!("point has {} coordinates, expected {dim}", p.len()),
            ));
        }
        points.push(p);
    }
    PointSet::new(dim, points, tag)
}

/// Emits the point-set format; coordinates use the shortest representation
/// that parses back to the same bits.
pub fn emit_pointset_str(ps: &PointSet) -> String {
    let mut out = format!("dim {}\n", ps.dim());
    for p in ps.points() {
        let coords: Vec<String> = p.iter().map(|v| format_real(*v)).collect();
        out.push_str(&coords.join(" "));
        out.push('\n');
    }
    out
}

/// Parses the code format: an `alphabet Q length N` header, then one word
/// per line as `N` digits without separators (so `Q <= 10`).
pub fn parse_code_str(src: &str) -> Result<Code> {
    let mut lines = data_lines(src);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| CcqError::pre("code input is empty"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let (q, n) = match toks.as_slice() {
        ["alphabet", q, "length", n] => (
            q.parse::<usize>()
                .map_err(|_| line_err(hline, format!("{q:?} is not an alphabet size")))?,
            n.parse::<usize>()
                .map_err(|_| line_err(hline, format!("{n:?} is not a length")))?,
        ),
        _ => {
            return Err(line_err(
                hline,
                format!("expected \"alphabet Q length N\", got {header:?}"),
            ))
        }
    };
    if q > 10 {
        return Err(line_err(
            hline,
            format!("the digit format supports alphabets up to 10, got {q}"),
        ));
    }
    let mut words = Vec::new();
    for (ln, l) in lines {
        let mut w = Vec::with_capacity(n);
        for ch in l.chars() {
            let d = ch
                .to_digit(10)
                .ok_or_else(|| line_err(ln, format!("{ch:?} is not a digit")))?;
            if d as usize >= q {
                return Err(line_err(
                    ln,
                    format!("symbol {d} outside alphabet 0..{}", q - 1),
                ));
            }
            w.push(d as u8);
        }
        if w.len() != n {
            return Err(line_err(
                ln,
                format!("word has {} symbols, expected {n}", w.len()),
            ));
        }
        words.push(w);
    }
    Code::new(q, n, words)
}

/// Emits the code format.
pub fn emit_code_str(code: &Code) -> String {
    let mut out = format!("alphabet {} length {}\n", code.q(), code.n());
    for w in code.words() {
        for &d in w {
            out.push(char::from(b'0' + d));
        }
        out.push('\n');
    }
    out
}

/// Parses the partition format: a `points N relations R` header, then `N`
/// lines of `N` space-separated labels in `0..R-1`.
pub fn parse_partition_str(src: &str) -> Result<RelationPartition> {
    let mut lines = data_lines(src);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| CcqError::pre("partition input is empty"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let (n, r) = match toks.as_slice() {
        ["points", n, "relations", r] => (
            n.parse::<usize>()
                .map_err(|_| line_err(hline, format!("{n:?} is not a point count")))?,
            r.parse::<usize>()
                .map_err(|_| line_err(hline, format!("{r:?} is not a relation count")))?,
        ),
        _ => {
            return Err(line_err(
                hline,
                format!("expected \"points N relations R\", got {header:?}"),
            ))
        }
    };
    if n == 0 || n > MAX_POINTS {
        return Err(line_err(
            hline,
            format!("point count must be in 1..={MAX_POINTS}, got {n}"),
        ));
    }
    let mut labels = Vec::with_capacity(n * n);
    let mut rows = 0usize;
    for (ln, l) in lines {
        let mut row = 0usize;
        for tok in l.split_whitespace() {
            let v: usize = tok
                .parse()
                .map_err(|_| line_err(ln, format!("{tok:?} is not a label")))?;
            if v >= r {
                return Err(line_err(ln, format!("label {v} outside 0..{}", r - 1)));
            }
            labels.push(v as u16);
            row += 1;
        }
        if row != n {
            return Err(line_err(ln, format!("row has {row} labels, expected {n}")));
        }
        rows += 1;
    }
    if rows != n {
        return Err(CcqError::pre(format!(
            "partition has {rows} rows, expected {n}"
        )));
    }
    RelationPartition::new(n, labels)
}

/// Emits the partition format.
pub fn emit_partition_str(part: &RelationPartition) -> String {
    let n = part.n();
    let r = part.num_relations();
    let mut out = format!("points {n} relations {r}\n");
    for x in 0..n {
        let row: Vec<String> = (0..n).map(|y| part.label(x, y).to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Emits a catalog object in its format.
pub fn emit_object(obj: &CatalogObject) -> String {
    match obj {
        CatalogObject::Partition(p) => emit_partition_str(p),
        CatalogObject::Points(p) => emit_pointset_str(p),
        CatalogObject::Code(c) => emit_code_str(c),
    }
}

/// Shortest decimal form of `v` that parses back to exactly the same
/// `f64`; integral values keep a trailing `.0` so they read as reals.
fn format_real(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{q_polynomial_orderings, spectrum, subset_profile};

    #[test]
    fn hamming_basics() {
        let s = hamming(3, 2).unwrap();
        assert_eq!(s.n(), 8);
        assert_eq!(s.d(), 3);
        assert_eq!(s.valencies(), &[1, 3, 3, 1]);
        let tiny = hamming(1, 2).unwrap();
        assert_eq!((tiny.n(), tiny.d()), (2, 1));
        assert!(hamming(13, 2).is_err());
        assert!(hamming(0, 2).is_err());
    }

    #[test]
    fn johnson_basics() {
        let s = johnson(5, 2).unwrap();
        assert_eq!(s.n(), 10);
        assert_eq!(s.d(), 2);
        assert_eq!(s.valencies(), &[1, 6, 3]);
        assert!(johnson(50, 25).is_err());
        assert!(johnson(4, 0).is_err());
        assert!(johnson(4, 4).is_err());
    }

    #[test]
    fn rectangular_grid_has_no_admissible_ordering() {
        let part = rectangular_partition(3, 3).unwrap();
        let s = validate_scheme(&part).unwrap();
        assert_eq!(s.valencies(), &[1, 2, 2, 4]);
        let spec = spectrum(&s, Tolerance::default()).unwrap();
        let orderings = q_polynomial_orderings(&spec, Tolerance::default()).unwrap();
        assert!(orderings.is_empty());
    }

    #[test]
    fn cycle_partition_matches_pentagon() {
        let s = validate_scheme(&cycle_partition(5).unwrap()).unwrap();
        assert_eq!(s.valencies(), &[1, 2, 2]);
    }

    #[test]
    fn builtin_point_sets_certify() {
        assert_eq!(builtin_pointset("pentagon_s1").unwrap().len(), 5);
        assert_eq!(builtin_pointset("icosahedron").unwrap().len(), 12);
        assert_eq!(builtin_pointset("schlafli_27").unwrap().len(), 27);
        assert_eq!(builtin_pointset("mub_r4").unwrap().len(), 24);
        assert!(builtin_pointset("dodecahedron").is_err());
    }

    #[test]
    fn e8_roots_certify() {
        let ps = builtin_pointset("e8_roots").unwrap();
        assert_eq!(ps.len(), 240);
        assert!(ps.is_antipodal());
    }

    #[test]
    fn even_code_profile_in_h42() {
        // Strength 3, degree 2, occurring distances {2, 4}.
        let scheme = hamming(4, 2).unwrap();
        let spec = spectrum(&scheme, Tolerance::default()).unwrap();
        let code = even_code(4).unwrap();
        let profile =
            subset_profile(&scheme, &spec, &code.point_indices(), Tolerance::default()).unwrap();
        assert_eq!(profile.size, 8);
        assert_eq!(profile.strength, 3);
        assert_eq!(profile.degree, 2);
        assert_eq!(profile.angle_set, alloc::vec![2, 4]);
    }

    #[test]
    fn fano_lines_intersect_pairwise_once() {
        let f = fano_plane();
        assert_eq!(f.len(), 7);
        for (a, wa) in f.words().iter().enumerate() {
            assert_eq!(wa.iter().filter(|&&b| b == 1).count(), 3);
            for wb in f.words().iter().skip(a + 1) {
                let common = wa
                    .iter()
                    .zip(wb)
                    .filter(|(&x, &y)| x == 1 && y == 1)
                    .count();
                assert_eq!(common, 1);
            }
        }
        assert_eq!(fano_complement().len(), 7);
    }

    #[test]
    fn lookup_parses_names_and_rejects_garbage() {
        assert!(matches!(
            lookup("hamming:3,2").unwrap(),
            CatalogObject::Partition(_)
        ));
        assert!(matches!(
            lookup("pentagon_s1").unwrap(),
            CatalogObject::Points(_)
        ));
        assert!(matches!(lookup("even:4").unwrap(), CatalogObject::Code(_)));
        assert!(lookup("hamming").is_err());
        assert!(lookup("hamming:3").is_err());
        assert!(lookup("hamming:3,x").is_err());
        assert!(lookup("nonsense").is_err());
        assert_eq!(entries().len(), 14);
    }

    #[test]
    fn pointset_round_trip_is_bit_exact() {
        let ps = builtin_pointset("icosahedron").unwrap();
        let text = emit_pointset_str(&ps);
        let back = parse_pointset_str(&text, "icosahedron").unwrap();
        assert_eq!(ps.dim(), back.dim());
        assert_eq!(ps.len(), back.len());
        for (p, q) in ps.points().iter().zip(back.points()) {
            for (a, b) in p.iter().zip(q) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn code_round_trip() {
        let c = fano_plane();
        let text = emit_code_str(&c);
        let back = parse_code_str(&text).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn partition_round_trip() {
        let part = cycle_partition(5).unwrap();
        let text = emit_partition_str(&part);
        let back = parse_partition_str(&text).unwrap();
        assert_eq!(part.labels(), back.labels());
        assert!(validate_scheme(&back).is_ok());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad_header = parse_pointset_str("dom 3\n1 0 0\n", "x").unwrap_err();
        assert!(format!("{bad_header}").contains("line 1"));
        let bad_point = parse_pointset_str("# comment\ndim 2\n1 0\n0 oops\n", "x").unwrap_err();
        assert!(format!("{bad_point}").contains("line 4"));
        let bad_code = parse_code_str("alphabet 2 length 3\n012\n").unwrap_err();
        assert!(format!("{bad_code}").contains("line 2"));
        let bad_part = parse_partition_str("points 2 relations 2\n0 1\n1 5\n").unwrap_err();
        assert!(format!("{bad_part}").contains("line 3"));
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let text = "# a pentagon file\n\ndim 2\n# the first point\n1.0 0.0\n0.0 1.0\n";
        let ps = parse_pointset_str(text, "quarter").unwrap();
        assert_eq!(ps.len(), 2);
    }
}
