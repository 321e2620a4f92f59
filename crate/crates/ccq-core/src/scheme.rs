//! Symmetric association schemes.
//!
//! A scheme on `n` points with `d` classes is given as a [`RelationPartition`]
//! (an `n x n` matrix of relation labels `0..=d`). [`validate_scheme`] checks
//! the defining axioms exactly over the integers and produces a [`Scheme`]
//! carrying the intersection numbers; [`spectrum`] computes the primitive
//! idempotents, eigenmatrices, and Krein parameters; the remaining functions
//! analyze orderings and subsets.
//!
//! # Axioms checked by [`validate_scheme`]
//!
//! 1. relation 0 is the diagonal;
//! 2. the labels partition `X x X` into nonempty classes `0..=d`;
//! 3. every relation is symmetric;
//! 4. for all `i, j, h` the count `|{z : (x,z) in R_i, (z,y) in R_j}|` is the
//!    same for every `(x,y) in R_h` (the intersection number `p_{ij}^h`);
//! 5. `p_{ij}^h = p_{ji}^h` (automatic from 3 + 4; verified anyway).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{AxiomViolation, CcqError, Result};
use crate::matlin::{
    common_eigenprojectors, fabs, max_abs_residual, IntMatrix, RealMatrix, Tolerance,
};

/// Hard cap on the number of points accepted anywhere in the crate.
pub const MAX_POINTS: usize = 4096;

/// Hard cap on the number of scheme classes.
pub const MAX_CLASSES: usize = 64;

/// Largest class count for which exhaustive ordering search is permitted.
pub const MAX_ORDERING_CLASSES: usize = 12;

// ---------------------------------------------------------------------------
// RelationPartition
// ---------------------------------------------------------------------------

/// An `n x n` matrix of relation labels: the raw input form for both
/// association schemes and coherent configurations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationPartition {
    n: usize,
    labels: Vec<u16>,
}

impl RelationPartition {
    /// Wraps a row-major label matrix.
    ///
    /// # Errors
    ///
    /// `n` outside `1..=MAX_POINTS`, wrong data length, or labels that are
    /// not exactly `0..r` for some `r` (every label below the maximum must
    /// occur).
    pub fn new(n: usize, labels: Vec<u16>) -> Result<Self> {
        if n == 0 || n > MAX_POINTS {
            return Err(CcqError::pre(format!(
                "partition must have 1..={MAX_POINTS} points, got {n}"
            )));
        }
        if labels.len() != n * n {
            return Err(CcqError::pre(format!(
                "partition with {n} points needs {} labels, got {}",
                n * n,
                labels.len()
            )));
        }
        let max = *labels.iter().max().expect("nonempty") as usize;
        let mut seen = vec![false; max + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(CcqError::pre(format!(
                "relation labels must be contiguous starting at 0: label {missing} is absent \
                 but {max} occurs"
            )));
        }
        Ok(RelationPartition { n, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of distinct relation labels (max label + 1).
    pub fn num_relations(&self) -> usize {
        *self.labels.iter().max().expect("nonempty") as usize + 1
    }

    #[inline]
    pub fn label(&self, i: usize, j: usize) -> usize {
        self.labels[i * self.n + j] as usize
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }
}

// ---------------------------------------------------------------------------
// Scheme + validation
// ---------------------------------------------------------------------------

/// A validated symmetric association scheme with its intersection numbers.
#[derive(Clone, Debug)]
pub struct Scheme {
    part: RelationPartition,
    d: usize,
    valencies: Vec<i64>,
    /// `p[(i*(d+1) + j)*(d+1) + h] = p_{ij}^h`.
    p: Vec<i64>,
}

impl Scheme {
    pub fn n(&self) -> usize {
        self.part.n()
    }

    /// Number of classes (relations excluding the diagonal).
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn partition(&self) -> &RelationPartition {
        &self.part
    }

    pub fn label(&self, i: usize, j: usize) -> usize {
        self.part.label(i, j)
    }

    /// Valency `k_i = p_{ii}^0`.
    pub fn valency(&self, i: usize) -> i64 {
        self.valencies[i]
    }

    pub fn valencies(&self) -> &[i64] {
        &self.valencies
    }

    /// Intersection number `p_{ij}^h`.
    pub fn p(&self, i: usize, j: usize, h: usize) -> i64 {
        self.p[(i * (self.d + 1) + j) * (self.d + 1) + h]
    }

    /// Dense 0/1 adjacency matrix of relation `i`.
    pub fn adjacency(&self, i: usize) -> IntMatrix {
        let n = self.n();
        let mut m = IntMatrix::zeros(n, n);
        for x in 0..n {
            for y in 0..n {
                if self.part.label(x, y) == i {
                    m.set(x, y, 1);
                }
            }
        }
        m
    }
}

/// Validates the association-scheme axioms exactly; see the module docs for
/// the list. On success the returned [`Scheme`] carries all intersection
/// numbers.
///
/// # Errors
///
/// [`CcqError::Axiom`] with a witness (points/relations) for the first
/// violated axiom; [`CcqError::Precondition`] for size violations.
pub fn validate_scheme(part: &RelationPartition) -> Result<Scheme> {
    let n = part.n();
    let r = part.num_relations();
    if r > MAX_CLASSES + 1 {
        return Err(CcqError::pre(format!(
            "scheme has {} relations, limit is {} classes",
            r,
            MAX_CLASSES
        )));
    }
    let d = r - 1;

    // Axiom 1: relation 0 is exactly the diagonal.
    for i in 0..n {
        if part.label(i, i) != 0 {
            return Err(CcqError::Axiom(AxiomViolation {
                axiom: "scheme(1)",
                message: format!(
                    "relation 0 must contain every diagonal pair; point {i} has label {}",
                    part.label(i, i)
                ),
                points: vec![i, i],
                relations: vec![part.label(i, i)],
            }));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && part.label(i, j) == 0 {
                return Err(CcqError::Axiom(AxiomViolation {
                    axiom: "scheme(1)",
                    message: format!("off-diagonal pair ({i},{j}) carries the diagonal label 0"),
                    points: vec![i, j],
                    relations: vec![0],
                }));
            }
        }
    }

    // Axiom 3: symmetry of every relation.
    for i in 0..n {
        for j in i + 1..n {
            if part.label(i, j) != part.label(j, i) {
                return Err(CcqError::Axiom(AxiomViolation {
                    axiom: "scheme(3)",
                    message: format!(
                        "labels of ({i},{j}) and ({j},{i}) differ: {} vs {}",
                        part.label(i, j),
                        part.label(j, i)
                    ),
                    points: vec![i, j],
                    relations: vec![part.label(i, j), part.label(j, i)],
                }));
            }
        }
    }

    // Axioms 4 and 5: intersection numbers are well defined. For each pair
    // (x,y) the histogram over z of (label(x,z), label(z,y)) must agree with
    // the histogram of the representative pair of the relation of (x,y).
    let mut reps: Vec<Option<(usize, usize)>> = vec![None; r];
    let mut rep_hist: Vec<Vec<i64>> = vec![Vec::new(); r];
    let mut hist = vec![0i64; r * r];
    for x in 0..n {
        for y in 0..n {
            let h = part.label(x, y);
            hist.iter_mut().for_each(|c| *c = 0);
            for z in 0..n {
                hist[part.label(x, z) * r + part.label(z, y)] += 1;
            }
            match &reps[h] {
                None => {
                    reps[h] = Some((x, y));
                    rep_hist[h] = hist.clone();
                }
                Some((x0, y0)) => {
                    let (x0, y0) = (*x0, *y0);
                    if hist != rep_hist[h] {
                        let pos = hist
                            .iter()
                            .zip(rep_hist[h].iter())
                            .position(|(a, b)| a != b)
                            .expect("histograms differ");
                        let (i, j) = (pos / r, pos % r);
                        return Err(CcqError::Axiom(AxiomViolation {
                            axiom: "scheme(4)",
                            message: format!(
                                "count of z with (x,z) in R_{i}, (z,y) in R_{j} differs on \
                                 relation {h}: {} at ({x},{y}) vs {} at ({x0},{y0})",
                                hist[pos], rep_hist[h][pos]
                            ),
                            points: vec![x, y, x0, y0],
                            relations: vec![i, j, h],
                        }));
                    }
                }
            }
        }
    }

    // Every label occurs (RelationPartition guarantees it), so every rep is set.
    let mut p = vec![0i64; r * r * r];
    for h in 0..r {
        for i in 0..r {
            for j in 0..r {
                p[(i * r + j) * r + h] = rep_hist[h][i * r + j];
            }
        }
    }
    // p_{ij}^h = p_{ji}^h (axiom 5; implied, asserted as a sanity check).
    for i in 0..r {
        for j in 0..r {
            for h in 0..r {
                debug_assert_eq!(p[(i * r + j) * r + h], p[(j * r + i) * r + h]);
            }
        }
    }
    let valencies: Vec<i64> = (0..r).map(|i| p[(i * r + i) * r]).collect();
    Ok(Scheme {
        part: part.clone(),
        d,
        valencies,
        p,
    })
}

// ---------------------------------------------------------------------------
// Spectrum
// ---------------------------------------------------------------------------

/// Spectral data of a scheme: primitive idempotents in canonical order
/// (all-ones idempotent first, then lexicographically descending eigenvalue
/// tuples), eigenmatrices, multiplicities, and Krein parameters.
#[derive(Clone, Debug)]
pub struct SchemeSpectrum {
    pub n: usize,
    pub d: usize,
    /// `E_0..E_d`.
    pub idempotents: Vec<RealMatrix>,
    /// `m_h = rank E_h` (exact).
    pub multiplicities: Vec<usize>,
    /// First eigenmatrix: `P[l][h] = p_h(l)`, the eigenvalue of `A_h` on
    /// `E_l`; row 0 lists the valencies.
    pub p_matrix: RealMatrix,
    /// Second eigenmatrix: `Q[l][h] = q_h(l)` with
    /// `|X| E_h = sum_l q_h(l) A_l`; row 0 lists the multiplicities.
    pub q_matrix: RealMatrix,
    /// `krein[i]` is the Krein matrix `B*_i` with `B*_i[j][h] = q_{ij}^h`.
    pub krein: Vec<RealMatrix>,
    /// Smallest Krein parameter encountered (negativity is reported, never
    /// an error).
    pub min_krein: f64,
    pub valencies: Vec<i64>,
}

impl SchemeSpectrum {
    /// Krein parameter `q_{ij}^h`.
    pub fn q(&self, i: usize, j: usize, h: usize) -> f64 {
        self.krein[i].get(j, h)
    }
}

/// Computes the spectral data of a validated scheme.
///
/// # Errors
///
/// Propagates eigensolver failures; rejects idempotent multiplicities that
/// are not within `1e-6` of an integer; rejects Krein expansions whose
/// residual against the idempotent basis exceeds `tol`.
pub fn spectrum(s: &Scheme, tol: Tolerance) -> Result<SchemeSpectrum> {
    let n = s.n();
    let d = s.d();
    let nf = n as f64;

    let idempotents: Vec<RealMatrix> = if d == 0 {
        vec![RealMatrix::constant(1, 1, 1.0)]
    } else {
        let mats: Vec<IntMatrix> = (1..=d).map(|i| s.adjacency(i)).collect();
        let projs = common_eigenprojectors(&mats, tol)?;
        if projs.len() != d + 1 {
            return Err(CcqError::pre(format!(
                "scheme has {} common eigenspaces but d+1 = {}; not an association scheme \
                 spectrum",
                projs.len(),
                d + 1
            )));
        }
        projs.into_iter().map(|p| p.projector).collect()
    };

    // Multiplicities: ranks are exact integers (traces of projectors).
    let mut multiplicities = Vec::with_capacity(d + 1);
    for (h, e) in idempotents.iter().enumerate() {
        let t = e.trace();
        let r = libm::round(t);
        if fabs(t - r) > 1e-6 {
            return Err(CcqError::tol(
                format!("multiplicity of idempotent {h} (trace not near an integer)"),
                fabs(t - r),
                1e-6,
            ));
        }
        multiplicities.push(r as usize);
    }

    // P[l][h] = tr(A_h E_l) / m_l.
    let mut p_matrix = RealMatrix::zeros(d + 1, d + 1);
    for l in 0..=d {
        p_matrix.set(l, 0, 1.0);
    }
    for h in 1..=d {
        let a = s.adjacency(h).to_real();
        for l in 0..=d {
            let val = a.frob_inner(&idempotents[l]) / multiplicities[l] as f64;
            p_matrix.set(l, h, val);
        }
    }

    // Q[l][h] = n * (entry of E_h on relation l); entries must be constant
    // on each relation.
    let mut q_matrix = RealMatrix::zeros(d + 1, d + 1);
    for h in 0..=d {
        let e = &idempotents[h];
        let mut sums = vec![0.0f64; d + 1];
        let mut counts = vec![0u64; d + 1];
        for x in 0..n {
            for y in 0..n {
                let l = s.label(x, y);
                sums[l] += e.get(x, y);
                counts[l] += 1;
            }
        }
        for l in 0..=d {
            let mean = sums[l] / counts[l] as f64;
            q_matrix.set(l, h, nf * mean);
        }
        // Constancy check.
        let mut dev = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                let l = s.label(x, y);
                let w = fabs(nf * e.get(x, y) - q_matrix.get(l, h));
                if w > dev {
                    dev = w;
                }
            }
        }
        let scale = q_matrix.get(0, h);
        if !tol.passes(dev, scale) {
            return Err(CcqError::tol(
                format!("idempotent {h} is not constant on the relations"),
                dev,
                tol.bound(scale),
            ));
        }
    }

    // PQ = QP = nI.
    let pq = p_matrix.mul(&q_matrix);
    let qp = q_matrix.mul(&p_matrix);
    let target = RealMatrix::identity(d + 1).scale(nf);
    for (name, m) in [("PQ", &pq), ("QP", &qp)] {
        let res = max_abs_residual(m, &target)?;
        if !tol.passes(res, nf) {
            return Err(CcqError::tol(
                format!("{name} = |X| I eigenmatrix inversion"),
                res,
                tol.bound(nf),
            ));
        }
    }

    // Krein parameters by least squares on the trace-orthogonal idempotent
    // basis: q_{ij}^h = n * tr((E_i o E_j) E_h) / m_h, with an expansion
    // residual check.
    let mut krein = Vec::with_capacity(d + 1);
    let mut min_krein = f64::INFINITY;
    for i in 0..=d {
        let mut bi = RealMatrix::zeros(d + 1, d + 1);
        for j in 0..=d {
            let had = idempotents[i].hadamard(&idempotents[j]);
            let mut rebuilt = RealMatrix::zeros(n, n);
            for h in 0..=d {
                let q = nf * had.frob_inner(&idempotents[h]) / multiplicities[h] as f64;
                bi.set(j, h, q);
                if q < min_krein {
                    min_krein = q;
                }
                rebuilt = rebuilt.add(&idempotents[h].scale(q / nf));
            }
            let res = max_abs_residual(&rebuilt, &had)?;
            if !tol.passes(res, had.max_abs()) {
                return Err(CcqError::tol(
                    format!("Krein expansion of E_{i} o E_{j}"),
                    res,
                    tol.bound(had.max_abs()),
                ));
            }
        }
        krein.push(bi);
    }

    Ok(SchemeSpectrum {
        n,
        d,
        idempotents,
        multiplicities,
        p_matrix,
        q_matrix,
        krein,
        min_krein,
        valencies: s.valencies().to_vec(),
    })
}

/// Recomputes the primitive idempotents by Lagrange interpolation on a
/// generic element of the algebra — an independent (slower) route used to
/// cross-check [`spectrum`].
///
/// A generic combination `M = sum_i w_i A_i` with deterministic weights is
/// eigendecomposed; each idempotent is `prod_{mu != lambda} (M - mu I)/(lambda - mu)`.
/// Returned in the same canonical order as [`spectrum`].
pub fn eigenprojectors_by_interpolation(s: &Scheme, tol: Tolerance) -> Result<Vec<RealMatrix>> {
    let n = s.n();
    let d = s.d();
    if d == 0 {
        return Ok(vec![RealMatrix::constant(1, 1, 1.0)]);
    }
    // Deterministic weight ladder; retried with steeper ladders if two
    // idempotents collide on the combined eigenvalue.
    'attempt: for attempt in 1..=4u32 {
        let mut m = RealMatrix::zeros(n, n);
        let mut weight = 1.0f64;
        for i in 1..=d {
            m = m.add(&s.adjacency(i).to_real().scale(weight));
            weight /= (2.0 + attempt as f64) + 0.5;
        }
        let eig = crate::matlin::sym_eig(&m, tol)?;
        // Cluster eigenvalues.
        let spread = eig.values[0] - eig.values[n - 1];
        let gap = crate::matlin::CLUSTER_EPS * (1.0 + fabs(spread));
        let mut reps: Vec<f64> = Vec::new();
        let mut start = 0usize;
        for idx in 1..=n {
            if idx == n || eig.values[idx - 1] - eig.values[idx] > gap {
                let mean: f64 =
                    eig.values[start..idx].iter().sum::<f64>() / (idx - start) as f64;
                reps.push(mean);
                start = idx;
            }
        }
        if reps.len() != d + 1 {
            continue 'attempt;
        }
        let mut projs = Vec::with_capacity(d + 1);
        for (k, &lam) in reps.iter().enumerate() {
            let mut e = RealMatrix::identity(n);
            for (k2, &mu) in reps.iter().enumerate() {
                if k2 == k {
                    continue;
                }
                let shifted = m.sub(&RealMatrix::identity(n).scale(mu));
                e = e.mul(&shifted).scale(1.0 / (lam - mu));
            }
            projs.push(e);
        }
        // Canonical order: lexicographically descending eigenvalue tuples
        // against A_1..A_d.
        let mut tuples: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
        for e in &projs {
            let rank = e.trace();
            let tuple: Vec<f64> = (1..=d)
                .map(|i| s.adjacency(i).to_real().frob_inner(e) / rank)
                .collect();
            tuples.push(tuple);
        }
        let mut order: Vec<usize> = (0..projs.len()).collect();
        order.sort_by(|&a, &b| crate::matlin::cmp_eigentuples_desc(&tuples[a], &tuples[b]));
        return Ok(order.into_iter().map(|i| projs[i].clone()).collect());
    }
    Err(CcqError::pre(
        "eigenprojectors_by_interpolation: no generic combination separated the eigenspaces",
    ))
}

// ---------------------------------------------------------------------------
// Q-polynomial orderings
// ---------------------------------------------------------------------------

/// One Q-polynomial ordering of the idempotents with its dual intersection
/// sequences (read off the tridiagonal Krein matrix of the seed).
#[derive(Clone, Debug)]
pub struct QPolyProfile {
    /// Permutation of `0..=d` with `ordering[0] = 0`; position `h` holds the
    /// original index of the idempotent serving as `E_h`.
    pub ordering: Vec<usize>,
    /// `a*_h = q_{1h}^h` for `h = 0..=d` (in the new numbering).
    pub a_star: Vec<f64>,
    /// `b*_h = q_{1,h+1}^h` for `h = 0..d`.
    pub b_star: Vec<f64>,
    /// `c*_h = q_{1,h-1}^h` for `h = 1..=d`.
    pub c_star: Vec<f64>,
    /// True when the greedy extension hit a tie and exhaustive search
    /// resolved it.
    pub ambiguous_ties: bool,
}

/// Finds every ordering `E_0, E_{pi(1)}, ..., E_{pi(d)}` under which the
/// Krein matrix of `E_{pi(1)}` is irreducibly tridiagonal. Greedy extension
/// by the unique nonzero coupling, with exhaustive fallback on ties; every
/// candidate is re-verified against the full tridiagonality condition before
/// being reported. Results are sorted lexicographically by ordering.
///
/// # Errors
///
/// Rejects schemes with more than [`MAX_ORDERING_CLASSES`] classes.
pub fn q_polynomial_orderings(spec: &SchemeSpectrum, tol: Tolerance) -> Result<Vec<QPolyProfile>> {
    if spec.d > MAX_ORDERING_CLASSES {
        return Err(CcqError::pre(format!(
            "q_polynomial_orderings supports at most {MAX_ORDERING_CLASSES} classes, got {}",
            spec.d
        )));
    }
    let d = spec.d;
    let scale = krein_scale(spec);
    let significant = |v: f64| fabs(v) > tol.bound(scale);
    let mut results: Vec<QPolyProfile> = Vec::new();
    if d == 0 {
        results.push(profile_for(spec, &[0], false));
        return Ok(results);
    }

    let mut visited = 0usize;
    for seed in 1..=d {
        let mut stack: Vec<(Vec<usize>, bool)> = vec![(vec![0, seed], false)];
        while let Some((prefix, tied)) = stack.pop() {
            visited += 1;
            if visited > 1_000_000 {
                return Err(CcqError::pre(
                    "q_polynomial_orderings: search space exceeded 10^6 nodes",
                ));
            }
            if prefix.len() == d + 1 {
                if let Some(profile) = try_profile(spec, &prefix, tied, tol) {
                    results.push(profile);
                }
                continue;
            }
            let last = *prefix.last().expect("nonempty");
            // The successor must couple to the current end and must not
            // couple to any earlier member (tridiagonality constrains every
            // completed ordering, so this prunes without losing solutions).
            let candidates: Vec<usize> = (1..=d)
                .filter(|t| !prefix.contains(t))
                .filter(|&t| significant(spec.q(seed, last, t)))
                .filter(|&t| {
                    prefix[..prefix.len() - 1]
                        .iter()
                        .all(|&e| !significant(spec.q(seed, e, t)))
                })
                .collect();
            let tied_now = tied || candidates.len() > 1;
            for t in candidates {
                let mut next = prefix.clone();
                next.push(t);
                stack.push((next, tied_now));
            }
        }
    }
    results.sort_by(|a, b| a.ordering.cmp(&b.ordering));
    results.dedup_by(|a, b| a.ordering == b.ordering);
    Ok(results)
}

fn krein_scale(spec: &SchemeSpectrum) -> f64 {
    spec.krein.iter().fold(0.0f64, |m, k| {
        let v = k.max_abs();
        if v > m {
            v
        } else {
            m
        }
    })
}

/// Full verification of one candidate ordering: the Krein matrix of the seed,
/// re-indexed by the ordering, must be tridiagonal with nonzero super- and
/// sub-diagonals.
fn try_profile(
    spec: &SchemeSpectrum,
    ordering: &[usize],
    tied: bool,
    tol: Tolerance,
) -> Option<QPolyProfile> {
    let d = spec.d;
    let seed = ordering[1];
    let scale = krein_scale(spec);
    for i in 0..=d {
        for j in 0..=d {
            let q = spec.q(seed, ordering[i], ordering[j]);
            let band = i.abs_diff(j) <= 1;
            if band {
                if i.abs_diff(j) == 1 && !(fabs(q) > tol.bound(scale)) {
                    return None; // reducible tridiagonal
                }
            } else if fabs(q) > tol.bound(scale) {
                return None; // off-band mass
            }
        }
    }
    Some(profile_for(spec, ordering, tied))
}

fn profile_for(spec: &SchemeSpectrum, ordering: &[usize], tied: bool) -> QPolyProfile {
    let d = spec.d;
    let mut a_star = Vec::with_capacity(d + 1);
    let mut b_star = Vec::with_capacity(d);
    let mut c_star = Vec::with_capacity(d);
    if d == 0 {
        return QPolyProfile {
            ordering: ordering.to_vec(),
            a_star: vec![0.0],
            b_star,
            c_star,
            ambiguous_ties: tied,
        };
    }
    let seed = ordering[1];
    for h in 0..=d {
        a_star.push(spec.q(seed, ordering[h], ordering[h]));
        if h < d {
            b_star.push(spec.q(seed, ordering[h + 1], ordering[h]));
        }
        if h >= 1 {
            c_star.push(spec.q(seed, ordering[h - 1], ordering[h]));
        }
    }
    QPolyProfile {
        ordering: ordering.to_vec(),
        a_star,
        b_star,
        c_star,
        ambiguous_ties: tied,
    }
}

// ---------------------------------------------------------------------------
// Subset profiles and Delsarte subschemes
// ---------------------------------------------------------------------------

/// Inner/dual distribution of a subset `C` of a scheme's point set.
#[derive(Clone, Debug)]
pub struct SubsetProfile {
    pub size: usize,
    /// `a_i = |{(x,y) in C^2 : (x,y) in R_i}| / |C|` (exact counts over |C|).
    pub inner_distribution: Vec<f64>,
    /// Exact pair counts behind `inner_distribution`.
    pub pair_counts: Vec<u64>,
    /// `b_i = (|X|/|C|) chi^T E_i chi` (always nonnegative).
    pub dual_distribution: Vec<f64>,
    /// Relation indices `i >= 1` with a nonzero pair count.
    pub angle_set: Vec<usize>,
    /// Degree `s = |angle_set|`.
    pub degree: usize,
    /// Strength `t`: largest `t` with `b_1, ..., b_t` all zero within
    /// `tol.abs_eps * |C|`.
    pub strength: usize,
}

/// Computes the [`SubsetProfile`] of `subset` (point indices, deduplicated
/// order-insensitively).
///
/// # Errors
///
/// Empty subsets, out-of-range indices, duplicate indices.
pub fn subset_profile(
    scheme: &Scheme,
    spec: &SchemeSpectrum,
    subset: &[usize],
    tol: Tolerance,
) -> Result<SubsetProfile> {
    let n = scheme.n();
    let d = scheme.d();
    if subset.is_empty() {
        return Err(CcqError::pre("subset_profile: empty subset"));
    }
    let mut seen = BTreeSet::new();
    for &x in subset {
        if x >= n {
            return Err(CcqError::pre(format!(
                "subset_profile: point {x} out of range (n = {n})"
            )));
        }
        if !seen.insert(x) {
            return Err(CcqError::pre(format!(
                "subset_profile: duplicate point {x}"
            )));
        }
    }
    let c = subset.len() as f64;
    let mut pair_counts = vec![0u64; d + 1];
    for &x in subset {
        for &y in subset {
            pair_counts[scheme.label(x, y)] += 1;
        }
    }
    let inner_distribution: Vec<f64> = pair_counts.iter().map(|&k| k as f64 / c).collect();
    let angle_set: Vec<usize> = (1..=d).filter(|&i| pair_counts[i] > 0).collect();

    let mut dual_distribution = Vec::with_capacity(d + 1);
    for e in &spec.idempotents {
        let mut quad = 0.0f64;
        for &x in subset {
            for &y in subset {
                quad += e.get(x, y);
            }
        }
        dual_distribution.push((n as f64 / c) * quad);
    }
    let zero_bound = tol.abs_eps * c;
    let mut strength = 0usize;
    while strength < d && dual_distribution[strength + 1] <= zero_bound {
        strength += 1;
    }
    Ok(SubsetProfile {
        size: subset.len(),
        inner_distribution,
        pair_counts,
        dual_distribution,
        degree: angle_set.len(),
        angle_set,
        strength,
    })
}

/// Builds the association scheme induced on a design `C` inside a scheme:
/// admissible when `2s - 2 <= t` for the degree `s` and strength `t` of `C`.
/// The subset's relations are renumbered by ascending original relation
/// index (0 stays the diagonal). The induced partition is re-validated from
/// scratch.
///
/// # Errors
///
/// [`CcqError::Certificate`] when `2s - 2 > t`; any validation failure of
/// the induced partition (which would indicate the certificate inputs were
/// wrong) propagates as its axiom error.
pub fn delsarte_subscheme(
    scheme: &Scheme,
    spec: &SchemeSpectrum,
    subset: &[usize],
    tol: Tolerance,
) -> Result<(Scheme, SubsetProfile)> {
    let profile = subset_profile(scheme, spec, subset, tol)?;
    let s = profile.degree;
    let t = profile.strength;
    if 2 * s < 2 || 2 * s - 2 > t {
        return Err(CcqError::Certificate(format!(
            "subset scheme requires 2s-2 <= t, got degree s = {s}, strength t = {t}"
        )));
    }
    let mut relabel = vec![usize::MAX; scheme.d() + 1];
    relabel[0] = 0;
    for (new, &old) in profile.angle_set.iter().enumerate() {
        relabel[old] = new + 1;
    }
    let m = subset.len();
    let mut labels = vec![0u16; m * m];
    for (a, &x) in subset.iter().enumerate() {
        for (b, &y) in subset.iter().enumerate() {
            let old = scheme.label(x, y);
            let new = relabel[old];
            debug_assert_ne!(new, usize::MAX);
            labels[a * m + b] = new as u16;
        }
    }
    let part = RelationPartition::new(m, labels)?;
    let sub = validate_scheme(&part)?;
    Ok((sub, profile))
}

// ---------------------------------------------------------------------------
// Closed-form dual sequences
// ---------------------------------------------------------------------------

/// Dual intersection sequences `(b*_0..b*_{n-1}, c*_1..c*_n)` of the Hamming
/// scheme `H(n, q)` in its natural Q-polynomial ordering:
/// `b*_i = (n - i)(q - 1)`, `c*_i = i`.
pub fn hamming_qpoly_ordering(n: usize, q: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || q < 2 {
        return Err(CcqError::pre(format!(
            "hamming_qpoly_ordering requires n >= 1 and q >= 2, got n={n}, q={q}"
        )));
    }
    let b = (0..n).map(|i| ((n - i) * (q - 1)) as f64).collect();
    let c = (1..=n).map(|i| i as f64).collect();
    Ok((b, c))
}

/// Dual intersection sequences `(b*_0..b*_{d-1}, c*_1..c*_d)` of the Johnson
/// scheme `J(v, k)` (with `d = min(k, v-k)`) in its natural Q-polynomial
/// ordering.
pub fn johnson_qpoly_ordering(v: usize, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 || k >= v {
        return Err(CcqError::pre(format!(
            "johnson_qpoly_ordering requires v > k >= 1, got v={v}, k={k}"
        )));
    }
    let d = k.min(v - k);
    let (vf, kf) = (v as f64, k as f64);
    let b = (0..d)
        .map(|i| {
            let i = i as f64;
            vf * (vf - 1.0) * (vf - i + 1.0) * (vf - kf - i) * (kf - i)
                / (kf * (vf - kf) * (vf - 2.0 * i + 1.0) * (vf - 2.0 * i))
        })
        .collect();
    let c = (1..=d)
        .map(|i| {
            let i = i as f64;
            vf * (vf - 1.0) * i * (kf - i + 1.0) * (vf - kf - i + 1.0)
                / (kf * (vf - kf) * (vf - 2.0 * i + 2.0) * (vf - 2.0 * i + 1.0))
        })
        .collect();
    Ok((b, c))
}

// ---------------------------------------------------------------------------
// Test helpers (shared with other modules' tests via pub(crate))
// ---------------------------------------------------------------------------

/// Builds the label matrix of the Hamming scheme `H(n, 2)` directly from
/// XOR weights; used by tests as an independent construction.
#[cfg(test)]
pub(crate) fn hamming2_partition(n: usize) -> RelationPartition {
    let size = 1usize << n;
    let mut labels = vec![0u16; size * size];
    for x in 0..size {
        for y in 0..size {
            labels[x * size + y] = (x ^ y).count_ones() as u16;
        }
    }
    RelationPartition::new(size, labels).unwrap()
}

#[cfg(test)]
pub(crate) fn cycle_partition(n: usize) -> RelationPartition {
    let mut labels = vec![0u16; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = (i as i64 - j as i64).rem_euclid(n as i64) as usize;
            labels[i * n + j] = d.min(n - d) as u16;
        }
    }
    RelationPartition::new(n, labels).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_noncontiguous_labels() {
        let labels = vec![0u16, 2, 2, 0];
        assert!(RelationPartition::new(2, labels).is_err());
    }

    #[test]
    fn validates_pentagon() {
        let s = validate_scheme(&cycle_partition(5)).unwrap();
        assert_eq!(s.d(), 2);
        assert_eq!(s.valencies(), &[1, 2, 2]);
        assert_eq!(s.p(1, 1, 2), 1); // neighbors of both ends of a 2-path
        assert_eq!(s.p(1, 1, 0), 2);
    }

    #[test]
    fn rejects_broken_diagonal() {
        let mut labels = vec![0u16; 9];
        labels[0 * 3 + 0] = 1; // diagonal entry mislabeled
        labels[0 * 3 + 1] = 1;
        labels[1 * 3 + 0] = 1;
        labels[1 * 3 + 2] = 1;
        labels[2 * 3 + 1] = 1;
        labels[0 * 3 + 2] = 1;
        labels[2 * 3 + 0] = 1;
        let part = RelationPartition::new(3, labels).unwrap();
        match validate_scheme(&part) {
            Err(CcqError::Axiom(v)) => assert_eq!(v.axiom, "scheme(1)"),
            other => panic!("expected axiom violation, got {other:?}"),
        }
    }

    #[test]
    fn rejects_asymmetric_relation() {
        // 3 points: relation 1 = {(0,1),(1,0),(1,2),(2,1),(0,2)}, relation 2 = {(2,0)}.
        let labels = vec![0u16, 1, 1, 1, 0, 1, 2, 1, 0];
        let part = RelationPartition::new(3, labels).unwrap();
        match validate_scheme(&part) {
            Err(CcqError::Axiom(v)) => assert_eq!(v.axiom, "scheme(3)"),
            other => panic!("expected axiom violation, got {other:?}"),
        }
    }

    #[test]
    fn rejects_inconsistent_intersection_numbers() {
        // Path graph on 4 points: distance partition of P_4 is not an
        // association scheme (distance-1 counts differ).
        let n = 4usize;
        let mut labels = vec![0u16; n * n];
        for i in 0..n {
            for j in 0..n {
                labels[i * n + j] = i.abs_diff(j) as u16;
            }
        }
        let part = RelationPartition::new(n, labels).unwrap();
        match validate_scheme(&part) {
            Err(CcqError::Axiom(v)) => assert_eq!(v.axiom, "scheme(4)"),
            other => panic!("expected axiom violation, got {other:?}"),
        }
    }

    #[test]
    fn hamming3_spectrum_matches_krawtchouk() {
        let s = validate_scheme(&hamming2_partition(3)).unwrap();
        let spec = spectrum(&s, Tolerance::default()).unwrap();
        assert_eq!(spec.multiplicities, vec![1, 3, 3, 1]);
        let expect_p = [
            [1.0, 3.0, 3.0, 1.0],
            [1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0],
            [1.0, -3.0, 3.0, -1.0],
        ];
        for l in 0..4 {
            for h in 0..4 {
                assert!(
                    (spec.p_matrix.get(l, h) - expect_p[l][h]).abs() < 1e-10,
                    "P[{l}][{h}]"
                );
                // H(3,2) is formally self-dual: Q = P.
                assert!((spec.q_matrix.get(l, h) - expect_p[l][h]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn interpolation_oracle_agrees_on_pentagon_and_cube() {
        let tol = Tolerance::default();
        for part in [cycle_partition(5), hamming2_partition(3)] {
            let s = validate_scheme(&part).unwrap();
            let spec = spectrum(&s, tol).unwrap();
            let oracle = eigenprojectors_by_interpolation(&s, tol).unwrap();
            assert_eq!(oracle.len(), spec.idempotents.len());
            for (a, b) in oracle.iter().zip(spec.idempotents.iter()) {
                assert!(max_abs_residual(a, b).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn hamming3_q_poly_ordering_found() {
        let s = validate_scheme(&hamming2_partition(3)).unwrap();
        let spec = spectrum(&s, Tolerance::default()).unwrap();
        let profiles = q_polynomial_orderings(&spec, Tolerance::default()).unwrap();
        let natural: Vec<usize> = vec![0, 1, 2, 3];
        let hit = profiles.iter().find(|p| p.ordering == natural).unwrap();
        let (b_closed, c_closed) = hamming_qpoly_ordering(3, 2).unwrap();
        for (i, expect) in b_closed.iter().enumerate() {
            assert!((hit.b_star[i] - expect).abs() < 1e-9, "b*_{i}");
        }
        for (i, expect) in c_closed.iter().enumerate() {
            assert!((hit.c_star[i] - expect).abs() < 1e-9, "c*_{}", i + 1);
        }
    }

    #[test]
    fn pentagon_q_poly_both_orderings() {
        let s = validate_scheme(&cycle_partition(5)).unwrap();
        let spec = spectrum(&s, Tolerance::default()).unwrap();
        let profiles = q_polynomial_orderings(&spec, Tolerance::default()).unwrap();
        let orderings: Vec<Vec<usize>> = profiles.iter().map(|p| p.ordering.clone()).collect();
        assert!(orderings.contains(&vec![0, 1, 2]));
        assert!(orderings.contains(&vec![0, 2, 1]));
    }

    #[test]
    fn singleton_dual_distribution_is_multiplicities() {
        let s = validate_scheme(&hamming2_partition(3)).unwrap();
        let spec = spectrum(&s, Tolerance::default()).unwrap();
        let profile = subset_profile(&s, &spec, &[5], Tolerance::default()).unwrap();
        for (h, &m) in spec.multiplicities.iter().enumerate() {
            assert!((profile.dual_distribution[h] - m as f64).abs() < 1e-9);
        }
        assert_eq!(profile.strength, 0);
        assert_eq!(profile.degree, 0);
    }

    #[test]
    fn even_code_profile_in_h4() {
        // Even-weight words of H(4,2): strength 3, degree 2, angle set {2,4}.
        let part = hamming2_partition(4);
        let s = validate_scheme(&part).unwrap();
        let spec = spectrum(&s, Tolerance::default()).unwrap();
        let subset: Vec<usize> = (0..16usize).filter(|x| x.count_ones() % 2 == 0).collect();
        let profile = subset_profile(&s, &spec, &subset, Tolerance::default()).unwrap();
        assert_eq!(profile.angle_set, vec![2, 4]);
        assert_eq!(profile.degree, 2);
        assert_eq!(profile.strength, 3);
        // Dual distribution (8, 0, 0, 0, 8).
        assert!((profile.dual_distribution[0] - 8.0).abs() < 1e-9);
        assert!((profile.dual_distribution[4] - 8.0).abs() < 1e-9);
        // Subscheme admissible: 2s-2 = 2 <= 3 = t.
        let (sub, _) = delsarte_subscheme(&s, &spec, &subset, Tolerance::default()).unwrap();
        assert_eq!(sub.d(), 2);
        assert_eq!(sub.n(), 8);
        assert_eq!(sub.valencies(), &[1, 6, 1]);
    }

    #[test]
    fn delsarte_certificate_rejects_weak_design() {
        // {000, 001, 011} in H(3,2): degree 2 (distances 1 and 2 both
        // occur) but strength 0, so 2s-2 = 2 > 0 = t.
        let part = hamming2_partition(3);
        let s = validate_scheme(&part).unwrap();
        let spec = spectrum(&s, Tolerance::default()).unwrap();
        let profile = subset_profile(&s, &spec, &[0, 1, 3], Tolerance::default()).unwrap();
        assert_eq!(profile.degree, 2);
        assert_eq!(profile.strength, 0);
        match delsarte_subscheme(&s, &spec, &[0, 1, 3], Tolerance::default()) {
            Err(CcqError::Certificate(_)) => {}
            other => panic!("expected certificate failure, got {other:?}"),
        }
    }

    #[test]
    fn degree_one_pair_is_trivially_a_subscheme() {
        let part = hamming2_partition(3);
        let s = validate_scheme(&part).unwrap();
        let spec = spectrum(&s, Tolerance::default()).unwrap();
        let (sub, profile) =
            delsarte_subscheme(&s, &spec, &[0, 1], Tolerance::default()).unwrap();
        assert_eq!(profile.degree, 1);
        assert_eq!(sub.n(), 2);
        assert_eq!(sub.d(), 1);
    }

    #[test]
    fn johnson_sequences_match_direct_krein() {
        // J(5,2): compare against the numerically computed Krein matrix.
        let v = 5usize;
        let k = 2usize;
        let subsets: Vec<u32> = (0u32..32).filter(|m| m.count_ones() == 2).collect();
        let m = subsets.len();
        let mut labels = vec![0u16; m * m];
        for a in 0..m {
            for b in 0..m {
                let inter = (subsets[a] & subsets[b]).count_ones() as usize;
                labels[a * m + b] = (k - inter) as u16;
            }
        }
        let part = RelationPartition::new(m, labels).unwrap();
        let s = validate_scheme(&part).unwrap();
        let spec = spectrum(&s, Tolerance::default()).unwrap();
        // Natural Q-poly ordering: idempotents sorted so E_1 has
        // multiplicity v-1 = 4; canonical order already provides E_1 = the
        // second eigenvalue of A_1, which for Johnson is the natural one.
        let profiles = q_polynomial_orderings(&spec, Tolerance::default()).unwrap();
        let natural: Vec<usize> = vec![0, 1, 2];
        let hit = profiles.iter().find(|p| p.ordering == natural).unwrap();
        let (b_closed, c_closed) = johnson_qpoly_ordering(v, k).unwrap();
        for (i, expect) in b_closed.iter().enumerate() {
            assert!(
                (hit.b_star[i] - expect).abs() < 1e-9,
                "b*_{i}: {} vs {expect}",
                hit.b_star[i]
            );
        }
        for (i, expect) in c_closed.iter().enumerate() {
            assert!((hit.c_star[i] - expect).abs() < 1e-9, "c*_{}", i + 1);
        }
        // Complement symmetry.
        let (b2, c2) = johnson_qpoly_ordering(v, v - k).unwrap();
        assert_eq!(b_closed, b2);
        assert_eq!(c_closed, c2);
    }
}
