//! Coherent configurations with symmetric fibers.
//!
//! A coherent configuration is given by a [`RelationPartition`] of `X x X`
//! satisfying:
//!
//! 1. the diagonal is a union of relations (whose classes are the *fibers*);
//! 2. the labels partition `X x X`;
//! 3. the transpose of every relation is a relation;
//! 4. for all relations `a, b, c` the count
//!    `|{z : (x,z) in R_a, (z,y) in R_b}|` is the same for every `(x,y)` in
//!    `R_c` (the intersection numbers).
//!
//! [`validate_config`] checks these exactly and additionally requires every
//! fiber to carry a symmetric association scheme (non-symmetric fibers are
//! a typed [`CcqError::Unsupported`] rejection). Relations are renumbered
//! per fiber-pair *block*: block `(i,j)` holds the relations supported on
//! `X_i x X_j`, indexed `eps..=r` where `eps = 0` for diagonal blocks (index
//! 0 being the fiber diagonal) and `eps = 1` for cross blocks; within a
//! block the numbering follows ascending raw label, and block `(j,i)` takes
//! the numbering of block `(i,j)` under transposition. All block matrices
//! use fiber-local coordinates: points of each fiber in ascending original
//! index order.
//!
//! On top of a validated configuration the module builds the orthogonal
//! block basis `E_l^{(i,j)}` (axioms B1-B4), block eigenmatrices and Krein
//! parameters, the Q-polynomial verdict, and the full battery of parameter
//! identities.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{AxiomViolation, CcqError, Result};
use crate::matlin::{fabs, max_abs_residual, sqrt, IntMatrix, RealMatrix, Tolerance};
use crate::polyfun::{three_term, FPoly};
use crate::scheme::{self, RelationPartition, Scheme, SchemeSpectrum, MAX_POINTS};

/// Maximum number of global idempotent orderings tried by
/// [`q_polynomial_check`] when `search` is enabled (8!).
pub const MAX_ORDERING_CANDIDATES: usize = 40_320;

const MAX_WITNESSES: usize = 16;

// ---------------------------------------------------------------------------
// CoherentConfig
// ---------------------------------------------------------------------------

/// Relations of one fiber-pair block.
#[derive(Clone, Debug)]
pub struct BlockInfo {
    /// Smallest adjacency index: 0 for diagonal blocks, 1 for cross blocks.
    pub eps: usize,
    /// Largest adjacency index; the block holds `r - eps + 1` relations.
    pub r: usize,
    /// `raw_by_nominal[k]` is the raw label of the relation with nominal
    /// index `eps + k`.
    pub raw_by_nominal: Vec<usize>,
    /// Valency (constant row sum) of each relation, same order as
    /// `raw_by_nominal`.
    pub valencies: Vec<i64>,
}

impl BlockInfo {
    /// Number of idempotent indices of the block (`r_tilde + 1`), equal to
    /// its number of relations.
    pub fn index_count(&self) -> usize {
        self.raw_by_nominal.len()
    }

    /// Largest idempotent index `r_tilde = r - eps`.
    pub fn r_tilde(&self) -> usize {
        self.r - self.eps
    }

    /// Raw label of the relation with nominal index `l` (`eps <= l <= r`).
    pub fn raw(&self, l: usize) -> Result<usize> {
        if l < self.eps || l > self.r {
            return Err(CcqError::pre(format!(
                "block relation index {l} outside {}..={}",
                self.eps, self.r
            )));
        }
        Ok(self.raw_by_nominal[l - self.eps])
    }

    /// Valency of the relation with nominal index `l`.
    pub fn valency(&self, l: usize) -> Result<i64> {
        if l < self.eps || l > self.r {
            return Err(CcqError::pre(format!(
                "block relation index {l} outside {}..={}",
                self.eps, self.r
            )));
        }
        Ok(self.valencies[l - self.eps])
    }
}

/// Exact intersection numbers, stored sparsely by raw relation labels:
/// `(a, b, c) -> |{z : (x,z) in R_a, (z,y) in R_b}|` for `(x,y) in R_c`.
#[derive(Clone, Debug, Default)]
pub struct IntersectionTensor {
    map: BTreeMap<(u16, u16, u16), i64>,
}

impl IntersectionTensor {
    /// Count for raw labels `(a, b, c)`; zero when absent.
    pub fn p_raw(&self, a: usize, b: usize, c: usize) -> i64 {
        *self
            .map
            .get(&(a as u16, b as u16, c as u16))
            .unwrap_or(&0)
    }

    /// Nominal accessor `p_{l,m,n}^{(i,j,h)}` with `l` in block `(i,j)`,
    /// `m` in block `(j,h)`, `n` in block `(i,h)`.
    pub fn p(
        &self,
        cfg: &CoherentConfig,
        (i, j, h): (usize, usize, usize),
        (l, m, n): (usize, usize, usize),
    ) -> Result<i64> {
        let a = cfg.block(i, j)?.raw(l)?;
        let b = cfg.block(j, h)?.raw(m)?;
        let c = cfg.block(i, h)?.raw(n)?;
        Ok(self.p_raw(a, b, c))
    }

    /// Iterates the nonzero entries as `((a, b, c), count)` in raw labels.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), i64)> + '_ {
        self.map
            .iter()
            .map(|(&(a, b, c), &v)| ((a as usize, b as usize, c as usize), v))
    }
}

/// A validated coherent configuration with symmetric fibers.
#[derive(Clone, Debug)]
pub struct CoherentConfig {
    part: RelationPartition,
    fibers: Vec<Vec<u16>>,
    fiber_of: Vec<u16>,
    /// raw label -> supporting fiber pair.
    rel_support: Vec<(u16, u16)>,
    /// raw label -> nominal index within its block.
    rel_nominal: Vec<u16>,
    /// raw label -> raw label of the transposed relation.
    transpose_of: Vec<u16>,
    blocks: BTreeMap<(usize, usize), BlockInfo>,
    tensor: IntersectionTensor,
}

impl CoherentConfig {
    pub fn n(&self) -> usize {
        self.part.n()
    }

    pub fn num_fibers(&self) -> usize {
        self.fibers.len()
    }

    pub fn partition(&self) -> &RelationPartition {
        &self.part
    }

    /// Points of fiber `i` (ascending original indices).
    pub fn fiber(&self, i: usize) -> &[u16] {
        &self.fibers[i]
    }

    pub fn fiber_size(&self, i: usize) -> usize {
        self.fibers[i].len()
    }

    pub fn fiber_of(&self, x: usize) -> usize {
        self.fiber_of[x] as usize
    }

    pub fn block(&self, i: usize, j: usize) -> Result<&BlockInfo> {
        self.blocks.get(&(i, j)).ok_or_else(|| {
            CcqError::pre(format!("no block ({i},{j}); configuration has {} fibers", self.fibers.len()))
        })
    }

    /// `(support, nominal index)` of a raw relation label.
    pub fn locate_raw(&self, raw: usize) -> (usize, usize, usize) {
        let (i, j) = self.rel_support[raw];
        (i as usize, j as usize, self.rel_nominal[raw] as usize)
    }

    pub fn transpose_of_raw(&self, raw: usize) -> usize {
        self.transpose_of[raw] as usize
    }

    /// Type matrix: entry `(i,j)` is the number of relations of block
    /// `(i,j)`.
    pub fn type_matrix(&self) -> Vec<Vec<usize>> {
        let f = self.num_fibers();
        (0..f)
            .map(|i| {
                (0..f)
                    .map(|j| self.blocks[&(i, j)].index_count())
                    .collect()
            })
            .collect()
    }

    pub fn tensor(&self) -> &IntersectionTensor {
        &self.tensor
    }

    /// Dense 0/1 adjacency of block relation `(i, j, l)` in fiber-local
    /// coordinates (`|X_i| x |X_j|`).
    pub fn block_adjacency(&self, i: usize, j: usize, l: usize) -> Result<IntMatrix> {
        let raw = self.block(i, j)?.raw(l)?;
        let fi = &self.fibers[i];
        let fj = &self.fibers[j];
        let mut m = IntMatrix::zeros(fi.len(), fj.len());
        for (a, &x) in fi.iter().enumerate() {
            for (b, &y) in fj.iter().enumerate() {
                if self.part.label(x as usize, y as usize) == raw {
                    m.set(a, b, 1);
                }
            }
        }
        Ok(m)
    }

    /// The symmetric association scheme carried by fiber `i`; its class
    /// labels equal the diagonal block's nominal indices.
    pub fn fiber_scheme(&self, i: usize) -> Result<Scheme> {
        let fi = &self.fibers[i];
        let m = fi.len();
        let mut labels = vec![0u16; m * m];
        for (a, &x) in fi.iter().enumerate() {
            for (b, &y) in fi.iter().enumerate() {
                let raw = self.part.label(x as usize, y as usize);
                labels[a * m + b] = self.rel_nominal[raw];
            }
        }
        scheme::validate_scheme(&RelationPartition::new(m, labels)?)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Validates the coherent-configuration axioms exactly and builds the block
/// structure and intersection tensor.
///
/// # Errors
///
/// [`CcqError::Axioms`] with witnesses (at most 16 collected per phase);
/// [`CcqError::Unsupported`] when the axioms hold but a fiber relation is
/// not symmetric.
pub fn validate_config(part: &RelationPartition) -> Result<CoherentConfig> {
    let n = part.n();
    if n > MAX_POINTS {
        return Err(CcqError::pre(format!(
            "configuration has {n} points, limit is {MAX_POINTS}"
        )));
    }
    let r = part.num_relations();
    let mut violations: Vec<AxiomViolation> = Vec::new();

    // Axiom 1: diagonal closure. Labels seen on the diagonal must never
    // appear off it.
    let mut diag_labels = BTreeSet::new();
    for x in 0..n {
        diag_labels.insert(part.label(x, x));
    }
    'axiom1: for x in 0..n {
        for y in 0..n {
            if x != y && diag_labels.contains(&part.label(x, y)) {
                violations.push(AxiomViolation {
                    axiom: "config(1)",
                    message: format!(
                        "relation {} contains the diagonal pair but also ({x},{y})",
                        part.label(x, y)
                    ),
                    points: vec![x, y],
                    relations: vec![part.label(x, y)],
                });
                if violations.len() >= MAX_WITNESSES {
                    break 'axiom1;
                }
            }
        }
    }

    // Axiom 3: the transpose map on labels must be well defined.
    let mut sigma = vec![usize::MAX; r];
    'axiom3: for x in 0..n {
        for y in 0..n {
            let l = part.label(x, y);
            let t = part.label(y, x);
            if sigma[l] == usize::MAX {
                sigma[l] = t;
            } else if sigma[l] != t {
                violations.push(AxiomViolation {
                    axiom: "config(3)",
                    message: format!(
                        "transpose of relation {l} is ambiguous: {} and {t} both occur \
                         (witness ({x},{y}))",
                        sigma[l]
                    ),
                    points: vec![x, y],
                    relations: vec![l, sigma[l], t],
                });
                if violations.len() >= MAX_WITNESSES {
                    break 'axiom3;
                }
            }
        }
    }
    if !violations.is_empty() {
        return Err(CcqError::Axioms(violations));
    }

    // Fibers: classes of the diagonal relations, ordered by ascending
    // diagonal label.
    let diag_sorted: Vec<usize> = diag_labels.iter().copied().collect();
    let fiber_rank: BTreeMap<usize, usize> = diag_sorted
        .iter()
        .enumerate()
        .map(|(k, &l)| (l, k))
        .collect();
    let f = diag_sorted.len();
    let mut fiber_of = vec![0u16; n];
    let mut fibers: Vec<Vec<u16>> = vec![Vec::new(); f];
    for x in 0..n {
        let i = fiber_rank[&part.label(x, x)];
        fiber_of[x] = i as u16;
        fibers[i].push(x as u16);
    }

    // Each relation must be supported on a single fiber pair.
    let mut rel_support = vec![(u16::MAX, u16::MAX); r];
    'support: for x in 0..n {
        for y in 0..n {
            let l = part.label(x, y);
            let here = (fiber_of[x], fiber_of[y]);
            if rel_support[l] == (u16::MAX, u16::MAX) {
                rel_support[l] = here;
            } else if rel_support[l] != here {
                violations.push(AxiomViolation {
                    axiom: "config(4)",
                    message: format!(
                        "relation {l} meets fiber pairs ({},{}) and ({},{}): its projections \
                         are not single fibers",
                        rel_support[l].0, rel_support[l].1, here.0, here.1
                    ),
                    points: vec![x, y],
                    relations: vec![l],
                });
                if violations.len() >= MAX_WITNESSES {
                    break 'support;
                }
            }
        }
    }
    if !violations.is_empty() {
        return Err(CcqError::Axioms(violations));
    }

    // Axiom 4: intersection numbers are well defined. Pairs are grouped by
    // relation; each pair's histogram over z of (label(x,z), label(z,y))
    // must match the relation's representative histogram.
    let mut pairs_by_label: Vec<Vec<(u16, u16)>> = vec![Vec::new(); r];
    for x in 0..n {
        for y in 0..n {
            pairs_by_label[part.label(x, y)].push((x as u16, y as u16));
        }
    }
    let mut tensor = IntersectionTensor::default();
    {
        let mut scratch = vec![0i64; r * r];
        let mut rep = vec![0i64; r * r];
        let mut touched: Vec<usize> = Vec::new();
        let mut rep_nnz: Vec<usize> = Vec::new();
        for c in 0..r {
            let pairs = &pairs_by_label[c];
            let (x0, y0) = pairs[0];
            rep_nnz.clear();
            for z in 0..n {
                let idx = part.label(x0 as usize, z) * r + part.label(z, y0 as usize);
                if rep[idx] == 0 {
                    rep_nnz.push(idx);
                }
                rep[idx] += 1;
            }
            for &(x, y) in pairs.iter().skip(1) {
                touched.clear();
                for z in 0..n {
                    let idx = part.label(x as usize, z) * r + part.label(z, y as usize);
                    if scratch[idx] == 0 {
                        touched.push(idx);
                    }
                    scratch[idx] += 1;
                }
                let mut bad: Option<usize> = None;
                if touched.len() != rep_nnz.len() {
                    bad = touched
                        .iter()
                        .chain(rep_nnz.iter())
                        .copied()
                        .find(|&idx| scratch[idx] != rep[idx]);
                } else {
                    for &idx in &touched {
                        if scratch[idx] != rep[idx] {
                            bad = Some(idx);
                            break;
                        }
                    }
                }
                if let Some(idx) = bad {
                    let (a, b) = (idx / r, idx % r);
                    let violation = AxiomViolation {
                        axiom: "config(4)",
                        message: format!(
                            "count of z with (x,z) in R_{a}, (z,y) in R_{b} differs on \
                             relation {c}: {} at ({x},{y}) vs {} at ({x0},{y0})",
                            scratch[idx], rep[idx]
                        ),
                        points: vec![x as usize, y as usize, x0 as usize, y0 as usize],
                        relations: vec![a, b, c],
                    };
                    return Err(CcqError::Axioms(vec![violation]));
                }
                for &idx in &touched {
                    scratch[idx] = 0;
                }
            }
            for &idx in &rep_nnz {
                let (a, b) = (idx / r, idx % r);
                tensor
                    .map
                    .insert((a as u16, b as u16, c as u16), rep[idx]);
                rep[idx] = 0;
            }
        }
    }

    // Scope restriction: fibers must be symmetric (every relation supported
    // on a diagonal block is its own transpose).
    let mut asym: Vec<usize> = Vec::new();
    for l in 0..r {
        let (i, j) = rel_support[l];
        if i == j && sigma[l] != l {
            asym.push(l);
        }
    }
    if !asym.is_empty() {
        return Err(CcqError::Unsupported(format!(
            "fiber relations {asym:?} are not symmetric; only configurations whose fibers \
             are symmetric association schemes are in scope"
        )));
    }

    // Block numbering. Diagonal blocks: the fiber diagonal gets index 0,
    // the others ascending raw label. Cross blocks (i < j): ascending raw
    // label from index 1; block (j,i) inherits indices through transposes.
    let mut rel_nominal = vec![0u16; r];
    let mut blocks: BTreeMap<(usize, usize), BlockInfo> = BTreeMap::new();
    let valency_of = |raw: usize| -> i64 {
        let (i, _) = rel_support[raw];
        (pairs_by_label[raw].len() / fibers[i as usize].len()) as i64
    };
    for i in 0..f {
        for j in i..f {
            let mut raws: Vec<usize> = (0..r)
                .filter(|&l| rel_support[l] == (i as u16, j as u16))
                .collect();
            if i == j {
                let diag = diag_sorted[i];
                raws.retain(|&l| l != diag);
                raws.insert(0, diag);
                for (k, &raw) in raws.iter().enumerate() {
                    rel_nominal[raw] = k as u16;
                }
                let valencies: Vec<i64> = raws.iter().map(|&raw| valency_of(raw)).collect();
                blocks.insert(
                    (i, i),
                    BlockInfo {
                        eps: 0,
                        r: raws.len() - 1,
                        raw_by_nominal: raws,
                        valencies,
                    },
                );
            } else {
                for (k, &raw) in raws.iter().enumerate() {
                    rel_nominal[raw] = (k + 1) as u16;
                    rel_nominal[sigma[raw]] = (k + 1) as u16;
                }
                let transposed: Vec<usize> = raws.iter().map(|&raw| sigma[raw]).collect();
                let valencies: Vec<i64> = raws.iter().map(|&raw| valency_of(raw)).collect();
                let valencies_t: Vec<i64> =
                    transposed.iter().map(|&raw| valency_of(raw)).collect();
                blocks.insert(
                    (i, j),
                    BlockInfo {
                        eps: 1,
                        r: raws.len(),
                        raw_by_nominal: raws,
                        valencies,
                    },
                );
                blocks.insert(
                    (j, i),
                    BlockInfo {
                        eps: 1,
                        r: transposed.len(),
                        raw_by_nominal: transposed,
                        valencies: valencies_t,
                    },
                );
            }
        }
    }

    let transpose_of: Vec<u16> = sigma.iter().map(|&t| t as u16).collect();
    let cfg = CoherentConfig {
        part: part.clone(),
        fibers,
        fiber_of,
        rel_support,
        rel_nominal,
        transpose_of,
        blocks,
        tensor,
    };

    // Every fiber must validate as a scheme (implied by the axioms plus
    // symmetry; checked defensively so downstream code can rely on it).
    for i in 0..f {
        cfg.fiber_scheme(i)?;
    }
    Ok(cfg)
}

/// Returns the exact intersection tensor of a validated configuration.
pub fn intersection_tensor(cfg: &CoherentConfig) -> &IntersectionTensor {
    cfg.tensor()
}

/// Independent oracle: recomputes every block product
/// `A_l^{(i,j)} A_m^{(j,h)}` with exact integer matrix arithmetic and
/// compares it against the tensor expansion `sum_n p A_n^{(i,h)}`.
///
/// # Errors
///
/// First mismatch as a precondition error naming the blocks and indices.
pub fn verify_tensor_by_products(cfg: &CoherentConfig) -> Result<()> {
    let f = cfg.num_fibers();
    for i in 0..f {
        for j in 0..f {
            for h in 0..f {
                let bij = cfg.block(i, j)?.clone();
                let bjh = cfg.block(j, h)?.clone();
                let bih = cfg.block(i, h)?.clone();
                for l in bij.eps..=bij.r {
                    let al = cfg.block_adjacency(i, j, l)?;
                    for m in bjh.eps..=bjh.r {
                        let am = cfg.block_adjacency(j, h, m)?;
                        let product = al.mul(&am)?;
                        let mut rebuilt = IntMatrix::zeros(cfg.fiber_size(i), cfg.fiber_size(h));
                        for nn in bih.eps..=bih.r {
                            let p = cfg.tensor().p(cfg, (i, j, h), (l, m, nn))?;
                            if p != 0 {
                                let an = cfg.block_adjacency(i, h, nn)?;
                                for x in 0..rebuilt.rows() {
                                    for y in 0..rebuilt.cols() {
                                        if an.get(x, y) != 0 {
                                            rebuilt.set(x, y, rebuilt.get(x, y) + p);
                                        }
                                    }
                                }
                            }
                        }
                        if let Some((x, y)) = product.first_difference(&rebuilt) {
                            return Err(CcqError::pre(format!(
                                "tensor mismatch: (A_{l}^({i},{j}) A_{m}^({j},{h}))\
                                 [{x},{y}] = {} but the tensor expansion gives {}",
                                product.get(x, y),
                                rebuilt.get(x, y)
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Builds the coherent configuration induced on a union of fibers (a union
/// of fibers of a coherent configuration is again one). Relations supported
/// on the kept blocks are relabeled contiguously by ascending raw label and
/// the result is re-validated from scratch.
pub fn restrict_to_fibers(cfg: &CoherentConfig, keep: &[usize]) -> Result<CoherentConfig> {
    if keep.is_empty() {
        return Err(CcqError::pre("restrict_to_fibers: empty fiber list"));
    }
    let mut seen = BTreeSet::new();
    for &i in keep {
        if i >= cfg.num_fibers() {
            return Err(CcqError::pre(format!(
                "restrict_to_fibers: fiber {i} out of range ({} fibers)",
                cfg.num_fibers()
            )));
        }
        if !seen.insert(i) {
            return Err(CcqError::pre(format!(
                "restrict_to_fibers: duplicate fiber {i}"
            )));
        }
    }
    let mut points: Vec<usize> = Vec::new();
    for &i in &seen {
        points.extend(cfg.fiber(i).iter().map(|&x| x as usize));
    }
    points.sort_unstable();
    let m = points.len();
    let mut old_labels: Vec<usize> = Vec::with_capacity(m * m);
    for &x in &points {
        for &y in &points {
            old_labels.push(cfg.partition().label(x, y));
        }
    }
    let distinct: BTreeSet<usize> = old_labels.iter().copied().collect();
    let relabel: BTreeMap<usize, u16> = distinct
        .iter()
        .enumerate()
        .map(|(k, &l)| (l, k as u16))
        .collect();
    let labels: Vec<u16> = old_labels.iter().map(|l| relabel[l]).collect();
    validate_config(&RelationPartition::new(m, labels)?)
}

/// Restricts a block basis to a union of fibers, the companion of
/// [`restrict_to_fibers`]: kept fibers are renumbered ascending and the
/// blocks (already in fiber-local coordinates) carry over verbatim.
pub fn restrict_basis_to_fibers(basis: &BlockBasis, keep: &[usize]) -> Result<BlockBasis> {
    if keep.is_empty() {
        return Err(CcqError::pre("restrict_basis_to_fibers: empty fiber list"));
    }
    let kept: BTreeSet<usize> = keep.iter().copied().collect();
    let mut blocks = BTreeMap::new();
    for (a, &i) in kept.iter().enumerate() {
        for (b, &j) in kept.iter().enumerate() {
            let block = basis.blocks.get(&(i, j)).ok_or_else(|| {
                CcqError::pre(format!("restrict_basis_to_fibers: no block ({i}, {j})"))
            })?;
            blocks.insert((a, b), block.clone());
        }
    }
    Ok(BlockBasis { blocks })
}

// ---------------------------------------------------------------------------
// Block basis (B1)-(B4)
// ---------------------------------------------------------------------------

/// An orthogonal block basis `E_0^{(i,j)}, ..., E_{r_tilde}^{(i,j)}` for
/// every ordered fiber pair, in fiber-local coordinates.
#[derive(Clone, Debug)]
pub struct BlockBasis {
    pub blocks: BTreeMap<(usize, usize), Vec<RealMatrix>>,
}

impl BlockBasis {
    pub fn block(&self, i: usize, j: usize) -> Result<&[RealMatrix]> {
        self.blocks
            .get(&(i, j))
            .map(|v| v.as_slice())
            .ok_or_else(|| CcqError::pre(format!("basis has no block ({i},{j})")))
    }
}

/// Max residuals of the four basis axioms, measured with `max |entry|`.
#[derive(Clone, Debug)]
pub struct BasisReport {
    pub b1_residual: f64,
    pub b2_residual: f64,
    pub b3_residual: f64,
    pub b4_residual: f64,
    pub pass: bool,
}

fn canonical_sign(m: &RealMatrix) -> RealMatrix {
    let mut best = 0.0f64;
    let mut best_val = 0.0f64;
    for &v in m.data() {
        if fabs(v) > best + 1e-12 {
            best = fabs(v);
            best_val = v;
        }
    }
    if best_val < 0.0 {
        m.scale(-1.0)
    } else {
        m.clone()
    }
}

struct MatchedPair {
    alpha: usize,
    beta: usize,
    mat: RealMatrix,
}

/// Synthesizes a (B1)-(B4) basis from the fiber spectra.
///
/// For each cross block `(i,j)` and each fiber-idempotent pair `(a, b)`,
/// the span of `{E_a^{(i,i)} A E_b^{(j,j)} : A block adjacency}` is either
/// zero or one-dimensional; the one-dimensional spans are normalized into
/// partial isometries (`E E^T = E_a^{(i,i)}`) and paired across fibers into
/// a global index assignment satisfying (B4). Sign freedom is fixed by
/// making the largest-magnitude entry positive on a spanning tree of each
/// index's fiber graph and deriving the remaining signs from the (B4)
/// products. The result is verified against (B1)-(B4) before returning.
///
/// # Errors
///
/// [`CcqError::Synthesis`] when a span is more than one-dimensional
/// ("ambiguous"), the pairing is not a matching, no consistent global index
/// assignment exists, or the final verification fails.
pub fn synthesize_basis(cfg: &CoherentConfig, tol: Tolerance) -> Result<BlockBasis> {
    let f = cfg.num_fibers();
    let mut fiber_specs: Vec<SchemeSpectrum> = Vec::with_capacity(f);
    for i in 0..f {
        let sch = cfg.fiber_scheme(i)?;
        fiber_specs.push(scheme::spectrum(&sch, tol)?);
    }

    // Matched pairs per cross block (i < j).
    let mut matches: BTreeMap<(usize, usize), Vec<MatchedPair>> = BTreeMap::new();
    for i in 0..f {
        for j in i + 1..f {
            let info = cfg.block(i, j)?;
            let expected = info.index_count();
            let rels: Vec<RealMatrix> = (info.eps..=info.r)
                .map(|l| Ok(cfg.block_adjacency(i, j, l)?.to_real()))
                .collect::<Result<_>>()?;
            let ni = fiber_specs[i].idempotents.len();
            let nj = fiber_specs[j].idempotents.len();
            let mut found: Vec<MatchedPair> = Vec::new();
            for alpha in 0..ni {
                for beta in 0..nj {
                    let ea = &fiber_specs[i].idempotents[alpha];
                    let eb = &fiber_specs[j].idempotents[beta];
                    let cands: Vec<RealMatrix> =
                        rels.iter().map(|a| ea.mul(a).mul(eb)).collect();
                    let nc = cands.len();
                    let mut gram = RealMatrix::zeros(nc, nc);
                    for (u, cu) in cands.iter().enumerate() {
                        for (v, cv) in cands.iter().enumerate().skip(u) {
                            let g = cu.frob_inner(cv);
                            gram.set(u, v, g);
                            gram.set(v, u, g);
                        }
                    }
                    let eig = crate::matlin::sym_eig(&gram, tol)?;
                    let lam_max = eig.values[0];
                    let zero_floor = tol.bound(0.0) * tol.bound(0.0)
                        * (cfg.fiber_size(i) * cfg.fiber_size(j)) as f64;
                    if lam_max <= zero_floor {
                        continue; // (alpha, beta) not matched
                    }
                    let dim = eig.values.iter().filter(|&&l| l > 1e-6 * lam_max).count();
                    if dim > 1 {
                        return Err(CcqError::Synthesis(format!(
                            "basis synthesis ambiguous: block ({i},{j}) idempotent pair \
                             ({alpha},{beta}) spans a {dim}-dimensional space"
                        )));
                    }
                    // Representative: candidate of largest norm, normalized
                    // into a partial isometry.
                    let (best_idx, norm2) = cands
                        .iter()
                        .enumerate()
                        .map(|(k, c)| (k, c.frob_inner(c)))
                        .fold((0usize, 0.0f64), |acc, cur| {
                            if cur.1 > acc.1 {
                                cur
                            } else {
                                acc
                            }
                        });
                    let m_alpha = fiber_specs[i].multiplicities[alpha] as f64;
                    let e = cands[best_idx].scale(sqrt(m_alpha / norm2));
                    let left = e.mul(&e.transpose());
                    let res = max_abs_residual(&left, ea)?;
                    if !tol.passes(res, ea.max_abs()) {
                        return Err(CcqError::Synthesis(format!(
                            "block ({i},{j}) pair ({alpha},{beta}): normalized element is \
                             not a partial isometry (residual {res:e})"
                        )));
                    }
                    found.push(MatchedPair {
                        alpha,
                        beta,
                        mat: canonical_sign(&e),
                    });
                }
            }
            // The matched pairs must form a matching of the right size.
            let mut seen_a = BTreeSet::new();
            let mut seen_b = BTreeSet::new();
            for p in &found {
                if !seen_a.insert(p.alpha) || !seen_b.insert(p.beta) {
                    return Err(CcqError::Synthesis(format!(
                        "block ({i},{j}): idempotent pairing is not a matching (pair \
                         ({},{}) reuses an index)",
                        p.alpha, p.beta
                    )));
                }
            }
            if found.len() != expected {
                return Err(CcqError::Synthesis(format!(
                    "block ({i},{j}): found {} basis elements but the block has {} \
                     relations",
                    found.len(),
                    expected
                )));
            }
            matches.insert((i, j), found);
        }
    }

    // Union the pairing into components of (fiber, local index) nodes.
    let offsets: Vec<usize> = {
        let mut o = vec![0usize];
        for i in 0..f {
            o.push(o[i] + fiber_specs[i].idempotents.len());
        }
        o
    };
    let total = offsets[f];
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for (&(i, j), pairs) in &matches {
        for p in pairs {
            let a = find(&mut parent, offsets[i] + p.alpha);
            let b = find(&mut parent, offsets[j] + p.beta);
            parent[a] = b;
        }
    }
    let mut comp_nodes: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..f {
        for a in 0..fiber_specs[i].idempotents.len() {
            let root = find(&mut parent, offsets[i] + a);
            comp_nodes.entry(root).or_default().push((i, a));
        }
    }
    let mut comp_blocks: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (&(i, j), pairs) in &matches {
        for p in pairs {
            let root = find(&mut parent, offsets[i] + p.alpha);
            comp_blocks.entry(root).or_default().push((i, j));
        }
    }
    struct Comp {
        nodes: Vec<(usize, usize)>,
        blocks: Vec<(usize, usize)>,
        cap: usize,
    }
    let mut comps: Vec<Comp> = Vec::new();
    for (root, nodes) in comp_nodes {
        let mut fs = BTreeSet::new();
        for &(i, _) in &nodes {
            if !fs.insert(i) {
                return Err(CcqError::Synthesis(format!(
                    "fiber {i} has two idempotents forced to share a global index \
                     (component {nodes:?})"
                )));
            }
        }
        let blocks_of = comp_blocks.remove(&root).unwrap_or_default();
        let mut cap = usize::MAX;
        for &(i, _) in &nodes {
            cap = cap.min(cfg.block(i, i)?.r_tilde());
        }
        for &(i, j) in &blocks_of {
            cap = cap.min(cfg.block(i, j)?.r_tilde());
        }
        comps.push(Comp {
            nodes,
            blocks: blocks_of,
            cap,
        });
    }
    comps.sort_by(|a, b| a.nodes[0].cmp(&b.nodes[0]));

    // Backtracking: assign each component the lexicographically smallest
    // feasible global index. Per-fiber and per-block index sets must stay
    // duplicate-free; the caps plus a pigeonhole argument then force each
    // index set to be exactly {0..r_tilde}.
    let nassign = comps.len();
    let mut assign = vec![usize::MAX; nassign];
    let mut used_fiber: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); f];
    let mut used_block: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for key in matches.keys() {
        used_block.insert(*key, BTreeSet::new());
    }
    let mut budget = 1_000_000usize;
    fn backtrack(
        k: usize,
        comps: &[Comp],
        assign: &mut Vec<usize>,
        used_fiber: &mut Vec<BTreeSet<usize>>,
        used_block: &mut BTreeMap<(usize, usize), BTreeSet<usize>>,
        budget: &mut usize,
    ) -> bool {
        if k == comps.len() {
            return true;
        }
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        let comp = &comps[k];
        'candidate: for idx in 0..=comp.cap {
            for &(i, _) in &comp.nodes {
                if used_fiber[i].contains(&idx) {
                    continue 'candidate;
                }
            }
            for key in &comp.blocks {
                if used_block[key].contains(&idx) {
                    continue 'candidate;
                }
            }
            assign[k] = idx;
            for &(i, _) in &comp.nodes {
                used_fiber[i].insert(idx);
            }
            for key in &comp.blocks {
                used_block.get_mut(key).expect("block key").insert(idx);
            }
            if backtrack(k + 1, comps, assign, used_fiber, used_block, budget) {
                return true;
            }
            for &(i, _) in &comp.nodes {
                used_fiber[i].remove(&idx);
            }
            for key in &comp.blocks {
                used_block.get_mut(key).expect("block key").remove(&idx);
            }
            assign[k] = usize::MAX;
        }
        false
    }
    if !backtrack(
        0,
        &comps,
        &mut assign,
        &mut used_fiber,
        &mut used_block,
        &mut budget,
    ) {
        return Err(CcqError::Synthesis(
            "no consistent global index assignment for the idempotent pairing".into(),
        ));
    }

    // Map (fiber, local idempotent) -> global index.
    let mut global_of = vec![usize::MAX; total];
    for (k, comp) in comps.iter().enumerate() {
        for &(i, a) in &comp.nodes {
            global_of[offsets[i] + a] = assign[k];
        }
    }

    // Diagonal blocks: fiber idempotents reordered by global index.
    let mut basis: BTreeMap<(usize, usize), Vec<RealMatrix>> = BTreeMap::new();
    for i in 0..f {
        let count = fiber_specs[i].idempotents.len();
        let mut ordered = vec![RealMatrix::zeros(0, 0); count];
        for a in 0..count {
            ordered[global_of[offsets[i] + a]] = fiber_specs[i].idempotents[a].clone();
        }
        basis.insert((i, i), ordered);
    }

    // Cross elements grouped by global index: (l, i, j) -> matrix.
    let mut cross: BTreeMap<usize, BTreeMap<(usize, usize), RealMatrix>> = BTreeMap::new();
    for (&(i, j), pairs) in &matches {
        for p in pairs {
            let l = global_of[offsets[i] + p.alpha];
            cross.entry(l).or_default().insert((i, j), p.mat.clone());
        }
    }

    // Sign fixing per global index: the fiber graph of each index must have
    // clique components; signs on a BFS tree keep the largest-entry rule,
    // the rest are derived from (B4) path products.
    for (&l, edges) in cross.iter_mut() {
        let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(i, j) in edges.keys() {
            adj.entry(i).or_default().push(j);
            adj.entry(j).or_default().push(i);
        }
        for (&u, nbrs) in &adj {
            for (x, &v) in nbrs.iter().enumerate() {
                for &w in nbrs.iter().skip(x + 1) {
                    if !edges.contains_key(&(v.min(w), v.max(w))) {
                        return Err(CcqError::Synthesis(format!(
                            "index {l} appears in blocks ({u},{v}) and ({u},{w}) but not \
                             ({v},{w}); (B4) cannot hold"
                        )));
                    }
                }
            }
        }
        let fibers_in: Vec<usize> = adj.keys().copied().collect();
        let mut visited: BTreeSet<usize> = BTreeSet::new();
        for &start in &fibers_in {
            if visited.contains(&start) {
                continue;
            }
            // U[v] = E_l^{(start, v)}; the root entry is the diagonal
            // idempotent.
            let mut u_map: BTreeMap<usize, RealMatrix> = BTreeMap::new();
            u_map.insert(start, basis[&(start, start)][l].clone());
            visited.insert(start);
            let mut queue = vec![start];
            let mut tree_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
            while let Some(u) = queue.pop() {
                let mut nbrs = adj[&u].clone();
                nbrs.sort_unstable();
                for v in nbrs {
                    if visited.contains(&v) {
                        continue;
                    }
                    visited.insert(v);
                    let key = (u.min(v), u.max(v));
                    tree_edges.insert(key);
                    let e_uv = if u < v {
                        edges[&key].clone()
                    } else {
                        edges[&key].transpose()
                    };
                    let u_v = u_map[&u].mul(&e_uv);
                    u_map.insert(v, u_v);
                    queue.push(v);
                }
            }
            // Non-tree edges: match sign against the path product.
            let non_tree: Vec<(usize, usize)> = edges
                .keys()
                .filter(|&&(i, j)| {
                    u_map.contains_key(&i) && u_map.contains_key(&j) && !tree_edges.contains(&(i, j))
                })
                .copied()
                .collect();
            for key in non_tree {
                let expected = u_map[&key.0].transpose().mul(&u_map[&key.1]);
                let m = edges[&key].clone();
                let plus = max_abs_residual(&m, &expected)?;
                let minus = max_abs_residual(&m.scale(-1.0), &expected)?;
                let best = plus.min(minus);
                if !tol.passes(best, expected.max_abs()) {
                    return Err(CcqError::Synthesis(format!(
                        "index {l}: element of block {key:?} does not match the (B4) path \
                         product up to sign (residual {best:e})"
                    )));
                }
                if minus < plus {
                    edges.insert(key, m.scale(-1.0));
                }
            }
        }
    }

    // Assemble cross blocks (both orientations).
    for i in 0..f {
        for j in 0..f {
            if i == j {
                continue;
            }
            let key = (i.min(j), i.max(j));
            let count = cfg.block(i, j)?.index_count();
            let mut vecs: Vec<RealMatrix> = Vec::with_capacity(count);
            for l in 0..count {
                let stored = cross
                    .get(&l)
                    .and_then(|m| m.get(&key))
                    .ok_or_else(|| {
                        CcqError::Synthesis(format!(
                            "block ({i},{j}) is missing an element of global index {l}"
                        ))
                    })?;
                vecs.push(if i < j {
                    stored.clone()
                } else {
                    stored.transpose()
                });
            }
            basis.insert((i, j), vecs);
        }
    }

    let result = BlockBasis { blocks: basis };
    let report = verify_basis(cfg, &result, tol)?;
    if !report.pass {
        return Err(CcqError::Synthesis(format!(
            "synthesized basis failed verification: B1 {:.3e}, B2 {:.3e}, B3 {:.3e}, \
             B4 {:.3e}",
            report.b1_residual, report.b2_residual, report.b3_residual, report.b4_residual
        )));
    }
    Ok(result)
}

/// Verifies (B1)-(B4) for a basis, reporting the max residual per axiom.
///
/// (B4) is checked through three families that jointly imply it: diagonal
/// idempotent products `E_l^{(i,i)} E_m^{(i,i)} = delta E_l`, left/right
/// absorption `E_l^{(i,i)} E_l^{(i,j)} = E_l^{(i,j)} = E_l^{(i,j)} E_l^{(j,j)}`,
/// and same-index triple products `E_l^{(i,j)} E_l^{(j,h)} = E_l^{(i,h)}`
/// (compared against zero when block `(i,h)` lacks index `l`).
///
/// # Errors
///
/// Shape mismatches between the basis and the configuration.
pub fn verify_basis(cfg: &CoherentConfig, basis: &BlockBasis, tol: Tolerance) -> Result<BasisReport> {
    let f = cfg.num_fibers();
    // Shape checks.
    for i in 0..f {
        for j in 0..f {
            let vecs = basis.block(i, j)?;
            let expected = cfg.block(i, j)?.index_count();
            if vecs.len() != expected {
                return Err(CcqError::pre(format!(
                    "basis block ({i},{j}) has {} elements, expected {expected}",
                    vecs.len()
                )));
            }
            for (l, e) in vecs.iter().enumerate() {
                if e.rows() != cfg.fiber_size(i) || e.cols() != cfg.fiber_size(j) {
                    return Err(CcqError::pre(format!(
                        "basis element ({i},{j},{l}) has shape {}x{}, expected {}x{}",
                        e.rows(),
                        e.cols(),
                        cfg.fiber_size(i),
                        cfg.fiber_size(j)
                    )));
                }
            }
        }
    }

    let mut b1 = 0.0f64;
    let mut b2 = 0.0f64;
    let mut b3 = 0.0f64;
    let mut b4 = 0.0f64;
    let mut pass = true;
    let note = |residual: f64, magnitude: f64, out: &mut f64, tol: Tolerance, ok: &mut bool| {
        if residual > *out {
            *out = residual;
        }
        if !tol.passes(residual, magnitude) {
            *ok = false;
        }
    };

    for i in 0..f {
        for j in 0..f {
            let vecs = basis.block(i, j)?;
            let si = cfg.fiber_size(i) as f64;
            let sj = cfg.fiber_size(j) as f64;
            // B1.
            let j_scaled = RealMatrix::constant(
                cfg.fiber_size(i),
                cfg.fiber_size(j),
                1.0 / sqrt(si * sj),
            );
            let res = max_abs_residual(&vecs[0], &j_scaled)?;
            note(res, j_scaled.max_abs(), &mut b1, tol, &mut pass);
            // B3.
            let other = basis.block(j, i)?;
            for (l, e) in vecs.iter().enumerate() {
                let res = max_abs_residual(&e.transpose(), &other[l])?;
                note(res, e.max_abs(), &mut b3, tol, &mut pass);
            }
            // B2: the A's and E's must span the same space. The E's are
            // trace-orthogonal with norms m_l; the A's have disjoint 0/1
            // supports.
            let info = cfg.block(i, j)?;
            let adjacencies: Vec<RealMatrix> = (info.eps..=info.r)
                .map(|l| Ok(cfg.block_adjacency(i, j, l)?.to_real()))
                .collect::<Result<_>>()?;
            for a in &adjacencies {
                let mut rebuilt = RealMatrix::zeros(a.rows(), a.cols());
                for e in vecs {
                    let coeff = a.frob_inner(e) / e.frob_inner(e);
                    rebuilt = rebuilt.add(&e.scale(coeff));
                }
                let res = max_abs_residual(a, &rebuilt)?;
                note(res, 1.0, &mut b2, tol, &mut pass);
            }
            for e in vecs {
                let mut rebuilt = RealMatrix::zeros(e.rows(), e.cols());
                for a in &adjacencies {
                    let ones = a.entry_sum();
                    rebuilt = rebuilt.add(&a.scale(e.frob_inner(a) / ones));
                }
                let res = max_abs_residual(e, &rebuilt)?;
                note(res, e.max_abs(), &mut b2, tol, &mut pass);
            }
        }
    }

    // B4 family (a): diagonal orthogonality.
    for i in 0..f {
        let vecs = basis.block(i, i)?;
        for (l, el) in vecs.iter().enumerate() {
            for (m, em) in vecs.iter().enumerate() {
                let product = el.mul(em);
                let expected = if l == m {
                    el.clone()
                } else {
                    RealMatrix::zeros(el.rows(), el.cols())
                };
                let res = max_abs_residual(&product, &expected)?;
                note(res, el.max_abs(), &mut b4, tol, &mut pass);
            }
        }
    }
    // B4 family (b): absorption.
    for i in 0..f {
        for j in 0..f {
            if i == j {
                continue;
            }
            let vecs = basis.block(i, j)?;
            let di = basis.block(i, i)?;
            let dj = basis.block(j, j)?;
            for (l, e) in vecs.iter().enumerate() {
                let res_l = max_abs_residual(&di[l].mul(e), e)?;
                let res_r = max_abs_residual(&e.mul(&dj[l]), e)?;
                note(res_l.max(res_r), e.max_abs(), &mut b4, tol, &mut pass);
            }
        }
    }
    // B4 family (c): same-index triples.
    for i in 0..f {
        for j in 0..f {
            for h in 0..f {
                if i == j || j == h {
                    continue;
                }
                let left = basis.block(i, j)?;
                let right = basis.block(j, h)?;
                let target = basis.block(i, h)?;
                for l in 0..left.len().min(right.len()) {
                    let product = left[l].mul(&right[l]);
                    let expected = if l < target.len() {
                        target[l].clone()
                    } else {
                        RealMatrix::zeros(product.rows(), product.cols())
                    };
                    let res = max_abs_residual(&product, &expected)?;
                    note(res, left[l].max_abs(), &mut b4, tol, &mut pass);
                }
            }
        }
    }

    Ok(BasisReport {
        b1_residual: b1,
        b2_residual: b2,
        b3_residual: b3,
        b4_residual: b4,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Block spectrum
// ---------------------------------------------------------------------------

/// Spectral data of one block.
#[derive(Clone, Debug)]
pub struct BlockData {
    pub eps: usize,
    pub r_tilde: usize,
    /// `m_l` for `l = 0..=r_tilde` (integers; shared across blocks).
    pub multiplicities: Vec<usize>,
    /// `P[l][h-eps] = p_h(l)`: relation `h` expanded in the idempotents.
    pub p_matrix: RealMatrix,
    /// `Q[l-eps][h] = q_h(l)`: `sqrt(|X_i||X_j|) E_h = sum_l q_h(l) A_l`.
    pub q_matrix: RealMatrix,
    /// `krein[l]` is `B*_l` with `B*_l[m][n] = q_{l,m,n}`.
    pub krein: Vec<RealMatrix>,
    pub max_expansion_residual: f64,
}

/// Per-block spectral data of a verified basis.
#[derive(Clone, Debug)]
pub struct BlockSpectrum {
    pub blocks: BTreeMap<(usize, usize), BlockData>,
    /// Smallest Krein parameter across all blocks (reported, never an
    /// error).
    pub min_krein: f64,
}

impl BlockSpectrum {
    pub fn data(&self, i: usize, j: usize) -> Result<&BlockData> {
        self.blocks
            .get(&(i, j))
            .ok_or_else(|| CcqError::pre(format!("spectrum has no block ({i},{j})")))
    }

    /// Krein parameter `q_{l,m,n}^{(i,j)}`.
    pub fn q(&self, i: usize, j: usize, l: usize, m: usize, n: usize) -> Result<f64> {
        Ok(self.data(i, j)?.krein[l].get(m, n))
    }
}

/// Computes eigenmatrices, multiplicities, and Krein parameters per block.
///
/// # Errors
///
/// Multiplicity traces farther than `1e-6` from an integer or disagreeing
/// between the two fibers of a block; idempotent entries not constant on
/// relations; `PQ = sqrt(|X_i||X_j|) I` failures; Krein expansion residuals
/// above `tol` (naming the block and pair).
pub fn block_spectrum(
    cfg: &CoherentConfig,
    basis: &BlockBasis,
    tol: Tolerance,
) -> Result<BlockSpectrum> {
    let f = cfg.num_fibers();
    // Global multiplicities from the diagonal blocks.
    let mut fiber_mult: Vec<Vec<usize>> = Vec::with_capacity(f);
    for i in 0..f {
        let vecs = basis.block(i, i)?;
        let mut ms = Vec::with_capacity(vecs.len());
        for (l, e) in vecs.iter().enumerate() {
            let t = e.trace();
            let rounded = libm::round(t);
            if fabs(t - rounded) > 1e-6 {
                return Err(CcqError::tol(
                    format!("multiplicity of E_{l}^({i},{i}) (trace not near an integer)"),
                    fabs(t - rounded),
                    1e-6,
                ));
            }
            ms.push(rounded as usize);
        }
        fiber_mult.push(ms);
    }

    let mut blocks = BTreeMap::new();
    let mut min_krein = f64::INFINITY;
    for i in 0..f {
        for j in 0..f {
            let info = cfg.block(i, j)?;
            let vecs = basis.block(i, j)?;
            let count = info.index_count();
            let r_tilde = info.r_tilde();
            let s = sqrt((cfg.fiber_size(i) * cfg.fiber_size(j)) as f64);
            // Multiplicities must agree between the two fibers.
            let mut multiplicities = Vec::with_capacity(count);
            for l in 0..count {
                let mi = fiber_mult[i][l];
                let mj = fiber_mult[j][l];
                if mi != mj {
                    return Err(CcqError::tol(
                        format!(
                            "multiplicity of index {l} differs between fibers {i} ({mi}) \
                             and {j} ({mj})"
                        ),
                        (mi as f64 - mj as f64).abs(),
                        0.0,
                    ));
                }
                multiplicities.push(mi);
            }

            // Q: idempotent entries must be constant on each relation.
            let mut q_matrix = RealMatrix::zeros(count, count);
            let rels: Vec<IntMatrix> = (info.eps..=info.r)
                .map(|l| cfg.block_adjacency(i, j, l))
                .collect::<Result<_>>()?;
            for (h, e) in vecs.iter().enumerate() {
                for (row, a) in rels.iter().enumerate() {
                    let mut sum = 0.0f64;
                    let mut cnt = 0u64;
                    for x in 0..a.rows() {
                        for y in 0..a.cols() {
                            if a.get(x, y) != 0 {
                                sum += e.get(x, y);
                                cnt += 1;
                            }
                        }
                    }
                    let mean = sum / cnt as f64;
                    q_matrix.set(row, h, s * mean);
                    let mut dev = 0.0f64;
                    for x in 0..a.rows() {
                        for y in 0..a.cols() {
                            if a.get(x, y) != 0 {
                                let w = fabs(s * e.get(x, y) - s * mean);
                                if w > dev {
                                    dev = w;
                                }
                            }
                        }
                    }
                    if !tol.passes(dev, fabs(s * mean)) {
                        return Err(CcqError::tol(
                            format!(
                                "E_{h}^({i},{j}) is not constant on block relation \
                                 {}",
                                info.eps + row
                            ),
                            dev,
                            tol.bound(fabs(s * mean)),
                        ));
                    }
                }
            }
            // P via the trace form: tr(A_h (E_l)^T) = p_h(l) m_l.
            let mut p_matrix = RealMatrix::zeros(count, count);
            for (col, a) in rels.iter().enumerate() {
                let ar = a.to_real();
                for (l, e) in vecs.iter().enumerate() {
                    p_matrix.set(l, col, ar.frob_inner(e) / multiplicities[l] as f64);
                }
            }
            // PQ = QP = s I.
            let target = RealMatrix::identity(count).scale(s);
            for (name, m) in [
                ("PQ", &p_matrix.mul(&q_matrix)),
                ("QP", &q_matrix.mul(&p_matrix)),
            ] {
                let res = max_abs_residual(m, &target)?;
                if !tol.passes(res, s) {
                    return Err(CcqError::tol(
                        format!("{name} = sqrt(|X_{i}||X_{j}|) I on block ({i},{j})"),
                        res,
                        tol.bound(s),
                    ));
                }
            }
            // Krein parameters by least squares on the trace-orthogonal
            // E-basis.
            let mut krein = Vec::with_capacity(count);
            let mut max_exp = 0.0f64;
            for (l, el) in vecs.iter().enumerate() {
                let mut bl = RealMatrix::zeros(count, count);
                for (m, em) in vecs.iter().enumerate() {
                    let had = el.hadamard(em);
                    let mut rebuilt = RealMatrix::zeros(had.rows(), had.cols());
                    for (nn, en) in vecs.iter().enumerate() {
                        let q = s * had.frob_inner(en) / multiplicities[nn] as f64;
                        bl.set(m, nn, q);
                        if q < min_krein {
                            min_krein = q;
                        }
                        rebuilt = rebuilt.add(&en.scale(q / s));
                    }
                    let res = max_abs_residual(&rebuilt, &had)?;
                    if res > max_exp {
                        max_exp = res;
                    }
                    if !tol.passes(res, had.max_abs()) {
                        return Err(CcqError::tol(
                            format!(
                                "Krein expansion of E_{l} o E_{m} on block ({i},{j})"
                            ),
                            res,
                            tol.bound(had.max_abs()),
                        ));
                    }
                }
                krein.push(bl);
            }
            blocks.insert(
                (i, j),
                BlockData {
                    eps: info.eps,
                    r_tilde,
                    multiplicities,
                    p_matrix,
                    q_matrix,
                    krein,
                    max_expansion_residual: max_exp,
                },
            );
        }
    }
    Ok(BlockSpectrum { blocks, min_krein })
}

// ---------------------------------------------------------------------------
// Q-polynomial check
// ---------------------------------------------------------------------------

/// Per-block outcome of the three equivalent Q-polynomial conditions.
#[derive(Clone, Debug)]
pub struct BlockVerdict {
    /// Largest off-tridiagonal magnitude of `B*_1`.
    pub tridiag_residual: f64,
    /// Smallest super/sub-diagonal magnitude of `B*_1` (irreducibility
    /// margin).
    pub min_band: f64,
    /// Entrywise reconstruction residual of condition (1).
    pub cond1_residual: f64,
    /// Eigenvalue-interpolation residual of condition (2).
    pub cond2_residual: f64,
    pub recurrence_a: Vec<f64>,
    pub recurrence_b: Vec<f64>,
    pub recurrence_c: Vec<f64>,
    pub v_polys: Vec<FPoly>,
    pub cond1_pass: bool,
    pub cond2_pass: bool,
    pub cond3_pass: bool,
}

/// Result of [`q_polynomial_check`].
#[derive(Clone, Debug)]
pub struct QccVerdict {
    pub is_q_polynomial: bool,
    /// Global idempotent permutation realizing the structure (`ordering[h]`
    /// = original index playing the role of `E_h`); `None` when no ordering
    /// was found.
    pub ordering: Option<Vec<usize>>,
    /// Per-block reports (blocks with fewer than two idempotent indices are
    /// trivially satisfied and omitted). Under the found ordering when one
    /// exists, otherwise under the identity.
    pub blocks: BTreeMap<(usize, usize), BlockVerdict>,
    /// Minimum over tried orderings of the largest off-tridiagonal Krein
    /// magnitude (0 when Q-polynomial).
    pub best_violation: f64,
    pub orderings_tried: usize,
    pub truncated_search: bool,
    /// All three per-block condition checks returned the same verdict.
    pub conditions_agree: bool,
}

fn band_preserving_permutations(breakpoints: &BTreeSet<usize>, max_index: usize) -> Vec<Vec<usize>> {
    // Bands between consecutive breakpoints must be permuted internally;
    // index 0 is always its own band.
    let mut bands: Vec<Vec<usize>> = Vec::new();
    let mut start = 1usize;
    let mut points: Vec<usize> = breakpoints.iter().copied().filter(|&b| b >= 1).collect();
    points.push(max_index);
    points.sort_unstable();
    points.dedup();
    for &bp in &points {
        if bp >= start {
            bands.push((start..=bp).collect());
            start = bp + 1;
        }
    }
    // Cartesian product of per-band permutations, lexicographic order,
    // capped at MAX_ORDERING_CANDIDATES.
    let mut result: Vec<Vec<usize>> = vec![vec![0]];
    for band in bands {
        let perms = permutations_lex(&band);
        let mut next = Vec::with_capacity(result.len() * perms.len());
        'outer: for prefix in &result {
            for p in &perms {
                let mut combined = prefix.clone();
                combined.extend_from_slice(p);
                next.push(combined);
                if next.len() > MAX_ORDERING_CANDIDATES {
                    break 'outer;
                }
            }
        }
        result = next;
        if result.len() > MAX_ORDERING_CANDIDATES {
            break;
        }
    }
    result
}

fn permutations_lex(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (k, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(k);
        for mut tail in permutations_lex(&rest) {
            let mut v = vec![x];
            v.append(&mut tail);
            out.push(v);
            if out.len() > MAX_ORDERING_CANDIDATES {
                return out;
            }
        }
    }
    out
}

/// Largest off-tridiagonal magnitude of the permuted `B*_1` matrices over
/// all blocks, plus the smallest band magnitude.
fn tridiag_stats(
    spec: &BlockSpectrum,
    perm: &[usize],
) -> (f64, f64) {
    let mut worst_off = 0.0f64;
    let mut min_band = f64::INFINITY;
    for data in spec.blocks.values() {
        let count = data.multiplicities.len();
        if count < 2 {
            continue;
        }
        for m in 0..count {
            for nvar in 0..count {
                let q = data.krein[perm[1]].get(perm[m], perm[nvar]);
                if m.abs_diff(nvar) > 1 {
                    if fabs(q) > worst_off {
                        worst_off = fabs(q);
                    }
                } else if m.abs_diff(nvar) == 1 && fabs(q) < min_band {
                    min_band = fabs(q);
                }
            }
        }
    }
    if !min_band.is_finite() {
        min_band = 0.0;
    }
    (worst_off, min_band)
}

/// Checks the three equivalent Q-polynomial conditions per block; when
/// `search` is set and the given order fails, global band-preserving
/// permutations of the idempotent indices (at most 8! of them, identity
/// first, lexicographic order) are tried.
pub fn q_polynomial_check(
    cfg: &CoherentConfig,
    basis: &BlockBasis,
    spec: &BlockSpectrum,
    search: bool,
    tol: Tolerance,
) -> Result<QccVerdict> {
    let max_index = spec
        .blocks
        .values()
        .map(|d| d.multiplicities.len() - 1)
        .max()
        .unwrap_or(0);
    let krein_scale = spec
        .blocks
        .values()
        .flat_map(|d| d.krein.iter())
        .fold(0.0f64, |m, k| m.max(k.max_abs()));

    let identity: Vec<usize> = (0..=max_index).collect();
    let candidates: Vec<Vec<usize>> = if search {
        let breakpoints: BTreeSet<usize> = spec
            .blocks
            .values()
            .map(|d| d.multiplicities.len() - 1)
            .collect();
        band_preserving_permutations(&breakpoints, max_index)
    } else {
        vec![identity.clone()]
    };
    let truncated = candidates.len() > MAX_ORDERING_CANDIDATES;
    let candidates: Vec<Vec<usize>> = candidates
        .into_iter()
        .take(MAX_ORDERING_CANDIDATES)
        .collect();

    // Blocks with a single idempotent index are vacuously fine; when no
    // block has two or more, any order works.
    let nontrivial = spec.blocks.values().any(|d| d.multiplicities.len() >= 2);
    let mut best_violation = f64::INFINITY;
    let mut chosen: Option<Vec<usize>> = None;
    let mut tried = 0usize;
    for perm in &candidates {
        tried += 1;
        if !nontrivial {
            best_violation = 0.0;
            chosen = Some(perm.clone());
            break;
        }
        let (worst_off, min_band) = tridiag_stats(spec, perm);
        if worst_off < best_violation {
            best_violation = worst_off;
        }
        let off_ok = tol.passes(worst_off, krein_scale);
        let band_ok = !tol.passes(min_band, krein_scale); // bands must be significant
        if off_ok && band_ok {
            chosen = Some(perm.clone());
            break;
        }
    }

    let eval_perm = chosen.clone().unwrap_or_else(|| identity.clone());
    let mut blocks = BTreeMap::new();
    let mut all1 = true;
    let mut all2 = true;
    let mut all3 = true;
    for (&(i, j), data) in &spec.blocks {
        let count = data.multiplicities.len();
        if count < 2 {
            continue;
        }
        let d = count - 1; // r_tilde
        let s = sqrt((cfg.fiber_size(i) * cfg.fiber_size(j)) as f64);
        let perm = &eval_perm;
        // Permuted B*_1.
        let mut b1 = RealMatrix::zeros(count, count);
        for m in 0..count {
            for nvar in 0..count {
                b1.set(m, nvar, data.krein[perm[1]].get(perm[m], perm[nvar]));
            }
        }
        let mut tridiag_residual = 0.0f64;
        let mut min_band = f64::INFINITY;
        for m in 0..count {
            for nvar in 0..count {
                let q = fabs(b1.get(m, nvar));
                if m.abs_diff(nvar) > 1 && q > tridiag_residual {
                    tridiag_residual = q;
                }
                if m.abs_diff(nvar) == 1 && q < min_band {
                    min_band = q;
                }
            }
        }
        if !min_band.is_finite() {
            min_band = 0.0;
        }
        let cond3_pass =
            tol.passes(tridiag_residual, krein_scale) && !tol.passes(min_band, krein_scale);

        // Recurrence coefficients read from B*_1: row h gives
        // (b_{h-1}, a_h, c_{h+1}).
        let rec_a: Vec<f64> = (0..count).map(|h| b1.get(h, h)).collect();
        let rec_b: Vec<f64> = (0..d).map(|h| b1.get(h + 1, h)).collect();
        let rec_c: Vec<f64> = (1..count).map(|h| b1.get(h - 1, h)).collect();
        let tt_b: Vec<f64> = (0..d.saturating_sub(1)).map(|k| b1.get(k + 1, k)).collect();
        let tt_a: Vec<f64> = (0..d).map(|h| b1.get(h, h)).collect();
        let tt_c: Vec<f64> = (0..d).map(|h| b1.get(h, h + 1)).collect();
        let (v_polys, cond1_residual, cond2_residual) = match three_term(&tt_b, &tt_a, &tt_c) {
            Ok(vs) => {
                // Condition (1): entrywise reconstruction.
                let e1 = &basis.block(i, j)?[perm[1]];
                let mut res1 = 0.0f64;
                for h in 0..count {
                    let eh = &basis.block(i, j)?[perm[h]];
                    let mut rebuilt = RealMatrix::zeros(e1.rows(), e1.cols());
                    for x in 0..e1.rows() {
                        for y in 0..e1.cols() {
                            rebuilt.set(x, y, vs[h].eval(s * e1.get(x, y)) / s);
                        }
                    }
                    let r = max_abs_residual(&rebuilt, eh)?;
                    if r > res1 {
                        res1 = r;
                    }
                }
                // Condition (2): q_h(l) = v_h(theta_l).
                let mut res2 = 0.0f64;
                for row in 0..count {
                    let theta = data.q_matrix.get(row, perm[1]);
                    for h in 0..count {
                        let want = data.q_matrix.get(row, perm[h]);
                        let got = vs[h].eval(theta);
                        let r = fabs(want - got);
                        if r > res2 {
                            res2 = r;
                        }
                    }
                }
                (vs, res1, res2)
            }
            Err(_) => (Vec::new(), f64::INFINITY, f64::INFINITY),
        };
        let e_scale = 1.0;
        let cond1_pass = cond1_residual.is_finite() && tol.passes(cond1_residual, e_scale);
        let cond2_pass = cond2_residual.is_finite() && tol.passes(cond2_residual, krein_scale);
        all1 &= cond1_pass;
        all2 &= cond2_pass;
        all3 &= cond3_pass;
        blocks.insert(
            (i, j),
            BlockVerdict {
                tridiag_residual,
                min_band,
                cond1_residual,
                cond2_residual,
                recurrence_a: rec_a,
                recurrence_b: rec_b,
                recurrence_c: rec_c,
                v_polys,
                cond1_pass,
                cond2_pass,
                cond3_pass,
            },
        );
    }

    let is_q_polynomial = chosen.is_some() && all1 && all2 && all3;
    let conditions_agree = (all1 == all2) && (all2 == all3);
    Ok(QccVerdict {
        is_q_polynomial,
        ordering: if is_q_polynomial { chosen } else { None },
        blocks,
        best_violation: if best_violation.is_finite() {
            best_violation
        } else {
            0.0
        },
        orderings_tried: tried,
        truncated_search: truncated,
        conditions_agree,
    })
}

// ---------------------------------------------------------------------------
// Parameter identities
// ---------------------------------------------------------------------------

/// Outcome of one identity family over all admissible index tuples.
#[derive(Clone, Debug)]
pub struct IdentityReport {
    pub name: &'static str,
    pub tuples: usize,
    pub max_residual: f64,
    /// Exact identities must hold with residual 0.
    pub exact: bool,
    pub pass: bool,
}

struct IdentityChecker<'a> {
    cfg: &'a CoherentConfig,
    spec: &'a BlockSpectrum,
    tol: Tolerance,
    reports: Vec<IdentityReport>,
}

impl<'a> IdentityChecker<'a> {
    fn push_exact(&mut self, name: &'static str, tuples: usize, max_abs_diff: i64) {
        self.reports.push(IdentityReport {
            name,
            tuples,
            max_residual: max_abs_diff as f64,
            exact: true,
            pass: max_abs_diff == 0,
        });
    }

    fn push_real(&mut self, name: &'static str, tuples: usize, residual: f64, scale: f64) {
        self.reports.push(IdentityReport {
            name,
            tuples,
            max_residual: residual,
            exact: false,
            pass: self.tol.passes(residual, scale),
        });
    }

    fn size(&self, i: usize) -> f64 {
        self.cfg.fiber_size(i) as f64
    }

    fn p_int(&self, ijh: (usize, usize, usize), lmn: (usize, usize, usize)) -> i64 {
        self.cfg
            .tensor()
            .p(self.cfg, ijh, lmn)
            .expect("admissible tuple")
    }

    fn k(&self, i: usize, j: usize, l: usize) -> i64 {
        self.cfg
            .block(i, j)
            .and_then(|b| b.valency(l))
            .expect("admissible valency")
    }

    fn mult(&self, i: usize, j: usize, l: usize) -> f64 {
        self.spec.blocks[&(i, j)].multiplicities[l] as f64
    }

    /// `q_h^{(i,j)}(l)` with `l` a nominal relation index.
    fn qe(&self, i: usize, j: usize, l: usize, h: usize) -> f64 {
        let data = &self.spec.blocks[&(i, j)];
        data.q_matrix.get(l - data.eps, h)
    }

    /// `p_h^{(i,j)}(l)` with `h` a nominal relation index, `l` an idempotent.
    fn pe(&self, i: usize, j: usize, l: usize, h: usize) -> f64 {
        let data = &self.spec.blocks[&(i, j)];
        data.p_matrix.get(l, h - data.eps)
    }

    fn qq(&self, i: usize, j: usize, l: usize, m: usize, n: usize) -> f64 {
        self.spec.blocks[&(i, j)].krein[l].get(m, n)
    }

    fn rel_range(&self, i: usize, j: usize) -> core::ops::RangeInclusive<usize> {
        let b = &self.cfg.block(i, j).expect("block");
        b.eps..=b.r
    }

    fn idx_count(&self, i: usize, j: usize) -> usize {
        self.cfg.block(i, j).expect("block").index_count()
    }
}

/// Evaluates the full battery of parameter identities; failures appear in
/// the report, never as errors.
pub fn verify_parameter_identities(
    cfg: &CoherentConfig,
    basis: &BlockBasis,
    spec: &BlockSpectrum,
    tol: Tolerance,
) -> Vec<IdentityReport> {
    let f = cfg.num_fibers();
    let mut c = IdentityChecker {
        cfg,
        spec,
        tol,
        reports: Vec::new(),
    };

    // --- Exact identities on the intersection tensor ---
    // (1) p_{0,m,n}^{(i,i,h)} = delta_{m,n}
    {
        let (mut tuples, mut worst) = (0usize, 0i64);
        for i in 0..f {
            for h in 0..f {
                for m in c.rel_range(i, h) {
                    for nvar in c.rel_range(i, h) {
                        let want = i64::from(m == nvar);
                        let got = c.p_int((i, i, h), (0, m, nvar));
                        worst = worst.max((got - want).abs());
                        tuples += 1;
                    }
                }
            }
        }
        c.push_exact("p-unit-left", tuples, worst);
    }
    // (2) p_{l,0,n}^{(i,j,j)} = delta_{l,n}
    {
        let (mut tuples, mut worst) = (0usize, 0i64);
        for i in 0..f {
            for j in 0..f {
                for l in c.rel_range(i, j) {
                    for nvar in c.rel_range(i, j) {
                        let want = i64::from(l == nvar);
                        let got = c.p_int((i, j, j), (l, 0, nvar));
                        worst = worst.max((got - want).abs());
                        tuples += 1;
                    }
                }
            }
        }
        c.push_exact("p-unit-right", tuples, worst);
    }
    // (3) p_{l,m,0}^{(i,j,i)} = delta_{l,m} k_l^{(i,j)}
    {
        let (mut tuples, mut worst) = (0usize, 0i64);
        for i in 0..f {
            for j in 0..f {
                for l in c.rel_range(i, j) {
                    for m in c.rel_range(j, i) {
                        let want = if l == m { c.k(i, j, l) } else { 0 };
                        let got = c.p_int((i, j, i), (l, m, 0));
                        worst = worst.max((got - want).abs());
                        tuples += 1;
                    }
                }
            }
        }
        c.push_exact("p-transpose-valency", tuples, worst);
    }
    // (4) p_{l,m,n}^{(i,j,h)} = p_{m,l,n}^{(h,j,i)}
    {
        let (mut tuples, mut worst) = (0usize, 0i64);
        for i in 0..f {
            for j in 0..f {
                for h in 0..f {
                    for l in c.rel_range(i, j) {
                        for m in c.rel_range(j, h) {
                            for nvar in c.rel_range(i, h) {
                                let lhs = c.p_int((i, j, h), (l, m, nvar));
                                let rhs = c.p_int((h, j, i), (m, l, nvar));
                                worst = worst.max((lhs - rhs).abs());
                                tuples += 1;
                            }
                        }
                    }
                }
            }
        }
        c.push_exact("p-reverse-symmetry", tuples, worst);
    }
    // (5) sum_m p_{l,m,n}^{(i,j,h)} = k_l^{(i,j)}
    {
        let (mut tuples, mut worst) = (0usize, 0i64);
        for i in 0..f {
            for j in 0..f {
                for h in 0..f {
                    for l in c.rel_range(i, j) {
                        for nvar in c.rel_range(i, h) {
                            let total: i64 = c
                                .rel_range(j, h)
                                .map(|m| c.p_int((i, j, h), (l, m, nvar)))
                                .sum();
                            worst = worst.max((total - c.k(i, j, l)).abs());
                            tuples += 1;
                        }
                    }
                }
            }
        }
        c.push_exact("p-row-sum", tuples, worst);
    }
    // (6) |X_i| k_n^{(i,j)} p_{l,m,n}^{(i,h,j)} = |X_j| k_m^{(j,h)} p_{n,l,m}^{(j,i,h)}
    //     = |X_h| k_l^{(h,i)} p_{m,n,l}^{(h,j,i)}
    {
        let (mut tuples, mut worst) = (0usize, 0i64);
        for i in 0..f {
            for j in 0..f {
                for h in 0..f {
                    for l in c.rel_range(i, h) {
                        for m in c.rel_range(h, j) {
                            for nvar in c.rel_range(i, j) {
                                let t1 = cfg.fiber_size(i) as i64
                                    * c.k(i, j, nvar)
                                    * c.p_int((i, h, j), (l, m, nvar));
                                let t2 = cfg.fiber_size(j) as i64
                                    * c.k(j, h, m)
                                    * c.p_int((j, i, h), (nvar, l, m));
                                let t3 = cfg.fiber_size(h) as i64
                                    * c.k(h, i, l)
                                    * c.p_int((h, j, i), (m, nvar, l));
                                worst = worst.max((t1 - t2).abs().max((t1 - t3).abs()));
                                tuples += 1;
                            }
                        }
                    }
                }
            }
        }
        c.push_exact("p-size-balance", tuples, worst);
    }

    // --- tau identities (tau = sum of entries) ---
    {
        let (mut tuples, mut worst) = (0usize, 0i64);
        for i in 0..f {
            for j in 0..f {
                for l in c.rel_range(i, j) {
                    let a = cfg.block_adjacency(i, j, l).expect("block adjacency");
                    let got = a.entry_sum().expect("no overflow");
                    let want = cfg.fiber_size(i) as i64 * c.k(i, j, l);
                    worst = worst.max((got - want).abs());
                    tuples += 1;
                }
            }
        }
        c.push_exact("tau-adjacency", tuples, worst);
    }
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                let s = sqrt((cfg.fiber_size(i) * cfg.fiber_size(j)) as f64);
                for (l, e) in basis.block(i, j).expect("block").iter().enumerate() {
                    let want = if l == 0 { s } else { 0.0 };
                    let got = e.entry_sum();
                    worst = worst.max(fabs(got - want));
                    scale = scale.max(fabs(want));
                    tuples += 1;
                }
            }
        }
        c.push_real("tau-idempotent", tuples, worst, scale);
    }

    // --- Eigenmatrix identities ---
    // p-first-row: p_l(0) = sqrt(|X_i|/|X_j|) k_l
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                for l in c.rel_range(i, j) {
                    let want = sqrt(c.size(i) / c.size(j)) * c.k(i, j, l) as f64;
                    let got = c.pe(i, j, 0, l);
                    worst = worst.max(fabs(got - want));
                    scale = scale.max(fabs(want));
                    tuples += 1;
                }
            }
        }
        c.push_real("p-first-row", tuples, worst, scale);
    }
    // q-first-column: q_0(l) = 1
    {
        let (mut tuples, mut worst) = (0usize, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                for l in c.rel_range(i, j) {
                    worst = worst.max(fabs(c.qe(i, j, l, 0) - 1.0));
                    tuples += 1;
                }
            }
        }
        c.push_real("q-first-column", tuples, worst, 1.0);
    }
    // pq-entry-duality: q_h(l) sqrt(|X_i|) k_l = p_l(h) sqrt(|X_j|) m_h
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                for l in c.rel_range(i, j) {
                    for h in 0..c.idx_count(i, j) {
                        let lhs = c.qe(i, j, l, h) * sqrt(c.size(i)) * c.k(i, j, l) as f64;
                        let rhs = c.pe(i, j, h, l) * sqrt(c.size(j)) * c.mult(i, j, h);
                        worst = worst.max(fabs(lhs - rhs));
                        scale = scale.max(fabs(lhs).max(fabs(rhs)));
                        tuples += 1;
                    }
                }
            }
        }
        c.push_real("pq-entry-duality", tuples, worst, scale);
    }
    // p-orthogonality-rows: sum_nu (1/k_nu) p_nu(h) p_nu(l) = |X_i| delta_{h,l} / m_l
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                let count = c.idx_count(i, j);
                for h in 0..count {
                    for l in 0..count {
                        let total: f64 = c
                            .rel_range(i, j)
                            .map(|nu| {
                                c.pe(i, j, h, nu) * c.pe(i, j, l, nu) / c.k(i, j, nu) as f64
                            })
                            .sum();
                        let want = if h == l {
                            c.size(i) / c.mult(i, j, l)
                        } else {
                            0.0
                        };
                        worst = worst.max(fabs(total - want));
                        scale = scale.max(fabs(want));
                        tuples += 1;
                    }
                }
            }
        }
        c.push_real("p-orthogonality-rows", tuples, worst, scale);
    }
    // p-orthogonality-cols: sum_nu m_nu p_h(nu) p_l(nu) = |X_i| k_l delta_{h,l}
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                for h in c.rel_range(i, j) {
                    for l in c.rel_range(i, j) {
                        let total: f64 = (0..c.idx_count(i, j))
                            .map(|nu| c.mult(i, j, nu) * c.pe(i, j, nu, h) * c.pe(i, j, nu, l))
                            .sum();
                        let want = if h == l {
                            c.size(i) * c.k(i, j, l) as f64
                        } else {
                            0.0
                        };
                        worst = worst.max(fabs(total - want));
                        scale = scale.max(fabs(want));
                        tuples += 1;
                    }
                }
            }
        }
        c.push_real("p-orthogonality-cols", tuples, worst, scale);
    }
    // pq-inverse: PQ = QP = sqrt(|X_i||X_j|) I
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                let data = &spec.blocks[&(i, j)];
                let s = sqrt(c.size(i) * c.size(j));
                let count = data.multiplicities.len();
                let target = RealMatrix::identity(count).scale(s);
                for m in [
                    data.p_matrix.mul(&data.q_matrix),
                    data.q_matrix.mul(&data.p_matrix),
                ] {
                    let res = max_abs_residual(&m, &target).expect("shapes");
                    worst = worst.max(res);
                    scale = scale.max(s);
                    tuples += 1;
                }
            }
        }
        c.push_real("pq-inverse", tuples, worst, scale);
    }

    // --- Krein identities ---
    // q-unit-left: q_{0,m,n} = delta_{m,n}; q-unit-right: q_{l,0,n} = delta_{l,n};
    // q-transpose-multiplicity: q_{l,m,0} = delta_{l,m} m_l; q-commutativity: q_{l,m,n} = q_{m,l,n}
    {
        let (mut t1, mut w1) = (0usize, 0.0f64);
        let (mut t2, mut w2) = (0usize, 0.0f64);
        let (mut t3, mut w3, mut s3) = (0usize, 0.0f64, 0.0f64);
        let (mut t4, mut w4) = (0usize, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                let count = c.idx_count(i, j);
                for l in 0..count {
                    for m in 0..count {
                        for nvar in 0..count {
                            let q = c.qq(i, j, l, m, nvar);
                            if l == 0 {
                                w1 = w1.max(fabs(q - f64::from(u8::from(m == nvar))));
                                t1 += 1;
                            }
                            if m == 0 {
                                w2 = w2.max(fabs(q - f64::from(u8::from(l == nvar))));
                                t2 += 1;
                            }
                            if nvar == 0 {
                                let want = if l == m { c.mult(i, j, l) } else { 0.0 };
                                w3 = w3.max(fabs(q - want));
                                s3 = s3.max(fabs(want));
                                t3 += 1;
                            }
                            w4 = w4.max(fabs(q - c.qq(i, j, m, l, nvar)));
                            t4 += 1;
                        }
                    }
                }
            }
        }
        c.push_real("q-unit-left", t1, w1, 1.0);
        c.push_real("q-unit-right", t2, w2, 1.0);
        c.push_real("q-transpose-multiplicity", t3, w3, s3);
        c.push_real("q-commutativity", t4, w4, 1.0);
    }
    // q-block-transpose: q^{(i,j)} = q^{(j,i)}
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                let count = c.idx_count(i, j);
                for l in 0..count {
                    for m in 0..count {
                        for nvar in 0..count {
                            let a = c.qq(i, j, l, m, nvar);
                            let b = c.qq(j, i, l, m, nvar);
                            worst = worst.max(fabs(a - b));
                            scale = scale.max(fabs(a));
                            tuples += 1;
                        }
                    }
                }
            }
        }
        c.push_real("q-block-transpose", tuples, worst, scale);
    }
    // q-multiplicity-balance: m_n q_{l,l',n} = m_{l'} q_{n,l,l'} = m_l q_{l',n,l}
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                let count = c.idx_count(i, j);
                for l in 0..count {
                    for lp in 0..count {
                        for nvar in 0..count {
                            let a = c.mult(i, j, nvar) * c.qq(i, j, l, lp, nvar);
                            let b = c.mult(i, j, lp) * c.qq(i, j, nvar, l, lp);
                            let d = c.mult(i, j, l) * c.qq(i, j, lp, nvar, l);
                            worst = worst.max(fabs(a - b).max(fabs(a - d)));
                            scale = scale.max(fabs(a));
                            tuples += 1;
                        }
                    }
                }
            }
        }
        c.push_real("q-multiplicity-balance", tuples, worst, scale);
    }
    // q-associativity: sum_a q_{m,n,a} q_{l,a,b} = sum_a q_{l,m,a} q_{n,a,b}
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                let count = c.idx_count(i, j);
                for l in 0..count {
                    for m in 0..count {
                        for nvar in 0..count {
                            for b in 0..count {
                                let lhs: f64 = (0..count)
                                    .map(|a| c.qq(i, j, m, nvar, a) * c.qq(i, j, l, a, b))
                                    .sum();
                                let rhs: f64 = (0..count)
                                    .map(|a| c.qq(i, j, l, m, a) * c.qq(i, j, nvar, a, b))
                                    .sum();
                                worst = worst.max(fabs(lhs - rhs));
                                scale = scale.max(fabs(lhs));
                                tuples += 1;
                            }
                        }
                    }
                }
            }
        }
        c.push_real("q-associativity", tuples, worst, scale);
    }

    // --- Triple-sum formulas ---
    // krein-triple-sum: q_{l,l',n} = (sqrt(|X_i||X_j|) m_l m_{l'} / |X_i|^2)
    //          sum_nu (1/k_nu^2) p_nu(l) p_nu(l') p_nu(n)
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                let count = c.idx_count(i, j);
                for l in 0..count {
                    for lp in 0..count {
                        for nvar in 0..count {
                            let pref = sqrt(c.size(i) * c.size(j)) * c.mult(i, j, l)
                                * c.mult(i, j, lp)
                                / (c.size(i) * c.size(i));
                            let total: f64 = c
                                .rel_range(i, j)
                                .map(|nu| {
                                    let k = c.k(i, j, nu) as f64;
                                    c.pe(i, j, l, nu) * c.pe(i, j, lp, nu) * c.pe(i, j, nvar, nu)
                                        / (k * k)
                                })
                                .sum();
                            let want = c.qq(i, j, l, lp, nvar);
                            worst = worst.max(fabs(pref * total - want));
                            scale = scale.max(fabs(want));
                            tuples += 1;
                        }
                    }
                }
            }
        }
        c.push_real("krein-triple-sum", tuples, worst, scale);
    }
    // p-from-q-triple-sum: p_{l,m,n}^{(i,j,h)} = (k_l^{(i,j)} k_m^{(j,h)} / |X_h|)
    //          sum_nu (1/m_nu^2) q_nu(l) q_nu(m) q_nu(n)
    {
        let (mut tuples, mut worst, mut scale) = (0usize, 0.0f64, 0.0f64);
        for i in 0..f {
            for j in 0..f {
                for h in 0..f {
                    let nu_max = c
                        .idx_count(i, j)
                        .min(c.idx_count(j, h))
                        .min(c.idx_count(h, i));
                    for l in c.rel_range(i, j) {
                        for m in c.rel_range(j, h) {
                            for nvar in c.rel_range(i, h) {
                                let pref =
                                    (c.k(i, j, l) * c.k(j, h, m)) as f64 / c.size(h);
                                let total: f64 = (0..nu_max)
                                    .map(|nu| {
                                        let mv = c.mult(i, j, nu);
                                        c.qe(i, j, l, nu) * c.qe(j, h, m, nu)
                                            * c.qe(h, i, nvar, nu)
                                            / (mv * mv)
                                    })
                                    .sum();
                                let want = c.p_int((i, j, h), (l, m, nvar)) as f64;
                                worst = worst.max(fabs(pref * total - want));
                                scale = scale.max(fabs(want));
                                tuples += 1;
                            }
                        }
                    }
                }
            }
        }
        c.push_real("p-from-q-triple-sum", tuples, worst, scale);
    }

    c.reports
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{cycle_partition, hamming2_partition};

    fn pentagon_class(a: usize, b: usize) -> usize {
        let d = (a as i64 - b as i64).rem_euclid(5) as usize;
        d.min(5 - d)
    }

    /// Two disjoint pentagon copies with all cross relations: the 2nd power
    /// of the pentagon scheme, built directly.
    pub(crate) fn pentagon_power_partition() -> RelationPartition {
        let n = 10usize;
        let mut labels = vec![0u16; n * n];
        for x in 0..n {
            for y in 0..n {
                let (i, j) = (x / 5, y / 5);
                let cls = pentagon_class(x % 5, y % 5);
                labels[x * n + y] = ((i * 2 + j) * 3 + cls) as u16;
            }
        }
        RelationPartition::new(n, labels).unwrap()
    }

    #[test]
    fn scheme_is_a_one_fiber_config() {
        let cfg = validate_config(&cycle_partition(5)).unwrap();
        assert_eq!(cfg.num_fibers(), 1);
        assert_eq!(cfg.type_matrix(), vec![vec![3]]);
        let block = cfg.block(0, 0).unwrap();
        assert_eq!(block.eps, 0);
        assert_eq!(block.valencies, vec![1, 2, 2]);
    }

    #[test]
    fn pentagon_power_structure() {
        let cfg = validate_config(&pentagon_power_partition()).unwrap();
        assert_eq!(cfg.num_fibers(), 2);
        assert_eq!(cfg.type_matrix(), vec![vec![3, 3], vec![3, 3]]);
        let cross = cfg.block(0, 1).unwrap();
        assert_eq!(cross.eps, 1);
        assert_eq!(cross.valencies, vec![1, 2, 2]);
        // Intersection tensor agrees with exact matrix products.
        verify_tensor_by_products(&cfg).unwrap();
        // Restriction to one fiber recovers the pentagon.
        let sub = restrict_to_fibers(&cfg, &[0]).unwrap();
        assert_eq!(sub.num_fibers(), 1);
        assert_eq!(sub.type_matrix(), vec![vec![3]]);
    }

    #[test]
    fn merged_heptagon_relations_rejected() {
        // Fusing distances 1 and 2 of the 7-cycle breaks the intersection
        // numbers: the fused relation covers pairs with different counts.
        let part = cycle_partition(7);
        let labels: Vec<u16> = part
            .labels()
            .iter()
            .map(|&l| match l {
                2 => 1,
                3 => 2,
                other => other,
            })
            .collect();
        let merged = RelationPartition::new(7, labels).unwrap();
        match validate_config(&merged) {
            Err(CcqError::Axioms(vs)) => {
                assert!(vs.iter().any(|v| v.axiom == "config(4)"));
            }
            other => panic!("expected axiom violations, got {other:?}"),
        }
    }

    #[test]
    fn parity_fusion_of_the_cube_is_a_valid_scheme() {
        // Fusing distances 1 and 3 of H(3,2) gives the group-divisible
        // scheme of K_{4,4}: the validator must accept it.
        let part = hamming2_partition(3);
        let labels: Vec<u16> = part
            .labels()
            .iter()
            .map(|&l| if l == 3 { 1 } else { l })
            .collect();
        let merged = RelationPartition::new(8, labels).unwrap();
        let cfg = validate_config(&merged).unwrap();
        assert_eq!(cfg.block(0, 0).unwrap().valencies, vec![1, 4, 3]);
    }

    #[test]
    fn directed_triangle_is_unsupported() {
        // Cyclic group Z_3: a valid coherent configuration whose single
        // fiber is a non-symmetric scheme.
        let labels = vec![0u16, 1, 2, 2, 0, 1, 1, 2, 0];
        let part = RelationPartition::new(3, labels).unwrap();
        match validate_config(&part) {
            Err(CcqError::Unsupported(_)) => {}
            other => panic!("expected unsupported rejection, got {other:?}"),
        }
    }

    #[test]
    fn one_fiber_basis_is_the_scheme_idempotents() {
        let cfg = validate_config(&cycle_partition(5)).unwrap();
        let tol = Tolerance::default();
        let basis = synthesize_basis(&cfg, tol).unwrap();
        let sch = scheme::validate_scheme(&cycle_partition(5)).unwrap();
        let spec = scheme::spectrum(&sch, tol).unwrap();
        for (l, e) in basis.block(0, 0).unwrap().iter().enumerate() {
            assert!(max_abs_residual(e, &spec.idempotents[l]).unwrap() < 1e-10);
        }
        let report = verify_basis(&cfg, &basis, tol).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn pentagon_power_basis_is_the_tensor_construction() {
        let cfg = validate_config(&pentagon_power_partition()).unwrap();
        let tol = Tolerance::default();
        let basis = synthesize_basis(&cfg, tol).unwrap();
        let report = verify_basis(&cfg, &basis, tol).unwrap();
        assert!(report.pass, "report {report:?}");
        // Cross elements must be the fiber idempotents placed off-diagonal.
        let sch = scheme::validate_scheme(&cycle_partition(5)).unwrap();
        let spec = scheme::spectrum(&sch, tol).unwrap();
        for (l, e) in basis.block(0, 1).unwrap().iter().enumerate() {
            assert!(
                max_abs_residual(e, &spec.idempotents[l]).unwrap() < 1e-9,
                "cross element {l}"
            );
        }
    }

    #[test]
    fn pentagon_power_block_spectrum_and_verdict() {
        let cfg = validate_config(&pentagon_power_partition()).unwrap();
        let tol = Tolerance::default();
        let basis = synthesize_basis(&cfg, tol).unwrap();
        let spec = block_spectrum(&cfg, &basis, tol).unwrap();
        for data in spec.blocks.values() {
            assert_eq!(data.multiplicities, vec![1, 2, 2]);
        }
        // The power of a Q-polynomial scheme is Q-polynomial; the canonical
        // eigenvalue order of the pentagon happens to be a Q-polynomial
        // order already.
        let verdict = q_polynomial_check(&cfg, &basis, &spec, true, tol).unwrap();
        assert!(verdict.is_q_polynomial, "verdict {verdict:?}");
        assert!(verdict.conditions_agree);
        let identities = verify_parameter_identities(&cfg, &basis, &spec, tol);
        for report in &identities {
            assert!(
                report.pass,
                "{} failed: residual {:e} over {} tuples",
                report.name, report.max_residual, report.tuples
            );
        }
    }

    #[test]
    fn scaled_basis_element_fails_b4() {
        let cfg = validate_config(&pentagon_power_partition()).unwrap();
        let tol = Tolerance::default();
        let mut basis = synthesize_basis(&cfg, tol).unwrap();
        let e = basis.blocks.get_mut(&(0, 1)).unwrap();
        let magnitude = e[1].max_abs();
        e[1] = e[1].scale(2.0);
        let report = verify_basis(&cfg, &basis, tol).unwrap();
        assert!(!report.pass);
        assert!(report.b4_residual > 0.5 * magnitude);
    }

    #[test]
    fn single_point_fibers_are_first_class() {
        // Three isolated points with all distinct cross relations: the
        // trivial configuration on three singleton fibers.
        let n = 3usize;
        let mut labels = vec![0u16; 9];
        let mut next = 3u16;
        for x in 0..n {
            labels[x * n + x] = x as u16;
        }
        let mut stash = BTreeMap::new();
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    let key = (x.min(y), x.max(y), x < y);
                    let label = *stash.entry(key).or_insert_with(|| {
                        let l = next;
                        next += 1;
                        l
                    });
                    labels[x * n + y] = label;
                }
            }
        }
        let part = RelationPartition::new(n, labels).unwrap();
        let cfg = validate_config(&part).unwrap();
        assert_eq!(cfg.num_fibers(), 3);
        let tol = Tolerance::default();
        let basis = synthesize_basis(&cfg, tol).unwrap();
        let report = verify_basis(&cfg, &basis, tol).unwrap();
        assert!(report.pass);
        let spec = block_spectrum(&cfg, &basis, tol).unwrap();
        let verdict = q_polynomial_check(&cfg, &basis, &spec, false, tol).unwrap();
        assert!(verdict.is_q_polynomial); // vacuously: every block is 1x1
    }
}
