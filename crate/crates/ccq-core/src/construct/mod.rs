//! The constructions: powers of schemes, Delsarte-design unions, spherical
//! unions (with derived designs and mutually unbiased bases), and the
//! binary Terwilliger configuration.
//!
//! Every construction returns a [`Construction`]: a validated
//! [`CoherentConfig`], an explicit [`BlockBasis`] that has passed
//! (B1)-(B4), a [`ConditionCertificate`] listing the inequalities that made
//! the construction legal, and named residuals for the extra identities
//! each construction verifies on the side.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{BlockBasis, CoherentConfig};
use crate::error::{CcqError, Result};
use crate::matlin::{fabs, sqrt, RealMatrix, Tolerance};
use crate::polyfun::gegenbauer;

mod delsarte;
mod power;
mod spherical;
mod terwilliger;

pub use delsarte::{delsarte_union, restrict_in_fibers};
pub use power::nth_power;
pub use spherical::{mub_config, spherical_union};
pub use terwilliger::terwilliger_h_n_2;

/// Threshold under which two inner products are considered the same angle.
pub const ANGLE_GAP: f64 = 1e-7;
/// Distinct angle clusters must be separated by at least this multiple of
/// [`ANGLE_GAP`].
pub const ANGLE_SEPARATION: f64 = 10.0;
/// Largest design strength the Gegenbauer certificate searches for.
pub const MAX_STRENGTH: usize = 64;

// ---------------------------------------------------------------------------
// Point sets
// ---------------------------------------------------------------------------

/// A finite set of unit vectors with a name tag.
#[derive(Clone, Debug)]
pub struct PointSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    tag: String,
}

impl PointSet {
    /// Validates unit norms (within `1e-10`) and pairwise distinctness.
    pub fn new(dim: usize, points: Vec<Vec<f64>>, tag: &str) -> Result<Self> {
        if dim == 0 {
            return Err(CcqError::pre("point set: ambient dimension is zero"));
        }
        if points.is_empty() {
            return Err(CcqError::pre(format!("point set {tag:?} is empty")));
        }
        for (k, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(CcqError::pre(format!(
                    "point {k} of {tag:?} has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            let norm2: f64 = p.iter().map(|&v| v * v).sum();
            if !norm2.is_finite() || fabs(norm2 - 1.0) > 2e-10 {
                return Err(CcqError::pre(format!(
                    "point {k} of {tag:?} is not unit length (|x|^2 = {norm2})"
                )));
            }
        }
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                let dist2: f64 = points[a]
                    .iter()
                    .zip(&points[b])
                    .map(|(&u, &v)| (u - v) * (u - v))
                    .sum();
                if dist2 < 1e-18 {
                    return Err(CcqError::pre(format!(
                        "points {a} and {b} of {tag:?} coincide"
                    )));
                }
            }
        }
        Ok(PointSet {
            dim,
            points,
            tag: String::from(tag),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn inner(&self, a: usize, b: usize) -> f64 {
        self.points[a]
            .iter()
            .zip(&self.points[b])
            .map(|(&u, &v)| u * v)
            .sum()
    }

    /// Gram matrix of the set.
    pub fn gram(&self) -> RealMatrix {
        let n = self.len();
        RealMatrix::from_fn(n, n, |a, b| self.inner(a, b))
    }

    /// Inner products against another set of the same dimension.
    pub fn cross_gram(&self, other: &PointSet) -> Result<RealMatrix> {
        if self.dim != other.dim {
            return Err(CcqError::pre(format!(
                "cross Gram: dimensions {} and {} differ",
                self.dim, other.dim
            )));
        }
        Ok(RealMatrix::from_fn(self.len(), other.len(), |a, b| {
            self.points[a]
                .iter()
                .zip(&other.points[b])
                .map(|(&u, &v)| u * v)
                .sum()
        }))
    }

    /// True when the set is closed under negation.
    pub fn is_antipodal(&self) -> bool {
        'outer: for p in &self.points {
            for q in &self.points {
                let dist2: f64 = p.iter().zip(q).map(|(&u, &v)| (u + v) * (u + v)).sum();
                if dist2 < 1e-16 {
                    continue 'outer;
                }
            }
            return false;
        }
        true
    }
}

// ---------------------------------------------------------------------------
// Angle clustering
// ---------------------------------------------------------------------------

/// Clusters reals whose pairwise gaps are below [`ANGLE_GAP`] and returns
/// the cluster centers in descending order.
///
/// # Errors
///
/// Adjacent clusters closer than [`ANGLE_SEPARATION`] times the gap — the
/// data does not separate into unambiguous angles.
pub fn cluster_angles(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Ok(Vec::new());
    }
    for &v in values {
        if !v.is_finite() {
            return Err(CcqError::pre("angle clustering: non-finite value"));
        }
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut clusters: Vec<(f64, f64, f64, usize)> = Vec::new(); // (max, min, sum, count)
    for &v in &sorted {
        match clusters.last_mut() {
            Some(c) if c.1 - v <= ANGLE_GAP => {
                c.1 = v;
                c.2 += v;
                c.3 += 1;
            }
            _ => clusters.push((v, v, v, 1)),
        }
    }
    for w in clusters.windows(2) {
        let gap = w[0].1 - w[1].0;
        if gap < ANGLE_SEPARATION * ANGLE_GAP {
            return Err(CcqError::pre(format!(
                "angle clustering ambiguous: clusters around {:.9} and {:.9} are \
                 separated by only {gap:.3e}",
                w[0].2 / w[0].3 as f64,
                w[1].2 / w[1].3 as f64
            )));
        }
    }
    Ok(clusters.iter().map(|c| c.2 / c.3 as f64).collect())
}

/// Index of the cluster center nearest to `v`; the match must be within
/// half the required cluster separation.
pub fn nearest_angle(centers: &[f64], v: f64) -> Result<usize> {
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for (k, &c) in centers.iter().enumerate() {
        let d = fabs(c - v);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    if best == usize::MAX || best_d > 0.5 * ANGLE_SEPARATION * ANGLE_GAP {
        return Err(CcqError::pre(format!(
            "value {v:.12} is {best_d:.3e} away from every angle cluster"
        )));
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Design strength
// ---------------------------------------------------------------------------

/// Largest `t` such that the Gegenbauer sums
/// `sum_{x,y in Y} Q_k(<x,y>)` vanish (within `tol` relative to `|Y|^2`)
/// for `k = 1..=t`, capped at [`MAX_STRENGTH`].
///
/// # Errors
///
/// Ambient dimension below 2.
pub fn spherical_strength(ps: &PointSet, tol: Tolerance) -> Result<usize> {
    if ps.dim() < 2 {
        return Err(CcqError::pre(
            "spherical strength needs ambient dimension at least 2",
        ));
    }
    // Group the n^2 inner products (including <x,x> = 1) by angle so each
    // polynomial is evaluated once per distinct angle.
    let mut values = Vec::with_capacity(ps.len() * ps.len());
    for a in 0..ps.len() {
        for b in 0..ps.len() {
            values.push(ps.inner(a, b));
        }
    }
    let centers = cluster_angles(&values)?;
    let mut counts = alloc::vec![0u64; centers.len()];
    for &v in &values {
        counts[nearest_angle(&centers, v)?] += 1;
    }
    let fam = gegenbauer(ps.dim(), MAX_STRENGTH)?;
    let n2 = (ps.len() * ps.len()) as f64;
    for k in 1..=MAX_STRENGTH {
        let total: f64 = centers
            .iter()
            .zip(&counts)
            .map(|(&c, &cnt)| cnt as f64 * fam.q(k).eval_f64(c))
            .sum();
        if fabs(total) > tol.abs_eps * n2 {
            return Ok(k - 1);
        }
    }
    Ok(MAX_STRENGTH)
}

// ---------------------------------------------------------------------------
// Derived designs
// ---------------------------------------------------------------------------

/// One slice of a point set at a fixed inner product with the base point,
/// rescaled onto the unit sphere one dimension down.
#[derive(Clone, Debug)]
pub struct DerivedDesign {
    /// Inner product with the base point before rescaling.
    pub alpha: f64,
    pub points: PointSet,
    /// Index into the original set for each derived point.
    pub source: Vec<usize>,
}

/// Splits `ps` by inner product with `ps[base_index]` into derived designs.
///
/// The base point is rotated onto `e_1` by a Householder reflection, the
/// remaining points are grouped by first coordinate (angle clustering), the
/// antipode slice at -1 is dropped, and each slice is rescaled onto
/// `S^{d-2}`. Slices are returned in descending `alpha` order; this fixes
/// the fiber numbering everywhere downstream.
///
/// # Errors
///
/// Base index out of range; a slice at `+1` (coincident points); ambient
/// dimension below 2; ambiguous angle clusters.
pub fn derived_designs(ps: &PointSet, base_index: usize) -> Result<Vec<DerivedDesign>> {
    if base_index >= ps.len() {
        return Err(CcqError::pre(format!(
            "base index {base_index} out of range ({} points)",
            ps.len()
        )));
    }
    let d = ps.dim();
    if d < 2 {
        return Err(CcqError::pre(
            "derived designs need ambient dimension at least 2",
        ));
    }
    let base = ps.point(base_index);
    // Householder reflection u = base - e1, H x = x - 2 u <u,x> / <u,u>;
    // identity when the base already sits at e1.
    let mut u: Vec<f64> = base.to_vec();
    u[0] -= 1.0;
    let uu: f64 = u.iter().map(|&v| v * v).sum();
    let reflect = |p: &[f64]| -> Vec<f64> {
        if uu < 1e-24 {
            return p.to_vec();
        }
        let up: f64 = u.iter().zip(p).map(|(&a, &b)| a * b).sum();
        p.iter()
            .zip(&u)
            .map(|(&v, &w)| v - 2.0 * w * up / uu)
            .collect()
    };
    let mut alphas = Vec::new();
    let mut rotated: Vec<(usize, Vec<f64>)> = Vec::new();
    for k in 0..ps.len() {
        if k == base_index {
            continue;
        }
        let q = reflect(ps.point(k));
        alphas.push(q[0]);
        rotated.push((k, q));
    }
    let centers = cluster_angles(&alphas)?;
    let mut out = Vec::new();
    for (slice, &alpha) in centers.iter().enumerate() {
        if alpha < -1.0 + 1e-6 {
            continue; // the antipode of the base point is excluded
        }
        if alpha > 1.0 - 1e-6 {
            return Err(CcqError::pre(
                "derived designs: a point coincides with the base point",
            ));
        }
        let scale = 1.0 / sqrt(1.0 - alpha * alpha);
        let mut pts = Vec::new();
        let mut source = Vec::new();
        for (k, q) in &rotated {
            if nearest_angle(&centers, q[0])? == slice {
                pts.push(q[1..].iter().map(|&v| v * scale).collect());
                source.push(*k);
            }
        }
        let tag = format!("{}/alpha={alpha:.6}", ps.tag());
        out.push(DerivedDesign {
            alpha,
            points: PointSet::new(d - 1, pts, &tag)?,
            source,
        });
    }
    if out.is_empty() {
        return Err(CcqError::pre(
            "derived designs: every slice was excluded (only the antipode remains)",
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Certificates and construction output
// ---------------------------------------------------------------------------

/// One checked inequality (or equality) with its numeric sides.
#[derive(Clone, Debug)]
pub struct CertificateCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// The inequalities that make a construction legal, plus which special-case
/// branch applied where.
#[derive(Clone, Debug, Default)]
pub struct ConditionCertificate {
    pub checks: Vec<CertificateCheck>,
    /// Per-fiber (or per-coincidence-class) branch notes, e.g.
    /// `"condition(1)"` / `"condition(2)"`.
    pub branches: BTreeMap<usize, &'static str>,
    pub pass: bool,
}

impl ConditionCertificate {
    pub fn trivial() -> Self {
        ConditionCertificate {
            checks: Vec::new(),
            branches: BTreeMap::new(),
            pass: true,
        }
    }

    pub fn push(&mut self, name: String, lhs: f64, rhs: f64, pass: bool) {
        self.checks.push(CertificateCheck {
            name,
            lhs,
            rhs,
            pass,
        });
    }

    pub fn finish(&mut self) {
        self.pass = self.checks.iter().all(|c| c.pass);
    }

    /// First failing check, if any.
    pub fn first_failure(&self) -> Option<&CertificateCheck> {
        self.checks.iter().find(|c| !c.pass)
    }
}

/// Per-fiber and per-pair spherical data backing a certificate.
#[derive(Clone, Debug)]
pub struct SphericalFamilyProfile {
    /// Gegenbauer design strength of each fiber.
    pub strengths: Vec<usize>,
    /// Angle sets `A(X_i, X_j)` in descending order (diagonal entries
    /// exclude the trivial angle 1 of coincident points).
    pub angle_sets: BTreeMap<(usize, usize), Vec<f64>>,
    /// Degrees `s_{i,j} = |A(X_i, X_j)|`.
    pub degrees: BTreeMap<(usize, usize), usize>,
    /// Whether each fiber is closed under negation.
    pub antipodal: Vec<bool>,
    /// For each antipodal-branch fiber class (keyed by its representative
    /// fiber), the numeric coefficient applied to the next-to-top diagonal
    /// index; all other indices use coefficient 1.
    pub special_coefficients: BTreeMap<usize, f64>,
}

/// A finished construction: validated configuration, verified basis, the
/// legality certificate, and named side-verification residuals.
#[derive(Clone, Debug)]
pub struct Construction {
    pub config: CoherentConfig,
    pub basis: BlockBasis,
    pub certificate: ConditionCertificate,
    pub profile: Option<SphericalFamilyProfile>,
    /// Extra identities verified during construction (name, max residual).
    pub residuals: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pentagon() -> PointSet {
        let pts = (0..5)
            .map(|k| {
                let a = core::f64::consts::TAU * k as f64 / 5.0;
                alloc::vec![libm::cos(a), libm::sin(a)]
            })
            .collect();
        PointSet::new(2, pts, "pentagon").unwrap()
    }

    #[test]
    fn pentagon_is_a_4_design() {
        let t = spherical_strength(&pentagon(), Tolerance::default()).unwrap();
        assert_eq!(t, 4);
    }

    #[test]
    fn single_point_has_strength_0() {
        let ps = PointSet::new(3, alloc::vec![alloc::vec![1.0, 0.0, 0.0]], "pt").unwrap();
        assert_eq!(spherical_strength(&ps, Tolerance::default()).unwrap(), 0);
    }

    #[test]
    fn clustering_rejects_smeared_values() {
        let mut vals = Vec::new();
        for k in 0..20 {
            vals.push(k as f64 * 3e-7); // chain with no 10x gap anywhere
        }
        assert!(cluster_angles(&vals).is_err());
    }

    #[test]
    fn clustering_separates_clean_angles() {
        let vals = alloc::vec![0.5, 0.5 + 1e-9, -0.5, 1.0, -0.5 - 1e-9];
        let centers = cluster_angles(&vals).unwrap();
        assert_eq!(centers.len(), 3);
        assert!(fabs(centers[0] - 1.0) < 1e-8);
        assert!(fabs(centers[1] - 0.5) < 1e-8);
        assert!(fabs(centers[2] + 0.5) < 1e-8);
    }

    #[test]
    fn pentagon_is_not_antipodal_but_square_is() {
        assert!(!pentagon().is_antipodal());
        let square = PointSet::new(
            2,
            alloc::vec![
                alloc::vec![1.0, 0.0],
                alloc::vec![0.0, 1.0],
                alloc::vec![-1.0, 0.0],
                alloc::vec![0.0, -1.0],
            ],
            "square",
        )
        .unwrap();
        assert!(square.is_antipodal());
    }

    #[test]
    fn derived_square_from_octahedron() {
        // The octahedron derived at any vertex: one slice at alpha = 0 (the
        // equatorial square); the antipode is dropped.
        let mut pts = Vec::new();
        for k in 0..3 {
            for s in [1.0, -1.0] {
                let mut p = alloc::vec![0.0; 3];
                p[k] = s;
                pts.push(p);
            }
        }
        let octa = PointSet::new(3, pts, "octahedron").unwrap();
        let derived = derived_designs(&octa, 0).unwrap();
        assert_eq!(derived.len(), 1);
        assert!(fabs(derived[0].alpha) < 1e-12);
        assert_eq!(derived[0].points.len(), 4);
        assert_eq!(
            spherical_strength(&derived[0].points, Tolerance::default()).unwrap(),
            3
        );
    }
}
