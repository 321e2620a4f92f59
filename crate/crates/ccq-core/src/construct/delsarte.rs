//! Configurations built from unions of subsets: disjoint subsets of a
//! Q-polynomial association scheme, and subsets chosen inside the fibers of
//! an existing configuration. Both produce their bases by sandwiching the
//! ambient idempotents between subset indicator projections, with the top
//! diagonal index completed so each diagonal block resolves the identity.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{ConditionCertificate, Construction};
use crate::config::{validate_config, verify_basis, BlockBasis, CoherentConfig};
use crate::error::{CcqError, Result};
use crate::matlin::{fabs, sqrt, RealMatrix, Tolerance};
use crate::scheme::{
    q_polynomial_orderings, spectrum, subset_profile, validate_scheme, RelationPartition,
};

/// Extracts `m[rows x cols]` scaled by `scale`.
fn scaled_submatrix(m: &RealMatrix, rows: &[usize], cols: &[usize], scale: f64) -> RealMatrix {
    RealMatrix::from_fn(rows.len(), cols.len(), |a, b| {
        scale * m.get(rows[a], cols[b])
    })
}

fn check_disjoint_subsets(n: usize, subsets: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
    if subsets.is_empty() {
        return Err(CcqError::pre("at least one subset is required"));
    }
    let mut seen = BTreeSet::new();
    let mut sorted = Vec::with_capacity(subsets.len());
    for (i, sub) in subsets.iter().enumerate() {
        if sub.is_empty() {
            return Err(CcqError::pre(format!("subset {i} is empty")));
        }
        let mut s: Vec<usize> = sub.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != sub.len() {
            return Err(CcqError::pre(format!("subset {i} has repeated points")));
        }
        for &x in &s {
            if x >= n {
                return Err(CcqError::pre(format!(
                    "subset {i} contains point {x}, but the scheme has {n} points"
                )));
            }
            if !seen.insert(x) {
                return Err(CcqError::pre(format!(
                    "point {x} appears in more than one subset"
                )));
            }
        }
        sorted.push(s);
    }
    Ok(sorted)
}

/// Builds the coherent configuration on a disjoint union of subsets of a
/// Q-polynomial association scheme.
///
/// The ambient idempotents are first renumbered by the lexicographically
/// smallest Q-polynomial ordering (the identity whenever the spectrum's
/// canonical order qualifies). Fiber `i` is `subsets[i]` in ascending point
/// order; the block `(i, j)` keeps one relation per ambient scheme relation
/// occurring between the two subsets, numbered ascending. The basis element
/// `l` of block `(i, j)` is
///
/// ```text
/// (|X| / sqrt(|Y_i| |Y_j|)) * E_l[Y_i rows, Y_j cols]
/// ```
///
/// except for the top diagonal index, which completes the block to the
/// identity. Legality is certified by the inequalities
/// `s(i,j) + s(j,h) - 2 <= t(j)` over all fiber triples, where `s` counts
/// occurring nonzero relations and `t` is the Delsarte design strength. The
/// kernel identity `|X| E_a D_j E_b = |Y_j| delta_{ab} E_a` (with `D_j` the
/// diagonal indicator of `Y_j`) is verified directly for every `j` and all
/// `a + b <= t(j)`.
///
/// # Errors
///
/// Invalid or overlapping subsets; an ambient scheme with no Q-polynomial
/// ordering; certificate failure; verification failure of the built basis.
pub fn delsarte_union(
    part: &RelationPartition,
    subsets: &[Vec<usize>],
    tol: Tolerance,
) -> Result<Construction> {
    let scheme = validate_scheme(part)?;
    let spec = spectrum(&scheme, tol)?;
    let n = scheme.n();
    let subsets = check_disjoint_subsets(n, subsets)?;
    let f = subsets.len();

    let orderings = q_polynomial_orderings(&spec, tol)?;
    let Some(first) = orderings.first() else {
        return Err(CcqError::Certificate(String::from(
            "the ambient scheme admits no Q-polynomial ordering",
        )));
    };
    let sigma = &first.ordering; // position h -> original idempotent index
    let e_ord = |h: usize| -> &RealMatrix { &spec.idempotents[sigma[h]] };

    // Strengths (largest zero prefix of the dual distribution, in the
    // chosen idempotent order) and occurring-relation sets.
    let mut strengths = Vec::with_capacity(f);
    for sub in &subsets {
        let profile = subset_profile(&scheme, &spec, sub, tol)?;
        let mut t = 0;
        for m in 1..=scheme.d() {
            if profile.dual_distribution[sigma[m]] <= tol.abs_eps * sub.len() as f64 {
                t = m;
            } else {
                break;
            }
        }
        strengths.push(t);
    }
    let mut occurring: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..f {
        for j in 0..f {
            let mut rels = BTreeSet::new();
            for &x in &subsets[i] {
                for &y in &subsets[j] {
                    let r = part.label(x, y);
                    if r != 0 {
                        rels.insert(r);
                    }
                }
            }
            occurring.insert((i, j), rels.into_iter().collect());
        }
    }
    let degree = |i: usize, j: usize| occurring[&(i, j)].len();

    let whole_space = f == 1 && subsets[0].len() == n;
    let mut certificate = ConditionCertificate::default();
    for i in 0..f {
        certificate.push(
            format!("strength t({i})"),
            strengths[i] as f64,
            strengths[i] as f64,
            true,
        );
    }
    if whole_space {
        // The union IS the ambient scheme; no inequality is needed.
        certificate.branches.insert(0, "whole space");
    } else {
        for i in 0..f {
            for j in 0..f {
                for h in 0..f {
                    let lhs = (degree(i, j) + degree(j, h)) as f64 - 2.0;
                    let rhs = strengths[j] as f64;
                    certificate.push(
                        format!("s({i},{j}) + s({j},{h}) - 2 <= t({j})"),
                        lhs,
                        rhs,
                        lhs <= rhs,
                    );
                }
            }
        }
    }
    certificate.finish();
    if !certificate.pass {
        let c = certificate.first_failure().expect("failed certificate");
        return Err(CcqError::Certificate(format!(
            "design-strength certificate failed: {} ({} > {})",
            c.name, c.lhs, c.rhs
        )));
    }

    // Relation labels: blocks in lexicographic (i, j) order; the diagonal
    // relation leads each diagonal block, then occurring ambient relations
    // ascending.
    let mut label_of: BTreeMap<(usize, usize, usize), u16> = BTreeMap::new();
    let mut next = 0u16;
    for i in 0..f {
        for j in 0..f {
            if i == j {
                label_of.insert((i, i, 0), next);
                next += 1;
            }
            for &r in &occurring[&(i, j)] {
                label_of.insert((i, j, r), next);
                next += 1;
            }
        }
    }
    let new_points: Vec<(usize, usize)> = subsets
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.iter().map(move |&x| (i, x)))
        .collect();
    let total = new_points.len();
    let mut labels = alloc::vec![0u16; total * total];
    for (a, &(i, x)) in new_points.iter().enumerate() {
        for (b, &(j, y)) in new_points.iter().enumerate() {
            labels[a * total + b] = label_of[&(i, j, part.label(x, y))];
        }
    }
    let config = validate_config(&RelationPartition::new(total, labels)?)?;

    // Sandwich basis.
    let nf = n as f64;
    let mut blocks = BTreeMap::new();
    for i in 0..f {
        for j in 0..f {
            let scale = nf / sqrt((subsets[i].len() * subsets[j].len()) as f64);
            let count = if i == j { degree(i, i) + 1 } else { degree(i, j) };
            let mut elems = Vec::with_capacity(count);
            let sandwich_count = if i == j { degree(i, i) } else { count };
            for l in 0..sandwich_count {
                elems.push(scaled_submatrix(e_ord(l), &subsets[i], &subsets[j], scale));
            }
            if i == j {
                let mut top = RealMatrix::identity(subsets[i].len());
                for e in &elems {
                    top = top.sub(e);
                }
                elems.push(top);
            }
            blocks.insert((i, j), elems);
        }
    }
    let basis = BlockBasis { blocks };
    let report = verify_basis(&config, &basis, tol)?;
    if !report.pass {
        return Err(CcqError::Synthesis(format!(
            "sandwich basis failed verification \
             (residuals b1={:.3e} b2={:.3e} b3={:.3e} b4={:.3e})",
            report.b1_residual, report.b2_residual, report.b3_residual, report.b4_residual
        )));
    }

    // Kernel identity |X| E_a D_j E_b = |Y_j| delta_{ab} E_a for a+b <= t(j).
    let all_points: Vec<usize> = (0..n).collect();
    let mut kernel_residual = 0.0f64;
    for (j, sub) in subsets.iter().enumerate() {
        let yj = sub.len() as f64;
        for a in 0..=strengths[j].min(scheme.d()) {
            for b in 0..=(strengths[j] - a).min(scheme.d()) {
                let left = scaled_submatrix(e_ord(a), &all_points, sub, 1.0);
                let right = scaled_submatrix(e_ord(b), sub, &all_points, 1.0);
                let mut m = left.mul(&right).scale(nf);
                if a == b {
                    m = m.sub(&e_ord(a).scale(yj));
                }
                let res = m.max_abs();
                kernel_residual = kernel_residual.max(res);
                if !tol.passes(res, yj * e_ord(a).max_abs()) {
                    return Err(CcqError::Synthesis(format!(
                        "kernel identity violated at (a={a}, b={b}, fiber {j}): \
                         residual {res:.3e}"
                    )));
                }
            }
        }
    }

    let mut residuals = BTreeMap::new();
    residuals.insert(String::from("basis-b1"), report.b1_residual);
    residuals.insert(String::from("basis-b2"), report.b2_residual);
    residuals.insert(String::from("basis-b3"), report.b3_residual);
    residuals.insert(String::from("basis-b4"), report.b4_residual);
    residuals.insert(String::from("kernel-identity"), kernel_residual);

    Ok(Construction {
        config,
        basis,
        certificate,
        profile: None,
        residuals,
    })
}

/// Restricts a configuration (with a verified basis) to subsets chosen
/// inside each fiber, one subset per fiber, given in fiber-local
/// coordinates.
///
/// Strengths are recomputed inside each fiber from the diagonal basis
/// blocks (never trusted from the caller): `t(j)` is the largest `t` such
/// that `chi^T E_m^{(j,j)} chi` vanishes for `m = 1..=t`. The certificate
/// and the basis mirror [`delsarte_union`], with the sandwich
///
/// ```text
/// (sqrt(|X_i| |X_j|) / sqrt(|Y_i| |Y_j|)) * E_l[Y_i rows, Y_j cols]
/// ```
///
/// and the kernel identity
/// `|X_j| E_a^{(i,j)} D_j E_b^{(j,h)} = |Y_j| delta_{ab} E_a^{(i,h)}`
/// verified for all fiber triples and `a + b <= t(j)`.
///
/// # Errors
///
/// Subset count not matching the fiber count; invalid local indices;
/// certificate failure; verification failure of the restricted basis.
pub fn restrict_in_fibers(
    config: &CoherentConfig,
    basis: &BlockBasis,
    subsets: &[Vec<usize>],
    tol: Tolerance,
) -> Result<Construction> {
    let f = config.num_fibers();
    if subsets.len() != f {
        return Err(CcqError::pre(format!(
            "need one subset per fiber ({f}), got {}",
            subsets.len()
        )));
    }
    let mut local: Vec<Vec<usize>> = Vec::with_capacity(f);
    for (i, sub) in subsets.iter().enumerate() {
        if sub.is_empty() {
            return Err(CcqError::pre(format!("subset for fiber {i} is empty")));
        }
        let mut s = sub.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != sub.len() {
            return Err(CcqError::pre(format!(
                "subset for fiber {i} has repeated points"
            )));
        }
        if *s.last().expect("nonempty") >= config.fiber_size(i) {
            return Err(CcqError::pre(format!(
                "subset for fiber {i} exceeds the fiber size {}",
                config.fiber_size(i)
            )));
        }
        local.push(s);
    }

    // Strengths from the diagonal blocks.
    let mut strengths = Vec::with_capacity(f);
    for j in 0..f {
        let diag = basis.block(j, j)?;
        let yj = local[j].len() as f64;
        let xj = config.fiber_size(j) as f64;
        let mut t = 0;
        for m in 1..diag.len() {
            let e = &diag[m];
            let mut chi_e_chi = 0.0;
            for &x in &local[j] {
                for &y in &local[j] {
                    chi_e_chi += e.get(x, y);
                }
            }
            // Dual-distribution entry (|X_j|/|Y_j|) chi^T E chi, zero within
            // tol relative to the subset size.
            if fabs(chi_e_chi) * xj / yj <= tol.abs_eps * yj {
                t = m;
            } else {
                break;
            }
        }
        strengths.push(t);
    }

    // Occurring nominal relations per block.
    let mut occurring: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..f {
        for j in 0..f {
            let mut rels = BTreeSet::new();
            let gi = config.fiber(i);
            let gj = config.fiber(j);
            for &x in &local[i] {
                for &y in &local[j] {
                    let raw = config
                        .partition()
                        .label(gi[x] as usize, gj[y] as usize);
                    let (_, _, nominal) = config.locate_raw(raw);
                    if nominal != 0 {
                        rels.insert(nominal);
                    }
                }
            }
            occurring.insert((i, j), rels.into_iter().collect());
        }
    }
    let degree = |i: usize, j: usize| occurring[&(i, j)].len();

    let mut certificate = ConditionCertificate::default();
    for i in 0..f {
        certificate.push(
            format!("strength t({i})"),
            strengths[i] as f64,
            strengths[i] as f64,
            true,
        );
    }
    for i in 0..f {
        for j in 0..f {
            for h in 0..f {
                let lhs = (degree(i, j) + degree(j, h)) as f64 - 2.0;
                let rhs = strengths[j] as f64;
                certificate.push(
                    format!("s({i},{j}) + s({j},{h}) - 2 <= t({j})"),
                    lhs,
                    rhs,
                    lhs <= rhs,
                );
            }
        }
    }
    certificate.finish();
    if !certificate.pass {
        let c = certificate.first_failure().expect("failed certificate");
        return Err(CcqError::Certificate(format!(
            "design-strength certificate failed: {} ({} > {})",
            c.name, c.lhs, c.rhs
        )));
    }

    // New relation labels.
    let mut label_of: BTreeMap<(usize, usize, usize), u16> = BTreeMap::new();
    let mut next = 0u16;
    for i in 0..f {
        for j in 0..f {
            if i == j {
                label_of.insert((i, i, 0), next);
                next += 1;
            }
            for &r in &occurring[&(i, j)] {
                label_of.insert((i, j, r), next);
                next += 1;
            }
        }
    }
    let new_points: Vec<(usize, usize)> = local
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.iter().map(move |&x| (i, x)))
        .collect();
    let total = new_points.len();
    let mut labels = alloc::vec![0u16; total * total];
    for (a, &(i, x)) in new_points.iter().enumerate() {
        for (b, &(j, y)) in new_points.iter().enumerate() {
            let raw = config
                .partition()
                .label(config.fiber(i)[x] as usize, config.fiber(j)[y] as usize);
            let (_, _, nominal) = config.locate_raw(raw);
            labels[a * total + b] = label_of[&(i, j, nominal)];
        }
    }
    let new_config = validate_config(&RelationPartition::new(total, labels)?)?;

    // Sandwich basis from the parent basis blocks.
    let mut blocks = BTreeMap::new();
    for i in 0..f {
        for j in 0..f {
            let parent = basis.block(i, j)?;
            let scale = sqrt((config.fiber_size(i) * config.fiber_size(j)) as f64)
                / sqrt((local[i].len() * local[j].len()) as f64);
            let count = if i == j { degree(i, i) + 1 } else { degree(i, j) };
            let sandwich_count = if i == j { degree(i, i) } else { count };
            if sandwich_count > parent.len() {
                return Err(CcqError::Synthesis(format!(
                    "block ({i},{j}) needs {sandwich_count} parent idempotents, \
                     only {} available",
                    parent.len()
                )));
            }
            let mut elems = Vec::with_capacity(count);
            for l in 0..sandwich_count {
                elems.push(scaled_submatrix(&parent[l], &local[i], &local[j], scale));
            }
            if i == j {
                let mut top = RealMatrix::identity(local[i].len());
                for e in &elems {
                    top = top.sub(e);
                }
                elems.push(top);
            }
            blocks.insert((i, j), elems);
        }
    }
    let new_basis = BlockBasis { blocks };
    let report = verify_basis(&new_config, &new_basis, tol)?;
    if !report.pass {
        return Err(CcqError::Synthesis(format!(
            "restricted basis failed verification \
             (residuals b1={:.3e} b2={:.3e} b3={:.3e} b4={:.3e})",
            report.b1_residual, report.b2_residual, report.b3_residual, report.b4_residual
        )));
    }

    // Kernel identity on the parent basis.
    let mut kernel_residual = 0.0f64;
    for i in 0..f {
        for j in 0..f {
            for h in 0..f {
                let left_all = basis.block(i, j)?;
                let right_all = basis.block(j, h)?;
                let target_all = basis.block(i, h)?;
                let xj = config.fiber_size(j) as f64;
                let yj = local[j].len() as f64;
                for a in 0..left_all.len() {
                    for b in 0..right_all.len() {
                        if a + b > strengths[j] {
                            continue;
                        }
                        let cols: Vec<usize> = (0..config.fiber_size(h)).collect();
                        let rows: Vec<usize> = (0..config.fiber_size(i)).collect();
                        let left = scaled_submatrix(&left_all[a], &rows, &local[j], 1.0);
                        let right = scaled_submatrix(&right_all[b], &local[j], &cols, 1.0);
                        let mut m = left.mul(&right).scale(xj);
                        let mut magnitude = 1.0;
                        if a == b && a < target_all.len() {
                            // A same-index product with no target must vanish.
                            m = m.sub(&target_all[a].scale(yj));
                            magnitude = yj * target_all[a].max_abs();
                        }
                        let res = m.max_abs();
                        kernel_residual = kernel_residual.max(res);
                        if !tol.passes(res, magnitude) {
                            return Err(CcqError::Synthesis(format!(
                                "kernel identity violated at (a={a}, b={b}, \
                                 blocks ({i},{j}),({j},{h})): residual {res:.3e}"
                            )));
                        }
                    }
                }
            }
        }
    }

    let mut residuals = BTreeMap::new();
    residuals.insert(String::from("basis-b1"), report.b1_residual);
    residuals.insert(String::from("basis-b2"), report.b2_residual);
    residuals.insert(String::from("basis-b3"), report.b3_residual);
    residuals.insert(String::from("basis-b4"), report.b4_residual);
    residuals.insert(String::from("kernel-identity"), kernel_residual);

    Ok(Construction {
        config: new_config,
        basis: new_basis,
        certificate,
        profile: None,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{block_spectrum, q_polynomial_check};
    use crate::scheme::hamming2_partition;

    /// Even- and odd-weight words of the 4-cube.
    fn even_odd_subsets() -> Vec<Vec<usize>> {
        let even: Vec<usize> = (0..16usize).filter(|x| x.count_ones() % 2 == 0).collect();
        let odd: Vec<usize> = (0..16usize).filter(|x| x.count_ones() % 2 == 1).collect();
        alloc::vec![even, odd]
    }

    #[test]
    fn even_odd_split_of_the_4_cube() {
        let tol = Tolerance::default();
        let c = delsarte_union(&hamming2_partition(4), &even_odd_subsets(), tol).unwrap();
        assert!(c.certificate.pass);
        assert_eq!(c.config.num_fibers(), 2);
        // Distances within a parity class are even; across, odd.
        assert_eq!(c.config.type_matrix(), alloc::vec![
            alloc::vec![3, 2],
            alloc::vec![2, 3]
        ]);
        let spec = block_spectrum(&c.config, &c.basis, tol).unwrap();
        let verdict = q_polynomial_check(&c.config, &c.basis, &spec, true, tol).unwrap();
        assert!(verdict.is_q_polynomial);
        assert!(c.residuals["kernel-identity"] < 1e-8);
    }

    #[test]
    fn whole_space_as_a_single_subset_reproduces_the_scheme() {
        let tol = Tolerance::default();
        let all: Vec<usize> = (0..8).collect();
        let c = delsarte_union(&hamming2_partition(3), &alloc::vec![all], tol).unwrap();
        assert_eq!(c.config.num_fibers(), 1);
        assert_eq!(c.config.n(), 8);
        let spec = block_spectrum(&c.config, &c.basis, tol).unwrap();
        let verdict = q_polynomial_check(&c.config, &c.basis, &spec, false, tol).unwrap();
        assert!(verdict.is_q_polynomial);
    }

    #[test]
    fn overlapping_subsets_are_rejected() {
        let r = delsarte_union(
            &hamming2_partition(3),
            &alloc::vec![alloc::vec![0, 1], alloc::vec![1, 2]],
            Tolerance::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn weak_subsets_fail_the_certificate() {
        // Two far-apart pairs in the 3-cube: strength 0 fibers with
        // multiple occurring relations cannot satisfy s+s-2 <= t.
        let r = delsarte_union(
            &hamming2_partition(3),
            &alloc::vec![alloc::vec![0, 1], alloc::vec![6, 7]],
            Tolerance::default(),
        );
        match r {
            Err(CcqError::Certificate(_)) => {}
            other => panic!("expected certificate failure, got {other:?}"),
        }
    }

    #[test]
    fn restriction_to_full_fibers_is_identity_shaped() {
        let tol = Tolerance::default();
        let c = delsarte_union(&hamming2_partition(4), &even_odd_subsets(), tol).unwrap();
        let full: Vec<Vec<usize>> = (0..2).map(|i| (0..c.config.fiber_size(i)).collect()).collect();
        let r = restrict_in_fibers(&c.config, &c.basis, &full, tol).unwrap();
        assert_eq!(r.config.type_matrix(), c.config.type_matrix());
        assert!(r.certificate.pass);
    }
}
