//! Powers of an association scheme: `copies` disjoint copies of the point
//! set, where every block of the resulting configuration carries a fresh
//! copy of the scheme's relations.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use super::{ConditionCertificate, Construction};
use crate::config::{validate_config, verify_basis, BlockBasis};
use crate::error::{CcqError, Result};
use crate::matlin::Tolerance;
use crate::scheme::{spectrum, validate_scheme, RelationPartition, MAX_POINTS};

/// Builds the `copies`-fold power of the scheme given by `part`.
///
/// Points are `copies` disjoint copies of the scheme's point set; the pair
/// `((i, x), (j, y))` lies in the relation labelled by the scheme relation
/// of `(x, y)`, tagged with the ordered block `(i, j)`. The basis places
/// the scheme's primitive idempotents (in the spectrum's canonical
/// eigenvalue order) into every block.
///
/// # Errors
///
/// `copies < 2`; the power exceeding the point or relation limits; an
/// invalid input scheme.
pub fn nth_power(part: &RelationPartition, copies: usize, tol: Tolerance) -> Result<Construction> {
    if copies < 2 {
        return Err(CcqError::pre(format!(
            "power construction needs at least 2 copies, got {copies}"
        )));
    }
    let scheme = validate_scheme(part)?;
    let spec = spectrum(&scheme, tol)?;
    let n = scheme.n();
    let d = scheme.d();
    let total = copies
        .checked_mul(n)
        .filter(|&t| t <= MAX_POINTS)
        .ok_or_else(|| {
            CcqError::pre(format!(
                "power construction: {copies} x {n} points exceeds the limit {MAX_POINTS}"
            ))
        })?;
    let labels_needed = copies * copies * (d + 1);
    if labels_needed > u16::MAX as usize {
        return Err(CcqError::pre(format!(
            "power construction: {labels_needed} relations exceed the label range"
        )));
    }

    // Point (i, x) sits at index i*n + x; the label of a pair encodes the
    // ordered block (i, j) and the scheme relation of the underlying pair.
    let mut labels = alloc::vec![0u16; total * total];
    for i in 0..copies {
        for j in 0..copies {
            let base = (i * copies + j) * (d + 1);
            for x in 0..n {
                for y in 0..n {
                    labels[(i * n + x) * total + (j * n + y)] = (base + part.label(x, y)) as u16;
                }
            }
        }
    }
    let power_part = RelationPartition::new(total, labels)?;
    let config = validate_config(&power_part)?;

    let mut blocks = BTreeMap::new();
    for i in 0..copies {
        for j in 0..copies {
            blocks.insert((i, j), spec.idempotents.clone());
        }
    }
    let basis = BlockBasis { blocks };
    let report = verify_basis(&config, &basis, tol)?;
    if !report.pass {
        return Err(CcqError::Synthesis(format!(
            "power basis failed verification (residuals b1={:.3e} b2={:.3e} b3={:.3e} b4={:.3e})",
            report.b1_residual, report.b2_residual, report.b3_residual, report.b4_residual
        )));
    }

    let mut residuals = BTreeMap::new();
    residuals.insert(String::from("basis-b1"), report.b1_residual);
    residuals.insert(String::from("basis-b2"), report.b2_residual);
    residuals.insert(String::from("basis-b3"), report.b3_residual);
    residuals.insert(String::from("basis-b4"), report.b4_residual);

    Ok(Construction {
        config,
        basis,
        certificate: ConditionCertificate::trivial(),
        profile: None,
        residuals,
    })
}
