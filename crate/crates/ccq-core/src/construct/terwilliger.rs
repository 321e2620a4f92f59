//! The coherent configuration on the binary cube `{0,1}^n` whose fibers are
//! the Hamming shells (grouped by weight) and whose relations record, for a
//! pair of words `(x, y)`, the weights of both words together with the
//! number of coordinates where `x` has a 1 and `y` has a 0.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_rational::BigRational;
use num_traits::ToPrimitive;

use super::{ConditionCertificate, Construction};
use crate::config::{validate_config, verify_basis, BlockBasis};
use crate::error::{CcqError, Result};
use crate::matlin::{sqrt, RealMatrix, Tolerance};
use crate::polyfun::hahn_eval;
use crate::scheme::RelationPartition;

/// Largest cube exponent accepted (`2^10 = 1024` points).
pub const MAX_CUBE_EXPONENT: usize = 10;

fn binom(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product::<u64>().max(1)
}

/// Builds the shell configuration of `{0,1}^n` together with its explicit
/// basis of dual Hahn idempotents.
///
/// Words are ordered by their numeric value; fiber `i` collects the words
/// of weight `i` (so the configuration has `n + 1` fibers). Within a block
/// `(i, j)` the relations are numbered by ascending `v`, where
/// `v = |{l : x_l = 1, y_l = 0}|` ranges over `max(0, i-j) ..= min(i, n-j)`.
/// The basis element with global index `k` on block `(i, j)` has entries
///
/// ```text
/// E_k[x][y] = (C(n,k) - C(n,k-1)) / sqrt(C(n,i) C(n,j) * rho) * Q_k(v)
/// rho       = j! (n-i)! (i-k)! (n-j-k)! / ( (j-k)! (n-i-k)! i! (n-j)! )
/// ```
///
/// with `Q_k` the dual Hahn value [`hahn_eval`]`(k, n-j, j, i, v)`; `k`
/// runs over `0 ..= min(i, j, n-i, n-j)`. (The parameter roles are fixed
/// by the transpose axiom: block `(i, j)` must be the transpose of block
/// `(j, i)` element by element.)
///
/// # Errors
///
/// `n` outside `1..=`[`MAX_CUBE_EXPONENT`]; internal verification failures.
pub fn terwilliger_h_n_2(n: usize, tol: Tolerance) -> Result<Construction> {
    if n == 0 || n > MAX_CUBE_EXPONENT {
        return Err(CcqError::pre(format!(
            "cube shell configuration needs 1 <= n <= {MAX_CUBE_EXPONENT}, got {n}"
        )));
    }
    let total = 1usize << n;

    // Enumerate the occurring (i, j, v) triples in lexicographic order; the
    // rank of a triple is its raw relation label.
    let mut triple_rank: BTreeMap<(usize, usize, usize), u16> = BTreeMap::new();
    for i in 0..=n {
        for j in 0..=n {
            let lo = i.saturating_sub(j);
            let hi = i.min(n - j);
            for v in lo..=hi {
                let next = triple_rank.len() as u16;
                triple_rank.insert((i, j, v), next);
            }
        }
    }

    let mut labels = alloc::vec![0u16; total * total];
    for x in 0..total {
        let i = x.count_ones() as usize;
        for y in 0..total {
            let j = y.count_ones() as usize;
            let v = (x & !y).count_ones() as usize;
            labels[x * total + y] = triple_rank[&(i, j, v)];
        }
    }
    let part = RelationPartition::new(total, labels)?;
    let config = validate_config(&part)?;

    // Fiber-local point lists in ascending word order, mirroring the
    // configuration's fiber coordinates.
    let shells: Vec<Vec<usize>> = (0..=n)
        .map(|i| (0..total).filter(|x| x.count_ones() as usize == i).collect())
        .collect();

    let mut blocks = BTreeMap::new();
    for i in 0..=n {
        for j in 0..=n {
            let kmax = i.min(j).min(n - i).min(n - j);
            let mut elems = Vec::with_capacity(kmax + 1);
            for k in 0..=kmax {
                // Scalar factor: (C(n,k) - C(n,k-1)) / sqrt(C(n,i) C(n,j) rho).
                let lead = binom(n, k) as f64 - if k == 0 { 0.0 } else { binom(n, k - 1) as f64 };
                let rho_num = factorial(j)
                    * factorial(n - i)
                    * factorial(i - k)
                    * factorial(n - j - k);
                let rho_den = factorial(j - k)
                    * factorial(n - i - k)
                    * factorial(i)
                    * factorial(n - j);
                let under = binom(n, i) as f64 * binom(n, j) as f64 * rho_num as f64 / rho_den as f64;
                let scalar = lead / sqrt(under);

                // Hahn values indexed by v.
                let lo = i.saturating_sub(j);
                let hi = i.min(n - j);
                let mut by_v: BTreeMap<usize, f64> = BTreeMap::new();
                for v in lo..=hi {
                    let q: BigRational = hahn_eval(k, n - j, j, i, v as i64)?;
                    let qf = q.to_f64().ok_or_else(|| {
                        CcqError::pre("hahn value does not fit in an f64")
                    })?;
                    by_v.insert(v, scalar * qf);
                }

                let rows = shells[i].len();
                let cols = shells[j].len();
                let mut e = RealMatrix::zeros(rows, cols);
                for (a, &x) in shells[i].iter().enumerate() {
                    for (b, &y) in shells[j].iter().enumerate() {
                        let v = (x & !y).count_ones() as usize;
                        e.set(a, b, by_v[&v]);
                    }
                }
                elems.push(e);
            }
            blocks.insert((i, j), elems);
        }
    }
    let basis = BlockBasis { blocks };
    let report = verify_basis(&config, &basis, tol)?;
    if !report.pass {
        return Err(CcqError::Synthesis(format!(
            "cube shell basis failed verification \
             (residuals b1={:.3e} b2={:.3e} b3={:.3e} b4={:.3e})",
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{block_spectrum, q_polynomial_check};
    use crate::matlin::fabs;

    #[test]
    fn two_cube_shells() {
        let tol = Tolerance::default();
        let c = terwilliger_h_n_2(2, tol).unwrap();
        assert_eq!(c.config.num_fibers(), 3);
        // Middle shell {01, 10}: its k = 1 element is the classic
        // rank-one difference projector.
        let e = &c.basis.block(1, 1).unwrap()[1];
        assert!(fabs(e.get(0, 0) - 0.5) < 1e-12);
        assert!(fabs(e.get(0, 1) + 0.5) < 1e-12);
    }

    #[test]
    fn relation_count_grows_as_expected() {
        // sum over blocks of (min(i,j,n-i,n-j)+1) for n = 4.
        let c = terwilliger_h_n_2(4, Tolerance::default()).unwrap();
        let mut count = 0usize;
        for i in 0..=4usize {
            for j in 0..=4usize {
                count += i.min(j).min(4 - i).min(4 - j) + 1;
            }
        }
        let tm = c.config.type_matrix();
        let listed: usize = (0..=4).map(|i| (0..=4).map(|j| tm[i][j]).sum::<usize>()).sum();
        assert_eq!(listed, count);
    }

    #[test]
    fn four_cube_is_q_polynomial_in_shell_order() {
        let tol = Tolerance::default();
        let c = terwilliger_h_n_2(4, tol).unwrap();
        let spec = block_spectrum(&c.config, &c.basis, tol).unwrap();
        let verdict = q_polynomial_check(&c.config, &c.basis, &spec, false, tol).unwrap();
        assert!(verdict.is_q_polynomial, "violation {:?}", verdict.best_violation);
        assert!(verdict.conditions_agree);
    }

    #[test]
    fn fiber_schemes_are_johnson() {
        let tol = Tolerance::default();
        let c = terwilliger_h_n_2(4, tol).unwrap();
        // Shell 2 of the 4-cube carries J(4,2): valencies 1, 4, 1.
        let s = c.config.fiber_scheme(2).unwrap();
        assert_eq!(s.valencies(), &[1, 4, 1]);
    }

    #[test]
    fn exponent_limits() {
        assert!(terwilliger_h_n_2(0, Tolerance::default()).is_err());
        assert!(terwilliger_h_n_2(11, Tolerance::default()).is_err());
    }
}
