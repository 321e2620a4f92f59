//! Polynomial families used by the constructions.
//!
//! Coefficients of the classical families ([`gegenbauer`], [`hahn_eval`]) are
//! exact rationals; conversion to `f64` happens only at evaluation time.
//! Polynomials produced *from* floating-point data (annihilators of measured
//! angle sets, three-term recurrences with computed Krein coefficients) use
//! [`FPoly`] with `f64` coefficients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{CcqError, Result};
use crate::matlin::fabs;

/// Largest supported polynomial degree / family index.
pub const KMAX_LIMIT: usize = 64;

/// Largest supported ambient dimension for [`gegenbauer`].
pub const DIM_LIMIT: usize = 64;

fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

// ---------------------------------------------------------------------------
// Exact-rational polynomials
// ---------------------------------------------------------------------------

/// Polynomial with exact rational coefficients, lowest degree first.
/// Trailing zero coefficients are trimmed, so `coeffs.len() == degree + 1`
/// (the zero polynomial has an empty coefficient vector).
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Poly {
            coeffs: vec![BigRational::one()],
        }
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Poly {
            coeffs: vec![BigRational::zero(), BigRational::one()],
        }
    }

    pub fn from_coeffs(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![BigRational::zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        Poly::from_coeffs(out)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![BigRational::zero(); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] -= c;
        }
        Poly::from_coeffs(out)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::from_coeffs(out)
    }

    pub fn scale(&self, s: &BigRational) -> Poly {
        Poly::from_coeffs(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Exact evaluation at a rational point (Horner).
    pub fn eval_rat(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    /// Evaluation at a float point; coefficients convert at the last step.
    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 0.0f64;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c.to_f64().unwrap_or(f64::NAN);
        }
        acc
    }

    /// Lossy conversion to an `f64`-coefficient polynomial.
    pub fn to_fpoly(&self) -> FPoly {
        FPoly::from_coeffs(
            self.coeffs
                .iter()
                .map(|c| c.to_f64().unwrap_or(f64::NAN))
                .collect(),
        )
    }
}

// ---------------------------------------------------------------------------
// f64-coefficient polynomials
// ---------------------------------------------------------------------------

/// Polynomial with `f64` coefficients, lowest degree first. Used where the
/// coefficients themselves come from floating-point data.
#[derive(Clone, Debug, PartialEq)]
pub struct FPoly {
    coeffs: Vec<f64>,
}

impl FPoly {
    pub fn zero() -> Self {
        FPoly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        FPoly { coeffs: vec![1.0] }
    }

    pub fn x() -> Self {
        FPoly {
            coeffs: vec![0.0, 1.0],
        }
    }

    pub fn from_coeffs(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last().is_some_and(|c| *c == 0.0) {
            coeffs.pop();
        }
        FPoly { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0f64;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn add(&self, other: &FPoly) -> FPoly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0.0; n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        FPoly::from_coeffs(out)
    }

    pub fn sub(&self, other: &FPoly) -> FPoly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &FPoly) -> FPoly {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return FPoly::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        FPoly::from_coeffs(out)
    }

    pub fn scale(&self, s: f64) -> FPoly {
        FPoly::from_coeffs(self.coeffs.iter().map(|c| c * s).collect())
    }
}

// ---------------------------------------------------------------------------
// Gegenbauer family
// ---------------------------------------------------------------------------

/// The Gegenbauer family for the unit sphere in dimension `dim`, normalized
/// so that `q(k)` evaluated at 1 equals the dimension of the degree-`k`
/// harmonic space.
#[derive(Clone, Debug)]
pub struct GegenbauerFamily {
    dim: usize,
    polys: Vec<Poly>,
}

impl GegenbauerFamily {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kmax(&self) -> usize {
        self.polys.len() - 1
    }

    /// The degree-`k` polynomial; panics if `k` exceeds the generated range.
    pub fn q(&self, k: usize) -> &Poly {
        &self.polys[k]
    }

    /// Dimension of the degree-`k` harmonic space (= `q(k)` at 1).
    pub fn harm_dim(&self, k: usize) -> BigRational {
        self.polys[k].eval_rat(&BigRational::one())
    }
}

/// Builds the Gegenbauer polynomials `Q_0..Q_kmax` for ambient dimension
/// `dim` via the three-term recurrence
/// `((k+1)/(dim+2k)) Q_{k+1} = x Q_k - ((dim+k-3)/(dim+2k-4)) Q_{k-1}`
/// with `Q_0 = 1`, `Q_1 = dim * x`.
///
/// At `dim = 2`, the `k = 1` coefficient `(dim-2)/(dim-2)` is taken at its
/// limit value 1, which yields the Chebyshev normalization
/// `Q_k(cos t) = 2 cos(k t)` for `k >= 1`.
///
/// # Errors
///
/// `dim` outside `2..=DIM_LIMIT` or `kmax > KMAX_LIMIT`.
pub fn gegenbauer(dim: usize, kmax: usize) -> Result<GegenbauerFamily> {
    if !(2..=DIM_LIMIT).contains(&dim) {
        return Err(CcqError::pre(format!(
            "gegenbauer: dim must be in 2..={DIM_LIMIT}, got {dim}"
        )));
    }
    if kmax > KMAX_LIMIT {
        return Err(CcqError::pre(format!(
            "gegenbauer: kmax must be at most {KMAX_LIMIT}, got {kmax}"
        )));
    }
    let d = dim as i64;
    let mut polys = Vec::with_capacity(kmax + 1);
    polys.push(Poly::one());
    if kmax >= 1 {
        polys.push(Poly::x().scale(&rat_int(d)));
    }
    for k in 1..kmax {
        let ki = k as i64;
        let back = if dim == 2 && k == 1 {
            // (dim+k-3)/(dim+2k-4) = 0/0; limit value 1.
            BigRational::one()
        } else {
            BigRational::new(BigInt::from(d + ki - 3), BigInt::from(d + 2 * ki - 4))
        };
        let lead = BigRational::new(BigInt::from(d + 2 * ki), BigInt::from(ki + 1));
        let next = Poly::x()
            .mul(&polys[k])
            .sub(&polys[k - 1].scale(&back))
            .scale(&lead);
        polys.push(next);
    }
    Ok(GegenbauerFamily { dim, polys })
}

// ---------------------------------------------------------------------------
// Hahn evaluation
// ---------------------------------------------------------------------------

/// Generalized binomial coefficient `top (top-1) ... (top-r+1) / r!` in the
/// polynomial convention: `top` may be any integer (negative values do not
/// truncate to zero).
fn gen_binom(top: i64, r: usize) -> BigInt {
    let mut num = BigInt::one();
    for idx in 0..r {
        num *= BigInt::from(top - idx as i64);
    }
    let mut den = BigInt::one();
    for f in 1..=r {
        den *= BigInt::from(f as i64);
    }
    // A product of r consecutive integers is divisible by r!.
    num / den
}

/// Evaluates the dual Hahn-type polynomial
/// `Q_k(x) = (1/C(m,k)) * sum_{j=0}^{k} (-1)^j [C(b-k+j, j)/C(a, j)] C(m-x, k-j) C(x, j)`
/// exactly, at an integer point `x`.
///
/// The `x`-dependent binomials use the polynomial convention (negative top
/// arguments are evaluated, not truncated), so `x` may lie outside `0..=m`.
///
/// # Errors
///
/// Requires `k <= min(a, b, m)` (so every denominator binomial is nonzero).
pub fn hahn_eval(k: usize, a: usize, b: usize, m: usize, x: i64) -> Result<BigRational> {
    if k > a || k > b || k > m {
        return Err(CcqError::pre(format!(
            "hahn_eval: need k <= min(a, b, m), got k={k}, a={a}, b={b}, m={m}"
        )));
    }
    let mut sum = BigRational::zero();
    for j in 0..=k {
        let sign = if j % 2 == 0 { 1 } else { -1 };
        let top_b = b as i64 - k as i64 + j as i64;
        let num = gen_binom(top_b, j) * gen_binom(m as i64 - x, k - j) * gen_binom(x, j);
        let den = gen_binom(a as i64, j);
        sum += BigRational::new(num * BigInt::from(sign), den);
    }
    let cmk = gen_binom(m as i64, k);
    Ok(sum / BigRational::from_integer(cmk))
}

// ---------------------------------------------------------------------------
// Annihilator
// ---------------------------------------------------------------------------

/// The annihilator of an angle set: `F(x) = prod_a (x - a) / (1 - a)`,
/// normalized so `F(1) = 1`.
///
/// # Errors
///
/// Rejects non-finite angles and any angle within `1e-12` of 1.
pub fn annihilator(angles: &[f64]) -> Result<FPoly> {
    let mut f = FPoly::one();
    for &a in angles {
        if !a.is_finite() {
            return Err(CcqError::pre("annihilator: non-finite angle"));
        }
        if fabs(1.0 - a) < 1e-12 {
            return Err(CcqError::pre(
                "annihilator: angle too close to 1 (normalization impossible)",
            ));
        }
        let factor = FPoly::from_coeffs(vec![-a / (1.0 - a), 1.0 / (1.0 - a)]);
        f = f.mul(&factor);
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Three-term recurrence
// ---------------------------------------------------------------------------

/// Builds `v_0, ..., v_D` from a three-term recurrence
/// `x v_h = b_{h-1} v_{h-1} + a_h v_h + c_{h+1} v_{h+1}`
/// with `v_0 = 1` and `v_1 = x`.
///
/// Slice layout for `D = a.len()`: `a[h] = a_h` for `h = 0..D` (only
/// `a[1..D]` is read), `b[h] = b_h` for `h = 0..D-1` (only `b[0..D-1]` is
/// read), and `c[h] = c_{h+1}` for `h = 0..D` (`c[0]`, i.e. `c_1`, is a
/// placeholder because `v_1` is fixed: pass `0.0`; it never enters the
/// recurrence but must still be finite).
///
/// # Errors
///
/// Mismatched slice lengths, non-finite coefficients, or a zero `c_{h+1}`
/// (division by the leading recurrence coefficient).
pub fn three_term(b: &[f64], a: &[f64], c: &[f64]) -> Result<Vec<FPoly>> {
    let d = a.len();
    if d == 0 {
        if !b.is_empty() || !c.is_empty() {
            return Err(CcqError::pre(
                "three_term: with empty a, b and c must be empty",
            ));
        }
        return Ok(vec![FPoly::one()]);
    }
    if b.len() != d - 1 || c.len() != d {
        return Err(CcqError::pre(format!(
            "three_term: for a of length {d} need b of length {} and c of length {d}, \
             got {} and {}",
            d - 1,
            b.len(),
            c.len()
        )));
    }
    if b.iter().chain(a).chain(c).any(|v| !v.is_finite()) {
        return Err(CcqError::pre("three_term: non-finite coefficient"));
    }
    let mut vs = Vec::with_capacity(d + 1);
    vs.push(FPoly::one());
    vs.push(FPoly::x());
    for h in 1..d {
        let c_next = c[h];
        if c_next == 0.0 {
            return Err(CcqError::pre(format!(
                "three_term: zero leading coefficient c_{} blocks the recurrence",
                h + 1
            )));
        }
        let xv = FPoly::x().mul(&vs[h]);
        let rhs = xv.sub(&vs[h - 1].scale(b[h - 1])).sub(&vs[h].scale(a[h]));
        vs.push(rhs.scale(1.0 / c_next));
    }
    Ok(vs)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn gegenbauer_small_dims() {
        // dim 3: Q_1 = 3x, Q_2 = (15x^2 - 5)/2, harmonic dims 1, 3, 5, 7.
        let fam = gegenbauer(3, 4).unwrap();
        assert_eq!(fam.q(1).coeffs(), &[rat(0, 1), rat(3, 1)]);
        assert_eq!(fam.q(2).coeffs(), &[rat(-5, 2), rat(0, 1), rat(15, 2)]);
        for (k, h) in [(0usize, 1i64), (1, 3), (2, 5), (3, 7), (4, 9)] {
            assert_eq!(fam.harm_dim(k), rat(h, 1));
        }
    }

    #[test]
    fn gegenbauer_dim2_is_doubled_chebyshev() {
        // Q_k(cos t) = 2 cos(k t) for k >= 1.
        let fam = gegenbauer(2, 6).unwrap();
        for k in 1..=6usize {
            for step in 0..8 {
                let t = 0.3 + 0.37 * step as f64;
                let expect = 2.0 * (k as f64 * t).cos();
                let got = fam.q(k).eval_f64(t.cos());
                assert!(
                    (got - expect).abs() < 1e-10,
                    "k={k} t={t}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn gegenbauer_cosine_sums_on_regular_polygons() {
        // The regular n-gon in S^1 is an (n-1)-design: sums of Q_k over all
        // ordered pairs vanish for 1 <= k < n and jump to 2n^2 at k = n.
        let fam = gegenbauer(2, 8).unwrap();
        for n in [5usize, 7] {
            for k in 1..=n {
                let mut sum = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let angle =
                            core::f64::consts::TAU * (i as f64 - j as f64) / n as f64;
                        sum += fam.q(k).eval_f64(angle.cos());
                    }
                }
                if k < n {
                    assert!(sum.abs() < 1e-9, "n={n} k={k}: {sum}");
                } else {
                    assert!((sum - 2.0 * (n * n) as f64).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn gegenbauer_harmonic_dimension_closed_form() {
        // h_k = C(d+k-1, k) - C(d+k-3, k-2).
        for d in [3usize, 5, 8, 23] {
            let fam = gegenbauer(d, 6).unwrap();
            for k in 2..=6usize {
                let expect = gen_binom((d + k - 1) as i64, k)
                    - gen_binom((d + k - 3) as i64, k - 2);
                assert_eq!(fam.harm_dim(k), BigRational::from_integer(expect));
            }
        }
    }

    #[test]
    fn gegenbauer_rejects_bad_domain() {
        assert!(gegenbauer(1, 3).is_err());
        assert!(gegenbauer(65, 3).is_err());
        assert!(gegenbauer(3, 65).is_err());
    }

    #[test]
    fn gen_binom_polynomial_convention() {
        assert_eq!(gen_binom(5, 2), BigInt::from(10));
        assert_eq!(gen_binom(0, 0), BigInt::from(1));
        assert_eq!(gen_binom(-1, 2), BigInt::from(1)); // (-1)(-2)/2
        assert_eq!(gen_binom(-2, 3), BigInt::from(-4)); // (-2)(-3)(-4)/6
        assert_eq!(gen_binom(3, 5), BigInt::from(0)); // hits zero factor
    }

    #[test]
    fn hahn_basic_values() {
        // k=1, a=b=m=1: Q_1(v) = 1 - 2v on v in {0, 1}.
        assert_eq!(hahn_eval(1, 1, 1, 1, 0).unwrap(), rat(1, 1));
        assert_eq!(hahn_eval(1, 1, 1, 1, 1).unwrap(), rat(-1, 1));
        // Q_0 is identically 1.
        assert_eq!(hahn_eval(0, 4, 2, 3, 2).unwrap(), rat(1, 1));
        // Outside the supported k range.
        assert!(hahn_eval(2, 1, 3, 3, 0).is_err());
    }

    #[test]
    fn annihilator_normalization_and_roots() {
        let f = annihilator(&[0.5, -0.25]).unwrap();
        assert!((f.eval(1.0) - 1.0).abs() < 1e-14);
        assert!(f.eval(0.5).abs() < 1e-14);
        assert!(f.eval(-0.25).abs() < 1e-14);
        assert!(annihilator(&[1.0 - 1e-15]).is_err());
    }

    #[test]
    fn three_term_example() {
        // x v_1 = 1*v_0 + 0*v_1 + 1*v_2  =>  v_2 = x^2 - 1.
        let vs = three_term(&[1.0], &[0.0, 0.0], &[f64::NAN, 1.0]);
        // c[0] is a placeholder but must still be finite per the contract; use 0.
        assert!(vs.is_err());
        let vs = three_term(&[1.0], &[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(vs.len(), 3);
        assert_eq!(vs[2].coeffs(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn three_term_chebyshev_like() {
        // b_h = 1, a_h = 0, c_h = 1 gives v_2 = x^2-1, v_3 = x^3-2x.
        let vs = three_term(&[1.0, 1.0], &[0.0, 0.0, 0.0], &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(vs[3].coeffs(), &[0.0, -2.0, 0.0, 1.0]);
        // Degenerate sizes.
        assert_eq!(three_term(&[], &[], &[]).unwrap().len(), 1);
        let vs = three_term(&[], &[0.0], &[0.0]).unwrap();
        assert_eq!(vs.len(), 2);
        assert_eq!(vs[1].coeffs(), &[0.0, 1.0]);
        // Zero c is an error.
        assert!(three_term(&[1.0], &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn poly_arithmetic_roundtrip() {
        let p = Poly::from_coeffs(vec![rat(1, 2), rat(0, 1), rat(3, 1)]);
        let q = Poly::x().mul(&p);
        assert_eq!(q.degree(), 3);
        assert_eq!(q.eval_rat(&rat(2, 1)), rat(2, 1) * p.eval_rat(&rat(2, 1)));
        let r = p.sub(&p);
        assert!(r.is_zero());
        assert!((p.eval_f64(0.5) - (0.5 + 3.0 * 0.25)).abs() < 1e-15);
    }
}
