//! Error types shared across the crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, CcqError>;

/// A violated structure axiom together with a concrete witness.
///
/// `axiom` names the failed requirement (e.g. `"scheme(2)"`, `"config(4)"`,
/// `"basis(B4)"`), `points` lists the witnessing point indices and
/// `relations` the witnessing relation/basis indices, in the order referenced
/// by `message`.
#[derive(Clone, Debug, PartialEq)]
pub struct AxiomViolation {
    pub axiom: &'static str,
    pub message: String,
    pub points: Vec<usize>,
    pub relations: Vec<usize>,
}

impl fmt::Display for AxiomViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "axiom {} violated: {}", self.axiom, self.message)?;
        if !self.points.is_empty() {
            write!(f, " [points {:?}]", self.points)?;
        }
        if !self.relations.is_empty() {
            write!(f, " [relations {:?}]", self.relations)?;
        }
        Ok(())
    }
}

/// All failure modes of the core library.
#[derive(Clone, Debug, PartialEq)]
pub enum CcqError {
    /// An input violates a documented precondition (dimensions, ranges,
    /// malformed data, unsupported sizes).
    Precondition(String),
    /// A partition fails a structure axiom; carries a witness.
    Axiom(AxiomViolation),
    /// Several axiom violations collected in one validation pass.
    Axioms(Vec<AxiomViolation>),
    /// The input is a well-formed structure outside this crate's scope
    /// (e.g. a coherent configuration with a non-symmetric fiber).
    Unsupported(String),
    /// A numerical check exceeded its tolerance. `what` says which quantity,
    /// `residual` the observed value, `bound` the allowed one.
    Tolerance {
        what: String,
        residual: f64,
        bound: f64,
    },
    /// Basis synthesis could not produce a well-defined answer
    /// (ambiguous ideal component, inconsistent index assignment, ...).
    Synthesis(String),
    /// A construction's admissibility certificate failed; the message names
    /// the failing triple and the numbers behind it.
    Certificate(String),
}

impl CcqError {
    /// Convenience constructor for precondition failures.
    pub fn pre(msg: impl Into<String>) -> Self {
        CcqError::Precondition(msg.into())
    }

    /// Convenience constructor for tolerance failures.
    pub fn tol(what: impl Into<String>, residual: f64, bound: f64) -> Self {
        CcqError::Tolerance {
            what: what.into(),
            residual,
            bound,
        }
    }
}

impl fmt::Display for CcqError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CcqError::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            CcqError::Axiom(v) => write!(f, "{v}"),
            CcqError::Axioms(vs) => {
                write!(f, "{} axiom violation(s):", vs.len())?;
                for v in vs {
                    write!(f, "\n  {v}")?;
                }
                Ok(())
            }
            CcqError::Unsupported(msg) => write!(f, "unsupported structure: {msg}"),
            CcqError::Tolerance {
                what,
                residual,
                bound,
            } => write!(
                f,
                "tolerance exceeded in {what}: residual {residual:e} > bound {bound:e}"
            ),
            CcqError::Synthesis(msg) => write!(f, "basis synthesis failed: {msg}"),
            CcqError::Certificate(msg) => write!(f, "admissibility certificate failed: {msg}"),
        }
    }
}
