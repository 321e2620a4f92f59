//! Core library for constructing, validating, and analyzing Q-polynomial
//! coherent configurations.
//!
//! The crate is `no_std` (with `alloc`): everything here is pure computation
//! over integer and floating-point matrices. IO, file formats, and the CLI
//! live in the companion `ccq` crate.
//!
//! # Modules
//!
//! - [`matlin`] — dense integer/real matrices, symmetric eigendecomposition,
//!   common eigenprojectors of commuting families.
//! - [`polyfun`] — exact-rational polynomials, Gegenbauer and Hahn families,
//!   annihilators, three-term recurrences.
//! - [`scheme`] — symmetric association schemes: validation, spectra, Krein
//!   parameters, Q-polynomial orderings, subset (design) profiles.
//! - [`config`] — coherent configurations: validation, intersection tensors,
//!   block idempotent bases, block spectra, Q-polynomial verdicts, parameter
//!   identities.
//! - [`construct`] — constructions that produce Q-polynomial coherent
//!   configurations: scheme powers, design unions inside a scheme, unions of
//!   spherical designs, mutually unbiased bases, the binary Terwilliger
//!   configuration, and restrictions to designs inside fibers.
//! - [`catalog`] — built-in schemes, point sets, and codes with deterministic
//!   generators.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
#[macro_use]
extern crate std;

mod error;

pub mod catalog;
pub mod config;
pub mod construct;
pub mod matlin;
pub mod polyfun;
pub mod scheme;

pub use error::{AxiomViolation, CcqError, Result};
