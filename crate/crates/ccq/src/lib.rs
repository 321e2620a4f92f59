//! Command-line companion to the core library: file formats, deterministic
//! reports, and the `ccq` binary's argument grammar and dispatch.

pub mod formats;
pub mod report;
pub mod run;

pub use run::run;
