//! File IO for the three text formats (point set, code, relation
//! partition), wrapping the in-memory parsers of the core catalog module,
//! plus input digesting.

use std::fs;
use std::path::Path;

use ccq_core::catalog::{parse_code_str, parse_partition_str, parse_pointset_str, Code};
use ccq_core::construct::PointSet;
use ccq_core::scheme::RelationPartition;
use ccq_core::{CcqError, Result};
use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a file to a string; IO problems become precondition errors naming
/// the path.
pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| CcqError::pre(format!("cannot read {}: {e}", path.display())))
}

/// Writes `text` to `path`, mapping IO problems to precondition errors.
pub fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)
        .map_err(|e| CcqError::pre(format!("cannot write {}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        CcqError::Precondition(msg) => {
            CcqError::Precondition(format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

/// Reads and parses a point-set file; the tag is the file stem.
pub fn read_pointset(path: &Path) -> Result<PointSet> {
    let text = read_file(path)?;
    let tag = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("points");
    with_path(path, parse_pointset_str(&text, tag))
}

/// Reads and parses a code file.
pub fn read_code(path: &Path) -> Result<Code> {
    let text = read_file(path)?;
    with_path(path, parse_code_str(&text))
}

/// Reads and parses a relation-partition file.
pub fn read_partition(path: &Path) -> Result<RelationPartition> {
    let text = read_file(path)?;
    with_path(path, parse_partition_str(&text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccq_core::catalog::{builtin_pointset, emit_pointset_str};

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ico.pts");
        let ps = builtin_pointset("icosahedron").unwrap();
        write_file(&path, &emit_pointset_str(&ps)).unwrap();
        let back = read_pointset(&path).unwrap();
        assert_eq!(back.len(), 12);
        assert_eq!(back.tag(), "ico");

        let missing = read_pointset(&dir.path().join("nope.pts"));
        assert!(format!("{}", missing.unwrap_err()).contains("nope.pts"));

        let bad = dir.path().join("bad.pts");
        write_file(&bad, "dim 2\n1 0\n0 oops\n").unwrap();
        let err = format!("{}", read_pointset(&bad).unwrap_err());
        assert!(err.contains("bad.pts") && err.contains("line 3"), "{err}");
    }
}
