//! Scenario runner and report bundling behind the `voltplan` binary.
//!
//! A scenario file names a case, an operating profile and an ordered list
//! of actions; [`scenario::run_scenario`] executes it and writes a report
//! bundle whose artifacts can be regenerated byte-identically from the same
//! inputs and seeds.

pub mod bundle;
pub mod scenario;
pub mod table;

use std::path::Path;

use voltplan::net::{self, CaseError, NetworkCase};

/// Resolves a case reference: the bundled name `ieee33` or a file path,
/// relative paths interpreted against `base_dir`. Returns the case plus
/// the exact bytes it was parsed from, for content hashing.
pub fn resolve_case(reference: &str, base_dir: &Path) -> Result<(NetworkCase, Vec<u8>), CaseError> {
    if reference == "ieee33" {
        return Ok((net::bundled_ieee33(), net::IEEE33_JSON.as_bytes().to_vec()));
    }
    let path = if Path::new(reference).is_absolute() {
        Path::new(reference).to_path_buf()
    } else {
        base_dir.join(reference)
    };
    let bytes = std::fs::read(&path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = String::from_utf8_lossy(&bytes);
    let case = NetworkCase::from_json_str(&text)?;
    Ok((case, bytes))
}
