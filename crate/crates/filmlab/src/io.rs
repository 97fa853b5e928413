//! File formats. All writers are deterministic: floats use a fixed
//! `{:.16e}` rendering and JSON keys follow struct order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use filmlab_core::functionals::{DiagnosticsRow, CSV_HEADER};
use filmlab_core::Field;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn diagnostics_csv(rows: &[DiagnosticsRow]) -> String {
    let mut out = String::with_capacity(16 + rows.len() * 12 * 24);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        for (i, v) in row.fields().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// `# n=<n> h=<h>` followed by one `x value` line per grid point.
pub fn field_snapshot(u: &Field) -> String {
    let g = u.grid();
    let mut out = format!("# n={} h={:.16e}\n", g.n(), g.h());
    for (x, v) in g.points().zip(u.values()) {
        writeln!(out, "{x:.16e} {v:.16e}").unwrap();
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Git-style content hash: sha256 of `"blob <len>\0" + doc`, hex encoded.
pub fn content_hash(doc: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", doc.len()).as_bytes());
    h.update(doc.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
