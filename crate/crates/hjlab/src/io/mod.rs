//! File formats: CSV tables, JSON manifests, SVG plots.

pub mod csv;
pub mod svg;

use std::path::Path;

use crate::error::Result;

/// Writes pretty JSON followed by a newline.
pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}
