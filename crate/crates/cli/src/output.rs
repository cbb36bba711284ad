//! CSV/JSON emission with atomic replacement of the target file.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// Nine significant digits, scientific notation.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.8e}")
    }
}

/// Header row plus one row per record.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        Self { text: columns.join(",") + "\n" }
    }

    pub fn row(&mut self, fields: impl IntoIterator<Item = String>) {
        self.text += &fields.into_iter().collect::<Vec<_>>().join(",");
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Write to a temporary file next to `path`, then rename over it.
/// Without a path the text goes to stdout.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    let Some(path) = path else {
        std::io::stdout().write_all(text.as_bytes())?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot create a file in {}", dir.display()))?;
    tmp.write_all(text.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
