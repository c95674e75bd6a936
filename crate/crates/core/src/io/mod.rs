//! CSV ingestion and exports.
//!
//! Every writer builds its output in memory and renames it into place, so
//! a failed run never leaves a truncated file behind. Numbers use a decimal
//! point, no grouping and `\n` line endings regardless of locale.

mod export;
mod model;
mod table;

use std::path::Path;

use crate::error::{Error, Result};

pub use export::{
    export_km_pairs, km_steps, write_accuracies, write_km_curves, write_qvalues,
    write_summary_tables, KMExportCurve, KMPoint,
};
pub use model::{load_policy, save_policy};
pub use table::{read_long_csv, write_long_csv, LongTableSchema};

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes `bytes` to a temporary sibling of `path` and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// In-memory CSV with a fixed header, flushed atomically by [`CsvBuffer::finish`].
pub struct CsvBuffer<'a> {
    path: &'a Path,
    writer: csv::Writer<Vec<u8>>,
}

impl<'a> CsvBuffer<'a> {
    pub fn new(path: &'a Path, header: &[&str]) -> Result<Self> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer
            .write_record(header)
            .map_err(|e| Error::csv(path, e))?;
        Ok(CsvBuffer { path, writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| Error::csv(self.path, e))
    }

    pub fn finish(self) -> Result<()> {
        let bytes = self
            .writer
            .into_inner()
            .map_err(|e| Error::io(self.path, e.into_error()))?;
        write_atomic(self.path, &bytes)
    }
}
