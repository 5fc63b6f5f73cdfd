//! CSV output: header row, `\n` line endings, and the shortest decimal that
//! parses back to the same `f64`.

use std::io::Write;

use crate::CliError;

/// Shortest round-trip decimal (Rust's `Debug` for `f64`), e.g. `0.1`, `1.0`,
/// `1e-7`.
pub fn number(x: f64) -> String {
    format!("{x:?}")
}

pub struct CsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(out: W, header: &[String]) -> Result<Self, CliError> {
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        inner.write_record(header).map_err(csv_error)?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, values: impl IntoIterator<Item = f64>) -> Result<(), CliError> {
        self.inner
            .write_record(values.into_iter().map(number))
            .map_err(csv_error)
    }

    pub fn text_row(&mut self, cells: &[String]) -> Result<(), CliError> {
        self.inner.write_record(cells).map_err(csv_error)
    }

    pub fn finish(self) -> Result<W, CliError> {
        self.inner
            .into_inner()
            .map_err(|e| CliError::io(format!("writing csv: {}", e.error())))
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::io(format!("writing csv: {e}"))
}

pub fn columns(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}
