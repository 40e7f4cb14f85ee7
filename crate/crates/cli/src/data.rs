//! Experimental datasets: single-column CSV files with a `time_hours` header.

use crate::error::{CliError, CliResult};
use std::io::Read;
use std::path::Path;

pub const TIME_COLUMN: &str = "time_hours";

/// Senescence times, with optional cell-cycle durations, in hours.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalDataset {
    pub senescence_times: Vec<f64>,
    pub division_times: Option<Vec<f64>>,
}

impl ExperimentalDataset {
    pub fn load(senescence: &Path, divisions: Option<&Path>) -> CliResult<Self> {
        Ok(ExperimentalDataset {
            senescence_times: read_times_file(senescence)?,
            division_times: divisions.map(read_times_file).transpose()?,
        })
    }

    /// Division rate estimated as the inverse mean cell-cycle duration.
    pub fn division_rate(&self) -> Option<f64> {
        self.division_times
            .as_ref()
            .map(|d| d.len() as f64 / d.iter().sum::<f64>())
    }
}

pub fn read_times_file(path: &Path) -> CliResult<Vec<f64>> {
    let f = std::fs::File::open(path).map_err(|e| CliError::data_io(path, e))?;
    read_times(f).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses the `time_hours` column; errors give 1-based file line numbers.
pub fn read_times<R: Read>(r: R) -> CliResult<Vec<f64>> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let headers = rd.headers().map_err(|e| CliError::Data(format!("unreadable header: {e}")))?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == TIME_COLUMN)
        .ok_or_else(|| CliError::Data(format!("missing {TIME_COLUMN} column in header")))?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| CliError::Data(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = rec.get(col).map(str::trim).unwrap_or("");
        let t: f64 = field
            .parse()
            .map_err(|_| CliError::Data(format!("line {line}: cannot parse {field:?} as a time")))?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Data(format!("line {line}: times must be positive, got {t}")));
        }
        out.push(t);
    }
    if out.is_empty() {
        return Err(CliError::Data("dataset is empty".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_lines() {
        assert_eq!(read_times("time_hours\n1.5\n2\n".as_bytes()).unwrap(), vec![1.5, 2.0]);
        let e = read_times("time_hours\n1.5\nabc\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = read_times("time_hours\n1\n-2\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(read_times("time_hours\n".as_bytes()).is_err());
        assert!(read_times("hours\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn division_rate_is_inverse_mean() {
        let d = ExperimentalDataset { senescence_times: vec![1.0], division_times: Some(vec![1.0, 2.0, 1.158]) };
        assert!((d.division_rate().unwrap() - 3.0 / 4.158).abs() < 1e-15);
    }
}
