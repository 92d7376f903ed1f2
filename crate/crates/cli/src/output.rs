use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::commands::CliError;

/// Shortest decimal that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn joined(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

pub fn joined_int(xs: &[i64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Everything needed to rerun a command; the only file that records timing.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: serde_json::Value,
    pub inputs: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    pub engine_version: String,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let path = out.join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5, 1.292481250360578] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(joined(&[1.0, 0.5]), "1;0.5");
        assert_eq!(joined_int(&[3, -1, 0]), "3;-1;0");
    }

    #[test]
    fn csv_uses_lf_and_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let header = ["a", "b"].map(String::from);
        write_csv(&path, &header, &[vec!["1".into(), "x,y".into()]]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,\"x,y\"\n");
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_csv(&dir.path().join("no/such/t.csv"), &[], &[]).unwrap_err();
        assert_eq!(err.code(), 1);
    }
}
