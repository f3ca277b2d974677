//! Small flat-file helpers shared by the table readers and writers.

use std::path::Path;

use crate::error::{Error, Result};

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn parse_f64(line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(line, format!("bad number `{s}`")))
}

pub fn parse_usize(line: usize, s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::parse(line, format!("bad integer `{s}`")))
}

pub fn parse_csv_f64(line: usize, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| parse_f64(line, v)).collect()
}

pub fn join_f64(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    parts.join(",")
}
