//! Equal-width histograms of per-replicate estimates, for external plotting.

use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub column: String,
    /// `counts.len() + 1` edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Equal-width bins over the observed range. A constant column gets a
    /// single degenerate bin.
    pub fn from_values(column: &str, values: &[f64], bins: usize) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min == max || bins <= 1 {
            return Histogram { column: column.into(), edges: vec![min, max], counts: vec![values.len() as u64] };
        }
        let width = (max - min) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| min + i as f64 * width).collect();
        edges.push(max);
        let mut counts = vec![0u64; bins];
        for &v in values {
            let k = (((v - min) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Histogram { column: column.into(), edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the fullest bin; ties go to the lower bin.
    pub fn mode_bin(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|&c| c == max).unwrap_or(0)
    }
}

/// Bins every numeric column of a per-replicate CSV except `replicate`.
///
/// Empty fields are skipped. A column with no values at all is omitted.
pub fn emit_histograms(csv_path: &Path, bins: usize) -> Result<Vec<Histogram>> {
    if !csv_path.exists() {
        return Err(CliError::FileNotFound(csv_path.to_path_buf()));
    }
    let malformed = |reason: String| CliError::MalformedCsv { path: csv_path.to_path_buf(), reason };
    if bins == 0 {
        return Err(CliError::InvalidConfig("bins must be positive".into()));
    }
    let mut reader = csv::Reader::from_path(csv_path)?;
    let headers = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(malformed("no header".into()));
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        rows += 1;
        for (j, field) in record.iter().enumerate() {
            if field.is_empty() {
                continue;
            }
            let x: f64 = field
                .parse()
                .map_err(|_| malformed(format!("row {rows}, column {:?}: {field:?} is not a number", &headers[j])))?;
            values[j].push(x);
        }
    }
    if rows == 0 {
        return Err(malformed("no data rows".into()));
    }
    Ok(headers
        .iter()
        .zip(&values)
        .filter(|(name, v)| *name != "replicate" && !v.is_empty())
        .map(|(name, v)| Histogram::from_values(name, v, bins))
        .collect())
}

pub fn write_histograms(histograms: &[Histogram], path: &Path) -> Result<()> {
    write_histograms_to(histograms, std::fs::File::create(path)?)
}

/// Long format: `column,bin,lower,upper,count`.
pub fn write_histograms_to<W: std::io::Write>(histograms: &[Histogram], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["column", "bin", "lower", "upper", "count"])?;
    for h in histograms {
        for (k, c) in h.counts.iter().enumerate() {
            w.write_record([
                h.column.clone(),
                k.to_string(),
                format!("{}", h.edges[k]),
                format!("{}", h.edges[k + 1]),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
