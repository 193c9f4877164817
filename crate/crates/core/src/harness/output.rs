//! CSV series, JSON metadata and matrix dumps.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use super::run::{RunRecord, SweepRecord};
use crate::ensembles::MomentOperator;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

pub const CSV_HEADER: [&str; 8] = ["N", "N_A", "k", "basis", "target", "realization", "t", "delta"];

fn write_rows(w: &mut csv::Writer<impl Write>, record: &RunRecord) -> Result<()> {
    let c = &record.config;
    for target in &record.targets {
        for (r, series) in record.realizations.iter().zip(&target.per_realization) {
            for (t, d) in record.times.iter().zip(series) {
                w.write_record([
                    c.n.to_string(),
                    c.n_a.to_string(),
                    c.k.to_string(),
                    c.basis.label().to_string(),
                    target.label.clone(),
                    r.to_string(),
                    t.to_string(),
                    format!("{d:e}"),
                ])?;
            }
        }
    }
    Ok(())
}

pub fn write_run_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    write_rows(&mut w, record)?;
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(sweep: &SweepRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for run in &sweep.runs {
        write_rows(&mut w, run)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `series.csv` and `metadata.json` into `dir`.
pub fn write_run(record: &RunRecord, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv = dir.join("series.csv");
    let json = dir.join("metadata.json");
    write_run_csv(record, &csv)?;
    write_json(record, &json)?;
    Ok((csv, json))
}

pub fn write_sweep(sweep: &SweepRecord, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv = dir.join("series.csv");
    let json = dir.join("metadata.json");
    write_sweep_csv(sweep, &csv)?;
    write_json(sweep, &json)?;
    Ok((csv, json))
}

/// Text dump of the dense `d^k × d^k` operator: a header line
/// `n_a k dim`, then one line per row of `re im` pairs.
pub fn write_matrix_dump(op: &MomentOperator, budget: usize, path: &Path) -> Result<()> {
    let dense = op.to_dense(budget)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {} {}", op.n_a(), op.k(), dense.nrows())?;
    for i in 0..dense.nrows() {
        let row: Vec<String> = (0..dense.ncols()).map(|j| format!("{:e} {:e}", dense[(i, j)].re, dense[(i, j)].im)).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_dump(path: &Path) -> Result<MomentOperator> {
    let bad = |msg: &str| Error::Config(format!("{}: {msg}", path.display()));
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))??;
    let h: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad("bad header")))
        .collect::<Result<_>>()?;
    let [n_a, k, dim] = h[..] else { return Err(bad("header needs n_a k dim")) };
    let expected = (1usize << n_a).checked_pow(k as u32);
    if expected != Some(dim) {
        return Err(bad("dimension does not match n_a and k"));
    }
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        let line = lines.next().ok_or_else(|| bad("too few rows"))??;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("bad number")))
            .collect::<Result<_>>()?;
        if vals.len() != 2 * dim {
            return Err(bad("wrong row length"));
        }
        for j in 0..dim {
            m[(i, j)] = Complex64::new(vals[2 * j], vals[2 * j + 1]);
        }
    }
    MomentOperator::from_dense(n_a, k, &m)
}
