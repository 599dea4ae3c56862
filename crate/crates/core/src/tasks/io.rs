use std::fs;
use std::path::Path;

use super::catalogue::{Catalogue, CATALOGUE_VERSION};
use super::TaskError;
use crate::data::PairedSamples;
use crate::nn::Tensor;

pub fn save_catalogue(path: &Path, catalogue: &Catalogue) -> Result<(), TaskError> {
    fs::write(path, serde_json::to_string_pretty(catalogue)? + "\n")?;
    Ok(())
}

pub fn load_catalogue(path: &Path) -> Result<Catalogue, TaskError> {
    let c: Catalogue = serde_json::from_str(&fs::read_to_string(path)?)?;
    if c.version != CATALOGUE_VERSION {
        return Err(TaskError::Version(c.version));
    }
    Ok(c)
}

/// Header `x_1..x_m,y_1..y_n`, one row per pair.
pub fn write_samples_csv(path: &Path, samples: &PairedSamples) -> Result<(), TaskError> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (1..=samples.x_dim())
        .map(|i| format!("x_{i}"))
        .chain((1..=samples.y_dim()).map(|i| format!("y_{i}")))
        .collect();
    w.write_record(&header)?;
    for i in 0..samples.len() {
        let row = samples.x.row(i).iter().chain(samples.y.row(i)).map(|v| format!("{v:e}"));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(path: &Path) -> Result<PairedSamples, TaskError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let m = header.iter().filter(|h| h.starts_with("x_")).count();
    let n = header.len() - m;
    if m == 0 || n == 0 || header.iter().skip(m).any(|h| !h.starts_with("y_")) {
        return Err(TaskError::Invalid("sample header must be x_1..x_m,y_1..y_n".into()));
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| TaskError::Invalid(format!("bad number {field:?} in row {}", rows + 1)))?;
            if j < m {
                x.push(v)
            } else {
                y.push(v)
            }
        }
        rows += 1;
    }
    Ok(PairedSamples::new(Tensor::matrix(rows, m, x)?, Tensor::matrix(rows, n, y)?)?)
}
