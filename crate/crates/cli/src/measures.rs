//! Measure files: CSV with one atom per row. An optional header names the
//! columns; a column called `weight` holds atom weights, otherwise atoms are
//! uniform. Lines starting with `#` are ignored.

use std::path::Path;

use anyhow::{bail, Context, Result};
use wembed::ot::DiscreteMeasure;

pub fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut weight_col = None;
    let mut dim = None;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: malformed row", path.display()))?;
        if line == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            weight_col = record.iter().position(|f| f.eq_ignore_ascii_case("weight"));
            continue;
        }
        let values = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}: row {} is not numeric", path.display(), line + 1))?;
        let d = values.len() - usize::from(weight_col.is_some());
        match dim {
            None => dim = Some(d),
            Some(k) if k != d => bail!("{}: row {} has {d} coordinates, expected {k}", path.display(), line + 1),
            _ => {}
        }
        for (k, v) in values.into_iter().enumerate() {
            if Some(k) == weight_col {
                weights.push(v);
            } else {
                atoms.push(v);
            }
        }
    }
    let Some(dim) = dim.filter(|&d| d > 0) else {
        bail!("{}: no atoms", path.display());
    };
    let measure = if weight_col.is_some() {
        DiscreteMeasure::new(dim, atoms, weights)
    } else {
        DiscreteMeasure::uniform(dim, atoms)
    };
    measure.with_context(|| format!("{}: invalid measure", path.display()))
}

/// Write `x,weight` rows for a 1D measure.
pub fn write_measure_1d(path: &Path, measure: &DiscreteMeasure) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["x", "weight"])?;
    for (x, p) in measure.atoms().iter().zip(measure.weights()) {
        w.write_record([format!("{x:?}"), format!("{p:?}")])?;
    }
    w.flush()?;
    Ok(())
}
