//! CSV ingestion and export.

use std::path::Path;

use rdflex_core::{Covariates, Dataset};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("non-numeric value in row {row}, column '{col}'")]
    NonNumericCell { row: usize, col: String },
    #[error("no complete rows left after dropping missing values")]
    EmptyAfterFiltering,
    #[error("{0}")]
    Invalid(String),
}

/// Which CSV columns feed the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub y: String,
    pub x: String,
    pub z: CovariateColumns,
    pub t: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateColumns {
    Named(Vec<String>),
    /// Every column not used as y, x or t.
    AllOthers,
}

impl Default for CovariateColumns {
    fn default() -> Self {
        CovariateColumns::Named(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub z_names: Vec<String>,
    /// Rows skipped for a missing value in a mapped column.
    pub dropped: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "." | "null")
}

/// Loads `path`, keeps the mapped columns, drops incomplete rows and shifts
/// the running variable so the cutoff sits at zero.
pub fn load_csv(
    path: &Path,
    mapping: &ColumnMapping,
    cutoff: f64,
) -> Result<LoadedData, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_csv(file, mapping, cutoff)
}

pub fn read_csv<R: std::io::Read>(
    src: R,
    mapping: &ColumnMapping,
    cutoff: f64,
) -> Result<LoadedData, DataError> {
    if !cutoff.is_finite() {
        return Err(DataError::Invalid(format!(
            "cutoff must be finite, got {cutoff}"
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(src);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let iy = find(&mapping.y)?;
    let ix = find(&mapping.x)?;
    let it = mapping.t.as_deref().map(find).transpose()?;
    let z_names: Vec<String> = match &mapping.z {
        CovariateColumns::Named(v) => v.clone(),
        CovariateColumns::AllOthers => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != iy && *i != ix && Some(*i) != it)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let iz: Vec<usize> = z_names.iter().map(|n| find(n)).collect::<Result<_, _>>()?;

    let (mut y, mut x, mut t, mut z) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut dropped = 0;
    let mut cols: Vec<usize> = vec![iy, ix];
    cols.extend(it);
    cols.extend(&iz);
    let mut vals = vec![0.0; cols.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // Row numbers count the header as row 1.
        let row = r + 2;
        let mut missing = false;
        for (k, &c) in cols.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                continue;
            }
            vals[k] = cell.parse::<f64>().map_err(|_| DataError::NonNumericCell {
                row,
                col: headers[c].clone(),
            })?;
        }
        if missing {
            dropped += 1;
            continue;
        }
        y.push(vals[0]);
        x.push(vals[1] - cutoff);
        let mut k = 2;
        if it.is_some() {
            t.push(vals[2]);
            k = 3;
        }
        z.extend_from_slice(&vals[k..]);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing values");
    }
    if x.is_empty() {
        return Err(DataError::EmptyAfterFiltering);
    }
    let n = x.len();
    let z = Covariates::new(n, iz.len(), z).map_err(|e| DataError::Invalid(e.to_string()))?;
    let dataset =
        Dataset::new(y, x, z, it.map(|_| t)).map_err(|e| DataError::Invalid(e.to_string()))?;
    Ok(LoadedData {
        dataset,
        z_names,
        dropped,
    })
}

/// Writes `data` with columns `y, x, [t,] z1..zd` (x relative to the cutoff).
pub fn write_dataset_csv<W: std::io::Write>(data: &Dataset, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let d = data.z.ncols();
    let mut head = vec!["y".to_string(), "x".to_string()];
    if data.t.is_some() {
        head.push("t".into());
    }
    head.extend((1..=d).map(|j| format!("z{j}")));
    wtr.write_record(&head)?;
    for i in 0..data.len() {
        let mut rec = vec![data.y[i].to_string(), data.x[i].to_string()];
        if let Some(t) = &data.t {
            rec.push(t[i].to_string());
        }
        rec.extend(data.z.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
