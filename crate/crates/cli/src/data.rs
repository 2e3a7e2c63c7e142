use std::path::{Path, PathBuf};

use packed_matrix::SlotMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::{CliError, Result};

/// Where bare dataset file names are looked up when they are not found
/// relative to the working directory.
pub const DATA_DIR_ENV: &str = "FEDFHE_DATA_DIR";

/// How the label column is read.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Schema {
    pub label: String,
    /// Row identifiers; rows are numbered when absent.
    pub id: Option<String>,
    /// Label value meaning class 1. Without it labels must already be 0/1.
    pub positive: Option<String>,
    /// Columns to ignore besides the id and label.
    pub drop: Vec<String>,
}

/// A labelled table with numeric features.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub x: SlotMatrix,
    /// `0/1`.
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.x.rows
    }

    pub fn positive_rate(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len().max(1) as f64
    }
}

/// Resolves `path` against the working directory, then `$FEDFHE_DATA_DIR`,
/// then the workspace `data/` directory.
pub fn resolve(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    let mut tried = vec![path.display().to_string()];
    let mut dirs = Vec::new();
    if let Some(d) = std::env::var_os(DATA_DIR_ENV) {
        dirs.push(PathBuf::from(d));
    }
    dirs.push(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    for d in dirs {
        let p = d.join(path.file_name().unwrap_or(path.as_os_str()));
        if p.exists() {
            return Ok(p);
        }
        tried.push(p.display().to_string());
    }
    Err(CliError::Data(format!("dataset not found (tried {})", tried.join(", "))))
}

pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    let path = resolve(path)?;
    let mut reader = csv::Reader::from_path(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| CliError::Data(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Data(format!("{}: no column {name:?}", path.display())))
    };
    let label_col = find(&schema.label)?;
    let id_col = schema.id.as_deref().map(find).transpose()?;
    let mut skip = vec![label_col];
    skip.extend(id_col);
    for d in &schema.drop {
        skip.push(find(d)?);
    }
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|c| !skip.contains(c)).collect();
    if feature_cols.is_empty() {
        return Err(CliError::Data(format!("{}: no feature columns", path.display())));
    }

    let (mut ids, mut y, mut data) = (Vec::new(), Vec::new(), Vec::new());
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = r + 2;
        let cell = |c: usize| rec.get(c).map(str::trim).unwrap_or("");
        ids.push(match id_col {
            Some(c) => cell(c).to_string(),
            None => format!("row{r}"),
        });
        let label = cell(label_col);
        y.push(match &schema.positive {
            Some(p) => f64::from(u8::from(label == p)),
            None => match label.parse::<f64>() {
                Ok(v) if v == 0.0 || v == 1.0 => v,
                _ => return Err(CliError::Data(format!("line {line}: label {label:?} is not 0 or 1"))),
            },
        });
        for &c in &feature_cols {
            let v: f64 = cell(c).parse().map_err(|_| {
                CliError::Data(format!("line {line}: column {:?} is not numeric: {:?}", &headers[c], cell(c)))
            })?;
            data.push(v);
        }
    }
    let rows = y.len();
    if rows == 0 {
        return Err(CliError::Data(format!("{}: no rows", path.display())));
    }
    let x = SlotMatrix::new(rows, feature_cols.len(), data).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(Dataset {
        name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        ids,
        feature_names: feature_cols.iter().map(|&c| headers[c].trim().to_string()).collect(),
        x,
        y,
    })
}

/// Seeded split keeping each class's share; `test_fraction` of every class,
/// rounded, goes to the test side. Both index lists are sorted.
pub fn stratified_split(y: &[f64], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [0.0, 1.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        let cut = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..cut]);
        train.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub fn select_rows(x: &SlotMatrix, rows: &[usize]) -> SlotMatrix {
    let mut data = Vec::with_capacity(rows.len() * x.cols);
    for &r in rows {
        data.extend_from_slice(x.row(r));
    }
    SlotMatrix { rows: rows.len(), cols: x.cols, data }
}

pub fn select_cols(x: &SlotMatrix, cols: &[usize]) -> SlotMatrix {
    let mut data = Vec::with_capacity(x.rows * cols.len());
    for r in 0..x.rows {
        data.extend(cols.iter().map(|&c| x.get(r, c)));
    }
    SlotMatrix { rows: x.rows, cols: cols.len(), data }
}

pub fn stack_rows(top: &SlotMatrix, bottom: &SlotMatrix) -> SlotMatrix {
    assert_eq!(top.cols, bottom.cols, "column counts differ");
    let mut data = top.data.clone();
    data.extend_from_slice(&bottom.data);
    SlotMatrix { rows: top.rows + bottom.rows, cols: top.cols, data }
}

pub fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}
