//! CSV ingestion for labeled regression sets.
//!
//! Expected shape: a header row, at least two all-numeric columns, the last
//! column being the target. Row order is preserved.

use std::path::{Path, PathBuf};

use cocoon_core::baselines::LabeledSet;
use cocoon_core::numerics::Vector;

#[derive(Debug)]
pub struct CsvError(pub String);

impl std::fmt::Display for CsvError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for CsvError {}

/// Resolves a dataset path, falling back to `$COCOON_DATA_DIR/<path>` when
/// the path does not exist as given.
pub fn resolve_dataset_path(path: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    if let Ok(root) = std::env::var("COCOON_DATA_DIR") {
        let candidate = Path::new(&root).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

pub fn load_dataset_csv(path: &Path) -> Result<LabeledSet, CsvError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CsvError(format!("cannot read dataset {}: {e}", path.display())))?;
    parse_dataset_csv(&text)
}

/// Parses CSV text. Errors name the offending data row and column, both
/// 1-based, counting rows below the header.
pub fn parse_dataset_csv(text: &str) -> Result<LabeledSet, CsvError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return Err(CsvError("empty file: expected a header row".to_string()));
    };
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(CsvError(format!(
            "expected at least 2 columns, header has {columns}"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns {
            return Err(CsvError(format!(
                "row {} has {} cells, expected {columns}",
                row_idx + 1,
                cells.len()
            )));
        }
        let mut values = Vec::with_capacity(columns);
        for (col_idx, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                CsvError(format!(
                    "non-numeric value `{}` at row {}, column {}",
                    cell.trim(),
                    row_idx + 1,
                    col_idx + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CsvError(format!(
                    "non-finite value at row {}, column {}",
                    row_idx + 1,
                    col_idx + 1
                )));
            }
            values.push(v);
        }
        let y = values.pop().expect("at least two columns");
        xs.push(Vector::from(values));
        ys.push(y);
    }
    if xs.is_empty() {
        return Err(CsvError("empty file: no data rows".to_string()));
    }
    LabeledSet::new(xs, ys).map_err(|e| CsvError(e.to_string()))
}

/// Writes a labeled set with full-precision decimal values.
pub fn dataset_to_csv(set: &LabeledSet) -> String {
    let dim = set.dim();
    let mut out = String::new();
    for i in 0..dim {
        out.push_str(&format!("x{i},"));
    }
    out.push_str("y\n");
    for (x, y) in set.iter() {
        for v in x.as_slice() {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{y}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_file_parses_exactly() {
        let set = parse_dataset_csv("a,b,y\n1,2,3\n4.5,-1,0.25\n7,8,9\n").unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.xs[1].as_slice(), &[4.5, -1.0]);
        assert_eq!(set.ys, vec![3.0, 0.25, 9.0]);
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let err = parse_dataset_csv("a,b,y\n1,2,3\nabc,5,6\n").unwrap_err();
        assert!(err.0.contains("abc"), "{}", err.0);
        assert!(err.0.contains("row 2, column 1"), "{}", err.0);
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(parse_dataset_csv("").is_err());
        assert!(parse_dataset_csv("a,b,y\n").is_err());
    }

    #[test]
    fn round_trip_preserves_full_precision() {
        let set = cocoon_core::coverage::generate_dataset(
            cocoon_core::coverage::SyntheticDataset::HeavyTailed,
            50,
            3,
            42,
        );
        let text = dataset_to_csv(&set);
        let back = parse_dataset_csv(&text).unwrap();
        assert_eq!(set.ys, back.ys);
        for (a, b) in set.xs.iter().zip(&back.xs) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }
}
