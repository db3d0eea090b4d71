use std::collections::BTreeSet;
use std::path::Path;

use super::{Dataset, TaskType, Targets};
use crate::error::{Error, Result};
use crate::ndcore::Tensor;

/// Read a headed CSV file. Every column except `target_column` must be numeric
/// and non-empty; classification labels are encoded in sorted order (numeric
/// order when every label parses as a number).
pub fn load_csv(path: &Path, target_column: &str, task: TaskType) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::Data(format!("target column `{target_column}` not found in header")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut raw_targets = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(Error::Parse {
                    row,
                    column: headers[c].clone(),
                    message: "missing value".into(),
                });
            }
            if c == target_idx {
                raw_targets.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: headers[c].clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[c].clone(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            values.push(v);
        }
    }
    let n = raw_targets.len();
    if n == 0 || feature_names.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let x = Tensor::matrix(n, feature_names.len(), values)?;
    let y = match task {
        TaskType::Classification => encode_labels(&raw_targets),
        TaskType::Regression => {
            let mut ys = Vec::with_capacity(n);
            for (r, s) in raw_targets.iter().enumerate() {
                let v: f64 = s.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Parse {
                    row: r + 1,
                    column: target_column.to_string(),
                    message: format!("`{s}` is not a number"),
                })?;
                ys.push(v);
            }
            Targets::Real(ys)
        }
    };
    Dataset::new(x, y, feature_names, target_column)
}

fn encode_labels(raw: &[String]) -> Targets {
    let numeric: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
    let mut class_names: Vec<String> = raw.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if numeric.is_some() {
        class_names.sort_by(|a, b| {
            let (x, y) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            x.total_cmp(&y).then_with(|| a.cmp(b))
        });
    }
    let labels = raw
        .iter()
        .map(|s| class_names.iter().position(|c| c == s).expect("label collected above"))
        .collect();
    Targets::Classes { labels, class_names }
}

/// Write features and target with a header row. Class labels are written
/// with their original names.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(&ds.target_name);
    w.write_record(&header)?;
    let d = ds.n_features();
    let mut row: Vec<String> = Vec::with_capacity(d + 1);
    for r in 0..ds.n_rows() {
        row.clear();
        row.extend(ds.x.row_slice(r).iter().map(|v| v.to_string()));
        row.push(match &ds.y {
            Targets::Classes { labels, class_names } => class_names[labels[r]].clone(),
            Targets::Real(v) => v[r].to_string(),
        });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_structure_and_encodes_labels() {
        let f = file("a,b,label\n1,2,cat\n3,4,dog\n5,6,cat\n");
        let ds = load_csv(f.path(), "label", TaskType::Classification).unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        match &ds.y {
            Targets::Classes { labels, class_names } => {
                assert_eq!(labels, &vec![0, 1, 0]);
                assert_eq!(class_names, &vec!["cat".to_string(), "dog".to_string()]);
            }
            _ => panic!("expected classes"),
        }
    }

    #[test]
    fn target_column_may_sit_anywhere() {
        let f = file("y,a,b\n0.5,1,2\n1.5,3,4\n");
        let ds = load_csv(f.path(), "y", TaskType::Regression).unwrap();
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.y, Targets::Real(vec![0.5, 1.5]));
        assert_eq!(ds.x.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let f = file("a,label\n1,10\n2,2\n3,1\n");
        let ds = load_csv(f.path(), "label", TaskType::Classification).unwrap();
        match &ds.y {
            Targets::Classes { labels, class_names } => {
                assert_eq!(class_names, &vec!["1".to_string(), "2".into(), "10".into()]);
                assert_eq!(labels, &vec![2, 1, 0]);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn non_numeric_cell_is_named() {
        let f = file("a,b,label\n1,2,x\n3,oops,y\n");
        let err = load_csv(f.path(), "label", TaskType::Classification).unwrap_err();
        match err {
            Error::Parse { row, column, message } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
                assert!(message.contains("oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_value_is_an_error() {
        let f = file("a,b,label\n1,,x\n");
        assert!(matches!(
            load_csv(f.path(), "label", TaskType::Classification),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn missing_target_column() {
        let f = file("a,b\n1,2\n");
        assert!(load_csv(f.path(), "label", TaskType::Classification).is_err());
    }

    #[test]
    fn quoted_fields_are_accepted() {
        let f = file("\"a,1\",b,label\n\"1.5\",2,\"x y\"\n");
        let ds = load_csv(f.path(), "label", TaskType::Classification).unwrap();
        assert_eq!(ds.feature_names[0], "a,1");
        assert_eq!(ds.x.data(), &[1.5, 2.0]);
    }

    #[test]
    fn write_then_load_preserves_values() {
        let f = file("a,b,label\n0.1,-2e-7,cat\n3,4,dog\n");
        let ds = load_csv(f.path(), "label", TaskType::Classification).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, out.path()).unwrap();
        let back = load_csv(out.path(), "label", TaskType::Classification).unwrap();
        assert_eq!(back, ds);
    }
}
