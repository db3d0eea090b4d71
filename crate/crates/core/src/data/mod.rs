//! Tabular datasets: ingestion, standardization, artificial-feature
//! injection, univariate scoring and splits.

mod csv_io;
mod noise;
mod split;
mod standardize;
pub mod synthetic;
mod univariate;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use csv_io::{load_csv, write_csv};
pub use noise::{inject_noise, product_column, NoiseConfig, NoiseKind};
pub use split::{split, Fractions, Split};
pub use standardize::{apply_stats, standardize, StandardizeStats};
pub use univariate::{univariate_f_scores, F_SENTINEL};

use crate::error::{Error, Result};
use crate::ndcore::Tensor;
use crate::networks::TaskKind;

/// Requested interpretation of the target column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Classification,
    Regression,
}

/// Provenance of a feature column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFlag {
    Original,
    Random,
    Corrupted,
    SecondOrder,
}

impl NoiseFlag {
    pub fn is_artificial(self) -> bool {
        self != NoiseFlag::Original
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    /// Label-encoded classes; `class_names[id]` is the original label.
    Classes {
        labels: Vec<usize>,
        class_names: Vec<String>,
    },
    Real(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Classes { labels, class_names } => Targets::Classes {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                class_names: class_names.clone(),
            },
            Targets::Real(v) => Targets::Real(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// `N × D` feature matrix with targets and per-column metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Targets,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub noise_flags: Option<Vec<NoiseFlag>>,
}

impl Dataset {
    pub fn new(x: Tensor, y: Targets, feature_names: Vec<String>, target_name: impl Into<String>) -> Result<Self> {
        let ds = Self {
            x,
            y,
            feature_names,
            target_name: target_name.into(),
            noise_flags: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_flags(mut self, flags: Vec<NoiseFlag>) -> Result<Self> {
        self.noise_flags = Some(flags);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.shape().len() != 2 {
            return Err(Error::Data(format!("feature matrix must be 2-D, got {:?}", self.x.shape())));
        }
        let (n, d) = self.x.dims2();
        if self.y.len() != n {
            return Err(Error::Data(format!("{} targets for {n} rows", self.y.len())));
        }
        if self.feature_names.len() != d {
            return Err(Error::Data(format!("{} feature names for {d} columns", self.feature_names.len())));
        }
        if let Some(flags) = &self.noise_flags {
            if flags.len() != d {
                return Err(Error::Data(format!("{} noise flags for {d} columns", flags.len())));
            }
        }
        if let Targets::Classes { labels, class_names } = &self.y {
            if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
                return Err(Error::Data(format!("class id {bad} out of range {}", class_names.len())));
            }
        }
        if !self.x.all_finite() {
            return Err(Error::Data("feature matrix contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.x.dims2().0
    }

    pub fn n_features(&self) -> usize {
        self.x.dims2().1
    }

    pub fn task(&self) -> TaskKind {
        match &self.y {
            Targets::Classes { class_names, .. } => TaskKind::Classification {
                n_classes: class_names.len(),
            },
            Targets::Real(_) => TaskKind::Regression,
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.column(j)
    }

    /// Rows by index, metadata unchanged.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: self.y.select(rows),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            noise_flags: self.noise_flags.clone(),
        }
    }

    /// Columns by index in the given order, carrying names and flags along.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        let d = self.n_features();
        if let Some(&bad) = cols.iter().find(|&&c| c >= d) {
            return Err(Error::Contract(format!("column {bad} out of range for {d} features")));
        }
        Ok(Dataset {
            x: self.x.select_columns(cols),
            y: self.y.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            target_name: self.target_name.clone(),
            noise_flags: self
                .noise_flags
                .as_ref()
                .map(|f| cols.iter().map(|&c| f[c]).collect()),
        })
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            n_rows: self.n_rows(),
            target_name: self.target_name.clone(),
            task: self.task(),
            class_names: match &self.y {
                Targets::Classes { class_names, .. } => Some(class_names.clone()),
                Targets::Real(_) => None,
            },
            feature_names: self.feature_names.clone(),
            noise_flags: self.noise_flags.clone(),
        }
    }
}

/// JSON description of a dataset's columns and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n_rows: usize,
    pub target_name: String,
    pub task: TaskKind,
    pub class_names: Option<Vec<String>>,
    pub feature_names: Vec<String>,
    pub noise_flags: Option<Vec<NoiseFlag>>,
}

impl Sidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
pub(crate) fn toy(n: usize, d: usize) -> Dataset {
    let x = Tensor::matrix(n, d, (0..n * d).map(|v| v as f64).collect()).unwrap();
    let y = Targets::Classes {
        labels: (0..n).map(|i| i % 2).collect(),
        class_names: vec!["a".into(), "b".into()],
    };
    Dataset::new(x, y, (0..d).map(|j| format!("f{j}")).collect(), "label").unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_catches_inconsistencies() {
        let ds = toy(4, 3);
        let mut bad = ds.clone();
        bad.feature_names.pop();
        assert!(bad.validate().is_err());
        assert!(ds.clone().with_flags(vec![NoiseFlag::Original; 2]).is_err());
        let mut nan = ds.clone();
        nan.x.data_mut()[0] = f64::NAN;
        assert!(nan.validate().is_err());
    }

    #[test]
    fn select_columns_carries_metadata() {
        let ds = toy(3, 5)
            .with_flags(vec![
                NoiseFlag::Original,
                NoiseFlag::Original,
                NoiseFlag::Random,
                NoiseFlag::Random,
                NoiseFlag::Corrupted,
            ])
            .unwrap();
        let sub = ds.select_columns(&[4]).unwrap();
        assert_eq!(sub.x.shape(), &[3, 1]);
        assert_eq!(sub.x.data(), ds.column(4).as_slice());
        assert_eq!(sub.feature_names, vec!["f4"]);
        assert_eq!(sub.noise_flags, Some(vec![NoiseFlag::Corrupted]));
        assert!(ds.select_columns(&[5]).is_err());
    }
}
