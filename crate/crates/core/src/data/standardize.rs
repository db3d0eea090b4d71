use serde::{Deserialize, Serialize};

use super::Dataset;

/// Per-feature location and scale estimated on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for zero-variance features.
    pub std: Vec<f64>,
}

impl StandardizeStats {
    pub fn fit(ds: &Dataset) -> Self {
        let (n, d) = ds.x.dims2();
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        if n == 0 {
            return Self { mean, std };
        }
        for j in 0..d {
            let col = ds.column(j);
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            mean[j] = m;
            // Rounding in the mean leaves tiny spurious spread on constant columns.
            if s > 1e-12 * m.abs().max(1.0) {
                std[j] = s;
            }
        }
        Self { mean, std }
    }
}

/// Standardize with statistics of `train` itself. Constant columns map to 0.
pub fn standardize(train: &Dataset) -> (Dataset, StandardizeStats) {
    let stats = StandardizeStats::fit(train);
    (apply_stats(train, &stats), stats)
}

/// `(x − mean)/std` column-wise using previously fitted statistics.
pub fn apply_stats(ds: &Dataset, stats: &StandardizeStats) -> Dataset {
    let (n, d) = ds.x.dims2();
    assert_eq!(stats.mean.len(), d, "stats fitted on a different feature count");
    let mut out = ds.clone();
    let data = out.x.data_mut();
    for r in 0..n {
        for j in 0..d {
            let v = &mut data[r * d + j];
            *v = (*v - stats.mean[j]) / stats.std[j];
        }
    }
    out
}
