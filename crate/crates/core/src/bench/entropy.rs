use crate::data::Dataset;
use crate::error::{Error, Result};

/// Shannon entropy (bits) of a feature's equal-width histogram over its
/// observed range. Constant features have entropy 0.
pub fn feature_entropy(ds: &Dataset, feature: usize, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::Contract(format!("need at least 2 bins, got {bins}")));
    }
    if feature >= ds.n_features() {
        return Err(Error::Contract(format!("feature {feature} out of range")));
    }
    let col = ds.column(feature);
    Ok(histogram_entropy(&col, bins))
}

pub(crate) fn histogram_entropy(values: &[f64], bins: usize) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !(hi > lo) {
        return 0.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Mean of [`feature_entropy`] over `features`.
pub fn mean_entropy(ds: &Dataset, features: &[usize], bins: usize) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut total = 0.0;
    for &j in features {
        total += feature_entropy(ds, j, bins)?;
    }
    Ok(total / features.len() as f64)
}
