//! Feature importances and the final feature set of a trained model.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gumbel::hard_mask;
use crate::networks::MaskingModel;

/// Noise-free selection read off the masking network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub logits: Vec<f64>,
    /// `1` iff the logit is strictly positive.
    pub mask: Vec<u8>,
    /// Ascending indices of selected features.
    pub selected_indices: Vec<usize>,
    /// All features by descending logit, ties by ascending index.
    pub ranked_indices: Vec<usize>,
    pub selected_count: usize,
}

impl SelectionResult {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let mask = hard_mask(&logits);
        let selected_indices: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s == 1)
            .map(|(j, _)| j)
            .collect();
        let mut ranked_indices: Vec<usize> = (0..logits.len()).collect();
        ranked_indices.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        Self {
            selected_count: selected_indices.len(),
            logits,
            mask,
            selected_indices,
            ranked_indices,
        }
    }

    pub fn n_features(&self) -> usize {
        self.logits.len()
    }
}

/// Compute `w = f(e)` once and threshold it.
pub fn extract_selection(model: &MaskingModel) -> SelectionResult {
    SelectionResult::from_logits(model.mask_logits())
}

/// The `k` highest-logit features, regardless of the threshold.
pub fn rank_top_k(result: &SelectionResult, k: usize) -> Result<Vec<usize>> {
    let d = result.n_features();
    if k == 0 || k > d {
        return Err(Error::Contract(format!("k must lie in 1..={d}, got {k}")));
    }
    Ok(result.ranked_indices[..k].to_vec())
}

/// Restrict `ds` to `indices`, preserving their order.
pub fn apply_selection(ds: &Dataset, indices: &[usize]) -> Result<Dataset> {
    if indices.is_empty() {
        return Err(Error::EmptySelection);
    }
    ds.select_columns(indices)
}

/// Restrict `ds` to the columns where `mask` is 1.
pub fn apply_mask(ds: &Dataset, mask: &[u8]) -> Result<Dataset> {
    if mask.len() != ds.n_features() {
        return Err(Error::Shape {
            op: "apply_mask",
            lhs: vec![mask.len()],
            rhs: vec![ds.n_features()],
        });
    }
    let idx: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter(|&(_, &m)| m == 1)
        .map(|(j, _)| j)
        .collect();
    apply_selection(ds, &idx)
}

/// JSON report of a selection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub selected_indices: Vec<usize>,
    pub selected_count: usize,
    pub logits: Vec<f64>,
    pub feature_names: Vec<String>,
    pub config_digest: String,
    pub seed: u64,
    /// Rows the selection was trained on. Every row shares the same mask.
    pub n_samples: usize,
}

impl SelectionReport {
    pub fn new(result: &SelectionResult, feature_names: &[String], config_digest: String, seed: u64, n_samples: usize) -> Self {
        Self {
            selected_indices: result.selected_indices.clone(),
            selected_count: result.selected_count,
            logits: result.logits.clone(),
            feature_names: feature_names.to_vec(),
            config_digest,
            seed,
            n_samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy;

    #[test]
    fn sign_and_sort() {
        let r = SelectionResult::from_logits(vec![2.0, -1.0, 0.3]);
        assert_eq!(r.mask, vec![1, 0, 1]);
        assert_eq!(r.selected_count, 2);
        assert_eq!(r.selected_indices, vec![0, 2]);
        assert_eq!(r.ranked_indices, vec![0, 2, 1]);
    }

    #[test]
    fn all_negative_still_ranks() {
        let r = SelectionResult::from_logits(vec![-1.0, -2.0, -0.5]);
        assert_eq!(r.selected_count, 0);
        assert_eq!(r.ranked_indices, vec![2, 0, 1]);
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(SelectionResult::from_logits(vec![1.0, 1.0]).ranked_indices, vec![0, 1]);
    }

    #[test]
    fn top_k() {
        let r = SelectionResult::from_logits(vec![0.1, 5.0, -3.0]);
        assert_eq!(rank_top_k(&r, 1).unwrap(), vec![1]);
        assert_eq!(rank_top_k(&r, 3).unwrap(), vec![1, 0, 2]);
        let neg = SelectionResult::from_logits(vec![-1.0, -2.0]);
        assert_eq!(rank_top_k(&neg, 2).unwrap(), vec![0, 1]);
        assert!(rank_top_k(&r, 0).is_err());
        assert!(rank_top_k(&r, 4).is_err());
    }

    #[test]
    fn apply_mask_keeps_order() {
        let ds = toy(3, 4);
        let out = apply_mask(&ds, &[1, 0, 1, 0]).unwrap();
        assert_eq!(out.feature_names, vec!["f0", "f2"]);
        assert_eq!(out.column(1), ds.column(2));
        assert_eq!(apply_mask(&ds, &[1; 4]).unwrap(), ds);
    }

    #[test]
    fn single_column() {
        let ds = toy(3, 5);
        let out = apply_selection(&ds, &[4]).unwrap();
        assert_eq!(out.x.shape(), &[3, 1]);
        assert_eq!(out.x.data(), ds.column(4).as_slice());
    }

    #[test]
    fn empty_selection_is_an_error() {
        assert!(matches!(apply_selection(&toy(2, 2), &[]), Err(Error::EmptySelection)));
        assert!(matches!(apply_mask(&toy(2, 2), &[0, 0]), Err(Error::EmptySelection)));
    }
}
