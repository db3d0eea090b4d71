use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Fractions {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let f = Self {
            train,
            validation,
            test,
        };
        let parts = [train, validation, test];
        if parts.iter().any(|&p| !(p > 0.0)) || ((train + validation + test) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got {parts:?}"
            )));
        }
        Ok(f)
    }
}

impl Default for Fractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub indices: [Vec<usize>; 3],
}

/// Disjoint train/validation/test cover of the rows.
///
/// Classification splits are stratified: rows are shuffled within each class
/// and then interleaved by their relative rank inside the class, so every
/// contiguous chunk of the resulting order has close to the overall class
/// proportions.
pub fn split(ds: &Dataset, fractions: Fractions, rng: &mut Rng) -> Result<Split> {
    let n = ds.n_rows();
    let order: Vec<usize> = match &ds.y {
        Targets::Classes { labels, class_names } => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_names.len()];
            for (i, &l) in labels.iter().enumerate() {
                by_class[l].push(i);
            }
            let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
            for (c, rows) in by_class.iter_mut().enumerate() {
                if rows.is_empty() {
                    continue;
                }
                if rows.len() < 3 {
                    return Err(Error::Data(format!(
                        "class `{}` has {} samples, fewer than the 3 splits",
                        class_names[c],
                        rows.len()
                    )));
                }
                rows.shuffle(rng);
                let m = rows.len() as f64;
                keyed.extend(rows.iter().enumerate().map(|(k, &r)| ((k as f64 + 0.5) / m, c, r)));
            }
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().map(|(_, _, r)| r).collect()
        }
        Targets::Real(_) => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx
        }
    };
    let n_train = (n as f64 * fractions.train).round() as usize;
    let n_val = (n as f64 * fractions.validation).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Data(format!("{n} rows cannot fill three non-empty splits")));
    }
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    Ok(Split {
        train: ds.select_rows(&train),
        validation: ds.select_rows(&val),
        test: ds.select_rows(&test),
        indices: [train, val, test],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy;
    use crate::ndcore::Tensor;
    use crate::rng::{stream, Stream};

    #[test]
    fn sizes_eight_one_one() {
        let ds = Dataset::new(
            Tensor::zeros(&[10, 2]),
            Targets::Real(vec![0.0; 10]),
            vec!["a".into(), "b".into()],
            "y",
        )
        .unwrap();
        let s = split(&ds, Fractions::new(0.8, 0.1, 0.1).unwrap(), &mut stream(0, Stream::Split)).unwrap();
        assert_eq!(
            [s.train.n_rows(), s.validation.n_rows(), s.test.n_rows()],
            [8, 1, 1]
        );
    }

    #[test]
    fn disjoint_cover() {
        let ds = toy(40, 2);
        let s = split(&ds, Fractions::default(), &mut stream(1, Stream::Split)).unwrap();
        let mut all: Vec<usize> = s.indices.concat();
        all.sort();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_within_one_sample() {
        let n = 90;
        let labels: Vec<usize> = (0..n).map(|i| if i < 60 { 0 } else { 1 }).collect();
        let ds = Dataset::new(
            Tensor::zeros(&[n, 1]),
            Targets::Classes {
                labels,
                class_names: vec!["a".into(), "b".into()],
            },
            vec!["f".into()],
            "y",
        )
        .unwrap();
        let s = split(&ds, Fractions::default(), &mut stream(2, Stream::Split)).unwrap();
        for part in [&s.train, &s.validation, &s.test] {
            let Targets::Classes { labels, .. } = &part.y else { unreachable!() };
            let ones = labels.iter().filter(|&&l| l == 1).count() as f64;
            let expected = part.n_rows() as f64 / 3.0;
            assert!((ones - expected).abs() <= 1.0, "{ones} vs {expected}");
        }
    }

    #[test]
    fn same_seed_same_split() {
        let ds = toy(30, 2);
        let a = split(&ds, Fractions::default(), &mut stream(5, Stream::Split)).unwrap();
        let b = split(&ds, Fractions::default(), &mut stream(5, Stream::Split)).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn tiny_class_is_rejected() {
        let ds = Dataset::new(
            Tensor::zeros(&[12, 1]),
            Targets::Classes {
                labels: (0..12).map(|i| usize::from(i == 0)).collect(),
                class_names: vec!["a".into(), "b".into()],
            },
            vec!["f".into()],
            "y",
        )
        .unwrap();
        assert!(split(&ds, Fractions::default(), &mut stream(0, Stream::Split)).is_err());
    }

    #[test]
    fn fractions_validated() {
        assert!(Fractions::new(0.5, 0.5, 0.0).is_err());
        assert!(Fractions::new(0.5, 0.3, 0.3).is_err());
    }
}
