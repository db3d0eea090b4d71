use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, NoiseFlag};
use crate::error::{Error, Result};
use crate::ndcore::Tensor;
use crate::rng::Rng;

/// Kind of artificial feature appended by [`inject_noise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// i.i.d. standard normal columns.
    Random,
    /// A copy of an original column plus Gaussian noise.
    Corrupted,
    /// Product of two distinct original columns.
    SecondOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Share of artificial columns in the output, in (0, 1).
    pub artificial_fraction: f64,
    /// Corruption noise std as a multiple of the source column's std.
    pub corruption_scale: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            artificial_fraction: 0.5,
            corruption_scale: 1.0,
        }
    }
}

/// Element-wise product of columns `a` and `b`.
pub fn product_column(x: &Tensor, a: usize, b: usize) -> Vec<f64> {
    let (n, d) = x.dims2();
    let data = x.data();
    (0..n).map(|r| data[r * d + a] * data[r * d + b]).collect()
}

fn pop_std(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let m = col.iter().sum::<f64>() / n;
    (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
}

/// Append artificial columns so they make up `artificial_fraction` of the
/// result (with the default 0.5, `D` originals become `2D` columns). Original
/// columns are copied unchanged and flags record each column's provenance.
pub fn inject_noise(ds: &Dataset, kind: NoiseKind, config: &NoiseConfig, rng: &mut Rng) -> Result<Dataset> {
    let (n, d) = ds.x.dims2();
    let f = config.artificial_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Config(format!("artificial fraction must lie in (0, 1), got {f}")));
    }
    if d == 0 || n == 0 {
        return Err(Error::EmptyDataset);
    }
    if kind == NoiseKind::SecondOrder && d < 2 {
        return Err(Error::Contract("second-order features need at least 2 columns".into()));
    }
    let k = ((d as f64) * f / (1.0 - f)).round().max(1.0) as usize;

    let mut new_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut names = Vec::with_capacity(k);
    for i in 0..k {
        match kind {
            NoiseKind::Random => {
                new_cols.push((0..n).map(|_| StandardNormal.sample(rng)).collect());
                names.push(format!("art_random_{i}"));
            }
            NoiseKind::Corrupted => {
                let src = rng.random_range(0..d);
                let col = ds.column(src);
                let sigma = config.corruption_scale * pop_std(&col);
                new_cols.push(
                    col.iter()
                        .map(|v| {
                            let z: f64 = StandardNormal.sample(rng);
                            v + sigma * z
                        })
                        .collect(),
                );
                names.push(format!("art_corrupted_{i}_src{src}"));
            }
            NoiseKind::SecondOrder => {
                let a = rng.random_range(0..d);
                let mut b = rng.random_range(0..d - 1);
                if b >= a {
                    b += 1;
                }
                new_cols.push(product_column(&ds.x, a, b));
                names.push(format!("art_second_order_{i}_src{a}x{b}"));
            }
        }
    }

    let flag = match kind {
        NoiseKind::Random => NoiseFlag::Random,
        NoiseKind::Corrupted => NoiseFlag::Corrupted,
        NoiseKind::SecondOrder => NoiseFlag::SecondOrder,
    };
    let width = d + k;
    let mut data = Vec::with_capacity(n * width);
    for r in 0..n {
        data.extend_from_slice(ds.x.row_slice(r));
        data.extend(new_cols.iter().map(|c| c[r]));
    }
    let mut flags = ds.noise_flags.clone().unwrap_or_else(|| vec![NoiseFlag::Original; d]);
    flags.extend(std::iter::repeat_n(flag, k));
    let mut feature_names = ds.feature_names.clone();
    feature_names.extend(names);

    Dataset {
        x: Tensor::matrix(n, width, data)?,
        y: ds.y.clone(),
        feature_names,
        target_name: ds.target_name.clone(),
        noise_flags: None,
    }
    .with_flags(flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{toy, Targets};
    use crate::rng::{stream, Stream};

    #[test]
    fn doubles_the_width_for_every_kind() {
        let ds = toy(6, 3);
        for kind in [NoiseKind::Random, NoiseKind::Corrupted, NoiseKind::SecondOrder] {
            let out = inject_noise(&ds, kind, &NoiseConfig::default(), &mut stream(1, Stream::Data)).unwrap();
            assert_eq!(out.n_features(), 6);
            let flags = out.noise_flags.as_ref().unwrap();
            assert_eq!(flags.iter().filter(|f| !f.is_artificial()).count(), 3);
            assert_eq!(flags.iter().filter(|f| f.is_artificial()).count(), 3);
            for r in 0..6 {
                assert_eq!(&out.x.row_slice(r)[..3], ds.x.row_slice(r));
            }
        }
    }

    #[test]
    fn fixed_pair_product() {
        let x = Tensor::from_rows(&[&[1.0, 3.0], &[2.0, 4.0]]);
        assert_eq!(product_column(&x, 0, 1), vec![3.0, 8.0]);
    }

    #[test]
    fn second_order_needs_two_columns() {
        let ds = toy(4, 1);
        assert!(inject_noise(&ds, NoiseKind::SecondOrder, &NoiseConfig::default(), &mut stream(0, Stream::Data)).is_err());
    }

    #[test]
    fn second_order_columns_are_products_of_distinct_sources() {
        let ds = toy(5, 4);
        let out = inject_noise(&ds, NoiseKind::SecondOrder, &NoiseConfig::default(), &mut stream(2, Stream::Data)).unwrap();
        for j in 4..8 {
            let col = out.column(j);
            let found = (0..4).any(|a| (0..4).any(|b| a != b && product_column(&ds.x, a, b) == col));
            assert!(found, "column {j} is not a product of two distinct originals");
        }
    }

    #[test]
    fn same_seed_same_noise() {
        let ds = toy(5, 2);
        let a = inject_noise(&ds, NoiseKind::Corrupted, &NoiseConfig::default(), &mut stream(3, Stream::Data)).unwrap();
        let b = inject_noise(&ds, NoiseKind::Corrupted, &NoiseConfig::default(), &mut stream(3, Stream::Data)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_columns_are_uncorrelated_with_labels() {
        // Labels independent of the construction; sample correlation should be O(1/√N).
        let n = 10_000;
        let mut rng = stream(11, Stream::Data);
        let x = Tensor::matrix(n, 2, (0..2 * n).map(|_| rng.random::<f64>()).collect()).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let ds = Dataset::new(
            x,
            Targets::Classes {
                labels: labels.clone(),
                class_names: vec!["0".into(), "1".into()],
            },
            vec!["a".into(), "b".into()],
            "y",
        )
        .unwrap();
        let out = inject_noise(&ds, NoiseKind::Random, &NoiseConfig::default(), &mut rng).unwrap();
        let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        for j in 2..4 {
            let c = out.column(j);
            assert!(pearson(&c, &y).abs() < 0.05);
        }
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }
}
