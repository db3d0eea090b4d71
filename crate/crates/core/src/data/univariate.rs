use super::{Dataset, Targets};
use crate::error::{Error, Result};

/// Score assigned when a feature separates the groups with zero residual
/// variance, where the F ratio is unbounded.
pub const F_SENTINEL: f64 = 1e12;

/// Per-feature univariate F statistic: one-way ANOVA across classes for
/// classification, the squared-correlation F test for regression. Constant
/// features score 0.
pub fn univariate_f_scores(ds: &Dataset) -> Result<Vec<f64>> {
    let d = ds.n_features();
    match &ds.y {
        Targets::Classes { labels, class_names } => {
            let mut counts = vec![0usize; class_names.len()];
            for &l in labels {
                counts[l] += 1;
            }
            let present = counts.iter().filter(|&&c| c > 0).count();
            if present < 2 {
                return Err(Error::Contract(format!(
                    "ANOVA needs at least 2 populated classes, found {present}"
                )));
            }
            Ok((0..d).map(|j| anova_f(&ds.column(j), labels, &counts, present)).collect())
        }
        Targets::Real(y) => Ok((0..d).map(|j| regression_f(&ds.column(j), y)).collect()),
    }
}

fn is_constant(col: &[f64]) -> bool {
    col.iter().all(|&v| v == col[0])
}

fn anova_f(col: &[f64], labels: &[usize], counts: &[usize], k: usize) -> f64 {
    if is_constant(col) {
        return 0.0;
    }
    let n = col.len();
    let mut sums = vec![0.0; counts.len()];
    for (&v, &l) in col.iter().zip(labels) {
        sums[l] += v;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let grand = col.iter().sum::<f64>() / n as f64;
    let ssb: f64 = means
        .iter()
        .zip(counts)
        .map(|(m, &c)| c as f64 * (m - grand) * (m - grand))
        .sum();
    let ssw: f64 = col
        .iter()
        .zip(labels)
        .map(|(&v, &l)| (v - means[l]) * (v - means[l]))
        .sum();
    let sst = ssb + ssw;
    if ssw <= 1e-12 * sst || n == k {
        return if ssb > 0.0 { F_SENTINEL } else { 0.0 };
    }
    (ssb / (k - 1) as f64) / (ssw / (n - k) as f64)
}

fn regression_f(col: &[f64], y: &[f64]) -> f64 {
    let n = col.len();
    if n < 3 || is_constant(col) || is_constant(y) {
        return 0.0;
    }
    let mx = col.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in col.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let r2 = (sxy * sxy / (sxx * syy)).min(1.0);
    if r2 >= 1.0 - 1e-12 {
        return F_SENTINEL;
    }
    r2 / (1.0 - r2) * (n - 2) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Tensor;

    fn classes(cols: &[&[f64]], labels: &[usize]) -> Dataset {
        let n = labels.len();
        let d = cols.len();
        let mut data = Vec::new();
        for r in 0..n {
            for c in cols {
                data.push(c[r]);
            }
        }
        let n_classes = labels.iter().max().unwrap() + 1;
        Dataset::new(
            Tensor::matrix(n, d, data).unwrap(),
            Targets::Classes {
                labels: labels.to_vec(),
                class_names: (0..n_classes.max(2)).map(|c| c.to_string()).collect(),
            },
            (0..d).map(|j| format!("f{j}")).collect(),
            "y",
        )
        .unwrap()
    }

    #[test]
    fn hand_anova() {
        // SSB = 4 on 1 df, SSW = 1 on 2 df.
        let ds = classes(&[&[1.0, 2.0, 3.0, 4.0]], &[0, 0, 1, 1]);
        assert!((univariate_f_scores(&ds).unwrap()[0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_scores_zero() {
        let ds = classes(&[&[7.0; 4]], &[0, 0, 1, 1]);
        assert_eq!(univariate_f_scores(&ds).unwrap()[0], 0.0);
    }

    #[test]
    fn perfect_separation_hits_sentinel() {
        let ds = classes(&[&[0.1, 0.1, 0.1, 5.0, 5.0]], &[0, 0, 0, 1, 1]);
        assert_eq!(univariate_f_scores(&ds).unwrap()[0], F_SENTINEL);
    }

    #[test]
    fn single_class_is_rejected() {
        let ds = classes(&[&[1.0, 2.0, 3.0]], &[0, 0, 0]);
        assert!(matches!(univariate_f_scores(&ds), Err(Error::Contract(_))));
    }

    #[test]
    fn regression_matches_correlation_form() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.1, 1.9, 3.2, 3.8, 5.3];
        let ds = Dataset::new(
            Tensor::matrix(5, 1, x.to_vec()).unwrap(),
            Targets::Real(y.to_vec()),
            vec!["x".into()],
            "y",
        )
        .unwrap();
        let mx = 3.0;
        let my = y.iter().sum::<f64>() / 5.0;
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
        let r2 = sxy * sxy / (sxx * syy);
        let expected = r2 / (1.0 - r2) * 3.0;
        assert!((univariate_f_scores(&ds).unwrap()[0] - expected).abs() < 1e-9 * expected);
    }
}
