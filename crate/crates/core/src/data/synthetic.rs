//! Seeded synthetic datasets with known ground truth.

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Targets};
use crate::ndcore::{sigmoid, Tensor};
use crate::rng::Rng;

/// A dataset together with the columns that carry the signal.
#[derive(Clone, Debug)]
pub struct Planted {
    pub dataset: Dataset,
    pub informative: Vec<usize>,
}

fn binary(labels: Vec<usize>) -> Targets {
    Targets::Classes {
        labels,
        class_names: vec!["0".into(), "1".into()],
    }
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

fn normal_matrix(n: usize, d: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n * d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Standard-normal features; the label is Bernoulli with success probability
/// `σ(Σ β_i x_i)` over `k` randomly placed informative columns, with
/// coefficients of magnitude `strength` and alternating sign.
pub fn planted_logistic(n: usize, d: usize, k: usize, strength: f64, rng: &mut Rng) -> Planted {
    assert!(k <= d, "more informative features than columns");
    let mut informative = sample(rng, d, k).into_vec();
    informative.sort_unstable();
    let data = normal_matrix(n, d, rng);
    let labels = (0..n)
        .map(|r| {
            let z: f64 = informative
                .iter()
                .enumerate()
                .map(|(i, &j)| {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    sign * strength * data[r * d + j]
                })
                .sum();
            usize::from(rng.random::<f64>() < sigmoid(z))
        })
        .collect();
    Planted {
        dataset: Dataset::new(Tensor::matrix(n, d, data).expect("shape"), binary(labels), names(d), "y")
            .expect("consistent"),
        informative,
    }
}

/// Standard-normal features with `y = 1[x_0 > 0]`.
pub fn sign_of_first(n: usize, d: usize, rng: &mut Rng) -> Planted {
    let data = normal_matrix(n, d, rng);
    let labels = (0..n).map(|r| usize::from(data[r * d] > 0.0)).collect();
    Planted {
        dataset: Dataset::new(Tensor::matrix(n, d, data).expect("shape"), binary(labels), names(d), "y")
            .expect("consistent"),
        informative: vec![0],
    }
}

// Segments a..g of a seven-segment display for digits 0..9.
const SEGMENTS: [&str; 10] = [
    "abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afgedc", "abc", "abcdefg", "abcdfg",
];

/// Seven-segment digit images on a `side × side` grid (`side ≥ 12`).
///
/// Each image draws one digit in a box near the centre, shifted by up to one
/// pixel, with random stroke intensity and pixel jitter clipped to [0, 1]. The
/// outer frame never receives ink, so many border features are constant.
pub fn digit_images(n: usize, side: usize, rng: &mut Rng) -> Dataset {
    assert!(side >= 12, "image side must be at least 12");
    let d = side * side;
    let (box_w, box_h) = (side / 2 - 1, side - 5);
    let left0 = (side - box_w) / 2;
    let top0 = (side - box_h) / 2;
    let mut data = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let digit = rng.random_range(0..10);
        labels.push(digit);
        let dx = rng.random_range(-1i64..=1);
        let dy = rng.random_range(-1i64..=1);
        let left = (left0 as i64 + dx) as usize;
        let top = (top0 as i64 + dy) as usize;
        let (right, bottom, mid) = (left + box_w - 1, top + box_h - 1, top + box_h / 2);
        let ink: f64 = rng.random_range(0.6..1.0);
        let img = &mut data[r * d..(r + 1) * d];
        let mut paint = |row: usize, col: usize, rng: &mut Rng| {
            let jitter: f64 = 0.1 * Distribution::<f64>::sample(&StandardNormal, rng);
            img[row * side + col] = (ink + jitter).clamp(0.0, 1.0);
        };
        for seg in SEGMENTS[digit].chars() {
            match seg {
                'a' => (left..=right).for_each(|c| paint(top, c, rng)),
                'g' => (left..=right).for_each(|c| paint(mid, c, rng)),
                'd' => (left..=right).for_each(|c| paint(bottom, c, rng)),
                'f' => (top..=mid).for_each(|row| paint(row, left, rng)),
                'b' => (top..=mid).for_each(|row| paint(row, right, rng)),
                'e' => (mid..=bottom).for_each(|row| paint(row, left, rng)),
                'c' => (mid..=bottom).for_each(|row| paint(row, right, rng)),
                _ => unreachable!(),
            }
        }
    }
    let names = (0..d).map(|j| format!("px_{}_{}", j / side, j % side)).collect();
    Dataset::new(
        Tensor::matrix(n, d, data).expect("shape"),
        Targets::Classes {
            labels,
            class_names: (0..10).map(|c| c.to_string()).collect(),
        },
        names,
        "digit",
    )
    .expect("consistent")
}
