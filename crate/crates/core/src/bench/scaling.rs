use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::synthetic::planted_logistic;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::trainer::{train, TrainConfig};

/// Exponent published for this method's GPU implementation. Reported next to
/// the measured value for comparison; it is not a target.
pub const PUBLISHED_ALPHA: f64 = 0.08;

/// Wall-clock training time as a function of the feature count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub dims: Vec<usize>,
    /// Median seconds per dimension.
    pub times: Vec<f64>,
    /// Every trial, `trial_times[i][t]` for `dims[i]`.
    pub trial_times: Vec<Vec<f64>>,
    /// Slope of the least-squares line of `ln t` on `ln D`.
    pub alpha: f64,
    pub r2: f64,
    pub trials: usize,
    pub n_rows: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub published_alpha: f64,
    pub timer_resolution_s: f64,
    /// Empty unless the timer is too coarse for the shortest measurement.
    pub warning: String,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Ordinary least squares of `ln t` on `ln D`; returns `(slope, r²)`.
pub fn fit_power_law(dims: &[usize], times: &[f64]) -> Result<(f64, f64)> {
    if dims.len() != times.len() || dims.len() < 2 {
        return Err(Error::Contract("need at least two (D, t) pairs of equal length".into()));
    }
    if times.iter().any(|&t| !(t > 0.0)) || dims.contains(&0) {
        return Err(Error::Contract("dimensions and times must be strictly positive".into()));
    }
    let xs: Vec<f64> = dims.iter().map(|&d| (d as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract("dimensions must not all be equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot <= f64::EPSILON * f64::EPSILON { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((slope, r2))
}

/// Smallest observable positive step of the monotonic clock, in seconds.
pub fn timer_resolution() -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..200 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min((b - a).as_secs_f64());
    }
    best
}

impl ScalingReport {
    /// Build a report from per-trial times, bypassing the clock.
    pub fn from_trial_times(dims: Vec<usize>, trial_times: Vec<Vec<f64>>, workload: &TrainConfig, n_rows: usize) -> Result<Self> {
        let mut distinct = dims.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(Error::Contract(format!("need at least 3 distinct dimensions, got {}", distinct.len())));
        }
        let trials = trial_times.first().map_or(0, Vec::len);
        if trials < 3 || trial_times.len() != dims.len() || trial_times.iter().any(|t| t.len() != trials) {
            return Err(Error::Contract("need at least 3 trials for every dimension".into()));
        }
        let times: Vec<f64> = trial_times.iter().map(|t| median(t)).collect();
        let (alpha, r2) = fit_power_law(&dims, &times)?;
        Ok(Self {
            dims,
            times,
            trial_times,
            alpha,
            r2,
            trials,
            n_rows,
            epochs: workload.epochs,
            batch_size: workload.batch_size,
            published_alpha: PUBLISHED_ALPHA,
            timer_resolution_s: 0.0,
            warning: String::new(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dim,median_seconds,ln_dim,ln_seconds\n");
        for (d, t) in self.dims.iter().zip(&self.times) {
            s.push_str(&format!("{d},{t},{},{}\n", (*d as f64).ln(), t.ln()));
        }
        s
    }
}

/// Time `trials` full training runs of `workload` for every `D` in `dims` on
/// seeded synthetic data with `n_rows` rows, strictly sequentially.
pub fn measure_scaling(dims: &[usize], n_rows: usize, workload: &TrainConfig, trials: usize) -> Result<ScalingReport> {
    if trials < 3 {
        return Err(Error::Contract(format!("need at least 3 trials, got {trials}")));
    }
    let mut distinct = dims.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Contract("need at least 3 distinct dimensions".into()));
    }
    let mut trial_times = Vec::with_capacity(dims.len());
    for &d in dims {
        let mut data_rng = rng::stream(workload.seed ^ d as u64, Stream::Data);
        let ds = planted_logistic(n_rows, d, d.min(5), 2.0, &mut data_rng).dataset;
        let mut per = Vec::with_capacity(trials);
        for _ in 0..trials {
            let start = Instant::now();
            let out = train(&ds, workload)?;
            per.push(start.elapsed().as_secs_f64());
            std::hint::black_box(out);
        }
        trial_times.push(per);
    }
    let mut report = ScalingReport::from_trial_times(dims.to_vec(), trial_times, workload, n_rows)?;
    report.timer_resolution_s = timer_resolution();
    let shortest = report.times.iter().cloned().fold(f64::INFINITY, f64::min);
    if report.timer_resolution_s > 0.01 * shortest {
        report.warning = format!(
            "timer resolution {:.3e}s exceeds 1% of the shortest median time {:.3e}s",
            report.timer_resolution_s, shortest
        );
    }
    Ok(report)
}
