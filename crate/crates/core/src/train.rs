//! Multi-epoch training with per-epoch reporting.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{Network, Sample};

/// Width of a delay histogram bin, ms.
pub const DELAY_BIN_MS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: u64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    /// One histogram per delayed layer; bin `k` counts delays in `[8k, 8k + 8)` ms.
    pub delay_histograms: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    pub weight_params: usize,
    pub delay_params: usize,
    /// Excluded from equality-sensitive summaries.
    pub wall_clock_s: f64,
}

impl TrainReport {
    pub fn param_count(&self) -> usize {
        self.weight_params + self.delay_params
    }

    pub fn final_test_accuracy(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.test_accuracy)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_accuracy,test_loss,test_accuracy,delay_histograms\n");
        for r in &self.rows {
            let hist = r
                .delay_histograms
                .iter()
                .map(|h| h.iter().map(u32::to_string).collect::<Vec<_>>().join(" "))
                .collect::<Vec<_>>()
                .join("|");
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.train_accuracy, r.test_loss, r.test_accuracy, hist
            ));
        }
        out
    }
}

pub fn delay_histogram(delays: &[f64]) -> Vec<u32> {
    let bins = delays
        .iter()
        .map(|&d| (d / DELAY_BIN_MS).floor() as usize + 1)
        .max()
        .unwrap_or(0);
    let mut hist = vec![0u32; bins];
    for &d in delays {
        hist[(d / DELAY_BIN_MS).floor() as usize] += 1;
    }
    hist
}

/// Trains for `epochs` passes, evaluating on `test` after each one.
pub fn fit(net: &mut Network, train: &[Sample], test: &[Sample], epochs: usize) -> Result<TrainReport> {
    let started = Instant::now();
    let mut rows = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let stats = net.train_epoch(train)?;
        let eval = net.evaluate(test)?;
        rows.push(EpochRow {
            epoch: net.epochs_done,
            train_loss: stats.loss,
            train_accuracy: stats.accuracy,
            test_loss: eval.mean_loss,
            test_accuracy: eval.accuracy,
            delay_histograms: net.delay_values().iter().map(|d| delay_histogram(d)).collect(),
        });
    }
    Ok(TrainReport {
        rows,
        weight_params: net.spec.weight_param_count(),
        delay_params: net.spec.delay_param_count(),
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins() {
        assert_eq!(delay_histogram(&[0.0, 7.9, 8.0, 20.0]), vec![2, 1, 1]);
        assert!(delay_histogram(&[]).is_empty());
    }
}
