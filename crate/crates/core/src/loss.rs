//! Spike-count loss, its per-step gradient and the count-based readout.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{RadError, Result};
use crate::raster::SpikeRaster;

/// Desired output spike counts over one observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub true_class_count: u32,
    pub false_class_count: u32,
    pub window_steps: usize,
}

impl TargetSpec {
    /// 60 spikes for the labelled class and 10 for the rest per 300 steps,
    /// scaled linearly to `window_steps`.
    pub fn scaled_default(window_steps: usize) -> Self {
        let scale = window_steps as f64 / 300.0;
        Self {
            true_class_count: (60.0 * scale).round().max(1.0) as u32,
            false_class_count: (10.0 * scale).round() as u32,
            window_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_class_count > self.false_class_count {
            Ok(())
        } else {
            Err(RadError::Config(format!(
                "true_class_count ({}) must exceed false_class_count ({})",
                self.true_class_count, self.false_class_count
            )))
        }
    }

    pub fn target_for(&self, neuron: usize, label: usize) -> f64 {
        if neuron == label {
            f64::from(self.true_class_count)
        } else {
            f64::from(self.false_class_count)
        }
    }
}

fn check_label(neurons: usize, label: usize) -> Result<()> {
    if label < neurons {
        Ok(())
    } else {
        Err(RadError::shape("label", format!("< {neurons}"), label))
    }
}

/// `Σ_i (target_i - count_i)²` over real-valued counts.
pub fn count_loss_from_counts(counts: &[f64], target: &TargetSpec, label: usize) -> Result<f64> {
    check_label(counts.len(), label)?;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let diff = target.target_for(i, label) - c;
            diff * diff
        })
        .sum())
}

pub fn count_loss(output: &SpikeRaster, target: &TargetSpec, label: usize) -> Result<f64> {
    let counts: Vec<f64> = output.counts().into_iter().map(f64::from).collect();
    count_loss_from_counts(&counts, target, label)
}

/// `∂L/∂s[i, n] = -2 (target_i - count_i)`, constant along time.
pub fn count_loss_gradient_from_counts(
    counts: &[f64],
    steps: usize,
    target: &TargetSpec,
    label: usize,
) -> Result<Array2<f64>> {
    check_label(counts.len(), label)?;
    let mut grad = Array2::zeros((counts.len(), steps));
    for (i, &c) in counts.iter().enumerate() {
        let g = -2.0 * (target.target_for(i, label) - c);
        grad.row_mut(i).fill(g);
    }
    Ok(grad)
}

pub fn count_loss_gradient(
    output: &SpikeRaster,
    target: &TargetSpec,
    label: usize,
) -> Result<Array2<f64>> {
    let counts: Vec<f64> = output.counts().into_iter().map(f64::from).collect();
    count_loss_gradient_from_counts(&counts, output.steps(), target, label)
}

/// Index of the largest count, lowest index on ties.
pub fn argmax_count<T: PartialOrd + Copy>(counts: &[T]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub class: usize,
    /// The output layer stayed silent and the class fell back to 0.
    pub no_spike: bool,
}

pub fn classify(output: &SpikeRaster) -> Classification {
    let counts = output.counts();
    Classification {
        class: argmax_count(&counts),
        no_spike: counts.iter().all(|&c| c == 0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster_with_counts(counts: &[usize], steps: usize) -> SpikeRaster {
        let mut r = SpikeRaster::zeros(counts.len(), steps, 1.0);
        for (i, &c) in counts.iter().enumerate() {
            for n in 0..c {
                r.set(i, n, true);
            }
        }
        r
    }

    #[test]
    fn exact_match_has_zero_loss() {
        let t = TargetSpec {
            true_class_count: 5,
            false_class_count: 1,
            window_steps: 10,
        };
        let r = raster_with_counts(&[1, 5, 1], 10);
        assert_eq!(count_loss(&r, &t, 1).unwrap(), 0.0);
        assert!(count_loss_gradient(&r, &t, 1).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_neuron_off_by_two() {
        let t = TargetSpec {
            true_class_count: 5,
            false_class_count: 1,
            window_steps: 10,
        };
        let r = raster_with_counts(&[3, 1], 10);
        assert_eq!(count_loss(&r, &t, 0).unwrap(), 4.0);
        let g = count_loss_gradient(&r, &t, 0).unwrap();
        assert!(g.row(0).iter().all(|&v| v == -4.0));
        assert!(g.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_targets_example() {
        let t = TargetSpec::scaled_default(300);
        assert_eq!((t.true_class_count, t.false_class_count), (60, 10));
        let r = raster_with_counts(&[50, 10, 10, 10], 300);
        assert_eq!(count_loss(&r, &t, 0).unwrap(), 100.0);
    }

    #[test]
    fn too_many_spikes_push_down() {
        let t = TargetSpec {
            true_class_count: 3,
            false_class_count: 0,
            window_steps: 8,
        };
        let r = raster_with_counts(&[3, 2], 8);
        let g = count_loss_gradient(&r, &t, 0).unwrap();
        assert!(g.row(1).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn label_out_of_range() {
        let t = TargetSpec::scaled_default(10);
        let r = raster_with_counts(&[1, 1], 10);
        assert!(count_loss(&r, &t, 2).is_err());
        assert!(count_loss_gradient(&r, &t, 5).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&raster_with_counts(&[3, 7, 1], 10)).class, 1);
        assert_eq!(classify(&raster_with_counts(&[4, 4], 10)).class, 0);
        let silent = classify(&raster_with_counts(&[0, 0, 0], 10));
        assert_eq!(silent, Classification { class: 0, no_spike: true });
    }

    #[test]
    fn scaled_targets() {
        let t = TargetSpec::scaled_default(600);
        assert_eq!((t.true_class_count, t.false_class_count), (120, 20));
        assert!(TargetSpec {
            true_class_count: 2,
            false_class_count: 2,
            window_steps: 1
        }
        .validate()
        .is_err());
    }
}
