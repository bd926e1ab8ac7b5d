//! Binary spike rasters on a discrete time grid.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{RadError, Result};

/// Number of samples covering `duration_ms` at step `sample_time_ms`, counting both ends.
pub fn step_count(duration_ms: f64, sample_time_ms: f64) -> usize {
    (duration_ms / sample_time_ms).floor() as usize + 1
}

/// Spike trains of a population, `[neurons × steps]`, entries in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeRaster {
    data: Array2<u8>,
    sample_time_ms: SampleTime,
}

/// Sample period stored as raw bits so the raster can be `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct SampleTime(u64);

impl SpikeRaster {
    pub fn zeros(neurons: usize, steps: usize, sample_time_ms: f64) -> Self {
        Self {
            data: Array2::zeros((neurons, steps)),
            sample_time_ms: SampleTime(sample_time_ms.to_bits()),
        }
    }

    /// Builds a raster from any array, mapping every non-zero entry to a spike.
    pub fn from_array(data: Array2<u8>, sample_time_ms: f64) -> Self {
        Self {
            data: data.mapv(|v| u8::from(v != 0)),
            sample_time_ms: SampleTime(sample_time_ms.to_bits()),
        }
    }

    /// Thresholds a real-valued signal: `x >= 0.5` becomes a spike.
    pub fn from_signal(signal: &Array2<f64>, sample_time_ms: f64) -> Self {
        Self {
            data: signal.mapv(|v| u8::from(v >= 0.5)),
            sample_time_ms: SampleTime(sample_time_ms.to_bits()),
        }
    }

    pub fn from_rows(rows: &[&[u8]], sample_time_ms: f64) -> Result<Self> {
        let steps = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != steps) {
            return Err(RadError::shape("raster rows", steps, bad.len()));
        }
        let flat: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let data = Array2::from_shape_vec((rows.len(), steps), flat)
            .map_err(|e| RadError::shape("raster rows", "rectangular", e))?;
        Ok(Self::from_array(data, sample_time_ms))
    }

    pub fn neurons(&self) -> usize {
        self.data.nrows()
    }

    pub fn steps(&self) -> usize {
        self.data.ncols()
    }

    pub fn sample_time_ms(&self) -> f64 {
        f64::from_bits(self.sample_time_ms.0)
    }

    pub fn data(&self) -> &Array2<u8> {
        &self.data
    }

    pub fn get(&self, neuron: usize, step: usize) -> bool {
        self.data[[neuron, step]] != 0
    }

    pub fn set(&mut self, neuron: usize, step: usize, spike: bool) {
        self.data[[neuron, step]] = u8::from(spike);
    }

    pub fn to_signal(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    pub fn counts(&self) -> Vec<u32> {
        self.data
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| u32::from(v)).sum())
            .collect()
    }

    pub fn total_spikes(&self) -> u64 {
        self.data.iter().map(|&v| u64::from(v)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_includes_both_ends() {
        assert_eq!(step_count(5.0, 1.0), 6);
        assert_eq!(step_count(5.5, 1.0), 6);
        assert_eq!(step_count(300.0, 1.0), 301);
    }

    #[test]
    fn from_array_binarizes() {
        let r = SpikeRaster::from_array(ndarray::array![[0, 3], [1, 0]], 1.0);
        assert_eq!(r.data(), &ndarray::array![[0u8, 1], [1, 0]]);
        assert_eq!(r.counts(), vec![1, 1]);
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = SpikeRaster::from_rows(&[&[0, 1], &[1]], 1.0).unwrap_err();
        assert!(matches!(err, RadError::Shape { .. }));
    }
}
