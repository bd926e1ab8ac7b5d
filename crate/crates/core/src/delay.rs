//! Rectified axonal delay: per-neuron trainable shifts of a layer's output spikes.
//!
//! Each neuron keeps a raw delay `d` that the optimizer moves freely and an
//! effective delay `d̂ = min(max(d, 0), θ_d)`. The forward pass shifts the
//! neuron's spike train by `round(d̂ / T_s)` steps and drops spikes pushed past
//! the end of the window.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{RadError, Result};
use crate::raster::SpikeRaster;

/// Upper bound `θ_d` on the effective delay, in ms. May be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DelayCap(f64);

impl DelayCap {
    pub const INFINITE: DelayCap = DelayCap(f64::INFINITY);

    pub fn new(theta_d: f64) -> Result<Self> {
        if theta_d >= 0.0 && !theta_d.is_nan() {
            Ok(Self(theta_d))
        } else {
            Err(RadError::Config(format!("theta_d must be >= 0 or inf, got {theta_d}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Label used in reports: the number, or `+inf`.
    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DelayCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("+inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for DelayCap {
    type Err = RadError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "+inf" | "infinity" | "+infinity" => Ok(Self::INFINITE),
            other => other
                .parse::<f64>()
                .map_err(|_| RadError::Config(format!("theta_d {other:?} is not a number or \"inf\"")))
                .and_then(Self::new),
        }
    }
}

impl Serialize for DelayCap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for DelayCap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => DelayCap::new(v),
            Repr::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

pub fn clamp_delay(d: f64, theta_d: DelayCap) -> f64 {
    if d < 0.0 {
        0.0
    } else if d > theta_d.0 {
        theta_d.0
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayState {
    raw: Vec<f64>,
    clamped: Vec<f64>,
    theta_d: DelayCap,
}

impl DelayState {
    /// All delays start at zero, i.e. the undelayed network.
    pub fn zeros(neurons: usize, theta_d: DelayCap) -> Self {
        Self::from_raw(vec![0.0; neurons], theta_d)
    }

    pub fn from_raw(raw: Vec<f64>, theta_d: DelayCap) -> Self {
        let clamped = raw.iter().map(|&d| clamp_delay(d, theta_d)).collect();
        Self {
            raw,
            clamped,
            theta_d,
        }
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn clamped(&self) -> &[f64] {
        &self.clamped
    }

    pub fn theta_d(&self) -> DelayCap {
        self.theta_d
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Whole-step shifts actually applied, `round(d̂ / T_s)`, saturated at `limit`.
    pub fn step_shifts(&self, sample_time_ms: f64, limit: usize) -> Vec<usize> {
        self.clamped
            .iter()
            .map(|&d| {
                let k = (d / sample_time_ms).round();
                if k >= limit as f64 {
                    limit
                } else {
                    k as usize
                }
            })
            .collect()
    }

    pub(crate) fn set_raw(&mut self, raw: Vec<f64>) {
        *self = Self::from_raw(raw, self.theta_d);
    }
}

/// `out[i, n] = x[i, n - shift[i]]`, zero where the source index is negative.
pub fn shift_signal(x: ArrayView2<f64>, shifts: &[usize]) -> Array2<f64> {
    let (rows, steps) = x.dim();
    let mut out = Array2::zeros((rows, steps));
    for (i, &k) in shifts.iter().enumerate() {
        for n in k..steps {
            out[[i, n]] = x[[i, n - k]];
        }
    }
    out
}

/// Adjoint of [`shift_signal`]: `out[i, n] = g[i, n + shift[i]]`, zero past the window.
pub fn unshift_gradient(g: ArrayView2<f64>, shifts: &[usize]) -> Array2<f64> {
    let (rows, steps) = g.dim();
    let mut out = Array2::zeros((rows, steps));
    for (i, &k) in shifts.iter().enumerate() {
        for n in 0..steps.saturating_sub(k) {
            out[[i, n]] = g[[i, n + k]];
        }
    }
    out
}

pub fn shift_spikes(spikes: &SpikeRaster, state: &DelayState) -> Result<SpikeRaster> {
    if spikes.neurons() != state.len() {
        return Err(RadError::shape("delay vector", spikes.neurons(), state.len()));
    }
    let shifts = state.step_shifts(spikes.sample_time_ms(), spikes.steps());
    let mut out = SpikeRaster::zeros(spikes.neurons(), spikes.steps(), spikes.sample_time_ms());
    for (i, &k) in shifts.iter().enumerate() {
        for n in k..spikes.steps() {
            if spikes.get(i, n - k) {
                out.set(i, n, true);
            }
        }
    }
    Ok(out)
}

/// Delay gradient from the shifted spike train and `∂L/∂ŝ`.
///
/// `∂ŝ[m]/∂d̂` is estimated by the backward difference of the shifted train,
/// `-(ŝ[m] - ŝ[m-1]) / T_s` with `ŝ[-1] = 0`: delaying a train moves its
/// rising edges later, so spike mass at `m` decreases where the train rises.
/// The result is `T_s Σ_m (∂ŝ[m]/∂d̂) · upstream[m]`.
pub fn delay_gradient(
    shifted: &SpikeRaster,
    upstream: ArrayView2<f64>,
    sample_time_ms: f64,
) -> Result<Vec<f64>> {
    delay_gradient_signal(shifted.to_signal().view(), upstream, sample_time_ms)
}

pub fn delay_gradient_signal(
    shifted: ArrayView2<f64>,
    upstream: ArrayView2<f64>,
    sample_time_ms: f64,
) -> Result<Vec<f64>> {
    if shifted.dim() != upstream.dim() {
        return Err(RadError::shape(
            "delay gradient upstream",
            format!("{:?}", shifted.dim()),
            format!("{:?}", upstream.dim()),
        ));
    }
    let grads = shifted
        .rows()
        .into_iter()
        .zip(upstream.rows())
        .map(|(s, g)| {
            let mut prev = 0.0;
            let mut acc = 0.0;
            for (&cur, &up) in s.iter().zip(g.iter()) {
                acc += -(cur - prev) / sample_time_ms * up;
                prev = cur;
            }
            sample_time_ms * acc
        })
        .collect();
    Ok(grads)
}

/// Plain gradient step on the raw delays followed by re-clamping.
pub fn apply_delay_update(state: &DelayState, grad: &[f64], step_size: f64) -> Result<DelayState> {
    if grad.len() != state.len() {
        return Err(RadError::shape("delay gradient", state.len(), grad.len()));
    }
    let raw = state
        .raw
        .iter()
        .zip(grad)
        .map(|(&d, &g)| d - step_size * g)
        .collect();
    Ok(DelayState::from_raw(raw, state.theta_d))
}

/// Fractional shift by linear interpolation between neighbouring steps.
///
/// With `d̂ / T_s = k + f`: `out[n] = (1 - f) x[n - k] + f x[n - k - 1]`.
/// Only the smoothed relaxation uses this; it makes the loss differentiable in `d̂`.
pub fn shift_signal_interpolated(
    x: ArrayView2<f64>,
    delays_ms: &[f64],
    sample_time_ms: f64,
) -> Array2<f64> {
    let (rows, steps) = x.dim();
    let mut out = Array2::zeros((rows, steps));
    for (i, &d) in delays_ms.iter().enumerate().take(rows) {
        let (k, f) = split_shift(d, sample_time_ms);
        for n in 0..steps {
            let a = source(x, i, n, k);
            let b = source(x, i, n, k + 1);
            out[[i, n]] = (1.0 - f) * a + f * b;
        }
    }
    out
}

/// Adjoint of [`shift_signal_interpolated`] with respect to its input.
pub fn unshift_gradient_interpolated(
    g: ArrayView2<f64>,
    delays_ms: &[f64],
    sample_time_ms: f64,
) -> Array2<f64> {
    let (rows, steps) = g.dim();
    let mut out = Array2::zeros((rows, steps));
    for (i, &d) in delays_ms.iter().enumerate().take(rows) {
        let (k, f) = split_shift(d, sample_time_ms);
        for n in 0..steps {
            let a = if n + k < steps { g[[i, n + k]] } else { 0.0 };
            let b = if n + k + 1 < steps { g[[i, n + k + 1]] } else { 0.0 };
            out[[i, n]] = (1.0 - f) * a + f * b;
        }
    }
    out
}

/// Exact `∂L/∂d̂` of the interpolated shift: `Σ_n g[n] (x[n-k-1] - x[n-k]) / T_s`.
pub fn interpolated_delay_gradient(
    x: ArrayView2<f64>,
    g: ArrayView2<f64>,
    delays_ms: &[f64],
    sample_time_ms: f64,
) -> Vec<f64> {
    let steps = x.ncols();
    delays_ms
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let (k, _) = split_shift(d, sample_time_ms);
            (0..steps)
                .map(|n| g[[i, n]] * (source(x, i, n, k + 1) - source(x, i, n, k)))
                .sum::<f64>()
                / sample_time_ms
        })
        .collect()
}

fn split_shift(d: f64, sample_time_ms: f64) -> (usize, f64) {
    let steps = d / sample_time_ms;
    let k = steps.floor();
    (k as usize, steps - k)
}

fn source(x: ArrayView2<f64>, i: usize, n: usize, k: usize) -> f64 {
    if n >= k {
        x[[i, n - k]]
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(v: f64) -> DelayCap {
        DelayCap::new(v).unwrap()
    }

    fn row(bits: &[u8]) -> SpikeRaster {
        SpikeRaster::from_rows(&[bits], 1.0).unwrap()
    }

    #[test]
    fn clamp_branches() {
        assert_eq!(clamp_delay(-3.0, cap(64.0)), 0.0);
        assert_eq!(clamp_delay(10.0, cap(64.0)), 10.0);
        assert_eq!(clamp_delay(200.0, cap(128.0)), 128.0);
        assert_eq!(clamp_delay(1e9, DelayCap::INFINITE), 1e9);
    }

    #[test]
    fn cap_parsing_and_labels() {
        assert!("inf".parse::<DelayCap>().unwrap().is_infinite());
        assert_eq!("64".parse::<DelayCap>().unwrap().value(), 64.0);
        assert!("-1".parse::<DelayCap>().is_err());
        assert!("abc".parse::<DelayCap>().is_err());
        assert_eq!(DelayCap::INFINITE.label(), "+inf");
        assert_eq!(cap(64.0).label(), "64");
        let json = serde_json::to_string(&[DelayCap::INFINITE, cap(128.0)]).unwrap();
        assert_eq!(json, r#"["inf",128.0]"#);
        let back: Vec<DelayCap> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![DelayCap::INFINITE, cap(128.0)]);
    }

    #[test]
    fn pure_shift() {
        let s = DelayState::from_raw(vec![2.0], cap(64.0));
        let out = shift_spikes(&row(&[0, 0, 1, 0, 0]), &s).unwrap();
        assert_eq!(out, row(&[0, 0, 0, 0, 1]));
    }

    #[test]
    fn zero_delay_is_identity() {
        let s = DelayState::zeros(1, cap(64.0));
        let r = row(&[1, 0, 1, 1, 0]);
        assert_eq!(shift_spikes(&r, &s).unwrap(), r);
    }

    #[test]
    fn shift_truncates_at_window_end() {
        let s = DelayState::from_raw(vec![2.0], cap(64.0));
        assert_eq!(shift_spikes(&row(&[0, 0, 0, 1]), &s).unwrap(), row(&[0, 0, 0, 0]));
    }

    #[test]
    fn fractional_delay_rounds() {
        let s = DelayState::from_raw(vec![1.6], cap(64.0));
        assert_eq!(shift_spikes(&row(&[1, 0, 0, 0]), &s).unwrap(), row(&[0, 0, 1, 0]));
    }

    #[test]
    fn infinite_cap_huge_delay_drops_everything() {
        let s = DelayState::from_raw(vec![1e300], DelayCap::INFINITE);
        assert_eq!(shift_spikes(&row(&[1, 1, 1]), &s).unwrap(), row(&[0, 0, 0]));
    }

    #[test]
    fn delay_gradient_single_edge() {
        // ŝ = [0,1,0], upstream = [0,1,0]: -(1-0)·1 - (0-1)·0 = -1
        let g = delay_gradient(&row(&[0, 1, 0]), ndarray::array![[0.0, 1.0, 0.0]].view(), 1.0)
            .unwrap();
        assert_eq!(g, vec![-1.0]);
    }

    #[test]
    fn delay_gradient_of_silence_is_zero() {
        let g = delay_gradient(&row(&[0, 0, 0]), ndarray::array![[3.0, -1.0, 2.0]].view(), 1.0)
            .unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn delay_gradient_shape_checked() {
        assert!(delay_gradient(&row(&[0, 1]), ndarray::array![[1.0]].view(), 1.0).is_err());
    }

    #[test]
    fn update_examples() {
        let s = DelayState::from_raw(vec![5.0], cap(64.0));
        assert_eq!(apply_delay_update(&s, &[0.0], 1.0).unwrap(), s);

        let s = DelayState::from_raw(vec![63.5], cap(64.0));
        let next = apply_delay_update(&s, &[-1.0], 1.0).unwrap();
        assert_eq!((next.raw()[0], next.clamped()[0]), (64.5, 64.0));

        let s = DelayState::from_raw(vec![0.2], cap(64.0));
        let next = apply_delay_update(&s, &[1.0], 1.0).unwrap();
        assert!((next.raw()[0] + 0.8).abs() < 1e-15);
        assert_eq!(next.clamped()[0], 0.0);
    }

    #[test]
    fn interpolated_shift_matches_integer_shift() {
        let x = ndarray::array![[1.0, 0.0, 0.5, 0.0, 0.0]];
        let out = shift_signal_interpolated(x.view(), &[2.0], 1.0);
        assert_eq!(out, shift_signal(x.view(), &[2]));
        let half = shift_signal_interpolated(x.view(), &[0.5], 1.0);
        assert_eq!(half, ndarray::array![[0.5, 0.5, 0.25, 0.25, 0.0]]);
    }

    #[test]
    fn interpolated_adjoint() {
        let x = ndarray::Array2::from_shape_fn((2, 9), |(i, n)| ((i + 2 * n) % 5) as f64 * 0.3);
        let g = ndarray::Array2::from_shape_fn((2, 9), |(i, n)| ((3 * i + n) % 4) as f64 - 1.5);
        let d = [1.3, 2.8];
        let lhs = (&shift_signal_interpolated(x.view(), &d, 1.0) * &g).sum();
        let rhs = (&unshift_gradient_interpolated(g.view(), &d, 1.0) * &x).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
