//! Fully connected Spike Response Model layer.
//!
//! Membrane potential of neuron `i` at step `n`:
//!
//! ```text
//! u[i, n] = Σ_j W[i, j] (ε * x_j)[n] + Σ_{m < n} s[i, m] ν[n - m]
//! s[i, n] = Θ(u[i, n] - θ_u),   Θ(0) = 1
//! ```
//!
//! The refractory term couples each neuron to its own past output. The
//! backward pass replaces `Θ'` with a surrogate derivative and can either
//! propagate through that refractory loop exactly or treat it as constant.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::delay::DelayState;
use crate::error::{RadError, Result};
use crate::kernels::{convolve_signal, correlate_signal, KernelTable};
use crate::raster::SpikeRaster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateKind {
    /// `(1/α) exp(-β |u - θ_u| / θ_u)`
    Exponential,
    /// `β / (2 (1 + β |u - θ_u|)^2)`
    FastSigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub kind: SurrogateKind,
    pub scale: f64,
    pub sharpness: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            kind: SurrogateKind::Exponential,
            scale: 1.0,
            sharpness: 1.0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale > 0.0 && self.sharpness > 0.0 {
            Ok(())
        } else {
            Err(RadError::Config(format!(
                "surrogate scale and sharpness must be positive, got {} and {}",
                self.scale, self.sharpness
            )))
        }
    }
}

pub fn surrogate_derivative(membrane: f64, theta_u: f64, cfg: &SurrogateConfig) -> f64 {
    let dist = (membrane - theta_u).abs();
    match cfg.kind {
        SurrogateKind::Exponential => (-cfg.sharpness * dist / theta_u).exp() / cfg.scale,
        SurrogateKind::FastSigmoid => {
            let d = 1.0 + cfg.sharpness * dist;
            cfg.sharpness / (2.0 * d * d)
        }
    }
}

/// Antiderivative of [`surrogate_derivative`], zero at `u → -∞`.
///
/// Used as the spike nonlinearity in the smoothed relaxation, where the
/// surrogate is then the exact derivative of the forward pass.
pub fn smooth_activation(membrane: f64, theta_u: f64, cfg: &SurrogateConfig) -> f64 {
    let x = membrane - theta_u;
    match cfg.kind {
        SurrogateKind::Exponential => {
            let mass = theta_u / (cfg.scale * cfg.sharpness);
            let tail = (-cfg.sharpness * x.abs() / theta_u).exp();
            if x < 0.0 {
                mass * tail
            } else {
                mass * (2.0 - tail)
            }
        }
        SurrogateKind::FastSigmoid => {
            0.5 + cfg.sharpness * x / (2.0 * (1.0 + cfg.sharpness * x.abs()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefractoryBackward {
    /// Propagate through the self-refractory loop backward in time.
    #[default]
    Exact,
    /// Treat the refractory contribution as a constant.
    Detached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Heaviside,
    /// Heaviside replaced by [`smooth_activation`]; verification only.
    Smooth,
}

/// Everything one layer needs: kernels, threshold and surrogate settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDynamics {
    pub response: KernelTable,
    pub refractory: KernelTable,
    pub theta_u: f64,
    pub surrogate: SurrogateConfig,
    pub refractory_backward: RefractoryBackward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrmLayerParams {
    /// `[out_neurons × in_neurons]`
    pub weights: Array2<f64>,
    /// Axonal delays on this layer's output, if any.
    pub delay: Option<DelayState>,
}

impl SrmLayerParams {
    pub fn new(weights: Array2<f64>) -> Self {
        Self {
            weights,
            delay: None,
        }
    }

    pub fn out_neurons(&self) -> usize {
        self.weights.nrows()
    }

    pub fn in_neurons(&self) -> usize {
        self.weights.ncols()
    }

    pub fn has_delay(&self) -> bool {
        self.delay.is_some()
    }

    /// Uniform weights in `[-c, c]` with `c = θ_u / (rate · in_neurons)`, where
    /// `rate` is the expected presynaptic spike count per neuron per step.
    pub fn init_uniform<R: Rng>(
        out_neurons: usize,
        in_neurons: usize,
        theta_u: f64,
        presynaptic_rate: f64,
        rng: &mut R,
    ) -> Self {
        let c = theta_u / (presynaptic_rate * in_neurons as f64);
        let weights = Array2::from_shape_simple_fn((out_neurons, in_neurons), || {
            rng.gen_range(-c..=c)
        });
        Self::new(weights)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerForwardRecord {
    /// `ε * x`, `[in_neurons × steps]`
    pub input_response: Array2<f64>,
    /// `[out_neurons × steps]`
    pub psp: Array2<f64>,
    pub membrane: Array2<f64>,
    /// Output before any delay; binary under [`Activation::Heaviside`].
    pub output: Array2<f64>,
    pub sample_time_ms: f64,
}

impl LayerForwardRecord {
    pub fn spikes(&self) -> SpikeRaster {
        SpikeRaster::from_signal(&self.output, self.sample_time_ms)
    }
}

pub fn forward(
    input: &SpikeRaster,
    params: &SrmLayerParams,
    dynamics: &LayerDynamics,
) -> Result<LayerForwardRecord> {
    forward_signal(input.to_signal().view(), params, dynamics, Activation::Heaviside)
}

pub fn forward_signal(
    input: ArrayView2<f64>,
    params: &SrmLayerParams,
    dynamics: &LayerDynamics,
    activation: Activation,
) -> Result<LayerForwardRecord> {
    if input.nrows() != params.in_neurons() {
        return Err(RadError::shape("layer input rows", params.in_neurons(), input.nrows()));
    }
    let steps = input.ncols();
    let input_response = convolve_signal(input, &dynamics.response);
    let psp = params.weights.dot(&input_response);
    let mut membrane = Array2::zeros(psp.dim());
    let mut output = Array2::zeros(psp.dim());
    let nu = dynamics.refractory.samples();
    let theta = dynamics.theta_u;
    let mut refractory = vec![0.0; steps];
    for i in 0..params.out_neurons() {
        refractory.iter_mut().for_each(|r| *r = 0.0);
        for n in 0..steps {
            let u = psp[[i, n]] + refractory[n];
            membrane[[i, n]] = u;
            let s = match activation {
                Activation::Heaviside => {
                    if u >= theta {
                        1.0
                    } else {
                        0.0
                    }
                }
                Activation::Smooth => smooth_activation(u, theta, &dynamics.surrogate),
            };
            output[[i, n]] = s;
            if s != 0.0 {
                let end = steps.min(n + nu.len());
                for k in n + 1..end {
                    refractory[k] += s * nu[k - n];
                }
            }
        }
    }
    Ok(LayerForwardRecord {
        input_response,
        psp,
        membrane,
        output,
        sample_time_ms: dynamics.response.sample_time_ms(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Array2<f64>,
    /// Gradient with respect to the layer input, `[in_neurons × steps]`.
    pub input: Array2<f64>,
}

/// Reverse pass for one layer given `∂L/∂s` on its (undelayed) output.
pub fn backward(
    record: &LayerForwardRecord,
    upstream: ArrayView2<f64>,
    params: &SrmLayerParams,
    dynamics: &LayerDynamics,
) -> Result<LayerGradients> {
    if upstream.dim() != record.membrane.dim() {
        return Err(RadError::shape(
            "upstream gradient",
            format!("{:?}", record.membrane.dim()),
            format!("{:?}", upstream.dim()),
        ));
    }
    if params.weights.nrows() != record.membrane.nrows()
        || params.weights.ncols() != record.input_response.nrows()
    {
        return Err(RadError::shape(
            "layer weights vs record",
            format!("{}x{}", record.membrane.nrows(), record.input_response.nrows()),
            format!("{}x{}", params.weights.nrows(), params.weights.ncols()),
        ));
    }
    let grad_membrane = membrane_gradient(record, upstream, dynamics);
    let weights = grad_membrane.dot(&record.input_response.t());
    let grad_response = params.weights.t().dot(&grad_membrane);
    let input = correlate_signal(grad_response.view(), &dynamics.response);
    Ok(LayerGradients { weights, input })
}

/// `∂L/∂u`, running backward in time through the refractory loop when exact.
pub fn membrane_gradient(
    record: &LayerForwardRecord,
    upstream: ArrayView2<f64>,
    dynamics: &LayerDynamics,
) -> Array2<f64> {
    let (neurons, steps) = record.membrane.dim();
    let theta = dynamics.theta_u;
    let sg = |u: f64| surrogate_derivative(u, theta, &dynamics.surrogate);
    let mut grad = Array2::zeros((neurons, steps));
    match dynamics.refractory_backward {
        RefractoryBackward::Detached => {
            for ((g, &u), &up) in grad.iter_mut().zip(&record.membrane).zip(&upstream) {
                *g = up * sg(u);
            }
        }
        RefractoryBackward::Exact => {
            let nu = dynamics.refractory.samples();
            for i in 0..neurons {
                for n in (0..steps).rev() {
                    let end = steps.min(n + nu.len());
                    let mut through_refractory = 0.0;
                    for k in n + 1..end {
                        through_refractory += grad[[i, k]] * nu[k - n];
                    }
                    grad[[i, n]] = sg(record.membrane[[i, n]]) * (upstream[[i, n]] + through_refractory);
                }
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dynamics(tau: f64, mode: RefractoryBackward) -> LayerDynamics {
        LayerDynamics {
            response: KernelTable::response(tau, 1.0).unwrap(),
            refractory: KernelTable::refractory(tau, 10.0, 1.0).unwrap(),
            theta_u: 10.0,
            surrogate: SurrogateConfig::default(),
            refractory_backward: mode,
        }
    }

    fn single_spike(steps: usize) -> SpikeRaster {
        let mut r = SpikeRaster::zeros(1, steps, 1.0);
        r.set(0, 0, true);
        r
    }

    #[test]
    fn zero_weights_stay_silent() {
        let d = dynamics(5.0, RefractoryBackward::Exact);
        let p = SrmLayerParams::new(Array2::zeros((3, 1)));
        let rec = forward(&single_spike(20), &p, &d).unwrap();
        assert!(rec.membrane.iter().all(|&u| u == 0.0));
        assert_eq!(rec.spikes().total_spikes(), 0);
    }

    #[test]
    fn sub_threshold_input() {
        let d = dynamics(5.0, RefractoryBackward::Exact);
        let p = SrmLayerParams::new(ndarray::array![[9.99]]);
        let rec = forward(&single_spike(40), &p, &d).unwrap();
        assert_eq!(rec.spikes().total_spikes(), 0);
    }

    #[test]
    fn threshold_weight_fires_once() {
        let d = dynamics(1.0, RefractoryBackward::Exact);
        let p = SrmLayerParams::new(ndarray::array![[10.0]]);
        let rec = forward(&single_spike(10), &p, &d).unwrap();
        assert_eq!(rec.membrane[[0, 1]], 10.0);
        assert!(rec.spikes().get(0, 1));
        // 10·ε(2) + ν(1) with τ = 1: 10·2e^{-1} − 20
        let expect = 20.0 * (-1.0f64).exp() - 20.0;
        assert!((rec.membrane[[0, 2]] - expect).abs() < 1e-12);
        assert!((rec.membrane[[0, 2]] - (-12.642_411_176_571_153)).abs() < 1e-9);
        assert_eq!(rec.spikes().total_spikes(), 1);
    }

    #[test]
    fn surrogate_shape() {
        let cfg = SurrogateConfig::default();
        assert_eq!(surrogate_derivative(10.0, 10.0, &cfg), 1.0);
        assert!(surrogate_derivative(1e6, 10.0, &cfg) < 1e-12);
        assert!(surrogate_derivative(-1e6, 10.0, &cfg) < 1e-12);
        for x in [0.3, 2.0, 17.0] {
            assert_eq!(
                surrogate_derivative(10.0 + x, 10.0, &cfg),
                surrogate_derivative(10.0 - x, 10.0, &cfg)
            );
        }
        let fs = SurrogateConfig {
            kind: SurrogateKind::FastSigmoid,
            scale: 1.0,
            sharpness: 2.0,
        };
        assert_eq!(surrogate_derivative(10.0, 10.0, &fs), 1.0);
        assert!(surrogate_derivative(12.0, 10.0, &fs) > 0.0);
    }

    #[test]
    fn smooth_activation_derivative_is_surrogate() {
        for cfg in [
            SurrogateConfig::default(),
            SurrogateConfig {
                kind: SurrogateKind::FastSigmoid,
                scale: 1.0,
                sharpness: 0.7,
            },
        ] {
            for u in [-4.0, 3.0, 9.5, 10.5, 13.0, 31.0] {
                let h = 1e-6;
                let fd = (smooth_activation(u + h, 10.0, &cfg) - smooth_activation(u - h, 10.0, &cfg))
                    / (2.0 * h);
                assert!((fd - surrogate_derivative(u, 10.0, &cfg)).abs() < 1e-7, "{cfg:?} u={u}");
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let d = dynamics(5.0, RefractoryBackward::Exact);
        let p = SrmLayerParams::new(ndarray::array![[12.0], [4.0]]);
        let rec = forward(&single_spike(30), &p, &d).unwrap();
        let g = backward(&rec, Array2::zeros((2, 30)).view(), &p, &d).unwrap();
        assert!(g.weights.iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn detached_mode_matches_expansion() {
        let d = dynamics(2.0, RefractoryBackward::Detached);
        let p = SrmLayerParams::new(ndarray::array![[14.0, -3.0], [6.0, 9.0]]);
        let mut x = SpikeRaster::zeros(2, 16, 1.0);
        for (i, n) in [(0, 0), (1, 2), (0, 5), (1, 9)] {
            x.set(i, n, true);
        }
        let rec = forward(&x, &p, &d).unwrap();
        let up = Array2::from_shape_fn((2, 16), |(i, n)| (i as f64 + 1.0) * ((n % 3) as f64 - 1.0));
        let g = backward(&rec, up.view(), &p, &d).unwrap();
        let conv = causal_convolve_ref(&x, &d.response);
        for i in 0..2 {
            for j in 0..2 {
                let mut expect = 0.0;
                for n in 0..16 {
                    expect += up[[i, n]] * surrogate_derivative(rec.membrane[[i, n]], 10.0, &d.surrogate) * conv[j][n];
                }
                assert!((g.weights[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }

    fn causal_convolve_ref(x: &SpikeRaster, k: &KernelTable) -> Vec<Vec<f64>> {
        (0..x.neurons())
            .map(|j| {
                (0..x.steps())
                    .map(|n| {
                        (0..=n)
                            .filter(|&m| n - m < k.support_steps())
                            .map(|m| f64::from(u8::from(x.get(j, m))) * k.samples()[n - m])
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let d = dynamics(1.0, RefractoryBackward::Exact);
        let p = SrmLayerParams::new(Array2::zeros((2, 3)));
        assert!(matches!(
            forward(&single_spike(5), &p, &d),
            Err(RadError::Shape { .. })
        ));
    }

    #[test]
    fn init_respects_bound() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = SrmLayerParams::init_uniform(4, 5, 10.0, 0.5, &mut rng);
        assert!(p.weights.iter().all(|w| w.abs() <= 4.0));
    }
}
