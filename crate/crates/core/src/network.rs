//! Feed-forward stacks of SRM layers with axonal delays on the hidden layers.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delay::{
    delay_gradient_signal, interpolated_delay_gradient, shift_signal, shift_signal_interpolated,
    unshift_gradient, unshift_gradient_interpolated, DelayCap, DelayState,
};
use crate::error::{RadError, Result};
use crate::events::{rasterize_with, EventStream, PolarityMode};
use crate::kernels::KernelTable;
use crate::loss::{argmax_count, count_loss_from_counts, count_loss_gradient_from_counts, TargetSpec};
use crate::optim::{NetworkGradients, OptimizerConfig, OptimizerState};
use crate::raster::SpikeRaster;
use crate::srm::{
    backward as layer_backward, forward_signal, Activation, LayerDynamics, LayerForwardRecord,
    RefractoryBackward, SrmLayerParams, SurrogateConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSpec {
    /// Input size, hidden sizes, class count.
    pub layer_sizes: Vec<usize>,
    /// Delay cap for every hidden layer; `None` builds a network without delays.
    pub theta_d: Option<DelayCap>,
    pub tau_s: f64,
    pub tau_r: f64,
    pub theta_u: f64,
    pub sample_time_ms: f64,
    pub surrogate: SurrogateConfig,
    pub refractory_backward: RefractoryBackward,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    /// Desired counts; `None` scales the 60/10-per-300-steps default to the window.
    pub targets: Option<(u32, u32)>,
    /// Expected spikes per presynaptic neuron per step, one entry per layer,
    /// used only to size the initial weight range.
    pub init_rates: Vec<f64>,
    pub polarity: PolarityMode,
    pub seed: u64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            layer_sizes: vec![16, 32, 2],
            theta_d: Some(DelayCap::new(64.0).expect("finite cap")),
            tau_s: 5.0,
            tau_r: 5.0,
            theta_u: 10.0,
            sample_time_ms: 1.0,
            surrogate: SurrogateConfig::default(),
            refractory_backward: RefractoryBackward::Exact,
            optimizer: OptimizerConfig::default(),
            batch_size: 8,
            targets: None,
            init_rates: vec![],
            polarity: PolarityMode::Merge,
            seed: 0,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(RadError::Config(format!(
                "layer_sizes needs at least two positive entries, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes[self.layer_sizes.len() - 1] < 2 {
            return Err(RadError::Config("the output layer needs at least two classes".into()));
        }
        for (name, v) in [
            ("tau_s", self.tau_s),
            ("tau_r", self.tau_r),
            ("theta_u", self.theta_u),
            ("sample_time_ms", self.sample_time_ms),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RadError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(RadError::Config("batch_size must be positive".into()));
        }
        if !self.init_rates.is_empty() && self.init_rates.len() != self.layer_sizes.len() - 1 {
            return Err(RadError::Config(format!(
                "init_rates needs one entry per layer ({}), got {}",
                self.layer_sizes.len() - 1,
                self.init_rates.len()
            )));
        }
        if self.init_rates.iter().any(|&r| !(r > 0.0)) {
            return Err(RadError::Config("init_rates must be positive".into()));
        }
        if let Some((t, f)) = self.targets {
            if t <= f {
                return Err(RadError::Config(format!(
                    "target true count {t} must exceed false count {f}"
                )));
            }
        }
        self.surrogate.validate()?;
        self.optimizer.validate()
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn weight_param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }

    /// One delay per hidden neuron; a cap of zero leaves nothing to train.
    pub fn delay_param_count(&self) -> usize {
        match self.theta_d {
            Some(cap) if cap.value() > 0.0 => {
                self.layer_sizes[1..self.layer_sizes.len() - 1].iter().sum()
            }
            _ => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_param_count() + self.delay_param_count()
    }

    pub fn target_spec(&self, window_steps: usize) -> TargetSpec {
        match self.targets {
            Some((t, f)) => TargetSpec {
                true_class_count: t,
                false_class_count: f,
                window_steps,
            },
            None => TargetSpec::scaled_default(window_steps),
        }
    }

    fn init_rate(&self, layer: usize) -> f64 {
        self.init_rates.get(layer).copied().unwrap_or(0.05)
    }
}

/// A rasterized input with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Array2<f64>,
    pub label: usize,
    pub sample_time_ms: f64,
}

impl Sample {
    pub fn from_raster(raster: &SpikeRaster, label: usize) -> Self {
        Self {
            input: raster.to_signal(),
            label,
            sample_time_ms: raster.sample_time_ms(),
        }
    }

    pub fn from_stream(stream: &EventStream, sample_time_ms: f64, polarity: PolarityMode) -> Result<Self> {
        let raster = rasterize_with(stream, sample_time_ms, polarity)?;
        Ok(Self::from_raster(&raster, usize::from(stream.label)))
    }

    pub fn steps(&self) -> usize {
        self.input.ncols()
    }

    pub fn duration_ms(&self) -> f64 {
        (self.steps() - 1) as f64 * self.sample_time_ms
    }
}

pub fn samples_from_streams(
    streams: &[EventStream],
    sample_time_ms: f64,
    polarity: PolarityMode,
) -> Result<Vec<Sample>> {
    streams
        .iter()
        .map(|s| Sample::from_stream(s, sample_time_ms, polarity))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Binary spikes, whole-step delay shifts.
    Spiking,
    /// Smooth spike nonlinearity and interpolated delay shifts; verification only.
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayRule {
    /// Backward difference of the shifted train.
    SpikeDifference,
    /// Exact derivative of the interpolated shift (smoothed mode only).
    Interpolation,
}

#[derive(Debug, Clone)]
pub struct NetworkTrace {
    pub records: Vec<LayerForwardRecord>,
    /// Delayed output of each hidden layer with delays.
    pub shifted: Vec<Option<Array2<f64>>>,
}

impl NetworkTrace {
    pub fn output(&self) -> &Array2<f64> {
        &self.records.last().expect("non-empty network").output
    }

    pub fn output_counts(&self) -> Vec<f64> {
        self.output().sum_axis(Axis(1)).to_vec()
    }
}

#[derive(Debug, Clone)]
pub struct SampleResult {
    pub loss: f64,
    pub predicted: usize,
    pub no_spike: bool,
    pub grads: NetworkGradients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<SrmLayerParams>,
    pub optimizer: OptimizerState,
    pub epochs_done: u64,
    dynamics: LayerDynamics,
}

impl Network {
    /// Hidden layers get zero-initialized delays when `spec.theta_d` is set; the
    /// output layer never has one. Weights are drawn from `spec.seed` only, so
    /// networks that differ only in their delay cap start with equal weights.
    pub fn build(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n_layers = spec.layer_sizes.len() - 1;
        let layers: Vec<SrmLayerParams> = (0..n_layers)
            .map(|l| {
                let (inp, out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
                let mut layer =
                    SrmLayerParams::init_uniform(out, inp, spec.theta_u, spec.init_rate(l), &mut rng);
                if l + 1 < n_layers {
                    layer.delay = spec.theta_d.map(|cap| DelayState::zeros(out, cap));
                }
                layer
            })
            .collect();
        Self::from_parts(spec, layers, None, 0)
    }

    pub(crate) fn from_parts(
        spec: NetworkSpec,
        layers: Vec<SrmLayerParams>,
        optimizer: Option<OptimizerState>,
        epochs_done: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let dynamics = LayerDynamics {
            response: KernelTable::response(spec.tau_s, spec.sample_time_ms)?,
            refractory: KernelTable::refractory(spec.tau_r, spec.theta_u, spec.sample_time_ms)?,
            theta_u: spec.theta_u,
            surrogate: spec.surrogate,
            refractory_backward: spec.refractory_backward,
        };
        let optimizer = optimizer.unwrap_or_else(|| OptimizerState::new(spec.optimizer, &layers));
        let net = Self {
            spec,
            layers,
            optimizer,
            epochs_done,
            dynamics,
        };
        net.check_layer_sizes(&net.spec.layer_sizes)?;
        Ok(net)
    }

    pub fn dynamics(&self) -> &LayerDynamics {
        &self.dynamics
    }

    /// Verifies the parameter blocks against an expected architecture.
    pub fn check_layer_sizes(&self, sizes: &[usize]) -> Result<()> {
        let actual: Vec<usize> = self
            .layers
            .first()
            .map(|l| l.in_neurons())
            .into_iter()
            .chain(self.layers.iter().map(|l| l.out_neurons()))
            .collect();
        if actual != sizes {
            return Err(RadError::shape("layer sizes", format!("{sizes:?}"), format!("{actual:?}")));
        }
        for (l, w) in self.layers.windows(2).enumerate() {
            if w[0].out_neurons() != w[1].in_neurons() {
                return Err(RadError::shape("layer chaining", l, "inconsistent"));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if let Some(d) = &layer.delay {
                if d.len() != layer.out_neurons() {
                    return Err(RadError::shape("delay vector", layer.out_neurons(), d.len()));
                }
                if l + 1 == self.layers.len() {
                    return Err(RadError::Config("the output layer cannot carry delays".into()));
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: ArrayView2<f64>, mode: ForwardMode) -> Result<NetworkTrace> {
        let ts = self.spec.sample_time_ms;
        let activation = match mode {
            ForwardMode::Spiking => Activation::Heaviside,
            ForwardMode::Smoothed => Activation::Smooth,
        };
        let mut records = Vec::with_capacity(self.layers.len());
        let mut shifted = Vec::with_capacity(self.layers.len());
        let mut current: Option<Array2<f64>> = None;
        for layer in &self.layers {
            let rec = match &current {
                Some(c) => forward_signal(c.view(), layer, &self.dynamics, activation)?,
                None => forward_signal(input.view(), layer, &self.dynamics, activation)?,
            };
            let next = match &layer.delay {
                Some(state) => Some(match mode {
                    ForwardMode::Spiking => {
                        shift_signal(rec.output.view(), &state.step_shifts(ts, rec.output.ncols()))
                    }
                    ForwardMode::Smoothed => {
                        shift_signal_interpolated(rec.output.view(), state.clamped(), ts)
                    }
                }),
                None => None,
            };
            shifted.push(next.clone());
            current = Some(next.unwrap_or_else(|| rec.output.clone()));
            records.push(rec);
        }
        Ok(NetworkTrace { records, shifted })
    }

    pub fn output_spikes(&self, sample: &Sample) -> Result<SpikeRaster> {
        let trace = self.forward(sample.input.view(), ForwardMode::Spiking)?;
        Ok(SpikeRaster::from_signal(trace.output(), self.spec.sample_time_ms))
    }

    /// Loss and parameter gradients for one forward trace.
    pub fn backward(
        &self,
        trace: &NetworkTrace,
        label: usize,
        mode: ForwardMode,
        rule: DelayRule,
    ) -> Result<(f64, NetworkGradients)> {
        let ts = self.spec.sample_time_ms;
        let steps = trace.output().ncols();
        let target = self.spec.target_spec(steps);
        let counts = trace.output_counts();
        let loss = count_loss_from_counts(&counts, &target, label)?;
        let mut upstream = count_loss_gradient_from_counts(&counts, steps, &target, label)?;
        let mut grads = NetworkGradients::zeros_like(&self.layers);
        for l in (0..self.layers.len()).rev() {
            let lg = layer_backward(&trace.records[l], upstream.view(), &self.layers[l], &self.dynamics)?;
            grads.weights[l] = lg.weights;
            if l == 0 {
                break;
            }
            let prev = &self.layers[l - 1];
            upstream = match (&prev.delay, &trace.shifted[l - 1]) {
                (Some(state), Some(shifted)) => {
                    let delay_grad = match rule {
                        DelayRule::SpikeDifference => {
                            delay_gradient_signal(shifted.view(), lg.input.view(), ts)?
                        }
                        DelayRule::Interpolation => interpolated_delay_gradient(
                            trace.records[l - 1].output.view(),
                            lg.input.view(),
                            state.clamped(),
                            ts,
                        ),
                    };
                    grads.delays[l - 1] = Some(delay_grad);
                    match mode {
                        ForwardMode::Spiking => unshift_gradient(
                            lg.input.view(),
                            &state.step_shifts(ts, steps),
                        ),
                        ForwardMode::Smoothed => {
                            unshift_gradient_interpolated(lg.input.view(), state.clamped(), ts)
                        }
                    }
                }
                _ => lg.input,
            };
        }
        Ok((loss, grads))
    }

    pub fn sample_result(&self, sample: &Sample) -> Result<SampleResult> {
        let trace = self.forward(sample.input.view(), ForwardMode::Spiking)?;
        let counts = trace.output_counts();
        let (loss, grads) =
            self.backward(&trace, sample.label, ForwardMode::Spiking, DelayRule::SpikeDifference)?;
        Ok(SampleResult {
            loss,
            predicted: argmax_count(&counts),
            no_spike: counts.iter().all(|&c| c == 0.0),
            grads,
        })
    }

    /// Loss of the smoothed relaxation; the function the gradient checker differentiates.
    pub fn smoothed_loss(&self, sample: &Sample) -> Result<f64> {
        let trace = self.forward(sample.input.view(), ForwardMode::Smoothed)?;
        let target = self.spec.target_spec(sample.steps());
        count_loss_from_counts(&trace.output_counts(), &target, sample.label)
    }

    /// Weights of every layer in row-major order, then raw delays.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.layers.iter().flat_map(|l| l.weights.iter().copied()).collect();
        out.extend(self.layers.iter().filter_map(|l| l.delay.as_ref()).flat_map(|d| d.raw().iter().copied()));
        out
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.parameters().len();
        if values.len() != expected {
            return Err(RadError::shape("parameter vector", expected, values.len()));
        }
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
        }
        for state in self.layers.iter_mut().filter_map(|l| l.delay.as_mut()) {
            let raw = (0..state.len()).map(|_| it.next().expect("length checked")).collect();
            state.set_raw(raw);
        }
        Ok(())
    }

    /// Forward and backward over a batch, reduced in sample order.
    pub fn batch_gradients(&self, batch: &[&Sample]) -> Result<(Vec<SampleResult>, NetworkGradients)> {
        let results: Vec<SampleResult> = batch
            .par_iter()
            .map(|s| self.sample_result(s))
            .collect::<Result<_>>()?;
        let mut total = NetworkGradients::zeros_like(&self.layers);
        for r in &results {
            if !r.loss.is_finite() {
                return Err(RadError::NonFinite { what: "loss", index: 0 });
            }
            total.add_assign(&r.grads);
        }
        total.scale(1.0 / batch.len() as f64);
        Ok((results, total))
    }

    /// One seeded-shuffled pass with an optimizer step per batch.
    pub fn train_epoch(&mut self, data: &[Sample]) -> Result<EpochStats> {
        if data.is_empty() {
            return Err(RadError::Config("training set is empty".into()));
        }
        let order = shuffled_indices(data.len(), self.spec.seed, self.epochs_done);
        let mut loss = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(self.spec.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let (results, grads) = self.batch_gradients(&batch)?;
            for (r, s) in results.iter().zip(&batch) {
                loss += r.loss;
                correct += usize::from(r.predicted == s.label);
            }
            let mut layers = std::mem::take(&mut self.layers);
            let stepped = self.optimizer.step(&mut layers, &grads);
            self.layers = layers;
            stepped?;
        }
        self.epochs_done += 1;
        Ok(EpochStats {
            loss: loss / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        })
    }

    pub fn evaluate(&self, data: &[Sample]) -> Result<Evaluation> {
        if data.is_empty() {
            return Err(RadError::Config("evaluation set is empty".into()));
        }
        let classes = self.spec.class_count();
        let outcomes: Vec<(f64, usize, bool)> = data
            .par_iter()
            .map(|s| {
                let trace = self.forward(s.input.view(), ForwardMode::Spiking)?;
                let counts = trace.output_counts();
                let target = self.spec.target_spec(s.steps());
                let loss = count_loss_from_counts(&counts, &target, s.label)?;
                Ok((loss, argmax_count(&counts), counts.iter().all(|&c| c == 0.0)))
            })
            .collect::<Result<_>>()?;
        let mut confusion = vec![vec![0u32; classes]; classes];
        let mut loss = 0.0;
        let mut no_spike = 0;
        for ((l, pred, silent), s) in outcomes.iter().zip(data) {
            if s.label >= classes {
                return Err(RadError::shape("label", format!("< {classes}"), s.label));
            }
            loss += l;
            confusion[s.label][*pred] += 1;
            no_spike += usize::from(*silent);
        }
        let correct: u32 = (0..classes).map(|c| confusion[c][c]).sum();
        Ok(Evaluation {
            accuracy: f64::from(correct) / data.len() as f64,
            mean_loss: loss / data.len() as f64,
            confusion,
            no_spike,
        })
    }

    pub fn cumulative_trace(&self, sample: &Sample) -> Result<CumulativeTrace> {
        let out = self.output_spikes(sample)?;
        Ok(CumulativeTrace::from_output(&out))
    }

    /// Clamped delays per hidden layer with delays.
    pub fn delay_values(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .filter_map(|l| l.delay.as_ref().map(|d| d.clamped().to_vec()))
            .collect()
    }
}

fn shuffled_indices(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ epoch);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u32>>,
    /// Samples on which the output layer never fired.
    pub no_spike: usize,
}

/// Running output spike counts for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeTrace {
    /// `cumulative[class][step]`
    pub cumulative: Vec<Vec<u32>>,
    pub sample_time_ms: f64,
    /// First step from which the leading class no longer changes.
    pub decision_step: usize,
    pub decision_time_ms: f64,
}

impl CumulativeTrace {
    pub fn from_output(output: &SpikeRaster) -> Self {
        let (classes, steps) = (output.neurons(), output.steps());
        let mut cumulative = vec![vec![0u32; steps]; classes];
        for (c, row) in cumulative.iter_mut().enumerate() {
            let mut acc = 0;
            for (n, slot) in row.iter_mut().enumerate() {
                acc += u32::from(output.get(c, n));
                *slot = acc;
            }
        }
        let leader = |n: usize| {
            let counts: Vec<u32> = cumulative.iter().map(|r| r[n]).collect();
            argmax_count(&counts)
        };
        let decision_step = if steps == 0 {
            0
        } else {
            let last = leader(steps - 1);
            let mut n = steps - 1;
            while n > 0 && leader(n - 1) == last {
                n -= 1;
            }
            n
        };
        Self {
            cumulative,
            sample_time_ms: output.sample_time_ms(),
            decision_step,
            decision_time_ms: decision_step as f64 * output.sample_time_ms(),
        }
    }

    pub fn totals(&self) -> Vec<u32> {
        self.cumulative.iter().map(|r| r.last().copied().unwrap_or(0)).collect()
    }

    pub fn predicted(&self) -> usize {
        argmax_count(&self.totals())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(theta_d: Option<DelayCap>) -> NetworkSpec {
        NetworkSpec {
            layer_sizes: vec![4, 6, 3],
            theta_d,
            init_rates: vec![0.1, 0.1],
            seed: 11,
            ..NetworkSpec::default()
        }
    }

    fn random_sample(seed: u64, rows: usize, steps: usize, label: usize) -> Sample {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Array2::from_shape_simple_fn((rows, steps), || f64::from(u8::from(rng.gen_bool(0.15))));
        Sample {
            input,
            label,
            sample_time_ms: 1.0,
        }
    }

    #[test]
    fn parameter_counts() {
        let spec = NetworkSpec {
            layer_sizes: vec![64, 256, 256, 11],
            theta_d: Some(DelayCap::new(128.0).unwrap()),
            ..NetworkSpec::default()
        };
        assert_eq!(spec.weight_param_count(), 84_736);
        assert_eq!(spec.delay_param_count(), 512);
        let net = Network::build(spec).unwrap();
        let delays: usize = net.layers.iter().filter_map(|l| l.delay.as_ref()).map(|d| d.len()).sum();
        assert_eq!(delays, 512);
        assert!(net.layers.last().unwrap().delay.is_none());
    }

    #[test]
    fn zero_cap_counts_no_delay_params() {
        let spec = small_spec(Some(DelayCap::new(0.0).unwrap()));
        assert_eq!(spec.param_count(), spec.weight_param_count());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = Network::build(small_spec(None)).unwrap();
        let b = Network::build(small_spec(Some(DelayCap::INFINITE))).unwrap();
        for (x, y) in a.layers.iter().zip(&b.layers) {
            assert_eq!(x.weights, y.weights);
        }
    }

    #[test]
    fn zero_cap_forward_matches_delay_free() {
        let a = Network::build(small_spec(None)).unwrap();
        let mut b = Network::build(small_spec(Some(DelayCap::new(0.0).unwrap()))).unwrap();
        let raw = vec![5.0, -2.0, 30.0, 0.4, 7.0, 1.0];
        b.layers[0].delay.as_mut().unwrap().set_raw(raw);
        let s = random_sample(3, 4, 60, 0);
        let ta = a.forward(s.input.view(), ForwardMode::Spiking).unwrap();
        let tb = b.forward(s.input.view(), ForwardMode::Spiking).unwrap();
        assert_eq!(ta.output(), tb.output());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = small_spec(None);
        spec.layer_sizes = vec![4];
        assert!(Network::build(spec).is_err());
        let mut spec = small_spec(None);
        spec.init_rates = vec![0.1];
        assert!(Network::build(spec).is_err());
    }

    #[test]
    fn parameters_round_trip() {
        let mut net = Network::build(small_spec(Some(DelayCap::new(64.0).unwrap()))).unwrap();
        let mut p = net.parameters();
        assert_eq!(p.len(), 4 * 6 + 6 * 3 + 6);
        let last = p.len() - 1;
        p[last] = 70.0;
        net.set_parameters(&p).unwrap();
        assert_eq!(net.parameters(), p);
        assert_eq!(net.layers[0].delay.as_ref().unwrap().clamped()[5], 64.0);
    }

    #[test]
    fn cumulative_trace_decision() {
        let mut out = SpikeRaster::zeros(2, 6, 1.0);
        // class 0 leads early, class 1 overtakes at step 4 and stays ahead
        out.set(0, 1, true);
        out.set(1, 3, true);
        out.set(1, 4, true);
        let t = CumulativeTrace::from_output(&out);
        assert_eq!(t.cumulative[1], vec![0, 0, 0, 1, 2, 2]);
        assert_eq!(t.decision_step, 4);
        assert_eq!(t.predicted(), 1);
        let silent = CumulativeTrace::from_output(&SpikeRaster::zeros(3, 5, 1.0));
        assert_eq!(silent.decision_time_ms, 0.0);
    }

    #[test]
    fn evaluate_confusion_rows_sum_to_class_counts() {
        let net = Network::build(small_spec(Some(DelayCap::new(64.0).unwrap()))).unwrap();
        let data: Vec<Sample> = (0..9).map(|i| random_sample(i, 4, 40, (i % 3) as usize)).collect();
        let ev = net.evaluate(&data).unwrap();
        for row in &ev.confusion {
            assert_eq!(row.iter().sum::<u32>(), 3);
        }
        assert_eq!(ev, net.evaluate(&data).unwrap());
    }

    #[test]
    fn zero_learning_rate_freezes_accuracy() {
        let mut spec = small_spec(Some(DelayCap::new(64.0).unwrap()));
        spec.optimizer.learning_rate_weights = 0.0;
        spec.optimizer.learning_rate_delays = 0.0;
        let mut net = Network::build(spec).unwrap();
        let data: Vec<Sample> = (0..8).map(|i| random_sample(i, 4, 40, (i % 3) as usize)).collect();
        let before = net.evaluate(&data).unwrap();
        let params = net.parameters();
        net.train_epoch(&data).unwrap();
        assert_eq!(net.evaluate(&data).unwrap().accuracy, before.accuracy);
        assert_eq!(net.parameters(), params);
    }
}
