//! Parameter updates for weights and raw delays.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{RadError, Result};
use crate::srm::SrmLayerParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    Sgd,
    AdamStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub rule: UpdateRule,
    pub learning_rate_weights: f64,
    pub learning_rate_delays: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rule: UpdateRule::AdamStyle,
            learning_rate_weights: 0.01,
            learning_rate_delays: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // zero rates are allowed so a run can be frozen for diagnostics
        if !(self.learning_rate_weights >= 0.0 && self.learning_rate_delays >= 0.0) {
            return Err(RadError::Config("learning rates must be non-negative".into()));
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(RadError::Config(format!(
                "adam betas must lie in (0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(RadError::Config("adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Gradients for every layer, in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradients {
    pub weights: Vec<Array2<f64>>,
    /// `None` for layers without delays.
    pub delays: Vec<Option<Vec<f64>>>,
}

impl NetworkGradients {
    pub fn zeros_like(layers: &[SrmLayerParams]) -> Self {
        Self {
            weights: layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            delays: layers
                .iter()
                .map(|l| l.delay.as_ref().map(|d| vec![0.0; d.len()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &NetworkGradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.delays.iter_mut().zip(&other.delays) {
            if let (Some(a), Some(b)) = (a, b) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
        for d in self.delays.iter_mut().flatten() {
            d.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Flattened view in parameter order: all weights layer by layer, then all delays.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.weights.iter().flat_map(|w| w.iter().copied()).collect();
        out.extend(self.delays.iter().flatten().flatten());
        out
    }

    fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        let mut offset = 0;
        for w in &self.weights {
            if let Some(i) = w.iter().position(|v| !v.is_finite()) {
                return Some((offset + i, "weight gradient"));
            }
            offset += w.len();
        }
        for d in self.delays.iter().flatten() {
            if let Some(i) = d.iter().position(|v| !v.is_finite()) {
                return Some((offset + i, "delay gradient"));
            }
            offset += d.len();
        }
        None
    }
}

/// First and second moments, kept per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub steps_taken: u64,
    pub weight_moments: Vec<Moments>,
    pub delay_moments: Vec<Option<Moments>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, layers: &[SrmLayerParams]) -> Self {
        Self {
            config,
            steps_taken: 0,
            weight_moments: layers.iter().map(|l| Moments::zeros(l.weights.len())).collect(),
            delay_moments: layers
                .iter()
                .map(|l| l.delay.as_ref().map(|d| Moments::zeros(d.len())))
                .collect(),
        }
    }

    /// Applies one update to every layer, then re-clamps the delays.
    ///
    /// Gradients are checked for finiteness before anything is touched, so a
    /// rejected step leaves parameters and moments unchanged.
    pub fn step(&mut self, layers: &mut [SrmLayerParams], grads: &NetworkGradients) -> Result<()> {
        if grads.weights.len() != layers.len() || grads.delays.len() != layers.len() {
            return Err(RadError::shape("gradient layers", layers.len(), grads.weights.len()));
        }
        for (l, (layer, g)) in layers.iter().zip(&grads.weights).enumerate() {
            if layer.weights.dim() != g.dim() {
                return Err(RadError::shape(
                    "weight gradient",
                    format!("layer {l} {:?}", layer.weights.dim()),
                    format!("{:?}", g.dim()),
                ));
            }
        }
        for (layer, g) in layers.iter().zip(&grads.delays) {
            let expected = layer.delay.as_ref().map(|d| d.len());
            if expected != g.as_ref().map(Vec::len) {
                return Err(RadError::shape("delay gradient", format!("{expected:?}"), "mismatch"));
            }
        }
        if let Some((index, what)) = grads.first_non_finite() {
            return Err(RadError::NonFinite { what, index });
        }

        self.steps_taken += 1;
        let cfg = self.config;
        let t = self.steps_taken as i32;
        let update = |param: &mut f64, grad: f64, m: &mut Moments, i: usize, lr: f64| match cfg.rule {
            UpdateRule::Sgd => *param -= lr * grad,
            UpdateRule::AdamStyle => {
                m.first[i] = cfg.beta1 * m.first[i] + (1.0 - cfg.beta1) * grad;
                m.second[i] = cfg.beta2 * m.second[i] + (1.0 - cfg.beta2) * grad * grad;
                let m_hat = m.first[i] / (1.0 - cfg.beta1.powi(t));
                let v_hat = m.second[i] / (1.0 - cfg.beta2.powi(t));
                *param -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        };

        for ((layer, g), m) in layers.iter_mut().zip(&grads.weights).zip(&mut self.weight_moments) {
            for (i, (w, &gw)) in layer.weights.iter_mut().zip(g.iter()).enumerate() {
                update(w, gw, m, i, cfg.learning_rate_weights);
            }
        }
        for ((layer, g), m) in layers.iter_mut().zip(&grads.delays).zip(&mut self.delay_moments) {
            if let (Some(state), Some(g), Some(m)) = (layer.delay.as_mut(), g, m.as_mut()) {
                let mut raw = state.raw().to_vec();
                for (i, (d, &gd)) in raw.iter_mut().zip(g).enumerate() {
                    update(d, gd, m, i, cfg.learning_rate_delays);
                }
                state.set_raw(raw);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{DelayCap, DelayState};

    fn layer(w: f64, delay: Option<f64>) -> SrmLayerParams {
        SrmLayerParams {
            weights: ndarray::array![[w]],
            delay: delay.map(|d| DelayState::from_raw(vec![d], DelayCap::new(64.0).unwrap())),
        }
    }

    fn grads(w: f64, d: Option<f64>) -> NetworkGradients {
        NetworkGradients {
            weights: vec![ndarray::array![[w]]],
            delays: vec![d.map(|d| vec![d])],
        }
    }

    fn sgd(lr_w: f64, lr_d: f64) -> OptimizerConfig {
        OptimizerConfig {
            rule: UpdateRule::Sgd,
            learning_rate_weights: lr_w,
            learning_rate_delays: lr_d,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn sgd_weight_step() {
        let mut layers = vec![layer(0.5, None)];
        let mut opt = OptimizerState::new(sgd(0.1, 1.0), &layers);
        opt.step(&mut layers, &grads(1.0, None)).unwrap();
        assert!((layers[0].weights[[0, 0]] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_grads_are_fixed_point() {
        for cfg in [sgd(0.1, 1.0), OptimizerConfig::default()] {
            let mut layers = vec![layer(0.5, Some(3.0))];
            let before = layers.clone();
            let mut opt = OptimizerState::new(cfg, &layers);
            opt.step(&mut layers, &grads(0.0, Some(0.0))).unwrap();
            assert_eq!(layers, before);
        }
    }

    #[test]
    fn delay_step_reclamps() {
        let mut layers = vec![layer(0.5, Some(63.9))];
        let mut opt = OptimizerState::new(sgd(0.1, 1.0), &layers);
        opt.step(&mut layers, &grads(0.0, Some(-0.5))).unwrap();
        let d = layers[0].delay.as_ref().unwrap();
        assert!((d.raw()[0] - 64.4).abs() < 1e-12);
        assert_eq!(d.clamped()[0], 64.0);
    }

    #[test]
    fn non_finite_rejected_without_side_effects() {
        let mut layers = vec![layer(0.5, Some(1.0))];
        let before = layers.clone();
        let mut opt = OptimizerState::new(OptimizerConfig::default(), &layers);
        let err = opt.step(&mut layers, &grads(0.3, Some(f64::NAN))).unwrap_err();
        assert!(matches!(err, RadError::NonFinite { index: 1, .. }));
        assert_eq!(layers, before);
        assert_eq!(opt.steps_taken, 0);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut layers = vec![layer(0.0, None)];
        let mut opt = OptimizerState::new(OptimizerConfig::default(), &layers);
        opt.step(&mut layers, &grads(3.0, None)).unwrap();
        assert!((layers[0].weights[[0, 0]] + 0.01).abs() < 1e-9);
    }
}
