//! Brute-force gradient oracles.
//!
//! Central finite differences over the smoothed relaxation of a network, and a
//! literal double-sum evaluation of the delay gradient. Both are deliberately
//! naive so they stay independent of the production backward pass.

use ndarray::{Array2, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delay::DelayCap;
use crate::error::{RadError, Result};
use crate::network::{DelayRule, ForwardMode, Network, NetworkSpec, Sample};
use crate::raster::SpikeRaster;
use crate::srm::{SurrogateConfig, SurrogateKind};

/// `|a - b| / max(|a|, |b|, 1e-12)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// `(f(p + h e_i) - f(p - h e_i)) / 2h` for every coordinate.
pub fn fd_gradient<F>(f: F, point: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(h > 0.0) {
        return Err(RadError::Config(format!("finite-difference step must be positive, got {h}")));
    }
    (0..point.len())
        .into_par_iter()
        .map(|i| {
            let mut p = point.to_vec();
            p[i] = point[i] + h;
            let plus = f(&p)?;
            p[i] = point[i] - h;
            let minus = f(&p)?;
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Literal `T_s Σ_n Σ_{m <= n} (∂ŝ[m]/∂d̂) (∂L[n]/∂ŝ[m])` with the backward
/// difference estimator `∂ŝ[m]/∂d̂ ≈ -(ŝ[m] - ŝ[m-1]) / T_s`.
///
/// `per_step[[i, n, m]]` holds `∂L[n]/∂ŝ_i[m]`; entries with `m > n` are ignored.
pub fn eq7_bruteforce(
    shifted: &SpikeRaster,
    per_step: ArrayView3<f64>,
    sample_time_ms: f64,
) -> Result<Vec<f64>> {
    let (neurons, steps) = (shifted.neurons(), shifted.steps());
    if per_step.dim() != (neurons, steps, steps) {
        return Err(RadError::shape(
            "per-step loss gradients",
            format!("({neurons}, {steps}, {steps})"),
            format!("{:?}", per_step.dim()),
        ));
    }
    let spike = |i: usize, m: isize| -> f64 {
        if m < 0 {
            0.0
        } else {
            f64::from(u8::from(shifted.get(i, m as usize)))
        }
    };
    let mut out = vec![0.0; neurons];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut total = 0.0;
        for n in 0..steps {
            for m in 0..=n {
                let ds_dd = -(spike(i, m as isize) - spike(i, m as isize - 1)) / sample_time_ms;
                total += ds_dd * per_step[[i, n, m]];
            }
        }
        *slot = sample_time_ms * total;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub label: String,
    pub h: f64,
    pub relative_errors: Vec<f64>,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn compare(label: impl Into<String>, h: f64, analytic: &[f64], numeric: &[f64], tolerance: f64) -> Self {
        let relative_errors: Vec<f64> = analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &b)| relative_error(a, b))
            .collect();
        let (worst_index, max_relative_error) = relative_errors
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
        Self {
            label: label.into(),
            h,
            relative_errors,
            max_relative_error,
            worst_index,
            tolerance,
            passed: max_relative_error < tolerance,
        }
    }
}

/// A smoothed network plus one random input to differentiate through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckSetup {
    pub layer_sizes: Vec<usize>,
    pub steps: usize,
    pub input_density: f64,
    pub theta_d: DelayCap,
    pub tau: f64,
    pub seed: u64,
    pub step_sizes: Vec<f64>,
    pub tolerance: f64,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        Self {
            layer_sizes: vec![4, 8, 3],
            steps: 32,
            input_density: 0.3,
            theta_d: DelayCap::new(8.0).expect("finite"),
            tau: 2.0,
            seed: 1,
            step_sizes: vec![1e-3, 1e-4, 1e-5],
            tolerance: 1e-4,
        }
    }
}

impl GradCheckSetup {
    /// Surrogate whose antiderivative saturates at 1, so smoothed outputs behave like spike probabilities.
    pub fn surrogate(theta_u: f64) -> SurrogateConfig {
        SurrogateConfig {
            kind: SurrogateKind::Exponential,
            scale: 2.0 * theta_u,
            sharpness: 1.0,
        }
    }

    pub fn build(&self) -> Result<(Network, Sample)> {
        let theta_u = 10.0;
        let inputs = self.layer_sizes[0];
        let spec = NetworkSpec {
            layer_sizes: self.layer_sizes.clone(),
            theta_d: Some(self.theta_d),
            tau_s: self.tau,
            tau_r: self.tau,
            theta_u,
            surrogate: Self::surrogate(theta_u),
            init_rates: vec![self.input_density; self.layer_sizes.len() - 1],
            seed: self.seed,
            ..NetworkSpec::default()
        };
        let mut net = Network::build(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xd1b5_4a32_d192_ed03);
        // delays strictly inside (0, θ_d) and away from whole steps
        let cap = if self.theta_d.is_infinite() { 16.0 } else { self.theta_d.value() };
        let mut params = net.parameters();
        let n_weights = net.spec.weight_param_count();
        for d in params.iter_mut().skip(n_weights) {
            let whole = rng.gen_range(0..(cap as usize).max(1)) as f64;
            *d = (whole + rng.gen_range(0.2..0.8)).min(cap - 0.2);
        }
        net.set_parameters(&params)?;
        let input = Array2::from_shape_simple_fn((inputs, self.steps), || {
            f64::from(u8::from(rng.gen_bool(self.input_density)))
        });
        let label = rng.gen_range(0..net.spec.class_count());
        Ok((
            net,
            Sample {
                input,
                label,
                sample_time_ms: 1.0,
            },
        ))
    }
}

/// Analytic gradient of the smoothed loss: production layer backward with
/// the interpolated-shift adjoint, exact delay derivative.
pub fn smoothed_analytic_gradient(net: &Network, sample: &Sample, rule: DelayRule) -> Result<Vec<f64>> {
    let trace = net.forward(sample.input.view(), ForwardMode::Smoothed)?;
    let (_, grads) = net.backward(&trace, sample.label, ForwardMode::Smoothed, rule)?;
    Ok(grads.flatten())
}

pub fn smoothed_fd_gradient(net: &Network, sample: &Sample, h: f64) -> Result<Vec<f64>> {
    let base = net.clone();
    fd_gradient(
        |p| {
            let mut n = base.clone();
            n.set_parameters(p)?;
            n.smoothed_loss(sample)
        },
        &net.parameters(),
        h,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSuite {
    pub setup: GradCheckSetup,
    pub reports: Vec<GradCheckReport>,
    pub passed: bool,
}

/// Weight and delay gradients of the smoothed network against central
/// differences at every step size of the sweep.
pub fn run_gradcheck(setup: &GradCheckSetup) -> Result<GradCheckSuite> {
    let (net, sample) = setup.build()?;
    let n_weights = net.spec.weight_param_count();
    let analytic = smoothed_analytic_gradient(&net, &sample, DelayRule::Interpolation)?;
    let mut reports = Vec::new();
    for &h in &setup.step_sizes {
        let numeric = smoothed_fd_gradient(&net, &sample, h)?;
        reports.push(GradCheckReport::compare(
            "weights",
            h,
            &analytic[..n_weights],
            &numeric[..n_weights],
            setup.tolerance,
        ));
        // a zero cap leaves no interior where the clamp is differentiable
        if analytic.len() > n_weights && setup.theta_d.value() > 0.0 {
            reports.push(GradCheckReport::compare(
                "delays",
                h,
                &analytic[n_weights..],
                &numeric[n_weights..],
                setup.tolerance,
            ));
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    Ok(GradCheckSuite {
        setup: setup.clone(),
        reports,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignAgreement {
    pub configs: usize,
    pub compared: usize,
    pub agreeing: usize,
}

impl SignAgreement {
    pub fn fraction(&self) -> f64 {
        if self.compared == 0 {
            1.0
        } else {
            self.agreeing as f64 / self.compared as f64
        }
    }
}

/// Compares, per random config, the sign of the spike-difference delay
/// gradient against the finite-difference gradient of the smoothed loss.
/// Each config contributes its delay with the largest numeric gradient.
pub fn delay_sign_agreement(base: &GradCheckSetup, configs: usize, h: f64) -> Result<SignAgreement> {
    let outcomes: Vec<Option<bool>> = (0..configs as u64)
        .into_par_iter()
        .map(|k| {
            let setup = GradCheckSetup {
                seed: base.seed.wrapping_add(1000 + k),
                ..base.clone()
            };
            let (net, sample) = setup.build()?;
            let n_weights = net.spec.weight_param_count();
            let estimator = smoothed_analytic_gradient(&net, &sample, DelayRule::SpikeDifference)?;
            let numeric = smoothed_fd_gradient(&net, &sample, h)?;
            let best = (n_weights..numeric.len())
                .max_by(|&a, &b| numeric[a].abs().total_cmp(&numeric[b].abs()));
            Ok(best.and_then(|i| {
                (numeric[i].abs() > 1e-9).then(|| numeric[i].signum() == estimator[i].signum())
            }))
        })
        .collect::<Result<_>>()?;
    Ok(SignAgreement {
        configs,
        compared: outcomes.iter().flatten().count(),
        agreeing: outcomes.iter().flatten().filter(|&&a| a).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_checks_itself_on_quadratic() {
        let g = fd_gradient(|p| Ok(p[0] * p[0]), &[3.0], 1e-4).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn fd_rejects_bad_step() {
        assert!(fd_gradient(|p| Ok(p[0]), &[1.0], 0.0).is_err());
        assert!(fd_gradient(|p| Ok(p[0]), &[1.0], -1e-3).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 0.5), 0.5);
    }

    #[test]
    fn bruteforce_zero_raster() {
        let r = SpikeRaster::zeros(2, 4, 1.0);
        let per = ndarray::Array3::from_elem((2, 4, 4), 1.0);
        assert_eq!(eq7_bruteforce(&r, per.view(), 1.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn bruteforce_single_term() {
        // spike at m=2 followed by silence at m=3: with a delta upstream at n=m=2
        // only the rising edge contributes, -(1 - 0)/T_s · g · T_s = -g
        let mut r = SpikeRaster::zeros(1, 4, 2.0);
        r.set(0, 2, true);
        let mut per = ndarray::Array3::zeros((1, 4, 4));
        per[[0, 2, 2]] = 0.75;
        assert_eq!(eq7_bruteforce(&r, per.view(), 2.0).unwrap(), vec![-0.75]);
    }
}
