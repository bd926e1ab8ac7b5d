//! Spike response and refractory kernels sampled on the simulation grid.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{RadError, Result};
use crate::raster::SpikeRaster;

/// Relative magnitude below which a kernel tail is dropped.
pub const SUPPORT_TOLERANCE: f64 = 1e-6;

/// `ε(t) = (t/τ_s) exp(1 - t/τ_s)` for `t >= 0`, zero before.
pub fn eval_response(t: f64, tau_s: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let x = t / tau_s;
    x * (1.0 - x).exp()
}

/// `ν(t) = -2 θ_u (t/τ_r) exp(1 - t/τ_r)` for `t >= 0`, zero before.
pub fn eval_refractory(t: f64, tau_r: f64, theta_u: f64) -> f64 {
    -2.0 * theta_u * eval_response(t, tau_r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Response,
    Refractory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    samples: Vec<f64>,
    kind: KernelKind,
    tau: f64,
    sample_time_ms: f64,
}

impl KernelTable {
    /// Samples `kernel(n·T_s)` for `n < support_steps`.
    ///
    /// Fails if the first dropped sample still exceeds `1e-6` of the peak
    /// magnitude, or if the window ends before the peak.
    pub fn tabulate(
        kind: KernelKind,
        tau: f64,
        theta_u: f64,
        sample_time_ms: f64,
        support_steps: usize,
    ) -> Result<Self> {
        if !(tau > 0.0 && sample_time_ms > 0.0) {
            return Err(RadError::Config(format!(
                "kernel needs tau > 0 and sample time > 0, got tau={tau}, T_s={sample_time_ms}"
            )));
        }
        if kind == KernelKind::Refractory && !(theta_u > 0.0) {
            return Err(RadError::Config(format!("theta_u must be positive, got {theta_u}")));
        }
        let eval = |n: usize| {
            let t = n as f64 * sample_time_ms;
            match kind {
                KernelKind::Response => eval_response(t, tau),
                KernelKind::Refractory => eval_refractory(t, tau, theta_u),
            }
        };
        let peak = match kind {
            KernelKind::Response => 1.0,
            KernelKind::Refractory => 2.0 * theta_u,
        };
        let bound = SUPPORT_TOLERANCE * peak;
        let tail = eval(support_steps).abs();
        if support_steps == 0 || (support_steps as f64) * sample_time_ms <= tau || tail >= bound {
            return Err(RadError::KernelSupport {
                support_steps,
                tail,
                bound,
            });
        }
        Ok(Self {
            samples: (0..support_steps).map(eval).collect(),
            kind,
            tau,
            sample_time_ms,
        })
    }

    /// Tabulates with the shortest support that passes the truncation bound.
    pub fn with_auto_support(
        kind: KernelKind,
        tau: f64,
        theta_u: f64,
        sample_time_ms: f64,
    ) -> Result<Self> {
        let mut support = (tau / sample_time_ms).ceil() as usize + 1;
        loop {
            match Self::tabulate(kind, tau, theta_u, sample_time_ms, support) {
                Err(RadError::KernelSupport { .. }) => support += 1,
                other => return other,
            }
        }
    }

    pub fn response(tau_s: f64, sample_time_ms: f64) -> Result<Self> {
        Self::with_auto_support(KernelKind::Response, tau_s, 1.0, sample_time_ms)
    }

    pub fn refractory(tau_r: f64, theta_u: f64, sample_time_ms: f64) -> Result<Self> {
        Self::with_auto_support(KernelKind::Refractory, tau_r, theta_u, sample_time_ms)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn support_steps(&self) -> usize {
        self.samples.len()
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn sample_time_ms(&self) -> f64 {
        self.sample_time_ms
    }
}

/// `out[i, n] = Σ_{m <= n, n - m < support} x[i, m] · k[n - m]`.
///
/// Scatters each non-zero input forward, so sparse spike rasters cost only
/// `spikes × support`.
pub fn convolve_signal(signal: ArrayView2<f64>, table: &KernelTable) -> Array2<f64> {
    let (rows, steps) = signal.dim();
    let k = table.samples();
    let mut out = Array2::zeros((rows, steps));
    for i in 0..rows {
        let x = signal.row(i);
        let mut y = out.row_mut(i);
        for m in 0..steps {
            let v = x[m];
            if v == 0.0 {
                continue;
            }
            let end = steps.min(m + k.len());
            for n in m..end {
                y[n] += v * k[n - m];
            }
        }
    }
    out
}

/// Adjoint of [`convolve_signal`]: `out[i, m] = Σ_{n >= m} g[i, n] · k[n - m]`.
pub fn correlate_signal(grad: ArrayView2<f64>, table: &KernelTable) -> Array2<f64> {
    let (rows, steps) = grad.dim();
    let k = table.samples();
    let mut out = Array2::zeros((rows, steps));
    for i in 0..rows {
        let g = grad.row(i);
        let mut y = out.row_mut(i);
        for m in 0..steps {
            let end = steps.min(m + k.len());
            let mut acc = 0.0;
            for n in m..end {
                acc += g[n] * k[n - m];
            }
            y[m] = acc;
        }
    }
    out
}

pub fn causal_convolve(raster: &SpikeRaster, table: &KernelTable) -> Array2<f64> {
    convolve_signal(raster.to_signal().view(), table)
}
