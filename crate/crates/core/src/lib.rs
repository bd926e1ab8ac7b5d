//! Spiking networks of Spike Response Model neurons with trainable, rectified
//! axonal delays.
//!
//! Each hidden neuron owns a delay `d̂ ∈ [0, θ_d]` that shifts its output spike
//! train before the next layer sees it. Weights and delays are trained jointly
//! against a spike-count loss; the delay gradient comes from a finite
//! difference of the shifted spike train.

pub mod checkpoint;
pub mod delay;
pub mod error;
pub mod events;
pub mod gradcheck;
pub mod kernels;
pub mod loss;
pub mod network;
pub mod optim;
pub mod raster;
pub mod srm;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use delay::{clamp_delay, DelayCap, DelayState};
pub use error::{RadError, Result};
pub use events::{Event, EventFormat, EventStream, PolarityMode, SynthTask};
pub use kernels::{KernelKind, KernelTable};
pub use loss::TargetSpec;
pub use network::{CumulativeTrace, Evaluation, Network, NetworkSpec, Sample};
pub use optim::{OptimizerConfig, UpdateRule};
pub use raster::SpikeRaster;
pub use srm::{RefractoryBackward, SrmLayerParams, SurrogateConfig, SurrogateKind};
pub use train::{fit, TrainReport};
