//! Run configuration: profile defaults, then the JSON file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use rad_core::gradcheck::GradCheckSetup;
use rad_core::{
    DelayCap, NetworkSpec, PolarityMode, RefractoryBackward, SurrogateConfig, SurrogateKind, SynthTask,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Named hyper-parameter presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Nmnist,
    Dvsgesture,
    Ntidigits,
    #[default]
    Synth,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Self::Nmnist => "nmnist",
            Self::Dvsgesture => "dvsgesture",
            Self::Ntidigits => "ntidigits",
            Self::Synth => "synth",
        }
    }

    fn parse(name: &str) -> CliResult<Self> {
        match name {
            "nmnist" => Ok(Self::Nmnist),
            "dvsgesture" => Ok(Self::Dvsgesture),
            "ntidigits" => Ok(Self::Ntidigits),
            "synth" => Ok(Self::Synth),
            other => Err(CliError::field(
                "profile",
                format!("unknown profile {other:?} (nmnist, dvsgesture, ntidigits, synth)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub network: NetworkSpec,
    pub epochs: usize,
    pub trials: usize,
    /// First trial seed; trial `k` uses `seed + k` unless `seeds` is given.
    pub seed: u64,
    pub seeds: Vec<u64>,
    /// Directories of `.rade` / `.csv` samples. Without them the synthetic
    /// generator supplies the data, one task instance per trial seed.
    pub train_dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
    pub synth: SynthTask,
    /// Synthetic samples per class used for training; the rest are test.
    pub train_per_class: usize,
    pub theta_d_list: Vec<DelayCap>,
    pub gradcheck: GradCheckSetup,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Synth)
    }
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let cap = |v: f64| Some(DelayCap::new(v).expect("non-negative"));
        let base = NetworkSpec::default();
        let network = match profile {
            Profile::Nmnist => NetworkSpec {
                layer_sizes: vec![34 * 34 * 2, 500, 500, 10],
                theta_d: cap(64.0),
                tau_s: 1.0,
                tau_r: 1.0,
                polarity: PolarityMode::Split,
                ..base
            },
            Profile::Dvsgesture => NetworkSpec {
                // inputs pre-pooled to 32x32 per polarity
                layer_sizes: vec![32 * 32 * 2, 512, 11],
                theta_d: cap(64.0),
                tau_s: 5.0,
                tau_r: 5.0,
                polarity: PolarityMode::Split,
                ..base
            },
            Profile::Ntidigits => NetworkSpec {
                layer_sizes: vec![64, 256, 256, 11],
                theta_d: cap(128.0),
                tau_s: 5.0,
                tau_r: 5.0,
                ..base
            },
            Profile::Synth => {
                let mut spec = NetworkSpec {
                    layer_sizes: vec![16, 32, 2],
                    theta_d: cap(64.0),
                    tau_s: 1.0,
                    tau_r: 1.0,
                    surrogate: SurrogateConfig {
                        kind: SurrogateKind::Exponential,
                        scale: 1.0,
                        sharpness: 5.0,
                    },
                    refractory_backward: RefractoryBackward::Detached,
                    targets: Some((10, 2)),
                    ..base
                };
                spec.optimizer.learning_rate_delays = 1.0;
                spec
            }
        };
        Self {
            profile,
            network,
            epochs: 100,
            trials: 5,
            seed: 0,
            seeds: Vec::new(),
            train_dir: None,
            test_dir: None,
            synth: SynthTask::default(),
            train_per_class: 100,
            theta_d_list: vec![
                DelayCap::new(0.0).expect("zero"),
                DelayCap::new(64.0).expect("finite"),
                DelayCap::INFINITE,
            ],
            gradcheck: GradCheckSetup::default(),
            out_dir: PathBuf::from("runs"),
        }
    }

    pub fn trial_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.trials as u64).map(|k| self.seed + k).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn uses_synthetic_data(&self) -> bool {
        self.train_dir.is_none() && self.test_dir.is_none()
    }

    pub fn validate(&self) -> CliResult<()> {
        self.network
            .validate()
            .map_err(|e| CliError::field("network", e))?;
        if self.epochs == 0 {
            return Err(CliError::field("epochs", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(CliError::field("trials", "must be at least 1"));
        }
        if !self.seeds.is_empty() && self.seeds.len() != self.trials {
            return Err(CliError::field(
                "seeds",
                format!("has {} entries but trials is {}", self.seeds.len(), self.trials),
            ));
        }
        for (field, dir) in [("train_dir", &self.train_dir), ("test_dir", &self.test_dir)] {
            match dir {
                Some(d) if !d.is_dir() => {
                    return Err(CliError::field(field, format!("{} is not a directory", d.display())))
                }
                None if self.profile != Profile::Synth => {
                    return Err(CliError::field(
                        field,
                        format!("required for profile {}", self.profile.name()),
                    ))
                }
                None if !self.uses_synthetic_data() => {
                    return Err(CliError::field(field, "train_dir and test_dir must be given together"))
                }
                _ => {}
            }
        }
        if self.uses_synthetic_data() {
            if self.synth.channel_count != self.network.input_size() {
                return Err(CliError::field(
                    "synth.channel_count",
                    format!(
                        "{} channels but network.layer_sizes[0] is {}",
                        self.synth.channel_count,
                        self.network.input_size()
                    ),
                ));
            }
            if self.synth.class_count != self.network.class_count() {
                return Err(CliError::field(
                    "synth.class_count",
                    format!(
                        "{} classes but the output layer has {}",
                        self.synth.class_count,
                        self.network.class_count()
                    ),
                ));
            }
            if self.train_per_class == 0 || self.train_per_class >= self.synth.samples_per_class {
                return Err(CliError::field(
                    "train_per_class",
                    format!("must be in 1..{}", self.synth.samples_per_class),
                ));
            }
        }
        Ok(())
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub theta_d: Option<DelayCap>,
    pub out_dir: Option<PathBuf>,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Effective configuration from profile defaults, an optional JSON file and flags.
pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> CliResult<RunConfig> {
    let file_value = match file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::field("config", format!("{}: {e}", path.display())))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::field("config", format!("{}: {e}", path.display())))?;
            if !v.is_object() {
                return Err(CliError::field("config", "top level must be a JSON object"));
            }
            v
        }
        None => Value::Object(Default::default()),
    };
    let profile = match (overrides.profile, file_value.get("profile")) {
        (Some(p), _) => p,
        (None, Some(Value::String(name))) => Profile::parse(name)?,
        (None, Some(_)) => return Err(CliError::field("profile", "must be a string")),
        (None, None) => Profile::Synth,
    };
    let mut value = serde_json::to_value(RunConfig::for_profile(profile))
        .map_err(|e| CliError::Config(e.to_string()))?;
    merge(&mut value, file_value);
    value["profile"] = Value::String(profile.name().into());
    let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::field(&path, e.into_inner())
    })?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
        cfg.seeds.clear();
    }
    if let Some(trials) = overrides.trials {
        cfg.trials = trials;
        cfg.seeds.clear();
    }
    if let Some(cap) = overrides.theta_d {
        cfg.network.theta_d = Some(cap);
    }
    if let Some(out) = &overrides.out_dir {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

/// `"0,64,inf"` → caps, for `--theta-d` lists.
pub fn parse_theta_list(text: &str) -> CliResult<Vec<DelayCap>> {
    let caps = text
        .split(',')
        .map(|s| s.parse::<DelayCap>().map_err(|e| CliError::field("theta_d", e)))
        .collect::<CliResult<Vec<_>>>()?;
    if caps.is_empty() {
        return Err(CliError::field("theta_d", "list is empty"));
    }
    Ok(caps)
}
