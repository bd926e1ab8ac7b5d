//! The CLI verbs as library functions; each writes its artifacts under `out`.

use std::fs;
use std::path::{Path, PathBuf};

use rad_core::events::{load_dir, load_events, write_events};
use rad_core::gradcheck::{run_gradcheck, GradCheckSuite};
use rad_core::network::samples_from_streams;
use rad_core::{
    fit, load_checkpoint, save_checkpoint, DelayCap, EventFormat, EventStream, Evaluation, Network,
    Sample, TrainReport,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::field("out_dir", format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::field("out_dir", format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Synthetic streams split per class into train and test.
pub fn synth_split(cfg: &RunConfig, seed: u64) -> CliResult<(Vec<EventStream>, Vec<EventStream>)> {
    let task = rad_core::SynthTask {
        seed,
        ..cfg.synth.clone()
    };
    let streams = task.generate().map_err(|e| CliError::field("synth", e))?;
    // generation interleaves classes, so a prefix holds train_per_class of each
    let cut = cfg.train_per_class * task.class_count;
    let test = streams[cut..].to_vec();
    let mut train = streams;
    train.truncate(cut);
    Ok((train, test))
}

fn check_inputs(cfg: &RunConfig, samples: &[Sample], field: &str) -> CliResult<()> {
    for (k, s) in samples.iter().enumerate() {
        if s.input.nrows() != cfg.network.input_size() {
            return Err(CliError::field(
                field,
                format!(
                    "sample {k} has {} input rows but network.layer_sizes[0] is {}",
                    s.input.nrows(),
                    cfg.network.input_size()
                ),
            ));
        }
        if s.label >= cfg.network.class_count() {
            return Err(CliError::field(
                field,
                format!("sample {k} has label {} but there are {} classes", s.label, cfg.network.class_count()),
            ));
        }
    }
    if samples.is_empty() {
        return Err(CliError::field(field, "no samples"));
    }
    Ok(())
}

/// Train and test samples for one trial.
pub fn load_data(cfg: &RunConfig, trial_seed: u64) -> CliResult<(Vec<Sample>, Vec<Sample>)> {
    let ts = cfg.network.sample_time_ms;
    let polarity = cfg.network.polarity;
    let (train, test) = match (&cfg.train_dir, &cfg.test_dir) {
        (Some(tr), Some(te)) => (
            load_dir(tr).map_err(|e| CliError::field("train_dir", e))?,
            load_dir(te).map_err(|e| CliError::field("test_dir", e))?,
        ),
        _ => synth_split(cfg, trial_seed)?,
    };
    let train = samples_from_streams(&train, ts, polarity).map_err(|e| CliError::field("train_dir", e))?;
    let test = samples_from_streams(&test, ts, polarity).map_err(|e| CliError::field("test_dir", e))?;
    check_inputs(cfg, &train, "train_dir")?;
    check_inputs(cfg, &test, "test_dir")?;
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub final_test_accuracy: f64,
    pub best_test_accuracy: f64,
    pub final_train_accuracy: f64,
    pub final_test_loss: f64,
}

/// Deterministic run summary; wall-clock time lives in the per-trial JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub profile: String,
    pub theta_d: Option<String>,
    pub weight_params: usize,
    pub delay_params: usize,
    pub params: usize,
    pub epochs: usize,
    pub trials: Vec<TrialResult>,
    /// Over final test accuracies.
    pub best: f64,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

#[derive(Serialize)]
struct TrialDetail<'a> {
    seed: u64,
    report: &'a TrainReport,
}

pub fn train(cfg: &RunConfig, out: &Path) -> CliResult<Summary> {
    cfg.validate()?;
    create_dir(out)?;
    write_json(&out.join("config.json"), &RunConfig { out_dir: out.to_path_buf(), ..cfg.clone() })?;
    let mut trials = Vec::new();
    for (k, seed) in cfg.trial_seeds().into_iter().enumerate() {
        let (train_set, test_set) = load_data(cfg, seed)?;
        let mut net = Network::build(rad_core::NetworkSpec {
            seed,
            ..cfg.network.clone()
        })?;
        let report = fit(&mut net, &train_set, &test_set, cfg.epochs)?;
        write_text(&out.join(format!("trial_{k}.csv")), &report.to_csv())?;
        write_json(&out.join(format!("trial_{k}.json")), &TrialDetail { seed, report: &report })?;
        save_checkpoint(&net, &out.join(format!("trial_{k}.ckpt")))?;
        let last = report.rows.last().expect("epochs >= 1");
        trials.push(TrialResult {
            seed,
            final_test_accuracy: last.test_accuracy,
            best_test_accuracy: report.rows.iter().map(|r| r.test_accuracy).fold(0.0, f64::max),
            final_train_accuracy: last.train_accuracy,
            final_test_loss: last.test_loss,
        });
    }
    let accs: Vec<f64> = trials.iter().map(|t| t.final_test_accuracy).collect();
    let (mean, std) = mean_std(&accs);
    let summary = Summary {
        profile: cfg.profile.name().into(),
        theta_d: cfg.network.theta_d.map(DelayCap::label),
        weight_params: cfg.network.weight_param_count(),
        delay_params: cfg.network.delay_param_count(),
        params: cfg.network.param_count(),
        epochs: cfg.epochs,
        trials,
        best: accs.iter().copied().fold(0.0, f64::max),
        mean,
        std,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Evaluates a checkpoint on the configured test set (trial seed `cfg.seed` for synthetic data).
pub fn eval(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> CliResult<Evaluation> {
    let net = load_checkpoint(checkpoint).map_err(|e| CliError::field("checkpoint", e))?;
    let cfg = RunConfig {
        network: net.spec.clone(),
        ..cfg.clone()
    };
    cfg.validate()?;
    let (_, test) = load_data(&cfg, cfg.seed)?;
    let evaluation = net.evaluate(&test)?;
    create_dir(out)?;
    write_json(&out.join("eval.json"), &evaluation)?;
    Ok(evaluation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub theta_d: String,
    pub params: usize,
    pub mean: f64,
    pub std: f64,
    pub best: f64,
    pub dir: PathBuf,
}

pub fn theta_dir_name(cap: DelayCap) -> String {
    if cap.is_infinite() {
        "theta_inf".into()
    } else {
        format!("theta_{}", cap.value())
    }
}

pub fn ablate(cfg: &RunConfig, caps: &[DelayCap], out: &Path) -> CliResult<Vec<AblationRow>> {
    if caps.is_empty() {
        return Err(CliError::field("theta_d_list", "must not be empty"));
    }
    create_dir(out)?;
    let mut rows = Vec::new();
    let mut csv = String::from("theta_d,params,mean,std,best\n");
    for &cap in caps {
        let mut arm = cfg.clone();
        arm.network.theta_d = Some(cap);
        let dir = out.join(theta_dir_name(cap));
        let summary = train(&arm, &dir)?;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            cap.label(),
            summary.params,
            summary.mean,
            summary.std,
            summary.best
        ));
        rows.push(AblationRow {
            theta_d: cap.label(),
            params: summary.params,
            mean: summary.mean,
            std: summary.std,
            best: summary.best,
            dir,
        });
    }
    write_text(&out.join("ablation.csv"), &csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub label: usize,
    pub predicted: usize,
    pub totals: Vec<u32>,
    pub decision_step: usize,
    pub decision_time_ms: f64,
    pub duration_ms: f64,
}

/// Cumulative output spike counts of one sample, as plot-ready CSV.
pub fn analyze(checkpoint: &Path, sample_path: &Path, out: &Path) -> CliResult<AnalyzeReport> {
    let net = load_checkpoint(checkpoint).map_err(|e| CliError::field("checkpoint", e))?;
    let stream = load_events(sample_path, EventFormat::from_path(sample_path))
        .map_err(|e| CliError::field("sample", e))?;
    let classes = net.spec.class_count();
    if usize::from(stream.label) >= classes {
        return Err(CliError::field(
            "sample",
            format!("label {} but the checkpoint has {classes} classes", stream.label),
        ));
    }
    let sample = Sample::from_stream(&stream, net.spec.sample_time_ms, net.spec.polarity)
        .map_err(|e| CliError::field("sample", e))?;
    if sample.input.nrows() != net.spec.input_size() {
        return Err(CliError::field(
            "sample",
            format!(
                "{} input rows but the checkpoint expects {}",
                sample.input.nrows(),
                net.spec.input_size()
            ),
        ));
    }
    let trace = net.cumulative_trace(&sample)?;
    create_dir(out)?;
    let mut csv = String::from("step");
    for c in 0..classes {
        csv.push_str(&format!(",class_{c}"));
    }
    csv.push('\n');
    for n in 0..sample.steps() {
        csv.push_str(&n.to_string());
        for row in &trace.cumulative {
            csv.push_str(&format!(",{}", row[n]));
        }
        csv.push('\n');
    }
    write_text(&out.join("cumulative.csv"), &csv)?;
    let totals = trace.totals();
    let mut totals_csv = String::from("class,count\n");
    for (c, t) in totals.iter().enumerate() {
        totals_csv.push_str(&format!("{c},{t}\n"));
    }
    write_text(&out.join("totals.csv"), &totals_csv)?;
    let report = AnalyzeReport {
        label: sample.label,
        predicted: trace.predicted(),
        totals,
        decision_step: trace.decision_step,
        decision_time_ms: trace.decision_time_ms,
        duration_ms: sample.duration_ms(),
    };
    write_json(&out.join("decision.json"), &report)?;
    Ok(report)
}

/// Runs the gradient-check suite; a tolerance breach is a [`CliError::Check`].
pub fn gradcheck(cfg: &RunConfig, out: &Path) -> CliResult<GradCheckSuite> {
    let suite = run_gradcheck(&cfg.gradcheck).map_err(|e| CliError::field("gradcheck", e))?;
    create_dir(out)?;
    write_json(&out.join("gradcheck.json"), &suite)?;
    if let Some(bad) = suite.reports.iter().find(|r| !r.passed) {
        return Err(CliError::Check(format!(
            "{} gradient, h={:e}: parameter {} has relative error {:e} (tolerance {:e})",
            bad.label, bad.h, bad.worst_index, bad.max_relative_error, bad.tolerance
        )));
    }
    Ok(suite)
}

/// Writes the synthetic task as canonical binary files under `out/train` and `out/test`.
pub fn synth(cfg: &RunConfig, out: &Path) -> CliResult<(usize, usize)> {
    let (train, test) = synth_split(cfg, cfg.synth.seed)?;
    for (name, set) in [("train", &train), ("test", &test)] {
        let dir = out.join(name);
        create_dir(&dir)?;
        for (k, s) in set.iter().enumerate() {
            write_events(&dir.join(format!("{k:05}_label{}.rade", s.label)), s)?;
        }
    }
    Ok((train.len(), test.len()))
}
