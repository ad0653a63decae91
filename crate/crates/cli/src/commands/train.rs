use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajplan::tpo::{greedy_displacement, ToyExperiment, ToyPolicy, TrainError};

use super::load_policy;
use crate::output::{read_file, write_file, Record};
use crate::{CliError, GlobalArgs, TrainMode};

/// The experiment plus an optional starting policy, resolved relative to
/// the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainConfig {
    #[serde(flatten)]
    experiment: ToyExperiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init_policy: Option<PathBuf>,
}

#[derive(Serialize)]
struct SftStep {
    step: usize,
    loss: f64,
}

#[derive(Serialize)]
struct Summary {
    mode: &'static str,
    initial_displacement: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sft_displacement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tpo_displacement: Option<f64>,
    /// `(before - after) / before` for the TPO stage.
    #[serde(skip_serializing_if = "Option::is_none")]
    tpo_relative_improvement: Option<f64>,
}

fn config_error(e: TrainError) -> CliError {
    CliError::validation(format!("invalid config: {e}"))
}

fn load_config(path: &Path) -> Result<TrainConfig, CliError> {
    let text = read_file(path)?;
    let mut cfg: TrainConfig = serde_json::from_str(&text).map_err(|e| {
        if e.is_data() {
            CliError::validation(format!("invalid config {}: {e}", path.display()))
        } else {
            CliError::input(format!("malformed config {}: {e}", path.display()))
        }
    })?;
    if let Some(p) = cfg.init_policy.take() {
        let base = path.parent().unwrap_or(Path::new(""));
        let joined = base.join(p);
        let abs = std::path::absolute(&joined)
            .map_err(|e| CliError::input(format!("cannot resolve {}: {e}", joined.display())))?;
        cfg.init_policy = Some(abs);
    }
    Ok(cfg)
}

fn check_compatible(policy: &ToyPolicy, exp: &ToyExperiment) -> Result<(), CliError> {
    if policy.tokenizer != exp.tokenizer
        || policy.featurizer != exp.featurizer
        || policy.offset_window != exp.offset_window
        || policy.n_positions != exp.tokenizer.response_len()
    {
        return Err(CliError::validation(
            "init_policy does not match the config's tokenizer, featurizer or offset_window",
        ));
    }
    Ok(())
}

fn mode_name(mode: TrainMode) -> &'static str {
    match mode {
        TrainMode::Sft => "sft",
        TrainMode::Tpo => "tpo",
        TrainMode::SftTpo => "sft+tpo",
    }
}

/// Writes `config.json` (the effective config), `metrics.jsonl`, and the
/// final policies into the `--out` directory.
pub fn train(g: &GlobalArgs, mode: TrainMode, config: &Path) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = g.seed {
        cfg.experiment.task_seed = seed;
        cfg.experiment.sft.seed = seed;
        cfg.experiment.tpo.seed = seed;
    }
    let exp = &cfg.experiment;
    exp.validate().map_err(config_error)?;
    let out = g
        .out
        .as_deref()
        .ok_or_else(|| CliError::validation("train requires --out DIR"))?;

    let init = match &cfg.init_policy {
        Some(path) => {
            let p = load_policy(path)?;
            check_compatible(&p, exp)?;
            p
        }
        None if mode == TrainMode::Tpo => {
            return Err(CliError::validation("mode tpo requires init_policy in the config"));
        }
        None => exp.initial_policy(),
    };

    std::fs::create_dir_all(out).map_err(|e| CliError::input(format!("cannot create {}: {e}", out.display())))?;
    let echo = serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n";
    write_file(&out.join("config.json"), &echo)?;

    let instances = exp.instances();
    let scoring = exp.tpo.scoring;
    let mut metrics = String::new();
    let mut summary = Summary {
        mode: mode_name(mode),
        initial_displacement: greedy_displacement(&init, &instances, scoring),
        sft_displacement: None,
        tpo_displacement: None,
        tpo_relative_improvement: None,
    };

    let mut policy = init;
    if matches!(mode, TrainMode::Sft | TrainMode::SftTpo) {
        g.log(1, || format!("sft: {} steps", exp.sft.steps));
        let run = exp.run_sft(&policy, &instances).map_err(config_error)?;
        for (step, &loss) in run.losses.iter().enumerate() {
            metrics.push_str(&Record::new("sft_step", SftStep { step, loss }).line());
        }
        policy = run.policy;
        summary.sft_displacement = Some(greedy_displacement(&policy, &instances, scoring));
        save(&policy, &out.join("sft_policy.json"))?;
    }
    if matches!(mode, TrainMode::Tpo | TrainMode::SftTpo) {
        g.log(1, || format!("tpo: {} steps", exp.tpo.steps));
        let before = summary.sft_displacement.unwrap_or(summary.initial_displacement);
        let run = exp.run_tpo(&policy, &instances).map_err(config_error)?;
        for m in &run.metrics {
            metrics.push_str(&Record::new("tpo_step", m).line());
        }
        for w in &run.warnings {
            g.log(1, || format!("warning: {w}"));
            metrics.push_str(&Record::new("warning", serde_json::json!({ "message": w })).line());
        }
        policy = run.policy;
        let after = greedy_displacement(&policy, &instances, scoring);
        summary.tpo_displacement = Some(after);
        summary.tpo_relative_improvement = Some((before - after) / before);
        save(&policy, &out.join("tpo_policy.json"))?;
    }
    metrics.push_str(&Record::new("train_summary", &summary).line());
    write_file(&out.join("metrics.jsonl"), &metrics)?;
    g.log(1, || format!("wrote {}", out.display()));
    Ok(())
}

fn save(policy: &ToyPolicy, path: &Path) -> Result<(), CliError> {
    policy.save(path).map_err(|e| CliError::input(e.to_string()))
}
