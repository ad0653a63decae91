use serde::{Deserialize, Serialize};

use super::policy::{Featurizer, ToyPolicy};
use super::tokenizer::TrajTokenizer;
use super::train::{greedy_displacement, train_sft, train_tpo, SftConfig, SftExample, SftRun, TpoConfig, TpoRun, TrainError};
use crate::synthetic::{tpo_task, TaskInstance};

/// The toy two-stage experiment: SFT on tokenized ground truth, then TPO
/// with the SFT policy as both the starting point and the frozen reference.
/// Fields absent from a serialized config take the bundled values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyExperiment {
    pub n_contexts: usize,
    pub task_seed: u64,
    pub tokenizer: TrajTokenizer,
    pub featurizer: Featurizer,
    pub offset_window: usize,
    pub sft: SftConfig,
    pub tpo: TpoConfig,
}

impl Default for ToyExperiment {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

impl ToyExperiment {
    /// The bundled configuration with every seed set to `seed`.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            n_contexts: 200,
            task_seed: seed,
            tokenizer: TrajTokenizer::default(),
            featurizer: Featurizer::rbf(4, 0.35),
            offset_window: 32,
            sft: SftConfig {
                lambda_weight: 1.2,
                learning_rate: 2.0,
                steps: 1500,
                seed,
            },
            tpo: TpoConfig {
                beta: 0.1,
                k: 16,
                temperature: 1.5,
                learning_rate: 0.1,
                steps: 100,
                seed,
                ..TpoConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_contexts == 0 {
            return Err(TrainError::Config("n_contexts must be positive".into()));
        }
        self.featurizer.validate()?;
        self.tokenizer.validate()?;
        self.sft.validate()?;
        self.tpo.validate()
    }

    pub fn instances(&self) -> Vec<TaskInstance> {
        tpo_task(self.n_contexts, self.task_seed)
    }

    pub fn initial_policy(&self) -> ToyPolicy {
        ToyPolicy::zeros_with_window(self.tokenizer, self.featurizer.clone(), self.tokenizer.response_len(), self.offset_window)
    }

    pub fn run_sft(&self, policy: &ToyPolicy, instances: &[TaskInstance]) -> Result<SftRun, TrainError> {
        let examples = instances
            .iter()
            .map(|inst| SftExample::from_instance(policy, inst))
            .collect::<Result<Vec<_>, _>>()?;
        train_sft(policy, &examples, &self.sft)
    }

    pub fn run_tpo(&self, policy: &ToyPolicy, instances: &[TaskInstance]) -> Result<TpoRun, TrainError> {
        train_tpo(policy, policy, instances, &self.tpo)
    }

    /// SFT from zero weights followed by TPO.
    pub fn run(&self) -> Result<ExperimentOutcome, TrainError> {
        let instances = self.instances();
        let sft = self.run_sft(&self.initial_policy(), &instances)?;
        let sft_displacement = greedy_displacement(&sft.policy, &instances, self.tpo.scoring);
        let tpo = self.run_tpo(&sft.policy, &instances)?;
        let tpo_displacement = greedy_displacement(&tpo.policy, &instances, self.tpo.scoring);
        Ok(ExperimentOutcome {
            sft,
            sft_displacement,
            tpo,
            tpo_displacement,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub sft: SftRun,
    pub sft_displacement: f64,
    pub tpo: TpoRun,
    pub tpo_displacement: f64,
}

impl ExperimentOutcome {
    /// `(sft - tpo) / sft`
    pub fn relative_improvement(&self) -> f64 {
        (self.sft_displacement - self.tpo_displacement) / self.sft_displacement
    }
}
