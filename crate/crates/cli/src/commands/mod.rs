mod eval;
mod label;
mod pairs;
mod parse;
mod synthetic;
mod train;

use std::path::Path;

use trajplan::dataset::{load_samples, DatasetError, SceneSample};
use trajplan::tpo::{PolicyError, ToyPolicy};

use crate::CliError;

pub use eval::eval;
pub use label::label;
pub use pairs::pairs;
pub use parse::parse;
pub use synthetic::gen_synthetic;
pub use train::train;

pub(crate) fn dataset_error(e: DatasetError) -> CliError {
    match e {
        DatasetError::Invalid(errors) => {
            // Broken JSON is an input error; well-formed records with bad
            // values are a validation error.
            let code = if errors.iter().any(|r| r.field.is_none()) {
                CliError::INPUT
            } else {
                CliError::VALIDATION
            };
            let lines: Vec<String> = errors.iter().map(|r| format!("  {r}")).collect();
            CliError {
                code,
                message: format!("{} invalid record(s):\n{}", errors.len(), lines.join("\n")),
            }
        }
        other => CliError::input(other.to_string()),
    }
}

/// Loads a dataset, ordered by sample id.
pub(crate) fn load_sorted(path: &Path) -> Result<Vec<SceneSample>, CliError> {
    let mut samples = load_samples(path).map_err(dataset_error)?;
    samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    if let Some(w) = samples.windows(2).find(|w| w[0].sample_id == w[1].sample_id) {
        return Err(CliError::validation(format!("duplicate sample_id {}", w[0].sample_id)));
    }
    Ok(samples)
}

pub(crate) fn load_policy(path: &Path) -> Result<ToyPolicy, CliError> {
    ToyPolicy::load(path).map_err(|e| match e {
        PolicyError::Io { .. } => CliError::input(e.to_string()),
        other => CliError::validation(format!("invalid policy {}: {other}", path.display())),
    })
}
