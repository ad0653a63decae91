use std::path::Path;

use serde::Serialize;
use trajplan::dataset::format_actions;
use trajplan::meta_actions::{
    label_cumulative_sequence, label_local_sequence, Formulation, LabelerThresholds, MetaAction,
};

use super::load_sorted;
use crate::output::{emit, Record};
use crate::{CliError, Format, FormulationArg, GlobalArgs};

#[derive(Serialize)]
struct Labels<'a> {
    sample_id: &'a str,
    formulation: Formulation,
    actions: [MetaAction; 3],
}

pub fn label(g: &GlobalArgs, dataset: &Path, formulation: FormulationArg, derive: bool) -> Result<(), CliError> {
    let samples = load_sorted(dataset)?;
    let missing: Vec<&str> = samples
        .iter()
        .filter(|s| s.poses.is_none())
        .map(|s| s.sample_id.as_str())
        .collect();
    if !derive && !missing.is_empty() {
        return Err(CliError::validation(format!(
            "records without pose data (pass --derive-from-trajectory to estimate them):\n  {}",
            missing.join("\n  ")
        )));
    }

    let th = LabelerThresholds::default();
    let mut text = String::new();
    for s in &samples {
        let poses = s.poses_or_derived();
        let seq = match formulation {
            FormulationArg::Local => label_local_sequence(&poses, &th),
            FormulationArg::Cumulative => label_cumulative_sequence(&poses, &th),
        }
        .map_err(|e| CliError::validation(format!("sample_id {}: {e}", s.sample_id)))?;
        match g.format {
            Format::Text => {
                text.push_str(&format!("{}\t{}\n", s.sample_id, format_actions(&seq)));
            }
            Format::Records => {
                let body = Labels {
                    sample_id: &s.sample_id,
                    formulation: seq.formulation,
                    actions: seq.actions,
                };
                text.push_str(&Record::new("labels", body).line());
            }
        }
    }
    g.log(1, || format!("labeled {} samples", samples.len()));
    emit(g.out.as_deref(), &text)
}
