use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use trajplan::dataset::load_occupancy;
use trajplan::geometry::{Trajectory, Waypoint};
use trajplan::metrics::{evaluate_batch_par, EvalConfig, EvalSample, Protocol};

use super::{dataset_error, load_sorted};
use crate::output::{emit, read_file, Record};
use crate::{CliError, Format, GlobalArgs, ProtocolArg};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    sample_id: String,
    trajectory: Vec<[f64; 2]>,
}

/// `sample_id -> trajectory`. Every problem is reported with its line.
fn load_predictions(path: &Path) -> Result<BTreeMap<String, Trajectory>, CliError> {
    let text = read_file(path)?;
    let mut out = BTreeMap::new();
    let mut syntax = Vec::new();
    let mut invalid = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 1;
        let rec: PredictionLine = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) if e.is_data() => {
                invalid.push(format!("  line {n}: {e}"));
                continue;
            }
            Err(e) => {
                syntax.push(format!("  line {n}: {e}"));
                continue;
            }
        };
        let traj = rec
            .trajectory
            .iter()
            .map(|&[x, y]| Waypoint::checked(x, y))
            .collect::<Result<Vec<_>, _>>()
            .and_then(Trajectory::try_from);
        match traj {
            Err(e) => invalid.push(format!("  line {n}: sample_id {}: {e}", rec.sample_id)),
            Ok(t) => {
                if out.insert(rec.sample_id.clone(), t).is_some() {
                    invalid.push(format!("  line {n}: duplicate sample_id {}", rec.sample_id));
                }
            }
        }
    }
    if !syntax.is_empty() {
        return Err(CliError::input(format!("malformed predictions in {}:\n{}", path.display(), syntax.join("\n"))));
    }
    if !invalid.is_empty() {
        return Err(CliError::validation(format!("invalid predictions in {}:\n{}", path.display(), invalid.join("\n"))));
    }
    Ok(out)
}

pub fn eval(g: &GlobalArgs, dataset: &Path, predictions: &Path) -> Result<(), CliError> {
    let samples = load_sorted(dataset)?;
    let mut preds = load_predictions(predictions)?;

    let mut problems = Vec::new();
    for s in &samples {
        if !preds.contains_key(&s.sample_id) {
            problems.push(format!("  missing prediction for sample_id {}", s.sample_id));
        }
    }
    for id in preds.keys() {
        if samples.binary_search_by(|s| s.sample_id.as_str().cmp(id)).is_err() {
            problems.push(format!("  prediction for unknown sample_id {id}"));
        }
    }
    if !problems.is_empty() {
        return Err(CliError::validation(format!(
            "predictions do not match the dataset:\n{}",
            problems.join("\n")
        )));
    }

    let base = dataset.parent().unwrap_or(Path::new(""));
    let batch = samples
        .par_iter()
        .map(|s| {
            let occupancy = match &s.occupancy_path {
                Some(rel) => Some(load_occupancy(base.join(rel)).map_err(dataset_error)?),
                None => None,
            };
            Ok(EvalSample {
                pred: preds[&s.sample_id],
                gt: s.gt_trajectory,
                mask: s.gt_mask,
                occupancy,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    preds.clear();
    g.log(1, || format!("evaluating {} samples", batch.len()));

    let protocols: &[Protocol] = match g.protocol {
        ProtocolArg::Stp3 => &[Protocol::Stp3],
        ProtocolArg::Uniad => &[Protocol::Uniad],
        ProtocolArg::All => &Protocol::ALL,
    };
    let cfg = EvalConfig::default();
    let mut text = String::new();
    for (i, &proto) in protocols.iter().enumerate() {
        let report = evaluate_batch_par(&batch, proto, &cfg).map_err(|e| CliError::input(e.to_string()))?;
        match g.format {
            Format::Records => text.push_str(&Record::new("metric_report", &report).line()),
            Format::Text => {
                if i > 0 {
                    text.push('\n');
                }
                text.push_str(&report.to_text());
            }
        }
    }
    emit(g.out.as_deref(), &text)
}
