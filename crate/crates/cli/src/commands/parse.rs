use std::path::Path;

use serde::Serialize;
use trajplan::dataset::{parse_model_output, serialize_completion};
use trajplan::geometry::Trajectory;
use trajplan::meta_actions::{Formulation, MetaAction};

use crate::output::{emit, read_file, Record};
use crate::{CliError, Format, GlobalArgs};

#[derive(Serialize)]
struct ModelOutputBody<'a> {
    prediction: Option<&'a str>,
    think: Option<&'a str>,
    formulation: Formulation,
    actions: [MetaAction; 3],
    trajectory: Trajectory,
}

#[derive(Serialize)]
struct ParseErrorBody<'a> {
    error: &'a str,
    offset: usize,
    message: String,
}

pub fn parse(g: &GlobalArgs, file: &Path) -> Result<(), CliError> {
    let text = read_file(file)?;
    match parse_model_output(&text) {
        Ok(m) => {
            let out = match g.format {
                Format::Text => serialize_completion(&m) + "\n",
                Format::Records => Record::new(
                    "model_output",
                    ModelOutputBody {
                        prediction: m.prediction.as_deref(),
                        think: m.think.as_deref(),
                        formulation: m.actions.formulation,
                        actions: m.actions.actions,
                        trajectory: m.trajectory,
                    },
                )
                .line(),
            };
            emit(g.out.as_deref(), &out)
        }
        Err(e) => {
            if g.format == Format::Records {
                let body = ParseErrorBody {
                    error: e.kind(),
                    offset: e.offset(),
                    message: e.to_string(),
                };
                emit(g.out.as_deref(), &Record::new("parse_error", body).line())?;
            }
            Err(CliError::input(format!("{}: {e}", file.display())))
        }
    }
}
