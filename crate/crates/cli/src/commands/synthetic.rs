use sha2::{Digest, Sha256};
use trajplan::dataset::{samples_to_jsonl, save_occupancy};
use trajplan::synthetic::gen_synthetic as generate;

use super::dataset_error;
use crate::output::write_file;
use crate::{CliError, GlobalArgs};

/// Writes `<out>` (records) plus `occupancy/<id>.json` next to it, and
/// prints the SHA-256 of the record file.
pub fn gen_synthetic(g: &GlobalArgs, n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::validation("--n must be positive"));
    }
    let out = g
        .out
        .as_deref()
        .ok_or_else(|| CliError::validation("gen-synthetic requires --out PATH"))?;
    let scenes = generate(n, g.seed());
    let base = out.parent().unwrap_or(std::path::Path::new(""));
    for scene in &scenes {
        let rel = scene.sample.occupancy_path.as_deref().expect("generated scenes carry occupancy");
        let path = base.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
        }
        save_occupancy(&path, &scene.occupancy).map_err(dataset_error)?;
    }
    let samples: Vec<_> = scenes.into_iter().map(|s| s.sample).collect();
    let jsonl = samples_to_jsonl(&samples);
    write_file(out, &jsonl)?;
    g.log(1, || format!("wrote {n} records to {}", out.display()));
    println!("{:x}  {}", Sha256::digest(jsonl.as_bytes()), out.display());
    Ok(())
}
