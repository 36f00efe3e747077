//! Cartesian parameter sweeps: a base config plus a `sweep` table of
//! dotted-key axes, one run directory per grid point, and a flat
//! aggregate CSV. Grid order is row-major over the sorted keys with the
//! last key fastest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{Map, Value};

use viscowave::solver::RunStatus;
use viscowave::well::WellSet;

use crate::config::ExperimentConfig;
use crate::pipeline::{
    hex_sha256, run_to_dir, status_name, Failure, RunOutcome, RunScope, EXIT_CONFIG,
    EXIT_NUMERICAL, EXIT_OK,
};

fn set_path(root: &mut Map<String, Value>, dotted: &str, v: Value) -> Result<(), String> {
    let parts: Vec<&str> = dotted.split('.').collect();
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()))
            .as_object_mut()
            .ok_or_else(|| format!("sweep key {dotted}: {part} is not an object"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), v);
    Ok(())
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn well_set_name(set: WellSet) -> &'static str {
    match set {
        WellSet::W => "w",
        WellSet::V => "v",
        WellSet::Boundary => "boundary",
        WellSet::Neither => "neither",
    }
}

pub fn cmd_sweep(config_path: &Path, out_dir: &Path, cli_seed: Option<u64>) -> Result<u8, Failure> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", config_path.display())))?;
    let root: Value =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("config parse: {e}")))?;
    let mut base = match root {
        Value::Object(m) => m,
        _ => return Err(Failure::config("config root must be a JSON object")),
    };
    let sweep_val = base
        .remove("sweep")
        .ok_or_else(|| Failure::config("sweep command needs a \"sweep\" section in the config"))?;
    let grid: BTreeMap<String, Vec<Value>> = serde_json::from_value(sweep_val)
        .map_err(|e| Failure::config(format!("sweep section: {e}")))?;
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Err(Failure::config("sweep grid is empty"));
    }
    let keys: Vec<&String> = grid.keys().collect();
    let axes: Vec<&Vec<Value>> = grid.values().collect();
    let total: usize = axes.iter().map(|a| a.len()).product();

    fs::create_dir_all(out_dir)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", out_dir.display())))?;

    let jobs: Vec<Vec<usize>> = (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut choice = vec![0usize; keys.len()];
            for k in (0..keys.len()).rev() {
                choice[k] = rem % axes[k].len();
                rem /= axes[k].len();
            }
            choice
        })
        .collect();

    let results: Vec<(Vec<Value>, Result<RunOutcome, Failure>)> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, choice)| {
            let mut object = base.clone();
            let mut vals = Vec::with_capacity(keys.len());
            let mut setup: Result<(), String> = Ok(());
            for (k, key) in keys.iter().enumerate() {
                let v = axes[k][choice[k]].clone();
                vals.push(v.clone());
                if let Err(e) = set_path(&mut object, key, v) {
                    setup = Err(e);
                    break;
                }
            }
            let run_dir = out_dir.join(format!("run_{i:03}"));
            let outcome = setup.map_err(Failure::config).and_then(|()| {
                let mut job_text = serde_json::to_string_pretty(&Value::Object(object))
                    .map_err(|e| Failure::config(format!("job config: {e}")))?;
                job_text.push('\n');
                let sha = hex_sha256(job_text.as_bytes());
                let config = ExperimentConfig::from_json(&job_text).map_err(Failure::config)?;
                run_to_dir(config, sha, cli_seed, &run_dir, RunScope::Full)
            });
            (vals, outcome)
        })
        .collect();

    let mut csv = String::from("run,");
    csv.push_str(&keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","));
    csv.push_str(",status,t_obs,e0,set,fitted_slope\n");
    let mut successes = 0usize;
    let mut first_failure: Option<String> = None;
    for (i, (vals, result)) in results.iter().enumerate() {
        let vals_text = vals.iter().map(scalar_text).collect::<Vec<_>>().join(",");
        match result {
            Ok(outcome) => {
                if matches!(outcome.status, RunStatus::Completed | RunStatus::BlewUp { .. }) {
                    successes += 1;
                } else if first_failure.is_none() {
                    first_failure = Some(format!("run_{i:03}: {}", status_name(&outcome.status)));
                }
                let slope = outcome.fitted_slope.map(|s| format!("{s:.16e}")).unwrap_or_default();
                csv.push_str(&format!(
                    "{i:03},{vals_text},{},{:.16e},{:.16e},{},{slope}\n",
                    status_name(&outcome.status),
                    outcome.t_obs,
                    outcome.e0,
                    well_set_name(outcome.set),
                ));
            }
            Err(f) => {
                if first_failure.is_none() {
                    first_failure = Some(format!("run_{i:03}: {}", f.message));
                }
                let kind = if f.code == EXIT_CONFIG { "config_error" } else { "numerical_error" };
                csv.push_str(&format!("{i:03},{vals_text},{kind},,,,\n"));
            }
        }
    }
    fs::write(out_dir.join("aggregate.csv"), csv)
        .map_err(|e| Failure::numerical(format!("write aggregate.csv: {e}")))?;

    println!("sweep: {successes}/{total} runs reached completed or blewup");
    if successes > 0 {
        Ok(EXIT_OK)
    } else {
        Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!(
                "no sweep run reached completed or blewup (first failure: {})",
                first_failure.unwrap_or_else(|| "none".into())
            ),
        })
    }
}
