use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::run::{execute, write_atomic, Command, RunOutcome};
use crate::{Failure, EXIT_NON_CONVERGENCE, EXIT_VERIFICATION};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_MANIFEST: &str = "sweep_manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub dir: String,
    pub exit_code: i32,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepManifest {
    pub config: RunConfig,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub points: Vec<SweepPoint>,
    pub failed: Vec<usize>,
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Points run in the global pool, each in its own `point_NNN` directory.
pub fn run_sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let key = cfg
        .sweep_key
        .clone()
        .ok_or_else(|| Failure::Usage("sweep needs `sweep_key`".into()))?;
    if cfg.sweep_values.is_empty() {
        return Err(Failure::Usage("sweep grid is empty".into()));
    }
    let points: Vec<(usize, f64, RunConfig)> = cfg
        .sweep_values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let dir = cfg.output_dir.join(format!("point_{k:03}"));
            cfg.at_point(&key, v, dir).map(|c| (k, v, c))
        })
        .collect::<Result<_, _>>()?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Failure::Other(anyhow::anyhow!("{}: {e}", cfg.output_dir.display())))?;

    let started = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    let cmd = Command::for_pipeline(cfg.pipeline);
    let results: Vec<(RunOutcome, Result<(), Failure>)> =
        points.par_iter().map(|(_, _, c)| execute(cmd, c)).collect();

    let mut csv = format!("index,{key},status,exit_code,ground_energy,zero_energy,bethe_energy,region,pair_count\n");
    let mut records = Vec::new();
    for ((k, v, c), (out, res)) in points.iter().zip(&results) {
        let code = res.as_ref().map(|_| 0).unwrap_or_else(|e| e.code());
        let status = if code == 0 { "ok" } else { "failed" };
        csv.push_str(&format!(
            "{k},{v},{status},{code},{},{},{},{},{}\n",
            fmt_opt(out.ground_energy),
            fmt_opt(out.zero_energy),
            fmt_opt(out.bethe_energy),
            fmt_opt(out.region.clone()),
            fmt_opt(out.pair_count),
        ));
        records.push(SweepPoint {
            index: *k,
            value: *v,
            dir: c.output_dir.to_string_lossy().into_owned(),
            exit_code: code,
            error: res.as_ref().err().map(|e| e.to_string()),
        });
    }
    write_atomic(&cfg.output_dir.join(SWEEP_CSV), csv.as_bytes())?;
    let failed: Vec<usize> = records.iter().filter(|r| r.exit_code != 0).map(|r| r.index).collect();
    let manifest = SweepManifest {
        config: cfg.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        points: records.clone(),
        failed: failed.clone(),
    };
    let mut text = serde_json::to_vec_pretty(&manifest).map_err(|e| Failure::Other(e.into()))?;
    text.push(b'\n');
    write_atomic(&cfg.output_dir.join(SWEEP_MANIFEST), &text)?;

    if failed.is_empty() {
        return Ok(());
    }
    let msg = format!("{} of {} sweep points failed: {failed:?}", failed.len(), records.len());
    let codes: Vec<i32> = records.iter().map(|r| r.exit_code).collect();
    if codes.contains(&EXIT_NON_CONVERGENCE) {
        Err(Failure::NonConvergence(msg))
    } else if codes.contains(&EXIT_VERIFICATION) {
        Err(Failure::Verification(msg))
    } else {
        Err(Failure::Other(anyhow::anyhow!(msg)))
    }
}
