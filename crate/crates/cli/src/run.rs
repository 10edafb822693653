use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rootlab::betheroots::{
    bethe_roots_csv, export_bethe_roots, solve_inhomogeneous_bethe, BetheError, BetheExport,
};
use rootlab::groundstate::{
    build_hamiltonian_mpo, dmrg_ground_state, exact_ground_state_for, load_checkpoint, save_checkpoint,
    CheckpointMeta, Mps,
};
use rootlab::spectral::{ExactLambda, LambdaSource, MpsLambda, SpectralError};
use rootlab::zeroroots::{export_zero_roots, solve_zero_roots, zero_roots_csv, ZeroRootError, ZeroRootExport};
use rootlab::algebra::AlgebraError;
use serde::{Deserialize, Serialize};

use crate::config::{Backend, Pipeline, RunConfig};
use crate::Failure;

pub const CHECKPOINT_FILE: &str = "ground.mps";
pub const GROUND_FILE: &str = "ground.json";
pub const ZERO_JSON: &str = "zero_roots.json";
pub const ZERO_CSV: &str = "zero_roots.csv";
pub const BETHE_JSON: &str = "bethe_roots.json";
pub const BETHE_CSV: &str = "bethe_roots.csv";
pub const ZERO_SUMMARY: &str = "zero_verification.csv";
pub const BETHE_SUMMARY: &str = "bethe_verification.csv";
const SUMMARY_HEADER: &str = "index,re,im,status\n";
pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Iterations {
    pub dmrg_sweeps: Option<usize>,
    pub zero_roots: Option<usize>,
    pub bethe_roots: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub zero_passed: usize,
    pub zero_failed: usize,
    pub bethe_passed: usize,
    pub bethe_failed: usize,
}

impl VerificationSummary {
    pub fn failed(&self) -> usize {
        self.zero_failed + self.bethe_failed
    }
}

/// Written last, atomically, into the output directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub command: String,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub backend: Backend,
    pub timings: Vec<StageTiming>,
    pub iterations: Iterations,
    pub verification: VerificationSummary,
    pub outputs: Vec<String>,
    pub exit_code: i32,
    pub error: Option<String>,
}

/// Ground-state result file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundRecord {
    pub params: rootlab::ModelParams,
    pub backend: Backend,
    pub energy: f64,
    pub sweep_energies: Vec<f64>,
    pub sweep_truncation: Vec<f64>,
    pub converged: bool,
    pub gap: Option<f64>,
    pub gap_flagged: bool,
}

/// What a single run produced, for the sweep aggregate.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub ground_energy: Option<f64>,
    pub region: Option<String>,
    pub pair_count: Option<usize>,
    pub zero_energy: Option<f64>,
    pub bethe_energy: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Ground,
    ZeroRoots,
    BetheRoots,
    /// Both root pipelines on one ground state; used by sweeps.
    Both,
}

impl Command {
    pub fn for_pipeline(p: Pipeline) -> Self {
        match p {
            Pipeline::ZeroRoots => Command::ZeroRoots,
            Pipeline::BetheRoots => Command::BetheRoots,
            Pipeline::Both => Command::Both,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Ground => "ground",
            Command::ZeroRoots => "zeroroots",
            Command::BetheRoots => "betheroots",
            Command::Both => "both",
        }
    }
}

struct Recorder {
    dir: PathBuf,
    timings: Vec<StageTiming>,
    iterations: Iterations,
    verification: VerificationSummary,
    outputs: Vec<String>,
}

impl Recorder {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        write_atomic(&self.dir.join(name), bytes)?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_vec_pretty(value).map_err(|e| Failure::Other(e.into()))?;
        text.push(b'\n');
        self.write(name, &text)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let tmp = path.with_extension("partial");
    let io = |e: std::io::Error| Failure::Other(anyhow::anyhow!("{}: {e}", path.display()));
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs one command and always leaves a manifest behind, also on failure.
pub fn execute(cmd: Command, cfg: &RunConfig) -> (RunOutcome, Result<(), Failure>) {
    let started = now();
    if let Err(e) = fs::create_dir_all(&cfg.output_dir) {
        let err = Failure::Other(anyhow::anyhow!("{}: {e}", cfg.output_dir.display()));
        return (RunOutcome::default(), Err(err));
    }
    let mut rec = Recorder {
        dir: cfg.output_dir.clone(),
        timings: Vec::new(),
        iterations: Iterations::default(),
        verification: VerificationSummary::default(),
        outputs: Vec::new(),
    };
    let mut outcome = RunOutcome::default();
    let result = run_stages(cmd, cfg, &mut rec, &mut outcome);
    let manifest = RunManifest {
        config: cfg.clone(),
        command: cmd.name().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: now(),
        backend: cfg.resolved_backend(),
        timings: rec.timings.clone(),
        iterations: rec.iterations.clone(),
        verification: rec.verification.clone(),
        outputs: rec.outputs.clone(),
        exit_code: result.as_ref().map(|_| 0).unwrap_or_else(|e| e.code()),
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    let written = rec.write_json(MANIFEST_FILE, &manifest);
    (outcome, result.and(written))
}

fn run_stages(cmd: Command, cfg: &RunConfig, rec: &mut Recorder, outcome: &mut RunOutcome) -> Result<(), Failure> {
    let Some(source) = ground_stage(cmd, cfg, rec, outcome)? else {
        return Ok(());
    };
    let zero = matches!(cmd, Command::ZeroRoots | Command::Both);
    let bethe = matches!(cmd, Command::BetheRoots | Command::Both);
    let mut first_error = None;
    if zero {
        if let Err(e) = zero_stage(cfg, source.as_ref(), rec, outcome) {
            first_error.get_or_insert(e);
        }
    }
    if bethe {
        if let Err(e) = bethe_stage(cfg, source.as_ref(), rec, outcome) {
            first_error.get_or_insert(e);
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let v = &rec.verification;
    if v.failed() > 0 {
        return Err(Failure::Verification(format!(
            "{} zero root(s) and {} Bethe root(s) failed verification",
            v.zero_failed, v.bethe_failed
        )));
    }
    Ok(())
}

/// Produces Λ for the later stages, or `None` after the ground command.
fn ground_stage(
    cmd: Command,
    cfg: &RunConfig,
    rec: &mut Recorder,
    outcome: &mut RunOutcome,
) -> Result<Option<Box<dyn LambdaSource>>, Failure> {
    let params = cfg.params().map_err(Failure::Usage)?;
    let backend = cfg.resolved_backend();
    let ckpt = cfg.output_dir.join(CHECKPOINT_FILE);
    if backend == Backend::Dmrg && cmd != Command::Ground {
        if let Some((psi, meta)) = try_load(&ckpt, cfg)? {
            outcome.ground_energy = Some(meta.energy);
            let src = MpsLambda::new(params, &psi).map_err(spectral_failure)?;
            return Ok(Some(Box::new(src)));
        }
    }
    match backend {
        Backend::Exact => {
            let gs = rec.time("ground", || exact_ground_state_for(&params)).map_err(|e| Failure::Other(e.into()))?;
            outcome.ground_energy = Some(gs.energy);
            let record = GroundRecord {
                params: params.clone(),
                backend,
                energy: gs.energy,
                sweep_energies: Vec::new(),
                sweep_truncation: Vec::new(),
                converged: true,
                gap: Some(gs.gap),
                gap_flagged: gs.degenerate,
            };
            rec.write_json(GROUND_FILE, &record)?;
            if cmd == Command::Ground {
                return Ok(None);
            }
            let src = ExactLambda::new(params, &gs.state).map_err(spectral_failure)?;
            Ok(Some(Box::new(src)))
        }
        _ => {
            let opts = cfg.dmrg_options();
            let res = rec
                .time("ground", || build_hamiltonian_mpo(&params).and_then(|h| dmrg_ground_state(&h, &opts)))
                .map_err(|e| Failure::Other(e.into()))?;
            rec.iterations.dmrg_sweeps = Some(res.sweep_energies.len());
            outcome.ground_energy = Some(res.energy);
            let record = GroundRecord {
                params: params.clone(),
                backend,
                energy: res.energy,
                sweep_energies: res.sweep_energies.clone(),
                sweep_truncation: res.sweep_truncation.clone(),
                converged: res.converged,
                gap: res.gap,
                gap_flagged: res.gap_flagged,
            };
            rec.write_json(GROUND_FILE, &record)?;
            let meta = CheckpointMeta {
                params: Some(params.clone()),
                seed: cfg.seed,
                energy: res.energy,
                sweep_energies: res.sweep_energies.clone(),
                discarded_weight_log: res.psi.discarded_weight_log.clone(),
            };
            save_checkpoint(&ckpt, &res.psi, &meta).map_err(|e| Failure::Other(e.into()))?;
            rec.outputs.push(CHECKPOINT_FILE.to_string());
            if !res.converged {
                return Err(Failure::NonConvergence(format!(
                    "DMRG did not converge in {} sweeps",
                    res.sweep_energies.len()
                )));
            }
            if cmd == Command::Ground {
                return Ok(None);
            }
            let src = MpsLambda::new(params, &res.psi).map_err(spectral_failure)?;
            Ok(Some(Box::new(src)))
        }
    }
}

/// A checkpoint is reused only when it was written for the same parameters.
fn try_load(path: &Path, cfg: &RunConfig) -> Result<Option<(Mps, CheckpointMeta)>, Failure> {
    if !path.exists() {
        return Ok(None);
    }
    let (psi, meta) = load_checkpoint(path).map_err(|e| Failure::Other(e.into()))?;
    let params = cfg.params().map_err(Failure::Usage)?;
    Ok((meta.params.as_ref() == Some(&params)).then_some((psi, meta)))
}

fn zero_stage(
    cfg: &RunConfig,
    source: &dyn LambdaSource,
    rec: &mut Recorder,
    outcome: &mut RunOutcome,
) -> Result<(), Failure> {
    let mut summary = String::from(SUMMARY_HEADER);
    let opts = cfg.zero_options();
    let set = rec.time("zero_roots", || solve_zero_roots(source, &opts)).map_err(zero_failure)?;
    rec.iterations.zero_roots = Some(set.iterations);
    let export: ZeroRootExport = export_zero_roots(&set).map_err(zero_failure)?;
    outcome.zero_energy = Some(export.energy);
    outcome.region = set.region.map(|r| r.to_string());
    rec.write_json(ZERO_JSON, &export)?;
    rec.write(ZERO_CSV, zero_roots_csv(&set).as_bytes())?;
    for (k, z) in set.roots.iter().enumerate() {
        let status = match set.verification.get(k) {
            Some(v) if v.passed() => {
                rec.verification.zero_passed += 1;
                "PASS"
            }
            Some(_) => {
                rec.verification.zero_failed += 1;
                "FAIL"
            }
            None => "SKIPPED",
        };
        summary.push_str(&format!("{k},{:.17e},{:.17e},{status}\n", z.re, z.im));
    }
    rec.write(ZERO_SUMMARY, summary.as_bytes())
}

fn bethe_stage(
    cfg: &RunConfig,
    source: &dyn LambdaSource,
    rec: &mut Recorder,
    outcome: &mut RunOutcome,
) -> Result<(), Failure> {
    let mut summary = String::from(SUMMARY_HEADER);
    let opts = cfg.bethe_options();
    let set = rec
        .time("bethe_roots", || solve_inhomogeneous_bethe(source, &opts))
        .map_err(bethe_failure)?;
    rec.iterations.bethe_roots = Some(set.iterations);
    let lambda = |u| source.lambda(u).unwrap_or(num_complex::Complex64::new(f64::NAN, f64::NAN));
    let export: BetheExport = rec
        .time("bethe_verification", || export_bethe_roots(&set, lambda))
        .map_err(bethe_failure)?;
    outcome.bethe_energy = Some(export.energy);
    outcome.pair_count = Some(export.pair_count);
    rec.write_json(BETHE_JSON, &export)?;
    rec.write(BETHE_CSV, bethe_roots_csv(&export).as_bytes())?;
    for (k, z) in export.roots.iter().enumerate() {
        let eps = export.epsilons.get(k).copied().unwrap_or(f64::NAN);
        let g = export.g_values.get(k).map(|g| (g - 1.0).norm()).unwrap_or(f64::NAN);
        let checked = export.ratio_checked.get(k).copied().unwrap_or(true);
        let ok = eps <= cfg.epsilon_tol && (!checked || g <= cfg.ratio_tol);
        if ok {
            rec.verification.bethe_passed += 1;
        } else {
            rec.verification.bethe_failed += 1;
        }
        let status = if ok { "PASS" } else { "FAIL" };
        summary.push_str(&format!("{k},{:.17e},{:.17e},{status}\n", z.re, z.im));
    }
    rec.write(BETHE_SUMMARY, summary.as_bytes())
}

fn spectral_failure(e: SpectralError) -> Failure {
    match e {
        SpectralError::Algebra(a) => algebra_failure(a),
        e => Failure::Other(e.into()),
    }
}

fn algebra_failure(e: AlgebraError) -> Failure {
    match e {
        e @ AlgebraError::NoConvergence { .. } => Failure::NonConvergence(e.to_string()),
        e => Failure::Other(e.into()),
    }
}

fn zero_failure(e: ZeroRootError) -> Failure {
    match e {
        e @ (ZeroRootError::NoConvergence { .. } | ZeroRootError::NeverDetected(_)) => Failure::NonConvergence(e.to_string()),
        ZeroRootError::Algebra(a) => algebra_failure(a),
        ZeroRootError::Spectral(s) => spectral_failure(s),
        e => Failure::Other(e.into()),
    }
}

fn bethe_failure(e: BetheError) -> Failure {
    match e {
        e @ (BetheError::NoConvergence { .. } | BetheError::NoRootConvergence { .. }) => {
            Failure::NonConvergence(e.to_string())
        }
        BetheError::Algebra(a) => algebra_failure(a),
        BetheError::Spectral(s) => spectral_failure(s),
        e => Failure::Other(e.into()),
    }
}
