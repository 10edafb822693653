use std::path::{Path, PathBuf};

use rootlab::betheroots::BetheOptions;
use rootlab::groundstate::DmrgOptions;
use rootlab::spectral::{BetheNodeVariant, DEFAULT_NODE_EXPONENT};
use rootlab::zeroroots::ZeroRootOptions;
use rootlab::ModelParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Failure;

/// Largest chain handled by the exact backend under `auto`.
pub const AUTO_EXACT_MAX_N: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    ZeroRoots,
    BetheRoots,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Exact,
    Dmrg,
    Auto,
}

/// Flat run configuration. Rapidities, `p`, `q` and all position tolerances
/// are in the same units as `eta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub eta: f64,
    pub p: f64,
    pub q: f64,
    pub xi: f64,
    pub pipeline: Pipeline,
    pub backend: Backend,

    pub max_bond: usize,
    pub truncation_error: f64,
    pub dmrg_energy_tolerance: f64,
    pub min_sweeps: usize,
    pub max_sweeps: usize,
    pub estimate_gap: bool,
    pub seed: u64,

    pub node_exponent: f64,
    /// Real-family offset `t` of the Bethe nodes; `null` means `N/8`.
    pub node_offset: Option<f64>,
    pub bethe_variant: BetheNodeVariant,

    pub zero_movement_tol: f64,
    pub bethe_movement_tol: f64,
    pub max_iterations: usize,
    /// Contour offset of the argument-principle check.
    pub verify_delta: f64,
    pub verify: bool,
    pub ladder: bool,
    /// Per-root PASS thresholds for Bethe roots.
    pub epsilon_tol: f64,
    pub ratio_tol: f64,

    pub output_dir: PathBuf,

    /// Sweep grid: the swept key and its values.
    pub sweep_key: Option<String>,
    pub sweep_values: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dmrg = DmrgOptions::default();
        RunConfig {
            n: 8,
            eta: 1.0,
            p: 0.7,
            q: 0.6,
            xi: 0.0,
            pipeline: Pipeline::Both,
            backend: Backend::Auto,
            max_bond: dmrg.max_bond,
            truncation_error: dmrg.truncation_error,
            dmrg_energy_tolerance: dmrg.energy_tolerance,
            min_sweeps: 4,
            max_sweeps: dmrg.max_sweeps,
            estimate_gap: false,
            seed: dmrg.seed,
            node_exponent: DEFAULT_NODE_EXPONENT,
            node_offset: None,
            bethe_variant: BetheNodeVariant::RealAxis,
            zero_movement_tol: 1e-11,
            bethe_movement_tol: 1e-10,
            max_iterations: 20,
            verify_delta: 1e-6,
            verify: true,
            ladder: false,
            epsilon_tol: 1e-4,
            ratio_tol: 1e-3,
            output_dir: PathBuf::from("rootlab-out"),
            sweep_key: None,
            sweep_values: Vec::new(),
        }
    }
}

/// Keys a sweep may vary.
pub const SWEEP_KEYS: [&str; 5] = ["p", "q", "xi", "eta", "seed"];

impl RunConfig {
    /// Defaults, then the file, then each `key=value` override in order.
    /// A run manifest is accepted in place of a config file.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let mut obj = match doc {
            Value::Object(mut m) if m.contains_key("tool_version") => match m.remove("config") {
                Some(Value::Object(c)) => c,
                _ => return Err(Failure::Usage("manifest without a config object".into())),
            },
            Value::Object(m) => m,
            _ => return Err(Failure::Usage("config must be a JSON object".into())),
        };
        apply_overrides(&mut obj, overrides)?;
        let cfg: RunConfig =
            serde_json::from_value(Value::Object(obj)).map_err(|e| Failure::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.params().map_err(|e| Failure::Usage(e))?;
        let tols = [
            ("truncation_error", self.truncation_error),
            ("dmrg_energy_tolerance", self.dmrg_energy_tolerance),
            ("zero_movement_tol", self.zero_movement_tol),
            ("bethe_movement_tol", self.bethe_movement_tol),
            ("verify_delta", self.verify_delta),
            ("epsilon_tol", self.epsilon_tol),
            ("ratio_tol", self.ratio_tol),
        ];
        for (name, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Failure::Usage(format!("{name} must be positive")));
            }
        }
        if self.n % 2 != 0 {
            return Err(Failure::Usage("n must be even".into()));
        }
        self.dmrg_options().validate().map_err(|e| Failure::Usage(e.to_string()))?;
        if let Some(key) = &self.sweep_key {
            if !SWEEP_KEYS.contains(&key.as_str()) {
                return Err(Failure::Usage(format!("cannot sweep `{key}`; allowed: {SWEEP_KEYS:?}")));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams, String> {
        ModelParams::new(self.n, self.eta, self.p, self.q, self.xi).map_err(|e| e.to_string())
    }

    /// `auto` resolves to exact for small chains.
    pub fn resolved_backend(&self) -> Backend {
        match self.backend {
            Backend::Auto if self.n <= AUTO_EXACT_MAX_N => Backend::Exact,
            Backend::Auto => Backend::Dmrg,
            b => b,
        }
    }

    pub fn dmrg_options(&self) -> DmrgOptions {
        DmrgOptions {
            max_bond: self.max_bond,
            truncation_error: self.truncation_error,
            min_sweeps: self.min_sweeps,
            max_sweeps: self.max_sweeps,
            energy_tolerance: self.dmrg_energy_tolerance,
            seed: self.seed,
            estimate_gap: self.estimate_gap,
            ..DmrgOptions::default()
        }
    }

    pub fn zero_options(&self) -> ZeroRootOptions {
        ZeroRootOptions {
            node_exponent: self.node_exponent,
            max_iterations: self.max_iterations,
            movement_tol: self.zero_movement_tol,
            verify_delta: self.verify_delta,
            verify: self.verify,
            ladder: self.ladder,
            ..ZeroRootOptions::default()
        }
    }

    pub fn bethe_options(&self) -> BetheOptions {
        BetheOptions {
            node_exponent: self.node_exponent,
            node_offset: self.node_offset,
            variant: self.bethe_variant,
            max_iterations: self.max_iterations,
            movement_tol: self.bethe_movement_tol,
            ..BetheOptions::default()
        }
    }

    /// Copy of this config at one sweep point, writing below `dir`.
    pub fn at_point(&self, key: &str, value: f64, dir: PathBuf) -> Result<Self, Failure> {
        let mut obj = match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("RunConfig serializes to an object"),
        };
        let v = if key == "seed" { Value::from(value as u64) } else { Value::from(value) };
        obj.insert(key.to_string(), v);
        obj.insert("output_dir".into(), Value::from(dir.to_string_lossy().into_owned()));
        obj.insert("sweep_key".into(), Value::Null);
        obj.insert("sweep_values".into(), Value::Array(Vec::new()));
        let cfg: RunConfig = serde_json::from_value(Value::Object(obj)).map_err(|e| Failure::Usage(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `key=value`; the value is read as JSON when it parses, else as a string.
fn apply_overrides(obj: &mut Map<String, Value>, overrides: &[String]) -> Result<(), Failure> {
    for item in overrides {
        let Some((key, raw)) = item.split_once('=') else {
            return Err(Failure::Usage(format!("--set expects key=value, got `{item}`")));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Failure::Usage(format!("--set with empty key: `{item}`")));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        obj.insert(key.to_string(), value);
    }
    Ok(())
}
