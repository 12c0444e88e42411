//! JSON run configuration: schema check, defaults and validation.

use std::path::{Path, PathBuf};

use polaron_core::adiabatic::{InitialPhonons, PhaseIntegrand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Run,
    Sweep,
    Pekar,
    Fock,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Pekar => "pekar",
            Command::Fock => "fock",
            Command::Check => "check",
        }
    }
}

/// Every problem found in a configuration document.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid configuration:\n  {}", .errors.join("\n  "))]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl ConfigError {
    fn single(msg: impl Into<String>) -> Self {
        Self {
            errors: vec![msg.into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dims: usize,
    pub n: usize,
    #[serde(rename = "box")]
    pub box_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub eig_tol: f64,
    pub lin_tol: f64,
    pub leak_tol: f64,
    pub pekar_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eig_tol: 1e-9,
            lin_tol: 1e-10,
            leak_tol: 1e-8,
            pekar_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub t_star: Option<f64>,
    pub short_window: (f64, f64),
    pub short_alpha: Option<f64>,
    pub noise_floor: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            t_star: None,
            short_window: (0.05, 0.5),
            short_alpha: None,
            noise_floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockOptions {
    pub sites: usize,
    pub spacing: f64,
    pub n_max: usize,
    pub alphas: Vec<f64>,
    pub t: f64,
    pub amplitude: f64,
    pub lp_dt: f64,
    pub series_points: usize,
    pub samples: usize,
    pub eps: f64,
}

impl Default for FockOptions {
    fn default() -> Self {
        Self {
            sites: 6,
            spacing: 0.1,
            n_max: 4,
            alphas: vec![2.0, 3.0, 4.0],
            t: 0.5,
            amplitude: 0.05,
            lp_dt: 1e-5,
            series_points: 5,
            samples: 100,
            eps: 0.5,
        }
    }
}

/// Validated configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default)]
    pub phi0: Option<InitialPhonons>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_cadence")]
    pub frame_cadence: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gap_floor")]
    pub gap_floor: f64,
    #[serde(default)]
    pub phase_integrand: PhaseIntegrand,
    #[serde(default)]
    pub sweep: SweepOptions,
    #[serde(default)]
    pub fock: FockOptions,
    /// Checkpoint to continue a `run` from.
    #[serde(default)]
    pub resume: Option<PathBuf>,
    /// Number of samples for the inequality report in `check`.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_t_final() -> f64 {
    1.0
}
fn default_cadence() -> usize {
    100
}
fn default_gap_floor() -> f64 {
    1e-3
}
fn default_samples() -> usize {
    100
}

const TOP_KEYS: &[&str] = &[
    "command",
    "grid",
    "alpha",
    "alphas",
    "dt",
    "t_final",
    "phi0",
    "tolerances",
    "output_dir",
    "frame_cadence",
    "seed",
    "gap_floor",
    "phase_integrand",
    "sweep",
    "fock",
    "resume",
    "samples",
];
const GRID_KEYS: &[&str] = &["dims", "n", "box"];
const TOL_KEYS: &[&str] = &["eig_tol", "lin_tol", "leak_tol", "pekar_tol"];
const SWEEP_KEYS: &[&str] = &["t_star", "short_window", "short_alpha", "noise_floor"];
const FOCK_KEYS: &[&str] = &[
    "sites",
    "spacing",
    "n_max",
    "alphas",
    "t",
    "amplitude",
    "lp_dt",
    "series_points",
    "samples",
    "eps",
];

fn check_keys(v: &Value, allowed: &[&str], path: &str, errors: &mut Vec<String>) {
    if let Some(obj) = v.as_object() {
        for k in obj.keys() {
            if !allowed.contains(&k.as_str()) {
                errors.push(format!("unknown key `{path}{k}`"));
            }
        }
    }
}

/// Outcome of parsing: the config plus non-fatal notes.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

pub fn parse_config(path: &Path, command: Command) -> Result<Parsed, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::single(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, command)
}

pub fn parse_config_str(text: &str, command: Command) -> Result<Parsed, ConfigError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ConfigError::single(format!("not valid JSON: {e}")))?;
    if !value.is_object() {
        return Err(ConfigError::single("top level must be a JSON object"));
    }
    let mut errors = Vec::new();
    check_keys(&value, TOP_KEYS, "", &mut errors);
    let sections: [(&str, &[&str]); 4] = [
        ("grid", GRID_KEYS),
        ("tolerances", TOL_KEYS),
        ("sweep", SWEEP_KEYS),
        ("fock", FOCK_KEYS),
    ];
    for (name, keys) in sections {
        if let Some(sub) = value.get(name) {
            check_keys(sub, keys, &format!("{name}."), &mut errors);
        }
    }
    let needs_grid = command != Command::Fock;
    if needs_grid && value.get("grid").is_none() {
        errors.push("missing required key `grid`".into());
    }
    if let Some(g) = value.get("grid") {
        for k in GRID_KEYS {
            if g.get(k).is_none() {
                errors.push(format!("missing required key `grid.{k}`"));
            }
        }
    }
    if matches!(command, Command::Run | Command::Pekar) && value.get("alpha").is_none() {
        errors.push("missing required key `alpha`".into());
    }
    if command == Command::Sweep && value.get("alphas").is_none() {
        errors.push("missing required key `alphas`".into());
    }
    if matches!(command, Command::Run | Command::Sweep) && value.get("phi0").is_none() {
        errors.push("missing required key `phi0`".into());
    }
    if !errors.is_empty() {
        return Err(ConfigError { errors });
    }
    let mut config: RunConfig =
        serde_json::from_value(value).map_err(|e| ConfigError::single(format!("schema error: {e}")))?;
    let warnings = validate(&mut config, command)?;
    Ok(Parsed { config, warnings })
}

fn positive(errors: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0) || !v.is_finite() {
        errors.push(format!("`{name}` must be positive and finite, got {v}"));
    }
}

fn validate(cfg: &mut RunConfig, command: Command) -> Result<Vec<String>, ConfigError> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    if let Some(c) = cfg.command {
        if c != command {
            errors.push(format!(
                "`command` is `{}` but `{}` was requested",
                c.name(),
                command.name()
            ));
        }
    }
    cfg.command = Some(command);
    positive(&mut errors, "dt", cfg.dt);
    if !(cfg.t_final >= 0.0) || !cfg.t_final.is_finite() {
        errors.push(format!("`t_final` must be non-negative, got {}", cfg.t_final));
    }
    if cfg.frame_cadence == 0 {
        errors.push("`frame_cadence` must be at least 1".into());
    }
    positive(&mut errors, "gap_floor", cfg.gap_floor);
    let t = &cfg.tolerances;
    positive(&mut errors, "tolerances.eig_tol", t.eig_tol);
    positive(&mut errors, "tolerances.lin_tol", t.lin_tol);
    positive(&mut errors, "tolerances.leak_tol", t.leak_tol);
    positive(&mut errors, "tolerances.pekar_tol", t.pekar_tol);
    if let Some(g) = &cfg.grid {
        if g.dims != 1 && g.dims != 3 {
            errors.push(format!("`grid.dims` must be 1 or 3, got {}", g.dims));
        }
        if g.n < 2 || g.n % 2 != 0 {
            errors.push(format!("`grid.n` must be even and at least 2, got {}", g.n));
        }
        positive(&mut errors, "grid.box", g.box_length);
    }
    if let Some(a) = cfg.alpha {
        positive(&mut errors, "alpha", a);
    }
    if let Some(al) = &mut cfg.alphas {
        if al.is_empty() {
            errors.push("`alphas` must not be empty".into());
        }
        for &a in al.iter() {
            positive(&mut errors, "alphas[]", a);
        }
        if al.windows(2).any(|w| w[1] < w[0]) {
            al.sort_by(f64::total_cmp);
            warnings.push("`alphas` were not sorted; sorted ascending".into());
        }
    }
    let f = &mut cfg.fock;
    if f.sites < 2 || f.sites % 2 != 0 {
        errors.push(format!("`fock.sites` must be even and at least 2, got {}", f.sites));
    }
    positive(&mut errors, "fock.spacing", f.spacing);
    positive(&mut errors, "fock.t", f.t);
    positive(&mut errors, "fock.lp_dt", f.lp_dt);
    if f.amplitude < 0.0 {
        errors.push("`fock.amplitude` must be non-negative".into());
    }
    if !(f.eps > 0.0 && f.eps < 1.0) {
        errors.push(format!("`fock.eps` must lie in (0, 1), got {}", f.eps));
    }
    for &a in &f.alphas {
        positive(&mut errors, "fock.alphas[]", a);
    }
    if f.alphas.windows(2).any(|w| w[1] < w[0]) {
        f.alphas.sort_by(f64::total_cmp);
        warnings.push("`fock.alphas` were not sorted; sorted ascending".into());
    }
    let (lo, hi) = cfg.sweep.short_window;
    if !(lo > 0.0 && hi > lo) {
        errors.push(format!("`sweep.short_window` must satisfy 0 < lo < hi, got ({lo}, {hi})"));
    }
    if errors.is_empty() {
        Ok(warnings)
    } else {
        Err(ConfigError { errors })
    }
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).into()
    }
}
