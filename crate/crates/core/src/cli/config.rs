//! JSON run configuration.
//!
//! ```json
//! {
//!   "grid":     { "dim": 1, "lengths": [1.0], "nodes": [51] },
//!   "model":    { "p": 1.5, "epsilon": 0.0 },
//!   "time":     { "dt": 0.01, "t_end": 1.0 },
//!   "coupling": { "mode": "staggered" },
//!   "initial":  { "theta0": "theta_c - 0.5", "beta0": "1" },
//!   "source":   { "r": "zero" },
//!   "solvers":  { "phase_tol": 1e-10 },
//!   "output":   { "dir": "out", "cadence": 0.1 }
//! }
//! ```
//!
//! `model`, `coupling`, `source`, `solvers` and `output` may be omitted.
//! Initial data are expressions, or paths ending in `.csv` naming a snapshot
//! file (relative to the config file). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::formats::read_snapshot;
use crate::constitutive::ModelParams;
use crate::error::{CryoError, Result};
use crate::expr::Expr;
use crate::grid::{Grid, GridSpec};
use crate::simulator::{Coupling, InitialData, SimConfig, SolverSettings, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    #[default]
    Staggered,
    Iterated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub mode: CouplingMode,
    pub max_outer: usize,
    pub outer_tol: f64,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            mode: CouplingMode::Staggered,
            max_outer: 50,
            outer_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub theta0: String,
    pub beta0: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub r: String,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self { r: "zero".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolversSection {
    pub phase_tol: f64,
    pub phase_max_iter: usize,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub linear_tol: f64,
}

impl Default for SolversSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            phase_tol: s.phase_tol,
            phase_max_iter: s.phase_max_iter,
            picard_tol: s.picard_tol,
            picard_max: s.picard_max,
            linear_tol: s.linear_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cadence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridSpec,
    #[serde(default)]
    pub model: ModelParams,
    pub time: TimeSection,
    #[serde(default)]
    pub coupling: CouplingSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub solvers: SolversSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A parsed, validated configuration.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// Effective configuration with snapshot paths made absolute.
    pub file: ConfigFile,
    pub sim: SimConfig,
    pub warnings: Vec<String>,
}

/// 1-based line of the first `"key":` in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().enumerate().find_map(|(n, line)| {
        let pos = line.find(&needle)?;
        line[pos + needle.len()..]
            .trim_start()
            .starts_with(':')
            .then_some(n + 1)
    })
}

struct Locator<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Locator<'_> {
    fn at(&self, keys: &[&str], err: CryoError) -> CryoError {
        let msg = match err {
            CryoError::InvalidInput(m) | CryoError::Config(m) | CryoError::Domain(m) => m,
            other => return other,
        };
        match keys.iter().find_map(|k| key_line(self.text, k)) {
            Some(line) => CryoError::Config(format!("{}:{line}: {msg}", self.path.display())),
            None => CryoError::Config(format!("{}: {msg}", self.path.display())),
        }
    }
}

fn initial_data(
    spec: &str,
    field: &str,
    grid: &Grid,
    base: &Path,
) -> Result<(InitialData, String)> {
    let trimmed = spec.trim();
    if trimmed.ends_with(".csv") {
        let path = base.join(trimmed);
        let snap = read_snapshot(&path)?;
        snap.check_grid(grid)?;
        let values = if field == "theta0" { snap.theta } else { snap.beta };
        let abs = std::fs::canonicalize(&path).unwrap_or(path);
        Ok((InitialData::Values(values), abs.display().to_string()))
    } else {
        Ok((InitialData::Expression(Expr::parse(trimmed)?), spec.to_string()))
    }
}

impl ConfigFile {
    /// Parses JSON text. A run manifest is accepted too; its `config` member is used.
    pub fn parse(text: &str, path: &Path) -> Result<(ConfigFile, String)> {
        let loc_err = |e: serde_json::Error| {
            CryoError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(loc_err)?;
        if let Some(inner) = value
            .get("config")
            .filter(|_| value.get("cryophase_version").is_some())
        {
            let inner_text = serde_json::to_string_pretty(inner)?;
            let cfg = serde_json::from_str(&inner_text).map_err(loc_err)?;
            return Ok((cfg, inner_text));
        }
        Ok((serde_json::from_str(text).map_err(loc_err)?, text.to_string()))
    }

    /// Converts to a [`SimConfig`], validating with line-located messages.
    pub fn to_sim(&self, path: &Path, text: &str) -> Result<LoadedConfig> {
        let loc = Locator { path, text };
        let base = path.parent().unwrap_or(Path::new("."));
        let grid = Grid::from_spec(&self.grid).map_err(|e| loc.at(&["grid"], e))?;

        let mut warnings = self
            .model
            .validate(self.grid.dim)
            .map_err(|e| loc.at(&["p", "model"], e))?;

        let mut file = self.clone();
        let (theta0, t_src) = initial_data(&self.initial.theta0, "theta0", &grid, base)
            .map_err(|e| loc.at(&["theta0"], e))?;
        let (beta0, b_src) = initial_data(&self.initial.beta0, "beta0", &grid, base)
            .map_err(|e| loc.at(&["beta0"], e))?;
        file.initial.theta0 = t_src;
        file.initial.beta0 = b_src;

        let source = match self.source.r.trim() {
            "zero" => Source::Zero,
            s => Source::Expression(Expr::parse(s).map_err(|e| loc.at(&["r", "source"], e))?),
        };
        let coupling = match self.coupling.mode {
            CouplingMode::Staggered => Coupling::Staggered,
            CouplingMode::Iterated => Coupling::Iterated {
                max_outer: self.coupling.max_outer,
                outer_tol: self.coupling.outer_tol,
            },
        };
        let s = &self.solvers;
        let sim = SimConfig {
            grid: self.grid.clone(),
            params: self.model,
            dt: self.time.dt,
            t_end: self.time.t_end,
            coupling,
            theta0,
            beta0,
            source,
            solvers: SolverSettings {
                phase_tol: s.phase_tol,
                phase_max_iter: s.phase_max_iter,
                picard_tol: s.picard_tol,
                picard_max: s.picard_max,
                linear_tol: s.linear_tol,
            },
            cadence: self.output.cadence,
            dump_dir: None,
        };
        let extra = sim.validate().map_err(|e| {
            let keys: &[&str] = match &e {
                CryoError::InvalidInput(m) if m.contains("dt") => &["dt", "time"],
                CryoError::InvalidInput(m) if m.contains("t_end") => &["t_end", "time"],
                CryoError::InvalidInput(m) if m.contains("beta0") => &["beta0"],
                CryoError::InvalidInput(m) if m.contains("theta0") || m.contains("temperature") => &["theta0"],
                CryoError::InvalidInput(m) if m.contains("coupling") => &["coupling"],
                CryoError::InvalidInput(m) if m.contains("cadence") => &["cadence", "output"],
                CryoError::InvalidInput(m) if m.contains("solver") => &["solvers"],
                _ => &["model"],
            };
            loc.at(keys, e)
        })?;
        for w in extra {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        Ok(LoadedConfig { file, sim, warnings })
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CryoError::io(path, e))?;
    let (file, effective_text) = ConfigFile::parse(&text, path)?;
    file.to_sim(path, &effective_text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
  "grid": { "dim": 1, "lengths": [1.0], "nodes": [11] },
  "model": { "p": 1.5 },
  "time": { "dt": 0.1, "t_end": 1.0 },
  "initial": { "theta0": "theta_c", "beta0": "0.5" }
}"#;

    fn load(text: &str) -> Result<LoadedConfig> {
        let p = Path::new("test.json");
        let (f, t) = ConfigFile::parse(text, p)?;
        f.to_sim(p, &t)
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let c = load(GOOD).unwrap();
        assert_eq!(c.sim.coupling, Coupling::Staggered);
        assert!(c.sim.source.is_zero());
        assert_eq!(c.sim.solvers, SolverSettings::default());
        assert_eq!(c.sim.cadence, None);
    }

    #[test]
    fn errors_point_at_the_offending_line() {
        let bad_p = GOOD.replace("\"p\": 1.5", "\"p\": 2.5");
        let msg = load(&bad_p).unwrap_err().to_string();
        assert!(msg.contains("test.json:3:") && msg.contains("1 < p < 2"), "{msg}");

        let bad_dt = GOOD.replace("\"dt\": 0.1", "\"dt\": 10.0");
        let msg = load(&bad_dt).unwrap_err().to_string();
        assert!(msg.contains("test.json:4:"), "{msg}");

        let bad_beta = GOOD.replace("\"beta0\": \"0.5\"", "\"beta0\": \"2\"");
        let msg = load(&bad_beta).unwrap_err().to_string();
        assert!(msg.contains("test.json:5:"), "{msg}");

        let bad_expr = GOOD.replace("\"theta_c\"", "\"theta_c +\"");
        assert!(load(&bad_expr).unwrap_err().to_string().contains("test.json:5:"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let extra = GOOD.replace("\"p\": 1.5", "\"p\": 1.5, \"colour\": 3");
        let err = load(&extra).unwrap_err();
        assert!(err.to_string().contains("colour"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn round_trips_through_serialization() {
        let c = load(GOOD).unwrap();
        let text = serde_json::to_string_pretty(&c.file).unwrap();
        let again = load(&text).unwrap();
        assert_eq!(again.file, c.file);
        assert_eq!(again.sim, c.sim);
    }

    #[test]
    fn key_lines() {
        assert_eq!(key_line(GOOD, "grid"), Some(2));
        assert_eq!(key_line(GOOD, "t_end"), Some(4));
        assert_eq!(key_line(GOOD, "missing"), None);
    }
}
