//! Experiment runners and their on-disk artifacts.
//!
//! A run is a pure function of its [`ExperimentConfig`]: every CSV artifact
//! starts with a `# config:` line holding the full configuration as JSON and
//! `summary.json` repeats it, so any artifact can be regenerated byte for
//! byte with [`replay`].

mod abalone;
mod bipartite;
mod mixture;
mod rates;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{to_json_bytes, write_atomic};

pub use abalone::{load_abalone, parse_abalone, run_abalone, AbaloneConfig, AbaloneReport, DatasetBundle, Provenance};
pub use bipartite::{run_bipartite, BipartiteConfig, BipartiteReport};
pub use mixture::{run_mixture, MixtureConfig, MixtureReport, MixtureRow};
pub use rates::{run_bounds, run_rates, BoundsConfig, RatesConfig, RatesReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentKind {
    Mixture(MixtureConfig),
    Abalone(AbaloneConfig),
    Bipartite(BipartiteConfig),
    Rates(RatesConfig),
    Bounds(BoundsConfig),
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Mixture(_) => "mixture",
            ExperimentKind::Abalone(_) => "abalone",
            ExperimentKind::Bipartite(_) => "bipartite",
            ExperimentKind::Rates(_) => "rates",
            ExperimentKind::Bounds(_) => "bounds",
        }
    }
}

fn one() -> f64 {
    1.0
}

/// A complete experiment description. Parsed from TOML, e.g.
///
/// ```toml
/// experiment = "mixture"
/// seed = 7
/// scale = 0.2
/// n = 10000
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Master seed; every random draw of the run derives from it.
    #[serde(default)]
    pub seed: u64,
    /// Multiplies the problem sizes of the experiment (vertex counts, trials).
    #[serde(default = "one")]
    pub scale: f64,
    /// Where runs are written; not part of the recorded configuration.
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub kind: ExperimentKind,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config(format!("scale must be positive, got {}", self.scale)));
        }
        match &self.kind {
            ExperimentKind::Mixture(c) => c.validate(self.scale),
            ExperimentKind::Abalone(c) => c.validate(),
            ExperimentKind::Bipartite(c) => c.validate(self.scale),
            ExperimentKind::Rates(c) => c.validate(self.scale),
            ExperimentKind::Bounds(c) => c.validate(self.scale),
        }
    }

    /// The configuration as recorded in artifacts: compact JSON.
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// `round(value * scale)`, at least `min`.
pub(crate) fn scaled(value: usize, scale: f64, min: usize) -> usize {
    ((value as f64 * scale).round() as usize).max(min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

/// All files produced by one run, `summary.json` included.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub summary: serde_json::Value,
}

impl RunOutput {
    pub fn get(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

/// Results of one runner before the configuration is stamped on.
pub(crate) struct RawOutput {
    pub tables: Vec<(String, String)>,
    pub results: serde_json::Value,
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    results: &'a serde_json::Value,
}

/// Runs the configured experiment without touching the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let raw = match &cfg.kind {
        ExperimentKind::Mixture(c) => mixture::raw_output(&run_mixture(c, cfg.seed, cfg.scale)?)?,
        ExperimentKind::Abalone(c) => abalone::raw_output(&run_abalone(c, cfg.seed)?)?,
        ExperimentKind::Bipartite(c) => bipartite::raw_output(&run_bipartite(c, cfg.seed, cfg.scale)?)?,
        ExperimentKind::Rates(c) => rates::rates_output(&run_rates(c, cfg.seed, cfg.scale)?)?,
        ExperimentKind::Bounds(c) => rates::bounds_output(&run_bounds(c, cfg.seed, cfg.scale)?)?,
    };
    let header = format!("# config: {}\n", cfg.to_json_line()?);
    let mut artifacts: Vec<Artifact> = raw
        .tables
        .into_iter()
        .map(|(name, body)| Artifact { name, contents: format!("{header}{body}").into_bytes() })
        .collect();
    let summary = Summary { experiment: cfg.kind.name(), config: cfg, results: &raw.results };
    artifacts.push(Artifact { name: "summary.json".into(), contents: to_json_bytes(&summary)? });
    Ok(RunOutput { artifacts, summary: raw.results })
}

/// Writes every artifact atomically. With `timestamped`, a fresh
/// `<experiment>-<unix seconds>` directory is created under `root`.
pub fn write_run(root: &Path, cfg: &ExperimentConfig, out: &RunOutput, timestamped: bool) -> Result<PathBuf> {
    let dir = if timestamped {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let base = format!("{}-{secs}", cfg.kind.name());
        let mut dir = root.join(&base);
        let mut k = 1;
        while dir.exists() {
            dir = root.join(format!("{base}-{k}"));
            k += 1;
        }
        dir
    } else {
        root.to_path_buf()
    };
    fs::create_dir_all(&dir)?;
    for a in &out.artifacts {
        write_atomic(&dir.join(&a.name), &a.contents)?;
    }
    Ok(dir)
}

/// Reads the configuration recorded in a run directory's `summary.json`.
pub fn recorded_config(run_dir: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(run_dir.join("summary.json"))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let cfg =
        v.get("config").ok_or_else(|| Error::Provenance(format!("{} has no recorded config", run_dir.display())))?;
    let cfg: ExperimentConfig = serde_json::from_value(cfg.clone())?;
    cfg.validate()?;
    Ok(cfg)
}

/// Re-runs the experiment recorded in `run_dir` and lists the artifacts whose
/// bytes differ from the files on disk (empty when the replay is exact).
pub fn replay(run_dir: &Path) -> Result<(RunOutput, Vec<String>)> {
    let cfg = recorded_config(run_dir)?;
    let out = run_experiment(&cfg)?;
    let mut differing = Vec::new();
    for a in &out.artifacts {
        match fs::read(run_dir.join(&a.name)) {
            Ok(bytes) if bytes == a.contents => {}
            _ => differing.push(a.name.clone()),
        }
    }
    Ok((out, differing))
}
