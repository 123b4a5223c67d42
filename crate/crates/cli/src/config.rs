use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use eegemo::eval::ModelConfig;
use eegemo::reduction::RankingMethod;
use eegemo::{FeatureKind, SyntheticSpec};
use serde::{Deserialize, Serialize};

/// Output directory used when neither the config nor `--out` sets one.
pub const OUT_DIR_ENV: &str = "EEGEMO_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "eegemo-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Seed for fold assignment.
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for per-trial work; all cores when absent. Left out of
    /// report snapshots since it cannot change any result.
    #[serde(default, skip_serializing)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub synth: Option<SyntheticSpec>,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Globs of trial sidecars (`*.json`).
    #[serde(default)]
    pub trials: Vec<String>,
    /// Globs of feature CSVs. Take precedence over `trials` where both work.
    #[serde(default)]
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    #[serde(default = "default_kind")]
    pub kind: FeatureKind,
    /// `five` or `four`.
    #[serde(default = "default_bands")]
    pub bands: String,
    #[serde(default = "one")]
    pub window_seconds: f64,
    /// Channels whose spectrograms `extract` also writes.
    #[serde(default)]
    pub spectrogram_channels: Vec<String>,
}

fn default_kind() -> FeatureKind {
    FeatureKind::De
}

fn default_bands() -> String {
    "five".into()
}

fn one() -> f64 {
    1.0
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            kind: default_kind(),
            bands: default_bands(),
            window_seconds: 1.0,
            spectrogram_channels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    #[serde(default = "default_method")]
    pub method: RankingMethod,
    #[serde(default = "twenty")]
    pub k: usize,
    /// MRMR discretization: levels at mean +/- spread * std.
    #[serde(default = "half")]
    pub spread: f64,
}

fn default_method() -> RankingMethod {
    RankingMethod::Mrmr
}

fn twenty() -> usize {
    20
}

fn half() -> f64 {
    0.5
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            method: default_method(),
            k: 20,
            spread: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Kfold,
    CrossSession,
    Loso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    /// Folds for k-fold, and for the diagonal of the cross-session grid.
    #[serde(default = "five")]
    pub folds: usize,
}

fn default_protocol() -> Protocol {
    Protocol::Kfold
}

fn five() -> usize {
    5
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            protocol: default_protocol(),
            folds: 5,
        }
    }
}

impl PipelineConfig {
    /// Reads `path` (or starts empty), applies `key=value` overrides, fills
    /// in the output directory and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .map_err(|e| anyhow!("config {}: {e}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: PipelineConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
            .map_err(|e| {
                let key = e.path().to_string();
                anyhow!("config key `{key}`: {}", e.into_inner())
            })?;
        if cfg.output_dir.is_none() {
            let dir = std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR));
            cfg.output_dir = Some(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.jobs == Some(0) {
            bail!("config key `jobs`: must be at least 1");
        }
        if !(self.features.window_seconds.is_finite() && self.features.window_seconds > 0.0) {
            bail!("config key `features.window_seconds`: must be positive");
        }
        eegemo::BandTable::by_name(&self.features.bands).map_err(|e| anyhow!("config key `features.bands`: {e}"))?;
        if self.eval.folds < 2 {
            bail!("config key `eval.folds`: need at least 2 folds");
        }
        if let Some(spec) = &self.synth {
            spec.validate().map_err(|e| anyhow!("config key `synth`: {e}"))?;
        }
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        self.output_dir.as_deref().expect("resolved at load")
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a bare string
/// when it does not parse as one.
fn apply_override(table: &mut toml::Table, assignment: &str) -> anyhow::Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override {assignment:?} is not key=value"))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} is malformed");
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {key:?}: `{p}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_str(text: &str, overrides: &[&str]) -> anyhow::Result<PipelineConfig> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, text).unwrap();
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        PipelineConfig::load(Some(&p), &o)
    }

    #[test]
    fn empty_config_takes_defaults() {
        let c = from_str("output_dir = \"x\"", &[]).unwrap();
        assert_eq!(c.model, ModelConfig::default());
        assert_eq!(c.eval.folds, 5);
        assert_eq!(c.features.kind, FeatureKind::De);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = from_str("[model]\nsmothing = 1\n", &[]).unwrap_err().to_string();
        assert!(err.contains("smothing"), "{err}");
        let err = from_str("[model.classifier]\ntype = \"svm\"\n", &[]).unwrap_err().to_string();
        assert!(err.contains("model.classifier"), "{err}");
    }

    #[test]
    fn overrides_replace_and_create_keys() {
        let c = from_str(
            "[eval]\nfolds = 3\n",
            &["eval.folds=4", "model.classifier.type=knn", "output_dir=out dir"],
        )
        .unwrap();
        assert_eq!(c.eval.folds, 4);
        assert_eq!(c.model.classifier, eegemo::classify::ClassifierConfig::Knn { k: 5 });
        assert_eq!(c.output_dir.unwrap(), PathBuf::from("out dir"));
        assert!(from_str("", &["nokey"]).is_err());
    }
}
