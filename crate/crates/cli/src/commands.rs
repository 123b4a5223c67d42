use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, Context};
use eegemo::eval::{self, label_set, EvalReport, TrainedPipeline};
use eegemo::features::extract as extract_features;
use eegemo::ingest::{generate_synthetic, load_trial, save_trial};
use eegemo::persist::{load_pipeline, save_pipeline};
use eegemo::reduction::{correlation_rank, mrmr_select, Discretizer, RankingMethod};
use eegemo::smoothing::{fit_lds_multi, lds_smooth, moving_average, EmOptions};
use eegemo::spectral::stft_power;
use eegemo::eval::SmoothingConfig;
use eegemo::{BandTable, ChannelLayout, FeatureTensor, SyntheticSpec, TrialMeta, TrialRecording};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{PipelineConfig, Protocol};

#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> String {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => format!("{e:#}"),
        }
    }
}

impl From<eegemo::Error> for CliError {
    fn from(e: eegemo::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

type CmdResult = Result<(), CliError>;

#[derive(Debug, Serialize)]
struct ManifestEntry {
    subject_id: String,
    session_id: String,
    trial_id: String,
    label: i64,
    source: String,
    output: String,
}

impl ManifestEntry {
    fn new(meta: &TrialMeta, source: &Path, output: &Path) -> Self {
        ManifestEntry {
            subject_id: meta.subject_id.clone(),
            session_id: meta.session_id.clone(),
            trial_id: meta.trial_id.clone(),
            label: meta.label,
            source: source.display().to_string(),
            output: output.display().to_string(),
        }
    }
}

/// Collects entries from parallel workers; written once, sorted.
struct Manifest(Mutex<Vec<ManifestEntry>>);

impl Manifest {
    fn new() -> Self {
        Manifest(Mutex::new(Vec::new()))
    }

    fn push(&self, e: ManifestEntry) {
        self.0.lock().expect("manifest lock").push(e);
    }

    fn write(self, path: &Path) -> anyhow::Result<usize> {
        let mut entries = self.0.into_inner().expect("manifest lock");
        entries.sort_by(|a, b| a.output.cmp(&b.output));
        let text = serde_json::to_string_pretty(&entries)? + "\n";
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(entries.len())
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// File stem for a trial, unique across subjects and sessions.
fn stem(meta: &TrialMeta) -> String {
    format!("{}_{}_{}", meta.subject_id, meta.session_id, meta.trial_id)
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Expands globs; every pattern must match at least one file.
fn expand(patterns: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in patterns {
        let paths = glob::glob(p).map_err(|e| CliError::Usage(anyhow!("input glob `{p}`: {e}")))?;
        let before = out.len();
        for entry in paths {
            out.push(entry.map_err(|e| CliError::Runtime(anyhow!("input glob `{p}`: {e}")))?);
        }
        if out.len() == before {
            return Err(CliError::Usage(anyhow!("input glob `{p}` matches no files")));
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn check_unique_stems<'a>(metas: impl Iterator<Item = &'a TrialMeta>) -> Result<(), CliError> {
    let mut seen = BTreeMap::new();
    for m in metas {
        if let Some(prev) = seen.insert(stem(m), m) {
            return Err(CliError::Runtime(anyhow!(
                "two inputs share subject/session/trial id {}/{}/{}",
                prev.subject_id,
                prev.session_id,
                prev.trial_id
            )));
        }
    }
    Ok(())
}

fn load_trials(cfg: &PipelineConfig) -> Result<Vec<(PathBuf, TrialRecording)>, CliError> {
    if cfg.input.trials.is_empty() {
        return Err(CliError::Usage(anyhow!("config key `input.trials` is empty")));
    }
    let paths = expand(&cfg.input.trials)?;
    let trials = paths
        .into_par_iter()
        .map(|p| load_trial(&p).map(|t| (p, t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(trials)
}

fn extract_one(cfg: &PipelineConfig, t: &TrialRecording) -> eegemo::Result<FeatureTensor> {
    let bands = BandTable::by_name(&cfg.features.bands)?;
    extract_features(t, cfg.features.kind, &bands, &ChannelLayout::cap62(), cfg.features.window_seconds)
}

/// Feature tensors from `input.features`, or extracted from `input.trials`.
fn load_features(cfg: &PipelineConfig) -> Result<Vec<FeatureTensor>, CliError> {
    let tensors = if !cfg.input.features.is_empty() {
        expand(&cfg.input.features)?
            .into_par_iter()
            .map(|p| FeatureTensor::read_csv(&p))
            .collect::<Result<Vec<_>, _>>()?
    } else if !cfg.input.trials.is_empty() {
        load_trials(cfg)?
            .par_iter()
            .map(|(_, t)| extract_one(cfg, t))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        return Err(CliError::Usage(anyhow!(
            "no inputs: set config key `input.features` or `input.trials`"
        )));
    };
    log::info!("loaded {} feature tensors", tensors.len());
    Ok(tensors)
}

fn read_spec(path: &Path) -> anyhow::Result<SyntheticSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let spec = if is_json {
        serde_json::from_str(&text).map_err(|e| anyhow!("spec {}: {e}", path.display()))?
    } else {
        toml::from_str(&text).map_err(|e| anyhow!("spec {}: {e}", path.display()))?
    };
    Ok(spec)
}

pub fn synth(cfg: &PipelineConfig, spec_path: Option<&Path>) -> CmdResult {
    let spec = match spec_path {
        Some(p) => read_spec(p).map_err(CliError::Usage)?,
        None => cfg
            .synth
            .clone()
            .ok_or_else(|| CliError::Usage(anyhow!("no synthetic spec: pass --spec or set the `synth` table")))?,
    };
    spec.validate().map_err(|e| CliError::Usage(e.into()))?;
    let trials = generate_synthetic(&spec)?;
    let dir = cfg.out_dir().join("trials");
    ensure_dir(&dir)?;
    check_unique_stems(trials.iter().map(|t| &t.meta))?;
    let manifest = Manifest::new();
    trials.par_iter().try_for_each(|t| -> eegemo::Result<()> {
        let path = dir.join(format!("{}.json", stem(&t.meta)));
        save_trial(t, &path)?;
        manifest.push(ManifestEntry::new(&t.meta, Path::new("synthetic"), &path));
        Ok(())
    })?;
    let n = manifest.write(&cfg.out_dir().join("synth_manifest.json"))?;
    println!("wrote {n} trials to {}", dir.display());
    Ok(())
}

pub fn extract(cfg: &PipelineConfig) -> CmdResult {
    if cfg.input.trials.is_empty() {
        return Err(CliError::Usage(anyhow!("config key `input.trials` is empty")));
    }
    let paths = expand(&cfg.input.trials)?;
    let dir = cfg.out_dir().join("features");
    ensure_dir(&dir)?;
    let spec_dir = cfg.out_dir().join("spectrograms");
    if !cfg.features.spectrogram_channels.is_empty() {
        ensure_dir(&spec_dir)?;
    }
    let manifest = Manifest::new();
    let stems = Mutex::new(BTreeMap::<String, PathBuf>::new());
    let failures: Vec<String> = paths
        .par_iter()
        .filter_map(|p| {
            let work = || -> anyhow::Result<()> {
                let t = load_trial(p)?;
                let s = stem(&t.meta);
                if let Some(prev) = stems.lock().expect("stem lock").insert(s.clone(), p.clone()) {
                    anyhow::bail!("same trial identity as {}", prev.display());
                }
                let f = extract_one(cfg, &t)?;
                let out = dir.join(format!("{s}.csv"));
                f.write_csv(&out)?;
                if !cfg.features.spectrogram_channels.is_empty() {
                    let spec = stft_power(&t, cfg.features.window_seconds)?;
                    for ch in &cfg.features.spectrogram_channels {
                        let c = t
                            .channel_index(ch)
                            .ok_or_else(|| eegemo::Error::MissingChannel(ch.clone()))?;
                        spec.write_channel_csv(c, &spec_dir.join(format!("{s}_{ch}.csv")))?;
                    }
                }
                manifest.push(ManifestEntry::new(&t.meta, p, &out));
                Ok(())
            };
            work().err().map(|e| format!("{}: {e:#}", p.display()))
        })
        .collect();
    let n = manifest.write(&dir.join("manifest.json"))?;
    println!("wrote {n} feature files to {}", dir.display());
    if failures.is_empty() {
        Ok(())
    } else {
        let mut failures = failures;
        failures.sort();
        for f in &failures {
            eprintln!("failed: {f}");
        }
        Err(CliError::Runtime(anyhow!("{} of {} trials failed", failures.len(), paths.len())))
    }
}

pub fn smooth(cfg: &PipelineConfig) -> CmdResult {
    let tensors = load_features(cfg)?;
    check_unique_stems(tensors.iter().map(|t| &t.meta))?;
    let smoothed: Vec<FeatureTensor> = match &cfg.model.smoothing {
        SmoothingConfig::None => tensors,
        SmoothingConfig::MovingAverage { window } => tensors.par_iter().map(|t| moving_average(t, *window)).collect(),
        SmoothingConfig::Lds { max_iters, tol } => {
            let refs: Vec<&FeatureTensor> = tensors.iter().collect();
            let fit = fit_lds_multi(
                &refs,
                EmOptions {
                    max_iters: *max_iters,
                    tol: *tol,
                },
            )?;
            log::info!(
                "LDS fit: {} iterations, converged {}, {} degenerate columns",
                fit.iterations,
                fit.converged,
                fit.degenerate.len()
            );
            tensors
                .par_iter()
                .map(|t| lds_smooth(t, &fit.params))
                .collect::<Result<_, _>>()?
        }
    };
    let dir = cfg.out_dir().join("smoothed");
    ensure_dir(&dir)?;
    let manifest = Manifest::new();
    smoothed.par_iter().try_for_each(|t| -> eegemo::Result<()> {
        let out = dir.join(format!("{}.csv", stem(&t.meta)));
        t.write_csv(&out)?;
        manifest.push(ManifestEntry::new(&t.meta, Path::new("features"), &out));
        Ok(())
    })?;
    let n = manifest.write(&dir.join("manifest.json"))?;
    println!("wrote {n} smoothed feature files to {}", dir.display());
    Ok(())
}

pub fn select(cfg: &PipelineConfig) -> CmdResult {
    let tensors = load_features(cfg)?;
    let (x, labels) = eval::stack_rows(&tensors)?;
    let first = &tensors[0];
    if tensors.iter().any(|t| t.columns != first.columns) {
        return Err(CliError::Runtime(anyhow!("input feature files have different columns")));
    }
    let stacked = FeatureTensor::new(x, first.columns.clone(), first.window_seconds, TrialMeta::default())?;
    let ranking = match cfg.select.method {
        RankingMethod::Mrmr => mrmr_select(
            &stacked,
            &labels,
            cfg.select.k,
            Discretizer {
                spread: cfg.select.spread,
            },
        )?,
        RankingMethod::Correlation => correlation_rank(&stacked, &labels, cfg.select.k)?,
    };
    ensure_dir(cfg.out_dir())?;
    let out = cfg.out_dir().join("rankings.csv");
    ranking.write_csv(&out)?;
    println!("wrote {} ranked features to {}", ranking.entries.len(), out.display());
    Ok(())
}

fn model_path(cfg: &PipelineConfig, given: Option<&Path>) -> PathBuf {
    given.map_or_else(|| cfg.out_dir().join("model.json"), Path::to_path_buf)
}

pub fn train(cfg: &PipelineConfig, model: Option<&Path>) -> CmdResult {
    let tensors = load_features(cfg)?;
    let refs: Vec<&FeatureTensor> = tensors.iter().collect();
    let fitted = TrainedPipeline::fit(&refs, &cfg.model, &label_set(&tensors))?;
    let path = model_path(cfg, model);
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    save_pipeline(&fitted, &path)?;
    println!("trained on {} trials; model written to {}", tensors.len(), path.display());
    Ok(())
}

pub fn predict(cfg: &PipelineConfig, model: Option<&Path>) -> CmdResult {
    let path = model_path(cfg, model);
    let fitted = load_pipeline(&path)?;
    let tensors = load_features(cfg)?;
    let rows = tensors
        .par_iter()
        .map(|t| fitted.predict_windows(t).map(|p| (t, p)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut text = String::from("subject_id,session_id,trial_id,window,label,predicted\n");
    let (mut correct, mut total) = (0usize, 0usize);
    for (t, preds) in &rows {
        for (w, p) in preds.iter().enumerate() {
            let m = &t.meta;
            text.push_str(&format!("{},{},{},{w},{},{p}\n", m.subject_id, m.session_id, m.trial_id, m.label));
            correct += usize::from(*p == m.label);
            total += 1;
        }
    }
    ensure_dir(cfg.out_dir())?;
    let out = cfg.out_dir().join("predictions.csv");
    fs::write(&out, text).with_context(|| format!("cannot write {}", out.display()))?;
    let acc = 100.0 * correct as f64 / total.max(1) as f64;
    println!("{total} windows predicted ({acc:.2}% match the stored labels); wrote {}", out.display());
    Ok(())
}

/// Groups tensors by a key, in key order.
fn group_by(tensors: Vec<FeatureTensor>, key: impl Fn(&TrialMeta) -> String) -> Vec<Vec<FeatureTensor>> {
    let mut groups: BTreeMap<String, Vec<FeatureTensor>> = BTreeMap::new();
    for t in tensors {
        groups.entry(key(&t.meta)).or_default().push(t);
    }
    groups.into_values().collect()
}

pub fn eval(cfg: &PipelineConfig) -> CmdResult {
    let tensors = load_features(cfg)?;
    let mut report: EvalReport = match cfg.eval.protocol {
        Protocol::Kfold => eval::kfold_cv(&tensors, &cfg.model, cfg.eval.folds, cfg.seed)?,
        Protocol::CrossSession => {
            let sessions = group_by(tensors, |m| m.session_id.clone());
            if sessions.len() < 2 {
                return Err(CliError::Usage(anyhow!(
                    "config key `eval.protocol`: cross_session needs inputs from at least 2 sessions, found {}",
                    sessions.len()
                )));
            }
            eval::cross_session_matrix(&sessions, &cfg.model, cfg.eval.folds, cfg.seed)?
        }
        Protocol::Loso => {
            let subjects = group_by(tensors, |m| m.subject_id.clone());
            if subjects.len() < 2 {
                return Err(CliError::Usage(anyhow!(
                    "config key `eval.protocol`: loso needs inputs from at least 2 subjects, found {}",
                    subjects.len()
                )));
            }
            eval::leave_one_subject_out(&subjects, &cfg.model)?
        }
    };
    report.config = serde_json::to_value(cfg).context("config snapshot")?;
    report.write(cfg.out_dir(), "report")?;
    print!("{}", report.to_table());
    Ok(())
}

pub fn topo(cfg: &PipelineConfig) -> CmdResult {
    let tensors = load_features(cfg)?;
    let grid = eval::export_topo_grid(&tensors, &ChannelLayout::cap62())?;
    let written = grid.write_csv(&cfg.out_dir().join("topo"))?;
    println!("wrote {} scalp maps to {}", written.len(), cfg.out_dir().join("topo").display());
    Ok(())
}
