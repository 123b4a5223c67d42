//! Labeled synthetic EEG with planted band-power signatures.
//!
//! Every channel of every trial carries one sinusoid per band. The frequency
//! is drawn once per band per trial, uniformly inside the band edges; phases
//! are drawn per channel. Amplitudes are the band's base amplitude times the
//! class boosts that cover the channel, modulated per second by a random
//! burst envelope. White Gaussian noise is added on top. Per-recording
//! channel gains (`session_gain_jitter`) model drift between sessions.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::trial::TrialRecording;
use crate::layout::{canonical, ChannelLayout};
use crate::spectral::BandTable;
use crate::tensor::TrialMeta;

/// Multiplies one band's amplitude on a group of channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandBoost {
    pub band: String,
    pub group: String,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassProfile {
    pub label: i64,
    #[serde(default)]
    pub boosts: Vec<BandBoost>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Channel names; the 62-channel cap when empty.
    #[serde(default)]
    pub channels: Vec<String>,
    /// Named channel groups referenced by boosts. `all` is implicit.
    #[serde(default)]
    pub groups: BTreeMap<String, Vec<String>>,
    /// Bands in which sinusoids are planted; the five-band table when absent.
    #[serde(default)]
    pub bands: Option<BandTable>,
    /// Base amplitude per band name, microvolts. Missing bands get 1.0.
    #[serde(default)]
    pub base_amplitude: BTreeMap<String, f64>,
    pub classes: Vec<ClassProfile>,
    pub noise_std: f64,
    pub trials_per_class: usize,
    pub duration_seconds: f64,
    pub sampling_rate_hz: f64,
    /// Relative amplitude jitter of each one-second burst, in [0, 1).
    #[serde(default)]
    pub burst_jitter: f64,
    /// Relative per-channel gain perturbation, drawn once per subject/session.
    #[serde(default)]
    pub session_gain_jitter: f64,
    #[serde(default = "default_subject")]
    pub subject_id: String,
    #[serde(default = "default_session")]
    pub session_id: String,
    pub seed: u64,
}

fn default_subject() -> String {
    "synthetic".into()
}

fn default_session() -> String {
    "1".into()
}

impl SyntheticSpec {
    /// Three classes (0, 1, 2) on the 62-channel cap, with class 2 boosting
    /// gamma on temporal channels and class 0 boosting alpha on frontal ones.
    pub fn three_class_default(seed: u64) -> Self {
        let mut groups = BTreeMap::new();
        groups.insert(
            "temporal".to_string(),
            ["FT7", "FT8", "T7", "T8", "TP7", "TP8", "C5", "C6"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        groups.insert(
            "frontal".to_string(),
            ["FP1", "FPZ", "FP2", "AF3", "AF4", "F3", "F4", "F7", "F8"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        let boost = |band: &str, group: &str, m: f64| BandBoost {
            band: band.into(),
            group: group.into(),
            multiplier: m,
        };
        SyntheticSpec {
            channels: Vec::new(),
            groups,
            bands: None,
            base_amplitude: BTreeMap::new(),
            classes: vec![
                ClassProfile {
                    label: 0,
                    boosts: vec![boost("alpha", "frontal", 2.0)],
                },
                ClassProfile {
                    label: 1,
                    boosts: vec![],
                },
                ClassProfile {
                    label: 2,
                    boosts: vec![boost("gamma", "temporal", 2.5), boost("beta", "temporal", 1.5)],
                },
            ],
            noise_std: 0.5,
            trials_per_class: 30,
            duration_seconds: 10.0,
            sampling_rate_hz: 200.0,
            burst_jitter: 0.3,
            session_gain_jitter: 0.0,
            subject_id: default_subject(),
            session_id: default_session(),
            seed,
        }
    }

    pub fn channel_names(&self) -> Vec<String> {
        if self.channels.is_empty() {
            ChannelLayout::cap62().names().to_vec()
        } else {
            self.channels.iter().map(|c| canonical(c)).collect()
        }
    }

    pub fn band_table(&self) -> BandTable {
        self.bands.clone().unwrap_or_else(BandTable::five_band)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.classes.len() < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes.len()));
        }
        let mut labels: Vec<i64> = self.classes.iter().map(|c| c.label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.classes.len() {
            return bad("duplicate class labels".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!("noise_std {} must be >= 0", self.noise_std));
        }
        if self.trials_per_class == 0 {
            return bad("trials_per_class must be positive".into());
        }
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return bad("sampling_rate_hz must be positive".into());
        }
        if !(self.duration_seconds.is_finite() && self.duration_seconds * self.sampling_rate_hz >= 1.0)
        {
            return bad("duration must cover at least one sample".into());
        }
        if !(0.0..1.0).contains(&self.burst_jitter) || !(0.0..1.0).contains(&self.session_gain_jitter)
        {
            return bad("jitters must lie in [0, 1)".into());
        }
        let bands = self.band_table();
        bands.validate()?;
        if let Some(b) = bands.bands.iter().find(|b| b.high_hz >= self.sampling_rate_hz / 2.0) {
            return bad(format!("band {} reaches nyquist", b.name));
        }
        for (band, a) in &self.base_amplitude {
            if bands.get(band).is_none() {
                return bad(format!("base amplitude for unknown band {band}"));
            }
            if !(a.is_finite() && *a >= 0.0) {
                return bad(format!("amplitude {a} for band {band} must be >= 0"));
            }
        }
        let channels = self.channel_names();
        for (group, members) in &self.groups {
            for m in members {
                if !channels.contains(&canonical(m)) {
                    return bad(format!("group {group} names unknown channel {m}"));
                }
            }
        }
        for class in &self.classes {
            for b in &class.boosts {
                if bands.get(&b.band).is_none() {
                    return bad(format!("class {} boosts unknown band {}", class.label, b.band));
                }
                if b.group != "all" && !self.groups.contains_key(&b.group) {
                    return bad(format!("class {} boosts unknown group {}", class.label, b.group));
                }
                if !(b.multiplier.is_finite() && b.multiplier >= 0.0) {
                    return bad(format!("multiplier {} must be >= 0", b.multiplier));
                }
            }
        }
        Ok(())
    }

    fn in_group(&self, group: &str, channel: &str) -> bool {
        group == "all"
            || self
                .groups
                .get(group)
                .is_some_and(|m| m.iter().any(|c| canonical(c) == channel))
    }
}

/// Generates `trials_per_class` trials for every class, class-major order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<TrialRecording>> {
    spec.validate()?;
    let channels = spec.channel_names();
    let bands = spec.band_table();
    let fs = spec.sampling_rate_hz;
    let n = (spec.duration_seconds * fs).round() as usize;
    let burst_len = (fs.round() as usize).max(1);
    let n_bursts = n.div_ceil(burst_len);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");

    let session_gain: Vec<f64> = channels
        .iter()
        .map(|_| 1.0 + spec.session_gain_jitter * rng.random_range(-1.0..=1.0))
        .collect();

    // amplitude[class][channel][band]
    let amplitudes: Vec<Vec<Vec<f64>>> = spec
        .classes
        .iter()
        .map(|class| {
            channels
                .iter()
                .map(|ch| {
                    bands
                        .bands
                        .iter()
                        .map(|b| {
                            let base = spec.base_amplitude.get(&b.name).copied().unwrap_or(1.0);
                            class
                                .boosts
                                .iter()
                                .filter(|x| x.band == b.name && spec.in_group(&x.group, ch))
                                .fold(base, |a, x| a * x.multiplier)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut trials = Vec::with_capacity(spec.classes.len() * spec.trials_per_class);
    for (ci, class) in spec.classes.iter().enumerate() {
        for k in 0..spec.trials_per_class {
            let freqs: Vec<f64> = bands
                .bands
                .iter()
                .map(|b| rng.random_range(b.low_hz..=b.high_hz))
                .collect();
            let mut rows = Vec::with_capacity(channels.len());
            for (chi, _) in channels.iter().enumerate() {
                let mut row = vec![0.0f64; n];
                for (bi, &f) in freqs.iter().enumerate() {
                    let amp = amplitudes[ci][chi][bi] * session_gain[chi];
                    let phase = rng.random_range(0.0..2.0 * PI);
                    let env: Vec<f64> = (0..n_bursts)
                        .map(|_| 1.0 + spec.burst_jitter * rng.random_range(-1.0..=1.0))
                        .collect();
                    if amp == 0.0 {
                        continue;
                    }
                    let w = 2.0 * PI * f / fs;
                    for (i, v) in row.iter_mut().enumerate() {
                        *v += amp * env[i / burst_len] * (w * i as f64 + phase).sin();
                    }
                }
                if spec.noise_std > 0.0 {
                    for v in row.iter_mut() {
                        *v += noise.sample(&mut rng);
                    }
                }
                rows.push(row.into_iter().map(|v| v as f32).collect::<Vec<f32>>());
            }
            let meta = TrialMeta {
                subject_id: spec.subject_id.clone(),
                session_id: spec.session_id.clone(),
                trial_id: format!("c{}_t{:03}", class.label, k),
                label: class.label,
            };
            trials.push(TrialRecording::from_rows(meta, fs, channels.clone(), &rows)?);
        }
    }
    Ok(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{compute_band_power, stft_power, Band};

    fn small(seed: u64) -> SyntheticSpec {
        let mut s = SyntheticSpec::three_class_default(seed);
        s.trials_per_class = 2;
        s.duration_seconds = 3.0;
        s
    }

    #[test]
    fn same_seed_same_trials() {
        let a = generate_synthetic(&small(7)).unwrap();
        let b = generate_synthetic(&small(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn balanced_labels() {
        let mut s = SyntheticSpec::three_class_default(1);
        s.channels = vec!["C3".into(), "C4".into()];
        s.groups.clear();
        for c in &mut s.classes {
            c.boosts.clear();
        }
        s.duration_seconds = 1.0;
        let trials = generate_synthetic(&s).unwrap();
        assert_eq!(trials.len(), 90);
        for label in 0..3 {
            assert_eq!(trials.iter().filter(|t| t.meta.label == label).count(), 30);
        }
    }

    #[test]
    fn noiseless_alpha_tone_stays_in_alpha() {
        let spec = SyntheticSpec {
            channels: vec!["O1".into()],
            groups: BTreeMap::new(),
            bands: Some(BandTable::new(vec![Band::new("tone", 9.95, 10.05)]).unwrap()),
            base_amplitude: BTreeMap::new(),
            classes: vec![
                ClassProfile { label: 0, boosts: vec![] },
                ClassProfile { label: 1, boosts: vec![] },
            ],
            noise_std: 0.0,
            trials_per_class: 1,
            duration_seconds: 10.0,
            sampling_rate_hz: 200.0,
            burst_jitter: 0.0,
            session_gain_jitter: 0.0,
            subject_id: "s".into(),
            session_id: "1".into(),
            seed: 3,
        };
        for trial in generate_synthetic(&spec).unwrap() {
            let s = stft_power(&trial, 1.0).unwrap();
            // energy per band = mean power x member bins
            let full = BandTable::new(vec![Band::new("all", 0.0, 100.0)]).unwrap();
            let total = compute_band_power(&s, &full).unwrap().values.sum() * 101.0;
            let alpha = BandTable::new(vec![Band::new("alpha", 8.0, 13.0)]).unwrap();
            let inside = compute_band_power(&s, &alpha).unwrap().values.sum() * 6.0;
            assert!(inside / total >= 0.99, "{}", inside / total);
        }
    }

    #[test]
    fn validation_errors() {
        let mut s = small(1);
        s.noise_std = -1.0;
        assert!(matches!(generate_synthetic(&s), Err(Error::InvalidSpec(_))));
        let mut s = small(1);
        s.classes.truncate(1);
        assert!(s.validate().is_err());
        let mut s = small(1);
        s.classes[0].boosts[0].group = "nowhere".into();
        assert!(s.validate().is_err());
        let mut s = small(1);
        s.classes[0].boosts[0].multiplier = -2.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_rejects_unknown_keys() {
        let text = r#"{"classes": [], "noise_std": 1, "trials_per_class": 1,
            "duration_seconds": 1, "sampling_rate_hz": 200, "seed": 1, "bogus": 2}"#;
        assert!(serde_json::from_str::<SyntheticSpec>(text).is_err());
    }
}
