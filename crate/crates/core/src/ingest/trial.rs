//! Trial recordings and their on-disk form.
//!
//! A trial is stored as two files sharing a stem:
//!
//! * `<stem>.json`: metadata sidecar (see [`TrialHeader`]);
//! * `<stem>.f32`: the sample matrix as little-endian IEEE-754 `f32`,
//!   channel-major (all samples of channel 0, then channel 1, ...).
//!
//! The payload is exactly `n_channels * n_samples * 4` bytes with no header,
//! so a 1-channel, 1-second recording at 200 Hz is an 800-byte `.f32` file.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TrialMeta;

pub const TRIAL_FORMAT_VERSION: u32 = 1;
pub const SAMPLE_DTYPE: &str = "f32le";
pub const SAMPLE_LAYOUT: &str = "channel-major";

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecording {
    pub meta: TrialMeta,
    pub sampling_rate_hz: f64,
    pub channel_names: Vec<String>,
    /// Channel-major, `channels * n_samples` values in microvolts.
    samples: Vec<f32>,
    n_samples: usize,
}

impl TrialRecording {
    pub fn new(
        meta: TrialMeta,
        sampling_rate_hz: f64,
        channel_names: Vec<String>,
        samples: Vec<f32>,
        n_samples: usize,
    ) -> Result<Self> {
        let t = TrialRecording {
            meta,
            sampling_rate_hz,
            channel_names,
            samples,
            n_samples,
        };
        t.validate()?;
        Ok(t)
    }

    /// Builds a trial from per-channel rows.
    pub fn from_rows(
        meta: TrialMeta,
        sampling_rate_hz: f64,
        channel_names: Vec<String>,
        rows: &[Vec<f32>],
    ) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidTrial("rows have different lengths".into()));
        }
        if rows.len() != channel_names.len() {
            return Err(Error::InvalidTrial(format!(
                "{} rows for {} channel names",
                rows.len(),
                channel_names.len()
            )));
        }
        let samples = rows.iter().flatten().copied().collect();
        Self::new(meta, sampling_rate_hz, channel_names, samples, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return Err(Error::InvalidTrial(format!(
                "sampling rate {} must be positive",
                self.sampling_rate_hz
            )));
        }
        if self.channel_names.is_empty() {
            return Err(Error::InvalidTrial("no channels".into()));
        }
        if self.samples.len() != self.channel_names.len() * self.n_samples {
            return Err(Error::InvalidTrial(format!(
                "{} samples for {} channels x {} samples",
                self.samples.len(),
                self.channel_names.len(),
                self.n_samples
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidTrial("zero-length recording".into()));
        }
        let unique: HashSet<_> = self.channel_names.iter().collect();
        if unique.len() != self.channel_names.len() {
            return Err(Error::InvalidTrial("duplicate channel names".into()));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTrial(format!(
                "non-finite sample at channel {}, sample {}",
                i / self.n_samples,
                i % self.n_samples
            )));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn duration_seconds(&self) -> f64 {
        self.n_samples as f64 / self.sampling_rate_hz
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.samples[c * self.n_samples..(c + 1) * self.n_samples]
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
    }
}

/// JSON sidecar of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialHeader {
    pub format_version: u32,
    pub subject_id: String,
    pub session_id: String,
    pub trial_id: String,
    pub label: i64,
    pub sampling_rate_hz: f64,
    pub n_channels: usize,
    pub n_samples: usize,
    pub channel_names: Vec<String>,
    pub dtype: String,
    pub layout: String,
    /// Payload file name, relative to the sidecar's directory.
    pub data_file: String,
}

/// Payload path paired with a sidecar path.
pub fn data_path_for(json_path: &Path) -> PathBuf {
    json_path.with_extension("f32")
}

pub fn save_trial(t: &TrialRecording, path: &Path) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty path"),
        ));
    }
    t.validate()?;
    let data_path = data_path_for(path);
    let data_file = data_path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| {
            Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::InvalidInput, "no file name"),
            )
        })?
        .to_string();
    let header = TrialHeader {
        format_version: TRIAL_FORMAT_VERSION,
        subject_id: t.meta.subject_id.clone(),
        session_id: t.meta.session_id.clone(),
        trial_id: t.meta.trial_id.clone(),
        label: t.meta.label,
        sampling_rate_hz: t.sampling_rate_hz,
        n_channels: t.n_channels(),
        n_samples: t.n_samples,
        channel_names: t.channel_names.clone(),
        dtype: SAMPLE_DTYPE.into(),
        layout: SAMPLE_LAYOUT.into(),
        data_file,
    };
    let mut bytes = Vec::with_capacity(t.samples.len() * 4);
    for v in &t.samples {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_trial(path: &Path) -> Result<TrialRecording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: TrialHeader = serde_json::from_str(&text).map_err(|e| Error::MalformedHeader {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let header_err = |message: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message,
    };
    if header.format_version != TRIAL_FORMAT_VERSION {
        return Err(header_err(format!(
            "unsupported format_version {}",
            header.format_version
        )));
    }
    if header.dtype != SAMPLE_DTYPE || header.layout != SAMPLE_LAYOUT {
        return Err(header_err(format!(
            "unsupported dtype/layout {}/{}",
            header.dtype, header.layout
        )));
    }
    if header.n_channels != header.channel_names.len() {
        return Err(Error::ChannelCountMismatch {
            path: path.to_path_buf(),
            message: format!(
                "header declares {} channels but lists {} names",
                header.n_channels,
                header.channel_names.len()
            ),
        });
    }
    let data_path = path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.data_file);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let expected = header.n_channels * header.n_samples * 4;
    if bytes.len() != expected {
        let rows = bytes.len() as f64 / (header.n_samples.max(1) * 4) as f64;
        return Err(Error::ChannelCountMismatch {
            path: data_path,
            message: format!(
                "payload is {} bytes ({rows} rows of {} samples), header declares {} channels = {expected} bytes",
                bytes.len(),
                header.n_samples,
                header.n_channels
            ),
        });
    }
    let mut samples = Vec::with_capacity(header.n_channels * header.n_samples);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(Error::NonFiniteSample {
                path: data_path,
                byte_offset: (i * 4) as u64,
                channel: i / header.n_samples,
                sample: i % header.n_samples,
            });
        }
        samples.push(v);
    }
    TrialRecording::new(
        TrialMeta {
            subject_id: header.subject_id,
            session_id: header.session_id,
            trial_id: header.trial_id,
            label: header.label,
        },
        header.sampling_rate_hz,
        header.channel_names,
        samples,
        header.n_samples,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trial(channels: usize, n: usize, rate: f64) -> TrialRecording {
        let names = (0..channels).map(|c| format!("CH{c}")).collect();
        let samples = (0..channels * n).map(|i| (i as f32 * 0.37).sin() * 12.5).collect();
        TrialRecording::new(
            TrialMeta {
                subject_id: "s01".into(),
                session_id: "1".into(),
                trial_id: "t03".into(),
                label: 1,
            },
            rate,
            names,
            samples,
            n,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_62_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trial.json");
        let t = trial(62, 40_000, 200.0);
        save_trial(&t, &path).unwrap();
        let back = load_trial(&path).unwrap();
        assert_eq!(back.n_channels(), 62);
        assert_eq!(back.n_samples(), 40_000);
        assert_eq!(back, t);
    }

    #[test]
    fn one_channel_one_second_payload_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.json");
        save_trial(&trial(1, 200, 200.0), &path).unwrap();
        let len = fs::metadata(data_path_for(&path)).unwrap().len();
        assert_eq!(len, 200 * 4);
    }

    #[test]
    fn empty_path_is_io_error() {
        let err = save_trial(&trial(1, 10, 200.0), Path::new("")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn declared_channel_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        save_trial(&trial(3, 50, 200.0), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replace("\"n_channels\": 3", "\"n_channels\": 4")).unwrap();
        assert!(matches!(
            load_trial(&path),
            Err(Error::ChannelCountMismatch { .. })
        ));
    }

    #[test]
    fn payload_with_missing_rows_is_channel_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.json");
        save_trial(&trial(3, 50, 200.0), &path).unwrap();
        let data = data_path_for(&path);
        let bytes = fs::read(&data).unwrap();
        fs::write(&data, &bytes[..2 * 50 * 4]).unwrap();
        let err = load_trial(&path).unwrap_err();
        assert!(matches!(err, Error::ChannelCountMismatch { .. }), "{err}");
        assert!(err.to_string().contains("400 bytes"));
    }

    #[test]
    fn nan_sample_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.json");
        save_trial(&trial(2, 10, 200.0), &path).unwrap();
        let data = data_path_for(&path);
        let mut bytes = fs::read(&data).unwrap();
        bytes[52..56].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&data, bytes).unwrap();
        match load_trial(&path) {
            Err(Error::NonFiniteSample {
                byte_offset,
                channel,
                sample,
                ..
            }) => {
                assert_eq!(byte_offset, 52);
                assert_eq!((channel, sample), (1, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        fs::write(&path, "{\n  \"format_version\": 1,\n  oops\n}").unwrap();
        match load_trial(&path) {
            Err(Error::MalformedHeader { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invariants_rejected_at_construction() {
        let meta = TrialMeta::default();
        assert!(TrialRecording::new(meta.clone(), 0.0, vec!["A".into()], vec![0.0], 1).is_err());
        assert!(TrialRecording::new(
            meta.clone(),
            200.0,
            vec!["A".into(), "A".into()],
            vec![0.0, 0.0],
            1
        )
        .is_err());
        assert!(TrialRecording::new(meta, 200.0, vec!["A".into()], vec![0.0, 1.0], 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn save_load_is_identity(
            channels in 1usize..5,
            n in 1usize..64,
            seed in any::<u32>(),
            rate in 1.0f64..2000.0,
        ) {
            let names: Vec<String> = (0..channels).map(|c| format!("E{c}")).collect();
            let samples: Vec<f32> = (0..channels * n)
                .map(|i| f32::from_bits((seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 7919)) & 0x3fff_ffff))
                .collect();
            let t = TrialRecording::new(
                TrialMeta { subject_id: format!("s{seed}"), session_id: "x".into(), trial_id: "y".into(), label: -3 },
                rate, names, samples, n).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.json");
            save_trial(&t, &path).unwrap();
            let back = load_trial(&path).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
