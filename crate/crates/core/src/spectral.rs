//! Short-time spectra and band power (the PSD feature).
//!
//! Windows are consecutive, non-overlapping and Hann-weighted; a trailing
//! partial window is dropped. Power at bin `k` is `|X_k|^2 / sum(w^2)`, so the
//! expected value on white noise equals the noise variance in every bin.
//! Band power is the arithmetic mean over bins whose centre frequency lies in
//! `[low, high]` (both edges inclusive).

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::trial::TrialRecording;
use crate::tensor::{ColumnDescriptor, FeatureKind, FeatureTensor, TrialMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Band {
    pub fn new(name: impl Into<String>, low_hz: f64, high_hz: f64) -> Self {
        Band {
            name: name.into(),
            low_hz,
            high_hz,
        }
    }

    pub fn contains(&self, freq: f64) -> bool {
        // tolerate bin frequencies that are off by rounding
        let eps = 1e-9 * self.high_hz.abs().max(1.0);
        freq >= self.low_hz - eps && freq <= self.high_hz + eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandTable {
    pub bands: Vec<Band>,
}

impl BandTable {
    pub fn new(bands: Vec<Band>) -> Result<Self> {
        let t = BandTable { bands };
        t.validate()?;
        Ok(t)
    }

    /// delta 1-3, theta 4-7, alpha 8-13, beta 14-30, gamma 31-50 Hz.
    pub fn five_band() -> Self {
        BandTable {
            bands: vec![
                Band::new("delta", 1.0, 3.0),
                Band::new("theta", 4.0, 7.0),
                Band::new("alpha", 8.0, 13.0),
                Band::new("beta", 14.0, 30.0),
                Band::new("gamma", 31.0, 50.0),
            ],
        }
    }

    /// theta 4-7, alpha 8-13, beta 14-30, gamma 31-45 Hz, for recordings
    /// already band-limited to 4-45 Hz.
    pub fn four_band() -> Self {
        BandTable {
            bands: vec![
                Band::new("theta", 4.0, 7.0),
                Band::new("alpha", 8.0, 13.0),
                Band::new("beta", 14.0, 30.0),
                Band::new("gamma", 31.0, 45.0),
            ],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "five" | "five_band" | "seed" => Ok(Self::five_band()),
            "four" | "four_band" | "deap" => Ok(Self::four_band()),
            other => Err(Error::InvalidBands(format!("unknown band table {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::InvalidBands("empty band table".into()));
        }
        for b in &self.bands {
            if !(b.low_hz.is_finite() && b.high_hz.is_finite() && b.low_hz >= 0.0 && b.low_hz < b.high_hz)
            {
                return Err(Error::InvalidBands(format!(
                    "band {} has edges {}..{}",
                    b.name, b.low_hz, b.high_hz
                )));
            }
        }
        for w in self.bands.windows(2) {
            if w[1].low_hz <= w[0].high_hz {
                return Err(Error::InvalidBands(format!(
                    "bands {} and {} overlap or are out of order",
                    w[0].name, w[1].name
                )));
            }
        }
        let mut names: Vec<&str> = self.bands.iter().map(|b| b.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.bands.len() {
            return Err(Error::InvalidBands("duplicate band names".into()));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Band> {
        self.bands.iter().find(|b| b.name == name)
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }
}

/// Per-channel power spectra over consecutive windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub channel_names: Vec<String>,
    /// One `windows x bins` matrix per channel.
    pub power: Vec<DMatrix<f64>>,
    pub bin_freqs: Vec<f64>,
    pub window_seconds: f64,
    pub sampling_rate_hz: f64,
    pub meta: TrialMeta,
}

impl Spectrogram {
    pub fn windows(&self) -> usize {
        self.power.first().map_or(0, |p| p.nrows())
    }

    pub fn nyquist(&self) -> f64 {
        self.sampling_rate_hz / 2.0
    }

    /// Writes one channel as CSV: header of bin frequencies, one row per window.
    pub fn write_channel_csv(&self, channel: usize, path: &Path) -> Result<()> {
        let mut out = String::new();
        let header: Vec<String> = self.bin_freqs.iter().map(|f| f.to_string()).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        let p = &self.power[channel];
        for r in 0..p.nrows() {
            let row: Vec<String> = (0..p.ncols()).map(|c| p[(r, c)].to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    // periodic Hann, the usual choice for spectral analysis
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

struct WindowedFft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    norm: f64,
    buf: Vec<Complex<f64>>,
}

impl WindowedFft {
    fn new(n: usize) -> Self {
        let window = hann(n);
        let norm = window.iter().map(|w| w * w).sum::<f64>();
        WindowedFft {
            fft: FftPlanner::new().plan_fft_forward(n),
            window,
            norm,
            buf: vec![Complex::new(0.0, 0.0); n],
        }
    }

    fn power_into(&mut self, segment: &[f32], out: &mut [f64]) {
        for ((b, &x), &w) in self.buf.iter_mut().zip(segment).zip(&self.window) {
            *b = Complex::new(x as f64 * w, 0.0);
        }
        self.fft.process(&mut self.buf);
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.norm_sqr() / self.norm;
        }
    }
}

pub fn stft_power(t: &TrialRecording, window_seconds: f64) -> Result<Spectrogram> {
    if !(window_seconds.is_finite() && window_seconds > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "window_seconds {window_seconds} must be positive"
        )));
    }
    let fs = t.sampling_rate_hz;
    let n = (window_seconds * fs).round() as usize;
    if n < 2 || t.n_samples() < n {
        return Err(Error::TooShort {
            samples: t.n_samples(),
            needed: n.max(2),
        });
    }
    let windows = t.n_samples() / n;
    let bins = n / 2 + 1;
    let mut engine = WindowedFft::new(n);
    let mut row = vec![0.0; n];
    let power = (0..t.n_channels())
        .map(|c| {
            let x = t.channel(c);
            let mut m = DMatrix::zeros(windows, bins);
            for w in 0..windows {
                engine.power_into(&x[w * n..(w + 1) * n], &mut row);
                for b in 0..bins {
                    m[(w, b)] = row[b];
                }
            }
            m
        })
        .collect();
    Ok(Spectrogram {
        channel_names: t.channel_names.clone(),
        power,
        bin_freqs: (0..bins).map(|b| b as f64 * fs / n as f64).collect(),
        window_seconds: n as f64 / fs,
        sampling_rate_hz: fs,
        meta: t.meta.clone(),
    })
}

/// Bin indices belonging to each band.
pub(crate) fn band_bins(s: &Spectrogram, bands: &BandTable) -> Result<Vec<Vec<usize>>> {
    bands.validate()?;
    bands
        .bands
        .iter()
        .map(|b| {
            if b.high_hz > s.nyquist() + 1e-9 {
                return Err(Error::BandBeyondNyquist {
                    band: b.name.clone(),
                    high_hz: b.high_hz,
                    nyquist_hz: s.nyquist(),
                });
            }
            let idx: Vec<usize> = s
                .bin_freqs
                .iter()
                .enumerate()
                .filter(|(_, &f)| b.contains(f))
                .map(|(i, _)| i)
                .collect();
            if idx.is_empty() {
                return Err(Error::InvalidBands(format!(
                    "band {} contains no frequency bin at {} Hz resolution",
                    b.name,
                    1.0 / s.window_seconds
                )));
            }
            Ok(idx)
        })
        .collect()
}

/// Mean band power per (window, channel, band). Columns are channel-major:
/// all bands of the first channel, then the next channel.
pub fn compute_band_power(s: &Spectrogram, bands: &BandTable) -> Result<FeatureTensor> {
    let members = band_bins(s, bands)?;
    let d = s.channel_names.len() * bands.len();
    let mut values = DMatrix::zeros(s.windows(), d);
    let mut columns = Vec::with_capacity(d);
    for (c, name) in s.channel_names.iter().enumerate() {
        let p = &s.power[c];
        for (bi, band) in bands.bands.iter().enumerate() {
            let col = c * bands.len() + bi;
            let idx = &members[bi];
            for w in 0..s.windows() {
                values[(w, col)] = idx.iter().map(|&k| p[(w, k)]).sum::<f64>() / idx.len() as f64;
            }
            columns.push(ColumnDescriptor::new(FeatureKind::Psd, name.clone(), band.name.clone()));
        }
    }
    FeatureTensor::new(values, columns, s.window_seconds, s.meta.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn trial_from(rows: Vec<Vec<f32>>, fs: f64) -> TrialRecording {
        let names = (0..rows.len()).map(|c| format!("CH{c}")).collect();
        TrialRecording::from_rows(TrialMeta::default(), fs, names, &rows).unwrap()
    }

    fn sine(freq: f64, fs: f64, n: usize, amp: f64) -> Vec<f32> {
        (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin()) as f32)
            .collect()
    }

    fn noise(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v as f32
            })
            .collect()
    }

    #[test]
    fn tone_peaks_at_its_bin() {
        let t = trial_from(vec![sine(10.0, 200.0, 2000, 1.0)], 200.0);
        let s = stft_power(&t, 1.0).unwrap();
        assert_eq!(s.windows(), 10);
        assert_eq!(s.bin_freqs.len(), 101);
        for w in 0..10 {
            let row = s.power[0].row(w);
            assert_eq!(row.transpose().iamax(), 10);
        }
    }

    #[test]
    fn zero_signal_zero_spectrogram() {
        let t = trial_from(vec![vec![0.0; 600]], 200.0);
        let s = stft_power(&t, 1.0).unwrap();
        assert!(s.power[0].iter().all(|&v| v == 0.0));
        let f = compute_band_power(&s, &BandTable::five_band()).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trailing_partial_window_dropped() {
        let t = trial_from(vec![vec![1.0; 450]], 200.0);
        assert_eq!(stft_power(&t, 1.0).unwrap().windows(), 2);
        let short = trial_from(vec![vec![1.0; 150]], 200.0);
        assert!(matches!(stft_power(&short, 1.0), Err(Error::TooShort { .. })));
    }

    #[test]
    fn white_noise_is_flat() {
        // Monte-Carlo: 60 s of unit white noise, mean power per bin.
        let t = trial_from(vec![noise(12_000, 11)], 200.0);
        let s = stft_power(&t, 1.0).unwrap();
        let means: Vec<f64> = (0..s.bin_freqs.len())
            .map(|b| s.power[0].column(b).mean())
            .collect();
        // DC and Nyquist bins of a real signal carry one real component only
        let interior = &means[1..means.len() - 1];
        let max = interior.iter().cloned().fold(f64::MIN, f64::max);
        let min = interior.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 3.0, "{max} / {min}");
        let avg = interior.iter().sum::<f64>() / interior.len() as f64;
        assert!((avg - 1.0).abs() < 0.05, "{avg}");
    }

    #[test]
    fn dimension_is_channels_times_bands() {
        let rows = (0..62).map(|c| noise(400, c)).collect();
        let t = trial_from(rows, 200.0);
        let s = stft_power(&t, 1.0).unwrap();
        let f = compute_band_power(&s, &BandTable::five_band()).unwrap();
        assert_eq!(f.dim(), 310);
        assert_eq!(f.windows(), 2);
        assert_eq!(f.columns[8].to_string(), "PSD:CH1:beta");
    }

    #[test]
    fn tone_dominates_alpha() {
        let t = trial_from(vec![sine(10.0, 200.0, 2000, 3.0)], 200.0);
        let s = stft_power(&t, 1.0).unwrap();
        let f = compute_band_power(&s, &BandTable::five_band()).unwrap();
        for w in 0..f.windows() {
            let alpha = f.values[(w, 2)];
            for b in [0, 1, 3, 4] {
                assert!(alpha >= 100.0 * f.values[(w, b)], "band {b}");
            }
        }
    }

    #[test]
    fn band_beyond_nyquist_rejected() {
        let t = trial_from(vec![noise(256, 1)], 64.0);
        let s = stft_power(&t, 1.0).unwrap();
        assert!(matches!(
            compute_band_power(&s, &BandTable::five_band()),
            Err(Error::BandBeyondNyquist { .. })
        ));
    }

    #[test]
    fn full_cover_band_matches_windowed_energy() {
        // 2 s windows keep the DC/Nyquist bookkeeping under 1%.
        let x = noise(4000, 5);
        let t = trial_from(vec![x.clone()], 200.0);
        let s = stft_power(&t, 2.0).unwrap();
        let full = BandTable::new(vec![Band::new("all", 0.0, 100.0)]).unwrap();
        let f = compute_band_power(&s, &full).unwrap();
        let w = hann(400);
        let wsq: f64 = w.iter().map(|v| v * v).sum();
        for k in 0..f.windows() {
            let seg = &x[k * 400..(k + 1) * 400];
            let energy: f64 =
                seg.iter().zip(&w).map(|(&v, &h)| (v as f64 * h).powi(2)).sum::<f64>() / wsq;
            let rel = (f.values[(k, 0)] - energy).abs() / energy;
            assert!(rel < 0.01, "window {k}: {rel}");
        }
    }

    #[test]
    fn scaling_scales_power_quadratically() {
        let x = noise(1000, 9);
        let y: Vec<f32> = x.iter().map(|v| v * 4.0).collect();
        let fx = compute_band_power(&stft_power(&trial_from(vec![x], 200.0), 1.0).unwrap(), &BandTable::five_band()).unwrap();
        let fy = compute_band_power(&stft_power(&trial_from(vec![y], 200.0), 1.0).unwrap(), &BandTable::five_band()).unwrap();
        for (a, b) in fx.values.iter().zip(fy.values.iter()) {
            assert!((b - 16.0 * a).abs() <= 1e-9 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn delaying_by_whole_windows_permutes_rows() {
        let tone = sine(12.0, 200.0, 1000, 1.0);
        let mut delayed = vec![0.0f32; 400];
        delayed.extend_from_slice(&tone[..600]);
        let a = stft_power(&trial_from(vec![tone], 200.0), 1.0).unwrap();
        let b = stft_power(&trial_from(vec![delayed], 200.0), 1.0).unwrap();
        for w in 0..3 {
            for k in 0..a.bin_freqs.len() {
                assert!((a.power[0][(w, k)] - b.power[0][(w + 2, k)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn overlapping_band_table_rejected() {
        let bad = BandTable::new(vec![Band::new("a", 1.0, 5.0), Band::new("b", 5.0, 9.0)]);
        assert!(bad.is_err());
        assert!(BandTable::five_band().validate().is_ok());
        assert!(BandTable::four_band().validate().is_ok());
    }
}
