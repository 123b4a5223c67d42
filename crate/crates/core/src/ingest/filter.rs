//! Zero-phase band limiting and integer-ratio decimation.
//!
//! The band-pass is a Butterworth high-pass cascaded with a Butterworth
//! low-pass, each realized as second-order sections from the bilinear
//! transform and applied forward then backward. Orders are chosen per call
//! so that the *two-pass* response loses at most 1 dB at the band edges and
//! attenuates at least 40 dB one octave beyond them. The low-pass stop edge
//! is additionally pulled in to the output Nyquist frequency when
//! decimating, which makes it the anti-alias filter as well.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ingest::trial::TrialRecording;

/// Two-pass passband loss allowed at the band edges, dB.
pub const PASSBAND_LOSS_DB: f64 = 1.0;
/// Two-pass attenuation required at the stop edges, dB.
pub const STOPBAND_ATTEN_DB: f64 = 40.0;
pub const MAX_ORDER: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn run(&self, x: &mut [f64]) {
        // transposed direct form II
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + s1;
            s1 = self.b[1] * input - self.a[0] * y + s2;
            s2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }

    /// Complex gain at normalized frequency `f / fs`.
    fn gain(&self, norm_freq: f64) -> f64 {
        let w = 2.0 * PI * norm_freq;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let num_im = -(self.b[1] * s1 + self.b[2] * s2);
        let den_re = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let den_im = -(self.a[0] * s1 + self.a[1] * s2);
        ((num_re * num_re + num_im * num_im) / (den_re * den_re + den_im * den_im)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    LowPass,
    HighPass,
}

/// A cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
    pub order: usize,
}

impl Sos {
    /// Butterworth design of `order` with -3 dB point at `cutoff_hz`.
    pub fn butterworth(kind: FilterKind, order: usize, cutoff_hz: f64, fs: f64) -> Result<Sos> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::FilterDesign(format!("order {order} outside 1..={MAX_ORDER}")));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
            return Err(Error::FilterDesign(format!(
                "cutoff {cutoff_hz} Hz outside (0, {}) Hz",
                fs / 2.0
            )));
        }
        let w0 = 2.0 * PI * cutoff_hz / fs;
        let (sw, cw) = (w0.sin(), w0.cos());
        let mut sections = Vec::new();
        for k in 0..order / 2 {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            let q = -1.0 / (2.0 * theta.cos());
            let alpha = sw / (2.0 * q);
            let a0 = 1.0 + alpha;
            let b = match kind {
                FilterKind::LowPass => [(1.0 - cw) / 2.0, 1.0 - cw, (1.0 - cw) / 2.0],
                FilterKind::HighPass => [(1.0 + cw) / 2.0, -(1.0 + cw), (1.0 + cw) / 2.0],
            };
            sections.push(Biquad {
                b: [b[0] / a0, b[1] / a0, b[2] / a0],
                a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
            });
        }
        if order % 2 == 1 {
            let k = (w0 / 2.0).tan();
            let a1 = (k - 1.0) / (k + 1.0);
            let b = match kind {
                FilterKind::LowPass => [k / (1.0 + k), k / (1.0 + k), 0.0],
                FilterKind::HighPass => [1.0 / (1.0 + k), -1.0 / (1.0 + k), 0.0],
            };
            sections.push(Biquad { b, a: [a1, 0.0] });
        }
        Ok(Sos { sections, order })
    }

    /// Smallest Butterworth meeting the two-pass edge requirements, with the
    /// cutoff placed so the passband edge loses exactly the allowed amount.
    pub fn design(kind: FilterKind, pass_hz: f64, stop_hz: f64, fs: f64) -> Result<Sos> {
        let nyq = fs / 2.0;
        let warp = |f: f64| (PI * f.min(nyq * 0.999_999) / fs).tan();
        let (wp, ws) = (warp(pass_hz), warp(stop_hz));
        // ratio > 1 in the direction of the stopband
        let ratio = match kind {
            FilterKind::LowPass => ws / wp,
            FilterKind::HighPass => wp / ws,
        };
        if ratio <= 1.0 {
            return Err(Error::FilterDesign(format!(
                "stop edge {stop_hz} Hz does not lie beyond pass edge {pass_hz} Hz"
            )));
        }
        // single-pass targets are half the two-pass figures in dB
        let eps_pass = 10f64.powf(PASSBAND_LOSS_DB / 2.0 / 10.0) - 1.0;
        let eps_stop = 10f64.powf(STOPBAND_ATTEN_DB / 2.0 / 10.0) - 1.0;
        let order = ((eps_stop / eps_pass).ln() / (2.0 * ratio.ln())).ceil().max(2.0) as usize;
        if order > MAX_ORDER {
            return Err(Error::FilterDesign(format!(
                "transition {pass_hz}..{stop_hz} Hz needs order {order} > {MAX_ORDER}"
            )));
        }
        let scale = eps_pass.powf(1.0 / (2.0 * order as f64));
        let wc = match kind {
            FilterKind::LowPass => wp / scale,
            FilterKind::HighPass => wp * scale,
        };
        let cutoff = wc.atan() * fs / PI;
        Sos::butterworth(kind, order, cutoff, fs)
    }

    /// Single-pass magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        self.sections.iter().map(|s| s.gain(freq_hz / fs)).product()
    }

    pub fn apply(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    /// Forward-backward application with reflection padding at both ends.
    /// `odd` reflects through the end sample (value and slope continuous);
    /// otherwise the signal is mirrored (no level shift).
    pub fn filtfilt(&self, x: &[f64], pad: usize, odd: bool) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(if odd { 2.0 * x[0] - x[i] } else { x[i] });
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(if odd { 2.0 * x[n - 1] - x[n - 1 - i] } else { x[n - 1 - i] });
        }
        self.apply(&mut ext);
        ext.reverse();
        self.apply(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// The pair of filters used by [`bandpass_and_resample`].
#[derive(Debug, Clone)]
pub struct BandPass {
    pub highpass: Sos,
    pub lowpass: Sos,
    pub pad: usize,
}

impl BandPass {
    pub fn design(low_hz: f64, high_hz: f64, fs: f64, target_rate: f64) -> Result<BandPass> {
        let highpass = Sos::design(FilterKind::HighPass, low_hz, low_hz / 2.0, fs)?;
        let stop = (2.0 * high_hz).min(target_rate / 2.0).min(fs / 2.0);
        let lowpass = Sos::design(FilterKind::LowPass, high_hz, stop, fs)?;
        // three time constants of the slowest edge
        let pad = (3.0 * fs / low_hz).ceil() as usize;
        Ok(BandPass {
            highpass,
            lowpass,
            pad,
        })
    }

    /// Two-pass magnitude response at `freq_hz`.
    pub fn zero_phase_gain(&self, freq_hz: f64, fs: f64) -> f64 {
        let g = self.highpass.magnitude(freq_hz, fs) * self.lowpass.magnitude(freq_hz, fs);
        g * g
    }
}

/// Band-limits every channel to `[low_hz, high_hz]` and decimates to
/// `target_rate`, which must divide the input rate.
pub fn bandpass_and_resample(
    t: &TrialRecording,
    low_hz: f64,
    high_hz: f64,
    target_rate: f64,
) -> Result<TrialRecording> {
    let fs = t.sampling_rate_hz;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < target_rate / 2.0 && target_rate <= fs) {
        return Err(Error::Nyquist(format!(
            "need 0 < low ({low_hz}) < high ({high_hz}) < target/2 ({}) and target <= input rate ({fs})",
            target_rate / 2.0
        )));
    }
    let ratio = fs / target_rate;
    let factor = ratio.round();
    if (ratio - factor).abs() > 1e-9 * ratio {
        return Err(Error::Nyquist(format!(
            "non-integer decimation ratio {fs}/{target_rate}"
        )));
    }
    let factor = factor as usize;
    let filters = BandPass::design(low_hz, high_hz, fs, target_rate)?;
    let n_out = t.n_samples().div_ceil(factor);
    let mut rows = Vec::with_capacity(t.n_channels());
    for c in 0..t.n_channels() {
        let x: Vec<f64> = t.channel(c).iter().map(|&v| v as f64).collect();
        // odd padding keeps the low-pass free of corner transients; mirror
        // padding keeps the slow high-pass free of level steps
        let y = filters.lowpass.filtfilt(&x, filters.pad, true);
        let y = filters.highpass.filtfilt(&y, filters.pad, false);
        rows.push(y.iter().step_by(factor).map(|&v| v as f32).collect::<Vec<f32>>());
    }
    debug_assert!(rows.iter().all(|r| r.len() == n_out));
    TrialRecording::from_rows(t.meta.clone(), target_rate, t.channel_names.clone(), &rows)
}
