//! Differential entropy and the asymmetry/caudality families built on it.
//!
//! For a band-limited Gaussian segment with variance `P`, the differential
//! entropy is `0.5 * ln(2 pi e P)`; band power stands in for `P`. DASM and
//! DCAU are DE differences over electrode pairs, RASM the DE ratio, and ASM
//! the DASM columns followed by the RASM columns.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ingest::trial::TrialRecording;
use crate::layout::{canonical, ChannelLayout, PairTable};
use crate::spectral::{compute_band_power, stft_power, BandTable, Spectrogram};
use crate::tensor::{hconcat, ColumnDescriptor, FeatureKind, FeatureTensor};

/// Floor on band power before the logarithm.
pub const POWER_FLOOR: f64 = 1e-12;
/// Floor on `|DE_right|` in the RASM denominator.
pub const RASM_FLOOR: f64 = 1e-6;
/// `0.5 * ln(2 pi e)`, the DE of unit power.
pub const HALF_LOG_2PIE: f64 = 1.418_938_533_204_672_7;

pub fn differential_entropy(power: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * power.max(POWER_FLOOR)).ln()
}

pub fn compute_de(s: &Spectrogram, bands: &BandTable) -> Result<FeatureTensor> {
    de_from_band_power(&compute_band_power(s, bands)?)
}

/// DE of an existing PSD tensor; descriptors are relabelled `DE`.
pub fn de_from_band_power(psd: &FeatureTensor) -> Result<FeatureTensor> {
    if psd.kind() != Some(FeatureKind::Psd) {
        return Err(Error::KindMismatch {
            expected: "PSD".into(),
            found: kind_name(psd),
        });
    }
    let mut out = psd.clone();
    out.values.apply(|v| *v = differential_entropy(*v));
    for c in &mut out.columns {
        c.kind = FeatureKind::De;
    }
    Ok(out)
}

fn kind_name(t: &FeatureTensor) -> String {
    t.kind().map_or_else(|| "mixed".to_string(), |k| k.to_string())
}

fn require_de(de: &FeatureTensor) -> Result<HashMap<(String, String), usize>> {
    if de.kind() != Some(FeatureKind::De) {
        return Err(Error::KindMismatch {
            expected: "DE".into(),
            found: kind_name(de),
        });
    }
    Ok(de
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| ((canonical(&c.source), c.band.clone()), i))
        .collect())
}

/// Applies `op(first, second)` per (pair, band); columns are pair-major.
fn pairwise<F>(
    de: &FeatureTensor,
    pairs: &PairTable,
    kind: FeatureKind,
    mut op: F,
) -> Result<FeatureTensor>
where
    F: FnMut(f64, f64) -> (f64, bool),
{
    let index = require_de(de)?;
    let bands = de.bands();
    let d = pairs.len() * bands.len();
    let mut values = DMatrix::zeros(de.windows(), d);
    let mut columns = Vec::with_capacity(d);
    let mut guarded = Vec::new();
    for (p, (a, b)) in pairs.pairs.iter().enumerate() {
        for (bi, band) in bands.iter().enumerate() {
            let lookup = |ch: &String| {
                index
                    .get(&(canonical(ch), band.clone()))
                    .copied()
                    .ok_or_else(|| Error::MissingChannel(ch.clone()))
            };
            let (ia, ib) = (lookup(a)?, lookup(b)?);
            let col = p * bands.len() + bi;
            let mut fired = false;
            for w in 0..de.windows() {
                let (v, g) = op(de.values[(w, ia)], de.values[(w, ib)]);
                values[(w, col)] = v;
                fired |= g;
            }
            if fired {
                guarded.push(col);
            }
            columns.push(ColumnDescriptor::new(
                kind,
                PairTable::pair_name(a, b),
                band.clone(),
            ));
        }
    }
    let mut out = FeatureTensor::new(values, columns, de.window_seconds, de.meta.clone())?;
    out.guarded = guarded;
    Ok(out)
}

/// `DE(left) - DE(right)` over the lateral pairs.
pub fn compute_dasm(de: &FeatureTensor, pairs: &PairTable) -> Result<FeatureTensor> {
    pairwise(de, pairs, FeatureKind::Dasm, |l, r| (l - r, false))
}

/// `DE(left) / DE(right)`. Denominators with magnitude below [`RASM_FLOOR`]
/// are replaced by `+-RASM_FLOOR` and the column is listed in `guarded`.
pub fn compute_rasm(de: &FeatureTensor, pairs: &PairTable) -> Result<FeatureTensor> {
    pairwise(de, pairs, FeatureKind::Rasm, |l, r| {
        if r.abs() < RASM_FLOOR {
            let denom = if r < 0.0 { -RASM_FLOOR } else { RASM_FLOOR };
            (l / denom, true)
        } else {
            (l / r, false)
        }
    })
}

pub fn compute_asm(dasm: &FeatureTensor, rasm: &FeatureTensor) -> Result<FeatureTensor> {
    if dasm.kind() != Some(FeatureKind::Dasm) || rasm.kind() != Some(FeatureKind::Rasm) {
        return Err(Error::KindMismatch {
            expected: "DASM and RASM".into(),
            found: format!("{} and {}", kind_name(dasm), kind_name(rasm)),
        });
    }
    hconcat(&[dasm, rasm])
}

/// `DE(frontal) - DE(posterior)` over the caudal pairs.
pub fn compute_dcau(de: &FeatureTensor, pairs: &PairTable) -> Result<FeatureTensor> {
    pairwise(de, pairs, FeatureKind::Dcau, |f, p| (f - p, false))
}

/// Restricts a tensor to one band; `"total"` returns it unchanged.
pub fn band_slice(f: &FeatureTensor, band: &str) -> Result<FeatureTensor> {
    if band.eq_ignore_ascii_case("total") {
        return Ok(f.clone());
    }
    let idx: Vec<usize> = f
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.band == band)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::UnknownBand(band.to_string()));
    }
    Ok(f.select_columns(&idx))
}

/// Runs the spectral front end and returns the requested feature family.
pub fn extract(
    trial: &TrialRecording,
    kind: FeatureKind,
    bands: &BandTable,
    layout: &ChannelLayout,
    window_seconds: f64,
) -> Result<FeatureTensor> {
    let spec = stft_power(trial, window_seconds)?;
    let psd = compute_band_power(&spec, bands)?;
    if kind == FeatureKind::Psd {
        return Ok(psd);
    }
    let de = de_from_band_power(&psd)?;
    match kind {
        FeatureKind::Psd => unreachable!(),
        FeatureKind::De => Ok(de),
        FeatureKind::Dasm => compute_dasm(&de, layout.lateral()),
        FeatureKind::Rasm => compute_rasm(&de, layout.lateral()),
        FeatureKind::Asm => compute_asm(
            &compute_dasm(&de, layout.lateral())?,
            &compute_rasm(&de, layout.lateral())?,
        ),
        FeatureKind::Dcau => compute_dcau(&de, layout.caudal()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TrialMeta;

    fn de_tensor(channels: &[&str], bands: &[&str], values: Vec<f64>, windows: usize) -> FeatureTensor {
        let mut columns = Vec::new();
        for c in channels {
            for b in bands {
                columns.push(ColumnDescriptor::new(FeatureKind::De, *c, *b));
            }
        }
        let m = DMatrix::from_row_slice(windows, columns.len(), &values);
        FeatureTensor::new(m, columns, 1.0, TrialMeta::default()).unwrap()
    }

    fn lateral(pairs: &[(&str, &str)]) -> PairTable {
        PairTable {
            role: crate::layout::PairRole::Lateral,
            pairs: pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }

    #[test]
    fn de_of_unit_entropy_power_is_zero() {
        let p = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E);
        assert!(differential_entropy(p).abs() < 1e-15);
        assert!((differential_entropy(1.0) - HALF_LOG_2PIE).abs() < 1e-15);
        assert_eq!(differential_entropy(0.0), differential_entropy(POWER_FLOOR));
    }

    #[test]
    fn de_scaling_is_log_shift() {
        for &(p, c) in &[(0.3, 2.0), (17.0, 0.1), (1e-3, 7.5)] {
            let shift = differential_entropy(c * c * p) - differential_entropy(p);
            assert!((shift - f64::ln(c)).abs() < 1e-12);
        }
    }

    #[test]
    fn dasm_symmetry_and_antisymmetry() {
        let de = de_tensor(&["C3", "C4"], &["alpha", "beta"], vec![1.0, 2.0, 1.0, 2.0, 0.5, -1.0, 3.0, 4.0], 2);
        let pairs = lateral(&[("C3", "C4")]);
        let d = compute_dasm(&de, &pairs).unwrap();
        assert_eq!(d.values.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!(d.values.row(1).iter().copied().collect::<Vec<_>>(), vec![-2.5, -5.0]);
        let s = compute_dasm(&de, &pairs.swapped()).unwrap();
        assert_eq!(s.values, -d.values.clone());
        assert_eq!(d.columns[1].to_string(), "DASM:C3-C4:beta");
    }

    #[test]
    fn rasm_identity_and_guard() {
        let de = de_tensor(&["C3", "C4"], &["alpha"], vec![1.7, 1.7, 2.0, 0.0], 2);
        let r = compute_rasm(&de, &lateral(&[("C3", "C4")])).unwrap();
        assert_eq!(r.values[(0, 0)], 1.0);
        assert_eq!(r.values[(1, 0)], 2.0 / RASM_FLOOR);
        assert_eq!(r.guarded, vec![0]);
    }

    #[test]
    fn missing_channel_is_error() {
        let de = de_tensor(&["C3"], &["alpha"], vec![1.0], 1);
        assert!(matches!(
            compute_dasm(&de, &lateral(&[("C3", "C4")])),
            Err(Error::MissingChannel(c)) if c == "C4"
        ));
    }

    #[test]
    fn asm_is_dasm_then_rasm() {
        let de = de_tensor(&["C3", "C4"], &["alpha"], vec![1.0, 2.0], 1);
        let pairs = lateral(&[("C3", "C4")]);
        let dasm = compute_dasm(&de, &pairs).unwrap();
        let rasm = compute_rasm(&de, &pairs).unwrap();
        let asm = compute_asm(&dasm, &rasm).unwrap();
        assert_eq!(asm.columns[0], dasm.columns[0]);
        assert_eq!(asm.columns[1], rasm.columns[0]);
        assert_eq!(asm.kind(), Some(FeatureKind::Asm));
        assert!(compute_asm(&rasm, &dasm).is_err());
    }

    #[test]
    fn band_slice_counts() {
        let bands = ["delta", "theta", "alpha", "beta", "gamma"];
        let names: Vec<String> = (0..62).map(|i| format!("E{i}")).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let de = de_tensor(&refs, &bands, (0..310).map(|v| v as f64).collect(), 1);
        assert_eq!(band_slice(&de, "gamma").unwrap().dim(), 62);
        assert_eq!(band_slice(&de, "total").unwrap(), de);
        assert!(matches!(band_slice(&de, "mu"), Err(Error::UnknownBand(_))));
        // re-concatenating the slices is a column permutation of the original
        let parts: Vec<FeatureTensor> = bands.iter().map(|b| band_slice(&de, b).unwrap()).collect();
        let refs: Vec<&FeatureTensor> = parts.iter().collect();
        let joined = hconcat(&refs).unwrap();
        let mut a: Vec<String> = joined.columns.iter().map(|c| c.to_string()).collect();
        let mut b: Vec<String> = de.columns.iter().map(|c| c.to_string()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let mut va: Vec<f64> = joined.values.iter().copied().collect();
        va.sort_by(f64::total_cmp);
        assert_eq!(va, de.values.iter().copied().collect::<Vec<_>>());
    }

    #[test]
    fn de_requires_psd_input() {
        let de = de_tensor(&["C3"], &["alpha"], vec![1.0], 1);
        assert!(matches!(de_from_band_power(&de), Err(Error::KindMismatch { .. })));
        let mut psd = de.clone();
        psd.columns[0].kind = FeatureKind::Psd;
        assert!(matches!(compute_dcau(&psd, &lateral(&[])), Err(Error::KindMismatch { .. })));
    }
}
