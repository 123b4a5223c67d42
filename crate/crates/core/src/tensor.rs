//! Windowed feature matrices with per-column provenance, and their CSV form.
//!
//! CSV layout: optional `#key=value` metadata lines, then a header row of
//! `kind:channel_or_pair:band` descriptors, then one row per window.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FeatureKind {
    Psd,
    De,
    Dasm,
    Rasm,
    Asm,
    Dcau,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Psd,
        FeatureKind::De,
        FeatureKind::Dasm,
        FeatureKind::Rasm,
        FeatureKind::Asm,
        FeatureKind::Dcau,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Psd => "PSD",
            FeatureKind::De => "DE",
            FeatureKind::Dasm => "DASM",
            FeatureKind::Rasm => "RASM",
            FeatureKind::Asm => "ASM",
            FeatureKind::Dcau => "DCAU",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown feature kind {s:?}")))
    }
}

/// Provenance of one feature column. ASM columns keep the DASM/RASM kind of
/// the parent they came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnDescriptor {
    pub kind: FeatureKind,
    /// Channel name, or `A-B` for a pair.
    pub source: String,
    pub band: String,
}

impl ColumnDescriptor {
    pub fn new(kind: FeatureKind, source: impl Into<String>, band: impl Into<String>) -> Self {
        ColumnDescriptor {
            kind,
            source: source.into(),
            band: band.into(),
        }
    }
}

impl fmt::Display for ColumnDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.kind, self.source, self.band)
    }
}

impl FromStr for ColumnDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 3 || parts[1].is_empty() || parts[2].is_empty() {
            return Err(Error::InvalidParameter(format!(
                "column descriptor {s:?} is not kind:channel_or_pair:band"
            )));
        }
        Ok(ColumnDescriptor {
            kind: parts[0].parse()?,
            source: parts[1].to_string(),
            band: parts[2].to_string(),
        })
    }
}

/// Identity of the recording a tensor (or trial) came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialMeta {
    pub subject_id: String,
    pub session_id: String,
    pub trial_id: String,
    pub label: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    /// windows × D
    pub values: DMatrix<f64>,
    pub columns: Vec<ColumnDescriptor>,
    pub window_seconds: f64,
    pub meta: TrialMeta,
    /// Columns where the RASM denominator guard fired in at least one window.
    pub guarded: Vec<usize>,
}

impl FeatureTensor {
    pub fn new(
        values: DMatrix<f64>,
        columns: Vec<ColumnDescriptor>,
        window_seconds: f64,
        meta: TrialMeta,
    ) -> Result<Self> {
        if values.ncols() != columns.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} value columns but {} descriptors",
                values.ncols(),
                columns.len()
            )));
        }
        Ok(FeatureTensor {
            values,
            columns,
            window_seconds,
            meta,
            guarded: Vec::new(),
        })
    }

    pub fn windows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// The single kind shared by all columns, or ASM when DASM and RASM are mixed.
    pub fn kind(&self) -> Option<FeatureKind> {
        let mut kinds: Vec<FeatureKind> = self.columns.iter().map(|c| c.kind).collect();
        kinds.sort();
        kinds.dedup();
        match kinds.as_slice() {
            [k] => Some(*k),
            [FeatureKind::Dasm, FeatureKind::Rasm] => Some(FeatureKind::Asm),
            _ => None,
        }
    }

    /// Distinct band names in first-appearance order.
    pub fn bands(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.columns {
            if !out.contains(&c.band) {
                out.push(c.band.clone());
            }
        }
        out
    }

    /// Distinct sources (channels or pairs) in first-appearance order.
    pub fn sources(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.columns {
            if !out.contains(&c.source) {
                out.push(c.source.clone());
            }
        }
        out
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> FeatureTensor {
        let values = self.values.select_columns(idx);
        let columns = idx.iter().map(|&i| self.columns[i].clone()).collect();
        let guarded = idx
            .iter()
            .enumerate()
            .filter(|(_, i)| self.guarded.contains(i))
            .map(|(new, _)| new)
            .collect();
        FeatureTensor {
            values,
            columns,
            window_seconds: self.window_seconds,
            meta: self.meta.clone(),
            guarded,
        }
    }

    pub fn with_values(&self, values: DMatrix<f64>) -> FeatureTensor {
        assert_eq!(values.shape(), self.values.shape());
        FeatureTensor {
            values,
            ..self.clone()
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "#subject_id={}", self.meta.subject_id)?;
        writeln!(w, "#session_id={}", self.meta.session_id)?;
        writeln!(w, "#trial_id={}", self.meta.trial_id)?;
        writeln!(w, "#label={}", self.meta.label)?;
        writeln!(w, "#window_seconds={}", self.window_seconds)?;
        if !self.guarded.is_empty() {
            let g: Vec<String> = self.guarded.iter().map(|i| i.to_string()).collect();
            writeln!(w, "#guarded={}", g.join(" "))?;
        }
        let header: Vec<String> = self.columns.iter().map(|c| c.to_string()).collect();
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for r in 0..self.values.nrows() {
            line.clear();
            for c in 0..self.values.ncols() {
                if c > 0 {
                    line.push(',');
                }
                // Display on f64 is shortest round-trip.
                line.push_str(&self.values[(r, c)].to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<FeatureTensor> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let bad = |line: usize, message: String| Error::MalformedFeatures {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut meta = TrialMeta::default();
        let mut window_seconds = 1.0;
        let mut guarded = Vec::new();
        let mut columns: Option<Vec<ColumnDescriptor>> = None;
        let mut rows: Vec<f64> = Vec::new();
        let mut n_rows = 0usize;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(kv) = line.strip_prefix('#') {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| bad(lineno, "metadata line without '='".into()))?;
                match k {
                    "subject_id" => meta.subject_id = v.to_string(),
                    "session_id" => meta.session_id = v.to_string(),
                    "trial_id" => meta.trial_id = v.to_string(),
                    "label" => {
                        meta.label = v.parse().map_err(|_| bad(lineno, format!("bad label {v:?}")))?
                    }
                    "window_seconds" => {
                        window_seconds = v
                            .parse()
                            .map_err(|_| bad(lineno, format!("bad window_seconds {v:?}")))?
                    }
                    "guarded" => {
                        guarded = v
                            .split_whitespace()
                            .map(|s| s.parse::<usize>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad(lineno, "bad guarded list".into()))?
                    }
                    _ => {}
                }
                continue;
            }
            match &columns {
                None => {
                    let cols = line
                        .split(',')
                        .map(|s| s.parse::<ColumnDescriptor>())
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| bad(lineno, e.to_string()))?;
                    columns = Some(cols);
                }
                Some(cols) => {
                    let before = rows.len();
                    for field in line.split(',') {
                        let v: f64 = field
                            .trim()
                            .parse()
                            .map_err(|_| bad(lineno, format!("bad number {field:?}")))?;
                        rows.push(v);
                    }
                    if rows.len() - before != cols.len() {
                        return Err(bad(
                            lineno,
                            format!("{} fields, header has {}", rows.len() - before, cols.len()),
                        ));
                    }
                    n_rows += 1;
                }
            }
        }
        let columns = columns.ok_or_else(|| bad(0, "missing header row".into()))?;
        let values = DMatrix::from_row_slice(n_rows, columns.len(), &rows);
        let mut t = FeatureTensor::new(values, columns, window_seconds, meta)?;
        t.guarded = guarded;
        Ok(t)
    }
}

/// Column-wise concatenation of tensors that share window count.
pub fn hconcat(parts: &[&FeatureTensor]) -> Result<FeatureTensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::ShapeMismatch("nothing to concatenate".into()))?;
    let rows = first.windows();
    if let Some(p) = parts.iter().find(|p| p.windows() != rows) {
        return Err(Error::ShapeMismatch(format!(
            "window counts differ: {} vs {}",
            rows,
            p.windows()
        )));
    }
    let total: usize = parts.iter().map(|p| p.dim()).sum();
    let mut values = DMatrix::zeros(rows, total);
    let mut columns = Vec::with_capacity(total);
    let mut guarded = Vec::new();
    let mut offset = 0;
    for p in parts {
        values.columns_mut(offset, p.dim()).copy_from(&p.values);
        columns.extend(p.columns.iter().cloned());
        guarded.extend(p.guarded.iter().map(|g| g + offset));
        offset += p.dim();
    }
    let mut out = FeatureTensor::new(values, columns, first.window_seconds, first.meta.clone())?;
    out.guarded = guarded;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FeatureTensor {
        let values = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 3.0e-12, 0.1, 0.2, f64::MAX]);
        let columns = vec![
            ColumnDescriptor::new(FeatureKind::De, "FP1", "alpha"),
            ColumnDescriptor::new(FeatureKind::Dasm, "FP1-FP2", "alpha"),
            ColumnDescriptor::new(FeatureKind::Rasm, "FP1-FP2", "gamma"),
        ];
        let meta = TrialMeta {
            subject_id: "s1".into(),
            session_id: "2".into(),
            trial_id: "t07".into(),
            label: 2,
        };
        let mut t = FeatureTensor::new(values, columns, 1.0, meta).unwrap();
        t.guarded = vec![2];
        t
    }

    #[test]
    fn descriptor_text_form() {
        let d: ColumnDescriptor = "dcau:FZ-PZ:theta".parse().unwrap();
        assert_eq!(d.kind, FeatureKind::Dcau);
        assert_eq!(d.to_string(), "DCAU:FZ-PZ:theta");
        assert!("DE:FP1".parse::<ColumnDescriptor>().is_err());
        assert!("XX:FP1:alpha".parse::<ColumnDescriptor>().is_err());
    }

    #[test]
    fn csv_round_trip_keeps_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let t = sample();
        t.write_csv(&path).unwrap();
        let back = FeatureTensor::read_csv(&path).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_row_with_wrong_width_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "DE:FP1:alpha,DE:FP2:alpha\n1,2\n3\n").unwrap();
        match FeatureTensor::read_csv(&path) {
            Err(Error::MalformedFeatures { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn concat_offsets_guard_flags() {
        let t = sample();
        let c = hconcat(&[&t, &t]).unwrap();
        assert_eq!(c.dim(), 6);
        assert_eq!(c.guarded, vec![2, 5]);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(vals in proptest::collection::vec(-1e300f64..1e300, 6)) {
            let mut t = sample();
            t.values = DMatrix::from_row_slice(2, 3, &vals);
            let mut buf = Vec::new();
            t.write_csv_to(&mut buf).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.csv");
            std::fs::write(&path, &buf).unwrap();
            let back = FeatureTensor::read_csv(&path).unwrap();
            prop_assert_eq!(back.values, t.values);
        }
    }
}
