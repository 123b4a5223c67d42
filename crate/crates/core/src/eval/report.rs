use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};

/// One protocol cell: a fold, a session pair or a held-out subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub train: String,
    pub test: String,
    /// Percent correct, always `100 * trace / total` of `confusion`.
    pub accuracy: f64,
    /// Spread over inner folds, for cells that pool several folds.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std: Option<f64>,
    pub correct: usize,
    pub total: usize,
    /// Rows: true class, columns: predicted class.
    pub confusion: Vec<Vec<usize>>,
}

impl CellResult {
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Self {
        let correct: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let total: usize = confusion.iter().flatten().sum();
        let accuracy = if total == 0 {
            0.0
        } else {
            100.0 * correct as f64 / total as f64
        };
        CellResult {
            train: String::new(),
            test: String::new(),
            accuracy,
            std: None,
            correct,
            total,
            confusion,
        }
    }

    /// Sum of confusion matrices.
    pub fn pooled(cells: &[CellResult]) -> Self {
        let c = cells.first().map_or(0, |x| x.confusion.len());
        let mut confusion = vec![vec![0; c]; c];
        for cell in cells {
            for (row, src) in confusion.iter_mut().zip(&cell.confusion) {
                for (a, b) in row.iter_mut().zip(src) {
                    *a += b;
                }
            }
        }
        Self::from_confusion(confusion)
    }

    pub fn named(mut self, train: impl Into<String>, test: impl Into<String>) -> Self {
        self.train = train.into();
        self.test = test.into();
        self
    }

    pub fn with_std(mut self, std: f64) -> Self {
        self.std = Some(std);
        self
    }
}

/// Population standard deviation.
pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub seed: u64,
    pub folds: usize,
    pub class_labels: Vec<i64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub cells: Vec<CellResult>,
    /// Train-by-test accuracy grid for cross-session runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid: Option<Vec<Vec<f64>>>,
    /// Configuration that produced the report.
    pub config: serde_json::Value,
}

impl EvalReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        protocol: &str,
        config: &ModelConfig,
        seed: u64,
        folds: usize,
        class_labels: Vec<i64>,
        cells: Vec<CellResult>,
        summarized: &[f64],
        grid: Option<Vec<Vec<f64>>>,
    ) -> Self {
        let mean = summarized.iter().sum::<f64>() / summarized.len().max(1) as f64;
        EvalReport {
            protocol: protocol.to_string(),
            seed,
            folds,
            class_labels,
            mean_accuracy: mean,
            std_accuracy: std_dev(summarized),
            cells,
            grid,
            config: serde_json::to_value(config).expect("config serializes"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Json {
            path: "<report>".into(),
            source: e,
        })
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "protocol: {}", self.protocol).unwrap();
        if let Some(grid) = &self.grid {
            let names: Vec<&str> = (0..grid.len())
                .map(|i| self.cells[i * grid.len()].train.as_str())
                .collect();
            write!(s, "{:<14}", "train \\ test").unwrap();
            for n in &names {
                write!(s, "{n:>14}").unwrap();
            }
            s.push('\n');
            for (i, row) in grid.iter().enumerate() {
                write!(s, "{:<14}", names[i]).unwrap();
                for a in row {
                    write!(s, "{a:>14.2}").unwrap();
                }
                s.push('\n');
            }
        } else {
            writeln!(s, "{:<20} {:<20} {:>9} {:>8}", "train", "test", "acc (%)", "n").unwrap();
            for c in &self.cells {
                writeln!(s, "{:<20} {:<20} {:>9.2} {:>8}", c.train, c.test, c.accuracy, c.total).unwrap();
            }
        }
        writeln!(s, "mean {:.2} +/- {:.2}", self.mean_accuracy, self.std_accuracy).unwrap();
        s
    }

    /// Writes `<stem>.json` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (ext, body) in [("json", self.to_json()), ("txt", self.to_table())] {
            let p = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
