//! Trained-pipeline files: a JSON header (structure, hyper-parameters,
//! segment table) next to a binary file of little-endian f64 arrays.
//!
//! The header carries `format_version`; files written by another version are
//! refused rather than reinterpreted.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classify::{GelmModel, KnnModel, LogRegModel, TrainedClassifier};
use crate::error::{Error, Result};
use crate::eval::{FittedReducer, ModelConfig, TrainedPipeline};
use crate::reduction::PcaModel;
use crate::smoothing::{LdsParams, ScalarLds};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"EEGEMOW1";

/// A named row-major block inside the weights file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset from the start of the file.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum ClassifierMeta {
    Gelm { lambda1: f64, lambda2: f64, seed: u64 },
    Knn { k: usize },
    Logreg { l2: f64, iterations: usize, grad_norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum ReducerMeta {
    None,
    Pca,
    Select { indices: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    format_version: u32,
    config: ModelConfig,
    class_labels: Vec<i64>,
    input_columns: Vec<String>,
    classifier: ClassifierMeta,
    reducer: ReducerMeta,
    lds_passthrough: Option<Vec<bool>>,
    weights_file: String,
    segments: Vec<Segment>,
}

/// Binary file path paired with a header path (`model.json` -> `model.bin`).
pub fn weights_path_for(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

#[derive(Default)]
struct Writer {
    bytes: Vec<u8>,
    segments: Vec<Segment>,
}

impl Writer {
    fn new() -> Self {
        Writer {
            bytes: MAGIC.to_vec(),
            segments: Vec::new(),
        }
    }

    fn matrix(&mut self, name: &str, m: &DMatrix<f64>) {
        self.segments.push(Segment {
            name: name.into(),
            rows: m.nrows(),
            cols: m.ncols(),
            offset: self.bytes.len(),
        });
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.bytes.extend_from_slice(&m[(r, c)].to_le_bytes());
            }
        }
    }

    fn vector(&mut self, name: &str, v: &[f64]) {
        self.matrix(name, &DMatrix::from_row_slice(1, v.len(), v));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    segments: &'a [Segment],
}

impl Reader<'_> {
    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let s = self
            .segments
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::ModelFormat(format!("missing weight segment {name}")))?;
        let len = s.rows * s.cols * 8;
        let end = s.offset.checked_add(len).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::ModelFormat(format!(
                "segment {name} ({} x {}) runs past the end of the weights file",
                s.rows, s.cols
            )));
        };
        let vals: Vec<f64> = self.bytes[s.offset..end]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(DMatrix::from_row_slice(s.rows, s.cols, &vals))
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.matrix(name)?.iter().copied().collect())
    }
}

const LDS_FIELDS: usize = 7;

fn lds_to_matrix(p: &LdsParams) -> DMatrix<f64> {
    DMatrix::from_fn(p.columns.len(), LDS_FIELDS, |r, c| {
        let s = &p.columns[r];
        [
            s.transition,
            s.obs_var,
            s.proc_var,
            s.obs_mean,
            s.proc_mean,
            s.init_mean,
            s.init_var,
        ][c]
    })
}

fn lds_from_matrix(m: &DMatrix<f64>, passthrough: Vec<bool>) -> Result<LdsParams> {
    if m.ncols() != LDS_FIELDS || m.nrows() != passthrough.len() {
        return Err(Error::ModelFormat("LDS segment has the wrong shape".into()));
    }
    let columns = (0..m.nrows())
        .map(|r| ScalarLds {
            transition: m[(r, 0)],
            obs_var: m[(r, 1)],
            proc_var: m[(r, 2)],
            obs_mean: m[(r, 3)],
            proc_mean: m[(r, 4)],
            init_mean: m[(r, 5)],
            init_var: m[(r, 6)],
        })
        .collect();
    Ok(LdsParams { columns, passthrough })
}

pub fn save_pipeline(model: &TrainedPipeline, header_path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.vector("standardize_means", &model.means);
    w.vector("standardize_scales", &model.scales);
    if let Some(lds) = &model.lds {
        w.matrix("lds", &lds_to_matrix(lds));
    }
    let reducer = match &model.reducer {
        FittedReducer::None => ReducerMeta::None,
        FittedReducer::Pca(p) => {
            w.vector("pca_means", &p.means);
            w.matrix("pca_loadings", &p.loadings);
            w.vector("pca_eigenvalues", &p.eigenvalues);
            w.vector("pca_explained_ratio", &p.explained_ratio);
            ReducerMeta::Pca
        }
        FittedReducer::Select(idx) => ReducerMeta::Select { indices: idx.clone() },
    };
    let classifier = match &model.classifier {
        TrainedClassifier::Gelm(g) => {
            w.matrix("gelm_input_weights", &g.input_weights);
            w.vector("gelm_biases", &g.biases);
            w.matrix("gelm_beta", &g.beta);
            ClassifierMeta::Gelm {
                lambda1: g.lambda1,
                lambda2: g.lambda2,
                seed: g.seed,
            }
        }
        TrainedClassifier::Knn(k) => {
            w.matrix("knn_x", &k.x);
            w.vector("knn_y", &k.y.iter().map(|&v| v as f64).collect::<Vec<_>>());
            ClassifierMeta::Knn { k: k.k }
        }
        TrainedClassifier::LogReg(l) => {
            w.matrix("logreg_weights", &l.weights);
            w.vector("logreg_bias", &l.bias);
            ClassifierMeta::Logreg {
                l2: l.l2,
                iterations: l.iterations,
                grad_norm: l.grad_norm,
            }
        }
    };
    let weights = weights_path_for(header_path);
    let header = ModelHeader {
        format_version: MODEL_FORMAT_VERSION,
        config: model.config.clone(),
        class_labels: model.classifier.class_labels().to_vec(),
        input_columns: model.input_columns.clone(),
        classifier,
        reducer,
        lds_passthrough: model.lds.as_ref().map(|l| l.passthrough.clone()),
        weights_file: weights
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        segments: w.segments,
    };
    std::fs::write(&weights, &w.bytes).map_err(|e| Error::io(&weights, e))?;
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    std::fs::write(header_path, text + "\n").map_err(|e| Error::io(header_path, e))
}

pub fn load_pipeline(header_path: &Path) -> Result<TrainedPipeline> {
    let text = std::fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: header_path.into(),
        source: e,
    })?;
    match raw.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == MODEL_FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::ModelFormat(format!(
                "{}: format version {v}, this build reads version {MODEL_FORMAT_VERSION}",
                header_path.display()
            )))
        }
        None => {
            return Err(Error::ModelFormat(format!(
                "{}: no format_version field",
                header_path.display()
            )))
        }
    }
    let header: ModelHeader = serde_json::from_value(raw).map_err(|e| Error::Json {
        path: header_path.into(),
        source: e,
    })?;
    let weights = header_path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&header.weights_file);
    let bytes = std::fs::read(&weights).map_err(|e| Error::io(&weights, e))?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::ModelFormat(format!(
            "{}: not a weights file of this format",
            weights.display()
        )));
    }
    let r = Reader {
        bytes: &bytes,
        segments: &header.segments,
    };
    let lds = match header.lds_passthrough {
        Some(p) => Some(lds_from_matrix(&r.matrix("lds")?, p)?),
        None => None,
    };
    let reducer = match header.reducer {
        ReducerMeta::None => FittedReducer::None,
        ReducerMeta::Pca => FittedReducer::Pca(PcaModel {
            means: r.vector("pca_means")?,
            loadings: r.matrix("pca_loadings")?,
            eigenvalues: r.vector("pca_eigenvalues")?,
            explained_ratio: r.vector("pca_explained_ratio")?,
        }),
        ReducerMeta::Select { indices } => FittedReducer::Select(indices),
    };
    let class_labels = header.class_labels;
    let classifier = match header.classifier {
        ClassifierMeta::Gelm { lambda1, lambda2, seed } => TrainedClassifier::Gelm(GelmModel {
            input_weights: r.matrix("gelm_input_weights")?,
            biases: r.vector("gelm_biases")?,
            beta: r.matrix("gelm_beta")?,
            lambda1,
            lambda2,
            seed,
            class_labels,
        }),
        ClassifierMeta::Knn { k } => TrainedClassifier::Knn(KnnModel {
            k,
            x: r.matrix("knn_x")?,
            y: r.vector("knn_y")?.into_iter().map(|v| v as usize).collect(),
            class_labels,
        }),
        ClassifierMeta::Logreg {
            l2,
            iterations,
            grad_norm,
        } => TrainedClassifier::LogReg(LogRegModel {
            weights: r.matrix("logreg_weights")?,
            bias: r.vector("logreg_bias")?,
            l2,
            class_labels,
            iterations,
            grad_norm,
        }),
    };
    Ok(TrainedPipeline {
        config: header.config,
        input_columns: header.input_columns,
        lds,
        means: r.vector("standardize_means")?,
        scales: r.vector("standardize_scales")?,
        reducer,
        classifier,
    })
}
