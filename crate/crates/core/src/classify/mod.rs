//! Classifiers over windowed feature rows.

pub mod gelm;
pub mod knn;
pub mod logreg;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gelm::{gelm_objective, gelm_predict, gelm_train, graph_laplacian, GelmModel};
pub use knn::{knn_predict, knn_train, KnnModel};
pub use logreg::{logreg_objective, logreg_predict, logreg_train, LogRegModel, LogRegOptions};

/// Training rows with dense class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    /// N x D
    pub x: DMatrix<f64>,
    /// Class index per row, `0..class_labels.len()`.
    pub y: Vec<usize>,
    /// Original label value of each class index, ascending.
    pub class_labels: Vec<i64>,
}

impl LabeledSet {
    /// Builds a set from raw label values; classes are the distinct labels in
    /// ascending order.
    pub fn new(x: DMatrix<f64>, labels: &[i64]) -> Result<Self> {
        let mut classes = labels.to_vec();
        classes.sort();
        classes.dedup();
        Self::with_classes(x, labels, classes)
    }

    /// Builds a set against a fixed class list (which may include classes
    /// absent from `labels`).
    pub fn with_classes(x: DMatrix<f64>, labels: &[i64], class_labels: Vec<i64>) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if class_labels.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 classes, got {}",
                class_labels.len()
            )));
        }
        let y = labels
            .iter()
            .map(|l| {
                class_labels
                    .binary_search(l)
                    .map_err(|_| Error::LabelMismatch(format!("label {l} not in class list")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledSet { x, y, class_labels })
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// N x classes, rows sum to one.
    pub fn one_hot(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.len(), self.n_classes());
        for (i, &c) in self.y.iter().enumerate() {
            t[(i, c)] = 1.0;
        }
        t
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }
}

/// Argmax per row, lowest index on ties.
pub fn argmax_rows(scores: &DMatrix<f64>) -> Vec<usize> {
    (0..scores.nrows())
        .map(|r| {
            let mut best = 0;
            for c in 1..scores.ncols() {
                if scores[(r, c)] > scores[(r, best)] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Classifier choice and hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClassifierConfig {
    Gelm {
        #[serde(default = "one")]
        lambda1: f64,
        #[serde(default = "one")]
        lambda2: f64,
        /// Hidden units; 10 x input dimension when absent.
        #[serde(default)]
        hidden: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    Knn {
        #[serde(default = "five")]
        k: usize,
    },
    Logreg {
        #[serde(default = "one")]
        l2: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn five() -> usize {
    5
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::Gelm {
            lambda1: 1.0,
            lambda2: 1.0,
            hidden: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedClassifier {
    Gelm(GelmModel),
    Knn(KnnModel),
    LogReg(LogRegModel),
}

impl TrainedClassifier {
    pub fn train(cfg: &ClassifierConfig, set: &LabeledSet) -> Result<Self> {
        Ok(match cfg {
            ClassifierConfig::Gelm {
                lambda1,
                lambda2,
                hidden,
                seed,
            } => {
                let hidden = hidden.unwrap_or(10 * set.dim());
                TrainedClassifier::Gelm(gelm_train(set, *lambda1, *lambda2, hidden, *seed)?)
            }
            ClassifierConfig::Knn { k } => TrainedClassifier::Knn(knn_train(set, *k)?),
            ClassifierConfig::Logreg { l2 } => {
                TrainedClassifier::LogReg(logreg_train(set, *l2, LogRegOptions::default())?)
            }
        })
    }

    /// Predicted class indices.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        match self {
            TrainedClassifier::Gelm(m) => Ok(gelm_predict(m, x)?.0),
            TrainedClassifier::Knn(m) => knn_predict(m, x),
            TrainedClassifier::LogReg(m) => Ok(logreg_predict(m, x)?.0),
        }
    }

    pub fn class_labels(&self) -> &[i64] {
        match self {
            TrainedClassifier::Gelm(m) => &m.class_labels,
            TrainedClassifier::Knn(m) => &m.class_labels,
            TrainedClassifier::LogReg(m) => &m.class_labels,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_rows_sum_to_one() {
        let set = LabeledSet::new(DMatrix::zeros(4, 2), &[5, -1, 5, 2]).unwrap();
        assert_eq!(set.class_labels, vec![-1, 2, 5]);
        assert_eq!(set.y, vec![2, 0, 2, 1]);
        let t = set.one_hot();
        for r in 0..4 {
            assert_eq!(t.row(r).sum(), 1.0);
        }
    }

    #[test]
    fn single_class_rejected() {
        assert!(LabeledSet::new(DMatrix::zeros(3, 2), &[1, 1, 1]).is_err());
        assert!(LabeledSet::with_classes(DMatrix::zeros(1, 2), &[7], vec![0, 1]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        let s = DMatrix::from_row_slice(2, 3, &[1.0, 3.0, 3.0, 0.0, 0.0, 0.0]);
        assert_eq!(argmax_rows(&s), vec![1, 0]);
    }

    #[test]
    fn classifier_config_parses() {
        let c: ClassifierConfig = serde_json::from_str(r#"{"type":"knn"}"#).unwrap();
        assert_eq!(c, ClassifierConfig::Knn { k: 5 });
        assert!(serde_json::from_str::<ClassifierConfig>(r#"{"type":"svm"}"#).is_err());
        assert!(serde_json::from_str::<ClassifierConfig>(r#"{"type":"knn","kk":3}"#).is_err());
    }
}
