//! A trainable feature-to-label pipeline: band selection, smoothing,
//! standardization, reduction and classification, all fitted on training
//! trials only.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierConfig, LabeledSet, TrainedClassifier};
use crate::error::{Error, Result};
use crate::features::band_slice;
use crate::reduction::{mrmr_order, pca_fit, pca_transform, Discretizer, PcaModel};
use crate::smoothing::{fit_lds_multi, lds_smooth, moving_average, EmOptions, LdsParams};
use crate::tensor::FeatureTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmoothingConfig {
    None,
    MovingAverage {
        #[serde(default = "five")]
        window: usize,
    },
    Lds {
        #[serde(default = "fifty")]
        max_iters: usize,
        #[serde(default = "em_tol")]
        tol: f64,
    },
}

fn five() -> usize {
    5
}

fn fifty() -> usize {
    50
}

fn em_tol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReducerConfig {
    None,
    Pca {
        k: usize,
    },
    Mrmr {
        k: usize,
        #[serde(default = "half")]
        spread: f64,
    },
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

fn total() -> String {
    "total".into()
}

/// Everything that determines a trained model, given the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Band to keep, or `total` for all bands.
    #[serde(default = "total")]
    pub band: String,
    #[serde(default = "default_smoothing")]
    pub smoothing: SmoothingConfig,
    /// z-score features with training means and deviations.
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default = "default_reducer")]
    pub reducer: ReducerConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    /// Score trials by majority vote instead of per window.
    #[serde(default)]
    pub trial_majority: bool,
}

fn default_smoothing() -> SmoothingConfig {
    SmoothingConfig::Lds {
        max_iters: 50,
        tol: 1e-4,
    }
}

fn default_reducer() -> ReducerConfig {
    ReducerConfig::None
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            band: total(),
            smoothing: default_smoothing(),
            standardize: true,
            reducer: ReducerConfig::None,
            classifier: ClassifierConfig::default(),
            trial_majority: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedReducer {
    None,
    Pca(PcaModel),
    Select(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub config: ModelConfig,
    /// Column descriptors after band selection, for input validation.
    pub input_columns: Vec<String>,
    pub lds: Option<LdsParams>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub reducer: FittedReducer,
    pub classifier: TrainedClassifier,
}

fn smooth_with(cfg: &SmoothingConfig, lds: Option<&LdsParams>, t: &FeatureTensor) -> Result<FeatureTensor> {
    match cfg {
        SmoothingConfig::None => Ok(t.clone()),
        SmoothingConfig::MovingAverage { window } => Ok(moving_average(t, *window)),
        SmoothingConfig::Lds { .. } => lds_smooth(t, lds.expect("fitted LDS parameters")),
    }
}

/// Stacks the windows of several trials; returns rows and per-row labels.
pub fn stack_rows(trials: &[FeatureTensor]) -> Result<(DMatrix<f64>, Vec<i64>)> {
    let refs: Vec<&FeatureTensor> = trials.iter().collect();
    let d = refs.first().map_or(0, |t| t.dim());
    if refs.iter().any(|t| t.dim() != d) {
        return Err(Error::ShapeMismatch("trials have different feature counts".into()));
    }
    let n: usize = refs.iter().map(|t| t.windows()).sum();
    let mut x = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let mut r = 0;
    for t in refs {
        x.rows_mut(r, t.windows()).copy_from(&t.values);
        labels.extend(std::iter::repeat_n(t.meta.label, t.windows()));
        r += t.windows();
    }
    Ok((x, labels))
}

impl TrainedPipeline {
    /// Fits every stage on `train` only. `class_labels` fixes the class list
    /// (so that folds missing a class still share one output space).
    pub fn fit(train: &[&FeatureTensor], config: &ModelConfig, class_labels: &[i64]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InsufficientData("no training trials".into()));
        }
        let sliced = train
            .iter()
            .map(|t| band_slice(t, &config.band))
            .collect::<Result<Vec<_>>>()?;
        let input_columns: Vec<String> = sliced[0].columns.iter().map(|c| c.to_string()).collect();
        let lds = match &config.smoothing {
            SmoothingConfig::Lds { max_iters, tol } => {
                let refs: Vec<&FeatureTensor> = sliced.iter().collect();
                let fit = fit_lds_multi(
                    &refs,
                    EmOptions {
                        max_iters: *max_iters,
                        tol: *tol,
                    },
                )?;
                Some(fit.params)
            }
            _ => None,
        };
        let smoothed = sliced
            .iter()
            .map(|t| smooth_with(&config.smoothing, lds.as_ref(), t))
            .collect::<Result<Vec<_>>>()?;
        let (mut x, labels) = stack_rows(&smoothed)?;

        let d = x.ncols();
        let (means, scales) = if config.standardize {
            let n = x.nrows() as f64;
            let means: Vec<f64> = (0..d).map(|c| x.column(c).sum() / n).collect();
            let scales: Vec<f64> = (0..d)
                .map(|c| {
                    let var = x.column(c).iter().map(|v| (v - means[c]).powi(2)).sum::<f64>() / n;
                    if var > 0.0 {
                        var.sqrt()
                    } else {
                        1.0
                    }
                })
                .collect();
            (means, scales)
        } else {
            (vec![0.0; d], vec![1.0; d])
        };
        standardize_in_place(&mut x, &means, &scales);

        let reducer = match &config.reducer {
            ReducerConfig::None => FittedReducer::None,
            ReducerConfig::Pca { k } => FittedReducer::Pca(pca_fit(&x, *k)?),
            ReducerConfig::Mrmr { k, spread } => FittedReducer::Select(
                mrmr_order(&x, &labels, *k, Discretizer { spread: *spread })?
                    .into_iter()
                    .map(|(j, _)| j)
                    .collect(),
            ),
        };
        let x = apply_reducer(&reducer, &x)?;
        let set = LabeledSet::with_classes(x, &labels, class_labels.to_vec())?;
        let classifier = TrainedClassifier::train(&config.classifier, &set)?;
        Ok(TrainedPipeline {
            config: config.clone(),
            input_columns,
            lds,
            means,
            scales,
            reducer,
            classifier,
        })
    }

    /// Rows ready for the classifier.
    pub fn transform(&self, trial: &FeatureTensor) -> Result<DMatrix<f64>> {
        let sliced = band_slice(trial, &self.config.band)?;
        if sliced.dim() != self.input_columns.len()
            || sliced
                .columns
                .iter()
                .zip(&self.input_columns)
                .any(|(c, s)| c.to_string() != *s)
        {
            return Err(Error::ShapeMismatch(format!(
                "trial {} does not have the training feature columns",
                trial.meta.trial_id
            )));
        }
        let smoothed = smooth_with(&self.config.smoothing, self.lds.as_ref(), &sliced)?;
        let mut x = smoothed.values;
        standardize_in_place(&mut x, &self.means, &self.scales);
        apply_reducer(&self.reducer, &x)
    }

    /// Predicted label value per window.
    pub fn predict_windows(&self, trial: &FeatureTensor) -> Result<Vec<i64>> {
        let x = self.transform(trial)?;
        let labels = self.classifier.class_labels();
        Ok(self
            .classifier
            .predict(&x)?
            .into_iter()
            .map(|c| labels[c])
            .collect())
    }

    /// Majority label over a trial's windows (smallest label on ties).
    pub fn predict_trial(&self, trial: &FeatureTensor) -> Result<i64> {
        let windows = self.predict_windows(trial)?;
        Ok(majority(&windows))
    }
}

pub fn majority(labels: &[i64]) -> i64 {
    let mut sorted = labels.to_vec();
    sorted.sort();
    let mut best = (0usize, i64::MAX);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        if j > best.0 {
            best = (j, sorted[i]);
        }
        i += j;
    }
    best.1
}

fn standardize_in_place(x: &mut DMatrix<f64>, means: &[f64], scales: &[f64]) {
    for c in 0..x.ncols() {
        let (m, s) = (means[c], scales[c]);
        x.column_mut(c).apply(|v| *v = (*v - m) / s);
    }
}

fn apply_reducer(r: &FittedReducer, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match r {
        FittedReducer::None => Ok(x.clone()),
        FittedReducer::Pca(m) => pca_transform(m, x),
        FittedReducer::Select(idx) => Ok(x.select_columns(idx)),
    }
}
