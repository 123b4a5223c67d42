use nalgebra::DMatrix;

use super::LabeledSet;
use crate::error::{Error, Result};

/// k-nearest-neighbour vote under Euclidean distance. Equal distances are
/// broken by training-row index, equal votes by the smaller class index.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub x: DMatrix<f64>,
    pub y: Vec<usize>,
    pub class_labels: Vec<i64>,
}

pub fn knn_train(set: &LabeledSet, k: usize) -> Result<KnnModel> {
    if set.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if k == 0 || k > set.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside 1..={}",
            set.len()
        )));
    }
    Ok(KnnModel {
        k,
        x: set.x.clone(),
        y: set.y.clone(),
        class_labels: set.class_labels.clone(),
    })
}

pub fn knn_predict(model: &KnnModel, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    if x.ncols() != model.x.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} features, got {}",
            model.x.ncols(),
            x.ncols()
        )));
    }
    let n = model.x.nrows();
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut votes = vec![0usize; model.class_labels.len()];
    Ok((0..x.nrows())
        .map(|q| {
            dist.clear();
            for i in 0..n {
                let d: f64 = (0..x.ncols())
                    .map(|j| (x[(q, j)] - model.x[(i, j)]).powi(2))
                    .sum();
                dist.push((d, i));
            }
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            votes.iter_mut().for_each(|v| *v = 0);
            for &(_, i) in &dist[..model.k] {
                votes[model.y[i]] += 1;
            }
            let mut best = 0;
            for c in 1..votes.len() {
                if votes[c] > votes[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}
