//! Graph-regularized extreme learning machine.
//!
//! The hidden layer is a fixed random sigmoid projection. With hidden
//! outputs stacked as columns, `H` is `hidden x N`, and the output weights
//! `beta` (`hidden x classes`) minimize
//!
//! ```text
//! ||H^T beta - T||^2 + lambda1 * tr(beta^T H L H^T beta) + lambda2 * ||beta||^2
//! ```
//!
//! where `T` is the one-hot target matrix and `L = D - W` the Laplacian of
//! the class-block graph (`W_ij = 1/N_t` when samples `i` and `j` both belong
//! to class `t`). The minimizer is
//! `beta = (H H^T + lambda1 H L H^T + lambda2 I)^-1 H T`.
//!
//! When `hidden > N` the same solution is computed in sample space via
//! `(H M H^T + lambda2 I)^-1 H = H (M H^T H + lambda2 I)^-1` with
//! `M = I + lambda1 L`, which is an `N x N` solve.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax_rows, LabeledSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GelmModel {
    /// hidden x D
    pub input_weights: DMatrix<f64>,
    pub biases: Vec<f64>,
    /// hidden x classes
    pub beta: DMatrix<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seed: u64,
    pub class_labels: Vec<i64>,
}

impl GelmModel {
    pub fn hidden(&self) -> usize {
        self.biases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.ncols()
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Uniform(-1, 1) input weights and biases drawn from `seed`.
pub fn random_layer(hidden: usize, dim: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DMatrix::from_fn(hidden, dim, |_, _| rng.random_range(-1.0..1.0));
    let b = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
    (w, b)
}

/// Hidden-layer outputs, `hidden x N` (one column per row of `x`).
pub fn hidden_outputs(weights: &DMatrix<f64>, biases: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut h = weights * x.transpose();
    for (r, b) in biases.iter().enumerate() {
        h.row_mut(r).apply(|v| *v = sigmoid(*v + b));
    }
    h
}

/// Laplacian `D - W` of the class-block adjacency, `D` holding the column sums of `W`.
pub fn graph_laplacian(y: &[usize], n_classes: usize) -> DMatrix<f64> {
    let n = y.len();
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if y[i] == y[j] {
                l[(i, j)] = -1.0 / counts[y[i]] as f64;
            }
        }
    }
    for j in 0..n {
        let col_sum: f64 = -l.column(j).sum();
        l[(j, j)] += col_sum;
    }
    l
}

/// Value of the training objective at `beta`.
pub fn gelm_objective(
    h: &DMatrix<f64>,
    t: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let out = h.transpose() * beta;
    let fit = (&out - t).norm_squared();
    let graph = (out.transpose() * laplacian * &out).trace();
    fit + lambda1 * graph + lambda2 * beta.norm_squared()
}

/// Closed-form output weights for fixed hidden outputs.
pub fn solve_output_weights(
    h: &DMatrix<f64>,
    t: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
) -> Result<DMatrix<f64>> {
    let (hidden, n) = h.shape();
    let mut m = laplacian * lambda1;
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    if hidden <= n {
        let mut a = h * &m * h.transpose();
        // symmetrize against rounding before the Cholesky factorization
        a = (&a + a.transpose()) * 0.5;
        for i in 0..hidden {
            a[(i, i)] += lambda2;
        }
        let rhs = h * t;
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("hidden-space system is not positive definite".into()))?;
        Ok(chol.solve(&rhs))
    } else {
        let gram = h.transpose() * h;
        let mut a = &m * gram;
        for i in 0..n {
            a[(i, i)] += lambda2;
        }
        let alpha = a
            .lu()
            .solve(t)
            .ok_or_else(|| Error::SingularSystem("sample-space system is singular".into()))?;
        Ok(h * alpha)
    }
}

pub fn gelm_train(
    set: &LabeledSet,
    lambda1: f64,
    lambda2: f64,
    hidden: usize,
    seed: u64,
) -> Result<GelmModel> {
    if !(lambda2 > 0.0 && lambda2.is_finite()) || !(lambda1 >= 0.0 && lambda1.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need lambda1 >= 0 and lambda2 > 0, got {lambda1}, {lambda2}"
        )));
    }
    if hidden == 0 {
        return Err(Error::InvalidParameter("hidden layer must be non-empty".into()));
    }
    if set.len() < set.n_classes() {
        return Err(Error::InsufficientData(format!(
            "{} samples for {} classes",
            set.len(),
            set.n_classes()
        )));
    }
    if let Some(c) = set.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }
    let (input_weights, biases) = random_layer(hidden, set.dim(), seed);
    let h = hidden_outputs(&input_weights, &biases, &set.x);
    let lap = graph_laplacian(&set.y, set.n_classes());
    let beta = solve_output_weights(&h, &set.one_hot(), &lap, lambda1, lambda2)?;
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("non-finite output weights".into()));
    }
    Ok(GelmModel {
        input_weights,
        biases,
        beta,
        lambda1,
        lambda2,
        seed,
        class_labels: set.class_labels.clone(),
    })
}

/// Class indices and the `N x classes` output scores.
pub fn gelm_predict(model: &GelmModel, x: &DMatrix<f64>) -> Result<(Vec<usize>, DMatrix<f64>)> {
    if x.ncols() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} features, got {}",
            model.input_dim(),
            x.ncols()
        )));
    }
    let h = hidden_outputs(&model.input_weights, &model.biases, x);
    let scores = h.transpose() * &model.beta;
    Ok((argmax_rows(&scores), scores))
}
