//! Multinomial logistic regression fitted by L-BFGS on the penalized
//! negative log-likelihood (per-sample mean, L2 on weights, bias unpenalized).

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::{argmax_rows, LabeledSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    /// D x classes
    pub weights: DMatrix<f64>,
    pub bias: Vec<f64>,
    pub l2: f64,
    pub class_labels: Vec<i64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub history: usize,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        LogRegOptions {
            max_iters: 2000,
            grad_tol: 1e-6,
            history: 10,
        }
    }
}

/// Parameter vector layout: `D x C` weights column-major, then `C` biases.
fn unpack(theta: &DVector<f64>, d: usize, c: usize) -> (DMatrix<f64>, DVector<f64>) {
    let w = DMatrix::from_column_slice(d, c, &theta.as_slice()[..d * c]);
    let b = DVector::from_column_slice(&theta.as_slice()[d * c..]);
    (w, b)
}

fn softmax_rows(z: &mut DMatrix<f64>) {
    for r in 0..z.nrows() {
        let max = z.row(r).max();
        let mut sum = 0.0;
        for c in 0..z.ncols() {
            let e = (z[(r, c)] - max).exp();
            z[(r, c)] = e;
            sum += e;
        }
        for c in 0..z.ncols() {
            z[(r, c)] /= sum;
        }
    }
}

/// Objective and gradient at the packed parameter vector `theta`.
pub fn logreg_objective(
    theta: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &[usize],
    n_classes: usize,
    l2: f64,
) -> (f64, DVector<f64>) {
    let (n, d) = x.shape();
    let (w, b) = unpack(theta, d, n_classes);
    let mut z = x * &w;
    for r in 0..n {
        for c in 0..n_classes {
            z[(r, c)] += b[c];
        }
    }
    let mut nll = 0.0;
    for r in 0..n {
        let max = z.row(r).max();
        let lse = max + z.row(r).iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        nll += lse - z[(r, y[r])];
    }
    softmax_rows(&mut z);
    for (r, &yr) in y.iter().enumerate() {
        z[(r, yr)] -= 1.0;
    }
    let inv_n = 1.0 / n as f64;
    let gw = x.transpose() * &z * inv_n + &w * l2;
    let gb: Vec<f64> = (0..n_classes).map(|c| z.column(c).sum() * inv_n).collect();
    let f = nll * inv_n + 0.5 * l2 * w.norm_squared();
    let mut g = DVector::zeros(d * n_classes + n_classes);
    g.as_mut_slice()[..d * n_classes].copy_from_slice(gw.as_slice());
    g.as_mut_slice()[d * n_classes..].copy_from_slice(&gb);
    (f, g)
}

pub fn logreg_train(set: &LabeledSet, l2: f64, opts: LogRegOptions) -> Result<LogRegModel> {
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::InvalidParameter(format!("l2 = {l2} must be >= 0")));
    }
    if set.len() < set.n_classes() {
        return Err(Error::InsufficientData(format!(
            "{} samples for {} classes",
            set.len(),
            set.n_classes()
        )));
    }
    let (d, c) = (set.dim(), set.n_classes());
    let eval = |t: &DVector<f64>| logreg_objective(t, &set.x, &set.y, c, l2);
    let mut theta = DVector::zeros(d * c + c);
    let (mut f, mut g) = eval(&theta);
    let mut mem: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    while g.norm() >= opts.grad_tol && iterations < opts.max_iters {
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, yv, rho) in mem.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, yv, 1.0);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = mem.back() {
            q *= s.dot(yv) / yv.dot(yv);
        } else {
            q *= 1.0 / g.norm().max(1.0);
        }
        for ((s, yv, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * yv.dot(&q);
            q.axpy(a - beta, s, 1.0);
        }
        let mut dir = -q;
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            mem.clear();
            dir = -g.clone();
            slope = -g.norm_squared();
        }
        // backtracking Armijo search
        let mut step = 1.0;
        let (mut f_new, mut g_new, mut theta_new);
        loop {
            theta_new = &theta + &dir * step;
            (f_new, g_new) = eval(&theta_new);
            if f_new <= f + 1e-4 * step * slope || step < 1e-20 {
                break;
            }
            step *= 0.5;
        }
        let s = &theta_new - &theta;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            mem.push_back((s, yv, 1.0 / sy));
            if mem.len() > opts.history {
                mem.pop_front();
            }
        }
        let stalled = f - f_new <= f64::EPSILON * f.abs() && step < 1e-20;
        theta = theta_new;
        f = f_new;
        g = g_new;
        if stalled {
            break;
        }
    }
    let grad_norm = g.norm();
    if grad_norm >= opts.grad_tol {
        return Err(Error::NotConverged {
            iterations,
            grad_norm,
        });
    }
    let (weights, bias) = unpack(&theta, d, c);
    Ok(LogRegModel {
        weights,
        bias: bias.iter().copied().collect(),
        l2,
        class_labels: set.class_labels.clone(),
        iterations,
        grad_norm,
    })
}

/// Class indices and class probabilities.
pub fn logreg_predict(model: &LogRegModel, x: &DMatrix<f64>) -> Result<(Vec<usize>, DMatrix<f64>)> {
    if x.ncols() != model.weights.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} features, got {}",
            model.weights.nrows(),
            x.ncols()
        )));
    }
    let mut z = x * &model.weights;
    for r in 0..z.nrows() {
        for (c, b) in model.bias.iter().enumerate() {
            z[(r, c)] += b;
        }
    }
    softmax_rows(&mut z);
    Ok((argmax_rows(&z), z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::testdata::blobs;

    #[test]
    fn separable_line_fits_exactly() {
        let x = DMatrix::from_column_slice(8, 1, &[-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0]);
        let set = LabeledSet::new(x, &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        let m = logreg_train(&set, 0.01, LogRegOptions::default()).unwrap();
        assert!(m.weights.iter().all(|v| v.is_finite()));
        assert_eq!(logreg_predict(&m, &set.x).unwrap().0, set.y);
        assert!(m.grad_norm < 1e-6);
    }

    #[test]
    fn permuted_rows_give_same_model() {
        let set = blobs(&[vec![0.0, 0.0], vec![1.5, 0.0], vec![0.0, 1.5]], 20, 1.0, 4);
        let a = logreg_train(&set, 0.1, LogRegOptions::default()).unwrap();
        let perm: Vec<usize> = (0..set.len()).rev().collect();
        let labels: Vec<i64> = perm.iter().map(|&i| set.y[i] as i64).collect();
        let shuffled = LabeledSet::new(set.x.select_rows(&perm), &labels).unwrap();
        let b = logreg_train(&shuffled, 0.1, LogRegOptions::default()).unwrap();
        assert!((&a.weights - &b.weights).amax() < 1e-6);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let set = blobs(&[vec![0.0], vec![2.0]], 10, 1.0, 1);
        let m = logreg_train(&set, 1.0, LogRegOptions::default()).unwrap();
        let (_, p) = logreg_predict(&m, &set.x).unwrap();
        for r in 0..p.nrows() {
            assert!((p.row(r).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let set = blobs(&[vec![0.0, 0.0], vec![1.0, 1.0]], 10, 1.0, 2);
        let opts = LogRegOptions {
            max_iters: 1,
            ..LogRegOptions::default()
        };
        assert!(matches!(
            logreg_train(&set, 0.1, opts),
            Err(Error::NotConverged { iterations: 1, .. })
        ));
    }
}
