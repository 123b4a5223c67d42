//! Evaluation protocols over per-trial feature tensors.
//!
//! Every protocol cell fits a fresh [`TrainedPipeline`] on its training
//! trials only and scores the held-out trials window by window (or by trial
//! majority when configured). Cells run in parallel on the current rayon
//! pool; the report is assembled in cell order.

mod anova;
mod pipeline;
mod report;
mod topo;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::FeatureTensor;

pub use anova::one_way_anova;
pub use pipeline::{
    majority, stack_rows, FittedReducer, ModelConfig, ReducerConfig, SmoothingConfig,
    TrainedPipeline,
};
pub use report::{CellResult, EvalReport};
pub use topo::{export_topo_grid, TopoGrid, TopoMap};

/// Distinct labels in ascending order.
pub fn label_set(trials: &[FeatureTensor]) -> Vec<i64> {
    trials
        .iter()
        .map(|t| t.meta.label)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Fold id per trial. Trials of each class are shuffled and dealt round-robin,
/// continuing the deal across classes so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[i64], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k}, need at least 2 folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in labels.iter().collect::<BTreeSet<_>>() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == *class).collect();
        if members.len() < k {
            return Err(Error::InsufficientData(format!(
                "class {class} has {} trials, {k}-fold needs at least {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

/// Fits on `trials[train]`, scores `trials[test]`. The fitted pipeline never
/// sees a test trial.
pub fn evaluate_split(
    trials: &[FeatureTensor],
    train: &[usize],
    test: &[usize],
    config: &ModelConfig,
    class_labels: &[i64],
) -> Result<(TrainedPipeline, CellResult)> {
    let train_refs: Vec<&FeatureTensor> = train.iter().map(|&i| &trials[i]).collect();
    let model = TrainedPipeline::fit(&train_refs, config, class_labels)?;
    let test_refs: Vec<&FeatureTensor> = test.iter().map(|&i| &trials[i]).collect();
    let cell = score(&model, &test_refs, class_labels)?;
    Ok((model, cell))
}

/// Confusion counts (rows: true class, columns: predicted) on `test`.
pub fn score(model: &TrainedPipeline, test: &[&FeatureTensor], class_labels: &[i64]) -> Result<CellResult> {
    let c = class_labels.len();
    let mut confusion = vec![vec![0usize; c]; c];
    let index = |l: i64| {
        class_labels
            .binary_search(&l)
            .map_err(|_| Error::LabelMismatch(format!("label {l} absent from training classes")))
    };
    for t in test {
        let truth = index(t.meta.label)?;
        if model.config.trial_majority {
            confusion[truth][index(model.predict_trial(t)?)?] += 1;
        } else {
            for p in model.predict_windows(t)? {
                confusion[truth][index(p)?] += 1;
            }
        }
    }
    Ok(CellResult::from_confusion(confusion))
}

fn kfold_cells(
    trials: &[FeatureTensor],
    config: &ModelConfig,
    k: usize,
    seed: u64,
    class_labels: &[i64],
) -> Result<Vec<CellResult>> {
    let labels: Vec<i64> = trials.iter().map(|t| t.meta.label).collect();
    let folds = stratified_folds(&labels, k, seed)?;
    (0..k)
        .into_par_iter()
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..trials.len()).partition(|&i| folds[i] == f);
            let (_, cell) = evaluate_split(trials, &train, &test, config, class_labels)?;
            Ok(cell.named(format!("folds != {}", f + 1), format!("fold {}", f + 1)))
        })
        .collect()
}

/// Stratified, trial-level k-fold cross-validation.
pub fn kfold_cv(trials: &[FeatureTensor], config: &ModelConfig, k: usize, seed: u64) -> Result<EvalReport> {
    let classes = label_set(trials);
    let cells = kfold_cells(trials, config, k, seed, &classes)?;
    let accs: Vec<f64> = cells.iter().map(|c| c.accuracy).collect();
    Ok(EvalReport::new("kfold", config, seed, k, classes, cells, &accs, None))
}

/// S x S grid: diagonal cells are within-session k-fold (pooled confusion,
/// fold deviation), off-diagonal cells train on all of session i and test on
/// all of session j.
pub fn cross_session_matrix(
    sessions: &[Vec<FeatureTensor>],
    config: &ModelConfig,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    if sessions.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "cross-session evaluation needs at least 2 sessions, got {}",
            sessions.len()
        )));
    }
    let classes = label_set(&sessions[0]);
    for (s, trials) in sessions.iter().enumerate() {
        let own = label_set(trials);
        if own != classes {
            return Err(Error::LabelMismatch(format!(
                "session {} has labels {own:?}, session 1 has {classes:?}",
                s + 1
            )));
        }
    }
    let n = sessions.len();
    let cells = (0..n * n)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / n, ij % n);
            let name = |s: usize| session_name(&sessions[s], s);
            if i == j {
                let folds = kfold_cells(&sessions[i], config, k, seed, &classes)?;
                let accs: Vec<f64> = folds.iter().map(|c| c.accuracy).collect();
                Ok(CellResult::pooled(&folds)
                    .named(name(i), name(j))
                    .with_std(report::std_dev(&accs)))
            } else {
                let train: Vec<&FeatureTensor> = sessions[i].iter().collect();
                let model = TrainedPipeline::fit(&train, config, &classes)?;
                let test: Vec<&FeatureTensor> = sessions[j].iter().collect();
                Ok(score(&model, &test, &classes)?.named(name(i), name(j)))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let grid: Vec<Vec<f64>> = cells.chunks(n).map(|r| r.iter().map(|c| c.accuracy).collect()).collect();
    let diag: Vec<f64> = (0..n).map(|i| grid[i][i]).collect();
    Ok(EvalReport::new("cross_session", config, seed, k, classes, cells, &diag, Some(grid)))
}

fn session_name(trials: &[FeatureTensor], index: usize) -> String {
    match trials.first() {
        Some(t) if !t.meta.session_id.is_empty() => t.meta.session_id.clone(),
        _ => format!("session{}", index + 1),
    }
}

/// Trains on all subjects but one and tests on the held-out subject.
pub fn leave_one_subject_out(subjects: &[Vec<FeatureTensor>], config: &ModelConfig) -> Result<EvalReport> {
    if subjects.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    let classes = label_set(&subjects.concat());
    let cells = (0..subjects.len())
        .into_par_iter()
        .map(|held| {
            let train: Vec<&FeatureTensor> = subjects
                .iter()
                .enumerate()
                .filter(|&(s, _)| s != held)
                .flat_map(|(_, t)| t.iter())
                .collect();
            let model = TrainedPipeline::fit(&train, config, &classes)?;
            let test: Vec<&FeatureTensor> = subjects[held].iter().collect();
            let name = match subjects[held].first() {
                Some(t) if !t.meta.subject_id.is_empty() => t.meta.subject_id.clone(),
                _ => format!("subject{}", held + 1),
            };
            Ok(score(&model, &test, &classes)?.named(format!("all but {name}"), name))
        })
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<f64> = cells.iter().map(|c| c.accuracy).collect();
    Ok(EvalReport::new("loso", config, 0, 0, classes, cells, &accs, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ClassifierConfig;
    use crate::tensor::{ColumnDescriptor, FeatureKind, TrialMeta};
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, Normal};

    /// `per_class` trials per label, 8 windows x 4 DE columns, class means
    /// `shift * label` in the first column.
    fn toy(per_class: usize, shift: f64, seed: u64, session: &str) -> Vec<FeatureTensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let columns: Vec<ColumnDescriptor> = (0..4)
            .map(|c| ColumnDescriptor::new(FeatureKind::De, format!("C{c}"), "alpha"))
            .collect();
        let mut out = Vec::new();
        for label in 0..3i64 {
            for k in 0..per_class {
                let v = DMatrix::from_fn(8, 4, |_, c| {
                    noise.sample(&mut rng) + if c < 2 { shift * label as f64 } else { 0.0 }
                });
                let meta = TrialMeta {
                    subject_id: "s1".into(),
                    session_id: session.into(),
                    trial_id: format!("c{label}_t{k:03}"),
                    label,
                };
                out.push(FeatureTensor::new(v, columns.clone(), 1.0, meta).unwrap());
            }
        }
        out
    }

    fn quick() -> ModelConfig {
        ModelConfig {
            smoothing: SmoothingConfig::None,
            classifier: ClassifierConfig::Knn { k: 5 },
            ..ModelConfig::default()
        }
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<i64> = (0..30).map(|i| i % 3).collect();
        let a = stratified_folds(&labels, 5, 9).unwrap();
        assert_eq!(a, stratified_folds(&labels, 5, 9).unwrap());
        assert_ne!(a, stratified_folds(&labels, 5, 10).unwrap());
        for f in 0..5 {
            for c in 0..3 {
                let n = (0..30).filter(|&i| a[i] == f && labels[i] == c).count();
                assert_eq!(n, 2);
            }
        }
        assert!(stratified_folds(&[0, 0, 0, 1, 1, 1, 1, 1], 5, 0).is_err());
    }

    #[test]
    fn separable_set_scores_perfectly() {
        let trials = toy(10, 50.0, 1, "a");
        let r = kfold_cv(&trials, &quick(), 5, 3).unwrap();
        assert_eq!(r.cells.len(), 5);
        assert_eq!(r.mean_accuracy, 100.0);
        assert_eq!(r.std_accuracy, 0.0);
    }

    #[test]
    fn report_is_deterministic_and_consistent() {
        let trials = toy(6, 1.0, 2, "a");
        let cfg = ModelConfig {
            smoothing: SmoothingConfig::Lds { max_iters: 10, tol: 1e-4 },
            ..ModelConfig::default()
        };
        let a = kfold_cv(&trials, &cfg, 3, 5).unwrap();
        let b = kfold_cv(&trials, &cfg, 3, 5).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_table(), b.to_table());
        for c in &a.cells {
            let trace: usize = (0..3).map(|i| c.confusion[i][i]).sum();
            let total: usize = c.confusion.iter().flatten().sum();
            assert_eq!(c.accuracy, 100.0 * trace as f64 / total as f64);
            assert!((0.0..=100.0).contains(&c.accuracy));
        }
    }

    #[test]
    fn test_labels_do_not_reach_the_fit() {
        let trials = toy(6, 1.0, 4, "a");
        let labels: Vec<i64> = trials.iter().map(|t| t.meta.label).collect();
        let folds = stratified_folds(&labels, 3, 0).unwrap();
        let (test, train): (Vec<usize>, Vec<usize>) = (0..trials.len()).partition(|&i| folds[i] == 0);
        let mut corrupted = trials.clone();
        for &i in &test {
            corrupted[i].meta.label = (corrupted[i].meta.label + 1) % 3;
        }
        let cfg = ModelConfig {
            reducer: ReducerConfig::Mrmr { k: 2, spread: 0.5 },
            ..ModelConfig::default()
        };
        let (a, _) = evaluate_split(&trials, &train, &test, &cfg, &[0, 1, 2]).unwrap();
        let (b, _) = evaluate_split(&corrupted, &train, &test, &cfg, &[0, 1, 2]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trial_majority_counts_trials() {
        let trials = toy(5, 50.0, 6, "a");
        let cfg = ModelConfig {
            trial_majority: true,
            ..quick()
        };
        let r = kfold_cv(&trials, &cfg, 5, 0).unwrap();
        let total: usize = r.cells.iter().flat_map(|c| c.confusion.iter().flatten()).sum();
        assert_eq!(total, 15);
    }

    #[test]
    fn cross_session_grid() {
        let s1 = toy(5, 50.0, 1, "s1");
        let r = cross_session_matrix(&[s1.clone(), s1.clone(), s1.clone()], &quick(), 5, 0).unwrap();
        let grid = r.grid.as_ref().unwrap();
        assert_eq!(grid.len(), 3);
        assert!(grid.iter().flatten().all(|&a| a == 100.0));
        assert!(cross_session_matrix(std::slice::from_ref(&s1), &quick(), 5, 0).is_err());
        let mut other = toy(5, 50.0, 2, "s2");
        other.retain(|t| t.meta.label != 2);
        assert!(matches!(
            cross_session_matrix(&[s1, other], &quick(), 5, 0),
            Err(Error::LabelMismatch(_))
        ));
    }

    #[test]
    fn identical_sessions_match_training_accuracy() {
        let s = toy(5, 1.0, 3, "s");
        let r = cross_session_matrix(&[s.clone(), s.clone()], &quick(), 5, 0).unwrap();
        let model = TrainedPipeline::fit(&s.iter().collect::<Vec<_>>(), &quick(), &[0, 1, 2]).unwrap();
        let train_acc = score(&model, &s.iter().collect::<Vec<_>>(), &[0, 1, 2]).unwrap().accuracy;
        let grid = r.grid.unwrap();
        assert_eq!(grid[0][1], train_acc);
        assert_eq!(grid[1][0], train_acc);
    }

    #[test]
    fn loso_on_shared_generator() {
        let subjects: Vec<Vec<FeatureTensor>> = (0..3).map(|s| toy(5, 3.0, 10 + s, "a")).collect();
        let r = leave_one_subject_out(&subjects, &quick()).unwrap();
        assert_eq!(r.cells.len(), 3);
        let pooled = kfold_cv(&subjects.concat(), &quick(), 5, 0).unwrap();
        assert!((r.mean_accuracy - pooled.mean_accuracy).abs() < 5.0);
        assert!(leave_one_subject_out(&subjects[..1], &quick()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn folds_are_balanced_per_class(
            counts in proptest::collection::vec(3usize..20, 1..4),
            k in 2usize..4,
            seed in 0u64..1000,
        ) {
            let labels: Vec<i64> = counts
                .iter()
                .enumerate()
                .flat_map(|(c, &n)| std::iter::repeat_n(c as i64, n))
                .collect();
            let folds = stratified_folds(&labels, k, seed).unwrap();
            proptest::prop_assert_eq!(&folds, &stratified_folds(&labels, k, seed).unwrap());
            for (c, &n) in counts.iter().enumerate() {
                let mut per = vec![0usize; k];
                for (i, &l) in labels.iter().enumerate() {
                    if l == c as i64 {
                        per[folds[i]] += 1;
                    }
                }
                let (lo, hi) = (*per.iter().min().unwrap(), *per.iter().max().unwrap());
                proptest::prop_assert!(hi - lo <= 1, "{:?}", per);
                proptest::prop_assert_eq!(per.iter().sum::<usize>(), n);
            }
        }
    }
}
