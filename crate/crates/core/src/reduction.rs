//! Dimensionality reduction: PCA, MRMR selection and correlation ranking.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ColumnDescriptor, FeatureTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: Vec<f64>,
    /// D x k, orthonormal columns in decreasing-variance order.
    pub loadings: DMatrix<f64>,
    /// Covariance eigenvalues (ddof = 1), all D of them, decreasing.
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.loadings.ncols()
    }
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(x.ncols(), |c, _| x.column(c).mean())
}

fn centered(x: &DMatrix<f64>, means: &[f64]) -> DMatrix<f64> {
    let mut c = x.clone();
    for (j, m) in means.iter().enumerate() {
        c.column_mut(j).add_scalar_mut(-m);
    }
    c
}

pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if n < 2 || k == 0 || k > d.min(n - 1) {
        return Err(Error::InvalidParameter(format!(
            "PCA k = {k} outside 1..={} for {n} x {d} data",
            d.min(n.saturating_sub(1))
        )));
    }
    let means: Vec<f64> = column_means(x).iter().copied().collect();
    let xc = centered(x, &means);
    let cov = (xc.transpose() * &xc) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut loadings = DMatrix::zeros(d, k);
    for (j, &i) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // sign convention: largest-magnitude entry positive
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        loadings.set_column(j, &v);
    }
    let total: f64 = eigenvalues.iter().sum();
    let explained_ratio = eigenvalues
        .iter()
        .take(k)
        .map(|e| if total > 0.0 { e / total } else { 0.0 })
        .collect();
    Ok(PcaModel {
        means,
        loadings,
        eigenvalues,
        explained_ratio,
    })
}

pub fn pca_transform(model: &PcaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.means.len() {
        return Err(Error::ShapeMismatch(format!(
            "PCA fitted on {} columns, got {}",
            model.means.len(),
            x.ncols()
        )));
    }
    Ok(centered(x, &model.means) * &model.loadings)
}

pub fn pca_inverse(model: &PcaModel, z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = z * model.loadings.transpose();
    for (j, m) in model.means.iter().enumerate() {
        x.column_mut(j).add_scalar_mut(*m);
    }
    x
}

/// Squared reconstruction error divided by `n - 1`, comparable to the sum of
/// discarded eigenvalues on the training data.
pub fn reconstruction_error(model: &PcaModel, x: &DMatrix<f64>) -> Result<f64> {
    let z = pca_transform(model, x)?;
    let back = pca_inverse(model, &z);
    Ok((x - back).norm_squared() / (x.nrows() as f64 - 1.0))
}

/// Three-level discretization at `mean +- spread * std` per column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub spread: f64,
}

impl Default for Discretizer {
    fn default() -> Self {
        Discretizer { spread: 0.5 }
    }
}

impl Discretizer {
    pub fn apply(&self, column: &[f64]) -> Vec<usize> {
        let n = column.len() as f64;
        let mean = column.iter().sum::<f64>() / n;
        let std = (column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let (lo, hi) = (mean - self.spread * std, mean + self.spread * std);
        column
            .iter()
            .map(|&v| {
                if v < lo {
                    0
                } else if v > hi {
                    2
                } else {
                    1
                }
            })
            .collect()
    }
}

/// Plug-in mutual information of two discrete sequences, in nats.
pub fn mutual_information(xs: &[usize], ys: &[usize]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch(format!(
            "sequences of length {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.is_empty() {
        return Ok(0.0);
    }
    let nx = xs.iter().max().unwrap() + 1;
    let ny = ys.iter().max().unwrap() + 1;
    let mut joint = vec![0usize; nx * ny];
    let mut px = vec![0usize; nx];
    let mut py = vec![0usize; ny];
    for (&x, &y) in xs.iter().zip(ys) {
        joint[x * ny + y] += 1;
        px[x] += 1;
        py[y] += 1;
    }
    let n = xs.len() as f64;
    let mut mi = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let c = joint[x * ny + y];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (px[x] as f64 * py[y] as f64)).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Maps arbitrary integer labels to dense indices in sorted label order.
pub fn label_indices(labels: &[i64]) -> Vec<usize> {
    let mut distinct: Vec<i64> = labels.to_vec();
    distinct.sort();
    distinct.dedup();
    labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("present"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingMethod {
    Mrmr,
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub index: usize,
    pub descriptor: ColumnDescriptor,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub method: RankingMethod,
    pub entries: Vec<RankedFeature>,
}

impl FeatureRanking {
    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("descriptor,score\n");
        for e in &self.entries {
            out.push_str(&format!("{},{}\n", e.descriptor, e.score));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Greedy incremental MRMR on a raw matrix; returns `(column, criterion)` pairs.
///
/// The first pick maximizes relevance `I(x; c)`; each later pick maximizes
/// `I(x; c) - mean_{s in S} I(x; s)`. Ties go to the lowest column index.
pub fn mrmr_order(
    x: &DMatrix<f64>,
    labels: &[i64],
    k: usize,
    disc: Discretizer,
) -> Result<Vec<(usize, f64)>> {
    let d = x.ncols();
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!("MRMR K = {k} outside 1..={d}")));
    }
    if labels.len() != x.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    let classes = label_indices(labels);
    let levels: Vec<Vec<usize>> = (0..d)
        .map(|c| disc.apply(x.column(c).as_slice()))
        .collect();
    let relevance: Vec<f64> = levels
        .iter()
        .map(|l| mutual_information(l, &classes))
        .collect::<Result<_>>()?;
    let mut redundancy = vec![0.0; d];
    let mut chosen = vec![false; d];
    let mut picks = Vec::with_capacity(k);
    for step in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..d).filter(|&j| !chosen[j]) {
            let score = if step == 0 {
                relevance[j]
            } else {
                relevance[j] - redundancy[j] / step as f64
            };
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let (j, score) = best.expect("candidates remain");
        chosen[j] = true;
        picks.push((j, score));
        for i in (0..d).filter(|&i| !chosen[i]) {
            redundancy[i] += mutual_information(&levels[i], &levels[j])?;
        }
    }
    Ok(picks)
}

pub fn mrmr_select(
    x: &FeatureTensor,
    labels: &[i64],
    k: usize,
    disc: Discretizer,
) -> Result<FeatureRanking> {
    let picks = mrmr_order(&x.values, labels, k, disc)?;
    Ok(FeatureRanking {
        method: RankingMethod::Mrmr,
        entries: picks
            .into_iter()
            .map(|(index, score)| RankedFeature {
                index,
                descriptor: x.columns[index].clone(),
                score,
            })
            .collect(),
    })
}

/// Numeric coding of labels for correlation: 0/1/2 (negative/neutral/
/// positive) map to -1/0/+1; any other label set is used as-is.
pub fn label_code(labels: &[i64]) -> Vec<f64> {
    if labels.iter().all(|l| (0..=2).contains(l)) {
        labels.iter().map(|&l| l as f64 - 1.0).collect()
    } else {
        labels.iter().map(|&l| l as f64).collect()
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Ranks columns by `|pearson(column, label code)|`, ties by index.
pub fn correlation_rank(x: &FeatureTensor, labels: &[i64], top_k: usize) -> Result<FeatureRanking> {
    if top_k > x.dim() {
        return Err(Error::InvalidParameter(format!(
            "top_k {top_k} exceeds {} columns",
            x.dim()
        )));
    }
    if labels.len() != x.windows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            x.windows()
        )));
    }
    let code = label_code(labels);
    let mut scored: Vec<(usize, f64)> = (0..x.dim())
        .map(|c| (c, pearson(x.values.column(c).as_slice(), &code).abs()))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(FeatureRanking {
        method: RankingMethod::Correlation,
        entries: scored
            .into_iter()
            .take(top_k)
            .map(|(index, score)| RankedFeature {
                index,
                descriptor: x.columns[index].clone(),
                score,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{FeatureKind, TrialMeta};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, c| rng.random_range(-1.0..1.0) * (c + 1) as f64)
    }

    fn tensor(values: DMatrix<f64>) -> FeatureTensor {
        let columns = (0..values.ncols())
            .map(|i| ColumnDescriptor::new(FeatureKind::De, format!("E{i}"), "alpha"))
            .collect();
        FeatureTensor::new(values, columns, 1.0, TrialMeta::default()).unwrap()
    }

    #[test]
    fn pca_line_data_reconstructs() {
        let x = DMatrix::from_fn(20, 3, |r, c| (r as f64 - 7.0) * [1.0, -2.0, 0.5][c] + [3.0, 1.0, -4.0][c]);
        let m = pca_fit(&x, 1).unwrap();
        assert!(reconstruction_error(&m, &x).unwrap() <= 1e-8);
        assert_relative_eq!(m.explained_ratio[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pca_error_is_discarded_eigenvalues() {
        let x = random_matrix(50, 6, 1);
        for k in 1..=6 {
            let m = pca_fit(&x, k).unwrap();
            let discarded: f64 = m.eigenvalues[k..].iter().sum();
            let err = reconstruction_error(&m, &x).unwrap();
            assert!((err - discarded).abs() <= 1e-6 * discarded.max(1e-12) + 1e-12, "k={k}");
        }
    }

    #[test]
    fn pca_loadings_orthonormal_and_ratios_sorted() {
        let x = random_matrix(40, 8, 2);
        let m = pca_fit(&x, 5).unwrap();
        let gram = m.loadings.transpose() * &m.loadings;
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-8);
        for w in m.explained_ratio.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let mean = DMatrix::from_row_slice(1, 8, &m.means);
        assert!(pca_transform(&m, &mean).unwrap().amax() < 1e-12);
    }

    #[test]
    fn pca_k_out_of_range() {
        let x = random_matrix(10, 4, 3);
        assert!(pca_fit(&x, 0).is_err());
        assert!(pca_fit(&x, 5).is_err());
        assert!(pca_fit(&random_matrix(3, 4, 3), 3).is_err());
        assert!(pca_transform(&pca_fit(&x, 2).unwrap(), &random_matrix(2, 3, 0)).is_err());
    }

    #[test]
    fn mi_identities() {
        let ys = vec![0, 1, 1, 0, 1, 1, 0, 1];
        let p: f64 = 5.0 / 8.0;
        let h = -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
        assert_relative_eq!(mutual_information(&ys, &ys).unwrap(), h, epsilon = 1e-12);
        assert_eq!(mutual_information(&[1; 8], &ys).unwrap(), 0.0);
        let three: Vec<usize> = (0..30).map(|i| i % 3).collect();
        assert_relative_eq!(mutual_information(&three, &three).unwrap(), 3f64.ln(), epsilon = 1e-12);
        assert!(mutual_information(&[0, 1], &[0]).is_err());
        // factorized joint
        let xs = vec![0, 0, 1, 1];
        let ys = vec![0, 1, 0, 1];
        assert!(mutual_information(&xs, &ys).unwrap().abs() < 1e-15);
    }

    #[test]
    fn discretizer_levels() {
        let d = Discretizer::default().apply(&[-10.0, 0.0, 10.0, 0.1, -0.1]);
        assert_eq!(d, vec![0, 1, 2, 1, 1]);
    }

    #[test]
    fn mrmr_k1_is_max_relevance_and_kd_is_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<i64> = (0..90).map(|i| i % 3).collect();
        let x = DMatrix::from_fn(90, 6, |r, c| labels[r] as f64 * c as f64 * 0.3 + rng.random_range(-1.0..1.0));
        let t = tensor(x.clone());
        let one = mrmr_select(&t, &labels, 1, Discretizer::default()).unwrap();
        let classes = label_indices(&labels);
        let rel: Vec<f64> = (0..6)
            .map(|c| mutual_information(&Discretizer::default().apply(x.column(c).as_slice()), &classes).unwrap())
            .collect();
        let best = (0..6).fold(0, |b, c| if rel[c] > rel[b] { c } else { b });
        assert_eq!(one.indices(), vec![best]);
        let all = mrmr_select(&t, &labels, 6, Discretizer::default()).unwrap();
        let mut idx = all.indices();
        idx.sort();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
        assert!(mrmr_select(&t, &labels, 7, Discretizer::default()).is_err());
    }

    #[test]
    fn correlation_rank_basics() {
        let labels: Vec<i64> = (0..30).map(|i| i % 3).collect();
        let mut x = random_matrix(30, 4, 9);
        for r in 0..30 {
            x[(r, 2)] = labels[r] as f64;
            x[(r, 3)] = 5.0;
        }
        let rank = correlation_rank(&tensor(x), &labels, 4).unwrap();
        assert_eq!(rank.entries[0].index, 2);
        assert_relative_eq!(rank.entries[0].score, 1.0, epsilon = 1e-12);
        let constant = rank.entries.iter().find(|e| e.index == 3).unwrap();
        assert_eq!(constant.score, 0.0);
        assert_eq!(label_code(&[0, 1, 2]), vec![-1.0, 0.0, 1.0]);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn mrmr_picks_distinct_columns(seed in 0u64..10_000, d in 2usize..10, k_frac in 0.0f64..1.0) {
            let x = random_matrix(40, d, seed);
            let labels: Vec<i64> = (0..40).map(|i| (i % 3) as i64).collect();
            let k = 1 + ((d - 1) as f64 * k_frac) as usize;
            let picks = mrmr_order(&x, &labels, k, Discretizer { spread: 0.5 }).unwrap();
            let mut idx: Vec<usize> = picks.iter().map(|p| p.0).collect();
            proptest::prop_assert_eq!(idx.len(), k);
            idx.sort();
            idx.dedup();
            proptest::prop_assert_eq!(idx.len(), k);
            proptest::prop_assert!(idx.iter().all(|&i| i < d));
        }
    }
}
