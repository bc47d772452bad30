//! Cluster-based outlier scores.
//!
//! The base score of a point is its distance to the nearest centroid. The
//! corrected scores use the large/small split of a [`ClusterModel`]: a point
//! whose nearest cluster `C` is large is measured against `C`'s centroid, a
//! point in a small cluster against the nearest large centroid. The distance
//! is then weighted per variant:
//!
//! * CBLOF: by `|C|`, the cluster mass that reweights the equal-cluster
//!   mixture towards the observed one;
//! * ECBLOF: not at all;
//! * CBLOF-mod: by a kernel-density estimate of the cluster mass,
//!   `γ̂_C ∝ |C|·mean KDE density over C`, normalized so that the weights sum
//!   to `n` (under uniform density it reduces to CBLOF).

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_fit_with, nearest, sq_dist, ClusterModel, PartitionRule};
use crate::error::{Error, Result};

pub const BANDWIDTH_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cblof,
    Ecblof,
    CblofMod,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Cblof => "cblof",
            Variant::Ecblof => "ecblof",
            Variant::CblofMod => "cblof_mod",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    pub index: usize,
    pub cluster: usize,
    /// distance to the nearest centroid
    pub base: f64,
    /// variant-weighted distance to the own (large) or nearest large centroid
    pub corrected: f64,
}

fn check_dim(model: &ClusterModel, x: ArrayView1<'_, f64>) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Nearest centroid id and its Euclidean distance.
pub fn base_score(model: &ClusterModel, x: ArrayView1<'_, f64>) -> Result<(usize, f64)> {
    check_dim(model, x)?;
    let (k, d2) = nearest(model.centroids.view(), x);
    Ok((k, d2.sqrt()))
}

/// Nearest cluster, base distance, and the unweighted corrected distance.
fn distance_term(model: &ClusterModel, x: ArrayView1<'_, f64>) -> Result<(usize, f64, f64)> {
    let (k, base) = base_score(model, x)?;
    if model.is_large(k) {
        return Ok((k, base, base));
    }
    let to_large = model
        .large_ids
        .iter()
        .map(|&l| sq_dist(model.centroids.row(l), x))
        .fold(f64::INFINITY, f64::min);
    if !to_large.is_finite() {
        return Err(Error::InvalidDataset("cluster model has no large clusters".into()));
    }
    Ok((k, base, to_large.sqrt()))
}

pub fn cblof_score(model: &ClusterModel, x: ArrayView1<'_, f64>) -> Result<f64> {
    let (k, _, term) = distance_term(model, x)?;
    Ok(model.sizes[k] as f64 * term)
}

pub fn ecblof_score(model: &ClusterModel, x: ArrayView1<'_, f64>) -> Result<f64> {
    distance_term(model, x).map(|(_, _, term)| term)
}

/// Gaussian-kernel density estimate with a single isotropic bandwidth.
#[derive(Clone, Debug, PartialEq)]
pub struct KdeModel {
    pub support: Array2<f64>,
    pub bandwidth: f64,
}

/// Normal-reference (Silverman) bandwidth per dimension,
/// `σ_j·(4 / ((d + 2)·n))^(1/(d + 4))` with the sample standard deviation,
/// averaged over dimensions and floored at [`BANDWIDTH_FLOOR`].
pub fn silverman_bandwidth(points: ArrayView2<'_, f64>) -> f64 {
    let (n, d) = points.dim();
    let factor = (4.0 / ((d as f64 + 2.0) * n as f64)).powf(1.0 / (d as f64 + 4.0));
    let mean_h = points
        .columns()
        .into_iter()
        .map(|c| {
            let mean = c.sum() / n as f64;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            var.sqrt() * factor
        })
        .sum::<f64>()
        / d as f64;
    if mean_h.is_finite() && mean_h >= BANDWIDTH_FLOOR {
        mean_h
    } else {
        log::warn!("kde bandwidth {mean_h} is degenerate, using {BANDWIDTH_FLOOR}");
        BANDWIDTH_FLOOR
    }
}

pub fn kde_fit(points: ArrayView2<'_, f64>) -> Result<KdeModel> {
    if points.nrows() < 2 {
        return Err(Error::InvalidDataset(format!(
            "kde needs at least 2 points, got {}",
            points.nrows()
        )));
    }
    if points.ncols() == 0 {
        return Err(Error::InvalidDataset("kde needs at least one dimension".into()));
    }
    Ok(KdeModel {
        support: points.to_owned(),
        bandwidth: silverman_bandwidth(points),
    })
}

impl KdeModel {
    pub fn with_bandwidth(support: Array2<f64>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || support.nrows() == 0 {
            return Err(Error::param(
                "bandwidth",
                "need a positive bandwidth and a non-empty support",
            ));
        }
        Ok(KdeModel { support, bandwidth })
    }

    pub fn log_density(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.support.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.support.ncols(),
                got: x.len(),
            });
        }
        let h2 = self.bandwidth * self.bandwidth;
        let d = self.support.ncols() as f64;
        let exps: Vec<f64> = self
            .support
            .rows()
            .into_iter()
            .map(|r| -sq_dist(r, x) / (2.0 * h2))
            .collect();
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
        let log_norm = -0.5 * d * (2.0 * std::f64::consts::PI * h2).ln() - (self.support.nrows() as f64).ln();
        Ok(lse + log_norm)
    }

    /// `(1/n)·Σ K_h(x − x_j)`, never below the smallest positive `f64`.
    pub fn density(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        Ok(self.log_density(x)?.exp().max(f64::MIN_POSITIVE))
    }
}

/// KDE-smoothed cluster masses replacing `|C_i|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeCorrection {
    pub gamma: Vec<f64>,
    pub mean_density: Vec<f64>,
}

impl KdeCorrection {
    /// Evaluates the KDE at every support row and averages per cluster. The
    /// support rows must be the points `model` was fitted on, in order.
    pub fn fit(model: &ClusterModel, kde: &KdeModel) -> Result<Self> {
        if kde.support.nrows() != model.n() {
            return Err(Error::LengthMismatch {
                left: kde.support.nrows(),
                right: model.n(),
            });
        }
        if kde.support.ncols() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: kde.support.ncols(),
            });
        }
        let mut sums = vec![0.0; model.m()];
        for (row, &k) in kde.support.rows().into_iter().zip(&model.assignment) {
            sums[k] += kde.density(row)?;
        }
        let means: Vec<f64> = sums.iter().zip(&model.sizes).map(|(s, &c)| s / c as f64).collect();
        Ok(KdeCorrection::from_mean_densities(&model.sizes, means))
    }

    /// `γ̂_i = |C_i|·ρ_i · n / Σ_j |C_j|·ρ_j` where `ρ_i` is the mean density
    /// over cluster `i`.
    pub fn from_mean_densities(sizes: &[usize], mean_density: Vec<f64>) -> Self {
        let n: usize = sizes.iter().sum();
        let raw: Vec<f64> = sizes
            .iter()
            .zip(&mean_density)
            .map(|(&c, &rho)| c as f64 * rho)
            .collect();
        let total: f64 = raw.iter().sum();
        let gamma = raw.iter().map(|r| r * n as f64 / total).collect();
        KdeCorrection { gamma, mean_density }
    }
}

pub fn cblof_mod_score(model: &ClusterModel, correction: &KdeCorrection, x: ArrayView1<'_, f64>) -> Result<f64> {
    let (k, _, term) = distance_term(model, x)?;
    Ok(correction.gamma[k] * term)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnsupervisedConfig {
    pub m: usize,
    pub coverage: f64,
    pub ratio: f64,
    /// Pins the number of large clusters, overriding coverage and ratio.
    pub k: Option<usize>,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for UnsupervisedConfig {
    fn default() -> Self {
        UnsupervisedConfig {
            m: crate::clustering::DEFAULT_CLUSTERS,
            coverage: crate::clustering::DEFAULT_COVERAGE,
            ratio: crate::clustering::DEFAULT_SIZE_RATIO,
            k: None,
            max_iters: crate::clustering::DEFAULT_MAX_ITERS,
            tol: crate::clustering::DEFAULT_TOL,
        }
    }
}

impl UnsupervisedConfig {
    pub fn rule(&self) -> PartitionRule {
        match self.k {
            Some(k) => PartitionRule::FixedK(k),
            None => PartitionRule::Boundary {
                coverage: self.coverage,
                ratio: self.ratio,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::param("m", "need at least one cluster"));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::param("coverage", "must lie in (0, 1]"));
        }
        if !(self.ratio >= 1.0) {
            return Err(Error::param("ratio", "must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param("tol", "must be non-negative"));
        }
        if self.k == Some(0) {
            return Err(Error::param("k", "must be at least 1"));
        }
        Ok(())
    }
}

/// A fitted clustering together with the weighting of one variant.
#[derive(Clone, Debug, PartialEq)]
pub struct Detector {
    pub model: ClusterModel,
    pub variant: Variant,
    pub correction: Option<KdeCorrection>,
}

impl Detector {
    pub fn fit(
        features: ArrayView2<'_, f64>,
        config: &UnsupervisedConfig,
        variant: Variant,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let model = kmeans_fit_with(features, config.m, seed, config.max_iters, config.tol, config.rule())?;
        Detector::from_model(model, features, variant)
    }

    /// `features` must be the rows `model` was fitted on when the variant
    /// needs a density estimate.
    pub fn from_model(model: ClusterModel, features: ArrayView2<'_, f64>, variant: Variant) -> Result<Self> {
        let correction = match variant {
            Variant::CblofMod => Some(KdeCorrection::fit(&model, &kde_fit(features)?)?),
            _ => None,
        };
        Ok(Detector {
            model,
            variant,
            correction,
        })
    }

    pub fn cluster_weight(&self, k: usize) -> f64 {
        match (self.variant, &self.correction) {
            (Variant::Cblof, _) => self.model.sizes[k] as f64,
            (Variant::Ecblof, _) => 1.0,
            (Variant::CblofMod, Some(c)) => c.gamma[k],
            (Variant::CblofMod, None) => self.model.sizes[k] as f64,
        }
    }

    pub fn score(&self, index: usize, x: ArrayView1<'_, f64>) -> Result<ScoredPoint> {
        let (cluster, base, term) = distance_term(&self.model, x)?;
        Ok(ScoredPoint {
            index,
            cluster,
            base,
            corrected: self.cluster_weight(cluster) * term,
        })
    }

    pub fn score_points(&self, features: ArrayView2<'_, f64>) -> Result<Vec<ScoredPoint>> {
        if features.nrows() > 0 && features.ncols() != self.model.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.dim(),
                got: features.ncols(),
            });
        }
        features
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| self.score(i, r))
            .collect()
    }
}

/// Corrected scores for every row, in order.
pub fn score_dataset(detector: &Detector, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    Ok(detector
        .score_points(features)?
        .into_iter()
        .map(|p| p.corrected)
        .collect())
}

/// Writes `row_index,cluster_id,base_score,corrected_score,variant`.
pub fn write_scores_csv<W: std::io::Write>(points: &[ScoredPoint], variant: Variant, out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        row_index: usize,
        cluster_id: usize,
        base_score: f64,
        corrected_score: f64,
        variant: &'static str,
    }
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(Row {
            row_index: p.index,
            cluster_id: p.cluster,
            base_score: p.base,
            corrected_score: p.corrected,
            variant: variant.name(),
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::kmeans_fit;
    use ndarray::{array, Array1};
    use rand::Rng;

    fn col(v: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
    }

    /// C1 = {0..4} around 2 (large), C2 = {10, 11} around 10.5 (small).
    fn two_cluster_model() -> (Array2<f64>, ClusterModel) {
        let x = col(&[0.0, 1.0, 2.0, 3.0, 4.0, 10.0, 11.0]);
        let model = ClusterModel::from_centroids(x.view(), array![[2.0], [10.5]], PartitionRule::FixedK(1)).unwrap();
        assert_eq!(model.sizes, vec![5, 2]);
        (x, model)
    }

    #[test]
    fn base_score_examples() {
        let x = col(&[1.0, 3.0, 10.0, 11.0]);
        let m = ClusterModel::from_centroids(x.view(), array![[2.0], [10.5]], PartitionRule::FixedK(1)).unwrap();
        assert_eq!(base_score(&m, array![10.0].view()).unwrap(), (1, 0.5));
        assert_eq!(base_score(&m, array![2.0].view()).unwrap().1, 0.0);
        let y = col(&[-1.0, 1.0, 3.0, 5.0]);
        let m = ClusterModel::from_centroids(y.view(), array![[0.0], [4.0]], PartitionRule::FixedK(1)).unwrap();
        assert_eq!(base_score(&m, array![2.0].view()).unwrap(), (0, 2.0));
        assert!(base_score(&m, array![2.0, 1.0].view()).is_err());
    }

    #[test]
    fn cblof_and_ecblof_examples() {
        let (_, m) = two_cluster_model();
        assert_eq!(cblof_score(&m, array![10.0].view()).unwrap(), 16.0);
        assert_eq!(cblof_score(&m, array![0.0].view()).unwrap(), 10.0);
        assert_eq!(cblof_score(&m, array![2.0].view()).unwrap(), 0.0);
        assert_eq!(ecblof_score(&m, array![10.0].view()).unwrap(), 8.0);
        assert_eq!(ecblof_score(&m, array![0.0].view()).unwrap(), 2.0);
    }

    #[test]
    fn cblof_mod_uniform_density_is_cblof() {
        let (_, m) = two_cluster_model();
        let corr = KdeCorrection::from_mean_densities(&m.sizes, vec![0.37, 0.37]);
        for v in [-3.0, 0.0, 4.5, 10.0, 13.0] {
            let x = array![v];
            let a = cblof_mod_score(&m, &corr, x.view()).unwrap();
            let b = cblof_score(&m, x.view()).unwrap();
            assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn cblof_mod_single_cluster() {
        let x = col(&[0.0, 1.0, 2.5, 3.0]);
        let model = kmeans_fit(x.view(), 1, 0, 100, 1e-6).unwrap();
        let det = Detector::from_model(model, x.view(), Variant::CblofMod).unwrap();
        let c = det.correction.as_ref().unwrap();
        assert!((c.gamma[0] - 4.0).abs() < 1e-12);
        let s = det.score(0, array![5.0].view()).unwrap();
        assert!((s.corrected - 4.0 * (5.0 - 1.625)).abs() < 1e-12);
    }

    #[test]
    fn cblof_mod_two_cluster_oracle() {
        let (x, m) = two_cluster_model();
        let kde = kde_fit(x.view()).unwrap();
        let corr = KdeCorrection::fit(&m, &kde).unwrap();

        // independent straight-line evaluation
        let pts: Vec<f64> = x.iter().copied().collect();
        let n = pts.len() as f64;
        let mean = pts.iter().sum::<f64>() / n;
        let sd = (pts.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let h = sd * (4.0 / (3.0 * n)).powf(0.2);
        assert!((kde.bandwidth - h).abs() < 1e-12);
        let dens = |q: f64| {
            pts.iter()
                .map(|p| (-(q - p).powi(2) / (2.0 * h * h)).exp() / (h * (2.0 * std::f64::consts::PI).sqrt()))
                .sum::<f64>()
                / n
        };
        let rho1 = pts[..5].iter().map(|&p| dens(p)).sum::<f64>() / 5.0;
        let rho2 = pts[5..].iter().map(|&p| dens(p)).sum::<f64>() / 2.0;
        let (r1, r2) = (5.0 * rho1, 2.0 * rho2);
        let g1 = r1 * 7.0 / (r1 + r2);
        let g2 = r2 * 7.0 / (r1 + r2);
        assert!((corr.gamma[0] - g1).abs() < 1e-9);
        assert!((corr.gamma[1] - g2).abs() < 1e-9);
        let got = cblof_mod_score(&m, &corr, array![10.0].view()).unwrap();
        assert!((got - g2 * 8.0).abs() < 1e-9);
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = crate::seed::rng(4);
        let x = Array2::from_shape_simple_fn((60, 1), || rng.random_range(-1.0..3.0));
        let kde = kde_fit(x.view()).unwrap();
        let (lo, hi, steps) = (-15.0, 17.0, 6400);
        let dx = (hi - lo) / steps as f64;
        let f = |i: usize| kde.density(array![lo + i as f64 * dx].view()).unwrap();
        let integral = dx * ((f(0) + f(steps)) / 2.0 + (1..steps).map(f).sum::<f64>());
        assert!((integral - 1.0).abs() < 1e-2, "{integral}");
    }

    #[test]
    fn kde_shape_and_edge_cases() {
        let mut rng = crate::seed::rng(5);
        let x = Array2::from_shape_simple_fn((50, 2), || rng.random_range(-0.1..0.1));
        let kde = kde_fit(x.view()).unwrap();
        let center = x.mean_axis(ndarray::Axis(0)).unwrap();
        assert!(kde.density(center.view()).unwrap() > kde.density(array![5.0, 5.0].view()).unwrap());
        assert!(kde.density(array![1e6, 1e6].view()).unwrap() > 0.0);
        assert!(kde_fit(array![[1.0]].view()).is_err());
        let flat = kde_fit(array![[1.0], [1.0], [1.0]].view()).unwrap();
        assert_eq!(flat.bandwidth, BANDWIDTH_FLOOR);
    }

    #[test]
    fn kde_duplicated_support_same_density() {
        let x = array![[0.0], [0.5], [2.0], [2.2]];
        let kde = kde_fit(x.view()).unwrap();
        let doubled = ndarray::concatenate(ndarray::Axis(0), &[x.view(), x.view()]).unwrap();
        let kde2 = KdeModel::with_bandwidth(doubled, kde.bandwidth).unwrap();
        for q in [-1.0, 0.3, 1.1, 2.1, 4.0] {
            let (a, b) = (
                kde.density(array![q].view()).unwrap(),
                kde2.density(array![q].view()).unwrap(),
            );
            assert!((a - b).abs() <= 1e-14 * a.max(1.0));
        }
    }

    #[test]
    fn score_dataset_batches() {
        let mut rng = crate::seed::rng(6);
        let x = Array2::from_shape_simple_fn((80, 2), || rng.random_range(-5.0..5.0));
        let det = Detector::fit(
            x.view(),
            &UnsupervisedConfig {
                m: 4,
                ..Default::default()
            },
            Variant::CblofMod,
            3,
        )
        .unwrap();
        assert!(score_dataset(&det, Array2::<f64>::zeros((0, 2)).view())
            .unwrap()
            .is_empty());
        let q = Array2::from_shape_simple_fn((50, 2), || rng.random_range(-8.0..8.0));
        let batch = score_dataset(&det, q.view()).unwrap();
        let c = det.correction.as_ref().unwrap();
        for (i, row) in q.rows().into_iter().enumerate() {
            assert_eq!(batch[i], cblof_mod_score(&det.model, c, row).unwrap());
        }
        let one = score_dataset(&det, q.slice(ndarray::s![..1, ..])).unwrap();
        assert_eq!(one, vec![batch[0]]);
        assert!(score_dataset(&det, Array2::<f64>::zeros((1, 3)).view()).is_err());
    }

    #[test]
    fn duplicating_points_doubles_cblof_only() {
        let mut rng = crate::seed::rng(7);
        let x = Array2::from_shape_simple_fn((40, 2), || rng.random_range(-5.0..5.0));
        let model = kmeans_fit(x.view(), 3, 1, 300, 1e-6).unwrap();
        let doubled = ndarray::concatenate(ndarray::Axis(0), &[x.view(), x.view()]).unwrap();
        let model2 =
            ClusterModel::from_centroids(doubled.view(), model.centroids.clone(), PartitionRule::default()).unwrap();
        assert_eq!(model2.large_ids, model.large_ids);
        for row in x.rows() {
            assert_eq!(
                cblof_score(&model2, row).unwrap(),
                2.0 * cblof_score(&model, row).unwrap()
            );
            assert_eq!(ecblof_score(&model2, row).unwrap(), ecblof_score(&model, row).unwrap());
        }
    }

    fn refit_scores(x: &Array2<f64>, q: &Array2<f64>, variant: Variant) -> Vec<f64> {
        let det = Detector::fit(
            x.view(),
            &UnsupervisedConfig {
                m: 3,
                ..Default::default()
            },
            variant,
            11,
        )
        .unwrap();
        score_dataset(&det, q.view()).unwrap()
    }

    #[test]
    fn translation_and_scale() {
        let mut rng = crate::seed::rng(8);
        let x = Array2::from_shape_simple_fn((60, 2), || rng.random_range(-4.0..4.0));
        let q = Array2::from_shape_simple_fn((20, 2), || rng.random_range(-6.0..6.0));
        let shift = Array1::from(vec![3.0, -5.0]);
        for variant in [Variant::Cblof, Variant::Ecblof, Variant::CblofMod] {
            let base = refit_scores(&x, &q, variant);
            let moved = refit_scores(&(&x + &shift), &(&q + &shift), variant);
            let scaled = refit_scores(&(&x * 2.5), &(&q * 2.5), variant);
            for i in 0..base.len() {
                assert!(
                    (moved[i] - base[i]).abs() <= 1e-9 * base[i].max(1.0),
                    "{variant}: {} vs {}",
                    moved[i],
                    base[i]
                );
                assert!(
                    (scaled[i] - 2.5 * base[i]).abs() <= 1e-9 * base[i].max(1.0),
                    "{variant}"
                );
            }
        }
    }

    #[test]
    fn scores_csv_header() {
        let (x, m) = two_cluster_model();
        let det = Detector {
            model: m,
            variant: Variant::Ecblof,
            correction: None,
        };
        let pts = det.score_points(x.view()).unwrap();
        let mut buf = Vec::new();
        write_scores_csv(&pts, Variant::Ecblof, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "row_index,cluster_id,base_score,corrected_score,variant"
        );
        assert_eq!(lines.next().unwrap(), "0,0,2.0,2.0,ecblof");
    }
}
