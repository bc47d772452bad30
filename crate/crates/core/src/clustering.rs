//! Seeded k-means and the large/small cluster partition.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_CLUSTERS: usize = 8;
pub const DEFAULT_MAX_ITERS: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_COVERAGE: f64 = 0.9;
pub const DEFAULT_SIZE_RATIO: f64 = 5.0;

/// How clusters are split into large and small.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionRule {
    /// Large clusters cover `coverage` of the rows, or end where one cluster
    /// is at least `ratio` times the next.
    Boundary { coverage: f64, ratio: f64 },
    /// The `k` biggest clusters are large.
    FixedK(usize),
}

impl Default for PartitionRule {
    fn default() -> Self {
        PartitionRule::Boundary {
            coverage: DEFAULT_COVERAGE,
            ratio: DEFAULT_SIZE_RATIO,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub centroids: Array2<f64>,
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    pub large_ids: BTreeSet<usize>,
    pub objective: f64,
    /// Objective after initialization and after every Lloyd iteration.
    pub objective_history: Vec<f64>,
    pub seed: u64,
}

pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the lowest id.
pub(crate) fn nearest(centroids: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

impl ClusterModel {
    pub fn m(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_large(&self, cluster: usize) -> bool {
        self.large_ids.contains(&cluster)
    }

    /// Assigns `features` to fixed `centroids` and partitions the result.
    /// Fails if a centroid ends up with no members.
    pub fn from_centroids(features: ArrayView2<'_, f64>, centroids: Array2<f64>, rule: PartitionRule) -> Result<Self> {
        if features.ncols() != centroids.ncols() {
            return Err(Error::DimensionMismatch {
                expected: centroids.ncols(),
                got: features.ncols(),
            });
        }
        let m = centroids.nrows();
        let (assignment, objective) = assign(features, centroids.view());
        let sizes = counts(&assignment, m);
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyClusters {
                m,
                reason: format!("centroid {k} has no members"),
            });
        }
        let mut model = ClusterModel {
            centroids,
            assignment,
            sizes,
            large_ids: BTreeSet::new(),
            objective,
            objective_history: vec![objective],
            seed: 0,
        };
        model.large_ids = partition_large_small(&model, rule);
        Ok(model)
    }

    pub fn repartition(&mut self, rule: PartitionRule) {
        self.large_ids = partition_large_small(self, rule);
    }
}

fn assign(x: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> (Vec<usize>, f64) {
    let mut objective = 0.0;
    let assignment = x
        .rows()
        .into_iter()
        .map(|row| {
            let (k, d) = nearest(centroids, row);
            objective += d;
            k
        })
        .collect();
    (assignment, objective)
}

fn counts(assignment: &[usize], m: usize) -> Vec<usize> {
    let mut sizes = vec![0; m];
    for &a in assignment {
        sizes[a] += 1;
    }
    sizes
}

fn kmeans_pp(x: ArrayView2<'_, f64>, m: usize, rng: &mut seed::Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((m, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, x.row(first))).collect();
    for k in 1..m {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave acc ≤ target at the end; take the last positive weight
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(k).assign(&x.row(pick));
        for (i, r) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, x.row(pick)));
        }
    }
    centroids
}

/// Reseeds empty clusters at the point farthest from its own centroid until
/// every cluster has a member.
fn fix_empty(
    x: ArrayView2<'_, f64>,
    centroids: &mut Array2<f64>,
    assignment: &mut Vec<usize>,
    objective: &mut f64,
) -> Result<()> {
    let m = centroids.nrows();
    for _ in 0..=x.nrows() {
        let sizes = counts(assignment, m);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return Ok(());
        };
        let mut far = None;
        let mut far_d = 0.0;
        for (i, row) in x.rows().into_iter().enumerate() {
            if sizes[assignment[i]] < 2 {
                continue;
            }
            let d = sq_dist(row, centroids.row(assignment[i]));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else {
            return Err(Error::EmptyClusters {
                m,
                reason: "fewer distinct points than clusters".into(),
            });
        };
        centroids.row_mut(empty).assign(&x.row(i));
        let (a, obj) = assign(x, centroids.view());
        *assignment = a;
        *objective = obj;
    }
    Err(Error::EmptyClusters {
        m,
        reason: "reseeding did not converge".into(),
    })
}

/// k-means++ seeding followed by Lloyd iterations. Stops when the relative
/// objective improvement drops below `tol` or after `max_iters` updates.
/// Clusters are split with the default [`PartitionRule`].
pub fn kmeans_fit(
    features: ArrayView2<'_, f64>,
    m: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ClusterModel> {
    kmeans_fit_with(features, m, seed, max_iters, tol, PartitionRule::default())
}

pub fn kmeans_fit_with(
    features: ArrayView2<'_, f64>,
    m: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
    rule: PartitionRule,
) -> Result<ClusterModel> {
    let n = features.nrows();
    if m < 1 {
        return Err(Error::param("m", "need at least one cluster"));
    }
    if m > n {
        return Err(Error::param("m", format!("{m} clusters but only {n} rows")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite feature value".into()));
    }
    let mut rng = seed::rng(seed::sub_seed(seed, "kmeans"));
    let mut centroids = kmeans_pp(features, m, &mut rng);
    let (mut assignment, mut objective) = assign(features, centroids.view());
    fix_empty(features, &mut centroids, &mut assignment, &mut objective)?;
    let mut history = vec![objective];

    for _ in 0..max_iters {
        // update step: every cluster is non-empty here
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        for (i, row) in features.rows().into_iter().enumerate() {
            let mut s = sums.row_mut(assignment[i]);
            s += &row;
        }
        let sizes = counts(&assignment, m);
        for (k, mut row) in sums.rows_mut().into_iter().enumerate() {
            row /= sizes[k] as f64;
        }
        centroids = sums;
        let prev = objective;
        let (a, obj) = assign(features, centroids.view());
        assignment = a;
        objective = obj;
        fix_empty(features, &mut centroids, &mut assignment, &mut objective)?;
        history.push(objective);
        if objective == 0.0 || (prev - objective) <= tol * prev {
            break;
        }
    }

    let sizes = counts(&assignment, m);
    let mut model = ClusterModel {
        centroids,
        assignment,
        sizes,
        large_ids: BTreeSet::new(),
        objective,
        objective_history: history,
        seed,
    };
    model.large_ids = partition_large_small(&model, rule);
    Ok(model)
}

/// Cluster ids sorted by size descending, ties by lower id.
fn by_size(sizes: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    order
}

/// Large cluster ids under `rule`. The largest cluster is always large.
///
/// For the boundary rule the sorted sizes are scanned and the boundary `b` is
/// the first position where the clusters before it cover `coverage·n` rows or
/// `size[b−1] / size[b] >= ratio`.
pub fn partition_large_small(model: &ClusterModel, rule: PartitionRule) -> BTreeSet<usize> {
    let order = by_size(&model.sizes);
    let m = order.len();
    let n: usize = model.sizes.iter().sum();
    let boundary = match rule {
        PartitionRule::FixedK(k) => k.clamp(1, m),
        PartitionRule::Boundary { coverage, ratio } => {
            let target = coverage * n as f64;
            let mut cum = 0usize;
            let mut found = None;
            for b in 1..=m {
                cum += model.sizes[order[b - 1]];
                // tolerance for coverage·n landing a hair above an integer
                let covered = cum as f64 >= target - 1e-9 * n as f64;
                let gap = b < m && model.sizes[order[b - 1]] as f64 >= ratio * model.sizes[order[b]] as f64;
                if covered || gap {
                    found = Some(b);
                    break;
                }
            }
            found.unwrap_or(m.saturating_sub(1)).max(1)
        }
    };
    order[..boundary].iter().copied().collect()
}

/// Per-cluster centroid of `features` under `assignment`.
pub fn cluster_means(features: ArrayView2<'_, f64>, assignment: &[usize], m: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((m, features.ncols()));
    let mut sizes = vec![0usize; m];
    for (row, &a) in features.rows().into_iter().zip(assignment) {
        let mut s = sums.row_mut(a);
        s += &row;
        sizes[a] += 1;
    }
    for (k, mut row) in sums.rows_mut().into_iter().enumerate() {
        if sizes[k] > 0 {
            row /= sizes[k] as f64;
        }
    }
    sums
}

/// Serializable summary of a fitted clustering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterDocument {
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub large_ids: Vec<usize>,
    pub objective: f64,
    pub seed: u64,
    pub m: usize,
}

impl From<&ClusterModel> for ClusterDocument {
    fn from(model: &ClusterModel) -> Self {
        ClusterDocument {
            centroids: model.centroids.rows().into_iter().map(|r| r.to_vec()).collect(),
            sizes: model.sizes.clone(),
            large_ids: model.large_ids.iter().copied().collect(),
            objective: model.objective,
            seed: model.seed,
            m: model.m(),
        }
    }
}

impl ClusterDocument {
    pub fn validate(&self) -> Result<()> {
        let d = self.centroids.first().map_or(0, Vec::len);
        if self.m == 0
            || self.centroids.len() != self.m
            || self.sizes.len() != self.m
            || self.centroids.iter().any(|c| c.len() != d)
        {
            return Err(Error::InvalidDataset("cluster document has inconsistent shapes".into()));
        }
        if self.large_ids.is_empty() || self.large_ids.iter().any(|&k| k >= self.m) {
            return Err(Error::InvalidDataset("cluster document has invalid large ids".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidDataset("cluster document has an empty cluster".into()));
        }
        Ok(())
    }
}

pub fn centroid_of(model: &ClusterModel, k: usize) -> Array1<f64> {
    model.centroids.row(k).to_owned()
}
